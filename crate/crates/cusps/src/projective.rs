//! Homogeneous coordinates, affine charts and the triangular matrix
//! exponential/logarithm used by the translation groups.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CuspError, Result};
use crate::settings::DEFAULT_TOL;

/// A point of real projective space, stored in canonical form: last
/// coordinate 1 when it is nonzero, otherwise unit norm with the first
/// nonzero entry positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjPoint {
    coords: Vec<f64>,
}

impl ProjPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        canonicalize(&coords).map(|coords| ProjPoint { coords })
    }

    /// Homogeneous lift `[p : 1]` of an affine point.
    pub fn from_affine(p: &[f64]) -> Self {
        let mut coords = p.to_vec();
        coords.push(1.0);
        ProjPoint { coords }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Dimension of the ambient projective space.
    pub fn dim(&self) -> usize {
        self.coords.len() - 1
    }

    pub fn is_at_infinity(&self) -> bool {
        *self.coords.last().unwrap() != 1.0
    }

    /// Distance between canonical representatives.
    pub fn distance(&self, other: &ProjPoint) -> f64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

fn canonicalize(v: &[f64]) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if v.is_empty() || !(norm > 0.0) || !norm.is_finite() {
        return Err(CuspError::ZeroImage);
    }
    let last = *v.last().unwrap();
    if last.abs() > DEFAULT_TOL.invertibility * norm {
        let mut out: Vec<f64> = v.iter().map(|x| x / last).collect();
        *out.last_mut().unwrap() = 1.0;
        return Ok(out);
    }
    let mut out: Vec<f64> = v.iter().map(|x| x / norm).collect();
    *out.last_mut().unwrap() = 0.0;
    let first = out
        .iter()
        .copied()
        .find(|x| x.abs() > DEFAULT_TOL.invertibility)
        .unwrap_or(1.0);
    if first < 0.0 {
        out.iter_mut().for_each(|x| *x = -*x);
    }
    Ok(out)
}

/// An invertible projective transformation.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjMap {
    matrix: DMatrix<f64>,
}

impl ProjMap {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(CuspError::DimensionMismatch {
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        if is_singular(&matrix) {
            return Err(CuspError::Singular);
        }
        Ok(ProjMap { matrix })
    }

    pub fn identity(n: usize) -> Self {
        ProjMap {
            matrix: DMatrix::identity(n + 1, n + 1),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn compose(&self, other: &ProjMap) -> ProjMap {
        ProjMap {
            matrix: &self.matrix * &other.matrix,
        }
    }

    pub fn inverse(&self) -> ProjMap {
        ProjMap {
            matrix: self.matrix.clone().try_inverse().expect("validated invertible"),
        }
    }
}

/// `|det|` small relative to the scale of the entries.
pub fn is_singular(m: &DMatrix<f64>) -> bool {
    let n = m.nrows() as i32;
    let scale = m.norm() / (n as f64).sqrt();
    if scale == 0.0 {
        return true;
    }
    m.determinant().abs() <= DEFAULT_TOL.invertibility * scale.powi(n)
}

/// A point in the affine patch where the last homogeneous coordinate is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinePoint {
    pub coords: Vec<f64>,
}

/// Canonical representative of `[m * p]`.
pub fn apply_map(m: &ProjMap, p: &ProjPoint) -> Result<ProjPoint> {
    if m.matrix.nrows() != p.coords.len() {
        return Err(CuspError::DimensionMismatch {
            expected: m.matrix.nrows(),
            got: p.coords.len(),
        });
    }
    let img = &m.matrix * DVector::from_column_slice(&p.coords);
    let scale = m.matrix.norm() * p.coords.iter().map(|x| x * x).sum::<f64>().sqrt();
    if img.norm() <= 1e-14 * scale {
        return Err(CuspError::ZeroImage);
    }
    ProjPoint::new(img.as_slice().to_vec())
}

pub fn to_affine(p: &ProjPoint) -> Result<AffinePoint> {
    if p.is_at_infinity() {
        return Err(CuspError::AtInfinity);
    }
    let n = p.coords.len() - 1;
    Ok(AffinePoint {
        coords: p.coords[..n].to_vec(),
    })
}

/// Apply an affine-preserving matrix (last row `e_{n+1}`) to an affine
/// point without renormalizing through projective space.
pub fn apply_affine(m: &DMatrix<f64>, p: &[f64]) -> Vec<f64> {
    let n = p.len();
    let w: f64 = (0..n).map(|j| m[(n, j)] * p[j]).sum::<f64>() + m[(n, n)];
    (0..n)
        .map(|i| ((0..n).map(|j| m[(i, j)] * p[j]).sum::<f64>() + m[(i, n)]) / w)
        .collect()
}

fn is_upper_triangular(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(1.0);
    (0..m.nrows()).all(|i| (0..i).all(|j| m[(i, j)].abs() <= 1e-14 * scale))
}

fn is_strictly_upper(m: &DMatrix<f64>) -> bool {
    is_upper_triangular(m) && (0..m.nrows()).all(|i| m[(i, i)] == 0.0)
}

/// Matrix exponential. Nilpotent (strictly upper-triangular) input uses the
/// terminating series; everything else goes through Padé scaling and
/// squaring.
pub fn tri_exp(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    if is_strictly_upper(a) {
        let mut out = DMatrix::identity(n, n);
        let mut term = DMatrix::identity(n, n);
        for k in 1..n {
            term = &term * a / k as f64;
            out += &term;
        }
        return out;
    }
    a.clone().exp()
}

/// Principal logarithm of an upper-triangular matrix with positive diagonal,
/// by inverse scaling and squaring with exact triangular square roots.
pub fn tri_log(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if !m.is_square() || !is_upper_triangular(m) {
        return Err(CuspError::InvalidInput(
            "tri_log expects an upper-triangular matrix".into(),
        ));
    }
    if (0..n).any(|i| !(m[(i, i)] > 0.0)) {
        return Err(CuspError::NonPositiveDiagonal);
    }
    let mut t = m.upper_triangle();
    let ident = DMatrix::<f64>::identity(n, n);
    if (0..n).all(|i| t[(i, i)] == 1.0) {
        return Ok(log_series(&(&t - &ident)));
    }
    let mut k = 0;
    while (&t - &ident).norm() > 0.05 && k < 64 {
        t = tri_sqrt(&t);
        k += 1;
    }
    Ok(log_series(&(&t - &ident)) * 2f64.powi(k))
}

fn tri_sqrt(t: &DMatrix<f64>) -> DMatrix<f64> {
    let n = t.nrows();
    let mut r = DMatrix::zeros(n, n);
    for i in 0..n {
        r[(i, i)] = t[(i, i)].sqrt();
    }
    for d in 1..n {
        for i in 0..n - d {
            let j = i + d;
            let s: f64 = (i + 1..j).map(|k| r[(i, k)] * r[(k, j)]).sum();
            r[(i, j)] = (t[(i, j)] - s) / (r[(i, i)] + r[(j, j)]);
        }
    }
    r
}

/// `log(I + e)` by its power series; terminates when `e` is nilpotent.
fn log_series(e: &DMatrix<f64>) -> DMatrix<f64> {
    let n = e.nrows();
    let mut out = DMatrix::zeros(n, n);
    let mut pow = e.clone();
    for k in 1..200 {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        out += &pow * (sign / k as f64);
        pow = &pow * e;
        if pow.amax() < 1e-18 * out.amax().max(1e-300) || pow.amax() == 0.0 {
            break;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_forms() {
        let p = ProjPoint::new(vec![2.0, 4.0, 2.0]).unwrap();
        assert_eq!(p.coords(), &[1.0, 2.0, 1.0]);
        let q = ProjPoint::new(vec![-3.0, 0.0, 0.0]).unwrap();
        assert_eq!(q.coords(), &[1.0, 0.0, 0.0]);
        assert!(ProjPoint::new(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn affine_examples() {
        let p = ProjPoint::new(vec![2.0, 4.0, 2.0]).unwrap();
        assert_eq!(to_affine(&p).unwrap().coords, vec![1.0, 2.0]);
        let q = ProjPoint::new(vec![3.0, -6.0, 3.0]).unwrap();
        assert_eq!(to_affine(&q).unwrap().coords, vec![1.0, -2.0]);
        let inf = ProjPoint::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(to_affine(&inf), Err(CuspError::AtInfinity));
    }

    #[test]
    fn scalar_maps_act_trivially() {
        let m = ProjMap::new(DMatrix::identity(3, 3) * 2.0).unwrap();
        let p = ProjPoint::new(vec![1.0, 0.0, 1.0]).unwrap();
        assert_eq!(apply_map(&m, &p).unwrap(), p);
    }

    #[test]
    fn unipotent_flow_moves_origin() {
        // Flow matrix for n = 2, t = 0 at time 1.
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let p = ProjPoint::new(vec![0.0, 0.0, 1.0]).unwrap();
        let q = apply_map(&ProjMap::new(m).unwrap(), &p).unwrap();
        assert_eq!(q.coords(), &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn singular_map_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert_eq!(ProjMap::new(m), Err(CuspError::Singular));
    }

    #[test]
    fn nilpotent_exponential_is_exact() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let e = tri_exp(&a);
        let want = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.5, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]);
        assert_eq!(e, want);
        assert_eq!(tri_log(&want).unwrap(), a);
    }

    #[test]
    fn log_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![std::f64::consts::E, 1.0]));
        let l = tri_log(&m).unwrap();
        assert!((l[(0, 0)] - 1.0).abs() < 1e-14);
        assert!(l[(1, 1)].abs() < 1e-15);
        assert_eq!(tri_log(&DMatrix::identity(3, 3)).unwrap(), DMatrix::zeros(3, 3));
    }

    #[test]
    fn negative_diagonal_rejected() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0]));
        assert_eq!(tri_log(&m), Err(CuspError::NonPositiveDiagonal));
    }
}
