//! The ψ-domain: horofunction, boundary graph, membership, chords and
//! horosphere sampling.
//!
//! Affine coordinates on `V_ψ` are split as `(x, z, y)` when `t < n`
//! (`x` = first `t` coordinates, `z` = coordinate `t`, `y` = the rest) and as
//! `x` = all `n` coordinates when `t = n`. Indices are zero-based.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CuspError, Result};
use crate::projective::ProjPoint;
use crate::settings::DEFAULT_TOL;

/// Non-increasing, non-negative coefficients `ψ_1 ≥ … ≥ ψ_n ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeylVector {
    coeffs: Vec<f64>,
}

impl WeylVector {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() < 2 {
            return Err(CuspError::DimensionMismatch {
                expected: 2,
                got: coeffs.len(),
            });
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(CuspError::InvalidInput("non-finite psi coefficient".into()));
        }
        if coeffs.iter().any(|&c| c < 0.0) {
            return Err(CuspError::NegativeWeyl);
        }
        if coeffs.windows(2).any(|w| w[0] < w[1]) {
            return Err(CuspError::UnsortedWeyl);
        }
        Ok(WeylVector { coeffs })
    }

    pub fn zero(n: usize) -> Self {
        WeylVector {
            coeffs: vec![0.0; n],
        }
    }

    pub fn n(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs[0] <= DEFAULT_TOL.psi_zero
    }

    /// `ψ(X) = Σ ψ_i X_i` over the leading coordinates of `x`.
    pub fn apply(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.coeffs).map(|(a, b)| a * b).sum()
    }
}

/// Type, rank and unipotent rank together with the coordinate split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainShape {
    pub n: usize,
    pub t: usize,
    pub r: usize,
    pub u: usize,
}

impl DomainShape {
    pub fn hyperbolic(&self) -> bool {
        self.t == self.n
    }

    /// Indices carrying the logarithmic terms.
    pub fn x_range(&self) -> std::ops::Range<usize> {
        0..self.t
    }

    /// The coordinate solved for by the boundary graph: `z` when `t < n`,
    /// the last coordinate when `t = n`.
    pub fn graph_index(&self) -> usize {
        if self.hyperbolic() {
            self.n - 1
        } else {
            self.t
        }
    }

    pub fn y_range(&self) -> std::ops::Range<usize> {
        if self.hyperbolic() {
            self.n..self.n
        } else {
            self.t + 1..self.n
        }
    }

    /// Length of the translation-parameter vector `X` (ambient form).
    pub fn x_len(&self) -> usize {
        self.t
    }
}

pub fn make_domain(psi: &WeylVector) -> Result<DomainShape> {
    // Re-validate in case the caller built the vector through serde.
    let psi = WeylVector::new(psi.coeffs.clone())?;
    let n = psi.n();
    let t = psi
        .coeffs
        .iter()
        .filter(|&&c| c > DEFAULT_TOL.psi_zero)
        .count();
    let r = t.min(n - 1);
    let u = (n as isize - t as isize - 1).max(0) as usize;
    Ok(DomainShape { n, t, r, u })
}

/// Where a point sits relative to `Ω(ψ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Membership {
    Interior,
    Boundary,
    Exterior,
    OutsideChart,
}

/// Value, gradient and Hessian of the horofunction.
#[derive(Debug, Clone, PartialEq)]
pub struct HoroEval {
    pub value: f64,
    pub gradient: Option<DVector<f64>>,
    pub hessian: Option<DMatrix<f64>>,
}

/// Vertices of the ideal boundary simplex plus the radial flow center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdealBoundaryDescriptor {
    pub vertices: Vec<ProjPoint>,
    pub dimension: usize,
    /// The flow center; lies off the simplex only when `t = n`.
    pub flow_center: ProjPoint,
}

/// A validated ψ together with its shape. Most operations hang off this.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub psi: WeylVector,
    pub shape: DomainShape,
    psi_sum: f64,
}

impl Domain {
    pub fn new(psi: WeylVector) -> Result<Self> {
        let shape = make_domain(&psi)?;
        let psi_sum = psi.coeffs.iter().sum();
        Ok(Domain {
            psi,
            shape,
            psi_sum,
        })
    }

    pub fn from_coeffs(coeffs: &[f64]) -> Result<Self> {
        Domain::new(WeylVector::new(coeffs.to_vec())?)
    }

    pub fn n(&self) -> usize {
        self.shape.n
    }

    pub fn psi_sum(&self) -> f64 {
        self.psi_sum
    }

    fn check_len(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.n() {
            return Err(CuspError::DimensionMismatch {
                expected: self.n(),
                got: p.len(),
            });
        }
        Ok(())
    }

    pub fn in_chart(&self, p: &[f64]) -> bool {
        p[self.shape.x_range()].iter().all(|&x| x > 0.0)
    }

    /// Horofunction value, `+∞` outside `V_ψ`.
    pub fn h(&self, p: &[f64]) -> f64 {
        self.h_line(p, p, 0.0)
    }

    /// `h(p + s v)` without materializing the point.
    #[inline]
    pub fn h_line(&self, p: &[f64], v: &[f64], s: f64) -> f64 {
        let DomainShape { n, t, .. } = self.shape;
        let psi = &self.psi.coeffs;
        let mut acc = 0.0;
        for i in 0..t {
            let x = p[i] + s * v[i];
            if !(x > 0.0) {
                return f64::INFINITY;
            }
            acc -= psi[i] * x.ln();
        }
        if t == n {
            return acc / self.psi_sum;
        }
        acc -= p[t] + s * v[t];
        for i in t + 1..n {
            let y = p[i] + s * v[i];
            acc += 0.5 * y * y;
        }
        acc
    }

    /// Closed-form value, gradient (order ≥ 1) and Hessian (order 2).
    pub fn horofunction(&self, p: &[f64], order: u8) -> Result<HoroEval> {
        self.check_len(p)?;
        if !self.in_chart(p) {
            return Err(CuspError::OutsideChart);
        }
        let DomainShape { n, t, .. } = self.shape;
        let psi = &self.psi.coeffs;
        let value = self.h(p);
        let scale = if t == n { 1.0 / self.psi_sum } else { 1.0 };
        let gradient = (order >= 1).then(|| {
            let mut g = DVector::zeros(n);
            for i in 0..t {
                g[i] = -psi[i] / p[i] * scale;
            }
            if t < n {
                g[t] = -1.0;
                for i in t + 1..n {
                    g[i] = p[i];
                }
            }
            g
        });
        let hessian = (order >= 2).then(|| {
            let mut hm = DMatrix::zeros(n, n);
            for i in 0..t {
                hm[(i, i)] = psi[i] / (p[i] * p[i]) * scale;
            }
            for i in self.shape.y_range() {
                hm[(i, i)] = 1.0;
            }
            hm
        });
        Ok(HoroEval {
            value,
            gradient,
            hessian,
        })
    }

    /// Height of the boundary graph over `(x, y)`. For `t = n`, `x` holds the
    /// first `n - 1` coordinates and `y` must be empty.
    pub fn boundary_height(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let DomainShape { n, t, u, .. } = self.shape;
        let psi = &self.psi.coeffs;
        if t == n {
            if x.len() != n - 1 || !y.is_empty() {
                return Err(CuspError::DimensionMismatch {
                    expected: n - 1,
                    got: x.len() + y.len(),
                });
            }
            if x.iter().any(|&v| !(v > 0.0)) {
                return Err(CuspError::OutsideChart);
            }
            let log_f: f64 = (0..n - 1).map(|i| -psi[i] / psi[n - 1] * x[i].ln()).sum();
            return Ok(log_f.exp());
        }
        if x.len() != t || y.len() != u {
            return Err(CuspError::DimensionMismatch {
                expected: t + u,
                got: x.len() + y.len(),
            });
        }
        if x.iter().any(|&v| !(v > 0.0)) {
            return Err(CuspError::OutsideChart);
        }
        let logs: f64 = (0..t).map(|i| psi[i] * x[i].ln()).sum();
        Ok(-logs + 0.5 * y.iter().map(|v| v * v).sum::<f64>())
    }

    /// The graph map `F(x, y)` onto `∂Ω`.
    pub fn boundary_point(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let f = self.boundary_height(x, y)?;
        let mut p = Vec::with_capacity(self.n());
        p.extend_from_slice(x);
        p.push(f);
        p.extend_from_slice(y);
        Ok(p)
    }

    pub fn membership(&self, p: &[f64]) -> Membership {
        if p.len() != self.n() || !self.in_chart(p) {
            return Membership::OutsideChart;
        }
        let h = self.h(p);
        let tol = DEFAULT_TOL.equality;
        if h.abs() <= tol {
            Membership::Boundary
        } else if h < 0.0 {
            Membership::Interior
        } else {
            Membership::Exterior
        }
    }

    /// Lift chart coordinates `X ∈ ℝ^r` to the ambient translation vector:
    /// identity when `t < n`, completion into `ker ψ` when `t = n`.
    pub fn lift_x(&self, x_chart: &[f64]) -> Vec<f64> {
        let DomainShape { n, t, .. } = self.shape;
        let mut x = x_chart.to_vec();
        if t == n {
            let psi = &self.psi.coeffs;
            let last = -(0..n - 1).map(|i| psi[i] * x_chart[i]).sum::<f64>() / psi[n - 1];
            x.push(last);
        }
        x
    }

    /// `Φ_level(m*(X, Y) · b)`, the point of the horosphere `h = level`
    /// reached from the basepoint by the translation with chart parameters
    /// `(X, Y)`.
    pub fn horosphere_point(&self, x_chart: &[f64], y: &[f64], level: f64) -> Result<Vec<f64>> {
        let DomainShape { n, t, r, u } = self.shape;
        if x_chart.len() != r || y.len() != u {
            return Err(CuspError::DimensionMismatch {
                expected: r + u,
                got: x_chart.len() + y.len(),
            });
        }
        let x = self.lift_x(x_chart);
        if t == n {
            return Ok(x.iter().map(|xi| (xi - level).exp()).collect());
        }
        let mut p = Vec::with_capacity(n);
        p.extend(x.iter().map(|v| v.exp()));
        let corner = 0.5 * y.iter().map(|v| v * v).sum::<f64>() - self.psi.apply(&x);
        p.push(corner - level);
        p.extend_from_slice(y);
        Ok(p)
    }

    pub fn basepoint(&self) -> Vec<f64> {
        let mut b = vec![0.0; self.n()];
        b[..self.shape.t].iter_mut().for_each(|v| *v = 1.0);
        b
    }

    /// Positive parameters at which `p ∓ s v` leaves `Ω`, `+∞` when the ray
    /// stays inside and ends on the ideal boundary.
    pub fn chord_endpoints(&self, p: &[f64], v: &[f64]) -> Result<(f64, f64)> {
        self.check_len(p)?;
        self.check_len(v)?;
        let vnorm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !(vnorm > 1e-280) || !vnorm.is_finite() {
            return Err(CuspError::DegenerateDirection);
        }
        if !(self.h(p) < 0.0) {
            return Err(CuspError::NotInterior);
        }
        let minus = self.ray_exit(p, v, -1.0);
        let plus = self.ray_exit(p, v, 1.0);
        Ok((minus, plus))
    }

    fn ray_exit(&self, p: &[f64], v: &[f64], sign: f64) -> f64 {
        let g = |s: f64| self.h_line(p, v, sign * s);
        let tol = DEFAULT_TOL.equality;
        let mut lo = 0.0;
        let mut hi = 1.0;
        let cap = 2f64.powi(60);
        let mut prev = g(0.0);
        loop {
            let gh = g(hi);
            if gh > 0.0 {
                break;
            }
            if hi >= cap {
                // Non-increasing at the cap: by convexity g stays negative.
                if gh < -tol && gh <= prev {
                    return f64::INFINITY;
                }
                if hi >= 2f64.powi(1000) {
                    return f64::INFINITY;
                }
            }
            prev = gh;
            lo = hi;
            hi *= 2.0;
        }
        // Illinois regula falsi on the bracket, with a bisection step
        // whenever the bracket fails to halve.
        let (mut a, mut b) = (lo, hi);
        let (mut fa, mut fb) = (g(a), g(b));
        let mut side = 0i8;
        // Bracket widths one and two steps back.
        let mut widths = [f64::INFINITY; 2];
        for _ in 0..200 {
            if b - a <= 4.0 * f64::EPSILON * b {
                break;
            }
            let mut c = (a * fb - b * fa) / (fb - fa);
            if !(c > a && c < b) || b - a > 0.5 * widths[1] {
                c = 0.5 * (a + b);
            }
            widths = [b - a, widths[0]];
            if c <= a || c >= b {
                break;
            }
            let fc = g(c);
            if fc > 0.0 {
                b = c;
                fb = fc;
                if side == 1 {
                    fa *= 0.5;
                }
                side = 1;
            } else {
                a = c;
                fa = fc;
                if side == -1 {
                    fb *= 0.5;
                }
                side = -1;
            }
        }
        0.5 * (a + b)
    }

    pub fn ideal_boundary(&self) -> IdealBoundaryDescriptor {
        let DomainShape { n, t, r, .. } = self.shape;
        let unit = |k: usize| {
            let mut c = vec![0.0; n + 1];
            c[k] = 1.0;
            ProjPoint::new(c).expect("unit vector")
        };
        let vertices = (0..=r).map(unit).collect();
        let flow_center = if t == n { unit(n) } else { unit(t) };
        IdealBoundaryDescriptor {
            vertices,
            dimension: r,
            flow_center,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, SQRT_2};

    fn dom(c: &[f64]) -> Domain {
        Domain::from_coeffs(c).unwrap()
    }

    #[test]
    fn shapes() {
        let s = dom(&[0.0, 0.0, 0.0]).shape;
        assert_eq!((s.t, s.r, s.u), (0, 0, 2));
        let s = dom(&[1.0, 0.0, 0.0]).shape;
        assert_eq!((s.t, s.r, s.u), (1, 1, 1));
        let s = dom(&[1.0, 1.0, 1.0]).shape;
        assert_eq!((s.t, s.r, s.u), (3, 2, 0));
    }

    #[test]
    fn invalid_weyl_vectors() {
        assert_eq!(WeylVector::new(vec![1.0, 2.0]), Err(CuspError::UnsortedWeyl));
        assert_eq!(WeylVector::new(vec![1.0, -1.0]), Err(CuspError::NegativeWeyl));
    }

    #[test]
    fn horofunction_values() {
        assert_eq!(dom(&[1.0, 1.0]).h(&[1.0, 1.0]), 0.0);
        assert_eq!(dom(&[0.0, 0.0, 0.0]).h(&[1.0, 1.0, 1.0]), 0.0);
        assert!((dom(&[1.0, 1.0]).h(&[E, E]) + 1.0).abs() < 1e-15);
        assert_eq!(
            dom(&[1.0, 0.0]).horofunction(&[0.0, 1.0], 0),
            Err(CuspError::OutsideChart)
        );
    }

    #[test]
    fn boundary_heights() {
        let d = dom(&[1.0, 0.0]);
        assert!((d.boundary_height(&[E], &[]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(d.boundary_point(&[E], &[]).unwrap()[1], -1.0);
        assert_eq!(dom(&[0.0, 0.0]).boundary_height(&[], &[2.0]).unwrap(), 2.0);
        let f = dom(&[2.0, 1.0]).boundary_height(&[4.0], &[]).unwrap();
        assert!((f - 1.0 / 16.0).abs() < 1e-16);
    }

    #[test]
    fn membership_examples() {
        let d = dom(&[1.0, 1.0]);
        assert_eq!(d.membership(&[1.0, 1.0]), Membership::Boundary);
        assert_eq!(d.membership(&[E, E]), Membership::Interior);
        assert_eq!(d.membership(&[1.0, (-2.0f64).exp()]), Membership::Exterior);
        assert_eq!(d.membership(&[-1.0, 1.0]), Membership::OutsideChart);
    }

    #[test]
    fn horosphere_points() {
        let d = dom(&[0.0, 0.0]);
        assert_eq!(d.horosphere_point(&[], &[0.0], 0.0).unwrap(), vec![0.0, 0.0]);
        assert_eq!(d.horosphere_point(&[], &[1.0], 0.0).unwrap(), vec![0.5, 1.0]);
        let d = dom(&[1.0, 1.0]);
        let p = d.horosphere_point(&[1.0], &[], 0.0).unwrap();
        assert!((p[0] - E).abs() < 1e-15 && (p[1] - 1.0 / E).abs() < 1e-15);
        let q = d.horosphere_point(&[0.3], &[], -2.5).unwrap();
        assert!((d.h(&q) + 2.5).abs() < 1e-12);
    }

    #[test]
    fn chord_examples() {
        let d = dom(&[0.0, 0.0]);
        let (a, b) = d.chord_endpoints(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!((a - SQRT_2).abs() < 1e-14 && (b - SQRT_2).abs() < 1e-14);
        let (a, b) = d.chord_endpoints(&[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!((a - 1.0).abs() < 1e-14 && b.is_infinite());
        let d = dom(&[1.0, 1.0]);
        let (a, b) = d.chord_endpoints(&[E, E], &[E, E]).unwrap();
        assert!((a - (1.0 - 1.0 / E)).abs() < 1e-13);
        assert!(b.is_infinite());
        assert_eq!(
            d.chord_endpoints(&[E, E], &[0.0, 0.0]),
            Err(CuspError::DegenerateDirection)
        );
    }

    #[test]
    fn ideal_boundary_dimension() {
        let d = dom(&[1.0, 1.0, 0.0]);
        let ib = d.ideal_boundary();
        assert_eq!(ib.dimension, 2);
        assert_eq!(ib.vertices.len(), 3);
        assert_eq!(ib.flow_center.coords(), &[0.0, 0.0, 1.0, 0.0]);
    }
}
