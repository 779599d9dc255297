//! Marked lattices in `T(ψ)`, their conjugacy and anisotropy invariants, the
//! Θ parameterization, ψ-recovery, and the dimension-2 and dimension-3
//! normal forms.
//!
//! Lattices live in chart coordinates `(X, Y)`. The Euclidean form of a
//! chart vector `c` is `E c`, where `E` is the Cholesky factor of the flat
//! chart Gram, so `O(ψ)` acts on Euclidean forms by orthogonal matrices.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::{Domain, WeylVector};
use crate::error::{CuspError, Result};
use crate::groups::{
    orth_elements, orth_is_finite, orth_param_action, GroupElement, OrthDescriptor,
    TranslationParams,
};
use crate::metrics::{euclidean_chart, EuclideanChart};

/// Tolerance for reading off integer matrices.
const INTEGRAL_TOL: f64 = 1e-6;
/// Relative tolerance for matching Gram entries and O(ψ) actions.
const MATCH_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkedLattice {
    pub psi: WeylVector,
    pub generators: Vec<(TranslationParams, OrthDescriptor)>,
}

impl MarkedLattice {
    /// A lattice with trivial orthogonal parts from chart basis columns.
    pub fn from_chart_basis(psi: &WeylVector, basis: &DMatrix<f64>) -> Result<Self> {
        let d = Domain::new(psi.clone())?;
        let id = OrthDescriptor::identity(&d.shape);
        let generators = basis
            .column_iter()
            .map(|c| {
                let v: Vec<f64> = c.iter().copied().collect();
                Ok((TranslationParams::from_chart(&d, &v)?, id.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        let l = MarkedLattice {
            psi: psi.clone(),
            generators,
        };
        l.validate()?;
        Ok(l)
    }

    pub fn domain(&self) -> Result<Domain> {
        Domain::new(WeylVector::new(self.psi.coeffs().to_vec())?)
    }

    pub fn has_trivial_orth(&self) -> bool {
        self.generators.iter().all(|(_, o)| o.is_identity(MATCH_TOL))
    }

    /// Chart translation vectors as columns.
    pub fn chart_basis(&self) -> Result<DMatrix<f64>> {
        let d = self.domain()?;
        let k = d.shape.r + d.shape.u;
        let cols: Vec<DVector<f64>> = self
            .generators
            .iter()
            .map(|(p, _)| DVector::from_vec(p.to_chart(&d)))
            .collect();
        if cols.iter().any(|c| c.len() != k) {
            return Err(CuspError::DimensionMismatch {
                expected: k,
                got: cols.iter().map(|c| c.len()).find(|&l| l != k).unwrap_or(0),
            });
        }
        Ok(DMatrix::from_columns(&cols))
    }

    /// Check shapes and, for pure translation lattices, that the
    /// generators form a basis of the chart.
    pub fn validate(&self) -> Result<Domain> {
        let d = self.domain()?;
        let k = d.shape.r + d.shape.u;
        for (p, o) in &self.generators {
            if p.x.len() != d.shape.x_len() || p.y.len() != d.shape.u {
                return Err(CuspError::DimensionMismatch {
                    expected: d.shape.x_len() + d.shape.u,
                    got: p.x.len() + p.y.len(),
                });
            }
            if o.perm.len() != d.shape.x_len() || o.u != d.shape.u {
                return Err(CuspError::DimensionMismatch {
                    expected: d.shape.x_len(),
                    got: o.perm.len(),
                });
            }
        }
        let m = self.chart_basis()?;
        if self.has_trivial_orth() {
            if m.ncols() != k {
                return Err(CuspError::DegenerateLattice);
            }
            let sv = m.clone().svd(false, false).singular_values;
            let top = sv.max();
            if !(sv.min() > 1e-10 * top) {
                return Err(CuspError::DegenerateLattice);
            }
        } else if m.ncols() == 0 {
            return Err(CuspError::DegenerateLattice);
        }
        Ok(d)
    }
}

/// Left coset `A·O(ψ)` represented by an orthogonal matrix acting on
/// Euclidean chart coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct AnisotropyCoset {
    pub representative: DMatrix<f64>,
}

impl AnisotropyCoset {
    pub fn new(representative: DMatrix<f64>) -> Result<Self> {
        let k = representative.nrows();
        if !representative.is_square()
            || (representative.transpose() * &representative - DMatrix::identity(k, k)).amax()
                > 1e-10
        {
            return Err(CuspError::InvalidInput(
                "coset representative is not orthogonal".into(),
            ));
        }
        Ok(AnisotropyCoset { representative })
    }

    pub fn identity(k: usize) -> Self {
        AnisotropyCoset {
            representative: DMatrix::identity(k, k),
        }
    }
}

/// Euclidean form of `O(ψ)` elements: `E A_o E⁻¹`.
fn euclid_orth(chart: &EuclideanChart, o: &OrthDescriptor) -> DMatrix<f64> {
    let e = &chart.embed;
    let a = orth_param_action(&chart.domain, o);
    let e_inv = e.clone().try_inverse().expect("Cholesky factor is invertible");
    e * a * e_inv
}

/// LLL reduction driven by the Gram matrix alone; returns the unimodular
/// change of basis `U` (integer-valued).
pub fn lll_gram(gram: &DMatrix<f64>, delta: f64) -> DMatrix<f64> {
    let k = gram.nrows();
    let mut u = DMatrix::<f64>::identity(k, k);
    if k == 0 {
        return u;
    }
    let gs = |g: &DMatrix<f64>| {
        let mut mu = DMatrix::<f64>::zeros(k, k);
        let mut bs = vec![0.0; k];
        for i in 0..k {
            for j in 0..i {
                let mut s = g[(i, j)];
                for l in 0..j {
                    s -= mu[(j, l)] * mu[(i, l)] * bs[l];
                }
                mu[(i, j)] = s / bs[j];
            }
            let mut s = g[(i, i)];
            for l in 0..i {
                s -= mu[(i, l)] * mu[(i, l)] * bs[l];
            }
            bs[i] = s;
        }
        (mu, bs)
    };
    let mut idx = 1;
    let mut guard = 0;
    while idx < k && guard < 10_000 {
        guard += 1;
        for j in (0..idx).rev() {
            let g = u.transpose() * gram * &u;
            let (mu, _) = gs(&g);
            let q = mu[(idx, j)].round();
            if q != 0.0 {
                let cj = u.column(j).clone_owned();
                let mut ci = u.column_mut(idx);
                ci -= cj * q;
            }
        }
        let g = u.transpose() * gram * &u;
        let (mu, bs) = gs(&g);
        let m = mu[(idx, idx - 1)];
        if bs[idx] < (delta - m * m) * bs[idx - 1] {
            u.swap_columns(idx, idx - 1);
            idx = idx.saturating_sub(1).max(1);
        } else {
            idx += 1;
        }
    }
    u
}

/// Canonical reduction of a Gram class: among bases built from vectors no
/// longer than the longest LLL vector, the one whose Gram entries, read
/// column by column as (norm, inner products with earlier columns), are
/// lexicographically smallest. Equivalent Grams give the same reduced Gram;
/// the change of basis is unique up to automorphisms of the lattice.
/// Falls back to norm-sorted LLL if no such basis exists (possible for k ≥ 5).
pub fn canonical_reduction(gram: &DMatrix<f64>) -> DMatrix<f64> {
    let k = gram.nrows();
    let lll = lll_gram(gram, 0.99);
    if k == 0 {
        return lll;
    }
    let g = lll.transpose() * gram * &lll;
    let bound = (0..k).map(|i| g[(i, i)]).fold(0.0, f64::max);
    let mut cands = short_vectors(&g, bound);
    cands.sort_by(|a, b| a.dot(&(&g * a)).total_cmp(&b.dot(&(&g * b))));
    let mut search = LexSearch { g: &g, cands: &cands, tol: 1e-9 * bound, best: None };
    search.run(&mut Vec::new(), &mut Vec::new());
    match search.best {
        Some((_, picked)) => {
            let cols: Vec<DVector<f64>> = picked.iter().map(|&i| &lll * &cands[i]).collect();
            DMatrix::from_columns(&cols)
        }
        None => {
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&a, &b| g[(a, a)].total_cmp(&g[(b, b)]));
            DMatrix::from_columns(&order.iter().map(|&j| lll.column(j)).collect::<Vec<_>>())
        }
    }
}

struct LexSearch<'a> {
    g: &'a DMatrix<f64>,
    cands: &'a [DVector<f64>],
    tol: f64,
    best: Option<(Vec<f64>, Vec<usize>)>,
}

impl LexSearch<'_> {
    fn cmp(&self, a: &[f64], b: &[f64]) -> std::cmp::Ordering {
        for (x, y) in a.iter().zip(b) {
            if (x - y).abs() > self.tol {
                return x.total_cmp(y);
            }
        }
        std::cmp::Ordering::Equal
    }

    fn run(&mut self, picked: &mut Vec<usize>, key: &mut Vec<f64>) {
        let k = self.g.nrows();
        if picked.len() == k {
            let better = match &self.best {
                None => true,
                Some((b, _)) => self.cmp(key, b).is_lt(),
            };
            if better {
                self.best = Some((key.clone(), picked.clone()));
            }
            return;
        }
        for i in 0..self.cands.len() {
            if picked.contains(&i) {
                continue;
            }
            let c = &self.cands[i];
            let gc = self.g * c;
            let len = key.len();
            key.push(c.dot(&gc));
            key.extend(picked.iter().map(|&j| self.cands[j].dot(&gc)));
            let pruned = self
                .best
                .as_ref()
                .is_some_and(|(b, _)| self.cmp(key, &b[..key.len()]).is_gt());
            picked.push(i);
            if !pruned && is_primitive(self.cands, picked) {
                self.run(picked, key);
            }
            picked.pop();
            key.truncate(len);
        }
    }
}

/// Whether the integer vectors span a primitive sublattice: the gcd of their
/// maximal minors is 1.
fn is_primitive(cands: &[DVector<f64>], picked: &[usize]) -> bool {
    let k = cands[0].len();
    let j = picked.len();
    let m = DMatrix::from_fn(k, j, |r, c| cands[picked[c]][r]);
    let mut gcd = 0i64;
    let mut rows: Vec<usize> = (0..j).collect();
    loop {
        let sub = DMatrix::from_fn(j, j, |r, c| m[(rows[r], c)]);
        let mut a = sub.determinant().round().abs() as i64;
        let mut b = gcd;
        while b != 0 {
            (a, b) = (b, a % b);
        }
        gcd = a;
        if gcd == 1 {
            return true;
        }
        // Next j-subset of rows in lexicographic order.
        let Some(p) = (0..j).rev().find(|&p| rows[p] < k - j + p) else {
            return false;
        };
        rows[p] += 1;
        for q in p + 1..j {
            rows[q] = rows[q - 1] + 1;
        }
    }
}

/// Upper-triangular section of a Gram class: `σ = R_c U⁻¹` with
/// `R_cᵀ R_c = Uᵀ G U`.
fn section(gram: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let u = canonical_reduction(gram);
    let reduced = u.transpose() * gram * &u;
    let rc = reduced
        .cholesky()
        .ok_or(CuspError::DegenerateLattice)?
        .l()
        .transpose();
    let u_inv = u.clone().try_inverse().ok_or(CuspError::DegenerateLattice)?;
    Ok((&rc * u_inv, u, rc))
}

/// Euclidean Gram and anisotropy coset of a marked lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeInvariants {
    pub gram: DMatrix<f64>,
    pub coset: AnisotropyCoset,
    /// Canonical change of basis `U`.
    pub reduction: DMatrix<f64>,
}

pub fn lattice_invariants(l: &MarkedLattice) -> Result<LatticeInvariants> {
    let d = l.validate()?;
    let chart = euclidean_chart(&d)?;
    let b = &chart.embed * l.chart_basis()?;
    let gram = b.transpose() * &b;
    if !l.has_trivial_orth() {
        return Ok(LatticeInvariants {
            coset: AnisotropyCoset::identity(gram.nrows()),
            reduction: DMatrix::identity(gram.nrows(), gram.nrows()),
            gram,
        });
    }
    let (sigma, u, _) = section(&gram)?;
    // b = Q σ, and Θ(class, A) has basis A⁻¹ σ, so A = Qᵀ.
    let sigma_inv = sigma.try_inverse().ok_or(CuspError::DegenerateLattice)?;
    let q = &b * sigma_inv;
    let qr = q.qr();
    let (mut qq, rr) = (qr.q(), qr.r());
    for j in 0..qq.ncols() {
        if rr[(j, j)] < 0.0 {
            qq.column_mut(j).neg_mut();
        }
    }
    Ok(LatticeInvariants {
        gram,
        coset: AnisotropyCoset {
            representative: qq.transpose(),
        },
        reduction: u,
    })
}

fn find_orth(chart: &EuclideanChart, target: &DMatrix<f64>) -> Option<OrthDescriptor> {
    let elems = orth_elements(&chart.domain)?;
    elems
        .into_iter()
        .find(|o| (euclid_orth(chart, o) - target).amax() <= MATCH_TOL * target.amax().max(1.0))
}

/// `Θ(class, A·O(ψ))`: the lattice with Euclidean forms `A⁻¹ σ A`, where
/// `σ` is the canonical section for pure translation lattices and the
/// input itself otherwise.
pub fn theta_map(l: &MarkedLattice, coset: &AnisotropyCoset) -> Result<MarkedLattice> {
    let d = l.validate()?;
    let chart = euclidean_chart(&d)?;
    let k = chart.flat_dim();
    let a = &coset.representative;
    if a.nrows() != k {
        return Err(CuspError::DimensionMismatch {
            expected: k,
            got: a.nrows(),
        });
    }
    let e_inv = chart
        .embed
        .clone()
        .try_inverse()
        .ok_or(CuspError::Singular)?;
    let b = &chart.embed * l.chart_basis()?;
    let at = a.transpose();
    if l.has_trivial_orth() {
        let gram = b.transpose() * &b;
        let (sigma, _, _) = section(&gram)?;
        let chart_basis = &e_inv * (&at * sigma);
        return MarkedLattice::from_chart_basis(&l.psi, &chart_basis);
    }
    if !orth_is_finite(&d) {
        return Err(CuspError::UnsupportedGroupShape(
            "nontrivial rotational parts need a finite O(psi)".into(),
        ));
    }
    let mut generators = Vec::with_capacity(l.generators.len());
    for (j, (_, o)) in l.generators.iter().enumerate() {
        let rot = &at * euclid_orth(&chart, o) * a;
        let o2 = find_orth(&chart, &rot).ok_or(CuspError::RotationalPartOutsidePsi)?;
        let bj = &at * b.column(j);
        let c = &e_inv * bj;
        let params = TranslationParams::from_chart(&d, c.as_slice())?;
        generators.push((params, o2));
    }
    Ok(MarkedLattice {
        psi: l.psi.clone(),
        generators,
    })
}

/// `Some(t)` with `ψ′ = t ψ`; `ψ = ψ′ = 0` gives `t = 1`.
pub fn scale_equivalence(psi: &WeylVector, psi2: &WeylVector) -> Option<f64> {
    if psi.n() != psi2.n() {
        return None;
    }
    match (psi.is_zero(), psi2.is_zero()) {
        (true, true) => return Some(1.0),
        (true, false) | (false, true) => return None,
        _ => {}
    }
    let (a, b) = (psi.coeffs(), psi2.coeffs());
    let t = b[0] / a[0];
    a.iter()
        .zip(b)
        .all(|(x, y)| (y - t * x).abs() <= 1e-10 * y.abs().max(1.0))
        .then_some(t)
}

/// Move `l2` into the group of `psi`, where `psi2 = c·psi`; the parabolic
/// coordinates rescale by `1/√c`.
fn align_psi(psi: &WeylVector, l2: &MarkedLattice) -> Result<MarkedLattice> {
    let c = scale_equivalence(psi, &l2.psi).ok_or(CuspError::MixedPsi)?;
    let f = c.sqrt().recip();
    let generators = l2
        .generators
        .iter()
        .map(|(p, o)| {
            (
                TranslationParams {
                    x: p.x.clone(),
                    y: p.y.iter().map(|v| v * f).collect(),
                },
                o.clone(),
            )
        })
        .collect();
    Ok(MarkedLattice {
        psi: psi.clone(),
        generators,
    })
}

fn is_unimodular(c: &DMatrix<f64>) -> bool {
    c.iter().all(|v| (v - v.round()).abs() <= INTEGRAL_TOL)
        && (c.map(f64::round).determinant().abs() - 1.0).abs() < 1e-9
}

/// Membership of a chart-linear map in the `O(ψ)` action when `t < n`.
fn chart_map_in_orth(d: &Domain, t_map: &DMatrix<f64>) -> bool {
    let r = d.shape.r;
    let u = d.shape.u;
    let k = r + u;
    let tol = 1e-7;
    if d.shape.hyperbolic() {
        return orth_elements(d).is_some_and(|els| {
            els.iter()
                .any(|o| (orth_param_action(d, o) - t_map).amax() <= tol)
        });
    }
    let psi = d.psi.coeffs();
    for i in 0..k {
        for j in 0..k {
            if (i < r) != (j < r) && t_map[(i, j)].abs() > tol {
                return false;
            }
        }
    }
    for i in 0..r {
        let row: Vec<f64> = (0..r).map(|j| t_map[(i, j)]).collect();
        let ones: Vec<usize> = (0..r).filter(|&j| (row[j] - 1.0).abs() <= tol).collect();
        let zeros = (0..r).filter(|&j| row[j].abs() <= tol).count();
        if ones.len() != 1 || zeros != r - 1 || psi[i] != psi[ones[0]] {
            return false;
        }
    }
    let b = t_map.view((r, r), (u, u)).into_owned();
    (b.transpose() * &b - DMatrix::identity(u, u)).amax() <= tol
}

/// Integer vectors `z` with `zᵀ G z ≤ bound`, excluding zero.
fn short_vectors(gram: &DMatrix<f64>, bound: f64) -> Vec<DVector<f64>> {
    let k = gram.nrows();
    let Some(ch) = gram.clone().cholesky() else {
        return vec![];
    };
    let r = ch.l().transpose();
    let mut out = Vec::new();
    let mut z = vec![0.0; k];
    fn rec(
        level: usize,
        r: &DMatrix<f64>,
        z: &mut Vec<f64>,
        remaining: f64,
        out: &mut Vec<DVector<f64>>,
    ) {
        let k = r.nrows();
        let rii = r[(level, level)];
        let center = -(level + 1..k).map(|j| r[(level, j)] * z[j]).sum::<f64>() / rii;
        let half = (remaining.max(0.0)).sqrt() / rii;
        let lo = (center - half - 1e-9).ceil() as i64;
        let hi = (center + half + 1e-9).floor() as i64;
        for zi in lo..=hi {
            z[level] = zi as f64;
            let val = rii * (zi as f64 - center);
            let rem = remaining - val * val;
            if rem < -1e-9 * remaining.abs().max(1.0) {
                continue;
            }
            if level == 0 {
                if z.iter().any(|&v| v != 0.0) {
                    out.push(DVector::from_column_slice(z));
                }
            } else {
                rec(level - 1, r, z, rem, out);
            }
        }
        z[level] = 0.0;
    }
    if k > 0 {
        rec(k - 1, &r, &mut z, bound * (1.0 + 1e-9), &mut out);
    }
    out
}

/// Integer matrices `C` with `Cᵀ G2 C = G1`, fed to `accept` until it
/// returns `true`.
fn search_isometries(
    g1: &DMatrix<f64>,
    g2: &DMatrix<f64>,
    accept: &mut dyn FnMut(&DMatrix<f64>) -> bool,
) -> bool {
    let k = g1.nrows();
    let bound = (0..k).map(|i| g1[(i, i)]).fold(0.0, f64::max);
    let cands = short_vectors(g2, bound);
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-7 * bound.max(1e-300);
    let per_col: Vec<Vec<&DVector<f64>>> = (0..k)
        .map(|j| {
            cands
                .iter()
                .filter(|z| close((z.transpose() * g2 * *z)[(0, 0)], g1[(j, j)]))
                .collect()
        })
        .collect();
    fn rec(
        j: usize,
        chosen: &mut Vec<DVector<f64>>,
        per_col: &[Vec<&DVector<f64>>],
        g1: &DMatrix<f64>,
        g2: &DMatrix<f64>,
        close: &dyn Fn(f64, f64) -> bool,
        accept: &mut dyn FnMut(&DMatrix<f64>) -> bool,
    ) -> bool {
        if j == per_col.len() {
            let c = DMatrix::from_columns(chosen);
            return (c.determinant().abs() - 1.0).abs() < 1e-9 && accept(&c);
        }
        for z in &per_col[j] {
            let ok = chosen
                .iter()
                .enumerate()
                .all(|(i, zi)| close((zi.transpose() * g2 * *z)[(0, 0)], g1[(i, j)]));
            if ok {
                chosen.push((*z).clone());
                if rec(j + 1, chosen, per_col, g1, g2, close, accept) {
                    return true;
                }
                chosen.pop();
            }
        }
        false
    }
    rec(0, &mut Vec::new(), &per_col, g1, g2, &close, accept)
}

/// Conjugacy of the subgroups generated by two pure translation lattices.
pub fn are_conjugate(l1: &MarkedLattice, l2: &MarkedLattice) -> Result<bool> {
    let d = l1.validate()?;
    let l2 = align_psi(&l1.psi, l2)?;
    l2.validate()?;
    if !l1.has_trivial_orth() || !l2.has_trivial_orth() {
        return Err(CuspError::UnsupportedGroupShape(
            "unmarked conjugacy is implemented for translation lattices".into(),
        ));
    }
    let m1 = l1.chart_basis()?;
    let m2 = l2.chart_basis()?;
    let m2_inv = m2.clone().try_inverse().ok_or(CuspError::DegenerateLattice)?;
    if let Some(els) = orth_elements(&d).filter(|_| !d.psi.is_zero()) {
        return Ok(els
            .iter()
            .any(|o| is_unimodular(&(&m2_inv * orth_param_action(&d, o) * &m1))));
    }
    let chart = euclidean_chart(&d)?;
    let b1 = &chart.embed * &m1;
    let b2 = &chart.embed * &m2;
    let mut g1 = b1.transpose() * &b1;
    let mut g2 = b2.transpose() * &b2;
    let k = g1.nrows() as f64;
    let scale_free = d.psi.is_zero();
    if scale_free {
        g1 /= g1.determinant().powf(1.0 / k);
        g2 /= g2.determinant().powf(1.0 / k);
    }
    let m1_inv = m1.clone().try_inverse().ok_or(CuspError::DegenerateLattice)?;
    let mut accept = |c: &DMatrix<f64>| {
        let mut t = &m2 * c * &m1_inv;
        if scale_free {
            let s = t.determinant().abs().powf(1.0 / k);
            t /= s;
        }
        chart_map_in_orth(&d, &t)
    };
    Ok(search_isometries(&g1, &g2, &mut accept))
}

/// Marked conjugacy: some `o ∈ O(ψ)` carries generator `k` of `l1` to
/// generator `k` of `l2` for every `k`.
pub fn are_marked_conjugate(l1: &MarkedLattice, l2: &MarkedLattice) -> Result<bool> {
    let d = l1.validate()?;
    let l2 = align_psi(&l1.psi, l2)?;
    l2.validate()?;
    if l1.generators.len() != l2.generators.len() {
        return Ok(false);
    }
    let m1 = l1.chart_basis()?;
    let m2 = l2.chart_basis()?;
    let scale = m1.amax().max(m2.amax()).max(1.0);
    let orth_match = |o: &OrthDescriptor| {
        let oi = o.inverse();
        l1.generators.iter().zip(&l2.generators).all(|((_, a), (_, b))| {
            let c = o.compose(a).compose(&oi);
            c.perm == b.perm && (c.block_matrix() - b.block_matrix()).amax() <= MATCH_TOL
        })
    };
    if let Some(els) = orth_elements(&d) {
        return Ok(els.iter().any(|o| {
            (orth_param_action(&d, o) * &m1 - &m2).amax() <= MATCH_TOL * scale && orth_match(o)
        }));
    }
    if !l1.has_trivial_orth() || !l2.has_trivial_orth() {
        return Err(CuspError::UnsupportedGroupShape(
            "continuous rotational parts".into(),
        ));
    }
    let m1_inv = m1.clone().try_inverse().ok_or(CuspError::DegenerateLattice)?;
    Ok(chart_map_in_orth(&d, &(&m2 * m1_inv)))
}

/// Recovered ψ (up to positive scale) and a permutation conjugator `P` with
/// `P g P⁻¹` in standard form.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredPsi {
    pub psi: Vec<f64>,
    pub conjugator: DMatrix<f64>,
}

fn perm_matrix(order: &[usize]) -> DMatrix<f64> {
    // Row i of P g Pᵀ reads row order[i] of g.
    let m = order.len();
    let mut p = DMatrix::zeros(m, m);
    for (i, &j) in order.iter().enumerate() {
        p[(i, j)] = 1.0;
    }
    p
}

/// Restricted ψ-recovery for simultaneously diagonal generators or
/// generators in standard block form up to a coordinate permutation.
pub fn recover_psi(generators: &[DMatrix<f64>]) -> Result<RecoveredPsi> {
    let bad = |s: &str| CuspError::UnsupportedGroupShape(s.to_string());
    let first = generators.first().ok_or_else(|| bad("no generators"))?;
    let m = first.nrows();
    if m < 3 || generators.iter().any(|g| g.nrows() != m || g.ncols() != m) {
        return Err(bad("generators must be square of a common size n + 1 >= 3"));
    }
    let n = m - 1;
    let gens: Vec<DMatrix<f64>> = generators
        .iter()
        .map(|g| {
            let c = g[(n, n)];
            if c.abs() < 1e-300 {
                Err(bad("zero homogeneous entry"))
            } else {
                Ok(g / c)
            }
        })
        .collect::<Result<_>>()?;
    for a in &gens {
        for b in &gens {
            let c = a * b - b * a;
            if c.amax() > 1e-8 * (a.amax() * b.amax()).max(1.0) {
                return Err(bad("generators do not commute"));
            }
        }
    }
    let diagonal = gens.iter().all(|g| {
        let s = g.amax();
        (0..m).all(|i| (0..m).all(|j| i == j || g[(i, j)].abs() <= 1e-12 * s))
    });
    if diagonal {
        recover_diagonal(&gens, n)
    } else {
        recover_standard(&gens, n)
    }
}

fn recover_diagonal(gens: &[DMatrix<f64>], n: usize) -> Result<RecoveredPsi> {
    let bad = |s: &str| CuspError::UnsupportedGroupShape(s.to_string());
    if gens.iter().any(|g| (0..n).any(|i| !(g[(i, i)] > 0.0))) {
        return Err(bad("diagonal entries must be positive"));
    }
    let rows = gens.len().max(n);
    let mut logs = DMatrix::zeros(rows, n);
    for (k, g) in gens.iter().enumerate() {
        for i in 0..n {
            logs[(k, i)] = g[(i, i)].ln();
        }
    }
    let svd = logs.clone().svd(false, true);
    let vt = svd.v_t.expect("requested");
    let sv = &svd.singular_values;
    let top = sv.max().max(1e-300);
    let rank = sv.iter().filter(|&&s| s > 1e-9 * top).count();
    if rank != n - 1 {
        return Err(bad("log-diagonals do not span a hyperplane"));
    }
    let (kidx, _) = sv
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    let mut psi: Vec<f64> = vt.row(kidx).iter().copied().collect();
    let sum: f64 = psi.iter().sum();
    if sum < 0.0 {
        psi.iter_mut().for_each(|v| *v = -*v);
    }
    let mx = psi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    psi.iter_mut().for_each(|v| *v /= mx);
    if psi.iter().any(|&v| v <= 1e-9) {
        return Err(bad("diagonal group with a non-positive weight"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| psi[b].partial_cmp(&psi[a]).unwrap());
    let sorted: Vec<f64> = order.iter().map(|&i| psi[i]).collect();
    order.push(n);
    Ok(RecoveredPsi {
        psi: sorted,
        conjugator: perm_matrix(&order),
    })
}

fn recover_standard(gens: &[DMatrix<f64>], n: usize) -> Result<RecoveredPsi> {
    let bad = |s: &str| CuspError::UnsupportedGroupShape(s.to_string());
    let tol = 1e-10;
    let x_idx: Vec<usize> = (0..n)
        .filter(|&i| gens.iter().any(|g| (g[(i, i)] - 1.0).abs() > tol))
        .collect();
    let unit: Vec<usize> = (0..n).filter(|i| !x_idx.contains(i)).collect();
    if unit.is_empty() {
        return Err(bad("no unipotent coordinate"));
    }
    // The z row is the unit row whose off-diagonal entries reach other
    // unit columns; with no parabolic coordinates it is the only unit row.
    let z = if unit.len() == 1 {
        unit[0]
    } else {
        *unit
            .iter()
            .find(|&&i| {
                gens.iter()
                    .any(|g| unit.iter().any(|&j| j != i && g[(i, j)].abs() > tol))
            })
            .ok_or_else(|| bad("no row carries the parabolic block"))?
    };
    let y_idx: Vec<usize> = unit.iter().copied().filter(|&i| i != z).collect();
    for g in gens {
        for &i in &x_idx {
            if !(g[(i, i)] > 0.0) {
                return Err(bad("hyperbolic diagonal must be positive"));
            }
        }
        for &j in &y_idx {
            if (g[(z, j)] - g[(j, n)]).abs() > 1e-8 * g.amax().max(1.0) {
                return Err(bad("parabolic entries do not match the standard block"));
            }
        }
    }
    let t = x_idx.len();
    let order_tail = |psi_order: Vec<usize>| {
        let mut order = psi_order;
        order.push(z);
        order.extend(&y_idx);
        order.push(n);
        perm_matrix(&order)
    };
    if t == 0 {
        return Ok(RecoveredPsi {
            psi: vec![0.0; n],
            conjugator: order_tail(vec![]),
        });
    }
    let k = gens.len();
    let mut a = DMatrix::zeros(k.max(t), t);
    let mut rhs = DVector::zeros(k.max(t));
    for (row, g) in gens.iter().enumerate() {
        for (c, &i) in x_idx.iter().enumerate() {
            a[(row, c)] = g[(i, i)].ln();
        }
        let ysq: f64 = y_idx.iter().map(|&j| g[(j, n)].powi(2)).sum();
        rhs[row] = 0.5 * ysq - g[(z, n)];
    }
    let svd = a.clone().svd(true, true);
    let top = svd.singular_values.max().max(1e-300);
    if svd.singular_values.iter().filter(|&&s| s > 1e-9 * top).count() != t {
        return Err(bad("hyperbolic parts do not span"));
    }
    let sol = svd.solve(&rhs, 1e-12 * top).map_err(|e| bad(e))?;
    let resid = (&a * &sol - &rhs).amax();
    if resid > 1e-8 * rhs.amax().max(1.0) {
        return Err(bad("corner entries are inconsistent with a linear psi"));
    }
    let mx = sol.amax();
    let psi_x: Vec<f64> = sol.iter().map(|v| v / mx).collect();
    if psi_x.iter().any(|&v| v <= 1e-9) {
        return Err(bad("recovered weight is not positive"));
    }
    let mut ord: Vec<usize> = (0..t).collect();
    ord.sort_by(|&a, &b| psi_x[b].partial_cmp(&psi_x[a]).unwrap());
    let mut psi: Vec<f64> = ord.iter().map(|&c| psi_x[c]).collect();
    psi.resize(n, 0.0);
    Ok(RecoveredPsi {
        psi,
        conjugator: order_tail(ord.iter().map(|&c| x_idx[c]).collect()),
    })
}

/// Dimension-2 families of a generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Dim2Family {
    /// Three distinct eigenvalues; `psi = (1, ψ₂/ψ₁)`.
    Diagonal {
        logs: [f64; 3],
        psi_ratio: f64,
        inverted: bool,
    },
    /// Eigenvalues `e^a, 1, 1` with a 2-block.
    Mixed { a: f64 },
    /// Single Jordan 3-block.
    Unipotent,
}

/// Real spectrum of a 3×3 matrix after the sign flip, sorted descending.
fn real_spectrum(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, [f64; 3])> {
    if a.nrows() != 3 || a.ncols() != 3 {
        return Err(CuspError::DimensionMismatch {
            expected: 3,
            got: a.nrows(),
        });
    }
    let eig = a.complex_eigenvalues();
    let scale = eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if !(scale > 0.0) || a.determinant() == 0.0 {
        return Err(CuspError::Singular);
    }
    // Defective 3-blocks split into a small complex triple.
    if eig.iter().any(|z| z.im.abs() > 1e-4 * scale) {
        return Err(CuspError::ComplexSpectrum);
    }
    let re: Vec<f64> = eig.iter().map(|z| z.re).collect();
    let (m, re) = if re.iter().all(|&v| v < 0.0) {
        (-a.clone(), re.iter().map(|v| -v).collect::<Vec<_>>())
    } else {
        (a.clone(), re)
    };
    if re.iter().any(|&v| !(v > 0.0)) {
        return Err(CuspError::MixedSigns);
    }
    let mut s = [re[0], re[1], re[2]];
    s.sort_by(|x, y| y.partial_cmp(x).unwrap());
    Ok((m, s))
}

fn rank_drop(a: &DMatrix<f64>, lambda: f64) -> usize {
    let sv = (a - DMatrix::identity(3, 3) * lambda)
        .svd(false, false)
        .singular_values;
    let cut = 1e-6 * a.norm();
    sv.iter().filter(|&&s| s > cut).count()
}

const LOG_CLUSTER: f64 = 1e-3;

pub fn dim2_normal_form(a: &DMatrix<f64>) -> Result<Dim2Family> {
    let (m, s) = real_spectrum(a)?;
    let l = [s[0].ln(), s[1].ln(), s[2].ln()];
    let near = |i: usize, j: usize| (l[i] - l[j]).abs() <= LOG_CLUSTER;
    match (near(0, 1), near(1, 2)) {
        (false, false) => {
            let ratio = (l[1] - l[2]) / (l[0] - l[1]);
            if ratio > 1.0 {
                Ok(Dim2Family::Diagonal {
                    logs: [-l[2], -l[1], -l[0]],
                    psi_ratio: 1.0 / ratio,
                    inverted: true,
                })
            } else {
                Ok(Dim2Family::Diagonal {
                    logs: l,
                    psi_ratio: ratio,
                    inverted: false,
                })
            }
        }
        (true, true) => {
            let lam = (s[0] * s[1] * s[2]).cbrt();
            match rank_drop(&m, lam) {
                2 => Ok(Dim2Family::Unipotent),
                _ => Err(CuspError::DegenerateSpectrum(
                    "triple eigenvalue without a 3-block".into(),
                )),
            }
        }
        (dbl01, _) => {
            let (lam, mu) = if dbl01 {
                ((s[0] * s[1]).sqrt(), s[2])
            } else {
                ((s[1] * s[2]).sqrt(), s[0])
            };
            if rank_drop(&m, lam) != 2 {
                return Err(CuspError::DegenerateSpectrum(
                    "repeated eigenvalue without a 2-block".into(),
                ));
            }
            Ok(Dim2Family::Mixed { a: (mu / lam).ln() })
        }
    }
}

/// Point of the dimension-2 parameter cone `y₂ ≥ y₁ ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dim2Params {
    pub y1: f64,
    pub y2: f64,
}

impl Dim2Params {
    pub fn new(y1: f64, y2: f64) -> Result<Self> {
        if !(y1 >= 0.0 && y2 >= y1) {
            return Err(CuspError::OrderViolation);
        }
        Ok(Dim2Params { y1, y2 })
    }
}

/// Upper-triangular representative with ones above the diagonal.
pub fn dim2_teich(y: &Dim2Params) -> Result<DMatrix<f64>> {
    let y = Dim2Params::new(y.y1, y.y2)?;
    let (y1, y2) = (y.y1, y.y2);
    let diag = [
        ((2.0 * y2 - y1) / 3.0).exp(),
        ((2.0 * y1 - y2) / 3.0).exp(),
        ((-y1 - y2) / 3.0).exp(),
    ];
    Ok(DMatrix::from_fn(3, 3, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Equal => diag[i],
        std::cmp::Ordering::Less => 1.0,
        std::cmp::Ordering::Greater => 0.0,
    }))
}

/// Inverse of [`dim2_teich`] on projective eigenvalue classes.
pub fn dim2_teich_inverse(a: &DMatrix<f64>) -> Result<Dim2Params> {
    let upper = a.nrows() == 3
        && a.ncols() == 3
        && (0..3).all(|i| (0..i).all(|j| a[(i, j)] == 0.0));
    let mut l: Vec<f64> = if upper {
        let sign = if (0..3).all(|i| a[(i, i)] < 0.0) { -1.0 } else { 1.0 };
        let d: Vec<f64> = (0..3).map(|i| sign * a[(i, i)]).collect();
        if d.iter().any(|&v| !(v > 0.0)) {
            return Err(CuspError::MixedSigns);
        }
        d.iter().map(|v| v.ln()).collect()
    } else {
        real_spectrum(a)?.1.iter().map(|v| v.ln()).collect()
    };
    l.sort_by(|x, y| y.partial_cmp(x).unwrap());
    let mean = l.iter().sum::<f64>() / 3.0;
    let x: Vec<f64> = l.iter().map(|v| v - mean).collect();
    Ok(Dim2Params {
        y1: (x[1] - x[2]).max(0.0),
        y2: x[0] - x[2],
    })
}

/// The tabulated dimension-3 matrix for chart parameters `x ∈ ℝ^r`,
/// `y ∈ ℝ^u`.
pub fn dim3_family(d: &Domain, x: &[f64], y: &[f64]) -> Result<GroupElement> {
    if d.n() != 3 {
        return Err(CuspError::DimensionMismatch {
            expected: 3,
            got: d.n(),
        });
    }
    let (r, u) = (d.shape.r, d.shape.u);
    if x.len() != r || y.len() != u {
        return Err(CuspError::DimensionMismatch {
            expected: r + u,
            got: x.len() + y.len(),
        });
    }
    let p = d.psi.coeffs();
    let mut m = DMatrix::identity(4, 4);
    match d.shape.t {
        0 => {
            let (y1, y2) = (y[0], y[1]);
            m[(0, 1)] = y1;
            m[(0, 2)] = y2;
            m[(0, 3)] = 0.5 * (y1 * y1 + y2 * y2);
            m[(1, 3)] = y1;
            m[(2, 3)] = y2;
        }
        1 => {
            let (x1, y1) = (x[0], y[0]);
            m[(0, 0)] = x1.exp();
            m[(1, 2)] = y1;
            m[(1, 3)] = 0.5 * y1 * y1 - p[0] * x1;
            m[(2, 3)] = y1;
        }
        2 => {
            m[(0, 0)] = x[0].exp();
            m[(1, 1)] = x[1].exp();
            m[(2, 3)] = -p[0] * x[0] - p[1] * x[1];
        }
        _ => {
            m[(0, 0)] = x[0].exp();
            m[(1, 1)] = x[1].exp();
            m[(2, 2)] = ((-p[0] * x[0] - p[1] * x[1]) / p[2]).exp();
        }
    }
    let mut chart = x.to_vec();
    chart.extend_from_slice(y);
    Ok(GroupElement {
        matrix: m,
        factorization: Some(crate::groups::Factorization {
            s: 0.0,
            params: TranslationParams::from_chart(d, &chart)?,
            orth: OrthDescriptor::identity(&d.shape),
        }),
    })
}
