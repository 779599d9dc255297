//! Hilbert/Finsler metric, the flat metric β and its Euclidean chart, second
//! fundamental forms, displacement, horoscaling and the shrink profile.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Domain, DomainShape};
use crate::error::{CuspError, Result};
use crate::groups::{orth_param_action, semidirect_decompose};

/// `½(1/t₋ + 1/t₊)` along the chord through `p` in direction `v`.
pub fn hilbert_norm(d: &Domain, p: &[f64], v: &[f64]) -> Result<f64> {
    let (a, b) = d.chord_endpoints(p, v)?;
    Ok(0.5 * (recip(a) + recip(b)))
}

#[inline]
fn recip(t: f64) -> f64 {
    if t.is_infinite() {
        0.0
    } else {
        1.0 / t
    }
}

/// Cross-ratio distance on the chord through `p` and `q`.
pub fn hilbert_distance(d: &Domain, p: &[f64], q: &[f64]) -> Result<f64> {
    if !(d.h(p) < 0.0) || !(d.h(q) < 0.0) {
        return Err(CuspError::NotInterior);
    }
    let v: Vec<f64> = q.iter().zip(p).map(|(a, b)| a - b).collect();
    if v.iter().all(|&c| c == 0.0) {
        return Ok(0.0);
    }
    // Endpoints sit at -a and 1 + b on the line p + s (q - p). Each gap is
    // measured from its nearer point to avoid cancellation in `b - 1`.
    let (a, _) = d.chord_endpoints(p, &v)?;
    let (_, b) = d.chord_endpoints(q, &v)?;
    Ok(0.5 * (recip(a).ln_1p() + recip(b).ln_1p()))
}

/// β at a point, together with the horofunction data it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSample {
    pub point: Vec<f64>,
    pub beta_gram: DMatrix<f64>,
    pub h_value: f64,
    pub grad_h: DVector<f64>,
}

/// Radial flow direction with `Dh(v) = 1`.
pub fn flow_direction(d: &Domain, p: &[f64]) -> DVector<f64> {
    let n = d.n();
    if d.shape.hyperbolic() {
        DVector::from_iterator(n, p.iter().map(|v| -v))
    } else {
        let mut v = DVector::zeros(n);
        v[d.shape.t] = -1.0;
        v
    }
}

fn beta_parts(d: &Domain, p: &[f64]) -> Result<(DMatrix<f64>, DVector<f64>, f64)> {
    let ev = d.horofunction(p, 2)?;
    let g = ev.gradient.unwrap();
    let hess = ev.hessian.unwrap();
    let v = flow_direction(d, p);
    let n = d.n();
    // a = w - Dh(w) v lies in ker Dh.
    let proj = DMatrix::identity(n, n) - &v * g.transpose();
    let tang = proj.transpose() * hess * &proj;
    Ok((tang, g, ev.value))
}

/// Gram matrix of `β(w) = D²h(a) + Dh(w)²` with `w = a + Dh(w) v_flow`.
pub fn beta_form(d: &Domain, p: &[f64]) -> Result<MetricSample> {
    let (tang, g, h) = beta_parts(d, p)?;
    let gram = tang + &g * g.transpose();
    Ok(MetricSample {
        point: p.to_vec(),
        beta_gram: symmetrize(gram),
        h_value: h,
        grad_h: g,
    })
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// `β^c = c·D²h|ker Dh + c²·(Dh)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Horoscale {
    pub c: f64,
}

pub fn horoscale(c: f64) -> Result<Horoscale> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(CuspError::NonPositiveScale);
    }
    Ok(Horoscale { c })
}

impl Horoscale {
    pub fn gram(&self, d: &Domain, p: &[f64]) -> Result<DMatrix<f64>> {
        let (tang, g, _) = beta_parts(d, p)?;
        Ok(symmetrize(tang * self.c + &g * g.transpose() * (self.c * self.c)))
    }

    /// Rescale an already-scaled metric.
    pub fn then(&self, c2: f64) -> Result<Horoscale> {
        horoscale(self.c * c2)
    }
}

/// Coordinates `(X ∈ ℝ^r, Y ∈ ℝ^u, s)` of the flat chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartCoords {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: f64,
}

impl ChartCoords {
    pub fn new(x: Vec<f64>, y: Vec<f64>, s: f64) -> Self {
        ChartCoords { x, y, s }
    }

    /// Split a flat parameter vector `(X, Y)` at the given depth.
    pub fn from_params(shape: &DomainShape, params: &[f64], s: f64) -> Self {
        ChartCoords {
            x: params[..shape.r].to_vec(),
            y: params[shape.r..].to_vec(),
            s,
        }
    }
}

/// `(X, Y, s) ↦ Φ_{-s}(m*(X, Y)·b)` with its constant pullback Gram.
#[derive(Debug, Clone, PartialEq)]
pub struct EuclideanChart {
    pub domain: Domain,
    /// Gram of β in `(X, Y, s)` coordinates.
    pub gram: DMatrix<f64>,
    /// Upper-triangular `E` with `Eᵀ E = gram` restricted to `(X, Y)`.
    pub embed: DMatrix<f64>,
}

pub fn euclidean_chart(d: &Domain) -> Result<EuclideanChart> {
    let shape = d.shape;
    let zero = ChartCoords::new(vec![0.0; shape.r], vec![0.0; shape.u], 0.0);
    let gram = chart_pullback(d, &zero)?;
    let k = shape.r + shape.u;
    let gxy = gram.view((0, 0), (k, k)).into_owned();
    let chol = gxy
        .clone()
        .cholesky()
        .ok_or(CuspError::DegenerateLattice)?;
    let embed = chol.l().transpose();
    Ok(EuclideanChart {
        domain: d.clone(),
        gram,
        embed,
    })
}

/// The chart point.
pub fn chart_point(d: &Domain, c: &ChartCoords) -> Result<Vec<f64>> {
    d.horosphere_point(&c.x, &c.y, -c.s)
}

/// Columns are the derivatives of the chart point in `(X, Y, s)`.
pub fn chart_jacobian(d: &Domain, c: &ChartCoords) -> Result<DMatrix<f64>> {
    let p = chart_point(d, c)?;
    let DomainShape { n, t, r, u } = d.shape;
    let psi = d.psi.coeffs();
    let mut j = DMatrix::zeros(n, n);
    if t == n {
        for k in 0..r {
            j[(k, k)] = p[k];
            j[(n - 1, k)] = -psi[k] / psi[n - 1] * p[n - 1];
        }
        for i in 0..n {
            j[(i, n - 1)] = p[i];
        }
    } else {
        for k in 0..r {
            j[(k, k)] = p[k];
            j[(t, k)] = -psi[k];
        }
        for l in 0..u {
            j[(t, r + l)] = c.y[l];
            j[(t + 1 + l, r + l)] = 1.0;
        }
        j[(t, n - 1)] = 1.0;
    }
    Ok(j)
}

/// `Jᵀ β J` at a chart point; constant by flatness.
pub fn chart_pullback(d: &Domain, c: &ChartCoords) -> Result<DMatrix<f64>> {
    let p = chart_point(d, c)?;
    let j = chart_jacobian(d, c)?;
    let b = beta_form(d, &p)?.beta_gram;
    Ok(symmetrize(j.transpose() * b * j))
}

impl EuclideanChart {
    pub fn point(&self, c: &ChartCoords) -> Result<Vec<f64>> {
        chart_point(&self.domain, c)
    }

    /// Dimension of the horosphere part `r + u = n - 1`.
    pub fn flat_dim(&self) -> usize {
        self.domain.shape.r + self.domain.shape.u
    }

    /// Gram restricted to the translation parameters.
    pub fn translation_gram(&self) -> DMatrix<f64> {
        let k = self.flat_dim();
        self.gram.view((0, 0), (k, k)).into_owned()
    }

    /// Euclidean coordinates of a translation-parameter vector.
    pub fn to_euclidean(&self, params: &[f64]) -> DVector<f64> {
        &self.embed * DVector::from_column_slice(params)
    }

    pub fn from_euclidean(&self, e: &DVector<f64>) -> Vec<f64> {
        let sol = self
            .embed
            .clone()
            .solve_upper_triangular(e)
            .expect("Cholesky factor is invertible");
        sol.as_slice().to_vec()
    }

    /// β-length of the translation with the given chart parameters.
    pub fn translation_length(&self, params: &[f64]) -> f64 {
        self.to_euclidean(params).norm()
    }
}

/// Second fundamental form of `∂Ω` at a boundary point, in the tangent
/// basis `T_i = e_i + ∂_i f · e_k` of the boundary graph.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondFundamentalForm {
    pub tangent_basis: DMatrix<f64>,
    pub ii: DMatrix<f64>,
    pub lambda: f64,
    pub beta_tangent: DMatrix<f64>,
}

/// Graph coordinates (all indices except the graph index) with the first
/// and second derivatives of `f`.
fn graph_derivatives(d: &Domain, q: &[f64]) -> (Vec<usize>, DVector<f64>, DMatrix<f64>) {
    let DomainShape { n, t, .. } = d.shape;
    let psi = d.psi.coeffs();
    let k = d.shape.graph_index();
    let idx: Vec<usize> = (0..n).filter(|&i| i != k).collect();
    let m = idx.len();
    let mut grad = DVector::zeros(m);
    let mut hess = DMatrix::zeros(m, m);
    if t == n {
        let f = q[n - 1];
        let a: Vec<f64> = (0..n - 1).map(|i| -psi[i] / psi[n - 1]).collect();
        for i in 0..m {
            grad[i] = f * a[i] / q[i];
            for j in 0..m {
                hess[(i, j)] = f * a[i] * a[j] / (q[i] * q[j]);
            }
            hess[(i, i)] -= f * a[i] / (q[i] * q[i]);
        }
    } else {
        for (c, &i) in idx.iter().enumerate() {
            if i < t {
                grad[c] = -psi[i] / q[i];
                hess[(c, c)] = psi[i] / (q[i] * q[i]);
            } else {
                grad[c] = q[i];
                hess[(c, c)] = 1.0;
            }
        }
    }
    (idx, grad, hess)
}

pub fn second_fundamental_form(d: &Domain, q: &[f64]) -> Result<SecondFundamentalForm> {
    let ev = d.horofunction(q, 1)?;
    let scale = q.iter().fold(1.0f64, |a, b| a.max(b.abs()));
    if ev.value.abs() > 1e-8 * scale {
        return Err(CuspError::NotOnBoundary);
    }
    let n = d.n();
    let k = d.shape.graph_index();
    let (idx, grad_f, hess_f) = graph_derivatives(d, q);
    let mut basis = DMatrix::zeros(n, n - 1);
    for (c, &i) in idx.iter().enumerate() {
        basis[(i, c)] = 1.0;
        basis[(k, c)] = grad_f[c];
    }
    let gh = ev.gradient.unwrap();
    let lambda = gh.norm();
    // Inward unit normal is -∇h / ‖∇h‖.
    let normal_k = -gh[k] / lambda;
    let ii = &hess_f * normal_k;
    let beta = beta_form(d, q)?.beta_gram;
    let beta_tangent = symmetrize(basis.transpose() * beta * &basis);
    Ok(SecondFundamentalForm {
        tangent_basis: basis,
        ii,
        lambda,
        beta_tangent,
    })
}

/// `II_q(v, w)` for tangent vectors given in ambient coordinates.
pub fn ii_form(d: &Domain, q: &[f64], v: &[f64], w: &[f64]) -> Result<f64> {
    let sff = second_fundamental_form(d, q)?;
    let k = d.shape.graph_index();
    let drop = |x: &[f64]| {
        DVector::from_iterator(
            x.len() - 1,
            x.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, v)| *v),
        )
    };
    let (vv, ww) = (drop(v), drop(w));
    Ok((vv.transpose() * &sff.ii * ww)[(0, 0)])
}

/// β and sampled Hilbert displacement of a group element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Displacement {
    pub beta_displacement: f64,
    pub hilbert_displacement_estimate: f64,
    /// Deepest depth `s` sampled for the Hilbert estimate.
    pub deepest_level: f64,
}

/// Exact β displacement from the flat model; Hilbert estimate as the
/// minimum over seeded samples at depths `2^0, …, 2^levels`.
pub fn displacement(d: &Domain, g: &DMatrix<f64>, levels: u32, seed: u64) -> Result<Displacement> {
    let f = semidirect_decompose(d, g)?;
    let chart = euclidean_chart(d)?;
    let k = chart.flat_dim();
    let a = orth_param_action(d, &f.orth);
    let e = &chart.embed;
    let e_inv = e.clone().try_inverse().ok_or(CuspError::Singular)?;
    let rot = e * &a * &e_inv;
    let p = f.params.to_chart(d);
    let b = chart.to_euclidean(&p);
    let fix = (rot - DMatrix::identity(k, k)).svd(false, true);
    let vt = fix.v_t.expect("requested");
    let mut proj_sq = 0.0;
    for (i, sv) in fix.singular_values.iter().enumerate() {
        if *sv < 1e-9 {
            proj_sq += vt.row(i).dot(&b.transpose()).powi(2);
        }
    }
    let beta_displacement = (proj_sq + f.s * f.s).sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::INFINITY;
    let mut deepest = 0.0;
    for lvl in 0..=levels {
        let s = 2f64.powi(lvl as i32);
        for _ in 0..4 {
            let params: Vec<f64> = (0..k).map(|_| rng.random_range(-0.5..0.5)).collect();
            let x = chart_point(d, &ChartCoords::from_params(&d.shape, &params, s))?;
            let gx = crate::groups::act(g, &x);
            if let Ok(dist) = hilbert_distance(d, &x, &gx) {
                best = best.min(dist);
            }
        }
        deepest = s;
    }
    Ok(Displacement {
        beta_displacement,
        hilbert_displacement_estimate: best,
        deepest_level: deepest,
    })
}

/// Scale `c` with `sup_{J(ψ)} δ_{β^c} = 1`, for `t = n` or `r = 1`.
pub fn normalized_scale(d: &Domain) -> Result<f64> {
    let DomainShape { n, t, r, .. } = d.shape;
    if d.psi.is_zero() {
        return Err(CuspError::ZeroPsi);
    }
    let chart = euclidean_chart(d)?;
    let k = chart.flat_dim();
    let sup = if t == n {
        // Maximum of a convex function over {X ∈ ker ψ : X_i ≤ 1} sits at a
        // vertex: all coordinates 1 but one.
        let psi = d.psi.coeffs();
        (0..n)
            .map(|j| {
                let mut x = vec![1.0; n];
                x[j] = -(0..n).filter(|&i| i != j).map(|i| psi[i]).sum::<f64>() / psi[j];
                chart.translation_length(&x[..n - 1])
            })
            .fold(0.0, f64::max)
    } else if r == 1 {
        let mut p = vec![0.0; k];
        p[0] = 1.0;
        chart.translation_length(&p)
    } else {
        return Err(CuspError::UnsupportedPsi(format!(
            "t = {t} < n = {n} with r = {r} >= 2 leaves J(psi) unbounded"
        )));
    };
    Ok(sup.powi(-2))
}

/// One sample of the shrink profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShrinkRow {
    pub t: f64,
    /// `d(Φ_{-t} p, Φ_{-t} q)`.
    pub f: f64,
    /// `d(Φ_{-1} p, Φ_{-t} p)`.
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkProfile {
    pub rows: Vec<ShrinkRow>,
    /// Least-squares slope of `log f` against `d`.
    pub slope: f64,
    pub parabolic: bool,
}

/// Exact flowline distance between depths `r` and `s`.
pub fn flowline_distance(d: &Domain, r: f64, s: f64) -> f64 {
    if d.shape.hyperbolic() {
        0.5 * ((s.exp_m1()) / (r.exp_m1())).ln().abs()
    } else {
        0.5 * (s / r).ln().abs()
    }
}

/// The horosphere distance law in the form it is usually stated:
/// `½|log(r/s)|` when `t < n` and `½|r - s|` when `t = n`.
pub fn stated_horosphere_distance(d: &Domain, r: f64, s: f64) -> f64 {
    if d.shape.hyperbolic() {
        0.5 * (r - s).abs()
    } else {
        0.5 * (r / s).ln().abs()
    }
}

/// Push a boundary point to depth `t`.
pub fn flow_to_depth(d: &Domain, p: &[f64], t: f64) -> Vec<f64> {
    crate::groups::act(&crate::groups::radial_flow(d, -t).matrix, p)
}

pub fn shrink_profile(d: &Domain, p: &[f64], q: &[f64], t_grid: &[f64]) -> Result<ShrinkProfile> {
    let tol = 1e-8;
    for pt in [p, q] {
        let scale = pt.iter().fold(1.0f64, |a, b| a.max(b.abs()));
        if !d.in_chart(pt) || d.h(pt).abs() > tol * scale {
            return Err(CuspError::NotOnBoundary);
        }
    }
    if p == q {
        return Err(CuspError::InvalidInput("p and q coincide".into()));
    }
    let p1 = flow_to_depth(d, p, 1.0);
    let mut rows = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let pt = flow_to_depth(d, p, t);
        let qt = flow_to_depth(d, q, t);
        let f = hilbert_distance(d, &pt, &qt)?;
        let dd = if t == 1.0 { 0.0 } else { hilbert_distance(d, &p1, &pt)? };
        rows.push(ShrinkRow { t, f, d: dd });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.d).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.f.ln()).collect();
    let slope = fit_slope(&xs, &ys);
    let parabolic = !d.shape.hyperbolic()
        && d.shape
            .x_range()
            .all(|i| (q[i] - p[i]).abs() <= 1e-12 * p[i].abs().max(1.0));
    Ok(ShrinkProfile {
        rows,
        slope,
        parabolic,
    })
}

/// Ordinary least-squares slope.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
