//! Busemann volume: densities, horosphere cross-sections, cusp volume
//! quadrature and the finiteness verdict. Supported for `n ∈ {2, 3}`.
//!
//! Densities are evaluated in chart coordinates `(X, Y, τ)` where `τ` is the
//! Hilbert depth below `H_1`. Pulling the Hilbert norm back through the
//! chart Jacobian folds the change of variables into the unit ball, so the
//! chart density is `c_n / vol(pulled-back ball)`.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classification::MarkedLattice;
use crate::domain::Domain;
use crate::error::{CuspError, Result};
use crate::metrics::{chart_jacobian, chart_point, fit_slope, flowline_distance, hilbert_norm, ChartCoords};

/// Lebesgue volume of the Euclidean unit ball, via `V_n = 2π V_{n-2} / n`.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * PI / n as f64 * unit_ball_volume(n - 2),
    }
}

fn check_dim(d: &Domain) -> Result<()> {
    match d.n() {
        2 | 3 => Ok(()),
        n => Err(CuspError::UnsupportedDimension(n)),
    }
}

/// Direction grid on half of `S^{k-1}` with area weights; the balls are
/// centrally symmetric so the other half is implied.
fn half_sphere(k: usize, points: usize) -> Vec<(DVector<f64>, f64)> {
    match k {
        1 => vec![(DVector::from_element(1, 1.0), 1.0)],
        2 => {
            let m = points.max(4);
            (0..m)
                .map(|i| {
                    let a = PI * i as f64 / m as f64;
                    (DVector::from_vec(vec![a.cos(), a.sin()]), PI / m as f64)
                })
                .collect()
        }
        _ => {
            // Fibonacci lattice in (z, φ); equal-area by Archimedes.
            let m = points.max(8);
            let golden = (1.0 + 5f64.sqrt()) / 2.0;
            (0..m)
                .map(|i| {
                    let z = (i as f64 + 0.5) / m as f64;
                    let phi = 2.0 * PI * (i as f64 / golden).fract();
                    let rho = (1.0 - z * z).sqrt();
                    (
                        DVector::from_vec(vec![rho * phi.cos(), rho * phi.sin(), z]),
                        2.0 * PI / m as f64,
                    )
                })
                .collect()
        }
    }
}

/// Default direction counts on the full sphere.
pub fn default_resolution(k: usize) -> usize {
    if k <= 2 {
        1 << 10
    } else {
        1 << 14
    }
}

/// Volume of `{w : norm(w) ≤ 1}` in `ℝ^k` by polar quadrature in a
/// whitened frame. `resolution` counts directions on the full sphere.
pub fn ball_volume<F>(k: usize, resolution: usize, norm: F) -> Result<f64>
where
    F: Fn(&DVector<f64>) -> Result<f64>,
{
    if k == 1 {
        return Ok(2.0 / norm(&DVector::from_element(1, 1.0))?);
    }
    let radial = |frame: &DMatrix<f64>, th: &DVector<f64>| -> Result<f64> {
        let nv = norm(&(frame * th))?;
        if !(nv > 0.0) || !nv.is_finite() {
            return Err(CuspError::NotInterior);
        }
        Ok(1.0 / nv)
    };
    let mut frame = DMatrix::zeros(k, k);
    for i in 0..k {
        let mut e = DVector::zeros(k);
        e[i] = 1.0;
        frame[(i, i)] = 1.0 / norm(&e)?;
    }
    let coarse = half_sphere(k, if k == 2 { 64 } else { 512 });
    for _ in 0..2 {
        let mut inertia = DMatrix::zeros(k, k);
        for (th, w) in &coarse {
            let r = radial(&frame, th)?;
            inertia += th * th.transpose() * (w * r.powi(k as i32 + 2));
        }
        let eig = SymmetricEigen::new(inertia);
        let scale = eig.eigenvalues.max();
        let sqrt = &eig.eigenvectors
            * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| (v / scale).max(0.0).sqrt()))
            * eig.eigenvectors.transpose();
        frame = &frame * sqrt;
    }
    let grid = half_sphere(k, resolution / 2);
    let mut acc = 0.0;
    for (th, w) in &grid {
        acc += w * radial(&frame, th)?.powi(k as i32);
    }
    Ok(frame.determinant().abs() * 2.0 * acc / k as f64)
}

/// `c_n / vol(B_p)` where `B_p` is the Hilbert unit ball at `p`.
pub fn busemann_density(d: &Domain, p: &[f64], resolution: Option<usize>) -> Result<f64> {
    check_dim(d)?;
    if !(d.h(p) < 0.0) {
        return Err(CuspError::NotInterior);
    }
    let n = d.n();
    let res = resolution.unwrap_or_else(|| default_resolution(n));
    let vol = ball_volume(n, res, |w| hilbert_norm(d, p, w.as_slice()))?;
    Ok(unit_ball_volume(n) / vol)
}

/// Radial-flow depth `s` reached at Hilbert depth `τ` below `H_1`, and
/// `ds/dτ`.
pub fn depth_from_tau(d: &Domain, tau: f64) -> (f64, f64) {
    let e2 = (2.0 * tau).exp();
    if d.shape.hyperbolic() {
        let em1 = std::f64::consts::E - 1.0;
        let q = 1.0 + em1 * e2;
        (q.ln(), 2.0 * em1 * e2 / q)
    } else {
        (e2, 2.0 * e2)
    }
}

fn chart_at(d: &Domain, params: &[f64], s: f64) -> ChartCoords {
    ChartCoords::from_params(&d.shape, params, s)
}

/// Busemann density in `(X, Y, τ)` coordinates.
pub fn chart_density(d: &Domain, params: &[f64], tau: f64, resolution: Option<usize>) -> Result<f64> {
    check_dim(d)?;
    let n = d.n();
    let (s, ds) = depth_from_tau(d, tau);
    let c = chart_at(d, params, s);
    let p = chart_point(d, &c)?;
    let mut j = chart_jacobian(d, &c)?;
    j.column_mut(n - 1).scale_mut(ds);
    let res = resolution.unwrap_or_else(|| default_resolution(n));
    let vol = ball_volume(n, res, |w| hilbert_norm(d, &p, (&j * w).as_slice()))?;
    Ok(unit_ball_volume(n) / vol)
}

/// `(n-1)`-dimensional Busemann density of the horosphere `H_s` in `(X, Y)`
/// coordinates.
pub fn horosphere_density(d: &Domain, params: &[f64], s: f64, resolution: Option<usize>) -> Result<f64> {
    check_dim(d)?;
    let n = d.n();
    let c = chart_at(d, params, s);
    let p = chart_point(d, &c)?;
    let j = chart_jacobian(d, &c)?.columns(0, n - 1).into_owned();
    let res = resolution.unwrap_or_else(|| default_resolution(n - 1));
    let vol = ball_volume(n - 1, res, |w| hilbert_norm(d, &p, (&j * w).as_slice()))?;
    Ok(unit_ball_volume(n - 1) / vol)
}

fn patch_measure(patch: &DMatrix<f64>, k: usize) -> Result<f64> {
    if patch.nrows() != k || patch.ncols() != k {
        return Err(CuspError::DegeneratePatch);
    }
    let det = patch.determinant().abs();
    let scale = patch.column_iter().map(|c| c.norm()).product::<f64>();
    if !(det > 1e-12 * scale) {
        return Err(CuspError::DegeneratePatch);
    }
    Ok(det)
}

/// Cross-section volume and `κ(t)` of a chart parallelepiped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossSection {
    pub volume: f64,
    pub kappa: f64,
}

/// Volume of the patch pushed to `H_t`. Translations act transitively on
/// horospheres and preserve the measure, so the density is evaluated once,
/// at the patch center.
pub fn cross_section(d: &Domain, patch: &DMatrix<f64>, t: f64, resolution: Option<usize>) -> Result<CrossSection> {
    check_dim(d)?;
    let k = d.n() - 1;
    let area = patch_measure(patch, k)?;
    if !(t >= 1.0) {
        return Err(CuspError::InvalidInput("cross-section depth must be >= 1".into()));
    }
    let center: Vec<f64> = (patch * DVector::from_element(k, 0.5)).iter().copied().collect();
    let dt = horosphere_density(d, &center, t, resolution)?;
    let d1 = horosphere_density(d, &center, 1.0, resolution)?;
    Ok(CrossSection {
        volume: area * dt,
        kappa: dt / d1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub t: f64,
    pub cross_section: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecaySeries {
    pub rows: Vec<DecayRow>,
}

pub fn decay_series(d: &Domain, patch: &DMatrix<f64>, grid: &[f64], resolution: Option<usize>) -> Result<DecaySeries> {
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(CuspError::InvalidInput("t grid must be strictly increasing".into()));
    }
    let rows = grid
        .iter()
        .map(|&t| {
            cross_section(d, patch, t, resolution).map(|c| DecayRow {
                t,
                cross_section: c.volume,
                kappa: c.kappa,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DecaySeries { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Exec {
    #[default]
    Parallel,
    Sequential,
}

/// Map over `0..count` and collect in index order. Falls back to
/// sequential execution when built without the `parallel` feature.
pub fn run_indexed<T, F>(exec: Exec, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            (0..count).into_par_iter().map(f).collect()
        }
        _ => (0..count).map(f).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeOptions {
    /// Gauss-Legendre nodes in `τ`.
    pub depth_nodes: usize,
    /// Strata per patch axis.
    pub strata_per_axis: usize,
    /// Sphere directions for each density; `None` uses the default.
    pub resolution: Option<usize>,
    pub seed: u64,
    pub exec: Exec,
}

impl Default for VolumeOptions {
    fn default() -> Self {
        VolumeOptions {
            depth_nodes: 24,
            strata_per_axis: 2,
            resolution: None,
            seed: 0,
            exec: Exec::Parallel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
    pub depth_max: f64,
}

/// Busemann volume of `{fundamental patch} × [0, T]` in `(X, Y, τ)`
/// coordinates: Gauss-Legendre in `τ` times stratified Monte Carlo over the
/// patch, one uniform draw per stratum.
pub fn cusp_volume(lattice: &MarkedLattice, depth: f64, opts: &VolumeOptions) -> Result<VolumeEstimate> {
    let d = lattice.validate()?;
    check_dim(&d)?;
    if !lattice.has_trivial_orth() {
        return Err(CuspError::DegenerateLattice);
    }
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(CuspError::InvalidInput("depth must be positive".into()));
    }
    let k = d.n() - 1;
    let patch = lattice.chart_basis()?;
    let area = patch_measure(&patch, k).map_err(|_| CuspError::DegenerateLattice)?;
    let nodes = NonZeroUsize::new(opts.depth_nodes).ok_or_else(|| {
        CuspError::InvalidInput("depth_nodes must be positive".into())
    })?;
    let rule = GaussLegendre::new(nodes);
    let pairs: Vec<(f64, f64)> = rule
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (0.5 * depth * (x + 1.0), 0.5 * depth * w))
        .collect();
    let m = opts.strata_per_axis.max(1);
    let strata = m.pow(k as u32);
    let total = strata * pairs.len();
    let per_item = run_indexed(opts.exec, total, |idx| -> Result<f64> {
        let (node, stratum) = (idx / strata, idx % strata);
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(idx as u64);
        let mut cell = stratum;
        let unit: Vec<f64> = (0..k)
            .map(|_| {
                let c = cell % m;
                cell /= m;
                (c as f64 + rng.random::<f64>()) / m as f64
            })
            .collect();
        let params: Vec<f64> = (&patch * DVector::from_vec(unit)).iter().copied().collect();
        chart_density(&d, &params, pairs[node].0, opts.resolution)
    });
    let values = per_item.into_iter().collect::<Result<Vec<_>>>()?;
    // Per-stratum estimates of the full integral, summed in index order.
    let mut per_stratum = vec![0.0; strata];
    for (idx, v) in values.iter().enumerate() {
        per_stratum[idx % strata] += pairs[idx / strata].1 * v * area;
    }
    let mean = per_stratum.iter().sum::<f64>() / strata as f64;
    let stderr = if strata > 1 {
        let var = per_stratum.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (strata - 1) as f64;
        (var / strata as f64).sqrt()
    } else {
        0.0
    };
    Ok(VolumeEstimate {
        value: mean,
        stderr,
        samples: total,
        depth_max: depth,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Finiteness {
    Finite,
    Infinite,
}

/// Tail fit of a decay series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub series: DecaySeries,
    /// Slope of `log κ` against `log t`.
    pub exponent_t: f64,
    /// Slope of `log κ` against the flowline distance `d(H_1, H_t)`, as an
    /// exponent of `exp(d)`.
    pub exponent_d: f64,
    /// Smallest `κ` on the grid.
    pub kappa_floor: f64,
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub analytic: Finiteness,
    pub numeric: Option<TailFit>,
}

/// Tail grid used by the numeric corroboration.
pub fn default_tail_grid() -> Vec<f64> {
    (0..=12).map(|i| 10f64.powf(1.0 + i as f64 / 4.0)).collect()
}

/// Analytic verdict from `u(ψ)`, optionally corroborated by fitting the
/// tail of the cross-section decay on a unit patch.
pub fn finiteness_verdict(d: &Domain, numeric: Option<(&[f64], Option<usize>)>) -> Result<Verdict> {
    let analytic = if d.shape.u > 0 {
        Finiteness::Finite
    } else {
        Finiteness::Infinite
    };
    let numeric = match numeric {
        None => None,
        Some((grid, res)) => {
            check_dim(d)?;
            let k = d.n() - 1;
            let series = decay_series(d, &DMatrix::identity(k, k), grid, res)?;
            let logk: Vec<f64> = series.rows.iter().map(|r| r.kappa.ln()).collect();
            let logt: Vec<f64> = series.rows.iter().map(|r| r.t.ln()).collect();
            let dist: Vec<f64> = series
                .rows
                .iter()
                .map(|r| flowline_distance(d, 1.0, r.t))
                .collect();
            let exponent_t = fit_slope(&logt, &logk);
            let exponent_d = fit_slope(&dist, &logk);
            let kappa_floor = series.rows.iter().map(|r| r.kappa).fold(f64::INFINITY, f64::min);
            let consistent = match analytic {
                Finiteness::Finite => exponent_d < -0.8,
                Finiteness::Infinite => kappa_floor > 0.0 && exponent_d > -0.2,
            };
            Some(TailFit {
                series,
                exponent_t,
                exponent_d,
                kappa_floor,
                consistent,
            })
        }
    };
    Ok(Verdict { analytic, numeric })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::WeylVector;

    fn dom(c: &[f64]) -> Domain {
        Domain::from_coeffs(c).unwrap()
    }

    #[test]
    fn ellipse_ball_volume_is_exact() {
        let (a, b) = (3.0, 0.25);
        let v = ball_volume(2, 1024, |w| Ok((w[0] * w[0] / (a * a) + w[1] * w[1] / (b * b)).sqrt())).unwrap();
        assert!((v - PI * a * b).abs() < 1e-10 * PI * a * b);
        let sheared = DMatrix::from_row_slice(3, 3, &[1.0, 40.0, 0.0, 0.0, 1.0, 0.0, 0.2, 0.0, 0.01]);
        let inv = sheared.clone().try_inverse().unwrap();
        let v = ball_volume(3, 1 << 14, |w| Ok((&inv * w).norm())).unwrap();
        let exact = 4.0 * PI / 3.0 * sheared.determinant().abs();
        assert!((v - exact).abs() < 1e-3 * exact, "{v} vs {exact}");
    }

    #[test]
    fn parabola_density_matches_closed_form() {
        let d = dom(&[0.0, 0.0]);
        for s in [0.5, 1.0, 4.0] {
            let p = [s, 0.0];
            let rho = busemann_density(&d, &p, None).unwrap();
            let exact = 1.0 / (2.0 * 2f64.sqrt() * s.powf(1.5));
            assert!((rho - exact).abs() < 1e-6 * exact, "{rho} vs {exact}");
        }
        assert_eq!(busemann_density(&d, &[-1.0, 0.0], None), Err(CuspError::NotInterior));
        assert_eq!(
            busemann_density(&dom(&[0.0; 4]), &[1.0, 0.0, 0.0, 0.0], None),
            Err(CuspError::UnsupportedDimension(4))
        );
    }

    #[test]
    fn kappa_at_one_is_one() {
        let d = dom(&[1.0, 0.0, 0.0]);
        let c = cross_section(&d, &DMatrix::identity(2, 2), 1.0, Some(256)).unwrap();
        assert!((c.kappa - 1.0).abs() < 1e-15);
        assert_eq!(
            cross_section(&d, &DMatrix::zeros(2, 2), 2.0, None),
            Err(CuspError::DegeneratePatch)
        );
    }

    #[test]
    fn verdict_examples() {
        assert_eq!(finiteness_verdict(&dom(&[1.0, 0.0, 0.0]), None).unwrap().analytic, Finiteness::Finite);
        assert_eq!(finiteness_verdict(&dom(&[1.0, 1.0, 0.0]), None).unwrap().analytic, Finiteness::Infinite);
        assert_eq!(finiteness_verdict(&dom(&[0.0, 0.0, 0.0]), None).unwrap().analytic, Finiteness::Finite);
    }

    #[test]
    fn small_depth_small_volume() {
        let psi = WeylVector::new(vec![0.0, 0.0]).unwrap();
        let l = MarkedLattice::from_chart_basis(&psi, &DMatrix::identity(1, 1)).unwrap();
        let opts = VolumeOptions {
            depth_nodes: 4,
            strata_per_axis: 2,
            ..Default::default()
        };
        let v = cusp_volume(&l, 1e-6, &opts).unwrap();
        assert!(v.value < 1e-5);
    }
}
