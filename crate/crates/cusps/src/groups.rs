//! Matrix models of the translation group `T(ψ)`, the enlarged group, the
//! radial flow, the compact part `O(ψ)`, and element classification.

use itertools::Itertools;
use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::{Domain, DomainShape};
use crate::error::{CuspError, Result};
use crate::projective::{apply_affine, is_singular, ProjPoint};

/// Translation parameters in ambient form: `x` has length `t` (for `t = n`
/// it must satisfy `ψ(x) = 0`), `y` has length `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationParams {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl TranslationParams {
    pub fn zero(shape: &DomainShape) -> Self {
        TranslationParams {
            x: vec![0.0; shape.x_len()],
            y: vec![0.0; shape.u],
        }
    }

    /// Build from chart coordinates `(X ∈ ℝ^r, Y ∈ ℝ^u)` concatenated.
    pub fn from_chart(d: &Domain, chart: &[f64]) -> Result<Self> {
        let r = d.shape.r;
        if chart.len() != r + d.shape.u {
            return Err(CuspError::DimensionMismatch {
                expected: r + d.shape.u,
                got: chart.len(),
            });
        }
        Ok(TranslationParams {
            x: d.lift_x(&chart[..r]),
            y: chart[r..].to_vec(),
        })
    }

    /// Chart coordinates `(X ∈ ℝ^r, Y)`; drops the dependent coordinate when `t = n`.
    pub fn to_chart(&self, d: &Domain) -> Vec<f64> {
        let mut c = self.x[..d.shape.r].to_vec();
        c.extend_from_slice(&self.y);
        c
    }
}

/// An element of `O(ψ)`: a ψ-preserving permutation of the hyperbolic
/// coordinates and an orthogonal block acting on the parabolic ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthDescriptor {
    /// `perm[i] = j` means coordinate `i` of the image reads coordinate `j`.
    pub perm: Vec<usize>,
    /// Row-major `u × u` orthogonal matrix.
    pub block: Vec<f64>,
    pub u: usize,
}

impl OrthDescriptor {
    pub fn identity(shape: &DomainShape) -> Self {
        let u = shape.u;
        OrthDescriptor {
            perm: (0..shape.x_len()).collect(),
            block: DMatrix::<f64>::identity(u, u).transpose().as_slice().to_vec(),
            u,
        }
    }

    pub fn block_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.u, self.u, &self.block)
    }

    pub fn from_parts(perm: Vec<usize>, block: &DMatrix<f64>) -> Self {
        OrthDescriptor {
            perm,
            block: block.transpose().as_slice().to_vec(),
            u: block.nrows(),
        }
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        self.perm.iter().enumerate().all(|(i, &j)| i == j)
            && (self.block_matrix() - DMatrix::identity(self.u, self.u)).amax() <= tol
    }

    pub fn compose(&self, other: &OrthDescriptor) -> OrthDescriptor {
        let perm = (0..self.perm.len()).map(|i| other.perm[self.perm[i]]).collect();
        OrthDescriptor::from_parts(perm, &(self.block_matrix() * other.block_matrix()))
    }

    pub fn inverse(&self) -> OrthDescriptor {
        let mut perm = vec![0; self.perm.len()];
        for (i, &j) in self.perm.iter().enumerate() {
            perm[j] = i;
        }
        OrthDescriptor::from_parts(perm, &self.block_matrix().transpose())
    }
}

/// Factorization `g = Φ_s · m*(params) · o`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factorization {
    pub s: f64,
    pub params: TranslationParams,
    pub orth: OrthDescriptor,
}

/// A projective matrix with optional structural data.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement {
    pub matrix: DMatrix<f64>,
    pub factorization: Option<Factorization>,
}

impl GroupElement {
    pub fn compose(&self, other: &GroupElement) -> GroupElement {
        GroupElement {
            matrix: &self.matrix * &other.matrix,
            factorization: None,
        }
    }

    /// Action on an affine point of `V_ψ`.
    pub fn act(&self, p: &[f64]) -> Vec<f64> {
        apply_affine(&self.matrix, p)
    }
}

fn check_params(d: &Domain, params: &TranslationParams) -> Result<()> {
    let s = d.shape;
    if params.x.len() != s.x_len() || params.y.len() != s.u {
        return Err(CuspError::DimensionMismatch {
            expected: s.x_len() + s.u,
            got: params.x.len() + params.y.len(),
        });
    }
    if s.hyperbolic() {
        let res = d.psi.apply(&params.x);
        let scale = params.x.iter().fold(1.0f64, |a, b| a.max(b.abs())) * d.psi.coeffs()[0];
        if res.abs() > 1e-10 * scale.max(1.0) {
            return Err(CuspError::KernelViolation(res));
        }
    }
    Ok(())
}

/// `m_t(X, Z, Y)`: diagonal `exp X` on the hyperbolic block, unipotent block
/// with corner `Z + ‖Y‖²/2` (absent when `t = n`).
fn enlarged_matrix(shape: &DomainShape, x: &[f64], z: f64, y: &[f64]) -> DMatrix<f64> {
    let n = shape.n;
    let t = shape.t;
    let mut m = DMatrix::identity(n + 1, n + 1);
    for i in 0..t {
        m[(i, i)] = x[i].exp();
    }
    if t < n {
        let ysq: f64 = y.iter().map(|v| v * v).sum();
        m[(t, n)] = z + 0.5 * ysq;
        for (j, &yj) in y.iter().enumerate() {
            m[(t, t + 1 + j)] = yj;
            m[(t + 1 + j, n)] = yj;
        }
    }
    m
}

/// `m*_ψ(X, Y)`, the element of `T(ψ)` with the given parameters.
pub fn translation(d: &Domain, params: &TranslationParams) -> Result<GroupElement> {
    check_params(d, params)?;
    let z = -d.psi.apply(&params.x);
    let matrix = enlarged_matrix(&d.shape, &params.x, z, &params.y);
    Ok(GroupElement {
        matrix,
        factorization: Some(Factorization {
            s: 0.0,
            params: params.clone(),
            orth: OrthDescriptor::identity(&d.shape),
        }),
    })
}

/// `m_t(X, Z, Y)` and `ψ_*` of it. `z` is ignored when `t = n`.
pub fn enlarged(d: &Domain, x: &[f64], z: f64, y: &[f64]) -> Result<(GroupElement, f64)> {
    let s = d.shape;
    if x.len() != s.x_len() || y.len() != s.u {
        return Err(CuspError::DimensionMismatch {
            expected: s.x_len() + s.u,
            got: x.len() + y.len(),
        });
    }
    let psi_x = d.psi.apply(x);
    let psi_star = if s.hyperbolic() {
        psi_x / d.psi_sum()
    } else {
        psi_x + z
    };
    Ok((
        GroupElement {
            matrix: enlarged_matrix(&s, x, z, y),
            factorization: None,
        },
        psi_star,
    ))
}

/// `Φ_s`: shear `z ↦ z - s` when `t < n`, homothety `e^{-s}` when `t = n`.
pub fn radial_flow(d: &Domain, s: f64) -> GroupElement {
    let n = d.n();
    let t = d.shape.t;
    let mut m = DMatrix::identity(n + 1, n + 1);
    if t < n {
        m[(t, n)] = -s;
    } else {
        let e = (-s).exp();
        for i in 0..n {
            m[(i, i)] = e;
        }
    }
    GroupElement {
        matrix: m,
        factorization: Some(Factorization {
            s,
            params: TranslationParams::zero(&d.shape),
            orth: OrthDescriptor::identity(&d.shape),
        }),
    }
}

/// The fixed point `[e_{t+1}]` of the radial flow.
pub fn flow_center(d: &Domain) -> ProjPoint {
    d.ideal_boundary().flow_center
}

/// Full `(n+1) × (n+1)` matrix of an `O(ψ)` element.
pub fn orth_matrix(d: &Domain, o: &OrthDescriptor) -> DMatrix<f64> {
    let n = d.n();
    let t = d.shape.t;
    let mut m = DMatrix::zeros(n + 1, n + 1);
    for (i, &j) in o.perm.iter().enumerate() {
        m[(i, j)] = 1.0;
    }
    m[(n, n)] = 1.0;
    if t < n {
        m[(t, t)] = 1.0;
        let b = o.block_matrix();
        for i in 0..o.u {
            for j in 0..o.u {
                m[(t + 1 + i, t + 1 + j)] = b[(i, j)];
            }
        }
    }
    m
}

pub fn orth_element(d: &Domain, o: &OrthDescriptor) -> GroupElement {
    GroupElement {
        matrix: orth_matrix(d, o),
        factorization: Some(Factorization {
            s: 0.0,
            params: TranslationParams::zero(&d.shape),
            orth: o.clone(),
        }),
    }
}

/// One generator of `O(ψ)`; `continuous` marks members of the `O(u)` factor
/// that belong to a one-parameter family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthGenerator {
    pub descriptor: OrthDescriptor,
    pub continuous: bool,
}

/// Index blocks of equal ψ among the hyperbolic coordinates.
fn equal_blocks(d: &Domain) -> Vec<Vec<usize>> {
    let c = d.psi.coeffs();
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for i in 0..d.shape.x_len() {
        match blocks.last_mut() {
            Some(b) if c[b[0]] == c[i] => b.push(i),
            _ => blocks.push(vec![i]),
        }
    }
    blocks
}

/// Generators: adjacent transpositions of equal ψ-coefficients, a reflection
/// of the first parabolic axis, and rotations in adjacent parabolic planes
/// at a fixed generic angle.
pub fn orth_generators(d: &Domain) -> Vec<OrthGenerator> {
    let shape = d.shape;
    let id = OrthDescriptor::identity(&shape);
    let mut gens = Vec::new();
    for block in equal_blocks(d) {
        for w in block.windows(2) {
            let mut g = id.clone();
            g.perm.swap(w[0], w[1]);
            gens.push(OrthGenerator {
                descriptor: g,
                continuous: false,
            });
        }
    }
    let u = shape.u;
    if u >= 1 {
        let mut b = DMatrix::identity(u, u);
        b[(0, 0)] = -1.0;
        gens.push(OrthGenerator {
            descriptor: OrthDescriptor::from_parts(id.perm.clone(), &b),
            continuous: false,
        });
    }
    let angle = 1.0f64;
    for k in 0..u.saturating_sub(1) {
        let mut b = DMatrix::identity(u, u);
        b[(k, k)] = angle.cos();
        b[(k, k + 1)] = -angle.sin();
        b[(k + 1, k)] = angle.sin();
        b[(k + 1, k + 1)] = angle.cos();
        gens.push(OrthGenerator {
            descriptor: OrthDescriptor::from_parts(id.perm.clone(), &b),
            continuous: true,
        });
    }
    gens
}

/// `true` when `O(ψ)` is finite, i.e. `u ≤ 1`.
pub fn orth_is_finite(d: &Domain) -> bool {
    d.shape.u <= 1
}

/// Every element of `S(ψ)` as a permutation vector.
pub fn s_psi(d: &Domain) -> Vec<Vec<usize>> {
    let blocks = equal_blocks(d);
    let per_block: Vec<Vec<Vec<usize>>> = blocks
        .iter()
        .map(|b| b.iter().copied().permutations(b.len()).collect())
        .collect();
    if per_block.is_empty() {
        return vec![vec![]];
    }
    per_block
        .into_iter()
        .multi_cartesian_product()
        .map(|choice| choice.into_iter().flatten().collect())
        .collect()
}

/// All elements of a finite `O(ψ)`; `None` when `u ≥ 2`.
pub fn orth_elements(d: &Domain) -> Option<Vec<OrthDescriptor>> {
    if !orth_is_finite(d) {
        return None;
    }
    let u = d.shape.u;
    let signs: Vec<f64> = if u == 1 { vec![1.0, -1.0] } else { vec![1.0] };
    let mut out = Vec::new();
    for perm in s_psi(d) {
        for &sg in &signs {
            let b = DMatrix::from_element(u, u, sg);
            out.push(OrthDescriptor::from_parts(perm.clone(), &b));
        }
    }
    Some(out)
}

/// Haar-random element: uniform permutation in `S(ψ)` and a Haar
/// orthogonal block from the QR factorization of a Gaussian matrix.
pub fn sample_orth<R: Rng + ?Sized>(d: &Domain, rng: &mut R) -> OrthDescriptor {
    let perms = s_psi(d);
    let perm = perms[rng.random_range(0..perms.len())].clone();
    let u = d.shape.u;
    let b = if u == 0 {
        DMatrix::zeros(0, 0)
    } else {
        let g = DMatrix::<f64>::from_fn(u, u, |_, _| rng.sample(StandardNormal));
        let qr = g.qr();
        let (mut q, r) = (qr.q(), qr.r());
        for j in 0..u {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        q
    };
    OrthDescriptor::from_parts(perm, &b)
}

/// Linear action of `o` on chart parameters by conjugation:
/// `o · m*(p) · o⁻¹ = m*(A p)`.
pub fn orth_param_action(d: &Domain, o: &OrthDescriptor) -> DMatrix<f64> {
    let DomainShape { n, t, r, u } = d.shape;
    let dim = r + u;
    let mut a = DMatrix::zeros(dim, dim);
    if t == n {
        let psi = d.psi.coeffs();
        // Chart coordinate i of the image is X_{perm[i]}; the lift expresses
        // X_{n-1} through the first n-1 coordinates.
        for i in 0..r {
            let j = o.perm[i];
            if j < n - 1 {
                a[(i, j)] += 1.0;
            } else {
                for k in 0..n - 1 {
                    a[(i, k)] -= psi[k] / psi[n - 1];
                }
            }
        }
    } else {
        for i in 0..t {
            a[(i, o.perm[i])] = 1.0;
        }
        let b = o.block_matrix();
        for i in 0..u {
            for j in 0..u {
                a[(r + i, r + j)] = b[(i, j)];
            }
        }
    }
    a
}

/// Normalize an affine matrix so the corner entry is 1.
fn normalize_affine(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = g.nrows() - 1;
    let c = g[(n, n)];
    let scale = g.amax();
    if c.abs() <= 1e-12 * scale || (0..n).any(|j| g[(n, j)].abs() > 1e-10 * scale) {
        return Err(CuspError::NotInGroup(f64::NAN));
    }
    Ok(g / c)
}

/// Unique factorization `g = Φ_s · m*(X, Y) · o`.
pub fn semidirect_decompose(d: &Domain, g: &DMatrix<f64>) -> Result<Factorization> {
    let n = d.n();
    if g.nrows() != n + 1 || g.ncols() != n + 1 {
        return Err(CuspError::DimensionMismatch {
            expected: n + 1,
            got: g.nrows(),
        });
    }
    let gn = normalize_affine(g)?;
    let shape = d.shape;
    let b = d.basepoint();
    let q = apply_affine(&gn, &b);
    if !d.in_chart(&q) {
        return Err(CuspError::NotInGroup(f64::NAN));
    }
    let s = d.h(&q);
    let flow_inv = radial_flow(d, -s).matrix;
    let level0 = apply_affine(&flow_inv, &q);
    let x: Vec<f64> = level0[shape.x_range()].iter().map(|v| v.ln()).collect();
    let y = level0[shape.y_range()].to_vec();
    let params = TranslationParams { x, y };
    let m_inv = enlarged_matrix(&shape, &neg(&params.x), d.psi.apply(&params.x), &neg(&params.y));
    let o_mat = &m_inv * &flow_inv * &gn;
    let orth = read_orth(d, &o_mat);
    let rebuilt =
        radial_flow(d, s).matrix * translation(d, &params)?.matrix * orth_matrix(d, &orth);
    let residual = (&rebuilt - &gn).amax() / gn.amax().max(1.0);
    if residual > 1e-8 {
        return Err(CuspError::NotInGroup(residual));
    }
    Ok(Factorization { s, params, orth })
}

fn neg(v: &[f64]) -> Vec<f64> {
    v.iter().map(|a| -a).collect()
}

/// Nearest `O(ψ)` descriptor to a matrix that should be one; the caller
/// measures the residual.
fn read_orth(d: &Domain, o: &DMatrix<f64>) -> OrthDescriptor {
    let shape = d.shape;
    let psi = d.psi.coeffs();
    let xl = shape.x_len();
    let mut perm: Vec<usize> = (0..xl)
        .map(|i| {
            (0..xl)
                .max_by(|&a, &b| o[(i, a)].partial_cmp(&o[(i, b)]).unwrap())
                .unwrap()
        })
        .collect();
    let valid = perm.iter().sorted().copied().eq(0..xl)
        && perm.iter().enumerate().all(|(i, &j)| psi[i] == psi[j]);
    if !valid {
        perm = (0..xl).collect();
    }
    let u = shape.u;
    let y0 = shape.t + 1;
    let b = DMatrix::from_fn(u, u, |i, j| o[(y0 + i, y0 + j)]);
    OrthDescriptor::from_parts(perm, &b)
}

/// Elliptic / parabolic / hyperbolic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ElementClass {
    Elliptic,
    Parabolic { standard: bool },
    Hyperbolic,
}

/// Eigenvalue cluster tolerance relative to the spectral radius; defective
/// blocks of size 3 split by about `ε^{1/3}`.
const CLUSTER_TOL: f64 = 1e-4;

/// Jordan block sizes per eigenvalue cluster.
pub fn jordan_structure(g: &DMatrix<f64>) -> Vec<(Complex<f64>, Vec<usize>)> {
    let n = g.nrows();
    let eig = g.complex_eigenvalues();
    let rho = eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut clusters: Vec<Vec<Complex<f64>>> = Vec::new();
    for &z in eig.iter() {
        match clusters
            .iter_mut()
            .find(|c| (c[0] - z).norm() <= CLUSTER_TOL * rho.max(1e-300))
        {
            Some(c) => c.push(z),
            None => clusters.push(vec![z]),
        }
    }
    let gc: DMatrix<Complex<f64>> = g.map(|v| Complex::new(v, 0.0));
    let cutoff = 1e-8 * g.norm();
    clusters
        .into_iter()
        .map(|c| {
            let m = c.len();
            let lam = c.iter().sum::<Complex<f64>>() / m as f64;
            let nmat = &gc - DMatrix::<Complex<f64>>::identity(n, n) * lam;
            let mut ranks = vec![n];
            let mut pow = DMatrix::<Complex<f64>>::identity(n, n);
            for _ in 0..m {
                pow = &pow * &nmat;
                let sv = pow.clone().svd(false, false).singular_values;
                let scale = cutoff * (1.0f64).max(pow.norm() / g.norm().max(1e-300));
                ranks.push(sv.iter().filter(|&&s| s > scale).count());
            }
            // blocks of size >= k: ranks[k-1] - ranks[k]
            let ge: Vec<usize> = (1..=m).map(|k| ranks[k - 1].saturating_sub(ranks[k])).collect();
            let mut sizes = Vec::new();
            for k in 1..=m {
                let next = if k < m { ge[k] } else { 0 };
                for _ in 0..ge[k - 1].saturating_sub(next) {
                    sizes.push(k);
                }
            }
            (lam, sizes)
        })
        .collect()
}

/// Classify a projective transformation by its spectrum and Jordan form.
pub fn classify_element(g: &DMatrix<f64>) -> Result<ElementClass> {
    if !g.is_square() || is_singular(g) {
        return Err(CuspError::Singular);
    }
    let n1 = g.nrows() as f64;
    let det = g.determinant();
    let gn = g / det.abs().powf(1.0 / n1);
    let eig = gn.complex_eigenvalues();
    let logs: Vec<f64> = eig.iter().map(|z| z.norm().ln()).collect();
    let spread = logs.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
        - logs.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if spread > CLUSTER_TOL {
        return Ok(ElementClass::Hyperbolic);
    }
    let structure = jordan_structure(&gn);
    let all_sizes: Vec<usize> = structure.iter().flat_map(|(_, s)| s.clone()).collect();
    if all_sizes.iter().all(|&s| s == 1) {
        return Ok(ElementClass::Elliptic);
    }
    let threes = all_sizes.iter().filter(|&&s| s == 3).count();
    let standard = threes == 1 && all_sizes.iter().all(|&s| s == 1 || s == 3);
    Ok(ElementClass::Parabolic { standard })
}

/// Membership in the distinguished subgroups plus the weight values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupFlags {
    pub in_t1: bool,
    pub in_t2: bool,
    pub in_p: bool,
    /// Log-diagonal value of each of the `t + 1` weights.
    pub weights: Vec<f64>,
}

/// `T₁` = diagonalizable elements, `T₂` = Jordan blocks of size ≤ 2,
/// `P` = unipotent elements.
pub fn subgroup_membership(d: &Domain, g: &DMatrix<f64>) -> Result<SubgroupFlags> {
    let f = semidirect_decompose(d, g)?;
    let tol = 1e-9;
    if f.s.abs() > tol || !f.orth.is_identity(tol) {
        return Err(CuspError::NotInGroup(f.s.abs()));
    }
    let x_zero = f.params.x.iter().all(|v| v.abs() <= tol);
    let y_zero = f.params.y.iter().all(|v| v.abs() <= tol);
    let diag_ok = d.shape.hyperbolic() || d.psi.apply(&f.params.x).abs() <= tol;
    let mut weights = f.params.x.clone();
    weights.push(0.0);
    Ok(SubgroupFlags {
        in_t1: y_zero && diag_ok,
        in_t2: y_zero,
        in_p: x_zero,
        weights,
    })
}

/// `θ(x, z, y) = (x, z + ψ(log x), y)`; flattens `∂Ω` onto `z = ‖y‖²/2`.
pub fn straighten(d: &Domain, p: &[f64]) -> Result<Vec<f64>> {
    let shape = d.shape;
    if shape.hyperbolic() {
        return Err(CuspError::UnsupportedBranch);
    }
    if p.len() != shape.n {
        return Err(CuspError::DimensionMismatch {
            expected: shape.n,
            got: p.len(),
        });
    }
    if !d.in_chart(p) {
        return Err(CuspError::OutsideChart);
    }
    let logs: Vec<f64> = p[shape.x_range()].iter().map(|v| v.ln()).collect();
    let mut out = p.to_vec();
    out[shape.t] += d.psi.apply(&logs);
    Ok(out)
}

/// Random element of `G(ψ)`: translation with Gaussian parameters of the
/// given scale, composed with a Haar-random `O(ψ)` element.
pub fn sample_group_element<R: Rng + ?Sized>(d: &Domain, scale: f64, rng: &mut R) -> GroupElement {
    let r = d.shape.r;
    let dim = r + d.shape.u;
    let chart: Vec<f64> = (0..dim)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let params = TranslationParams::from_chart(d, &chart).expect("dimensions match");
    let o = sample_orth(d, rng);
    let m = translation(d, &params).expect("kernel lift");
    GroupElement {
        matrix: &m.matrix * orth_matrix(d, &o),
        factorization: Some(Factorization { s: 0.0, params, orth: o }),
    }
}

/// Apply a matrix to an affine point (column-vector convention).
pub fn act(g: &DMatrix<f64>, p: &[f64]) -> Vec<f64> {
    apply_affine(g, p)
}

/// Pushforward of a tangent vector `v` at `p` under the affine matrix `g`.
pub fn push_vector(g: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let vv = DVector::from_column_slice(v);
    let lin = g.view((0, 0), (n, n)) * vv / g[(n, n)];
    lin.as_slice().to_vec()
}
