//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion outside the known-unattainable set fails.

mod common;

use std::time::{Duration, Instant};

use cusps::classification::{
    are_conjugate, are_marked_conjugate, dim2_normal_form, dim2_teich, dim2_teich_inverse,
    dim3_family, lattice_invariants, recover_psi, theta_map, AnisotropyCoset, Dim2Family,
    Dim2Params, MarkedLattice,
};
use cusps::domain::{Domain, WeylVector};
use cusps::groups::{
    orth_element, orth_elements, orth_generators, orth_param_action, radial_flow,
    sample_group_element, translation, TranslationParams,
};
use cusps::metrics::{
    beta_form, chart_pullback, euclidean_chart, flow_to_depth, flowline_distance,
    hilbert_distance, hilbert_norm, second_fundamental_form, shrink_profile,
    stated_horosphere_distance, ChartCoords,
};
use cusps::volume::{cusp_volume, default_tail_grid, finiteness_verdict, Finiteness, VolumeOptions};
use common::{chart_dim, random_domain, random_interior, random_point, random_psi};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn w(c: &[f64]) -> WeylVector {
    WeylVector::new(c.to_vec()).unwrap()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn c1_flow_equivariance() -> Outcome {
    let mut rng = rng(1);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let n = 2 + i % 5;
        let d = random_domain(&mut rng, n, (i / 5) % 4);
        let p = random_interior(&mut rng, &d);
        let s = rng.random_range(-3.0..3.0);
        let q = radial_flow(&d, s).act(&p);
        worst = worst.max((d.h(&q) - d.h(&p) - s).abs());
    }
    outcome(worst < 1e-10, format!("max |h(Φ_s p) - h(p) - s| = {worst:.2e}"))
}

fn c2_group_invariance() -> Outcome {
    let mut rng = rng(2);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let n = 2 + i % 5;
        let d = random_domain(&mut rng, n, (i / 5) % 4);
        let p = random_interior(&mut rng, &d);
        let g = sample_group_element(&d, 1.0, &mut rng);
        worst = worst.max((d.h(&g.act(&p)) - d.h(&p)).abs());
    }
    outcome(worst < 1e-9, format!("max |h(g p) - h(p)| = {worst:.2e}"))
}

const DEPTHS: [(f64, f64); 10] = [
    (0.25, 0.5),
    (0.5, 1.0),
    (1.0, 2.0),
    (1.0, 4.0),
    (2.0, 8.0),
    (0.3, 3.0),
    (4.0, 16.0),
    (0.1, 10.0),
    (5.0, 6.0),
    (8.0, 20.0),
];

/// Largest gaps to the stated and to the exact flowline law over a family.
fn flowline_gaps(psis: &[&[f64]]) -> (f64, f64) {
    let mut stated = 0.0f64;
    let mut exact = 0.0f64;
    for c in psis {
        let d = Domain::new(w(c)).unwrap();
        let b = d.basepoint();
        for (r, s) in DEPTHS {
            let dist = hilbert_distance(&d, &flow_to_depth(&d, &b, r), &flow_to_depth(&d, &b, s)).unwrap();
            stated = stated.max((dist - stated_horosphere_distance(&d, r, s)).abs());
            exact = exact.max((dist - flowline_distance(&d, r, s)).abs());
        }
    }
    (stated, exact)
}

fn c3a_distance_law_parabolic() -> Outcome {
    let (stated, _) = flowline_gaps(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0], &[2.0, 1.0, 0.0]]);
    outcome(stated < 1e-8, format!("t<n, 50 cases, max gap to ½|log(r/s)| = {stated:.2e}"))
}

fn c3b_distance_law_hyperbolic() -> Outcome {
    let (stated, exact) = flowline_gaps(&[&[1.0, 1.0], &[2.0, 1.0], &[1.0, 1.0, 1.0], &[3.0, 2.0, 1.0], &[1.0, 0.5, 0.25]]);
    outcome(
        stated < 1e-8,
        format!(
            "t=n, 50 cases, max gap to ½|r-s| = {stated:.2e}; gap to ½|log((e^s-1)/(e^r-1))| = {exact:.2e} [known-unattainable]"
        ),
    )
}

/// Derivative of the affine action of `g`.
fn linear_part(g: &DMatrix<f64>) -> DMatrix<f64> {
    let n = g.nrows() - 1;
    g.view((0, 0), (n, n)) / g[(n, n)]
}

fn rel_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

fn c4_beta_flatness() -> Outcome {
    let mut rng = rng(4);
    let mut flat = 0.0f64;
    let mut invariant = 0.0f64;
    for i in 0..20 {
        let n = 2 + i % 4;
        let d = random_domain(&mut rng, n, i % 4);
        let chart = euclidean_chart(&d).unwrap();
        for _ in 0..100 {
            let params: Vec<f64> = (0..chart_dim(&d)).map(|_| rng.random_range(-1.5..1.5)).collect();
            let s = rng.random_range(0.05..4.0);
            let c = ChartCoords::from_params(&d.shape, &params, s);
            flat = flat.max(rel_gap(&chart_pullback(&d, &c).unwrap(), &chart.gram));
        }
        let p = random_interior(&mut rng, &d);
        let b = beta_form(&d, &p).unwrap().beta_gram;
        let mut gens: Vec<DMatrix<f64>> = orth_generators(&d)
            .iter()
            .map(|g| orth_element(&d, &g.descriptor).matrix)
            .collect();
        for k in 0..chart_dim(&d) {
            let mut e = vec![0.0; chart_dim(&d)];
            e[k] = 1.0;
            let params = TranslationParams::from_chart(&d, &e).unwrap();
            gens.push(translation(&d, &params).unwrap().matrix);
        }
        gens.push(sample_group_element(&d, 1.0, &mut rng).matrix);
        for g in gens {
            let gp = cusps::groups::act(&g, &p);
            let bg = beta_form(&d, &gp).unwrap().beta_gram;
            let dg = linear_part(&g);
            invariant = invariant.max(rel_gap(&(dg.transpose() * bg * &dg), &b));
        }
    }
    outcome(
        flat < 1e-8 && invariant < 1e-8,
        format!("chart Gram drift {flat:.2e}, generator drift {invariant:.2e}"),
    )
}

fn c5_ii_conformality() -> Outcome {
    let mut rng = rng(5);
    let mut worst = 0.0f64;
    for i in 0..200 {
        let n = 2 + i % 4;
        let d = random_domain(&mut rng, n, (i / 4) % 4);
        let q = random_point(&mut rng, &d, 1.5, 0.0);
        let f = second_fundamental_form(&d, &q).unwrap();
        worst = worst.max(rel_gap(&(&f.ii * f.lambda), &f.beta_tangent));
    }
    outcome(worst < 1e-8, format!("max ‖β|T - λ·II‖ = {worst:.2e}"))
}

fn c6_parabolic_decay() -> Outcome {
    let grid: Vec<f64> = (0..=16).map(|i| 10f64.powf(2.0 + i as f64 / 4.0)).collect();
    let mut slopes = Vec::new();
    let mut pass = true;
    for c in [&[0.0, 0.0][..], &[1.0, 0.0, 0.0][..]] {
        let d = Domain::new(w(c)).unwrap();
        let (r, u) = (d.shape.r, d.shape.u);
        let p = d.horosphere_point(&vec![0.0; r], &vec![0.0; u], 0.0).unwrap();
        let mut y = vec![0.0; u];
        y[0] = 1.0;
        let q = d.horosphere_point(&vec![0.0; r], &y, 0.0).unwrap();
        let prof = shrink_profile(&d, &p, &q, &grid).unwrap();
        pass &= (prof.slope + 1.0).abs() <= 0.05 && prof.parabolic;
        slopes.push(prof.slope);
    }
    let d = Domain::new(w(&[1.0, 0.0, 0.0])).unwrap();
    let p = d.horosphere_point(&[0.0], &[0.0], 0.0).unwrap();
    let mut drifts = Vec::new();
    for (x, y) in [(1.0, 0.0), (0.5, 0.7), (-1.2, 0.3)] {
        let q = d.horosphere_point(&[x], &[y], 0.0).unwrap();
        let prof = shrink_profile(&d, &p, &q, &grid).unwrap();
        let n = prof.rows.len();
        let (a, b) = (prof.rows[n - 5].f, prof.rows[n - 1].f);
        let drift = (b - a).abs() / b;
        pass &= b > 0.0 && drift < 0.01 && !prof.parabolic;
        drifts.push(drift);
    }
    outcome(
        pass,
        format!(
            "parabolic slopes {:.4}, {:.4}; non-parabolic last-decade drift max {:.2e}",
            slopes[0],
            slopes[1],
            drifts.iter().cloned().fold(0.0, f64::max)
        ),
    )
}

fn unit_lattice(psi: &WeylVector) -> MarkedLattice {
    let k = psi.n() - 1;
    MarkedLattice::from_chart_basis(psi, &DMatrix::identity(k, k)).unwrap()
}

fn c7_volume_verdict() -> Outcome {
    let grid = default_tail_grid();
    let finite = Domain::new(w(&[1.0, 0.0, 0.0])).unwrap();
    let vf = finiteness_verdict(&finite, Some((&grid, None))).unwrap();
    let fit_f = vf.numeric.unwrap();
    let infinite = Domain::new(w(&[1.0, 1.0, 0.0])).unwrap();
    let vi = finiteness_verdict(&infinite, Some((&grid, None))).unwrap();
    let fit_i = vi.numeric.unwrap();

    let l = unit_lattice(&infinite.psi);
    let opts = VolumeOptions::default();
    let vols: Vec<f64> = [4.0, 8.0, 16.0]
        .iter()
        .map(|&t| cusp_volume(&l, t, &opts).unwrap().value)
        .collect();
    let ratios = [vols[1] / vols[0], vols[2] / vols[1]];
    let pass = vf.analytic == Finiteness::Finite
        && (fit_f.exponent_t + 0.5).abs() <= 0.05
        && vi.analytic == Finiteness::Infinite
        && fit_i.kappa_floor > 0.0
        && ratios.iter().all(|r| (r - 2.0).abs() <= 0.2);
    outcome(
        pass,
        format!(
            "(1,0,0) κ exponent {:.4}; (1,1,0) κ floor {:.4}, vol ratios {:.4}, {:.4}",
            fit_f.exponent_t, fit_i.kappa_floor, ratios[0], ratios[1]
        ),
    )
}

fn c8_area_law() -> Outcome {
    let psi = WeylVector::zero(2);
    let d = Domain::new(psi.clone()).unwrap();
    // Length of the generator loop on H_1 by the trapezoid rule.
    let m = 2000;
    let speed = |y: f64| {
        let p = d.horosphere_point(&[], &[y], -1.0).unwrap();
        hilbert_norm(&d, &p, &[y, 1.0]).unwrap()
    };
    let ell = (0..=m)
        .map(|i| {
            let wt = if i == 0 || i == m { 0.5 } else { 1.0 };
            wt * speed(i as f64 / m as f64)
        })
        .sum::<f64>()
        / m as f64;
    let l = MarkedLattice::from_chart_basis(&psi, &DMatrix::from_element(1, 1, 1.0)).unwrap();
    let mut worst = 0.0f64;
    for t in [1.0, 2.0, 4.0] {
        let v = cusp_volume(&l, t, &VolumeOptions::default()).unwrap().value;
        let expect = 1.0 - (-t as f64).exp();
        worst = worst.max(((v / ell) / expect - 1.0).abs());
    }
    outcome(worst <= 0.02, format!("ℓ = {ell:.6}, max relative error {worst:.2e}"))
}

fn c9_dim2() -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..20 {
        for j in 0..20 {
            let y1 = 3.0 * i as f64 / 19.0;
            let y2 = y1 + 3.0 * j as f64 / 19.0;
            let back = dim2_teich_inverse(&dim2_teich(&Dim2Params::new(y1, y2).unwrap()).unwrap()).unwrap();
            worst = worst.max((back.y1 - y1).abs()).max((back.y2 - y2).abs());
        }
    }
    let mut rng = rng(9);
    let mut wrong = 0;
    for i in 0..300 {
        let scale = rng.random_range(-1.0..1.0f64).exp();
        let (core, expect) = match i % 3 {
            0 => {
                let a: f64 = rng.random_range(0.3..2.0);
                let b = a + rng.random_range(0.3..2.0);
                (
                    DMatrix::from_diagonal(&DVector::from_vec(vec![b.exp(), a.exp(), 1.0])),
                    0,
                )
            }
            1 => {
                let a: f64 = rng.random_range(0.3..2.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
                (
                    DMatrix::from_row_slice(3, 3, &[a.exp(), 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]),
                    1,
                )
            }
            _ => (
                DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]),
                2,
            ),
        };
        let p = loop {
            let p = DMatrix::<f64>::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
            if p.determinant().abs() > 0.2 {
                break p;
            }
        };
        let g = &p * core * p.clone().try_inverse().unwrap() * scale;
        let got = match dim2_normal_form(&g) {
            Ok(Dim2Family::Diagonal { .. }) => 0,
            Ok(Dim2Family::Mixed { .. }) => 1,
            Ok(Dim2Family::Unipotent) => 2,
            Err(_) => 3,
        };
        if got != expect {
            wrong += 1;
        }
    }
    outcome(
        worst < 1e-9 && wrong == 0,
        format!("round-trip error {worst:.2e}; mislabelled {wrong}/300"),
    )
}

fn random_orthogonal<R: Rng>(rng: &mut R) -> DMatrix<f64> {
    let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let mut m = DMatrix::from_row_slice(2, 2, &[a.cos(), -a.sin(), a.sin(), a.cos()]);
    if rng.random::<bool>() {
        m.column_mut(1).neg_mut();
    }
    m
}

fn random_basis<R: Rng>(rng: &mut R) -> DMatrix<f64> {
    loop {
        let m = DMatrix::<f64>::from_fn(2, 2, |_, _| rng.random_range(-2.0..2.0));
        if m.determinant().abs() > 0.5 {
            return m;
        }
    }
}

fn c10_classification() -> Outcome {
    let mut rng = rng(10);
    let mut failures = 0usize;
    let mut checks = 0usize;
    for c in [[3.0, 2.0, 1.0], [1.0, 1.0, 1.0], [1.0, 0.0, 0.0]] {
        let psi = w(&c);
        let d = Domain::new(psi.clone()).unwrap();
        let chart = euclidean_chart(&d).unwrap();
        let e = chart.embed.clone();
        let e_inv = e.clone().try_inverse().unwrap();
        let orth_e: Vec<DMatrix<f64>> = orth_elements(&d)
            .unwrap()
            .iter()
            .map(|o| &e * orth_param_action(&d, o) * &e_inv)
            .collect();
        let same_coset = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
            orth_e.iter().any(|o| (b - a * o).amax() < 1e-8)
        };
        for _ in 0..100 {
            let m = random_basis(&mut rng);
            let l = MarkedLattice::from_chart_basis(&psi, &m).unwrap();
            let a = random_orthogonal(&mut rng);
            let base = theta_map(&l, &AnisotropyCoset::new(a.clone()).unwrap()).unwrap();
            for o in &orth_e {
                let moved = theta_map(&l, &AnisotropyCoset::new(&a * o).unwrap()).unwrap();
                checks += 1;
                if !(are_conjugate(&base, &moved).unwrap() && are_marked_conjugate(&base, &moved).unwrap()) {
                    failures += 1;
                }
            }
            // Same marked class via an isometric re-embedding, or a different
            // one via a shear; paired with the same, a moved or a fresh coset.
            let rot = random_orthogonal(&mut rng);
            let same_class = rng.random::<bool>();
            let m2 = if same_class {
                &e_inv * (&rot * &e * &m)
            } else {
                let mut s = DMatrix::identity(2, 2);
                s[(0, 1)] = rng.random_range(0.2..0.8);
                &m * s
            };
            let l2 = MarkedLattice::from_chart_basis(&psi, &m2).unwrap();
            let o = &orth_e[rng.random_range(0..orth_e.len())];
            let a2 = match rng.random_range(0..3) {
                0 => a.clone(),
                1 => &a * o,
                _ => random_orthogonal(&mut rng),
            };
            let other = theta_map(&l2, &AnisotropyCoset::new(a2.clone()).unwrap()).unwrap();
            let g1 = lattice_invariants(&l).unwrap().gram;
            let g2 = lattice_invariants(&l2).unwrap().gram;
            let classes_equal = (g1 - g2).amax() < 1e-8;
            let expect = classes_equal && same_coset(&a, &a2);
            checks += 1;
            if are_marked_conjugate(&base, &other).unwrap() != expect {
                failures += 1;
            }
        }
    }

    let mut recover_fail = 0usize;
    for i in 0..50 {
        let n = 2 + i % 3;
        let t = if i % 2 == 0 { n } else { rng.random_range(0..n) };
        let psi = random_psi(&mut rng, n, t);
        let d = Domain::new(psi.clone()).unwrap();
        let gens: Vec<DMatrix<f64>> = (0..chart_dim(&d))
            .map(|_| {
                let c: Vec<f64> = (0..chart_dim(&d)).map(|_| rng.random_range(-1.0..1.0)).collect();
                translation(&d, &TranslationParams::from_chart(&d, &c).unwrap()).unwrap().matrix
            })
            .collect();
        let ok = match recover_psi(&gens) {
            Ok(r) => {
                let scale = if psi.is_zero() { 1.0 } else { r.psi[0] / psi.coeffs()[0] };
                scale > 0.0
                    && r.psi
                        .iter()
                        .zip(psi.coeffs())
                        .all(|(a, b)| (a - scale * b).abs() < 1e-8 * scale.max(1.0))
            }
            Err(_) => false,
        };
        if !ok {
            recover_fail += 1;
        }
    }
    outcome(
        failures == 0 && recover_fail == 0,
        format!("Θ checks failed {failures}/{checks}; recover_psi failed {recover_fail}/50"),
    )
}

fn c11_dim3_tables() -> Outcome {
    let mut rng = rng(11);
    let mut worst = 0.0f64;
    for t in 0..=3 {
        for _ in 0..100 {
            let d = Domain::new(random_psi(&mut rng, 3, t)).unwrap();
            let c: Vec<f64> = (0..chart_dim(&d)).map(|_| rng.random_range(-2.0..2.0)).collect();
            let r = d.shape.r;
            let tab = dim3_family(&d, &c[..r], &c[r..]).unwrap();
            let tr = translation(&d, &TranslationParams::from_chart(&d, &c).unwrap()).unwrap();
            worst = worst.max((tab.matrix - tr.matrix).amax());
        }
    }
    outcome(worst < 1e-12, format!("max entrywise gap {worst:.2e}"))
}

struct Criterion {
    id: &'static str,
    name: &'static str,
    budget: Duration,
    /// Implemented faithfully but not attainable as stated.
    known_unattainable: bool,
    run: fn() -> Outcome,
}

fn main() {
    let secs = Duration::from_secs;
    let criteria = [
        Criterion { id: "1", name: "flow equivariance", budget: secs(5), known_unattainable: false, run: c1_flow_equivariance },
        Criterion { id: "2", name: "group invariance", budget: secs(5), known_unattainable: false, run: c2_group_invariance },
        Criterion { id: "3a", name: "horosphere distance law, t<n", budget: secs(10), known_unattainable: false, run: c3a_distance_law_parabolic },
        Criterion { id: "3b", name: "horosphere distance law, t=n", budget: secs(10), known_unattainable: true, run: c3b_distance_law_hyperbolic },
        Criterion { id: "4", name: "flatness of beta", budget: secs(30), known_unattainable: false, run: c4_beta_flatness },
        Criterion { id: "5", name: "II conformality", budget: secs(10), known_unattainable: false, run: c5_ii_conformality },
        Criterion { id: "6", name: "parabolic decay", budget: secs(30), known_unattainable: false, run: c6_parabolic_decay },
        Criterion { id: "7", name: "volume verdict corroboration", budget: secs(300), known_unattainable: false, run: c7_volume_verdict },
        Criterion { id: "8", name: "hyperbolic cusp area law", budget: secs(60), known_unattainable: false, run: c8_area_law },
        Criterion { id: "9", name: "dimension-2 Teichmüller round trip", budget: secs(10), known_unattainable: false, run: c9_dim2 },
        Criterion { id: "10", name: "classification coherence", budget: secs(30), known_unattainable: false, run: c10_classification },
        Criterion { id: "11", name: "dimension-3 tables", budget: secs(1), known_unattainable: false, run: c11_dim3_tables },
    ];
    let only = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut hard_failures = Vec::new();
    for c in &criteria {
        if only.as_deref().is_some_and(|f| f != c.id) {
            continue;
        }
        let start = Instant::now();
        let out = (c.run)();
        let elapsed = start.elapsed();
        let in_budget = elapsed <= c.budget;
        let pass = out.pass && in_budget;
        println!(
            "criterion {:>3} {} {}: {} ({:.2}s / {}s budget)",
            c.id,
            if pass { "PASS" } else { "FAIL" },
            c.name,
            out.detail,
            elapsed.as_secs_f64(),
            c.budget.as_secs()
        );
        if !pass && !c.known_unattainable {
            hard_failures.push(c.id);
        }
    }
    if !hard_failures.is_empty() {
        eprintln!("failed criteria: {}", hard_failures.join(", "));
        std::process::exit(1);
    }
}
