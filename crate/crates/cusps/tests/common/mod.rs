#![allow(dead_code)]

use cusps::domain::{Domain, WeylVector};
use rand::Rng;

/// Random ψ in `n` coordinates with exactly `t` nonzero entries.
pub fn random_psi<R: Rng + ?Sized>(rng: &mut R, n: usize, t: usize) -> WeylVector {
    let mut c: Vec<f64> = (0..t).map(|_| rng.random_range(0.2..3.0)).collect();
    c.sort_by(|a, b| b.partial_cmp(a).unwrap());
    c.resize(n, 0.0);
    WeylVector::new(c).unwrap()
}

/// The four type regimes: `t = 0`, `0 < t < n-1`, `t = n-1`, `t = n`.
/// The middle regime collapses into its neighbours for `n = 2`.
pub fn regime_t<R: Rng + ?Sized>(rng: &mut R, n: usize, regime: usize) -> usize {
    match regime {
        0 => 0,
        1 if n > 2 => rng.random_range(1..n - 1),
        1 => 1,
        2 => n - 1,
        _ => n,
    }
}

pub fn random_domain<R: Rng + ?Sized>(rng: &mut R, n: usize, regime: usize) -> Domain {
    let t = regime_t(rng, n, regime);
    Domain::new(random_psi(rng, n, t)).unwrap()
}

pub fn chart_dim(d: &Domain) -> usize {
    d.shape.r + d.shape.u
}

/// Random point of the horosphere `h = level`.
pub fn random_point<R: Rng + ?Sized>(rng: &mut R, d: &Domain, spread: f64, level: f64) -> Vec<f64> {
    let c: Vec<f64> = (0..chart_dim(d)).map(|_| rng.random_range(-spread..spread)).collect();
    d.horosphere_point(&c[..d.shape.r], &c[d.shape.r..], level).unwrap()
}

pub fn random_interior<R: Rng + ?Sized>(rng: &mut R, d: &Domain) -> Vec<f64> {
    let level = -rng.random_range(0.1..2.0);
    random_point(rng, d, 1.0, level)
}

/// Every `(n, t)` combination for `2 <= n <= max_n`.
pub fn all_shapes(max_n: usize) -> Vec<(usize, usize)> {
    (2..=max_n).flat_map(|n| (0..=n).map(move |t| (n, t))).collect()
}

pub mod strategies {
    use cusps::domain::{Domain, WeylVector};
    use proptest::collection::vec;
    use proptest::prelude::*;

    /// Domains with `2 <= n <= max_n` and every type `0 <= t <= n`.
    pub fn domain(max_n: usize) -> impl Strategy<Value = Domain> {
        (2..=max_n)
            .prop_flat_map(|n| (0..=n, vec(0.2f64..3.0, n)))
            .prop_map(|(t, mut c)| {
                c[..t].sort_by(|a, b| b.partial_cmp(a).unwrap());
                c[t..].iter_mut().for_each(|v| *v = 0.0);
                Domain::new(WeylVector::new(c).unwrap()).unwrap()
            })
    }

    /// A domain with chart parameters of the given spread.
    pub fn domain_with_chart(max_n: usize, spread: f64) -> impl Strategy<Value = (Domain, Vec<f64>)> {
        domain(max_n).prop_flat_map(move |d| {
            let k = d.shape.r + d.shape.u;
            (Just(d), vec(-spread..spread, k))
        })
    }

    /// A domain with an interior point at a level in `[-2, -0.05]`.
    pub fn interior_point(max_n: usize) -> impl Strategy<Value = (Domain, Vec<f64>)> {
        (domain_with_chart(max_n, 1.5), -2.0f64..-0.05).prop_map(|((d, c), level)| {
            let p = d.horosphere_point(&c[..d.shape.r], &c[d.shape.r..], level).unwrap();
            (d, p)
        })
    }

    /// A domain with two interior points.
    pub fn interior_pair(max_n: usize) -> impl Strategy<Value = (Domain, Vec<f64>, Vec<f64>)> {
        domain(max_n).prop_flat_map(|d| {
            let k = d.shape.r + d.shape.u;
            (Just(d), vec(-1.5f64..1.5, 2 * k), -2.0f64..-0.05, -2.0f64..-0.05)
        })
        .prop_map(|(d, c, l1, l2)| {
            let (k, r) = (c.len() / 2, d.shape.r);
            let p = d.horosphere_point(&c[..r], &c[r..k], l1).unwrap();
            let q = d.horosphere_point(&c[k..k + r], &c[k + r..], l2).unwrap();
            (d, p, q)
        })
    }
}
