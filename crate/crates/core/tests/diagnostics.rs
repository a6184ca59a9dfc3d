mod common;

use acmh::diagnostics::{
    censored_score, crps_bernoulli, iact, iact_detail, lpds, sq_jump, Kde, Region, LOG_DENSITY_FLOOR,
};
use acmh::targets::{msn_target, Target};
use common::*;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

fn normals(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| r.sample::<f64, _>(StandardNormal)).collect()
}

fn ar1(n: usize, phi: f64, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let innov = (1.0 - phi * phi).sqrt();
    let mut x = r.sample::<f64, _>(StandardNormal);
    (0..n)
        .map(|_| {
            x = phi * x + innov * r.sample::<f64, _>(StandardNormal);
            x
        })
        .collect()
}

#[test]
fn iid_normal_has_unit_iact() {
    let v = iact(&normals(100_000, 40)).unwrap();
    assert!((v - 1.0).abs() <= 0.1, "iact {v}");
}

#[test]
fn ar1_iact_matches_the_analytic_value() {
    let v = iact(&ar1(1_000_000, 0.5, 41)).unwrap();
    assert!((v - 3.0).abs() <= 0.15, "iact {v}");
}

#[test]
fn alternating_series_has_iact_below_one() {
    let mut r = rng(42);
    let s: Vec<f64> =
        (0..10_000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 } + 1e-3 * r.sample::<f64, _>(StandardNormal)).collect();
    let est = iact_detail(&s).unwrap();
    assert!(est.value < 1.0, "iact {}", est.value);
}

#[test]
fn lag_window_is_capped() {
    let est = iact_detail(&ar1(200_000, 0.999, 43)).unwrap();
    assert!(est.lags_used <= 1000);
}

#[test]
fn squared_jump_values() {
    let s: Vec<f64> = normals(100_000, 44).iter().map(|v| 2.0 * v).collect();
    let j = sq_jump(&s).unwrap();
    assert!((j / 8.0 - 1.0).abs() < 0.05, "jump {j}");
    let j = sq_jump(&ar1(100_000, 0.5, 45)).unwrap();
    assert!((j - 1.0).abs() < 0.05, "jump {j}");
}

#[test]
fn kde_is_consistent_at_the_mode() {
    let s = normals(100_000, 46);
    let k = Kde::silverman(&s).unwrap();
    let truth = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    assert!((k.ln_pdf(0.0).exp() / truth - 1.0).abs() < 0.05);
}

#[test]
fn kde_window_matches_brute_force() {
    let s = normals(5000, 47);
    let k = Kde::silverman(&s).unwrap();
    let h = k.bandwidth();
    for x in [-7.0, -1.3, 0.0, 0.4, 2.2, 9.0] {
        let terms: Vec<f64> = s.iter().map(|v| -0.5 * ((x - v) / h).powi(2)).collect();
        let brute =
            acmh::special::logsumexp(&terms) - 0.5 * (2.0 * std::f64::consts::PI).ln() - h.ln() - (s.len() as f64).ln();
        assert!((k.ln_pdf(x) - brute).abs() < 1e-12, "x = {x}");
    }
}

#[test]
fn lpds_of_exact_normal_draws() {
    let chain = DMatrix::from_vec(100_000, 1, normals(100_000, 48));
    let test = DMatrix::from_vec(5000, 1, normals(5000, 49));
    let v = lpds(&chain, &test).unwrap().value;
    let expected = -0.5 * (1.0 + (2.0 * std::f64::consts::PI).ln());
    assert!((v - expected).abs() < 0.02, "lpds {v}");
    assert_eq!(lpds(&chain, &test.clone()).unwrap().value, v);
}

#[test]
fn chain_stuck_in_one_mode_scores_badly() {
    let target = msn_target(2).unwrap();
    let mut r = rng(50);
    let mut stuck = Vec::new();
    while stuck.len() < 20_000 {
        let x = target.sample_exact(&mut r).unwrap();
        if x.sum() < 0.0 {
            stuck.push(x);
        }
    }
    let chain = DMatrix::from_fn(stuck.len(), 2, |i, j| stuck[i][j]);
    let test_rows: Vec<_> = (0..2000).map(|_| target.sample_exact(&mut r).unwrap()).collect();
    let test = DMatrix::from_fn(2000, 2, |i, j| test_rows[i][j]);
    let res = lpds(&chain, &test).unwrap();
    assert!(res.value <= -10.0, "lpds {}", res.value);
    assert!(res.value >= LOG_DENSITY_FLOOR);
}

#[test]
fn lpds_needs_a_hundred_test_points() {
    let chain = DMatrix::from_vec(1000, 1, normals(1000, 51));
    let test = DMatrix::from_vec(99, 1, normals(99, 52));
    assert!(lpds(&chain, &test).is_err());
}

#[test]
fn censored_score_with_tail_region() {
    let s = normals(20_000, 53);
    let k = Kde::silverman(&s).unwrap();
    let data = normals(1000, 54);
    let region = Region::tails(2.0);
    let score = censored_score(&k, &data, &region).unwrap();
    let outside_mass = k.mass(-2.0, 2.0);
    let expected = data.iter().map(|x| if x.abs() > 2.0 { k.ln_pdf(*x) } else { outside_mass.ln() }).sum::<f64>()
        / data.len() as f64;
    assert!((score - expected).abs() < 1e-9);
}

#[test]
fn crps_identities() {
    assert_eq!(crps_bernoulli(0.0, false).unwrap(), 0.0);
    assert_eq!(crps_bernoulli(0.5, true).unwrap(), 0.25);
    assert_eq!(crps_bernoulli(1.0, false).unwrap(), 1.0);
    let mut r = rng(55);
    for _ in 0..1000 {
        let mu: f64 = r.random();
        let v = crps_bernoulli(mu, r.random()).unwrap();
        assert!((0.0..=1.0).contains(&v));
    }
}
