use acmh::fit::{fit, fit_with_init, objective, FitConfig};
use acmh::mixture_t::{responsibilities, StudentT, TMixture};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn normal_points(n: usize, center: &[f64], rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    (0..n)
        .map(|_| {
            DVector::from_iterator(
                center.len(),
                center.iter().map(|c| {
                    let e: f64 = StandardNormal.sample(rng);
                    c + e
                }),
            )
        })
        .collect()
}

fn assert_monotone_segments(trace: &[f64], starts: &[usize]) {
    let mut bounds = starts.to_vec();
    bounds.push(trace.len());
    let mut lo = 0;
    for hi in bounds {
        for w in trace[lo..hi].windows(2) {
            assert!(w[1] >= w[0] - 1e-8 * w[0].abs().max(1.0), "objective fell from {} to {}", w[0], w[1]);
        }
        lo = hi;
    }
}

#[test]
fn recovers_a_single_t() {
    let truth =
        StudentT::new(DVector::from_row_slice(&[1.0, -2.0]), DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]), 8.0)
            .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let n = 5000;
    let data: Vec<DVector<f64>> = (0..n).map(|_| truth.sample(&mut rng)).collect();
    let (m, rep) = fit(&data, &FitConfig::default(), &mut rng).unwrap();
    assert_eq!(rep.g_selected, 1, "{:?}", rep.split_merge_log);
    let c = &m.components()[0];
    // standard error of the mean: sqrt(diag(cov)/n), cov = ν/(ν-2) Σ
    for i in 0..2 {
        let se = (truth.sigma()[(i, i)] * 8.0 / 6.0 / n as f64).sqrt();
        assert!((c.mu()[i] - truth.mu()[i]).abs() < 3.0 * se, "coord {i}");
    }
    let rel = (c.sigma() - truth.sigma()).norm() / truth.sigma().norm();
    assert!(rel < 0.15, "scale error {rel}");
    assert_monotone_segments(&rep.objective_trace, &rep.segment_starts());
}

#[test]
fn separates_two_gaussians() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut data = normal_points(1500, &[-5.0, -5.0], &mut rng);
    data.extend(normal_points(1500, &[5.0, 5.0], &mut rng));
    let (m, rep) = fit(&data, &FitConfig::default(), &mut rng).unwrap();
    assert_eq!(rep.g_selected, 2, "{:?}", rep.split_merge_log);
    for w in m.weights() {
        assert!((w - 0.5).abs() < 0.05, "weight {w}");
    }
    assert_monotone_segments(&rep.objective_trace, &rep.segment_starts());
    for x in data.iter().step_by(97) {
        let r = responsibilities(x, &m).unwrap();
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn locked_component_count_is_respected() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data = normal_points(2000, &[0.0, 0.0], &mut rng);
    let cfg = FitConfig { fixed_g: Some(3), ..FitConfig::default() };
    let (m, rep) = fit(&data, &cfg, &mut rng).unwrap();
    assert_eq!(m.len(), 3);
    assert_eq!(rep.g_selected, 3);
    assert!(m.weights().iter().all(|w| *w >= cfg.weight_floor / 2.0));
    assert_monotone_segments(&rep.objective_trace, &[]);
    // warm start keeps the lock too
    let (m2, _) = fit_with_init(&data, &cfg, Some(&m), &mut rng).unwrap();
    assert_eq!(m2.len(), 3);
}

#[test]
fn refit_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut data = normal_points(400, &[-3.0, 0.0, 1.0], &mut rng);
    data.extend(normal_points(300, &[3.0, 1.0, 0.0], &mut rng));
    let a = fit(&data, &FitConfig::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap().0;
    let b = fit(&data, &FitConfig::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap().0;
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn gaussian_limit_likelihood_matches_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let d = 3;
    let n = 10_000;
    let data = normal_points(n, &vec![0.0; d], &mut rng);
    let m = TMixture::single(StudentT::new(DVector::zeros(d), DMatrix::identity(d, d), 1e7).unwrap());
    let ll = objective(&m, &data).unwrap() + acmh::fit::penalty(1, d, n);
    let expected = -(n as f64) * 0.5 * d as f64 * (1.0 + (2.0 * std::f64::consts::PI).ln());
    assert!(((ll - expected) / expected).abs() < 0.02);
}

#[test]
fn moving_nu_off_the_grid_optimum_lowers_the_objective() {
    let truth = StudentT::new(DVector::zeros(2), DMatrix::identity(2, 2), 4.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let data: Vec<DVector<f64>> = (0..4000).map(|_| truth.sample(&mut rng)).collect();
    let cfg = FitConfig { fixed_g: Some(1), ..FitConfig::default() };
    let (m, _) = fit(&data, &cfg, &mut rng).unwrap();
    let best = objective(&m, &data).unwrap();
    let c = &m.components()[0];
    for nu in cfg.nu_grid.iter().filter(|v| **v != c.nu()) {
        let moved = TMixture::single(StudentT::new(c.mu().clone(), c.sigma().clone(), *nu).unwrap());
        assert!(objective(&moved, &data).unwrap() < best, "nu {nu} vs fitted {}", c.nu());
    }
}
