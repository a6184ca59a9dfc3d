mod common;

use acmh::mixture_t::StudentT;
use acmh::smc::{anneal, anneal_from, move_kernel, stratified_resample, SmcConfig};
use acmh::targets::{msn_target, Envelope, Target};
use common::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// A target equal to a given t density.
#[derive(Debug)]
struct TTarget(StudentT);

impl Target for TTarget {
    fn name(&self) -> &str {
        "t"
    }
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn ln_density(&self, x: &DVector<f64>) -> f64 {
        self.0.ln_pdf(x)
    }
    fn envelope(&self) -> &dyn Envelope {
        &self.0
    }
}

#[test]
fn mixture_particles_split_between_the_modes() {
    let target = msn_target(1).unwrap();
    let set = anneal(&target, &SmcConfig::default(), &mut rng(30)).unwrap();
    assert_eq!(set.particles.len(), 500);
    let left = set.particles.iter().filter(|p| p[0] < 0.0).count() as f64 / 500.0;
    assert!((left - 0.6).abs() <= 0.1, "left fraction {left}");
}

#[test]
fn identical_bridge_gives_uniform_weights_at_every_stage() {
    let pi0 = StudentT::standard(3, 3.0).unwrap();
    let target = TTarget(pi0.clone());
    let set = anneal_from(&target, &pi0, &SmcConfig::default(), &mut rng(31)).unwrap();
    assert_eq!(set.weight_history.len(), 10);
    for stage in &set.weight_history {
        assert!(stage.iter().all(|w| *w == 1.0 / 500.0));
    }
}

#[test]
fn single_step_is_importance_sampling_plus_moves() {
    let target = TTarget(StudentT::new(DVector::from_element(2, 1.0), DMatrix::identity(2, 2) * 0.5, 10.0).unwrap());
    let cfg = SmcConfig { t_steps: 1, moves: 0, ..SmcConfig::default() };
    let pi0 = StudentT::standard(2, 3.0).unwrap();
    let set = anneal_from(&target, &pi0, &cfg, &mut rng(32)).unwrap();
    assert_eq!(set.weight_history.len(), 1);
    assert!(set.acceptance[0].is_nan());
    // the weights are exactly π/π₀ normalised over the initial draws
    let w = &set.weight_history[0];
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let spread = w.iter().cloned().fold(0.0, f64::max) / w.iter().cloned().fold(1.0, f64::min);
    assert!(spread > 1.0);
}

#[test]
fn resampling_is_unbiased() {
    let mut r = rng(33);
    let n = 20;
    let raw: Vec<f64> = (0..n).map(|_| r.random::<f64>().powi(3)).collect();
    let total: f64 = raw.iter().sum();
    let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let reps = 10_000;
    let mut counts = vec![Vec::with_capacity(reps); n];
    for _ in 0..reps {
        let mut c = vec![0.0; n];
        for i in stratified_resample(&w, &mut r).unwrap() {
            c[i] += 1.0;
        }
        for i in 0..n {
            counts[i].push(c[i]);
        }
    }
    for i in 0..n {
        let mean = counts[i].iter().sum::<f64>() / reps as f64;
        let se = (variance(&counts[i]) / reps as f64).sqrt().max(1e-3);
        assert!((mean - n as f64 * w[i]).abs() < 3.0 * se, "index {i}: {mean} vs {}", n as f64 * w[i]);
    }
}

#[test]
fn move_kernel_leaves_a_normal_invariant() {
    let mut r = rng(34);
    let n = 20_000;
    let mut particles: Vec<DVector<f64>> = (0..n).map(|_| normal_vec(2, &mut r)).collect();
    let ln_eta = |x: &DVector<f64>| -0.5 * x.norm_squared();
    move_kernel(&mut particles, &ln_eta, 10, &mut r).unwrap();
    for j in 0..2 {
        let s: Vec<f64> = particles.iter().map(|p| p[j]).collect();
        let mean = s.iter().sum::<f64>() / n as f64;
        let var = variance(&s);
        assert!(mean.abs() < 3.0 / (n as f64).sqrt(), "mean {mean}");
        // sd of the sample variance of n normals is sqrt(2/n)
        assert!((var - 1.0).abs() < 3.0 * (2.0 / n as f64).sqrt(), "variance {var}");
    }
}

#[test]
fn scaled_moves_accept_at_a_moderate_rate() {
    let mut r = rng(35);
    let mut particles: Vec<DVector<f64>> = (0..2000).map(|_| normal_vec(5, &mut r)).collect();
    let ln_eta = |x: &DVector<f64>| -0.5 * x.norm_squared();
    let acc = move_kernel(&mut particles, &ln_eta, 10, &mut r).unwrap();
    assert!(acc > 0.1 && acc < 0.6, "acceptance {acc}");
}

#[test]
fn prepass_centres_the_initial_density() {
    let target = TTarget(StudentT::new(DVector::from_element(2, 40.0), DMatrix::identity(2, 2), 10.0).unwrap());
    let cfg = SmcConfig { prepass_steps: Some(1000), ..SmcConfig::default() };
    let set = anneal(&target, &cfg, &mut rng(36)).unwrap();
    let mean = set.particles.iter().fold(DVector::zeros(2), |a, p| a + p) / set.particles.len() as f64;
    assert!((&mean - DVector::from_element(2, 40.0)).norm() < 0.5, "mean {mean}");
}
