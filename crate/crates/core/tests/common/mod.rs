//! Fixtures and reference computations shared by the integration tests.
#![allow(dead_code)]

use acmh::diagnostics::iact;
use acmh::mixture_t::{Partition, StudentT, TMixture};
use acmh::targets::{Envelope, Target};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// `A A' / d + 0.5 I` for a Gaussian `A`.
pub fn random_spd<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    &a * a.transpose() / d as f64 + DMatrix::identity(d, d) * 0.5
}

pub fn random_t<R: Rng + ?Sized>(d: usize, rng: &mut R) -> StudentT {
    let nu = 1.0 + 20.0 * rng.random::<f64>();
    StudentT::new(normal_vec(d, rng) * 2.0, random_spd(d, rng), nu).unwrap()
}

/// Two overlapping components in `d = 2`; finite fourth moments so sample
/// variances are well behaved.
pub fn overlapping_mixture() -> TMixture {
    let a =
        StudentT::new(DVector::from_row_slice(&[-1.0, 0.0]), DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.8]), 8.0)
            .unwrap();
    let b = StudentT::new(
        DVector::from_row_slice(&[1.0, 0.5]),
        DMatrix::from_row_slice(2, 2, &[0.7, -0.2, -0.2, 1.2]),
        12.0,
    )
    .unwrap();
    TMixture::new(vec![0.4, 0.6], vec![a, b]).unwrap()
}

/// Exact mean and covariance of a t mixture with all `ν > 2`.
pub fn mixture_moments(m: &TMixture) -> (DVector<f64>, DMatrix<f64>) {
    let d = m.dim();
    let mut mean = DVector::zeros(d);
    let mut second = DMatrix::zeros(d, d);
    for (w, c) in m.weights().iter().zip(m.components()) {
        mean += c.mu() * *w;
        second += (c.sigma() * (c.nu() / (c.nu() - 2.0)) + c.mu() * c.mu().transpose()) * *w;
    }
    let cov = second - &mean * mean.transpose();
    (mean, cov)
}

/// Mean of a correlated series and its Monte Carlo standard error
/// `sqrt(var · τ / n)`.
pub fn mean_and_se(s: &[f64]) -> (f64, f64) {
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let tau = iact(s).unwrap_or(1.0).max(1.0);
    (mean, (var * tau / n).sqrt())
}

pub fn variance(s: &[f64]) -> f64 {
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// `∫ f` over the real line by Simpson's rule after `x = c + s tan θ`.
pub fn integrate_line(f: impl Fn(f64) -> f64, c: f64, s: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let (a, b) = (-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2);
    let h = (b - a) / n as f64;
    let g = |theta: f64| {
        let cos = theta.cos();
        if cos <= 0.0 {
            return 0.0;
        }
        let v = f(c + s * theta.tan()) * s / (cos * cos);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let mut total = g(a) + g(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        total += w * g(a + i as f64 * h);
    }
    total * h / 3.0
}

/// Naive conditional law with `ν + d_A` degrees
/// of freedom and an unscaled Schur complement. Not a correct conditional.
pub fn naive_conditional_t(p: &StudentT, part: &Partition, x_b: &DVector<f64>) -> StudentT {
    let a = part.index_a();
    let b = part.index_b();
    let sigma = p.sigma();
    let s_bb = DMatrix::from_fn(b.len(), b.len(), |r, c| sigma[(b[r], b[c])]);
    let s_ba = DMatrix::from_fn(b.len(), a.len(), |r, c| sigma[(b[r], a[c])]);
    let s_aa = DMatrix::from_fn(a.len(), a.len(), |r, c| sigma[(a[r], a[c])]);
    let inv_bb = s_bb.try_inverse().unwrap();
    let resid = DVector::from_fn(b.len(), |i, _| x_b[i] - p.mu()[b[i]]);
    let loc = DVector::from_fn(a.len(), |i, _| p.mu()[a[i]]) + s_ba.transpose() * &inv_bb * resid;
    let schur = s_aa - s_ba.transpose() * inv_bb * s_ba;
    StudentT::new(loc, schur, p.nu() + a.len() as f64).unwrap()
}

pub fn sub_vector(x: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| x[i]))
}

/// A t mixture used as a target, with itself as envelope.
#[derive(Debug)]
pub struct MixtureTarget(pub TMixture);

impl Target for MixtureTarget {
    fn name(&self) -> &str {
        "t-mixture"
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
    fn sample_exact(&self, rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        Some(self.0.sample(rng))
    }
}
