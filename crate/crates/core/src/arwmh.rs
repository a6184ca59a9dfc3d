//! Adaptive random walk Metropolis baseline.
//!
//! The proposal covariance is `(2.38²/d) Ĉ_n + 1e-10 I`, where `Ĉ_n` is the
//! running covariance of all past iterates, maintained with Welford updates.
//! Until `d + 2` iterates have been seen the proposal covariance is `I`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::chain::ChainOutput;
use crate::error::{Error, Result};
use crate::kernels::Branch;
use crate::mixture_t::cholesky_with_jitter;

#[derive(Debug, Clone)]
pub struct Arwmh {
    d: usize,
    n: usize,
    mean: DVector<f64>,
    scatter: DMatrix<f64>,
    scale: f64,
}

pub const ARWMH_EPS: f64 = 1e-10;

impl Arwmh {
    pub fn new(d: usize) -> Self {
        Self { d, n: 0, mean: DVector::zeros(d), scatter: DMatrix::zeros(d, d), scale: 2.38 * 2.38 / d as f64 }
    }

    /// Number of iterates absorbed so far.
    pub fn count(&self) -> usize {
        self.n
    }

    pub fn is_adapting(&self) -> bool {
        self.n >= self.d + 2
    }

    pub fn observe(&mut self, x: &DVector<f64>) {
        self.n += 1;
        let delta = x - &self.mean;
        self.mean += &delta / self.n as f64;
        let delta2 = x - &self.mean;
        self.scatter.ger(1.0, &delta, &delta2, 1.0);
    }

    /// Empirical covariance of the iterates seen so far.
    pub fn covariance(&self) -> DMatrix<f64> {
        let mut c = &self.scatter / (self.n.max(2) - 1) as f64;
        c.fill_upper_triangle_with_lower_triangle();
        c
    }

    pub fn proposal_covariance(&self) -> DMatrix<f64> {
        if !self.is_adapting() {
            return DMatrix::identity(self.d, self.d);
        }
        let mut c = self.covariance() * self.scale;
        for i in 0..self.d {
            c[(i, i)] += ARWMH_EPS;
        }
        c
    }

    /// Absorbs `x` into the running moments, then makes one Metropolis step
    /// from it. Returns the new state, its log-density and the accept flag.
    pub fn step(
        &mut self,
        x: &DVector<f64>,
        ln_pi_x: f64,
        ln_pi: &dyn Fn(&DVector<f64>) -> f64,
        rng: &mut dyn RngCore,
    ) -> Result<(DVector<f64>, f64, bool)> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: x.len() });
        }
        self.observe(x);
        let chol = cholesky_with_jitter(&self.proposal_covariance())?;
        let u = DVector::from_fn(self.d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let z = x + chol * u;
        let lz = ln_pi(&z);
        let ratio = lz - ln_pi_x;
        if lz > f64::NEG_INFINITY && (ratio >= 0.0 || rng.random::<f64>().ln() < ratio) {
            Ok((z, lz, true))
        } else {
            Ok((x.clone(), ln_pi_x, false))
        }
    }
}

/// One adaptive random-walk step; see [`Arwmh::step`].
pub fn arwmh_step(
    state: &mut Arwmh,
    x: &DVector<f64>,
    ln_pi_x: f64,
    ln_pi: &dyn Fn(&DVector<f64>) -> f64,
    rng: &mut dyn RngCore,
) -> Result<(DVector<f64>, f64, bool)> {
    state.step(x, ln_pi_x, ln_pi, rng)
}

/// Runs `n_burnin + n_sample` adaptive random-walk steps from `x0` and
/// records the last `n_sample`.
pub fn run_arwmh(
    ln_pi: &dyn Fn(&DVector<f64>) -> f64,
    x0: &DVector<f64>,
    n_burnin: usize,
    n_sample: usize,
    rng: &mut dyn RngCore,
) -> Result<ChainOutput> {
    let d = x0.len();
    let mut lp = ln_pi(x0);
    if !lp.is_finite() {
        return Err(Error::NonFiniteStart);
    }
    let mut walker = Arwmh::new(d);
    let mut x = x0.clone();
    let mut out = ChainOutput::with_capacity(n_sample, d);
    for n in 0..(n_burnin + n_sample) {
        let (nx, nlp, ok) = walker.step(&x, lp, ln_pi, rng)?;
        x = nx;
        lp = nlp;
        if n >= n_burnin {
            out.push(&x, lp, ok, Branch::Rw, None);
        }
    }
    Ok(out)
}
