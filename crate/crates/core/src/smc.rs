//! Annealed sequential Monte Carlo used to build the initial history.
//!
//! Particles drawn from a heavy-tailed `π₀` are moved through the bridging
//! densities `η_t ∝ π₀^{1-ψ_t} π^{ψ_t}`, `ψ_t = t/T`, by reweighting,
//! stratified resampling and random-walk Metropolis moves.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::arwmh::Arwmh;
use crate::error::{Error, Result};
use crate::mixture_t::{cholesky_with_jitter, StudentT};
use crate::targets::Target;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmcConfig {
    pub t_steps: usize,
    pub n_particles: usize,
    pub moves: usize,
    /// Degrees of freedom of the default `π₀ = t(0, I, ν)`.
    pub pi0_nu: f64,
    /// Steps of an adaptive random walk run used to centre and scale `π₀`.
    pub prepass_steps: Option<usize>,
}

impl Default for SmcConfig {
    fn default() -> Self {
        Self { t_steps: 10, n_particles: 500, moves: 10, pi0_nu: 3.0, prepass_steps: None }
    }
}

impl SmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_steps == 0 || self.n_particles < 2 || !(self.pi0_nu > 0.0) {
            return Err(Error::InvalidParameter("need T >= 1, Np >= 2 and nu > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParticleSet {
    pub particles: Vec<DVector<f64>>,
    pub stage: usize,
    /// Normalised weights at each reweighting stage.
    pub weight_history: Vec<Vec<f64>>,
    /// Move acceptance rate at each stage.
    pub acceptance: Vec<f64>,
}

/// Stratified resampling: one uniform per stratum `(i + u_i)/N`, inverted
/// against the cumulative weights.
pub fn stratified_resample<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<Vec<usize>> {
    let n = weights.len();
    if n == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if weights.iter().any(|w| *w < 0.0 || w.is_nan()) {
        return Err(Error::InvalidParameter("negative resampling weight".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("weights sum to {total}")));
    }
    let last_positive = weights.iter().rposition(|w| *w > 0.0).unwrap_or(n - 1);
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    let mut cum = weights[0];
    for i in 0..n {
        let u = (i as f64 + rng.random::<f64>()) / n as f64;
        while cum <= u && j < last_positive {
            j += 1;
            cum += weights[j];
        }
        out.push(j);
    }
    Ok(out)
}

fn particle_covariance(particles: &[DVector<f64>]) -> DMatrix<f64> {
    let d = particles[0].len();
    let n = particles.len() as f64;
    let mut mean = DVector::zeros(d);
    for p in particles {
        mean += p;
    }
    mean /= n;
    let mut cov = DMatrix::zeros(d, d);
    for p in particles {
        let diff = p - &mean;
        cov.syger(1.0, &diff, &diff, 1.0);
    }
    cov.fill_upper_triangle_with_lower_triangle();
    cov / (n - 1.0).max(1.0)
}

/// `moves` random-walk Metropolis sweeps over every particle, targeting
/// `log_eta`. Proposal covariance is `(2.38²/d)(Ĉ + 1e-6 I)` with `Ĉ` the
/// particle covariance at the start of each sweep. Returns the acceptance
/// rate (`NaN` when `moves = 0`).
pub fn move_kernel(
    particles: &mut [DVector<f64>],
    log_eta: &dyn Fn(&DVector<f64>) -> f64,
    moves: usize,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    if moves == 0 || particles.is_empty() {
        return Ok(f64::NAN);
    }
    let d = particles[0].len();
    let mut current: Vec<f64> = particles.iter().map(|p| log_eta(p)).collect();
    let mut accepted = 0usize;
    for _ in 0..moves {
        let mut cov = particle_covariance(particles);
        for i in 0..d {
            cov[(i, i)] += 1e-6;
        }
        let chol = cholesky_with_jitter(&(cov * (2.38 * 2.38 / d as f64)))?;
        for (p, lp) in particles.iter_mut().zip(current.iter_mut()) {
            let u = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let z = &*p + &chol * u;
            let lz = log_eta(&z);
            let ratio = lz - *lp;
            if lz > f64::NEG_INFINITY && (ratio >= 0.0 || rng.random::<f64>().ln() < ratio) {
                *p = z;
                *lp = lz;
                accepted += 1;
            }
        }
    }
    Ok(accepted as f64 / (moves * particles.len()) as f64)
}

/// `ψ ln π + (1 - ψ) ln π₀` with the endpoints taken literally.
fn tempered(psi: f64, ln_pi: f64, ln_pi0: f64) -> f64 {
    if psi == 0.0 {
        ln_pi0
    } else if psi == 1.0 {
        ln_pi
    } else if ln_pi == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        psi * ln_pi + (1.0 - psi) * ln_pi0
    }
}

/// Default `π₀`, optionally centred and scaled by a short adaptive random
/// walk started from the best of 100 envelope draws.
pub fn initial_density(target: &dyn Target, cfg: &SmcConfig, rng: &mut dyn RngCore) -> Result<StudentT> {
    let d = target.dim();
    let Some(steps) = cfg.prepass_steps else {
        return StudentT::standard(d, cfg.pi0_nu);
    };
    let mut best: Option<(f64, DVector<f64>)> = None;
    for _ in 0..100 {
        let x = target.envelope().sample(rng);
        let lp = target.ln_density(&x);
        if lp.is_finite() && best.as_ref().is_none_or(|(b, _)| lp > *b) {
            best = Some((lp, x));
        }
    }
    let (mut lp, mut x) = best.ok_or(Error::NonFiniteStart)?;
    let mut walker = Arwmh::new(d);
    let mut path = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (nx, nlp, _) = walker.step(&x, lp, &|v: &DVector<f64>| target.ln_density(v), rng)?;
        x = nx;
        lp = nlp;
        path.push(x.clone());
    }
    let tail = &path[path.len() / 2..];
    let mut cov = particle_covariance(tail);
    let mean = tail.iter().fold(DVector::zeros(d), |acc, p| acc + p) / tail.len() as f64;
    for i in 0..d {
        cov[(i, i)] += 1e-6;
    }
    StudentT::new(mean, cov, cfg.pi0_nu)
}

/// Runs the annealing schedule and returns the final particles.
pub fn anneal(target: &dyn Target, cfg: &SmcConfig, rng: &mut dyn RngCore) -> Result<ParticleSet> {
    let pi0 = initial_density(target, cfg, rng)?;
    anneal_from(target, &pi0, cfg, rng)
}

/// [`anneal`] with an explicit initial density.
pub fn anneal_from(target: &dyn Target, pi0: &StudentT, cfg: &SmcConfig, rng: &mut dyn RngCore) -> Result<ParticleSet> {
    cfg.validate()?;
    let np = cfg.n_particles;
    let t_steps = cfg.t_steps;
    let mut particles: Vec<DVector<f64>> = (0..np).map(|_| pi0.sample(rng)).collect();
    let mut weight_history = Vec::with_capacity(t_steps);
    let mut acceptance = Vec::with_capacity(t_steps);
    for t in 1..=t_steps {
        let psi_prev = (t - 1) as f64 / t_steps as f64;
        let psi = t as f64 / t_steps as f64;
        let lw: Vec<f64> = particles
            .iter()
            .map(|p| {
                let lpi = target.ln_density(p);
                let lp0 = pi0.ln_pdf(p);
                if lpi == lp0 {
                    0.0
                } else if lpi == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    (psi - psi_prev) * (lpi - lp0)
                }
            })
            .collect();
        let total = crate::special::logsumexp(&lw);
        if !total.is_finite() {
            return Err(Error::WeightUnderflow { stage: t });
        }
        let w: Vec<f64> = if lw.iter().all(|v| *v == lw[0]) {
            vec![1.0 / np as f64; np]
        } else {
            let raw: Vec<f64> = lw.iter().map(|v| (v - total).exp()).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|v| v / s).collect()
        };
        let idx = stratified_resample(&w, rng)?;
        weight_history.push(w);
        particles = idx.iter().map(|&i| particles[i].clone()).collect();
        let eta = |x: &DVector<f64>| tempered(psi, target.ln_density(x), pi0.ln_pdf(x));
        acceptance.push(move_kernel(&mut particles, &eta, cfg.moves, rng)?);
    }
    Ok(ParticleSet { particles, stage: t_steps, weight_history, acceptance })
}
