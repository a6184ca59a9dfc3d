//! The two-chain adaptive sampler.
//!
//! A trial chain explores with the current proposal and feeds accepted
//! moves into the history; the proposal mixture is refitted from that
//! history on a fixed cadence. The main chain uses the same proposal but
//! never contributes to the history, so its adaptation inputs are a pure
//! function of the trial chain.

use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fit::{fit_with_init, FitConfig, FitReport};
use crate::kernels::{draw_acmh_cached, draw_rw_at, log_ratio_from_parts, Branch, PointCache, ProposalConfig};
use crate::mixture_t::TMixture;
use crate::targets::{Envelope, Target};

pub use crate::kernels::select_partition;

/// Random stream identifiers derived from the run seed.
pub mod streams {
    pub const SMC: u64 = 0;
    pub const TRIAL: u64 = 1;
    pub const MAIN: u64 = 2;
    pub const REFIT: u64 = 3;
    pub const EVAL: u64 = 4;
    pub const BASELINE: u64 = 5;
}

/// A ChaCha8 generator on the given stream of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// What the trial chain appends to the history when it accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HistoryRule {
    /// The state the trial chain was in before the accepted move.
    PreviousState,
    /// The accepted proposal.
    AcceptedProposal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DeltaSchedule {
    /// `(k+1)/a_N` over sampling block `k`; `1/a_N` during burn-in.
    Staircase,
    Constant {
        delta: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n_burnin: usize,
    pub n_sample: usize,
    /// Refit cadence during burn-in (number of components free).
    pub refit_stage1: usize,
    /// Refit cadence after burn-in (number of components locked).
    pub refit_stage2: usize,
    pub a_n: usize,
    pub proposal: ProposalConfig,
    pub seed: u64,
    pub record_trial: bool,
    pub fit: FitConfig,
    pub history_rule: HistoryRule,
    pub delta_schedule: DeltaSchedule,
    /// Compose a random-walk step every `iota_rw` iterations.
    pub rw_enabled: bool,
    /// Refit the mixture at all.
    pub adapt: bool,
    /// Stop refitting once burn-in ends.
    pub freeze_after_burnin: bool,
    /// Refits use an evenly strided subset of at most this many history states.
    pub max_fit_points: usize,
}

impl RunConfig {
    pub fn for_dim(d: usize) -> Self {
        Self {
            n_burnin: 50_000,
            n_sample: 50_000,
            refit_stage1: 2000,
            refit_stage2: 4000,
            a_n: 10,
            proposal: ProposalConfig::for_dim(d),
            seed: 0,
            record_trial: false,
            fit: FitConfig::default(),
            history_rule: HistoryRule::PreviousState,
            delta_schedule: DeltaSchedule::Staircase,
            rw_enabled: true,
            adapt: true,
            freeze_after_burnin: false,
            max_fit_points: 2000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_sample == 0 || self.a_n == 0 || self.n_sample % self.a_n != 0 {
            return bad(format!("n_sample {} must be a positive multiple of a_N {}", self.n_sample, self.a_n));
        }
        if self.refit_stage1 == 0 || self.refit_stage2 == 0 {
            return bad("refit cadences must be at least 1".into());
        }
        if let DeltaSchedule::Constant { delta } = self.delta_schedule {
            if !(0.0..=1.0).contains(&delta) {
                return bad(format!("delta {delta} is not a probability"));
            }
        }
        if self.max_fit_points == 0 {
            return bad("max_fit_points must be positive".into());
        }
        self.proposal.validate()?;
        self.fit.validate()
    }

    pub fn total_iterations(&self) -> usize {
        self.n_burnin + self.n_sample
    }
}

/// `δ` for sampling iteration `n ∈ 1..=n_sample`: `(k+1)/a_N` in block `k`
/// of length `b_N = n_sample/a_N`.
pub fn delta_at(n: usize, cfg: &RunConfig) -> Result<f64> {
    if n == 0 || n > cfg.n_sample {
        return Err(Error::InvalidParameter(format!("iteration {n} outside 1..={}", cfg.n_sample)));
    }
    if cfg.a_n == 0 || cfg.n_sample % cfg.a_n != 0 {
        return Err(Error::InvalidParameter("n_sample must be a multiple of a_N".into()));
    }
    let b_n = cfg.n_sample / cfg.a_n;
    let k = (n - 1) / b_n;
    Ok((k + 1) as f64 / cfg.a_n as f64)
}

/// `δ` for overall iteration `n` (burn-in first, then sampling).
fn delta_for(n: usize, cfg: &RunConfig) -> Result<f64> {
    match cfg.delta_schedule {
        DeltaSchedule::Constant { delta } => Ok(delta),
        DeltaSchedule::Staircase if n <= cfg.n_burnin => Ok(1.0 / cfg.a_n as f64),
        DeltaSchedule::Staircase => delta_at(n - cfg.n_burnin, cfg),
    }
}

/// Ordered record of states used for refitting.
#[derive(Debug, Clone)]
pub struct History {
    states: Vec<DVector<f64>>,
    append_count: usize,
}

impl History {
    pub fn new(initial: Vec<DVector<f64>>) -> Self {
        Self { states: initial, append_count: 0 }
    }

    pub fn push(&mut self, x: DVector<f64>) {
        self.states.push(x);
        self.append_count += 1;
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn append_count(&self) -> usize {
        self.append_count
    }

    /// Evenly strided subset of at most `max` states, oldest first.
    pub fn thinned(&self, max: usize) -> Vec<DVector<f64>> {
        let n = self.states.len();
        if n <= max {
            return self.states.clone();
        }
        (0..max).map(|i| self.states[i * n / max].clone()).collect()
    }
}

/// SHA-256 of a refit's inputs, hex encoded.
pub fn hash_states(iteration: usize, states: &[DVector<f64>]) -> String {
    let mut h = Sha256::new();
    h.update((iteration as u64).to_le_bytes());
    for s in states {
        for v in s.iter() {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Recorded iterations of one chain.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub iterates: DMatrix<f64>,
    /// Acceptance of the reversible (non random-walk) step.
    pub accept_flags: Vec<bool>,
    pub branch_tags: Vec<Branch>,
    /// Outcome of the composed random-walk step, if one was made.
    pub rw_accepts: Vec<Option<bool>>,
    pub ln_density: Vec<f64>,
}

impl ChainOutput {
    /// Empty output with room for `n` rows of dimension `d`.
    pub fn with_capacity(n: usize, d: usize) -> Self {
        Self {
            iterates: DMatrix::zeros(n, d),
            accept_flags: Vec::with_capacity(n),
            branch_tags: Vec::with_capacity(n),
            rw_accepts: Vec::with_capacity(n),
            ln_density: Vec::with_capacity(n),
        }
    }

    fn record(&mut self, state: &ChainState, outcome: &StepOutcome) {
        self.push(&state.x, state.ln_pi, outcome.accepted, outcome.branch, outcome.rw);
    }

    /// Appends one row; panics if the capacity given at construction is exceeded.
    pub fn push(&mut self, x: &DVector<f64>, ln_pi: f64, accepted: bool, branch: Branch, rw: Option<bool>) {
        let row = self.accept_flags.len();
        self.iterates.set_row(row, &x.transpose());
        self.accept_flags.push(accepted);
        self.branch_tags.push(branch);
        self.rw_accepts.push(rw);
        self.ln_density.push(ln_pi);
    }

    pub fn len(&self) -> usize {
        self.accept_flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accept_flags.is_empty()
    }

    pub fn acceptance_rate(&self) -> f64 {
        crate::diagnostics::acceptance_rate(&self.accept_flags)
    }

    /// Branch tag with a `+rw` suffix when a random-walk step was composed.
    pub fn branch_label(&self, i: usize) -> String {
        match self.rw_accepts[i] {
            Some(_) => format!("{}+rw", self.branch_tags[i]),
            None => self.branch_tags[i].to_string(),
        }
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.iterates.column(j).iter().copied().collect()
    }

    /// Writes `iter,accepted,branch,x1..xd` with 17 significant digits.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let d = self.iterates.ncols();
        let mut header = vec!["iter".to_string(), "accepted".into(), "branch".into()];
        header.extend((1..=d).map(|j| format!("x{j}")));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![(i + 1).to_string(), u8::from(self.accept_flags[i]).to_string(), self.branch_label(i)];
            rec.extend((0..d).map(|j| format!("{:.16e}", self.iterates[(i, j)])));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One refit event.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefitRecord {
    pub iteration: usize,
    pub stage: u8,
    pub history_len: usize,
    pub fit_points: usize,
    pub input_hash: String,
    pub succeeded: bool,
    pub g: usize,
    pub mixture: TMixture,
    pub report: Option<FitReport>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub main: ChainOutput,
    pub trial: Option<ChainOutput>,
    pub initial_mixture: TMixture,
    pub refits: Vec<RefitRecord>,
    pub history_len: usize,
    pub history_appends: usize,
    /// Wall-clock seconds of the burn-in and sampling loop.
    pub elapsed_seconds: f64,
}

/// Starting history and states for both chains.
#[derive(Debug, Clone)]
pub struct ChainStart {
    pub history: Vec<DVector<f64>>,
    pub x0: DVector<f64>,
    pub x0_trial: DVector<f64>,
    /// Use this mixture instead of fitting one to `history`.
    pub mixture: Option<TMixture>,
}

impl ChainStart {
    /// Main chain starts at the particle of highest target density, the
    /// trial chain at the best particle that differs from it (ties broken
    /// by index).
    pub fn from_particles(particles: Vec<DVector<f64>>, target: &dyn Target) -> Result<Self> {
        let mut scored: Vec<(usize, f64)> =
            particles.iter().enumerate().map(|(i, p)| (i, target.ln_density(p))).collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let (best, lp) = scored[0];
        if !lp.is_finite() {
            return Err(Error::NonFiniteStart);
        }
        let x0 = particles[best].clone();
        let second = scored
            .iter()
            .skip(1)
            .find(|(i, l)| l.is_finite() && particles[*i] != x0)
            .map(|(i, _)| particles[*i].clone())
            .unwrap_or_else(|| x0.clone());
        Ok(Self { history: particles, x0, x0_trial: second, mixture: None })
    }
}

struct ChainState {
    x: DVector<f64>,
    ln_pi: f64,
    cache: PointCache,
}

impl ChainState {
    fn new(x: DVector<f64>, target: &dyn Target, m: &TMixture, g0: &dyn Envelope) -> Result<Self> {
        let ln_pi = target.ln_density(&x);
        if !ln_pi.is_finite() {
            return Err(Error::NonFiniteStart);
        }
        let cache = PointCache::new(&x, m, g0);
        Ok(Self { x, ln_pi, cache })
    }
}

struct StepOutcome {
    accepted: bool,
    branch: Branch,
    rw: Option<bool>,
    /// State before the reversible step and the accepted proposal.
    moved: Option<(DVector<f64>, DVector<f64>)>,
}

struct Sampler<'a> {
    target: &'a dyn Target,
    g0: &'a dyn Envelope,
}

impl Sampler<'_> {
    fn step(
        &self,
        s: &mut ChainState,
        m: &TMixture,
        prop: &ProposalConfig,
        rw_now: bool,
        rng: &mut dyn RngCore,
    ) -> Result<StepOutcome> {
        let beta0 = prop.beta0;
        let draw = draw_acmh_cached(&s.x, &s.cache, m, self.g0, prop, rng)?;
        let ln_pi_z = self.target.ln_density(&draw.z);
        let mut accepted = false;
        let mut moved = None;
        if ln_pi_z > f64::NEG_INFINITY {
            let cache_z = PointCache::new(&draw.z, m, self.g0);
            let r = log_ratio_from_parts(s.ln_pi, s.cache.ln_q_star(beta0), ln_pi_z, cache_z.ln_q_star(beta0));
            if r >= 0.0 || rng.random::<f64>().ln() < r {
                let old = std::mem::replace(&mut s.x, draw.z.clone());
                moved = Some((old, draw.z));
                s.ln_pi = ln_pi_z;
                s.cache = cache_z;
                accepted = true;
            }
        }
        let mut rw = None;
        if rw_now {
            let z = draw_rw_at(&s.x, m, s.cache.khat(), prop.kappa, rng);
            let lz = self.target.ln_density(&z);
            let r = lz - s.ln_pi;
            let ok = lz > f64::NEG_INFINITY && (r >= 0.0 || rng.random::<f64>().ln() < r);
            if ok {
                s.cache = PointCache::new(&z, m, self.g0);
                s.x = z;
                s.ln_pi = lz;
            }
            rw = Some(ok);
        }
        Ok(StepOutcome { accepted, branch: draw.branch, rw, moved })
    }
}

/// Runs burn-in and sampling for both chains.
pub fn run(target: &dyn Target, cfg: &RunConfig, start: &ChainStart) -> Result<RunOutput> {
    cfg.validate()?;
    let d = target.dim();
    for x in [&start.x0, &start.x0_trial] {
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
    }
    let g0 = target.envelope();
    let mut rng_trial = stream_rng(cfg.seed, streams::TRIAL);
    let mut rng_main = stream_rng(cfg.seed, streams::MAIN);
    let mut rng_fit = stream_rng(cfg.seed, streams::REFIT);

    let mut history = History::new(start.history.clone());
    let mut mixture = match &start.mixture {
        Some(m) => m.clone(),
        None => fit_with_init(&history.thinned(cfg.max_fit_points), &cfg.fit, None, &mut rng_fit)?.0,
    };
    if mixture.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: mixture.dim() });
    }
    let initial_mixture = mixture.clone();
    let mut main = ChainState::new(start.x0.clone(), target, &mixture, g0)?;
    let mut trial = ChainState::new(start.x0_trial.clone(), target, &mixture, g0)?;

    let sampler = Sampler { target, g0 };
    let total = cfg.total_iterations();
    let mut out_main = ChainOutput::with_capacity(cfg.n_sample, d);
    let mut out_trial = cfg.record_trial.then(|| ChainOutput::with_capacity(cfg.n_sample, d));
    let mut refits = Vec::new();
    let mut locked_g: Option<usize> = None;
    let mut prop = cfg.proposal.clone();
    let started = Instant::now();

    for n in 1..=total {
        prop.delta = delta_for(n, cfg)?;
        let rw_now = cfg.rw_enabled && n % prop.iota_rw == 0;

        let t_out = sampler.step(&mut trial, &mixture, &prop, rw_now, &mut rng_trial)?;
        if let Some((prev, z)) = &t_out.moved {
            history.push(match cfg.history_rule {
                HistoryRule::PreviousState => prev.clone(),
                HistoryRule::AcceptedProposal => z.clone(),
            });
        }
        let m_out = sampler.step(&mut main, &mixture, &prop, rw_now, &mut rng_main)?;

        if n > cfg.n_burnin {
            out_main.record(&main, &m_out);
            if let Some(o) = out_trial.as_mut() {
                o.record(&trial, &t_out);
            }
        }

        let stage1 = n <= cfg.n_burnin;
        let refit_now = cfg.adapt
            && if stage1 {
                n % cfg.refit_stage1 == 0
            } else {
                !cfg.freeze_after_burnin && (n - cfg.n_burnin) % cfg.refit_stage2 == 0 && n < total
            };
        if !refit_now {
            continue;
        }
        let mut fit_cfg = cfg.fit.clone();
        if !stage1 {
            let g = *locked_g.get_or_insert(mixture.len());
            fit_cfg.fixed_g = Some(g);
        }
        let points = history.thinned(cfg.max_fit_points);
        let input_hash = hash_states(n, &points);
        let record = match fit_with_init(&points, &fit_cfg, Some(&mixture), &mut rng_fit) {
            Ok((m, report)) => {
                mixture = m;
                main.cache = PointCache::new(&main.x, &mixture, g0);
                trial.cache = PointCache::new(&trial.x, &mixture, g0);
                RefitRecord {
                    iteration: n,
                    stage: if stage1 { 1 } else { 2 },
                    history_len: history.len(),
                    fit_points: points.len(),
                    input_hash,
                    succeeded: true,
                    g: mixture.len(),
                    mixture: mixture.clone(),
                    report: Some(report),
                }
            }
            Err(e) => {
                log::warn!("refit at iteration {n} failed ({e}); keeping the previous mixture");
                RefitRecord {
                    iteration: n,
                    stage: if stage1 { 1 } else { 2 },
                    history_len: history.len(),
                    fit_points: points.len(),
                    input_hash,
                    succeeded: false,
                    g: mixture.len(),
                    mixture: mixture.clone(),
                    report: None,
                }
            }
        };
        refits.push(record);
    }

    Ok(RunOutput {
        main: out_main,
        trial: out_trial,
        initial_mixture,
        refits,
        history_len: history.len(),
        history_appends: history.append_count(),
        elapsed_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Outcome of a Monte Carlo audit of `g₀ ≥ β₀ π`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    /// Largest `β₀ π(z)/g₀(z)` over the probes.
    pub max_ratio: f64,
    pub argmax: Option<usize>,
    pub violations: usize,
    pub n_probes: usize,
}

impl EnvelopeReport {
    /// A ratio above one proves the bound fails; the converse is only evidence.
    pub fn violated(&self) -> bool {
        self.violations > 0
    }
}

/// Evaluates `β₀ π(z)/g₀(z)` at each probe. Meaningful when `π` is
/// normalised (or its normalising constant is otherwise accounted for).
pub fn check_envelope(
    ln_pi: &dyn Fn(&DVector<f64>) -> f64,
    g0: &dyn Envelope,
    beta0: f64,
    probes: &[DVector<f64>],
) -> EnvelopeReport {
    let mut max_ln = f64::NEG_INFINITY;
    let mut argmax = None;
    let mut violations = 0;
    for (i, z) in probes.iter().enumerate() {
        let lp = ln_pi(z);
        if lp == f64::NEG_INFINITY {
            continue;
        }
        let r = beta0.ln() + lp - g0.ln_pdf(z);
        if r > 0.0 {
            violations += 1;
        }
        if r > max_ln || argmax.is_none() {
            max_ln = r;
            argmax = Some(i);
        }
    }
    EnvelopeReport { max_ratio: max_ln.exp(), argmax, violations, n_probes: probes.len() }
}
