//! Reversible t-mixture transition kernels and the composed ACMH proposal.
//!
//! None of the correlated kernels has its density evaluated by the sampler:
//! each is reversible with respect to the proposal mixture, so the
//! Metropolis-Hastings ratio only involves `q*(x)` and `q*(z)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture_t::{
    argmax_first, conditional_t, normalize_log_weights, sample_index, Partition, StudentT, TMixture,
};
use crate::special::logaddexp;
use crate::targets::Envelope;

/// Distribution of the correlation `ρ ∈ [0, 1)` of a correlated step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RhoLaw {
    Beta { a: f64, b: f64 },
    Fixed { rho: f64 },
}

impl Default for RhoLaw {
    fn default() -> Self {
        RhoLaw::Beta { a: 1.0, b: 1.0 }
    }
}

impl RhoLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RhoLaw::Beta { a, b } if a > 0.0 && b > 0.0 => Ok(()),
            RhoLaw::Fixed { rho } if (0.0..1.0).contains(&rho) => Ok(()),
            _ => Err(Error::InvalidParameter(format!("invalid rho law {self:?}"))),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            RhoLaw::Fixed { rho } => rho,
            // uniform on [0, 1) directly, which keeps ρ = 1 impossible
            RhoLaw::Beta { a, b } if a == 1.0 && b == 1.0 => rng.random(),
            RhoLaw::Beta { a, b } => {
                let r: f64 = Beta::new(a, b).expect("validated beta law").sample(rng);
                r.min(1.0 - f64::EPSILON)
            }
        }
    }
}

/// Control parameters of the composed proposal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalConfig {
    /// Weight of the heavy-tailed envelope `g₀` in `q*`.
    pub beta0: f64,
    /// Probability of a block step inside `T_{g_M}`.
    pub gamma: f64,
    /// Probability of an independent draw from `q*`.
    pub delta: f64,
    /// Random-walk composition cadence.
    pub iota_rw: usize,
    /// Probability that a coordinate is held fixed in a block step.
    pub p_b: f64,
    pub rho_law: RhoLaw,
    /// Random-walk covariance multiplier.
    pub kappa: f64,
}

/// `2.38² / d`.
pub fn default_kappa(d: usize) -> f64 {
    2.38 * 2.38 / d as f64
}

/// `max(1 - 10/d, 0.5)` for `d ≥ 2`, zero for `d = 1`.
pub fn default_p_b(d: usize) -> f64 {
    if d < 2 {
        0.0
    } else {
        (1.0 - 10.0 / d as f64).max(0.5)
    }
}

impl ProposalConfig {
    pub fn for_dim(d: usize) -> Self {
        Self {
            beta0: 0.001,
            gamma: 0.2,
            delta: 0.1,
            iota_rw: 10,
            p_b: default_p_b(d),
            rho_law: RhoLaw::default(),
            kappa: default_kappa(d),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("beta0", self.beta0), ("gamma", self.gamma), ("delta", self.delta), ("p_b", self.p_b)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!("{name} = {v} is not a probability")));
            }
        }
        if self.iota_rw == 0 {
            return Err(Error::InvalidParameter("iota_rw must be at least 1".into()));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::InvalidParameter("kappa must be positive".into()));
        }
        self.rho_law.validate()
    }
}

/// Which part of the composed proposal produced a draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    IndependentG0,
    IndependentGm,
    Cmh,
    Block,
    Rw,
}

impl Branch {
    pub const ALL: [Branch; 5] = [Branch::IndependentG0, Branch::IndependentGm, Branch::Cmh, Branch::Block, Branch::Rw];

    pub fn as_str(&self) -> &'static str {
        match self {
            Branch::IndependentG0 => "independent-g0",
            Branch::IndependentGm => "independent-gm",
            Branch::Cmh => "cmh",
            Branch::Block => "block",
            Branch::Rw => "rw",
        }
    }
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct ProposalDraw {
    pub z: DVector<f64>,
    pub branch: Branch,
}

fn check_dim(x: &DVector<f64>, d: usize) -> Result<()> {
    if x.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x.len() });
    }
    Ok(())
}

fn check_rho(rho: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidParameter(format!("rho = {rho} outside [0, 1)")));
    }
    Ok(())
}

/// Factor `c(x)` with `Σ̃(x) = c(x) Σ`.
fn reversible_scale(p: &StudentT, maha: f64, rho: f64) -> f64 {
    let nu = p.nu();
    let d = p.dim() as f64;
    nu / (nu + d) * (1.0 - rho * rho) * (1.0 + maha / nu)
}

/// The law `t_d(μ̃(x), Σ̃(x), ν + d)` of the reversible t step from `x`.
pub fn reversible_t_law(x: &DVector<f64>, p: &StudentT, rho: f64) -> Result<StudentT> {
    check_dim(x, p.dim())?;
    check_rho(rho)?;
    let c = reversible_scale(p, p.mahalanobis(x), rho);
    let loc = p.mu() * (1.0 - rho) + x * rho;
    StudentT::new(loc, p.sigma() * c, p.nu() + p.dim() as f64)
}

/// One draw of the reversible t transition with invariant density `p`.
pub fn draw_reversible_t<R: Rng + ?Sized>(
    x: &DVector<f64>,
    p: &StudentT,
    rho: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    check_dim(x, p.dim())?;
    check_rho(rho)?;
    let d = p.dim();
    let c = reversible_scale(p, p.mahalanobis(x), rho);
    let nu_t = p.nu() + d as f64;
    let g: f64 = Gamma::new(0.5 * nu_t, 2.0 / nu_t).expect("valid gamma parameters").sample(rng);
    let u = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let step = p.chol() * u * (c / g).sqrt();
    Ok(p.mu() * (1.0 - rho) + x * rho + step)
}

/// Correlated mixture step `T_CMH`: `k ~ ω(k|x)`, `ρ ~ law`, then a reversible t step.
pub fn draw_cmh<R: Rng + ?Sized>(x: &DVector<f64>, m: &TMixture, law: &RhoLaw, rng: &mut R) -> Result<DVector<f64>> {
    check_dim(x, m.dim())?;
    let mut buf = Vec::with_capacity(m.len());
    m.weighted_component_ln_pdfs(x, &mut buf);
    let resp = normalize_log_weights(&buf)?;
    cmh_from_responsibilities(x, m, &resp, law, rng)
}

fn cmh_from_responsibilities<R: Rng + ?Sized>(
    x: &DVector<f64>,
    m: &TMixture,
    resp: &[f64],
    law: &RhoLaw,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let k = sample_index(resp, rng);
    let rho = law.sample(rng);
    draw_reversible_t(x, &m.components()[k], rho, rng)
}

/// Block step `T_BS`: `k ~ ω(k|x)` at the full point, `z_B = x_B`, and `z_A`
/// from the exact conditional of component `k`.
pub fn draw_block<R: Rng + ?Sized>(
    x: &DVector<f64>,
    m: &TMixture,
    part: &Partition,
    rng: &mut R,
) -> Result<DVector<f64>> {
    check_dim(x, m.dim())?;
    let mut buf = Vec::with_capacity(m.len());
    m.weighted_component_ln_pdfs(x, &mut buf);
    let resp = normalize_log_weights(&buf)?;
    block_from_responsibilities(x, m, &resp, part, rng)
}

fn block_from_responsibilities<R: Rng + ?Sized>(
    x: &DVector<f64>,
    m: &TMixture,
    resp: &[f64],
    part: &Partition,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if part.dim() != x.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: part.dim() });
    }
    let k = sample_index(resp, rng);
    let x_b = DVector::from_iterator(part.index_b().len(), part.index_b().iter().map(|&i| x[i]));
    let cond = conditional_t(&m.components()[k], part, &x_b)?;
    let z_a = cond.sample(rng);
    let mut z = x.clone();
    for (j, &i) in part.index_a().iter().enumerate() {
        z[i] = z_a[j];
    }
    Ok(z)
}

/// Random partition: each coordinate goes to `B` with probability `p_b`;
/// draws leaving `A` empty are rejected and redrawn.
pub fn select_partition<R: Rng + ?Sized>(d: usize, p_b: f64, rng: &mut R) -> Result<Partition> {
    if d == 0 {
        return Err(Error::InvalidParameter("dimension must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&p_b) {
        return Err(Error::InvalidParameter(format!("p_b = {p_b} must lie in [0, 1)")));
    }
    loop {
        let a: Vec<usize> = (0..d).filter(|_| rng.random::<f64>() >= p_b).collect();
        if !a.is_empty() {
            return Partition::new(a, d);
        }
    }
}

/// Proposal-side quantities at one point, cached with the chain state.
#[derive(Debug, Clone)]
pub struct PointCache {
    pub ln_g0: f64,
    pub ln_gm: f64,
    /// `ln ω_k + ln ζ_k(x)` per component.
    pub weighted: Vec<f64>,
}

impl PointCache {
    pub fn new(x: &DVector<f64>, m: &TMixture, g0: &dyn Envelope) -> Self {
        let mut weighted = Vec::with_capacity(m.len());
        m.weighted_component_ln_pdfs(x, &mut weighted);
        let ln_gm = crate::special::logsumexp(&weighted);
        Self { ln_g0: g0.ln_pdf(x), ln_gm, weighted }
    }

    /// `ln q*(x) = ln(β₀ g₀(x) + (1 - β₀) g_M(x))`.
    pub fn ln_q_star(&self, beta0: f64) -> f64 {
        combine_q_star(self.ln_g0, self.ln_gm, beta0)
    }

    /// Index of the component maximising `ω_k ζ_k(x)`.
    pub fn khat(&self) -> usize {
        argmax_first(&self.weighted)
    }
}

fn combine_q_star(ln_g0: f64, ln_gm: f64, beta0: f64) -> f64 {
    logaddexp(beta0.ln() + ln_g0, (1.0 - beta0).ln() + ln_gm)
}

/// `ln q*(x)` for the heavy-tailed defensive mixture.
pub fn ln_q_star(x: &DVector<f64>, m: &TMixture, g0: &dyn Envelope, beta0: f64) -> Result<f64> {
    check_dim(x, m.dim())?;
    check_dim(x, g0.dim())?;
    Ok(combine_q_star(g0.ln_pdf(x), m.ln_pdf(x), beta0))
}

/// One draw from the composed proposal `q(z|x)`.
pub fn draw_acmh(
    x: &DVector<f64>,
    m: &TMixture,
    g0: &dyn Envelope,
    cfg: &ProposalConfig,
    rng: &mut dyn RngCore,
) -> Result<ProposalDraw> {
    check_dim(x, m.dim())?;
    check_dim(x, g0.dim())?;
    let cache = PointCache::new(x, m, g0);
    draw_acmh_cached(x, &cache, m, g0, cfg, rng)
}

/// [`draw_acmh`] reusing density values already computed at `x`.
pub fn draw_acmh_cached(
    x: &DVector<f64>,
    cache: &PointCache,
    m: &TMixture,
    g0: &dyn Envelope,
    cfg: &ProposalConfig,
    rng: &mut dyn RngCore,
) -> Result<ProposalDraw> {
    let ln_q = cache.ln_q_star(cfg.beta0);
    if !ln_q.is_finite() {
        return Err(Error::DegeneratePoint);
    }
    if rng.random::<f64>() < cfg.delta {
        return Ok(if rng.random::<f64>() < cfg.beta0 {
            ProposalDraw { z: g0.sample(rng), branch: Branch::IndependentG0 }
        } else {
            ProposalDraw { z: m.sample(rng), branch: Branch::IndependentGm }
        });
    }
    let p_g0 = (cfg.beta0.ln() + cache.ln_g0 - ln_q).exp();
    if rng.random::<f64>() < p_g0 {
        return Ok(ProposalDraw { z: g0.sample(rng), branch: Branch::IndependentG0 });
    }
    let resp = normalize_log_weights(&cache.weighted)?;
    let d = x.len();
    if rng.random::<f64>() < cfg.gamma && d >= 2 && cfg.p_b > 0.0 {
        let part = loop {
            let p = select_partition(d, cfg.p_b, rng)?;
            if !p.index_b().is_empty() {
                break p;
            }
        };
        let z = block_from_responsibilities(x, m, &resp, &part, rng)?;
        return Ok(ProposalDraw { z, branch: Branch::Block });
    }
    let z = cmh_from_responsibilities(x, m, &resp, &cfg.rho_law, rng)?;
    Ok(ProposalDraw { z, branch: Branch::Cmh })
}

/// Analytic probability of each branch tag of [`draw_acmh`] at a point, in
/// the order of [`Branch::ALL`].
pub fn branch_probabilities(cache: &PointCache, cfg: &ProposalConfig, d: usize) -> [f64; 5] {
    let ln_q = cache.ln_q_star(cfg.beta0);
    let p_g0 = (cfg.beta0.ln() + cache.ln_g0 - ln_q).exp();
    let rest = (1.0 - cfg.delta) * (1.0 - p_g0);
    let gamma = if d >= 2 && cfg.p_b > 0.0 { cfg.gamma } else { 0.0 };
    [
        cfg.delta * cfg.beta0 + (1.0 - cfg.delta) * p_g0,
        cfg.delta * (1.0 - cfg.beta0),
        rest * (1.0 - gamma),
        rest * gamma,
        0.0,
    ]
}

/// Unclipped log Metropolis-Hastings ratio for a reversible proposal.
pub fn log_ratio_from_parts(ln_pi_x: f64, ln_q_x: f64, ln_pi_z: f64, ln_q_z: f64) -> f64 {
    if ln_pi_z == f64::NEG_INFINITY || ln_pi_z.is_nan() {
        return f64::NEG_INFINITY;
    }
    let r = ln_pi_z - ln_pi_x + ln_q_x - ln_q_z;
    if r.is_nan() {
        f64::NEG_INFINITY
    } else {
        r
    }
}

/// `min(0, ln π(z) - ln π(x) + ln q*(x) - ln q*(z))`; `-∞` outside the support.
pub fn acmh_log_accept(
    x: &DVector<f64>,
    z: &DVector<f64>,
    ln_pi: &dyn Fn(&DVector<f64>) -> f64,
    m: &TMixture,
    g0: &dyn Envelope,
    beta0: f64,
) -> Result<f64> {
    let ln_pi_x = ln_pi(x);
    if !ln_pi_x.is_finite() {
        return Err(Error::NonFiniteStart);
    }
    let ln_pi_z = ln_pi(z);
    if ln_pi_z == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let r = log_ratio_from_parts(ln_pi_x, ln_q_star(x, m, g0, beta0)?, ln_pi_z, ln_q_star(z, m, g0, beta0)?);
    Ok(r.min(0.0))
}

/// `ν/(ν-2) Σ` when `ν > 2`, otherwise `Σ`.
fn rw_inflation(nu: f64) -> f64 {
    if nu > 2.0 {
        nu / (nu - 2.0)
    } else {
        1.0
    }
}

/// Covariance `κ Σ̃_k` of the random-walk step around component `k`.
pub fn rw_covariance(m: &TMixture, k: usize, kappa: f64) -> DMatrix<f64> {
    let c = &m.components()[k];
    c.sigma() * (kappa * rw_inflation(c.nu()))
}

/// Gaussian random-walk proposal with covariance `κ Σ̃_{k̂(x)}`.
pub fn draw_rw<R: Rng + ?Sized>(
    x: &DVector<f64>,
    m: &TMixture,
    cfg: &ProposalConfig,
    rng: &mut R,
) -> Result<DVector<f64>> {
    check_dim(x, m.dim())?;
    let k = crate::mixture_t::khat(x, m);
    Ok(draw_rw_at(x, m, k, cfg.kappa, rng))
}

pub(crate) fn draw_rw_at<R: Rng + ?Sized>(
    x: &DVector<f64>,
    m: &TMixture,
    k: usize,
    kappa: f64,
    rng: &mut R,
) -> DVector<f64> {
    let c = &m.components()[k];
    let s = (kappa * rw_inflation(c.nu())).sqrt();
    let u = DVector::from_fn(x.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    x + c.chol() * u * s
}
