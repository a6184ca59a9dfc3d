//! Chain performance metrics: integrated autocorrelation time, squared
//! jumping distance, log predictive density scores and CRPS.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{ln_std_normal_pdf, logsumexp, ndtr};

/// Largest lag entering the IACT sum.
pub const MAX_IACT_LAG: usize = 1000;
/// Floor applied to log KDE values.
pub const LOG_DENSITY_FLOOR: f64 = -745.0;

fn mean(s: &[f64]) -> f64 {
    s.iter().sum::<f64>() / s.len() as f64
}

/// Sample autocorrelations `ρ̂_1..ρ̂_max_lag` with the biased (divide by
/// `M`) autocovariance.
pub fn autocorrelations(s: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = s.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let m = mean(s);
    let c: Vec<f64> = s.iter().map(|v| v - m).collect();
    let gamma0 = c.iter().map(|v| v * v).sum::<f64>();
    if !(gamma0 > 0.0) {
        return Err(Error::DegenerateSeries);
    }
    Ok((1..=max_lag.min(n - 1)).map(|t| autocov(&c, t) / gamma0).collect())
}

fn autocov(c: &[f64], t: usize) -> f64 {
    c[..c.len() - t].iter().zip(&c[t..]).map(|(a, b)| a * b).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IactEstimate {
    pub value: f64,
    /// First lag whose autocorrelation falls inside `±2/√(M - t)`.
    pub cutoff: Option<usize>,
    /// Number of lags summed.
    pub lags_used: usize,
}

/// `1 + 2 Σ_{t ≤ L*} ρ̂_t` with `L* = min(1000, L)` and `L` the first lag where
/// `|ρ̂_t| ≤ 2/√(M - t)`.
pub fn iact_detail(s: &[f64]) -> Result<IactEstimate> {
    let n = s.len();
    if n < 10 {
        return Err(Error::InsufficientData { needed: 10, got: n });
    }
    let m = mean(s);
    let c: Vec<f64> = s.iter().map(|v| v - m).collect();
    let gamma0 = c.iter().map(|v| v * v).sum::<f64>();
    if !(gamma0 > 0.0) {
        return Err(Error::DegenerateSeries);
    }
    let mut rho = Vec::new();
    let mut cutoff = None;
    for t in 1..n {
        let r = autocov(&c, t) / gamma0;
        rho.push(r);
        if r.abs() <= 2.0 / ((n - t) as f64).sqrt() {
            cutoff = Some(t);
            break;
        }
        if t >= MAX_IACT_LAG {
            break;
        }
    }
    let lags_used = cutoff.unwrap_or(n - 1).min(MAX_IACT_LAG);
    let value = 1.0 + 2.0 * rho[..lags_used].iter().sum::<f64>();
    Ok(IactEstimate { value, cutoff, lags_used })
}

pub fn iact(s: &[f64]) -> Result<f64> {
    Ok(iact_detail(s)?.value)
}

/// Mean squared successive difference.
pub fn sq_jump(s: &[f64]) -> Result<f64> {
    if s.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: s.len() });
    }
    let total: f64 = s.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    Ok(total / (s.len() - 1) as f64)
}

pub fn acceptance_rate(flags: &[bool]) -> f64 {
    if flags.is_empty() {
        return 0.0;
    }
    flags.iter().filter(|f| **f).count() as f64 / flags.len() as f64
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule `1.06 · min(sd, IQR/1.34) · n^{-1/5}`.
///
/// When the robust spread is zero the standard deviation is used instead,
/// and a constant sample gets bandwidth `1e-3 · max(1, |x|)`.
pub fn silverman_bandwidth(sample: &[f64]) -> f64 {
    let n = sample.len();
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = mean(sample);
    let sd = if n > 1 { (sample.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let mut spread = sd.min(iqr / 1.34);
    if !(spread > 0.0) {
        spread = sd;
    }
    if !(spread > 0.0) {
        return 1e-3 * m.abs().max(1.0);
    }
    1.06 * spread * (n as f64).powf(-0.2)
}

/// One-dimensional Gaussian kernel density estimate.
#[derive(Debug, Clone)]
pub struct Kde {
    sorted: Vec<f64>,
    bandwidth: f64,
}

impl Kde {
    pub fn new(sample: &[f64], bandwidth: f64) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::InvalidParameter(format!("bandwidth {bandwidth} must be positive")));
        }
        let mut sorted = sample.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted, bandwidth })
    }

    /// KDE with the Silverman bandwidth.
    pub fn silverman(sample: &[f64]) -> Result<Self> {
        Self::new(sample, silverman_bandwidth(sample))
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Log density. Sample points further than `nearest + 12h` from `x`
    /// contribute less than `e^{-72}` each relative to the nearest one and
    /// are skipped.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let s = &self.sorted;
        let pos = s.partition_point(|v| *v < x);
        let mut nearest = f64::INFINITY;
        if pos < s.len() {
            nearest = nearest.min(s[pos] - x);
        }
        if pos > 0 {
            nearest = nearest.min(x - s[pos - 1]);
        }
        let reach = nearest + 12.0 * h;
        let lo = s.partition_point(|v| *v < x - reach);
        let hi = s.partition_point(|v| *v <= x + reach);
        let terms: Vec<f64> = s[lo..hi].iter().map(|v| ln_std_normal_pdf((x - v) / h)).collect();
        logsumexp(&terms) - (s.len() as f64).ln() - h.ln()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x == f64::INFINITY {
            return 1.0;
        }
        if x == f64::NEG_INFINITY {
            return 0.0;
        }
        let h = self.bandwidth;
        self.sorted.iter().map(|v| ndtr((x - v) / h)).sum::<f64>() / self.sorted.len() as f64
    }

    /// KDE mass of the interval `(a, b)`.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        (self.cdf(b) - self.cdf(a)).max(0.0)
    }
}

/// `ln f̂(x)` through a KDE.
pub fn kde_logpdf(k: &Kde, x: f64) -> f64 {
    k.ln_pdf(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpdsResult {
    pub value: f64,
    /// Test evaluations that hit the log-density floor.
    pub floored: usize,
}

/// Mean over marginals of the mean log KDE (fitted to `iterates`) at `test`.
pub fn lpds(iterates: &DMatrix<f64>, test: &DMatrix<f64>) -> Result<LpdsResult> {
    let d = iterates.ncols();
    if test.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, got: test.ncols() });
    }
    if test.nrows() < 100 {
        return Err(Error::InsufficientData { needed: 100, got: test.nrows() });
    }
    let mut total = 0.0;
    let mut floored = 0;
    for j in 0..d {
        let col: Vec<f64> = iterates.column(j).iter().copied().collect();
        let kde = Kde::silverman(&col)?;
        let mut s = 0.0;
        for &x in test.column(j).iter() {
            let mut v = kde.ln_pdf(x);
            if !(v >= LOG_DENSITY_FLOOR) {
                v = LOG_DENSITY_FLOOR;
                floored += 1;
            }
            s += v;
        }
        total += s / test.nrows() as f64;
    }
    Ok(LpdsResult { value: total / d as f64, floored })
}

/// A finite union of disjoint open intervals on the real line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    intervals: Vec<(f64, f64)>,
}

impl Region {
    pub fn new(mut intervals: Vec<(f64, f64)>) -> Result<Self> {
        intervals.retain(|(a, b)| b > a);
        intervals.sort_by(|x, y| x.0.total_cmp(&y.0));
        if intervals.windows(2).any(|w| w[1].0 < w[0].1) {
            return Err(Error::InvalidParameter("region intervals overlap".into()));
        }
        Ok(Self { intervals })
    }

    pub fn empty() -> Self {
        Self { intervals: Vec::new() }
    }

    pub fn whole_line() -> Self {
        Self { intervals: vec![(f64::NEG_INFINITY, f64::INFINITY)] }
    }

    /// `{x < -c} ∪ {x > c}`.
    pub fn tails(c: f64) -> Self {
        Self { intervals: vec![(f64::NEG_INFINITY, -c), (c, f64::INFINITY)] }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|(a, b)| x > *a && x < *b)
    }

    fn mass(&self, k: &Kde) -> f64 {
        self.intervals.iter().map(|(a, b)| k.mass(*a, *b)).sum()
    }
}

/// Censored likelihood score: `ln f̂(x)` for points in `A`, and the log KDE
/// mass of the complement for the rest, averaged over `data`.
pub fn censored_score(k: &Kde, data: &[f64], region: &Region) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let outside = (1.0 - region.mass(k)).clamp(0.0, 1.0).ln();
    let total: f64 = data.iter().map(|&x| if region.contains(x) { k.ln_pdf(x) } else { outside }).sum();
    Ok(total / data.len() as f64)
}

/// `μ²` if `y = 0`, `(1 - μ)²` if `y = 1`.
pub fn crps_bernoulli(mu: f64, y: bool) -> Result<f64> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::InvalidParameter(format!("probability {mu} outside [0, 1]")));
    }
    Ok(if y { (1.0 - mu).powi(2) } else { mu * mu })
}

/// Sum of Bernoulli CRPS values over test pairs.
pub fn crps_total(mus: &[f64], ys: &[bool]) -> Result<f64> {
    if mus.len() != ys.len() {
        return Err(Error::DimensionMismatch { expected: mus.len(), got: ys.len() });
    }
    mus.iter().zip(ys).map(|(m, y)| crps_bernoulli(*m, *y)).sum()
}

/// Per-coordinate chain summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub acc_rate: f64,
    pub iact: Vec<f64>,
    pub sqdist: Vec<f64>,
    pub iact_avg: f64,
    pub iact_max: f64,
    pub sqdist_avg: f64,
    pub sqdist_min: f64,
}

/// Summarises a chain; a coordinate that never moves gets an infinite IACT.
pub fn summarize(iterates: &DMatrix<f64>, accept_flags: &[bool]) -> Result<ChainSummary> {
    let d = iterates.ncols();
    let mut iacts = Vec::with_capacity(d);
    let mut jumps = Vec::with_capacity(d);
    for j in 0..d {
        let col: Vec<f64> = iterates.column(j).iter().copied().collect();
        iacts.push(match iact(&col) {
            Ok(v) => v,
            Err(Error::DegenerateSeries) => f64::INFINITY,
            Err(e) => return Err(e),
        });
        jumps.push(sq_jump(&col)?);
    }
    Ok(ChainSummary {
        acc_rate: acceptance_rate(accept_flags),
        iact_avg: iacts.iter().sum::<f64>() / d as f64,
        iact_max: iacts.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        sqdist_avg: jumps.iter().sum::<f64>() / d as f64,
        sqdist_min: jumps.iter().copied().fold(f64::INFINITY, f64::min),
        iact: iacts,
        sqdist: jumps,
    })
}

/// Column means of a matrix of iterates.
pub fn column_means(iterates: &DMatrix<f64>) -> DVector<f64> {
    iterates.row_mean().transpose()
}
