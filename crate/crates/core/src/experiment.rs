//! Batch experiments: target registry, sampler variants, replications and
//! on-disk run directories.

use std::fmt::{self, Display};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::arwmh::run_arwmh;
use crate::chain::{run, stream_rng, streams, ChainOutput, ChainStart, DeltaSchedule, RunConfig, RunOutput};
use crate::diagnostics::{autocorrelations, crps_total, lpds, summarize, ChainSummary, LpdsResult};
use crate::error::{Error, Result};
use crate::kernels::ProposalConfig;
use crate::smc::{anneal, ParticleSet, SmcConfig};
use crate::targets::{banana_target, msn_target, read_labelled_csv, CovarianceTarget, LogisticTarget, Target};

pub const TARGET_NAMES: [&str; 4] = ["msn", "banana", "logistic", "covariance"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Acmh,
    Arwmh,
    /// `δ ≡ 1`: independence proposals only.
    AcmhIndep,
    AcmhNoRw,
    /// `γ = 0`: no component-wise block step.
    AcmhNoBlock,
}

impl Variant {
    pub const ALL: [Variant; 5] =
        [Variant::Acmh, Variant::Arwmh, Variant::AcmhIndep, Variant::AcmhNoRw, Variant::AcmhNoBlock];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Acmh => "acmh",
            Variant::Arwmh => "arwmh",
            Variant::AcmhIndep => "acmh-indep",
            Variant::AcmhNoRw => "acmh-no-rw",
            Variant::AcmhNoBlock => "acmh-no-block",
        }
    }

    /// Applies the variant's ablation to a sampler configuration.
    pub fn apply(self, run: &mut RunConfig) {
        match self {
            Variant::AcmhIndep => run.delta_schedule = DeltaSchedule::Constant { delta: 1.0 },
            Variant::AcmhNoRw => run.rw_enabled = false,
            Variant::AcmhNoBlock => run.proposal.gamma = 0.0,
            Variant::Acmh | Variant::Arwmh => {}
        }
    }
}

impl Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Unknown { kind: "variant", name: s.to_string() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetConfig {
    pub name: String,
    /// Dimension for the synthetic targets; ignored by data targets.
    pub dim: usize,
    pub data: Option<PathBuf>,
    /// Held-out labelled rows for the logistic CRPS.
    pub test_data: Option<PathBuf>,
    /// Minimum eigenvalue gap for the covariance target.
    pub eps: f64,
    /// Include the matrix-exponential Jacobian in the covariance target.
    pub include_jacobian: bool,
}

impl TargetConfig {
    pub fn new(name: &str, dim: usize) -> Self {
        Self { name: name.to_string(), dim, data: None, test_data: None, eps: 1e-6, include_jacobian: true }
    }

    pub fn is_data_target(&self) -> bool {
        matches!(self.name.as_str(), "logistic" | "covariance")
    }
}

/// A constructed target, keeping the concrete logistic model for predictions.
pub enum BuiltTarget {
    Generic(Box<dyn Target>),
    Logistic(LogisticTarget),
}

impl BuiltTarget {
    pub fn as_target(&self) -> &dyn Target {
        match self {
            BuiltTarget::Generic(t) => t.as_ref(),
            BuiltTarget::Logistic(t) => t,
        }
    }
}

/// Looks a target up by name.
pub fn build_target(cfg: &TargetConfig) -> Result<BuiltTarget> {
    let data =
        || cfg.data.as_deref().ok_or_else(|| Error::InvalidParameter(format!("target {} needs a data CSV", cfg.name)));
    Ok(match cfg.name.as_str() {
        "msn" => BuiltTarget::Generic(Box::new(msn_target(cfg.dim)?)),
        "banana" => BuiltTarget::Generic(Box::new(banana_target(cfg.dim)?)),
        "logistic" => BuiltTarget::Logistic(LogisticTarget::from_csv(data()?)?),
        "covariance" => {
            BuiltTarget::Generic(Box::new(CovarianceTarget::from_csv(data()?, cfg.eps, cfg.include_jacobian)?))
        }
        other => return Err(Error::Unknown { kind: "target", name: other.to_string() }),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub target: TargetConfig,
    pub variant: Variant,
    pub run: RunConfig,
    pub smc: SmcConfig,
    pub replications: usize,
    pub out_dir: PathBuf,
    /// Exact-sampler test points for the LPDS, when the target has a sampler.
    pub lpds_test_points: usize,
    /// Record wall-clock times; off makes every output byte-reproducible.
    pub record_timing: bool,
    /// Autocorrelation lags written to `acf.csv`.
    pub acf_lags: usize,
}

impl ExperimentConfig {
    /// Defaults for a target: 50k burn-in and 50k sampling iterations, the
    /// ARWMH pre-pass on for data targets.
    pub fn new(target: TargetConfig, variant: Variant, out_dir: PathBuf) -> Self {
        let smc = SmcConfig { prepass_steps: target.is_data_target().then_some(1000), ..SmcConfig::default() };
        Self {
            run: RunConfig::for_dim(target.dim),
            target,
            variant,
            smc,
            replications: 1,
            out_dir,
            lpds_test_points: 5000,
            record_timing: true,
            acf_lags: 200,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !TARGET_NAMES.contains(&self.target.name.as_str()) {
            return Err(Error::Unknown { kind: "target", name: self.target.name.clone() });
        }
        if self.replications == 0 {
            return Err(Error::InvalidParameter("replications must be at least 1".into()));
        }
        if self.lpds_test_points < 100 {
            return Err(Error::InvalidParameter("lpds_test_points must be at least 100".into()));
        }
        self.smc.validate()?;
        self.run.validate()
    }

    /// Records the dimension of the built target. Data targets only know it
    /// after loading; a proposal still at the defaults of the old dimension
    /// is replaced by the defaults of the new one.
    pub fn resolve_dim(&mut self, d: usize) {
        if self.target.dim != d {
            if self.run.proposal == ProposalConfig::for_dim(self.target.dim) {
                self.run.proposal = ProposalConfig::for_dim(d);
            }
            self.target.dim = d;
        }
    }

    /// Sampler configuration for replication `r`, with the variant applied.
    pub fn replication_run_config(&self, r: usize) -> RunConfig {
        let mut run = self.run.clone();
        run.seed = self.run.seed.wrapping_add(r as u64);
        self.variant.apply(&mut run);
        run
    }

    /// Particle count `max(Np, 10 d)`.
    pub fn smc_config(&self, d: usize) -> SmcConfig {
        SmcConfig { n_particles: self.smc.n_particles.max(10 * d), ..self.smc.clone() }
    }
}

/// Diagnostics of one replication, as written to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub variant: Variant,
    pub target: String,
    pub d: usize,
    pub seed: u64,
    pub iterations: usize,
    pub acc_rate: f64,
    pub iact_avg: f64,
    pub iact_max: f64,
    pub sqdist_avg: f64,
    pub sqdist_min: f64,
    pub iact: Vec<f64>,
    pub sqdist: Vec<f64>,
    pub lpds: Option<f64>,
    pub lpds_floored: Option<usize>,
    /// LPDS of an exact-sampler chain of the same length on the same test set.
    pub lpds_exact: Option<f64>,
    pub crps: Option<f64>,
    /// Wall-clock seconds of the sampling loop, excluding initialisation.
    pub cpu_seconds: Option<f64>,
    pub ii_per_time: Option<f64>,
    pub acc_over_iact: f64,
    pub smc_acceptance: Vec<f64>,
    pub refits: Vec<RefitSummary>,
    pub history_len: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefitSummary {
    pub iteration: usize,
    pub stage: u8,
    pub g: usize,
    pub succeeded: bool,
    pub fit_points: usize,
    pub input_hash: String,
}

/// Everything produced by one replication.
pub struct Replication {
    pub run_config: RunConfig,
    pub particles: ParticleSet,
    pub main: ChainOutput,
    pub acmh: Option<RunOutput>,
    pub summary: ChainSummary,
    pub lpds: Option<LpdsResult>,
    pub report: Report,
}

fn rows_to_matrix(rows: &[DVector<f64>], d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j])
}

/// `n` exact draws from the target's EVAL stream, if it has a sampler.
fn exact_draws(target: &dyn Target, n: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Option<DMatrix<f64>> {
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        rows.push(target.sample_exact(rng)?);
    }
    Some(rows_to_matrix(&rows, target.dim()))
}

fn logistic_crps(model: &LogisticTarget, main: &ChainOutput, test: &Path) -> Result<f64> {
    let (x, y) = read_labelled_csv(test)?;
    let step = main.len().div_ceil(5000).max(1);
    let draws: Vec<DVector<f64>> = (0..main.len()).step_by(step).map(|i| main.iterates.row(i).transpose()).collect();
    let mus: Vec<f64> = (0..x.nrows())
        .map(|i| {
            let raw: Vec<f64> = x.row(i).iter().copied().collect();
            model.predictive(&draws, &raw)
        })
        .collect();
    let ys: Vec<bool> = y.iter().map(|v| *v == 1.0).collect();
    crps_total(&mus, &ys)
}

/// Runs replication `r` without touching the filesystem.
pub fn run_replication(cfg: &ExperimentConfig, target: &BuiltTarget, r: usize) -> Result<Replication> {
    let t = target.as_target();
    let d = t.dim();
    if cfg.target.dim != d {
        return Err(Error::DimensionMismatch { expected: cfg.target.dim, got: d });
    }
    let run_cfg = cfg.replication_run_config(r);
    let particles = anneal(t, &cfg.smc_config(d), &mut stream_rng(run_cfg.seed, streams::SMC))?;
    let start = ChainStart::from_particles(particles.particles.clone(), t)?;

    let clock = Instant::now();
    let (main, acmh) = match cfg.variant {
        Variant::Arwmh => {
            let mut rng = stream_rng(run_cfg.seed, streams::BASELINE);
            let ln_pi = |x: &DVector<f64>| t.ln_density(x);
            (run_arwmh(&ln_pi, &start.x0, run_cfg.n_burnin, run_cfg.n_sample, &mut rng)?, None)
        }
        _ => {
            let out = run(t, &run_cfg, &start)?;
            (out.main.clone(), Some(out))
        }
    };
    let seconds = clock.elapsed().as_secs_f64();

    let summary = summarize(&main.iterates, &main.accept_flags)?;
    let mut eval_rng = stream_rng(run_cfg.seed, streams::EVAL);
    let mut lpds_res = None;
    let mut lpds_exact = None;
    if let Some(test) = exact_draws(t, cfg.lpds_test_points, &mut eval_rng) {
        lpds_res = Some(lpds(&main.iterates, &test)?);
        if let Some(reference) = exact_draws(t, main.len(), &mut eval_rng) {
            lpds_exact = Some(lpds(&reference, &test)?.value);
        }
    }
    let crps = match (target, &cfg.target.test_data) {
        (BuiltTarget::Logistic(model), Some(path)) => Some(logistic_crps(model, &main, path)?),
        _ => None,
    };
    let cpu_seconds = cfg.record_timing.then_some(seconds);
    let report = Report {
        variant: cfg.variant,
        target: cfg.target.name.clone(),
        d,
        seed: run_cfg.seed,
        iterations: main.len(),
        acc_rate: summary.acc_rate,
        iact_avg: summary.iact_avg,
        iact_max: summary.iact_max,
        sqdist_avg: summary.sqdist_avg,
        sqdist_min: summary.sqdist_min,
        iact: summary.iact.clone(),
        sqdist: summary.sqdist.clone(),
        lpds: lpds_res.map(|l| l.value),
        lpds_floored: lpds_res.map(|l| l.floored),
        lpds_exact,
        crps,
        cpu_seconds,
        ii_per_time: cpu_seconds.map(|s| main.len() as f64 / (summary.iact_avg * s)),
        acc_over_iact: 1000.0 * summary.acc_rate / summary.iact_avg,
        smc_acceptance: particles.acceptance.clone(),
        refits: acmh
            .as_ref()
            .map(|o| {
                o.refits
                    .iter()
                    .map(|f| RefitSummary {
                        iteration: f.iteration,
                        stage: f.stage,
                        g: f.g,
                        succeeded: f.succeeded,
                        fit_points: f.fit_points,
                        input_hash: f.input_hash.clone(),
                    })
                    .collect()
            })
            .unwrap_or_default(),
        history_len: acmh.as_ref().map(|o| o.history_len),
    };
    Ok(Replication { run_config: run_cfg, particles, main, acmh, summary, lpds: lpds_res, report })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

fn write_particles(path: &Path, particles: &[DVector<f64>]) -> Result<()> {
    let d = particles.first().map_or(0, |p| p.len());
    let mut w = csv::Writer::from_path(path)?;
    w.write_record((1..=d).map(|j| format!("x{j}")))?;
    for p in particles {
        w.write_record(p.iter().map(|v| format!("{v:.16e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Tidy autocorrelation table: one row per lag, one column per coordinate.
fn write_acf(path: &Path, iterates: &DMatrix<f64>, lags: usize) -> Result<()> {
    let d = iterates.ncols();
    let max_lag = lags.min(iterates.nrows().saturating_sub(1));
    let cols: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let s: Vec<f64> = iterates.column(j).iter().copied().collect();
            let rho = autocorrelations(&s, max_lag).unwrap_or_else(|_| vec![f64::NAN; max_lag]);
            std::iter::once(1.0).chain(rho).collect::<Vec<f64>>()
        })
        .collect();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(std::iter::once("lag".to_string()).chain((1..=d).map(|j| format!("x{j}"))))?;
    for lag in 0..=max_lag {
        w.write_record(std::iter::once(lag.to_string()).chain(cols.iter().map(|c| format!("{:.16e}", c[lag]))))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a replication's run directory.
pub fn write_run_dir(dir: &Path, cfg: &ExperimentConfig, rep: &Replication, acf_lags: usize) -> Result<()> {
    fs::create_dir_all(dir)?;
    let resolved = ExperimentConfig { run: rep.run_config.clone(), ..cfg.clone() };
    write_json(&dir.join("config.json"), &resolved)?;
    rep.main.write_csv(&dir.join("chain_main.csv"))?;
    write_particles(&dir.join("particles.csv"), &rep.particles.particles)?;
    write_acf(&dir.join("acf.csv"), &rep.main.iterates, acf_lags)?;
    if let Some(out) = &rep.acmh {
        if let Some(trial) = &out.trial {
            trial.write_csv(&dir.join("chain_trial.csv"))?;
        }
        write_json(&dir.join("mixture_0.json"), &out.initial_mixture)?;
        for f in &out.refits {
            write_json(&dir.join(format!("mixture_{}.json", f.iteration)), &f.mixture)?;
            if let Some(report) = &f.report {
                write_json(&dir.join(format!("fit_{}.json", f.iteration)), report)?;
            }
        }
    }
    write_json(&dir.join("report.json"), &rep.report)
}

pub const SUMMARY_HEADER: [&str; 12] = [
    "replication",
    "variant",
    "d",
    "acc_rate",
    "iact_avg",
    "iact_max",
    "sqdist_avg",
    "sqdist_min",
    "lpds",
    "cpu_seconds",
    "ii_per_time",
    "acc_over_iact",
];

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

fn summary_row(label: &str, r: &Report) -> Vec<String> {
    vec![
        label.to_string(),
        r.variant.to_string(),
        r.d.to_string(),
        format!("{:.16e}", r.acc_rate),
        format!("{:.16e}", r.iact_avg),
        format!("{:.16e}", r.iact_max),
        format!("{:.16e}", r.sqdist_avg),
        format!("{:.16e}", r.sqdist_min),
        fmt_opt(r.lpds),
        fmt_opt(r.cpu_seconds),
        fmt_opt(r.ii_per_time),
        format!("{:.16e}", r.acc_over_iact),
    ]
}

fn mean_of(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    s / n as f64
}

fn mean_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.collect();
    v.map(|v| mean_of(v.into_iter()))
}

/// Field-wise mean of the replication reports.
pub fn average_report(reports: &[Report]) -> Report {
    let first = &reports[0];
    Report {
        acc_rate: mean_of(reports.iter().map(|r| r.acc_rate)),
        iact_avg: mean_of(reports.iter().map(|r| r.iact_avg)),
        iact_max: mean_of(reports.iter().map(|r| r.iact_max)),
        sqdist_avg: mean_of(reports.iter().map(|r| r.sqdist_avg)),
        sqdist_min: mean_of(reports.iter().map(|r| r.sqdist_min)),
        lpds: mean_opt(reports.iter().map(|r| r.lpds)),
        lpds_exact: mean_opt(reports.iter().map(|r| r.lpds_exact)),
        crps: mean_opt(reports.iter().map(|r| r.crps)),
        cpu_seconds: mean_opt(reports.iter().map(|r| r.cpu_seconds)),
        ii_per_time: mean_opt(reports.iter().map(|r| r.ii_per_time)),
        acc_over_iact: mean_of(reports.iter().map(|r| r.acc_over_iact)),
        ..first.clone()
    }
}

/// Writes `summary.csv`: one row per replication plus a `mean` row.
pub fn write_summary(path: &Path, reports: &[Report]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for (r, rep) in reports.iter().enumerate() {
        w.write_record(summary_row(&r.to_string(), rep))?;
    }
    if !reports.is_empty() {
        w.write_record(summary_row("mean", &average_report(reports)))?;
    }
    w.flush()?;
    Ok(())
}

/// Outcome of a batch: the successful reports and the failures by index.
pub struct ExperimentOutcome {
    pub reports: Vec<Report>,
    pub failures: Vec<(usize, Error)>,
    pub summary_path: PathBuf,
}

/// Runs every replication, writing `rep_<r>` run directories and
/// `summary.csv` under the output directory. Failed replications are
/// logged and reported back; the rest still complete.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let target = build_target(&cfg.target)?;
    let mut cfg = cfg.clone();
    cfg.resolve_dim(target.as_target().dim());
    let cfg = &cfg;
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    let mut reports = Vec::with_capacity(cfg.replications);
    let mut failures = Vec::new();
    for r in 0..cfg.replications {
        log::info!("{} on {}: replication {}/{}", cfg.variant, cfg.target.name, r + 1, cfg.replications);
        let result = run_replication(cfg, &target, r)
            .and_then(|rep| write_run_dir(&cfg.out_dir.join(format!("rep_{r}")), cfg, &rep, cfg.acf_lags).map(|_| rep));
        match result {
            Ok(rep) => reports.push(rep.report),
            Err(e) => {
                log::error!("replication {r} failed: {e}");
                failures.push((r, e));
            }
        }
    }
    let summary_path = cfg.out_dir.join("summary.csv");
    write_summary(&summary_path, &reports)?;
    Ok(ExperimentOutcome { reports, failures, summary_path })
}
