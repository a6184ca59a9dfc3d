//! Batch front end for the ACMH sampler and its baselines.

use std::path::PathBuf;
use std::process::ExitCode;

use acmh::experiment::{run_experiment, ExperimentConfig, TargetConfig, Variant};
use anyhow::{bail, Context, Result};
use clap::Parser;
use serde_json::Value;

#[derive(Debug, Parser)]
#[command(name = "acmh", version, about = "Adaptive correlated Metropolis-Hastings experiments")]
struct Args {
    /// Target name: msn, banana, logistic or covariance.
    #[arg(long, default_value = "msn")]
    target: String,
    /// Sampler: acmh, arwmh, acmh-indep, acmh-no-rw or acmh-no-block.
    #[arg(long, default_value = "acmh")]
    variant: String,
    /// Dimension of the synthetic targets.
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Sampling iterations after burn-in.
    #[arg(long, default_value_t = 50_000)]
    iters: usize,
    #[arg(long, default_value_t = 50_000)]
    burnin: usize,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON file whose fields override the flags and defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Data CSV for the logistic and covariance targets.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Leave wall-clock columns empty so outputs are byte-reproducible.
    #[arg(long)]
    no_timing: bool,
}

/// Recursively overlays `patch` onto `base`; objects merge, anything else replaces.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn resolve(args: &Args) -> Result<ExperimentConfig> {
    let variant: Variant = args.variant.parse()?;
    let mut target = TargetConfig::new(&args.target, args.dim);
    target.data = args.data.clone();
    let mut cfg = ExperimentConfig::new(target, variant, args.out.clone());
    cfg.run.n_sample = args.iters;
    cfg.run.n_burnin = args.burnin;
    cfg.run.seed = args.seed;
    cfg.replications = args.reps;
    cfg.record_timing = !args.no_timing;
    let Some(path) = &args.config else {
        return Ok(cfg);
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let patch: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if !patch.is_object() {
        bail!("config {} must hold a JSON object", path.display());
    }
    let mut merged = serde_json::to_value(&cfg)?;
    merge(&mut merged, patch);
    serde_json::from_value(merged).with_context(|| format!("applying {}", path.display()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let outcome = resolve(&args).and_then(|cfg| Ok(run_experiment(&cfg)?));
    match outcome {
        Ok(o) if o.failures.is_empty() => {
            println!("wrote {}", o.summary_path.display());
            ExitCode::SUCCESS
        }
        Ok(o) => {
            for (r, e) in &o.failures {
                eprintln!("replication {r} failed: {e}");
            }
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
