//! `pricelab`: run late-time tail experiments from a flat config file.
//!
//! Exit codes: 0 all checks pass, 1 a check failed or a stage errored, 2 usage or schema error.

mod commands;
mod config;
mod experiment;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use config::{ExperimentConfig, SchemaError};
use experiment::{read_trace, stage, Experiment};
use pricelab::conormal::SampleKind;
use pricelab::timedomain::fit_decay;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "pricelab", version, about = "Late-time tail experiments for waves on asymptotically flat backgrounds")]
struct Cli {
    /// Worker threads for parallel sweeps [default: config `workers`, 0 = available parallelism]
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Config file (`key = value` lines) or an emitted manifest.json
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override one config entry
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Experiment directory [default: config `output`]
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Operator checks
    Model {
        #[command(subcommand)]
        cmd: CheckOnly,
    },
    /// Solve P_σ u = g for a bump source and sample u at the observers
    Resolve {
        #[command(flatten)]
        common: Common,
        /// Spectral parameters
        #[arg(long, value_delimiter = ',', default_value = "0,0.3,1,3")]
        sigma: Vec<f64>,
    },
    /// Zero-energy Mellin analysis checks
    Mellin {
        #[command(subcommand)]
        cmd: CheckOnly,
    },
    /// Neumann expansion of the twisted resolvent
    Neumann {
        #[command(subcommand)]
        cmd: CheckOnly,
    },
    /// Time-domain decay experiments
    Decay {
        #[command(subcommand)]
        cmd: DecayCmd,
    },
    /// Weighted norms of a bump source and the LE_σ/LE* resolvent ratio
    Norm {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,1,3")]
        sigma: Vec<f64>,
        /// LE order
        #[arg(long, default_value_t = 1)]
        n: usize,
        /// b-regularity for the H_b norm
        #[arg(long, default_value_t = 2)]
        s: usize,
        /// Weight for the H_b norm
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        w: f64,
    },
    /// Fourier decay of a conormal sample |σ|^α φ(σ)
    FtLemma {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        alpha: f64,
        /// Conormal order checked on the sample [default: ⌈α⌉+1]
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, value_enum, default_value_t = Sample::Power)]
        kind: Sample,
    },
    /// Print every config key with its default
    Schema,
    /// Function-space bookkeeping
    Spacecalc {
        #[command(subcommand)]
        cmd: SpacecalcCmd,
    },
}

#[derive(Subcommand)]
enum CheckOnly {
    Check(Common),
}

#[derive(Subcommand)]
enum SpacecalcCmd {
    /// Low-frequency iteration transcript and the high-frequency threshold
    Derive(Common),
}

#[derive(Subcommand)]
enum DecayCmd {
    /// Evolve, fit the tail and compare with −(κ+2)
    Run(Common),
    /// Fit a decay exponent to a trace CSV (t, re, im, method)
    Fit {
        trace: PathBuf,
        #[arg(long, default_value_t = 50.0)]
        t1: f64,
        #[arg(long, default_value_t = 500.0)]
        t2: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Evolution against σ-synthesis on the synthesis window
    Compare(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Sample {
    Power,
    LogOscillatory,
    Jump,
}

fn load(common: &Common, workers: Option<usize>) -> std::result::Result<ExperimentConfig, SchemaError> {
    let mut overrides = Vec::new();
    for s in &common.set {
        let (k, v) = s.split_once('=').ok_or_else(|| SchemaError(format!("--set {s:?}: expected KEY=VALUE")))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(w) = workers {
        overrides.push(("workers".into(), w.to_string()));
    }
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p, &overrides)?,
        None => ExperimentConfig::from_entries(&overrides)?,
    };
    if let Some(o) = &common.out {
        cfg.set_output(&o.to_string_lossy());
    }
    Ok(cfg)
}

type Step = fn(&mut Experiment) -> Result<()>;

fn run(common: &Common, workers: Option<usize>, name: &str, step: impl FnOnce(&mut Experiment) -> Result<()>) -> Result<i32> {
    let cfg = match load(common, workers) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return Ok(2);
        }
    };
    if cfg.workers > 0 && !pricelab::exec::set_workers(cfg.workers) {
        eprintln!("note: worker count {} not applied (parallel support disabled or pool already running)", cfg.workers);
    }
    let mut x = Experiment::new(cfg, name)?;
    let out = step(&mut x);
    x.finish(out.as_ref().err())
}

fn fit_only(trace: &Path, t1: f64, t2: f64, seed: u64) -> Result<i32> {
    let tr = read_trace(trace)?;
    match stage("timedomain", fit_decay(&tr, t1, t2, seed)) {
        Ok(f) => {
            println!("{}", serde_json::to_string_pretty(&f)?);
            Ok(0)
        }
        Err(e) => {
            eprintln!("error in {}: {}\n  hint: {}", e.module, e.error, experiment::hint(&e.error));
            Ok(1)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let w = cli.workers;
    let out = match &cli.cmd {
        Cmd::Model { cmd: CheckOnly::Check(c) } => run(c, w, "model check", commands::model_check as Step),
        Cmd::Resolve { common, sigma } => run(common, w, "resolve", |x| commands::resolve(x, sigma)),
        Cmd::Mellin { cmd: CheckOnly::Check(c) } => run(c, w, "mellin check", commands::mellin_check as Step),
        Cmd::Neumann { cmd: CheckOnly::Check(c) } => run(c, w, "neumann check", commands::neumann_check as Step),
        Cmd::Decay { cmd: DecayCmd::Run(c) } => run(c, w, "decay run", commands::decay_run as Step),
        Cmd::Decay { cmd: DecayCmd::Compare(c) } => run(c, w, "decay compare", commands::decay_compare as Step),
        Cmd::Decay { cmd: DecayCmd::Fit { trace, t1, t2, seed } } => fit_only(trace, *t1, *t2, *seed),
        Cmd::Norm { common, sigma, n, s, w: weight } => {
            run(common, w, "norm", |x| commands::norm(x, sigma, *n, *s, *weight))
        }
        Cmd::FtLemma { common, alpha, m, kind } => {
            let kind = match kind {
                Sample::Power => SampleKind::Power,
                Sample::LogOscillatory => SampleKind::LogOscillatory { c: 0.5, beta: 1.0 },
                Sample::Jump => SampleKind::Jump,
            };
            run(common, w, "ft-lemma", |x| commands::ft_lemma(x, *alpha, *m, kind))
        }
        Cmd::Schema => {
            print!("{}", config::schema_text());
            Ok(0)
        }
        Cmd::Spacecalc { cmd: SpacecalcCmd::Derive(c) } => run(c, w, "spacecalc derive", commands::spacecalc_derive as Step),
    };
    match out {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
