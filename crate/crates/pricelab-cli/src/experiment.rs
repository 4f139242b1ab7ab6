//! One experiment directory: artifacts, checks and the manifest tying them together.

use crate::config::{sha256_hex, ExperimentConfig};
use anyhow::{Context, Result};
use pricelab::timedomain::TimeTrace;
use serde::Serialize;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub detail: String,
    pub pass: bool,
}

/// A library error tagged with the stage that raised it.
#[derive(Debug)]
pub struct StageError {
    pub module: &'static str,
    pub error: pricelab::Error,
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {}", self.module, self.error)
    }
}

impl std::error::Error for StageError {}

pub fn stage<T>(module: &'static str, r: pricelab::Result<T>) -> std::result::Result<T, StageError> {
    r.map_err(|error| StageError { module, error })
}

pub fn hint(e: &pricelab::Error) -> &'static str {
    use pricelab::Error::*;
    match e {
        ExcludedKappa(_) => "choose a non-integer kappa greater than 1",
        InvalidProfile(_) | DegenerateMetric(_) | OrderViolation { .. } => {
            "check the metric amplitudes; the perturbation must stay small and decay at order kappa"
        }
        ResonanceSuspected { .. } => "shift the spectral parameter slightly or refine dx",
        Resolution { .. } => "decrease dx or lower sigma_max",
        Cfl(_) | Instability(_) => "lower courant or refine dr",
        Underflow(_) => "move fit_t2 earlier or the observer closer to the source",
        DomainTooSmall(_) => "raise r_factor / r_static or pick a heavier weight",
        Quadrature(_) => "decrease d_sigma or raise sigma_max",
        ExpansionExhausted { .. } => "use an expansion order N ≤ ⌊κ⌋+1",
        AmplitudeTooLarge(_) => "reduce the perturbation amplitude",
        Aliasing(_) => "the transform is not resolved; check the sample is compactly supported",
        FitDegenerate(_) => "widen the fit window",
        _ => "check the command arguments and config values",
    }
}

pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub dir: PathBuf,
    command: String,
    artifacts: Vec<(String, String)>,
    pub checks: Vec<Check>,
    extra: serde_json::Map<String, Value>,
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig, command: &str) -> Result<Self> {
        let dir = PathBuf::from(&cfg.output);
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Experiment { cfg, dir, command: command.into(), artifacts: Vec::new(), checks: Vec::new(), extra: Default::default() })
    }

    pub fn record(&mut self, key: &str, v: impl Serialize) {
        self.extra.insert(key.into(), serde_json::to_value(v).expect("serializable"));
    }

    pub fn check(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), detail: detail.into(), pass });
    }

    fn save(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.artifacts.retain(|(n, _)| n != name);
        self.artifacts.push((name.into(), sha256_hex(bytes)));
        Ok(())
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        self.save(name, text.as_bytes())
    }

    pub fn write_json(&mut self, name: &str, v: &impl Serialize) -> Result<()> {
        let mut s = serde_json::to_string_pretty(v)?;
        s.push('\n');
        self.save(name, s.as_bytes())
    }

    pub fn write_csv<R: Serialize>(&mut self, name: &str, rows: &[R]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
        self.save(name, &bytes)
    }

    pub fn write_trace(&mut self, name: &str, traces: &[&TimeTrace]) -> Result<()> {
        let rows: Vec<TraceRow> = traces
            .iter()
            .flat_map(|tr| {
                tr.values.iter().enumerate().map(|(k, v)| TraceRow {
                    t: tr.time(k),
                    re: v.re,
                    im: v.im,
                    method: tr.method.tag().to_string(),
                })
            })
            .collect();
        self.write_csv(name, &rows)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// Writes the manifest, prints the checks and returns the exit code.
    pub fn finish(self, failure: Option<&anyhow::Error>) -> Result<i32> {
        let status = match failure {
            Some(_) => "error",
            None if self.passed() => "pass",
            None => "fail",
        };
        let error = failure.map(|e| match e.downcast_ref::<StageError>() {
            Some(s) => json!({ "module": s.module, "message": s.error.to_string(), "hint": hint(&s.error) }),
            None => json!({ "module": "cli", "message": format!("{e:#}"), "hint": "see the message" }),
        });
        let operator = self.cfg.operator().ok();
        let op_hash = operator.as_ref().map(|op| sha256_hex(serde_json::to_string(op).expect("serializable").as_bytes()));
        let manifest = json!({
            "tool": "pricelab",
            "command": self.command,
            "versions": { "cli": env!("CARGO_PKG_VERSION"), "library": pricelab::VERSION },
            "config": self.cfg.resolved(),
            "config_sha256": self.cfg.hash(),
            "operator": operator,
            "operator_sha256": op_hash,
            "grid": {
                "resolvent": self.cfg.solver(),
                "evolution": self.cfg.evolve(),
                "synthesis": self.cfg.synthesis_options(),
            },
            "exec": { "strategy": format!("{:?}", self.cfg.exec).to_lowercase(), "workers": self.cfg.workers },
            "artifacts": self.artifacts.iter().map(|(n, h)| json!({ "file": n, "sha256": h })).collect::<Vec<_>>(),
            "checks": self.checks,
            "results": self.extra,
            "status": status,
            "partial": failure.is_some(),
            "error": error,
        });
        let mut s = serde_json::to_string_pretty(&manifest)?;
        s.push('\n');
        std::fs::write(self.dir.join("manifest.json"), s)?;
        for c in &self.checks {
            println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        if let Some(e) = failure {
            match e.downcast_ref::<StageError>() {
                Some(s) => eprintln!("error in {}: {}\n  hint: {}", s.module, s.error, hint(&s.error)),
                None => eprintln!("error: {e:#}"),
            }
            if !self.artifacts.is_empty() {
                eprintln!("  partial artifacts left in {} (flagged in manifest.json)", self.dir.display());
            }
            return Ok(1);
        }
        println!("{status}: {} ({} artifacts)", self.dir.display(), self.artifacts.len());
        Ok(if status == "pass" { 0 } else { 1 })
    }
}

#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub re: f64,
    pub im: f64,
    pub method: String,
}

pub fn read_trace(path: &Path) -> Result<TimeTrace> {
    let mut rd = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let rows: Vec<TraceRow> = rd.deserialize().collect::<std::result::Result<_, _>>()?;
    anyhow::ensure!(rows.len() >= 2, "{}: need at least two samples", path.display());
    let method = rows[0].method.clone();
    anyhow::ensure!(rows.iter().all(|r| r.method == method), "{}: mixed trace methods", path.display());
    let (t0, dt) = (rows[0].t, rows[1].t - rows[0].t);
    let uniform = rows.iter().enumerate().all(|(k, r)| (r.t - (t0 + k as f64 * dt)).abs() <= 1e-9 * (1.0 + r.t.abs()));
    anyhow::ensure!(dt > 0.0 && uniform, "{}: times must be uniformly spaced", path.display());
    let method = serde_json::from_value(Value::String(method.clone()))
        .with_context(|| format!("unknown trace method {method:?}"))?;
    Ok(TimeTrace {
        r0: f64::NAN,
        t0,
        dt,
        values: rows.iter().map(|r| num_complex::Complex64::new(r.re, r.im)).collect(),
        method,
    })
}
