//! Flat `key = value` experiment configuration.
//!
//! Every key has a default; the resolved table (defaults included) is what gets hashed
//! and recorded in the manifest. A manifest can be fed back in place of a config file.

use pricelab::model::{build_operator, check_kappa, RadialProfile, ReducedOperator, SphericalMetric};
use pricelab::resolvent::SolverOptions;
use pricelab::spacecalc::Q;
use pricelab::timedomain::{EvolveOptions, SynthesisOptions};
use pricelab::Exec;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

/// A config that does not fit the schema. Always exit code 2.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaError(pub String);

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config schema: {}", self.0)
    }
}

impl std::error::Error for SchemaError {}

#[derive(Clone, Copy, Debug)]
enum Ty {
    Float,
    Positive,
    Count,
    Seed,
    Choice(&'static [&'static str]),
    Kappa,
    Rational,
    Radii,
    Text,
}

pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    ty: Ty,
    pub doc: &'static str,
}

const fn key(name: &'static str, default: &'static str, ty: Ty, doc: &'static str) -> Key {
    Key { name, default, ty, doc }
}

pub const SCHEMA: &[Key] = &[
    key("kind", "flat", Ty::Choice(&["flat", "potential", "metric"]), "operator family"),
    key("kappa", "5/2", Ty::Kappa, "decay order κ ∈ (1,∞)\\ℕ, as a fraction or decimal"),
    key("amplitude", "1", Ty::Float, "potential model: V = amplitude·⟨r⟩^(−κ−2)"),
    key("h00", "0", Ty::Float, "metric model: amplitude of h00 = a⟨r⟩^(−κ)"),
    key("h0r", "0", Ty::Float, "metric model: amplitude of h0r"),
    key("hrr", "0", Ty::Float, "metric model: amplitude of hrr"),
    key("hww", "0", Ty::Float, "metric model: amplitude of the angular perturbation"),
    key("v", "0", Ty::Float, "metric model: potential amplitude, order κ+2"),
    key("varpi", "0", Ty::Rational, "angular regularity ϖ ≥ 0 for the high-frequency bookkeeping"),
    key("p", "2", Ty::Count, "conormal order for the high-frequency bookkeeping"),
    key("s", "2", Ty::Rational, "b-regularity of the data for the low-frequency derivation"),
    key("ell", "0", Ty::Count, "angular mode"),
    key("source_radius", "2", Ty::Positive, "support radius of the bump source for resolver runs"),
    key("dx", "0.005", Ty::Positive, "resolvent grid step in x, r = sinh x"),
    key("r_factor", "200", Ty::Positive, "resolvent outer radius is r_factor/min(1,|σ|)"),
    key("r_static", "20000", Ty::Positive, "resolvent outer radius at σ = 0"),
    key("min_ppw", "10", Ty::Positive, "minimum points per wavelength"),
    key("dr", "0.005", Ty::Positive, "evolution grid step"),
    key("courant", "0.35", Ty::Positive, "evolution dt/dr"),
    key("pad", "5", Ty::Positive, "extra radius beyond the causal domain"),
    key("sample_dt", "0.1", Ty::Positive, "trace sampling interval"),
    key("t_end", "500", Ty::Positive, "evolution end time"),
    key("data_width", "0.5", Ty::Positive, "initial velocity exp(−r²/w²)·r^ℓ"),
    key("data_rmax", "10", Ty::Positive, "radius of the grid carrying the data"),
    key("observers", "2", Ty::Radii, "comma-separated observation radii"),
    key("d_sigma", "0.01", Ty::Positive, "σ-quadrature step"),
    key("sigma_max", "20", Ty::Positive, "σ-quadrature cutoff"),
    key("chi_inner", "0.5", Ty::Positive, "low/high split: χ = 1 below"),
    key("chi_outer", "1", Ty::Positive, "low/high split: χ = 0 above"),
    key("synthesis", "false", Ty::Choice(&["true", "false"]), "also synthesize in `decay run`"),
    key("synth_t0", "5", Ty::Positive, "synthesis window start"),
    key("synth_t1", "50", Ty::Positive, "synthesis window end"),
    key("synth_dt", "0.1", Ty::Positive, "synthesis time step"),
    key("synth_tol", "0.001", Ty::Positive, "allowed quadrature error estimate relative to sup|u|"),
    key("fit_t1", "50", Ty::Positive, "decay fit window start"),
    key("fit_t2", "500", Ty::Positive, "decay fit window end"),
    key("seed", "7", Ty::Seed, "bootstrap seed"),
    key("exponent_band", "0.35", Ty::Positive, "allowed |fitted − target| for decay exponents"),
    key("huygens_t1", "6", Ty::Positive, "flat runs: the tail is measured after this time"),
    key("huygens_tol", "0.001", Ty::Positive, "flat runs: allowed tail relative to the peak"),
    key("energy_tol", "0.001", Ty::Positive, "flat runs: allowed relative energy drift"),
    key("gap_tol", "0.001", Ty::Positive, "allowed evolution vs synthesis gap"),
    key("oracle_tol", "1e-6", Ty::Positive, "allowed resolvent vs free-resolvent error"),
    key("neumann_tol", "1e-8", Ty::Positive, "allowed Neumann reassembly residual"),
    key("exec", "parallel", Ty::Choice(&["parallel", "sequential"]), "sweep execution strategy"),
    key("workers", "0", Ty::Count, "worker threads, 0 = available parallelism"),
    key("output", "out", Ty::Text, "experiment directory"),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Flat,
    Potential,
    Metric,
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    raw: BTreeMap<String, String>,
    pub kind: Kind,
    pub kappa: Q,
    pub varpi: Q,
    pub p: i64,
    pub s: Q,
    pub ell: usize,
    pub observers: Vec<f64>,
    pub synthesis: bool,
    pub seed: u64,
    pub exec: Exec,
    pub workers: usize,
    pub output: String,
}

fn parse_rational(v: &str) -> Option<Q> {
    let v = v.trim();
    if let Ok(x) = v.parse::<Q>() {
        return Some(x);
    }
    let f: f64 = v.parse().ok()?;
    if !f.is_finite() {
        return None;
    }
    let x = Q::approximate_float(f)?;
    // only accept decimals that are represented exactly
    (*x.numer() as f64 / *x.denom() as f64 == f).then_some(x)
}

fn q_to_f64(x: Q) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

fn check_value(k: &Key, v: &str) -> Result<(), SchemaError> {
    let bad = |what: &str| SchemaError(format!("{} = {v:?}: expected {what}", k.name));
    match k.ty {
        Ty::Float => {
            v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| bad("a finite number"))?;
        }
        Ty::Positive => {
            v.parse::<f64>().ok().filter(|x| x.is_finite() && *x > 0.0).ok_or_else(|| bad("a positive number"))?;
        }
        Ty::Count => {
            v.parse::<usize>().map_err(|_| bad("a non-negative integer"))?;
        }
        Ty::Seed => {
            v.parse::<u64>().map_err(|_| bad("an unsigned integer"))?;
        }
        Ty::Choice(opts) => {
            if !opts.contains(&v) {
                return Err(bad(&format!("one of {}", opts.join(", "))));
            }
        }
        Ty::Kappa => {
            let x = parse_rational(v).ok_or_else(|| bad("a fraction or decimal in (1,∞)\\ℕ"))?;
            if x.is_integer() || x <= Q::from_integer(1) {
                return Err(SchemaError(format!(
                    "kappa = {v}: κ must lie in (1,∞)\\ℕ (greater than 1 and not an integer)"
                )));
            }
            check_kappa(q_to_f64(x)).map_err(|e| SchemaError(format!("kappa = {v}: {e}")))?;
        }
        Ty::Rational => {
            let x = parse_rational(v).ok_or_else(|| bad("a fraction or decimal"))?;
            if x < Q::from_integer(0) {
                return Err(bad("a non-negative value"));
            }
        }
        Ty::Radii => {
            let ok = !v.trim().is_empty()
                && v.split(',').all(|r| r.trim().parse::<f64>().is_ok_and(|x| x.is_finite() && x > 0.0));
            if !ok {
                return Err(bad("comma-separated positive radii"));
            }
        }
        Ty::Text => {
            if v.is_empty() {
                return Err(bad("a non-empty value"));
            }
        }
    }
    Ok(())
}

fn schema_key(name: &str) -> Result<&'static Key, SchemaError> {
    SCHEMA
        .iter()
        .find(|k| k.name == name)
        .ok_or_else(|| SchemaError(format!("unknown key {name:?}")))
}

/// `key = value` lines; `#` starts a comment.
pub fn parse_entries(text: &str) -> Result<Vec<(String, String)>, SchemaError> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| SchemaError(format!("line {}: expected `key = value`", i + 1)))?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        schema_key(&k)?;
        if out.iter().any(|(o, _)| *o == k) {
            return Err(SchemaError(format!("line {}: duplicate key {k:?}", i + 1)));
        }
        out.push((k, v));
    }
    Ok(out)
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::from_entries(&[]).expect("defaults satisfy the schema")
    }
}

impl ExperimentConfig {
    pub fn from_entries(entries: &[(String, String)]) -> Result<Self, SchemaError> {
        let mut raw: BTreeMap<String, String> =
            SCHEMA.iter().map(|k| (k.name.to_string(), k.default.to_string())).collect();
        for (k, v) in entries {
            let key = schema_key(k)?;
            check_value(key, v)?;
            raw.insert(k.clone(), v.clone());
        }
        Self::typed(raw)
    }

    #[cfg(test)]
    pub fn parse(text: &str) -> Result<Self, SchemaError> {
        Self::from_entries(&parse_entries(text)?)
    }

    /// Reads a config file, or the `config` table of an emitted manifest (`*.json`).
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self, SchemaError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SchemaError(format!("cannot read {}: {e}", path.display())))?;
        let mut entries = if path.extension().is_some_and(|e| e == "json") {
            let v: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| SchemaError(format!("{}: {e}", path.display())))?;
            let table = v
                .get("config")
                .and_then(|c| c.as_object())
                .ok_or_else(|| SchemaError(format!("{}: no `config` table", path.display())))?;
            table
                .iter()
                .map(|(k, v)| match v.as_str() {
                    Some(s) => Ok((k.clone(), s.to_string())),
                    None => Err(SchemaError(format!("manifest entry {k} is not a string"))),
                })
                .collect::<Result<Vec<_>, _>>()?
        } else {
            parse_entries(&text)?
        };
        entries.extend(overrides.iter().cloned());
        Self::from_entries(&entries)
    }

    fn typed(raw: BTreeMap<String, String>) -> Result<Self, SchemaError> {
        let get = |k: &str| raw[k].as_str();
        let kind = match get("kind") {
            "flat" => Kind::Flat,
            "potential" => Kind::Potential,
            _ => Kind::Metric,
        };
        let rat = |k: &str| parse_rational(get(k)).expect("validated");
        let cfg = ExperimentConfig {
            kind,
            kappa: rat("kappa"),
            varpi: rat("varpi"),
            p: get("p").parse().expect("validated"),
            s: rat("s"),
            ell: get("ell").parse().expect("validated"),
            observers: get("observers").split(',').map(|r| r.trim().parse().expect("validated")).collect(),
            synthesis: get("synthesis") == "true",
            seed: get("seed").parse().expect("validated"),
            exec: if get("exec") == "sequential" { Exec::Sequential } else { Exec::Parallel },
            workers: get("workers").parse().expect("validated"),
            output: get("output").to_string(),
            raw,
        };
        let ordered = |a: &str, b: &str| {
            if cfg.f(a) < cfg.f(b) {
                Ok(())
            } else {
                Err(SchemaError(format!("{a} must be below {b}")))
            }
        };
        ordered("fit_t1", "fit_t2")?;
        ordered("synth_t0", "synth_t1")?;
        ordered("chi_inner", "chi_outer")?;
        if cfg.f("fit_t2") > cfg.f("t_end") {
            return Err(SchemaError("fit_t2 must not exceed t_end".into()));
        }
        Ok(cfg)
    }

    /// A numeric entry.
    pub fn f(&self, k: &str) -> f64 {
        self.raw[k].parse().unwrap_or_else(|_| panic!("{k} is not numeric"))
    }

    pub fn kappa_f64(&self) -> f64 {
        q_to_f64(self.kappa)
    }

    pub fn set_output(&mut self, dir: &str) {
        self.raw.insert("output".into(), dir.into());
        self.output = dir.into();
    }

    /// Every key with its effective value.
    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.raw
    }

    /// Canonical `key = value` text; the hash ignores the output directory.
    pub fn canonical(&self) -> String {
        self.raw
            .iter()
            .filter(|(k, _)| *k != "output")
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.canonical().as_bytes())
    }

    pub fn operator(&self) -> pricelab::Result<ReducedOperator> {
        let k = self.kappa_f64();
        let law = |a: f64, mu: f64| if a == 0.0 { RadialProfile::zero() } else { RadialProfile::power_law(a, mu) };
        match self.kind {
            Kind::Flat => Ok(ReducedOperator::flat()),
            Kind::Potential => ReducedOperator::potential(k, self.f("amplitude")),
            Kind::Metric => build_operator(&SphericalMetric {
                kappa: k,
                h00: law(self.f("h00"), k),
                h0r: law(self.f("h0r"), k),
                hrr: law(self.f("hrr"), k),
                hww: law(self.f("hww"), k),
                v: law(self.f("v"), k + 2.0),
            }),
        }
    }

    pub fn solver(&self) -> SolverOptions {
        SolverOptions {
            dx: self.f("dx"),
            r_factor: self.f("r_factor"),
            r_static: self.f("r_static"),
            min_ppw: self.f("min_ppw"),
            ..Default::default()
        }
    }

    pub fn evolve(&self) -> EvolveOptions {
        EvolveOptions {
            dr: self.f("dr"),
            courant: self.f("courant"),
            pad: self.f("pad"),
            sample_dt: self.f("sample_dt"),
            ..Default::default()
        }
    }

    pub fn synthesis_options(&self) -> SynthesisOptions {
        SynthesisOptions {
            d_sigma: self.f("d_sigma"),
            sigma_max: self.f("sigma_max"),
            chi_inner: self.f("chi_inner"),
            chi_outer: self.f("chi_outer"),
            tol: self.f("synth_tol"),
            solver: self.solver(),
            ..Default::default()
        }
    }
}

/// The schema as `key = default  # doc` lines.
pub fn schema_text() -> String {
    SCHEMA.iter().map(|k| format!("{} = {}  # {}\n", k.name, k.default, k.doc)).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
