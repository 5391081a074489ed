//! TOML run configuration: one table per experiment, flags override file keys.

use std::path::Path;

use anyhow::{bail, Context, Result};
use imuon_core::optimizer::{Method, Schedule};
use imuon_core::NormSpec;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Settings shared by every experiment table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunParams {
    pub seeds: Vec<u64>,
    pub methods: Vec<String>,
    pub lr: Vec<f64>,
    /// Norm used by `imuon` and `muon`.
    pub norm: String,
    pub tau: f64,
    pub iters: usize,
    /// `decaying` (`eta0 / sqrt(t + 1)`) or `constant`.
    pub schedule: String,
    pub momentum: f64,
    pub record_every: usize,
    /// Minibatch size for finite-sum problems; 0 means full batch.
    pub batch: usize,
    pub workers: usize,
}

impl Default for RunParams {
    fn default() -> Self {
        RunParams {
            seeds: vec![0, 1, 2],
            methods: vec!["rgd".into(), "imuon".into()],
            lr: vec![1.0],
            norm: "spectral".into(),
            tau: 1.0,
            iters: 500,
            schedule: "decaying".into(),
            momentum: 0.0,
            record_every: 10,
            batch: 0,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompleteParams {
    pub m: usize,
    pub n: usize,
    pub r: usize,
    pub oversampling: f64,
    pub kappa: Vec<f64>,
    pub rho: Vec<f64>,
    /// Imbalance of the initial factors `(alpha B, A / alpha)`.
    pub alpha: f64,
}

impl Default for CompleteParams {
    fn default() -> Self {
        CompleteParams {
            m: 200,
            n: 200,
            r: 5,
            oversampling: 10.0,
            kappa: vec![10.0],
            rho: vec![0.0],
            alpha: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpdParams {
    pub n_dim: usize,
    pub classes: usize,
    pub per_class: usize,
    pub sigma_w: f64,
    pub beta: f64,
    pub lambda_reg: f64,
}

impl Default for SpdParams {
    fn default() -> Self {
        SpdParams {
            n_dim: 8,
            classes: 3,
            per_class: 20,
            sigma_w: 0.3,
            beta: 1.0,
            lambda_reg: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrassmannParams {
    pub m: usize,
    pub k: usize,
    pub classes: usize,
    pub per_class: usize,
    pub noise: f64,
}

impl Default for GrassmannParams {
    fn default() -> Self {
        GrassmannParams {
            m: 10,
            k: 3,
            classes: 3,
            per_class: 20,
            noise: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StiefelParams {
    pub m: usize,
    pub classes: usize,
    pub subcenters: usize,
    pub per_class: usize,
    pub noise: f64,
    pub margin: f64,
    pub scale: f64,
}

impl Default for StiefelParams {
    fn default() -> Self {
        StiefelParams {
            m: 32,
            classes: 4,
            subcenters: 2,
            per_class: 20,
            noise: 0.3,
            margin: 0.5,
            scale: 64.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum ProblemParams {
    Complete(CompleteParams),
    Spd(SpdParams),
    Grassmann(GrassmannParams),
    Stiefel(StiefelParams),
}

impl ProblemParams {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemParams::Complete(_) => "complete",
            ProblemParams::Spd(_) => "spd",
            ProblemParams::Grassmann(_) => "grassmann",
            ProblemParams::Stiefel(_) => "stiefel",
        }
    }

    pub fn default_methods(&self) -> Vec<String> {
        let tags: &[&str] = match self {
            ProblemParams::Complete(_) => &["rgd", "imuon", "fw-muon", "spectron"],
            _ => &["rgd", "imuon", "egd", "muon"],
        };
        tags.iter().map(|s| s.to_string()).collect()
    }

    /// Rejects generator parameters before any run starts.
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            ProblemParams::Complete(p) => {
                let wanted = (p.oversampling * (p.r * (p.m + p.n)) as f64).round();
                if wanted > (p.m * p.n) as f64 {
                    bail!(
                        "[complete] oversampling = {} asks for {wanted} observed entries but the {}x{} matrix has {}",
                        p.oversampling,
                        p.m,
                        p.n,
                        p.m * p.n
                    );
                }
                p.r >= 1
                    && p.r <= p.m.min(p.n)
                    && p.oversampling > 0.0
                    && wanted <= (p.m * p.n) as f64
                    && p.kappa.iter().all(|k| *k >= 1.0 && k.is_finite())
                    && p.rho.iter().all(|r| *r >= 0.0 && r.is_finite())
                    && p.alpha > 0.0
                    && p.alpha.is_finite()
            }
            ProblemParams::Spd(p) => {
                p.n_dim > 0 && p.classes > 0 && p.per_class > 0 && p.sigma_w >= 0.0 && p.beta > 0.0 && p.lambda_reg >= 0.0
            }
            ProblemParams::Grassmann(p) => p.k > 0 && p.k <= p.m && p.classes > 0 && p.per_class > 0 && p.noise >= 0.0,
            ProblemParams::Stiefel(p) => {
                p.classes >= 2
                    && p.subcenters > 0
                    && p.classes * p.subcenters <= p.m
                    && p.per_class > 0
                    && p.noise >= 0.0
                    && p.margin >= 0.0
                    && p.scale > 0.0
            }
        };
        if !ok {
            bail!("invalid [{}] problem parameters: {:?}", self.name(), self);
        }
        Ok(())
    }

    pub fn default_iters(&self) -> usize {
        match self {
            ProblemParams::Complete(_) => 2000,
            _ => 500,
        }
    }
}

/// Fully resolved experiment: every default expanded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub run: RunParams,
    pub problem: ProblemParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyParams {
    pub manifolds: Vec<String>,
    pub norms: Vec<String>,
    pub tau: f64,
    pub points: usize,
    pub instances: usize,
    pub seed: u64,
    pub tol: Option<f64>,
    pub c_phi_samples: usize,
}

impl Default for VerifyParams {
    fn default() -> Self {
        VerifyParams {
            manifolds: vec!["fixed-rank".into(), "spd".into(), "stiefel".into(), "grassmann".into()],
            norms: vec!["spectral".into(), "frobenius".into(), "nuclear".into()],
            tau: 1.0,
            points: 2,
            instances: 10,
            seed: 0,
            tol: None,
            c_phi_samples: 20,
        }
    }
}

/// A method tag resolved to an update rule and the norm it uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodSpec {
    pub method: Method,
    pub norm: NormSpec,
}

/// `rgd`, `imuon`, `imuon-<norm>` or a baseline tag. `configured` is the norm for
/// bare `imuon` and for `muon`.
pub fn resolve_method(tag: &str, configured: NormSpec) -> Result<MethodSpec> {
    let tag = tag.trim();
    let spec = match tag {
        "rgd" => MethodSpec {
            method: Method::Intrinsic,
            norm: NormSpec::Frobenius,
        },
        "imuon" => MethodSpec {
            method: Method::Intrinsic,
            norm: configured,
        },
        "imuon-nu" => MethodSpec {
            method: Method::Intrinsic,
            norm: NormSpec::Nuclear,
        },
        _ => {
            if let Some(rest) = tag.strip_prefix("imuon-") {
                MethodSpec {
                    method: Method::Intrinsic,
                    norm: rest.parse().with_context(|| format!("method '{tag}'"))?,
                }
            } else {
                let method: Method = tag.parse().with_context(|| format!("unknown method '{tag}'"))?;
                let norm = match method {
                    Method::Baseline(k) => k.euclid_norm(configured),
                    Method::Intrinsic => configured,
                };
                MethodSpec { method, norm }
            }
        }
    };
    Ok(spec)
}

impl RunParams {
    pub fn configured_norm(&self) -> Result<NormSpec> {
        self.norm.parse().with_context(|| format!("norm '{}'", self.norm))
    }

    pub fn schedule_for(&self, lr: f64) -> Result<Schedule> {
        match self.schedule.as_str() {
            "decaying" => Ok(Schedule::Decaying { eta0: lr }),
            "constant" => Ok(Schedule::Constant { eta: lr }),
            other => bail!("unknown schedule '{other}' (expected decaying or constant)"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("seeds must be non-empty");
        }
        if self.methods.is_empty() {
            bail!("methods must be non-empty");
        }
        if self.lr.is_empty() || self.lr.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            bail!("lr grid must be non-empty and positive");
        }
        if self.iters == 0 || self.record_every == 0 {
            bail!("iters and record_every must be positive");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            bail!("tau must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            bail!("momentum must lie in [0, 1)");
        }
        let norm = self.configured_norm()?;
        for m in &self.methods {
            resolve_method(m, norm)?;
        }
        self.schedule_for(1.0)?;
        Ok(())
    }
}

/// Raw file contents: top-level tables keyed by experiment name.
#[derive(Debug, Default)]
pub struct ConfigFile {
    tables: toml::Table,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(ConfigFile::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let tables: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        for (key, value) in &tables {
            if !value.is_table() {
                bail!("top-level key '{key}' must be a table such as [complete]");
            }
            if !["verify", "complete", "spd", "grassmann", "stiefel", "sweep"].contains(&key.as_str()) {
                bail!("unknown table [{key}]");
            }
        }
        Ok(ConfigFile { tables })
    }

    pub fn table(&self, name: &str) -> toml::Table {
        self.tables
            .get(name)
            .and_then(|v| v.as_table())
            .cloned()
            .unwrap_or_default()
    }
}

fn known_keys<T: Serialize + Default>() -> Vec<String> {
    match toml::Table::try_from(T::default()) {
        Ok(t) => t.keys().cloned().collect(),
        Err(_) => Vec::new(),
    }
}

/// Deserializes `T` from the subset of `table` whose keys `T` knows.
fn take<T: Serialize + DeserializeOwned + Default>(table: &toml::Table, extra: &[&str]) -> Result<(T, Vec<String>)> {
    let keys = known_keys::<T>();
    let mut mine = toml::Table::new();
    for k in extra.iter().map(|s| s.to_string()).chain(keys.iter().cloned()) {
        if let Some(v) = table.get(&k) {
            mine.insert(k, v.clone());
        }
    }
    let value: T = toml::Value::Table(mine).try_into().map_err(|e: toml::de::Error| anyhow::anyhow!("{e}"))?;
    Ok((value, keys))
}

/// Splits an experiment table into run and problem settings, rejecting unknown keys.
pub fn parse_experiment(name: &str, table: &toml::Table) -> Result<ExperimentConfig> {
    let (run, mut allowed): (RunParams, _) = take(table, &[])?;
    let explicit_methods = table.contains_key("methods");
    let explicit_iters = table.contains_key("iters");
    let problem = match name {
        "complete" => {
            let (p, k) = take::<CompleteParams>(table, &[])?;
            allowed.extend(k);
            ProblemParams::Complete(p)
        }
        "spd" => {
            let (p, k) = take::<SpdParams>(table, &[])?;
            allowed.extend(k);
            ProblemParams::Spd(p)
        }
        "grassmann" => {
            let (p, k) = take::<GrassmannParams>(table, &[])?;
            allowed.extend(k);
            ProblemParams::Grassmann(p)
        }
        "stiefel" => {
            let (p, k) = take::<StiefelParams>(table, &[])?;
            allowed.extend(k);
            ProblemParams::Stiefel(p)
        }
        other => bail!("unknown experiment '{other}'"),
    };
    allowed.push("experiment".into());
    for key in table.keys() {
        if !allowed.contains(key) {
            bail!("unknown key '{key}' in [{name}]");
        }
    }
    problem.validate()?;
    let mut run = run;
    if !explicit_methods {
        run.methods = problem.default_methods();
    }
    if !explicit_iters {
        run.iters = problem.default_iters();
    }
    Ok(ExperimentConfig { run, problem })
}

pub fn parse_verify(table: &toml::Table) -> Result<VerifyParams> {
    let (p, allowed) = take::<VerifyParams>(table, &["tol"])?;
    for key in table.keys() {
        if !allowed.contains(key) && key != "tol" {
            bail!("unknown key '{key}' in [verify]");
        }
    }
    Ok(p)
}

pub fn parse_csv<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<T>().map_err(|_| anyhow::anyhow!("bad {what} value '{s}'")))
        .collect()
}
