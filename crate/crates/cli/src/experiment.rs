//! Run matrix for the desk-scale experiments and its CSV/JSONL artifacts.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use imuon_core::manifolds::ManifoldPoint;
use imuon_core::optimizer::{self, FiniteSum, Minibatch, OptimizerConfig, TrajectoryRecord};
use imuon_core::problems::{self, CompletionInstance, GrassmannInstance, SpdProtoInstance, StiefelInstance};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{resolve_method, CompleteParams, ExperimentConfig, ProblemParams};

pub const BUILD_ID: &str = concat!("imuon ", env!("CARGO_PKG_VERSION"));

/// Stable column order of `summary.csv`.
pub const SUMMARY_COLUMNS: &[&str] = &[
    "cell",
    "experiment",
    "method",
    "norm",
    "seed",
    "lr",
    "kappa",
    "rho",
    "alpha",
    "status",
    "iters_run",
    "final_f",
    "min_stationarity",
    "rel_error",
    "iters_to_1e-2",
    "iters_to_1e-3",
    "train_acc",
    "test_acc",
    "best_lr",
];

pub const AGGREGATE_COLUMNS: &[&str] = &[
    "experiment",
    "method",
    "norm",
    "kappa",
    "rho",
    "alpha",
    "lr",
    "n_seeds",
    "n_ok",
    "mean_final_f",
    "std_final_f",
    "mean_rel_error",
    "std_rel_error",
    "mean_test_acc",
    "std_test_acc",
    "selected",
];

/// One (problem cell, method, seed, lr) entry of the run matrix.
#[derive(Debug, Clone, Serialize)]
pub struct Cell {
    pub id: String,
    pub experiment: String,
    pub method: String,
    pub seed: u64,
    pub lr: f64,
    pub kappa: Option<f64>,
    pub rho: Option<f64>,
    pub problem: ProblemParams,
    pub optimizer: OptimizerConfig,
    pub batch: usize,
}

#[derive(Debug, Clone, Default)]
pub struct CellOutcome {
    pub status: String,
    pub iters_run: usize,
    pub final_f: f64,
    pub min_stationarity: f64,
    pub rel_error: Option<f64>,
    pub iters_to_1e2: Option<usize>,
    pub iters_to_1e3: Option<usize>,
    pub train_acc: Option<f64>,
    pub test_acc: Option<f64>,
}

impl CellOutcome {
    /// Lower is better; completion selects by relative error, classification by loss.
    fn selection_score(&self) -> f64 {
        let v = self.rel_error.unwrap_or(self.final_f);
        if self.status == "ok" && v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

fn cell_id(method: &str, kappa: Option<f64>, rho: Option<f64>, seed: u64, lr: f64) -> String {
    let mut id = method.to_string();
    if let Some(k) = kappa {
        write!(id, "_kappa{k}").ok();
    }
    if let Some(r) = rho {
        write!(id, "_rho{r}").ok();
    }
    write!(id, "_seed{seed}_lr{lr}").ok();
    id
}

/// Expands the configuration into its cells, in a fixed order.
pub fn build_cells(cfg: &ExperimentConfig) -> Result<Vec<Cell>> {
    cfg.run.validate()?;
    let configured = cfg.run.configured_norm()?;
    let problem_cells: Vec<(Option<f64>, Option<f64>, ProblemParams)> = match &cfg.problem {
        ProblemParams::Complete(p) => {
            if cfg.run.batch != 0 {
                bail!("completion runs use exact gradients; batch must be 0");
            }
            if p.kappa.is_empty() || p.rho.is_empty() {
                bail!("kappa and rho lists must be non-empty");
            }
            let mut v = Vec::new();
            for &k in &p.kappa {
                for &r in &p.rho {
                    let single = CompleteParams {
                        kappa: vec![k],
                        rho: vec![r],
                        ..p.clone()
                    };
                    v.push((Some(k), Some(r), ProblemParams::Complete(single)));
                }
            }
            v
        }
        other => vec![(None, None, other.clone())],
    };
    let mut cells = Vec::new();
    for (kappa, rho, problem) in &problem_cells {
        for tag in &cfg.run.methods {
            let spec = resolve_method(tag, configured)?;
            for &seed in &cfg.run.seeds {
                for &lr in &cfg.run.lr {
                    let optimizer = OptimizerConfig {
                        method: spec.method,
                        norm: spec.norm,
                        tau: cfg.run.tau,
                        schedule: cfg.run.schedule_for(lr)?,
                        momentum_beta: cfg.run.momentum,
                        max_iters: cfg.run.iters,
                        seed,
                        record_every: cfg.run.record_every,
                        ..OptimizerConfig::default()
                    };
                    optimizer.validate()?;
                    cells.push(Cell {
                        id: cell_id(tag, *kappa, *rho, seed, lr),
                        experiment: cfg.problem.name().to_string(),
                        method: tag.clone(),
                        seed,
                        lr,
                        kappa: *kappa,
                        rho: *rho,
                        problem: problem.clone(),
                        optimizer,
                        batch: cfg.run.batch,
                    });
                }
            }
        }
    }
    Ok(cells)
}

struct Finished {
    trajectory: Vec<TrajectoryRecord>,
    x: Vec<ManifoldPoint>,
    status: String,
}

fn run_with<O, M>(problem: &O, x0: Vec<ManifoldPoint>, cell: &Cell, observe: M) -> Finished
where
    O: FiniteSum,
    M: FnMut(usize, &[ManifoldPoint]) -> Option<f64>,
{
    let result = if cell.batch > 0 {
        let mut sampler = Minibatch::new(problem, cell.batch, cell.seed ^ 0xba7c_4e5d);
        optimizer::run_stochastic_observed(problem, &mut sampler, x0, &cell.optimizer, observe)
    } else {
        optimizer::run_deterministic_observed(problem, x0, &cell.optimizer, observe)
    };
    finish(result)
}

fn finish(result: std::result::Result<optimizer::RunOutput, optimizer::RunError>) -> Finished {
    match result {
        Ok(out) => Finished {
            trajectory: out.trajectory,
            x: out.x,
            status: "ok".into(),
        },
        Err(e) => Finished {
            status: e.status().into(),
            trajectory: e.trajectory,
            x: e.x,
        },
    }
}

fn classification<P: FiniteSum>(
    problem: &P,
    x0: Vec<ManifoldPoint>,
    cell: &Cell,
    acc: impl Fn(&P, &[ManifoldPoint]) -> (Option<f64>, Option<f64>),
) -> (Finished, CellOutcome) {
    let done = run_with(problem, x0, cell, |_, _| None);
    let (train_acc, test_acc) = acc(problem, &done.x);
    let outcome = CellOutcome {
        train_acc,
        test_acc,
        ..Default::default()
    };
    (done, outcome)
}

fn execute(cell: &Cell) -> Result<(Finished, CellOutcome)> {
    Ok(match &cell.problem {
        ProblemParams::Complete(p) => {
            let inst: CompletionInstance =
                problems::gen_completion(p.m, p.n, p.r, p.oversampling, p.kappa[0], p.rho[0], cell.seed)?;
            let x0 = vec![inst.spectral_init(p.alpha)?];
            let mut hit2 = None;
            let mut hit3 = None;
            let observe = |t: usize, x: &[ManifoldPoint]| {
                let e = inst.relative_error(&x[0]).ok()?;
                if e <= 1e-2 && hit2.is_none() {
                    hit2 = Some(t);
                }
                if e <= 1e-3 && hit3.is_none() {
                    hit3 = Some(t);
                }
                Some(e)
            };
            let done = finish(optimizer::run_deterministic_observed(&inst, x0, &cell.optimizer, observe));
            let rel_error = inst.relative_error(&done.x[0]).ok().filter(|v| v.is_finite());
            let outcome = CellOutcome {
                rel_error: Some(rel_error.unwrap_or(f64::NAN)),
                iters_to_1e2: hit2,
                iters_to_1e3: hit3,
                ..Default::default()
            };
            (done, outcome)
        }
        ProblemParams::Spd(p) => {
            let inst: SpdProtoInstance =
                problems::spd_proto::gen_spd_proto_with(p.n_dim, p.classes, p.per_class, cell.seed, p.sigma_w, p.beta, p.lambda_reg)?;
            let x0 = inst.init();
            classification(&inst, x0, cell, |i, x| (i.train_accuracy(x).ok(), i.test_accuracy(x).ok()))
        }
        ProblemParams::Grassmann(p) => {
            let inst: GrassmannInstance = problems::gen_grassmann(p.m, p.k, p.classes, p.per_class, p.noise, cell.seed)?;
            let x0 = inst.init()?;
            classification(&inst, x0, cell, |i, x| (i.train_accuracy(x).ok(), i.test_accuracy(x).ok()))
        }
        ProblemParams::Stiefel(p) => {
            let inst: StiefelInstance = problems::gen_stiefel(p.m, p.classes, p.subcenters, p.per_class, p.noise, cell.seed)?
                .with_margin_scale(p.margin, p.scale);
            let x0 = vec![inst.init()?];
            classification(&inst, x0, cell, |i, x| (i.train_accuracy(x).ok(), i.test_accuracy(x).ok()))
        }
    })
}

/// Runs one cell and writes its run directory (resolved config and trajectory).
pub fn run_cell(cell: &Cell, runs_dir: &Path) -> Result<CellOutcome> {
    let (done, mut outcome) = execute(cell).with_context(|| format!("cell {}", cell.id))?;
    outcome.status = done.status;
    outcome.iters_run = done.trajectory.last().map(|r| r.t).unwrap_or(0);
    outcome.final_f = done.trajectory.last().map(|r| r.f_value).unwrap_or(f64::NAN);
    outcome.min_stationarity = optimizer::min_stationarity(&done.trajectory);

    let dir = runs_dir.join(&cell.id);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let resolved = serde_json::to_string_pretty(cell)?;
    fs::write(dir.join("config.json"), resolved + "\n")?;
    let header = serde_json::json!({ "build": BUILD_ID, "config": cell });
    let file = fs::File::create(dir.join("trajectory.jsonl"))?;
    optimizer::write_jsonl(BufWriter::new(file), &header, &done.trajectory)?;
    Ok(outcome)
}

fn group_key(c: &Cell) -> (String, Option<u64>, Option<u64>) {
    (c.method.clone(), c.kappa.map(f64::to_bits), c.rho.map(f64::to_bits))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-(method, problem cell) learning rate with the best mean selection score over seeds.
pub fn best_lrs(cells: &[Cell], outcomes: &[CellOutcome]) -> Vec<((String, Option<u64>, Option<u64>), f64)> {
    let mut groups: Vec<((String, Option<u64>, Option<u64>), Vec<(f64, f64)>)> = Vec::new();
    for (c, o) in cells.iter().zip(outcomes) {
        let key = group_key(c);
        let entry = match groups.iter_mut().find(|g| g.0 == key) {
            Some(g) => g,
            None => {
                groups.push((key, Vec::new()));
                groups.last_mut().expect("just pushed")
            }
        };
        entry.1.push((c.lr, o.selection_score()));
    }
    groups
        .into_iter()
        .map(|(key, scores)| {
            let mut lrs: Vec<f64> = Vec::new();
            for (lr, _) in &scores {
                if !lrs.contains(lr) {
                    lrs.push(*lr);
                }
            }
            let mut best = (f64::INFINITY, lrs[0]);
            for lr in lrs {
                let vals: Vec<f64> = scores.iter().filter(|s| s.0 == lr).map(|s| s.1).collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                if mean < best.0 {
                    best = (mean, lr);
                }
            }
            (key, best.1)
        })
        .collect()
}

fn opt_num(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

fn opt_usize(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn summary_csv(cells: &[Cell], outcomes: &[CellOutcome], alpha: Option<f64>) -> String {
    let best = best_lrs(cells, outcomes);
    let mut out = SUMMARY_COLUMNS.join(",") + "\n";
    for (c, o) in cells.iter().zip(outcomes) {
        let chosen = best.iter().find(|b| b.0 == group_key(c)).map(|b| b.1);
        let row = [
            c.id.clone(),
            c.experiment.clone(),
            c.method.clone(),
            c.optimizer.norm.to_string(),
            c.seed.to_string(),
            fmt_num(c.lr),
            opt_num(c.kappa),
            opt_num(c.rho),
            opt_num(alpha),
            o.status.clone(),
            o.iters_run.to_string(),
            fmt_num(o.final_f),
            fmt_num(o.min_stationarity),
            opt_num(o.rel_error),
            opt_usize(o.iters_to_1e2),
            opt_usize(o.iters_to_1e3),
            opt_num(o.train_acc),
            opt_num(o.test_acc),
            opt_num(chosen),
        ];
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn aggregate_csv(cells: &[Cell], outcomes: &[CellOutcome], alpha: Option<f64>) -> String {
    let best = best_lrs(cells, outcomes);
    let mut keys: Vec<((String, Option<u64>, Option<u64>), u64)> = Vec::new();
    for c in cells {
        let k = (group_key(c), c.lr.to_bits());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let mut out = AGGREGATE_COLUMNS.join(",") + "\n";
    for (gk, lr_bits) in keys {
        let members: Vec<(&Cell, &CellOutcome)> = cells
            .iter()
            .zip(outcomes)
            .filter(|(c, _)| group_key(c) == gk && c.lr.to_bits() == lr_bits)
            .collect();
        let first = members[0].0;
        let ok: Vec<&CellOutcome> = members.iter().map(|m| m.1).filter(|o| o.status == "ok").collect();
        let collect = |f: &dyn Fn(&CellOutcome) -> Option<f64>| -> Vec<f64> {
            ok.iter().filter_map(|o| f(o)).filter(|v| v.is_finite()).collect()
        };
        let (mf, sf) = mean_std(&collect(&|o| Some(o.final_f)));
        let (me, se) = mean_std(&collect(&|o| o.rel_error));
        let (ma, sa) = mean_std(&collect(&|o| o.test_acc));
        let selected = best.iter().any(|b| b.0 == gk && b.1.to_bits() == lr_bits);
        let has_err = members.iter().any(|m| m.1.rel_error.is_some());
        let has_acc = members.iter().any(|m| m.1.test_acc.is_some());
        let row = [
            first.experiment.clone(),
            first.method.clone(),
            first.optimizer.norm.to_string(),
            opt_num(first.kappa),
            opt_num(first.rho),
            opt_num(alpha),
            fmt_num(first.lr),
            members.len().to_string(),
            ok.len().to_string(),
            fmt_num(mf),
            fmt_num(sf),
            if has_err { fmt_num(me) } else { String::new() },
            if has_err { fmt_num(se) } else { String::new() },
            if has_acc { fmt_num(ma) } else { String::new() },
            if has_acc { fmt_num(sa) } else { String::new() },
            selected.to_string(),
        ];
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// The resolved configuration in input form: a single `[<experiment>]` table.
pub fn resolved_toml(cfg: &ExperimentConfig) -> Result<String> {
    let mut table = toml::Table::try_from(&cfg.run).context("serializing run settings")?;
    let problem = toml::Table::try_from(&cfg.problem).context("serializing problem settings")?;
    for (k, v) in problem {
        if k != "experiment" {
            table.insert(k, v);
        }
    }
    let mut root = toml::Table::new();
    root.insert(cfg.problem.name().to_string(), toml::Value::Table(table));
    Ok(toml::to_string(&root)?)
}

/// Runs every cell on a pool of `workers` threads and writes the artifacts under `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<(Vec<Cell>, Vec<CellOutcome>)> {
    let cells = build_cells(cfg)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let resolved = resolved_toml(cfg)?;
    fs::write(out.join("config.resolved.toml"), resolved)?;
    let runs_dir: PathBuf = out.join("runs");
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.workers.max(1))
        .build()
        .context("building worker pool")?;
    let outcomes: Vec<CellOutcome> = pool.install(|| {
        cells
            .par_iter()
            .map(|c| run_cell(c, &runs_dir))
            .collect::<Result<Vec<_>>>()
    })?;
    let alpha = match &cfg.problem {
        ProblemParams::Complete(p) => Some(p.alpha),
        _ => None,
    };
    fs::write(out.join("summary.csv"), summary_csv(&cells, &outcomes, alpha))?;
    fs::write(out.join("aggregate.csv"), aggregate_csv(&cells, &outcomes, alpha))?;
    Ok((cells, outcomes))
}

/// One row per (method, problem cell) with the selected learning rate.
pub fn best_lr_csv(cells: &[Cell], outcomes: &[CellOutcome]) -> String {
    let mut out = String::from("method,kappa,rho,best_lr,mean_score\n");
    for ((method, kappa, rho), lr) in best_lrs(cells, outcomes) {
        let scores: Vec<f64> = cells
            .iter()
            .zip(outcomes)
            .filter(|(c, _)| c.method == method && c.kappa.map(f64::to_bits) == kappa && c.rho.map(f64::to_bits) == rho && c.lr == lr)
            .map(|(_, o)| o.selection_score())
            .collect();
        let mean = scores.iter().sum::<f64>() / scores.len().max(1) as f64;
        let _ = writeln!(
            out,
            "{method},{},{},{},{}",
            opt_num(kappa.map(f64::from_bits)),
            opt_num(rho.map(f64::from_bits)),
            fmt_num(lr),
            fmt_num(mean)
        );
    }
    out
}
