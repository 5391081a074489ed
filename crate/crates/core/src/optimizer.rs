//! The intrinsic LMO descent loop and its Euclidean counterparts.
//!
//! An iterate is a product of manifold points (one per prototype, factor pair,
//! ...). Every step computes an update direction per component, then retracts
//! along `-eta * direction`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::baselines::{self, BaselineKind};
use crate::error::{invalid, Error, Result};
use crate::manifolds::{self, FixedRankRoute, LmoOptions, ManifoldPoint};
use crate::matcore::{self, DenseMatrix};
use crate::norms::{self, NormSpec};

/// Step-size rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Constant { eta: f64 },
    /// `eta = c / (tau sqrt(T))` with `c = sqrt(2 delta0 / (L C_phi))`.
    SmoothnessTuned { l_est: f64, delta0_est: f64, horizon: usize },
    /// `eta_t = eta0 / sqrt(t + 1)`.
    Decaying { eta0: f64 },
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Schedule::Constant { eta } => eta > 0.0 && eta.is_finite(),
            Schedule::SmoothnessTuned { l_est, delta0_est, horizon } => {
                l_est > 0.0 && delta0_est > 0.0 && horizon > 0 && l_est.is_finite() && delta0_est.is_finite()
            }
            Schedule::Decaying { eta0 } => eta0 > 0.0 && eta0.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            invalid(format!("invalid schedule {self:?}"))
        }
    }

    pub fn eta(&self, t: usize, tau: f64, c_phi: f64) -> f64 {
        match *self {
            Schedule::Constant { eta } => eta,
            Schedule::SmoothnessTuned { l_est, delta0_est, horizon } => {
                let c = (2.0 * delta0_est / (l_est * c_phi)).sqrt();
                c / (tau * (horizon as f64).sqrt())
            }
            Schedule::Decaying { eta0 } => eta0 / ((t + 1) as f64).sqrt(),
        }
    }
}

/// Update rule: the intrinsic oracle or one of the Euclidean baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Intrinsic,
    Baseline(BaselineKind),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Intrinsic => f.write_str("imuon"),
            Method::Baseline(k) => f.write_str(k.tag()),
        }
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "imuon" => Ok(Method::Intrinsic),
            other => other.parse().map(Method::Baseline),
        }
    }
}

impl TryFrom<String> for Method {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub method: Method,
    pub norm: NormSpec,
    pub tau: f64,
    pub schedule: Schedule,
    pub momentum_beta: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub record_every: usize,
    #[serde(default)]
    pub fixed_rank_route: FixedRankRoute,
    #[serde(default)]
    pub allow_specnuc_product: bool,
    /// Power iterations behind the Spectron radius.
    #[serde(default = "default_power_iters")]
    pub spectron_power_iters: usize,
}

fn default_power_iters() -> usize {
    50
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            method: Method::Intrinsic,
            norm: NormSpec::Spectral,
            tau: 1.0,
            schedule: Schedule::Constant { eta: 0.1 },
            momentum_beta: 0.0,
            max_iters: 100,
            seed: 0,
            record_every: 1,
            fixed_rank_route: FixedRankRoute::Qr,
            allow_specnuc_product: false,
            spectron_power_iters: default_power_iters(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        self.norm.validate()?;
        self.schedule.validate()?;
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return invalid("tau must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum_beta) {
            return invalid("momentum beta must lie in [0, 1)");
        }
        if self.record_every == 0 {
            return invalid("record_every must be at least 1");
        }
        Ok(())
    }

    pub fn lmo_options(&self) -> LmoOptions {
        LmoOptions {
            fixed_rank_route: self.fixed_rank_route,
            allow_specnuc_product: self.allow_specnuc_product,
        }
    }
}

/// One row of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t: usize,
    pub f_value: f64,
    /// `g_x(xi*, grad f)`, summed over components.
    pub dual_value: f64,
    /// Largest per-block dual norm of the scaled gradient.
    pub h_dual: f64,
    /// Sum of per-block dual norms (equals `dual_value / tau`).
    pub h_dual_sum: f64,
    pub riem_norm_sq: f64,
    pub step_eta: f64,
    pub wall_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_h_dual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_h_dual_sum: Option<f64>,
    /// Problem-specific metric reported by the run observer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<f64>,
}

/// Intrinsic-oracle statistics aggregated over components.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepStats {
    pub dual_value: f64,
    pub h_dual: f64,
    pub h_dual_sum: f64,
    pub riem_norm_sq: f64,
}

impl StepStats {
    fn absorb(&mut self, r: &manifolds::LmoResult) {
        self.dual_value += r.dual_value;
        self.h_dual = self.h_dual.max(r.h_dual);
        self.h_dual_sum += r.h_dual_sum;
        self.riem_norm_sq += r.riem_norm_sq;
    }
}

/// Heavy-ball buffers, one per gradient slot, zero-initialized.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MomentumState {
    pub buffers: Vec<DenseMatrix>,
}

impl MomentumState {
    pub fn new() -> Self {
        Self::default()
    }

    /// `M <- beta M + G`, returns `G + beta M`. With `beta = 0` the gradients pass through untouched.
    pub fn combine(&mut self, grads: &[DenseMatrix], beta: f64) -> Vec<DenseMatrix> {
        if beta == 0.0 {
            return grads.to_vec();
        }
        if self.buffers.len() != grads.len() {
            self.buffers = grads.iter().map(|g| DenseMatrix::zeros(g.nrows(), g.ncols())).collect();
        }
        self.buffers
            .iter_mut()
            .zip(grads)
            .map(|(m, g)| {
                *m = &*m * beta + g;
                g + &*m * beta
            })
            .collect()
    }
}

pub fn momentum_combine(state: &mut MomentumState, grads: &[DenseMatrix], beta: f64) -> Vec<DenseMatrix> {
    state.combine(grads, beta)
}

/// `G_B A + B G_A`, the ambient gradient surrogate fed to the fixed-rank oracle under momentum.
pub fn fixed_rank_momentum_ambient(x: &ManifoldPoint, g_b: &DenseMatrix, g_a: &DenseMatrix) -> Result<DenseMatrix> {
    match x {
        ManifoldPoint::FixedRank { b, a } => Ok(g_b * a + b * g_a),
        other => invalid(format!("expected a fixed-rank point, got {}", other.kind())),
    }
}

/// Total analytic `C_phi` of a product iterate.
pub fn c_phi_total(x: &[ManifoldPoint], norm: NormSpec) -> Result<f64> {
    x.iter().map(|p| norms::c_phi_analytic(norm, &p.dims())).sum()
}

/// Intrinsic step on a single component: returns `R_x(-eta xi*)` and the oracle output.
pub fn imuon_step(
    x: &ManifoldPoint,
    egrad: &DenseMatrix,
    cfg: &OptimizerConfig,
    t: usize,
) -> Result<(ManifoldPoint, manifolds::LmoResult)> {
    let c_phi = match cfg.schedule {
        Schedule::SmoothnessTuned { .. } => norms::c_phi_analytic(cfg.norm, &x.dims())?,
        _ => 1.0,
    };
    let eta = cfg.schedule.eta(t, cfg.tau, c_phi);
    let r = manifolds::lmo_direction_with(x, egrad, cfg.norm, cfg.tau, &cfg.lmo_options())?;
    let next = manifolds::retract(x, &r.xi.scaled(-1.0), eta)?;
    Ok((next, r))
}

/// Intrinsic oracle statistics at `x` for gradients `grads`, without stepping.
pub fn monitor(x: &[ManifoldPoint], grads: &[DenseMatrix], norm: NormSpec, tau: f64, route: FixedRankRoute) -> Result<StepStats> {
    let opts = LmoOptions {
        fixed_rank_route: route,
        allow_specnuc_product: true,
    };
    let mut stats = StepStats::default();
    for (p, g) in x.iter().zip(grads) {
        stats.absorb(&manifolds::lmo_direction_with(p, g, norm, tau, &opts)?);
    }
    Ok(stats)
}

/// Stateful driver for one run.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub cfg: OptimizerConfig,
    momentum: Vec<MomentumState>,
    c_phi: f64,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig, x0: &[ManifoldPoint]) -> Result<Self> {
        cfg.validate()?;
        let c_phi = match cfg.schedule {
            Schedule::SmoothnessTuned { .. } => c_phi_total(x0, cfg.norm)?,
            _ => 1.0,
        };
        Ok(Optimizer {
            momentum: vec![MomentumState::new(); x0.len()],
            cfg,
            c_phi,
        })
    }

    pub fn eta(&self, t: usize) -> f64 {
        self.cfg.schedule.eta(t, self.cfg.tau, self.c_phi)
    }

    /// Advances every component. Returns oracle statistics when the step itself
    /// evaluated the intrinsic oracle on the true gradient.
    pub fn step(&mut self, x: &[ManifoldPoint], grads: &[DenseMatrix], t: usize) -> Result<(Vec<ManifoldPoint>, Option<StepStats>)> {
        if x.len() != grads.len() {
            return invalid(format!("{} components but {} gradients", x.len(), grads.len()));
        }
        let eta = self.eta(t);
        let beta = self.cfg.momentum_beta;
        let tau = self.cfg.tau;
        let mut next = Vec::with_capacity(x.len());
        match self.cfg.method {
            Method::Intrinsic => {
                let opts = self.cfg.lmo_options();
                let mut stats = StepStats::default();
                for ((p, g), mom) in x.iter().zip(grads).zip(&mut self.momentum) {
                    let eff = if beta == 0.0 {
                        g.clone()
                    } else if let ManifoldPoint::FixedRank { .. } = p {
                        let (g_b, g_a) = baselines::factor_grads(p, g)?;
                        let gt = mom.combine(&[g_b, g_a], beta);
                        fixed_rank_momentum_ambient(p, &gt[0], &gt[1])?
                    } else {
                        mom.combine(std::slice::from_ref(g), beta).remove(0)
                    };
                    let r = manifolds::lmo_direction_with(p, &eff, self.cfg.norm, tau, &opts)?;
                    stats.absorb(&r);
                    next.push(manifolds::retract(p, &r.xi.scaled(-1.0), eta)?);
                }
                Ok((next, (beta == 0.0).then_some(stats)))
            }
            Method::Baseline(kind) => {
                let norm = kind.euclid_norm(self.cfg.norm);
                for ((p, g), mom) in x.iter().zip(grads).zip(&mut self.momentum) {
                    let stepped = match (kind, p) {
                        (BaselineKind::ScaledGd, _) => {
                            let eff = mom.combine(std::slice::from_ref(g), beta).remove(0);
                            baselines::scaledgd_step(p, &eff, eta)?
                        }
                        (BaselineKind::Spectron, ManifoldPoint::FixedRank { .. }) => {
                            let (g_b, g_a) = baselines::factor_grads(p, g)?;
                            let gt = mom.combine(&[g_b, g_a], beta);
                            baselines::spectron_step(p, &gt[0], &gt[1], eta, self.cfg.spectron_power_iters)?
                        }
                        (BaselineKind::Spectron, other) => {
                            return invalid(format!("spectron needs fixed-rank points, got {}", other.kind()))
                        }
                        (_, ManifoldPoint::FixedRank { .. }) => {
                            let (g_b, g_a) = baselines::factor_grads(p, g)?;
                            let gt = mom.combine(&[g_b, g_a], beta);
                            let xi = baselines::factorwise_lmo_from_factor_grads(&gt[0], &gt[1], norm, tau)?;
                            manifolds::retract(p, &xi.scaled(-1.0), eta)?
                        }
                        _ => {
                            let eff = mom.combine(std::slice::from_ref(g), beta).remove(0);
                            baselines::euclid_lmo_step(p, &eff, norm, tau, eta)?
                        }
                    };
                    next.push(stepped);
                }
                Ok((next, None))
            }
        }
    }
}

/// Smooth objective over a product iterate.
pub trait Objective: Sync {
    /// Value and per-component Euclidean gradients (fixed-rank components take `grad_X` of shape `m x n`).
    fn value_grad(&self, x: &[ManifoldPoint]) -> Result<(f64, Vec<DenseMatrix>)>;

    fn value(&self, x: &[ManifoldPoint]) -> Result<f64> {
        Ok(self.value_grad(x)?.0)
    }
}

/// Objective that is a mean over `n_terms` data terms.
pub trait FiniteSum: Objective {
    fn n_terms(&self) -> usize;
    /// Mean over the listed terms. Passing every index in order must reproduce `value_grad` exactly.
    fn batch_value_grad(&self, x: &[ManifoldPoint], idx: &[usize]) -> Result<(f64, Vec<DenseMatrix>)>;
}

/// Source of gradients for stochastic runs.
pub trait GradientSampler {
    fn sample(&mut self, x: &[ManifoldPoint], t: usize) -> Result<Vec<DenseMatrix>>;
}

pub struct FullBatch<'a, O: Objective + ?Sized>(pub &'a O);

impl<O: Objective + ?Sized> GradientSampler for FullBatch<'_, O> {
    fn sample(&mut self, x: &[ManifoldPoint], _t: usize) -> Result<Vec<DenseMatrix>> {
        Ok(self.0.value_grad(x)?.1)
    }
}

/// Uniform minibatches without replacement; a batch covering the data uses every term in order.
pub struct Minibatch<'a, F: FiniteSum + ?Sized> {
    problem: &'a F,
    batch: usize,
    rng: ChaCha8Rng,
}

impl<'a, F: FiniteSum + ?Sized> Minibatch<'a, F> {
    pub fn new(problem: &'a F, batch: usize, seed: u64) -> Self {
        Minibatch {
            problem,
            batch: batch.max(1),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl<F: FiniteSum + ?Sized> GradientSampler for Minibatch<'_, F> {
    fn sample(&mut self, x: &[ManifoldPoint], _t: usize) -> Result<Vec<DenseMatrix>> {
        let n = self.problem.n_terms();
        let idx: Vec<usize> = if self.batch >= n {
            (0..n).collect()
        } else {
            let mut v = rand::seq::index::sample(&mut self.rng, n, self.batch).into_vec();
            v.sort_unstable();
            v
        };
        Ok(self.problem.batch_value_grad(x, &idx)?.1)
    }
}

/// Exact gradients plus Gaussian noise rescaled so the summed dual norm of its
/// whitened blocks equals `sigma_phi`.
pub struct AdditiveNoise<'a, O: Objective + ?Sized> {
    objective: &'a O,
    sigma_phi: f64,
    norm: NormSpec,
    rng: ChaCha8Rng,
}

impl<'a, O: Objective + ?Sized> AdditiveNoise<'a, O> {
    pub fn new(objective: &'a O, sigma_phi: f64, norm: NormSpec, seed: u64) -> Self {
        let norm = if matches!(norm, NormSpec::SpecNuc { .. }) { NormSpec::Frobenius } else { norm };
        AdditiveNoise {
            objective,
            sigma_phi,
            norm,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl<O: Objective + ?Sized> GradientSampler for AdditiveNoise<'_, O> {
    fn sample(&mut self, x: &[ManifoldPoint], _t: usize) -> Result<Vec<DenseMatrix>> {
        let (_, mut grads) = self.objective.value_grad(x)?;
        if self.sigma_phi == 0.0 {
            return Ok(grads);
        }
        let mut noise = Vec::with_capacity(x.len());
        let mut total = 0.0;
        for (p, g) in x.iter().zip(&grads) {
            let mut e = DenseMatrix::from_fn(g.nrows(), g.ncols(), |_, _| StandardNormal.sample(&mut self.rng));
            if let ManifoldPoint::Spd(_) = p {
                e = matcore::sym_part(&e);
            }
            let scaled = manifolds::scale_gradient(p, &e)?;
            for h in &scaled.blocks {
                total += norms::matrix_dual_norm(h, self.norm)?;
            }
            noise.push(e);
        }
        if total > 0.0 {
            let k = self.sigma_phi / total;
            for (g, e) in grads.iter_mut().zip(noise) {
                *g += e * k;
            }
        }
        Ok(grads)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: Vec<TrajectoryRecord>,
    pub x: Vec<ManifoldPoint>,
}

impl RunOutput {
    pub fn final_value(&self) -> f64 {
        self.trajectory.last().map(|r| r.f_value).unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum RunErrorKind {
    #[error("objective became non-finite at iteration {t}")]
    Diverged { t: usize },
    #[error("step failed at iteration {t}: {error}")]
    Failed { t: usize, error: Error },
}

/// A run that stopped early, with everything recorded up to that point.
#[derive(Debug, Clone, thiserror::Error)]
#[error("{kind}")]
pub struct RunError {
    pub kind: RunErrorKind,
    pub trajectory: Vec<TrajectoryRecord>,
    pub x: Vec<ManifoldPoint>,
}

impl RunError {
    pub fn status(&self) -> &'static str {
        match self.kind {
            RunErrorKind::Diverged { .. } => "diverged",
            RunErrorKind::Failed { .. } => "failed",
        }
    }
}

fn all_finite(grads: &[DenseMatrix]) -> bool {
    grads.iter().all(|g| g.iter().all(|v| v.is_finite()))
}

struct Recorder {
    start: Instant,
    trajectory: Vec<TrajectoryRecord>,
}

impl Recorder {
    fn push(&mut self, t: usize, f_value: f64, s: StepStats, eta: f64, full: Option<StepStats>, metric: Option<f64>) {
        self.trajectory.push(TrajectoryRecord {
            t,
            f_value,
            dual_value: s.dual_value,
            h_dual: s.h_dual,
            h_dual_sum: s.h_dual_sum,
            riem_norm_sq: s.riem_norm_sq,
            step_eta: eta,
            wall_time: self.start.elapsed().as_secs_f64(),
            full_h_dual: full.map(|f| f.h_dual),
            full_h_dual_sum: full.map(|f| f.h_dual_sum),
            metric,
        });
    }
}

fn fail(kind: RunErrorKind, rec: Recorder, x: Vec<ManifoldPoint>) -> RunError {
    RunError {
        kind,
        trajectory: rec.trajectory,
        x,
    }
}

/// Runs `max_iters` steps with exact gradients.
pub fn run_deterministic<O: Objective + ?Sized>(
    problem: &O,
    x0: Vec<ManifoldPoint>,
    cfg: &OptimizerConfig,
) -> std::result::Result<RunOutput, RunError> {
    run_deterministic_observed(problem, x0, cfg, |_, _| None)
}

/// As [`run_deterministic`]; `observe(t, x_t)` runs at every iterate and its value is
/// stored in the record's `metric` field when that iterate is recorded.
pub fn run_deterministic_observed<O, M>(
    problem: &O,
    x0: Vec<ManifoldPoint>,
    cfg: &OptimizerConfig,
    mut observe: M,
) -> std::result::Result<RunOutput, RunError>
where
    O: Objective + ?Sized,
    M: FnMut(usize, &[ManifoldPoint]) -> Option<f64>,
{
    let mut rec = Recorder {
        start: Instant::now(),
        trajectory: Vec::new(),
    };
    let mut opt = match Optimizer::new(cfg.clone(), &x0) {
        Ok(o) => o,
        Err(error) => return Err(fail(RunErrorKind::Failed { t: 0, error }, rec, x0)),
    };
    let mut x = x0;
    let total = cfg.max_iters;
    for t in 0..=total {
        let (f, grads) = match problem.value_grad(&x) {
            Ok(v) => v,
            Err(error) => return Err(fail(RunErrorKind::Failed { t, error }, rec, x)),
        };
        if !f.is_finite() || !all_finite(&grads) {
            return Err(fail(RunErrorKind::Diverged { t }, rec, x));
        }
        let eta = opt.eta(t);
        let record_now = t % cfg.record_every == 0 || t == total;
        let metric = observe(t, &x);
        if t == total {
            match monitor(&x, &grads, cfg.norm, cfg.tau, cfg.fixed_rank_route) {
                Ok(s) => rec.push(t, f, s, eta, None, metric),
                Err(error) => return Err(fail(RunErrorKind::Failed { t, error }, rec, x)),
            }
            break;
        }
        let (next, stats) = match opt.step(&x, &grads, t) {
            Ok(v) => v,
            Err(error) => return Err(fail(RunErrorKind::Failed { t, error }, rec, x)),
        };
        if record_now {
            let s = match stats {
                Some(s) => s,
                None => match monitor(&x, &grads, cfg.norm, cfg.tau, cfg.fixed_rank_route) {
                    Ok(s) => s,
                    Err(error) => return Err(fail(RunErrorKind::Failed { t, error }, rec, x)),
                },
            };
            rec.push(t, f, s, eta, None, metric);
        }
        x = next;
    }
    Ok(RunOutput {
        trajectory: rec.trajectory,
        x,
    })
}

/// Runs with sampled gradients; requires a decaying schedule. Records also carry
/// full-batch oracle statistics.
pub fn run_stochastic<O: Objective + ?Sized, S: GradientSampler + ?Sized>(
    problem: &O,
    sampler: &mut S,
    x0: Vec<ManifoldPoint>,
    cfg: &OptimizerConfig,
) -> std::result::Result<RunOutput, RunError> {
    run_stochastic_observed(problem, sampler, x0, cfg, |_, _| None)
}

pub fn run_stochastic_observed<O, S, M>(
    problem: &O,
    sampler: &mut S,
    x0: Vec<ManifoldPoint>,
    cfg: &OptimizerConfig,
    mut observe: M,
) -> std::result::Result<RunOutput, RunError>
where
    O: Objective + ?Sized,
    S: GradientSampler + ?Sized,
    M: FnMut(usize, &[ManifoldPoint]) -> Option<f64>,
{
    let mut rec = Recorder {
        start: Instant::now(),
        trajectory: Vec::new(),
    };
    if !matches!(cfg.schedule, Schedule::Decaying { .. }) {
        let error = Error::InvalidInput("stochastic runs need a decaying schedule".into());
        return Err(fail(RunErrorKind::Failed { t: 0, error }, rec, x0));
    }
    let mut opt = match Optimizer::new(cfg.clone(), &x0) {
        Ok(o) => o,
        Err(error) => return Err(fail(RunErrorKind::Failed { t: 0, error }, rec, x0)),
    };
    let mut x = x0;
    let total = cfg.max_iters;
    for t in 0..=total {
        let eta = opt.eta(t);
        let record_now = t % cfg.record_every == 0 || t == total;
        let metric = observe(t, &x);
        let mut full = None;
        if record_now {
            let (f, grads) = match problem.value_grad(&x) {
                Ok(v) => v,
                Err(error) => return Err(fail(RunErrorKind::Failed { t, error }, rec, x)),
            };
            if !f.is_finite() || !all_finite(&grads) {
                return Err(fail(RunErrorKind::Diverged { t }, rec, x));
            }
            let s = match monitor(&x, &grads, cfg.norm, cfg.tau, cfg.fixed_rank_route) {
                Ok(s) => s,
                Err(error) => return Err(fail(RunErrorKind::Failed { t, error }, rec, x)),
            };
            full = Some((f, s));
        }
        if t == total {
            let (f, s) = full.expect("final step records");
            rec.push(t, f, s, eta, Some(s), metric);
            break;
        }
        let grads = match sampler.sample(&x, t) {
            Ok(g) => g,
            Err(error) => return Err(fail(RunErrorKind::Failed { t, error }, rec, x)),
        };
        if !all_finite(&grads) {
            return Err(fail(RunErrorKind::Diverged { t }, rec, x));
        }
        let (next, stats) = match opt.step(&x, &grads, t) {
            Ok(v) => v,
            Err(error) => return Err(fail(RunErrorKind::Failed { t, error }, rec, x)),
        };
        if let Some((f, full_stats)) = full {
            let s = match stats {
                Some(s) => s,
                None => match monitor(&x, &grads, cfg.norm, cfg.tau, cfg.fixed_rank_route) {
                    Ok(s) => s,
                    Err(error) => return Err(fail(RunErrorKind::Failed { t, error }, rec, x)),
                },
            };
            rec.push(t, f, s, eta, Some(full_stats), metric);
        }
        x = next;
    }
    Ok(RunOutput {
        trajectory: rec.trajectory,
        x,
    })
}

/// Smallest recorded `h_dual_sum`, i.e. `min_t dual_value_t / tau`.
pub fn min_stationarity(trajectory: &[TrajectoryRecord]) -> f64 {
    trajectory.iter().map(|r| r.h_dual_sum).fold(f64::INFINITY, f64::min)
}

/// Writes a header line followed by one JSON object per record.
pub fn write_jsonl<W: Write>(mut w: W, header: &serde_json::Value, trajectory: &[TrajectoryRecord]) -> std::io::Result<()> {
    let head = serde_json::json!({ "header": header });
    writeln!(w, "{head}")?;
    for r in trajectory {
        writeln!(w, "{}", serde_json::to_string(r).map_err(std::io::Error::other)?)?;
    }
    Ok(())
}

/// Reads records back, skipping the header line.
pub fn read_jsonl(text: &str) -> Result<Vec<TrajectoryRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with("{\"header\""))
        .map(|l| serde_json::from_str(l).map_err(|e| Error::InvalidInput(format!("bad trajectory line: {e}"))))
        .collect()
}
