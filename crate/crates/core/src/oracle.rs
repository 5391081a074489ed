//! Verification machinery that avoids the closed forms it checks.
//!
//! - `dykstra_lmo`: projected ascent over `subspace ∩ ball`, with Dykstra alternation
//!   for the projection.
//! - `finite_diff_grad`: central differences over every stored matrix entry.
//! - `estimate_c_phi`: linearized ascent of `||xi||_x^2` over the intrinsic unit ball.
//! - `invariance_suite` / `verify_all`: batched property checks producing a report.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::manifolds::{
    self, ManifoldDims, ManifoldKind, ManifoldPoint, ScaledSpace, TangentVector,
};
use crate::matcore::{self, DenseMatrix};
use crate::norms::{self, NormSpec};
use crate::optimizer::Objective;
use crate::sample;

pub const DYKSTRA_INNER_MAX: usize = 500;
pub const ASCENT_MAX: usize = 2000;
pub const STALL_WINDOW: usize = 50;
const STEP_GROWTH: f64 = 1.1;
const STEP_CAP: f64 = 1e6;

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub value: f64,
    pub argmax: DenseMatrix,
    pub iterations: usize,
    /// Feasibility gap of the last Dykstra projection.
    pub residual: f64,
}

/// Euclidean projection of `v` onto `{x >= 0, sum x = radius}`.
pub fn project_simplex(v: &[f64], radius: f64) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - radius) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Projection of a nonnegative vector onto `{x >= 0, sum x <= radius}`.
pub fn project_l1_ball_nonneg(v: &[f64], radius: f64) -> Vec<f64> {
    let clipped: Vec<f64> = v.iter().map(|x| x.max(0.0)).collect();
    if clipped.iter().sum::<f64>() <= radius {
        clipped
    } else {
        project_simplex(&clipped, radius)
    }
}

/// Projection onto the radius-`tau` ball of a core norm.
pub fn project_ball(z: &DenseMatrix, norm: NormSpec, tau: f64) -> Result<DenseMatrix> {
    match norm {
        NormSpec::Frobenius => {
            let n = z.norm();
            Ok(if n > tau { z * (tau / n) } else { z.clone() })
        }
        NormSpec::Spectral | NormSpec::Nuclear => {
            let f = matcore::svd(z)?;
            let s: Vec<f64> = if norm == NormSpec::Spectral {
                f.sigma.iter().map(|s| s.min(tau)).collect()
            } else {
                project_l1_ball_nonneg(&f.sigma, tau)
            };
            Ok(f.compose(&s))
        }
        other => Err(Error::Unavailable(format!("no ball projection for {other}"))),
    }
}

/// Dykstra projection of `y` onto `space ∩ ball`. Returns the projected point, the
/// number of sweeps and the final gap between the two iterates.
fn dykstra_project(y: &DenseMatrix, space: &ScaledSpace, norm: NormSpec, tau: f64, tol: f64) -> Result<(DenseMatrix, usize, f64)> {
    let mut x = y.clone();
    let mut p = DenseMatrix::zeros(y.nrows(), y.ncols());
    let mut q = p.clone();
    let mut gap = f64::INFINITY;
    let mut sweeps = 0;
    for k in 1..=DYKSTRA_INNER_MAX {
        sweeps = k;
        let a = space.project(&(&x + &p));
        p = &x + &p - &a;
        let b = project_ball(&(&a + &q), norm, tau)?;
        q = &a + &q - &b;
        let change = (&b - &x).norm();
        gap = (&b - &a).norm();
        x = b;
        if change <= tol * (1.0 + x.norm()) && gap <= tol * (1.0 + x.norm()) {
            break;
        }
    }
    // Projecting a ball point onto these subspaces never leaves the ball.
    Ok((space.project(&x), sweeps, gap))
}

/// Maximizes `<Z, H>` over `space ∩ {phi(Z) <= tau}` by projected ascent with a
/// geometrically growing step.
pub fn dykstra_lmo(h: &DenseMatrix, space: &ScaledSpace, norm: NormSpec, tau: f64, tol: f64, max_iters: usize) -> Result<OracleResult> {
    if !matches!(norm, NormSpec::Spectral | NormSpec::Frobenius | NormSpec::Nuclear) {
        return Err(Error::Unavailable(format!("the projection oracle covers spectral, frobenius and nuclear, not {norm}")));
    }
    if !(tau > 0.0) || !(tol > 0.0) {
        return invalid("oracle needs tau > 0 and tol > 0");
    }
    let hn = h.norm();
    let mut z = DenseMatrix::zeros(h.nrows(), h.ncols());
    if hn == 0.0 {
        return Ok(OracleResult {
            value: 0.0,
            argmax: z,
            iterations: 0,
            residual: 0.0,
        });
    }
    let mut alpha = 1.0 / hn;
    let cap = STEP_CAP * tau.max(1.0) / hn;
    let mut best = (f64::NEG_INFINITY, z.clone());
    let mut stall = 0;
    let mut iterations = 0;
    let mut residual = 0.0;
    for it in 1..=max_iters {
        iterations = it;
        let (next, _, gap) = dykstra_project(&(&z + h * alpha), space, norm, tau, tol * 1e-3)?;
        residual = gap;
        let value = matcore::frob_inner(&next, h);
        if value > best.0 + tol * (1.0 + best.0.abs()) {
            stall = 0;
        } else {
            stall += 1;
        }
        if value > best.0 {
            best = (value, next.clone());
        }
        if stall >= STALL_WINDOW {
            break;
        }
        z = next;
        alpha = (alpha * STEP_GROWTH).min(cap);
    }
    if residual > tol * (1.0 + best.1.norm()) {
        return Err(Error::ConvergenceFailure { residual, iterations });
    }
    Ok(OracleResult {
        value: best.0,
        argmax: best.1,
        iterations,
        residual,
    })
}

fn orth_complement(x: &DenseMatrix) -> DenseMatrix {
    let (m, r) = x.shape();
    let mut aug = DenseMatrix::zeros(m, r + m);
    aug.columns_mut(0, r).copy_from(x);
    aug.columns_mut(r, m).fill_with_identity();
    aug.qr().q().columns(r, m - r).into_owned()
}

/// Scaled gradient blocks from the textbook formulas: Gram-matrix roots for fixed-rank,
/// an explicit orthonormal complement for Stiefel and Grassmann.
pub fn reference_scaled_blocks(x: &ManifoldPoint, egrad: &DenseMatrix) -> Result<Vec<DenseMatrix>> {
    Ok(match x {
        ManifoldPoint::FixedRank { b, a } => {
            let (_, ia) = matcore::spd_sqrt_invsqrt(&(a * a.transpose()))?;
            let (_, ib) = matcore::spd_sqrt_invsqrt(&(b.transpose() * b))?;
            vec![egrad * a.transpose() * ia, ib * b.transpose() * egrad]
        }
        ManifoldPoint::Spd(m) => {
            let (half, _) = matcore::spd_sqrt_invsqrt(m)?;
            vec![&half * matcore::sym_part(egrad) * &half]
        }
        ManifoldPoint::Stiefel(m) => {
            let perp = orth_complement(m);
            let p = m.transpose() * egrad;
            vec![(&p - p.transpose()) * 0.5, &perp * (perp.transpose() * egrad)]
        }
        ManifoldPoint::Grassmann(m) => {
            let perp = orth_complement(m);
            vec![&perp * (perp.transpose() * egrad)]
        }
    })
}

/// Euclidean partial derivatives in the stored parameters, from the ambient gradient.
pub fn analytic_part_grads(x: &ManifoldPoint, egrad: &DenseMatrix) -> Vec<DenseMatrix> {
    match x {
        ManifoldPoint::FixedRank { b, a } => vec![egrad * a.transpose(), b.transpose() * egrad],
        _ => vec![egrad.clone()],
    }
}

fn with_part(x: &ManifoldPoint, part: usize, m: DenseMatrix) -> ManifoldPoint {
    match (x, part) {
        (ManifoldPoint::FixedRank { a, .. }, 0) => ManifoldPoint::FixedRank { b: m, a: a.clone() },
        (ManifoldPoint::FixedRank { b, .. }, _) => ManifoldPoint::FixedRank { b: b.clone(), a: m },
        (ManifoldPoint::Spd(_), _) => ManifoldPoint::Spd(m),
        (ManifoldPoint::Stiefel(_), _) => ManifoldPoint::Stiefel(m),
        (ManifoldPoint::Grassmann(_), _) => ManifoldPoint::Grassmann(m),
    }
}

/// Central differences of `f` in every stored entry, step `h * max(1, |entry|)`.
/// SPD parts are perturbed symmetrically, so the estimate is the symmetric gradient.
pub fn finite_diff_grad<F>(f: F, x: &[ManifoldPoint], h: f64) -> Result<Vec<Vec<DenseMatrix>>>
where
    F: Fn(&[ManifoldPoint]) -> Result<f64>,
{
    if !(h > 0.0) {
        return invalid("finite-difference step must be positive");
    }
    let mut out = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let parts: Vec<DenseMatrix> = x[k].parts().into_iter().cloned().collect();
        let symmetric = matches!(x[k], ManifoldPoint::Spd(_));
        let mut grads = Vec::with_capacity(parts.len());
        for (pi, base) in parts.iter().enumerate() {
            let mut g = DenseMatrix::zeros(base.nrows(), base.ncols());
            for i in 0..base.nrows() {
                for j in 0..base.ncols() {
                    if symmetric && j < i {
                        continue;
                    }
                    let step = h * base[(i, j)].abs().max(1.0);
                    let eval = |sign: f64| -> Result<f64> {
                        let mut m = base.clone();
                        m[(i, j)] += sign * step;
                        if symmetric && i != j {
                            m[(j, i)] += sign * step;
                        }
                        let mut pts = x.to_vec();
                        pts[k] = with_part(&x[k], pi, m);
                        f(&pts)
                    };
                    let d = (eval(1.0)? - eval(-1.0)?) / (2.0 * step);
                    if symmetric && i != j {
                        g[(i, j)] = d / 2.0;
                        g[(j, i)] = d / 2.0;
                    } else {
                        g[(i, j)] = d;
                    }
                }
            }
            grads.push(g);
        }
        out.push(grads);
    }
    Ok(out)
}

/// Worst entrywise `|analytic - fd| / (1 + |fd|)` over all parts of all points.
pub fn fd_check<O: Objective + ?Sized>(obj: &O, x: &[ManifoldPoint], h: f64) -> Result<f64> {
    let (_, egrads) = obj.value_grad(x)?;
    let fd = finite_diff_grad(|p| obj.value(p), x, h)?;
    let mut worst = 0.0f64;
    for (k, pt) in x.iter().enumerate() {
        let an = analytic_part_grads(pt, &egrads[k]);
        for (a, d) in an.iter().zip(&fd[k]) {
            for (av, dv) in a.iter().zip(d.iter()) {
                worst = worst.max((av - dv).abs() / (1.0 + dv.abs()));
            }
        }
    }
    Ok(worst)
}

fn block_ascent_step(z: &DenseMatrix, space: &ScaledSpace, norm: NormSpec) -> Result<DenseMatrix> {
    match norm {
        NormSpec::Spectral | NormSpec::Frobenius | NormSpec::Nuclear => {
            Ok(dykstra_lmo(z, space, norm, 1.0, 1e-10, ASCENT_MAX)?.argmax)
        }
        _ => Ok(space.project(&norms::matrix_lmo(&space.project(z), norm, 1.0)?.z)),
    }
}

/// Lower bound on `max ||xi||_x^2` over the intrinsic unit ball at `x`.
///
/// Each sample draws random scaled blocks in their subspaces, rescales them onto the unit
/// sphere of `norm`, then repeats `Z <- argmax_{ball ∩ space} <W, Z>`, which never decreases
/// `||Z||_F`. The result is lifted to a tangent vector and measured with the metric.
pub fn estimate_c_phi(x: &ManifoldPoint, norm: NormSpec, samples: usize, ascent_iters: usize, seed: u64) -> Result<f64> {
    if samples == 0 {
        return invalid("need at least one sample");
    }
    if matches!(norm, NormSpec::SpecNuc { .. }) {
        return Err(Error::Unavailable("C_phi estimation is not defined for specnuc".into()));
    }
    let dims = x.dims();
    let (rows, cols) = dims.ambient_shape();
    let scaled = manifolds::scale_gradient(x, &DenseMatrix::zeros(rows, cols))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for _ in 0..samples {
        let mut blocks = Vec::with_capacity(scaled.blocks.len());
        for (shape_src, space) in scaled.blocks.iter().zip(&scaled.spaces) {
            let mut z = space.project(&sample::gaussian(&mut rng, shape_src.nrows(), shape_src.ncols()));
            let nv = norms::matrix_norm(&z, norm)?;
            if nv <= 1e-12 {
                blocks.push(DenseMatrix::zeros(z.nrows(), z.ncols()));
                continue;
            }
            z /= nv;
            for _ in 0..ascent_iters {
                let next = block_ascent_step(&z, space, norm)?;
                let grew = next.norm_squared() > z.norm_squared() * (1.0 + 1e-12);
                z = next;
                if !grew {
                    break;
                }
            }
            blocks.push(z);
        }
        let xi = scaled.lift(&blocks)?;
        best = best.max(manifolds::metric_inner(x, &xi, &xi)?);
    }
    Ok(best)
}

/// Largest observed ratio `2 |f(R_x(-s xi)) - f(x) + s Df(x)[xi]| / (s^2 ||xi||_x^2)`.
///
/// At each point the directions are the intrinsic `norm` LMO direction of the true gradient
/// plus `random_dirs` LMO directions of random gradients; every direction is tried at every step in `steps`.
pub fn estimate_smoothness<O: Objective + ?Sized>(
    obj: &O,
    points: &[Vec<ManifoldPoint>],
    norm: NormSpec,
    steps: &[f64],
    random_dirs: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for x in points {
        let (f0, grads) = obj.value_grad(x)?;
        for k in 0..=random_dirs {
            let mut dirs = Vec::with_capacity(x.len());
            let mut slope = 0.0;
            let mut sq = 0.0;
            for (p, g) in x.iter().zip(&grads) {
                let drive = if k == 0 { g.clone() } else { sample::egrad(&mut rng, &p.dims()) };
                let xi = manifolds::lmo_direction(p, &drive, norm, 1.0)?.xi;
                slope += manifolds::directional_derivative(p, g, &xi)?;
                sq += manifolds::metric_inner(p, &xi, &xi)?;
                dirs.push(xi);
            }
            if sq <= 0.0 {
                continue;
            }
            for &s in steps {
                let moved: Vec<ManifoldPoint> = x
                    .iter()
                    .zip(&dirs)
                    .map(|(p, d)| manifolds::retract(p, &d.scaled(-1.0), s))
                    .collect::<Result<_>>()?;
                let f1 = match obj.value(&moved) {
                    Ok(v) if v.is_finite() => v,
                    _ => continue,
                };
                best = best.max(2.0 * (f1 - f0 + s * slope).abs() / (s * s * sq));
            }
        }
    }
    Ok(best)
}

/// One named check with its worst residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub worst_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckReport {
    fn upper(name: String, worst: f64, tol: f64) -> Self {
        CheckReport {
            name,
            worst_residual: worst,
            tolerance: tol,
            pass: worst <= tol,
        }
    }
}

pub const TOL_MEMBERSHIP: f64 = 1e-9;
pub const TOL_DUAL: f64 = 1e-8;
pub const TOL_NORM_BOUND: f64 = 1e-8;
pub const TOL_SV: f64 = 1e-9;
pub const TOL_GAUGE: f64 = 1e-7;
pub const TOL_ORACLE: f64 = 1e-6;
pub const TOL_C_PHI: f64 = 0.01;

/// Tangent-membership check on a single direction.
pub fn membership_check(x: &ManifoldPoint, xi: &TangentVector, tol: f64) -> Result<CheckReport> {
    let res = manifolds::tangent_residual(x, xi)?;
    Ok(CheckReport::upper(format!("{}.membership", x.kind()), res, tol))
}

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub tau: f64,
    /// Random gradients drawn per point.
    pub instances: usize,
    pub seed: u64,
    /// Replaces every tolerance when set.
    pub tol_override: Option<f64>,
    pub include_oracle: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            tau: 1.0,
            instances: 20,
            seed: 0,
            tol_override: None,
            include_oracle: true,
        }
    }
}

fn sv_replace_residual<R: Rng + ?Sized>(h: &DenseMatrix, space: &ScaledSpace, rng: &mut R) -> Result<f64> {
    let f = matcore::svd(h)?;
    let rank = f.numerical_rank();
    let mut d: Vec<f64> = (0..f.sigma.len()).map(|i| if i < rank { rng.random::<f64>() * 3.0 } else { 0.0 }).collect();
    if matches!(space, ScaledSpace::Skew) {
        for pair in 0..rank / 2 {
            d[2 * pair + 1] = d[2 * pair];
        }
        for v in d.iter_mut().skip(2 * (rank / 2)) {
            *v = 0.0;
        }
    }
    let replaced = f.compose(&d);
    Ok(space.residual(&replaced))
}

/// Property checks for one point and one norm over random gradients.
pub fn invariance_suite(x: &ManifoldPoint, norm: NormSpec, opts: &SuiteOptions) -> Result<Vec<CheckReport>> {
    x.validate()?;
    let tau = opts.tau;
    let dims = x.dims();
    let tol = |t: f64| opts.tol_override.unwrap_or(t);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let c_phi = norms::c_phi_analytic(norm, &dims).ok();
    let core = matches!(norm, NormSpec::Spectral | NormSpec::Frobenius | NormSpec::Nuclear);
    let mut membership = 0.0f64;
    let mut dual_identity = 0.0f64;
    let mut dual_metric = 0.0f64;
    let mut bound = 0.0f64;
    let mut sv = 0.0f64;
    let mut gauge = 0.0f64;
    let mut oracle = 0.0f64;
    for _ in 0..opts.instances.max(1) {
        let g = sample::egrad(&mut rng, &dims);
        let res = manifolds::lmo_direction(x, &g, norm, tau)?;
        membership = membership.max(manifolds::tangent_residual(x, &res.xi)?);
        let expected = match norm {
            NormSpec::SpecNuc { .. } => res.h_dual_sum,
            _ => tau * res.h_dual_sum,
        };
        dual_identity = dual_identity.max((res.dual_value - expected).abs() / (1.0 + expected.abs()));
        let rg = manifolds::riemannian_grad(x, &g)?;
        let via_metric = manifolds::metric_inner(x, &res.xi, &rg)?;
        dual_metric = dual_metric.max((res.dual_value - via_metric).abs() / (1.0 + via_metric.abs()));
        if let Some(c) = c_phi {
            bound = bound.max((res.riem_norm_sq - c * tau * tau).max(0.0) / (c * tau * tau));
        }
        let scaled = manifolds::scale_gradient(x, &g)?;
        for (h, space) in scaled.blocks.iter().zip(&scaled.spaces) {
            sv = sv.max(sv_replace_residual(h, space, &mut rng)?);
        }
        if let ManifoldPoint::FixedRank { .. } = x {
            let cond = 10f64.powf(rng.random::<f64>() * 3.0);
            let n = sample::with_condition(&mut rng, dims.r, cond);
            let moved = manifolds::gauge_transform(x, &n)?;
            let base = manifolds::ambient_update(x, &res.xi)?;
            let other = manifolds::lmo_direction(&moved, &g, norm, tau)?;
            let upd = manifolds::ambient_update(&moved, &other.xi)?;
            gauge = gauge.max((&upd - &base).norm() / base.norm().max(f64::MIN_POSITIVE));
        }
        if opts.include_oracle && core {
            let mut total = 0.0;
            for (h, space) in scaled.blocks.iter().zip(&scaled.spaces) {
                total += dykstra_lmo(h, space, norm, tau, 1e-10, ASCENT_MAX)?.value;
            }
            oracle = oracle.max((total - res.dual_value).abs() / (1.0 + total.abs()));
        }
    }
    let prefix = format!("{}.{}", x.kind(), norm);
    let mut out = vec![
        CheckReport::upper(format!("{prefix}.membership"), membership, tol(TOL_MEMBERSHIP)),
        CheckReport::upper(format!("{prefix}.dual_value_identity"), dual_identity, tol(TOL_DUAL)),
        CheckReport::upper(format!("{prefix}.dual_value_metric"), dual_metric, tol(TOL_DUAL)),
        CheckReport::upper(format!("{prefix}.sv_invariance"), sv, tol(TOL_SV)),
    ];
    if c_phi.is_some() {
        out.push(CheckReport::upper(format!("{prefix}.norm_bound"), bound, tol(TOL_NORM_BOUND)));
    }
    if x.kind() == ManifoldKind::FixedRank {
        out.push(CheckReport::upper(format!("{prefix}.gauge_invariance"), gauge, tol(TOL_GAUGE)));
    }
    if opts.include_oracle && core {
        out.push(CheckReport::upper(format!("{prefix}.oracle_agreement"), oracle, tol(TOL_ORACLE)));
    }
    Ok(out)
}

/// A Grassmann direction with a component along `X`; the membership check must reject it.
pub fn negative_control(seed: u64, tol_override: Option<f64>) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = ManifoldPoint::Grassmann(sample::orthonormal(&mut rng, 6, 2));
    let g = sample::gaussian(&mut rng, 6, 2);
    let res = manifolds::lmo_direction(&x, &g, NormSpec::Spectral, 1.0)?;
    let ManifoldPoint::Grassmann(frame) = &x else { unreachable!() };
    let corrupted = res.xi.map(|m| m + frame * 0.5);
    let inner = membership_check(&x, &corrupted, tol_override.unwrap_or(TOL_MEMBERSHIP))?;
    Ok(CheckReport {
        name: "control.corrupted_grassmann_rejected".into(),
        worst_residual: inner.worst_residual,
        tolerance: inner.tolerance,
        pass: !inner.pass,
    })
}

/// Scope and sizes for `verify_all`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    pub manifolds: Vec<ManifoldKind>,
    pub norms: Vec<NormSpec>,
    pub tau: f64,
    pub points: usize,
    pub instances: usize,
    pub seed: u64,
    pub tol: Option<f64>,
    pub c_phi_samples: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            manifolds: ManifoldKind::ALL.to_vec(),
            norms: vec![NormSpec::Spectral, NormSpec::Frobenius, NormSpec::Nuclear],
            tau: 1.0,
            points: 2,
            instances: 10,
            seed: 0,
            tol: None,
            c_phi_samples: 20,
        }
    }
}

/// Dimensions used by `verify_all` for each manifold.
pub fn default_dims(kind: ManifoldKind) -> ManifoldDims {
    match kind {
        ManifoldKind::FixedRank => ManifoldDims::fixed_rank(12, 10, 4),
        ManifoldKind::Spd => ManifoldDims::spd(8),
        ManifoldKind::Stiefel => ManifoldDims::stiefel(10, 3),
        ManifoldKind::Grassmann => ManifoldDims::grassmann(10, 3),
    }
}

/// Full verification report: the invariance suite per (manifold, norm) aggregated over
/// random points, a spectral C_phi estimate per manifold, and the negative control.
pub fn verify_all(cfg: &VerifyConfig) -> Result<Vec<CheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out: Vec<CheckReport> = Vec::new();
    for &kind in &cfg.manifolds {
        let dims = default_dims(kind);
        let points: Vec<ManifoldPoint> = (0..cfg.points.max(1)).map(|_| sample::point(&mut rng, &dims)).collect();
        for &norm in &cfg.norms {
            if matches!(norm, NormSpec::SpecNuc { .. }) && kind.is_product() {
                continue;
            }
            let mut merged: Vec<CheckReport> = Vec::new();
            for x in &points {
                let opts = SuiteOptions {
                    tau: cfg.tau,
                    instances: cfg.instances,
                    seed: rng.random(),
                    tol_override: cfg.tol,
                    include_oracle: true,
                };
                for rep in invariance_suite(x, norm, &opts)? {
                    match merged.iter_mut().find(|m| m.name == rep.name) {
                        Some(m) => {
                            m.worst_residual = m.worst_residual.max(rep.worst_residual);
                            m.pass &= rep.pass;
                        }
                        None => merged.push(rep),
                    }
                }
            }
            out.extend(merged);
        }
        if cfg.norms.contains(&NormSpec::Spectral) && cfg.c_phi_samples > 0 {
            let analytic = norms::c_phi_analytic(NormSpec::Spectral, &dims)?;
            let est = estimate_c_phi(&points[0], NormSpec::Spectral, cfg.c_phi_samples, 20, rng.random())?;
            out.push(CheckReport::upper(
                format!("{kind}.spectral.c_phi_estimate"),
                (analytic - est).abs() / analytic,
                cfg.tol.unwrap_or(TOL_C_PHI),
            ));
        }
    }
    out.push(negative_control(cfg.seed, cfg.tol)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::diag;

    fn kkt_residual(v: &[f64], x: &[f64], radius: f64) -> f64 {
        let sum: f64 = x.iter().sum();
        let mut res = (sum - radius).abs();
        let active: Vec<f64> = v.iter().zip(x).filter(|(_, xi)| **xi > 0.0).map(|(vi, xi)| vi - xi).collect();
        let theta = active.iter().sum::<f64>() / active.len().max(1) as f64;
        for (vi, xi) in v.iter().zip(x) {
            res = res.max((-xi).max(0.0));
            if *xi > 0.0 {
                res = res.max((vi - xi - theta).abs());
            } else {
                res = res.max((vi - theta).max(0.0));
            }
        }
        res
    }

    #[test]
    fn simplex_projection_kkt() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let v = sample::sorted_sigma(&mut rng, 7);
            let x = project_simplex(&v, 2.5);
            assert!(kkt_residual(&v, &x, 2.5) < 1e-10);
            assert!(x.windows(2).all(|w| w[0] >= w[1]));
        }
        assert_eq!(project_simplex(&[3.0, 1.0], 1.0), vec![1.0, 0.0]);
    }

    #[test]
    fn oracle_examples() {
        let h = diag(&[2.0, -3.0]);
        let r = dykstra_lmo(&h, &ScaledSpace::Full, NormSpec::Spectral, 1.0, 1e-10, ASCENT_MAX).unwrap();
        assert!((r.value - 5.0).abs() < 1e-8);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = sample::symmetric(&mut rng, 5);
        let r = dykstra_lmo(&s, &ScaledSpace::Symmetric, NormSpec::Spectral, 1.0, 1e-10, ASCENT_MAX).unwrap();
        let (_, lam) = matcore::sym_eig(&s).unwrap();
        let expect: f64 = lam.iter().map(|l| l.abs()).sum();
        assert!((r.value - expect).abs() < 1e-6);
    }

    #[test]
    fn oracle_rejects_uncovered_norms() {
        let h = diag(&[1.0, 1.0]);
        assert!(matches!(
            dykstra_lmo(&h, &ScaledSpace::Full, NormSpec::KyFan { k: 1 }, 1.0, 1e-8, 10),
            Err(Error::Unavailable(_))
        ));
    }

    #[test]
    fn finite_differences_of_quadratic() {
        struct Half;
        impl Objective for Half {
            fn value_grad(&self, x: &[ManifoldPoint]) -> Result<(f64, Vec<DenseMatrix>)> {
                let m = x[0].ambient();
                Ok((0.5 * m.norm_squared(), vec![m]))
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = vec![ManifoldPoint::Stiefel(sample::orthonormal(&mut rng, 4, 2))];
        assert!(fd_check(&Half, &x, 1e-5).unwrap() < 1e-8);
        let fd = finite_diff_grad(|_| Ok(3.0), &x, 1e-5).unwrap();
        assert_eq!(fd[0][0].norm(), 0.0);
    }

    #[test]
    fn reference_blocks_match_in_singular_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for kind in ManifoldKind::ALL {
            let dims = default_dims(kind);
            let x = sample::point(&mut rng, &dims);
            let g = sample::egrad(&mut rng, &dims);
            let ours = manifolds::scale_gradient(&x, &g).unwrap();
            let refs = reference_scaled_blocks(&x, &g).unwrap();
            for (a, b) in ours.blocks.iter().zip(&refs) {
                let sa = matcore::svd(a).unwrap().sigma;
                let sb = matcore::svd(b).unwrap().sigma;
                for (p, q) in sa.iter().zip(&sb) {
                    assert!((p - q).abs() < 1e-9 * (1.0 + q), "{kind}");
                }
            }
        }
    }

    #[test]
    fn c_phi_frobenius_and_spectral() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = sample::point(&mut rng, &ManifoldDims::spd(5));
        let f = estimate_c_phi(&x, NormSpec::Frobenius, 5, 5, 1).unwrap();
        assert!((f - 1.0).abs() < 1e-9);
        let s = estimate_c_phi(&x, NormSpec::Spectral, 5, 5, 1).unwrap();
        assert!(s <= 5.0 * (1.0 + 1e-9) && s >= 5.0 * 0.99);
    }

    #[test]
    fn suite_and_control() {
        let cfg = VerifyConfig {
            points: 1,
            instances: 3,
            c_phi_samples: 3,
            ..VerifyConfig::default()
        };
        let rep = verify_all(&cfg).unwrap();
        assert!(rep.len() >= 40, "{}", rep.len());
        for r in &rep {
            assert!(r.pass, "{r:?}");
        }
        let ctl = negative_control(1, None).unwrap();
        assert!(ctl.pass && ctl.worst_residual > TOL_MEMBERSHIP);
    }
}
