//! Euclidean counterparts of the intrinsic oracle.
//!
//! Factor-wise methods run a Euclidean LMO on each low-rank factor separately, so
//! their ambient step depends on the chosen representative `(B, A)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::manifolds::{self, ManifoldPoint, TangentVector};
use crate::matcore::{self, DenseMatrix};
use crate::norms::{self, NormSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BaselineKind {
    /// Normalized Euclidean gradient descent (Frobenius LMO per factor).
    Egd,
    /// Spectral LMO per factor.
    FwMuon,
    /// Spectral LMO per factor with the `eta / (||A|| + ||B|| + 1)` radius.
    Spectron,
    /// Nuclear LMO per factor.
    NuMuon,
    /// Euclidean LMO with the configured norm.
    Muon,
    /// Unnormalized Riemannian gradient step.
    ScaledGd,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 6] = [
        BaselineKind::Egd,
        BaselineKind::FwMuon,
        BaselineKind::Spectron,
        BaselineKind::NuMuon,
        BaselineKind::Muon,
        BaselineKind::ScaledGd,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            BaselineKind::Egd => "egd",
            BaselineKind::FwMuon => "fw-muon",
            BaselineKind::Spectron => "spectron",
            BaselineKind::NuMuon => "numuon",
            BaselineKind::Muon => "muon",
            BaselineKind::ScaledGd => "scaledgd",
        }
    }

    /// Norm the Euclidean oracle uses; `configured` applies to [`BaselineKind::Muon`].
    pub fn euclid_norm(&self, configured: NormSpec) -> NormSpec {
        match self {
            BaselineKind::Egd => NormSpec::Frobenius,
            BaselineKind::FwMuon | BaselineKind::Spectron => NormSpec::Spectral,
            BaselineKind::NuMuon => NormSpec::Nuclear,
            BaselineKind::Muon | BaselineKind::ScaledGd => configured,
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.tag() == s.trim())
            .ok_or_else(|| Error::InvalidInput(format!("unknown baseline '{s}'")))
    }
}

impl TryFrom<String> for BaselineKind {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<BaselineKind> for String {
    fn from(k: BaselineKind) -> String {
        k.tag().to_string()
    }
}

fn factors(x: &ManifoldPoint) -> Result<(&DenseMatrix, &DenseMatrix)> {
    match x {
        ManifoldPoint::FixedRank { b, a } => Ok((b, a)),
        other => invalid(format!("factor-wise baselines need a fixed-rank point, got {}", other.kind())),
    }
}

/// Euclidean factor gradients `(grad_X A^T, B^T grad_X)`.
pub fn factor_grads(x: &ManifoldPoint, egrad: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    let (b, a) = factors(x)?;
    if egrad.shape() != (b.nrows(), a.ncols()) {
        return invalid("gradient shape does not match BA");
    }
    Ok((egrad * a.transpose(), b.transpose() * egrad))
}

/// `(lmo(G_B), lmo(G_A))` with radius `tau` on each factor.
pub fn factorwise_lmo_from_factor_grads(
    g_b: &DenseMatrix,
    g_a: &DenseMatrix,
    norm: NormSpec,
    tau: f64,
) -> Result<TangentVector> {
    Ok(TangentVector::FixedRank {
        b_dot: norms::matrix_lmo(g_b, norm, tau)?.z,
        a_dot: norms::matrix_lmo(g_a, norm, tau)?.z,
    })
}

pub fn factorwise_lmo_direction(x: &ManifoldPoint, egrad: &DenseMatrix, norm: NormSpec, tau: f64) -> Result<TangentVector> {
    let (g_b, g_a) = factor_grads(x, egrad)?;
    factorwise_lmo_from_factor_grads(&g_b, &g_a, norm, tau)
}

/// `B <- B - eta lmo(G_B)`, `A <- A - eta lmo(G_A)`.
pub fn factorwise_lmo_step(x: &ManifoldPoint, egrad: &DenseMatrix, norm: NormSpec, tau: f64, eta: f64) -> Result<ManifoldPoint> {
    let xi = factorwise_lmo_direction(x, egrad, norm, tau)?;
    manifolds::retract(x, &xi.scaled(-1.0), eta)
}

pub fn factorwise_muon_step(x: &ManifoldPoint, egrad: &DenseMatrix, tau: f64, eta: f64) -> Result<ManifoldPoint> {
    factorwise_lmo_step(x, egrad, NormSpec::Spectral, tau, eta)
}

/// `rho = eta / (||A||_2 + ||B||_2 + 1)` from power-iteration estimates.
pub fn spectron_radius(x: &ManifoldPoint, eta: f64, power_iters: usize) -> Result<f64> {
    let (b, a) = factors(x)?;
    let na = matcore::spectral_norm_estimate(a, power_iters);
    let nb = matcore::spectral_norm_estimate(b, power_iters);
    Ok(eta / (na + nb + 1.0))
}

/// `(rho Ortho(M_B), rho Ortho(M_A))`.
pub fn spectron_direction(m_b: &DenseMatrix, m_a: &DenseMatrix, rho: f64) -> Result<TangentVector> {
    Ok(TangentVector::FixedRank {
        b_dot: matcore::polar_exact(m_b)? * rho,
        a_dot: matcore::polar_exact(m_a)? * rho,
    })
}

/// One Spectron update; the radius already carries the step size.
pub fn spectron_step(
    x: &ManifoldPoint,
    m_b: &DenseMatrix,
    m_a: &DenseMatrix,
    eta: f64,
    power_iters: usize,
) -> Result<ManifoldPoint> {
    let rho = spectron_radius(x, eta, power_iters)?;
    let xi = spectron_direction(m_b, m_a, rho)?;
    manifolds::retract(x, &xi.scaled(-1.0), 1.0)
}

/// Euclidean LMO direction in ambient coordinates.
pub fn euclid_lmo_direction(egrad: &DenseMatrix, norm: NormSpec, tau: f64) -> Result<DenseMatrix> {
    Ok(norms::matrix_lmo(egrad, norm, tau)?.z)
}

/// Euclidean LMO step. Fixed-rank points step factor-wise, SPD points step in the
/// ambient space and fail if they leave the cone, frames are re-orthonormalized with `qf`.
pub fn euclid_lmo_step(x: &ManifoldPoint, egrad: &DenseMatrix, norm: NormSpec, tau: f64, eta: f64) -> Result<ManifoldPoint> {
    match x {
        ManifoldPoint::FixedRank { .. } => factorwise_lmo_step(x, egrad, norm, tau, eta),
        ManifoldPoint::Spd(m) => {
            let d = euclid_lmo_direction(&matcore::sym_part(egrad), norm, tau)?;
            let next = matcore::sym_part(&(m - matcore::sym_part(&d) * eta));
            matcore::check_spd(&next)?;
            Ok(ManifoldPoint::Spd(next))
        }
        ManifoldPoint::Stiefel(m) => {
            let d = euclid_lmo_direction(egrad, norm, tau)?;
            Ok(ManifoldPoint::Stiefel(matcore::qf(&(m - d * eta))?))
        }
        ManifoldPoint::Grassmann(m) => {
            let d = euclid_lmo_direction(egrad, norm, tau)?;
            Ok(ManifoldPoint::Grassmann(matcore::qf(&(m - d * eta))?))
        }
    }
}

/// Unnormalized Riemannian gradient step `R_x(-eta grad f)`.
pub fn scaledgd_step(x: &ManifoldPoint, egrad: &DenseMatrix, eta: f64) -> Result<ManifoldPoint> {
    let g = manifolds::riemannian_grad(x, egrad)?;
    manifolds::retract(x, &g.scaled(-1.0), eta)
}

/// Smallest per-block cosine, under the metric, between the Frobenius intrinsic
/// direction and the scaled-gradient direction. Zero blocks count as cosine 1.
pub fn scaledgd_equivalence_check(x: &ManifoldPoint, egrad: &DenseMatrix, tau: f64) -> Result<f64> {
    let (b, a) = factors(x)?;
    let lmo = manifolds::lmo_direction(x, egrad, NormSpec::Frobenius, tau)?;
    let g = manifolds::riemannian_grad(x, egrad)?;
    let (TangentVector::FixedRank { b_dot: lb, a_dot: la }, TangentVector::FixedRank { b_dot: gb, a_dot: ga }) = (&lmo.xi, &g)
    else {
        unreachable!("fixed-rank point")
    };
    let aat = a * a.transpose();
    let btb = b.transpose() * b;
    let cos = |u: &DenseMatrix, v: &DenseMatrix, metric: &dyn Fn(&DenseMatrix, &DenseMatrix) -> f64| {
        let uu = metric(u, u);
        let vv = metric(v, v);
        if uu == 0.0 || vv == 0.0 {
            1.0
        } else {
            metric(u, v) / (uu.sqrt() * vv.sqrt())
        }
    };
    let mb = |u: &DenseMatrix, v: &DenseMatrix| matcore::frob_inner(&(u * &aat), v);
    let ma = |u: &DenseMatrix, v: &DenseMatrix| matcore::frob_inner(&(&btb * u), v);
    Ok(cos(lb, gb, &mb).min(cos(la, ga, &ma)))
}
