//! Geometries of the fixed-rank, SPD, Stiefel and Grassmann manifolds and their
//! closed-form intrinsic linear maximization oracles.
//!
//! Each geometry supplies a whitening map `G^{1/2}` from tangent vectors into a
//! "scaled" space where the norm constraint is an ordinary unitarily invariant
//! matrix norm. The oracle solves the problem there, block by block, and lifts
//! the answer back with `G^{-1/2}`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matcore::{self, DenseMatrix};
use crate::norms::{self, NormSpec};

/// Point invariants are checked to these tolerances.
pub const FACTOR_RANK_REL_TOL: f64 = 1e-10;
pub const ORTHONORMAL_TOL: f64 = 1e-9;
pub const SYMMETRY_REL_TOL: f64 = 1e-10;
/// Largest condition number accepted by [`gauge_transform`].
pub const GAUGE_MAX_COND: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ManifoldKind {
    FixedRank,
    Spd,
    Stiefel,
    Grassmann,
}

impl ManifoldKind {
    pub const ALL: [ManifoldKind; 4] = [
        ManifoldKind::FixedRank,
        ManifoldKind::Spd,
        ManifoldKind::Stiefel,
        ManifoldKind::Grassmann,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ManifoldKind::FixedRank => "fixed-rank",
            ManifoldKind::Spd => "spd",
            ManifoldKind::Stiefel => "stiefel",
            ManifoldKind::Grassmann => "grassmann",
        }
    }

    /// Manifolds whose oracle decouples into more than one block.
    pub fn is_product(&self) -> bool {
        matches!(self, ManifoldKind::FixedRank | ManifoldKind::Stiefel)
    }
}

impl fmt::Display for ManifoldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ManifoldKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "fixed-rank" | "fixedrank" | "fixed_rank" => Ok(ManifoldKind::FixedRank),
            "spd" => Ok(ManifoldKind::Spd),
            "stiefel" => Ok(ManifoldKind::Stiefel),
            "grassmann" => Ok(ManifoldKind::Grassmann),
            other => invalid(format!("unknown manifold '{other}'")),
        }
    }
}

impl TryFrom<String> for ManifoldKind {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ManifoldKind> for String {
    fn from(k: ManifoldKind) -> String {
        k.to_string()
    }
}

/// Shape data. Fixed-rank: `m x n` of rank `r`; SPD: `n x n`; Stiefel/Grassmann: `m x r` frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifoldDims {
    pub kind: ManifoldKind,
    pub m: usize,
    pub n: usize,
    pub r: usize,
}

impl ManifoldDims {
    pub fn new(kind: ManifoldKind, m: usize, n: usize, r: usize) -> Self {
        match kind {
            ManifoldKind::Spd => ManifoldDims { kind, m: n, n, r: n },
            ManifoldKind::Stiefel | ManifoldKind::Grassmann => ManifoldDims { kind, m, n: r, r },
            ManifoldKind::FixedRank => ManifoldDims { kind, m, n, r },
        }
    }

    pub fn fixed_rank(m: usize, n: usize, r: usize) -> Self {
        Self::new(ManifoldKind::FixedRank, m, n, r)
    }
    pub fn spd(n: usize) -> Self {
        Self::new(ManifoldKind::Spd, n, n, n)
    }
    pub fn stiefel(m: usize, r: usize) -> Self {
        Self::new(ManifoldKind::Stiefel, m, r, r)
    }
    pub fn grassmann(m: usize, r: usize) -> Self {
        Self::new(ManifoldKind::Grassmann, m, r, r)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            ManifoldKind::FixedRank => self.r >= 1 && self.r <= self.m.min(self.n),
            ManifoldKind::Spd => self.n >= 1,
            ManifoldKind::Stiefel | ManifoldKind::Grassmann => self.r >= 1 && self.r <= self.m,
        };
        if ok {
            Ok(())
        } else {
            invalid(format!("invalid dimensions {self:?}"))
        }
    }

    /// Shape of the Euclidean gradient.
    pub fn ambient_shape(&self) -> (usize, usize) {
        match self.kind {
            ManifoldKind::FixedRank => (self.m, self.n),
            ManifoldKind::Spd => (self.n, self.n),
            _ => (self.m, self.r),
        }
    }

    /// Largest possible rank of each scaled block.
    pub fn block_capacities(&self) -> Vec<usize> {
        let (m, n, r) = (self.m, self.n, self.r);
        match self.kind {
            ManifoldKind::FixedRank => vec![r.min(m), r.min(n)],
            ManifoldKind::Spd => vec![n],
            ManifoldKind::Stiefel => vec![2 * (r / 2), (m - r).min(r)],
            ManifoldKind::Grassmann => vec![(m - r).min(r)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ManifoldPoint {
    FixedRank { b: DenseMatrix, a: DenseMatrix },
    Spd(DenseMatrix),
    Stiefel(DenseMatrix),
    Grassmann(DenseMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TangentVector {
    FixedRank { b_dot: DenseMatrix, a_dot: DenseMatrix },
    Spd(DenseMatrix),
    Stiefel(DenseMatrix),
    Grassmann(DenseMatrix),
}

fn check_factor_rank(m: &DenseMatrix, what: &str) -> Result<()> {
    let s = matcore::svd(m)?.sigma;
    let top = s.first().copied().unwrap_or(0.0);
    let low = s.last().copied().unwrap_or(0.0);
    if top > 0.0 && low > FACTOR_RANK_REL_TOL * top {
        Ok(())
    } else {
        Err(Error::RankDeficient(format!(
            "{what}: smallest singular value {low:e} vs largest {top:e}"
        )))
    }
}

fn check_orthonormal(x: &DenseMatrix) -> Result<()> {
    if x.nrows() < x.ncols() || x.ncols() == 0 {
        return invalid(format!("frame must be tall with r >= 1, got {:?}", x.shape()));
    }
    let res = (x.transpose() * x - DenseMatrix::identity(x.ncols(), x.ncols())).norm();
    if res <= ORTHONORMAL_TOL {
        Ok(())
    } else {
        invalid(format!("frame is not orthonormal: ||X^T X - I||_F = {res:e}"))
    }
}

impl ManifoldPoint {
    pub fn fixed_rank(b: DenseMatrix, a: DenseMatrix) -> Result<Self> {
        let p = ManifoldPoint::FixedRank { b, a };
        p.validate()?;
        Ok(p)
    }
    pub fn spd(x: DenseMatrix) -> Result<Self> {
        let p = ManifoldPoint::Spd(x);
        p.validate()?;
        Ok(p)
    }
    pub fn stiefel(x: DenseMatrix) -> Result<Self> {
        let p = ManifoldPoint::Stiefel(x);
        p.validate()?;
        Ok(p)
    }
    pub fn grassmann(x: DenseMatrix) -> Result<Self> {
        let p = ManifoldPoint::Grassmann(x);
        p.validate()?;
        Ok(p)
    }

    pub fn kind(&self) -> ManifoldKind {
        match self {
            ManifoldPoint::FixedRank { .. } => ManifoldKind::FixedRank,
            ManifoldPoint::Spd(_) => ManifoldKind::Spd,
            ManifoldPoint::Stiefel(_) => ManifoldKind::Stiefel,
            ManifoldPoint::Grassmann(_) => ManifoldKind::Grassmann,
        }
    }

    pub fn dims(&self) -> ManifoldDims {
        match self {
            ManifoldPoint::FixedRank { b, a } => ManifoldDims::fixed_rank(b.nrows(), a.ncols(), b.ncols()),
            ManifoldPoint::Spd(x) => ManifoldDims::spd(x.nrows()),
            ManifoldPoint::Stiefel(x) => ManifoldDims::stiefel(x.nrows(), x.ncols()),
            ManifoldPoint::Grassmann(x) => ManifoldDims::grassmann(x.nrows(), x.ncols()),
        }
    }

    /// Matrix the point represents: `BA` for fixed-rank, the stored matrix otherwise.
    pub fn ambient(&self) -> DenseMatrix {
        match self {
            ManifoldPoint::FixedRank { b, a } => b * a,
            ManifoldPoint::Spd(x) | ManifoldPoint::Stiefel(x) | ManifoldPoint::Grassmann(x) => x.clone(),
        }
    }

    /// Stored matrices, in a fixed order (`B`, `A` for fixed-rank).
    pub fn parts(&self) -> Vec<&DenseMatrix> {
        match self {
            ManifoldPoint::FixedRank { b, a } => vec![b, a],
            ManifoldPoint::Spd(x) | ManifoldPoint::Stiefel(x) | ManifoldPoint::Grassmann(x) => vec![x],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for part in self.parts() {
            matcore::ensure_finite(part, "point")?;
        }
        match self {
            ManifoldPoint::FixedRank { b, a } => {
                if b.ncols() != a.nrows() || b.ncols() == 0 {
                    return invalid(format!(
                        "factor shapes {:?} and {:?} do not share a positive rank",
                        b.shape(),
                        a.shape()
                    ));
                }
                if b.ncols() > b.nrows() || a.nrows() > a.ncols() {
                    return invalid("rank exceeds a matrix dimension");
                }
                check_factor_rank(b, "B")?;
                check_factor_rank(&a.transpose(), "A^T")
            }
            ManifoldPoint::Spd(x) => {
                if !x.is_square() || x.nrows() == 0 {
                    return invalid("SPD point must be a nonempty square matrix");
                }
                let asym = (x - x.transpose()).norm();
                if asym > SYMMETRY_REL_TOL * x.norm() {
                    return invalid(format!("SPD point is not symmetric (||X - X^T||_F = {asym:e})"));
                }
                matcore::check_spd(x)
            }
            ManifoldPoint::Stiefel(x) | ManifoldPoint::Grassmann(x) => check_orthonormal(x),
        }
    }
}

impl TangentVector {
    pub fn kind(&self) -> ManifoldKind {
        match self {
            TangentVector::FixedRank { .. } => ManifoldKind::FixedRank,
            TangentVector::Spd(_) => ManifoldKind::Spd,
            TangentVector::Stiefel(_) => ManifoldKind::Stiefel,
            TangentVector::Grassmann(_) => ManifoldKind::Grassmann,
        }
    }

    pub fn zeros_at(x: &ManifoldPoint) -> Self {
        match x {
            ManifoldPoint::FixedRank { b, a } => TangentVector::FixedRank {
                b_dot: DenseMatrix::zeros(b.nrows(), b.ncols()),
                a_dot: DenseMatrix::zeros(a.nrows(), a.ncols()),
            },
            ManifoldPoint::Spd(m) => TangentVector::Spd(DenseMatrix::zeros(m.nrows(), m.ncols())),
            ManifoldPoint::Stiefel(m) => TangentVector::Stiefel(DenseMatrix::zeros(m.nrows(), m.ncols())),
            ManifoldPoint::Grassmann(m) => TangentVector::Grassmann(DenseMatrix::zeros(m.nrows(), m.ncols())),
        }
    }

    pub fn parts(&self) -> Vec<&DenseMatrix> {
        match self {
            TangentVector::FixedRank { b_dot, a_dot } => vec![b_dot, a_dot],
            TangentVector::Spd(x) | TangentVector::Stiefel(x) | TangentVector::Grassmann(x) => vec![x],
        }
    }

    pub fn map(&self, f: impl Fn(&DenseMatrix) -> DenseMatrix) -> Self {
        match self {
            TangentVector::FixedRank { b_dot, a_dot } => TangentVector::FixedRank {
                b_dot: f(b_dot),
                a_dot: f(a_dot),
            },
            TangentVector::Spd(x) => TangentVector::Spd(f(x)),
            TangentVector::Stiefel(x) => TangentVector::Stiefel(f(x)),
            TangentVector::Grassmann(x) => TangentVector::Grassmann(f(x)),
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        self.map(|m| m * alpha)
    }

    pub fn is_zero(&self) -> bool {
        self.parts().iter().all(|p| p.iter().all(|v| *v == 0.0))
    }

    /// Sum of squared Frobenius norms of the stored parts.
    pub fn euclidean_norm_sq(&self) -> f64 {
        self.parts().iter().map(|p| p.norm_squared()).sum()
    }
}

fn check_shapes(x: &ManifoldPoint, xi: &TangentVector) -> Result<()> {
    if x.kind() != xi.kind() {
        return invalid(format!("tangent of kind {} at a {} point", xi.kind(), x.kind()));
    }
    for (p, t) in x.parts().iter().zip(xi.parts()) {
        if p.shape() != t.shape() {
            return invalid(format!("tangent shape {:?} does not match point {:?}", t.shape(), p.shape()));
        }
    }
    Ok(())
}

fn check_egrad(x: &ManifoldPoint, egrad: &DenseMatrix) -> Result<()> {
    let want = x.dims().ambient_shape();
    if egrad.shape() != want {
        return invalid(format!("gradient shape {:?}, expected {want:?}", egrad.shape()));
    }
    matcore::ensure_finite(egrad, "gradient")
}

/// Riemannian metric `g_x(xi, zeta)`.
pub fn metric_inner(x: &ManifoldPoint, xi: &TangentVector, zeta: &TangentVector) -> Result<f64> {
    check_shapes(x, xi)?;
    check_shapes(x, zeta)?;
    Ok(match (x, xi, zeta) {
        (
            ManifoldPoint::FixedRank { b, a },
            TangentVector::FixedRank { b_dot: b1, a_dot: a1 },
            TangentVector::FixedRank { b_dot: b2, a_dot: a2 },
        ) => {
            let aat = a * a.transpose();
            let btb = b.transpose() * b;
            matcore::frob_inner(&(b1 * aat), b2) + matcore::frob_inner(&(btb * a1), a2)
        }
        (ManifoldPoint::Spd(m), TangentVector::Spd(s), TangentVector::Spd(t)) => {
            let inv = matcore::spd_inverse(m)?;
            matcore::frob_inner(&(&inv * s * &inv), t)
        }
        (_, _, _) => {
            let (s, t) = (xi.parts()[0], zeta.parts()[0]);
            matcore::frob_inner(s, t)
        }
    })
}

pub fn riemannian_norm(x: &ManifoldPoint, xi: &TangentVector) -> Result<f64> {
    Ok(metric_inner(x, xi, xi)?.max(0.0).sqrt())
}

/// Riemannian gradient from the Euclidean one.
pub fn riemannian_grad(x: &ManifoldPoint, egrad: &DenseMatrix) -> Result<TangentVector> {
    check_egrad(x, egrad)?;
    Ok(match x {
        ManifoldPoint::FixedRank { b, a } => {
            let inv_aat = matcore::spd_inverse(&(a * a.transpose()))?;
            let inv_btb = matcore::spd_inverse(&(b.transpose() * b))?;
            TangentVector::FixedRank {
                b_dot: egrad * a.transpose() * inv_aat,
                a_dot: inv_btb * b.transpose() * egrad,
            }
        }
        ManifoldPoint::Spd(m) => TangentVector::Spd(matcore::sym_part(&(m * matcore::sym_part(egrad) * m))),
        ManifoldPoint::Stiefel(m) => {
            TangentVector::Stiefel(egrad - m * matcore::sym_part(&(m.transpose() * egrad)))
        }
        ManifoldPoint::Grassmann(m) => TangentVector::Grassmann(egrad - m * (m.transpose() * egrad)),
    })
}

/// Euclidean pairing `<egrad, D(ambient)[xi]>`, i.e. the directional derivative of `f` along `xi`.
pub fn directional_derivative(x: &ManifoldPoint, egrad: &DenseMatrix, xi: &TangentVector) -> Result<f64> {
    check_egrad(x, egrad)?;
    check_shapes(x, xi)?;
    Ok(match (x, xi) {
        (ManifoldPoint::FixedRank { .. }, TangentVector::FixedRank { .. }) => {
            matcore::frob_inner(egrad, &ambient_update(x, xi)?)
        }
        (ManifoldPoint::Spd(_), TangentVector::Spd(s)) => matcore::frob_inner(&matcore::sym_part(egrad), s),
        _ => matcore::frob_inner(egrad, xi.parts()[0]),
    })
}

/// Linear subspace a scaled block lives in.
#[derive(Debug, Clone, PartialEq)]
pub enum ScaledSpace {
    Full,
    Symmetric,
    Skew,
    /// `{Z : X^T Z = 0}` for the stored frame `X`.
    Horizontal(DenseMatrix),
}

impl ScaledSpace {
    /// Orthogonal projection onto the subspace.
    pub fn project(&self, z: &DenseMatrix) -> DenseMatrix {
        match self {
            ScaledSpace::Full => z.clone(),
            ScaledSpace::Symmetric => matcore::sym_part(z),
            ScaledSpace::Skew => matcore::skew_part(z),
            ScaledSpace::Horizontal(x) => z - x * (x.transpose() * z),
        }
    }

    /// `||Z - P(Z)||_F / (1 + ||Z||_F)`.
    pub fn residual(&self, z: &DenseMatrix) -> f64 {
        (z - self.project(z)).norm() / (1.0 + z.norm())
    }
}

/// Which factorization whitens fixed-rank gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FixedRankRoute {
    /// Thin QR of the factors; no matrix roots.
    #[default]
    Qr,
    /// Dense inverse square roots of the factor Gram matrices (reference path).
    GramRoot,
}

#[derive(Debug, Clone)]
enum Lift {
    FixedRankQr { r_a: DenseMatrix, r_b: DenseMatrix },
    FixedRankGram { inv_a: DenseMatrix, inv_b: DenseMatrix },
    Spd { half: DenseMatrix },
    Stiefel { x: DenseMatrix },
    Grassmann,
}

/// Whitened gradient `H = G^{1/2} grad f`, split into decoupled blocks.
#[derive(Debug, Clone)]
pub struct ScaledGradient {
    pub blocks: Vec<DenseMatrix>,
    pub spaces: Vec<ScaledSpace>,
    lift: Lift,
}

impl ScaledGradient {
    /// Maps scaled blocks `Z` back to a tangent vector, `xi = G^{-1/2} Z`.
    pub fn lift(&self, z: &[DenseMatrix]) -> Result<TangentVector> {
        if z.len() != self.blocks.len() {
            return invalid(format!("expected {} blocks, got {}", self.blocks.len(), z.len()));
        }
        for (zi, hi) in z.iter().zip(&self.blocks) {
            if zi.shape() != hi.shape() {
                return invalid("scaled block shape mismatch");
            }
        }
        Ok(match &self.lift {
            Lift::FixedRankQr { r_a, r_b } => TangentVector::FixedRank {
                b_dot: matcore::right_solve_upper_transpose(&z[0], r_a)?,
                a_dot: matcore::left_solve_upper(r_b, &z[1])?,
            },
            Lift::FixedRankGram { inv_a, inv_b } => TangentVector::FixedRank {
                b_dot: &z[0] * inv_a,
                a_dot: inv_b * &z[1],
            },
            Lift::Spd { half } => TangentVector::Spd(matcore::sym_part(&(half * &z[0] * half))),
            Lift::Stiefel { x } => TangentVector::Stiefel(x * &z[0] + &z[1]),
            Lift::Grassmann => TangentVector::Grassmann(z[0].clone()),
        })
    }
}

pub fn scale_gradient(x: &ManifoldPoint, egrad: &DenseMatrix) -> Result<ScaledGradient> {
    scale_gradient_with(x, egrad, FixedRankRoute::Qr)
}

pub fn scale_gradient_with(x: &ManifoldPoint, egrad: &DenseMatrix, route: FixedRankRoute) -> Result<ScaledGradient> {
    check_egrad(x, egrad)?;
    Ok(match x {
        ManifoldPoint::FixedRank { b, a } => match route {
            FixedRankRoute::Qr => {
                let qa = matcore::thin_qr(&a.transpose())?;
                let qb = matcore::thin_qr(b)?;
                ScaledGradient {
                    blocks: vec![egrad * &qa.q, qb.q.transpose() * egrad],
                    spaces: vec![ScaledSpace::Full, ScaledSpace::Full],
                    lift: Lift::FixedRankQr { r_a: qa.r, r_b: qb.r },
                }
            }
            FixedRankRoute::GramRoot => {
                let (_, inv_a) = matcore::spd_sqrt_invsqrt(&(a * a.transpose()))
                    .map_err(|e| Error::RankDeficient(format!("A A^T: {e}")))?;
                let (_, inv_b) = matcore::spd_sqrt_invsqrt(&(b.transpose() * b))
                    .map_err(|e| Error::RankDeficient(format!("B^T B: {e}")))?;
                ScaledGradient {
                    blocks: vec![egrad * a.transpose() * &inv_a, &inv_b * b.transpose() * egrad],
                    spaces: vec![ScaledSpace::Full, ScaledSpace::Full],
                    lift: Lift::FixedRankGram { inv_a, inv_b },
                }
            }
        },
        ManifoldPoint::Spd(m) => {
            let (half, _) = matcore::spd_sqrt_invsqrt(m)?;
            let h = matcore::sym_part(&(&half * matcore::sym_part(egrad) * &half));
            ScaledGradient {
                blocks: vec![h],
                spaces: vec![ScaledSpace::Symmetric],
                lift: Lift::Spd { half },
            }
        }
        ManifoldPoint::Stiefel(m) => {
            let p = m.transpose() * egrad;
            let normal = egrad - m * &p;
            ScaledGradient {
                blocks: vec![matcore::skew_part(&p), normal],
                spaces: vec![ScaledSpace::Skew, ScaledSpace::Horizontal(m.clone())],
                lift: Lift::Stiefel { x: m.clone() },
            }
        }
        ManifoldPoint::Grassmann(m) => {
            let h = egrad - m * (m.transpose() * egrad);
            ScaledGradient {
                blocks: vec![h],
                spaces: vec![ScaledSpace::Horizontal(m.clone())],
                lift: Lift::Grassmann,
            }
        }
    })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LmoOptions {
    pub fixed_rank_route: FixedRankRoute,
    /// Permit the spectral-nuclear intersection on fixed-rank and Stiefel (one budget per block).
    pub allow_specnuc_product: bool,
}

/// Output of the intrinsic oracle.
#[derive(Debug, Clone)]
pub struct LmoResult {
    pub xi: TangentVector,
    /// Scaled maximizers, one per block.
    pub z_blocks: Vec<DenseMatrix>,
    /// `g_x(xi, grad f)`, evaluated as the directional derivative of `f` along `xi`.
    pub dual_value: f64,
    pub riem_norm_sq: f64,
    /// Largest per-block dual norm of the scaled gradient.
    pub h_dual: f64,
    pub h_dual_sum: f64,
    pub block_duals: Vec<f64>,
}

pub fn lmo_direction(x: &ManifoldPoint, egrad: &DenseMatrix, norm: NormSpec, tau: f64) -> Result<LmoResult> {
    lmo_direction_with(x, egrad, norm, tau, &LmoOptions::default())
}

pub fn lmo_direction_with(
    x: &ManifoldPoint,
    egrad: &DenseMatrix,
    norm: NormSpec,
    tau: f64,
    opts: &LmoOptions,
) -> Result<LmoResult> {
    norm.validate()?;
    if matches!(norm, NormSpec::SpecNuc { .. }) && x.kind().is_product() && !opts.allow_specnuc_product {
        return invalid(format!("specnuc is disabled on the {} product manifold", x.kind()));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return invalid(format!("tau must be positive and finite, got {tau}"));
    }
    let scaled = scale_gradient_with(x, egrad, opts.fixed_rank_route)?;
    let mut z_blocks = Vec::with_capacity(scaled.blocks.len());
    let mut block_duals = Vec::with_capacity(scaled.blocks.len());
    for (h, space) in scaled.blocks.iter().zip(&scaled.spaces) {
        let f = matcore::svd(h)?;
        let lmo = norms::matrix_lmo_from_svd(&f, norm, tau)?;
        block_duals.push(match norm {
            NormSpec::SpecNuc { .. } => lmo.value,
            _ => norms::dual_norm(&f.sigma, norm)?,
        });
        z_blocks.push(space.project(&lmo.z));
    }
    let xi = scaled.lift(&z_blocks)?;
    let dual_value = directional_derivative(x, egrad, &xi)?;
    let riem_norm_sq = metric_inner(x, &xi, &xi)?;
    Ok(LmoResult {
        xi,
        z_blocks,
        dual_value,
        riem_norm_sq,
        h_dual: block_duals.iter().fold(0.0, |a: f64, b| a.max(*b)),
        h_dual_sum: block_duals.iter().sum(),
        block_duals,
    })
}

/// Relative tangent-space residual of `xi` at `x` (zero means tangent).
pub fn tangent_residual(x: &ManifoldPoint, xi: &TangentVector) -> Result<f64> {
    check_shapes(x, xi)?;
    Ok(match (x, xi) {
        (ManifoldPoint::FixedRank { .. }, _) => 0.0,
        (ManifoldPoint::Spd(_), TangentVector::Spd(s)) => (s - s.transpose()).norm() / (1.0 + s.norm()),
        (ManifoldPoint::Stiefel(m), TangentVector::Stiefel(s)) => {
            let p = m.transpose() * s;
            (&p + p.transpose()).norm() / (1.0 + s.norm())
        }
        (ManifoldPoint::Grassmann(m), TangentVector::Grassmann(s)) => (m.transpose() * s).norm() / (1.0 + s.norm()),
        _ => unreachable!("kinds checked"),
    })
}

/// Retraction `R_x(eta xi)`.
pub fn retract(x: &ManifoldPoint, xi: &TangentVector, eta: f64) -> Result<ManifoldPoint> {
    check_shapes(x, xi)?;
    if !eta.is_finite() || eta < 0.0 {
        return invalid(format!("step size must be finite and nonnegative, got {eta}"));
    }
    for p in xi.parts() {
        matcore::ensure_finite(p, "tangent")?;
    }
    if eta == 0.0 || xi.is_zero() {
        return Ok(x.clone());
    }
    match (x, xi) {
        (ManifoldPoint::FixedRank { b, a }, TangentVector::FixedRank { b_dot, a_dot }) => {
            let nb = b + b_dot * eta;
            let na = a + a_dot * eta;
            check_factor_rank(&nb, "retracted B")?;
            check_factor_rank(&na.transpose(), "retracted A^T")?;
            Ok(ManifoldPoint::FixedRank { b: nb, a: na })
        }
        (ManifoldPoint::Spd(m), TangentVector::Spd(s)) => {
            let (half, inv_half) = matcore::spd_sqrt_invsqrt(m)?;
            let inner = matcore::sym_part(&(&inv_half * s * &inv_half)) * eta;
            let next = matcore::sym_part(&(&half * matcore::spd_exp(&inner)? * &half));
            matcore::check_spd(&next)?;
            Ok(ManifoldPoint::Spd(next))
        }
        (ManifoldPoint::Stiefel(m), TangentVector::Stiefel(s)) => {
            Ok(ManifoldPoint::Stiefel(matcore::qf(&(m + s * eta))?))
        }
        (ManifoldPoint::Grassmann(m), TangentVector::Grassmann(s)) => {
            Ok(ManifoldPoint::Grassmann(matcore::qf(&(m + s * eta))?))
        }
        _ => unreachable!("kinds checked"),
    }
}

/// Changes the fixed-rank representative: `(B, A) -> (B N^{-1}, N A)`.
pub fn gauge_transform(x: &ManifoldPoint, n: &DenseMatrix) -> Result<ManifoldPoint> {
    let ManifoldPoint::FixedRank { b, a } = x else {
        return invalid("gauge transforms apply to fixed-rank points only");
    };
    let r = b.ncols();
    if n.shape() != (r, r) {
        return invalid(format!("gauge must be {r}x{r}, got {:?}", n.shape()));
    }
    let s = matcore::svd(n)?.sigma;
    let (top, low) = (s[0], s[r - 1]);
    if !(low > 0.0) || top / low > GAUGE_MAX_COND {
        return invalid(format!("gauge is singular or too ill-conditioned (sigma range {top:e}..{low:e})"));
    }
    let bt = n
        .transpose()
        .lu()
        .solve(&b.transpose())
        .ok_or_else(|| Error::InvalidInput("singular gauge".into()))?;
    Ok(ManifoldPoint::FixedRank {
        b: bt.transpose(),
        a: n * a,
    })
}

/// Ambient velocity `dB A + B dA` of a fixed-rank tangent; the stored matrix for other manifolds.
pub fn ambient_update(x: &ManifoldPoint, xi: &TangentVector) -> Result<DenseMatrix> {
    check_shapes(x, xi)?;
    Ok(match (x, xi) {
        (ManifoldPoint::FixedRank { b, a }, TangentVector::FixedRank { b_dot, a_dot }) => b_dot * a + b * a_dot,
        _ => xi.parts()[0].clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::diag;

    fn eye(n: usize) -> DenseMatrix {
        DenseMatrix::identity(n, n)
    }

    fn col(v: &[f64]) -> DenseMatrix {
        DenseMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn metric_examples() {
        let x = ManifoldPoint::fixed_rank(eye(2), eye(2)).unwrap();
        let xi = TangentVector::FixedRank { b_dot: eye(2), a_dot: eye(2) };
        assert!((metric_inner(&x, &xi, &xi).unwrap() - 4.0).abs() < 1e-14);

        let x = ManifoldPoint::spd(eye(2)).unwrap();
        let xi = TangentVector::Spd(diag(&[1.0, 2.0]));
        assert!((metric_inner(&x, &xi, &xi).unwrap() - 5.0).abs() < 1e-14);

        let x = ManifoldPoint::spd(diag(&[2.0, 2.0])).unwrap();
        let xi = TangentVector::Spd(eye(2));
        assert!((metric_inner(&x, &xi, &xi).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn metric_rejects_mismatch() {
        let x = ManifoldPoint::spd(eye(2)).unwrap();
        assert!(metric_inner(&x, &TangentVector::Spd(eye(3)), &TangentVector::Spd(eye(3))).is_err());
        assert!(metric_inner(&x, &TangentVector::Grassmann(eye(2)), &TangentVector::Spd(eye(2))).is_err());
    }

    #[test]
    fn scale_gradient_examples() {
        let x = ManifoldPoint::fixed_rank(eye(2), eye(2)).unwrap();
        let s = scale_gradient(&x, &diag(&[2.0, -1.0])).unwrap();
        assert!((&s.blocks[0] - diag(&[2.0, -1.0])).norm() < 1e-14);
        assert!((&s.blocks[1] - diag(&[2.0, -1.0])).norm() < 1e-14);

        let x = ManifoldPoint::spd(diag(&[4.0, 1.0])).unwrap();
        let s = scale_gradient(&x, &eye(2)).unwrap();
        assert!((&s.blocks[0] - diag(&[4.0, 1.0])).norm() < 1e-13);

        let x = ManifoldPoint::grassmann(col(&[1.0, 0.0, 0.0])).unwrap();
        let s = scale_gradient(&x, &col(&[5.0, 3.0, 4.0])).unwrap();
        assert!((&s.blocks[0] - col(&[0.0, 3.0, 4.0])).norm() < 1e-14);
    }

    #[test]
    fn lmo_examples() {
        let x = ManifoldPoint::fixed_rank(eye(2), eye(2)).unwrap();
        let r = lmo_direction(&x, &diag(&[2.0, -1.0]), NormSpec::Spectral, 1.0).unwrap();
        let TangentVector::FixedRank { b_dot, a_dot } = &r.xi else { panic!() };
        assert!((b_dot - diag(&[1.0, -1.0])).norm() < 1e-13);
        assert!((a_dot - diag(&[1.0, -1.0])).norm() < 1e-13);
        assert!((r.dual_value - 6.0).abs() < 1e-12);
        assert!((r.riem_norm_sq - 4.0).abs() < 1e-12);

        let x = ManifoldPoint::spd(eye(2)).unwrap();
        let r = lmo_direction(&x, &diag(&[1.0, -2.0]), NormSpec::Spectral, 1.0).unwrap();
        assert!((r.xi.parts()[0] - diag(&[1.0, -1.0])).norm() < 1e-13);

        let e1 = col(&[1.0, 0.0, 0.0]);
        let g = col(&[0.0, 3.0, 4.0]);
        let x = ManifoldPoint::stiefel(e1.clone()).unwrap();
        let r = lmo_direction(&x, &g, NormSpec::Spectral, 1.0).unwrap();
        assert_eq!(r.z_blocks[0], DenseMatrix::zeros(1, 1));
        assert!((r.xi.parts()[0] - col(&[0.0, 0.6, 0.8])).norm() < 1e-13);

        let x = ManifoldPoint::grassmann(e1).unwrap();
        for norm in [NormSpec::Spectral, NormSpec::Frobenius, NormSpec::Nuclear] {
            let r = lmo_direction(&x, &col(&[5.0, 3.0, 4.0]), norm, 1.0).unwrap();
            assert!((r.xi.parts()[0] - col(&[0.0, 0.6, 0.8])).norm() < 1e-13);
        }
    }

    #[test]
    fn zero_gradient_gives_zero_direction() {
        let x = ManifoldPoint::stiefel(DenseMatrix::identity(4, 2)).unwrap();
        let r = lmo_direction(&x, &DenseMatrix::zeros(4, 2), NormSpec::Spectral, 1.0).unwrap();
        assert!(r.xi.is_zero());
        assert_eq!(r.dual_value, 0.0);
    }

    #[test]
    fn specnuc_policy() {
        let sn = NormSpec::SpecNuc { tau_spec: 1.0, tau_nuc: 1.5 };
        let x = ManifoldPoint::fixed_rank(eye(2), eye(2)).unwrap();
        assert!(lmo_direction(&x, &eye(2), sn, 1.0).is_err());
        let opts = LmoOptions { allow_specnuc_product: true, ..Default::default() };
        assert!(lmo_direction_with(&x, &eye(2), sn, 1.0, &opts).is_ok());
        let x = ManifoldPoint::spd(eye(2)).unwrap();
        assert!(lmo_direction(&x, &eye(2), sn, 1.0).is_ok());
    }

    #[test]
    fn retract_examples() {
        let x = ManifoldPoint::spd(eye(2)).unwrap();
        let y = retract(&x, &TangentVector::Spd(diag(&[1.0, -1.0])), 1.0).unwrap();
        let e = std::f64::consts::E;
        assert!((y.parts()[0] - diag(&[e, 1.0 / e])).norm() < 1e-13);

        let x = ManifoldPoint::stiefel(col(&[1.0, 0.0])).unwrap();
        let y = retract(&x, &TangentVector::Stiefel(col(&[0.0, 1.0])), 1.0).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((y.parts()[0] - col(&[h, h])).norm() < 1e-14);

        let x = ManifoldPoint::fixed_rank(eye(2), diag(&[2.0, 3.0])).unwrap();
        assert_eq!(retract(&x, &TangentVector::zeros_at(&x), 0.7).unwrap(), x);
    }

    #[test]
    fn retract_detects_rank_loss() {
        let x = ManifoldPoint::fixed_rank(eye(2), eye(2)).unwrap();
        let xi = TangentVector::FixedRank { b_dot: diag(&[0.0, -1.0]), a_dot: DenseMatrix::zeros(2, 2) };
        assert!(matches!(retract(&x, &xi, 1.0), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn gauge_and_ambient() {
        let x = ManifoldPoint::fixed_rank(diag(&[1.0, 2.0]), diag(&[3.0, 4.0])).unwrap();
        assert_eq!(gauge_transform(&x, &eye(2)).unwrap().ambient(), x.ambient());
        let y = gauge_transform(&x, &(eye(2) * 10.0)).unwrap();
        assert!((y.ambient() - x.ambient()).norm() < 1e-12);
        assert!(gauge_transform(&x, &diag(&[1.0, 0.0])).is_err());

        let x = ManifoldPoint::fixed_rank(eye(2), eye(2)).unwrap();
        let xi = TangentVector::FixedRank { b_dot: eye(2), a_dot: eye(2) };
        assert_eq!(ambient_update(&x, &xi).unwrap(), eye(2) * 2.0);
        assert_eq!(ambient_update(&x, &TangentVector::zeros_at(&x)).unwrap(), DenseMatrix::zeros(2, 2));
    }

    #[test]
    fn point_validation() {
        assert!(ManifoldPoint::spd(diag(&[1.0, -1.0])).is_err());
        assert!(ManifoldPoint::stiefel(col(&[1.0, 1.0])).is_err());
        assert!(ManifoldPoint::fixed_rank(diag(&[1.0, 0.0]), eye(2)).is_err());
        assert!(ManifoldPoint::fixed_rank(eye(2), DenseMatrix::identity(3, 3)).is_err());
    }
}
