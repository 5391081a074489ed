//! Dense linear-algebra kernels shared by every geometry.
//!
//! Decompositions are backed by `nalgebra`; this module adds the conventions the
//! rest of the crate relies on: singular and eigenvalues sorted nonincreasing,
//! sign-fixed thin QR, compact-SVD polar factors (zero singular values stay zero)
//! and explicit refusal of non-finite input.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, Error, Result};

/// Row/column real matrix carrying points, tangents and gradients.
pub type DenseMatrix = DMatrix<f64>;

/// Singular values at or below `RANK_REL_TOL * sigma_1` are treated as zero.
pub const RANK_REL_TOL: f64 = 1e-12;

/// Convergence threshold for the iterative SVD and symmetric eigensolver (nalgebra's default).
/// A bare machine epsilon can stop early with inaccurate singular vectors on rank-deficient input.
const DECOMP_EPS: f64 = 5.0 * f64::EPSILON;

/// Relative reconstruction error above which an SVD or eigendecomposition is rejected.
const SVD_RECON_TOL: f64 = 1e-9;
const JACOBI_MAX_SWEEPS: usize = 60;

/// Eigenvalues with `|lambda| <= EIG_ZERO_REL_TOL * max|lambda|` have sign zero.
pub const EIG_ZERO_REL_TOL: f64 = 1e-12;
/// SPD floor relative to `trace(X) / n`.
pub const SPD_FLOOR_REL: f64 = 1e-12;
/// Thin QR refuses `|R_ii| <= QR_RANK_REL_TOL * ||M||_F`.
pub const QR_RANK_REL_TOL: f64 = 1e-12;
/// Default Newton-Schulz iteration budget and stopping tolerance.
pub const NS_MAX_ITERS: usize = 15;
pub const NS_TOL: f64 = 1e-8;

/// Compact SVD `M = U diag(sigma) V^T` with `sigma` nonincreasing.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

impl SvdFactors {
    /// Rebuilds `U diag(d) V^T` for a replacement singular-value vector.
    pub fn compose(&self, d: &[f64]) -> DenseMatrix {
        let mut us = self.u.clone();
        for (j, &dj) in d.iter().enumerate() {
            us.column_mut(j).scale_mut(dj);
        }
        us * self.v.transpose()
    }

    /// Number of singular values above the relative rank tolerance.
    pub fn numerical_rank(&self) -> usize {
        let top = self.sigma.first().copied().unwrap_or(0.0);
        self.sigma
            .iter()
            .filter(|&&s| s > RANK_REL_TOL * top && s > 0.0)
            .count()
    }
}

/// Thin QR with an upper-triangular, strictly positive-diagonal `R`.
#[derive(Debug, Clone)]
pub struct ThinQr {
    pub q: DenseMatrix,
    pub r: DenseMatrix,
}

/// Newton-Schulz polar output.
#[derive(Debug, Clone)]
pub struct NewtonSchulz {
    pub polar: DenseMatrix,
    pub iterations: usize,
    pub residual: f64,
}

pub fn ensure_finite(m: &DenseMatrix, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        invalid(format!("{what} contains non-finite entries"))
    }
}

/// Builds a matrix from row-major data.
pub fn from_rows(rows: usize, cols: usize, data: &[f64]) -> Result<DenseMatrix> {
    if data.len() != rows * cols {
        return invalid(format!(
            "expected {} entries for a {rows}x{cols} matrix, got {}",
            rows * cols,
            data.len()
        ));
    }
    Ok(DenseMatrix::from_row_slice(rows, cols, data))
}

/// Row-major copy of the entries.
pub fn to_rows(m: &DenseMatrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn diag(values: &[f64]) -> DenseMatrix {
    DenseMatrix::from_diagonal(&DVector::from_column_slice(values))
}

/// Frobenius inner product `tr(A^T B)`.
pub fn frob_inner(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.dot(b)
}

pub fn sym_part(m: &DenseMatrix) -> DenseMatrix {
    (m + m.transpose()) * 0.5
}

/// `(M - M^T) / 2`.
pub fn skew_part(m: &DenseMatrix) -> DenseMatrix {
    (m - m.transpose()) * 0.5
}

/// Compact SVD with nonincreasing singular values.
pub fn svd(m: &DenseMatrix) -> Result<SvdFactors> {
    ensure_finite(m, "svd input")?;
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Ok(SvdFactors {
            u: DenseMatrix::zeros(rows, 0),
            sigma: Vec::new(),
            v: DenseMatrix::zeros(cols, 0),
        });
    }
    if let Some(f) = bidiagonal_svd(m) {
        if svd_residual(&f, m) <= SVD_RECON_TOL * (1.0 + m.norm()) {
            return Ok(f);
        }
    }
    let f = jacobi_svd(m);
    let residual = svd_residual(&f, m);
    if residual > SVD_RECON_TOL * (1.0 + m.norm()) {
        return Err(Error::ConvergenceFailure { residual, iterations: JACOBI_MAX_SWEEPS });
    }
    Ok(f)
}

fn svd_residual(f: &SvdFactors, m: &DenseMatrix) -> f64 {
    (f.compose(&f.sigma) - m).norm()
}

fn sorted_factors(u_raw: &DenseMatrix, sigma_raw: &[f64], v_raw: &DenseMatrix) -> SvdFactors {
    let k = sigma_raw.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| sigma_raw[b].total_cmp(&sigma_raw[a]));
    let mut u = DenseMatrix::zeros(u_raw.nrows(), k);
    let mut v = DenseMatrix::zeros(v_raw.nrows(), k);
    let mut sigma = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        u.set_column(dst, &u_raw.column(src));
        v.set_column(dst, &v_raw.column(src));
        sigma.push(sigma_raw[src].max(0.0));
    }
    SvdFactors { u, sigma, v }
}

fn bidiagonal_svd(m: &DenseMatrix) -> Option<SvdFactors> {
    let raw = m.clone().try_svd(true, true, DECOMP_EPS, 0)?;
    let sigma: Vec<f64> = raw.singular_values.iter().copied().collect();
    Some(sorted_factors(&raw.u?, &sigma, &raw.v_t?.transpose()))
}

/// One-sided Jacobi SVD. Used when the bidiagonal solver returns factors that do not
/// reconstruct the input, which happens on some exactly rank-deficient matrices.
fn jacobi_svd(m: &DenseMatrix) -> SvdFactors {
    if m.nrows() < m.ncols() {
        let t = jacobi_svd(&m.transpose());
        return SvdFactors { u: t.v, sigma: t.sigma, v: t.u };
    }
    let n = m.ncols();
    let mut a = m.clone();
    let mut v = DenseMatrix::identity(n, n);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for mat in [&mut a, &mut v] {
                    for i in 0..mat.nrows() {
                        let (x, y) = (mat[(i, p)], mat[(i, q)]);
                        mat[(i, p)] = c * x - s * y;
                        mat[(i, q)] = s * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sigma: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    let top = sigma.iter().copied().fold(0.0, f64::max);
    let mut u = DenseMatrix::zeros(m.nrows(), n);
    let mut missing = Vec::new();
    for (j, s) in sigma.iter_mut().enumerate() {
        if *s > RANK_REL_TOL * top && *s > 0.0 {
            u.set_column(j, &(a.column(j) / *s));
        } else {
            *s = 0.0;
            missing.push(j);
        }
    }
    complete_orthonormal(&mut u, &missing);
    sorted_factors(&u, &sigma, &v)
}

/// Fills the listed columns of `u` with unit vectors orthogonal to all other columns.
fn complete_orthonormal(u: &mut DenseMatrix, missing: &[usize]) {
    let rows = u.nrows();
    let mut filled: Vec<usize> = (0..u.ncols()).filter(|j| !missing.contains(j)).collect();
    let mut basis = 0;
    for &j in missing {
        while basis < rows {
            let mut cand = DVector::zeros(rows);
            cand[basis] = 1.0;
            basis += 1;
            for _ in 0..2 {
                for &k in &filled {
                    let proj = u.column(k).dot(&cand);
                    cand -= u.column(k) * proj;
                }
            }
            let norm = cand.norm();
            if norm > 1e-8 {
                u.set_column(j, &(cand / norm));
                filled.push(j);
                break;
            }
        }
    }
}

/// Polar factor `U V^T` of the compact SVD; numerically zero singular values map to zero.
pub fn polar_exact(m: &DenseMatrix) -> Result<DenseMatrix> {
    let f = svd(m)?;
    let rank = f.numerical_rank();
    let d: Vec<f64> = (0..f.sigma.len())
        .map(|i| if i < rank { 1.0 } else { 0.0 })
        .collect();
    Ok(f.compose(&d))
}

/// Cubic Newton-Schulz iteration `X <- 1.5 X - 0.5 X X^T X` from `X_0 = M / ||M||_F`.
pub fn polar_newton_schulz(m: &DenseMatrix, max_iters: usize, tol: f64) -> Result<NewtonSchulz> {
    ensure_finite(m, "newton-schulz input")?;
    let wide = m.nrows() < m.ncols();
    let base = if wide { m.transpose() } else { m.clone() };
    let norm = base.norm();
    if norm == 0.0 {
        return invalid("newton-schulz needs a full-rank input, got the zero matrix");
    }
    let eye = DenseMatrix::identity(base.ncols(), base.ncols());
    let mut x = base / norm;
    let mut iterations = 0;
    let mut residual;
    loop {
        let gram = x.transpose() * &x;
        residual = (&gram - &eye).norm();
        if residual <= tol || iterations >= max_iters {
            break;
        }
        x = &x * 1.5 - (&x * gram) * 0.5;
        iterations += 1;
    }
    if residual > tol {
        return Err(Error::ConvergenceFailure {
            residual,
            iterations,
        });
    }
    let polar = if wide { x.transpose() } else { x };
    Ok(NewtonSchulz {
        polar,
        iterations,
        residual,
    })
}

/// Symmetric eigendecomposition `S = Q diag(lambda) Q^T`, `lambda` nonincreasing.
pub fn sym_eig(s: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>)> {
    ensure_finite(s, "symmetric eigen input")?;
    if !s.is_square() {
        return invalid(format!("sym_eig needs a square matrix, got {:?}", s.shape()));
    }
    let n = s.nrows();
    if n == 0 {
        return Ok((DenseMatrix::zeros(0, 0), Vec::new()));
    }
    let eig = SymmetricEigen::try_new(sym_part(s), DECOMP_EPS, 0).ok_or(
        Error::ConvergenceFailure {
            residual: f64::NAN,
            iterations: 0,
        },
    )?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut q = DenseMatrix::zeros(n, n);
    let mut lambda = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        q.set_column(dst, &eig.eigenvectors.column(src));
        lambda.push(eig.eigenvalues[src]);
    }
    let sym = sym_part(s);
    let residual = (compose_sym(&q, &lambda) - &sym).norm();
    if residual > SVD_RECON_TOL * (1.0 + sym.norm()) {
        return Err(Error::ConvergenceFailure { residual, iterations: 0 });
    }
    Ok((q, lambda))
}

/// `Q diag(f(lambda)) Q^T` for symmetric input.
pub fn sym_apply(s: &DenseMatrix, f: impl Fn(f64) -> f64) -> Result<DenseMatrix> {
    let (q, lambda) = sym_eig(s)?;
    Ok(compose_sym(&q, &lambda.iter().map(|&l| f(l)).collect::<Vec<_>>()))
}

pub fn compose_sym(q: &DenseMatrix, values: &[f64]) -> DenseMatrix {
    let mut qd = q.clone();
    for (j, &v) in values.iter().enumerate() {
        qd.column_mut(j).scale_mut(v);
    }
    let out = qd * q.transpose();
    sym_part(&out)
}

/// Matrix sign of a symmetric matrix; near-null eigenvalues map to 0.
pub fn matrix_sign_sym(s: &DenseMatrix) -> Result<DenseMatrix> {
    let (q, lambda) = sym_eig(s)?;
    let top = lambda.iter().fold(0.0f64, |acc, l| acc.max(l.abs()));
    let cut = EIG_ZERO_REL_TOL * top;
    let signs: Vec<f64> = lambda
        .iter()
        .map(|&l| {
            if l.abs() <= cut || l == 0.0 {
                0.0
            } else {
                l.signum()
            }
        })
        .collect();
    Ok(compose_sym(&q, &signs))
}

fn spd_eig(x: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>)> {
    let (q, lambda) = sym_eig(x)?;
    let n = lambda.len().max(1) as f64;
    let floor = SPD_FLOOR_REL * x.trace() / n;
    let min_eig = lambda.last().copied().unwrap_or(0.0);
    if !(min_eig > floor) || !(floor > 0.0) {
        return Err(Error::NotPositiveDefinite { min_eig, floor });
    }
    Ok((q, lambda))
}

/// Returns `(X^{1/2}, X^{-1/2})`.
pub fn spd_sqrt_invsqrt(x: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    let (q, lambda) = spd_eig(x)?;
    let half: Vec<f64> = lambda.iter().map(|l| l.sqrt()).collect();
    let inv_half: Vec<f64> = half.iter().map(|h| 1.0 / h).collect();
    Ok((compose_sym(&q, &half), compose_sym(&q, &inv_half)))
}

/// Matrix logarithm of an SPD matrix.
pub fn spd_log(x: &DenseMatrix) -> Result<DenseMatrix> {
    let (q, lambda) = spd_eig(x)?;
    Ok(compose_sym(&q, &lambda.iter().map(|l| l.ln()).collect::<Vec<_>>()))
}

/// Inverse of an SPD matrix through its eigendecomposition.
pub fn spd_inverse(x: &DenseMatrix) -> Result<DenseMatrix> {
    let (q, lambda) = spd_eig(x)?;
    Ok(compose_sym(&q, &lambda.iter().map(|l| 1.0 / l).collect::<Vec<_>>()))
}

/// Checks the SPD floor without returning factors.
pub fn check_spd(x: &DenseMatrix) -> Result<()> {
    spd_eig(x).map(|_| ())
}

/// Matrix exponential of a symmetric matrix (always SPD).
pub fn spd_exp(s: &DenseMatrix) -> Result<DenseMatrix> {
    sym_apply(s, f64::exp)
}

/// Thin QR with positive `R` diagonal; requires full column rank.
pub fn thin_qr(m: &DenseMatrix) -> Result<ThinQr> {
    ensure_finite(m, "qr input")?;
    let (rows, cols) = m.shape();
    if rows < cols {
        return invalid(format!("thin_qr needs rows >= cols, got {rows}x{cols}"));
    }
    let qr = m.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    let scale = m.norm();
    for i in 0..cols {
        let d = r[(i, i)];
        if !(d.abs() > QR_RANK_REL_TOL * scale) {
            return Err(Error::RankDeficient(format!(
                "|R[{i},{i}]| = {:e} relative to ||M||_F = {scale:e}",
                d.abs()
            )));
        }
        if d < 0.0 {
            q.column_mut(i).neg_mut();
            r.row_mut(i).neg_mut();
        }
    }
    Ok(ThinQr { q, r })
}

/// Q factor of the sign-fixed thin QR.
pub fn qf(m: &DenseMatrix) -> Result<DenseMatrix> {
    thin_qr(m).map(|f| f.q)
}

/// Power-iteration lower bound on `||M||_2`, started from the largest-norm column direction.
pub fn spectral_norm_estimate(m: &DenseMatrix, power_iters: usize) -> f64 {
    let cols = m.ncols();
    if cols == 0 || m.nrows() == 0 {
        return 0.0;
    }
    let start = (0..cols)
        .max_by(|&a, &b| m.column(a).norm().total_cmp(&m.column(b).norm()))
        .unwrap_or(0);
    let mut v = DVector::<f64>::zeros(cols);
    v[start] = 1.0;
    let mut estimate = (m * &v).norm();
    for _ in 0..power_iters {
        let w = m.transpose() * (m * &v);
        let nw = w.norm();
        if nw == 0.0 {
            break;
        }
        v = w / nw;
        estimate = (m * &v).norm();
    }
    estimate
}

/// Exact spectral norm from the SVD.
pub fn spectral_norm(m: &DenseMatrix) -> Result<f64> {
    Ok(svd(m)?.sigma.first().copied().unwrap_or(0.0))
}

/// Solves `X R^T = Z` for upper-triangular `R`, i.e. `X = Z R^{-T}`.
pub fn right_solve_upper_transpose(z: &DenseMatrix, r: &DenseMatrix) -> Result<DenseMatrix> {
    // X R^T = Z  <=>  R X^T = Z^T
    let xt = r
        .solve_upper_triangular(&z.transpose())
        .ok_or_else(|| Error::RankDeficient("singular triangular factor".into()))?;
    Ok(xt.transpose())
}

/// Solves `R X = Z` for upper-triangular `R`.
pub fn left_solve_upper(r: &DenseMatrix, z: &DenseMatrix) -> Result<DenseMatrix> {
    r.solve_upper_triangular(z)
        .ok_or_else(|| Error::RankDeficient("singular triangular factor".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: &DenseMatrix, b: &DenseMatrix, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn svd_reconstructs_rank_one_tall_input() {
        let m = DenseMatrix::from_row_slice(
            3,
            2,
            &[
                -1.2354124217094375,
                -0.8333163661084382,
                -0.5599135472987211,
                -0.37767559591496014,
                0.8596820236908408,
                0.5798768794954613,
            ],
        );
        let f = svd(&m).unwrap();
        assert!(close(&f.compose(&f.sigma), &m, 1e-12));
        let u1 = f.u.column(0) * f.sigma[0];
        assert!((&m * f.v.column(0) - u1).norm() < 1e-12);

        // The bidiagonal solver returns factors with reconstruction error ~1e-2 here.
        let hard = DenseMatrix::from_row_slice(
            3,
            2,
            &[
                0.7163827853650178,
                -0.26381607047853345,
                -0.3221506706212709,
                0.11863563134340604,
                -0.28217489047535405,
                0.10391409776128113,
            ],
        );
        let f = svd(&hard).unwrap();
        assert!(close(&f.compose(&f.sigma), &hard, 1e-12));
        assert!(close(&(f.u.transpose() * &f.u), &DenseMatrix::identity(2, 2), 1e-12));
        assert_eq!(f.sigma[1], 0.0);
    }

    #[test]
    fn jacobi_svd_matches_bidiagonal_on_generic_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (rows, cols) in [(6, 3), (3, 6), (5, 5), (1, 4)] {
            let m = sample::gaussian(&mut rng, rows, cols);
            let a = jacobi_svd(&m);
            let b = bidiagonal_svd(&m).unwrap();
            for (x, y) in a.sigma.iter().zip(&b.sigma) {
                assert!((x - y).abs() < 1e-12);
            }
            assert!(close(&a.compose(&a.sigma), &m, 1e-12));
            let k = rows.min(cols);
            assert!(close(&(a.u.transpose() * &a.u), &DenseMatrix::identity(k, k), 1e-12));
            assert!(close(&(a.v.transpose() * &a.v), &DenseMatrix::identity(k, k), 1e-12));
        }
    }

    #[test]
    fn svd_identity_and_signed_diagonal() {
        let f = svd(&DenseMatrix::identity(2, 2)).unwrap();
        assert_eq!(f.sigma, vec![1.0, 1.0]);
        assert!(close(&f.compose(&f.sigma), &DenseMatrix::identity(2, 2), 1e-14));

        let m = diag(&[3.0, -1.0]);
        let f = svd(&m).unwrap();
        assert!((f.sigma[0] - 3.0).abs() < 1e-14 && (f.sigma[1] - 1.0).abs() < 1e-14);
        assert!(close(&f.compose(&f.sigma), &m, 1e-13));
    }

    #[test]
    fn svd_random_reconstruction_and_orthogonality() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (r, c) in [(5, 3), (3, 5), (7, 7)] {
            let m = sample::gaussian(&mut rng, r, c);
            let f = svd(&m).unwrap();
            assert!((f.compose(&f.sigma) - &m).norm() <= 1e-10 * m.norm().max(1.0));
            let k = r.min(c);
            assert!((f.u.transpose() * &f.u - DenseMatrix::identity(k, k)).norm() < 1e-10);
            assert!((f.v.transpose() * &f.v - DenseMatrix::identity(k, k)).norm() < 1e-10);
            assert!(f.sigma.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn svd_rejects_non_finite() {
        let mut m = DenseMatrix::identity(2, 2);
        m[(0, 1)] = f64::NAN;
        assert!(matches!(svd(&m), Err(Error::InvalidInput(_))));
        assert!(matches!(polar_exact(&m), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn polar_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = sample::orthonormal(&mut rng, 4, 4);
        assert!(close(&polar_exact(&q).unwrap(), &q, 1e-12));
        assert!(close(
            &polar_exact(&diag(&[5.0, 0.1])).unwrap(),
            &DenseMatrix::identity(2, 2),
            1e-13
        ));
        assert!(close(
            &polar_exact(&diag(&[2.0, -3.0])).unwrap(),
            &diag(&[1.0, -1.0]),
            1e-13
        ));
        // compact-SVD convention: rank-deficient input keeps the null part at zero
        let p = polar_exact(&diag(&[2.0, 0.0])).unwrap();
        assert!(close(&p, &diag(&[1.0, 0.0]), 1e-13));
        assert_eq!(polar_exact(&DenseMatrix::zeros(3, 2)).unwrap(), DenseMatrix::zeros(3, 2));
    }

    #[test]
    fn polar_maximizes_trace_pairing() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let m = sample::gaussian(&mut rng, 6, 4);
            let p = polar_exact(&m).unwrap();
            let nuclear: f64 = svd(&m).unwrap().sigma.iter().sum();
            assert!((frob_inner(&p, &m) - nuclear).abs() < 1e-10 * nuclear);
            assert!(spectral_norm(&p).unwrap() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn newton_schulz_on_orthonormal_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let col = sample::orthonormal(&mut rng, 3, 1);
        let ns = polar_newton_schulz(&col, 15, 1e-8).unwrap();
        assert!(ns.iterations <= 2);
        assert!(close(&ns.polar, &col, 1e-8));

        let q = sample::orthonormal(&mut rng, 2, 2);
        let ns = polar_newton_schulz(&q, 15, 1e-8).unwrap();
        assert!(close(&ns.polar, &q, 1e-8));
    }

    #[test]
    fn newton_schulz_matches_exact_polar() {
        let ns = polar_newton_schulz(&diag(&[1.0, 0.5]), 15, 1e-8).unwrap();
        assert!(close(&ns.polar, &DenseMatrix::identity(2, 2), 1e-7));

        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let sv: Vec<f64> = (0..8).map(|i| 0.1 + 0.9 * i as f64 / 7.0).collect();
        let m = sample::with_singular_values(&mut rng, 64, 8, &sv);
        let ns = polar_newton_schulz(&m, 15, 1e-8).unwrap();
        assert!(close(&ns.polar, &polar_exact(&m).unwrap(), 1e-6));
    }

    #[test]
    fn newton_schulz_reports_last_residual_on_failure() {
        let err = polar_newton_schulz(&diag(&[1.0, 1e-4]), 3, 1e-8).unwrap_err();
        match err {
            Error::ConvergenceFailure { residual, iterations } => {
                assert_eq!(iterations, 3);
                assert!(residual > 1e-8);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sym_eig_examples() {
        let (_, l) = sym_eig(&DenseMatrix::identity(3, 3)).unwrap();
        assert_eq!(l, vec![1.0, 1.0, 1.0]);
        let (q, l) = sym_eig(&diag(&[2.0, -1.0])).unwrap();
        assert_eq!(l, vec![2.0, -1.0]);
        assert!((q[(0, 0)].abs() - 1.0).abs() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = sample::symmetric(&mut rng, 6);
        let (q, l) = sym_eig(&s).unwrap();
        assert!((compose_sym(&q, &l) - &s).norm() < 1e-10);
    }

    #[test]
    fn matrix_sign_examples() {
        assert!(close(&matrix_sign_sym(&diag(&[3.0, -2.0])).unwrap(), &diag(&[1.0, -1.0]), 1e-14));
        let eye = DenseMatrix::identity(4, 4);
        assert!(close(&matrix_sign_sym(&eye).unwrap(), &eye, 1e-14));

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q = sample::orthonormal(&mut rng, 2, 2);
        let h = compose_sym(&q, &[5.0, -1e-14]);
        let expected = compose_sym(&q, &[1.0, 0.0]);
        assert!(close(&matrix_sign_sym(&h).unwrap(), &expected, 1e-10));
    }

    #[test]
    fn matrix_sign_squares_to_projector() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let s = sample::symmetric(&mut rng, 5);
        let sg = matrix_sign_sym(&s).unwrap();
        let (_, l2) = sym_eig(&(&sg * &sg)).unwrap();
        assert!(l2.iter().all(|l| (l - 1.0).abs() < 1e-10 || l.abs() < 1e-10));
        let (_, lp) = sym_eig(&sym_part(&(&sg * &s))).unwrap();
        assert!(lp.iter().all(|&l| l > -1e-10));
    }

    #[test]
    fn spd_roots() {
        let (h, ih) = spd_sqrt_invsqrt(&DenseMatrix::identity(3, 3)).unwrap();
        assert!(close(&h, &DenseMatrix::identity(3, 3), 1e-14));
        assert!(close(&ih, &DenseMatrix::identity(3, 3), 1e-14));
        let (h, ih) = spd_sqrt_invsqrt(&diag(&[4.0, 9.0])).unwrap();
        assert!(close(&h, &diag(&[2.0, 3.0]), 1e-14));
        assert!(close(&ih, &diag(&[0.5, 1.0 / 3.0]), 1e-14));

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = sample::spd(&mut rng, 6);
        let (h, ih) = spd_sqrt_invsqrt(&x).unwrap();
        assert!((&h * &h - &x).norm() <= 1e-9 * x.norm());
        assert!((&h * &ih - DenseMatrix::identity(6, 6)).norm() <= 1e-9);
    }

    #[test]
    fn spd_roots_refuse_indefinite() {
        assert!(matches!(
            spd_sqrt_invsqrt(&diag(&[1.0, -1.0])),
            Err(Error::NotPositiveDefinite { .. })
        ));
        assert!(matches!(
            spd_sqrt_invsqrt(&diag(&[1.0, 1e-14])),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn thin_qr_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let q = sample::orthonormal(&mut rng, 5, 3);
        let f = thin_qr(&q).unwrap();
        assert!(close(&f.q, &q, 1e-12));
        assert!(close(&f.r, &DenseMatrix::identity(3, 3), 1e-12));

        let v = from_rows(2, 1, &[3.0, 4.0]).unwrap();
        let f = thin_qr(&v).unwrap();
        assert!((f.q[(0, 0)] - 0.6).abs() < 1e-15 && (f.q[(1, 0)] - 0.8).abs() < 1e-15);
        assert!((f.r[(0, 0)] - 5.0).abs() < 1e-14);

        let m = sample::gaussian(&mut rng, 20, 4);
        let f = thin_qr(&m).unwrap();
        assert!((f.q.transpose() * &f.q - DenseMatrix::identity(4, 4)).norm() < 1e-10);
        assert!((&f.q * &f.r - &m).norm() < 1e-10);
        assert!((0..4).all(|i| f.r[(i, i)] > 0.0));
        let again = thin_qr(&m).unwrap();
        for i in 0..4 {
            assert_eq!(f.r[(i, i)].to_bits(), again.r[(i, i)].to_bits());
        }
    }

    #[test]
    fn thin_qr_rank_deficient() {
        let m = from_rows(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]).unwrap();
        assert!(matches!(thin_qr(&m), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn exp_skew_and_power_iteration() {
        assert!(close(&spd_exp(&DenseMatrix::zeros(3, 3)).unwrap(), &DenseMatrix::identity(3, 3), 1e-15));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample::symmetric(&mut rng, 4);
        assert_eq!(skew_part(&s).norm(), 0.0);
        assert!((spectral_norm_estimate(&diag(&[3.0, 1.0]), 50) - 3.0).abs() < 1e-6);
        let m = sample::gaussian(&mut rng, 7, 5);
        let est = spectral_norm_estimate(&m, 1);
        assert!(est <= spectral_norm(&m).unwrap() * (1.0 + 1e-12));
    }
}
