//! Low-rank matrix completion with a controlled condition number.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::io;
use crate::manifolds::ManifoldPoint;
use crate::matcore::{self, DenseMatrix};
use crate::optimizer::Objective;
use crate::sample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionMeta {
    pub m: usize,
    pub n: usize,
    pub r: usize,
    pub oversampling: f64,
    pub kappa: f64,
    pub rho: f64,
    pub seed: u64,
    pub n_observed: usize,
    pub sigma: Vec<f64>,
    pub sigma_spacing: String,
    pub noise_std: f64,
}

/// Observed entries of a rank-`r` ground truth `X* = U diag(sigma) V^T`.
#[derive(Debug, Clone)]
pub struct CompletionInstance {
    pub meta: CompletionMeta,
    /// Observed positions, sorted row-major.
    pub omega: Vec<(usize, usize)>,
    pub y: Vec<f64>,
    pub x_star: DenseMatrix,
}

/// `sigma_1 = sqrt(mn / r)` keeps the entries of `X*` at unit RMS; the rest are
/// log-spaced down to `sigma_1 / kappa`.
pub fn singular_profile(m: usize, n: usize, r: usize, kappa: f64) -> Vec<f64> {
    let top = ((m * n) as f64 / r as f64).sqrt();
    (0..r)
        .map(|i| {
            if r == 1 {
                top
            } else {
                top * kappa.powf(-(i as f64) / (r - 1) as f64)
            }
        })
        .collect()
}

pub fn gen_completion(m: usize, n: usize, r: usize, s: f64, kappa: f64, rho: f64, seed: u64) -> Result<CompletionInstance> {
    if r == 0 || r > m.min(n) {
        return invalid(format!("rank {r} incompatible with {m}x{n}"));
    }
    if !(kappa >= 1.0 && kappa.is_finite()) || !(rho >= 0.0 && rho.is_finite()) || !(s > 0.0) {
        return invalid("need kappa >= 1, rho >= 0 and s > 0");
    }
    let count = (s * (r * (m + n)) as f64).round() as usize;
    if count > m * n {
        return invalid(format!("oversampling asks for {count} entries but the matrix has {}", m * n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = singular_profile(m, n, r, kappa);
    let u = sample::orthonormal(&mut rng, m, r);
    let v = sample::orthonormal(&mut rng, n, r);
    let mut us = u;
    for (j, &sj) in sigma.iter().enumerate() {
        us.column_mut(j).scale_mut(sj);
    }
    let x_star = us * v.transpose();
    let mut flat = rand::seq::index::sample(&mut rng, m * n, count).into_vec();
    flat.sort_unstable();
    let omega: Vec<(usize, usize)> = flat.iter().map(|&k| (k / n, k % n)).collect();
    let clean: Vec<f64> = omega.iter().map(|&(i, j)| x_star[(i, j)]).collect();
    let rms = (clean.iter().map(|v| v * v).sum::<f64>() / count.max(1) as f64).sqrt();
    let noise_std = rho * rms;
    let y = if noise_std > 0.0 {
        let dist = Normal::new(0.0, noise_std).map_err(|e| Error::InvalidInput(e.to_string()))?;
        clean.iter().map(|v| v + dist.sample(&mut rng)).collect()
    } else {
        clean
    };
    Ok(CompletionInstance {
        meta: CompletionMeta {
            m,
            n,
            r,
            oversampling: s,
            kappa,
            rho,
            seed,
            n_observed: count,
            sigma,
            sigma_spacing: "log".into(),
            noise_std,
        },
        omega,
        y,
        x_star,
    })
}

impl CompletionInstance {
    fn factors<'a>(&self, x: &'a [ManifoldPoint]) -> Result<(&'a DenseMatrix, &'a DenseMatrix)> {
        match x {
            [ManifoldPoint::FixedRank { b, a }] if b.nrows() == self.meta.m && a.ncols() == self.meta.n => Ok((b, a)),
            _ => invalid("completion expects one fixed-rank point of matching shape"),
        }
    }

    /// Residuals `(BA)_ij - Y_ij` on the observed set.
    fn residuals(&self, b: &DenseMatrix, a: &DenseMatrix) -> Vec<f64> {
        self.omega
            .iter()
            .zip(&self.y)
            .map(|(&(i, j), &yv)| b.row(i).dot(&a.column(j).transpose()) - yv)
            .collect()
    }

    /// `||BA - X*||_F / ||X*||_F`.
    pub fn relative_error(&self, x: &ManifoldPoint) -> Result<f64> {
        let (b, a) = self.factors(std::slice::from_ref(x))?;
        Ok((b * a - &self.x_star).norm() / self.x_star.norm())
    }

    /// Rank-`r` truncated SVD of the zero-filled observations `P_Omega(Y)`, split evenly
    /// between the factors, then unbalanced as `(alpha B, A / alpha)`.
    pub fn spectral_init(&self, alpha: f64) -> Result<ManifoldPoint> {
        let (m, n, r) = (self.meta.m, self.meta.n, self.meta.r);
        let mut p = DenseMatrix::zeros(m, n);
        for (&(i, j), &yv) in self.omega.iter().zip(&self.y) {
            p[(i, j)] = yv;
        }
        let f = matcore::svd(&p)?;
        let mut b = f.u.columns(0, r).into_owned();
        let mut a = f.v.columns(0, r).transpose();
        for k in 0..r {
            let root = f.sigma[k].sqrt();
            b.column_mut(k).scale_mut(root * alpha);
            a.row_mut(k).scale_mut(root / alpha);
        }
        ManifoldPoint::fixed_rank(b, a)
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        let err = |e: std::io::Error| Error::InvalidInput(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(err)?;
        let meta = serde_json::to_string_pretty(&self.meta).map_err(|e| Error::InvalidInput(e.to_string()))?;
        std::fs::write(dir.join("meta.json"), meta).map_err(err)?;
        let mut csv = String::from("i,j\n");
        for (i, j) in &self.omega {
            csv.push_str(&format!("{i},{j}\n"));
        }
        std::fs::write(dir.join("omega.csv"), csv).map_err(err)?;
        io::save_matrix(&dir.join("y.txt"), &DenseMatrix::from_column_slice(self.y.len(), 1, &self.y))?;
        io::save_matrix(&dir.join("x_star.txt"), &self.x_star)
    }
}

impl Objective for CompletionInstance {
    /// `f = ||P_Omega(BA - Y)||^2 / (2 |Omega|)`, gradient `P_Omega(BA - Y) / |Omega|` as a dense matrix.
    fn value_grad(&self, x: &[ManifoldPoint]) -> Result<(f64, Vec<DenseMatrix>)> {
        let (b, a) = self.factors(x)?;
        let res = self.residuals(b, a);
        let count = self.omega.len() as f64;
        let mut g = DenseMatrix::zeros(self.meta.m, self.meta.n);
        let mut f = 0.0;
        for (&(i, j), &rv) in self.omega.iter().zip(&res) {
            f += rv * rv;
            g[(i, j)] = rv / count;
        }
        Ok((f / (2.0 * count), vec![g]))
    }

    fn value(&self, x: &[ManifoldPoint]) -> Result<f64> {
        let (b, a) = self.factors(x)?;
        let res = self.residuals(b, a);
        Ok(res.iter().map(|v| v * v).sum::<f64>() / (2.0 * self.omega.len() as f64))
    }
}
