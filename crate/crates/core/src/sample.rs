//! Seeded random matrices and manifold points.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::manifolds::{ManifoldDims, ManifoldKind, ManifoldPoint};
use crate::matcore::{self, DenseMatrix};

pub fn gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn symmetric<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DenseMatrix {
    matcore::sym_part(&gaussian(rng, n, n))
}

/// `G G^T / n + I`.
pub fn spd<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DenseMatrix {
    let g = gaussian(rng, n, n);
    let mut x = &g * g.transpose() / n.max(1) as f64;
    for i in 0..n {
        x[(i, i)] += 1.0;
    }
    matcore::sym_part(&x)
}

/// Orthonormal columns, `rows >= cols`.
pub fn orthonormal<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DenseMatrix {
    loop {
        if let Ok(q) = matcore::qf(&gaussian(rng, rows, cols)) {
            return q;
        }
    }
}

/// `U diag(sv) V^T` with Haar-like orthonormal factors.
pub fn with_singular_values<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    sv: &[f64],
) -> DenseMatrix {
    let k = sv.len();
    let u = orthonormal(rng, rows, k);
    let v = orthonormal(rng, cols, k);
    let mut us = u;
    for (j, &s) in sv.iter().enumerate() {
        us.column_mut(j).scale_mut(s);
    }
    us * v.transpose()
}

/// Invertible `n x n` matrix with condition number exactly `cond`.
pub fn with_condition<R: Rng + ?Sized>(rng: &mut R, n: usize, cond: f64) -> DenseMatrix {
    let sv: Vec<f64> = (0..n)
        .map(|i| {
            if n == 1 {
                1.0
            } else {
                cond.powf(-(i as f64) / (n - 1) as f64)
            }
        })
        .collect();
    with_singular_values(rng, n, n, &sv)
}

/// Nonincreasing nonnegative vector of length `n`.
pub fn sorted_sigma<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut s: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 10.0).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Random point of the given shape: Gaussian factors, `spd`, or an orthonormal frame.
pub fn point<R: Rng + ?Sized>(rng: &mut R, dims: &ManifoldDims) -> ManifoldPoint {
    match dims.kind {
        ManifoldKind::FixedRank => ManifoldPoint::FixedRank {
            b: gaussian(rng, dims.m, dims.r),
            a: gaussian(rng, dims.r, dims.n),
        },
        ManifoldKind::Spd => ManifoldPoint::Spd(spd(rng, dims.n)),
        ManifoldKind::Stiefel => ManifoldPoint::Stiefel(orthonormal(rng, dims.m, dims.r)),
        ManifoldKind::Grassmann => ManifoldPoint::Grassmann(orthonormal(rng, dims.m, dims.r)),
    }
}

/// Gaussian Euclidean gradient in the ambient shape of `dims` (symmetric for SPD).
pub fn egrad<R: Rng + ?Sized>(rng: &mut R, dims: &ManifoldDims) -> DenseMatrix {
    let (rows, cols) = dims.ambient_shape();
    let g = gaussian(rng, rows, cols);
    if dims.kind == ManifoldKind::Spd {
        matcore::sym_part(&g)
    } else {
        g
    }
}
