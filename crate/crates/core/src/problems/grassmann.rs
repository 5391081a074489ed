//! Fréchet prototypes on the Grassmannian: each class prototype minimizes the mean
//! squared principal-angle distance to that class's sample subspaces.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::manifolds::ManifoldPoint;
use crate::matcore::{self, DenseMatrix};
use crate::optimizer::{FiniteSum, Objective};
use crate::sample;

/// Cosines are clamped to `[0, 1 - ANGLE_CLAMP]` before `arccos`.
pub const ANGLE_CLAMP: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrassmannMeta {
    pub m: usize,
    pub k: usize,
    pub classes: usize,
    pub per_class: usize,
    pub noise: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct GrassmannInstance {
    pub meta: GrassmannMeta,
    /// `(frame, label)` training samples.
    pub train: Vec<(DenseMatrix, usize)>,
    pub test: Vec<(DenseMatrix, usize)>,
}

/// Squared geodesic distance `sum theta_j^2` between the spans of `x` and `s`, and its
/// Euclidean gradient in `x`.
pub fn grassmann_dist_sq_grad(x: &DenseMatrix, s: &DenseMatrix) -> Result<(f64, DenseMatrix)> {
    let f = matcore::svd(&(x.transpose() * s))?;
    let mut d2 = 0.0;
    let mut g = DenseMatrix::zeros(x.nrows(), x.ncols());
    for (j, &sv) in f.sigma.iter().enumerate() {
        let c = sv.clamp(0.0, 1.0 - ANGLE_CLAMP);
        let theta = c.acos();
        d2 += theta * theta;
        if sv > 0.0 && sv < 1.0 - ANGLE_CLAMP {
            let coef = -2.0 * theta / (1.0 - c * c).sqrt();
            g += (s * f.v.column(j)) * f.u.column(j).transpose() * coef;
        }
    }
    Ok((d2, g))
}

pub fn grassmann_distance(x: &DenseMatrix, s: &DenseMatrix) -> Result<f64> {
    Ok(grassmann_dist_sq_grad(x, s)?.0.sqrt())
}

/// Class subspaces are random frames; samples are `qf(U_c + noise G)`.
pub fn gen_grassmann(m: usize, k: usize, classes: usize, per_class: usize, noise: f64, seed: u64) -> Result<GrassmannInstance> {
    if k == 0 || k > m || classes == 0 || per_class == 0 || !(noise >= 0.0) {
        return invalid("Grassmann problem needs 0 < k <= m, positive counts and noise >= 0");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bases: Vec<DenseMatrix> = (0..classes).map(|_| sample::orthonormal(&mut rng, m, k)).collect();
    let draw = |rng: &mut ChaCha8Rng| -> Result<Vec<(DenseMatrix, usize)>> {
        let mut out = Vec::with_capacity(classes * per_class);
        for _ in 0..per_class {
            for (c, u) in bases.iter().enumerate() {
                let pert = u + sample::gaussian(rng, m, k) * noise;
                out.push((matcore::qf(&pert)?, c));
            }
        }
        Ok(out)
    };
    let train = draw(&mut rng)?;
    let test = draw(&mut rng)?;
    Ok(GrassmannInstance {
        meta: GrassmannMeta {
            m,
            k,
            classes,
            per_class,
            noise,
            seed,
        },
        train,
        test,
    })
}

impl GrassmannInstance {
    pub fn from_samples(train: Vec<(DenseMatrix, usize)>, classes: usize) -> Result<Self> {
        let (m, k) = train.first().map(|s| s.0.shape()).unwrap_or((0, 0));
        Ok(GrassmannInstance {
            meta: GrassmannMeta {
                m,
                k,
                classes,
                per_class: 0,
                noise: 0.0,
                seed: 0,
            },
            test: train.clone(),
            train,
        })
    }

    /// Each prototype starts at the first training sample of its class.
    pub fn init(&self) -> Result<Vec<ManifoldPoint>> {
        (0..self.meta.classes)
            .map(|c| {
                let first = self.train.iter().find(|s| s.1 == c);
                match first {
                    Some((s, _)) => ManifoldPoint::grassmann(s.clone()),
                    None => invalid(format!("class {c} has no samples")),
                }
            })
            .collect()
    }

    fn frames<'a>(&self, x: &'a [ManifoldPoint]) -> Result<Vec<&'a DenseMatrix>> {
        if x.len() != self.meta.classes {
            return invalid(format!("expected {} prototypes, got {}", self.meta.classes, x.len()));
        }
        x.iter()
            .map(|p| match p {
                ManifoldPoint::Grassmann(m) if m.shape() == (self.meta.m, self.meta.k) => Ok(m),
                _ => invalid("prototype must be a Grassmann point of matching shape"),
            })
            .collect()
    }

    fn eval(&self, x: &[ManifoldPoint], idx: &[usize]) -> Result<(f64, Vec<DenseMatrix>)> {
        let frames = self.frames(x)?;
        let mut counts = vec![0usize; self.meta.classes];
        for &i in idx {
            counts[self.train[i].1] += 1;
        }
        let mut grads = vec![DenseMatrix::zeros(self.meta.m, self.meta.k); self.meta.classes];
        let mut f = 0.0;
        for &i in idx {
            let (s, c) = &self.train[i];
            let (d2, g) = grassmann_dist_sq_grad(frames[*c], s)?;
            let w = 1.0 / counts[*c] as f64;
            f += w * d2;
            grads[*c] += g * w;
        }
        Ok((f, grads))
    }

    fn accuracy_on(&self, x: &[ManifoldPoint], set: &[(DenseMatrix, usize)]) -> Result<f64> {
        let frames = self.frames(x)?;
        let mut hits = 0usize;
        for (s, label) in set {
            let mut best = (f64::INFINITY, 0);
            for (c, p) in frames.iter().enumerate() {
                let d = grassmann_dist_sq_grad(p, s)?.0;
                if d < best.0 {
                    best = (d, c);
                }
            }
            hits += (best.1 == *label) as usize;
        }
        Ok(hits as f64 / set.len().max(1) as f64)
    }

    pub fn train_accuracy(&self, x: &[ManifoldPoint]) -> Result<f64> {
        self.accuracy_on(x, &self.train)
    }

    pub fn test_accuracy(&self, x: &[ManifoldPoint]) -> Result<f64> {
        self.accuracy_on(x, &self.test)
    }
}

impl Objective for GrassmannInstance {
    fn value_grad(&self, x: &[ManifoldPoint]) -> Result<(f64, Vec<DenseMatrix>)> {
        let all: Vec<usize> = (0..self.train.len()).collect();
        self.eval(x, &all)
    }
}

impl FiniteSum for GrassmannInstance {
    fn n_terms(&self) -> usize {
        self.train.len()
    }
    fn batch_value_grad(&self, x: &[ManifoldPoint], idx: &[usize]) -> Result<(f64, Vec<DenseMatrix>)> {
        if idx.iter().any(|&i| i >= self.train.len()) {
            return invalid("batch index out of range");
        }
        self.eval(x, idx)
    }
}
