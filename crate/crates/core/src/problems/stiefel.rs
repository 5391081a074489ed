//! Sub-center prototypes on the Stiefel manifold with an additive-margin softmax.
//!
//! The frame `X` has `classes * subcenters` orthonormal columns; column `c * q + j`
//! is sub-center `j` of class `c`. A class score is the best sub-center response.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::manifolds::ManifoldPoint;
use crate::matcore::DenseMatrix;
use crate::optimizer::{FiniteSum, Objective};
use crate::sample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StiefelMeta {
    pub m: usize,
    pub classes: usize,
    pub subcenters: usize,
    pub per_class: usize,
    pub margin: f64,
    pub scale: f64,
    pub noise: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct StiefelInstance {
    pub meta: StiefelMeta,
    /// Unit-norm features as columns, with labels.
    pub train: Vec<(Vec<f64>, usize)>,
    pub test: Vec<(Vec<f64>, usize)>,
    init_seed: u64,
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.into_iter().map(|a| a / n).collect()
}

/// Gaussian clusters around random unit sub-center directions, projected back to the sphere.
pub fn gen_stiefel(m: usize, classes: usize, subcenters: usize, per_class: usize, noise: f64, seed: u64) -> Result<StiefelInstance> {
    if classes * subcenters > m || classes < 2 || subcenters == 0 || per_class == 0 || !(noise >= 0.0) {
        return invalid("Stiefel problem needs classes >= 2, classes * subcenters <= m, positive counts");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<Vec<f64>>> = (0..classes)
        .map(|_| {
            (0..subcenters)
                .map(|_| unit(sample::gaussian(&mut rng, m, 1).as_slice().to_vec()))
                .collect()
        })
        .collect();
    let draw = |rng: &mut ChaCha8Rng| {
        let mut out = Vec::with_capacity(classes * per_class);
        for i in 0..per_class {
            for (c, subs) in centers.iter().enumerate() {
                let center = &subs[i % subcenters];
                let g = sample::gaussian(rng, m, 1);
                let h: Vec<f64> = center.iter().zip(g.iter()).map(|(a, b)| a + noise * b).collect();
                out.push((unit(h), c));
            }
        }
        out
    };
    let train = draw(&mut rng);
    let test = draw(&mut rng);
    Ok(StiefelInstance {
        meta: StiefelMeta {
            m,
            classes,
            subcenters,
            per_class,
            margin: 0.5,
            scale: 64.0,
            noise,
            seed,
        },
        train,
        test,
        init_seed: seed ^ 0x5eed,
    })
}

impl StiefelInstance {
    pub fn from_samples(train: Vec<(Vec<f64>, usize)>, classes: usize, subcenters: usize, margin: f64, scale: f64) -> Self {
        let m = train.first().map(|s| s.0.len()).unwrap_or(0);
        StiefelInstance {
            meta: StiefelMeta {
                m,
                classes,
                subcenters,
                per_class: 0,
                margin,
                scale,
                noise: 0.0,
                seed: 0,
            },
            test: train.clone(),
            train,
            init_seed: 0,
        }
    }

    pub fn with_margin_scale(mut self, margin: f64, scale: f64) -> Self {
        self.meta.margin = margin;
        self.meta.scale = scale;
        self
    }

    /// Random orthonormal frame drawn from a seed derived from the instance seed.
    pub fn init(&self) -> Result<ManifoldPoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.init_seed);
        let cols = self.meta.classes * self.meta.subcenters;
        ManifoldPoint::stiefel(sample::orthonormal(&mut rng, self.meta.m, cols))
    }

    fn frame<'a>(&self, x: &'a [ManifoldPoint]) -> Result<&'a DenseMatrix> {
        match x {
            [ManifoldPoint::Stiefel(f)] if f.shape() == (self.meta.m, self.meta.classes * self.meta.subcenters) => Ok(f),
            _ => invalid("expected one Stiefel frame of matching shape"),
        }
    }

    /// Class scores and, per class, the winning column (lowest index on ties).
    fn scores(&self, x: &DenseMatrix, h: &[f64]) -> (Vec<f64>, Vec<usize>) {
        let q = self.meta.subcenters;
        let hv = DenseMatrix::from_column_slice(h.len(), 1, h);
        let resp = x.transpose() * hv;
        let mut s = Vec::with_capacity(self.meta.classes);
        let mut arg = Vec::with_capacity(self.meta.classes);
        for c in 0..self.meta.classes {
            let mut best = (f64::NEG_INFINITY, c * q);
            for j in 0..q {
                let v = resp[c * q + j];
                if v > best.0 {
                    best = (v, c * q + j);
                }
            }
            s.push(best.0);
            arg.push(best.1);
        }
        (s, arg)
    }

    fn eval(&self, x: &[ManifoldPoint], idx: &[usize]) -> Result<(f64, Vec<DenseMatrix>)> {
        let frame = self.frame(x)?;
        let (gamma, mg) = (self.meta.scale, self.meta.margin);
        let mut g = DenseMatrix::zeros(frame.nrows(), frame.ncols());
        let mut loss = 0.0;
        let count = idx.len().max(1) as f64;
        for &i in idx {
            let (h, y) = &self.train[i];
            let (s, arg) = self.scores(frame, h);
            let logits: Vec<f64> = s
                .iter()
                .enumerate()
                .map(|(c, v)| gamma * (v - if c == *y { mg } else { 0.0 }))
                .collect();
            let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l - top).exp()).sum();
            loss += top + z.ln() - logits[*y];
            for c in 0..self.meta.classes {
                let p = (logits[c] - top).exp() / z;
                let coef = gamma * (p - if c == *y { 1.0 } else { 0.0 }) / count;
                for (r, hv) in h.iter().enumerate() {
                    g[(r, arg[c])] += coef * hv;
                }
            }
        }
        Ok((loss / count, vec![g]))
    }

    fn accuracy_on(&self, x: &[ManifoldPoint], set: &[(Vec<f64>, usize)]) -> Result<f64> {
        let frame = self.frame(x)?;
        let mut hits = 0usize;
        for (h, y) in set {
            let (s, _) = self.scores(frame, h);
            let pred = s
                .iter()
                .enumerate()
                .fold((f64::NEG_INFINITY, 0), |acc, (c, &v)| if v > acc.0 { (v, c) } else { acc })
                .1;
            hits += (pred == *y) as usize;
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

impl Objective for StiefelInstance {
    fn value_grad(&self, x: &[ManifoldPoint]) -> Result<(f64, Vec<DenseMatrix>)> {
        let all: Vec<usize> = (0..self.train.len()).collect();
        self.eval(x, &all)
    }
}

impl FiniteSum for StiefelInstance {
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
