//! Prototype classification on SPD matrices under the affine-invariant distance.
//!
//! Logits are `-beta d^2(C_i, X_c)`; the loss is the mean cross-entropy plus
//! `lambda sum_c d^2(X_c, Xbar_c)` pulling each prototype toward its class anchor.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::manifolds::ManifoldPoint;
use crate::matcore::{self, DenseMatrix};
use crate::optimizer::{FiniteSum, Objective};
use crate::sample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpdProtoMeta {
    pub n_dim: usize,
    pub classes: usize,
    pub per_class: usize,
    pub seed: u64,
    pub beta: f64,
    pub lambda_reg: f64,
    pub sigma_w: f64,
}

#[derive(Debug, Clone)]
struct Sample {
    c: DenseMatrix,
    c_invhalf: DenseMatrix,
    label: usize,
}

#[derive(Debug, Clone)]
pub struct SpdProtoInstance {
    pub meta: SpdProtoMeta,
    train: Vec<Sample>,
    test: Vec<Sample>,
    /// Log-Euclidean class means.
    pub anchors: Vec<DenseMatrix>,
    anchor_invhalf: Vec<DenseMatrix>,
}

/// `d^2(C, X) = ||log(C^{-1/2} X C^{-1/2})||_F^2` and its gradient in `X`,
/// `C^{-1/2} (2 log(M) M^{-1}) C^{-1/2}` with `M = C^{-1/2} X C^{-1/2}`.
pub fn ai_dist_sq_grad(c_invhalf: &DenseMatrix, x: &DenseMatrix) -> Result<(f64, DenseMatrix)> {
    let m = matcore::sym_part(&(c_invhalf * x * c_invhalf));
    let (q, lambda) = matcore::sym_eig(&m)?;
    if lambda.iter().any(|&l| !(l > 0.0)) {
        return Err(crate::Error::NotPositiveDefinite {
            min_eig: lambda.last().copied().unwrap_or(0.0),
            floor: 0.0,
        });
    }
    let logs: Vec<f64> = lambda.iter().map(|l| l.ln()).collect();
    let d2 = logs.iter().map(|v| v * v).sum();
    let kernel: Vec<f64> = logs.iter().zip(&lambda).map(|(lg, l)| 2.0 * lg / l).collect();
    let g = c_invhalf * matcore::compose_sym(&q, &kernel) * c_invhalf;
    Ok((d2, matcore::sym_part(&g)))
}

/// Affine-invariant distance between two SPD matrices.
pub fn ai_distance(a: &DenseMatrix, b: &DenseMatrix) -> Result<f64> {
    let (_, a_ih) = matcore::spd_sqrt_invsqrt(a)?;
    Ok(ai_dist_sq_grad(&a_ih, b)?.0.sqrt())
}

fn log_euclidean_mean(mats: &[&DenseMatrix]) -> Result<DenseMatrix> {
    let n = mats[0].nrows();
    let mut acc = DenseMatrix::zeros(n, n);
    for m in mats {
        acc += matcore::spd_log(m)?;
    }
    matcore::spd_exp(&(acc / mats.len() as f64))
}

fn make_sample(c: DenseMatrix, label: usize) -> Result<Sample> {
    let (_, c_invhalf) = matcore::spd_sqrt_invsqrt(&c)?;
    Ok(Sample { c, c_invhalf, label })
}

/// Class centers `G G^T / n + I`, samples `M^{1/2} exp(sigma_w W) M^{1/2}` with `W` symmetric Gaussian.
pub fn gen_spd_proto(n_dim: usize, classes: usize, per_class: usize, seed: u64) -> Result<SpdProtoInstance> {
    gen_spd_proto_with(n_dim, classes, per_class, seed, 0.3, 1.0, 1e-2)
}

pub fn gen_spd_proto_with(
    n_dim: usize,
    classes: usize,
    per_class: usize,
    seed: u64,
    sigma_w: f64,
    beta: f64,
    lambda_reg: f64,
) -> Result<SpdProtoInstance> {
    if n_dim == 0 || classes == 0 || per_class == 0 {
        return invalid("SPD prototype problem needs positive sizes");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<DenseMatrix> = (0..classes).map(|_| sample::spd(&mut rng, n_dim)).collect();
    let draw = |rng: &mut ChaCha8Rng| -> Result<Vec<Sample>> {
        let mut out = Vec::with_capacity(classes * per_class);
        for _ in 0..per_class {
            for (label, center) in centers.iter().enumerate() {
                let (half, _) = matcore::spd_sqrt_invsqrt(center)?;
                let w = sample::symmetric(rng, n_dim) * sigma_w;
                let c = matcore::sym_part(&(&half * matcore::spd_exp(&w)? * &half));
                out.push(make_sample(c, label)?);
            }
        }
        Ok(out)
    };
    let train = draw(&mut rng)?;
    let test = draw(&mut rng)?;
    let mut anchors = Vec::with_capacity(classes);
    let mut anchor_invhalf = Vec::with_capacity(classes);
    for c in 0..classes {
        let members: Vec<&DenseMatrix> = train.iter().filter(|s| s.label == c).map(|s| &s.c).collect();
        let mean = log_euclidean_mean(&members)?;
        anchor_invhalf.push(matcore::spd_sqrt_invsqrt(&mean)?.1);
        anchors.push(mean);
    }
    Ok(SpdProtoInstance {
        meta: SpdProtoMeta {
            n_dim,
            classes,
            per_class,
            seed,
            beta,
            lambda_reg,
            sigma_w,
        },
        train,
        test,
        anchors,
        anchor_invhalf,
    })
}

impl SpdProtoInstance {
    /// Single-sample instance for hand-checkable cases.
    pub fn from_samples(samples: Vec<(DenseMatrix, usize)>, classes: usize, beta: f64, lambda_reg: f64) -> Result<Self> {
        let n_dim = samples.first().map(|s| s.0.nrows()).unwrap_or(0);
        let train: Vec<Sample> = samples.into_iter().map(|(c, l)| make_sample(c, l)).collect::<Result<_>>()?;
        let mut anchors = Vec::new();
        let mut anchor_invhalf = Vec::new();
        for c in 0..classes {
            let members: Vec<&DenseMatrix> = train.iter().filter(|s| s.label == c).map(|s| &s.c).collect();
            let mean = if members.is_empty() {
                DenseMatrix::identity(n_dim, n_dim)
            } else {
                log_euclidean_mean(&members)?
            };
            anchor_invhalf.push(matcore::spd_sqrt_invsqrt(&mean)?.1);
            anchors.push(mean);
        }
        Ok(SpdProtoInstance {
            meta: SpdProtoMeta {
                n_dim,
                classes,
                per_class: 0,
                seed: 0,
                beta,
                lambda_reg,
                sigma_w: 0.0,
            },
            test: train.clone(),
            train,
            anchors,
            anchor_invhalf,
        })
    }

    /// Prototypes initialized at the anchors.
    pub fn init(&self) -> Vec<ManifoldPoint> {
        self.anchors.iter().map(|a| ManifoldPoint::Spd(a.clone())).collect()
    }

    fn protos<'a>(&self, x: &'a [ManifoldPoint]) -> Result<Vec<&'a DenseMatrix>> {
        if x.len() != self.meta.classes {
            return invalid(format!("expected {} prototypes, got {}", self.meta.classes, x.len()));
        }
        x.iter()
            .map(|p| match p {
                ManifoldPoint::Spd(m) if m.nrows() == self.meta.n_dim => Ok(m),
                _ => invalid("prototype must be an SPD point of matching size"),
            })
            .collect()
    }

    fn eval(&self, x: &[ManifoldPoint], idx: &[usize]) -> Result<(f64, Vec<DenseMatrix>)> {
        let protos = self.protos(x)?;
        let k = self.meta.classes;
        let beta = self.meta.beta;
        let n = self.meta.n_dim;
        let mut grads = vec![DenseMatrix::zeros(n, n); k];
        let mut loss = 0.0;
        let count = idx.len().max(1) as f64;
        for &i in idx {
            let s = &self.train[i];
            let mut d2 = Vec::with_capacity(k);
            let mut dg = Vec::with_capacity(k);
            for p in &protos {
                let (v, g) = ai_dist_sq_grad(&s.c_invhalf, p)?;
                d2.push(v);
                dg.push(g);
            }
            let logits: Vec<f64> = d2.iter().map(|v| -beta * v).collect();
            let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l - top).exp()).sum();
            loss += top + z.ln() - logits[s.label];
            for c in 0..k {
                let p = (logits[c] - top).exp() / z;
                let coef = (p - if c == s.label { 1.0 } else { 0.0 }) * (-beta) / count;
                grads[c] += &dg[c] * coef;
            }
        }
        loss /= count;
        for c in 0..k {
            let (v, g) = ai_dist_sq_grad(&self.anchor_invhalf[c], protos[c])?;
            loss += self.meta.lambda_reg * v;
            grads[c] += g * self.meta.lambda_reg;
        }
        for g in &mut grads {
            *g = matcore::sym_part(g);
        }
        Ok((loss, grads))
    }

    fn accuracy_on(&self, x: &[ManifoldPoint], set: &[Sample]) -> Result<f64> {
        let protos = self.protos(x)?;
        let mut hits = 0usize;
        for s in set {
            let mut best = (f64::INFINITY, 0);
            for (c, p) in protos.iter().enumerate() {
                let d = ai_dist_sq_grad(&s.c_invhalf, p)?.0;
                if d < best.0 {
                    best = (d, c);
                }
            }
            hits += (best.1 == s.label) as usize;
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

impl Objective for SpdProtoInstance {
    fn value_grad(&self, x: &[ManifoldPoint]) -> Result<(f64, Vec<DenseMatrix>)> {
        let all: Vec<usize> = (0..self.train.len()).collect();
        self.eval(x, &all)
    }
}

impl FiniteSum for SpdProtoInstance {
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
