//! Unitarily invariant norm families, their duals and closed-form linear maximizers.
//!
//! Every family acts on a nonincreasing nonnegative singular-value vector. The
//! matrix oracle lifts the vector maximizer through the SVD of the input.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::manifolds::ManifoldDims;
use crate::matcore::{self, DenseMatrix, SvdFactors};

/// Norm family with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum NormSpec {
    Spectral,
    Frobenius,
    Nuclear,
    /// Ball `{sigma_1 <= tau, sum(sigma) <= k tau}`; its dual is the sum of the `k` largest values.
    KyFan { k: usize },
    Schatten { p: f64 },
    /// Intersection `{sigma_1 <= tau_spec, sum(sigma) <= tau_nuc}`; the call-site radius is ignored.
    SpecNuc { tau_spec: f64, tau_nuc: f64 },
}

pub const SCHATTEN_P_MAX: f64 = 64.0;

impl NormSpec {
    pub fn family(&self) -> &'static str {
        match self {
            NormSpec::Spectral => "spectral",
            NormSpec::Frobenius => "frobenius",
            NormSpec::Nuclear => "nuclear",
            NormSpec::KyFan { .. } => "kyfan",
            NormSpec::Schatten { .. } => "schatten",
            NormSpec::SpecNuc { .. } => "specnuc",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NormSpec::KyFan { k } if k == 0 => invalid("kyfan needs k >= 1"),
            NormSpec::Schatten { p } if !(1.0..=SCHATTEN_P_MAX).contains(&p) => invalid(format!(
                "schatten p must lie in [1, {SCHATTEN_P_MAX}], got {p}; use spectral for p = inf"
            )),
            NormSpec::SpecNuc { tau_spec, tau_nuc }
                if !(tau_spec > 0.0 && tau_nuc > 0.0 && tau_spec.is_finite() && tau_nuc.is_finite()) =>
            {
                invalid("specnuc needs positive finite ts and tn")
            }
            _ => Ok(()),
        }
    }

    /// The family this spec evaluates as for a vector of length `n`.
    pub fn resolve(&self, n: usize) -> NormSpec {
        match *self {
            NormSpec::KyFan { k } if k >= n => NormSpec::Spectral,
            NormSpec::KyFan { k: 1 } => NormSpec::Nuclear,
            NormSpec::Schatten { p } if p == 1.0 => NormSpec::Nuclear,
            NormSpec::Schatten { p } if p == 2.0 => NormSpec::Frobenius,
            other => other,
        }
    }
}

impl fmt::Display for NormSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormSpec::KyFan { k } => write!(f, "kyfan:k={k}"),
            NormSpec::Schatten { p } => write!(f, "schatten:p={p}"),
            NormSpec::SpecNuc { tau_spec, tau_nuc } => write!(f, "specnuc:ts={tau_spec},tn={tau_nuc}"),
            other => f.write_str(other.family()),
        }
    }
}

fn parse_params(body: &str) -> Result<Vec<(String, f64)>> {
    body.split(',')
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::InvalidInput(format!("expected key=value, got '{kv}'")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad number '{v}'")))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

impl FromStr for NormSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, body) = match s.split_once(':') {
            Some((h, b)) => (h, Some(b)),
            None => (s, None),
        };
        let params = body.map(parse_params).transpose()?.unwrap_or_default();
        let get = |key: &str| -> Result<f64> {
            params
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| *v)
                .ok_or_else(|| Error::InvalidInput(format!("norm '{s}' is missing parameter '{key}'")))
        };
        let expect = |n: usize| -> Result<()> {
            if params.len() == n {
                Ok(())
            } else {
                invalid(format!("norm '{s}' takes {n} parameter(s)"))
            }
        };
        let spec = match head {
            "spectral" => expect(0).map(|_| NormSpec::Spectral)?,
            "frobenius" => expect(0).map(|_| NormSpec::Frobenius)?,
            "nuclear" => expect(0).map(|_| NormSpec::Nuclear)?,
            "kyfan" => {
                expect(1)?;
                let k = get("k")?;
                if k.fract() != 0.0 || k < 1.0 {
                    return invalid(format!("kyfan k must be a positive integer, got {k}"));
                }
                NormSpec::KyFan { k: k as usize }
            }
            "schatten" => {
                expect(1)?;
                NormSpec::Schatten { p: get("p")? }
            }
            "specnuc" => {
                expect(2)?;
                NormSpec::SpecNuc {
                    tau_spec: get("ts")?,
                    tau_nuc: get("tn")?,
                }
            }
            other => return invalid(format!("unknown norm family '{other}'")),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl TryFrom<String> for NormSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<NormSpec> for String {
    fn from(n: NormSpec) -> String {
        n.to_string()
    }
}

/// Optimal point and value of `max <z, sigma>` over the norm ball.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorLmoResult {
    pub z_star: Vec<f64>,
    pub value: f64,
}

fn check_sigma(sigma: &[f64]) -> Result<()> {
    if sigma.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return invalid("singular values must be finite and nonnegative");
    }
    if sigma.windows(2).any(|w| w[0] < w[1]) {
        return invalid("singular values must be sorted nonincreasing");
    }
    Ok(())
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        invalid(format!("radius must be positive and finite, got {tau}"))
    }
}

fn l2(v: &[f64]) -> f64 {
    let top = v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if top == 0.0 {
        return 0.0;
    }
    top * v.iter().map(|x| (x / top).powi(2)).sum::<f64>().sqrt()
}

/// `||v||_p` for nonnegative `v`, computed on `v / max(v)`.
fn lp(v: &[f64], p: f64) -> f64 {
    let top = v.iter().fold(0.0f64, |a, b| a.max(*b));
    if top == 0.0 {
        return 0.0;
    }
    top * v.iter().map(|x| (x / top).powf(p)).sum::<f64>().powf(1.0 / p)
}

fn conjugate(p: f64) -> f64 {
    p / (p - 1.0)
}

/// Closed-form maximizer of `<z, sigma>` subject to `phi(z) <= tau`.
pub fn vector_lmo(sigma: &[f64], norm: NormSpec, tau: f64) -> Result<VectorLmoResult> {
    check_sigma(sigma)?;
    norm.validate()?;
    let n = sigma.len();
    if !matches!(norm, NormSpec::SpecNuc { .. }) {
        check_tau(tau)?;
    }
    if n == 0 || sigma[0] == 0.0 {
        return Ok(VectorLmoResult {
            z_star: vec![0.0; n],
            value: 0.0,
        });
    }
    let z: Vec<f64> = match norm.resolve(n) {
        NormSpec::Spectral => vec![tau; n],
        NormSpec::Frobenius => {
            let nrm = l2(sigma);
            sigma.iter().map(|s| tau * s / nrm).collect()
        }
        NormSpec::Nuclear => {
            let mut z = vec![0.0; n];
            z[0] = tau;
            z
        }
        NormSpec::KyFan { k } => (0..n).map(|i| if i < k { tau } else { 0.0 }).collect(),
        NormSpec::Schatten { p } => {
            let q = conjugate(p);
            let w: Vec<f64> = sigma.iter().map(|s| (s / sigma[0]).powf(q - 1.0)).collect();
            let wn = lp(&w, p);
            w.iter().map(|x| tau * x / wn).collect()
        }
        NormSpec::SpecNuc { tau_spec, tau_nuc } => {
            let full = (tau_nuc / tau_spec).floor() as usize;
            (0..n)
                .map(|i| {
                    if i < full {
                        tau_spec
                    } else if i == full {
                        tau_nuc - full as f64 * tau_spec
                    } else {
                        0.0
                    }
                })
                .collect()
        }
    };
    let value = z.iter().zip(sigma).map(|(a, b)| a * b).sum();
    Ok(VectorLmoResult { z_star: z, value })
}

/// Dual norm of `sigma`; unavailable for the spectral-nuclear intersection.
pub fn dual_norm(sigma: &[f64], norm: NormSpec) -> Result<f64> {
    check_sigma(sigma)?;
    norm.validate()?;
    let n = sigma.len();
    if n == 0 {
        return Ok(0.0);
    }
    Ok(match norm.resolve(n) {
        NormSpec::Spectral => sigma.iter().sum(),
        NormSpec::Frobenius => l2(sigma),
        NormSpec::Nuclear => sigma[0],
        NormSpec::KyFan { k } => sigma[..k].iter().sum(),
        NormSpec::Schatten { p } => lp(sigma, conjugate(p)),
        NormSpec::SpecNuc { .. } => {
            return Err(Error::Unavailable("specnuc has no standalone dual norm".into()))
        }
    })
}

/// Norm of `sigma`. For specnuc this is the gauge of the intersection set, so the ball has radius 1.
pub fn norm_value(sigma: &[f64], norm: NormSpec) -> Result<f64> {
    check_sigma(sigma)?;
    norm.validate()?;
    let n = sigma.len();
    if n == 0 {
        return Ok(0.0);
    }
    let total: f64 = sigma.iter().sum();
    Ok(match norm.resolve(n) {
        NormSpec::Spectral => sigma[0],
        NormSpec::Frobenius => l2(sigma),
        NormSpec::Nuclear => total,
        NormSpec::KyFan { k } => sigma[0].max(total / k as f64),
        NormSpec::Schatten { p } => lp(sigma, p),
        NormSpec::SpecNuc { tau_spec, tau_nuc } => (sigma[0] / tau_spec).max(total / tau_nuc),
    })
}

/// Ball radius to compare `norm_value` against.
pub fn ball_radius(norm: NormSpec, tau: f64) -> f64 {
    match norm {
        NormSpec::SpecNuc { .. } => 1.0,
        _ => tau,
    }
}

pub fn matrix_norm(m: &DenseMatrix, norm: NormSpec) -> Result<f64> {
    norm_value(&matcore::svd(m)?.sigma, norm)
}

pub fn matrix_dual_norm(m: &DenseMatrix, norm: NormSpec) -> Result<f64> {
    dual_norm(&matcore::svd(m)?.sigma, norm)
}

/// Matrix maximizer `Z* = U diag(z*) V^T` and its value `<Z*, H>`.
#[derive(Debug, Clone)]
pub struct MatrixLmo {
    pub z: DenseMatrix,
    pub value: f64,
    pub sigma: Vec<f64>,
}

/// Matrix oracle from precomputed SVD factors. Numerically null directions receive zero weight.
pub fn matrix_lmo_from_svd(f: &SvdFactors, norm: NormSpec, tau: f64) -> Result<MatrixLmo> {
    let rank = f.numerical_rank();
    let mut sigma = f.sigma.clone();
    for s in sigma.iter_mut().skip(rank) {
        *s = 0.0;
    }
    let v = vector_lmo(&sigma[..rank], norm, tau)?;
    let mut z_full = v.z_star.clone();
    z_full.resize(sigma.len(), 0.0);
    Ok(MatrixLmo {
        z: f.compose(&z_full),
        value: v.value,
        sigma: f.sigma.clone(),
    })
}

pub fn matrix_lmo(h: &DenseMatrix, norm: NormSpec, tau: f64) -> Result<MatrixLmo> {
    let f = matcore::svd(h)?;
    matrix_lmo_from_svd(&f, norm, tau)
}

/// Analytic squared radius of the intrinsic unit ball, summed over product blocks.
pub fn c_phi_analytic(norm: NormSpec, dims: &ManifoldDims) -> Result<f64> {
    norm.validate()?;
    if let NormSpec::SpecNuc { .. } = norm {
        return Err(Error::Unavailable("no analytic C_phi for specnuc".into()));
    }
    Ok(dims
        .block_capacities()
        .into_iter()
        .filter(|&d| d > 0)
        .map(|d| block_c_phi(norm, d))
        .sum())
}

fn block_c_phi(norm: NormSpec, d: usize) -> f64 {
    match norm.resolve(d) {
        NormSpec::Spectral => d as f64,
        NormSpec::Frobenius | NormSpec::Nuclear => 1.0,
        NormSpec::KyFan { k } => k.min(d) as f64,
        NormSpec::Schatten { p } => (d as f64).powf(1.0 - 2.0 / p).max(1.0),
        NormSpec::SpecNuc { .. } => f64::NAN,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifolds::ManifoldKind;

    fn approx(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn parse_and_display_roundtrip() {
        for s in ["spectral", "frobenius", "nuclear", "kyfan:k=3", "schatten:p=4", "specnuc:ts=1,tn=2.5"] {
            let n: NormSpec = s.parse().unwrap();
            assert_eq!(n.to_string(), s);
        }
        assert!("schatten:p=inf".parse::<NormSpec>().is_err());
        assert!("schatten:p=0.5".parse::<NormSpec>().is_err());
        assert!("kyfan:k=0".parse::<NormSpec>().is_err());
        assert!("kyfan".parse::<NormSpec>().is_err());
        assert!("operator".parse::<NormSpec>().is_err());
        let json = serde_json::to_string(&NormSpec::KyFan { k: 2 }).unwrap();
        assert_eq!(json, "\"kyfan:k=2\"");
        assert_eq!(serde_json::from_str::<NormSpec>(&json).unwrap(), NormSpec::KyFan { k: 2 });
    }

    #[test]
    fn vector_lmo_examples() {
        let r = vector_lmo(&[3.0, 1.0], NormSpec::Spectral, 2.0).unwrap();
        assert!(approx(&r.z_star, &[2.0, 2.0]) && (r.value - 8.0).abs() < 1e-12);
        let r = vector_lmo(&[3.0, 1.0], NormSpec::Nuclear, 1.0).unwrap();
        assert!(approx(&r.z_star, &[1.0, 0.0]) && (r.value - 3.0).abs() < 1e-12);
        let r = vector_lmo(&[4.0, 3.0], NormSpec::Frobenius, 1.0).unwrap();
        assert!(approx(&r.z_star, &[0.8, 0.6]) && (r.value - 5.0).abs() < 1e-12);
        let r = vector_lmo(&[3.0, 2.0, 1.0], NormSpec::KyFan { k: 2 }, 1.0).unwrap();
        assert!(approx(&r.z_star, &[1.0, 1.0, 0.0]) && (r.value - 5.0).abs() < 1e-12);
        let sn = NormSpec::SpecNuc {
            tau_spec: 1.0,
            tau_nuc: 2.5,
        };
        let r = vector_lmo(&[5.0, 4.0, 3.0, 2.0], sn, 7.0).unwrap();
        assert!(approx(&r.z_star, &[1.0, 1.0, 0.5, 0.0]) && (r.value - 10.5).abs() < 1e-12);
        let a = vector_lmo(&[4.0, 3.0], NormSpec::Schatten { p: 2.0 }, 1.0).unwrap();
        let b = vector_lmo(&[4.0, 3.0], NormSpec::Frobenius, 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn vector_lmo_rejects_bad_sigma() {
        assert!(vector_lmo(&[1.0, 3.0], NormSpec::Spectral, 1.0).is_err());
        assert!(vector_lmo(&[1.0, -1.0], NormSpec::Spectral, 1.0).is_err());
        assert!(vector_lmo(&[1.0], NormSpec::Spectral, 0.0).is_err());
    }

    #[test]
    fn zero_sigma_gives_zero() {
        for n in [
            NormSpec::Spectral,
            NormSpec::Frobenius,
            NormSpec::Nuclear,
            NormSpec::KyFan { k: 2 },
            NormSpec::Schatten { p: 3.0 },
        ] {
            let r = vector_lmo(&[0.0, 0.0, 0.0], n, 1.0).unwrap();
            assert_eq!(r.z_star, vec![0.0; 3]);
            assert_eq!(r.value, 0.0);
        }
    }

    #[test]
    fn dual_norm_examples() {
        assert_eq!(dual_norm(&[3.0, 1.0], NormSpec::Spectral).unwrap(), 4.0);
        assert_eq!(dual_norm(&[3.0, 1.0], NormSpec::Nuclear).unwrap(), 3.0);
        // top-k sum: the dual of the ball the closed-form maximizer optimizes over
        assert_eq!(dual_norm(&[5.0, 1.0, 1.0], NormSpec::KyFan { k: 2 }).unwrap(), 6.0);
        assert_eq!(norm_value(&[5.0, 1.0, 1.0], NormSpec::KyFan { k: 2 }).unwrap(), 5.0);
        assert!(matches!(
            dual_norm(&[1.0], NormSpec::SpecNuc { tau_spec: 1.0, tau_nuc: 2.0 }),
            Err(Error::Unavailable(_))
        ));
    }

    #[test]
    fn schatten_is_holder_conjugate() {
        let s = [4.0, 2.0, 1.0, 0.5];
        for p in [1.5, 3.0, 7.0, 64.0] {
            let r = vector_lmo(&s, NormSpec::Schatten { p }, 2.0).unwrap();
            let nz = norm_value(&r.z_star, NormSpec::Schatten { p }).unwrap();
            assert!((nz - 2.0).abs() < 1e-12);
            let d = dual_norm(&s, NormSpec::Schatten { p }).unwrap();
            assert!((r.value - 2.0 * d).abs() < 1e-10 * r.value);
        }
    }

    #[test]
    fn matrix_lmo_examples() {
        let h = matcore::diag(&[2.0, -3.0]);
        let m = matrix_lmo(&h, NormSpec::Spectral, 1.0).unwrap();
        assert!((m.z - matcore::diag(&[1.0, -1.0])).norm() < 1e-12);
        assert!((m.value - 5.0).abs() < 1e-12);

        let h = matcore::from_rows(2, 3, &[1.0, 2.0, 0.0, -1.0, 0.5, 3.0]).unwrap();
        let m = matrix_lmo(&h, NormSpec::Frobenius, 1.0).unwrap();
        assert!((m.z - &h / h.norm()).norm() < 1e-12);

        let m = matrix_lmo(&h, NormSpec::Nuclear, 1.0).unwrap();
        let top = matcore::svd(&h).unwrap().sigma[0];
        assert!((matcore::frob_inner(&m.z, &h) - top).abs() < 1e-12);
        assert!((matcore::spectral_norm(&m.z).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn c_phi_examples() {
        let fr = ManifoldDims::new(ManifoldKind::FixedRank, 12, 10, 4);
        assert_eq!(c_phi_analytic(NormSpec::Spectral, &fr).unwrap(), 8.0);
        let st = ManifoldDims::new(ManifoldKind::Stiefel, 10, 3, 3);
        assert_eq!(c_phi_analytic(NormSpec::Spectral, &st).unwrap(), 5.0);
        let gr = ManifoldDims::new(ManifoldKind::Grassmann, 10, 3, 3);
        assert_eq!(c_phi_analytic(NormSpec::Spectral, &gr).unwrap(), 3.0);
        let gr_big = ManifoldDims::new(ManifoldKind::Grassmann, 40, 10, 10);
        assert_eq!(c_phi_analytic(NormSpec::KyFan { k: 3 }, &gr_big).unwrap(), 3.0);
        let spd = ManifoldDims::new(ManifoldKind::Spd, 8, 8, 8);
        assert_eq!(c_phi_analytic(NormSpec::Spectral, &spd).unwrap(), 8.0);
        assert_eq!(c_phi_analytic(NormSpec::Nuclear, &st).unwrap(), 2.0);
        assert_eq!(c_phi_analytic(NormSpec::Nuclear, &spd).unwrap(), 1.0);
        assert!(c_phi_analytic(NormSpec::SpecNuc { tau_spec: 1.0, tau_nuc: 1.0 }, &spd).is_err());
    }
}
