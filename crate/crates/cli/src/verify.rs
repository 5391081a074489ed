//! `imuon verify`: invariance suites and oracle comparisons.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use imuon_core::manifolds::ManifoldKind;
use imuon_core::oracle::{self, CheckReport, VerifyConfig};
use imuon_core::NormSpec;
use serde::Serialize;

use crate::config::VerifyParams;

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub build: &'static str,
    pub pass: bool,
    pub n_checks: usize,
    pub failed: Vec<String>,
    pub config: VerifyParams,
    pub checks: Vec<CheckReport>,
}

pub fn to_core(p: &VerifyParams) -> Result<VerifyConfig> {
    let manifolds = p
        .manifolds
        .iter()
        .map(|s| s.parse::<ManifoldKind>().with_context(|| format!("manifold '{s}'")))
        .collect::<Result<Vec<_>>>()?;
    let norms = p
        .norms
        .iter()
        .map(|s| s.parse::<NormSpec>().with_context(|| format!("norm '{s}'")))
        .collect::<Result<Vec<_>>>()?;
    if manifolds.is_empty() || norms.is_empty() {
        anyhow::bail!("verify needs at least one manifold and one norm");
    }
    if !(p.tau > 0.0 && p.tau.is_finite()) || p.points == 0 || p.instances == 0 {
        anyhow::bail!("tau, points and instances must be positive");
    }
    if let Some(t) = p.tol {
        if !(t >= 0.0) {
            anyhow::bail!("tol must be non-negative");
        }
    }
    Ok(VerifyConfig {
        manifolds,
        norms,
        tau: p.tau,
        points: p.points,
        instances: p.instances,
        seed: p.seed,
        tol: p.tol,
        c_phi_samples: p.c_phi_samples,
    })
}

/// Runs the suite and writes `verify_report.json` under `out`.
pub fn run_verify(params: &VerifyParams, out: &Path) -> Result<VerifyReport> {
    let cfg = to_core(params)?;
    let checks = oracle::verify_all(&cfg)?;
    let failed: Vec<String> = checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
    let report = VerifyReport {
        build: crate::experiment::BUILD_ID,
        pass: failed.is_empty(),
        n_checks: checks.len(),
        failed,
        config: params.clone(),
        checks,
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("verify_report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(report)
}
