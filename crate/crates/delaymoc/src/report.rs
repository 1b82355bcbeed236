//! Artifact writers: plot-ready CSV datasets with JSON sidecars, and the
//! per-run report.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::attractor::BranchData;
use crate::continuation::HopfCurve;
use crate::integrator::Trajectory;
use crate::model::Equilibrium;
use crate::params::{ModelParams, SV_TO_M3_PER_YR};
use crate::stability::RootSet;

pub fn trajectory_csv(traj: &Trajectory, p: &ModelParams) -> String {
    let mut out = String::with_capacity(traj.len() * 64);
    out.push_str("t_yr,s1_psu,s2_psu,s3_psu,m_sv\n");
    for i in 0..traj.len() {
        let s3 = 3.0 * p.s0 - traj.s1[i] - traj.s2[i];
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            traj.time(i),
            traj.s1[i],
            traj.s2[i],
            s3,
            traj.m[i] / SV_TO_M3_PER_YR
        );
    }
    out
}

pub fn trajectory_sidecar(traj: &Trajectory, p: &ModelParams) -> serde_json::Value {
    json!({
        "params": p.to_config(),
        "h_used": traj.h,
        "h_requested": traj.h_requested,
        "events": traj.events,
    })
}

pub fn equilibria_csv(eqs: &[Equilibrium]) -> String {
    let mut out = String::from("s1_psu,s2_psu,s3_psu,m_sv,branch\n");
    for e in eqs {
        let _ = writeln!(
            out,
            "{},{},{},{},{:?}",
            e.state.s1,
            e.state.s2,
            e.s3,
            e.m / SV_TO_M3_PER_YR,
            e.branch
        );
    }
    out
}

pub fn branch_csv(branch: &BranchData) -> String {
    let mut out = String::from("param,kind,amplitude_psu,s1_max_psu,period_yr\n");
    for pt in &branch.points {
        match &pt.summary {
            Some(s) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    pt.value,
                    s.kind,
                    s.amplitude,
                    s.s1_max,
                    s.period.map(|p| p.to_string()).unwrap_or_default()
                );
            }
            None => {
                let _ = writeln!(out, "{},error,,,", pt.value);
            }
        }
    }
    out
}

pub fn branch_sidecar(branch: &BranchData, extra: serde_json::Value) -> serde_json::Value {
    json!({
        "axis": branch.axis.name(),
        "direction": branch.direction,
        "n_points": branch.points.len(),
        "errors": branch.points.iter()
            .filter_map(|p| p.error.as_ref().map(|e| json!({"param": p.value, "error": e})))
            .collect::<Vec<_>>(),
        "options": extra,
    })
}

pub fn hopf_curve_csv(curve: &HopfCurve) -> String {
    let mut out = String::from("param_a,param_b,omega_per_yr,criticality\n");
    for pt in &curve.points {
        let _ = writeln!(
            out,
            "{},{},{},{:?}",
            pt.a, pt.b, pt.omega, pt.criticality
        );
    }
    out
}

pub fn roots_csv(roots: &RootSet) -> String {
    let mut out = String::from("re_per_yr,im_per_yr\n");
    for r in &roots.roots {
        let _ = writeln!(out, "{},{}", r.re, r.im);
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

/// Machine-readable run summary, written even on partial failure.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub config_sha256: String,
    pub wall_time_s: f64,
    pub status_counts: std::collections::BTreeMap<String, usize>,
    pub artifacts: Vec<String>,
    pub failures: Vec<String>,
}

impl RunReport {
    pub fn new(scenario: &str, config_bytes: &[u8]) -> Self {
        RunReport {
            scenario: scenario.to_string(),
            config_sha256: sha256_hex(config_bytes),
            wall_time_s: 0.0,
            status_counts: Default::default(),
            artifacts: Vec::new(),
            failures: Vec::new(),
        }
    }

    pub fn count(&mut self, status: &str, n: usize) {
        *self.status_counts.entry(status.to_string()).or_insert(0) += n;
    }
}

/// Serializes artifact writes so the report's file list is exact.
pub struct ArtifactSink {
    dir: PathBuf,
    written: Vec<String>,
}

impl ArtifactSink {
    pub fn new(dir: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(ArtifactSink {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> std::io::Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, text)?;
        self.written.push(name.to_string());
        Ok(path)
    }

    pub fn write_json(&mut self, name: &str, value: &serde_json::Value) -> std::io::Result<PathBuf> {
        let text = serde_json::to_string_pretty(value).expect("json serialization");
        self.write_text(name, &text)
    }

    pub fn into_artifact_names(self) -> Vec<String> {
        self.written
    }
}
