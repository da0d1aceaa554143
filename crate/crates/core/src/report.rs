//! Artifact emission: plan/report JSON files and the CSV diagnostics
//! tables consumed by external plotting tools.

use std::io::Write;
use std::path::Path;

use crate::mlmc::{EstimateReport, LevelPlan};

pub fn write_plan(plan: &LevelPlan, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(plan).unwrap())
}

pub fn read_plan(path: &Path) -> std::io::Result<LevelPlan> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

pub fn write_report(report: &EstimateReport, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(report).unwrap())
}

fn meta_line(seed: u64, model_hash: &str) -> String {
    format!("# seed={seed} model_hash={model_hash}\n")
}

/// Per-level plan diagnostics.
pub fn plan_levels_csv(plan: &LevelPlan) -> String {
    let mut out = meta_line(plan.seed, &plan.model_hash);
    out.push_str("level,dt,delta,M,psi,vhat,EI,N_TL,N_K1,N_K2,exit_fraction\n");
    for entry in &plan.levels {
        let s = &entry.stats;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            entry.level,
            entry.dt,
            entry.delta,
            entry.m,
            s.psi_seconds,
            entry.v_alloc,
            s.mean_ei,
            s.mean_ntl,
            s.mean_nk1_combined,
            s.mean_nk2_combined,
            s.exit_fraction,
        ));
    }
    out
}

/// Repeated-estimate table for external QQ plotting.
pub fn qq_csv(seed: u64, model_hash: &str, estimates: &[(u64, f64)]) -> String {
    let mut out = meta_line(seed, model_hash);
    out.push_str("run,seed,estimate\n");
    for (i, (seed, est)) in estimates.iter().enumerate() {
        out.push_str(&format!("{i},{seed},{est}\n"));
    }
    out
}

/// Work-versus-tolerance sweep table.
pub struct SweepRow {
    pub tol: f64,
    pub levels: u32,
    pub predicted_work_seconds: f64,
    pub measured_work_seconds: f64,
    pub predicted_ssa_seconds: f64,
    pub estimate: f64,
}

pub fn sweep_csv(seed: u64, model_hash: &str, rows: &[SweepRow]) -> String {
    let mut out = meta_line(seed, model_hash);
    out.push_str("tol,levels,predicted_work_s,measured_work_s,predicted_ssa_s,estimate\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.tol,
            r.levels,
            r.predicted_work_seconds,
            r.measured_work_seconds,
            r.predicted_ssa_seconds,
            r.estimate
        ));
    }
    out
}

/// Per-path step-mix rows (tau-leap/exact counts and the share of
/// Chernoff-constrained leaps) for box-plot style diagnostics.
pub struct StepMixRow {
    pub level: u32,
    pub role: &'static str,
    pub delta: f64,
    pub path: u64,
    pub n_tl: u64,
    pub n_exact: u64,
    pub n_tl_chernoff: u64,
}

pub fn step_mix_csv(seed: u64, model_hash: &str, rows: &[StepMixRow]) -> String {
    let mut out = meta_line(seed, model_hash);
    out.push_str("level,role,delta,path,N_TL,N_exact,N_TL_chernoff\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.level, r.role, r.delta, r.path, r.n_tl, r.n_exact, r.n_tl_chernoff
        ));
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())
}
