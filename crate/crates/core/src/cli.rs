//! Command-line entry point: model ingestion, the three phases, and
//! diagnostics emission. Exit codes: 0 ok, 2 usage, 3 model error,
//! 4 calibration failure, 5 tolerance infeasible.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::mlmc::{self, MlmcConfig, MlmcError};
use crate::model_file::{self, ModelFile};
use crate::report;
use crate::rng::{SeedSequence, StreamDomain};
use crate::workmodel::{self, CalibrationError, MachineConstants};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_MODEL: i32 = 3;
pub const EXIT_CALIBRATION: i32 = 4;
pub const EXIT_TOLERANCE: i32 = 5;

#[derive(Parser)]
#[command(
    name = "tauhybrid",
    about = "Multilevel hybrid tau-leap estimation of E[g(X(T))] for stochastic reaction networks",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for path generation (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Args, Clone)]
struct TuningArgs {
    /// Prescribed relative tolerance.
    #[arg(long)]
    tol: f64,
    /// Master seed; all path streams derive from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Confidence coefficient C_A.
    #[arg(long, default_value_t = 1.96)]
    confidence: f64,
    /// Mesh refinement factor between levels.
    #[arg(long, default_value_t = 2)]
    refine_factor: u32,
    /// Initial one-step exit probability bound.
    #[arg(long, default_value_t = 0.01)]
    delta0: f64,
    /// Calibration coefficient-of-variation target.
    #[arg(long, default_value_t = 0.05)]
    cv_target: f64,
    /// Gaussian-regime threshold in the variance bound.
    #[arg(long = "threshold-c", default_value_t = 10.0)]
    threshold_c: f64,
    /// Hierarchy depth cap.
    #[arg(long, default_value_t = 25)]
    max_levels: u32,
}

impl TuningArgs {
    fn config(&self) -> MlmcConfig {
        let mut cfg = MlmcConfig::new(self.tol);
        cfg.confidence = self.confidence;
        cfg.refine_factor = self.refine_factor;
        cfg.delta0 = self.delta0;
        cfg.cv_target = self.cv_target;
        cfg.gaussian_threshold = self.threshold_c;
        cfg.max_levels = self.max_levels;
        cfg
    }
}

#[derive(Subcommand)]
enum Command {
    /// Phase I: measure machine cost constants for a model.
    CalibrateMachine {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Repetition floor per timed kernel.
        #[arg(long, default_value_t = 10_000)]
        reps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Phase II: calibrate the level hierarchy for a tolerance.
    Calibrate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Optional per-level diagnostics CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        tuning: TuningArgs,
    },
    /// Phase III: run a calibrated plan and report the estimate.
    Estimate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Master seed for the estimation streams.
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Re-run a plan emitting step-mix, QQ and work-sweep diagnostics.
    Diagnose {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        profile: PathBuf,
        /// Plan to re-run for step-mix data (optional).
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Paths per level for the step-mix table.
        #[arg(long, default_value_t = 200)]
        steps_per_level: u64,
        /// Number of repeated estimates for QQ data (0 = skip).
        #[arg(long, default_value_t = 0)]
        qq: u64,
        /// Comma-separated tolerances for a work sweep (empty = skip).
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        sweep: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.96)]
        confidence: f64,
    },
    /// Model lints: propensity checks plus the optional simplex test.
    Validate {
        #[arg(long)]
        model: PathBuf,
        /// Also check for a positive w with (w, nu_j) <= 0 for all j.
        #[arg(long, default_value_t = false)]
        check_simplex: bool,
    },
}

fn load_model(path: &Path) -> Result<(ModelFile, String), i32> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read model file {}: {e}", path.display());
        EXIT_MODEL
    })?;
    let parsed = model_file::parse(&text).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        EXIT_MODEL
    })?;
    let hash = model_file::model_hash(&text);
    Ok((parsed, hash))
}

fn load_profile(path: &Path, model_hash: &str) -> Result<MachineConstants, i32> {
    let machine = MachineConstants::read_file_checked(path).map_err(|e| {
        eprintln!("error: machine profile: {e}");
        match e {
            CalibrationError::Io(_) | CalibrationError::Json(_) => EXIT_MODEL,
            _ => EXIT_CALIBRATION,
        }
    })?;
    if machine.model_hash != model_hash {
        eprintln!(
            "warning: machine profile was calibrated on a different model; \
             cost constants may be off (recalibrate for best allocation)"
        );
    }
    Ok(machine)
}

fn mlmc_exit_code(e: &MlmcError) -> i32 {
    match e {
        MlmcError::BadTolerance(_)
        | MlmcError::ToleranceInfeasible { .. }
        | MlmcError::AllocationInfeasible(_)
        | MlmcError::BiasBudgetExceeded { .. } => EXIT_TOLERANCE,
        MlmcError::Model(_) => EXIT_MODEL,
        _ => EXIT_CALIBRATION,
    }
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
    match cli.command {
        Command::CalibrateMachine {
            model,
            out,
            reps,
            seed,
        } => {
            let (mf, hash) = match load_model(&model) {
                Ok(v) => v,
                Err(code) => return code,
            };
            match workmodel::calibrate_machine(
                &mf.model.network,
                &mf.model.x0,
                mf.model.t_final,
                reps,
                &hash,
                seed,
            ) {
                Ok(constants) => {
                    if let Err(e) = constants.write_file(&out) {
                        eprintln!("error: writing profile: {e}");
                        return 1;
                    }
                    println!(
                        "calibrated: C1 = {:.3e}s, C2 = {:.3e}s, C3 = {:.3e}s, C* = {:.3e}s, K1 = {:.3}, C_P R^2 = {:.4}",
                        constants.c1_seconds,
                        constants.c2_seconds,
                        constants.c3_seconds,
                        constants.c_star_seconds,
                        constants.k1,
                        constants.poisson_cost.r_squared
                    );
                    EXIT_OK
                }
                Err(e) => {
                    eprintln!("error: machine calibration: {e}");
                    EXIT_CALIBRATION
                }
            }
        }
        Command::Calibrate {
            model,
            profile,
            out,
            csv,
            tuning,
        } => {
            let (mf, hash) = match load_model(&model) {
                Ok(v) => v,
                Err(code) => return code,
            };
            if !(tuning.tol > 0.0 && tuning.tol < 1.0) {
                eprintln!("error: --tol must lie in (0, 1)");
                return EXIT_USAGE;
            }
            let machine = match load_profile(&profile, &hash) {
                Ok(m) => m,
                Err(code) => return code,
            };
            let cfg = tuning.config();
            let seq = SeedSequence::new(tuning.seed);
            match mlmc::calibrate(&mf.model, &machine, &cfg, seq, &hash) {
                Ok(plan) => {
                    if let Err(e) = report::write_plan(&plan, &out) {
                        eprintln!("error: writing plan: {e}");
                        return 1;
                    }
                    if let Some(csv_path) = csv {
                        if let Err(e) =
                            report::write_text(&csv_path, &report::plan_levels_csv(&plan))
                        {
                            eprintln!("error: writing csv: {e}");
                            return 1;
                        }
                    }
                    println!(
                        "calibrated {} levels; predicted work {:.3e}s (SSA {:.3e}s); E_I = {:.3e}, theta = {:.2}",
                        plan.levels.len(),
                        plan.w_ml_seconds,
                        plan.w_ssa_seconds,
                        plan.e_i_rel,
                        plan.theta
                    );
                    EXIT_OK
                }
                Err(e) => {
                    eprintln!("error: calibration: {e}");
                    mlmc_exit_code(&e)
                }
            }
        }
        Command::Estimate {
            model,
            profile,
            plan,
            out,
            seed,
        } => {
            let (mf, hash) = match load_model(&model) {
                Ok(v) => v,
                Err(code) => return code,
            };
            let machine = match load_profile(&profile, &hash) {
                Ok(m) => m,
                Err(code) => return code,
            };
            let plan = match report::read_plan(&plan) {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("error: reading plan: {e}");
                    return EXIT_MODEL;
                }
            };
            if plan.model_hash != hash {
                eprintln!("error: plan was calibrated for a different model (hash mismatch); refusing to run");
                return EXIT_MODEL;
            }
            let mut cfg = MlmcConfig::new(plan.tol);
            cfg.confidence = plan.confidence;
            cfg.refine_factor = plan.refine_factor;
            let seq = SeedSequence::new(seed);
            let mut current_plan = plan;
            for attempt in 0..3 {
                match mlmc::estimate(&mf.model, &current_plan, &machine, &cfg, seq) {
                    Ok(rep) => {
                        if let Err(e) = report::write_report(&rep, &out) {
                            eprintln!("error: writing report: {e}");
                            return 1;
                        }
                        println!(
                            "estimate = {:.6e} (stat half-width {:.2e} rel, E_I {:.2e} rel, {:.3}s)",
                            rep.estimate, rep.stat_half_width_rel, rep.e_i_rel, rep.runtime_seconds
                        );
                        return EXIT_OK;
                    }
                    Err(MlmcError::BiasBudgetExceeded { e_i_rel, budget }) if attempt < 2 => {
                        eprintln!(
                            "note: bias {e_i_rel:.3e} exceeded budget {budget:.3e} mid-run; recalibrating one level deeper"
                        );
                        let mut deeper = tuning_from_plan(&current_plan);
                        deeper.min_levels = current_plan.deepest() + 1;
                        match mlmc::calibrate(&mf.model, &machine, &deeper, seq, &hash) {
                            Ok(p) => current_plan = p,
                            Err(e) => {
                                eprintln!("error: recalibration: {e}");
                                return mlmc_exit_code(&e);
                            }
                        }
                    }
                    Err(e) => {
                        eprintln!("error: estimation: {e}");
                        return mlmc_exit_code(&e);
                    }
                }
            }
            eprintln!("error: estimation kept exceeding the bias budget");
            EXIT_TOLERANCE
        }
        Command::Diagnose {
            model,
            profile,
            plan,
            out_dir,
            steps_per_level,
            qq,
            sweep,
            seed,
            confidence,
        } => {
            let (mf, hash) = match load_model(&model) {
                Ok(v) => v,
                Err(code) => return code,
            };
            let machine = match load_profile(&profile, &hash) {
                Ok(m) => m,
                Err(code) => return code,
            };
            if let Err(e) = std::fs::create_dir_all(&out_dir) {
                eprintln!("error: creating {}: {e}", out_dir.display());
                return 1;
            }
            let seq = SeedSequence::new(seed);
            if let Some(plan_path) = &plan {
                let plan = match report::read_plan(plan_path) {
                    Ok(p) => p,
                    Err(e) => {
                        eprintln!("error: reading plan: {e}");
                        return EXIT_MODEL;
                    }
                };
                if plan.model_hash != hash {
                    eprintln!("error: plan/model hash mismatch; refusing to run");
                    return EXIT_MODEL;
                }
                let rows = step_mix_rows(&mf.model, &plan, &machine, steps_per_level, seq);
                let path = out_dir.join("step_mix.csv");
                if let Err(e) = report::write_text(&path, &report::step_mix_csv(seed, &hash, &rows)) {
                    eprintln!("error: writing {}: {e}", path.display());
                    return 1;
                }
                if qq > 0 {
                    let mut cfg = MlmcConfig::new(plan.tol);
                    cfg.confidence = plan.confidence;
                    cfg.refine_factor = plan.refine_factor;
                    let mut estimates = Vec::new();
                    for k in 0..qq {
                        let run_seed = seed.wrapping_add(1000 + k);
                        match mlmc::estimate(
                            &mf.model,
                            &plan,
                            &machine,
                            &cfg,
                            SeedSequence::new(run_seed),
                        ) {
                            Ok(rep) => estimates.push((run_seed, rep.estimate)),
                            Err(e) => {
                                eprintln!("error: QQ run {k}: {e}");
                                return mlmc_exit_code(&e);
                            }
                        }
                    }
                    let path = out_dir.join("qq.csv");
                    if let Err(e) = report::write_text(&path, &report::qq_csv(seed, &hash, &estimates)) {
                        eprintln!("error: writing {}: {e}", path.display());
                        return 1;
                    }
                }
            }
            if !sweep.is_empty() {
                let mut rows = Vec::new();
                for (k, &tol) in sweep.iter().enumerate() {
                    let mut cfg = MlmcConfig::new(tol);
                    cfg.confidence = confidence;
                    let run_seq = SeedSequence::new(seed.wrapping_add(50_000 + k as u64));
                    let plan = match mlmc::calibrate(&mf.model, &machine, &cfg, run_seq, &hash) {
                        Ok(p) => p,
                        Err(e) => {
                            eprintln!("error: sweep calibration at tol {tol}: {e}");
                            return mlmc_exit_code(&e);
                        }
                    };
                    match mlmc::estimate(&mf.model, &plan, &machine, &cfg, run_seq) {
                        Ok(rep) => rows.push(report::SweepRow {
                            tol,
                            levels: plan.deepest(),
                            predicted_work_seconds: plan.w_ml_seconds,
                            measured_work_seconds: rep.runtime_seconds,
                            predicted_ssa_seconds: plan.w_ssa_seconds,
                            estimate: rep.estimate,
                        }),
                        Err(e) => {
                            eprintln!("error: sweep estimate at tol {tol}: {e}");
                            return mlmc_exit_code(&e);
                        }
                    }
                }
                let path = out_dir.join("sweep.csv");
                if let Err(e) = report::write_text(&path, &report::sweep_csv(seed, &hash, &rows)) {
                    eprintln!("error: writing {}: {e}", path.display());
                    return 1;
                }
            }
            println!("diagnostics written to {}", out_dir.display());
            EXIT_OK
        }
        Command::Validate {
            model,
            check_simplex,
        } => {
            let (mf, _) = match load_model(&model) {
                Ok(v) => v,
                Err(code) => return code,
            };
            match mf.model.network.validate(&mf.model.x0, check_simplex) {
                Ok(notes) => {
                    println!(
                        "model ok: {} species, {} reactions, T = {}",
                        mf.model.network.num_species(),
                        mf.model.network.num_reactions(),
                        mf.model.t_final
                    );
                    for note in notes {
                        println!("note: {note}");
                    }
                    EXIT_OK
                }
                Err(e) => {
                    eprintln!("error: model validation: {e}");
                    EXIT_MODEL
                }
            }
        }
    }
}

fn tuning_from_plan(plan: &crate::mlmc::LevelPlan) -> MlmcConfig {
    let mut cfg = MlmcConfig::new(plan.tol);
    cfg.confidence = plan.confidence;
    cfg.refine_factor = plan.refine_factor;
    cfg
}

/// Per-path step-mix rows for every level of a plan (single paths at
/// level 0, both legs of the coupled pairs deeper down).
fn step_mix_rows(
    model: &crate::network::Model,
    plan: &crate::mlmc::LevelPlan,
    machine: &MachineConstants,
    paths_per_level: u64,
    seq: SeedSequence,
) -> Vec<report::StepMixRow> {
    let mut rows = Vec::new();
    let meshes: Vec<crate::mesh::Mesh> = (0..plan.levels.len())
        .map(|l| plan.mesh_for_level(l as u32))
        .collect();
    for (l, entry) in plan.levels.iter().enumerate() {
        let domain = StreamDomain::Diagnostics { level: l as u32 };
        for p in 0..paths_per_level {
            let mut rng = seq.path_rng(domain, p);
            if l == 0 {
                let path = crate::hybrid::hybrid_path(
                    &model.network,
                    &model.x0,
                    &meshes[0],
                    entry.delta,
                    machine,
                    &mut rng,
                );
                rows.push(report::StepMixRow {
                    level: 0,
                    role: "single",
                    delta: entry.delta,
                    path: p,
                    n_tl: path.n_tl,
                    n_exact: path.n_k1 + path.n_k2,
                    n_tl_chernoff: path.n_tl_chernoff,
                });
            } else {
                let pair = crate::coupling::coupled_hybrid_path(
                    &model.network,
                    &model.x0,
                    &meshes[l - 1],
                    &meshes[l],
                    plan.levels[l - 1].delta,
                    entry.delta,
                    machine,
                    &mut rng,
                );
                for (role, rec) in [("coarse", &pair.coarse), ("fine", &pair.fine)] {
                    rows.push(report::StepMixRow {
                        level: l as u32,
                        role,
                        delta: if role == "coarse" {
                            plan.levels[l - 1].delta
                        } else {
                            entry.delta
                        },
                        path: p,
                        n_tl: rec.n_tl,
                        n_exact: rec.n_k1 + rec.n_k2,
                        n_tl_chernoff: rec.n_tl_chernoff,
                    });
                }
            }
        }
    }
    rows
}
