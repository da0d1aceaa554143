//! Three-phase multilevel driver: per-level statistics with
//! coefficient-of-variation stopping, one-step exit-bound refinement,
//! greedy sample allocation under the error budget, hierarchy
//! calibration, and the final estimation run.
//!
//! All error components are handled relative to the current estimate of
//! `|E[g(X(T))]|`: the exit part is held below `TOL^2`, and the
//! discretization plus statistical parts below `TOL - TOL^2`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coupling::coupled_hybrid_path;
use crate::duals::path_dual_stats;
use crate::hybrid::hybrid_path;
use crate::mesh::{stable_level0_mesh, Mesh};
use crate::network::Model;
use crate::rng::{SeedSequence, StreamDomain};
use crate::stats;
use crate::workmodel::MachineConstants;

#[derive(Debug, Error)]
pub enum MlmcError {
    #[error("tolerance must lie in (0,1), got {0}")]
    BadTolerance(f64),
    #[error("exit-dominated regime at level {level}: only {fraction:.2} of paths stayed in the lattice; use a smaller delta")]
    ExitDominated { level: u32, fraction: f64 },
    #[error("delta underflow at level {level}: {delta:e} fell below 1e-16 without satisfying the refinement condition")]
    DeltaUnderflow { level: u32, delta: f64 },
    #[error("bias did not fit the budget within {max_levels} levels (E_I = {e_i_rel:e} vs budget {budget:e})")]
    ToleranceInfeasible {
        max_levels: u32,
        e_i_rel: f64,
        budget: f64,
    },
    #[error("sample allocation infeasible: TOL - TOL^2 - E_I = {0:e} is not positive")]
    AllocationInfeasible(f64),
    #[error("bias grew above budget during estimation (E_I = {e_i_rel:e}, budget {budget:e}); recalibrate with a deeper hierarchy")]
    BiasBudgetExceeded { e_i_rel: f64, budget: f64 },
    #[error(transparent)]
    Model(#[from] crate::network::ModelError),
}

/// Tunables with the defaults used throughout the numerical study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlmcConfig {
    /// Prescribed relative tolerance.
    pub tol: f64,
    /// Confidence coefficient `C_A` (1.96 for two-sided 95%).
    pub confidence: f64,
    /// Mesh refinement factor `R` between levels.
    pub refine_factor: u32,
    /// Starting one-step exit probability bound at level 0.
    pub delta0: f64,
    /// Refinement factor for delta.
    pub delta_refine: f64,
    /// Coefficient-of-variation target for calibration estimators.
    pub cv_target: f64,
    /// First batch size of every calibration loop.
    pub initial_batch: u64,
    /// Hard cap on calibration samples per level.
    pub max_batch: u64,
    /// Hierarchy depth cap.
    pub max_levels: u32,
    /// Gaussian-regime threshold `c` in the variance bound.
    pub gaussian_threshold: f64,
    /// Optional user-supplied level-0 mesh (may be nonuniform).
    pub level0_mesh: Option<Vec<f64>>,
    /// Force the hierarchy at least this deep (used when re-entering
    /// calibration after a bias overrun).
    pub min_levels: u32,
}

impl MlmcConfig {
    pub fn new(tol: f64) -> MlmcConfig {
        MlmcConfig {
            tol,
            confidence: 1.96,
            refine_factor: 2,
            delta0: 0.01,
            delta_refine: 10.0,
            cv_target: 0.05,
            initial_batch: 100,
            max_batch: 1 << 20,
            max_levels: 25,
            gaussian_threshold: 10.0,
            level0_mesh: None,
            min_levels: 0,
        }
    }
}

/// Everything measured about one level during calibration. For level 0
/// the quantities describe single paths; deeper levels describe coupled
/// pairs, with `mean_g`, `var_g`, `mean_ei`, `mean_ntl` and `mean_nssa`
/// taken from the fine leg and `vhat` from the coarse-leg duals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelStats {
    pub m_total: u64,
    pub m_inlattice: u64,
    pub psi_seconds: f64,
    pub vhat: f64,
    pub mean_g: f64,
    pub var_g: f64,
    pub mean_ei: f64,
    pub mean_ntl: f64,
    pub mean_nk1_combined: f64,
    pub mean_nk2_combined: f64,
    pub mean_ntl_combined: f64,
    pub mean_nssa: f64,
    pub exit_fraction: f64,
    pub cv_achieved: f64,
}

/// One calibrated level of the plan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelEntry {
    pub level: u32,
    pub dt: f64,
    pub cells: usize,
    pub delta: f64,
    /// Planned sample count (ceiling of the continuous optimum).
    pub m: u64,
    pub m_continuous: f64,
    /// Variance used for allocation: `Var(g_0)` at level 0, the
    /// dual-weighted level-difference variance deeper down.
    pub v_alloc: f64,
    pub stats: LevelStats,
}

/// Calibrated hierarchy (Phase II output).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelPlan {
    pub schema_version: u32,
    pub seed: u64,
    pub model_hash: String,
    pub tol: f64,
    pub confidence: f64,
    pub refine_factor: u32,
    pub mesh0: Vec<f64>,
    pub levels: Vec<LevelEntry>,
    /// Relative discretization-error estimate at the deepest level.
    pub e_i_rel: f64,
    /// Realized statistical share of the tolerance.
    pub theta: f64,
    /// Predicted multilevel work, seconds.
    pub w_ml_seconds: f64,
    /// Predicted SSA work for the same target, seconds.
    pub w_ssa_seconds: f64,
}

impl LevelPlan {
    pub fn mesh_for_level(&self, level: u32) -> Mesh {
        let mut mesh = Mesh::from_points(self.mesh0.clone());
        for _ in 0..level {
            mesh = mesh.refine(self.refine_factor);
        }
        mesh
    }

    pub fn deepest(&self) -> u32 {
        self.levels.last().map(|l| l.level).unwrap_or(0)
    }
}

/// Final report of an estimation run (Phase III output).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateReport {
    pub schema_version: u32,
    pub seed: u64,
    pub model_hash: String,
    pub tol: f64,
    pub confidence: f64,
    pub estimate: f64,
    /// Two-sided statistical half width `C_A sqrt(sum V_l / M_l)`.
    pub stat_half_width: f64,
    pub stat_half_width_rel: f64,
    /// Discretization-error estimate (absolute and relative).
    pub e_i: f64,
    pub e_i_rel: f64,
    /// Exit-error bound `delta_L <N_TL,L> |estimate|`.
    pub exit_bound: f64,
    pub theta: f64,
    pub levels: Vec<LevelRealized>,
    /// Modeled work of all simulated paths, seconds.
    pub work_model_seconds: f64,
    /// Wall-clock duration of the estimation phase, seconds.
    pub runtime_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelRealized {
    pub level: u32,
    pub dt: f64,
    pub delta: f64,
    pub m_planned: u64,
    pub m_run: u64,
    pub mean_contribution: f64,
    pub variance: f64,
    pub mean_ntl: f64,
    pub mean_nk1: f64,
    pub mean_nk2: f64,
    pub exit_fraction: f64,
    pub mean_cost_seconds: f64,
}

// ---------------------------------------------------------------------
// Sample allocation
// ---------------------------------------------------------------------

/// Greedy KKT solve of `min sum psi_l M_l` subject to
/// `sum V_l / M_l <= rhs`, `M_l >= 1`: levels are pinned to one sample
/// from the deepest down while the unconstrained solution dips below
/// one. Returns the continuous optimizer.
pub fn kkt_allocate_rhs(psi: &[f64], v: &[f64], rhs: f64) -> Vec<f64> {
    assert_eq!(psi.len(), v.len());
    assert!(rhs > 0.0, "variance budget must be positive");
    assert!(psi.iter().all(|&p| p > 0.0), "path costs must be positive");
    let levels = psi.len();
    let mut m = vec![1.0; levels];
    let mut pinned_v = 0.0;
    for k in 0..levels {
        let top = levels - 1 - k;
        let budget = rhs - pinned_v;
        if budget <= 0.0 {
            // Remaining budget exhausted by pinned levels; keep pinning.
            pinned_v += v[top];
            continue;
        }
        let q = (0..=top).map(|l| (psi[l] * v[l]).sqrt()).sum::<f64>() / budget;
        if psi[top] - q * q * v[top] < 0.0 {
            for l in 0..=top {
                m[l] = (q * (v[l] / psi[l]).sqrt()).max(1.0);
            }
            return m;
        }
        pinned_v += v[top];
    }
    m
}

/// Allocation from the error budget: `rhs = ((TOL - TOL^2 - E_I)/C_A)^2`
/// with all quantities relative to `|E[g]|`.
pub fn kkt_allocate(
    psi: &[f64],
    v_rel: &[f64],
    tol: f64,
    e_i_rel: f64,
    c_a: f64,
) -> Result<Vec<f64>, MlmcError> {
    let slack = tol - tol * tol - e_i_rel;
    if slack <= 0.0 {
        return Err(MlmcError::AllocationInfeasible(slack));
    }
    Ok(kkt_allocate_rhs(psi, v_rel, (slack / c_a).powi(2)))
}

/// One-step exit-bound refinement condition at a level: the dual
/// variance must dominate the exit-driven variance contributions and
/// `delta <N_TL>` must stay small. Zero tau-leap usage passes trivially.
pub fn refine_delta_check(vhat: f64, var_g: f64, delta: f64, mean_ntl: f64) -> bool {
    if mean_ntl == 0.0 {
        return true;
    }
    let dn = delta * mean_ntl;
    vhat * (1.0 - dn) * (1.0 - dn) > 2.0 * var_g * dn && dn < 0.1
}

/// Deepest-level delta initializer: the largest power of `1/c_refine`
/// with `|<g>| delta <N_TL> < TOL^2`, never above the current delta.
pub fn last_level_delta(
    mean_g: f64,
    mean_ntl: f64,
    tol: f64,
    c_refine: f64,
    current_delta: f64,
) -> f64 {
    let scale = mean_g.abs() * mean_ntl;
    if scale == 0.0 || current_delta * scale <= tol * tol {
        return current_delta;
    }
    let target = tol * tol / scale;
    let exponent = target.log(c_refine).floor();
    current_delta.min(c_refine.powf(exponent))
}

// ---------------------------------------------------------------------
// Per-level sampling
// ---------------------------------------------------------------------

/// Per-path reduction used by both calibration and estimation.
#[derive(Debug, Clone, Copy, Default)]
struct PathSummary {
    in_lattice: bool,
    /// Estimator term: `g 1_A` at level 0, the indicator-weighted
    /// difference for pairs. Defined for every path.
    y: f64,
    /// Fine-leg observable (in-lattice paths only).
    g_fine: f64,
    e_i: f64,
    s_e: f64,
    s_v: f64,
    n_tl_fine: f64,
    n_tl_chernoff_fine: f64,
    n_exact_fine: f64,
    n_k1_combined: f64,
    n_k2_combined: f64,
    n_tl_combined: f64,
    n_ssa: f64,
    cost_seconds: f64,
}

#[derive(Clone)]
enum LevelKind<'a> {
    Single { mesh: &'a Mesh, delta: f64 },
    Pair {
        mesh_coarse: &'a Mesh,
        mesh_fine: &'a Mesh,
        delta_coarse: f64,
        delta_fine: f64,
    },
}

struct LevelSampler<'a> {
    model: &'a Model,
    machine: &'a MachineConstants,
    kind: LevelKind<'a>,
    gaussian_threshold: f64,
    seq: SeedSequence,
    domain: StreamDomain,
}

impl<'a> LevelSampler<'a> {
    fn sample(&self, index: u64) -> PathSummary {
        let mut rng = self.seq.path_rng(self.domain, index);
        let net = &self.model.network;
        let g = &self.model.observable;
        match &self.kind {
            LevelKind::Single { mesh, delta } => {
                let p = hybrid_path(net, &self.model.x0, mesh, *delta, self.machine, &mut rng);
                let mut s = PathSummary {
                    in_lattice: !p.exit,
                    cost_seconds: p.cost_seconds,
                    n_ssa: p.int_a0,
                    n_tl_fine: p.n_tl as f64,
                    n_tl_chernoff_fine: p.n_tl_chernoff as f64,
                    n_exact_fine: (p.n_k1 + p.n_k2) as f64,
                    n_k1_combined: p.n_k1 as f64,
                    n_k2_combined: p.n_k2 as f64,
                    n_tl_combined: p.n_tl as f64,
                    ..Default::default()
                };
                if !p.exit {
                    let val = g.eval(p.final_state());
                    let duals = path_dual_stats(net, &p, g, self.gaussian_threshold);
                    s.y = val;
                    s.g_fine = val;
                    s.e_i = duals.e_i;
                    s.s_e = duals.s_e;
                    s.s_v = duals.s_v;
                }
                s
            }
            LevelKind::Pair {
                mesh_coarse,
                mesh_fine,
                delta_coarse,
                delta_fine,
            } => {
                let pair = coupled_hybrid_path(
                    net,
                    &self.model.x0,
                    mesh_coarse,
                    mesh_fine,
                    *delta_coarse,
                    *delta_fine,
                    self.machine,
                    &mut rng,
                );
                let g_c = if pair.coarse.exit {
                    0.0
                } else {
                    g.eval(pair.coarse.final_state())
                };
                let g_f = if pair.fine.exit {
                    0.0
                } else {
                    g.eval(pair.fine.final_state())
                };
                let both_in = !pair.coarse.exit && !pair.fine.exit;
                let mut s = PathSummary {
                    in_lattice: both_in,
                    y: g_f - g_c,
                    cost_seconds: pair.cost_seconds(),
                    n_ssa: pair.fine.int_a0,
                    n_tl_fine: pair.fine.n_tl as f64,
                    n_tl_chernoff_fine: pair.fine.n_tl_chernoff as f64,
                    n_exact_fine: (pair.fine.n_k1 + pair.fine.n_k2) as f64,
                    n_k1_combined: pair.n_k1_combined() as f64,
                    n_k2_combined: pair.n_k2_combined() as f64,
                    n_tl_combined: pair.n_tl_combined() as f64,
                    ..Default::default()
                };
                if both_in {
                    s.g_fine = g_f;
                    let coarse_duals =
                        path_dual_stats(net, &pair.coarse, g, self.gaussian_threshold);
                    let fine_ei = path_dual_stats(net, &pair.fine, g, self.gaussian_threshold).e_i;
                    s.s_e = coarse_duals.s_e;
                    s.s_v = coarse_duals.s_v;
                    s.e_i = fine_ei;
                }
                s
            }
        }
    }

    fn batch(&self, start: u64, count: u64) -> Vec<PathSummary> {
        (start..start + count)
            .into_par_iter()
            .map(|i| self.sample(i))
            .collect()
    }
}

/// In-lattice accumulators for one calibration level.
#[derive(Default)]
struct LevelAccum {
    m_total: u64,
    g: Vec<f64>,
    e_i: Vec<f64>,
    s_e: Vec<f64>,
    s_v: Vec<f64>,
    ntl: stats::Running,
    ntl_chernoff: stats::Running,
    nexact: stats::Running,
    nk1_c: stats::Running,
    nk2_c: stats::Running,
    ntl_c: stats::Running,
    nssa: stats::Running,
    cost: stats::Running,
}

impl LevelAccum {
    fn absorb(&mut self, batch: &[PathSummary]) {
        for s in batch {
            self.m_total += 1;
            if !s.in_lattice {
                continue;
            }
            self.g.push(s.g_fine);
            self.e_i.push(s.e_i);
            self.s_e.push(s.s_e);
            self.s_v.push(s.s_v);
            self.ntl.push(s.n_tl_fine);
            self.ntl_chernoff.push(s.n_tl_chernoff_fine);
            self.nexact.push(s.n_exact_fine);
            self.nk1_c.push(s.n_k1_combined);
            self.nk2_c.push(s.n_k2_combined);
            self.ntl_c.push(s.n_tl_combined);
            self.nssa.push(s.n_ssa);
            self.cost.push(s.cost_seconds);
        }
    }

    fn stats(&self) -> LevelStats {
        let m_in = self.g.len() as u64;
        LevelStats {
            m_total: self.m_total,
            m_inlattice: m_in,
            psi_seconds: self.cost.mean,
            vhat: stats::variance(&self.s_e) + stats::mean(&self.s_v),
            mean_g: stats::mean(&self.g),
            var_g: stats::variance(&self.g),
            mean_ei: stats::mean(&self.e_i),
            mean_ntl: self.ntl.mean,
            mean_nk1_combined: self.nk1_c.mean,
            mean_nk2_combined: self.nk2_c.mean,
            mean_ntl_combined: self.ntl_c.mean,
            mean_nssa: self.nssa.mean,
            exit_fraction: 1.0 - m_in as f64 / self.m_total.max(1) as f64,
            cv_achieved: f64::NAN,
        }
    }

    /// Worst coefficient of variation among the estimators the
    /// calibration relies on. `include_var_g` adds the level-0 check on
    /// the sample variance of `g`.
    fn worst_cv(&self, include_var_g: bool) -> f64 {
        let m = self.g.len() as f64;
        if m < 8.0 {
            return f64::INFINITY;
        }
        let vhat = stats::variance(&self.s_e) + stats::mean(&self.s_v);
        let cv_vhat = if vhat.abs() < 1e-300 {
            0.0
        } else {
            let var_of_var = stats::variance_of_sample_variance(&self.s_e);
            let var_of_mean = stats::variance(&self.s_v) / m;
            (var_of_var + var_of_mean).sqrt() / vhat
        };
        let mean_ei = stats::mean(&self.e_i);
        let g_scale = stats::mean(&self.g).abs().max(1e-300);
        let cv_ei = if mean_ei.abs() <= 1e-9 * g_scale {
            0.0
        } else {
            (stats::variance(&self.e_i) / m).sqrt() / mean_ei.abs()
        };
        let mut worst = cv_vhat.max(cv_ei);
        if include_var_g {
            let var_g = stats::variance(&self.g);
            let cv_varg = if var_g <= 0.0 {
                0.0
            } else {
                stats::variance_of_sample_variance(&self.g).sqrt() / var_g
            };
            worst = worst.max(cv_varg);
        }
        worst
    }
}

/// Batch-doubling sampling loop: grows the sample until the worst
/// estimator coefficient of variation drops below target (or the cap is
/// hit), failing fast in exit-dominated regimes.
fn collect_level_stats(
    sampler: &LevelSampler<'_>,
    level: u32,
    cfg: &MlmcConfig,
    counter: &mut u64,
) -> Result<LevelStats, MlmcError> {
    let mut accum = LevelAccum::default();
    let include_var_g = matches!(sampler.kind, LevelKind::Single { .. });
    let mut batch = cfg.initial_batch.max(8);
    loop {
        let summaries = sampler.batch(*counter, batch);
        *counter += batch;
        accum.absorb(&summaries);
        let in_fraction = accum.g.len() as f64 / accum.m_total as f64;
        if accum.m_total >= 64 && in_fraction < 0.5 {
            return Err(MlmcError::ExitDominated {
                level,
                fraction: in_fraction,
            });
        }
        let cv = accum.worst_cv(include_var_g);
        if cv <= cfg.cv_target || accum.m_total >= cfg.max_batch {
            let mut out = accum.stats();
            out.cv_achieved = cv;
            return Ok(out);
        }
        batch = accum.m_total;
    }
}

// ---------------------------------------------------------------------
// Phase II: calibration
// ---------------------------------------------------------------------

struct LevelRecord {
    mesh: Mesh,
    delta: f64,
    stats: LevelStats,
}

/// Relative allocation inputs for hierarchy `levels`; the variance at
/// level 0 is the plain observable variance, deeper levels use the
/// dual-weighted difference variance.
fn allocation_inputs(records: &[LevelRecord]) -> (Vec<f64>, Vec<f64>, f64) {
    let g_scale = records
        .last()
        .map(|r| r.stats.mean_g.abs())
        .unwrap_or(1.0)
        .max(1e-300);
    let psi: Vec<f64> = records.iter().map(|r| r.stats.psi_seconds).collect();
    let v_rel: Vec<f64> = records
        .iter()
        .enumerate()
        .map(|(l, r)| {
            let v = if l == 0 { r.stats.var_g } else { r.stats.vhat };
            v / (g_scale * g_scale)
        })
        .collect();
    (psi, v_rel, g_scale)
}

/// Phase II: build the level hierarchy for `model` at tolerance
/// `cfg.tol`, choosing the depth at the minimum of the predicted work
/// subject to the bias budget and the statistical share `theta >= 0.5`.
pub fn calibrate(
    model: &Model,
    machine: &MachineConstants,
    cfg: &MlmcConfig,
    seq: SeedSequence,
    model_hash: &str,
) -> Result<LevelPlan, MlmcError> {
    let tol = cfg.tol;
    if !(tol > 0.0 && tol < 1.0) {
        return Err(MlmcError::BadTolerance(tol));
    }
    let c_a = cfg.confidence;
    let mesh0 = match &cfg.level0_mesh {
        Some(points) => Mesh::from_points(points.clone()),
        None => stable_level0_mesh(&model.network, &model.x0, model.t_final)?,
    };
    let bias_budget = tol - tol * tol;
    // theta >= 0.5 reserves at least half of the tolerance for the
    // statistical error; the 0.85 margin keeps the invariant through
    // the re-measurement noise of the final exit-bound loop.
    let theta_budget = 0.85 * (0.5 * tol - tol * tol);

    let mut counters: Vec<u64> = Vec::new();
    let mut records: Vec<LevelRecord> = Vec::new();

    // Level 0: refine delta until the exit contribution is dominated.
    // An exit-dominated batch is treated like a failed check: the
    // advice it carries is exactly "use a smaller delta".
    {
        let mut delta = cfg.delta0;
        counters.push(0);
        loop {
            let sampler = LevelSampler {
                model,
                machine,
                kind: LevelKind::Single {
                    mesh: &mesh0,
                    delta,
                },
                gaussian_threshold: cfg.gaussian_threshold,
                seq,
                domain: StreamDomain::Calibration { level: 0 },
            };
            match collect_level_stats(&sampler, 0, cfg, &mut counters[0]) {
                Ok(stats)
                    if refine_delta_check(stats.vhat, stats.var_g, delta, stats.mean_ntl) =>
                {
                    records.push(LevelRecord {
                        mesh: mesh0.clone(),
                        delta,
                        stats,
                    });
                    break;
                }
                Ok(_) | Err(MlmcError::ExitDominated { .. }) => {}
                Err(e) => return Err(e),
            }
            delta /= cfg.delta_refine;
            if delta < 1e-16 {
                return Err(MlmcError::DeltaUnderflow { level: 0, delta });
            }
        }
    }

    // Work candidates per depth (finite only when the bias budget and
    // the theta constraint hold).
    let mut work_candidates: Vec<f64> = Vec::new();
    let cand_work = |records: &[LevelRecord], e_i_rel: f64| -> f64 {
        if e_i_rel >= theta_budget.max(0.0) {
            return f64::INFINITY;
        }
        let (psi, v_rel, _) = allocation_inputs(records);
        match kkt_allocate(&psi, &v_rel, tol, e_i_rel, c_a) {
            Ok(m) => psi.iter().zip(&m).map(|(p, m)| p * m).sum(),
            Err(_) => f64::INFINITY,
        }
    };
    {
        let s0 = &records[0].stats;
        let e_i0 = s0.mean_ei.abs() / s0.mean_g.abs().max(1e-300);
        work_candidates.push(cand_work(&records, e_i0));
    }

    // Deepen while the bias budget fails or the predicted work drops.
    loop {
        let l = records.len() as u32; // the new fine level
        if l > cfg.max_levels {
            let s = &records.last().unwrap().stats;
            let e_i_rel = s.mean_ei.abs() / s.mean_g.abs().max(1e-300);
            if !work_candidates.iter().any(|w| w.is_finite()) {
                return Err(MlmcError::ToleranceInfeasible {
                    max_levels: cfg.max_levels,
                    e_i_rel,
                    budget: bias_budget,
                });
            }
            break;
        }
        let mesh_fine = records.last().unwrap().mesh.refine(cfg.refine_factor);
        let delta_coarse = records.last().unwrap().delta;
        let mut delta = delta_coarse;
        counters.push(0);
        let stats = loop {
            let sampler = LevelSampler {
                model,
                machine,
                kind: LevelKind::Pair {
                    mesh_coarse: &records.last().unwrap().mesh,
                    mesh_fine: &mesh_fine,
                    delta_coarse,
                    delta_fine: delta,
                },
                gaussian_threshold: cfg.gaussian_threshold,
                seq,
                domain: StreamDomain::Calibration { level: l },
            };
            match collect_level_stats(&sampler, l, cfg, &mut counters[l as usize]) {
                Ok(stats)
                    if refine_delta_check(stats.vhat, stats.var_g, delta, stats.mean_ntl) =>
                {
                    break stats;
                }
                Ok(_) | Err(MlmcError::ExitDominated { .. }) => {}
                Err(e) => return Err(e),
            }
            delta /= cfg.delta_refine;
            if delta < 1e-16 {
                return Err(MlmcError::DeltaUnderflow { level: l, delta });
            }
        };
        let e_i_rel = stats.mean_ei.abs() / stats.mean_g.abs().max(1e-300);
        let no_tl = stats.mean_ntl == 0.0;
        records.push(LevelRecord {
            mesh: mesh_fine,
            delta,
            stats,
        });
        let w = cand_work(&records, e_i_rel);
        let improving = w < *work_candidates.last().unwrap();
        work_candidates.push(w);
        let feasible = w.is_finite();
        let forced = l < cfg.min_levels;
        if (!feasible || improving || forced) && !no_tl {
            continue;
        }
        break;
    }

    // Depth at the work minimum (the deepest entry wins ties).
    let mut l_star = work_candidates
        .iter()
        .enumerate()
        .filter(|(_, w)| w.is_finite())
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(l, _)| l)
        .unwrap_or(work_candidates.len() - 1);
    l_star = l_star.max((cfg.min_levels as usize).min(records.len() - 1));
    records.truncate(l_star + 1);

    // Deepest-level exit bound: shrink delta_L until
    // `|<g>| delta <N_TL> <= TOL^2`, re-simulating after each change.
    loop {
        let last = records.last().unwrap();
        let s = &last.stats;
        if last.delta * s.mean_ntl * s.mean_g.abs() <= tol * tol {
            break;
        }
        let delta_new = last_level_delta(s.mean_g, s.mean_ntl, tol, cfg.delta_refine, last.delta)
            .min(last.delta / cfg.delta_refine);
        if delta_new < 1e-16 {
            return Err(MlmcError::DeltaUnderflow {
                level: l_star as u32,
                delta: delta_new,
            });
        }
        let stats = if l_star == 0 {
            let sampler = LevelSampler {
                model,
                machine,
                kind: LevelKind::Single {
                    mesh: &records[0].mesh,
                    delta: delta_new,
                },
                gaussian_threshold: cfg.gaussian_threshold,
                seq,
                domain: StreamDomain::Calibration { level: 0 },
            };
            collect_level_stats(&sampler, 0, cfg, &mut counters[0])?
        } else {
            let sampler = LevelSampler {
                model,
                machine,
                kind: LevelKind::Pair {
                    mesh_coarse: &records[l_star - 1].mesh,
                    mesh_fine: &records[l_star].mesh,
                    delta_coarse: records[l_star - 1].delta,
                    delta_fine: delta_new,
                },
                gaussian_threshold: cfg.gaussian_threshold,
                seq,
                domain: StreamDomain::Calibration {
                    level: l_star as u32,
                },
            };
            collect_level_stats(&sampler, l_star as u32, cfg, &mut counters[l_star])?
        };
        let rec = records.last_mut().unwrap();
        rec.delta = delta_new;
        rec.stats = stats;
    }

    // Final allocation; the SSA reference work uses the same target.
    let s_last = &records.last().unwrap().stats;
    let e_i_rel = s_last.mean_ei.abs() / s_last.mean_g.abs().max(1e-300);
    let g_scale2 = s_last.mean_g * s_last.mean_g;
    let m_ssa = c_a * c_a * s_last.var_g / g_scale2.max(1e-300) / (tol * tol);
    let w_ssa = machine.c_star_seconds * m_ssa * s_last.mean_nssa;
    let (psi, v_rel, _) = allocation_inputs(&records);
    let m_cont = kkt_allocate(&psi, &v_rel, tol, e_i_rel, c_a)?;
    let w_ml: f64 = psi
        .iter()
        .zip(&m_cont)
        .map(|(p, m)| p * m.ceil())
        .sum();
    let theta = (tol - tol * tol - e_i_rel) / tol;

    let levels: Vec<LevelEntry> = records
        .iter()
        .enumerate()
        .map(|(l, r)| LevelEntry {
            level: l as u32,
            dt: r.mesh.min_dt(),
            cells: r.mesh.cells(),
            delta: r.delta,
            m: m_cont[l].ceil() as u64,
            m_continuous: m_cont[l],
            v_alloc: if l == 0 { r.stats.var_g } else { r.stats.vhat },
            stats: r.stats.clone(),
        })
        .collect();

    Ok(LevelPlan {
        schema_version: 1,
        seed: seq.master(),
        model_hash: model_hash.to_string(),
        tol,
        confidence: c_a,
        refine_factor: cfg.refine_factor,
        mesh0: mesh0.points().to_vec(),
        levels,
        e_i_rel,
        theta,
        w_ml_seconds: w_ml,
        w_ssa_seconds: w_ssa,
    })
}

// ---------------------------------------------------------------------
// Phase III: estimation
// ---------------------------------------------------------------------

#[derive(Default)]
struct EstAccum {
    m_run: u64,
    y: stats::Running,
    s_e: stats::Running,
    s_v: stats::Running,
    e_i: stats::Running,
    cost: stats::Running,
    ntl: stats::Running,
    nk1: stats::Running,
    nk2: stats::Running,
    exits: u64,
}

impl EstAccum {
    fn absorb(&mut self, batch: &[PathSummary]) {
        for s in batch {
            self.m_run += 1;
            self.y.push(s.y);
            self.cost.push(s.cost_seconds);
            if s.in_lattice {
                self.s_e.push(s.s_e);
                self.s_v.push(s.s_v);
                self.e_i.push(s.e_i);
                self.ntl.push(s.n_tl_fine);
                self.nk1.push(s.n_k1_combined);
                self.nk2.push(s.n_k2_combined);
            } else {
                self.exits += 1;
            }
        }
    }

    fn vhat(&self) -> f64 {
        self.s_e.variance() + self.s_v.mean
    }
}

/// Phase III: run the planned hierarchy in halves, updating the bias,
/// variance and cost estimates and re-solving the allocation until the
/// predicted work settles, then completing the full sample. The final
/// estimator is the telescoping sum of indicator-weighted level means.
pub fn estimate(
    model: &Model,
    plan: &LevelPlan,
    machine: &MachineConstants,
    cfg: &MlmcConfig,
    seq: SeedSequence,
) -> Result<EstimateReport, MlmcError> {
    let start = std::time::Instant::now();
    let tol = plan.tol;
    let c_a = plan.confidence;
    let n_levels = plan.levels.len();
    let meshes: Vec<Mesh> = (0..n_levels)
        .map(|l| plan.mesh_for_level(l as u32))
        .collect();
    let samplers: Vec<LevelSampler<'_>> = (0..n_levels)
        .map(|l| LevelSampler {
            model,
            machine,
            kind: if l == 0 {
                LevelKind::Single {
                    mesh: &meshes[0],
                    delta: plan.levels[0].delta,
                }
            } else {
                LevelKind::Pair {
                    mesh_coarse: &meshes[l - 1],
                    mesh_fine: &meshes[l],
                    delta_coarse: plan.levels[l - 1].delta,
                    delta_fine: plan.levels[l].delta,
                }
            },
            gaussian_threshold: cfg.gaussian_threshold,
            seq,
            domain: StreamDomain::Estimation { level: l as u32 },
        })
        .collect();

    let mut accums: Vec<EstAccum> = (0..n_levels).map(|_| EstAccum::default()).collect();
    let mut targets: Vec<f64> = plan.levels.iter().map(|l| l.m as f64).collect();
    let mut psi: Vec<f64> = plan.levels.iter().map(|l| l.stats.psi_seconds).collect();
    let mut prev_work = f64::INFINITY;

    for _round in 0..32 {
        // Run up to half of the current targets.
        for (l, acc) in accums.iter_mut().enumerate() {
            let want = (targets[l] / 2.0).ceil() as u64;
            if acc.m_run < want {
                let batch = samplers[l].batch(acc.m_run, want - acc.m_run);
                acc.absorb(&batch);
            }
        }
        // Refresh estimates and re-solve.
        let estimate_now: f64 = accums.iter().map(|a| a.y.mean).sum();
        let g_scale = estimate_now.abs().max(1e-300);
        let e_i_rel = accums.last().unwrap().e_i.mean.abs() / g_scale;
        if e_i_rel >= tol - tol * tol {
            return Err(MlmcError::BiasBudgetExceeded {
                e_i_rel,
                budget: tol - tol * tol,
            });
        }
        for (l, acc) in accums.iter().enumerate() {
            if acc.cost.count > 0 {
                psi[l] = acc.cost.mean;
            }
        }
        let v_rel: Vec<f64> = accums
            .iter()
            .enumerate()
            .map(|(l, a)| {
                let v = if l == 0 { a.y.variance() } else { a.vhat() };
                v / (g_scale * g_scale)
            })
            .collect();
        let new_targets = kkt_allocate(&psi, &v_rel, tol, e_i_rel, c_a)?;
        let work: f64 = psi
            .iter()
            .zip(&new_targets)
            .zip(&accums)
            .map(|((p, m), a)| p * m.max(a.m_run as f64))
            .sum();
        targets = new_targets;
        if (work - prev_work).abs() <= 0.05 * work {
            break;
        }
        prev_work = work;
    }

    // Complete the full allocation.
    for (l, acc) in accums.iter_mut().enumerate() {
        let want = targets[l].ceil().max(1.0) as u64;
        if acc.m_run < want {
            let batch = samplers[l].batch(acc.m_run, want - acc.m_run);
            acc.absorb(&batch);
        }
    }

    let estimate: f64 = accums.iter().map(|a| a.y.mean).sum();
    let g_scale = estimate.abs().max(1e-300);
    let var_terms: Vec<f64> = accums
        .iter()
        .enumerate()
        .map(|(l, a)| {
            let v = if l == 0 { a.y.variance() } else { a.vhat() };
            v / a.m_run.max(1) as f64
        })
        .collect();
    let stat_half_width = c_a * var_terms.iter().sum::<f64>().sqrt();
    let e_i = accums.last().unwrap().e_i.mean;
    let e_i_rel = e_i.abs() / g_scale;
    let last = plan.levels.last().unwrap();
    let exit_bound = last.delta * accums.last().unwrap().ntl.mean * estimate.abs();
    let work_model_seconds: f64 = accums
        .iter()
        .map(|a| a.cost.mean * a.m_run as f64)
        .sum();
    let levels = accums
        .iter()
        .enumerate()
        .map(|(l, a)| LevelRealized {
            level: l as u32,
            dt: plan.levels[l].dt,
            delta: plan.levels[l].delta,
            m_planned: plan.levels[l].m,
            m_run: a.m_run,
            mean_contribution: a.y.mean,
            variance: a.y.variance(),
            mean_ntl: a.ntl.mean,
            mean_nk1: a.nk1.mean,
            mean_nk2: a.nk2.mean,
            exit_fraction: a.exits as f64 / a.m_run.max(1) as f64,
            mean_cost_seconds: a.cost.mean,
        })
        .collect();

    Ok(EstimateReport {
        schema_version: 1,
        seed: seq.master(),
        model_hash: plan.model_hash.clone(),
        tol,
        confidence: c_a,
        estimate,
        stat_half_width,
        stat_half_width_rel: stat_half_width / g_scale,
        e_i,
        e_i_rel,
        exit_bound,
        theta: (tol - tol * tol - e_i_rel) / tol,
        levels,
        work_model_seconds,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Plain SSA estimator with `m` paths; returns the sample mean, sample
/// variance and the wall-clock seconds spent, for the work comparison.
pub fn ssa_benchmark(model: &Model, m: u64, seq: SeedSequence) -> (f64, f64, f64) {
    let start = std::time::Instant::now();
    let values: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut rng = seq.path_rng(StreamDomain::SsaBenchmark, i);
            let p = crate::exact::ssa_simulate(
                &model.network,
                &model.x0,
                0.0,
                model.t_final,
                &mut rng,
            );
            model.observable.eval(p.final_state())
        })
        .collect();
    (
        stats::mean(&values),
        stats::variance(&values),
        start.elapsed().as_secs_f64(),
    )
}
