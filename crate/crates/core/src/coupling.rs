//! Coupled hybrid paths on nested meshes.
//!
//! Two legs (coarse and fine) advance synchronously between horizons.
//! When both are in tau-leap mode, their frozen rates are split into a
//! common part and two residuals and three Poisson vectors are drawn
//! (the only place the Poisson sampler runs). Whenever at least one leg
//! is exact, a 3J-channel clock system realizes unit jumps: the common
//! group moves both legs, the residual groups move one. A tau-leap leg
//! keeps its rates frozen until its own horizon; an exact leg re-decides
//! after each of its own jumps, which reproduces the single-path law
//! exactly and keeps the telescoping property across level pairs.

use crate::exact::{ClockStep, MnrmClocks};
use crate::hybrid::{self, Decision, PathRecord, StepKind};
use crate::mesh::Mesh;
use crate::network::{apply_reaction, in_lattice, ReactionNetwork};
use crate::poisson;
use crate::rng::PathRng;
use crate::workmodel::MachineConstants;

/// Couple two Poisson variates through the common-part decomposition:
/// `P1 = P* + Q1`, `P2 = P* + Q2` with `P* ~ Poisson(min(l1, l2))` and
/// independent residuals, so `Var(P1 - P2) = |l1 - l2|`.
pub fn couple_poisson(lambda1: f64, lambda2: f64, rng: &mut PathRng) -> (u64, u64) {
    let common = lambda1.min(lambda2);
    let shared = poisson::sample(common, rng);
    let q1 = poisson::sample(lambda1 - common, rng);
    let q2 = poisson::sample(lambda2 - common, rng);
    (shared + q1, shared + q2)
}

/// Split two rate vectors into `(S1, S2, S3)`: common part, coarse
/// residual, fine residual. Per channel at least one residual is zero.
pub fn split_rates(a_coarse: &[f64], a_fine: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let s1: Vec<f64> = a_coarse
        .iter()
        .zip(a_fine)
        .map(|(&c, &f)| c.min(f))
        .collect();
    let s2: Vec<f64> = a_coarse.iter().zip(&s1).map(|(&c, &m)| c - m).collect();
    let s3: Vec<f64> = a_fine.iter().zip(&s1).map(|(&f, &m)| f - m).collect();
    (s1, s2, s3)
}

/// Method selected for the next stretch of one leg.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HorizonMethod {
    Tl,
    Mnrm,
}

/// Next synchronization horizon for one leg: runs the switching rule at
/// `(t, x)` and freezes the propensities. Tau-leap horizons stop at the
/// leg's own next mesh point; exact stretches are re-decided after each
/// jump, so their horizon is simply the final time (absorbing states use
/// the same convention with zero rates).
pub fn next_horizon(
    net: &ReactionNetwork,
    x: &[i64],
    t: f64,
    next_grid_point: f64,
    t_final: f64,
    delta: f64,
    machine: &MachineConstants,
) -> (f64, HorizonMethod, Vec<f64>) {
    let a = net.propensities(x);
    let a0: f64 = a.iter().sum();
    if a0 == 0.0 {
        return (t_final, HorizonMethod::Mnrm, vec![0.0; a.len()]);
    }
    match hybrid::decide(net, x, &a, t, next_grid_point, delta, machine) {
        Decision::Tl { tau_ch } => {
            let h = (t + tau_ch).min(next_grid_point).min(t_final);
            if h > t {
                (h, HorizonMethod::Tl, a)
            } else {
                (t_final, HorizonMethod::Mnrm, a)
            }
        }
        _ => (t_final, HorizonMethod::Mnrm, a),
    }
}

/// One step of the 3J-channel coupled clock system at rates `s`
/// (layout: `[common | coarse-only | fine-only]`). Fires one channel and
/// applies it to the states it drives, or advances the clocks to the
/// horizon without firing.
pub enum CoupledStep {
    Fired { group: usize, j: usize },
    ReachedHorizon,
}

#[allow(clippy::too_many_arguments)]
pub fn coupled_mnrm_step(
    net: &ReactionNetwork,
    t: &mut f64,
    horizon: f64,
    x_coarse: &mut Vec<i64>,
    x_fine: &mut Vec<i64>,
    clocks: &mut MnrmClocks,
    s: &[f64],
    rng: &mut PathRng,
) -> CoupledStep {
    let j_count = net.num_reactions();
    debug_assert_eq!(s.len(), 3 * j_count);
    match clocks.step(s, *t, horizon, rng) {
        ClockStep::ReachedCap => {
            *t = horizon;
            CoupledStep::ReachedHorizon
        }
        ClockStep::Fired { j: channel, dt } => {
            *t += dt;
            let group = channel / j_count;
            let j = channel % j_count;
            if group != 2 {
                *x_coarse = apply_reaction(x_coarse, net.stoichiometry(j), 1);
            }
            if group != 1 {
                *x_fine = apply_reaction(x_fine, net.stoichiometry(j), 1);
            }
            CoupledStep::Fired { group, j }
        }
    }
}

/// A coarse/fine pair of trajectories generated with shared randomness.
#[derive(Debug, Clone)]
pub struct CoupledPathRecord {
    pub coarse: PathRecord,
    pub fine: PathRecord,
}

impl CoupledPathRecord {
    pub fn n_k1_combined(&self) -> u64 {
        self.coarse.n_k1 + self.fine.n_k1
    }
    pub fn n_k2_combined(&self) -> u64 {
        self.coarse.n_k2 + self.fine.n_k2
    }
    pub fn n_tl_combined(&self) -> u64 {
        self.coarse.n_tl + self.fine.n_tl
    }
    /// Pair work per the cost model: both legs' step and Poisson terms.
    pub fn cost_seconds(&self) -> f64 {
        self.coarse.cost_seconds + self.fine.cost_seconds
    }
}

#[derive(Debug, Clone)]
enum LegMode {
    Decide,
    Frozen {
        rates: Vec<f64>,
        a0: f64,
        horizon: f64,
        idle: bool,
    },
    Exact {
        k2_branch: bool,
        a0: f64,
    },
}

struct Leg<'a> {
    mesh: &'a Mesh,
    delta: f64,
    record: PathRecord,
    x: Vec<i64>,
    mode: LegMode,
    dead: bool,
}

impl<'a> Leg<'a> {
    fn new(mesh: &'a Mesh, delta: f64, x0: &[i64], d: usize, machine: &MachineConstants) -> Leg<'a> {
        let mut record = PathRecord::new(d, 0.0, x0);
        // Same per-leg setup charge as a single-level path.
        record.cost_seconds += machine.c1_seconds;
        Leg {
            mesh,
            delta,
            record,
            x: x0.to_vec(),
            mode: LegMode::Decide,
            dead: false,
        }
    }

    fn decide(&mut self, net: &ReactionNetwork, t: f64, t_final: f64, machine: &MachineConstants) {
        let a = net.propensities(&self.x);
        let a0: f64 = a.iter().sum();
        if a0 == 0.0 {
            self.mode = LegMode::Frozen {
                rates: a,
                a0: 0.0,
                horizon: t_final,
                idle: true,
            };
            return;
        }
        let t_grid = self.mesh.next_point_after(t);
        match hybrid::decide(net, &self.x, &a, t, t_grid, self.delta, machine) {
            Decision::MnrmK1 => {
                self.record.cost_seconds += machine.c1_seconds;
                self.mode = LegMode::Exact {
                    k2_branch: false,
                    a0,
                };
            }
            Decision::MnrmK2 { .. } => {
                self.record.cost_seconds += machine.c2_seconds;
                self.mode = LegMode::Exact { k2_branch: true, a0 };
            }
            Decision::Tl { tau_ch } => {
                let h = (t + tau_ch).min(t_grid).min(t_final);
                if h <= t {
                    self.record.cost_seconds += machine.c2_seconds;
                    self.mode = LegMode::Exact { k2_branch: true, a0 };
                    return;
                }
                if t + tau_ch < t_grid.min(t_final) {
                    self.record.n_tl_chernoff += 1;
                }
                self.record.cost_seconds += machine.c3_seconds;
                self.mode = LegMode::Frozen {
                    rates: a,
                    a0,
                    horizon: h,
                    idle: false,
                };
            }
        }
    }

    fn frozen_horizon(&self) -> Option<f64> {
        match &self.mode {
            LegMode::Frozen { horizon, .. } => Some(*horizon),
            _ => None,
        }
    }

    /// Effective channel rates for the clock system.
    fn effective_rates(&self, net: &ReactionNetwork) -> Vec<f64> {
        match &self.mode {
            LegMode::Frozen { rates, .. } => rates.clone(),
            _ => net.propensities(&self.x),
        }
    }

    /// Complete a frozen (tau-leap or idle) block ending now at `t`:
    /// exit check, record the step with its marginal Poisson cost, and
    /// queue a new decision.
    fn complete_frozen(&mut self, t: f64, machine: &MachineConstants) {
        let (rates, a0, idle) = match &self.mode {
            LegMode::Frozen {
                rates, a0, idle, ..
            } => (rates.clone(), *a0, *idle),
            _ => unreachable!("complete_frozen outside a frozen block"),
        };
        if !idle {
            let dt = t - self.record.final_time();
            for &r in &rates {
                let lambda = r * dt;
                self.record.tl_poisson_rates.push(lambda);
                self.record.cost_seconds += machine.poisson_cost(lambda);
            }
            if !in_lattice(&self.x) {
                self.dead = true;
                self.record.exit = true;
                return;
            }
            self.record.push(t, &self.x, StepKind::Tl, a0);
        } else {
            self.record.push(t, &self.x, StepKind::Idle, 0.0);
        }
        self.mode = LegMode::Decide;
    }

    /// Record one exact jump of this leg at time `t` and queue the next
    /// decision.
    fn record_exact_jump(&mut self, t: f64) {
        let (kind, a0) = match &self.mode {
            LegMode::Exact { k2_branch, a0 } => (
                if *k2_branch {
                    StepKind::ExactK2
                } else {
                    StepKind::ExactK1
                },
                *a0,
            ),
            _ => unreachable!("exact jump outside an exact stretch"),
        };
        self.record.push(t, &self.x, kind, a0);
        self.mode = LegMode::Decide;
    }
}

/// Generate a coupled pair of hybrid paths over `mesh_coarse` and its
/// refinement `mesh_fine`. On a one-leg exit the surviving leg continues
/// single-level with its own mesh and delta; both records are truncated
/// at their exit points when both legs leave the lattice.
#[allow(clippy::too_many_arguments)]
pub fn coupled_hybrid_path(
    net: &ReactionNetwork,
    x0: &[i64],
    mesh_coarse: &Mesh,
    mesh_fine: &Mesh,
    delta_coarse: f64,
    delta_fine: f64,
    machine: &MachineConstants,
    rng: &mut PathRng,
) -> CoupledPathRecord {
    debug_assert_eq!(mesh_coarse.t_final(), mesh_fine.t_final());
    let t_final = mesh_coarse.t_final();
    let d = net.num_species();
    let j_count = net.num_reactions();
    let mut coarse = Leg::new(mesh_coarse, delta_coarse, x0, d, machine);
    let mut fine = Leg::new(mesh_fine, delta_fine, x0, d, machine);
    let mut t = 0.0;

    while t < t_final && !(coarse.dead && fine.dead) {
        if coarse.dead || fine.dead {
            let survivor = if coarse.dead { &mut fine } else { &mut coarse };
            finish_single_level(net, survivor, t, machine, rng);
            break;
        }
        if matches!(coarse.mode, LegMode::Decide) {
            coarse.decide(net, t, t_final, machine);
        }
        if matches!(fine.mode, LegMode::Decide) {
            fine.decide(net, t, t_final, machine);
        }
        let both_frozen = coarse.frozen_horizon().is_some() && fine.frozen_horizon().is_some();
        if both_frozen {
            // Both tau-leap (or absorbed): three coupled Poisson vectors
            // over the time to the nearer horizon.
            let hc = coarse.frozen_horizon().unwrap();
            let hf = fine.frozen_horizon().unwrap();
            let h = hc.min(hf);
            let dt = h - t;
            let (rc, rf) = (
                coarse.effective_rates(net),
                fine.effective_rates(net),
            );
            let (s1, s2, s3) = split_rates(&rc, &rf);
            for j in 0..j_count {
                let shared = poisson::sample(s1[j] * dt, rng);
                let qc = poisson::sample(s2[j] * dt, rng);
                let qf = poisson::sample(s3[j] * dt, rng);
                let kc = shared + qc;
                let kf = shared + qf;
                if kc > 0 {
                    coarse.x = apply_reaction(&coarse.x, net.stoichiometry(j), kc);
                }
                if kf > 0 {
                    fine.x = apply_reaction(&fine.x, net.stoichiometry(j), kf);
                }
            }
            t = h;
            if hc == h {
                coarse.complete_frozen(t, machine);
            }
            if hf == h {
                fine.complete_frozen(t, machine);
            }
        } else {
            // At least one exact leg: unit jumps from a 3J clock system
            // until a frozen horizon (or the end) interrupts, or a leg
            // changes mode.
            let h_block = t_final
                .min(coarse.frozen_horizon().unwrap_or(f64::INFINITY))
                .min(fine.frozen_horizon().unwrap_or(f64::INFINITY));
            let mut clocks = MnrmClocks::init(3 * j_count, rng);
            let mut s = vec![0.0; 3 * j_count];
            loop {
                let rc = coarse.effective_rates(net);
                let rf = fine.effective_rates(net);
                let (s1, s2, s3) = split_rates(&rc, &rf);
                s[..j_count].copy_from_slice(&s1);
                s[j_count..2 * j_count].copy_from_slice(&s2);
                s[2 * j_count..].copy_from_slice(&s3);
                if s.iter().sum::<f64>() == 0.0 {
                    // Both legs inert until the horizon.
                    t = h_block;
                } else {
                    match coupled_mnrm_step(
                        net,
                        &mut t,
                        h_block,
                        &mut coarse.x,
                        &mut fine.x,
                        &mut clocks,
                        &s,
                        rng,
                    ) {
                        CoupledStep::Fired { group, .. } => {
                            let mut mode_changed = false;
                            if group != 2 && matches!(coarse.mode, LegMode::Exact { .. }) {
                                coarse.record_exact_jump(t);
                                coarse.decide(net, t, t_final, machine);
                                mode_changed |= coarse.frozen_horizon().is_some();
                            }
                            if group != 1 && matches!(fine.mode, LegMode::Exact { .. }) {
                                fine.record_exact_jump(t);
                                fine.decide(net, t, t_final, machine);
                                mode_changed |= fine.frozen_horizon().is_some();
                            }
                            if !mode_changed && t < h_block {
                                continue;
                            }
                        }
                        CoupledStep::ReachedHorizon => {}
                    }
                }
                break;
            }
            if t >= h_block {
                t = h_block;
                if coarse.frozen_horizon() == Some(h_block) {
                    coarse.complete_frozen(t, machine);
                }
                if fine.frozen_horizon() == Some(h_block) {
                    fine.complete_frozen(t, machine);
                }
            }
        }
    }
    if coarse.dead && fine.dead {
        // Both exited; records stay truncated.
    } else {
        for leg in [&mut coarse, &mut fine] {
            if !leg.dead && leg.record.final_time() < t_final {
                let a0 = net.total_propensity(&leg.x);
                leg.record.push(t_final, &leg.x, StepKind::Idle, a0);
            }
        }
    }
    CoupledPathRecord {
        coarse: coarse.record,
        fine: fine.record,
    }
}

/// Finish the surviving leg single-level: complete its current frozen
/// block at the frozen rates, then continue as a plain hybrid path.
fn finish_single_level(
    net: &ReactionNetwork,
    leg: &mut Leg,
    t: f64,
    machine: &MachineConstants,
    rng: &mut PathRng,
) {
    if let LegMode::Frozen {
        rates,
        horizon,
        idle,
        ..
    } = leg.mode.clone()
    {
        if !idle {
            let dt = horizon - t;
            for (j, &r) in rates.iter().enumerate() {
                let k = poisson::sample(r * dt, rng);
                if k > 0 {
                    leg.x = apply_reaction(&leg.x, net.stoichiometry(j), k);
                }
            }
        }
        leg.complete_frozen(horizon, machine);
        if leg.dead {
            return;
        }
    }
    // Resume at the current time, not at the survivor's last recorded
    // row: the stretch since then was already realized jump-free by the
    // coupled clocks, and memorylessness licenses a fresh start at `t`.
    let resume = leg.record.final_time().max(t);
    let mut x = leg.x.clone();
    hybrid::run_hybrid_from(
        net,
        &mut leg.record,
        &mut x,
        resume,
        leg.mesh,
        leg.delta,
        machine,
        rng,
    );
    leg.x = x;
    leg.dead = leg.record.exit;
}
