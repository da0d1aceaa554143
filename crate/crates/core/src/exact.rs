//! Exact path simulation: the Modified Next Reaction Method with internal
//! clocks (one uniform per step after initialization) and Gillespie's SSA
//! direct method (two uniforms per step), used only for benchmarking.

use crate::hybrid::{PathRecord, StepKind};
use crate::network::{apply_reaction, ReactionNetwork};
use crate::rng::PathRng;

/// Internal clocks of the MNRM: `r[j]` is the integrated propensity of
/// channel `j` and `p[j]` the next firing time of its unit Poisson
/// process. `p[j] > r[j]` except exactly at a firing.
#[derive(Debug, Clone)]
pub struct MnrmClocks {
    pub r: Vec<f64>,
    pub p: Vec<f64>,
}

/// Outcome of advancing the clocks by one step.
pub enum ClockStep {
    /// Channel `j` fired after waiting `dt`.
    Fired { j: usize, dt: f64 },
    /// No channel fired before the time cap; clocks advanced to the cap.
    ReachedCap,
}

impl MnrmClocks {
    /// Fresh clocks: `r = 0`, `p_j = log(1/u_j)` (consumes J uniforms).
    pub fn init(num_reactions: usize, rng: &mut PathRng) -> Self {
        MnrmClocks {
            r: vec![0.0; num_reactions],
            p: (0..num_reactions).map(|_| rng.exp1()).collect(),
        }
    }

    /// One MNRM step at frozen rates `a` from time `t`, capped at `cap`.
    /// Ties in the argmin break toward the lowest channel index. A firing
    /// consumes exactly one uniform.
    pub fn step(&mut self, a: &[f64], t: f64, cap: f64, rng: &mut PathRng) -> ClockStep {
        let mut best = usize::MAX;
        let mut delta = f64::INFINITY;
        for (j, &aj) in a.iter().enumerate() {
            if aj <= 0.0 {
                continue;
            }
            let dr = (self.p[j] - self.r[j]) / aj;
            if dr < delta {
                delta = dr;
                best = j;
            }
        }
        if best == usize::MAX || t + delta > cap {
            let h = cap - t;
            for (rj, &aj) in self.r.iter_mut().zip(a) {
                *rj += aj * h;
            }
            return ClockStep::ReachedCap;
        }
        for (rj, &aj) in self.r.iter_mut().zip(a) {
            *rj += aj * delta;
        }
        self.p[best] += rng.exp1();
        ClockStep::Fired { j: best, dt: delta }
    }
}

/// Exact path on `[t0, t_final]` via the Modified Next Reaction Method.
/// If `a_0(x) = 0` the state is absorbing and time advances directly to
/// the horizon. Exact paths never leave the lattice.
pub fn mnrm_simulate(
    net: &ReactionNetwork,
    x0: &[i64],
    t0: f64,
    t_final: f64,
    rng: &mut PathRng,
) -> PathRecord {
    let j_count = net.num_reactions();
    let mut record = PathRecord::new(net.num_species(), t0, x0);
    let mut x = x0.to_vec();
    let mut t = t0;
    let mut a = vec![0.0; j_count];
    let mut clocks = MnrmClocks::init(j_count, rng);
    while t < t_final {
        net.fill_propensities(&x, &mut a);
        let a0: f64 = a.iter().sum();
        if a0 == 0.0 {
            record.push(t_final, &x, StepKind::Idle, a0);
            break;
        }
        match clocks.step(&a, t, t_final, rng) {
            ClockStep::Fired { j, dt } => {
                t += dt;
                x = apply_reaction(&x, net.stoichiometry(j), 1);
                record.push(t, &x, StepKind::ExactK1, a0);
            }
            ClockStep::ReachedCap => {
                record.push(t_final, &x, StepKind::Idle, a0);
                break;
            }
        }
    }
    record
}

/// Exact path via Gillespie's direct method (SSA); same law as
/// [`mnrm_simulate`] but two uniforms per step. Kept for the work
/// comparison, since SSA is the usual baseline.
pub fn ssa_simulate(
    net: &ReactionNetwork,
    x0: &[i64],
    t0: f64,
    t_final: f64,
    rng: &mut PathRng,
) -> PathRecord {
    let mut record = PathRecord::new(net.num_species(), t0, x0);
    let mut x = x0.to_vec();
    let mut t = t0;
    let mut a = vec![0.0; net.num_reactions()];
    while t < t_final {
        net.fill_propensities(&x, &mut a);
        let a0: f64 = a.iter().sum();
        if a0 == 0.0 {
            record.push(t_final, &x, StepKind::Idle, a0);
            break;
        }
        let tau = rng.exp1() / a0;
        if t + tau > t_final {
            record.push(t_final, &x, StepKind::Idle, a0);
            break;
        }
        let target = rng.uniform() * a0;
        let mut acc = 0.0;
        let mut fired = net.num_reactions() - 1;
        for (j, &aj) in a.iter().enumerate() {
            acc += aj;
            if target < acc {
                fired = j;
                break;
            }
        }
        t += tau;
        x = apply_reaction(&x, net.stoichiometry(fired), 1);
        record.push(t, &x, StepKind::ExactK1, a0);
    }
    record
}
