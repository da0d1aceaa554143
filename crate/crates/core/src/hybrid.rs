//! Single-path hybrid simulation: at every decision point the one-step
//! switching rule picks between an exact MNRM step and a Chernoff
//! tau-leap step based on measured costs; tau-leap steps never cross
//! mesh points. The record keeps everything the dual-weighted
//! estimators and the work model need.

use crate::chernoff::chernoff_tau;
use crate::exact::{ClockStep, MnrmClocks};
use crate::mesh::Mesh;
use crate::network::{apply_reaction, in_lattice, ReactionNetwork};
use crate::poisson;
use crate::rng::PathRng;
use crate::workmodel::MachineConstants;

/// Method tag of one recorded step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    /// Exact step taken without computing `tau_Ch` (cost `C1`).
    ExactK1,
    /// Exact step taken after computing `tau_Ch` (cost `C2`).
    ExactK2,
    /// Tau-leap step with frozen propensities (cost `C3` plus Poisson draws).
    Tl,
    /// Time advance without a firing (absorbing state or horizon
    /// overshoot); not counted as a step.
    Idle,
}

/// One simulated trajectory recorded at its own decision boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    d: usize,
    pub times: Vec<f64>,
    states: Vec<i64>,
    pub steps: Vec<StepKind>,
    pub n_tl: u64,
    pub n_k1: u64,
    pub n_k2: u64,
    /// Tau-leap steps where the Chernoff bound was the binding constraint.
    pub n_tl_chernoff: u64,
    /// Path left the lattice before the final time; the record is
    /// truncated at the last in-lattice decision point.
    pub exit: bool,
    /// Rates `a_j * tau` of every tau-leap Poisson draw on this path.
    pub tl_poisson_rates: Vec<f64>,
    /// Work estimate in seconds, accumulated from the machine constants
    /// when they are available to the generator (0 otherwise).
    pub cost_seconds: f64,
    /// `integral of a_0 dt` along the path (expected SSA step count).
    pub int_a0: f64,
}

impl PathRecord {
    pub fn new(d: usize, t0: f64, x0: &[i64]) -> PathRecord {
        PathRecord {
            d,
            times: vec![t0],
            states: x0.to_vec(),
            steps: Vec::new(),
            n_tl: 0,
            n_k1: 0,
            n_k2: 0,
            n_tl_chernoff: 0,
            exit: false,
            tl_poisson_rates: Vec::new(),
            cost_seconds: 0.0,
            int_a0: 0.0,
        }
    }

    /// Append a step ending at `(t, x)`. `a0` is the total propensity
    /// that was in force over the step (for the SSA-work integral).
    pub fn push(&mut self, t: f64, x: &[i64], kind: StepKind, a0: f64) {
        debug_assert!(t >= self.final_time());
        self.int_a0 += a0 * (t - self.final_time());
        self.times.push(t);
        self.states.extend_from_slice(x);
        self.steps.push(kind);
        match kind {
            StepKind::ExactK1 => self.n_k1 += 1,
            StepKind::ExactK2 => self.n_k2 += 1,
            StepKind::Tl => self.n_tl += 1,
            StepKind::Idle => {}
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn num_points(&self) -> usize {
        self.times.len()
    }

    pub fn num_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn state(&self, k: usize) -> &[i64] {
        &self.states[k * self.d..(k + 1) * self.d]
    }

    pub fn final_state(&self) -> &[i64] {
        self.state(self.num_points() - 1)
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Steps that count toward work: `N_K1 + N_K2 + N_TL`.
    pub fn total_steps_counted(&self) -> u64 {
        self.n_k1 + self.n_k2 + self.n_tl
    }
}

/// Decision of the one-step switching rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision {
    /// Exact step; `tau_Ch` was not computed (`K1/a0 >= T0 - t`).
    MnrmK1,
    /// Exact step after computing `tau_Ch` (`tau_Ch < K2/a0`).
    MnrmK2 { tau_ch: f64 },
    /// Tau-leap step of the given Chernoff size.
    Tl { tau_ch: f64 },
}

/// The one-step switching rule at state `x`, time `t`, with `t_grid` the
/// next mesh point. Requires `a_0(x) > 0`.
pub fn switching_rule(
    net: &ReactionNetwork,
    x: &[i64],
    t: f64,
    t_grid: f64,
    delta: f64,
    machine: &MachineConstants,
) -> Decision {
    let a = net.propensities(x);
    decide(net, x, &a, t, t_grid, delta, machine)
}

/// Same as [`switching_rule`] with precomputed propensities.
pub fn decide(
    net: &ReactionNetwork,
    x: &[i64],
    a: &[f64],
    t: f64,
    t_grid: f64,
    delta: f64,
    machine: &MachineConstants,
) -> Decision {
    let a0: f64 = a.iter().sum();
    debug_assert!(a0 > 0.0, "switching rule needs a_0 > 0");
    if machine.k1 / a0 >= t_grid - t {
        return Decision::MnrmK1;
    }
    let tau_ch = chernoff_tau(net, x, a, delta);
    if tau_ch < machine.k2_given(a, tau_ch.min(t_grid - t)) / a0 {
        Decision::MnrmK2 { tau_ch }
    } else {
        Decision::Tl { tau_ch }
    }
}

/// Generate one hybrid path over the mesh. Exact steps ignore mesh
/// points; tau-leap steps end at `min(next mesh point, t + tau_Ch, T)`.
/// On lattice exit the record is truncated and flagged.
pub fn hybrid_path(
    net: &ReactionNetwork,
    x0: &[i64],
    mesh: &Mesh,
    delta: f64,
    machine: &MachineConstants,
    rng: &mut PathRng,
) -> PathRecord {
    let mut record = PathRecord::new(net.num_species(), 0.0, x0);
    // Per-path setup charge (state and propensity initialization); this
    // is also what keeps the work of a path positive on absorbing
    // models so the sample allocation stays well posed.
    record.cost_seconds += machine.c1_seconds;
    let mut x = x0.to_vec();
    run_hybrid_from(net, &mut record, &mut x, 0.0, mesh, delta, machine, rng);
    record
}

/// Continue a hybrid path in place from `(t, x)` to the mesh end. Also
/// used to finish the surviving leg of a coupled pair single-level.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_hybrid_from(
    net: &ReactionNetwork,
    record: &mut PathRecord,
    x: &mut Vec<i64>,
    t0: f64,
    mesh: &Mesh,
    delta: f64,
    machine: &MachineConstants,
    rng: &mut PathRng,
) {
    let t_final = mesh.t_final();
    let j_count = net.num_reactions();
    let mut a = vec![0.0; j_count];
    let mut clocks: Option<MnrmClocks> = None;
    let mut t = t0;
    while t < t_final {
        net.fill_propensities(x, &mut a);
        let a0: f64 = a.iter().sum();
        if a0 == 0.0 {
            record.push(t_final, x, StepKind::Idle, a0);
            return;
        }
        let t_grid = mesh.next_point_after(t);
        let decision = decide(net, x, &a, t, t_grid, delta, machine);
        let tl_tau = match decision {
            Decision::Tl { tau_ch } => {
                // Guard against a step too small to advance time.
                let h = (t + tau_ch).min(t_grid).min(t_final);
                if h > t {
                    Some((h, tau_ch))
                } else {
                    None
                }
            }
            _ => None,
        };
        match (decision, tl_tau) {
            (Decision::Tl { .. }, Some((h, tau_ch))) => {
                clocks = None;
                let dt = h - t;
                if t + tau_ch < t_grid.min(t_final) {
                    record.n_tl_chernoff += 1;
                }
                record.cost_seconds += machine.c3_seconds;
                let mut next = x.clone();
                for (j, &aj) in a.iter().enumerate().take(j_count) {
                    let lambda = aj * dt;
                    record.tl_poisson_rates.push(lambda);
                    record.cost_seconds += machine.poisson_cost(lambda);
                    let k = poisson::sample(lambda, rng);
                    if k > 0 {
                        next = apply_reaction(&next, net.stoichiometry(j), k);
                    }
                }
                if !in_lattice(&next) {
                    // Work was spent but the step is not recorded; the
                    // record stays truncated at the last lattice state.
                    record.exit = true;
                    return;
                }
                *x = next;
                t = h;
                record.push(t, x, StepKind::Tl, a0);
            }
            (d, _) => {
                // Exact step (both branches, plus the degenerate-leap guard).
                let kind = match d {
                    Decision::MnrmK1 => StepKind::ExactK1,
                    _ => StepKind::ExactK2,
                };
                record.cost_seconds += match kind {
                    StepKind::ExactK1 => machine.c1_seconds,
                    _ => machine.c2_seconds,
                };
                let c = clocks.get_or_insert_with(|| MnrmClocks::init(j_count, rng));
                match c.step(&a, t, t_final, rng) {
                    ClockStep::Fired { j, dt } => {
                        t += dt;
                        *x = apply_reaction(x, net.stoichiometry(j), 1);
                        record.push(t, x, kind, a0);
                    }
                    ClockStep::ReachedCap => {
                        record.push(t_final, x, StepKind::Idle, a0);
                        return;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Model;
    use crate::stats;

    fn machine() -> MachineConstants {
        MachineConstants::synthetic()
    }

    #[test]
    fn switching_rule_k1_branch_short_horizon() {
        // K1/a0 >= T0 - t forces an exact step regardless of tau_Ch.
        let m = Model::decay(100_000, 1.0, 0.5);
        let mach = machine();
        let a0 = 100_000.0;
        let horizon = machine().k1 / a0 * 0.5;
        let d = switching_rule(&m.network, &[100_000], 0.0, horizon, 1e-2, &mach);
        assert_eq!(d, Decision::MnrmK1);
    }

    #[test]
    fn switching_rule_pure_birth_takes_tl() {
        use crate::network::{Propensity, ReactionNetwork};
        let net = ReactionNetwork::new(
            vec!["X".into()],
            vec![vec![1]],
            vec![Propensity::MassAction {
                rate: 50.0,
                reactants: vec![],
            }],
        )
        .unwrap();
        // tau_Ch = +infinity exceeds any K2 threshold.
        let d = switching_rule(&net, &[5], 0.0, 1.0, 1e-2, &machine());
        assert!(matches!(d, Decision::Tl { tau_ch } if tau_ch.is_infinite()));
    }

    #[test]
    fn switching_rule_decay_bulk_is_tl() {
        let m = Model::decay(100_000, 1.0, 0.5);
        let d = switching_rule(&m.network, &[100_000], 0.0, 0.125, 1e-2, &machine());
        assert!(matches!(d, Decision::Tl { .. }), "{d:?}");
    }

    /// As delta shrinks, the Chernoff step collapses (like delta^(1/x))
    /// and the K2 comparison reverts to exact stepping. The collapse is
    /// only representable in f64 for small populations, and the K1
    /// shortcut must not preempt the comparison, so the test uses a
    /// cheap-pre-leap-check cost profile.
    #[test]
    fn tiny_delta_forces_exact_path() {
        let mut mach = machine();
        mach.c3_seconds = 2.0e-10;
        mach.k1 = mach.c3_seconds / mach.c1_seconds;
        let m = Model::decay(10, 1.0, 0.5);
        let mesh = Mesh::uniform(0.5, 4);
        // At a loose bound this state leaps...
        let d = switching_rule(&m.network, &[10], 0.0, 0.125, 1e-2, &mach);
        assert!(matches!(d, Decision::Tl { .. }), "{d:?}");
        // ...and at a tiny bound the whole path becomes exact.
        let mut rng = PathRng::from_seed(5);
        let mut mean_ntl = 0.0;
        let n = 500;
        for _ in 0..n {
            let p = hybrid_path(&m.network, &[10], &mesh, 1e-12, &mach, &mut rng);
            mean_ntl += p.n_tl as f64 / n as f64;
            assert!(!p.exit);
        }
        assert!(mean_ntl < 0.05, "expected no tau-leap steps, got {mean_ntl}");
        // No Poisson draws happen on pure-exact paths.
        let mut rng = PathRng::from_seed(6);
        let p = hybrid_path(&m.network, &[10], &mesh, 1e-12, &mach, &mut rng);
        assert_eq!(rng.poisson_calls, 0);
        assert_eq!(p.n_tl, 0);
    }

    #[test]
    fn absorbing_initial_state() {
        let m = Model::decay(0, 1.0, 0.5);
        let mesh = Mesh::uniform(0.5, 4);
        let mut rng = PathRng::from_seed(7);
        let p = hybrid_path(&m.network, &[0], &mesh, 1e-2, &machine(), &mut rng);
        assert_eq!(p.total_steps_counted(), 0);
        assert!(!p.exit);
        assert_eq!(p.final_time(), 0.5);
    }

    #[test]
    fn tl_steps_end_on_mesh_or_horizon() {
        let m = Model::decay(100_000, 1.0, 0.5);
        let mesh = Mesh::uniform(0.5, 16);
        let mut rng = PathRng::from_seed(8);
        for _ in 0..20 {
            let p = hybrid_path(&m.network, &[100_000], &mesh, 1e-2, &machine(), &mut rng);
            for k in 0..p.num_steps() {
                if p.steps[k] != StepKind::Tl {
                    continue;
                }
                let (t0, t1) = (p.times[k], p.times[k + 1]);
                // No tau-leap step may straddle a mesh point.
                let next = mesh.next_point_after(t0);
                assert!(
                    t1 <= next + 1e-15,
                    "TL step [{t0}, {t1}] crosses mesh point {next}"
                );
            }
            assert_eq!(p.final_time(), 0.5);
        }
    }

    #[test]
    fn replay_is_bit_exact() {
        let m = Model::gene_transcription();
        let mesh = Mesh::uniform(1.0, 8);
        let a = hybrid_path(
            &m.network,
            &m.x0,
            &mesh,
            1e-2,
            &machine(),
            &mut PathRng::from_seed(33),
        );
        let b = hybrid_path(
            &m.network,
            &m.x0,
            &mesh,
            1e-2,
            &machine(),
            &mut PathRng::from_seed(33),
        );
        assert_eq!(a, b);
    }

    /// Endpoint mean over in-lattice paths sits within three standard
    /// errors of the analytic mean corrected by the measured bias.
    #[test]
    fn decay_mean_matches_analytic_minus_bias() {
        let m = Model::decay(100_000, 1.0, 0.5);
        let mesh = Mesh::uniform(0.5, 16); // dt = 2^-5 cells over [0, 0.5]
        let mut rng = PathRng::from_seed(9);
        let mut g = stats::Running::default();
        let mut ei = stats::Running::default();
        let n = 10_000;
        for _ in 0..n {
            let p = hybrid_path(&m.network, &[100_000], &mesh, 1e-2, &machine(), &mut rng);
            if p.exit {
                continue;
            }
            g.push(p.final_state()[0] as f64);
            ei.push(crate::duals::weak_error_path(
                &m.network,
                &p,
                &m.observable,
            ));
        }
        let analytic = 1e5 * (-0.5f64).exp();
        let corrected = g.mean + ei.mean;
        let slack = 3.0 * (g.sem() + ei.sem()) + 1e-3 * analytic;
        assert!(
            (corrected - analytic).abs() < slack,
            "mean {} + EI {} vs {}",
            g.mean,
            ei.mean,
            analytic
        );
        // The bias itself is clearly visible at this resolution.
        assert!(g.mean < analytic, "tau-leap under-estimates the decay mean");
    }

    /// Exit frequency obeys the per-path bound `delta * E[N_TL]` up to a
    /// 20% margin, at two deltas.
    #[test]
    fn exit_probability_bound_per_path() {
        let m = Model::decay(20, 1.0, 0.5);
        let mesh = Mesh::uniform(0.5, 8);
        for &delta in &[1e-2, 1e-3] {
            let mut rng = PathRng::from_seed(10);
            let n = 100_000;
            let mut exits = 0u64;
            let mut ntl = 0u64;
            for _ in 0..n {
                let p = hybrid_path(&m.network, &[20], &mesh, delta, &machine(), &mut rng);
                ntl += p.n_tl;
                if p.exit {
                    exits += 1;
                }
            }
            let freq = exits as f64 / n as f64;
            let bound = 1.2 * delta * (ntl as f64 / n as f64);
            assert!(
                freq <= bound + 3.0 * (delta / n as f64).sqrt(),
                "delta {delta}: freq {freq} vs bound {bound}"
            );
        }
    }
}
