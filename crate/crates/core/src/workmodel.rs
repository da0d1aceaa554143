//! Phase I: measurement of the machine-dependent cost constants that the
//! switching rule and the work optimizer consume. `C1`/`C2` are the two
//! exact-step branches, `C3` the Chernoff step-size computation, `C_P`
//! the Poisson-sampling cost curve, and `C*` the unit SSA step cost.
//! All constants are wall-clock seconds on the calibrated host.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chernoff::chernoff_tau;
use crate::exact::{ClockStep, MnrmClocks};
use crate::network::{apply_reaction, mean_field, ReactionNetwork, MEAN_FIELD_CAP};
use crate::poisson;
use crate::rng::{SeedSequence, StreamDomain};

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("model has no state with positive total propensity; nothing to time")]
    DegenerateModel,
    #[error("timer resolution too coarse even after growing batches")]
    TimerResolution,
    #[error("machine profile was calibrated on a different host ({profile}) than this one ({host})")]
    FingerprintMismatch { profile: String, host: String },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("profile parse: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] crate::network::ModelError),
}

/// Piecewise-affine Poisson-cost curve with a fitted breakpoint:
/// `C_P(l) = base + slope_low * min(l, l0) + slope_high * max(l - l0, 0)`.
/// Slopes are constrained nonnegative so the curve is nondecreasing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoissonCostFit {
    pub lambda0: f64,
    pub base_seconds: f64,
    pub slope_low: f64,
    pub slope_high: f64,
    pub r_squared: f64,
    /// `(lambda, measured seconds per draw)` audit trail.
    pub grid: Vec<(f64, f64)>,
}

impl PoissonCostFit {
    pub fn eval(&self, lambda: f64) -> f64 {
        self.base_seconds
            + self.slope_low * lambda.min(self.lambda0)
            + self.slope_high * (lambda - self.lambda0).max(0.0)
    }

    /// Least squares over breakpoint candidates taken from the grid.
    fn fit(grid: &[(f64, f64)]) -> PoissonCostFit {
        let mut best: Option<PoissonCostFit> = None;
        for &(cand, _) in grid.iter().filter(|&&(l, _)| l > 0.0) {
            let fit = Self::fit_with_breakpoint(grid, cand);
            let better = match &best {
                None => true,
                Some(b) => fit.r_squared > b.r_squared,
            };
            if better {
                best = Some(fit);
            }
        }
        best.expect("cost grid is nonempty")
    }

    fn fit_with_breakpoint(grid: &[(f64, f64)], lambda0: f64) -> PoissonCostFit {
        // Regressors: 1, min(l, l0), max(l - l0, 0). Solve the 3x3 normal
        // equations; clamp negative slopes to zero and refit the base.
        let rows: Vec<[f64; 3]> = grid
            .iter()
            .map(|&(l, _)| [1.0, l.min(lambda0), (l - lambda0).max(0.0)])
            .collect();
        let y: Vec<f64> = grid.iter().map(|&(_, c)| c).collect();
        let mut ata = [[0.0; 3]; 3];
        let mut aty = [0.0; 3];
        for (r, &yi) in rows.iter().zip(&y) {
            for i in 0..3 {
                aty[i] += r[i] * yi;
                for k in 0..3 {
                    ata[i][k] += r[i] * r[k];
                }
            }
        }
        let mut beta = solve3(ata, aty).unwrap_or([0.0; 3]);
        beta[1] = beta[1].max(0.0);
        beta[2] = beta[2].max(0.0);
        // Re-center the base after clamping.
        let resid_mean = rows
            .iter()
            .zip(&y)
            .map(|(r, &yi)| yi - beta[1] * r[1] - beta[2] * r[2])
            .sum::<f64>()
            / y.len() as f64;
        beta[0] = resid_mean.max(0.0);
        let fitted: Vec<f64> = rows
            .iter()
            .map(|r| beta[0] + beta[1] * r[1] + beta[2] * r[2])
            .collect();
        let my = y.iter().sum::<f64>() / y.len() as f64;
        let ss_tot: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
        let ss_res: f64 = y
            .iter()
            .zip(&fitted)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
        PoissonCostFit {
            lambda0,
            base_seconds: beta[0],
            slope_low: beta[1],
            slope_high: beta[2],
            r_squared,
            grid: grid.to_vec(),
        }
    }
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        let pivot_row = a[col];
        for row in 0..3 {
            if row == col {
                continue;
            }
            let f = a[row][col] / pivot_row[col];
            for (k, &pv) in pivot_row.iter().enumerate().skip(col) {
                a[row][k] -= f * pv;
            }
            b[row] -= f * b[col];
        }
    }
    Some([b[0] / a[0][0], b[1] / a[1][1], b[2] / a[2][2]])
}

/// Machine- and model-dependent cost constants (Phase I output).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MachineConstants {
    pub schema_version: u32,
    /// Seconds per exact step taken without computing `tau_Ch`.
    pub c1_seconds: f64,
    /// Seconds per exact step taken after computing `tau_Ch`.
    pub c2_seconds: f64,
    /// Seconds per `tau_Ch` computation.
    pub c3_seconds: f64,
    /// Seconds per plain SSA step.
    pub c_star_seconds: f64,
    /// `K1 = C3 / C1`: cost of the pre-leap check in exact-step units.
    pub k1: f64,
    pub poisson_cost: PoissonCostFit,
    pub fingerprint: String,
    pub model_hash: String,
    pub calibrated_unix_seconds: u64,
    pub repetitions: u64,
}

impl MachineConstants {
    /// Fitted Poisson-draw cost at rate `lambda` (seconds per call; a
    /// zero-rate call still costs the intercept).
    #[inline]
    pub fn poisson_cost(&self, lambda: f64) -> f64 {
        self.poisson_cost.eval(lambda)
    }

    /// `K2(x, delta)` given propensities and an already computed
    /// `tau_Ch`: cost of a Chernoff tau-leap step over the cost of an
    /// exact step plus the pre-leap check.
    pub fn k2_given(&self, a: &[f64], tau_ch: f64) -> f64 {
        let tl: f64 = self.c3_seconds
            + a.iter().map(|&aj| self.poisson_cost(aj * tau_ch)).sum::<f64>();
        tl / (self.c1_seconds + self.c3_seconds)
    }

    /// Synthetic constants for tests that exercise decision logic
    /// without timing the host.
    pub fn synthetic() -> MachineConstants {
        MachineConstants {
            schema_version: 1,
            c1_seconds: 2.0e-8,
            c2_seconds: 9.0e-8,
            c3_seconds: 7.0e-8,
            c_star_seconds: 2.0e-8,
            k1: 3.5,
            poisson_cost: PoissonCostFit {
                lambda0: 10.0,
                base_seconds: 2.0e-8,
                slope_low: 2.0e-9,
                slope_high: 0.0,
                r_squared: 1.0,
                grid: vec![],
            },
            fingerprint: "synthetic".into(),
            model_hash: String::new(),
            calibrated_unix_seconds: 0,
            repetitions: 0,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }

    pub fn write_file(&self, path: &std::path::Path) -> Result<(), CalibrationError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn read_file(path: &std::path::Path) -> Result<MachineConstants, CalibrationError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Load a profile and insist it was calibrated on this host.
    pub fn read_file_checked(path: &std::path::Path) -> Result<MachineConstants, CalibrationError> {
        let profile = Self::read_file(path)?;
        let host = host_fingerprint();
        if profile.fingerprint != host && profile.fingerprint != "synthetic" {
            return Err(CalibrationError::FingerprintMismatch {
                profile: profile.fingerprint,
                host,
            });
        }
        Ok(profile)
    }
}

/// `K2(x, delta)`: computes `tau_Ch` and delegates to
/// [`MachineConstants::k2_given`].
pub fn k2(
    net: &ReactionNetwork,
    x: &[i64],
    delta: f64,
    machine: &MachineConstants,
) -> f64 {
    let a = net.propensities(x);
    let tau_ch = chernoff_tau(net, x, &a, delta);
    let tau = if tau_ch.is_finite() { tau_ch } else { 0.0 };
    machine.k2_given(&a, tau)
}

/// Stable host identifier: OS, architecture, CPU model and core count.
pub fn host_fingerprint() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|text| {
            text.lines()
                .find(|l| l.starts_with("model name"))
                .map(|l| l.split(':').nth(1).unwrap_or("").trim().to_string())
        })
        .unwrap_or_else(|| "unknown-cpu".into());
    let cores = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    format!(
        "{}-{}-{}-{}cores",
        std::env::consts::OS,
        std::env::consts::ARCH,
        cpu.replace(' ', "_"),
        cores
    )
}

/// Minimum wall time per timed batch; far above timer resolution and
/// long enough to average out scheduler noise.
const MIN_BATCH_SECONDS: f64 = 8e-3;

/// Time `op` per invocation, growing the batch until the measurement is
/// comfortably above clock resolution. One warm-up batch is discarded.
fn time_per_op<F: FnMut()>(reps: u64, mut op: F) -> Result<f64, CalibrationError> {
    let mut batch = reps.max(1);
    for _ in 0..12 {
        for _ in 0..batch.min(1000) {
            op(); // warm-up
        }
        let start = Instant::now();
        for _ in 0..batch {
            op();
        }
        let elapsed = start.elapsed().as_secs_f64();
        if elapsed >= MIN_BATCH_SECONDS {
            return Ok(elapsed / batch as f64);
        }
        batch *= 4;
    }
    Err(CalibrationError::TimerResolution)
}

/// Best of three timing passes; wall-clock noise (scheduling, frequency
/// ramps) is strictly additive in this setting.
fn best_of_three<F: FnMut() -> Result<f64, CalibrationError>>(
    mut run: F,
) -> Result<f64, CalibrationError> {
    let mut best = f64::INFINITY;
    for _ in 0..3 {
        best = best.min(run()?);
    }
    Ok(best)
}

/// Busy loop that lets frequency scaling settle before any timing.
fn warm_up_cpu() {
    let start = Instant::now();
    let mut acc = 0u64;
    while start.elapsed().as_secs_f64() < 0.1 {
        for k in 0..10_000u64 {
            acc = acc.wrapping_mul(6_364_136_223_846_793_005).wrapping_add(k);
        }
        std::hint::black_box(acc);
    }
}

/// Representative in-lattice states along the mean-field path, used as
/// benchmark inputs. States with zero total propensity are skipped.
fn bench_states(net: &ReactionNetwork, x0: &[i64], t_final: f64) -> Vec<Vec<i64>> {
    let x0f: Vec<f64> = x0.iter().map(|&v| v as f64).collect();
    let mut states = Vec::new();
    if let Ok(traj) = mean_field(net, &x0f, t_final, t_final / 512.0, MEAN_FIELD_CAP) {
        let stride = traj.len().div_ceil(16).max(1);
        for (_, x) in traj.iter().step_by(stride) {
            let s: Vec<i64> = x.iter().map(|&v| v.round().max(0.0) as i64).collect();
            if net.total_propensity(&s) > 0.0 && !states.contains(&s) {
                states.push(s);
            }
        }
    }
    if net.total_propensity(x0) > 0.0 && !states.contains(&x0.to_vec()) {
        states.push(x0.to_vec());
    }
    states
}

/// Measure all Phase I constants for `net` on this host. `repetitions`
/// is the per-kernel batch floor (at least 1e4 for stable numbers).
pub fn calibrate_machine(
    net: &ReactionNetwork,
    x0: &[i64],
    t_final: f64,
    repetitions: u64,
    model_hash: &str,
    seed: u64,
) -> Result<MachineConstants, CalibrationError> {
    let states = bench_states(net, x0, t_final);
    if states.is_empty() {
        return Err(CalibrationError::DegenerateModel);
    }
    let seq = SeedSequence::new(seed);
    let mut rng = seq.path_rng(StreamDomain::MachineBench, 0);
    warm_up_cpu();
    let j_count = net.num_reactions();
    let delta_bench = 0.01;

    // C1: exact steps with persistent clocks, no pre-leap check.
    let c1 = {
        let mut idx = 0usize;
        let mut x = states[0].clone();
        let mut a = vec![0.0; j_count];
        let mut clocks = MnrmClocks::init(j_count, &mut rng);
        let mut budget = 0u32;
        best_of_three(|| {
            time_per_op(repetitions, || {
                if budget == 0 {
                    x = states[idx % states.len()].clone();
                    idx += 1;
                    clocks = MnrmClocks::init(j_count, &mut rng);
                    budget = 64;
                }
                budget -= 1;
                net.fill_propensities(&x, &mut a);
                if a.iter().sum::<f64>() == 0.0 {
                    budget = 0;
                    return;
                }
                match clocks.step(&a, 0.0, f64::INFINITY, &mut rng) {
                    ClockStep::Fired { j, .. } => {
                        x = apply_reaction(&x, net.stoichiometry(j), 1);
                    }
                    ClockStep::ReachedCap => budget = 0,
                }
            })
        })?
    };

    // C3: the Chernoff step-size computation alone.
    let c3 = {
        let mut idx = 0usize;
        let props: Vec<Vec<f64>> = states.iter().map(|s| net.propensities(s)).collect();
        best_of_three(|| {
            time_per_op(repetitions, || {
                let k = idx % states.len();
                idx += 1;
                std::hint::black_box(chernoff_tau(net, &states[k], &props[k], delta_bench));
            })
        })?
    };

    // C2: pre-leap check followed by one exact step (the other MNRM
    // branch of the switching rule).
    let c2 = {
        let mut idx = 0usize;
        let mut x = states[0].clone();
        let mut a = vec![0.0; j_count];
        let mut clocks = MnrmClocks::init(j_count, &mut rng);
        let mut budget = 0u32;
        best_of_three(|| {
            time_per_op(repetitions, || {
                if budget == 0 {
                    x = states[idx % states.len()].clone();
                    idx += 1;
                    clocks = MnrmClocks::init(j_count, &mut rng);
                    budget = 64;
                }
                budget -= 1;
                net.fill_propensities(&x, &mut a);
                if a.iter().sum::<f64>() == 0.0 {
                    budget = 0;
                    return;
                }
                std::hint::black_box(chernoff_tau(net, &x, &a, delta_bench));
                match clocks.step(&a, 0.0, f64::INFINITY, &mut rng) {
                    ClockStep::Fired { j, .. } => {
                        x = apply_reaction(&x, net.stoichiometry(j), 1);
                    }
                    ClockStep::ReachedCap => budget = 0,
                }
            })
        })?
    };

    // C*: plain SSA steps (exponential waiting time plus linear channel
    // selection), the baseline's unit cost.
    let c_star = {
        let mut idx = 0usize;
        let mut x = states[0].clone();
        let mut a = vec![0.0; j_count];
        let mut budget = 0u32;
        best_of_three(|| {
            time_per_op(repetitions, || {
                if budget == 0 {
                    x = states[idx % states.len()].clone();
                    idx += 1;
                    budget = 64;
                }
                budget -= 1;
                net.fill_propensities(&x, &mut a);
                let a0: f64 = a.iter().sum();
                if a0 == 0.0 {
                    budget = 0;
                    return;
                }
                std::hint::black_box(rng.exp1() / a0);
                let target = rng.uniform() * a0;
                let mut acc = 0.0;
                let mut fired = j_count - 1;
                for (j, &aj) in a.iter().enumerate() {
                    acc += aj;
                    if target < acc {
                        fired = j;
                        break;
                    }
                }
                x = apply_reaction(&x, net.stoichiometry(fired), 1);
            })
        })?
    };

    // C_P over a rate grid spanning both sampler regimes; noise in this
    // kind of microbenchmark is strictly additive, so take the best of
    // three runs per point.
    let lambda_grid = [
        0.0, 0.1, 0.3, 1.0, 2.0, 4.0, 7.0, 10.0, 15.0, 25.0, 50.0, 100.0, 300.0, 1000.0, 3000.0,
        10_000.0, 30_000.0,
    ];
    let mut grid = Vec::with_capacity(lambda_grid.len());
    for &lambda in &lambda_grid {
        let best = best_of_three(|| {
            time_per_op(repetitions, || {
                std::hint::black_box(poisson::sample(lambda, &mut rng));
            })
        })?;
        grid.push((lambda, best));
    }
    let poisson_fit = PoissonCostFit::fit(&grid);

    Ok(MachineConstants {
        schema_version: 1,
        c1_seconds: c1,
        c2_seconds: c2,
        c3_seconds: c3,
        c_star_seconds: c_star,
        k1: c3 / c1,
        poisson_cost: poisson_fit,
        fingerprint: host_fingerprint(),
        model_hash: model_hash.to_string(),
        calibrated_unix_seconds: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        repetitions,
    })
}
