//! Acceptance suite: every criterion runs sequentially (so wall-clock
//! measurements are not contaminated by concurrent tests) and prints
//! one pass/fail line; the driver asserts on the collected results at
//! the end. Tolerances are pinned in the check functions.

use std::sync::OnceLock;

use rayon::prelude::*;

use tauhybrid::chernoff::chernoff_tau;
use tauhybrid::coupling::{couple_poisson, coupled_hybrid_path};
use tauhybrid::duals::path_dual_stats;
use tauhybrid::exact::{mnrm_simulate, ssa_simulate};
use tauhybrid::hybrid::hybrid_path;
use tauhybrid::mesh::Mesh;
use tauhybrid::mlmc::{calibrate, estimate, kkt_allocate_rhs, ssa_benchmark, LevelPlan, MlmcConfig};
use tauhybrid::network::{apply_reaction, in_lattice, Model};
use tauhybrid::oracle::{decay_exact_mean, mc_variance_oracle};
use tauhybrid::poisson;
use tauhybrid::rng::{PathRng, SeedSequence};
use tauhybrid::stats;
use tauhybrid::workmodel::{calibrate_machine, MachineConstants};

struct Outcome {
    criterion: u32,
    pass: bool,
    detail: String,
}

fn decay_machine() -> &'static MachineConstants {
    static M: OnceLock<MachineConstants> = OnceLock::new();
    M.get_or_init(|| {
        let m = Model::decay(100_000, 1.0, 0.5);
        calibrate_machine(&m.network, &m.x0, m.t_final, 10_000, "decay", 7)
            .expect("phase I on decay")
    })
}

fn gene_machine() -> &'static MachineConstants {
    static M: OnceLock<MachineConstants> = OnceLock::new();
    M.get_or_init(|| {
        let m = Model::gene_transcription();
        calibrate_machine(&m.network, &m.x0, m.t_final, 10_000, "gene", 7)
            .expect("phase I on gene")
    })
}

/// Calibrated decay plans over the tolerance grid shared by the
/// complexity and hierarchy-depth criteria.
fn decay_plans() -> &'static Vec<(f64, LevelPlan)> {
    static P: OnceLock<Vec<(f64, LevelPlan)>> = OnceLock::new();
    P.get_or_init(|| {
        let m = Model::decay(100_000, 1.0, 0.5);
        let mach = decay_machine();
        [4e-2, 2e-2, 1e-2, 5e-3, 3.13e-3]
            .iter()
            .map(|&tol| {
                let cfg = MlmcConfig::new(tol);
                let plan = calibrate(&m, mach, &cfg, SeedSequence::new(31), "decay")
                    .expect("decay calibration");
                (tol, plan)
            })
            .collect()
    })
}

/// Criterion 1: 100 independent estimation runs on the decay model at
/// relative TOL 1e-2 land within TOL of the analytic mean in >= 95.
fn criterion_01() -> Outcome {
    let m = Model::decay(100_000, 1.0, 0.5);
    let mach = decay_machine();
    let tol = 1e-2;
    let exact = decay_exact_mean(1e5, 1.0, 0.5);
    let cfg = MlmcConfig::new(tol);
    let mut hits = 0u32;
    let mut runs = 0u32;
    for cal_seed in [101u64, 102, 103, 104] {
        let plan = calibrate(&m, mach, &cfg, SeedSequence::new(cal_seed), "decay").unwrap();
        let results: Vec<f64> = (0..25u64)
            .into_par_iter()
            .map(|k| {
                let seq = SeedSequence::new(10_000 + cal_seed * 100 + k);
                estimate(&m, &plan, mach, &cfg, seq).unwrap().estimate
            })
            .collect();
        for est in results {
            runs += 1;
            if (est - exact).abs() / exact <= tol {
                hits += 1;
            }
        }
    }
    Outcome {
        criterion: 1,
        pass: hits >= 95 && runs == 100,
        detail: format!("{hits}/{runs} runs within relative {tol}"),
    }
}

/// Criterion 2: log-log slope of measured estimation runtime against
/// TOL over {4e-2, 2e-2, 1e-2, 5e-3} is -2 +- 0.3.
///
/// On this model and tolerance grid the statistical work (the TOL^-2
/// term) is negligible because CV(g(X(T))) ~ 2.5e-3, so the sample
/// counts pin at one almost everywhere and runtime is dominated by the
/// hierarchy depth, which scales like TOL^-1. The criterion is asserted
/// as specified; see the analysis in the failure message.
fn criterion_02() -> Outcome {
    let m = Model::decay(100_000, 1.0, 0.5);
    let mach = decay_machine();
    let reps = 25u64;
    let mut log_tol = Vec::new();
    let mut log_time = Vec::new();
    let mut times = Vec::new();
    for (tol, plan) in decay_plans().iter().take(4) {
        let cfg = MlmcConfig::new(*tol);
        let mut runs: Vec<f64> = (0..reps)
            .map(|k| {
                let seq = SeedSequence::new(40_000 + k);
                estimate(&m, plan, mach, &cfg, seq).unwrap().runtime_seconds
            })
            .collect();
        // Median per tolerance: scheduler spikes on small boxes inflate
        // individual runs by far more than the quantity under test.
        runs.sort_by(f64::total_cmp);
        let median = runs[runs.len() / 2];
        times.push(median);
        log_tol.push(tol.ln());
        log_time.push(median.ln());
    }
    let (_, slope, _) = stats::linear_fit(&log_tol, &log_time);
    Outcome {
        criterion: 2,
        pass: (-2.3..=-1.7).contains(&slope),
        detail: format!(
            "runtime slope {slope:.2} (target -2 +- 0.3); median runtimes {times:?}; \
             at these tolerances the decay model's statistical work is negligible \
             (CV(g) ~ 2.5e-3, sample counts pin at 1) and measured runtime is \
             depth-dominated (~TOL^-1) - the TOL^-2 regime starts below ~1e-3"
        ),
    }
}

/// Criterion 3: coupled Poisson difference variance equals |l1 - l2|
/// within four standard errors of the sample-variance estimator,
/// 1e6 draws per pair over [0, 50]^2.
fn criterion_03() -> Outcome {
    let mut pairs = vec![(0.0, 0.0), (50.0, 50.0), (0.0, 50.0), (13.7, 13.7)];
    let mut state = 0x9e3779b97f4a7c15u64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 * 50.0
    };
    for _ in 0..8 {
        pairs.push((next(), next()));
    }
    let n = 1_000_000usize;
    let failures: Vec<String> = pairs
        .par_iter()
        .enumerate()
        .filter_map(|(i, &(l1, l2))| {
            let mut rng = PathRng::from_seed(7_000 + i as u64);
            let diffs: Vec<f64> = (0..n)
                .map(|_| {
                    let (p1, p2) = couple_poisson(l1, l2, &mut rng);
                    p1 as f64 - p2 as f64
                })
                .collect();
            let v = stats::variance(&diffs);
            let se = stats::variance_of_sample_variance(&diffs).sqrt();
            let gap = (v - (l1 - l2).abs()).abs();
            (gap > 4.0 * se + 1e-12)
                .then(|| format!("({l1:.2},{l2:.2}): var {v:.4} vs {:.4}", (l1 - l2).abs()))
        })
        .collect();
    Outcome {
        criterion: 3,
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("{} pairs checked at 1e6 draws", pairs.len())
        } else {
            format!("failed pairs: {failures:?}")
        },
    }
}

/// States visited by exact gene-model paths at which the Chernoff bound
/// is binding (finite positive tau at the given delta).
fn gene_boundary_states(count: usize, delta: f64) -> Vec<Vec<i64>> {
    let gene = Model::gene_transcription();
    let mut states: Vec<Vec<i64>> = Vec::new();
    for seed in 0..40u64 {
        let mut rng = PathRng::from_seed(3_000 + seed);
        let path = mnrm_simulate(&gene.network, &gene.x0, 0.0, 0.06, &mut rng);
        let stride = path.num_points() / 25 + 1;
        let mut k = 0;
        while k < path.num_points() {
            let s = path.state(k).to_vec();
            let a = gene.network.propensities(&s);
            if a.iter().sum::<f64>() > 0.0 {
                let tau = chernoff_tau(&gene.network, &s, &a, delta);
                if tau.is_finite() && tau > 0.0 && !states.contains(&s) {
                    states.push(s);
                }
            }
            k += stride;
        }
        if states.len() >= count {
            break;
        }
    }
    states.truncate(count);
    states
}

/// Criterion 4: one-step exit frequency over 1e6 leaps of size
/// chernoff_tau stays below delta + 3 sqrt(delta/1e6), for 20 sampled
/// states of each bundled model and delta in {1e-2, 1e-3}.
fn criterion_04() -> Outcome {
    let decay = Model::decay(100_000, 1.0, 0.5);
    let decay_states: Vec<Vec<i64>> = (0..20)
        .map(|k| vec![(10f64.powf(0.35 + 4.9 * k as f64 / 19.0)).round() as i64])
        .collect();
    let gene = Model::gene_transcription();
    let gene_states = gene_boundary_states(20, 1e-3);
    if gene_states.len() < 20 {
        return Outcome {
            criterion: 4,
            pass: false,
            detail: format!("only {} usable gene states", gene_states.len()),
        };
    }
    let n = 1_000_000u64;
    let mut checked = 0u32;
    let mut vacuous = 0u32;
    let mut worst: f64 = 0.0;
    let mut failed = Vec::new();
    for (model, states) in [(&decay, &decay_states), (&gene, &gene_states)] {
        for &delta in &[1e-2, 1e-3] {
            let results: Vec<Option<(f64, f64)>> = states
                .par_iter()
                .enumerate()
                .map(|(i, x)| {
                    let a = model.network.propensities(x);
                    if a.iter().sum::<f64>() == 0.0 {
                        return None;
                    }
                    let tau = chernoff_tau(&model.network, x, &a, delta);
                    if !(tau.is_finite() && tau > 0.0) {
                        return None;
                    }
                    let mut rng = PathRng::from_seed(9_000 + i as u64 + (delta * 1e6) as u64);
                    let mut exits = 0u64;
                    for _ in 0..n {
                        let mut y = x.clone();
                        for (j, &aj) in a.iter().enumerate() {
                            let k = poisson::sample(aj * tau, &mut rng);
                            if k > 0 {
                                y = apply_reaction(&y, model.network.stoichiometry(j), k);
                            }
                        }
                        if !in_lattice(&y) {
                            exits += 1;
                        }
                    }
                    Some((exits as f64 / n as f64, delta))
                })
                .collect();
            for r in results {
                match r {
                    Some((freq, delta)) => {
                        checked += 1;
                        let bound = delta + 3.0 * (delta / n as f64).sqrt();
                        worst = worst.max(freq / bound);
                        if freq > bound {
                            failed.push(format!("freq {freq:.2e} > bound {bound:.2e}"));
                        }
                    }
                    None => vacuous += 1,
                }
            }
        }
    }
    Outcome {
        criterion: 4,
        pass: failed.is_empty() && checked >= 40,
        detail: format!(
            "{checked} binding (state, delta) pairs ({vacuous} vacuous), worst freq/bound {worst:.3}{}",
            if failed.is_empty() {
                String::new()
            } else {
                format!("; violations {failed:?}")
            }
        ),
    }
}

/// Criterion 5: dual-weighted level-variance estimator within
/// [0.8, 1.2] of the Monte Carlo oracle down to dt = 2^-8, with
/// strictly smaller estimator variance than direct sampling at M = 1e3.
fn criterion_05() -> Outcome {
    let m = Model::decay(100_000, 1.0, 0.5);
    let mach = MachineConstants::synthetic();
    let delta = 1e-2;
    let mut ratios = Vec::new();
    let mut ratio_fail = false;
    for k in [3u32, 4, 5, 6, 7] {
        let coarse = Mesh::uniform(0.5, 1 << k);
        let fine = coarse.refine(2);
        let (se, sv): (Vec<f64>, Vec<f64>) = (0..4000u64)
            .into_par_iter()
            .filter_map(|i| {
                let mut rng = PathRng::from_seed(20_000 + u64::from(k) * 10_000 + i);
                let p = hybrid_path(&m.network, &m.x0, &coarse, delta, &mach, &mut rng);
                (!p.exit).then(|| {
                    let d = path_dual_stats(&m.network, &p, &m.observable, 10.0);
                    (d.s_e, d.s_v)
                })
            })
            .unzip();
        let vhat = stats::variance(&se) + stats::mean(&sv);
        let mut rng = PathRng::from_seed(30_000 + u64::from(k));
        let (mc, _) = mc_variance_oracle(
            |r| {
                let pair =
                    coupled_hybrid_path(&m.network, &m.x0, &coarse, &fine, delta, delta, &mach, r);
                if pair.coarse.exit || pair.fine.exit {
                    0.0
                } else {
                    pair.fine.final_state()[0] as f64 - pair.coarse.final_state()[0] as f64
                }
            },
            0.05,
            1 << 16,
            &mut rng,
        );
        let ratio = vhat / mc;
        ratio_fail |= !(0.8..=1.2).contains(&ratio);
        ratios.push(format!("2^-{}:{ratio:.2}", k + 1));
    }
    // Estimator-variance comparison at the deepest pair, equal M = 1e3.
    let coarse = Mesh::uniform(0.5, 128);
    let fine = coarse.refine(2);
    let reps: Vec<(f64, f64)> = (0..20u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = PathRng::from_seed(60_000 + r);
            let mut se = Vec::new();
            let mut sv = Vec::new();
            for _ in 0..1000 {
                let p = hybrid_path(&m.network, &m.x0, &coarse, delta, &mach, &mut rng);
                if !p.exit {
                    let d = path_dual_stats(&m.network, &p, &m.observable, 10.0);
                    se.push(d.s_e);
                    sv.push(d.s_v);
                }
            }
            let vhat = stats::variance(&se) + stats::mean(&sv);
            let mut diffs = Vec::new();
            for _ in 0..1000 {
                let pair = coupled_hybrid_path(
                    &m.network, &m.x0, &coarse, &fine, delta, delta, &mach, &mut rng,
                );
                if !pair.coarse.exit && !pair.fine.exit {
                    diffs.push(
                        pair.fine.final_state()[0] as f64 - pair.coarse.final_state()[0] as f64,
                    );
                }
            }
            (vhat, stats::variance(&diffs))
        })
        .collect();
    let var_vhat = stats::variance(&reps.iter().map(|r| r.0).collect::<Vec<_>>());
    let var_direct = stats::variance(&reps.iter().map(|r| r.1).collect::<Vec<_>>());
    let pass = !ratio_fail && var_vhat < var_direct;
    Outcome {
        criterion: 5,
        pass,
        detail: format!(
            "vhat/MC ratios {ratios:?}; Var(vhat) {var_vhat:.3e} vs Var(direct) {var_direct:.3e} at M=1e3"
        ),
    }
}

/// Criterion 6: the ensemble-mean discretization-error estimate halves
/// (within 10%) when dt halves, across four consecutive levels.
fn criterion_06() -> Outcome {
    let m = Model::decay(100_000, 1.0, 0.5);
    let mach = MachineConstants::synthetic();
    let mut means = Vec::new();
    for k in [4u32, 5, 6, 7] {
        let mesh = Mesh::uniform(0.5, 1 << k);
        let eis: Vec<f64> = (0..4000u64)
            .into_par_iter()
            .filter_map(|i| {
                let mut rng = PathRng::from_seed(70_000 + u64::from(k) * 10_000 + i);
                let p = hybrid_path(&m.network, &m.x0, &mesh, 1e-2, &mach, &mut rng);
                (!p.exit).then(|| path_dual_stats(&m.network, &p, &m.observable, 10.0).e_i)
            })
            .collect();
        means.push(stats::mean(&eis));
    }
    let mut detail = String::new();
    let mut pass = true;
    for w in means.windows(2) {
        let ratio = w[0] / w[1];
        detail.push_str(&format!("{ratio:.3} "));
        pass &= (1.8..=2.2).contains(&ratio);
    }
    Outcome {
        criterion: 6,
        pass,
        detail: format!("halving ratios: {detail}"),
    }
}

/// Criterion 7: level-1 mean and variance agree between the fine legs
/// of (0,1) pairs and the coarse legs of (1,2) pairs within joint
/// three-sigma bounds.
fn criterion_07() -> Outcome {
    let m = Model::decay(100_000, 1.0, 0.5);
    let mach = MachineConstants::synthetic();
    let mesh0 = Mesh::uniform(0.5, 8);
    let mesh1 = mesh0.refine(2);
    let mesh2 = mesh1.refine(2);
    let n = 20_000u64;
    let delta = 1e-2;
    let fine_legs: Vec<f64> = (0..n)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = PathRng::from_seed(80_000 + i);
            let pair =
                coupled_hybrid_path(&m.network, &m.x0, &mesh0, &mesh1, delta, delta, &mach, &mut rng);
            (!pair.fine.exit).then(|| pair.fine.final_state()[0] as f64)
        })
        .collect();
    let coarse_legs: Vec<f64> = (0..n)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = PathRng::from_seed(90_000 + i);
            let pair =
                coupled_hybrid_path(&m.network, &m.x0, &mesh1, &mesh2, delta, delta, &mach, &mut rng);
            (!pair.coarse.exit).then(|| pair.coarse.final_state()[0] as f64)
        })
        .collect();
    let mean_gap = (stats::mean(&fine_legs) - stats::mean(&coarse_legs)).abs();
    let mean_sigma = ((stats::variance(&fine_legs) / fine_legs.len() as f64)
        + (stats::variance(&coarse_legs) / coarse_legs.len() as f64))
        .sqrt();
    let var_gap = (stats::variance(&fine_legs) - stats::variance(&coarse_legs)).abs();
    let var_sigma = (stats::variance_of_sample_variance(&fine_legs)
        + stats::variance_of_sample_variance(&coarse_legs))
    .sqrt();
    Outcome {
        criterion: 7,
        pass: mean_gap <= 3.0 * mean_sigma && var_gap <= 3.0 * var_sigma,
        detail: format!(
            "mean gap {mean_gap:.2} vs 3s {:.2}; var gap {var_gap:.1} vs 3s {:.1}",
            3.0 * mean_sigma,
            3.0 * var_sigma
        ),
    }
}

/// Criterion 8: the greedy allocator matches the closed-form Lagrangian
/// solution on interior instances (relative work gap < 1e-9) and the
/// brute-force pinning-pattern optimum when the lower bound binds.
fn criterion_08() -> Outcome {
    let mut state = 0x243f6a8885a308d3u64;
    let mut rnd = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut worst_interior: f64 = 0.0;
    for i in 0..100 {
        let levels = 2 + (rnd() * 5.0) as usize;
        let mut psi = Vec::new();
        let mut v = Vec::new();
        for l in 0..levels {
            psi.push((0.5 + rnd()) * (1.7f64).powi(l as i32));
            v.push((0.5 + rnd()) * (0.45f64).powi(l as i32));
        }
        let s: f64 = psi.iter().zip(&v).map(|(p, vv)| (p * vv).sqrt()).sum();
        let min_ratio = psi
            .iter()
            .zip(&v)
            .map(|(p, vv)| (vv / p).sqrt())
            .fold(f64::INFINITY, f64::min);
        let rhs = s * min_ratio / 4.0;
        let m = kkt_allocate_rhs(&psi, &v, rhs);
        let q = s / rhs;
        let work: f64 = psi.iter().zip(&m).map(|(p, m)| p * m).sum();
        let work_closed: f64 = psi
            .iter()
            .zip(&v)
            .map(|(p, vv)| p * q * (vv / p).sqrt())
            .sum();
        let gap = ((work - work_closed) / work_closed).abs();
        worst_interior = worst_interior.max(gap);
        if gap >= 1e-9 {
            return Outcome {
                criterion: 8,
                pass: false,
                detail: format!("interior instance {i}: work gap {gap:.2e}"),
            };
        }
    }
    let mut worst_pinned: f64 = 0.0;
    for i in 0..100 {
        let levels = 2 + (rnd() * 4.0) as usize;
        let mut psi = Vec::new();
        let mut v = Vec::new();
        for l in 0..levels {
            psi.push((0.5 + rnd()) * (1.7f64).powi(l as i32));
            v.push((0.5 + rnd()) * (0.45f64).powi(l as i32));
        }
        let rhs = (0.1 + 0.6 * rnd()) * v.iter().sum::<f64>();
        let m = kkt_allocate_rhs(&psi, &v, rhs);
        let used: f64 = v.iter().zip(&m).map(|(vv, m)| vv / m).sum();
        if !(m.iter().all(|&x| x >= 1.0)
            && (used <= rhs * (1.0 + 1e-9) || m.iter().all(|&x| x == 1.0)))
        {
            return Outcome {
                criterion: 8,
                pass: false,
                detail: format!("pinned instance {i}: constraint violated"),
            };
        }
        let work: f64 = psi.iter().zip(&m).map(|(p, m)| p * m).sum();
        let mut best = f64::INFINITY;
        for mask in 0..(1u32 << levels) {
            let pinned_v: f64 = (0..levels)
                .filter(|&l| mask & (1 << l) != 0)
                .map(|l| v[l])
                .sum();
            let budget = rhs - pinned_v;
            let unpinned: Vec<usize> = (0..levels).filter(|&l| mask & (1 << l) == 0).collect();
            if unpinned.is_empty() {
                if pinned_v <= rhs * (1.0 + 1e-12) {
                    best = best.min(psi.iter().sum::<f64>());
                }
                continue;
            }
            if budget <= 0.0 {
                continue;
            }
            let q: f64 = unpinned.iter().map(|&l| (psi[l] * v[l]).sqrt()).sum::<f64>() / budget;
            let candidate: Vec<f64> = (0..levels)
                .map(|l| {
                    if mask & (1 << l) != 0 {
                        1.0
                    } else {
                        q * (v[l] / psi[l]).sqrt()
                    }
                })
                .collect();
            if unpinned.iter().any(|&l| candidate[l] < 1.0 - 1e-12) {
                continue;
            }
            let w: f64 = psi.iter().zip(&candidate).map(|(p, m)| p * m).sum();
            best = best.min(w);
        }
        let gap = ((work - best) / best).abs();
        worst_pinned = worst_pinned.max(gap);
        if gap >= 1e-9 {
            return Outcome {
                criterion: 8,
                pass: false,
                detail: format!("pinned instance {i}: greedy {work} vs brute force {best}"),
            };
        }
    }
    Outcome {
        criterion: 8,
        pass: true,
        detail: format!(
            "200 instances; worst gaps: interior {worst_interior:.2e}, pinned {worst_pinned:.2e}"
        ),
    }
}

/// Criterion 9: MNRM and SSA endpoint laws agree (KS at 1%, n = 1e4
/// each) and the MNRM mean is within three standard errors of analytic.
fn criterion_09() -> Outcome {
    let m = Model::decay(1000, 1.0, 0.5);
    let n = 10_000u64;
    let mnrm: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = PathRng::from_seed(600_000 + i);
            mnrm_simulate(&m.network, &[1000], 0.0, 0.5, &mut rng).final_state()[0] as f64
        })
        .collect();
    let ssa: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = PathRng::from_seed(700_000 + i);
            ssa_simulate(&m.network, &[1000], 0.0, 0.5, &mut rng).final_state()[0] as f64
        })
        .collect();
    let rejected = stats::ks_reject(&mnrm, &ssa, 0.01);
    let exact = decay_exact_mean(1000.0, 1.0, 0.5);
    let sem = (stats::variance(&mnrm) / n as f64).sqrt();
    let mean_ok = (stats::mean(&mnrm) - exact).abs() <= 3.0 * sem;
    Outcome {
        criterion: 9,
        pass: !rejected && mean_ok,
        detail: format!(
            "KS rejected: {rejected}; mean {:.2} vs {exact:.2} (3 sigma {:.2})",
            stats::mean(&mnrm),
            3.0 * sem
        ),
    }
}

/// Criterion 10: calibrated depth is nondecreasing as TOL shrinks,
/// grows at most ~logarithmically, and hits the reference depth
/// L* = 5 at TOL = 3.13e-3 within one level.
fn criterion_10() -> Outcome {
    let plans = decay_plans();
    let depths: Vec<u32> = plans.iter().map(|(_, p)| p.deepest()).collect();
    let mut pass = depths.windows(2).all(|w| w[1] >= w[0]);
    pass &= depths.windows(2).all(|w| w[1] - w[0] <= 2);
    let l_ref = plans.last().unwrap().1.deepest();
    pass &= (4..=6).contains(&l_ref);
    Outcome {
        criterion: 10,
        pass,
        detail: format!("depths {depths:?} over the tolerance grid; L*(3.13e-3) = {l_ref}"),
    }
}

/// Criterion 11: on the gene model at TOL = 2.5e-2, the multilevel
/// estimation runtime beats SSA at the same statistical budget by at
/// least a factor of two.
fn criterion_11() -> Outcome {
    let m = Model::gene_transcription();
    let mach = gene_machine();
    let tol = 2.5e-2;
    let cfg = MlmcConfig::new(tol);
    let plan = calibrate(&m, mach, &cfg, SeedSequence::new(55), "gene").unwrap();
    // Median of three runs per side; scheduler spikes hit one window at
    // a time and would corrupt a single-shot ratio.
    let mut ml_runs = Vec::new();
    let mut estimate_value = 0.0;
    for k in 0..3 {
        let rep = estimate(&m, &plan, mach, &cfg, SeedSequence::new(56 + k)).unwrap();
        ml_runs.push(rep.runtime_seconds);
        estimate_value = rep.estimate;
    }
    ml_runs.sort_by(f64::total_cmp);
    let ml_seconds = ml_runs[1];
    let last = plan.levels.last().unwrap();
    let g2 = estimate_value * estimate_value;
    let m_ssa = (plan.confidence * plan.confidence * last.stats.var_g / g2 / (tol * tol))
        .ceil()
        .max(2.0) as u64;
    let mut ssa_runs = Vec::new();
    let mut ssa_mean = 0.0;
    for k in 0..3 {
        let (mean, _, secs) = ssa_benchmark(&m, m_ssa, SeedSequence::new(60 + k));
        ssa_runs.push(secs);
        ssa_mean = mean;
    }
    ssa_runs.sort_by(f64::total_cmp);
    let ssa_seconds = ssa_runs[1];
    let speedup = ssa_seconds / ml_seconds;
    let consistent = (ssa_mean - estimate_value).abs() / estimate_value < 5.0 * tol;
    Outcome {
        criterion: 11,
        pass: speedup >= 2.0 && consistent,
        detail: format!(
            "MLMC {ml_seconds:.3}s vs SSA {ssa_seconds:.3}s (M_SSA = {m_ssa}): speedup {speedup:.1}x; estimates {estimate_value:.4e} / {ssa_mean:.4e}"
        ),
    }
}

#[test]
fn acceptance_criteria() {
    let checks: Vec<fn() -> Outcome> = vec![
        criterion_01,
        criterion_02,
        criterion_03,
        criterion_04,
        criterion_05,
        criterion_06,
        criterion_07,
        criterion_08,
        criterion_09,
        criterion_10,
        criterion_11,
    ];
    let mut failures = Vec::new();
    for check in checks {
        let outcome = check();
        println!(
            "criterion {:2}: {} - {}",
            outcome.criterion,
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail
        );
        if !outcome.pass {
            failures.push(format!("criterion {}: {}", outcome.criterion, outcome.detail));
        }
    }
    assert!(
        failures.is_empty(),
        "{} acceptance criteria failed:\n{}",
        failures.len(),
        failures.join("\n")
    );
}
