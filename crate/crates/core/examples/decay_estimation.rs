//! The full three-phase workflow on the decay model, where the answer
//! is known in closed form: measure machine constants, calibrate the
//! hierarchy, estimate, and compare against x0 exp(-cT).
//!
//! ```text
//! cargo run --release --example decay_estimation
//! ```

use tauhybrid::mlmc::{calibrate, estimate, MlmcConfig};
use tauhybrid::network::Model;
use tauhybrid::oracle::decay_exact_mean;
use tauhybrid::rng::SeedSequence;
use tauhybrid::workmodel::calibrate_machine;

fn main() {
    let model = Model::decay(100_000, 1.0, 0.5);
    let exact = decay_exact_mean(1e5, 1.0, 0.5);
    println!("phase I: measuring machine constants...");
    let machine =
        calibrate_machine(&model.network, &model.x0, model.t_final, 10_000, "example", 7).unwrap();

    let tol = 5e-3;
    let cfg = MlmcConfig::new(tol);
    println!("phase II: calibrating the hierarchy at relative TOL = {tol}...");
    let plan = calibrate(&model, &machine, &cfg, SeedSequence::new(1), "decay").unwrap();
    println!(
        "  {} levels, E_I = {:.2e}, theta = {:.2}, predicted work {:.2e}s (SSA {:.2e}s)",
        plan.levels.len(),
        plan.e_i_rel,
        plan.theta,
        plan.w_ml_seconds,
        plan.w_ssa_seconds
    );
    println!("{:>7} {:>10} {:>10} {:>8} {:>12} {:>12}", "level", "dt", "delta", "M", "psi (s)", "V alloc");
    for l in &plan.levels {
        println!(
            "{:>7} {:>10.5} {:>10.1e} {:>8} {:>12.3e} {:>12.4e}",
            l.level, l.dt, l.delta, l.m, l.stats.psi_seconds, l.v_alloc
        );
    }

    println!("phase III: estimating...");
    let report = estimate(&model, &plan, &machine, &cfg, SeedSequence::new(2)).unwrap();
    println!(
        "  estimate {:.6e} (stat half-width {:.2e} rel, runtime {:.4}s)",
        report.estimate, report.stat_half_width_rel, report.runtime_seconds
    );
    println!(
        "  analytic {exact:.6e}; realized relative error {:+.3e} (TOL {tol})",
        (report.estimate - exact) / exact
    );
}
