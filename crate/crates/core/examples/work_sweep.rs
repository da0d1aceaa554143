//! Measured estimation work versus tolerance on the decay model. The
//! statistical term scales like TOL^-2 once sample counts leave the
//! one-path floor (the observable's relative noise is ~2.5e-3, so that
//! happens below TOL ~ 1e-3); above it the hierarchy depth dominates.
//!
//! ```text
//! cargo run --release --example work_sweep
//! ```

use tauhybrid::mlmc::{calibrate, estimate, MlmcConfig};
use tauhybrid::network::Model;
use tauhybrid::rng::SeedSequence;
use tauhybrid::stats;
use tauhybrid::workmodel::calibrate_machine;

fn main() {
    let model = Model::decay(100_000, 1.0, 0.5);
    println!("phase I: measuring machine constants...");
    let machine =
        calibrate_machine(&model.network, &model.x0, model.t_final, 10_000, "example", 7).unwrap();
    let tols = [4e-3, 2e-3, 1e-3, 5e-4, 2.5e-4];
    let reps = 5;
    let mut log_tol = Vec::new();
    let mut log_work = Vec::new();
    println!(
        "{:>9} {:>5} {:>8} {:>14} {:>14}",
        "tol", "L*", "M0", "runtime (s)", "predicted (s)"
    );
    for &tol in &tols {
        let cfg = MlmcConfig::new(tol);
        let plan = calibrate(&model, &machine, &cfg, SeedSequence::new(11), "decay").unwrap();
        let mut runtime = 0.0;
        for k in 0..reps {
            let rep = estimate(&model, &plan, &machine, &cfg, SeedSequence::new(900 + k)).unwrap();
            runtime += rep.runtime_seconds / reps as f64;
        }
        println!(
            "{tol:>9.1e} {:>5} {:>8} {runtime:>14.5} {:>14.3e}",
            plan.deepest(),
            plan.levels[0].m,
            plan.w_ml_seconds
        );
        log_tol.push(tol.ln());
        log_work.push(runtime.ln());
    }
    let (_, slope, r2) = stats::linear_fit(&log_tol, &log_work);
    println!();
    println!("log-log slope of measured runtime vs tolerance: {slope:.2} (R^2 {r2:.3})");
}
