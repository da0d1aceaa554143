//! Exact simulation of the decay model with both exact samplers, checked
//! against the closed-form mean of the linear death process.
//!
//! ```text
//! cargo run --release --example exact_paths
//! ```

use tauhybrid::exact::{mnrm_simulate, ssa_simulate};
use tauhybrid::network::Model;
use tauhybrid::oracle::decay_exact_mean;
use tauhybrid::rng::PathRng;
use tauhybrid::stats::Running;

fn main() {
    let model = Model::decay(1000, 1.0, 0.5);
    let n = 50_000;
    let mut rng = PathRng::from_seed(42);

    let mut mnrm_end = Running::default();
    let mut mnrm_steps = Running::default();
    for _ in 0..n {
        let path = mnrm_simulate(&model.network, &model.x0, 0.0, model.t_final, &mut rng);
        mnrm_end.push(path.final_state()[0] as f64);
        mnrm_steps.push(path.total_steps_counted() as f64);
    }
    let mut ssa_end = Running::default();
    for _ in 0..n {
        let path = ssa_simulate(&model.network, &model.x0, 0.0, model.t_final, &mut rng);
        ssa_end.push(path.final_state()[0] as f64);
    }

    let exact = decay_exact_mean(1000.0, 1.0, 0.5);
    let expected_steps = 1000.0 * (1.0 - (-0.5f64).exp());
    println!("decay model, X0 = 1000, T = 0.5, {n} paths per method");
    println!(
        "  analytic mean          {exact:9.3}   expected firings {expected_steps:8.3}"
    );
    println!(
        "  MNRM endpoint mean     {:9.3} +- {:.3}   mean firings {:8.3}",
        mnrm_end.mean,
        mnrm_end.sem(),
        mnrm_steps.mean
    );
    println!(
        "  SSA  endpoint mean     {:9.3} +- {:.3}",
        ssa_end.mean,
        ssa_end.sem()
    );
}
