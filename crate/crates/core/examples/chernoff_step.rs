//! The Chernoff pre-leap check: largest tau-leap step with one-step exit
//! probability below delta, with a Monte Carlo check of the bound.
//!
//! ```text
//! cargo run --release --example chernoff_step
//! ```

use tauhybrid::chernoff::chernoff_tau;
use tauhybrid::network::{apply_reaction, in_lattice, Model};
use tauhybrid::poisson;
use tauhybrid::rng::PathRng;

fn main() {
    let model = Model::decay(100_000, 1.0, 0.5);
    let mut rng = PathRng::from_seed(7);
    println!("decay model: tau_Ch and measured one-step exit frequency (1e5 leaps)");
    println!("{:>8} {:>9} {:>12} {:>12} {:>12}", "x", "delta", "tau_Ch", "exit freq", "bound");
    for &x in &[5i64, 20, 100, 1000, 100_000] {
        for &delta in &[1e-1, 1e-2, 1e-3] {
            let state = [x];
            let a = model.network.propensities(&state);
            let tau = chernoff_tau(&model.network, &state, &a, delta);
            if !(tau.is_finite() && tau > 0.0) {
                println!("{x:>8} {delta:>9.0e} {tau:>12.3e} {:>12} {:>12}", "-", "-");
                continue;
            }
            let n = 100_000;
            let mut exits = 0u64;
            for _ in 0..n {
                let k = poisson::sample(a[0] * tau, &mut rng);
                let y = apply_reaction(&state, model.network.stoichiometry(0), k);
                if !in_lattice(&y) {
                    exits += 1;
                }
            }
            println!(
                "{x:>8} {delta:>9.0e} {tau:>12.3e} {:>12.2e} {delta:>12.0e}",
                exits as f64 / n as f64
            );
        }
    }
    println!();
    println!("boundary state x = 0 forces exact stepping: tau = {}", {
        let a = model.network.propensities(&[0]);
        chernoff_tau(&model.network, &[0], &a, 1e-2)
    });
}
