//! Phase I: measure the machine-dependent cost constants that drive the
//! switching rule and the work optimizer.
//!
//! ```text
//! cargo run --release --example machine_calibration
//! ```

use tauhybrid::network::Model;
use tauhybrid::workmodel::calibrate_machine;

fn main() {
    let model = Model::decay(100_000, 1.0, 0.5);
    let c = calibrate_machine(&model.network, &model.x0, model.t_final, 10_000, "example", 7)
        .unwrap();
    println!("host: {}", c.fingerprint);
    println!("  C1 (exact step, no pre-leap check)   {:.3e} s", c.c1_seconds);
    println!("  C2 (exact step after pre-leap check) {:.3e} s", c.c2_seconds);
    println!("  C3 (Chernoff step-size computation)  {:.3e} s", c.c3_seconds);
    println!("  C* (plain SSA step)                  {:.3e} s", c.c_star_seconds);
    println!("  K1 = C3/C1                           {:.2}", c.k1);
    println!();
    println!("Poisson-draw cost curve (fit R^2 = {:.3}):", c.poisson_cost.r_squared);
    println!("{:>10} {:>14} {:>14}", "lambda", "measured", "fitted");
    for (lambda, cost) in &c.poisson_cost.grid {
        println!("{lambda:>10} {cost:>14.3e} {:>14.3e}", c.poisson_cost(*lambda));
    }
}
