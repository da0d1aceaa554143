//! One hybrid path of the gene transcription model: the switching rule
//! mixes exact steps (near boundaries, low activity) with tau-leap steps
//! (bulk), and the record keeps the step-type tallies.
//!
//! ```text
//! cargo run --release --example hybrid_path
//! ```

use tauhybrid::hybrid::{hybrid_path, StepKind};
use tauhybrid::mesh::stable_level0_mesh;
use tauhybrid::network::Model;
use tauhybrid::rng::PathRng;
use tauhybrid::workmodel::calibrate_machine;

fn main() {
    let model = Model::gene_transcription();
    println!("measuring machine constants (a few seconds)...");
    let machine =
        calibrate_machine(&model.network, &model.x0, model.t_final, 10_000, "", 1).unwrap();
    let mesh = stable_level0_mesh(&model.network, &model.x0, model.t_final).unwrap();
    println!(
        "level-0 mesh: {} uniform cells (forward-Euler stability bound)",
        mesh.cells()
    );
    let mut rng = PathRng::from_seed(2024);
    let path = hybrid_path(&model.network, &model.x0, &mesh, 1e-2, &machine, &mut rng);
    println!(
        "path: {} recorded steps | N_TL = {} (Chernoff-constrained {}) N_K1 = {} N_K2 = {}",
        path.num_steps(),
        path.n_tl,
        path.n_tl_chernoff,
        path.n_k1,
        path.n_k2
    );
    println!(
        "final state (R, P, D) = {:?} at t = {}, modeled cost {:.2e}s",
        path.final_state(),
        path.final_time(),
        path.cost_seconds
    );
    println!();
    println!("{:>10} {:>8} {:>8} {:>8}  method", "t", "R", "P", "D");
    let stride = path.num_steps() / 24 + 1;
    for k in (0..path.num_steps()).step_by(stride) {
        let x = path.state(k + 1);
        let tag = match path.steps[k] {
            StepKind::Tl => "tau-leap",
            StepKind::ExactK1 => "exact (K1)",
            StepKind::ExactK2 => "exact (K2)",
            StepKind::Idle => "idle",
        };
        println!(
            "{:>10.5} {:>8} {:>8} {:>8}  {tag}",
            path.times[k + 1],
            x[0],
            x[1],
            x[2]
        );
    }
}
