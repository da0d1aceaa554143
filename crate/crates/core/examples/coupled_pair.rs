//! Coupled hybrid paths on nested meshes: the shared Poisson components
//! make the level difference far less variable than independent
//! sampling would, which is what the multilevel estimator exploits.
//!
//! ```text
//! cargo run --release --example coupled_pair
//! ```

use tauhybrid::coupling::coupled_hybrid_path;
use tauhybrid::mesh::Mesh;
use tauhybrid::network::Model;
use tauhybrid::rng::PathRng;
use tauhybrid::stats;
use tauhybrid::workmodel::MachineConstants;

fn main() {
    let model = Model::decay(100_000, 1.0, 0.5);
    let machine = MachineConstants::synthetic();
    let coarse = Mesh::uniform(0.5, 8);
    let fine = coarse.refine(2);
    let n = 20_000;
    let mut rng = PathRng::from_seed(1);
    let mut diffs = Vec::new();
    let mut fine_ends = Vec::new();
    let mut coarse_ends = Vec::new();
    for _ in 0..n {
        let pair = coupled_hybrid_path(
            &model.network,
            &model.x0,
            &coarse,
            &fine,
            1e-2,
            1e-2,
            &machine,
            &mut rng,
        );
        if pair.coarse.exit || pair.fine.exit {
            continue;
        }
        let gc = pair.coarse.final_state()[0] as f64;
        let gf = pair.fine.final_state()[0] as f64;
        diffs.push(gf - gc);
        fine_ends.push(gf);
        coarse_ends.push(gc);
    }
    let var_diff = stats::variance(&diffs);
    let var_f = stats::variance(&fine_ends);
    let var_c = stats::variance(&coarse_ends);
    let mf = stats::mean(&fine_ends);
    let mc = stats::mean(&coarse_ends);
    let cov = fine_ends
        .iter()
        .zip(&coarse_ends)
        .map(|(f, c)| (f - mf) * (c - mc))
        .sum::<f64>()
        / (fine_ends.len() - 1) as f64;
    println!("decay model, meshes of 8 and 16 cells, {n} coupled pairs");
    println!("  Var(g_fine)              {var_f:12.1}");
    println!("  Var(g_coarse)            {var_c:12.1}");
    println!("  Var(g_fine - g_coarse)   {var_diff:12.1}   (independent would be {:.1})", var_f + var_c);
    println!("  correlation              {:12.5}", cov / (var_f * var_c).sqrt());
    println!("  mean difference          {:12.3}", stats::mean(&diffs));
}
