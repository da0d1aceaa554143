//! Dual-weighted residual estimators: the per-path discretization error
//! shrinks linearly in dt, and the level-difference variance estimator
//! built from single-level paths tracks a brute-force Monte Carlo
//! oracle over coupled pairs at a fraction of the cost.
//!
//! ```text
//! cargo run --release --example dual_estimators
//! ```

use tauhybrid::coupling::coupled_hybrid_path;
use tauhybrid::duals::path_dual_stats;
use tauhybrid::hybrid::hybrid_path;
use tauhybrid::mesh::Mesh;
use tauhybrid::network::Model;
use tauhybrid::oracle::mc_variance_oracle;
use tauhybrid::rng::PathRng;
use tauhybrid::stats;
use tauhybrid::workmodel::MachineConstants;

fn main() {
    let model = Model::decay(100_000, 1.0, 0.5);
    let machine = MachineConstants::synthetic();
    let delta = 1e-2;
    println!("{:>8} {:>12} {:>12} {:>12} {:>8} {:>10}", "dt", "mean E_I", "vhat", "MC oracle", "ratio", "M oracle");
    for k in [3u32, 4, 5, 6, 7] {
        let coarse = Mesh::uniform(0.5, 1 << k);
        let fine = coarse.refine(2);
        let mut rng = PathRng::from_seed(100 + u64::from(k));
        let mut se = Vec::new();
        let mut sv = Vec::new();
        let mut ei = Vec::new();
        for _ in 0..4000 {
            let p = hybrid_path(&model.network, &model.x0, &coarse, delta, &machine, &mut rng);
            if p.exit {
                continue;
            }
            let d = path_dual_stats(&model.network, &p, &model.observable, 10.0);
            se.push(d.s_e);
            sv.push(d.s_v);
            ei.push(d.e_i);
        }
        let vhat = stats::variance(&se) + stats::mean(&sv);
        let mut rng = PathRng::from_seed(200 + u64::from(k));
        let (mc, m_used) = mc_variance_oracle(
            |r| {
                let pair = coupled_hybrid_path(
                    &model.network,
                    &model.x0,
                    &coarse,
                    &fine,
                    delta,
                    delta,
                    &machine,
                    r,
                );
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
        println!(
            "{:>8.5} {:>12.4e} {:>12.4e} {:>12.4e} {:>8.3} {:>10}",
            0.5 / (1 << k) as f64,
            stats::mean(&ei),
            vhat,
            mc,
            vhat / mc,
            m_used
        );
    }
    println!();
    println!("vhat needs only single-level coarse paths (no coupling), and at equal");
    println!("sample counts its estimator variance is orders of magnitude below the");
    println!("direct sample variance of the level difference.");
}
