//! Time meshes for the level hierarchy. Level 0 may be nonuniform; every
//! deeper level subdivides each cell of the previous one by the same
//! integer factor, so coarse points are shared bit-exactly.

use crate::network::ReactionNetwork;
use crate::stats::spectral_radius;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    points: Vec<f64>,
}

impl Mesh {
    /// Build from explicit, strictly increasing points starting at 0.
    pub fn from_points(points: Vec<f64>) -> Mesh {
        assert!(points.len() >= 2, "a mesh needs at least one cell");
        assert_eq!(points[0], 0.0, "meshes start at t = 0");
        assert!(
            points.windows(2).all(|w| w[1] > w[0]),
            "mesh points must be strictly increasing"
        );
        Mesh { points }
    }

    pub fn uniform(t_final: f64, cells: usize) -> Mesh {
        assert!(cells >= 1 && t_final > 0.0);
        let points = (0..=cells)
            .map(|k| t_final * k as f64 / cells as f64)
            .collect();
        Mesh::from_points(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn cells(&self) -> usize {
        self.points.len() - 1
    }

    pub fn t_final(&self) -> f64 {
        *self.points.last().unwrap()
    }

    /// Smallest cell width (the `dt` reported for the level).
    pub fn min_dt(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    /// First mesh point strictly greater than `t` (returns `t_final` for
    /// any `t` at or beyond the end).
    pub fn next_point_after(&self, t: f64) -> f64 {
        let idx = self.points.partition_point(|&p| p <= t);
        if idx >= self.points.len() {
            self.t_final()
        } else {
            self.points[idx]
        }
    }

    /// Subdivide every cell into `r` equal parts; existing points are
    /// carried over verbatim so nested levels share them exactly.
    pub fn refine(&self, r: u32) -> Mesh {
        assert!(r >= 2, "refinement factor must be at least 2");
        let mut points = Vec::with_capacity(self.cells() * r as usize + 1);
        for w in self.points.windows(2) {
            points.push(w[0]);
            let h = (w[1] - w[0]) / r as f64;
            for k in 1..r {
                points.push(w[0] + h * k as f64);
            }
        }
        points.push(self.t_final());
        Mesh { points }
    }
}

/// Minimum number of level-0 cells regardless of stiffness.
pub const MIN_LEVEL0_CELLS: usize = 4;

/// Coarsest uniform level-0 mesh on which forward Euler for the
/// mean-field ODE is stable: `dt <= 2 / rho(nu J_a)` with the spectral
/// radius taken along the mean-field trajectory (power iteration), then
/// floored at [`MIN_LEVEL0_CELLS`] cells.
pub fn stable_level0_mesh(
    net: &ReactionNetwork,
    x0: &[i64],
    t_final: f64,
) -> Result<Mesh, crate::network::ModelError> {
    let x0f: Vec<f64> = x0.iter().map(|&v| v as f64).collect();
    let traj = crate::network::mean_field(
        net,
        &x0f,
        t_final,
        t_final / 2000.0,
        crate::network::MEAN_FIELD_CAP,
    )?;
    let mut rho: f64 = 0.0;
    for (_, x) in traj.iter().step_by(traj.len().div_ceil(64).max(1)) {
        rho = rho.max(spectral_radius(&net.drift_jacobian(x)));
    }
    let dt_stable = if rho > 0.0 { 2.0 / rho } else { t_final };
    let cells = ((t_final / dt_stable).ceil() as usize).max(MIN_LEVEL0_CELLS);
    Ok(Mesh::uniform(t_final, cells))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Model;

    #[test]
    fn refine_shares_coarse_points() {
        let coarse = Mesh::uniform(0.5, 4);
        let fine = coarse.refine(2);
        assert_eq!(fine.cells(), 8);
        for &p in coarse.points() {
            assert!(fine.points().contains(&p), "missing {p}");
        }
        assert_eq!(fine.t_final(), 0.5);
    }

    #[test]
    fn next_point_is_strictly_after() {
        let mesh = Mesh::uniform(1.0, 4);
        assert_eq!(mesh.next_point_after(0.0), 0.25);
        assert_eq!(mesh.next_point_after(0.25), 0.5);
        assert_eq!(mesh.next_point_after(0.3), 0.5);
        assert_eq!(mesh.next_point_after(1.0), 1.0);
    }

    #[test]
    fn decay_level0_is_min_cells() {
        // rho = c = 1, dt_stable = 2 > T: the floor of 4 cells applies.
        let m = Model::decay(100_000, 1.0, 0.5);
        let mesh = stable_level0_mesh(&m.network, &m.x0, m.t_final).unwrap();
        assert_eq!(mesh.cells(), MIN_LEVEL0_CELLS);
    }

    #[test]
    fn gene_level0_resolves_stiffness() {
        let m = Model::gene_transcription();
        let mesh = stable_level0_mesh(&m.network, &m.x0, m.t_final).unwrap();
        // Stiffest scale along the trajectory is roughly 14..15 per unit
        // time, so stability needs at least ~7 cells.
        assert!(mesh.cells() >= 7, "cells = {}", mesh.cells());
        assert!(mesh.cells() <= 32, "cells = {}", mesh.cells());
    }
}
