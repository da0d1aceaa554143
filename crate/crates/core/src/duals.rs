//! Dual-weighted residual estimators computed backward along a recorded
//! path: the per-path discretization error `E_I`, and the strong-error
//! terms `(S_e, S_v)` whose sample variance plus sample mean estimates
//! the variance of the difference between two consecutive levels. Only
//! tau-leap steps contribute; exact steps carry no local error.

use thiserror::Error;

use crate::hybrid::{PathRecord, StepKind};
use crate::network::{Observable, ReactionNetwork};
use crate::stats::normal_cdf;

#[derive(Debug, Error)]
pub enum DualError {
    #[error("variance estimation needs at least two in-lattice paths, got {0}")]
    InsufficientSamples(usize),
}

/// Per-path dual-weighted sums.
#[derive(Debug, Clone, Copy, Default)]
pub struct DualAccumulators {
    /// Discretization-error contribution `E_I`.
    pub e_i: f64,
    /// Conditional-mean sum; its sample variance enters the estimator.
    pub s_e: f64,
    /// Conditional-variance sum; its sample mean enters the estimator.
    pub s_v: f64,
}

/// Backward dual weights `phi_1 .. phi_K` with `phi_K = grad g(x_K)` and
/// `phi_k = (Id + dt_k J_a(x_k)^T nu^T) phi_{k+1}`. Entry `[k-1]` holds
/// `phi_k`. Exposed mainly for inspection and tests; the estimators use
/// a fused backward pass.
pub fn dual_weights(net: &ReactionNetwork, path: &PathRecord, g: &Observable) -> Vec<Vec<f64>> {
    let k_steps = path.num_steps();
    if k_steps == 0 {
        return Vec::new();
    }
    let d = net.num_species();
    let j_count = net.num_reactions();
    let mut out = vec![vec![0.0; d]; k_steps];
    out[k_steps - 1] = g.gradient().to_vec();
    let mut grad = vec![0.0; d];
    for k in (1..k_steps).rev() {
        let dt = path.times[k + 1] - path.times[k];
        let xk: Vec<f64> = path.state(k).iter().map(|&v| v as f64).collect();
        let phi_next = out[k].clone();
        let mut phi = phi_next.clone();
        for j in 0..j_count {
            net.propensity_gradient(j, &xk, &mut grad);
            let f: f64 = net
                .stoichiometry(j)
                .iter()
                .zip(&phi_next)
                .map(|(&nu, p)| nu as f64 * p)
                .sum();
            for i in 0..d {
                phi[i] += dt * grad[i] * f;
            }
        }
        out[k - 1] = phi;
    }
    out
}

/// Per-path discretization error `E_I`: the dual-weighted sum of
/// tau-leap propensity increments over steps `k = K-1 .. 1`.
pub fn weak_error_path(net: &ReactionNetwork, path: &PathRecord, g: &Observable) -> f64 {
    path_dual_stats(net, path, g, f64::INFINITY).e_i
}

/// Strong-error terms `(S_e, S_v)`; `c_threshold` switches the
/// per-channel variance bound between the Gaussian regime and the
/// min-bound regime.
pub fn strong_error_terms(
    net: &ReactionNetwork,
    path: &PathRecord,
    g: &Observable,
    c_threshold: f64,
) -> (f64, f64) {
    let acc = path_dual_stats(net, path, g, c_threshold);
    (acc.s_e, acc.s_v)
}

/// Fused backward pass computing `E_I`, `S_e` and `S_v` in one sweep.
pub fn path_dual_stats(
    net: &ReactionNetwork,
    path: &PathRecord,
    g: &Observable,
    c_threshold: f64,
) -> DualAccumulators {
    debug_assert!(!path.exit, "dual sums are defined for in-lattice paths");
    let k_steps = path.num_steps();
    let mut acc = DualAccumulators::default();
    if k_steps < 2 {
        return acc;
    }
    let d = net.num_species();
    let j_count = net.num_reactions();
    let mut phi = g.gradient().to_vec();
    let mut grads = vec![vec![0.0; d]; j_count];
    let mut a_k = vec![0.0; j_count];
    let mut a_next = vec![0.0; j_count];
    let mut f = vec![0.0; j_count];
    let mut b = vec![vec![0.0; j_count]; j_count]; // b[j][i] = grad a_j . nu_i
    net.fill_propensities(path.state(k_steps), &mut a_next);
    for k in (1..k_steps).rev() {
        let dt = path.times[k + 1] - path.times[k];
        let xk: Vec<f64> = path.state(k).iter().map(|&v| v as f64).collect();
        net.fill_propensities(path.state(k), &mut a_k);
        for (j, grad) in grads.iter_mut().enumerate() {
            net.propensity_gradient(j, &xk, grad);
        }
        // The strong-error terms weight the local error with phi_{k+1}
        // (the state entering the step), per the estimator's definition
        // f_{j,n} = phi_{n+1} . nu_j.
        let tl_step = path.steps[k] == StepKind::Tl;
        if tl_step {
            for (j, fj) in f.iter_mut().enumerate() {
                *fj = net
                    .stoichiometry(j)
                    .iter()
                    .zip(&phi)
                    .map(|(&nu, p)| nu as f64 * p)
                    .sum();
            }
        }
        // phi_k from phi_{k+1}.
        let fdot: Vec<f64> = (0..j_count)
            .map(|j| {
                net.stoichiometry(j)
                    .iter()
                    .zip(&phi)
                    .map(|(&nu, p)| nu as f64 * p)
                    .sum()
            })
            .collect();
        for i in 0..d {
            let mut s = 0.0;
            for j in 0..j_count {
                s += grads[j][i] * fdot[j];
            }
            phi[i] += dt * s;
        }
        if tl_step {
            for (j, row) in b.iter_mut().enumerate() {
                for (i, cell) in row.iter_mut().enumerate() {
                    *cell = grads[j]
                        .iter()
                        .zip(net.stoichiometry(i))
                        .map(|(ga, &nu)| ga * nu as f64)
                        .sum();
                }
            }
            // E_I weights this step with phi_k (the weak-error recursion
            // and its sum share the same backward index).
            let mut ei = 0.0;
            for j in 0..j_count {
                let fk: f64 = net
                    .stoichiometry(j)
                    .iter()
                    .zip(&phi)
                    .map(|(&nu, p)| nu as f64 * p)
                    .sum();
                ei += fk * (a_next[j] - a_k[j]);
            }
            acc.e_i += 0.5 * dt * ei;
            // S_e and S_v terms from the half-step Taylor moments.
            let half = 0.5 * dt;
            let mut s_e = 0.0;
            let mut aux2_aux3 = 0.0;
            let mut aux1 = 0.0;
            for i in 0..j_count {
                // aux1 inner sum over channels j, j' collapses to
                // a_i (sum_j f_j b[j][i])^2.
                let inner: f64 = (0..j_count).map(|j| f[j] * b[j][i]).sum();
                aux1 += a_k[i] * inner * inner;
            }
            aux1 *= dt * dt * dt / 8.0;
            for j in 0..j_count {
                let mu: f64 = (0..j_count).map(|i| b[j][i] * a_k[i]).sum::<f64>() * half;
                let mu_abs: f64 =
                    (0..j_count).map(|i| b[j][i].abs() * a_k[i]).sum::<f64>() * half;
                let var: f64 =
                    (0..j_count).map(|i| b[j][i] * b[j][i] * a_k[i]).sum::<f64>() * half;
                s_e += f[j] * mu;
                let bound = if var <= 0.0 {
                    mu.abs()
                } else if a_k[j] * half > c_threshold {
                    // Gaussian regime: E[|Delta a|] for N(mu, var).
                    let sigma = var.sqrt();
                    let q = mu / sigma;
                    mu * (1.0 - 2.0 * normal_cdf(-q))
                        + (2.0 / std::f64::consts::PI).sqrt() * sigma * (-0.5 * q * q).exp()
                } else {
                    mu_abs.min((mu * mu + var).sqrt())
                };
                aux2_aux3 += f[j] * f[j] * bound;
            }
            acc.s_e += half * s_e;
            acc.s_v += aux1 + half * aux2_aux3;
        }
        std::mem::swap(&mut a_next, &mut a_k);
    }
    acc
}

/// Level-variance estimator: sample variance of `S_e` plus sample mean
/// of `S_v` over in-lattice paths. Nonnegative by construction.
pub fn vhat_estimator(s_e: &[f64], s_v: &[f64]) -> Result<f64, DualError> {
    if s_e.len() < 2 {
        return Err(DualError::InsufficientSamples(s_e.len()));
    }
    debug_assert_eq!(s_e.len(), s_v.len());
    Ok(crate::stats::variance(s_e) + crate::stats::mean(s_v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hybrid::{PathRecord, StepKind};
    use crate::mesh::Mesh;
    use crate::network::Model;
    use crate::rng::PathRng;
    use crate::stats;
    use crate::workmodel::MachineConstants;

    /// Synthetic uniform tau-leap record on the decay model.
    fn decay_tl_record(x0: i64, cells: usize, t_final: f64) -> PathRecord {
        let mut rec = PathRecord::new(1, 0.0, &[x0]);
        let dt = t_final / cells as f64;
        let mut x = x0;
        for k in 1..=cells {
            x = (x as f64 * (1.0 - dt)).round() as i64;
            rec.push(dt * k as f64, &[x], StepKind::Tl, x as f64);
        }
        rec
    }

    #[test]
    fn dual_weights_decay_closed_form() {
        // phi_n = (1 - dt)^{N - n} for g(x) = x, J_a = c = 1, nu = -1.
        let m = Model::decay(1000, 1.0, 0.5);
        let rec = decay_tl_record(1000, 8, 0.5);
        let dt: f64 = 0.5 / 8.0;
        let phis = dual_weights(&m.network, &rec, &m.observable);
        let n = phis.len();
        for (idx, phi) in phis.iter().enumerate() {
            let k = idx + 1; // phi_k
            let expect = (1.0 - dt).powi((n - k) as i32);
            assert!(
                (phi[0] - expect).abs() < 1e-12,
                "phi_{k} = {} vs {expect}",
                phi[0]
            );
        }
    }

    #[test]
    fn dual_weights_zero_dt_propagate_gradient() {
        let m = Model::gene_transcription();
        let mut rec = PathRecord::new(3, 0.0, &[5, 10, 2]);
        for _ in 0..4 {
            rec.push(rec.final_time(), &[5, 10, 2], StepKind::Tl, 1.0);
        }
        // Zero-width steps: phi_n = grad g for all n.
        let phis = dual_weights(&m.network, &rec, &m.observable);
        for phi in &phis {
            assert_eq!(phi, &vec![0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn pure_exact_path_has_zero_sums() {
        let m = Model::decay(500, 1.0, 0.5);
        let mut rng = PathRng::from_seed(4);
        let p = crate::exact::mnrm_simulate(&m.network, &[500], 0.0, 0.5, &mut rng);
        let acc = path_dual_stats(&m.network, &p, &m.observable, 10.0);
        assert_eq!(acc.e_i, 0.0);
        assert_eq!(acc.s_e, 0.0);
        assert_eq!(acc.s_v, 0.0);
    }

    /// Constant propensities have zero gradient, so every Taylor moment
    /// (mu, mu-bar, sigma) vanishes and the variance sums collapse.
    #[test]
    fn degenerate_moments_collapse_to_zero() {
        use crate::network::{Propensity, ReactionNetwork};
        let net = ReactionNetwork::new(
            vec!["X".into()],
            vec![vec![1]],
            vec![Propensity::MassAction {
                rate: 4.0,
                reactants: vec![],
            }],
        )
        .unwrap();
        let g = crate::network::Observable::species(0, 1);
        let mut rec = PathRecord::new(1, 0.0, &[5]);
        rec.push(0.25, &[6], StepKind::Tl, 4.0);
        rec.push(0.5, &[8], StepKind::Tl, 4.0);
        let acc = path_dual_stats(&net, &rec, &g, 10.0);
        assert_eq!(acc.s_e, 0.0);
        assert_eq!(acc.s_v, 0.0);
        assert_eq!(acc.e_i, 0.0);
    }

    #[test]
    fn constant_path_has_zero_sums() {
        let m = Model::decay(1000, 1.0, 0.5);
        let mut rec = PathRecord::new(1, 0.0, &[1000]);
        for k in 1..=4 {
            rec.push(0.125 * k as f64, &[1000], StepKind::Tl, 1000.0);
        }
        let acc = path_dual_stats(&m.network, &rec, &m.observable, 10.0);
        assert_eq!(acc.e_i, 0.0);
        // mu and sigma are propensity-weighted; for the decay model they
        // do not vanish on a constant path, but E_I does (Delta a = 0).
        assert!(acc.s_e != 0.0);
    }

    #[test]
    fn weak_error_halves_with_dt() {
        let m = Model::decay(100_000, 1.0, 0.5);
        let mach = MachineConstants::synthetic();
        let mut mean_by_mesh = Vec::new();
        for cells in [32usize, 64] {
            let mesh = Mesh::uniform(0.5, cells);
            let mut rng = PathRng::from_seed(cells as u64);
            let mut r = stats::Running::default();
            for _ in 0..2000 {
                let p = crate::hybrid::hybrid_path(&m.network, &[100_000], &mesh, 1e-2, &mach, &mut rng);
                if !p.exit {
                    r.push(weak_error_path(&m.network, &p, &m.observable));
                }
            }
            mean_by_mesh.push(r.mean);
        }
        let ratio = mean_by_mesh[0] / mean_by_mesh[1];
        assert!(
            (ratio - 2.0).abs() < 0.2,
            "halving dt should halve E_I: ratio {ratio}"
        );
    }

    #[test]
    fn vhat_estimator_edge_cases() {
        // All samples identical: variance term drops out.
        let se = vec![3.0; 10];
        let sv = vec![0.5; 10];
        assert!((vhat_estimator(&se, &sv).unwrap() - 0.5).abs() < 1e-15);
        // S_v identically zero: pure sample variance of S_e.
        let se = vec![1.0, 2.0, 3.0, 4.0];
        let sv = vec![0.0; 4];
        assert!((vhat_estimator(&se, &sv).unwrap() - stats::variance(&se)).abs() < 1e-15);
        assert!(matches!(
            vhat_estimator(&[1.0], &[0.0]),
            Err(DualError::InsufficientSamples(1))
        ));
    }
}
