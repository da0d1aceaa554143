//! Independent validators: closed forms, brute-force Monte Carlo and an
//! exact enumeration of the Poisson-bridge local error. Nothing here
//! calls the production estimators it is used to check; the test suite
//! relies on that one-way dependency.

use crate::network::{ModelError, ReactionNetwork};
use crate::rng::PathRng;
use crate::stats;

/// `E[X(T)] = x0 exp(-c T)` for the linear decay model.
pub fn decay_exact_mean(x0: f64, c: f64, t: f64) -> f64 {
    x0 * (-c * t).exp()
}

/// Classic fourth-order Runge-Kutta reference for the mean-field ODE,
/// used as the fine-step oracle for the forward-Euler integrator.
pub fn mean_field_rk4(
    net: &ReactionNetwork,
    x0: &[f64],
    t_final: f64,
    step: f64,
) -> Result<Vec<f64>, ModelError> {
    let d = net.num_species();
    let mut x = x0.to_vec();
    let n_steps = (t_final / step).ceil() as usize;
    let mut k1 = vec![0.0; d];
    let mut k2 = vec![0.0; d];
    let mut k3 = vec![0.0; d];
    let mut k4 = vec![0.0; d];
    let mut tmp = vec![0.0; d];
    let mut t = 0.0;
    for i in 0..n_steps {
        let h = if i + 1 == n_steps { t_final - t } else { step };
        net.drift(&x, &mut k1);
        for j in 0..d {
            tmp[j] = x[j] + 0.5 * h * k1[j];
        }
        net.drift(&tmp, &mut k2);
        for j in 0..d {
            tmp[j] = x[j] + 0.5 * h * k2[j];
        }
        net.drift(&tmp, &mut k3);
        for j in 0..d {
            tmp[j] = x[j] + h * k3[j];
        }
        net.drift(&tmp, &mut k4);
        for j in 0..d {
            x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            if !x[j].is_finite() || x[j].abs() > crate::network::MEAN_FIELD_CAP {
                return Err(ModelError::MeanFieldBlowUp {
                    species: j,
                    cap: crate::network::MEAN_FIELD_CAP,
                    t,
                });
            }
        }
        t += h;
    }
    Ok(x)
}

/// Brute-force variance of a sampled quantity, growing the sample until
/// the coefficient of variation of the variance estimator itself drops
/// below `cv_target`. Returns `(variance, samples used)`; the sample
/// size demonstrates the kurtosis cost of direct estimation.
pub fn mc_variance_oracle(
    mut sampler: impl FnMut(&mut PathRng) -> f64,
    cv_target: f64,
    max_samples: u64,
    rng: &mut PathRng,
) -> (f64, u64) {
    let mut values: Vec<f64> = Vec::new();
    let mut batch = 64u64;
    loop {
        for _ in 0..batch {
            values.push(sampler(rng));
        }
        let var = stats::variance(&values);
        if var > 0.0 {
            let cv = stats::variance_of_sample_variance(&values).sqrt() / var;
            if cv <= cv_target {
                return (var, values.len() as u64);
            }
        } else if values.len() >= 256 {
            // Degenerate sampler: variance zero at minimal effort.
            return (0.0, values.len() as u64);
        }
        if values.len() as u64 >= max_samples {
            return (stats::variance(&values), values.len() as u64);
        }
        batch = values.len() as u64;
    }
}

/// Exact conditional moments of the one-cell Poisson-bridge local error
/// for a one-species, one-reaction network, by full enumeration.
///
/// The coarse cell draws `Y ~ Poisson(a(x) dt)`; the first half-cell
/// count is `Q | Y ~ Binomial(Y, 1/2)`; the mid-cell state is
/// `z = x + nu Q`, giving `da = a(z) - a(x)`. The fine path's extra
/// firings are `R' ~ Poisson(da dt/2)` when `da >= 0`, and the coarse
/// surplus is `P'' | (Y, Q) ~ Binomial(Y - Q, -da/a(x))` when `da < 0`;
/// the local error is `nu (R' - P'')`.
#[derive(Debug, Clone, Copy)]
pub struct BridgeMoments {
    pub mean: f64,
    pub variance: f64,
    /// Probability mass truncated away by the enumeration cutoffs.
    pub truncated_mass: f64,
}

pub fn bridge_local_error_oracle(
    net: &ReactionNetwork,
    x0: i64,
    dt: f64,
) -> Result<BridgeMoments, ModelError> {
    assert_eq!(net.num_species(), 1, "bridge oracle is one-dimensional");
    assert_eq!(net.num_reactions(), 1, "bridge oracle has one channel");
    let nu = net.stoichiometry(0)[0] as f64;
    let a_x = net.checked_propensities(&[x0])?[0];
    let lambda = a_x * dt;
    let y_max = (lambda + 12.0 * lambda.sqrt() + 30.0).ceil() as u64;
    let mut mean = 0.0;
    let mut second = 0.0;
    let mut mass = 0.0;
    let mut p_y = (-lambda).exp();
    for y in 0..=y_max {
        if y > 0 {
            p_y *= lambda / y as f64;
        }
        // Q | Y = y ~ Binomial(y, 1/2).
        let mut p_q = 0.5f64.powi(y as i32);
        for q in 0..=y {
            if q > 0 {
                p_q *= (y - q + 1) as f64 / q as f64;
            }
            let pw = p_y * p_q;
            if pw < 1e-18 {
                continue;
            }
            let z = x0 as f64 + nu * q as f64;
            let a_z = net.propensity_unclamped(0, &[z]).max(0.0);
            let da = a_z - a_x;
            if da >= 0.0 {
                // e = nu R', R' ~ Poisson(da dt / 2).
                let lam2 = da * dt / 2.0;
                mean += pw * nu * lam2;
                second += pw * nu * nu * (lam2 + lam2 * lam2);
            } else {
                // e = -nu P'', P'' ~ Binomial(y - q, -da/a(x)).
                let n = (y - q) as f64;
                let p = (-da / a_x).clamp(0.0, 1.0);
                let m1 = n * p;
                let var = n * p * (1.0 - p);
                mean += pw * (-nu) * m1;
                second += pw * nu * nu * (var + m1 * m1);
            }
            mass += pw;
        }
    }
    Ok(BridgeMoments {
        mean,
        variance: second - mean * mean,
        truncated_mass: 1.0 - mass,
    })
}

/// Closed-form conditional mean of the local error given `(Y, Q)`:
/// `nu da (dt/2)` on the upward branch and `nu da (Y - Q)/a(x)` on the
/// downward one.
pub fn bridge_conditional_mean(
    net: &ReactionNetwork,
    x0: i64,
    dt: f64,
    y: u64,
    q: u64,
) -> Result<f64, ModelError> {
    let nu = net.stoichiometry(0)[0] as f64;
    let a_x = net.checked_propensities(&[x0])?[0];
    let z = x0 as f64 + nu * q as f64;
    let a_z = net.propensity_unclamped(0, &[z]).max(0.0);
    let da = a_z - a_x;
    Ok(if da >= 0.0 {
        nu * da * dt / 2.0
    } else {
        nu * da * (y - q) as f64 / a_x
    })
}
