//! Reaction-network model: stoichiometry, polynomial propensities with
//! boundary clamping, the observable, and the mean-field ODE used for
//! scaling and level-0 mesh sizing.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model has no species")]
    NoSpecies,
    #[error("model has no reactions")]
    NoReactions,
    #[error("reaction {0} has a zero stoichiometric vector")]
    ZeroStoichiometry(usize),
    #[error("reaction {index} propensity is negative at state {state:?}: {value}")]
    NegativePropensity {
        index: usize,
        state: Vec<i64>,
        value: f64,
    },
    #[error("mean-field solution blew up: species {species} exceeded {cap:e} at t = {t}")]
    MeanFieldBlowUp { species: usize, cap: f64, t: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// One monomial `coeff * prod_i x_i^pow_i` of a propensity polynomial.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coeff: f64,
    /// `(species index, power)` factors; empty means a constant term.
    pub powers: Vec<(usize, u32)>,
}

impl Monomial {
    fn eval(&self, x: &[f64]) -> f64 {
        self.powers
            .iter()
            .fold(self.coeff, |acc, &(i, p)| acc * x[i].powi(p as i32))
    }

    /// Partial derivative with respect to species `i`, evaluated at `x`.
    fn deriv(&self, i: usize, x: &[f64]) -> f64 {
        let mut found = false;
        let mut value = self.coeff;
        for &(s, p) in &self.powers {
            if s == i {
                found = true;
                value *= p as f64 * x[s].powi(p as i32 - 1);
            } else {
                value *= x[s].powi(p as i32);
            }
        }
        if found {
            value
        } else {
            0.0
        }
    }
}

/// Propensity of one reaction channel, as declared by the model.
#[derive(Debug, Clone, PartialEq)]
pub enum Propensity {
    /// Mass action: `rate * prod_i x_i (x_i - 1) ... (x_i - m_i + 1)`
    /// over the reactant multiset (combinatorial falling factorials).
    MassAction {
        rate: f64,
        /// `(species index, multiplicity)` of each reactant.
        reactants: Vec<(usize, u32)>,
    },
    /// Explicit polynomial given as a list of monomials.
    Polynomial(Vec<Monomial>),
}

impl Propensity {
    /// Expand to monomial form (falling factorials multiplied out).
    fn to_monomials(&self) -> Vec<Monomial> {
        match self {
            Propensity::Polynomial(ms) => ms.clone(),
            Propensity::MassAction { rate, reactants } => {
                let mut terms = vec![Monomial {
                    coeff: *rate,
                    powers: vec![],
                }];
                for &(species, mult) in reactants {
                    // x (x-1) ... (x-mult+1) as a polynomial in x.
                    let mut ff = vec![0.0, 1.0]; // coefficients of x
                    for k in 1..mult {
                        let mut next = vec![0.0; ff.len() + 1];
                        for (pow, &c) in ff.iter().enumerate() {
                            next[pow + 1] += c;
                            next[pow] -= c * k as f64;
                        }
                        ff = next;
                    }
                    let mut expanded = Vec::new();
                    for term in &terms {
                        for (pow, &c) in ff.iter().enumerate() {
                            if c == 0.0 {
                                continue;
                            }
                            let mut powers = term.powers.clone();
                            if pow > 0 {
                                powers.push((species, pow as u32));
                            }
                            expanded.push(Monomial {
                                coeff: term.coeff * c,
                                powers,
                            });
                        }
                    }
                    terms = expanded;
                }
                terms
            }
        }
    }
}

/// Linear observable `g(x) = w . x`; the gradient is the weight vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    pub weights: Vec<f64>,
}

impl Observable {
    pub fn species(index: usize, d: usize) -> Self {
        let mut weights = vec![0.0; d];
        weights[index] = 1.0;
        Observable { weights }
    }

    pub fn total(d: usize) -> Self {
        Observable {
            weights: vec![1.0; d],
        }
    }

    #[inline]
    pub fn eval(&self, x: &[i64]) -> f64 {
        self.weights
            .iter()
            .zip(x)
            .map(|(w, &v)| w * v as f64)
            .sum()
    }

    pub fn gradient(&self) -> &[f64] {
        &self.weights
    }
}

/// Immutable reaction-network model: `d` species, `J` channels with
/// stoichiometric vectors and polynomial propensities. Propensities are
/// clamped to zero wherever a firing would leave the nonnegative lattice.
#[derive(Debug, Clone)]
pub struct ReactionNetwork {
    species_names: Vec<String>,
    stoich: Vec<Vec<i64>>,
    declared: Vec<Propensity>,
    monomials: Vec<Vec<Monomial>>,
}

impl ReactionNetwork {
    pub fn new(
        species_names: Vec<String>,
        stoich: Vec<Vec<i64>>,
        propensities: Vec<Propensity>,
    ) -> Result<Self, ModelError> {
        if species_names.is_empty() {
            return Err(ModelError::NoSpecies);
        }
        if stoich.is_empty() {
            return Err(ModelError::NoReactions);
        }
        let d = species_names.len();
        for (j, nu) in stoich.iter().enumerate() {
            if nu.len() != d {
                return Err(ModelError::Dimension {
                    expected: d,
                    got: nu.len(),
                });
            }
            if nu.iter().all(|&c| c == 0) {
                return Err(ModelError::ZeroStoichiometry(j));
            }
        }
        if propensities.len() != stoich.len() {
            return Err(ModelError::Dimension {
                expected: stoich.len(),
                got: propensities.len(),
            });
        }
        let monomials = propensities.iter().map(|p| p.to_monomials()).collect();
        Ok(ReactionNetwork {
            species_names,
            stoich,
            declared: propensities,
            monomials,
        })
    }

    pub fn num_species(&self) -> usize {
        self.species_names.len()
    }

    pub fn num_reactions(&self) -> usize {
        self.stoich.len()
    }

    pub fn species_names(&self) -> &[String] {
        &self.species_names
    }

    pub fn stoichiometry(&self, j: usize) -> &[i64] {
        &self.stoich[j]
    }

    pub fn declared_propensity(&self, j: usize) -> &Propensity {
        &self.declared[j]
    }

    /// True if firing channel `j` from `x` stays in the lattice.
    #[inline]
    pub fn firing_stays_nonnegative(&self, x: &[i64], j: usize) -> bool {
        self.stoich[j]
            .iter()
            .zip(x)
            .all(|(&nu, &xi)| xi + nu >= 0)
    }

    /// Raw polynomial value of channel `j` (no clamping).
    pub fn propensity_unclamped(&self, j: usize, x: &[f64]) -> f64 {
        self.monomials[j].iter().map(|m| m.eval(x)).sum()
    }

    /// Clamped propensity vector; `out` must have length `J`.
    pub fn fill_propensities(&self, x: &[i64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.num_reactions());
        let xf: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = if self.firing_stays_nonnegative(x, j) {
                let a = self.propensity_unclamped(j, &xf);
                debug_assert!(a >= 0.0, "negative propensity {a} at {x:?}");
                a.max(0.0)
            } else {
                0.0
            };
        }
    }

    /// Clamped propensities `(a_1(x), ..., a_J(x))`.
    pub fn propensities(&self, x: &[i64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_reactions()];
        self.fill_propensities(x, &mut out);
        out
    }

    /// Like [`propensities`](Self::propensities) but reports a
    /// model-definition error if an unclamped value is negative.
    pub fn checked_propensities(&self, x: &[i64]) -> Result<Vec<f64>, ModelError> {
        let xf: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let mut out = vec![0.0; self.num_reactions()];
        for (j, slot) in out.iter_mut().enumerate() {
            let raw = self.propensity_unclamped(j, &xf);
            if raw < 0.0 {
                return Err(ModelError::NegativePropensity {
                    index: j,
                    state: x.to_vec(),
                    value: raw,
                });
            }
            *slot = if self.firing_stays_nonnegative(x, j) {
                raw
            } else {
                0.0
            };
        }
        Ok(out)
    }

    /// Total propensity `a_0(x)`.
    pub fn total_propensity(&self, x: &[i64]) -> f64 {
        self.propensities(x).iter().sum()
    }

    /// Jacobian row `grad a_j` evaluated at real-valued `x` (unclamped
    /// polynomial gradient, as used by the dual-weight recursion).
    pub fn propensity_gradient(&self, j: usize, x: &[f64], out: &mut [f64]) {
        for (i, g) in out.iter_mut().enumerate() {
            *g = self.monomials[j].iter().map(|m| m.deriv(i, x)).sum();
        }
    }

    /// Mean-field drift `nu a(x)` for real states (no clamping).
    pub fn drift(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.num_reactions() {
            let a = self.propensity_unclamped(j, x).max(0.0);
            for (i, &nu) in self.stoich[j].iter().enumerate() {
                out[i] += nu as f64 * a;
            }
        }
    }

    /// Jacobian of the mean-field drift, `nu J_a`, a `d x d` matrix.
    pub fn drift_jacobian(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let d = self.num_species();
        let mut a = vec![vec![0.0; d]; d];
        let mut grad = vec![0.0; d];
        for j in 0..self.num_reactions() {
            self.propensity_gradient(j, x, &mut grad);
            for (i, out_row) in a.iter_mut().enumerate().take(d) {
                let nu = self.stoich[j][i] as f64;
                if nu == 0.0 {
                    continue;
                }
                for (k, g) in grad.iter().enumerate().take(d) {
                    out_row[k] += nu * g;
                }
            }
        }
        a
    }

    /// Model lints: nonnegativity of clamped propensities over sampled
    /// lattice points near `x0`, plus (optionally) the simplex condition
    /// `(w, nu_j) <= 0` for some positive `w`, which excludes birth
    /// processes and is surfaced as advice only.
    pub fn validate(&self, x0: &[i64], check_simplex: bool) -> Result<Vec<String>, ModelError> {
        let mut notes = Vec::new();
        let d = self.num_species();
        // Deterministic lattice sample: corners and scaled points near x0.
        let mut points: Vec<Vec<i64>> = vec![vec![0; d], x0.to_vec()];
        for scale in [1, 2, 5, 10] {
            let mut p = x0.to_vec();
            for (i, v) in p.iter_mut().enumerate() {
                *v = (*v / scale) + (i as i64 % 3);
            }
            points.push(p);
        }
        for p in &points {
            self.checked_propensities(p)?;
        }
        if check_simplex && !self.simplex_condition_holds() {
            notes.push(
                "no positive weight vector w with (w, nu_j) <= 0 for all reactions; \
                 the state space is not confined to a simplex (expected for birth processes)"
                    .to_string(),
            );
        }
        Ok(notes)
    }

    /// Coarse search for `w > 0` with `(w, nu_j) <= 0` for all `j`.
    fn simplex_condition_holds(&self) -> bool {
        let d = self.num_species();
        let steps = 20usize;
        let mut w = vec![0usize; d];
        loop {
            if w.iter().sum::<usize>() == steps {
                let wf: Vec<f64> = w.iter().map(|&k| k as f64 / steps as f64).collect();
                if wf.iter().all(|&v| v > 0.0)
                    && self.stoich.iter().all(|nu| {
                        nu.iter().zip(&wf).map(|(&n, &v)| n as f64 * v).sum::<f64>() <= 0.0
                    })
                {
                    return true;
                }
            }
            // next composition of `steps` into d parts
            let mut i = 0;
            loop {
                if i == d {
                    return false;
                }
                if w[i] < steps {
                    w[i] += 1;
                    for v in w.iter_mut().take(i) {
                        *v = 0;
                    }
                    break;
                }
                i += 1;
            }
        }
    }
}

/// Apply `k` firings of channel `j`: `x + k nu_j`. The result may leave
/// the nonnegative lattice; exit detection is the caller's contract.
pub fn apply_reaction(x: &[i64], nu_j: &[i64], k: u64) -> Vec<i64> {
    x.iter()
        .zip(nu_j)
        .map(|(&xi, &nu)| xi + nu * k as i64)
        .collect()
}

/// True if every component is nonnegative.
#[inline]
pub fn in_lattice(x: &[i64]) -> bool {
    x.iter().all(|&v| v >= 0)
}

/// Forward-Euler mean-field solution of `x' = nu a(x)` on `[0, T]`.
/// Returns the sampled trajectory `(t_k, x_k)`; errors out if any
/// component exceeds `cap` (blow-up detection).
pub fn mean_field(
    net: &ReactionNetwork,
    x0: &[f64],
    t_final: f64,
    step: f64,
    cap: f64,
) -> Result<Vec<(f64, Vec<f64>)>, ModelError> {
    assert!(step > 0.0 && t_final >= 0.0);
    assert!(x0.iter().all(|&v| v >= 0.0), "x0 must be nonnegative");
    let d = net.num_species();
    let mut x = x0.to_vec();
    let mut out = vec![(0.0, x.clone())];
    let n_steps = (t_final / step).ceil() as usize;
    let mut drift = vec![0.0; d];
    let mut t = 0.0;
    for k in 0..n_steps {
        let h = step.min(t_final - t);
        net.drift(&x, &mut drift);
        for i in 0..d {
            x[i] += h * drift[i];
            if !x[i].is_finite() || x[i].abs() > cap {
                return Err(ModelError::MeanFieldBlowUp {
                    species: i,
                    cap,
                    t,
                });
            }
        }
        t = if k + 1 == n_steps { t_final } else { t + h };
        out.push((t, x.clone()));
    }
    Ok(out)
}

/// Default per-component blow-up cap for the mean-field integrator.
pub const MEAN_FIELD_CAP: f64 = 1e12;

/// A complete problem instance: network plus initial state, horizon and
/// observable (everything a model file declares).
#[derive(Debug, Clone)]
pub struct Model {
    pub network: ReactionNetwork,
    pub x0: Vec<i64>,
    pub t_final: f64,
    pub observable: Observable,
}

impl Model {
    /// The radioactive decay model `X -> 0` at rate `c`, observable `x`.
    pub fn decay(x0: i64, c: f64, t_final: f64) -> Model {
        let network = ReactionNetwork::new(
            vec!["X".into()],
            vec![vec![-1]],
            vec![Propensity::MassAction {
                rate: c,
                reactants: vec![(0, 1)],
            }],
        )
        .expect("decay model is well formed");
        Model {
            network,
            x0: vec![x0],
            t_final,
            observable: Observable::species(0, 1),
        }
    }

    /// Gene transcription and translation: five channels over (R, P, D),
    /// rates (25, 1e3, 1e-3, 0.1, 1), observable `D`, horizon T = 1.
    pub fn gene_transcription() -> Model {
        let network = ReactionNetwork::new(
            vec!["R".into(), "P".into(), "D".into()],
            vec![
                vec![1, 0, 0],
                vec![0, 1, 0],
                vec![0, -2, 1],
                vec![-1, 0, 0],
                vec![0, -1, 0],
            ],
            vec![
                Propensity::MassAction {
                    rate: 25.0,
                    reactants: vec![],
                },
                Propensity::MassAction {
                    rate: 1000.0,
                    reactants: vec![(0, 1)],
                },
                Propensity::MassAction {
                    rate: 0.001,
                    reactants: vec![(1, 2)],
                },
                Propensity::MassAction {
                    rate: 0.1,
                    reactants: vec![(0, 1)],
                },
                Propensity::MassAction {
                    rate: 1.0,
                    reactants: vec![(1, 1)],
                },
            ],
        )
        .expect("gene model is well formed");
        Model {
            network,
            x0: vec![0, 0, 0],
            t_final: 1.0,
            observable: Observable::species(2, 3),
        }
    }
}
