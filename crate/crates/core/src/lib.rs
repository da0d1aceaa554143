//! Hybrid Chernoff tau-leap simulation of stochastic reaction networks,
//! with a multilevel Monte Carlo estimator for `E[g(X(T))]` under a
//! prescribed relative tolerance.
//!
//! The building blocks are exposed as individual modules so they can be
//! used on their own; see the `examples/` directory for one runnable
//! program per capability:
//!
//! - [`network`]: reaction-network model, propensities, mean-field ODE
//! - [`exact`]: exact path simulation (Modified Next Reaction Method, SSA)
//! - [`chernoff`]: largest tau-leap step with bounded one-step exit probability
//! - [`hybrid`]: single hybrid exact/tau-leap paths with work accounting
//! - [`coupling`]: coupled hybrid paths on nested meshes
//! - [`duals`]: dual-weighted residual estimators for bias and level variance
//! - [`workmodel`]: machine-dependent cost constants (phase I)
//! - [`mlmc`]: hierarchy calibration, sample allocation, and estimation
//! - [`oracle`]: brute-force and analytic validators used by the test suite

pub mod chernoff;
pub mod cli;
pub mod coupling;
pub mod duals;
pub mod exact;
pub mod hybrid;
pub mod mesh;
pub mod mlmc;
pub mod model_file;
pub mod network;
pub mod oracle;
pub mod poisson;
pub mod report;
pub mod rng;
pub mod stats;
pub mod workmodel;

pub use mesh::Mesh;
pub use network::{Model, Observable, ReactionNetwork};
pub use rng::PathRng;
pub use workmodel::MachineConstants;
