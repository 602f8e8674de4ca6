//! Statistical finite elements for transient elastodynamics.
//!
//! The crate builds stochastic forward models for scalar elastodynamic
//! problems (1D axial bars, 2D anti-plane plates) and assimilates noisy
//! displacement observations with an augmented-state Bayesian filter that
//! jointly infers the dynamic state, the element-wise material field, and
//! forcing-misspecification hyperparameters.
//!
//! Pipeline: [`mesh`] and [`assembly`] discretise the problem, [`field`]
//! constructs Matérn random fields through their stochastic-PDE form,
//! [`dynamics`] provides the stochastic Verlet transition, [`forward`]
//! propagates first-order perturbation moments, [`filter`] runs the
//! sequential prediction/update scheme, [`calibrate`] estimates
//! hyperparameters from the marginal likelihood, [`oracle`] holds
//! independent reference implementations used by the test suites, and
//! [`scenario`] wires full experiment configurations.

pub mod assembly;
pub mod calibrate;
pub mod dynamics;
pub mod error;
pub mod field;
pub mod filter;
pub mod forward;
pub mod mesh;
pub mod oracle;
pub mod scenario;

pub use error::{Error, Result};
