//! Embedded Runge–Kutta integration with two competing step-size controllers.
//!
//! The numerical core ([`tableau`], [`control`], [`integrator`], [`problems`])
//! is generic over the scalar type through [`Real`]; the aliases below fix it
//! to `f64`, which is what the benchmark layers ([`workbench`], [`tuner`]) use.
//!
//! ```
//! use rk_stepsize::{integrate, global_error, problems, ControllerKind, ControllerParams,
//!     IntegrationLimits, ParamSet};
//!
//! let a1 = problems::get::<f64>("A1")?;
//! let params = ControllerParams::dp54(ControllerKind::New, 1e-6, ParamSet::NewOptimized)?;
//! let stats = integrate(&a1, &params, &IntegrationLimits::default())?;
//! assert_eq!(stats.n_fevals, 1 + 6 * (stats.n_accepted + stats.n_rejected));
//! assert!(global_error(&a1, &stats)? < 1e-5);
//! # Ok::<(), rk_stepsize::Error>(())
//! ```

// `!(a < b)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod error;
pub mod integrator;
pub mod problems;
pub mod scalar;
pub mod tableau;
pub mod tuner;
pub mod workbench;

pub use control::{
    accept, clamp, decide, propose, ControllerKind, ControllerParams, ParamSet, ParamTriple,
    StepDecision,
};
pub use error::{Error, Result};
pub use integrator::{global_error, initial_step, integrate, integrate_with, IntegrationLimits};
pub use problems::{OdeProblem, Registry};
pub use scalar::Real;
pub use tableau::{dp54_tableau, embedded_step, validate_tableau, EmbeddedTableau, ValidationReport};

pub type Tableau = EmbeddedTableau<f64>;
pub type StepOutcome = tableau::StepOutcome<f64>;
pub type Controller = ControllerParams<f64>;
pub type Problem = OdeProblem<f64>;
pub type IntegrationStats = integrator::IntegrationStats<f64>;
pub type StepRecord = integrator::StepRecord<f64>;

pub type Tableau32 = EmbeddedTableau<f32>;
pub type Controller32 = ControllerParams<f32>;
pub type Problem32 = OdeProblem<f32>;
