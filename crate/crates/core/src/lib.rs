//! Linear simultaneous position–momentum measurements on Gaussian states.
//!
//! The crate models a system mode coupled to a two-mode probe through a
//! bilinear interaction, propagates the quadratures in the Heisenberg
//! picture and evaluates noise-operator errors, error-trade-off bounds,
//! joint outcome distributions and posterior states. All states are
//! Gaussian, so everything is expressed through first and second moments.
//!
//! Modules:
//! - [`quadrature`]: linear observables, commutators, Gaussian states.
//! - [`dynamics`]: generators, closed-form and numeric exponentials.
//! - [`measurement`]: measurement models, errors, bounds, theorem checks.
//! - [`statistics`]: joint distributions, conditioning, sampling, posteriors.
//! - [`random`]: random solvable models and physical probes for fuzzing.
//! - [`par`]: data-parallel helpers with a sequential fallback.

pub mod dynamics;
pub mod error;
pub mod measurement;
pub mod par;
pub mod quadrature;
pub mod random;
pub mod statistics;

pub use error::{Error, Result};
pub use quadrature::{LinearObservable, MinUncertaintyParams, GaussianState};
pub use dynamics::{InteractionParams, PropagatedTransform, SolvableGenerator};
pub use measurement::{ErrorPair, LinearSimultaneousMeasurement, ModelFamily, TheoremReport};
pub use statistics::{JointGaussian, OutcomeRegion, PosteriorFamily};
