//! Phase shifts of matter-wave interferometers in nontrivial gravitational
//! fields, computed from the potential integral, the field energy and a
//! semiclassical expectation-value model, together with quantum
//! reference-frame transformations and the fit statistics that separate
//! the models.

pub mod analysis;
pub mod constants;
pub mod error;
pub mod grid;
pub mod kinematics;
pub mod ode;
pub mod phase;
pub mod qrf;
pub mod scenario;
pub mod sources;
pub mod trajectory;

pub use constants::Constants;
pub use error::{Error, Result};
pub use grid::{integrate_time, refine_until_converged, TimeGrid};
pub use trajectory::Trajectory;

/// Positions, velocities and fields.
pub type Vec3 = nalgebra::Vector3<f64>;
