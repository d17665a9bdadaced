//! Finite-time limits of single-photon extraction from emitter-cavity systems.
//!
//! The crate provides four layers:
//!
//! * closed-form upper and lower bounds on the extraction probability of a
//!   single-channel Lambda system at a fixed extraction time ([`bounds`]);
//! * a Fourier-domain description of output wavepackets with quadratic-form
//!   probability functionals, constraint projection, and a fixed-point
//!   optimizer for arbitrary detuning structure ([`spectral`], [`projection`],
//!   [`optimizer`]);
//! * direct time-domain integration of the emitter-cavity equations of motion
//!   for independent verification ([`dynamics`]);
//! * reconstruction of the classical drive pulse that produces a given
//!   wavepacket, with algebraic and dynamical checks ([`drive`]).
//!
//! All numerics are generic over the real scalar through [`scalar::Real`];
//! the aliases at the crate root fix `f64` as the working precision.

pub mod bounds;
pub mod drive;
pub mod dynamics;
pub mod error;
pub mod model;
pub mod optimizer;
pub mod projection;
pub mod scalar;
pub mod spectral;

pub use error::{Error, Result};
pub use scalar::Real;

/// Working-precision system parameters.
pub type SystemParams = model::SystemParams<f64>;
/// Working-precision cavity channel.
pub type CavityChannel = model::CavityChannel<f64>;
/// Working-precision derived quantities.
pub type DerivedQuantities = model::DerivedQuantities<f64>;
/// Working-precision analytic bound result.
pub type AnalyticBoundResult = bounds::AnalyticBoundResult<f64>;
/// Working-precision bound trajectory point.
pub type BoundPoint = bounds::BoundPoint<f64>;
