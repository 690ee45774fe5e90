//! Energy exchange between weakly coupled chaotic geodesic flows.
//!
//! The crate works on two levels:
//!
//! * the microscopic fast–slow Hamiltonian dynamics of geodesic flows on a
//!   compact hyperbolic surface, coupled by a weak pair potential and
//!   modified below an energy cutoff ([`micro`]);
//! * the mesoscopic energy diffusion obtained in the weak-coupling limit,
//!   integrated on arbitrary interaction graphs ([`sde`]).
//!
//! The two are linked by Green–Kubo correlation integrals ([`greenkubo`])
//! that determine the diffusion coefficients ([`coeffs`]). The [`verify`]
//! module holds the statistical harness checking conservation, Gibbs
//! invariance, reversibility and unreachability of zero energy.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coeffs;
pub mod error;
pub mod greenkubo;
pub mod io;
pub mod micro;
pub mod rng;
pub mod sde;
pub mod stats;
pub mod topology;
pub mod verify;

pub use coeffs::{CoefficientModel, CoefficientPairValues, GammaTable};
pub use error::{Error, Result};
pub use sde::{EnergyState, SdeRunConfig, TrajectoryRecord};
pub use topology::InteractionGraph;
