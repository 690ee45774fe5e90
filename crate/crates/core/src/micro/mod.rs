//! Microscopic dynamics: fast chaotic backends, the pair potential, the
//! δ-modified coupled system and the abstract averaging testbed.

pub mod averaging;
pub mod cutoff;
pub mod dynamics;
pub mod potential;
pub mod surface;
pub mod torus;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use cutoff::{omega_delta, phi_delta, zeta_delta, CutoffFamily};
pub use dynamics::{micro_ensemble, micro_simulate, MicroBackend, MicroConfig, MicroRecord, MicroState};
pub use potential::BumpPotential;
pub use surface::{BolzaSurface, Frame};
pub use torus::{SuspendedPoint, TorusPoint};

/// Per-site fast state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FastPhase {
    Hyperbolic(Frame),
    Torus(SuspendedPoint),
}

/// Advances the fast state by flow time `speed·h`.
pub fn advance_fast(xi: &FastPhase, speed: f64, h: f64) -> Result<FastPhase> {
    let t = speed * h;
    Ok(match xi {
        FastPhase::Hyperbolic(g) => {
            if t == 0.0 {
                *xi
            } else {
                FastPhase::Hyperbolic(BolzaSurface::get().flow(g, t)?)
            }
        }
        FastPhase::Torus(p) => FastPhase::Torus(p.advance(t)),
    })
}

/// A symmetric pair interaction between fast states.
pub trait PairPotential {
    fn value(&self, x: &FastPhase, y: &FastPhase) -> f64;

    /// Analytic derivative along the unit-speed flow in the first slot, when
    /// available.
    fn current(&self, _x: &FastPhase, _y: &FastPhase) -> Option<f64> {
        None
    }
}

impl PairPotential for BumpPotential {
    fn value(&self, x: &FastPhase, y: &FastPhase) -> f64 {
        match (x, y) {
            (FastPhase::Hyperbolic(a), FastPhase::Hyperbolic(b)) => self.u(a) * self.u(b),
            _ => 0.0,
        }
    }

    fn current(&self, x: &FastPhase, y: &FastPhase) -> Option<f64> {
        match (x, y) {
            (FastPhase::Hyperbolic(a), FastPhase::Hyperbolic(b)) => Some(self.coupling_current(a, b)),
            _ => None,
        }
    }
}

/// Step of the symmetric flow-time difference used without an analytic current.
pub const CURRENT_FD_STEP: f64 = 1e-5;

/// `L_x V(ξ_x, ξ_y)`.
pub fn coupling_current<P: PairPotential + ?Sized>(
    xi_x: &FastPhase,
    xi_y: &FastPhase,
    potential: &P,
) -> Result<f64> {
    if let Some(j) = potential.current(xi_x, xi_y) {
        return Ok(j);
    }
    let fwd = advance_fast(xi_x, 1.0, CURRENT_FD_STEP)?;
    let bwd = advance_fast(xi_x, 1.0, -CURRENT_FD_STEP)?;
    Ok((potential.value(&fwd, xi_y) - potential.value(&bwd, xi_y)) / (2.0 * CURRENT_FD_STEP))
}
