//! The cat map `(u₁, u₂) ↦ (2u₁ + u₂, u₁ + u₂)` on the torus.
//!
//! Coordinates are stored as fixed-point `u64` fractions of one, so the map
//! is exact wrapping integer arithmetic and Lebesgue measure is preserved
//! on the dyadic lattice. Continuous time uses the suspension flow: the
//! phase accumulates `speed·h` and the map fires once per unit of phase.

use rand::Rng;
use serde::{Deserialize, Serialize};

const SCALE: f64 = 1.0 / 18_446_744_073_709_551_616.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusPoint {
    pub u: [u64; 2],
}

impl TorusPoint {
    pub fn from_unit(x: f64, y: f64) -> Self {
        let to = |v: f64| (v.rem_euclid(1.0) / SCALE) as u64;
        Self { u: [to(x), to(y)] }
    }

    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            u: [rng.random(), rng.random()],
        }
    }

    /// Coordinates in `[0, 1)`.
    #[inline]
    pub fn coords(&self) -> (f64, f64) {
        (self.u[0] as f64 * SCALE, self.u[1] as f64 * SCALE)
    }

    #[inline]
    pub fn cat(&self) -> Self {
        let [a, b] = self.u;
        Self {
            u: [a.wrapping_mul(2).wrapping_add(b), a.wrapping_add(b)],
        }
    }

    #[inline]
    pub fn cat_inverse(&self) -> Self {
        let [a, b] = self.u;
        Self {
            u: [a.wrapping_sub(b), b.wrapping_mul(2).wrapping_sub(a)],
        }
    }

    pub fn iterate(&self, n: u64) -> Self {
        (0..n).fold(*self, |p, _| p.cat())
    }
}

/// Point of the suspension: base point and phase in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuspendedPoint {
    pub base: TorusPoint,
    pub phase: f64,
}

impl SuspendedPoint {
    pub fn advance(&self, time: f64) -> Self {
        let total = self.phase + time;
        let jumps = total.floor();
        let mut base = self.base;
        if jumps >= 0.0 {
            for _ in 0..jumps as u64 {
                base = base.cat();
            }
        } else {
            for _ in 0..(-jumps) as u64 {
                base = base.cat_inverse();
            }
        }
        Self {
            base,
            phase: total - jumps,
        }
    }
}

/// `cos(2π u₁)`.
#[inline]
pub fn cosine_observable(p: &TorusPoint) -> f64 {
    (2.0 * std::f64::consts::PI * p.coords().0).cos()
}

/// The coboundary `g∘f - g` of `g = cos(2π u₁)`.
#[inline]
pub fn coboundary_observable(p: &TorusPoint) -> f64 {
    cosine_observable(&p.cat()) - cosine_observable(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn map_and_inverse() {
        let mut rng = stream(0, "torus-test", 0);
        for _ in 0..100 {
            let p = TorusPoint::sample(&mut rng);
            assert_eq!(p.cat().cat_inverse(), p);
        }
        let p = TorusPoint::from_unit(0.25, 0.5);
        let (x, y) = p.cat().coords();
        assert!((x - 0.0).abs() < 1e-15 && (y - 0.75).abs() < 1e-15);
    }

    #[test]
    fn suspension_counts_jumps() {
        let p = SuspendedPoint {
            base: TorusPoint::from_unit(0.1, 0.2),
            phase: 0.5,
        };
        assert_eq!(p.advance(0.0), p);
        let q = p.advance(2.75);
        assert_eq!(q.base, p.base.iterate(3));
        assert!((q.phase - 0.25).abs() < 1e-15);
        assert_eq!(q.advance(-2.75).base, p.base);
    }

    #[test]
    fn cosine_autocorrelation_decays() {
        let mut rng = stream(1, "torus-test", 0);
        let n = 200_000;
        let mut lag_sums = [0.0f64; 21];
        for _ in 0..n {
            let mut p = TorusPoint::sample(&mut rng);
            let a0 = cosine_observable(&p);
            for s in lag_sums.iter_mut() {
                *s += a0 * cosine_observable(&p);
                p = p.cat();
            }
        }
        let c0 = lag_sums[0] / n as f64;
        assert!((c0 - 0.5).abs() < 0.01);
        for s in &lag_sums[1..] {
            assert!((s / n as f64).abs() / c0 < 0.01);
        }
    }
}
