//! Product pair potential `V(q₁, q₂) = u(q₁) u(q₂)` on the Bolza surface.
//!
//! `u = amplitude · (ψ(cosh d(q, i)) - m)` with the bump
//! `ψ(c) = (1 - (c - 1)/(c₀ - 1))⁴` for `c < c₀ = cosh r₀` and `0` beyond.
//! The centring constant `m = (c₀ - 1)/10` is the exact surface average of
//! `ψ`, so `u` has zero mean. `r₀` must be below the inradius, which keeps
//! the support inside the octagon and makes `u` a well-defined `C³`
//! function on the surface.

use serde::{Deserialize, Serialize};

use super::surface::{BolzaSurface, Frame};
use crate::error::{ensure_positive, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpPotential {
    pub amplitude: f64,
    pub radius: f64,
}

impl Default for BumpPotential {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            radius: 1.4,
        }
    }
}

/// Values of `u` and its derivatives along and across the flow direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteField {
    pub u: f64,
    /// Derivative along the unit tangent.
    pub along: f64,
    /// Derivative along the tangent turned by `+π/2`.
    pub across: f64,
}

impl BumpPotential {
    pub fn new(amplitude: f64, radius: f64) -> Result<Self> {
        if !amplitude.is_finite() {
            return Err(Error::arg("amplitude", "must be finite"));
        }
        ensure_positive("radius", radius)?;
        if radius.cosh() >= BolzaSurface::get().cosh_inradius() {
            return Err(Error::arg(
                "radius",
                format!("must be below the inradius {:.6}", BolzaSurface::get().cosh_inradius().acosh()),
            ));
        }
        Ok(Self { amplitude, radius })
    }

    fn c0(&self) -> f64 {
        self.radius.cosh()
    }

    pub fn mean_bump(&self) -> f64 {
        (self.c0() - 1.0) / 10.0
    }

    #[inline]
    fn bump(&self, c: f64) -> (f64, f64) {
        let w = self.c0() - 1.0;
        let x = (c - 1.0) / w;
        if x >= 1.0 {
            return (0.0, 0.0);
        }
        let m = 1.0 - x;
        let m3 = m * m * m;
        (m3 * m, -4.0 * m3 / w)
    }

    #[inline]
    pub fn u(&self, g: &Frame) -> f64 {
        let (x, y) = g.point();
        let c = (x * x + y * y + 1.0) / (2.0 * y);
        self.amplitude * (self.bump(c).0 - self.mean_bump())
    }

    #[inline]
    pub fn field(&self, g: &Frame) -> SiteField {
        let (x, y) = g.point();
        let c = (x * x + y * y + 1.0) / (2.0 * y);
        let (psi, dpsi) = self.bump(c);
        let u = self.amplitude * (psi - self.mean_bump());
        if dpsi == 0.0 {
            return SiteField {
                u,
                along: 0.0,
                across: 0.0,
            };
        }
        let cx = x / y;
        let cy = (y * y - x * x - 1.0) / (2.0 * y * y);
        let (vx, vy) = g.tangent();
        let k = self.amplitude * dpsi;
        SiteField {
            u,
            along: k * (cx * vx + cy * vy),
            across: k * (-cx * vy + cy * vx),
        }
    }

    /// `L_x V(ξ_x, ξ_y)`: derivative of `V` along the unit-speed flow in the
    /// first slot.
    #[inline]
    pub fn coupling_current(&self, xi_x: &Frame, xi_y: &Frame) -> f64 {
        self.field(xi_x).along * self.u(xi_y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::stats::mean_and_se;

    #[test]
    fn radius_must_fit_in_octagon() {
        assert!(BumpPotential::new(1.0, 1.6).is_err());
        assert!(BumpPotential::new(1.0, 0.0).is_err());
        assert!(BumpPotential::new(1.0, 1.4).is_ok());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let p = BumpPotential::new(1.7, 1.4).unwrap();
        let s = BolzaSurface::get();
        let mut rng = stream(0, "potential-test", 0);
        let mut checked = 0;
        while checked < 50 {
            let g = s.sample_uniform(&mut rng);
            let f = p.field(&g);
            if f.along == 0.0 && f.across == 0.0 {
                continue;
            }
            let h = 1e-5;
            let fd = (p.u(&g.flow(h)) - p.u(&g.flow(-h))) / (2.0 * h);
            assert!((fd - f.along).abs() < 1e-7, "{fd} {}", f.along);
            let gp = g.mul(&Frame::rotation(std::f64::consts::FRAC_PI_4));
            let fd = (p.u(&gp.flow(h)) - p.u(&gp.flow(-h))) / (2.0 * h);
            assert!((fd - f.across).abs() < 1e-7);
            checked += 1;
        }
    }

    #[test]
    fn constant_potential_has_no_current() {
        let p = BumpPotential::new(0.0, 1.0).unwrap();
        let s = BolzaSurface::get();
        let mut rng = stream(1, "potential-test", 0);
        let (a, b) = (s.sample_uniform(&mut rng), s.sample_uniform(&mut rng));
        assert_eq!(p.coupling_current(&a, &b), 0.0);
    }

    #[test]
    fn current_is_odd_under_reversal() {
        let p = BumpPotential::default();
        let s = BolzaSurface::get();
        let mut rng = stream(2, "potential-test", 0);
        for _ in 0..100 {
            let (a, b) = (s.sample_uniform(&mut rng), s.sample_uniform(&mut rng));
            let j = p.coupling_current(&a, &b);
            let jr = p.coupling_current(&a.reversed(), &b);
            assert!((j + jr).abs() <= 1e-6 * (1.0 + j.abs()));
        }
    }

    #[test]
    fn zero_mean_field_and_current() {
        let p = BumpPotential::default();
        let s = BolzaSurface::get();
        let mut rng = stream(3, "potential-test", 0);
        let n = 100_000;
        let mut us = Vec::with_capacity(n);
        let mut js = Vec::with_capacity(n);
        for _ in 0..n {
            let (a, b) = (s.sample_uniform(&mut rng), s.sample_uniform(&mut rng));
            us.push(p.u(&a));
            js.push(p.coupling_current(&a, &b));
        }
        for xs in [us, js] {
            let e = mean_and_se(&xs);
            assert!(e.mean.abs() < 4.0 * e.stderr, "{e:?}");
        }
    }
}
