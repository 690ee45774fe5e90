//! Low-energy cutoff functions.
//!
//! With `x = ln s` and `L = ln 8`, `g = ln φ_δ` is
//!
//! ```text
//! g(x) = x/2 - ln δ / 2      for x ≤ ln δ - L
//! g(x) = (L/2)(-1 + t + 4t³ - 7t⁴ + 3t⁵),  t = (x - ln δ + L)/L ∈ [0,1]
//! g(x) = 0                   for x ≥ ln δ
//! ```
//!
//! The window polynomial is the quintic Hermite interpolant matching value,
//! first and second derivative at both ends, so `φ_δ` is C². Its slope
//! `dg/dx = p(t)/2` with `p = 1 + 12t² - 28t³ + 15t⁴ ≥ 0`, so `φ_δ` is
//! nondecreasing. The derived speeds satisfy `ω_δ ≥ 1.15 √δ` and `ζ_δ ≥ 0`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Result};

const LN8: f64 = 2.079_441_541_679_835_8;

// 16-point Gauss–Legendre nodes and weights on [-1, 1] (positive half).
const GL_X: [f64; 8] = [
    0.095_012_509_837_637_44,
    0.281_603_550_779_258_9,
    0.458_016_777_657_227_4,
    0.617_876_244_402_643_7,
    0.755_404_408_355_003,
    0.865_631_202_387_831_8,
    0.944_575_023_073_232_6,
    0.989_400_934_991_649_9,
];
const GL_W: [f64; 8] = [
    0.189_450_610_455_068_5,
    0.182_603_415_044_923_6,
    0.169_156_519_395_002_5,
    0.149_595_988_816_576_7,
    0.124_628_971_255_533_9,
    0.095_158_511_682_492_78,
    0.062_253_523_938_647_89,
    0.027_152_459_411_754_09,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffFamily {
    delta: f64,
    #[serde(skip)]
    ln_delta: f64,
    /// `ϕ_δ(δ)`; above the cutoff `ϕ_δ(s) = s - δ + big_phi_at_delta`.
    #[serde(skip)]
    big_phi_at_delta: f64,
}

impl CutoffFamily {
    pub fn new(delta: f64) -> Result<Self> {
        ensure_positive("delta", delta)?;
        let mut c = Self {
            delta,
            ln_delta: delta.ln(),
            big_phi_at_delta: 0.0,
        };
        c.big_phi_at_delta = c.big_phi_window(delta);
        Ok(c)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `(g, dg/dx)` at `x = ln s`.
    #[inline]
    fn log_phi(&self, x: f64) -> (f64, f64) {
        if x >= self.ln_delta {
            return (0.0, 0.0);
        }
        let lo = self.ln_delta - LN8;
        if x <= lo {
            return (0.5 * (x - self.ln_delta), 0.5);
        }
        let t = (x - lo) / LN8;
        let t2 = t * t;
        let g = 0.5 * LN8 * (-1.0 + t + t2 * t * (4.0 - 7.0 * t + 3.0 * t2));
        let p = 1.0 + t2 * (12.0 - 28.0 * t + 15.0 * t2);
        (g, 0.5 * p)
    }

    /// `φ_δ(s)`; `s > 0` is the caller's responsibility.
    #[inline]
    pub fn phi(&self, s: f64) -> f64 {
        if s >= self.delta {
            1.0
        } else {
            self.log_phi(s.ln()).0.exp()
        }
    }

    /// `dφ_δ/ds`.
    #[inline]
    pub fn phi_prime(&self, s: f64) -> f64 {
        if s >= self.delta {
            return 0.0;
        }
        let (g, gp) = self.log_phi(s.ln());
        g.exp() * gp / s
    }

    /// `ϕ_δ` with `ϕ_δ' = 1/φ_δ` and `ϕ_δ(s) = 2√(δ s)` for `s ≤ δ/8`.
    pub fn big_phi(&self, s: f64) -> f64 {
        if s >= self.delta {
            s - self.delta + self.big_phi_at_delta
        } else {
            self.big_phi_window(s)
        }
    }

    fn big_phi_window(&self, s: f64) -> f64 {
        let s_lo = self.delta / 8.0;
        let base = 2.0 * (self.delta * s_lo).sqrt();
        if s <= s_lo {
            return 2.0 * (self.delta * s).sqrt();
        }
        // ∫_{ln s_lo}^{ln s} e^{x - g(x)} dx
        let (a, b) = (s_lo.ln(), s.ln());
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        let f = |x: f64| (x - self.log_phi(x).0).exp();
        let mut acc = 0.0;
        for (xi, wi) in GL_X.iter().zip(GL_W) {
            acc += wi * (f(mid + half * xi) + f(mid - half * xi));
        }
        base + half * acc
    }

    /// `ω_δ(z) = √2 e^{z/2} / φ_δ(e^z)`.
    #[inline]
    pub fn omega(&self, z: f64) -> f64 {
        let (g, _) = self.log_phi(z);
        std::f64::consts::SQRT_2 * (0.5 * z - g).exp()
    }

    /// `dω_δ/dz`.
    #[inline]
    pub fn omega_prime(&self, z: f64) -> f64 {
        let (g, gp) = self.log_phi(z);
        std::f64::consts::SQRT_2 * (0.5 * z - g).exp() * (0.5 - gp)
    }

    /// `ζ_δ(z) = √2 e^{z/2} φ_δ'(e^z)`.
    #[inline]
    pub fn zeta(&self, z: f64) -> f64 {
        let (g, gp) = self.log_phi(z);
        std::f64::consts::SQRT_2 * (g - 0.5 * z).exp() * gp
    }

    /// `(φ, s φ'(s)/φ)` at `s = e^z`, the pieces the log-coordinate drift needs.
    #[inline]
    pub(crate) fn phi_and_log_slope(&self, z: f64) -> (f64, f64) {
        let (g, gp) = self.log_phi(z);
        (g.exp(), gp)
    }
}

pub fn phi_delta(s: f64, delta: f64) -> Result<f64> {
    ensure_positive("s", s)?;
    Ok(CutoffFamily::new(delta)?.phi(s))
}

pub fn omega_delta(z: f64, delta: f64) -> Result<f64> {
    Ok(CutoffFamily::new(delta)?.omega(z))
}

pub fn zeta_delta(z: f64, delta: f64) -> Result<f64> {
    Ok(CutoffFamily::new(delta)?.zeta(z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn regime_values() {
        let d = 0.01;
        assert_eq!(phi_delta(d, d).unwrap(), 1.0);
        assert!((phi_delta(d / 8.0, d).unwrap() - 1.0 / 8f64.sqrt()).abs() < 1e-14);
        assert!((omega_delta(d.ln() - 8f64.ln(), d).unwrap() - (2.0 * d).sqrt()).abs() < 1e-14);
        assert!((omega_delta(0.3, d).unwrap() - 2f64.sqrt() * 0.15f64.exp()).abs() < 1e-14);
        assert_eq!(zeta_delta(d.ln(), d).unwrap(), 0.0);
        assert!((zeta_delta(d.ln() - 3.0, d).unwrap() - 1.0 / (2.0 * d).sqrt()).abs() < 1e-12);
        assert!(phi_delta(0.0, d).is_err());
        assert!(phi_delta(1.0, -d).is_err());
    }

    #[test]
    fn c2_matching_at_window_ends() {
        let c = CutoffFamily::new(0.1).unwrap();
        for x in [c.ln_delta, c.ln_delta - LN8] {
            let h = 1e-5;
            let (gm, dm) = c.log_phi(x - h);
            let (gp, dp) = c.log_phi(x + h);
            assert!((gp - gm).abs() < 2e-5);
            assert!((dp - dm).abs() < 1e-8, "slope jump at {x}");
        }
    }

    #[test]
    fn big_phi_derivative_is_reciprocal_of_phi() {
        let c = CutoffFamily::new(0.2).unwrap();
        for s in [0.01, 0.03, 0.05, 0.1, 0.15, 0.199, 0.3, 2.0] {
            let h = 1e-6 * s;
            let d = (c.big_phi(s + h) - c.big_phi(s - h)) / (2.0 * h);
            assert!((d * c.phi(s) - 1.0).abs() < 1e-6, "s={s}");
        }
        // Continuity across the upper end.
        let d = c.delta();
        assert!((c.big_phi(d * (1.0 - 1e-12)) - c.big_phi(d)).abs() < 1e-12);
    }

    #[test]
    fn omega_derivative_matches_finite_difference() {
        let c = CutoffFamily::new(0.05).unwrap();
        for z in [-6.0, -4.0, -3.5, -3.2, -2.5, 0.0] {
            let h = 1e-6;
            let fd = (c.omega(z + h) - c.omega(z - h)) / (2.0 * h);
            assert!((fd - c.omega_prime(z)).abs() < 1e-7);
            let phi_fd = (c.phi((z + h).exp()) - c.phi((z - h).exp())) / (2.0 * h);
            assert!((phi_fd - z.exp() * c.phi_prime(z.exp())).abs() < 1e-7);
        }
    }

    proptest! {
        #[test]
        fn cutoff_sanity(delta in 1e-4f64..0.9, u in -12.0f64..3.0, du in 0.0f64..1.0) {
            let c = CutoffFamily::new(delta).unwrap();
            let z = delta.ln() + u;
            let s = z.exp();
            let phi = c.phi(s);
            prop_assert!(phi > 0.0 && phi <= 1.0);
            prop_assert!(c.phi((z + du).exp()) >= phi);
            prop_assert!(c.omega(z) >= delta.sqrt());
            prop_assert!(c.zeta(z) >= 0.0);
            if z >= delta.ln() {
                prop_assert_eq!(c.zeta(z), 0.0);
            }
        }
    }
}
