//! Green–Kubo correlation functions and the coefficients of the energy SDE.
//!
//! Everything is derived from the single-variable curve `Γ(τ) = ρ(τ, 1)`:
//!
//! ```text
//! ρ(a, b)   = Γ(a/b) / b                     (homogeneous of degree -1)
//! ρ̃(a, b)   = -(a/b) ρ(a, b)
//! β²(Ex,Ey) = Ex ρ(√(2Ex), √(2Ey))
//! G(Ex,Ey)  = β² / (Ex Ey)
//! ā(Ex,Ey)  = (∂x - ∂y) β² + (d-2)/2 (1/Ex - 1/Ey) β²
//! ```
//!
//! `ρ` is never tabulated in two variables, so homogeneity holds by
//! construction in both the analytic and the tabulated variant.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};

/// Step in `ln E` for the central differences used with tabulated curves.
pub const LOG_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaTable {
    pub tau: Vec<f64>,
    pub gamma: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<Vec<f64>>,
    #[serde(skip)]
    slopes: Vec<f64>,
}

impl GammaTable {
    pub fn new(tau: Vec<f64>, gamma: Vec<f64>, stderr: Option<Vec<f64>>) -> Result<Self> {
        if tau.len() < 2 {
            return Err(Error::Table("need at least two grid points".into()));
        }
        if gamma.len() != tau.len() || stderr.as_ref().is_some_and(|s| s.len() != tau.len()) {
            return Err(Error::Table("column lengths differ".into()));
        }
        if tau.iter().any(|&t| !(t.is_finite() && t > 0.0)) {
            return Err(Error::Table("tau must be finite and positive".into()));
        }
        if tau.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Table("tau grid must be strictly increasing".into()));
        }
        if gamma.iter().any(|&g| !(g.is_finite() && g >= 0.0)) {
            return Err(Error::Table("gamma values must be finite and nonnegative".into()));
        }
        let mut t = Self {
            tau,
            gamma,
            stderr,
            slopes: Vec::new(),
        };
        t.slopes = t.pchip_slopes();
        Ok(t)
    }

    /// Geometric grid `lo · (hi/lo)^(i/(n-1))`.
    pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        let r = (hi / lo).ln();
        (0..n)
            .map(|i| lo * (r * i as f64 / (n - 1) as f64).exp())
            .collect()
    }

    /// The default grid: 129 points from 1/64 to 64.
    pub fn default_grid() -> Vec<f64> {
        Self::geometric_grid(1.0 / 64.0, 64.0, 129)
    }

    pub fn tau_min(&self) -> f64 {
        self.tau[0]
    }

    pub fn tau_max(&self) -> f64 {
        *self.tau.last().unwrap()
    }

    // Fritsch–Carlson monotone slopes in (ln τ, Γ).
    fn pchip_slopes(&self) -> Vec<f64> {
        let n = self.tau.len();
        let x: Vec<f64> = self.tau.iter().map(|t| t.ln()).collect();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1)
            .map(|i| (self.gamma[i + 1] - self.gamma[i]) / h[i])
            .collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = delta[0];
            d[1] = delta[0];
            return d;
        }
        for i in 1..n - 1 {
            if delta[i - 1] * delta[i] > 0.0 {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
            let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
            if s * d0 <= 0.0 {
                0.0
            } else if d0 * d1 <= 0.0 && s.abs() > 3.0 * d0.abs() {
                3.0 * d0
            } else {
                s
            }
        };
        d[0] = end(h[0], h[1], delta[0], delta[1]);
        d[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        d
    }

    /// Interpolated value and `dΓ/dτ`, with the tail conventions applied.
    pub fn eval(&self, tau: f64) -> (f64, f64) {
        let (lo, hi) = (self.tau_min(), self.tau_max());
        if tau <= lo {
            return (self.gamma[0], 0.0);
        }
        if tau >= hi {
            let g = *self.gamma.last().unwrap() * (hi / tau).powi(3);
            return (g, -3.0 * g / tau);
        }
        let i = match self.tau.partition_point(|&t| t <= tau) {
            0 => 0,
            k => (k - 1).min(self.tau.len() - 2),
        };
        let x0 = self.tau[i].ln();
        let h = self.tau[i + 1].ln() - x0;
        let s = (tau.ln() - x0) / h;
        let (y0, y1) = (self.gamma[i], self.gamma[i + 1]);
        let (d0, d1) = (self.slopes[i] * h, self.slopes[i + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        let value = (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * d0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * d1;
        let dvalue_ds = (6.0 * s2 - 6.0 * s) * y0
            + (3.0 * s2 - 4.0 * s + 1.0) * d0
            + (-6.0 * s2 + 6.0 * s) * y1
            + (3.0 * s2 - 2.0 * s) * d1;
        (value, dvalue_ds / (h * tau))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GammaCurve {
    /// `Γ(τ) = A / (1 + τ³)`.
    Analytic,
    EmpiricalTable(GammaTable),
}

/// The coefficient functions of the energy SDE together with the constants
/// `A` (Green–Kubo amplitude, `Γ(0) = A`), `B` (correction bound) and the
/// manifold dimension `d` entering the drift.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientModel {
    amplitude: f64,
    correction: f64,
    slope_at_zero: Option<f64>,
    dim: u32,
    curve: GammaCurve,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoefficientPairValues {
    pub rho: f64,
    pub rho_tilde: f64,
    pub beta_sq: f64,
    pub drift: f64,
}

impl CoefficientModel {
    pub fn analytic(amplitude: f64, dim: u32) -> Result<Self> {
        ensure_positive("A", amplitude)?;
        if dim < 2 {
            return Err(Error::arg("d", format!("manifold dimension must be >= 2, got {dim}")));
        }
        Ok(Self {
            amplitude,
            correction: 0.0,
            slope_at_zero: None,
            dim,
            curve: GammaCurve::Analytic,
        })
    }

    /// Model backed by a tabulated curve. `A` is the left-tail value
    /// `Γ(τ_min)`, and `B` is the smallest constant with
    /// `|Γ(τ) - A/(1+τ³)| ≤ B τ/(1+τ⁵)` on the grid.
    pub fn from_table(table: GammaTable, dim: u32) -> Result<Self> {
        if dim < 2 {
            return Err(Error::arg("d", format!("manifold dimension must be >= 2, got {dim}")));
        }
        let amplitude = table.gamma[0];
        ensure_positive("A", amplitude)?;
        let correction = table
            .tau
            .iter()
            .zip(&table.gamma)
            .map(|(&t, &g)| (g - amplitude / (1.0 + t.powi(3))).abs() * (1.0 + t.powi(5)) / t)
            .fold(0.0, f64::max);
        Ok(Self {
            amplitude,
            correction,
            slope_at_zero: None,
            dim,
            curve: GammaCurve::EmpiricalTable(table),
        })
    }

    pub fn with_dim(mut self, dim: u32) -> Result<Self> {
        if dim < 2 {
            return Err(Error::arg("d", format!("manifold dimension must be >= 2, got {dim}")));
        }
        self.dim = dim;
        Ok(self)
    }

    /// Records the slope constant `D` of `Γ'(τ) ≈ Dτ` near 0. It plays no
    /// role in the limit equation.
    pub fn with_slope_at_zero(mut self, d: f64) -> Self {
        self.slope_at_zero = Some(d);
        self
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn correction(&self) -> f64 {
        self.correction
    }

    pub fn slope_at_zero(&self) -> Option<f64> {
        self.slope_at_zero
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn curve(&self) -> &GammaCurve {
        &self.curve
    }

    pub fn is_analytic(&self) -> bool {
        matches!(self.curve, GammaCurve::Analytic)
    }

    pub fn gamma(&self, tau: f64) -> Result<f64> {
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(Error::arg("tau", format!("must be finite and >= 0, got {tau}")));
        }
        Ok(self.gamma_unchecked(tau).0)
    }

    /// `Γ'(τ)`.
    pub fn gamma_prime(&self, tau: f64) -> Result<f64> {
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(Error::arg("tau", format!("must be finite and >= 0, got {tau}")));
        }
        Ok(self.gamma_unchecked(tau).1)
    }

    #[inline]
    fn gamma_unchecked(&self, tau: f64) -> (f64, f64) {
        match &self.curve {
            GammaCurve::Analytic => {
                let t2 = tau * tau;
                let den = 1.0 + t2 * tau;
                let g = self.amplitude / den;
                (g, -3.0 * self.amplitude * t2 / (den * den))
            }
            GammaCurve::EmpiricalTable(t) => t.eval(tau),
        }
    }

    pub fn rho(&self, a: f64, b: f64) -> Result<f64> {
        ensure_positive("a", a)?;
        ensure_positive("b", b)?;
        Ok(self.gamma_unchecked(a / b).0 / b)
    }

    /// `(∂ρ/∂a, ∂ρ/∂b)`; closed form from `Γ` and `Γ'`.
    pub fn rho_partials(&self, a: f64, b: f64) -> Result<(f64, f64)> {
        ensure_positive("a", a)?;
        ensure_positive("b", b)?;
        let tau = a / b;
        let (g, gp) = self.gamma_unchecked(tau);
        Ok((gp / (b * b), -g / (b * b) - a * gp / (b * b * b)))
    }

    pub fn rho_tilde(&self, a: f64, b: f64) -> Result<f64> {
        Ok(-(a / b) * self.rho(a, b)?)
    }

    pub fn beta_sq(&self, ex: f64, ey: f64) -> Result<f64> {
        ensure_positive("Ex", ex)?;
        ensure_positive("Ey", ey)?;
        Ok(self.beta_sq_unchecked(ex, ey))
    }

    #[inline]
    pub(crate) fn beta_sq_unchecked(&self, ex: f64, ey: f64) -> f64 {
        let b = (2.0 * ey).sqrt();
        ex * self.gamma_unchecked((ex / ey).sqrt()).0 / b
    }

    /// `(β², ∂β²/∂Ex, ∂β²/∂Ey)`. Analytic curves use the chain rule through
    /// `Γ'`; tables use central differences in `ln E` with step [`LOG_STEP`].
    pub fn beta_sq_partials(&self, ex: f64, ey: f64) -> Result<(f64, f64, f64)> {
        ensure_positive("Ex", ex)?;
        ensure_positive("Ey", ey)?;
        Ok(self.beta_sq_partials_unchecked(ex, ey))
    }

    #[inline]
    fn beta_sq_partials_unchecked(&self, ex: f64, ey: f64) -> (f64, f64, f64) {
        match self.curve {
            GammaCurve::Analytic => {
                let s = (ex / ey).sqrt();
                let (g, gp) = self.gamma_unchecked(s);
                let inv_b = 1.0 / (2.0 * ey).sqrt();
                let bsq = ex * g * inv_b;
                let dx = (g + 0.5 * s * gp) * inv_b;
                let dy = -ex * inv_b / (2.0 * ey) * (g + s * gp);
                (bsq, dx, dy)
            }
            GammaCurve::EmpiricalTable(_) => {
                let (up, down) = (LOG_STEP.exp(), (-LOG_STEP).exp());
                let bsq = self.beta_sq_unchecked(ex, ey);
                let dx = (self.beta_sq_unchecked(ex * up, ey) - self.beta_sq_unchecked(ex * down, ey))
                    / (ex * (up - down));
                let dy = (self.beta_sq_unchecked(ex, ey * up) - self.beta_sq_unchecked(ex, ey * down))
                    / (ey * (up - down));
                (bsq, dx, dy)
            }
        }
    }

    /// `G(Ex, Ey) = β²/(Ex Ey)`.
    pub fn g_factor(&self, ex: f64, ey: f64) -> Result<f64> {
        Ok(self.beta_sq(ex, ey)? / (ex * ey))
    }

    pub fn drift(&self, ex: f64, ey: f64) -> Result<f64> {
        ensure_positive("Ex", ex)?;
        ensure_positive("Ey", ey)?;
        Ok(self.edge_terms(ex, ey).0)
    }

    /// `(ā(Ex,Ey), β²(Ex,Ey))` without argument checks; the caller
    /// guarantees positive energies.
    #[inline]
    pub(crate) fn edge_terms(&self, ex: f64, ey: f64) -> (f64, f64) {
        if ex == ey {
            return (0.0, self.beta_sq_unchecked(ex, ey));
        }
        let (bsq, dx, dy) = self.beta_sq_partials_unchecked(ex, ey);
        let d = self.dim as f64;
        let drift = dx - dy + 0.5 * (d - 2.0) * (1.0 / ex - 1.0 / ey) * bsq;
        (drift, bsq)
    }

    pub fn pair_values(&self, ex: f64, ey: f64) -> Result<CoefficientPairValues> {
        let (a, b) = ((2.0 * ex).sqrt(), (2.0 * ey).sqrt());
        Ok(CoefficientPairValues {
            rho: self.rho(a, b)?,
            rho_tilde: self.rho_tilde(a, b)?,
            beta_sq: self.beta_sq(ex, ey)?,
            drift: self.drift(ex, ey)?,
        })
    }

    /// Smallest `M` for which the inequality `ā Ex ≥ β²` is guaranteed when
    /// `Ey > M Ex`: `max{1, (d - 1 + 8B/A)/(d - 2)}`. Requires `d ≥ 3`.
    pub fn drift_inequality_threshold(&self) -> Result<f64> {
        if self.dim <= 2 {
            return Err(Error::arg(
                "d",
                "the drift inequality is only available for d >= 3",
            ));
        }
        let d = self.dim as f64;
        Ok(((d - 1.0 + 8.0 * self.correction / self.amplitude) / (d - 2.0)).max(1.0))
    }

    /// Scans `ā(Ex,Ey) Ex - β²(Ex,Ey)` over the grid pairs with `Ey > M Ex`.
    pub fn check_drift_inequality(
        &self,
        m: f64,
        grid: &[(f64, f64)],
    ) -> Result<DriftInequalityReport> {
        let threshold = self.drift_inequality_threshold()?;
        if !(m >= threshold) {
            return Err(Error::arg(
                "M",
                format!("must be >= {threshold} for this model, got {m}"),
            ));
        }
        let mut report = DriftInequalityReport {
            m,
            checked: 0,
            excluded: 0,
            min_margin: f64::INFINITY,
            worst_pair: None,
            pass: true,
        };
        for &(ex, ey) in grid {
            if !(ey > m * ex) {
                report.excluded += 1;
                continue;
            }
            let (drift, bsq) = (self.drift(ex, ey)?, self.beta_sq(ex, ey)?);
            let margin = drift * ex - bsq;
            report.checked += 1;
            if margin < report.min_margin {
                report.min_margin = margin;
                report.worst_pair = Some((ex, ey));
            }
        }
        report.pass = report.checked > 0 && report.min_margin >= -1e-12;
        Ok(report)
    }

    /// Largest observed `|∂ρ/∂a| (a⁵+b⁵)/(a b²)` on the grid, i.e. the
    /// constant that makes the derivative bound `|∂ₐρ| ≤ B' a b²/(a⁵+b⁵)`
    /// tight there.
    pub fn derivative_bound_constant(&self, grid: &[(f64, f64)]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for &(a, b) in grid {
            let (da, _) = self.rho_partials(a, b)?;
            worst = worst.max(da.abs() * (a.powi(5) + b.powi(5)) / (a * b * b));
        }
        Ok(worst)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftInequalityReport {
    pub m: f64,
    pub checked: usize,
    pub excluded: usize,
    pub min_margin: f64,
    pub worst_pair: Option<(f64, f64)>,
    pub pass: bool,
}

/// Log-spaced grid of `n` points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    GammaTable::geometric_grid(lo, hi, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model() -> CoefficientModel {
        CoefficientModel::analytic(1.0, 3).unwrap()
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs())
    }

    #[test]
    fn gamma_values() {
        let m = model();
        assert_eq!(m.gamma(0.0).unwrap(), 1.0);
        assert_eq!(m.gamma(1.0).unwrap(), 0.5);
        assert!(close(m.gamma(10.0).unwrap(), 1.0 / 1001.0, 1e-15));
        assert!(m.gamma(-1.0).is_err());
    }

    #[test]
    fn rho_values() {
        let m = model();
        assert_eq!(m.rho(1.0, 1.0).unwrap(), 0.5);
        assert_eq!(m.rho(2.0, 2.0).unwrap(), 0.25);
        // a²ρ(a,b) = b²ρ(b,a) at (1,3)
        let lhs = m.rho(1.0, 3.0).unwrap();
        let rhs = 9.0 * m.rho(3.0, 1.0).unwrap();
        assert!(close(lhs, rhs, 1e-14), "{lhs} vs {rhs}");
        assert!(m.rho(0.0, 1.0).is_err());
        assert!(m.rho(1.0, -1.0).is_err());
    }

    #[test]
    fn rho_tilde_values() {
        let m = model();
        assert_eq!(m.rho_tilde(1.0, 1.0).unwrap(), -m.rho(1.0, 1.0).unwrap());
        assert!(close(m.rho_tilde(1.0, 2.0).unwrap(), m.rho_tilde(2.0, 1.0).unwrap(), 1e-14));
        assert!(m.rho_tilde(1.0, 1.0).unwrap() <= 0.0);
        assert!(m.rho_tilde(-1.0, 1.0).is_err());
    }

    #[test]
    fn beta_sq_values() {
        let a = 2.5;
        let m = CoefficientModel::analytic(a, 3).unwrap();
        for e in [0.01f64, 1.0, 7.0] {
            let expected = a * e.sqrt() / (2.0 * 2f64.sqrt());
            assert!(close(m.beta_sq(e, e).unwrap(), expected, 1e-14));
        }
        assert!(close(m.beta_sq(1.0, 2.0).unwrap(), m.beta_sq(2.0, 1.0).unwrap(), 1e-14));
        let ey = 2.0;
        let ratio = m.beta_sq(1e-10, ey).unwrap() / 1e-10;
        assert!(close(ratio, a / (2.0 * ey).sqrt(), 1e-4));
        assert!(m.beta_sq(0.0, 1.0).is_err());
    }

    #[test]
    fn g_factor_values() {
        let m = model();
        // Boundary value G(a, 0) = 2A (2a)^{-3/2} for β² = Ex ρ(√2Ex, √2Ey).
        let g = m.g_factor(1.0, 1e-8).unwrap();
        assert!(close(g, 2.0 * 2f64.powf(-1.5), 1e-3), "{g}");
        assert!(close(m.g_factor(1.0, 2.0).unwrap(), m.g_factor(2.0, 1.0).unwrap(), 1e-14));
        assert!(close(m.g_factor(3.0, 3.0).unwrap(), m.beta_sq(3.0, 3.0).unwrap() / 9.0, 1e-15));
    }

    #[test]
    fn drift_values() {
        let m = model();
        assert_eq!(m.drift(0.7, 0.7).unwrap(), 0.0);
        let grid = log_grid(0.05, 20.0, 10);
        for &x in &grid {
            for &y in &grid {
                let s = m.drift(x, y).unwrap() + m.drift(y, x).unwrap();
                assert!(s.abs() <= 1e-12 * m.drift(x, y).unwrap().abs().max(1e-300));
            }
        }
        // Small-energy asymptotics ā → A d / (2√(2Ey)) with O(√Ex/Ey) error.
        let ey: f64 = 1.5;
        for ex in [1e-4f64, 1e-6, 1e-8] {
            let target = 3.0 / (2.0 * (2.0 * ey).sqrt());
            let err = (m.drift(ex, ey).unwrap() - target).abs();
            assert!(err <= 2.0 * ex.sqrt() / ey, "ex={ex} err={err}");
        }
    }

    #[test]
    fn drift_is_linear_in_dimension() {
        let m3 = model();
        let m5 = model().with_dim(5).unwrap();
        for (x, y) in [(0.3, 2.0), (4.0, 0.1), (1.0, 1.1)] {
            let diff = m5.drift(x, y).unwrap() - m3.drift(x, y).unwrap();
            let expected = (1.0 / x - 1.0 / y) * m3.beta_sq(x, y).unwrap();
            assert!(close(diff, expected, 1e-12));
        }
    }

    #[test]
    fn drift_inequality_on_reference_grid() {
        let m = model();
        let mut grid = Vec::new();
        for ex in log_grid(1e-6, 1.0, 25) {
            for r in log_grid(2.5, 1e4, 25) {
                grid.push((ex, r * ex));
            }
        }
        grid.push((1.0, 1.0));
        let report = m.check_drift_inequality(2.0, &grid).unwrap();
        assert!(report.pass, "{report:?}");
        assert_eq!(report.excluded, 1);
        assert_eq!(report.checked, 625);
    }

    #[test]
    fn drift_inequality_fails_just_above_threshold_ratio() {
        // The analytic model violates ā Ex ≥ β² for 2 < Ey/Ex < ~2.235.
        let m = model();
        let r = m.check_drift_inequality(2.0, &[(1.0, 2.1)]).unwrap();
        assert!(!r.pass);
        let r = m.check_drift_inequality(2.0, &[(1.0, 2.3)]).unwrap();
        assert!(r.pass);
    }

    #[test]
    fn drift_inequality_needs_d_at_least_3() {
        let m = CoefficientModel::analytic(1.0, 2).unwrap();
        assert!(m.check_drift_inequality(2.0, &[(1.0, 3.0)]).is_err());
        assert!(model().check_drift_inequality(1.5, &[(1.0, 3.0)]).is_err());
    }

    #[test]
    fn euler_relation_by_finite_differences() {
        let m = model();
        for &a in &log_grid(0.1, 10.0, 7) {
            for &b in &log_grid(0.1, 10.0, 7) {
                let (ha, hb) = (a * 1e-6, b * 1e-6);
                let da = (m.rho(a + ha, b).unwrap() - m.rho(a - ha, b).unwrap()) / (2.0 * ha);
                let db = (m.rho(a, b + hb).unwrap() - m.rho(a, b - hb).unwrap()) / (2.0 * hb);
                let rho = m.rho(a, b).unwrap();
                assert!(((a * da + b * db) + rho).abs() <= 1e-4 * rho);
                let (ea, eb) = m.rho_partials(a, b).unwrap();
                assert!((ea - da).abs() <= 1e-6 * (ea.abs() + rho / a));
                assert!((eb - db).abs() <= 1e-6 * (eb.abs() + rho / b));
            }
        }
    }

    #[test]
    fn analytic_partials_match_finite_differences() {
        let m = model();
        for (x, y) in [(0.2, 3.0), (5.0, 0.4), (1.0, 1.3)] {
            let (_, dx, dy) = m.beta_sq_partials(x, y).unwrap();
            let h = 1e-6;
            let fx = (m.beta_sq(x * (1.0 + h), y).unwrap() - m.beta_sq(x * (1.0 - h), y).unwrap())
                / (2.0 * h * x);
            let fy = (m.beta_sq(x, y * (1.0 + h)).unwrap() - m.beta_sq(x, y * (1.0 - h)).unwrap())
                / (2.0 * h * y);
            assert!(close(dx, fx, 1e-7) && close(dy, fy, 1e-7));
        }
    }

    #[test]
    fn derivative_bound_constant_is_finite() {
        let m = model();
        let g: Vec<(f64, f64)> = log_grid(0.01, 100.0, 30)
            .iter()
            .flat_map(|&a| log_grid(0.01, 100.0, 30).into_iter().map(move |b| (a, b)))
            .collect();
        let bp = m.derivative_bound_constant(&g).unwrap();
        assert!(bp.is_finite() && bp > 0.0 && bp < 10.0, "{bp}");
    }

    #[test]
    fn table_reproduces_analytic_curve() {
        let a = 1.0;
        let tau = GammaTable::default_grid();
        let gamma: Vec<f64> = tau.iter().map(|t| a / (1.0 + t.powi(3))).collect();
        let table = GammaTable::new(tau, gamma, None).unwrap();
        let emp = CoefficientModel::from_table(table, 3).unwrap();
        let ana = model();
        assert!(close(emp.amplitude(), 1.0, 1e-5));
        for t in [0.02, 0.3, 1.0, 2.7, 40.0] {
            assert!(close(emp.gamma(t).unwrap(), ana.gamma(t).unwrap(), 2e-4), "tau={t}");
        }
        // Tails.
        assert_eq!(emp.gamma(1e-3).unwrap(), emp.gamma(1.0 / 64.0).unwrap());
        let g64 = emp.gamma(64.0).unwrap();
        assert!(close(emp.gamma(128.0).unwrap(), g64 / 8.0, 1e-12));
        for (x, y) in [(0.3, 2.0), (2.0, 0.3), (1.0, 1.2)] {
            // Drift scale: β²/E, since the drift vanishes on the diagonal.
            let scale = ana.beta_sq(x, y).unwrap() / x.min(y);
            let err = (emp.drift(x, y).unwrap() - ana.drift(x, y).unwrap()).abs();
            assert!(err <= 1e-2 * scale, "{x} {y}: {err}");
        }
        // Homogeneity is structural.
        for (a, b) in [(0.3, 0.7), (2.0, 9.0)] {
            let lhs = 2.0 * emp.rho(2.0 * a, 2.0 * b).unwrap();
            assert!(close(lhs, emp.rho(a, b).unwrap(), 1e-12));
        }
    }

    #[test]
    fn table_validation() {
        assert!(GammaTable::new(vec![1.0], vec![1.0], None).is_err());
        assert!(GammaTable::new(vec![1.0, 1.0], vec![1.0, 1.0], None).is_err());
        assert!(GammaTable::new(vec![1.0, 2.0], vec![1.0, -1.0], None).is_err());
        assert!(GammaTable::new(vec![0.0, 2.0], vec![1.0, 1.0], None).is_err());
        assert!(GammaTable::new(vec![1.0, 2.0], vec![1.0], None).is_err());
    }

    proptest! {
        #[test]
        fn homogeneity_symmetry_antisymmetry(
            a in 1e-3f64..1e3, b in 1e-3f64..1e3, lambda in 0.1f64..10.0,
        ) {
            let m = model();
            let r = m.rho(a, b).unwrap();
            prop_assert!((lambda * m.rho(lambda * a, lambda * b).unwrap() - r).abs() <= 1e-12 * r);
            let s = m.beta_sq(a, b).unwrap();
            prop_assert!((s - m.beta_sq(b, a).unwrap()).abs() <= 1e-12 * s);
            let d = m.drift(a, b).unwrap();
            prop_assert!((d + m.drift(b, a).unwrap()).abs() <= 1e-12 * d.abs().max(1e-300));
            prop_assert!(r >= 0.0 && m.rho_tilde(a, b).unwrap() <= 0.0);
        }
    }
}
