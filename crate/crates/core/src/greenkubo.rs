//! Green–Kubo estimators.
//!
//! `ρ(a, b) = ∫_ℝ E[L₁V(g^{at}ξ, g^{bt}η) L₁V(ξ, η)] dt` is estimated from
//! Liouville-distributed pairs `(ξ, η)` as twice the trapezoid integral over
//! `[0, W]` plus an exponential tail. Each sample contributes its own path
//! integral, so the standard error comes from the spread of those integrals.
//! The window `W` is the first grid time at which `|C(t)|` stays below three
//! standard errors for five consecutive points.
//!
//! Samples are drawn from streams indexed by sample number only, so every
//! `(a, b)` of a run sees the same fast initial conditions. Accumulation is
//! chunked with compensated sums merged in chunk order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::GammaTable;
use crate::error::{ensure_positive, Error, Result};
use crate::micro::averaging::MapObservable;
use crate::micro::potential::BumpPotential;
use crate::micro::surface::BolzaSurface;
use crate::micro::torus::TorusPoint;
use crate::rng::stream;
use crate::stats::{fit_exponential, mean_and_se, MeanEstimate, NeumaierSum};

const CHUNK: usize = 256;
const SIGNIFICANCE: f64 = 3.0;
const RUN_LENGTH: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub value: f64,
    pub stderr: f64,
    /// Truncation time (or lag) of the windowed sum.
    pub window: f64,
    pub ensemble: usize,
    /// Extrapolated contribution beyond the window.
    pub tail: f64,
    /// Fitted exponential decay rate of `|C|`, when a fit was possible.
    pub decay_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GkSettings {
    pub ensemble: usize,
    /// Grid step at unit speed; the actual step is `base_dt / max(a, b)`.
    pub base_dt: f64,
    /// Grid horizon at unit speed; the actual horizon is `horizon / max(a, b)`.
    pub horizon: f64,
    pub seed: u64,
}

impl Default for GkSettings {
    fn default() -> Self {
        Self {
            ensemble: 20_000,
            base_dt: 0.05,
            horizon: 30.0,
            seed: 0,
        }
    }
}

impl GkSettings {
    fn validate(&self) -> Result<()> {
        ensure_positive("base_dt", self.base_dt)?;
        ensure_positive("horizon", self.horizon)?;
        if self.horizon <= 10.0 * self.base_dt {
            return Err(Error::arg("horizon", "must span at least ten grid steps"));
        }
        if self.ensemble < 2 {
            return Err(Error::arg("ensemble", "need at least two samples"));
        }
        Ok(())
    }
}

/// Sampled correlation function with per-point standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCurve {
    pub t: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Mean and standard error of the per-sample integral `∫_0^{t_k} C`.
    pub integral_mean: Vec<f64>,
    pub integral_stderr: Vec<f64>,
    pub ensemble: usize,
}

#[derive(Clone, Default)]
struct Moments {
    c: Vec<NeumaierSum>,
    c2: Vec<NeumaierSum>,
    i: Vec<NeumaierSum>,
    i2: Vec<NeumaierSum>,
}

impl Moments {
    fn new(k: usize) -> Self {
        Self {
            c: vec![NeumaierSum::new(); k],
            c2: vec![NeumaierSum::new(); k],
            i: vec![NeumaierSum::new(); k],
            i2: vec![NeumaierSum::new(); k],
        }
    }

    fn push(&mut self, path: &[f64], dt: f64) {
        let mut integral = 0.0;
        for (k, &v) in path.iter().enumerate() {
            if k > 0 {
                integral += 0.5 * dt * (path[k - 1] + v);
            }
            self.c[k].add(v);
            self.c2[k].add(v * v);
            self.i[k].add(integral);
            self.i2[k].add(integral * integral);
        }
    }

    fn merge(&mut self, o: &Moments) {
        for (a, b) in [
            (&mut self.c, &o.c),
            (&mut self.c2, &o.c2),
            (&mut self.i, &o.i),
            (&mut self.i2, &o.i2),
        ] {
            for (x, y) in a.iter_mut().zip(b) {
                x.merge(y);
            }
        }
    }

    fn finish(&self, dt: f64, n: usize) -> CorrelationCurve {
        let nf = n as f64;
        let stat = |s: &NeumaierSum, s2: &NeumaierSum| {
            let m = s.value() / nf;
            let var = ((s2.value() - nf * m * m) / (nf - 1.0)).max(0.0);
            (m, (var / nf).sqrt())
        };
        let (mean, stderr): (Vec<f64>, Vec<f64>) =
            self.c.iter().zip(&self.c2).map(|(a, b)| stat(a, b)).unzip();
        let (integral_mean, integral_stderr): (Vec<f64>, Vec<f64>) =
            self.i.iter().zip(&self.i2).map(|(a, b)| stat(a, b)).unzip();
        CorrelationCurve {
            t: (0..mean.len()).map(|k| k as f64 * dt).collect(),
            mean,
            stderr,
            integral_mean,
            integral_stderr,
            ensemble: n,
        }
    }
}

/// `C(t_k) = E[L₁V(g^{a t_k}ξ, g^{b t_k}η) L₁V(ξ, η)]` on `t_k = k dt`,
/// `k < points`. A negative `dt` samples `C(-t)`.
pub fn estimate_pair_correlation(
    potential: &BumpPotential,
    a: f64,
    b: f64,
    dt: f64,
    points: usize,
    ensemble: usize,
    seed: u64,
) -> Result<CorrelationCurve> {
    ensure_positive("a", a)?;
    ensure_positive("b", b)?;
    if dt == 0.0 || !dt.is_finite() || points < 2 || ensemble < 2 {
        return Err(Error::arg("grid", "need a nonzero step, two points and two samples"));
    }
    let surface = BolzaSurface::get();
    let chunks = ensemble.div_ceil(CHUNK);
    let partial: Vec<Result<Moments>> = (0..chunks)
        .into_par_iter()
        .map(|ci| {
            let mut m = Moments::new(points);
            let mut path = vec![0.0; points];
            for i in ci * CHUNK..((ci + 1) * CHUNK).min(ensemble) {
                let mut rng = stream(seed, "gk-sample", i as u64);
                let mut xi = surface.sample_uniform(&mut rng);
                let mut eta = surface.sample_uniform(&mut rng);
                let j0 = potential.coupling_current(&xi, &eta);
                path[0] = j0 * j0;
                for slot in path.iter_mut().skip(1) {
                    xi = surface.flow(&xi, a * dt)?;
                    eta = surface.flow(&eta, b * dt)?;
                    *slot = potential.coupling_current(&xi, &eta) * j0;
                }
                m.push(&path, dt.abs());
            }
            Ok(m)
        })
        .collect();
    let mut total = Moments::new(points);
    for m in partial {
        total.merge(&m?);
    }
    let mut curve = total.finish(dt.abs(), ensemble);
    if dt < 0.0 {
        curve.t.iter_mut().for_each(|t| *t = -*t);
    }
    Ok(curve)
}

/// First index starting `RUN_LENGTH` consecutive insignificant points.
fn adaptive_window(mean: &[f64], stderr: &[f64]) -> Option<usize> {
    let insignificant = |k: usize| mean[k].abs() < SIGNIFICANCE * stderr[k];
    (1..mean.len().saturating_sub(RUN_LENGTH - 1))
        .find(|&k| (k..k + RUN_LENGTH).all(insignificant))
}

/// Exponential tail `∫_W^∞ C` from a fit to the significant part of `C`.
/// Returns `(tail, rate)`.
fn exponential_tail(t: &[f64], mean: &[f64], stderr: &[f64], w: usize) -> Result<(f64, Option<f64>)> {
    let (ts, ys): (Vec<f64>, Vec<f64>) = (1..=w)
        .filter(|&k| mean[k].abs() >= SIGNIFICANCE * stderr[k])
        .map(|k| (t[k].abs(), mean[k]))
        .unzip();
    if ts.len() < 2 {
        return Ok((0.0, None));
    }
    let (c, rate) = fit_exponential(&ts, &ys)
        .ok_or_else(|| Error::NonDecaying("exponential fit failed".into()))?;
    if !(rate > 0.0) {
        return Err(Error::NonDecaying(format!("fitted decay rate {rate:.3e} is not positive")));
    }
    let sign = ys.last().copied().unwrap_or(0.0).signum();
    Ok((sign * (c - rate * t[w].abs()).exp() / rate, Some(rate)))
}

fn rho_from_curve(curve: &CorrelationCurve) -> Result<CorrelationEstimate> {
    let w = adaptive_window(&curve.mean, &curve.stderr).ok_or_else(|| {
        Error::NonDecaying(format!(
            "|C(t)| stays above {SIGNIFICANCE} standard errors up to t = {:.3}",
            curve.t.last().unwrap()
        ))
    })?;
    let (tail, rate) = exponential_tail(&curve.t, &curve.mean, &curve.stderr, w)?;
    Ok(CorrelationEstimate {
        value: 2.0 * (curve.integral_mean[w] + tail),
        stderr: 2.0 * curve.integral_stderr[w],
        window: curve.t[w].abs(),
        ensemble: curve.ensemble,
        tail: 2.0 * tail,
        decay_rate: rate,
    })
}

/// `ρ̂(a, b)` on the grid `dt = base_dt/max(a,b)` up to `horizon/max(a,b)`.
pub fn estimate_rho(potential: &BumpPotential, a: f64, b: f64, s: &GkSettings) -> Result<CorrelationEstimate> {
    s.validate()?;
    ensure_positive("a", a)?;
    ensure_positive("b", b)?;
    let m = a.max(b);
    let dt = s.base_dt / m;
    let points = (s.horizon / s.base_dt).ceil() as usize + 1;
    let curve = estimate_pair_correlation(potential, a, b, dt, points, s.ensemble, s.seed)?;
    rho_from_curve(&curve)
}

/// Positive- and negative-time half integrals estimated from independent
/// samples. Time-reversal symmetry makes them equal.
pub fn two_sided_diagnostic(
    potential: &BumpPotential,
    a: f64,
    b: f64,
    s: &GkSettings,
) -> Result<(CorrelationEstimate, CorrelationEstimate)> {
    s.validate()?;
    let m = a.max(b);
    let points = (s.horizon / s.base_dt).ceil() as usize + 1;
    let half = |dt: f64, seed: u64| -> Result<CorrelationEstimate> {
        let curve = estimate_pair_correlation(potential, a, b, dt, points, s.ensemble, seed)?;
        let mut e = rho_from_curve(&curve)?;
        e.value /= 2.0;
        e.stderr /= 2.0;
        e.tail /= 2.0;
        Ok(e)
    };
    let pos = half(s.base_dt / m, s.seed)?;
    let neg = half(-s.base_dt / m, crate::rng::child_seed(s.seed, "gk-negative-time", 0))?;
    Ok((pos, neg))
}

/// One point of an empirical `Γ` curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPoint {
    pub tau: f64,
    pub estimate: CorrelationEstimate,
}

/// Least-squares constant `Â` for `τ³ Γ̂(τ)` over a τ range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub tau_lo: f64,
    pub tau_hi: f64,
    pub amplitude: f64,
    pub amplitude_stderr: f64,
    /// Root-mean-square of `(τ³Γ̂ - Â)/Â` over the fitted points.
    pub relative_residual: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaCurveEstimate {
    pub points: Vec<GammaPoint>,
    pub tail_fit: Option<TailFit>,
    /// Grid points where `Γ̂` increases by more than two joint standard errors.
    pub monotonicity_violations: Vec<f64>,
}

impl GammaCurveEstimate {
    pub fn table(&self) -> Result<GammaTable> {
        GammaTable::new(
            self.points.iter().map(|p| p.tau).collect(),
            self.points.iter().map(|p| p.estimate.value.max(0.0)).collect(),
            Some(self.points.iter().map(|p| p.estimate.stderr).collect()),
        )
    }
}

/// `Γ̂(τ) = ρ̂(τ, 1)` for `τ ≤ 1` and `τ⁻² ρ̂(1, τ)` for `τ > 1`. Both forms
/// equal `ρ(τ, 1)`; the second keeps the faster flow on the factor that is
/// not differentiated, which avoids cancellation at large `τ`.
pub fn estimate_gamma_point(potential: &BumpPotential, tau: f64, s: &GkSettings) -> Result<GammaPoint> {
    ensure_positive("tau", tau)?;
    let estimate = if tau <= 1.0 {
        estimate_rho(potential, tau, 1.0, s)?
    } else {
        let e = estimate_rho(potential, 1.0, tau, s)?;
        let k = 1.0 / (tau * tau);
        CorrelationEstimate {
            value: e.value * k,
            stderr: e.stderr * k,
            tail: e.tail * k,
            ..e
        }
    };
    Ok(GammaPoint { tau, estimate })
}

pub fn estimate_gamma_curve(
    potential: &BumpPotential,
    tau_grid: &[f64],
    s: &GkSettings,
    tail_range: (f64, f64),
) -> Result<GammaCurveEstimate> {
    if tau_grid.is_empty() {
        return Err(Error::arg("tau_grid", "empty grid"));
    }
    let points = tau_grid
        .iter()
        .map(|&t| estimate_gamma_point(potential, t, s))
        .collect::<Result<Vec<_>>>()?;
    let tail_fit = fit_tail(&points, tail_range.0, tail_range.1);
    let monotonicity_violations = points
        .windows(2)
        .filter(|w| {
            let (p, q) = (&w[0].estimate, &w[1].estimate);
            q.value - p.value > 2.0 * (p.stderr.hypot(q.stderr))
        })
        .map(|w| w[1].tau)
        .collect();
    Ok(GammaCurveEstimate {
        points,
        tail_fit,
        monotonicity_violations,
    })
}

/// Weighted fit of `τ³ Γ̂(τ) ≈ Â` on `[lo, hi]`.
pub fn fit_tail(points: &[GammaPoint], lo: f64, hi: f64) -> Option<TailFit> {
    let sel: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.tau >= lo * (1.0 - 1e-12) && p.tau <= hi * (1.0 + 1e-12))
        .map(|p| {
            let t3 = p.tau.powi(3);
            (p.estimate.value * t3, p.estimate.stderr * t3)
        })
        .collect();
    if sel.is_empty() {
        return None;
    }
    let weights: Vec<f64> = sel.iter().map(|&(_, se)| 1.0 / (se * se).max(1e-300)).collect();
    let wsum: f64 = weights.iter().sum();
    let amp = sel.iter().zip(&weights).map(|(p, w)| p.0 * w).sum::<f64>() / wsum;
    let resid = (sel.iter().map(|p| ((p.0 - amp) / amp).powi(2)).sum::<f64>() / sel.len() as f64).sqrt();
    Some(TailFit {
        tau_lo: lo,
        tau_hi: hi,
        amplitude: amp,
        amplitude_stderr: wsum.recip().sqrt(),
        relative_residual: resid,
        points: sel.len(),
    })
}

/// Lag-sum estimate `σ² = Σ_{n∈ℤ} E[A·A∘fⁿ]` for a cat-map observable.
pub fn estimate_sigma_sq_map(
    observable: MapObservable,
    lag_max: usize,
    ensemble: usize,
    seed: u64,
) -> Result<CorrelationEstimate> {
    if lag_max < RUN_LENGTH + 1 || ensemble < 2 {
        return Err(Error::arg("lag_max", "need more lags and at least two samples"));
    }
    let k = lag_max + 1;
    // Per sample: A(x)·A(fⁿx) for every lag, and the values A(x).
    let chunks = ensemble.div_ceil(CHUNK);
    let partial: Vec<(Moments, NeumaierSum, NeumaierSum)> = (0..chunks)
        .into_par_iter()
        .map(|ci| {
            let mut m = Moments::new(k);
            let (mut s1, mut s2) = (NeumaierSum::new(), NeumaierSum::new());
            let mut path = vec![0.0; k];
            for i in ci * CHUNK..((ci + 1) * CHUNK).min(ensemble) {
                let mut rng = stream(seed, "sigma-sample", i as u64);
                let mut x = TorusPoint::sample(&mut rng);
                let a0 = observable.eval(&x);
                s1.add(a0);
                s2.add(a0 * a0);
                for slot in path.iter_mut() {
                    *slot = a0 * observable.eval(&x);
                    x = x.cat();
                }
                m.push(&path, 1.0);
            }
            (m, s1, s2)
        })
        .collect();
    let mut total = Moments::new(k);
    let (mut s1, mut s2) = (NeumaierSum::new(), NeumaierSum::new());
    for (m, a, b) in &partial {
        total.merge(m);
        s1.merge(a);
        s2.merge(b);
    }
    let n = ensemble as f64;
    let mean = s1.value() / n;
    let mean_se = (((s2.value() - n * mean * mean) / (n - 1.0)).max(0.0) / n).sqrt();
    if mean.abs() > 4.0 * mean_se + 1e-12 {
        return Err(Error::Hypothesis(format!(
            "observable mean {mean:.3e} is not zero within 4 standard errors"
        )));
    }
    let curve = total.finish(1.0, ensemble);
    if curve.stderr.iter().all(|&s| s == 0.0) && curve.mean.iter().all(|&m| m == 0.0) {
        return Ok(CorrelationEstimate {
            value: 0.0,
            stderr: 0.0,
            window: 0.0,
            ensemble,
            tail: 0.0,
            decay_rate: None,
        });
    }
    let w = adaptive_window(&curve.mean, &curve.stderr).ok_or_else(|| {
        Error::NonDecaying(format!("autocovariance still significant at lag {lag_max}"))
    })?;
    // σ̂² = C(0) + 2 Σ_{1≤n<w} C(n); per-sample Y = A(x)(A(x) + 2Σ A(fⁿx)).
    let mut ys = vec![0.0; ensemble];
    ys.par_iter_mut().enumerate().for_each(|(i, y)| {
        let mut rng = stream(seed, "sigma-sample", i as u64);
        let mut x = TorusPoint::sample(&mut rng);
        let a0 = observable.eval(&x);
        let mut acc = a0;
        for _ in 1..w {
            x = x.cat();
            acc += 2.0 * observable.eval(&x);
        }
        *y = a0 * acc;
    });
    let est: MeanEstimate = mean_and_se(&ys);
    // Geometric tail from the significant lags ≥ 1.
    let (ts, vs): (Vec<f64>, Vec<f64>) = (1..w)
        .filter(|&k| curve.mean[k].abs() >= SIGNIFICANCE * curve.stderr[k])
        .map(|k| (k as f64, curve.mean[k]))
        .unzip();
    let (tail, rate) = if ts.len() >= 2 {
        let (c, rate) = fit_exponential(&ts, &vs)
            .ok_or_else(|| Error::NonDecaying("geometric fit failed".into()))?;
        if !(rate > 0.0) {
            return Err(Error::NonDecaying(format!("fitted decay rate {rate:.3e} is not positive")));
        }
        let r = (-rate).exp();
        let sign = vs.last().unwrap().signum();
        (2.0 * sign * (c - rate * w as f64).exp() / (1.0 - r), Some(rate))
    } else {
        (0.0, None)
    };
    Ok(CorrelationEstimate {
        value: est.mean + tail,
        stderr: est.stderr,
        window: w as f64,
        ensemble,
        tail,
        decay_rate: rate,
    })
}

/// Birkhoff-sum oracle `Var(Σ_{n<N} A∘fⁿ)/N` over independent orbits, with
/// the standard error of the sample variance.
pub fn birkhoff_variance(observable: MapObservable, n: u64, orbits: usize, seed: u64) -> MeanEstimate {
    let sums: Vec<f64> = (0..orbits)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, "birkhoff-orbit", i as u64);
            let mut x = TorusPoint::sample(&mut rng);
            let mut s = NeumaierSum::new();
            for _ in 0..n {
                s.add(observable.eval(&x));
                x = x.cat();
            }
            s.value()
        })
        .collect();
    let m = orbits as f64;
    let mean = sums.iter().sum::<f64>() / m;
    let var = sums.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (m - 1.0);
    let var = var / n as f64;
    MeanEstimate {
        mean: var,
        stderr: var * (2.0 / (m - 1.0)).sqrt(),
        n: orbits,
    }
}

/// Energy-coordinate diffusion matrix `D` with `D_xy = -2β²_xy` for
/// neighbours and zero row sums, from any `ρ` (analytic or estimated).
/// `β²_xy` is symmetrized as `(E_x ρ(a_x, a_y) + E_y ρ(a_y, a_x))/2`.
pub fn variance_matrix<F>(
    graph: &crate::topology::InteractionGraph,
    energies: &[f64],
    rho: F,
) -> Vec<Vec<f64>>
where
    F: Fn(f64, f64) -> f64,
{
    let n = graph.num_vertices();
    let mut d = vec![vec![0.0; n]; n];
    for &(x, y) in graph.edges() {
        let (ax, ay) = ((2.0 * energies[x]).sqrt(), (2.0 * energies[y]).sqrt());
        let bsq = 0.5 * (energies[x] * rho(ax, ay) + energies[y] * rho(ay, ax));
        d[x][y] -= 2.0 * bsq;
        d[y][x] -= 2.0 * bsq;
        d[x][x] += 2.0 * bsq;
        d[y][y] += 2.0 * bsq;
    }
    d
}
