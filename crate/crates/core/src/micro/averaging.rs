//! Discrete fast–slow testbed `F_ε(x, z) = (f(x), z + ε A(x, z))` with the
//! cat map as fast dynamics. Over `⌈t ε⁻²⌉` iterations the slow variable
//! converges to a diffusion whose variance rate is the lag-sum `σ²` of `A`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::torus::{coboundary_observable, cosine_observable, TorusPoint};
use crate::error::{ensure_positive, Error, Result};
use crate::rng::stream;
use crate::stats::{mean_and_se, MeanEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapObservable {
    Zero,
    /// `cos(2π u₁)`.
    Cosine,
    /// `g∘f - g` with `g = cos(2π u₁)`.
    Coboundary,
}

impl MapObservable {
    #[inline]
    pub fn eval(&self, p: &TorusPoint) -> f64 {
        match self {
            MapObservable::Zero => 0.0,
            MapObservable::Cosine => cosine_observable(p),
            MapObservable::Coboundary => coboundary_observable(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragingConfig {
    pub epsilon: f64,
    /// Rescaled horizon `t`; the run makes `⌈t ε⁻²⌉` iterations.
    pub t_end: f64,
    pub ensemble: usize,
    /// Number of equally spaced rescaled times recorded after `0`.
    pub record_points: usize,
    pub z0: f64,
    pub seed: u64,
    /// Fast samples used to check the zero-mean hypothesis.
    pub mean_check_samples: usize,
}

impl AveragingConfig {
    pub fn new(epsilon: f64, t_end: f64, ensemble: usize, seed: u64) -> Self {
        Self {
            epsilon,
            t_end,
            ensemble,
            record_points: 10,
            z0: 0.0,
            seed,
            mean_check_samples: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragingResult {
    pub times: Vec<f64>,
    /// One path per ensemble member, sampled at `times`.
    pub paths: Vec<Vec<f64>>,
    pub coupling_mean: MeanEstimate,
}

impl AveragingResult {
    /// Sample variance of the displacement `z(t) - z(0)` at the last time.
    pub fn final_displacement_variance(&self) -> f64 {
        let d: Vec<f64> = self.paths.iter().map(|p| p[p.len() - 1] - p[0]).collect();
        let m = d.iter().sum::<f64>() / d.len() as f64;
        d.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (d.len() - 1).max(1) as f64
    }
}

/// Runs the testbed with an arbitrary coupling `A(x, z)`.
pub fn averaging_simulate_with<A>(config: &AveragingConfig, coupling: A) -> Result<AveragingResult>
where
    A: Fn(&TorusPoint, f64) -> f64 + Sync,
{
    ensure_positive("epsilon", config.epsilon)?;
    ensure_positive("t_end", config.t_end)?;
    if config.ensemble < 2 || config.record_points == 0 {
        return Err(Error::arg("ensemble", "need at least two members and one record point"));
    }
    let mut rng = stream(config.seed, "averaging-mean-check", 0);
    let values: Vec<f64> = (0..config.mean_check_samples)
        .map(|_| coupling(&TorusPoint::sample(&mut rng), config.z0))
        .collect();
    let coupling_mean = mean_and_se(&values);
    if coupling_mean.mean.abs() > 4.0 * coupling_mean.stderr + 1e-12 {
        return Err(Error::Hypothesis(format!(
            "coupling mean {:.3e} is not zero within 4 standard errors ({:.3e})",
            coupling_mean.mean, coupling_mean.stderr
        )));
    }
    let eps = config.epsilon;
    let n_iter = (config.t_end / (eps * eps)).ceil() as u64;
    let marks: Vec<u64> = (1..=config.record_points)
        .map(|k| ((k as f64 / config.record_points as f64) * config.t_end / (eps * eps)).ceil() as u64)
        .collect();
    let times: Vec<f64> = std::iter::once(0.0)
        .chain(marks.iter().map(|&m| m as f64 * eps * eps))
        .collect();
    let paths = (0..config.ensemble)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(config.seed, "averaging-trajectory", i as u64);
            let mut x = TorusPoint::sample(&mut rng);
            let mut z = config.z0;
            let mut path = Vec::with_capacity(marks.len() + 1);
            path.push(z);
            let mut next = 0;
            for n in 1..=n_iter {
                z += eps * coupling(&x, z);
                x = x.cat();
                while next < marks.len() && marks[next] == n {
                    path.push(z);
                    next += 1;
                }
            }
            path
        })
        .collect();
    Ok(AveragingResult {
        times,
        paths,
        coupling_mean,
    })
}

pub fn averaging_simulate(config: &AveragingConfig, observable: MapObservable) -> Result<AveragingResult> {
    averaging_simulate_with(config, |p, _| observable.eval(p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_coupling_keeps_z() {
        let c = AveragingConfig::new(0.1, 1.0, 10, 0);
        let r = averaging_simulate(&c, MapObservable::Zero).unwrap();
        assert!(r.paths.iter().flatten().all(|&z| z == 0.0));
        assert_eq!(r.times.len(), 11);
        assert!((r.times.last().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn biased_coupling_is_rejected() {
        let c = AveragingConfig::new(0.1, 1.0, 10, 0);
        let r = averaging_simulate_with(&c, |p, _| cosine_observable(p) + 0.1);
        assert!(matches!(r, Err(Error::Hypothesis(_))));
    }

    #[test]
    fn coboundary_variance_shrinks() {
        let mut prev = f64::INFINITY;
        for eps in [0.1, 0.05, 0.025] {
            let c = AveragingConfig::new(eps, 1.0, 2000, 1);
            let v = averaging_simulate(&c, MapObservable::Coboundary)
                .unwrap()
                .final_displacement_variance();
            assert!(v < prev, "eps={eps}: {v} !< {prev}");
            prev = v;
        }
    }

    #[test]
    fn cosine_variance_matches_sigma_sq() {
        let c = AveragingConfig::new(0.05, 1.0, 4000, 2);
        let v = averaging_simulate(&c, MapObservable::Cosine)
            .unwrap()
            .final_displacement_variance();
        // Lag-sum variance of cos(2πu₁) under the cat map is exactly 1/2.
        assert!((v - 0.5).abs() < 0.1 * 0.5, "{v}");
    }
}
