//! Statistical verification harness for the structural properties of the
//! energy SDE and of its microscopic origin.
//!
//! Every test returns a [`HypothesisReport`] carrying its seeds and a digest
//! of its inputs, so a report can be reproduced from the report alone.

pub mod suite;

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::{log_grid, CoefficientModel};
use crate::error::{ensure_positive, Error, Result};
use crate::micro::{micro_ensemble, BumpPotential, MicroConfig};
use crate::rng::stream;
use crate::sde::{hex_digest, simulate_ensemble, simulate_from, SdeRunConfig, TrajectoryRecord};
use crate::stats::{
    effective_sample_size, gamma_cdf, integrated_autocorrelation_time, ks_one_sample,
    ks_two_sample_statistic, mean_and_se, normal_two_sided_p, wilson_interval, NeumaierSum,
};
use crate::topology::{GraphDocument, InteractionGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub name: String,
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub ci: Option<(f64, f64)>,
    /// Significance level or tolerance the statistic was gated on.
    pub level: f64,
    pub pass: bool,
    pub sample_sizes: BTreeMap<String, usize>,
    pub seeds: Vec<u64>,
    pub config_digest: String,
    pub details: serde_json::Value,
}

impl HypothesisReport {
    fn new(name: &str, inputs: &serde_json::Value) -> Self {
        Self {
            name: name.to_owned(),
            statistic: f64::NAN,
            p_value: None,
            ci: None,
            level: f64::NAN,
            pass: false,
            sample_sizes: BTreeMap::new(),
            seeds: Vec::new(),
            config_digest: hex_digest(format!("{name}|{inputs}").as_bytes()),
            details: serde_json::Value::Null,
        }
    }

    fn size(mut self, key: &str, n: usize) -> Self {
        self.sample_sizes.insert(key.to_owned(), n);
        self
    }
}

/// Summary table with one row per report.
pub fn reports_to_csv(reports: &[HypothesisReport]) -> String {
    let mut out = String::from("name,statistic,p_value,ci_lo,ci_hi,level,pass,config_digest\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    for r in reports {
        out.push_str(&format!(
            "{},{:e},{},{},{},{:e},{},{}\n",
            r.name,
            r.statistic,
            opt(r.p_value),
            opt(r.ci.map(|c| c.0)),
            opt(r.ci.map(|c| c.1)),
            r.level,
            r.pass,
            r.config_digest
        ));
    }
    out
}

fn gamma_sampler(dim: u32, beta: f64) -> Result<Gamma<f64>> {
    Gamma::new(dim as f64 / 2.0, 1.0 / beta).map_err(|e| Error::arg("beta", e.to_string()))
}

/// Independent draws of all site energies from `h_β`.
pub fn sample_gibbs<R: Rng + ?Sized>(n_sites: usize, dim: u32, beta: f64, rng: &mut R) -> Result<Vec<f64>> {
    let g = gamma_sampler(dim, beta)?;
    Ok((0..n_sites).map(|_| g.sample(rng)).collect())
}

// ---------------------------------------------------------------------------
// Gibbs invariance

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InvariantConfig {
    pub beta: f64,
    pub ensemble: usize,
    pub t_end: f64,
    /// Equally spaced sampling times in `(0, t_end]`.
    pub snapshots: usize,
    /// Base step; `None` picks the SDE default at the mean energy `d/(2β)`.
    pub dt: Option<f64>,
    pub level: f64,
    pub min_effective: f64,
    /// Set by the caller; suite runs derive it from the suite seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for InvariantConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            ensemble: 10_000,
            t_end: 2.0,
            snapshots: 5,
            dt: None,
            level: 0.01,
            min_effective: 1000.0,
            seed: 0,
        }
    }
}

/// Ensemble stationarity of `h_β`: initial energies drawn from `h_β`, site 0
/// sampled along each trajectory and compared with `Gamma(d/2, β)` by a KS
/// test whose sample size is corrected by the integrated autocorrelation
/// time of the per-trajectory snapshot series.
pub fn test_invariant_marginal(
    model: &CoefficientModel,
    graph: &InteractionGraph,
    cfg: &InvariantConfig,
) -> Result<HypothesisReport> {
    ensure_positive("beta", cfg.beta)?;
    ensure_positive("t_end", cfg.t_end)?;
    if cfg.snapshots == 0 || cfg.ensemble < 2 {
        return Err(Error::arg("snapshots", "need at least one snapshot and two members"));
    }
    let d = model.dim();
    let mean_energy = d as f64 / (2.0 * cfg.beta);
    let dt0 = cfg
        .dt
        .unwrap_or_else(|| SdeRunConfig::default_dt(&[mean_energy], model.amplitude()));
    ensure_positive("dt", dt0)?;
    let per_snapshot = (cfg.t_end / cfg.snapshots as f64 / dt0).ceil().max(1.0) as usize;
    let n = graph.num_vertices();
    let template = {
        let mut c = SdeRunConfig::new(graph.clone(), model.clone(), vec![mean_energy; n], cfg.t_end, cfg.seed)?;
        c.dt = cfg.t_end / (cfg.snapshots * per_snapshot) as f64;
        c.record_stride = per_snapshot;
        c
    };
    let runs: Vec<(Vec<f64>, TrajectoryRecord)> = (0..cfg.ensemble)
        .into_par_iter()
        .map(|i| {
            let mut init_rng = stream(cfg.seed, "invariant-initial", i as u64);
            let initial = sample_gibbs(n, d, cfg.beta, &mut init_rng)?;
            let mut rng = stream(cfg.seed, "invariant-trajectory", i as u64);
            let rec = simulate_from(&template, &initial, &mut rng)?;
            Ok((initial, rec))
        })
        .collect::<Result<_>>()?;
    let chains: Vec<Vec<f64>> = runs
        .iter()
        .map(|(_, r)| r.energies.iter().skip(1).map(|e| e[0]).collect())
        .collect();
    let len = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if len == 0 {
        return Err(Error::arg("snapshots", "no snapshots were recorded"));
    }
    let iat = integrated_autocorrelation_time(&chains);
    let ess = effective_sample_size(&chains);
    if ess < cfg.min_effective {
        return Err(Error::arg(
            "ensemble",
            format!("only {ess:.0} effective samples, need {}", cfg.min_effective),
        ));
    }
    let pooled: Vec<f64> = chains.iter().flat_map(|c| c[..len].iter().copied()).collect();
    let shape = d as f64 / 2.0;
    let ks = ks_one_sample(&pooled, |x| gamma_cdf(shape, cfg.beta, x), Some(ess))?;
    let m = mean_and_se(&pooled);
    let mean_se = m.stderr * iat.sqrt();
    let rejected: u64 = runs.iter().map(|(_, r)| r.diagnostics.rejected_steps).sum();
    let inputs = serde_json::json!({
        "model": model, "graph": GraphDocument::from_graph(graph), "config": cfg,
    });
    let mut r = HypothesisReport::new("invariant-marginal", &inputs)
        .size("trajectories", cfg.ensemble)
        .size("samples", pooled.len())
        .size("effective", ess as usize);
    r.statistic = ks.statistic;
    r.p_value = Some(ks.p_value);
    r.level = cfg.level;
    r.pass = ks.p_value >= cfg.level;
    r.ci = Some((m.mean - 2.0 * mean_se, m.mean + 2.0 * mean_se));
    r.seeds = vec![cfg.seed];
    r.details = serde_json::json!({
        "target_mean": mean_energy,
        "sample_mean": m.mean,
        "mean_stderr": mean_se,
        "integrated_autocorrelation_time": iat,
        "dt": template.dt,
        "rejected_steps": rejected,
    });
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    pub repetitions: usize,
    pub chains: usize,
    pub chain_len: usize,
    /// Lag-one correlation of the Gaussian factors; the energies then have
    /// lag-one correlation equal to its square.
    pub autocorrelation: f64,
    pub level: f64,
    /// Allowed absolute deviation of the rejection rate from `level`.
    pub tolerance: f64,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            repetitions: 1000,
            chains: 1000,
            chain_len: 5,
            autocorrelation: 0.7,
            level: 0.01,
            tolerance: 0.02,
            seed: 0,
        }
    }
}

/// Runs the ESS-corrected KS pipeline of [`test_invariant_marginal`] on
/// synthetic stationary chains with exact `Gamma(d/2, β)` marginals.
///
/// Each chain value is `Σ_{j<d} X_j²/(2β)` with independent stationary AR(1)
/// Gaussian factors `X_j`, so the marginal is exact for integer `d`.
pub fn calibrate_marginal_test(dim: u32, beta: f64, cfg: &CalibrationConfig) -> Result<HypothesisReport> {
    ensure_positive("beta", beta)?;
    if dim == 0 || cfg.repetitions == 0 || cfg.chains == 0 || cfg.chain_len == 0 {
        return Err(Error::arg("calibration", "dimension and sizes must be positive"));
    }
    if !(cfg.autocorrelation.abs() < 1.0) {
        return Err(Error::arg("autocorrelation", "must lie in (-1, 1)"));
    }
    let r = cfg.autocorrelation;
    let innov = (1.0 - r * r).sqrt();
    let shape = dim as f64 / 2.0;
    let rejections: usize = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream(cfg.seed, "calibration-null", rep as u64);
            let chains: Vec<Vec<f64>> = (0..cfg.chains)
                .map(|_| {
                    let mut x: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                    (0..cfg.chain_len)
                        .map(|t| {
                            if t > 0 {
                                for v in x.iter_mut() {
                                    let n: f64 = rng.sample(StandardNormal);
                                    *v = r * *v + innov * n;
                                }
                            }
                            x.iter().map(|v| v * v).sum::<f64>() / (2.0 * beta)
                        })
                        .collect()
                })
                .collect();
            let ess = effective_sample_size(&chains);
            let pooled: Vec<f64> = chains.into_iter().flatten().collect();
            let ks = ks_one_sample(&pooled, |x| gamma_cdf(shape, beta, x), Some(ess)).ok()?;
            (ks.p_value < cfg.level).then_some(())
        })
        .filter_map(|x| x)
        .count();
    let rate = rejections as f64 / cfg.repetitions as f64;
    let ci = wilson_interval(rejections, cfg.repetitions, 0.95);
    let inputs = serde_json::json!({ "dim": dim, "beta": beta, "config": cfg });
    let mut rep = HypothesisReport::new("calibration-marginal-ks", &inputs)
        .size("repetitions", cfg.repetitions)
        .size("samples_per_repetition", cfg.chains * cfg.chain_len);
    rep.statistic = rate;
    rep.ci = Some(ci);
    rep.level = cfg.level;
    rep.pass = (rate - cfg.level).abs() <= cfg.tolerance;
    rep.seeds = vec![cfg.seed];
    rep.details = serde_json::json!({ "rejections": rejections, "nominal": cfg.level, "tolerance": cfg.tolerance });
    Ok(rep)
}

// ---------------------------------------------------------------------------
// Reversibility

/// Smooth compactly supported bump `exp(1 - 1/(1 - r²))`, `r = (E - c)/w`,
/// equal to 1 at its center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub site: usize,
    pub center: f64,
    pub width: f64,
}

impl Bump {
    pub fn new(site: usize, center: f64, width: f64) -> Result<Self> {
        ensure_positive("width", width)?;
        if !(center - width > 0.0) {
            return Err(Error::arg("center", "support must lie in (0, ∞)"));
        }
        Ok(Self { site, center, width })
    }

    /// Value and first two derivatives in `E`.
    pub fn jet(&self, e: f64) -> (f64, f64, f64) {
        let r = (e - self.center) / self.width;
        if r.abs() >= 1.0 {
            return (0.0, 0.0, 0.0);
        }
        let q = 1.0 - r * r;
        let v = (1.0 - 1.0 / q).exp();
        let g1 = -2.0 * r / (q * q);
        let g2 = -2.0 / (q * q) - 8.0 * r * r / (q * q * q);
        let w = self.width;
        (v, v * g1 / w, v * (g2 + g1 * g1) / (w * w))
    }
}

/// Product of single-energy bumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunction {
    pub bumps: Vec<Bump>,
}

impl TestFunction {
    pub fn new(bumps: Vec<Bump>) -> Self {
        Self { bumps }
    }

    /// Value and derivatives of the product of the bumps on `site`.
    fn site_jet(&self, site: usize, e: f64) -> (f64, f64, f64) {
        self.bumps
            .iter()
            .filter(|b| b.site == site)
            .fold((1.0, 0.0, 0.0), |(f, f1, f2), b| {
                let (g, g1, g2) = b.jet(e);
                (f * g, f1 * g + f * g1, f2 * g + 2.0 * f1 * g1 + f * g2)
            })
    }

    pub fn eval(&self, e: &[f64]) -> f64 {
        self.bumps.iter().map(|b| b.jet(e[b.site]).0).product()
    }

    /// `𝓛f = Σ_edges [ā (∂_x - ∂_y) f + β² (∂_x - ∂_y)² f]`.
    pub fn generator(&self, model: &CoefficientModel, graph: &InteractionGraph, e: &[f64]) -> Result<f64> {
        let jets: Vec<(f64, f64, f64)> = (0..e.len()).map(|x| self.site_jet(x, e[x])).collect();
        let mut total = 0.0;
        for &(x, y) in graph.edges() {
            let (fx, fx1, fx2) = jets[x];
            let (fy, fy1, fy2) = jets[y];
            if fx1 == 0.0 && fy1 == 0.0 && fx2 == 0.0 && fy2 == 0.0 {
                continue;
            }
            let rest: f64 = jets
                .iter()
                .enumerate()
                .filter(|&(z, _)| z != x && z != y)
                .map(|(_, j)| j.0)
                .product();
            if rest == 0.0 {
                continue;
            }
            let d1 = fx1 * fy - fx * fy1;
            let d2 = fx2 * fy - 2.0 * fx1 * fy1 + fx * fy2;
            let drift = model.drift(e[x], e[y])?;
            let bsq = model.beta_sq(e[x], e[y])?;
            total += rest * (drift * d1 + bsq * d2);
        }
        Ok(total)
    }
}

/// Five test-function pairs on a graph with at least two sites.
pub fn reversibility_catalog() -> Vec<(TestFunction, TestFunction)> {
    let b = |s, c, w| Bump::new(s, c, w).expect("catalog bump");
    vec![
        (TestFunction::new(vec![b(0, 1.0, 0.8)]), TestFunction::new(vec![b(1, 1.5, 1.0)])),
        (TestFunction::new(vec![b(0, 0.8, 0.6)]), TestFunction::new(vec![b(0, 1.5, 1.2)])),
        (
            TestFunction::new(vec![b(0, 1.0, 0.9), b(1, 1.0, 0.9)]),
            TestFunction::new(vec![b(1, 0.6, 0.5)]),
        ),
        (
            TestFunction::new(vec![b(0, 2.0, 1.5)]),
            TestFunction::new(vec![b(0, 1.0, 0.9), b(1, 2.0, 1.5)]),
        ),
        (
            TestFunction::new(vec![b(0, 0.5, 0.45), b(0, 0.9, 0.6)]),
            TestFunction::new(vec![b(1, 1.2, 1.0)]),
        ),
    ]
}

const MC_CHUNK: usize = 4096;

/// `E_β(φ𝓛h) = E_β(h𝓛φ)` by direct Monte Carlo over `h_β`, as a paired
/// difference of the two integrands.
pub fn test_reversibility(
    model: &CoefficientModel,
    graph: &InteractionGraph,
    beta: f64,
    pair: &(TestFunction, TestFunction),
    ensemble: usize,
    seed: u64,
) -> Result<HypothesisReport> {
    ensure_positive("beta", beta)?;
    if ensemble < 2 {
        return Err(Error::arg("ensemble", "need at least two samples"));
    }
    let n = graph.num_vertices();
    if pair.0.bumps.iter().chain(&pair.1.bumps).any(|b| b.site >= n) {
        return Err(Error::arg("pair", "bump site outside the graph"));
    }
    let (phi, h) = pair;
    let d = model.dim();
    let chunks = ensemble.div_ceil(MC_CHUNK);
    let parts: Vec<[NeumaierSum; 6]> = (0..chunks)
        .into_par_iter()
        .map(|ci| {
            let mut rng = stream(seed, "reversibility-sample", ci as u64);
            let g = gamma_sampler(d, beta)?;
            let mut acc = [NeumaierSum::new(); 6];
            let mut e = vec![0.0; n];
            for _ in ci * MC_CHUNK..((ci + 1) * MC_CHUNK).min(ensemble) {
                e.iter_mut().for_each(|v| *v = g.sample(&mut rng));
                let l = phi.eval(&e) * h.generator(model, graph, &e)?;
                let r = h.eval(&e) * phi.generator(model, graph, &e)?;
                for (k, v) in [l, l * l, r, r * r, l - r, (l - r) * (l - r)].into_iter().enumerate() {
                    acc[k].add(v);
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut tot = [NeumaierSum::new(); 6];
    for p in &parts {
        for (t, s) in tot.iter_mut().zip(p) {
            t.merge(s);
        }
    }
    let nf = ensemble as f64;
    let moment = |k: usize| {
        let m = tot[k].value() / nf;
        let var = ((tot[k + 1].value() - nf * m * m) / (nf - 1.0)).max(0.0);
        (m, (var / nf).sqrt())
    };
    let (lhs, lhs_se) = moment(0);
    let (rhs, rhs_se) = moment(2);
    let (diff, diff_se) = moment(4);
    let z = if diff_se > 0.0 { diff / diff_se } else if diff == 0.0 { 0.0 } else { f64::INFINITY };
    let inputs = serde_json::json!({
        "model": model, "graph": GraphDocument::from_graph(graph), "beta": beta,
        "phi": phi, "h": h, "ensemble": ensemble,
    });
    let mut r = HypothesisReport::new("reversibility", &inputs).size("samples", ensemble);
    r.statistic = z;
    r.p_value = Some(normal_two_sided_p(z));
    r.ci = Some((diff - 3.0 * diff_se, diff + 3.0 * diff_se));
    r.level = 3.0;
    r.pass = diff.abs() <= 3.0 * diff_se;
    r.seeds = vec![seed];
    r.details = serde_json::json!({
        "phi_L_h": lhs, "phi_L_h_stderr": lhs_se,
        "h_L_phi": rhs, "h_L_phi_stderr": rhs_se,
        "difference": diff, "difference_stderr": diff_se,
    });
    Ok(r)
}

// ---------------------------------------------------------------------------
// Drift identity

/// `ā = h₀⁻¹ (∂_x - ∂_y)(h₀ β²)` with `h₀ = (E_x E_y)^{d/2-1}`, by central
/// differences of step `step` in `ln E`.
pub fn divergence_form_drift(model: &CoefficientModel, ex: f64, ey: f64, step: f64) -> Result<f64> {
    let p = model.dim() as f64 / 2.0 - 1.0;
    let f = |x: f64, y: f64| -> Result<f64> { Ok((x * y).powf(p) * model.beta_sq(x, y)?) };
    let (up, dn) = (step.exp(), (-step).exp());
    let dx = (f(ex * up, ey)? - f(ex * dn, ey)?) / (ex * (up - dn));
    let dy = (f(ex, ey * up)? - f(ex, ey * dn)?) / (ey * (up - dn));
    Ok((dx - dy) / (ex * ey).powf(p))
}

/// Maximum over `grid` of `|ā_fd - ā| / max(|ā|, β²/min(E_x, E_y))`.
pub fn test_drift_identity(
    model: &CoefficientModel,
    grid: &[(f64, f64)],
    step: f64,
    tolerance: f64,
) -> Result<HypothesisReport> {
    ensure_positive("step", step)?;
    let mut worst = (0.0f64, None);
    for &(ex, ey) in grid {
        let exact = model.drift(ex, ey)?;
        let fd = divergence_form_drift(model, ex, ey, step)?;
        let scale = exact.abs().max(model.beta_sq(ex, ey)? / ex.min(ey));
        let rel = (fd - exact).abs() / scale;
        if rel > worst.0 || worst.1.is_none() {
            worst = (rel.max(worst.0), Some((ex, ey)));
        }
    }
    let inputs = serde_json::json!({ "model": model, "grid": grid, "step": step });
    let mut r = HypothesisReport::new("drift-identity", &inputs).size("grid_points", grid.len());
    r.statistic = worst.0;
    r.level = tolerance;
    r.pass = !grid.is_empty() && worst.0 <= tolerance;
    r.details = serde_json::json!({ "worst_pair": worst.1, "fd_step_ln_e": step });
    Ok(r)
}

/// Square grid `log_grid(lo, hi, n)²`.
pub fn square_log_grid(lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)> {
    let g = log_grid(lo, hi, n);
    g.iter().flat_map(|&x| g.iter().map(move |&y| (x, y))).collect()
}

// ---------------------------------------------------------------------------
// Unreachability of zero

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HittingRow {
    pub delta: f64,
    pub hits: usize,
    pub n: usize,
    pub probability: f64,
    /// 95% Wilson interval.
    pub ci: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingTable {
    pub rows: Vec<HittingRow>,
    pub t_end: f64,
    pub seed: u64,
    pub config_digest: String,
    pub warning: Option<String>,
}

impl HittingTable {
    /// Probabilities strictly decrease along the (decreasing) δ list.
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].probability < w[0].probability)
    }

    /// The 95% intervals of the first and last δ do not overlap.
    pub fn endpoints_separated(&self) -> bool {
        match (self.rows.first(), self.rows.last()) {
            (Some(a), Some(b)) if self.rows.len() > 1 => b.ci.1 < a.ci.0,
            _ => false,
        }
    }

    pub fn report(&self) -> HypothesisReport {
        let inputs = serde_json::json!({ "digest": self.config_digest });
        let n = self.rows.first().map_or(0, |r| r.n);
        let mut r = HypothesisReport::new("hitting-probability", &inputs).size("trajectories", n);
        r.config_digest = self.config_digest.clone();
        let (first, last) = (self.rows.first(), self.rows.last());
        r.statistic = match (first, last) {
            (Some(a), Some(b)) => b.probability - a.probability,
            _ => f64::NAN,
        };
        r.ci = last.map(|b| b.ci);
        r.level = 0.95;
        r.pass = self.strictly_decreasing() && self.endpoints_separated();
        r.seeds = vec![self.seed];
        r.details = serde_json::json!({
            "rows": self.rows,
            "strictly_decreasing": self.strictly_decreasing(),
            "endpoints_separated": self.endpoints_separated(),
            "warning": self.warning,
        });
        r
    }
}

/// Fraction of trajectories whose smallest site energy reaches each `δ`
/// before `t_end`. One ensemble serves every `δ`; runs stop at the smallest.
pub fn estimate_hitting_probability(
    model: &CoefficientModel,
    graph: &InteractionGraph,
    initial: &[f64],
    t_end: f64,
    deltas: &[f64],
    ensemble: usize,
    seed: u64,
) -> Result<HittingTable> {
    if deltas.is_empty() || deltas.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::arg("deltas", "need at least one positive level"));
    }
    if ensemble == 0 {
        return Err(Error::arg("ensemble", "must be positive"));
    }
    let warning = (model.dim() < 3)
        .then(|| format!("d = {}: unreachability of zero is only established for d >= 3", model.dim()));
    let mut cfg = SdeRunConfig::new(graph.clone(), model.clone(), initial.to_vec(), t_end, seed)?;
    cfg.delta_stop = deltas.iter().copied().fold(f64::INFINITY, f64::min);
    cfg.record_stride = usize::MAX;
    let minima: Vec<f64> = simulate_ensemble(&cfg, ensemble)?
        .iter()
        .map(|r| r.diagnostics.min_site_energy)
        .collect();
    let rows = deltas
        .iter()
        .map(|&delta| {
            let hits = minima.iter().filter(|&&m| m <= delta).count();
            HittingRow {
                delta,
                hits,
                n: ensemble,
                probability: hits as f64 / ensemble as f64,
                ci: wilson_interval(hits, ensemble, 0.95),
            }
        })
        .collect();
    Ok(HittingTable {
        rows,
        t_end,
        seed,
        config_digest: hex_digest(format!("{}|{deltas:?}|{ensemble}", cfg.digest()).as_bytes()),
        warning,
    })
}

/// Paired test of the early mean increment of `site`: positive when the
/// mean of `E_site(t_end) - E_site(0)` exceeds two standard errors.
pub fn test_mean_increment(cfg: &SdeRunConfig, site: usize, ensemble: usize) -> Result<HypothesisReport> {
    if site >= cfg.graph.num_vertices() {
        return Err(Error::arg("site", "outside the graph"));
    }
    let runs = simulate_ensemble(cfg, ensemble)?;
    let inc: Vec<f64> = runs
        .iter()
        .map(|r| r.final_energies()[site] - cfg.initial[site])
        .collect();
    let m = mean_and_se(&inc);
    let mut r = HypothesisReport::new("mean-increment", &serde_json::json!({ "digest": cfg.digest(), "site": site }))
        .size("trajectories", ensemble);
    r.statistic = m.mean / m.stderr;
    r.p_value = Some(normal_two_sided_p(r.statistic));
    r.ci = Some((m.mean - 2.0 * m.stderr, m.mean + 2.0 * m.stderr));
    r.level = 2.0;
    r.pass = m.mean > 2.0 * m.stderr;
    r.seeds = vec![cfg.seed];
    Ok(r)
}

/// Completed passages from `≥ upper` to `≤ lower`.
pub fn count_downcrossings(path: &[f64], lower: f64, upper: f64) -> usize {
    let mut above = false;
    let mut count = 0;
    for &v in path {
        if v >= upper {
            above = true;
        } else if v <= lower && above {
            count += 1;
            above = false;
        }
    }
    count
}

/// Ensemble mean number of downcrossings of `(ln δ, ½ ln δ)` by the log of
/// the smallest site energy along recorded paths, for each `δ`.
pub fn downcrossing_profile(records: &[TrajectoryRecord], deltas: &[f64]) -> Vec<(f64, f64)> {
    deltas
        .iter()
        .map(|&delta| {
            let (lo, hi) = (delta.ln(), 0.5 * delta.ln());
            let total: usize = records
                .iter()
                .map(|r| {
                    let path: Vec<f64> = r
                        .energies
                        .iter()
                        .map(|e| e.iter().copied().fold(f64::INFINITY, f64::min).ln())
                        .collect();
                    count_downcrossings(&path, lo, hi)
                })
                .sum();
            (delta, total as f64 / records.len().max(1) as f64)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Microscopic versus mesoscopic

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub graph: GraphDocument,
    pub initial: Vec<f64>,
    /// Strictly decreasing coupling strengths.
    pub epsilons: Vec<f64>,
    pub delta: f64,
    /// Rescaled comparison time.
    pub t: f64,
    pub micro_ensemble: usize,
    pub sde_ensemble: usize,
    #[serde(default)]
    pub potential: BumpPotential,
    pub micro_step: f64,
    pub seed: u64,
}

/// Kolmogorov distance at level 5% for two samples of sizes `n` and `m`.
pub fn ks_noise_floor(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    1.358 * ((n + m) / (n * m)).sqrt()
}

/// Per-site KS distances between microscopic energies at `ε⁻² t` and SDE
/// energies at `t`, along the ε ladder. `model` must describe the same
/// potential (an empirical `Γ` table) with `d = 2`.
pub fn compare_micro_sde(cfg: &CompareConfig, model: &CoefficientModel) -> Result<HypothesisReport> {
    let graph = cfg.graph.to_graph()?;
    if cfg.initial.len() != graph.num_vertices() {
        return Err(Error::arg("initial", "length differs from the vertex count"));
    }
    if cfg.epsilons.is_empty() || cfg.epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::arg("epsilons", "must be nonempty and strictly decreasing"));
    }
    if model.dim() != 2 {
        return Err(Error::arg("model", "the surface backend has d = 2"));
    }
    if cfg.initial.iter().any(|&e| !(e > 10.0 * cfg.delta)) {
        return Err(Error::arg("initial", "energies must stay well above delta (> 10 delta)"));
    }
    if !(cfg.t >= 0.0) || cfg.micro_ensemble < 2 || cfg.sde_ensemble < 2 {
        return Err(Error::arg("t", "need t >= 0 and two members per ensemble"));
    }
    let inputs = serde_json::json!({ "config": cfg, "model": model });
    let n_sites = graph.num_vertices();
    let mut distances = Vec::new();
    let mut per_site = Vec::new();
    let mut micro_details = Vec::new();
    if cfg.t == 0.0 {
        distances = vec![0.0; cfg.epsilons.len()];
    } else {
        let mut sde = SdeRunConfig::new(graph.clone(), model.clone(), cfg.initial.clone(), cfg.t, cfg.seed)?;
        sde.record_stride = usize::MAX;
        let sde_runs = simulate_ensemble(&sde, cfg.sde_ensemble)?;
        let sde_final: Vec<Vec<f64>> = (0..n_sites)
            .map(|x| sde_runs.iter().map(|r| r.final_energies()[x]).collect())
            .collect();
        for &eps in &cfg.epsilons {
            let mut mc = MicroConfig::new(graph.clone(), cfg.initial.clone(), eps, cfg.delta, cfg.t, cfg.seed)?;
            mc.potential = cfg.potential;
            mc.step = cfg.micro_step;
            mc.record_interval = cfg.t;
            let runs = micro_ensemble(&mc, cfg.micro_ensemble)?;
            let site_d: Vec<f64> = (0..n_sites)
                .map(|x| {
                    let micro: Vec<f64> = runs.iter().map(|r| r.trajectory.final_energies()[x]).collect();
                    ks_two_sample_statistic(&micro, &sde_final[x])
                })
                .collect();
            let total0: f64 = cfg.initial.iter().sum();
            let total_dev = runs
                .iter()
                .map(|r| (r.trajectory.final_energies().iter().sum::<f64>() - total0).abs())
                .fold(0.0, f64::max);
            micro_details.push(serde_json::json!({
                "epsilon": eps,
                "max_hamiltonian_drift": runs.iter().map(|r| r.hamiltonian_drift).fold(0.0, f64::max),
                "max_total_energy_deviation": total_dev,
            }));
            distances.push(site_d.iter().copied().fold(0.0, f64::max));
            per_site.push(site_d);
        }
    }
    let floor = ks_noise_floor(cfg.micro_ensemble, cfg.sde_ensemble);
    let decreasing = distances.windows(2).all(|w| w[1] < w[0]);
    let last = *distances.last().unwrap();
    let mut r = HypothesisReport::new("micro-vs-sde", &inputs)
        .size("micro_trajectories", cfg.micro_ensemble)
        .size("sde_trajectories", cfg.sde_ensemble);
    r.statistic = last;
    r.level = floor;
    r.pass = (decreasing || cfg.t == 0.0) && last <= floor;
    r.seeds = vec![cfg.seed];
    r.details = serde_json::json!({
        "epsilons": cfg.epsilons,
        "ks_distance": distances,
        "ks_distance_per_site": per_site,
        "decreasing": decreasing,
        "noise_floor": floor,
        "within_noise_floor": last <= floor,
        "micro": micro_details,
    });
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> CoefficientModel {
        CoefficientModel::analytic(1.0, 3).unwrap()
    }

    #[test]
    fn bump_derivatives_match_finite_differences() {
        let b = Bump::new(0, 1.0, 0.7).unwrap();
        let h = 1e-5;
        for e in [0.45, 0.8, 1.0, 1.3, 1.6] {
            let (_, d1, d2) = b.jet(e);
            let fd1 = (b.jet(e + h).0 - b.jet(e - h).0) / (2.0 * h);
            let fd2 = (b.jet(e + h).1 - b.jet(e - h).1) / (2.0 * h);
            assert!((d1 - fd1).abs() < 1e-6 && (d2 - fd2).abs() < 1e-5, "{e}");
        }
        assert_eq!(b.jet(0.2), (0.0, 0.0, 0.0));
        assert!(Bump::new(0, 0.5, 0.6).is_err());
    }

    #[test]
    fn generator_matches_finite_difference_of_flux_form() {
        // 𝓛f via finite differences of f along the edge direction.
        let g = InteractionGraph::complete(2).unwrap();
        let m = model();
        let f = TestFunction::new(vec![Bump::new(0, 1.0, 0.8).unwrap(), Bump::new(1, 1.2, 0.9).unwrap()]);
        let e = [0.9, 1.3];
        let h = 1e-4;
        let along = |s: f64| f.eval(&[e[0] + s, e[1] - s]);
        let d1 = (along(h) - along(-h)) / (2.0 * h);
        let d2 = (along(h) - 2.0 * along(0.0) + along(-h)) / (h * h);
        let expected = m.drift(e[0], e[1]).unwrap() * d1 + m.beta_sq(e[0], e[1]).unwrap() * d2;
        let got = f.generator(&m, &g, &e).unwrap();
        assert!((got - expected).abs() < 1e-5 * expected.abs().max(1.0), "{got} {expected}");
    }

    #[test]
    fn identical_functions_give_zero_difference() {
        let g = InteractionGraph::complete(2).unwrap();
        let f = reversibility_catalog()[0].0.clone();
        let r = test_reversibility(&model(), &g, 1.0, &(f.clone(), f), 20_000, 1).unwrap();
        assert_eq!(r.details["difference"], 0.0);
        assert!(r.pass);
    }

    #[test]
    fn reversibility_disjoint_sites() {
        let g = InteractionGraph::complete(2).unwrap();
        let pair = &reversibility_catalog()[0];
        let r = test_reversibility(&model(), &g, 1.0, pair, 200_000, 2).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.details["phi_L_h"].as_f64().unwrap().abs() > 0.0);
        let r2 = test_reversibility(&model(), &g, 2.0, pair, 200_000, 2).unwrap();
        assert!(r2.pass, "{r2:?}");
        assert_ne!(r.details["phi_L_h"], r2.details["phi_L_h"]);
    }

    #[test]
    fn reversibility_detects_wrong_drift() {
        // Samples from h_β with d = 3 under the d = 9 generator: the extra
        // dimension term breaks detailed balance.
        let g = InteractionGraph::complete(2).unwrap();
        let wrong = CoefficientModel::analytic(1.0, 9).unwrap();
        let mut rng = stream(7, "test", 0);
        let samples: Vec<Vec<f64>> = (0..200_000).map(|_| sample_gibbs(2, 3, 1.0, &mut rng).unwrap()).collect();
        let best = reversibility_catalog()
            .iter()
            .map(|(phi, h)| {
                let diff: Vec<f64> = samples
                    .iter()
                    .map(|e| {
                        phi.eval(e) * h.generator(&wrong, &g, e).unwrap()
                            - h.eval(e) * phi.generator(&wrong, &g, e).unwrap()
                    })
                    .collect();
                let m = mean_and_se(&diff);
                (m.mean / m.stderr).abs()
            })
            .fold(0.0, f64::max);
        assert!(best > 6.0, "{best}");
    }

    #[test]
    fn drift_identity_holds() {
        let m = model();
        assert_eq!(m.drift(1.0, 1.0).unwrap(), 0.0);
        assert!(divergence_form_drift(&m, 1.0, 1.0, 1e-5).unwrap().abs() < 1e-9);
        let r = test_drift_identity(&m, &square_log_grid(0.1, 10.0, 21), 1e-5, 1e-4).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn drift_dimension_dependence() {
        let (m3, m5) = (model(), CoefficientModel::analytic(1.0, 5).unwrap());
        for (x, y) in [(0.3, 2.0), (4.0, 0.5)] {
            let diff = m5.drift(x, y).unwrap() - m3.drift(x, y).unwrap();
            let expect = (1.0 / x - 1.0 / y) * m3.beta_sq(x, y).unwrap();
            assert!((diff - expect).abs() <= 1e-12 * expect.abs().max(1e-300) * 10.0);
        }
    }

    #[test]
    fn downcrossings() {
        assert_eq!(count_downcrossings(&[0.0, 1.0, 2.0, 3.0], -1.0, 1.0), 0);
        let saw: Vec<f64> = (0..5).flat_map(|_| [2.0, -2.0]).collect();
        assert_eq!(count_downcrossings(&saw, -1.0, 1.0), 5);
        assert_eq!(count_downcrossings(&[2.0, 0.0, 2.0, -2.0], -1.0, 1.0), 1);
    }

    #[test]
    fn immediate_hit_has_probability_one() {
        let g = InteractionGraph::complete(2).unwrap();
        let t = estimate_hitting_probability(&model(), &g, &[0.5, 1.0], 0.1, &[0.6], 20, 0).unwrap();
        assert_eq!(t.rows[0].probability, 1.0);
        assert!(t.warning.is_none());
        let m2 = CoefficientModel::analytic(1.0, 2).unwrap();
        let t2 = estimate_hitting_probability(&m2, &g, &[0.5, 1.0], 0.1, &[0.6], 5, 0).unwrap();
        assert!(t2.warning.is_some());
    }

    #[test]
    fn small_site_gains_energy() {
        let g = InteractionGraph::complete(2).unwrap();
        let mut c = SdeRunConfig::new(g, model(), vec![1e-3, 1.0], 1e-4, 3).unwrap();
        c.dt = 1e-6;
        let r = test_mean_increment(&c, 0, 2000).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn calibration_small() {
        let cfg = CalibrationConfig {
            repetitions: 300,
            chains: 300,
            level: 0.05,
            tolerance: 0.04,
            ..Default::default()
        };
        let r = calibrate_marginal_test(3, 1.0, &cfg).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn invariant_marginal_small_run() {
        let g = InteractionGraph::complete(2).unwrap();
        let cfg = InvariantConfig {
            ensemble: 600,
            t_end: 0.5,
            snapshots: 4,
            min_effective: 500.0,
            seed: 4,
            ..Default::default()
        };
        let r = test_invariant_marginal(&model(), &g, &cfg).unwrap();
        assert!(r.pass, "{r:?}");
        let short = InvariantConfig { ensemble: 10, ..cfg };
        assert!(test_invariant_marginal(&model(), &g, &short).is_err());
    }

    #[test]
    fn compare_at_time_zero_is_exact() {
        let cfg = CompareConfig {
            graph: GraphDocument::from_graph(&InteractionGraph::complete(2).unwrap()),
            initial: vec![1.0, 1.0],
            epsilons: vec![0.2, 0.1],
            delta: 0.01,
            t: 0.0,
            micro_ensemble: 10,
            sde_ensemble: 10,
            potential: BumpPotential::default(),
            micro_step: 0.05,
            seed: 0,
        };
        let m2 = CoefficientModel::analytic(1.0, 2).unwrap();
        let r = compare_micro_sde(&cfg, &m2).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(compare_micro_sde(&cfg, &model()).is_err());
        let bad = CompareConfig { epsilons: vec![0.1, 0.2], ..cfg };
        assert!(compare_micro_sde(&bad, &m2).is_err());
    }

    #[test]
    fn summary_csv_has_header_and_rows() {
        let r = test_drift_identity(&model(), &[(1.0, 2.0)], 1e-5, 1e-4).unwrap();
        let csv = reports_to_csv(&[r]);
        assert!(csv.starts_with("name,statistic"));
        assert_eq!(csv.lines().count(), 2);
    }
}
