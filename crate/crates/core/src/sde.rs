//! Euler–Maruyama integration of the energy diffusion on an interaction graph.
//!
//! Each undirected edge `{x, y}` carries one Brownian increment, stored with
//! the orientation of [`InteractionGraph::edges`]. The step moves the flux
//! `f = ā(Ex,Ey) dt + √(2β²(Ex,Ey)) ΔB_xy` from `y` to `x`, so the total
//! energy changes only by floating-point rounding.
//!
//! A step is rejected when it would make an energy nonpositive or change it
//! by more than `max_rel_change` of its value. The interval is then split in
//! two and the increment is refined by a Brownian bridge, recursively.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coeffs::CoefficientModel;
use crate::error::{ensure_positive, Error, Result};
use crate::micro::cutoff::CutoffFamily;
use crate::rng::{stream, StreamRng};
use crate::topology::{GraphDocument, InteractionGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyState {
    pub energies: Vec<f64>,
    pub time: f64,
}

impl EnergyState {
    pub fn new(energies: Vec<f64>, time: f64) -> Result<Self> {
        if energies.iter().any(|&e| !(e.is_finite() && e > 0.0)) {
            return Err(Error::arg("energies", "all energies must be finite and > 0"));
        }
        if !(time.is_finite() && time >= 0.0) {
            return Err(Error::arg("time", format!("must be >= 0, got {time}")));
        }
        Ok(Self { energies, time })
    }

    pub fn total(&self) -> f64 {
        crate::stats::neumaier_sum(self.energies.iter().copied())
    }

    pub fn min_energy(&self) -> f64 {
        self.energies.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone)]
pub struct SdeRunConfig {
    pub graph: InteractionGraph,
    pub model: CoefficientModel,
    pub initial: Vec<f64>,
    pub dt: f64,
    pub t_end: f64,
    /// Stop at the first time some energy is `≤ delta_stop`; `0` disables.
    pub delta_stop: f64,
    pub seed: u64,
    pub max_halvings: u32,
    /// Record every `record_stride` base steps; the final state is always recorded.
    pub record_stride: usize,
    /// Reject steps changing some energy by more than this fraction.
    /// `None` keeps only the positivity rule.
    pub max_rel_change: Option<f64>,
}

pub const DEFAULT_MAX_HALVINGS: u32 = 40;
pub const DEFAULT_MAX_REL_CHANGE: f64 = 0.25;

impl SdeRunConfig {
    pub fn new(
        graph: InteractionGraph,
        model: CoefficientModel,
        initial: Vec<f64>,
        t_end: f64,
        seed: u64,
    ) -> Result<Self> {
        let dt = Self::default_dt(&initial, model.amplitude()).min(t_end / 2.0);
        let cfg = Self {
            graph,
            model,
            initial,
            dt,
            t_end,
            delta_stop: 0.0,
            seed,
            max_halvings: DEFAULT_MAX_HALVINGS,
            record_stride: 1,
            max_rel_change: Some(DEFAULT_MAX_REL_CHANGE),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `1e-4 · (mean initial energy)^{3/2} / A`.
    pub fn default_dt(initial: &[f64], amplitude: f64) -> f64 {
        let mean = initial.iter().sum::<f64>() / initial.len().max(1) as f64;
        1e-4 * mean.powf(1.5) / amplitude
    }

    pub fn validate(&self) -> Result<()> {
        if self.initial.len() != self.graph.num_vertices() {
            return Err(Error::arg(
                "initial",
                format!(
                    "{} energies for {} vertices",
                    self.initial.len(),
                    self.graph.num_vertices()
                ),
            ));
        }
        EnergyState::new(self.initial.clone(), 0.0)?;
        ensure_positive("dt", self.dt)?;
        ensure_positive("t_end", self.t_end)?;
        if self.dt >= self.t_end {
            return Err(Error::arg("dt", "must be smaller than t_end"));
        }
        if !(self.delta_stop.is_finite() && self.delta_stop >= 0.0) {
            return Err(Error::arg("delta_stop", "must be finite and >= 0"));
        }
        if self.record_stride == 0 {
            return Err(Error::arg("record_stride", "must be >= 1"));
        }
        if let Some(r) = self.max_rel_change {
            ensure_positive("max_rel_change", r)?;
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON of every field that affects the output.
    pub fn digest(&self) -> String {
        let doc = serde_json::json!({
            "graph": GraphDocument::from_graph(&self.graph),
            "model": &self.model,
            "initial": &self.initial,
            "dt": self.dt,
            "t_end": self.t_end,
            "delta_stop": self.delta_stop,
            "max_halvings": self.max_halvings,
            "record_stride": self.record_stride,
            "max_rel_change": self.max_rel_change,
        });
        hex_digest(doc.to_string().as_bytes())
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunDiagnostics {
    pub accepted_steps: u64,
    pub rejected_steps: u64,
    pub deepest_halving: u32,
    /// Largest `|Σ_x ΔE_x| / Σ_x E_x(0)` over accepted steps.
    pub max_step_imbalance: f64,
    /// Smallest single-site energy over all accepted steps and the start.
    pub min_site_energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub energies: Vec<Vec<f64>>,
    pub stopped: bool,
    pub stopping_time: Option<f64>,
    pub seed: u64,
    pub config_digest: String,
    pub diagnostics: RunDiagnostics,
}

impl TrajectoryRecord {
    pub fn final_energies(&self) -> &[f64] {
        self.energies.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }
}

/// One `N(0, dt)` draw per undirected edge, in edge order.
pub fn sample_edge_noise<R: Rng + ?Sized>(graph: &InteractionGraph, dt: f64, rng: &mut R) -> Vec<f64> {
    let sd = dt.sqrt();
    (0..graph.num_edges())
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Oriented increment `ΔB_xy` read from the per-edge sample.
pub fn oriented_increment(graph: &InteractionGraph, noise: &[f64], edge: usize, from: usize) -> f64 {
    if graph.edges()[edge].0 == from {
        noise[edge]
    } else {
        -noise[edge]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Accepted(EnergyState),
    Rejected,
}

/// One Euler–Maruyama step with the positivity rule only.
pub fn em_step(
    state: &EnergyState,
    graph: &InteractionGraph,
    model: &CoefficientModel,
    dt: f64,
    noise: &[f64],
) -> Result<StepOutcome> {
    if noise.len() != graph.num_edges() {
        return Err(Error::arg("noise", "one increment per edge is required"));
    }
    ensure_positive("dt", dt)?;
    let mut next = state.energies.clone();
    if try_step(&state.energies, &mut next, graph, model, dt, noise, None) {
        Ok(StepOutcome::Accepted(EnergyState {
            energies: next,
            time: state.time + dt,
        }))
    } else {
        Ok(StepOutcome::Rejected)
    }
}

#[inline]
fn try_step(
    current: &[f64],
    next: &mut [f64],
    graph: &InteractionGraph,
    model: &CoefficientModel,
    dt: f64,
    noise: &[f64],
    max_rel: Option<f64>,
) -> bool {
    next.copy_from_slice(current);
    for (k, &(x, y)) in graph.edges().iter().enumerate() {
        let (drift, bsq) = model.edge_terms(current[x], current[y]);
        let flux = drift * dt + (2.0 * bsq).sqrt() * noise[k];
        next[x] += flux;
        next[y] -= flux;
    }
    next.iter().zip(current).all(|(&n, &c)| {
        n > 0.0 && n.is_finite() && max_rel.is_none_or(|r| (n - c).abs() <= r * c)
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Advance {
    Continue,
    Stopped,
}

struct Integrator<'a> {
    graph: &'a InteractionGraph,
    model: &'a CoefficientModel,
    max_halvings: u32,
    max_rel: Option<f64>,
    delta_stop: f64,
    total0: f64,
    diag: RunDiagnostics,
    scratch: Vec<Vec<f64>>,
}

impl Integrator<'_> {
    /// Advances `state` over `dt` driven by the per-edge increments `dw`.
    fn advance(
        &mut self,
        state: &mut EnergyState,
        dt: f64,
        dw: &[f64],
        depth: u32,
        rng: &mut StreamRng,
    ) -> Result<Advance> {
        let mut next = self.scratch.pop().unwrap_or_default();
        next.resize(state.energies.len(), 0.0);
        if try_step(&state.energies, &mut next, self.graph, self.model, dt, dw, self.max_rel) {
            let before = crate::stats::neumaier_sum(state.energies.iter().copied());
            let after = crate::stats::neumaier_sum(next.iter().copied());
            self.diag.max_step_imbalance = self
                .diag
                .max_step_imbalance
                .max((after - before).abs() / self.total0);
            self.diag.accepted_steps += 1;
            self.diag.min_site_energy = self
                .diag
                .min_site_energy
                .min(next.iter().copied().fold(f64::INFINITY, f64::min));
            self.diag.deepest_halving = self.diag.deepest_halving.max(depth);
            std::mem::swap(&mut state.energies, &mut next);
            self.scratch.push(next);
            state.time += dt;
            return Ok(if self.delta_stop > 0.0 && state.min_energy() <= self.delta_stop {
                Advance::Stopped
            } else {
                Advance::Continue
            });
        }
        self.scratch.push(next);
        self.diag.rejected_steps += 1;
        if depth >= self.max_halvings {
            return Err(Error::StepRejected {
                time: state.time,
                halvings: depth,
                energies: state.energies.clone(),
            });
        }
        // Brownian bridge: W(dt/2) | W(dt) ~ N(W(dt)/2, dt/4).
        let sd = (dt / 4.0).sqrt();
        let first: Vec<f64> = dw
            .iter()
            .map(|&w| 0.5 * w + sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let second: Vec<f64> = dw.iter().zip(&first).map(|(w, f)| w - f).collect();
        if self.advance(state, dt / 2.0, &first, depth + 1, rng)? == Advance::Stopped {
            return Ok(Advance::Stopped);
        }
        self.advance(state, dt / 2.0, &second, depth + 1, rng)
    }
}

/// Integrates one trajectory.
pub fn simulate(config: &SdeRunConfig) -> Result<TrajectoryRecord> {
    let mut rng = stream(config.seed, "sde-trajectory", 0);
    simulate_from(config, &config.initial, &mut rng)
}

/// Integrates from `initial` with an explicit random stream.
pub fn simulate_from(
    config: &SdeRunConfig,
    initial: &[f64],
    rng: &mut StreamRng,
) -> Result<TrajectoryRecord> {
    config.validate()?;
    let mut state = EnergyState::new(initial.to_vec(), 0.0)?;
    if initial.len() != config.graph.num_vertices() {
        return Err(Error::arg("initial", "length differs from the vertex count"));
    }
    let mut record = TrajectoryRecord {
        times: vec![0.0],
        energies: vec![state.energies.clone()],
        stopped: false,
        stopping_time: None,
        seed: config.seed,
        config_digest: config.digest(),
        diagnostics: RunDiagnostics::default(),
    };
    record.diagnostics.min_site_energy = state.min_energy();
    if config.delta_stop > 0.0 && state.min_energy() <= config.delta_stop {
        record.stopped = true;
        record.stopping_time = Some(0.0);
        return Ok(record);
    }
    let mut integ = Integrator {
        graph: &config.graph,
        model: &config.model,
        max_halvings: config.max_halvings,
        max_rel: config.max_rel_change,
        delta_stop: config.delta_stop,
        total0: state.total(),
        diag: record.diagnostics,
        scratch: Vec::new(),
    };
    let n_steps = (config.t_end / config.dt).ceil() as u64;
    for k in 0..n_steps {
        let t_next = ((k + 1) as f64 * config.dt).min(config.t_end);
        let h = t_next - state.time;
        let dw = sample_edge_noise(&config.graph, h, rng);
        let outcome = integ.advance(&mut state, h, &dw, 0, rng)?;
        if outcome == Advance::Stopped {
            record.stopped = true;
            record.stopping_time = Some(state.time);
            push_sample(&mut record, &state);
            break;
        }
        state.time = t_next;
        if (k + 1) % config.record_stride as u64 == 0 || k + 1 == n_steps {
            push_sample(&mut record, &state);
        }
    }
    record.diagnostics = integ.diag;
    Ok(record)
}

fn push_sample(record: &mut TrajectoryRecord, state: &EnergyState) {
    if record.times.last().is_some_and(|&t| t >= state.time) {
        return;
    }
    record.times.push(state.time);
    record.energies.push(state.energies.clone());
}

/// Runs `n` independent trajectories; member `i` uses stream
/// `(seed, "sde-trajectory", i)`, so member 0 equals [`simulate`].
pub fn simulate_ensemble(config: &SdeRunConfig, n: usize) -> Result<Vec<TrajectoryRecord>> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(config.seed, "sde-trajectory", i as u64);
            simulate_from(config, &config.initial, &mut rng)
        })
        .collect()
}

/// Configuration of the log-coordinate integrator with explicit cutoff.
#[derive(Debug, Clone)]
pub struct LogCoordsConfig {
    pub base: SdeRunConfig,
    pub cutoff_delta: f64,
    /// Project every step back onto the level set of `𝓗 = Σ ϕ_δ(e^{z_x})`.
    pub project: bool,
}

/// Per-vertex drift and per-edge `(β_xy, β_yx)` noise coefficients.
pub type LogCoefficients = (Vec<f64>, Vec<(f64, f64)>);

/// Per-vertex drift `a_x(z)` and per-edge noise coefficients
/// `(β_xy(z), β_yx(z))` of the log-coordinate equation.
pub fn log_coefficients(
    z: &[f64],
    graph: &InteractionGraph,
    model: &CoefficientModel,
    cutoff: &CutoffFamily,
) -> Result<LogCoefficients> {
    let d = model.dim() as f64;
    let mut drift = vec![0.0; z.len()];
    let mut noise = Vec::with_capacity(graph.num_edges());
    for &(x, y) in graph.edges() {
        let (px, lx) = cutoff.phi_and_log_slope(z[x]);
        let (py, ly) = cutoff.phi_and_log_slope(z[y]);
        let (wx, wy) = (cutoff.omega(z[x]), cutoff.omega(z[y]));
        let (dwx, dwy) = (cutoff.omega_prime(z[x]), cutoff.omega_prime(z[y]));
        let (ex, ey) = ((-z[x]).exp(), (-z[y]).exp());
        let rho_xy = model.rho(wx, wy)?;
        let rho_yx = model.rho(wy, wx)?;
        let (dxy_a, dxy_b) = model.rho_partials(wx, wy)?;
        let (dyx_a, dyx_b) = model.rho_partials(wy, wx)?;
        // Contribution to a_x: ∂x[e^{-zx}φx²φy²ρxy] - ∂y[e^{-zy}φxφy³ρxy].
        let f = ex * px * px * py * py;
        let g = ey * px * py.powi(3);
        let dfx = f * (-1.0 + 2.0 * lx) * rho_xy + f * dxy_a * dwx;
        let dgy = g * (-1.0 + 3.0 * ly) * rho_xy + g * dxy_b * dwy;
        drift[x] += dfx - dgy + 0.5 * d * (f - g) * rho_xy;
        // The same with x and y exchanged.
        let f = ey * py * py * px * px;
        let g = ex * py * px.powi(3);
        let dfy = f * (-1.0 + 2.0 * ly) * rho_yx + f * dyx_a * dwy;
        let dgx = g * (-1.0 + 3.0 * lx) * rho_yx + g * dyx_b * dwx;
        drift[y] += dfy - dgx + 0.5 * d * (f - g) * rho_yx;
        let bx = std::f64::consts::SQRT_2 * (-0.5 * z[x]).exp() * px * py * rho_xy.sqrt();
        let by = std::f64::consts::SQRT_2 * (-0.5 * z[y]).exp() * px * py * rho_yx.sqrt();
        noise.push((bx, by));
    }
    Ok((drift, noise))
}

/// `Σ_x ϕ_δ(e^{z_x})`.
pub fn conserved_log_energy(z: &[f64], cutoff: &CutoffFamily) -> f64 {
    crate::stats::neumaier_sum(z.iter().map(|&zx| cutoff.big_phi(zx.exp())))
}

// Uniform shift c with Σ ϕ(e^{z+c}) = target, by Newton iteration.
fn project_level_set(z: &mut [f64], target: f64, cutoff: &CutoffFamily) {
    for _ in 0..8 {
        let h = conserved_log_energy(z, cutoff);
        let r = h - target;
        if r.abs() <= 1e-15 * target.abs() {
            break;
        }
        let slope: f64 = z.iter().map(|&zx| zx.exp() / cutoff.phi(zx.exp())).sum();
        let c = -r / slope;
        z.iter_mut().for_each(|zx| *zx += c);
    }
}

/// Integrates `z = ln E` with the δ-cutoff coefficients; energies are
/// reported as `e^{z}`. Stopping at `delta_stop` is as in [`simulate`].
pub fn simulate_log_coords(config: &LogCoordsConfig) -> Result<TrajectoryRecord> {
    let mut rng = stream(config.base.seed, "sde-log-trajectory", 0);
    let n_steps = (config.base.t_end / config.base.dt).ceil() as usize;
    let mut noise_for_step = |h: f64| sample_edge_noise(&config.base.graph, h, &mut rng);
    let mut increments = Vec::with_capacity(n_steps);
    for k in 0..n_steps {
        let t0 = k as f64 * config.base.dt;
        let h = ((k + 1) as f64 * config.base.dt).min(config.base.t_end) - t0;
        increments.push(noise_for_step(h));
    }
    simulate_log_coords_with_noise(config, &increments)
}

/// As [`simulate_log_coords`], driven by given base-step increments. Steps
/// are not refined; a step moving some `z_x` by more than
/// `max_rel_change` is an error.
pub fn simulate_log_coords_with_noise(
    config: &LogCoordsConfig,
    increments: &[Vec<f64>],
) -> Result<TrajectoryRecord> {
    let base = &config.base;
    base.validate()?;
    let cutoff = CutoffFamily::new(config.cutoff_delta)?;
    let graph = &base.graph;
    let mut z: Vec<f64> = base.initial.iter().map(|e| e.ln()).collect();
    let target = conserved_log_energy(&z, &cutoff);
    let total0: f64 = base.initial.iter().sum();
    let mut record = TrajectoryRecord {
        times: vec![0.0],
        energies: vec![base.initial.clone()],
        stopped: false,
        stopping_time: None,
        seed: base.seed,
        config_digest: hex_digest(
            format!("{}|log|{}|{}", base.digest(), config.cutoff_delta, config.project).as_bytes(),
        ),
        diagnostics: RunDiagnostics::default(),
    };
    record.diagnostics.min_site_energy = base.initial.iter().copied().fold(f64::INFINITY, f64::min);
    let n_steps = (base.t_end / base.dt).ceil() as usize;
    if increments.len() < n_steps {
        return Err(Error::arg("increments", "fewer increments than steps"));
    }
    let max_dz = base.max_rel_change.unwrap_or(f64::INFINITY);
    let mut time = 0.0;
    for (k, dw) in increments.iter().take(n_steps).enumerate() {
        let t_next = ((k + 1) as f64 * base.dt).min(base.t_end);
        let h = t_next - time;
        let (drift, sig) = log_coefficients(&z, graph, &base.model, &cutoff)?;
        let mut dz: Vec<f64> = drift.iter().map(|a| a * h).collect();
        for (e, &(x, y)) in graph.edges().iter().enumerate() {
            dz[x] += sig[e].0 * dw[e];
            dz[y] -= sig[e].1 * dw[e];
        }
        if dz.iter().any(|d| !(d.abs() <= max_dz)) {
            return Err(Error::StepRejected {
                time,
                halvings: 0,
                energies: z.iter().map(|v| v.exp()).collect(),
            });
        }
        let before: f64 = z.iter().map(|v| v.exp()).sum();
        z.iter_mut().zip(&dz).for_each(|(v, d)| *v += d);
        if config.project {
            project_level_set(&mut z, target, &cutoff);
        }
        let after: f64 = z.iter().map(|v| v.exp()).sum();
        record.diagnostics.accepted_steps += 1;
        record.diagnostics.max_step_imbalance = record
            .diagnostics
            .max_step_imbalance
            .max((after - before).abs() / total0);
        time = t_next;
        let energies: Vec<f64> = z.iter().map(|v| v.exp()).collect();
        record.diagnostics.min_site_energy = energies
            .iter()
            .copied()
            .fold(record.diagnostics.min_site_energy, f64::min);
        if base.delta_stop > 0.0 && energies.iter().any(|&e| e <= base.delta_stop) {
            record.stopped = true;
            record.stopping_time = Some(time);
            record.times.push(time);
            record.energies.push(energies);
            break;
        }
        if (k + 1) % base.record_stride == 0 || k + 1 == n_steps {
            record.times.push(time);
            record.energies.push(energies);
        }
    }
    Ok(record)
}

/// Integrates the energy scheme without refinement from fixed base-step
/// increments; used to couple it with the log-coordinate scheme.
pub fn simulate_with_noise(config: &SdeRunConfig, increments: &[Vec<f64>]) -> Result<TrajectoryRecord> {
    config.validate()?;
    let mut state = EnergyState::new(config.initial.clone(), 0.0)?;
    let mut record = TrajectoryRecord {
        times: vec![0.0],
        energies: vec![state.energies.clone()],
        stopped: false,
        stopping_time: None,
        seed: config.seed,
        config_digest: config.digest(),
        diagnostics: RunDiagnostics::default(),
    };
    record.diagnostics.min_site_energy = state.min_energy();
    let n_steps = (config.t_end / config.dt).ceil() as usize;
    for (k, dw) in increments.iter().take(n_steps).enumerate() {
        let t_next = ((k + 1) as f64 * config.dt).min(config.t_end);
        let h = t_next - state.time;
        match em_step(&state, &config.graph, &config.model, h, dw)? {
            StepOutcome::Accepted(mut next) => {
                next.time = t_next;
                state = next;
            }
            StepOutcome::Rejected => {
                return Err(Error::StepRejected {
                    time: state.time,
                    halvings: 0,
                    energies: state.energies,
                })
            }
        }
        record.diagnostics.accepted_steps += 1;
        record.diagnostics.min_site_energy = record.diagnostics.min_site_energy.min(state.min_energy());
        if (k + 1) % config.record_stride == 0 || k + 1 == n_steps {
            push_sample(&mut record, &state);
        }
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_two_sample, mean_and_se};

    fn two_site(e: [f64; 2], t_end: f64, seed: u64) -> SdeRunConfig {
        let g = InteractionGraph::complete(2).unwrap();
        let m = CoefficientModel::analytic(1.0, 3).unwrap();
        let mut c = SdeRunConfig::new(g, m, e.to_vec(), t_end, seed).unwrap();
        c.dt = 1e-3;
        c
    }

    #[test]
    fn edge_noise_moments() {
        let g = InteractionGraph::complete(3).unwrap();
        let mut rng = stream(1, "noise-test", 0);
        let dt = 0.01;
        let n = 100_000;
        let mut cols: Vec<Vec<f64>> = (0..3).map(|_| Vec::with_capacity(n)).collect();
        for _ in 0..n {
            let w = sample_edge_noise(&g, dt, &mut rng);
            for (c, v) in cols.iter_mut().zip(w) {
                c.push(v);
            }
        }
        for c in &cols {
            let est = mean_and_se(c);
            assert!(est.mean.abs() < 4.0 * est.stderr);
            let var = c.iter().map(|v| v * v).sum::<f64>() / n as f64;
            assert!((var / dt - 1.0).abs() < 0.05);
        }
        let w = vec![0.3, -0.2, 0.1];
        for e in 0..3 {
            let (x, y) = g.edges()[e];
            assert_eq!(oriented_increment(&g, &w, e, x) + oriented_increment(&g, &w, e, y), 0.0);
        }
    }

    #[test]
    fn zero_noise_equal_energies_is_fixed_point() {
        let c = two_site([0.8, 0.8], 1.0, 0);
        let s = EnergyState::new(vec![0.8, 0.8], 0.0).unwrap();
        match em_step(&s, &c.graph, &c.model, 0.01, &[0.0]).unwrap() {
            StepOutcome::Accepted(n) => assert_eq!(n.energies, s.energies),
            StepOutcome::Rejected => panic!("rejected"),
        }
    }

    #[test]
    fn positivity_violation_is_rejected() {
        let c = two_site([0.01, 1.0], 1.0, 0);
        let s = EnergyState::new(vec![0.01, 1.0], 0.0).unwrap();
        let r = em_step(&s, &c.graph, &c.model, 0.01, &[-10.0]).unwrap();
        assert_eq!(r, StepOutcome::Rejected);
    }

    #[test]
    fn per_step_and_total_conservation() {
        let g = InteractionGraph::lattice_region(2, &[0..3, 0..3]).unwrap();
        let m = CoefficientModel::analytic(1.0, 3).unwrap();
        let init: Vec<f64> = (0..9).map(|i| 0.2 + 0.3 * i as f64).collect();
        let mut c = SdeRunConfig::new(g, m, init.clone(), 2.0, 11).unwrap();
        c.dt = 1e-3;
        let r = simulate(&c).unwrap();
        let t0: f64 = init.iter().sum();
        let t1: f64 = r.final_energies().iter().sum();
        assert!((t1 - t0).abs() <= 1e-12 * t0);
        assert!(r.diagnostics.max_step_imbalance <= 1e-12);
        assert!(r.energies.iter().flatten().all(|&e| e > 0.0));
        assert!(r.times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(r.final_time(), 2.0);
    }

    #[test]
    fn immediate_stop() {
        let mut c = two_site([0.5, 1.0], 1.0, 0);
        c.delta_stop = 0.5;
        let r = simulate(&c).unwrap();
        assert!(r.stopped);
        assert_eq!(r.stopping_time, Some(0.0));
        assert_eq!(r.times.len(), 1);
    }

    #[test]
    fn deterministic_records() {
        let c = two_site([1.0, 0.3], 0.5, 99);
        assert_eq!(simulate(&c).unwrap(), simulate(&c).unwrap());
        let ens = simulate_ensemble(&c, 3).unwrap();
        assert_eq!(ens[0], simulate(&c).unwrap());
        assert_ne!(ens[1], ens[0]);
    }

    #[test]
    fn singleton_graph_is_constant() {
        let m = CoefficientModel::analytic(1.0, 3).unwrap();
        let c = SdeRunConfig::new(InteractionGraph::singleton(), m, vec![2.0], 1.0, 0).unwrap();
        let r = simulate(&c).unwrap();
        assert!(r.energies.iter().all(|e| e == &vec![2.0]));
    }

    #[test]
    fn mean_drift_of_small_site() {
        // Single edge, Ex ≪ Ey: E[ΔEx]/dt ≈ A d / (2√(2 Ey)).
        let c = two_site([1e-6, 2.0], 1.0, 0);
        let s = EnergyState::new(vec![1e-6, 2.0], 0.0).unwrap();
        let dt = 1e-9;
        let mut rng = stream(3, "drift-test", 0);
        let mut incs = Vec::with_capacity(100_000);
        while incs.len() < 100_000 {
            let w = sample_edge_noise(&c.graph, dt, &mut rng);
            if let StepOutcome::Accepted(n) = em_step(&s, &c.graph, &c.model, dt, &w).unwrap() {
                incs.push((n.energies[0] - 1e-6) / dt);
            }
        }
        let est = mean_and_se(&incs);
        let target = 3.0 / (2.0 * 2f64.sqrt() * 2.0);
        assert!((est.mean - target).abs() < 4.0 * est.stderr + 1e-3 * target, "{est:?}");
    }

    #[test]
    fn halving_dt_keeps_the_law() {
        let n = 4000;
        let run = |dt: f64| -> Vec<f64> {
            let mut c = two_site([1.0, 0.5], 0.5, 21);
            c.dt = dt;
            c.record_stride = usize::MAX;
            simulate_ensemble(&c, n)
                .unwrap()
                .iter()
                .map(|r| r.final_energies()[0])
                .collect()
        };
        let a = run(4e-3);
        let b = run(2e-3);
        let ks = ks_two_sample(&a, &b).unwrap();
        assert!(ks.p_value > 0.01, "{ks:?}");
    }

    #[test]
    fn log_coefficients_reduce_to_energy_drift_above_cutoff() {
        let g = InteractionGraph::complete(2).unwrap();
        let m = CoefficientModel::analytic(1.0, 3).unwrap();
        let cut = CutoffFamily::new(1e-3).unwrap();
        for (ex, ey) in [(1.0, 2.0), (0.3, 0.05), (4.0, 4.0)] {
            let z = [f64::ln(ex), f64::ln(ey)];
            let (a, b) = log_coefficients(&z, &g, &m, &cut).unwrap();
            let half_var_x = 0.5 * b[0].0 * b[0].0;
            let recon = ex * (a[0] + half_var_x);
            let direct = m.drift(ex, ey).unwrap();
            assert!((recon - direct).abs() <= 1e-12 * (1.0 + direct.abs()), "{recon} vs {direct}");
            let bsq = m.beta_sq(ex, ey).unwrap();
            assert!((b[0].0 * ex - (2.0 * bsq).sqrt()).abs() < 1e-12);
            // κ symmetry: e^{z_x}/φ_x β_xy = e^{z_y}/φ_y β_yx.
            assert!((ex * b[0].0 - ey * b[0].1).abs() < 1e-12);
        }
    }

    #[test]
    fn log_scheme_conserves_and_tracks_energy_scheme() {
        let dt = 1e-4;
        let mut c = two_site([1.0, 1.2], 1.0, 5);
        c.dt = dt;
        c.record_stride = 1;
        c.max_rel_change = None;
        let mut rng = stream(5, "coupling", 0);
        let incs: Vec<Vec<f64>> = (0..10_000).map(|_| sample_edge_noise(&c.graph, dt, &mut rng)).collect();
        let direct = simulate_with_noise(&c, &incs).unwrap();
        let lc = LogCoordsConfig {
            base: c.clone(),
            cutoff_delta: 1e-3,
            project: true,
        };
        let log = simulate_log_coords_with_noise(&lc, &incs).unwrap();
        let total: f64 = c.initial.iter().sum();
        for e in &log.energies {
            assert!((e.iter().sum::<f64>() - total).abs() <= 1e-8 * total);
        }
        let sup = direct
            .energies
            .iter()
            .zip(&log.energies)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        // The two Euler schemes differ by Itô remainder terms of size O(√dt).
        assert!(sup < 10.0 * dt.sqrt(), "sup difference {sup}");
    }

    #[test]
    fn log_scheme_zero_noise_equal_energies() {
        let mut c = two_site([0.7, 0.7], 0.1, 0);
        c.dt = 1e-2;
        let lc = LogCoordsConfig { base: c, cutoff_delta: 1e-2, project: true };
        let incs = vec![vec![0.0]; 10];
        let r = simulate_log_coords_with_noise(&lc, &incs).unwrap();
        for e in &r.energies {
            assert!((e[0] - 0.7).abs() < 1e-14 && (e[1] - 0.7).abs() < 1e-14);
        }
    }
}
