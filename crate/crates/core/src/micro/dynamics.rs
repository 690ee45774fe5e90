//! The δ-modified coupled geodesic flows in the variables `(ξ, z = ln e)`.
//!
//! For every site `x`, with `S_x = Σ_{y~x} φ_δ(e^{z_y}) u(ξ_y)`:
//!
//! ```text
//! ġ_x = g_x (s_x X + κ_x W),   X = diag(1/2, -1/2),  W = [[0, 1/2], [-1/2, 0]]
//! s_x = ω_δ(z_x) + ε ζ_δ(z_x) u(ξ_x) S_x
//! κ_x = -(ε/√2) e^{-z_x/2} φ_δ(e^{z_x}) ∂⊥u(ξ_x) S_x
//! ż_x = -ε √2 e^{-z_x/2} φ_δ(e^{z_x}) ∂u(ξ_x) S_x
//! ```
//!
//! `∂u` and `∂⊥u` are the derivatives along the unit tangent and along the
//! tangent turned by `+π/2`. The flow preserves
//! `𝓗 = Σ_x ϕ_δ(e^{z_x}) + ε Σ_{x~y} φ_δ(e^{z_x}) φ_δ(e^{z_y}) u(ξ_x) u(ξ_y)`.
//! At `ε = 0` the energies `e^{z_x}` are constant.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cutoff::CutoffFamily;
use super::potential::BumpPotential;
use super::surface::{BolzaSurface, Frame};
use crate::error::{ensure_positive, Error, Result};
use crate::rng::stream;
use crate::sde::{hex_digest, RunDiagnostics, TrajectoryRecord};
use crate::topology::{GraphDocument, InteractionGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MicroBackend {
    #[default]
    Hyperbolic,
}

#[derive(Debug, Clone)]
pub struct MicroConfig {
    pub graph: InteractionGraph,
    pub backend: MicroBackend,
    pub potential: BumpPotential,
    pub epsilon: f64,
    pub epsilon_max: f64,
    pub delta: f64,
    pub initial: Vec<f64>,
    /// RK4 step in physical time.
    pub step: f64,
    /// Horizon in slow time `t`; the physical horizon is `t/ε²`.
    pub t_end: f64,
    /// Physical horizon overriding `t_end`; required when `ε = 0`.
    pub physical_time: Option<f64>,
    /// Sampling interval on the reported time axis (slow time if `ε > 0`,
    /// physical time otherwise).
    pub record_interval: f64,
    pub seed: u64,
    /// Error out when `|𝓗(t) - 𝓗(0)|/|𝓗(0)|` exceeds this.
    pub max_hamiltonian_drift: Option<f64>,
}

/// Energy drift allowed at `ε = 0`, where the exact flow keeps it at zero.
pub const UNCOUPLED_ENERGY_TOLERANCE: f64 = 1e-8;

impl MicroConfig {
    pub fn new(
        graph: InteractionGraph,
        initial: Vec<f64>,
        epsilon: f64,
        delta: f64,
        t_end: f64,
        seed: u64,
    ) -> Result<Self> {
        let cfg = Self {
            graph,
            backend: MicroBackend::Hyperbolic,
            potential: BumpPotential::default(),
            epsilon,
            epsilon_max: 1.0,
            delta,
            initial,
            step: 0.05,
            t_end,
            physical_time: None,
            record_interval: t_end / 10.0,
            seed,
            max_hamiltonian_drift: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.initial.len() != self.graph.num_vertices() {
            return Err(Error::arg("initial", "length differs from the vertex count"));
        }
        if self.initial.iter().any(|&e| !(e.is_finite() && e > 0.0)) {
            return Err(Error::arg("initial", "energies must be finite and > 0"));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0 && self.epsilon <= self.epsilon_max) {
            return Err(Error::arg(
                "epsilon",
                format!("must lie in [0, {}], got {}", self.epsilon_max, self.epsilon),
            ));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::arg("delta", format!("must lie in (0, 1), got {}", self.delta)));
        }
        ensure_positive("step", self.step)?;
        ensure_positive("record_interval", self.record_interval)?;
        match self.physical_time {
            Some(t) => ensure_positive("physical_time", t)?,
            None => {
                ensure_positive("t_end", self.t_end)?;
                if self.epsilon == 0.0 {
                    return Err(Error::arg(
                        "physical_time",
                        "required when epsilon = 0 (the slow clock does not run)",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn physical_horizon(&self) -> f64 {
        self.physical_time
            .unwrap_or(self.t_end / (self.epsilon * self.epsilon))
    }

    /// Converts physical time to the reported time axis.
    fn report_time(&self, t: f64) -> f64 {
        if self.epsilon > 0.0 {
            self.epsilon * self.epsilon * t
        } else {
            t
        }
    }

    pub fn digest(&self) -> String {
        let doc = serde_json::json!({
            "graph": GraphDocument::from_graph(&self.graph),
            "backend": self.backend,
            "potential": self.potential,
            "epsilon": self.epsilon,
            "delta": self.delta,
            "initial": &self.initial,
            "step": self.step,
            "t_end": self.t_end,
            "physical_time": self.physical_time,
            "record_interval": self.record_interval,
        });
        hex_digest(doc.to_string().as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroState {
    pub frames: Vec<Frame>,
    pub z: Vec<f64>,
}

impl MicroState {
    /// Initial energies with frames drawn from the Liouville measure.
    pub fn sample(initial: &[f64], seed: u64, index: u64) -> Self {
        let mut rng = stream(seed, "micro-initial", index);
        let s = BolzaSurface::get();
        Self {
            frames: initial.iter().map(|_| s.sample_uniform(&mut rng)).collect(),
            z: initial.iter().map(|e| e.ln()).collect(),
        }
    }

    pub fn energies(&self) -> Vec<f64> {
        self.z.iter().map(|z| z.exp()).collect()
    }

    /// Velocity reversal at every site.
    pub fn reversed(&self) -> Self {
        Self {
            frames: self.frames.iter().map(Frame::reversed).collect(),
            z: self.z.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroRecord {
    pub trajectory: TrajectoryRecord,
    /// Largest relative deviation of `𝓗` from its initial value.
    pub hamiltonian_drift: f64,
    /// Largest `|det g - 1|` seen before renormalization.
    pub max_det_error: f64,
    pub final_state: MicroState,
}

struct System<'a> {
    graph: &'a InteractionGraph,
    potential: &'a BumpPotential,
    cutoff: CutoffFamily,
    epsilon: f64,
}

const STRIDE: usize = 5;

impl System<'_> {
    fn rhs(&self, st: &[f64], out: &mut [f64], fields: &mut Vec<(f64, f64, f64, f64)>) {
        let n = st.len() / STRIDE;
        fields.clear();
        for x in 0..n {
            let g = frame_at(st, x);
            let f = self.potential.field(&g);
            let phi = self.cutoff.phi(st[STRIDE * x + 4].exp());
            fields.push((f.u, f.along, f.across, phi));
        }
        let eps = self.epsilon;
        for x in 0..n {
            let z = st[STRIDE * x + 4];
            let (u, along, across, phi) = fields[x];
            let s_sum: f64 = self
                .graph
                .neighbors(x)
                .iter()
                .map(|&y| fields[y].3 * fields[y].0)
                .sum();
            let damp = (-0.5 * z).exp() * phi;
            let speed = self.cutoff.omega(z) + eps * self.cutoff.zeta(z) * u * s_sum;
            let kappa = -eps * std::f64::consts::FRAC_1_SQRT_2 * damp * across * s_sum;
            let zdot = -eps * std::f64::consts::SQRT_2 * damp * along * s_sum;
            let (a, b, c, d) = (st[STRIDE * x], st[STRIDE * x + 1], st[STRIDE * x + 2], st[STRIDE * x + 3]);
            let (hs, hk) = (0.5 * speed, 0.5 * kappa);
            out[STRIDE * x] = a * hs - b * hk;
            out[STRIDE * x + 1] = a * hk - b * hs;
            out[STRIDE * x + 2] = c * hs - d * hk;
            out[STRIDE * x + 3] = c * hk - d * hs;
            out[STRIDE * x + 4] = zdot;
        }
    }

    fn hamiltonian(&self, state: &MicroState) -> f64 {
        let mut h = crate::stats::NeumaierSum::new();
        for &z in &state.z {
            h.add(self.cutoff.big_phi(z.exp()));
        }
        if self.epsilon != 0.0 {
            for &(x, y) in self.graph.edges() {
                let px = self.cutoff.phi(state.z[x].exp());
                let py = self.cutoff.phi(state.z[y].exp());
                h.add(
                    self.epsilon
                        * px
                        * py
                        * self.potential.u(&state.frames[x])
                        * self.potential.u(&state.frames[y]),
                );
            }
        }
        h.value()
    }
}

#[inline]
fn frame_at(st: &[f64], x: usize) -> Frame {
    Frame::new(st[STRIDE * x], st[STRIDE * x + 1], st[STRIDE * x + 2], st[STRIDE * x + 3])
}

fn pack(state: &MicroState) -> Vec<f64> {
    let mut v = Vec::with_capacity(STRIDE * state.z.len());
    for (g, z) in state.frames.iter().zip(&state.z) {
        v.extend_from_slice(&[g.a, g.b, g.c, g.d, *z]);
    }
    v
}

fn unpack(st: &[f64]) -> MicroState {
    let n = st.len() / STRIDE;
    MicroState {
        frames: (0..n).map(|x| frame_at(st, x)).collect(),
        z: (0..n).map(|x| st[STRIDE * x + 4]).collect(),
    }
}

/// Integrates from `state` for the configured physical horizon.
pub fn micro_simulate_from(config: &MicroConfig, state: MicroState) -> Result<MicroRecord> {
    config.validate()?;
    if state.z.len() != config.graph.num_vertices() {
        return Err(Error::arg("state", "length differs from the vertex count"));
    }
    let surface = BolzaSurface::get();
    let sys = System {
        graph: &config.graph,
        potential: &config.potential,
        cutoff: CutoffFamily::new(config.delta)?,
        epsilon: config.epsilon,
    };
    let horizon = config.physical_horizon();
    let n_steps = (horizon / config.step).ceil().max(1.0) as u64;
    let h = horizon / n_steps as f64;
    let record_phys = if config.epsilon > 0.0 {
        config.record_interval / (config.epsilon * config.epsilon)
    } else {
        config.record_interval
    };
    let stride = ((record_phys / h).round() as u64).max(1);

    let h0 = sys.hamiltonian(&state);
    let e0 = state.energies();
    let mut record = TrajectoryRecord {
        times: vec![0.0],
        energies: vec![e0.clone()],
        stopped: false,
        stopping_time: None,
        seed: config.seed,
        config_digest: config.digest(),
        diagnostics: RunDiagnostics::default(),
    };
    record.diagnostics.min_site_energy = e0.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hamiltonian_drift: f64 = 0.0;
    let mut max_det_error: f64 = 0.0;
    let mut y = pack(&state);
    let dim = y.len();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
    let mut tmp = vec![0.0; dim];
    let mut fields = Vec::with_capacity(dim / STRIDE);
    let scale = h0.abs().max(f64::MIN_POSITIVE);
    for k in 1..=n_steps {
        sys.rhs(&y, &mut k1, &mut fields);
        for i in 0..dim {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        sys.rhs(&tmp, &mut k2, &mut fields);
        for i in 0..dim {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        sys.rhs(&tmp, &mut k3, &mut fields);
        for i in 0..dim {
            tmp[i] = y[i] + h * k3[i];
        }
        sys.rhs(&tmp, &mut k4, &mut fields);
        for i in 0..dim {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        for x in 0..dim / STRIDE {
            let mut g = frame_at(&y, x);
            max_det_error = max_det_error.max((g.det() - 1.0).abs());
            g.renormalize();
            surface.reduce(&mut g)?;
            y[STRIDE * x..STRIDE * x + 4].copy_from_slice(&[g.a, g.b, g.c, g.d]);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::IntegratorDrift {
                drift: f64::INFINITY,
                tolerance: config.max_hamiltonian_drift.unwrap_or(f64::INFINITY),
            });
        }
        if k % stride == 0 || k == n_steps {
            let st = unpack(&y);
            let hd = (sys.hamiltonian(&st) - h0).abs() / scale;
            hamiltonian_drift = hamiltonian_drift.max(hd);
            if let Some(tol) = config.max_hamiltonian_drift {
                if hd > tol {
                    return Err(Error::IntegratorDrift { drift: hd, tolerance: tol });
                }
            }
            let energies = st.energies();
            if config.epsilon == 0.0 {
                let drift = energies
                    .iter()
                    .zip(&e0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                if drift > UNCOUPLED_ENERGY_TOLERANCE {
                    return Err(Error::IntegratorDrift {
                        drift,
                        tolerance: UNCOUPLED_ENERGY_TOLERANCE,
                    });
                }
            }
            record.diagnostics.min_site_energy = energies
                .iter()
                .copied()
                .fold(record.diagnostics.min_site_energy, f64::min);
            record.times.push(config.report_time(k as f64 * h));
            record.energies.push(energies);
        }
    }
    record.diagnostics.accepted_steps = n_steps;
    Ok(MicroRecord {
        trajectory: record,
        hamiltonian_drift,
        max_det_error,
        final_state: unpack(&y),
    })
}

/// One trajectory from Liouville-distributed frames (ensemble member 0).
pub fn micro_simulate(config: &MicroConfig) -> Result<MicroRecord> {
    micro_simulate_from(config, MicroState::sample(&config.initial, config.seed, 0))
}

/// `n` independent trajectories; member `i` starts from
/// `MicroState::sample(initial, seed, i)`.
pub fn micro_ensemble(config: &MicroConfig, n: usize) -> Result<Vec<MicroRecord>> {
    (0..n)
        .into_par_iter()
        .map(|i| micro_simulate_from(config, MicroState::sample(&config.initial, config.seed, i as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(eps: f64) -> MicroConfig {
        let g = InteractionGraph::complete(2).unwrap();
        let mut c = MicroConfig::new(g, vec![1.0, 0.6], 0.1, 0.01, 0.05, 3).unwrap();
        c.epsilon = eps;
        c.step = 0.02;
        c
    }

    #[test]
    fn uncoupled_energies_are_exactly_constant() {
        let mut c = config(0.0);
        c.physical_time = Some(50.0);
        c.record_interval = 5.0;
        let r = micro_simulate(&c).unwrap();
        for e in &r.trajectory.energies {
            assert_eq!(e, &c.initial);
        }
        assert!(r.max_det_error < 1e-9);
        assert_eq!(*r.trajectory.times.last().unwrap(), 50.0);
    }

    #[test]
    fn coupled_hamiltonian_is_conserved() {
        let mut c = config(0.3);
        c.potential = BumpPotential::new(2.0, 1.4).unwrap();
        let r = micro_simulate(&c).unwrap();
        assert!(r.hamiltonian_drift < 1e-6, "{}", r.hamiltonian_drift);
        assert!(r.trajectory.energies.iter().flatten().all(|e| *e > 0.0 && e.is_finite()));
        let moved = r
            .trajectory
            .energies
            .iter()
            .any(|e| (e[0] - 1.0).abs() > 1e-4);
        assert!(moved, "energies should exchange at eps > 0");
    }

    #[test]
    fn cutoff_region_is_handled() {
        // One site starts below δ/8; 𝓗 conservation must hold there too.
        let g = InteractionGraph::complete(2).unwrap();
        let mut c = MicroConfig::new(g, vec![1e-3, 1.0], 0.3, 0.05, 0.05, 8).unwrap();
        c.step = 0.01;
        c.potential = BumpPotential::new(2.0, 1.4).unwrap();
        let r = micro_simulate(&c).unwrap();
        assert!(r.hamiltonian_drift < 1e-6, "{}", r.hamiltonian_drift);
    }

    #[test]
    fn time_reversal_symmetry() {
        let mut c = config(0.3);
        // Short horizon: chaos amplifies the integrator error exponentially.
        c.physical_time = Some(5.0);
        // One record per physical time unit, so both grids line up.
        c.record_interval = 0.09;
        c.potential = BumpPotential::new(2.0, 1.4).unwrap();
        let start = MicroState::sample(&c.initial, 4, 0);
        let fwd = micro_simulate_from(&c, start.clone()).unwrap();
        let back = micro_simulate_from(&c, fwd.final_state.reversed()).unwrap();
        let ef = &fwd.trajectory.energies;
        let eb = &back.trajectory.energies;
        assert_eq!(ef.len(), eb.len());
        for (a, b) in ef.iter().zip(eb.iter().rev()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-6, "{x} vs {y}");
            }
        }
        let end = back.final_state.reversed();
        for (x, y) in end.z.iter().zip(&start.z) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn deterministic_and_validated() {
        let c = config(0.2);
        assert_eq!(micro_simulate(&c).unwrap(), micro_simulate(&c).unwrap());
        let mut bad = config(0.2);
        bad.delta = 1.5;
        assert!(bad.validate().is_err());
        let mut bad = config(0.2);
        bad.initial[0] = -1.0;
        assert!(bad.validate().is_err());
        assert!(config(0.0).validate().is_err());
    }
}
