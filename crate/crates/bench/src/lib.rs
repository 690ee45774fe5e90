//! Fixtures shared by the benchmarks.

use fastslow_core::micro::MicroConfig;
use fastslow_core::{CoefficientModel, EnergyState, InteractionGraph, Result};

/// `side × side` box of `ℤ²` with energies cycling through `0.5, 1, 1.5`.
pub fn lattice_state(side: i64) -> Result<(InteractionGraph, CoefficientModel, EnergyState)> {
    let graph = InteractionGraph::lattice_region(2, &[0..side, 0..side])?;
    let model = CoefficientModel::analytic(1.0, 3)?;
    let energies = (0..graph.num_vertices()).map(|i| 0.5 * (1 + i % 3) as f64).collect();
    let state = EnergyState::new(energies, 0.0)?;
    Ok((graph, model, state))
}

/// A coupled pair run for `steps` RK4 steps of physical time.
pub fn micro_pair(steps: usize) -> Result<MicroConfig> {
    let graph = InteractionGraph::chain(2)?;
    let mut cfg = MicroConfig::new(graph, vec![1.0, 1.0], 0.1, 0.01, 1.0, 1)?;
    cfg.physical_time = Some(cfg.step * steps as f64);
    cfg.record_interval = cfg.physical_time.unwrap() * cfg.epsilon * cfg.epsilon;
    cfg.validate()?;
    Ok(cfg)
}
