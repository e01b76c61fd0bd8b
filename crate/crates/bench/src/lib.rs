//! Shared fixtures for the benchmarks.

use spdcforge_core::pipeline::{reconstruct, ClusterEvent, PipelineConfig};
use spdcforge_core::simulator::{SimulationConfig, SimulationOutput, Simulator};

/// A seeded simulation of `hours` at the default rates.
pub fn simulated_run(hours: f64, background_ratio: f64) -> (Simulator, SimulationOutput) {
    let cfg = SimulationConfig {
        seed: 1,
        duration_hours: hours,
        background_ratio,
        ..SimulationConfig::default()
    };
    let sim = Simulator::new(cfg).expect("default config is valid");
    let out = sim.run().expect("simulation runs");
    (sim, out)
}

/// Clustered events of a seeded run.
pub fn clustered_run(hours: f64, background_ratio: f64) -> (Simulator, Vec<ClusterEvent>) {
    let (sim, out) = simulated_run(hours, background_ratio);
    let events = reconstruct(
        &out.hits,
        &sim.layout,
        &sim.calib,
        &PipelineConfig::default(),
    )
    .expect("clustering runs");
    (sim, events)
}
