//! Testbed assembly and batch execution.

mod config;
mod sim;

pub use config::{
    ConfigError, Direction, EnvKind, EnvironmentConfig, LreConfig, RunConfig, ScenarioConfig,
    Scheme, TrafficConfig,
};
pub use sim::{InterfererStats, SimOutput, Simulation};

use crate::engine::Micros;
use crate::traffic::ArrivalLaw;

/// Builds and runs one scenario.
pub fn run(cfg: &ScenarioConfig) -> Result<SimOutput, ConfigError> {
    Ok(Simulation::new(cfg)?.run())
}

/// Runs every configuration one after the other, results in input order.
pub fn run_matrix_sequential(cfgs: &[ScenarioConfig]) -> Result<Vec<SimOutput>, ConfigError> {
    cfgs.iter().map(run).collect()
}

/// Runs every configuration on the rayon pool, results in input order.
#[cfg(feature = "parallel")]
pub fn run_matrix_parallel(cfgs: &[ScenarioConfig]) -> Result<Vec<SimOutput>, ConfigError> {
    use rayon::prelude::*;
    cfgs.par_iter().map(run).collect()
}

/// Parallel when the `parallel` feature is on, sequential otherwise.
pub fn run_matrix(cfgs: &[ScenarioConfig]) -> Result<Vec<SimOutput>, ConfigError> {
    #[cfg(feature = "parallel")]
    {
        run_matrix_parallel(cfgs)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_matrix_sequential(cfgs)
    }
}

/// Airtime share claimed by a single interferer on an otherwise silent,
/// undisturbed channel: first-attempt deliveries times the per-frame cost
/// (airtime, SIFS, ACK, DIFS) over the simulated time.
pub fn interferer_load(
    base: &ScenarioConfig,
    duration: Micros,
) -> Result<f64, ConfigError> {
    let mut cfg = base.clone();
    cfg.lre.scheme = Scheme::Dcf;
    cfg.lre.d_th = 0;
    cfg.environment.interferers = Some(1);
    cfg.environment.jammer = false;
    cfg.run.duration = Some(duration);
    cfg.run.packets = 0;
    cfg.run.drain = 0;
    // first link packet would fall past the horizon
    cfg.traffic.law = ArrivalLaw::Cyclic;
    cfg.traffic.mean_period = duration.saturating_add(1);
    let out = run(&cfg)?;
    let m = &cfg.mac;
    let cost = cfg.environment.interferer_airtime + m.sifs + m.ack_airtime + m.difs;
    let ok = out.interferers[0].first_attempt_ok;
    Ok((ok * cost) as f64 / duration as f64)
}
