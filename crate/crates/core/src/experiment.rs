//! Seed sweeps: one configuration fanned out over consecutive seeds,
//! each run fully independent and the results merged back in seed
//! order so exports never depend on thread scheduling.

use std::fs;
use std::io;
use std::path::PathBuf;

use rayon::prelude::*;

use crate::config::ScenarioConfig;
use crate::metrics::RunMetrics;
use crate::sim::{RunOutput, Simulation};

#[derive(Debug)]
pub enum ExperimentError {
    /// The configured image file could not be read.
    ImageFile { path: PathBuf, source: io::Error },
}

impl std::fmt::Display for ExperimentError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExperimentError::ImageFile { path, source } => {
                write!(f, "cannot read image file {}: {source}", path.display())
            }
        }
    }
}

impl std::error::Error for ExperimentError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            ExperimentError::ImageFile { source, .. } => Some(source),
        }
    }
}

/// Runs `cfg.runs` simulations on seeds `cfg.seed..cfg.seed + runs`,
/// in parallel, returning full outputs ordered by seed.
pub fn run_experiment_detailed(cfg: &ScenarioConfig) -> Result<Vec<RunOutput>, ExperimentError> {
    let image = match &cfg.image_file {
        Some(path) => Some(fs::read(path).map_err(|source| ExperimentError::ImageFile {
            path: path.clone(),
            source,
        })?),
        None => None,
    };
    let outputs = (0..cfg.runs)
        .into_par_iter()
        .map(|k| {
            let seed = cfg.seed + k as u64;
            let mut sim = Simulation::new(cfg, seed);
            if let Some(bytes) = &image {
                sim = sim.with_image_data(bytes.clone());
            }
            sim.run()
        })
        .collect();
    Ok(outputs)
}

/// Seed-sweep entry point used by the command line: metrics only.
pub fn run_experiment(cfg: &ScenarioConfig) -> Result<Vec<RunMetrics>, ExperimentError> {
    Ok(run_experiment_detailed(cfg)?.into_iter().map(|o| o.metrics).collect())
}

/// How many runs of the sweep deployed a network in which some camera
/// had no multi-hop path to the sink. Those runs still count — their
/// losses reflect the partition — but the caller should warn.
pub fn disconnected_runs(outputs: &[RunOutput]) -> usize {
    outputs.iter().filter(|o| o.stats.sink_disconnected).count()
}
