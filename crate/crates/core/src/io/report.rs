//! The JSON run report written next to every unmixing result.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::edaa::SolverConfig;
use crate::ensemble::{EnsembleConfig, RunRecord, Selection, SelectionReport};
use crate::error::{Error, Result};
use crate::image::HsiImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDescriptor {
    pub path: String,
    pub bands: usize,
    pub pixels: usize,
    pub height: Option<usize>,
    pub width: Option<usize>,
}

impl InputDescriptor {
    pub fn new(path: &Path, image: &HsiImage) -> Self {
        let (height, width) = image.spatial().unzip();
        Self {
            path: path.display().to_string(),
            bands: image.bands(),
            pixels: image.pixels(),
            height,
            width,
        }
    }
}

/// Everything needed to rebuild the [`EnsembleConfig`] except the thread
/// count, which never affects results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub endmembers: usize,
    pub outer_iterations: usize,
    pub inner_abundances: usize,
    pub inner_contributions: usize,
    pub runs: usize,
    pub base_seed: u64,
    pub gamma_set: Vec<f64>,
    pub fit_slack: f64,
    pub cosine_coherence: bool,
}

impl From<&EnsembleConfig> for ConfigEcho {
    fn from(c: &EnsembleConfig) -> Self {
        Self {
            endmembers: c.solver.endmembers,
            outer_iterations: c.solver.outer_iterations,
            inner_abundances: c.solver.inner_abundances,
            inner_contributions: c.solver.inner_contributions,
            runs: c.runs,
            base_seed: c.base_seed,
            gamma_set: c.gamma_set.clone(),
            fit_slack: c.fit_slack,
            cosine_coherence: c.cosine_coherence,
        }
    }
}

impl ConfigEcho {
    pub fn to_ensemble_config(&self) -> EnsembleConfig {
        let mut c = EnsembleConfig::new(self.endmembers);
        c.solver.outer_iterations = self.outer_iterations;
        c.solver.inner_abundances = self.inner_abundances;
        c.solver.inner_contributions = self.inner_contributions;
        c.runs = self.runs;
        c.base_seed = self.base_seed;
        c.gamma_set = self.gamma_set.clone();
        c.fit_slack = self.fit_slack;
        c.cosine_coherence = self.cosine_coherence;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub input: InputDescriptor,
    pub config: ConfigEcho,
    pub runs: Vec<RunRecord>,
    pub selection: Selection,
    /// Pixels with an all-zero spectrum, left unnormalized.
    pub zero_pixels: usize,
    pub tool_version: String,
}

impl RunReport {
    pub fn new(
        input: InputDescriptor,
        config: &EnsembleConfig,
        report: SelectionReport,
        zero_pixels: usize,
    ) -> Self {
        Self {
            input,
            config: config.into(),
            runs: report.per_run,
            selection: report.selection,
            zero_pixels,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    /// Solver settings that reproduce the selected run on the same input.
    pub fn replay_config(&self) -> Option<SolverConfig> {
        let winner = self.runs.get(self.selection.selected)?;
        let mut cfg = self.config.to_ensemble_config().solver;
        cfg.seed = winner.seed;
        cfg.gamma = winner.gamma;
        Some(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}
