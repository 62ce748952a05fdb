//! Ensemble of seeded solver runs and the fit-then-coherence selection rule.
//!
//! Each run `m` uses seed `base_seed + m` and a step factor drawn uniformly
//! from the γ-set with that seed's stream. Among runs whose ℓ1 fit is within
//! `fit_slack × fit_min`, the one with the smallest endmember coherence wins;
//! equal coherences go to the lowest run index.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::edaa::{self, RunResult, SolverConfig};
use crate::error::{Error, Result};
use crate::image::{AbundanceMatrix, EndmemberMatrix, HsiImage};
use crate::linalg::{dot, matmul, norm2, Matrix};
use crate::rng::Prng;

pub const DEFAULT_GAMMA_SET: [f64; 7] = [0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0];
pub const DEFAULT_RUNS: usize = 50;
pub const DEFAULT_FIT_SLACK: f64 = 1.05;

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    /// Number of runs `M`.
    pub runs: usize,
    pub base_seed: u64,
    pub gamma_set: Vec<f64>,
    pub fit_slack: f64,
    /// Template; `gamma` and `seed` are overwritten per run.
    pub solver: SolverConfig,
    /// Use cosine similarity instead of the raw inner product for coherence.
    pub cosine_coherence: bool,
    /// Worker threads; 0 picks the hardware default.
    pub threads: usize,
}

impl EnsembleConfig {
    pub fn new(endmembers: usize) -> Self {
        Self {
            runs: DEFAULT_RUNS,
            base_seed: 0,
            gamma_set: DEFAULT_GAMMA_SET.to_vec(),
            fit_slack: DEFAULT_FIT_SLACK,
            solver: SolverConfig::new(endmembers),
            cosine_coherence: false,
            threads: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::InvalidConfig("need at least one run".into()));
        }
        if !(self.fit_slack >= 1.0 && self.fit_slack.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "fit slack must be >= 1, got {}",
                self.fit_slack
            )));
        }
        if self.gamma_set.is_empty() {
            return Err(Error::InvalidConfig("gamma set is empty".into()));
        }
        if let Some(g) = self
            .gamma_set
            .iter()
            .find(|g| !(g.is_finite() && **g > 0.0))
        {
            return Err(Error::InvalidConfig(format!("gamma {g} is not positive")));
        }
        self.solver.validate()
    }

    /// Seed of run `index`.
    pub fn seed_for(&self, index: usize) -> u64 {
        self.base_seed.wrapping_add(index as u64)
    }
}

/// Outcome of one ensemble member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub index: usize,
    pub seed: u64,
    pub gamma: f64,
    pub fit_l1: Option<f64>,
    pub coherence: Option<f64>,
    pub wall_time_ms: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Run indices whose fit passed the threshold, ascending.
    pub candidates: Vec<usize>,
    pub selected: usize,
    pub fit_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub per_run: Vec<RunRecord>,
    #[serde(flatten)]
    pub selection: Selection,
}

#[derive(Debug, Clone)]
pub struct EnsembleOutcome {
    pub best: RunResult,
    pub report: SelectionReport,
}

/// `‖X − E·A‖₁`, the sum of absolute residual entries.
pub fn fit_l1(x: &HsiImage, e: &EndmemberMatrix, a: &AbundanceMatrix) -> Result<f64> {
    let recon = matmul(e.matrix(), a.matrix())?;
    Ok(x.data().sub(&recon)?.abs_sum())
}

fn max_pairwise(e: &Matrix, cosine: bool) -> Result<f64> {
    let p = e.cols();
    if p < 2 {
        return Err(Error::CoherenceUndefined);
    }
    let norms: Vec<f64> = if cosine {
        let norms: Vec<f64> = e.columns().map(norm2).collect();
        if let Some(k) = norms.iter().position(|&n| n == 0.0) {
            return Err(Error::ZeroSpectrum(k));
        }
        norms
    } else {
        vec![1.0; p]
    };
    let mut best = f64::NEG_INFINITY;
    for k in 0..p {
        for l in k + 1..p {
            let v = dot(e.col(k), e.col(l)) / (norms[k] * norms[l]);
            best = best.max(v);
        }
    }
    Ok(best)
}

/// Largest inner product between distinct endmember columns.
pub fn coherence(e: &Matrix) -> Result<f64> {
    max_pairwise(e, false)
}

/// Largest cosine similarity between distinct endmember columns.
pub fn cosine_coherence(e: &Matrix) -> Result<f64> {
    max_pairwise(e, true)
}

/// Uniform pick from `gamma_set` as `gamma_set[floor(u·|S|)]`.
pub fn sample_gamma(rng: &mut Prng, gamma_set: &[f64]) -> f64 {
    gamma_set[rng.next_index(gamma_set.len())]
}

/// Applies the selection rule to finished runs. Failed runs (no fit) are
/// ignored; returns `None` when every run failed.
pub fn select(records: &[RunRecord], fit_slack: f64) -> Option<Selection> {
    let scored: Vec<(usize, f64, f64)> = records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| Some((i, r.fit_l1?, r.coherence?)))
        .collect();
    let fit_min = scored
        .iter()
        .map(|&(_, f, _)| f)
        .fold(f64::INFINITY, f64::min);
    if !fit_min.is_finite() {
        return None;
    }
    let threshold = fit_slack * fit_min;
    let candidates: Vec<usize> = scored
        .iter()
        .filter(|&&(_, f, _)| f <= threshold)
        .map(|&(i, _, _)| i)
        .collect();
    let mut selected = candidates[0];
    let mut best_mu = f64::INFINITY;
    for &(i, f, mu) in &scored {
        // strict comparison keeps the lowest index on ties
        if f <= threshold && mu < best_mu {
            best_mu = mu;
            selected = i;
        }
    }
    Some(Selection {
        candidates,
        selected,
        fit_min,
    })
}

fn solver_config_for(config: &EnsembleConfig, index: usize) -> SolverConfig {
    let seed = config.seed_for(index);
    let mut rng = Prng::new(seed);
    let mut solver = config.solver.clone();
    solver.seed = seed;
    solver.gamma = sample_gamma(&mut rng, &config.gamma_set);
    solver
}

fn summarize(x: &HsiImage, config: &EnsembleConfig, index: usize) -> RunRecord {
    let solver = solver_config_for(config, index);
    let start = Instant::now();
    let outcome = edaa::run(x, &solver).and_then(|r| {
        let mu = if config.cosine_coherence {
            cosine_coherence(r.endmembers.matrix())?
        } else {
            r.coherence
        };
        Ok((r.fit_l1, mu))
    });
    let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    let (fit_l1, coherence, error) = match outcome {
        Ok((f, mu)) if f.is_finite() && mu.is_finite() => (Some(f), Some(mu), None),
        Ok((f, mu)) => (
            None,
            None,
            Some(format!("non-finite fit {f} or coherence {mu}")),
        ),
        Err(e) => (None, None, Some(e.to_string())),
    };
    RunRecord {
        index,
        seed: solver.seed,
        gamma: solver.gamma,
        fit_l1,
        coherence,
        wall_time_ms,
        error,
    }
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot build worker pool: {e}")))
}

/// Runs `M` seeded solver instances and returns the selected one.
///
/// Only per-run summaries are kept while the ensemble executes; the winner
/// is recomputed from its recorded seed and γ afterwards, which reproduces
/// it bitwise.
pub fn run_ensemble(x: &HsiImage, config: &EnsembleConfig) -> Result<EnsembleOutcome> {
    config.validate()?;
    let pool = thread_pool(config.threads)?;
    let per_run: Vec<RunRecord> = pool.install(|| {
        (0..config.runs)
            .into_par_iter()
            .map(|m| summarize(x, config, m))
            .collect()
    });

    let selection = select(&per_run, config.fit_slack).ok_or_else(|| {
        Error::AllRunsFailed(
            per_run
                .iter()
                .map(|r| (r.index, r.error.clone().unwrap_or_default()))
                .collect(),
        )
    })?;
    let winner = &per_run[selection.selected];
    let mut solver = config.solver.clone();
    solver.seed = winner.seed;
    solver.gamma = winner.gamma;
    let best = pool.install(|| edaa::run(x, &solver))?;
    Ok(EnsembleOutcome {
        best,
        report: SelectionReport { per_run, selection },
    })
}
