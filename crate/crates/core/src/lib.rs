//! Blind hyperspectral unmixing by entropic-descent archetypal analysis.
//!
//! The pipeline is: [`image::l2_normalize`] the cube, run an
//! [`ensemble::run_ensemble`] of seeded [`edaa::run`] solves, keep the run
//! with the least coherent endmembers among those with a near-best ℓ1 fit,
//! and score it with [`metrics::evaluate`] when ground truth exists.

pub mod cli;
pub mod edaa;
pub mod ensemble;
pub mod error;
pub mod image;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
