//! Abductive multi-target learning from several diverse noisy label sources.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`sample`]: noisy samples from independent labelers, checked pairwise
//!    for diversity.
//! 2. [`knowledge`] and [`reasoning`]: label statistics are extracted as
//!    groundings, compared against a knowledge base of admissible intervals,
//!    and violating groundings are revised.
//! 3. [`targets`]: each sample yields several knowledge-consistent targets
//!    which are regrouped so every instance carries `p` targets.
//! 4. [`learner`]: a small differentiable model is fitted to a weighted sum
//!    of per-target losses.
//!
//! [`synth`] provides a synthetic task with known ground truth, and
//! [`pipeline`] wires everything into reproducible experiments with the
//! on-disk formats from [`io`].

pub mod config;
pub mod error;
pub mod io;
pub mod knowledge;
pub mod learner;
pub mod pipeline;
pub mod reasoning;
pub mod sample;
pub mod synth;
pub mod targets;

pub use error::{Error, Result};
