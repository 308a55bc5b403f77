//! # powerscale
//!
//! Small-data MNIST experiments with custom feedforward networks and the
//! power-law analysis of their test error against dataset size.
//!
//! - [`data`]: IDX parsing, balanced subsets, per-example normalization,
//!   zero-variance masking, input crosses, label-ordered schedules
//! - [`network`]: architecture, Gaussian initialization, forward propagation
//!   with running-mean field subtraction, checkpoints
//! - [`optim`]: cross-entropy cost, backpropagation, the momentum and
//!   accelerated online update rules, the training loop
//! - [`evalsuite`]: test error, soft committees, multi-sample experiments
//! - [`scaling`]: log-log power-law fits, extrapolation, crossovers, plots
//! - [`gridopt`]: staged grid refinement and coordinate-wise search
//! - [`equivalence`]: embedding a two-hidden-layer network into three
//!   hidden layers with identical decisions
//! - [`config`]: presets and experiment configuration files
//! - [`cli`]: the `powerscale` command line
//!
//! Every stochastic step draws from a [`rng::SeedTree`] stream, so a run is
//! reproducible from its root seed.

pub mod cli;
pub mod config;
pub mod data;
pub mod equivalence;
pub mod evalsuite;
pub mod gridopt;
pub mod io;
pub mod network;
pub mod optim;
pub mod rng;
pub mod scaling;

pub use data::{PreparedSet, RawImageSet, TrainingSet};
pub use network::{Architecture, Network};
pub use optim::{HyperParams, Strategy};
