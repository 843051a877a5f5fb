//! Sparse Bayesian latent factor models with interaction effects.
//!
//! Two sampler families share one state layout: a multiplicative model where
//! interaction scores are products of factor scores ([`mult`]), and a model
//! with a Gaussian-process prior over factor-score space ([`gp`]). Spike-and-slab
//! indicators on loadings and interaction effects give posterior inclusion
//! probabilities, which [`summary`] and [`genomics`] turn into detections.

// `!(x > 0.0)` is used on purpose so NaN fails validation too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod data;
pub mod error;
pub mod genomics;
pub mod gibbs;
pub mod gp;
pub mod io;
pub mod kernel;
pub mod mult;
pub mod rng;
pub mod simulate;
pub mod spec;
pub mod spike_slab;
pub mod state;
pub mod summary;

pub use data::{standardize_rows, DataMatrix};
pub use error::{Error, Result};
pub use gibbs::McmcSettings;
pub use spec::{Family, ModelSpec, ValidatedSpec};
pub use state::{McmcState, PosteriorDraws};
