//! Membership-inference laboratory.
//!
//! Builds the pieces needed to measure how well off-the-shelf membership
//! inference attacks do against differentially private models, both when
//! members and non-members are exchangeable (IID) and when the training set
//! is drawn from one component of a mixture:
//!
//! * [`dataio`]: CSV ingestion, imputation, one-hot encoding, dedup, and a
//!   synthetic Gaussian-mixture generator.
//! * [`splits`]: k-means and the cluster / attribute-bias / source pool
//!   builders, member/non-member draws and the IID counterfactual.
//! * [`nn`]: a small ReLU classifier with per-example gradients and
//!   (DP-)Adam training.
//! * [`dp`]: clipping, Gaussian noise, and a Rényi-DP accountant for the
//!   Poisson-subsampled Gaussian mechanism.
//! * [`attacks`]: average-threshold, optimal-threshold and shadow-model attacks.
//! * [`experiments`]: the membership games, the batch campaign, and the
//!   advantage bounds.
//! * [`config`]: the JSON experiment configuration.

pub mod attacks;
pub mod config;
pub mod dataio;
pub mod dp;
pub mod error;
pub mod experiments;
pub mod nn;
pub mod rng;
pub mod splits;

pub use error::{Error, Result};
