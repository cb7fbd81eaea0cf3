//! Bayesian nonparametric dose-response modeling for developmental toxicity
//! studies with clustered ordinal (trinomial) responses.
//!
//! The library fits a spectrum of models for dam-level counts of non-viable
//! fetuses and malformed pups — parametric continuation-ratio models (CR-logits,
//! CR-BB, CR-LNB) and discrete nonparametric mixtures with either common
//! (Dirichlet-process) or dose-dependent (logit stick-breaking) weights and
//! either Binomial or overdispersed Logistic-Normal-Binomial kernels (CW-Bin,
//! Gen-Bin, CW-LNB, Gen-LNB) — via a Pólya-Gamma-augmented blocked Gibbs
//! sampler, and runs the downstream risk-assessment pipeline: dose-response
//! curves, intracluster correlations, effective/benchmark dose inversion,
//! posterior predictive checks, and cross-validated model comparison.
//!
//! Everything is deterministic given a seed; samplers take explicit
//! [`rand::Rng`] streams and are safe to run concurrently on distinct streams.

pub mod assess;
pub mod cli;
pub mod data;
pub mod distributions;
pub mod inference;
pub mod mcmc;
pub mod model;

mod error;

pub use error::{Error, Result};
