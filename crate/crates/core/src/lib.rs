//! Predictive recursion (PR) for nonparametric empirical Bayes.
//!
//! The crate estimates a mixing distribution `F` from data `Y_i ~ ∫ p_θ dF(θ)`
//! with the one-pass PR update, plugs the estimate into Bayes decision rules,
//! and measures how close the resulting empirical Bayes risk is to the Bayes
//! risk of the true prior.
//!
//! Modules:
//! - [`kernels`]: sampling families `p_θ(y)`.
//! - [`mixing`]: discretised mixing measures (grid density plus atoms).
//! - [`pr`]: the recursion, weight schedules and permutation averaging.
//! - [`decision`]: posterior-mean estimation and two-point-loss testing.
//! - [`baselines`]: naive, group-mean, James–Stein and moment-matched parametric EB.
//! - [`risk`]: Bayes / empirical Bayes risk, KL divergence and simulation traces.
//! - [`baseball`]: the batting-average prediction study.
//! - [`cli`]: subcommand implementations behind the `predrec` binary.

pub mod baseball;
pub mod baselines;
pub mod cli;
pub mod decision;
pub mod error;
pub mod kernels;
pub mod mixing;
pub mod pr;
pub mod quadrature;
pub mod risk;

pub use error::{Error, Result};
pub use kernels::{Family, KernelModel, ObsParams, Observation};
pub use mixing::{GridRule, GridSpec, MixingMeasure};
pub use pr::{PrConfig, PrFit};
