//! Discrete-time quantum walk on the line under two decoherence mechanisms.
//!
//! The walker lives on a bounded window of the integer line and evolves by a
//! coin rotation followed by a chirality-conditioned shift. Decoherence enters
//! either through joint position/chirality measurements ([`measure`]) or
//! through links between neighbouring sites that break at random each step
//! ([`links`]). [`classical`] holds the classical baselines and the Brownian
//! variance curve, and [`analysis`] runs reproducible Monte Carlo ensembles
//! and the estimators built on top of them.
//!
//! Ensembles are data parallel over trajectories when the `parallel` feature
//! is enabled (the default). Results are bit-identical with and without it.

pub mod analysis;
pub mod classical;
mod error;
pub mod links;
pub mod measure;
pub mod rng;
pub mod walk;

pub use error::{Error, Result};
pub use walk::{CoinOperator, Distribution, Moments, Qubit, SpinorField};
