//! Stochastic hybrid automaton of prostate cancer under intermittent
//! androgen suppression, with exact sample-path gradients of a therapy cost
//! with respect to the two PSA switching thresholds.
//!
//! The usual flow is [`sim::simulate`] over a [`noise::NoiseTrace`], then
//! [`cost::sample_gradient`] on the resulting [`sim::SamplePath`], and
//! [`optimizer::optimize`] to tune the thresholds. [`Scenario`] bundles the
//! settings those calls share; [`validation`] holds finite-difference and
//! closed-form oracles for the gradient.

#![allow(clippy::needless_range_loop)]

pub mod config;
pub mod cost;
pub mod error;
pub mod io;
pub mod ipa;
pub mod model;
pub mod noise;
pub mod optimizer;
pub mod patient;
pub mod quadrature;
pub mod run;
pub mod scenario;
pub mod sim;
pub mod validation;

pub use config::{load_config, RunConfig};
pub use cost::{sample_cost, sample_gradient, CostConfig, GradientReport, GradientTerms};
pub use error::{Error, Result};
pub use ipa::IpaState;
pub use model::{EventKind, HybridState, Mode, ModelParams, NoiseValues, Thresholds};
pub use noise::{NoiseSettings, NoiseTrace};
pub use optimizer::{optimize, OptConfig, OptOutcome, Schedule, SeedPolicy, TraceRow};
pub use patient::{ingest_patient_csv, PatientSeries, PatientSummary};
pub use scenario::{derive_seeds, CostWeights, Scenario};
pub use sim::{simulate, EventRecord, SamplePath, SimConfig};
pub use validation::{fd_gradient, fd_report, unbiasedness_check, FdReport, FdSettings};
