//! Deterministic simulator and analytic planner for parallel bootstrap
//! estimation of the variance of the sample mean.
//!
//! Four distribution strategies run over a virtual message-passing fabric
//! that accounts every byte, float and sample point, so the measurements can
//! be checked exactly against closed-form cost models and against a
//! sequential bootstrap oracle.

pub mod cli;
pub mod config;
pub mod costmodel;
pub mod error;
pub mod prng;
pub mod simnet;
pub mod stats;
pub mod strategies;

pub use config::{CostParams, Dataset, ExperimentConfig};
pub use costmodel::{plan, predict, CostBreakdown, Plan, PlanQuery};
pub use error::{Error, Result};
pub use simnet::{fabric_run, Channel, Comm, Fabric, FabricLedger};
pub use stats::{pool_stats, sequential_bootstrap_oracle, summarize_means, variance_from_stats, SummaryStats, VarianceEstimate};
pub use strategies::{run_strategy, StrategyKind, StrategyReport};
