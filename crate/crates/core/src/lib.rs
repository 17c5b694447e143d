//! Fair multi-agent multi-armed bandits.
//!
//! Every pull of an arm yields one reward per agent. A policy is a
//! distribution over arms; it is fair when each agent `i` receives in
//! expectation at least a fraction `C_i` of the best reward any single arm
//! offers it. The crate covers existence of fair policies, the optimal fair
//! policy as a linear program, three learning algorithms, regret accounting,
//! a multi-seed experiment harness and MovieLens-1M ingestion.

pub mod algorithms;
pub mod error;
pub mod harness;
pub mod ingest;
pub mod instance;
pub mod lp;
pub mod matrix;
pub mod metrics;
pub mod policy;
pub mod rng;

pub use algorithms::{Algorithm, RunOptions};
pub use error::{Error, Result};
pub use harness::{alpha_sweep, run_experiment, ExperimentConfig};
pub use instance::{BanditInstance, NoiseModel, PolicyVector, RewardVector};
pub use lp::{solve_lp, LinearProgram, LpSolution, LpStatus};
pub use matrix::Matrix;
pub use metrics::RegretTrace;
pub use policy::{FeasibilityReport, OptimalPolicy};
