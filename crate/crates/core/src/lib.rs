//! Simulation library for asynchronous parameter-server training with
//! momentum, including DANA and the usual asynchronous baselines.

pub mod error;
pub mod exectime;
pub mod objectives;
pub mod optim;
pub mod protocols;
pub mod rng;
pub mod schedule;
pub mod sim;
pub mod staleness;
pub mod vector;

pub use error::{Error, Result};
pub use exectime::{Environment, ExecTimeModel, Paradigm};
pub use objectives::{Dataset, Objective, ObjectiveKind};
pub use protocols::{MasterHyper, MasterRule, MasterState, WorkerState};
pub use rng::SeededRng;
pub use schedule::Schedule;
pub use sim::{run_simulation, Algorithm, RunSummary, SimConfig, Simulation, Timing};
pub use vector::ParamVector;
