//! Deterministic discrete-event network simulation of mining nodes and
//! clients.

mod config;
mod engine;
mod queue;
mod report;

pub use config::{
    ConfigError, DelayModel, JobConfig, Mode, NodeConfig, Role, ScenarioConfig, Topology, TspSpec,
};
pub use engine::{build_job, run_scenario, SimulationOutput};
pub use queue::EventQueue;
pub use report::{
    job_context, trace_digest, write_trace_csv, JobOutcome, JobReport, NodeReport,
    SimulationReport, TraceEvent,
};
