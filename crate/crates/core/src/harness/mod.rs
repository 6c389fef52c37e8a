//! Scenario ingestion, campaign orchestration, aggregates, and report
//! persistence. The `censim` binary is a thin CLI over this module.

mod report;
mod runner;
mod scenario;

pub use report::{
    aggregate, load_report, save_report, DomainVerdictRow, MatrixRow, Report, RowDetail, Stats,
    TraceRow,
};
pub use runner::{run_scenario, trace_domain, RunOptions};
pub use scenario::{
    load_scenario, DomainCategory, DomainEntry, PayloadTemplate, PortSpec, ProbePlan, Scenario,
    ScenarioTarget, ScenarioTopology, TraceProbe,
};

use crate::probe::ProbeError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    /// The scenario (or report) file could not be read or parsed.
    #[error("parse error in {path}: {detail}")]
    Parse { path: String, detail: String },
    /// The file parsed but violates a scenario invariant.
    #[error("validation error: {0}")]
    Validation(String),
    /// A probe failed while executing the plan.
    #[error("probe error while {context}: {source}")]
    Probe {
        context: String,
        #[source]
        source: ProbeError,
    },
    /// A report failed its self-consistency check or could not be written.
    #[error("report error: {0}")]
    Report(String),
}

impl HarnessError {
    /// Process exit code contract: 2 for scenario load/validation failures,
    /// 3 for runtime errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Parse { .. } | HarnessError::Validation(_) => 2,
            HarnessError::Probe { .. } | HarnessError::Report(_) => 3,
        }
    }
}
