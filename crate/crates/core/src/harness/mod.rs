//! Validation cases, delay study and run artifacts.

pub mod config;
pub mod metrics;
pub mod run;
pub mod summary;
pub mod sweep;

pub use config::{CaseConfig, CaseId, CosimMode, CoupledPreset, ForceKind};
pub use metrics::{classify_envelope, compare_series, ComparisonMetrics, Envelope};
pub use run::{finish_case, run_case, run_loop, run_oracle, CaseRun, ChannelMetrics};
pub use summary::Summary;
pub use sweep::{map_runs, run_delay_study, DelayRow, DelayStudy, Execution};
