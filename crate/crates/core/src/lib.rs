//! Non-intrusive external compliance scanner.
//!
//! Probes a host for the seventeen remotely observable compliance rules,
//! evaluates each into a [`model::Finding`], derives a compliance verdict
//! and renders reports. See [`engine::scan_target`] for the probe plan.

pub mod engine;
pub mod error;
pub mod exec;
pub mod http;
pub mod model;
pub mod net;
pub mod reporting;
pub mod tls;

pub use engine::{scan_many, scan_target, ScanConfig, ServicePorts, TargetSpec};
pub use error::{ModelError, ReportError, ScanError};
pub use model::{Finding, FindingStatus, ScanReport, Severity, TestCase, Verdict};
pub use reporting::{aggregate, parse_report_json, render_report, AggregateStats, ReportFormat};
