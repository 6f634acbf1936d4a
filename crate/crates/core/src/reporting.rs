//! Report rendering (human, JSON, CSV), JSON parsing and fleet aggregation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::net::IpAddr;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::ReportError;
use crate::exec::{fold_merge, Strategy};
use crate::model::{
    Finding, FindingStatus, LedgerEntry, ScanReport, ScanTarget, Severity, TestCase, Verdict,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Human,
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "human" | "text" => Ok(ReportFormat::Human),
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(ReportError::UnknownFormat(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FindingRecord {
    case: TestCase,
    name: String,
    severity: Severity,
    must_fix: bool,
    status: FindingStatus,
    evidence: String,
    probe_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ReportRecord {
    target: String,
    address: Option<IpAddr>,
    timestamp_start: DateTime<Utc>,
    timestamp_end: DateTime<Utc>,
    connections_used: u32,
    verdict: Verdict,
    must_fix_count: usize,
    total_vulnerable_count: usize,
    complete: bool,
    ledger: Vec<LedgerEntry>,
    findings: Vec<FindingRecord>,
}

fn record_of(report: &ScanReport) -> ReportRecord {
    let v = report.verdict();
    ReportRecord {
        target: report.target().host.clone(),
        address: report.target().address,
        timestamp_start: report.started_at(),
        timestamp_end: report.finished_at(),
        connections_used: report.connections_used(),
        verdict: v.verdict,
        must_fix_count: v.must_fix_count,
        total_vulnerable_count: v.total_vulnerable_count,
        complete: report.is_complete(),
        ledger: report.ledger().to_vec(),
        findings: report
            .findings()
            .iter()
            .map(|f| FindingRecord {
                case: f.case(),
                name: f.case().short_name().to_string(),
                severity: f.severity(),
                must_fix: f.case().is_must_fix(),
                status: f.status(),
                evidence: f.evidence().to_string(),
                probe_count: f.probe_count(),
            })
            .collect(),
    }
}

fn report_of(rec: ReportRecord) -> Result<ScanReport, ReportError> {
    let mut findings = Vec::with_capacity(rec.findings.len());
    for f in rec.findings {
        if f.severity != f.case.severity() || f.must_fix != f.case.is_must_fix() {
            return Err(ReportError::Malformed(format!("case {} disagrees with the severity map", f.case.id())));
        }
        findings.push(Finding::new(f.case, f.status, f.evidence, f.probe_count)?);
    }
    let report = ScanReport::new(
        ScanTarget { host: rec.target, address: rec.address },
        rec.timestamp_start,
        rec.timestamp_end,
        findings,
        rec.ledger,
        rec.complete,
    )?;
    let v = report.verdict();
    if (v.verdict, v.must_fix_count, v.total_vulnerable_count) != (rec.verdict, rec.must_fix_count, rec.total_vulnerable_count) {
        return Err(ReportError::Malformed("stored verdict does not match the findings".into()));
    }
    if report.connections_used() != rec.connections_used {
        return Err(ReportError::Malformed("connections_used does not match the ledger".into()));
    }
    Ok(report)
}

pub fn render_report(report: &ScanReport, format: ReportFormat) -> Result<Vec<u8>, ReportError> {
    match format {
        ReportFormat::Human => Ok(render_human(report).into_bytes()),
        ReportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(&record_of(report))?;
            out.push(b'\n');
            Ok(out)
        }
        ReportFormat::Csv => render_csv(std::slice::from_ref(report)),
    }
}

/// Several reports in one document: a JSON array, concatenated human
/// sections, or one CSV table with a single header.
pub fn render_reports(reports: &[ScanReport], format: ReportFormat) -> Result<Vec<u8>, ReportError> {
    match format {
        ReportFormat::Json => {
            let recs: Vec<ReportRecord> = reports.iter().map(record_of).collect();
            let mut out = serde_json::to_vec_pretty(&recs)?;
            out.push(b'\n');
            Ok(out)
        }
        ReportFormat::Csv => render_csv(reports),
        ReportFormat::Human => {
            let parts: Vec<String> = reports.iter().map(render_human).collect();
            Ok(parts.join("\n").into_bytes())
        }
    }
}

pub const CSV_COLUMNS: [&str; 11] = [
    "target",
    "timestamp_start",
    "timestamp_end",
    "connections_used",
    "verdict",
    "case",
    "name",
    "severity",
    "must_fix",
    "status",
    "evidence",
];

fn render_csv(reports: &[ScanReport]) -> Result<Vec<u8>, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = CSV_COLUMNS.to_vec();
    header.push("probe_count");
    w.write_record(&header)?;
    for report in reports {
        let rec = record_of(report);
        for f in &rec.findings {
            w.write_record([
                rec.target.clone(),
                rec.timestamp_start.to_rfc3339(),
                rec.timestamp_end.to_rfc3339(),
                rec.connections_used.to_string(),
                rec.verdict.to_string(),
                f.case.id().to_string(),
                f.name.clone(),
                f.severity.to_string(),
                f.must_fix.to_string(),
                f.status.to_string(),
                f.evidence.clone(),
                f.probe_count.to_string(),
            ])?;
        }
    }
    w.into_inner().map_err(|e| ReportError::Io(e.into_error()))
}

fn render_human(report: &ScanReport) -> String {
    let v = report.verdict();
    let mut out = String::new();
    let addr = report.target().address.map(|a| format!(" ({a})")).unwrap_or_default();
    let _ = writeln!(out, "Target: {}{addr}", report.target().host);
    let _ = writeln!(out, "Scanned: {} .. {}", report.started_at().to_rfc3339(), report.finished_at().to_rfc3339());
    let _ = writeln!(
        out,
        "Verdict: {} ({} must-fix, {} vulnerable in total)",
        v.verdict, v.must_fix_count, v.total_vulnerable_count
    );
    let _ = writeln!(out, "Connections: {}{}", report.connections_used(), if report.is_complete() { "" } else { " (incomplete: budget exhausted)" });
    for sev in [Severity::High, Severity::Medium, Severity::Low] {
        let group: Vec<&Finding> = report.findings().iter().filter(|f| f.severity() == sev).collect();
        if group.is_empty() {
            continue;
        }
        let tag = if sev >= Severity::Medium { "must-fix" } else { "advisory" };
        let _ = writeln!(out, "\n[{sev}, {tag}]");
        for f in group {
            let _ = writeln!(out, "  {:>2}. {:<32} {:<12} {}", f.case().id(), f.case().short_name(), f.status(), f.evidence());
        }
    }
    out
}

/// Parses a single JSON report.
pub fn parse_report_json(bytes: &[u8]) -> Result<ScanReport, ReportError> {
    report_of(serde_json::from_slice(bytes)?)
}

/// Parses either a single report object or an array of them.
pub fn parse_reports_json(bytes: &[u8]) -> Result<Vec<ScanReport>, ReportError> {
    let value: serde_json::Value = serde_json::from_slice(bytes)?;
    match value {
        serde_json::Value::Array(items) => items
            .into_iter()
            .map(|v| report_of(serde_json::from_value(v)?))
            .collect(),
        v @ serde_json::Value::Object(_) => Ok(vec![report_of(serde_json::from_value(v)?)?]),
        _ => Err(ReportError::Malformed("expected a report object or an array of reports".into())),
    }
}

/// Fleet counters. Percentages are derived only when rendering.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AggregateStats {
    pub total_targets: usize,
    pub with_any_vulnerability: usize,
    pub with_any_must_fix: usize,
    pub with_two_or_more_must_fix: usize,
    /// Reports with at least one Inconclusive or ProbeError finding.
    pub undetermined: usize,
    pub per_case_counts: BTreeMap<TestCase, usize>,
}

impl AggregateStats {
    fn empty() -> Self {
        AggregateStats { per_case_counts: TestCase::ALL.iter().map(|c| (*c, 0)).collect(), ..Default::default() }
    }

    fn add(mut self, r: &ScanReport) -> Self {
        let v = r.verdict();
        self.total_targets += 1;
        self.with_any_vulnerability += (v.total_vulnerable_count > 0) as usize;
        self.with_any_must_fix += (v.must_fix_count > 0) as usize;
        self.with_two_or_more_must_fix += (v.must_fix_count >= 2) as usize;
        self.undetermined += r
            .findings()
            .iter()
            .any(|f| matches!(f.status(), FindingStatus::Inconclusive | FindingStatus::ProbeError))
            as usize;
        for c in r.vulnerable_cases() {
            *self.per_case_counts.entry(c).or_insert(0) += 1;
        }
        self
    }

    fn merge(mut self, o: Self) -> Self {
        self.total_targets += o.total_targets;
        self.with_any_vulnerability += o.with_any_vulnerability;
        self.with_any_must_fix += o.with_any_must_fix;
        self.with_two_or_more_must_fix += o.with_two_or_more_must_fix;
        self.undetermined += o.undetermined;
        for (c, n) in o.per_case_counts {
            *self.per_case_counts.entry(c).or_insert(0) += n;
        }
        self
    }

    pub fn render(&self) -> String {
        let pct = |n: usize| if self.total_targets == 0 { 0.0 } else { 100.0 * n as f64 / self.total_targets as f64 };
        let mut out = String::new();
        let _ = writeln!(out, "Targets scanned: {}", self.total_targets);
        for (label, n) in [
            ("At least one vulnerability", self.with_any_vulnerability),
            ("At least one must-fix vulnerability", self.with_any_must_fix),
            ("Two or more must-fix vulnerabilities", self.with_two_or_more_must_fix),
            ("Undetermined findings", self.undetermined),
        ] {
            let _ = writeln!(out, "{label:<38} {n:>6} ({:.0}%)", pct(n));
        }
        let _ = writeln!(out, "\n{:>3}  {:<32} {:<7} {:>6}", "No.", "Test case", "Sev.", "Sites");
        for (c, n) in &self.per_case_counts {
            let _ = writeln!(out, "{:>3}  {:<32} {:<7} {:>6} ({:.0}%)", c.id(), c.short_name(), c.severity().to_string(), n, pct(*n));
        }
        out
    }
}

pub fn aggregate(reports: &[ScanReport]) -> AggregateStats {
    aggregate_with(reports, Strategy::with_width(rayon_width()))
}

pub fn aggregate_with(reports: &[ScanReport], strategy: Strategy) -> AggregateStats {
    fold_merge(reports, strategy, AggregateStats::empty, AggregateStats::add, AggregateStats::merge)
}

fn rayon_width() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}
