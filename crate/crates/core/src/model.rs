//! Test-case catalog, severity taxonomy, findings and the compliance verdict.
//!
//! Everything in here is a plain value type. The catalog is closed: the
//! seventeen remotely testable cases are fixed at build time and carry the
//! numbering of the published results table.

use std::collections::BTreeSet;
use std::fmt;
use std::net::IpAddr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// One of the seventeen externally testable compliance rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TestCase {
    MysqlPortOpen,
    SshAvailable,
    MysqlDefaultCredentials,
    PlainHttpNoRedirect,
    SelfSignedCertificate,
    WeakCipherSupported,
    ExpiredCertificate,
    WrongHostname,
    InsecureModulus,
    WeakCertificateHash,
    Tls10Supported,
    VulnerableOpenSsh,
    MissingScriptIntegrity,
    ServerInfoDisclosed,
    BrowsableDirectory,
    TraceEnabled,
    SecurityHeadersMissing,
}

impl TestCase {
    /// All cases, ordered by case number.
    pub const ALL: [TestCase; 17] = [
        TestCase::MysqlPortOpen,
        TestCase::SshAvailable,
        TestCase::MysqlDefaultCredentials,
        TestCase::PlainHttpNoRedirect,
        TestCase::SelfSignedCertificate,
        TestCase::WeakCipherSupported,
        TestCase::ExpiredCertificate,
        TestCase::WrongHostname,
        TestCase::InsecureModulus,
        TestCase::WeakCertificateHash,
        TestCase::Tls10Supported,
        TestCase::VulnerableOpenSsh,
        TestCase::MissingScriptIntegrity,
        TestCase::ServerInfoDisclosed,
        TestCase::BrowsableDirectory,
        TestCase::TraceEnabled,
        TestCase::SecurityHeadersMissing,
    ];

    pub fn id(self) -> u8 {
        match self {
            TestCase::MysqlPortOpen => 2,
            TestCase::SshAvailable => 3,
            TestCase::MysqlDefaultCredentials => 5,
            TestCase::PlainHttpNoRedirect => 7,
            TestCase::SelfSignedCertificate => 12,
            TestCase::WeakCipherSupported => 13,
            TestCase::ExpiredCertificate => 14,
            TestCase::WrongHostname => 15,
            TestCase::InsecureModulus => 16,
            TestCase::WeakCertificateHash => 17,
            TestCase::Tls10Supported => 18,
            TestCase::VulnerableOpenSsh => 19,
            TestCase::MissingScriptIntegrity => 25,
            TestCase::ServerInfoDisclosed => 29,
            TestCase::BrowsableDirectory => 30,
            TestCase::TraceEnabled => 31,
            TestCase::SecurityHeadersMissing => 33,
        }
    }

    pub fn from_id(id: u8) -> Option<TestCase> {
        TestCase::ALL.into_iter().find(|c| c.id() == id)
    }

    pub fn short_name(self) -> &'static str {
        match self {
            TestCase::MysqlPortOpen => "Mysql port (3306) detection",
            TestCase::SshAvailable => "OpenSSH available",
            TestCase::MysqlDefaultCredentials => "Default Mysql user/passwd",
            TestCase::PlainHttpNoRedirect => "Sensitive info over HTTP",
            TestCase::SelfSignedCertificate => "Selfsigned cert presented",
            TestCase::WeakCipherSupported => "Weak Cipher Supported",
            TestCase::ExpiredCertificate => "Expired cert presented",
            TestCase::WrongHostname => "Wrong hostname in cert",
            TestCase::InsecureModulus => "Insecure Modulus",
            TestCase::WeakCertificateHash => "Weak hash in cert",
            TestCase::Tls10Supported => "TLSv1.0 Supported",
            TestCase::VulnerableOpenSsh => "OpenSSH vulnerable",
            TestCase::MissingScriptIntegrity => "Missing script integrity check",
            TestCase::ServerInfoDisclosed => "Server Info available",
            TestCase::BrowsableDirectory => "Browsable Dir Enabled",
            TestCase::TraceEnabled => "HTTP TRACE supported",
            TestCase::SecurityHeadersMissing => "Security Headers missing",
        }
    }

    /// The PCI DSS requirement the rule is filed under.
    pub fn dss_requirement(self) -> &'static str {
        match self.id() {
            2 | 3 => "1.2",
            5 => "2.1",
            7 => "2.3",
            12..=18 => "4.1",
            19 => "6.1",
            25 => "6.5",
            _ => "6.6",
        }
    }

    pub fn severity(self) -> Severity {
        severity_of(self)
    }

    pub fn is_must_fix(self) -> bool {
        is_must_fix(self)
    }
}

impl fmt::Display for TestCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}. {}", self.id(), self.short_name())
    }
}

impl Serialize for TestCase {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.id())
    }
}

impl<'de> Deserialize<'de> for TestCase {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let id = u8::deserialize(d)?;
        TestCase::from_id(id)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown test case {id}")))
    }
}

/// Severity class. Ordering is `Low < Medium < High`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Severity {
    Low,
    Medium,
    High,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Low => "Low",
            Severity::Medium => "Medium",
            Severity::High => "High",
        })
    }
}

pub fn severity_of(case: TestCase) -> Severity {
    use TestCase::*;
    match case {
        MysqlDefaultCredentials | PlainHttpNoRedirect | SelfSignedCertificate
        | WeakCipherSupported | InsecureModulus | WeakCertificateHash | VulnerableOpenSsh
        | BrowsableDirectory | TraceEnabled => Severity::High,
        MysqlPortOpen | ExpiredCertificate | WrongHostname | MissingScriptIntegrity
        | ServerInfoDisclosed | SecurityHeadersMissing => Severity::Medium,
        SshAvailable | Tls10Supported => Severity::Low,
    }
}

/// High and medium findings disqualify compliance; low ones do not.
pub fn is_must_fix(case: TestCase) -> bool {
    severity_of(case) >= Severity::Medium
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FindingStatus {
    Vulnerable,
    Clean,
    /// A prerequisite service was absent, so the rule could not apply.
    Inconclusive,
    /// Transport failure while probing.
    ProbeError,
}

impl fmt::Display for FindingStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FindingStatus::Vulnerable => "Vulnerable",
            FindingStatus::Clean => "Clean",
            FindingStatus::Inconclusive => "Inconclusive",
            FindingStatus::ProbeError => "ProbeError",
        })
    }
}

/// A rule outcome together with the text explaining it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub status: FindingStatus,
    pub evidence: String,
}

impl Outcome {
    pub fn new(status: FindingStatus, evidence: impl Into<String>) -> Self {
        Outcome { status, evidence: evidence.into() }
    }
    pub fn vulnerable(evidence: impl Into<String>) -> Self {
        Outcome::new(FindingStatus::Vulnerable, evidence)
    }
    pub fn clean(evidence: impl Into<String>) -> Self {
        Outcome::new(FindingStatus::Clean, evidence)
    }
    pub fn inconclusive(evidence: impl Into<String>) -> Self {
        Outcome::new(FindingStatus::Inconclusive, evidence)
    }
    pub fn probe_error(evidence: impl Into<String>) -> Self {
        Outcome::new(FindingStatus::ProbeError, evidence)
    }
}

/// One rule's outcome for one target.
///
/// Severity is not stored; it is always read back from the static map so a
/// finding can never disagree with the catalog.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    case: TestCase,
    status: FindingStatus,
    evidence: String,
    probe_count: u32,
}

impl Finding {
    /// Fails when a vulnerable finding carries no evidence.
    pub fn new(
        case: TestCase,
        status: FindingStatus,
        evidence: impl Into<String>,
        probe_count: u32,
    ) -> Result<Self, ModelError> {
        let evidence = evidence.into();
        if status == FindingStatus::Vulnerable && evidence.trim().is_empty() {
            return Err(ModelError::MissingEvidence(case.id()));
        }
        Ok(Finding { case, status, evidence, probe_count })
    }

    pub(crate) fn from_outcome(case: TestCase, outcome: Outcome, probe_count: u32) -> Self {
        let Outcome { status, mut evidence } = outcome;
        if status == FindingStatus::Vulnerable && evidence.trim().is_empty() {
            evidence = "vulnerable (no detail captured)".to_string();
        }
        Finding { case, status, evidence, probe_count }
    }

    pub fn case(&self) -> TestCase {
        self.case
    }
    pub fn status(&self) -> FindingStatus {
        self.status
    }
    pub fn severity(&self) -> Severity {
        severity_of(self.case)
    }
    pub fn evidence(&self) -> &str {
        &self.evidence
    }
    /// Connections consumed by this rule; zero when it rode on a shared probe.
    pub fn probe_count(&self) -> u32 {
        self.probe_count
    }
    pub fn is_vulnerable(&self) -> bool {
        self.status == FindingStatus::Vulnerable
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Compliant,
    NonCompliant,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Compliant => "COMPLIANT",
            Verdict::NonCompliant => "NON-COMPLIANT",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComplianceVerdict {
    pub verdict: Verdict,
    pub must_fix_count: usize,
    pub total_vulnerable_count: usize,
}

/// Computes the compliance verdict over a full finding set.
///
/// Only `Vulnerable` findings count. The input must cover each catalog case
/// exactly once.
pub fn verdict(findings: &[Finding]) -> Result<ComplianceVerdict, ModelError> {
    check_complete(findings)?;
    let total_vulnerable_count = findings.iter().filter(|f| f.is_vulnerable()).count();
    let must_fix_count = findings
        .iter()
        .filter(|f| f.is_vulnerable() && is_must_fix(f.case))
        .count();
    let verdict = if must_fix_count >= 1 { Verdict::NonCompliant } else { Verdict::Compliant };
    Ok(ComplianceVerdict { verdict, must_fix_count, total_vulnerable_count })
}

fn check_complete(findings: &[Finding]) -> Result<(), ModelError> {
    let mut seen = BTreeSet::new();
    for f in findings {
        if !seen.insert(f.case) {
            return Err(ModelError::DuplicateCase(f.case.id()));
        }
    }
    if let Some(missing) = TestCase::ALL.iter().find(|c| !seen.contains(c)) {
        return Err(ModelError::MissingCase(missing.id()));
    }
    Ok(())
}

/// Hostname as given plus the address actually probed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanTarget {
    pub host: String,
    pub address: Option<IpAddr>,
}

/// One connection-consuming probe in the per-target budget.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub probe: String,
    pub connections: u32,
}

/// All findings for one target plus the verdict and connection accounting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanReport {
    target: ScanTarget,
    started_at: DateTime<Utc>,
    finished_at: DateTime<Utc>,
    findings: Vec<Finding>,
    verdict: ComplianceVerdict,
    ledger: Vec<LedgerEntry>,
    complete: bool,
}

impl ScanReport {
    /// Findings are sorted into catalog order; the verdict is derived here.
    pub fn new(
        target: ScanTarget,
        started_at: DateTime<Utc>,
        finished_at: DateTime<Utc>,
        mut findings: Vec<Finding>,
        ledger: Vec<LedgerEntry>,
        complete: bool,
    ) -> Result<Self, ModelError> {
        let verdict = verdict(&findings)?;
        findings.sort_by_key(|f| f.case);
        Ok(ScanReport { target, started_at, finished_at, findings, verdict, ledger, complete })
    }

    pub fn target(&self) -> &ScanTarget {
        &self.target
    }
    pub fn started_at(&self) -> DateTime<Utc> {
        self.started_at
    }
    pub fn finished_at(&self) -> DateTime<Utc> {
        self.finished_at
    }
    pub fn findings(&self) -> &[Finding] {
        &self.findings
    }
    pub fn finding(&self, case: TestCase) -> &Finding {
        self.findings
            .iter()
            .find(|f| f.case == case)
            .expect("report holds every catalog case")
    }
    pub fn verdict(&self) -> ComplianceVerdict {
        self.verdict
    }
    pub fn ledger(&self) -> &[LedgerEntry] {
        &self.ledger
    }
    pub fn connections_used(&self) -> u32 {
        self.ledger.iter().map(|e| e.connections).sum()
    }
    /// False when the scan aborted on the connection budget.
    pub fn is_complete(&self) -> bool {
        self.complete
    }
    pub fn vulnerable_cases(&self) -> BTreeSet<TestCase> {
        self.findings.iter().filter(|f| f.is_vulnerable()).map(|f| f.case).collect()
    }
    /// Every finding is a transport failure (e.g. the name did not resolve).
    pub fn is_total_probe_error(&self) -> bool {
        self.findings.iter().all(|f| f.status == FindingStatus::ProbeError)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn findings_with(vulnerable: &[u8]) -> Vec<Finding> {
        TestCase::ALL
            .iter()
            .map(|&c| {
                let status = if vulnerable.contains(&c.id()) {
                    FindingStatus::Vulnerable
                } else {
                    FindingStatus::Clean
                };
                Finding::new(c, status, "seen", 0).unwrap()
            })
            .collect()
    }

    #[test]
    fn catalog_ids_are_the_seventeen_cases() {
        let ids: Vec<u8> = TestCase::ALL.iter().map(|c| c.id()).collect();
        assert_eq!(ids, [2, 3, 5, 7, 12, 13, 14, 15, 16, 17, 18, 19, 25, 29, 30, 31, 33]);
        for c in TestCase::ALL {
            assert_eq!(TestCase::from_id(c.id()), Some(c));
        }
        assert_eq!(TestCase::from_id(4), None);
    }

    #[test]
    fn severity_examples() {
        assert_eq!(severity_of(TestCase::PlainHttpNoRedirect), Severity::High);
        assert_eq!(severity_of(TestCase::Tls10Supported), Severity::Low);
        assert_eq!(severity_of(TestCase::MissingScriptIntegrity), Severity::Medium);
        assert!(Severity::High > Severity::Medium && Severity::Medium > Severity::Low);
    }

    #[test]
    fn must_fix_examples() {
        assert!(!is_must_fix(TestCase::SshAvailable));
        assert!(is_must_fix(TestCase::MysqlDefaultCredentials));
        assert_eq!(TestCase::ALL.iter().filter(|c| is_must_fix(**c)).count(), 15);
    }

    #[test]
    fn verdict_examples() {
        let v = verdict(&findings_with(&[])).unwrap();
        assert_eq!((v.verdict, v.must_fix_count, v.total_vulnerable_count), (Verdict::Compliant, 0, 0));
        let v = verdict(&findings_with(&[18])).unwrap();
        assert_eq!((v.verdict, v.must_fix_count, v.total_vulnerable_count), (Verdict::Compliant, 0, 1));
        let v = verdict(&findings_with(&[18, 2])).unwrap();
        assert_eq!((v.verdict, v.must_fix_count, v.total_vulnerable_count), (Verdict::NonCompliant, 1, 2));
    }

    #[test]
    fn verdict_ignores_undetermined_statuses() {
        let mut fs = findings_with(&[]);
        fs[0] = Finding::new(fs[0].case(), FindingStatus::Inconclusive, "", 0).unwrap();
        fs[1] = Finding::new(fs[1].case(), FindingStatus::ProbeError, "timeout", 1).unwrap();
        assert_eq!(verdict(&fs).unwrap().verdict, Verdict::Compliant);
    }

    #[test]
    fn verdict_rejects_incomplete_or_duplicated_sets() {
        let mut fs = findings_with(&[]);
        fs.pop();
        assert_eq!(verdict(&fs), Err(ModelError::MissingCase(33)));
        let mut fs = findings_with(&[]);
        fs[1] = fs[0].clone();
        assert_eq!(verdict(&fs), Err(ModelError::DuplicateCase(2)));
    }

    #[test]
    fn vulnerable_finding_needs_evidence() {
        assert!(Finding::new(TestCase::TraceEnabled, FindingStatus::Vulnerable, " ", 1).is_err());
    }
}
