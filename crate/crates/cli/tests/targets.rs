use pciscan::model::{Finding, FindingStatus, LedgerEntry, ScanReport, ScanTarget};
use pciscan::TestCase;
use pciscan_cli::{exit_code, parse_targets, TargetError, EXIT_COMPLIANT, EXIT_NON_COMPLIANT, EXIT_PROBE_ERROR};
use proptest::prelude::*;

fn report(status_of: impl Fn(TestCase) -> FindingStatus) -> ScanReport {
    let findings = TestCase::ALL.iter().map(|&c| Finding::new(c, status_of(c), "x", 1).unwrap()).collect();
    let now = chrono::Utc::now();
    ScanReport::new(
        ScanTarget { host: "h.example".into(), address: None },
        now,
        now,
        findings,
        vec![LedgerEntry { probe: "index".into(), connections: 1 }],
        true,
    )
    .unwrap()
}

#[test]
fn exit_codes_follow_the_worst_target() {
    let clean = report(|_| FindingStatus::Clean);
    let low = report(|c| if c == TestCase::SshAvailable { FindingStatus::Vulnerable } else { FindingStatus::Clean });
    let bad = report(|c| if c == TestCase::MysqlPortOpen { FindingStatus::Vulnerable } else { FindingStatus::Clean });
    let dead = report(|_| FindingStatus::ProbeError);
    assert_eq!(exit_code(&[clean.clone(), low.clone()]), EXIT_COMPLIANT);
    assert_eq!(exit_code(&[clean.clone(), bad.clone()]), EXIT_NON_COMPLIANT);
    assert_eq!(exit_code(&[bad, dead]), EXIT_PROBE_ERROR);
}

#[test]
fn empty_input_is_an_error() {
    assert_eq!(parse_targets("\n# nothing\n  \n"), Err(TargetError::Empty));
}

#[test]
fn paths_and_spaces_are_rejected() {
    assert!(matches!(parse_targets("a.com/x"), Err(TargetError::NotAHostname { line: 1, .. })));
    assert!(matches!(parse_targets("a.com\n\na b"), Err(TargetError::NotAHostname { line: 3, .. })));
}

proptest! {
    #[test]
    fn output_is_deduplicated_and_order_preserving(hosts in prop::collection::vec("[a-c]{1,2}\\.example", 1..20)) {
        let text = hosts.join("\n");
        let parsed = parse_targets(&text).unwrap();
        let mut expected: Vec<String> = Vec::new();
        for h in &hosts {
            if !expected.iter().any(|e| e.eq_ignore_ascii_case(h)) {
                expected.push(h.clone());
            }
        }
        prop_assert_eq!(parsed, expected);
    }
}
