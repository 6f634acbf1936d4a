//! End-to-end scans of the bundled testbed.

use std::collections::BTreeSet;
use std::time::Duration;

use pciscan::engine::{scan_many, scan_target, ScanConfig, TargetSpec};
use pciscan::model::{FindingStatus, ScanReport, TestCase, Verdict};
use pciscan::net::Timeouts;
use pciscan_testbed::{spawn_testbed, TestbedConfig, TestbedHandle};

fn fast_config() -> ScanConfig {
    ScanConfig {
        timeouts: Timeouts { connect: Duration::from_secs(2), read: Duration::from_secs(2) },
        politeness_delay: Duration::ZERO,
        ..ScanConfig::default()
    }
}

fn scan(bed: &TestbedHandle) -> ScanReport {
    scan_target(&TargetSpec::with_ports("localhost", bed.ports()), &fast_config())
}

fn dump(r: &ScanReport) -> String {
    r.findings()
        .iter()
        .map(|f| format!("{:>2} {:?}: {}", f.case().id(), f.status(), f.evidence()))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn all_toggles_off_is_compliant() {
    let bed = spawn_testbed(TestbedConfig::new()).unwrap();
    let r = scan(&bed);
    assert!(r.vulnerable_cases().is_empty(), "{}", dump(&r));
    assert_eq!(r.verdict().verdict, Verdict::Compliant);
    assert!(r.findings().iter().all(|f| f.status() != FindingStatus::ProbeError), "{}", dump(&r));
    assert_eq!(r.connections_used() as usize, bed.connection_count(), "{}", dump(&r));
}

#[test]
fn every_single_toggle_fires_only_its_case() {
    for case in TestCase::ALL {
        let bed = spawn_testbed(TestbedConfig::only(case)).unwrap();
        let r = scan(&bed);
        let expected: BTreeSet<TestCase> = TestbedConfig::only(case).enabled_cases();
        assert_eq!(r.vulnerable_cases(), expected, "toggle {}\n{}", case.id(), dump(&r));
        assert_eq!(r.connections_used() as usize, bed.connection_count(), "toggle {}", case.id());
    }
}

#[test]
fn tls10_only_stays_compliant() {
    let bed = spawn_testbed(TestbedConfig::only(TestCase::Tls10Supported)).unwrap();
    let r = scan(&bed);
    assert_eq!(r.vulnerable_cases(), [TestCase::Tls10Supported].into());
    assert_eq!(r.verdict().verdict, Verdict::Compliant);
}

#[test]
fn mysql_open_only_is_non_compliant() {
    let bed = spawn_testbed(TestbedConfig::only(TestCase::MysqlPortOpen)).unwrap();
    let r = scan(&bed);
    assert_eq!(r.vulnerable_cases(), [TestCase::MysqlPortOpen].into());
    assert_eq!(r.verdict().verdict, Verdict::NonCompliant);
}

#[test]
fn composed_certificate_defects() {
    let cfg = TestbedConfig::only(TestCase::SelfSignedCertificate).with(TestCase::ExpiredCertificate);
    let bed = spawn_testbed(cfg).unwrap();
    let r = scan(&bed);
    assert_eq!(r.vulnerable_cases(), [TestCase::SelfSignedCertificate, TestCase::ExpiredCertificate].into(), "{}", dump(&r));
}

#[test]
fn sweep_of_three_instances_keeps_order_and_isolation() {
    let beds = [
        spawn_testbed(TestbedConfig::only(TestCase::TraceEnabled)).unwrap(),
        spawn_testbed(TestbedConfig::new()).unwrap(),
        spawn_testbed(TestbedConfig::only(TestCase::WeakCipherSupported)).unwrap(),
    ];
    let mut targets: Vec<TargetSpec> = beds.iter().map(|b| TargetSpec::with_ports("localhost", b.ports())).collect();
    targets.insert(1, TargetSpec::new("no-such-host.invalid"));
    let reports = scan_many(&targets, &ScanConfig { parallel_targets: 3, ..fast_config() }).unwrap();
    assert_eq!(reports.len(), 4);
    assert_eq!(reports[0].vulnerable_cases(), [TestCase::TraceEnabled].into());
    assert!(reports[1].is_total_probe_error());
    assert!(reports[2].vulnerable_cases().is_empty());
    assert_eq!(reports[3].vulnerable_cases(), [TestCase::WeakCipherSupported].into());
}

#[test]
fn consecutive_scans_agree() {
    let bed = spawn_testbed(TestbedConfig::only(TestCase::BrowsableDirectory)).unwrap();
    let a: Vec<FindingStatus> = scan(&bed).findings().iter().map(|f| f.status()).collect();
    let b: Vec<FindingStatus> = scan(&bed).findings().iter().map(|f| f.status()).collect();
    assert_eq!(a, b);
}
