use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::time::Duration;

use pciscan::TestCase;
use pciscan_testbed::{spawn_testbed, Service, TestbedConfig, TestbedError};

fn get(port: u16, path: &str) -> String {
    let mut s = TcpStream::connect(("127.0.0.1", port)).unwrap();
    s.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    write!(s, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").unwrap();
    let mut out = String::new();
    s.read_to_string(&mut out).unwrap();
    out
}

#[test]
fn port_collision_names_the_port() {
    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port();
    let mut cfg = TestbedConfig::new();
    cfg.http_port = port;
    match spawn_testbed(cfg) {
        Err(e @ TestbedError::Bind { .. }) => assert!(e.to_string().contains(&port.to_string()), "{e}"),
        other => panic!("expected a bind error, got {other:?}"),
    }
}

#[test]
fn disabled_services_refuse_connections() {
    let bed = spawn_testbed(TestbedConfig::new()).unwrap();
    let p = bed.ports();
    assert!(TcpStream::connect(("127.0.0.1", p.ssh)).is_err());
    assert!(TcpStream::connect(("127.0.0.1", p.mysql)).is_err());
    assert_eq!(bed.connection_count(), 0);
}

#[test]
fn shutdown_closes_listeners() {
    let bed = spawn_testbed(TestbedConfig::only(TestCase::PlainHttpNoRedirect)).unwrap();
    let port = bed.ports().http;
    assert!(get(port, "/").starts_with("HTTP/1.1 200"));
    bed.shutdown();
    assert!(TcpStream::connect(("127.0.0.1", port)).is_err());
}

#[test]
fn access_log_records_each_connection() {
    let bed = spawn_testbed(TestbedConfig::only(TestCase::SshAvailable)).unwrap();
    let p = bed.ports();
    let redirect = get(p.http, "/");
    assert!(redirect.starts_with("HTTP/1.1 301"), "{redirect}");
    let mut ssh = TcpStream::connect(("127.0.0.1", p.ssh)).unwrap();
    let mut banner = [0u8; 64];
    let n = ssh.read(&mut banner).unwrap();
    assert!(banner[..n].starts_with(b"SSH-2.0-OpenSSH_8.9"));
    drop(ssh);

    std::thread::sleep(Duration::from_millis(1500));
    let log = bed.access_log();
    assert_eq!(log.iter().map(|e| e.service).collect::<Vec<_>>(), [Service::Http, Service::Ssh]);
    assert_eq!(log[0].port, p.http);
    assert!(log[0].summary.contains("GET / -> 301"), "{}", log[0].summary);
    bed.clear_access_log();
    assert_eq!(bed.connection_count(), 0);
}

#[test]
fn invalid_configuration_is_rejected_before_binding() {
    let mut cfg = TestbedConfig::only(TestCase::ExpiredCertificate);
    cfg.https_enabled = false;
    assert!(matches!(spawn_testbed(cfg), Err(TestbedError::Config(_))));
}
