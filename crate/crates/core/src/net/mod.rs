//! Raw TCP probes: port liveness, the MySQL greeting/default-login exchange
//! and SSH banner grabbing.

pub mod mysql;
pub mod ssh;
pub mod tcp;

use std::io;
use std::net::{IpAddr, ToSocketAddrs};
use std::time::Duration;

pub use tcp::{probe_tcp_open, PortProbeResult, PortState};

pub const DEFAULT_CONNECT_TIMEOUT: Duration = Duration::from_millis(3000);
pub const DEFAULT_READ_TIMEOUT: Duration = Duration::from_millis(3000);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Timeouts {
    pub connect: Duration,
    pub read: Duration,
}

impl Default for Timeouts {
    fn default() -> Self {
        Timeouts { connect: DEFAULT_CONNECT_TIMEOUT, read: DEFAULT_READ_TIMEOUT }
    }
}

/// Resolves `host` to one address, preferring IPv4 so that loopback names
/// hit listeners bound to 127.0.0.1.
pub fn resolve(host: &str) -> io::Result<IpAddr> {
    if let Ok(ip) = host.parse::<IpAddr>() {
        return Ok(ip);
    }
    let addrs: Vec<IpAddr> = (host, 0).to_socket_addrs()?.map(|a| a.ip()).collect();
    addrs
        .iter()
        .find(|a| a.is_ipv4())
        .or_else(|| addrs.first())
        .copied()
        .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, format!("{host}: no addresses")))
}
