use std::io;
use std::net::{IpAddr, Shutdown, SocketAddr, TcpStream};
use std::time::{Duration, Instant};

use super::resolve;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortState {
    Open,
    /// Actively refused (RST).
    Closed,
    /// No answer within the timeout, or the network was unreachable.
    Filtered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PortProbeResult {
    pub port: u16,
    pub state: PortState,
    pub elapsed: Duration,
}

/// Why a connection attempt did not yield a stream.
#[derive(Debug)]
pub enum ConnectFailure {
    Refused,
    Filtered(io::Error),
}

impl ConnectFailure {
    pub fn state(&self) -> PortState {
        match self {
            ConnectFailure::Refused => PortState::Closed,
            ConnectFailure::Filtered(_) => PortState::Filtered,
        }
    }
}

pub fn connect(addr: SocketAddr, timeout: Duration) -> Result<TcpStream, ConnectFailure> {
    match TcpStream::connect_timeout(&addr, timeout) {
        Ok(s) => Ok(s),
        Err(e) if e.kind() == io::ErrorKind::ConnectionRefused => Err(ConnectFailure::Refused),
        Err(e) => Err(ConnectFailure::Filtered(e)),
    }
}

/// Checks whether `port` accepts a TCP handshake, then closes the
/// connection without sending anything.
///
/// Only name resolution failures are errors; every transport outcome maps to
/// a [`PortState`].
pub fn probe_tcp_open(host: &str, port: u16, timeout: Duration) -> io::Result<PortProbeResult> {
    if port == 0 {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "port must be in 1..=65535"));
    }
    if timeout.is_zero() {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "timeout must be positive"));
    }
    let ip: IpAddr = resolve(host)?;
    let start = Instant::now();
    let state = match connect(SocketAddr::new(ip, port), timeout) {
        Ok(stream) => {
            let _ = stream.shutdown(Shutdown::Both);
            PortState::Open
        }
        Err(f) => f.state(),
    };
    Ok(PortProbeResult { port, state, elapsed: start.elapsed() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::TcpListener;

    #[test]
    fn listening_port_is_open() {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        let port = l.local_addr().unwrap().port();
        let r = probe_tcp_open("127.0.0.1", port, Duration::from_secs(1)).unwrap();
        assert_eq!(r.state, PortState::Open);
        assert_eq!(r.port, port);
    }

    #[test]
    fn port_one_on_loopback_is_closed() {
        let r = probe_tcp_open("127.0.0.1", 1, Duration::from_secs(1)).unwrap();
        assert_eq!(r.state, PortState::Closed);
    }

    #[test]
    fn unresolvable_name_is_an_error() {
        assert!(probe_tcp_open("no-such-host.invalid", 80, Duration::from_millis(100)).is_err());
    }

    #[test]
    fn rejects_port_zero_and_zero_timeout() {
        assert!(probe_tcp_open("127.0.0.1", 0, Duration::from_secs(1)).is_err());
        assert!(probe_tcp_open("127.0.0.1", 80, Duration::ZERO).is_err());
    }
}
