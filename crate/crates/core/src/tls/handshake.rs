//! Negotiation-only probes: send one pinned ClientHello, read the first
//! server message, hang up. No key exchange is ever completed.

use std::io::Write;
use std::net::{Shutdown, TcpStream};
use std::time::Duration;

use crate::model::Outcome;

use super::wire::{
    read_server_response, suite_name, ClientHello, ProtocolVersion, ServerResponse, BROAD_SUITES,
    TRIPLE_DES_SUITES, WEAK_SUITES,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HandshakeOutcome {
    ServerHelloAccepted { version: ProtocolVersion, suite: u16 },
    AlertOrClose(String),
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HandshakeProbeResult {
    pub offered_version: ProtocolVersion,
    pub offered_suites: Vec<u16>,
    pub outcome: HandshakeOutcome,
}

/// The server answered with parameters it was never offered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolViolation(pub String);

impl std::fmt::Display for ProtocolViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "protocol violation: {}", self.0)
    }
}

/// Suites offered by the weak-cipher probe.
pub fn weak_probe_suites(include_triple_des: bool) -> Vec<u16> {
    let mut suites = WEAK_SUITES.to_vec();
    if include_triple_des {
        suites.extend_from_slice(&TRIPLE_DES_SUITES);
    }
    suites
}

/// Sends `hello` on `stream` and classifies the reply. The stream is shut
/// down before returning.
pub fn run_probe(
    stream: &mut TcpStream,
    hello: &ClientHello,
    read_timeout: Duration,
) -> Result<HandshakeProbeResult, ProtocolViolation> {
    let _ = stream.set_read_timeout(Some(read_timeout));
    let _ = stream.set_write_timeout(Some(read_timeout));
    let response = match stream.write_all(&hello.encode()) {
        Ok(()) => read_server_response(stream),
        Err(e) => ServerResponse::Malformed(format!("write failed: {e}")),
    };
    let _ = stream.shutdown(Shutdown::Both);
    classify_response(hello, response)
}

pub fn classify_response(
    hello: &ClientHello,
    response: ServerResponse,
) -> Result<HandshakeProbeResult, ProtocolViolation> {
    let outcome = match response {
        ServerResponse::Hello(sh) => {
            if !hello.suites.contains(&sh.suite) {
                return Err(ProtocolViolation(format!(
                    "server selected {} which was not offered",
                    suite_name(sh.suite)
                )));
            }
            if sh.version > hello.client_version || sh.version < ProtocolVersion::SSL30 {
                return Err(ProtocolViolation(format!(
                    "server negotiated {} but at most {} was offered",
                    sh.version.name(),
                    hello.client_version.name()
                )));
            }
            HandshakeOutcome::ServerHelloAccepted { version: sh.version, suite: sh.suite }
        }
        ServerResponse::Alert { level, description } => {
            HandshakeOutcome::AlertOrClose(format!("alert level {level} description {description}"))
        }
        ServerResponse::Closed => HandshakeOutcome::AlertOrClose("connection closed".into()),
        ServerResponse::Malformed(why) => HandshakeOutcome::AlertOrClose(format!("malformed reply: {why}")),
        ServerResponse::Timeout => HandshakeOutcome::Timeout,
    };
    Ok(HandshakeProbeResult {
        offered_version: hello.client_version,
        offered_suites: hello.suites.clone(),
        outcome,
    })
}

/// ClientHello whose record and handshake versions are both TLS 1.0.
pub fn tls10_hello(server_name: Option<&str>) -> ClientHello {
    ClientHello::new(ProtocolVersion::TLS10, BROAD_SUITES.to_vec(), server_name.map(str::to_string))
}

/// ClientHello offering only weak suites, at TLS 1.2 so that only the
/// suite decides acceptance.
pub fn weak_cipher_hello(server_name: Option<&str>, include_triple_des: bool) -> ClientHello {
    ClientHello::new(
        ProtocolVersion::TLS12,
        weak_probe_suites(include_triple_des),
        server_name.map(str::to_string),
    )
}

pub fn tls10_rule(result: &Result<HandshakeProbeResult, ProtocolViolation>) -> Outcome {
    match result {
        Err(v) => Outcome::probe_error(v.to_string()),
        Ok(r) => match &r.outcome {
            HandshakeOutcome::ServerHelloAccepted { version, suite } if *version == ProtocolVersion::TLS10 => {
                Outcome::vulnerable(format!("ServerHello TLSv1.0 with {}", suite_name(*suite)))
            }
            HandshakeOutcome::ServerHelloAccepted { version, .. } => {
                Outcome::clean(format!("server answered with {} instead of TLSv1.0", version.name()))
            }
            HandshakeOutcome::AlertOrClose(why) => Outcome::clean(format!("TLSv1.0 refused: {why}")),
            HandshakeOutcome::Timeout => Outcome::inconclusive("no reply to TLSv1.0 ClientHello"),
        },
    }
}

pub fn weak_cipher_rule(result: &Result<HandshakeProbeResult, ProtocolViolation>) -> Outcome {
    match result {
        Err(v) => Outcome::probe_error(v.to_string()),
        Ok(r) => match &r.outcome {
            HandshakeOutcome::ServerHelloAccepted { version, suite } => Outcome::vulnerable(format!(
                "server selected weak suite {} at {}",
                suite_name(*suite),
                version.name()
            )),
            HandshakeOutcome::AlertOrClose(why) => Outcome::clean(format!("weak suites refused: {why}")),
            HandshakeOutcome::Timeout => Outcome::inconclusive("no reply to weak-suite ClientHello"),
        },
    }
}
