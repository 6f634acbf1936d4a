//! MySQL greeting capture and the single default-credential handshake.
//!
//! Packet framing: 3-byte little-endian payload length, 1-byte sequence id,
//! payload. A protocol-10 greeting starts with `0x0a` followed by the
//! NUL-terminated server version. The only thing the scanner ever writes is
//! one handshake-response packet naming `root` with an empty credential.

use std::io::{self, Read, Write};
use std::net::{IpAddr, Shutdown, SocketAddr, TcpStream};

use crate::error::WireError;
use crate::model::Outcome;

use super::tcp::{connect, ConnectFailure};
use super::Timeouts;

pub const DEFAULT_PORT: u16 = 3306;
pub const PROTOCOL_V10: u8 = 0x0a;
pub const OK_HEADER: u8 = 0x00;
pub const ERR_HEADER: u8 = 0xff;
pub const CLIENT_PROTOCOL_41: u32 = 0x0000_0200;
pub const MAX_PACKET: u32 = 0x0100_0000;
pub const CHARSET_UTF8: u8 = 0x21;
pub const GREETING_FILLER_LEN: usize = 13;
const MAX_PAYLOAD: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MySqlGreeting {
    pub protocol_version: u8,
    pub server_version: String,
    pub raw_bytes: Vec<u8>,
}

/// What the server sent first on the MySQL port.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GreetingRead {
    Greeting(MySqlGreeting),
    ErrorPacket(Vec<u8>),
    Unparseable(Vec<u8>),
    /// Closed or timed out before a full packet header arrived.
    NoPacket,
}

impl GreetingRead {
    pub fn greeting(&self) -> Option<&MySqlGreeting> {
        match self {
            GreetingRead::Greeting(g) => Some(g),
            _ => None,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            GreetingRead::Greeting(g) => {
                format!("greeting protocol {} server {}", g.protocol_version, g.server_version)
            }
            GreetingRead::ErrorPacket(p) => format!("error packet ({})", printable(&p[1..])),
            GreetingRead::Unparseable(p) => format!("unparseable banner ({} bytes)", p.len()),
            GreetingRead::NoPacket => "unparseable banner (no packet before close)".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LoginOutcome {
    Accepted,
    Rejected(String),
    Inconclusive(String),
}

pub fn encode_packet(seq: u8, payload: &[u8]) -> Vec<u8> {
    assert!(payload.len() < 1 << 24, "payload exceeds one packet");
    let len = payload.len() as u32;
    let mut out = Vec::with_capacity(payload.len() + 4);
    out.extend_from_slice(&len.to_le_bytes()[..3]);
    out.push(seq);
    out.extend_from_slice(payload);
    out
}

/// Reads one packet. `Ok(None)` when the stream ends before a header.
pub fn read_packet<R: Read>(r: &mut R) -> io::Result<Option<(u8, Vec<u8>)>> {
    let mut header = [0u8; 4];
    match r.read_exact(&mut header) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_le_bytes([header[0], header[1], header[2], 0]) as usize;
    if len > MAX_PAYLOAD {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "oversized packet"));
    }
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload)?;
    Ok(Some((header[3], payload)))
}

pub fn parse_greeting(payload: &[u8]) -> Result<MySqlGreeting, WireError> {
    let (&first, rest) = payload.split_first().ok_or(WireError::Truncated("greeting"))?;
    if first != PROTOCOL_V10 {
        return Err(WireError::Unexpected { what: "protocol version", value: first.into() });
    }
    let nul = rest
        .iter()
        .position(|&b| b == 0)
        .ok_or(WireError::Truncated("server version"))?;
    let server_version = std::str::from_utf8(&rest[..nul])
        .map_err(|_| WireError::Invalid("server version is not UTF-8".into()))?
        .to_string();
    Ok(MySqlGreeting { protocol_version: first, server_version, raw_bytes: payload.to_vec() })
}

/// The greeting payload a minimal server sends.
pub fn greeting_payload(server_version: &str) -> Vec<u8> {
    let mut p = vec![PROTOCOL_V10];
    p.extend_from_slice(server_version.as_bytes());
    p.push(0);
    p.extend_from_slice(&[0u8; GREETING_FILLER_LEN]);
    p
}

/// Handshake response with protocol-41 capability, default charset, user
/// `root` and a zero-length auth field.
pub fn handshake_response_payload() -> Vec<u8> {
    let mut p = Vec::with_capacity(42);
    p.extend_from_slice(&CLIENT_PROTOCOL_41.to_le_bytes());
    p.extend_from_slice(&MAX_PACKET.to_le_bytes());
    p.push(CHARSET_UTF8);
    p.extend_from_slice(&[0u8; 23]);
    p.extend_from_slice(b"root\0");
    p.push(0);
    p
}

pub fn ok_payload() -> Vec<u8> {
    vec![OK_HEADER, 0, 0, 0x02, 0, 0, 0]
}

pub fn error_payload(code: u16, message: &str) -> Vec<u8> {
    let mut p = vec![ERR_HEADER];
    p.extend_from_slice(&code.to_le_bytes());
    p.extend_from_slice(b"#28000");
    p.extend_from_slice(message.as_bytes());
    p
}

/// Reads the first packet on a fresh connection and classifies it.
pub fn read_greeting<R: Read>(r: &mut R) -> GreetingRead {
    match read_packet(r) {
        Ok(Some((_, payload))) => match payload.first() {
            Some(&ERR_HEADER) => GreetingRead::ErrorPacket(payload),
            _ => match parse_greeting(&payload) {
                Ok(g) => GreetingRead::Greeting(g),
                Err(_) => GreetingRead::Unparseable(payload),
            },
        },
        Ok(None) | Err(_) => GreetingRead::NoPacket,
    }
}

/// Sends the default-credential handshake response and reads one reply.
///
/// Must run on the connection that delivered `greeting`; the caller closes
/// the connection afterwards. No query is ever issued.
pub fn try_default_login<S: Read + Write>(
    stream: &mut S,
    greeting: Option<&MySqlGreeting>,
) -> LoginOutcome {
    if greeting.is_none() {
        return LoginOutcome::Inconclusive("no protocol-10 greeting".into());
    }
    let packet = encode_packet(1, &handshake_response_payload());
    if let Err(e) = stream.write_all(&packet).and_then(|_| stream.flush()) {
        return LoginOutcome::Inconclusive(format!("write failed: {e}"));
    }
    match read_packet(stream) {
        Ok(Some((_, reply))) => match reply.first() {
            Some(&OK_HEADER) => LoginOutcome::Accepted,
            Some(&ERR_HEADER) => LoginOutcome::Rejected(printable(&reply[1..])),
            Some(&b) => LoginOutcome::Inconclusive(format!("unexpected reply header {b:#04x}")),
            None => LoginOutcome::Inconclusive("empty reply".into()),
        },
        Ok(None) => LoginOutcome::Inconclusive("closed without reply".into()),
        Err(e) => LoginOutcome::Inconclusive(format!("no reply: {e}")),
    }
}

/// Outcome for the open-port rule given what the MySQL port did.
pub fn port_rule(port: u16, open: Option<&GreetingRead>) -> Outcome {
    match open {
        None => Outcome::clean(format!("port {port} not reachable")),
        Some(read) => Outcome::vulnerable(format!("port {port} open: {}", read.describe())),
    }
}

/// Outcome for the default-credential rule.
pub fn login_rule(login: Option<&LoginOutcome>) -> Outcome {
    match login {
        None => Outcome::inconclusive("MySQL not reachable or no greeting"),
        Some(LoginOutcome::Accepted) => {
            Outcome::vulnerable("server accepted user root with empty password (OK packet)")
        }
        Some(LoginOutcome::Rejected(msg)) => {
            Outcome::clean(format!("default login rejected: {msg}"))
        }
        Some(LoginOutcome::Inconclusive(why)) => Outcome::inconclusive(why.clone()),
    }
}

/// Standalone greeting read on a fresh connection.
pub fn read_mysql_greeting(ip: IpAddr, port: u16, timeouts: Timeouts) -> Result<GreetingRead, ConnectFailure> {
    let mut stream = connect(SocketAddr::new(ip, port), timeouts.connect)?;
    let _ = stream.set_read_timeout(Some(timeouts.read));
    let read = read_greeting(&mut stream);
    let _ = stream.shutdown(Shutdown::Both);
    Ok(read)
}

/// Greeting plus, when enabled, the default-login attempt on one connection.
pub fn probe_mysql(
    stream: &mut TcpStream,
    timeouts: Timeouts,
    attempt_login: bool,
) -> (GreetingRead, Option<LoginOutcome>) {
    let _ = stream.set_read_timeout(Some(timeouts.read));
    let _ = stream.set_write_timeout(Some(timeouts.read));
    let read = read_greeting(stream);
    let login = attempt_login.then(|| try_default_login(stream, read.greeting()));
    let _ = stream.shutdown(Shutdown::Both);
    (read, login)
}

fn printable(bytes: &[u8]) -> String {
    bytes
        .iter()
        .map(|&b| if b.is_ascii_graphic() || b == b' ' { b as char } else { '.' })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    struct Duplex {
        input: Cursor<Vec<u8>>,
        written: Vec<u8>,
    }

    impl Read for Duplex {
        fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
            self.input.read(buf)
        }
    }

    impl Write for Duplex {
        fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
            self.written.extend_from_slice(buf);
            Ok(buf.len())
        }
        fn flush(&mut self) -> io::Result<()> {
            Ok(())
        }
    }

    #[test]
    fn parses_crafted_greeting() {
        let wire = encode_packet(0, &greeting_payload("8.0.0-buggylite"));
        assert_eq!(&wire[..4], &[1 + 15 + 1 + 13, 0, 0, 0]);
        match read_greeting(&mut Cursor::new(wire)) {
            GreetingRead::Greeting(g) => {
                assert_eq!(g.protocol_version, 10);
                assert_eq!(g.server_version, "8.0.0-buggylite");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn error_packet_is_recognised() {
        let wire = encode_packet(0, &error_payload(1130, "Host not allowed"));
        let read = read_greeting(&mut Cursor::new(wire));
        assert!(matches!(read, GreetingRead::ErrorPacket(_)));
        assert!(read.describe().starts_with("error packet"));
        assert!(port_rule(3306, Some(&read)).status == crate::model::FindingStatus::Vulnerable);
    }

    #[test]
    fn short_stream_yields_no_packet() {
        assert_eq!(read_greeting(&mut Cursor::new(vec![5, 0])), GreetingRead::NoPacket);
    }

    #[test]
    fn handshake_response_is_pinned() {
        let p = handshake_response_payload();
        let mut expected = vec![0x00, 0x02, 0x00, 0x00, 0x00, 0x00, 0x00, 0x01, 0x21];
        expected.extend_from_slice(&[0u8; 23]);
        expected.extend_from_slice(b"root\0");
        expected.push(0);
        assert_eq!(p, expected);
    }

    #[test]
    fn login_accepted_on_ok_packet() {
        let g = parse_greeting(&greeting_payload("5.7.33")).unwrap();
        let mut d = Duplex { input: Cursor::new(encode_packet(2, &ok_payload())), written: vec![] };
        assert_eq!(try_default_login(&mut d, Some(&g)), LoginOutcome::Accepted);
        assert_eq!(d.written, encode_packet(1, &handshake_response_payload()));
    }

    #[test]
    fn login_rejected_on_error_packet() {
        let g = parse_greeting(&greeting_payload("5.7.33")).unwrap();
        let reply = encode_packet(2, &error_payload(1045, "Access denied"));
        let mut d = Duplex { input: Cursor::new(reply), written: vec![] };
        assert!(matches!(try_default_login(&mut d, Some(&g)), LoginOutcome::Rejected(_)));
    }

    #[test]
    fn login_without_greeting_is_inconclusive_and_silent() {
        let mut d = Duplex { input: Cursor::new(vec![]), written: vec![] };
        assert!(matches!(try_default_login(&mut d, None), LoginOutcome::Inconclusive(_)));
        assert!(d.written.is_empty());
        assert_eq!(login_rule(None).status, crate::model::FindingStatus::Inconclusive);
    }

    #[test]
    fn closed_port_is_clean() {
        assert_eq!(port_rule(3306, None).status, crate::model::FindingStatus::Clean);
    }
}
