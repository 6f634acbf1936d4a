//! Just enough of the TLS record and handshake layers to send a pinned
//! ClientHello and read back the first server handshake message.

use std::io::{self, Read};

use crate::error::WireError;

pub const CONTENT_ALERT: u8 = 21;
pub const CONTENT_HANDSHAKE: u8 = 22;
pub const HANDSHAKE_CLIENT_HELLO: u8 = 1;
pub const HANDSHAKE_SERVER_HELLO: u8 = 2;
pub const ALERT_FATAL: u8 = 2;
pub const ALERT_HANDSHAKE_FAILURE: u8 = 40;
pub const ALERT_PROTOCOL_VERSION: u8 = 70;

const MAX_RECORD: usize = 18 * 1024;
const MAX_HANDSHAKE: usize = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProtocolVersion(pub u16);

impl ProtocolVersion {
    pub const SSL30: ProtocolVersion = ProtocolVersion(0x0300);
    pub const TLS10: ProtocolVersion = ProtocolVersion(0x0301);
    pub const TLS11: ProtocolVersion = ProtocolVersion(0x0302);
    pub const TLS12: ProtocolVersion = ProtocolVersion(0x0303);

    pub fn name(self) -> String {
        match self.0 {
            0x0300 => "SSLv3".into(),
            0x0301 => "TLSv1.0".into(),
            0x0302 => "TLSv1.1".into(),
            0x0303 => "TLSv1.2".into(),
            0x0304 => "TLSv1.3".into(),
            v => format!("{v:#06x}"),
        }
    }
}

/// Suites whose cipher is IDEA or single DES, or whose MAC is MD5.
pub const WEAK_SUITES: [u16; 5] = [0x0007, 0x0009, 0x0004, 0x0012, 0x0015];
/// Triple-DES suites, offered by the weak-cipher probe only on request.
pub const TRIPLE_DES_SUITES: [u16; 3] = [0x000a, 0x0013, 0x0016];
/// Widely deployed TLS 1.0-compatible suites for the version probe. None
/// of them is in [`WEAK_SUITES`].
pub const BROAD_SUITES: [u16; 10] = [
    0xc014, 0xc013, 0xc00a, 0xc009, 0x0039, 0x0033, 0x0035, 0x002f, 0x000a, 0x0016,
];
/// Signalling values that are not negotiable suites.
pub const SIGNALLING_SUITES: [u16; 2] = [0x00ff, 0x5600];

pub fn suite_name(id: u16) -> String {
    let name = match id {
        0x0004 => "RC4_128_MD5",
        0x0007 => "IDEA_CBC_SHA",
        0x0009 => "DES_CBC_SHA",
        0x000a => "3DES_EDE_CBC_SHA",
        0x0012 => "DHE_DSS_DES_CBC_SHA",
        0x0013 => "DHE_DSS_3DES_EDE_CBC_SHA",
        0x0015 => "DHE_RSA_DES_CBC_SHA",
        0x0016 => "DHE_RSA_3DES_EDE_CBC_SHA",
        0x002f => "AES_128_CBC_SHA",
        0x0033 => "DHE_RSA_AES_128_CBC_SHA",
        0x0035 => "AES_256_CBC_SHA",
        0x0039 => "DHE_RSA_AES_256_CBC_SHA",
        0xc009 => "ECDHE_ECDSA_AES_128_CBC_SHA",
        0xc00a => "ECDHE_ECDSA_AES_256_CBC_SHA",
        0xc013 => "ECDHE_RSA_AES_128_CBC_SHA",
        0xc014 => "ECDHE_RSA_AES_256_CBC_SHA",
        _ => return format!("{id:#06x}"),
    };
    format!("{name} ({id:#06x})")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientHello {
    pub record_version: ProtocolVersion,
    pub client_version: ProtocolVersion,
    pub random: [u8; 32],
    pub suites: Vec<u16>,
    pub server_name: Option<String>,
}

impl ClientHello {
    /// A hello with a fresh random, record version pinned to TLS 1.0, null
    /// compression and SNI as the only extension.
    pub fn new(client_version: ProtocolVersion, suites: Vec<u16>, server_name: Option<String>) -> Self {
        ClientHello {
            record_version: ProtocolVersion::TLS10,
            client_version,
            random: rand::random(),
            suites,
            server_name,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut body = Vec::new();
        body.extend_from_slice(&self.client_version.0.to_be_bytes());
        body.extend_from_slice(&self.random);
        body.push(0); // session id
        put_u16(&mut body, (self.suites.len() * 2) as u16);
        for s in &self.suites {
            body.extend_from_slice(&s.to_be_bytes());
        }
        body.extend_from_slice(&[1, 0]); // null compression only
        if let Some(name) = &self.server_name {
            let name = name.as_bytes();
            let mut sni = Vec::new();
            put_u16(&mut sni, (name.len() + 3) as u16);
            sni.push(0); // host_name
            put_u16(&mut sni, name.len() as u16);
            sni.extend_from_slice(name);
            let mut ext = Vec::new();
            put_u16(&mut ext, 0x0000);
            put_u16(&mut ext, sni.len() as u16);
            ext.extend_from_slice(&sni);
            put_u16(&mut body, ext.len() as u16);
            body.extend_from_slice(&ext);
        }
        let hs = handshake_message(HANDSHAKE_CLIENT_HELLO, &body);
        record(CONTENT_HANDSHAKE, self.record_version, &hs)
    }

    /// Parses a ClientHello handshake body (without the 4-byte header).
    pub fn parse_body(record_version: ProtocolVersion, body: &[u8]) -> Result<Self, WireError> {
        let mut c = Cursor::new(body);
        let client_version = ProtocolVersion(c.u16("client version")?);
        let random: [u8; 32] = c.take(32, "random")?.try_into().expect("32 bytes");
        let sid_len = c.u8("session id")? as usize;
        c.take(sid_len, "session id")?;
        let suites_len = c.u16("cipher suites")? as usize;
        if !suites_len.is_multiple_of(2) {
            return Err(WireError::Invalid("odd cipher suite length".into()));
        }
        let suites = c
            .take(suites_len, "cipher suites")?
            .chunks(2)
            .map(|p| u16::from_be_bytes([p[0], p[1]]))
            .collect();
        let comp_len = c.u8("compression")? as usize;
        c.take(comp_len, "compression")?;
        let mut server_name = None;
        if !c.is_empty() {
            let ext_len = c.u16("extensions")? as usize;
            let mut ext = Cursor::new(c.take(ext_len, "extensions")?);
            while !ext.is_empty() {
                let kind = ext.u16("extension type")?;
                let len = ext.u16("extension length")? as usize;
                let data = ext.take(len, "extension body")?;
                if kind == 0 {
                    server_name = parse_sni(data);
                }
            }
        }
        Ok(ClientHello { record_version, client_version, random, suites, server_name })
    }

    /// Offered suites minus signalling values.
    pub fn negotiable_suites(&self) -> impl Iterator<Item = u16> + '_ {
        self.suites.iter().copied().filter(|s| !SIGNALLING_SUITES.contains(s))
    }
}

fn parse_sni(data: &[u8]) -> Option<String> {
    let mut c = Cursor::new(data);
    let _list_len = c.u16("sni").ok()?;
    while !c.is_empty() {
        let kind = c.u8("sni").ok()?;
        let len = c.u16("sni").ok()? as usize;
        let name = c.take(len, "sni").ok()?;
        if kind == 0 {
            return String::from_utf8(name.to_vec()).ok();
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerHello {
    pub version: ProtocolVersion,
    pub random: [u8; 32],
    pub suite: u16,
}

impl ServerHello {
    pub fn encode(&self, record_version: ProtocolVersion) -> Vec<u8> {
        let mut body = Vec::new();
        body.extend_from_slice(&self.version.0.to_be_bytes());
        body.extend_from_slice(&self.random);
        body.push(0);
        body.extend_from_slice(&self.suite.to_be_bytes());
        body.push(0);
        let hs = handshake_message(HANDSHAKE_SERVER_HELLO, &body);
        record(CONTENT_HANDSHAKE, record_version, &hs)
    }

    pub fn parse_body(body: &[u8]) -> Result<Self, WireError> {
        let mut c = Cursor::new(body);
        let version = ProtocolVersion(c.u16("server version")?);
        let random: [u8; 32] = c.take(32, "random")?.try_into().expect("32 bytes");
        let sid_len = c.u8("session id")? as usize;
        c.take(sid_len, "session id")?;
        let suite = c.u16("cipher suite")?;
        Ok(ServerHello { version, random, suite })
    }
}

pub fn alert(version: ProtocolVersion, description: u8) -> Vec<u8> {
    record(CONTENT_ALERT, version, &[ALERT_FATAL, description])
}

fn handshake_message(kind: u8, body: &[u8]) -> Vec<u8> {
    let len = body.len() as u32;
    let mut out = vec![kind];
    out.extend_from_slice(&len.to_be_bytes()[1..]);
    out.extend_from_slice(body);
    out
}

fn record(content: u8, version: ProtocolVersion, payload: &[u8]) -> Vec<u8> {
    let mut out = vec![content];
    out.extend_from_slice(&version.0.to_be_bytes());
    put_u16(&mut out, payload.len() as u16);
    out.extend_from_slice(payload);
    out
}

fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_be_bytes());
}

/// What came back after a ClientHello.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ServerResponse {
    Hello(ServerHello),
    Alert { level: u8, description: u8 },
    Closed,
    Timeout,
    Malformed(String),
}

/// First handshake message of a peer together with everything read so far.
#[derive(Debug)]
pub struct FirstHandshake {
    pub record_version: ProtocolVersion,
    pub kind: u8,
    pub body: Vec<u8>,
    /// Raw bytes consumed from the stream, for replay into a real TLS stack.
    pub raw: Vec<u8>,
}

/// Result of reading records until one complete handshake message is known.
pub enum RecordRead {
    Handshake(FirstHandshake),
    Alert { level: u8, description: u8 },
    Closed,
}

/// Reads records until the first handshake message is complete. Alerts
/// are reported as they arrive.
pub fn read_first_handshake<R: Read>(r: &mut R) -> io::Result<RecordRead> {
    let mut raw = Vec::new();
    let mut hs = Vec::new();
    let mut record_version = None;
    loop {
        let mut header = [0u8; 5];
        if let Err(e) = r.read_exact(&mut header) {
            return match e.kind() {
                io::ErrorKind::UnexpectedEof | io::ErrorKind::ConnectionReset => Ok(RecordRead::Closed),
                _ => Err(e),
            };
        }
        let len = u16::from_be_bytes([header[3], header[4]]) as usize;
        if len > MAX_RECORD {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "oversized record"));
        }
        let mut payload = vec![0u8; len];
        r.read_exact(&mut payload).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => io::Error::new(io::ErrorKind::InvalidData, "truncated record"),
            _ => e,
        })?;
        raw.extend_from_slice(&header);
        raw.extend_from_slice(&payload);
        match header[0] {
            CONTENT_ALERT if payload.len() >= 2 => {
                return Ok(RecordRead::Alert { level: payload[0], description: payload[1] })
            }
            CONTENT_HANDSHAKE => {
                record_version.get_or_insert(ProtocolVersion(u16::from_be_bytes([header[1], header[2]])));
                hs.extend_from_slice(&payload);
                if hs.len() >= 4 {
                    let body_len = u32::from_be_bytes([0, hs[1], hs[2], hs[3]]) as usize;
                    if body_len > MAX_HANDSHAKE {
                        return Err(io::Error::new(io::ErrorKind::InvalidData, "oversized handshake"));
                    }
                    if hs.len() >= 4 + body_len {
                        return Ok(RecordRead::Handshake(FirstHandshake {
                            record_version: record_version.expect("set above"),
                            kind: hs[0],
                            body: hs[4..4 + body_len].to_vec(),
                            raw,
                        }));
                    }
                }
            }
            other => {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("unexpected record type {other}"),
                ))
            }
        }
    }
}

/// Reads the server's answer to a ClientHello.
pub fn read_server_response<R: Read>(r: &mut R) -> ServerResponse {
    match read_first_handshake(r) {
        Ok(RecordRead::Handshake(h)) if h.kind == HANDSHAKE_SERVER_HELLO => {
            match ServerHello::parse_body(&h.body) {
                Ok(sh) => ServerResponse::Hello(sh),
                Err(e) => ServerResponse::Malformed(e.to_string()),
            }
        }
        Ok(RecordRead::Handshake(h)) => {
            ServerResponse::Malformed(format!("expected ServerHello, got handshake type {}", h.kind))
        }
        Ok(RecordRead::Alert { level, description }) => ServerResponse::Alert { level, description },
        Ok(RecordRead::Closed) => ServerResponse::Closed,
        Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
            ServerResponse::Timeout
        }
        Err(e) if e.kind() == io::ErrorKind::ConnectionReset => ServerResponse::Closed,
        Err(e) => ServerResponse::Malformed(e.to_string()),
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Cursor { buf }
    }
    fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], WireError> {
        if self.buf.len() < n {
            return Err(WireError::Truncated(what));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }
    fn u8(&mut self, what: &'static str) -> Result<u8, WireError> {
        Ok(self.take(1, what)?[0])
    }
    fn u16(&mut self, what: &'static str) -> Result<u16, WireError> {
        let b = self.take(2, what)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn first_handshake(bytes: Vec<u8>) -> FirstHandshake {
        match read_first_handshake(&mut io::Cursor::new(bytes)).unwrap() {
            RecordRead::Handshake(h) => h,
            _ => panic!("no handshake"),
        }
    }

    #[test]
    fn client_hello_layout_is_pinned() {
        let hello = ClientHello::new(ProtocolVersion::TLS10, vec![0x0007, 0x0009], Some("a.example".into()));
        let wire = hello.encode();
        assert_eq!(&wire[..3], &[CONTENT_HANDSHAKE, 0x03, 0x01]);
        assert_eq!(wire[5], HANDSHAKE_CLIENT_HELLO);
        // client version right after the 4-byte handshake header
        assert_eq!(&wire[9..11], &[0x03, 0x01]);
        let h = first_handshake(wire.clone());
        assert_eq!(h.raw, wire);
        let parsed = ClientHello::parse_body(h.record_version, &h.body).unwrap();
        assert_eq!(parsed, hello);
    }

    #[test]
    fn client_hello_without_sni_parses() {
        let hello = ClientHello::new(ProtocolVersion::TLS12, WEAK_SUITES.to_vec(), None);
        let h = first_handshake(hello.encode());
        assert_eq!(ClientHello::parse_body(h.record_version, &h.body).unwrap(), hello);
    }

    #[test]
    fn server_hello_round_trip_through_reader() {
        let sh = ServerHello { version: ProtocolVersion::TLS10, random: [7; 32], suite: 0x002f };
        let wire = sh.encode(ProtocolVersion::TLS10);
        assert_eq!(read_server_response(&mut io::Cursor::new(wire)), ServerResponse::Hello(sh));
    }

    #[test]
    fn handshake_split_across_records_is_reassembled() {
        let sh = ServerHello { version: ProtocolVersion::TLS12, random: [1; 32], suite: 0x0009 };
        let whole = sh.encode(ProtocolVersion::TLS12);
        let hs = &whole[5..];
        let mut split = record(CONTENT_HANDSHAKE, ProtocolVersion::TLS12, &hs[..10]);
        split.extend(record(CONTENT_HANDSHAKE, ProtocolVersion::TLS12, &hs[10..]));
        assert_eq!(read_server_response(&mut io::Cursor::new(split)), ServerResponse::Hello(sh));
    }

    #[test]
    fn alert_and_close_are_distinguished() {
        let wire = alert(ProtocolVersion::TLS10, ALERT_PROTOCOL_VERSION);
        assert_eq!(
            read_server_response(&mut io::Cursor::new(wire)),
            ServerResponse::Alert { level: ALERT_FATAL, description: ALERT_PROTOCOL_VERSION }
        );
        assert_eq!(read_server_response(&mut io::Cursor::new(Vec::new())), ServerResponse::Closed);
    }

    #[test]
    fn broad_list_avoids_weak_suites() {
        assert!(BROAD_SUITES.iter().all(|s| !WEAK_SUITES.contains(s)));
    }
}
