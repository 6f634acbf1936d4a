//! HTTPS listener behaviour.
//!
//! The first ClientHello is read off the socket before any TLS stack sees
//! it. Legacy-version and weak-suite-only hellos get a canned ServerHello
//! or an alert and the connection closes; anything else is replayed into a
//! rustls server session that serves the certificate fixture.

use std::io::{self, Cursor, Write};
use std::net::{Shutdown, TcpStream};
use std::sync::Arc;

use pciscan::tls::wire::{
    alert, read_first_handshake, ClientHello, ProtocolVersion, RecordRead, ServerHello, ALERT_HANDSHAKE_FAILURE,
    ALERT_PROTOCOL_VERSION, HANDSHAKE_CLIENT_HELLO, TRIPLE_DES_SUITES, WEAK_SUITES,
};
use pciscan::TestCase;
use rsa::{Pkcs1v15Sign, RsaPrivateKey};
use rustls::pki_types::CertificateDer;
use rustls::server::{ClientHello as RustlsHello, ResolvesServerCert};
use rustls::sign::{CertifiedKey, Signer, SigningKey};
use rustls::{ServerConfig, ServerConnection, SignatureAlgorithm, SignatureScheme, StreamOwned};
use sha2::{Digest, Sha256, Sha384, Sha512};

use crate::certs::CertFixture;
use crate::config::TestbedConfig;

/// What the dispatcher decided for one ClientHello.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HelloDecision {
    /// Canned ServerHello at `version` selecting `suite`, then close.
    Accept { version: ProtocolVersion, suite: u16 },
    Reject { description: u8 },
    /// Hand over to the real TLS stack.
    Handshake,
}

fn is_weak(suite: u16) -> bool {
    WEAK_SUITES.contains(&suite) || TRIPLE_DES_SUITES.contains(&suite)
}

pub fn decide(hello: &ClientHello, config: &TestbedConfig) -> HelloDecision {
    let offered: Vec<u16> = hello.negotiable_suites().collect();
    if hello.client_version <= ProtocolVersion::TLS11 {
        if !config.enabled(TestCase::Tls10Supported) {
            return HelloDecision::Reject { description: ALERT_PROTOCOL_VERSION };
        }
        return match offered.iter().find(|s| !is_weak(**s)).or(offered.first()) {
            Some(&suite) => HelloDecision::Accept { version: ProtocolVersion::TLS10, suite },
            None => HelloDecision::Reject { description: ALERT_HANDSHAKE_FAILURE },
        };
    }
    if !offered.is_empty() && offered.iter().all(|s| is_weak(*s)) {
        if config.enabled(TestCase::WeakCipherSupported) {
            return HelloDecision::Accept { version: ProtocolVersion::TLS12, suite: offered[0] };
        }
        return HelloDecision::Reject { description: ALERT_HANDSHAKE_FAILURE };
    }
    HelloDecision::Handshake
}

#[derive(Debug)]
struct RsaSigningKey(Arc<RsaPrivateKey>);

#[derive(Debug)]
struct RsaSigner {
    key: Arc<RsaPrivateKey>,
    scheme: SignatureScheme,
}

const SCHEMES: [SignatureScheme; 3] =
    [SignatureScheme::RSA_PKCS1_SHA256, SignatureScheme::RSA_PKCS1_SHA384, SignatureScheme::RSA_PKCS1_SHA512];

impl SigningKey for RsaSigningKey {
    fn choose_scheme(&self, offered: &[SignatureScheme]) -> Option<Box<dyn Signer>> {
        SCHEMES
            .iter()
            .find(|s| offered.contains(s))
            .map(|s| Box::new(RsaSigner { key: self.0.clone(), scheme: *s }) as Box<dyn Signer>)
    }

    fn algorithm(&self) -> SignatureAlgorithm {
        SignatureAlgorithm::RSA
    }
}

impl Signer for RsaSigner {
    fn sign(&self, message: &[u8]) -> Result<Vec<u8>, rustls::Error> {
        let result = match self.scheme {
            SignatureScheme::RSA_PKCS1_SHA384 => self.key.sign(Pkcs1v15Sign::new::<Sha384>(), &Sha384::digest(message)),
            SignatureScheme::RSA_PKCS1_SHA512 => self.key.sign(Pkcs1v15Sign::new::<Sha512>(), &Sha512::digest(message)),
            _ => self.key.sign(Pkcs1v15Sign::new::<Sha256>(), &Sha256::digest(message)),
        };
        result.map_err(|e| rustls::Error::General(e.to_string()))
    }

    fn scheme(&self) -> SignatureScheme {
        self.scheme
    }
}

#[derive(Debug)]
struct FixedCert(Arc<CertifiedKey>);

impl ResolvesServerCert for FixedCert {
    fn resolve(&self, _hello: RustlsHello<'_>) -> Option<Arc<CertifiedKey>> {
        Some(self.0.clone())
    }
}

/// TLS 1.2 only: the signer speaks PKCS#1 v1.5, which TLS 1.3 forbids.
pub fn server_config(fixture: &CertFixture) -> Result<Arc<ServerConfig>, rustls::Error> {
    let chain: Vec<CertificateDer<'static>> = fixture.chain.iter().map(|c| CertificateDer::from(c.clone())).collect();
    let key = Arc::new(RsaSigningKey(Arc::new(fixture.key.clone())));
    let certified = Arc::new(CertifiedKey::new(chain, key));
    let config = ServerConfig::builder_with_provider(Arc::new(rustls::crypto::ring::default_provider()))
        .with_protocol_versions(&[&rustls::version::TLS12])?
        .with_no_client_auth()
        .with_cert_resolver(Arc::new(FixedCert(certified)));
    Ok(Arc::new(config))
}

/// Serves one HTTPS connection. Returns a short summary for the access log.
pub fn handle(
    mut tcp: TcpStream,
    config: &TestbedConfig,
    tls_config: &Arc<ServerConfig>,
    https_port: u16,
) -> io::Result<String> {
    let first = match read_first_handshake(&mut tcp)? {
        RecordRead::Handshake(h) if h.kind == HANDSHAKE_CLIENT_HELLO => h,
        RecordRead::Handshake(h) => return Ok(format!("unexpected handshake type {}", h.kind)),
        RecordRead::Alert { description, .. } => return Ok(format!("client alert {description}")),
        RecordRead::Closed => return Ok("closed before hello".into()),
    };
    let hello = ClientHello::parse_body(first.record_version, &first.body)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
    let summary = format!("ClientHello {} with {} suites", hello.client_version.name(), hello.suites.len());
    match decide(&hello, config) {
        HelloDecision::Accept { version, suite } => {
            let sh = ServerHello { version, random: rand::random(), suite };
            tcp.write_all(&sh.encode(version))?;
            let _ = tcp.shutdown(Shutdown::Both);
            Ok(format!("{summary}: canned ServerHello {} {suite:#06x}", version.name()))
        }
        HelloDecision::Reject { description } => {
            tcp.write_all(&alert(hello.record_version, description))?;
            let _ = tcp.shutdown(Shutdown::Both);
            Ok(format!("{summary}: alert {description}"))
        }
        HelloDecision::Handshake => {
            let mut conn = ServerConnection::new(tls_config.clone()).map_err(io::Error::other)?;
            conn.read_tls(&mut Cursor::new(&first.raw))?;
            conn.process_new_packets().map_err(io::Error::other)?;
            let mut stream = StreamOwned::new(conn, tcp);
            let served = match crate::web::read_request(&mut stream)? {
                Some(req) => {
                    let resp = crate::web::respond(&req, config, true, https_port);
                    resp.write_to(&mut stream)?;
                    format!("{summary}: {} {} -> {}", req.method, req.path, resp.status)
                }
                None => format!("{summary}: session without request"),
            };
            stream.conn.send_close_notify();
            let _ = stream.conn.complete_io(&mut stream.sock);
            let _ = stream.sock.shutdown(Shutdown::Both);
            Ok(served)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pciscan::tls::handshake::{tls10_hello, weak_cipher_hello};

    #[test]
    fn legacy_hello_follows_toggle_18() {
        let h = tls10_hello(Some("localhost"));
        assert!(matches!(decide(&h, &TestbedConfig::new()), HelloDecision::Reject { description: 70 }));
        match decide(&h, &TestbedConfig::only(TestCase::Tls10Supported)) {
            HelloDecision::Accept { version, suite } => {
                assert_eq!(version, ProtocolVersion::TLS10);
                assert!(h.suites.contains(&suite));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn weak_hello_follows_toggle_13() {
        let h = weak_cipher_hello(Some("localhost"), false);
        assert!(matches!(decide(&h, &TestbedConfig::new()), HelloDecision::Reject { description: 40 }));
        let d = decide(&h, &TestbedConfig::only(TestCase::WeakCipherSupported));
        assert!(matches!(d, HelloDecision::Accept { suite, .. } if WEAK_SUITES.contains(&suite)));
    }

    #[test]
    fn modern_hello_goes_to_the_stack() {
        let h = ClientHello::new(ProtocolVersion::TLS12, vec![0xc02f, 0x000a, 0x00ff], None);
        assert_eq!(decide(&h, &TestbedConfig::only(TestCase::WeakCipherSupported)), HelloDecision::Handshake);
    }
}
