//! Inspection-only TLS client: completes a handshake without trusting the
//! peer so the leaf certificate can be examined.

use std::io;
use std::net::{IpAddr, Shutdown, SocketAddr, TcpStream};
use std::sync::{Arc, OnceLock};

use rustls::client::danger::{HandshakeSignatureValid, ServerCertVerified, ServerCertVerifier};
use rustls::pki_types::{CertificateDer, ServerName, UnixTime};
use rustls::{ClientConfig, ClientConnection, DigitallySignedStruct, SignatureScheme, StreamOwned};

use crate::error::WireError;
use crate::net::tcp::{connect, ConnectFailure};
use crate::net::Timeouts;

use super::cert::{parse_certificate, CertificateSummary};

pub type TlsStream = StreamOwned<ClientConnection, TcpStream>;

#[derive(Debug)]
struct InspectOnly(Arc<rustls::crypto::CryptoProvider>);

impl ServerCertVerifier for InspectOnly {
    fn verify_server_cert(
        &self,
        _end_entity: &CertificateDer<'_>,
        _intermediates: &[CertificateDer<'_>],
        _server_name: &ServerName<'_>,
        _ocsp_response: &[u8],
        _now: UnixTime,
    ) -> Result<ServerCertVerified, rustls::Error> {
        Ok(ServerCertVerified::assertion())
    }

    fn verify_tls12_signature(
        &self,
        _message: &[u8],
        _cert: &CertificateDer<'_>,
        _dss: &DigitallySignedStruct,
    ) -> Result<HandshakeSignatureValid, rustls::Error> {
        Ok(HandshakeSignatureValid::assertion())
    }

    fn verify_tls13_signature(
        &self,
        _message: &[u8],
        _cert: &CertificateDer<'_>,
        _dss: &DigitallySignedStruct,
    ) -> Result<HandshakeSignatureValid, rustls::Error> {
        Ok(HandshakeSignatureValid::assertion())
    }

    fn supported_verify_schemes(&self) -> Vec<SignatureScheme> {
        self.0.signature_verification_algorithms.supported_schemes()
    }
}

fn client_config() -> Arc<ClientConfig> {
    static CONFIG: OnceLock<Arc<ClientConfig>> = OnceLock::new();
    CONFIG
        .get_or_init(|| {
            let provider = Arc::new(rustls::crypto::ring::default_provider());
            let config = ClientConfig::builder_with_provider(provider.clone())
                .with_safe_default_protocol_versions()
                .expect("ring supports the default protocol versions")
                .dangerous()
                .with_custom_certificate_verifier(Arc::new(InspectOnly(provider)))
                .with_no_client_auth();
            Arc::new(config)
        })
        .clone()
}

/// SNI name for `host`; IP literals (and names rustls will not accept) fall
/// back to the address, which sends no SNI.
fn server_name(host: &str, ip: IpAddr) -> ServerName<'static> {
    if let Ok(ip) = host.parse::<IpAddr>() {
        return ServerName::IpAddress(ip.into());
    }
    ServerName::try_from(host.to_string()).unwrap_or(ServerName::IpAddress(ip.into()))
}

/// Drives the handshake to completion on an already connected socket.
pub fn establish(mut tcp: TcpStream, host: &str, timeouts: Timeouts) -> Result<TlsStream, String> {
    let ip = tcp.peer_addr().map(|a| a.ip()).map_err(|e| e.to_string())?;
    let _ = tcp.set_read_timeout(Some(timeouts.read));
    let _ = tcp.set_write_timeout(Some(timeouts.read));
    let mut conn = ClientConnection::new(client_config(), server_name(host, ip)).map_err(|e| e.to_string())?;
    while conn.is_handshaking() {
        if let Err(e) = conn.complete_io(&mut tcp) {
            let _ = tcp.shutdown(Shutdown::Both);
            return Err(describe_io(e));
        }
    }
    Ok(StreamOwned::new(conn, tcp))
}

fn describe_io(e: io::Error) -> String {
    match e.kind() {
        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => "handshake timed out".into(),
        io::ErrorKind::UnexpectedEof => "peer closed during handshake".into(),
        _ => format!("handshake failed: {e}"),
    }
}

pub fn leaf_certificate(stream: &TlsStream) -> Option<Vec<u8>> {
    stream.conn.peer_certificates()?.first().map(|c| c.as_ref().to_vec())
}

#[derive(Debug)]
pub enum CertFetchError {
    NoListener(ConnectFailure),
    Handshake(String),
    NoCertificate,
    Parse(WireError),
}

impl std::fmt::Display for CertFetchError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CertFetchError::NoListener(c) => write!(f, "no TLS listener ({:?})", c.state()),
            CertFetchError::Handshake(e) => write!(f, "{e}"),
            CertFetchError::NoCertificate => write!(f, "server presented no certificate"),
            CertFetchError::Parse(e) => write!(f, "unparseable certificate: {e}"),
        }
    }
}

/// Summarises the certificate presented by an established session.
pub fn summarize_peer(stream: &TlsStream) -> Result<(CertificateSummary, Vec<u8>), CertFetchError> {
    let der = leaf_certificate(stream).ok_or(CertFetchError::NoCertificate)?;
    let summary = parse_certificate(&der).map_err(CertFetchError::Parse)?;
    Ok((summary, der))
}

/// One handshake on a fresh connection, returning the parsed leaf.
pub fn fetch_leaf_certificate(
    ip: IpAddr,
    host: &str,
    port: u16,
    timeouts: Timeouts,
) -> Result<CertificateSummary, CertFetchError> {
    let tcp = connect(SocketAddr::new(ip, port), timeouts.connect).map_err(CertFetchError::NoListener)?;
    let mut stream = establish(tcp, host, timeouts).map_err(CertFetchError::Handshake)?;
    let result = summarize_peer(&stream).map(|(s, _)| s);
    stream.conn.send_close_notify();
    let _ = stream.conn.complete_io(&mut stream.sock);
    let _ = stream.sock.shutdown(Shutdown::Both);
    result
}
