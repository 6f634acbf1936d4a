//! TLS-layer rules: certificate retrieval and the five leaf checks, plus
//! the TLS 1.0 and weak-cipher negotiation probes.

pub mod cert;
pub mod client;
pub mod handshake;
pub mod wire;

pub use cert::{
    check_expiry, check_hostname, check_key_strength, check_self_signed, check_signature_hash,
    parse_certificate, CertificateSummary, KeyFamily, SelfSignature,
};
pub use client::fetch_leaf_certificate;
pub use handshake::{HandshakeOutcome, HandshakeProbeResult};

pub const DEFAULT_PORT: u16 = 443;
