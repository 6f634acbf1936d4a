//! Leaf certificate fixtures carrying a chosen set of defects.
//!
//! Keys are bundled PEM files so fixture generation needs no key search.
//! The test CA certificate is rebuilt from the bundled CA key on demand.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, SystemTime};

use chrono::{DateTime, Utc};
use pciscan::TestCase;
use rsa::pkcs8::{DecodePrivateKey, EncodePublicKey};
use rsa::RsaPrivateKey;
use x509_cert::builder::{Builder, CertificateBuilder, Profile};
use x509_cert::der::asn1::Ia5String;
use x509_cert::der::{Decode, Encode};
use x509_cert::ext::pkix::name::GeneralName;
use x509_cert::ext::pkix::SubjectAltName;
use x509_cert::name::Name;
use x509_cert::serial_number::SerialNumber;
use x509_cert::spki::SubjectPublicKeyInfoOwned;
use x509_cert::time::{Time, Validity};

const CA_KEY_PEM: &str = include_str!("../fixtures/ca_key.pem");
const LEAF_KEY_PEM: &str = include_str!("../fixtures/leaf_key.pem");
const WEAK_LEAF_KEY_PEM: &str = include_str!("../fixtures/weak_leaf_key.pem");

pub const CA_SUBJECT: &str = "CN=BuggyLite Test CA,O=BuggyLite";
pub const GOOD_SAN: &str = "localhost";
pub const WRONG_SAN: &str = "wrong.invalid";

const DAY: Duration = Duration::from_secs(86_400);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CertDefect {
    SelfSigned,
    Expired,
    WrongHost,
    WeakKey,
    WeakHash,
}

impl CertDefect {
    pub const ALL: [CertDefect; 5] =
        [CertDefect::SelfSigned, CertDefect::Expired, CertDefect::WrongHost, CertDefect::WeakKey, CertDefect::WeakHash];

    /// The scanner case this defect should trip.
    pub fn case(self) -> TestCase {
        match self {
            CertDefect::SelfSigned => TestCase::SelfSignedCertificate,
            CertDefect::Expired => TestCase::ExpiredCertificate,
            CertDefect::WrongHost => TestCase::WrongHostname,
            CertDefect::WeakKey => TestCase::InsecureModulus,
            CertDefect::WeakHash => TestCase::WeakCertificateHash,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CertDefect::SelfSigned => "selfsigned",
            CertDefect::Expired => "expired",
            CertDefect::WrongHost => "wrong_host",
            CertDefect::WeakKey => "weak_key",
            CertDefect::WeakHash => "weak_hash",
        }
    }

    /// `good`, or defect names joined by `+`.
    pub fn parse_set(s: &str) -> Result<BTreeSet<CertDefect>, String> {
        if s.trim() == "good" {
            return Ok(BTreeSet::new());
        }
        s.split('+').map(|p| p.trim().parse()).collect()
    }

    pub fn format_set(set: &BTreeSet<CertDefect>) -> String {
        if set.is_empty() {
            return "good".into();
        }
        set.iter().map(|d| d.name()).collect::<Vec<_>>().join("+")
    }
}

impl FromStr for CertDefect {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        CertDefect::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| format!("unknown certificate fixture `{s}`"))
    }
}

impl fmt::Display for CertDefect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("certificate fixture: {0}")]
pub struct FixtureError(String);

fn err<E: fmt::Display>(e: E) -> FixtureError {
    FixtureError(e.to_string())
}

/// A served certificate chain plus the leaf's private key.
#[derive(Clone)]
pub struct CertFixture {
    pub defects: BTreeSet<CertDefect>,
    /// Leaf first; the CA certificate follows unless self-signed.
    pub chain: Vec<Vec<u8>>,
    pub key: RsaPrivateKey,
}

impl fmt::Debug for CertFixture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CertFixture").field("defects", &self.defects).field("chain_len", &self.chain.len()).finish()
    }
}

impl CertFixture {
    pub fn leaf_der(&self) -> &[u8] {
        &self.chain[0]
    }
}

fn load_key(pem: &str) -> Result<RsaPrivateKey, FixtureError> {
    RsaPrivateKey::from_pkcs8_pem(pem).map_err(err)
}

fn spki_of(key: &RsaPrivateKey) -> Result<SubjectPublicKeyInfoOwned, FixtureError> {
    let der = key.to_public_key().to_public_key_der().map_err(err)?;
    SubjectPublicKeyInfoOwned::from_der(der.as_bytes()).map_err(err)
}

fn time_at(t: SystemTime) -> Result<Time, FixtureError> {
    Time::try_from(t).map_err(err)
}

fn to_system(now: DateTime<Utc>) -> SystemTime {
    SystemTime::UNIX_EPOCH + Duration::from_secs(now.timestamp().max(0) as u64)
}

#[allow(clippy::too_many_arguments)]
fn build(
    profile: Profile,
    serial: u32,
    validity: Validity,
    subject: Name,
    spki: SubjectPublicKeyInfoOwned,
    san: Option<&str>,
    signer: &RsaPrivateKey,
    weak_hash: bool,
) -> Result<Vec<u8>, FixtureError> {
    macro_rules! sign_with {
        ($digest:ty) => {{
            let signing_key = rsa::pkcs1v15::SigningKey::<$digest>::new(signer.clone());
            let mut b = CertificateBuilder::new(profile, SerialNumber::from(serial), validity, subject, spki, &signing_key)
                .map_err(err)?;
            if let Some(name) = san {
                let ia5 = Ia5String::new(name).map_err(err)?;
                b.add_extension(&SubjectAltName(vec![GeneralName::DnsName(ia5)])).map_err(err)?;
            }
            b.build::<rsa::pkcs1v15::Signature>().map_err(err)?.to_der().map_err(err)
        }};
    }
    if weak_hash {
        sign_with!(sha1::Sha1)
    } else {
        sign_with!(sha2::Sha256)
    }
}

/// The bundled test CA's certificate, valid for ten years around `now`.
pub fn ca_certificate(now: DateTime<Utc>) -> Result<Vec<u8>, FixtureError> {
    let key = load_key(CA_KEY_PEM)?;
    let now = to_system(now);
    let validity = Validity { not_before: time_at(now - 365 * DAY)?, not_after: time_at(now + 3650 * DAY)? };
    let name = Name::from_str(CA_SUBJECT).map_err(err)?;
    build(Profile::Root, 1, validity, name, spki_of(&key)?, None, &key, false)
}

/// Builds a leaf with exactly `defects`:
///
/// - `expired`: not_after = now - 30 days
/// - `wrong_host`: SAN `wrong.invalid`
/// - `weak_key`: 1024-bit RSA
/// - `weak_hash`: SHA-1 signature
/// - `selfsigned`: self-issued and signed by its own key
///
/// Without defects the leaf is CA-signed, SAN `localhost`, 2048-bit RSA,
/// SHA-256, valid for one year.
pub fn generate_cert_fixture(defects: &BTreeSet<CertDefect>, now: DateTime<Utc>) -> Result<CertFixture, FixtureError> {
    let has = |d| defects.contains(&d);
    let key = load_key(if has(CertDefect::WeakKey) { WEAK_LEAF_KEY_PEM } else { LEAF_KEY_PEM })?;
    let sys_now = to_system(now);
    let validity = if has(CertDefect::Expired) {
        Validity { not_before: time_at(sys_now - 395 * DAY)?, not_after: time_at(sys_now - 30 * DAY)? }
    } else {
        Validity { not_before: time_at(sys_now - DAY)?, not_after: time_at(sys_now + 365 * DAY)? }
    };
    let san = if has(CertDefect::WrongHost) { WRONG_SAN } else { GOOD_SAN };
    // The CN carries the same name so the subject cannot rescue a bad SAN.
    let subject = Name::from_str(&format!("CN={san},O=BuggyLite")).map_err(err)?;
    let serial = 1000 + now.timestamp_subsec_micros();
    let weak_hash = has(CertDefect::WeakHash);
    let chain = if has(CertDefect::SelfSigned) {
        let profile = Profile::Manual { issuer: None };
        vec![build(profile, serial, validity, subject, spki_of(&key)?, Some(san), &key, weak_hash)?]
    } else {
        let ca_key = load_key(CA_KEY_PEM)?;
        let issuer = Name::from_str(CA_SUBJECT).map_err(err)?;
        let profile = Profile::Manual { issuer: Some(issuer) };
        let leaf = build(profile, serial, validity, subject, spki_of(&key)?, Some(san), &ca_key, weak_hash)?;
        vec![leaf, ca_certificate(now)?]
    };
    Ok(CertFixture { defects: defects.clone(), chain, key })
}
