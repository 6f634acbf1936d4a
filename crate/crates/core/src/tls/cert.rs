//! Leaf-certificate facts and the five certificate rules.
//!
//! All five rules read one [`CertificateSummary`], which is extracted once
//! from the certificate delivered during a single handshake.

use chrono::{DateTime, TimeZone, Utc};
use rsa::pkcs8::DecodePublicKey;
use rsa::{Pkcs1v15Sign, RsaPublicKey};
use sha2::{Digest, Sha256};
use x509_parser::der_parser::der::parse_der_integer;
use x509_parser::prelude::*;

use crate::error::WireError;
use crate::model::Outcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KeyFamily {
    /// RSA and DSA keys, sized by their modulus.
    FactoringModulus,
    /// Diffie-Hellman keys.
    DiscreteLog,
    EllipticCurve,
}

impl KeyFamily {
    pub fn min_bits(self) -> u32 {
        match self {
            KeyFamily::FactoringModulus => 2048,
            KeyFamily::DiscreteLog => 224,
            KeyFamily::EllipticCurve => 224,
        }
    }
}

/// Result of verifying the certificate signature under its own key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SelfSignature {
    Valid,
    Invalid,
    Unsupported(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CertificateSummary {
    pub subject_cn: String,
    pub san_dns_names: Vec<String>,
    pub not_before: DateTime<Utc>,
    pub not_after: DateTime<Utc>,
    pub key_family: Option<KeyFamily>,
    /// Modulus bits for RSA/DSA/DH, curve size for EC keys.
    pub key_bits: u32,
    /// Bits of the subgroup order, when a Diffie-Hellman key publishes one.
    pub group_order_bits: Option<u32>,
    pub signature_hash: String,
    pub self_signature: SelfSignature,
    pub issuer_equals_subject: bool,
    /// SHA-256 over the DER encoding, lowercase hex.
    pub fingerprint: String,
}

impl CertificateSummary {
    pub fn self_signature_valid(&self) -> bool {
        self.self_signature == SelfSignature::Valid
    }
}

pub fn parse_certificate(der: &[u8]) -> Result<CertificateSummary, WireError> {
    let (_, x) = X509Certificate::from_der(der)
        .map_err(|e| WireError::Invalid(format!("certificate: {e}")))?;

    let subject_cn = x
        .subject()
        .iter_common_name()
        .next()
        .and_then(|a| a.as_str().ok())
        .unwrap_or("")
        .to_string();
    let mut san_dns_names = Vec::new();
    if let Ok(Some(san)) = x.subject_alternative_name() {
        for name in &san.value.general_names {
            if let GeneralName::DNSName(n) = name {
                san_dns_names.push(n.to_string());
            }
        }
    }
    let not_before = timestamp(x.validity().not_before.timestamp())?;
    let not_after = timestamp(x.validity().not_after.timestamp())?;

    let (key_family, key_bits, group_order_bits) = key_facts(x.public_key());
    if key_bits == 0 {
        return Err(WireError::Invalid("public key size unknown".into()));
    }
    let signature_hash = signature_hash_name(&x.signature_algorithm);

    let self_signature = verify_own_signature(&x);
    Ok(CertificateSummary {
        subject_cn,
        san_dns_names,
        not_before,
        not_after,
        key_family,
        key_bits,
        group_order_bits,
        signature_hash,
        self_signature,
        issuer_equals_subject: x.issuer().as_raw() == x.subject().as_raw(),
        fingerprint: hex::encode(Sha256::digest(der)),
    })
}

fn timestamp(secs: i64) -> Result<DateTime<Utc>, WireError> {
    Utc.timestamp_opt(secs, 0)
        .single()
        .ok_or_else(|| WireError::Invalid("validity timestamp out of range".into()))
}

const OID_RSA: &str = "1.2.840.113549.1.1.1";
const OID_EC: &str = "1.2.840.10045.2.1";
const OID_DSA: &str = "1.2.840.10040.4.1";
const OID_DH: &str = "1.2.840.10046.2.1";
const OID_ED25519: &str = "1.3.101.112";
const OID_ED448: &str = "1.3.101.113";

fn key_facts(spki: &SubjectPublicKeyInfo<'_>) -> (Option<KeyFamily>, u32, Option<u32>) {
    let alg = spki.algorithm.algorithm.to_id_string();
    let params = spki.algorithm.parameters.as_ref().map(|p| p.data).unwrap_or(&[]);
    match alg.as_str() {
        OID_RSA => {
            let bits = spki.parsed().map(|k| k.key_size()).unwrap_or(0) as u32;
            (Some(KeyFamily::FactoringModulus), bits, None)
        }
        OID_DSA => {
            // Dss-Parms ::= SEQUENCE { p, q, g }
            let ints = der_integers(params);
            let bits = ints.first().copied().unwrap_or(0);
            (Some(KeyFamily::FactoringModulus), bits, None)
        }
        OID_DH => {
            // DomainParameters ::= SEQUENCE { p, g, q, ... }
            let ints = der_integers(params);
            let bits = ints.first().copied().unwrap_or(0);
            (Some(KeyFamily::DiscreteLog), bits, ints.get(2).copied())
        }
        OID_EC => {
            let curve = spki
                .algorithm
                .parameters
                .as_ref()
                .and_then(|p| p.as_oid().ok())
                .map(|o| o.to_id_string());
            let bits = match curve.as_deref() {
                Some("1.2.840.10045.3.1.7") => 256,
                Some("1.3.132.0.34") => 384,
                Some("1.3.132.0.35") => 521,
                Some("1.3.132.0.33") => 224,
                Some("1.2.840.10045.3.1.1") => 192,
                _ => spki.parsed().map(|k| k.key_size()).unwrap_or(0) as u32,
            };
            (Some(KeyFamily::EllipticCurve), bits, None)
        }
        OID_ED25519 => (Some(KeyFamily::EllipticCurve), 256, None),
        OID_ED448 => (Some(KeyFamily::EllipticCurve), 448, None),
        _ => (None, spki.parsed().map(|k| k.key_size()).unwrap_or(0) as u32, None),
    }
}

fn der_integers(mut content: &[u8]) -> Vec<u32> {
    let mut out = Vec::new();
    while let Ok((rest, obj)) = parse_der_integer(content) {
        match obj.as_slice() {
            Ok(bytes) => out.push(integer_bits(bytes)),
            Err(_) => break,
        }
        content = rest;
    }
    out
}

fn integer_bits(bytes: &[u8]) -> u32 {
    let trimmed: &[u8] = match bytes.iter().position(|&b| b != 0) {
        Some(i) => &bytes[i..],
        None => return 0,
    };
    (trimmed.len() as u32 - 1) * 8 + (8 - trimmed[0].leading_zeros())
}

fn hash_name_for_oid(oid: &str) -> Option<&'static str> {
    Some(match oid {
        "1.3.14.3.2.26" => "SHA1",
        "2.16.840.1.101.3.4.2.4" => "SHA224",
        "2.16.840.1.101.3.4.2.1" => "SHA256",
        "2.16.840.1.101.3.4.2.2" => "SHA384",
        "2.16.840.1.101.3.4.2.3" => "SHA512",
        "1.2.840.113549.2.5" => "MD5",
        _ => return None,
    })
}

/// Hash named by a certificate signature algorithm identifier.
fn signature_hash_name(alg: &AlgorithmIdentifier<'_>) -> String {
    let oid = alg.algorithm.to_id_string();
    let name = match oid.as_str() {
        "1.2.840.113549.1.1.2" => "MD2",
        "1.2.840.113549.1.1.3" => "MD4",
        "1.2.840.113549.1.1.4" => "MD5",
        "1.2.840.113549.1.1.5" | "1.3.14.3.2.29" => "SHA1",
        "1.2.840.113549.1.1.14" => "SHA224",
        "1.2.840.113549.1.1.11" => "SHA256",
        "1.2.840.113549.1.1.12" => "SHA384",
        "1.2.840.113549.1.1.13" => "SHA512",
        "1.2.840.10045.4.1" | "1.2.840.10040.4.3" => "SHA1",
        "1.2.840.10045.4.3.1" | "2.16.840.1.101.3.4.3.1" => "SHA224",
        "1.2.840.10045.4.3.2" | "2.16.840.1.101.3.4.3.2" => "SHA256",
        "1.2.840.10045.4.3.3" => "SHA384",
        "1.2.840.10045.4.3.4" => "SHA512",
        OID_ED25519 => "Ed25519",
        OID_ED448 => "Ed448",
        "1.2.840.113549.1.1.10" => {
            return match x509_parser::signature_algorithm::SignatureAlgorithm::try_from(alg) {
                Ok(x509_parser::signature_algorithm::SignatureAlgorithm::RSASSA_PSS(p)) => {
                    let h = p.hash_algorithm_oid().to_id_string();
                    hash_name_for_oid(&h).map(str::to_string).unwrap_or(h)
                }
                _ => "RSASSA-PSS".to_string(),
            }
        }
        _ => return oid,
    };
    name.to_string()
}

fn verify_own_signature(x: &X509Certificate<'_>) -> SelfSignature {
    let tbs = x.tbs_certificate.as_ref();
    let sig = x.signature_value.data.as_ref();
    let key_alg = x.public_key().algorithm.algorithm.to_id_string();
    let sig_oid = x.signature_algorithm.algorithm.to_id_string();
    let spki = x.public_key().raw;

    let rsa_scheme = match sig_oid.as_str() {
        "1.2.840.113549.1.1.4" => Some(("MD5", Pkcs1v15Sign::new::<md5::Md5>(), md5::Md5::digest(tbs).to_vec())),
        "1.2.840.113549.1.1.5" => Some(("SHA1", Pkcs1v15Sign::new::<sha1::Sha1>(), sha1::Sha1::digest(tbs).to_vec())),
        "1.2.840.113549.1.1.14" => Some(("SHA224", Pkcs1v15Sign::new::<sha2::Sha224>(), sha2::Sha224::digest(tbs).to_vec())),
        "1.2.840.113549.1.1.11" => Some(("SHA256", Pkcs1v15Sign::new::<Sha256>(), Sha256::digest(tbs).to_vec())),
        "1.2.840.113549.1.1.12" => Some(("SHA384", Pkcs1v15Sign::new::<sha2::Sha384>(), sha2::Sha384::digest(tbs).to_vec())),
        "1.2.840.113549.1.1.13" => Some(("SHA512", Pkcs1v15Sign::new::<sha2::Sha512>(), sha2::Sha512::digest(tbs).to_vec())),
        _ => None,
    };
    if let Some((_, scheme, hashed)) = rsa_scheme {
        if key_alg != OID_RSA {
            // RSA signature but not an RSA key: cannot be its own signer.
            return SelfSignature::Invalid;
        }
        return match RsaPublicKey::from_public_key_der(spki) {
            Ok(pk) => match pk.verify(scheme, &hashed, sig) {
                Ok(()) => SelfSignature::Valid,
                Err(_) => SelfSignature::Invalid,
            },
            Err(e) => SelfSignature::Unsupported(format!("RSA key: {e}")),
        };
    }

    match sig_oid.as_str() {
        "1.2.840.10045.4.3.2" | "1.2.840.10045.4.3.3" => {
            if key_alg != OID_EC {
                return SelfSignature::Invalid;
            }
            verify_ecdsa(&sig_oid, spki, tbs, sig)
        }
        other => SelfSignature::Unsupported(format!("signature algorithm {other}")),
    }
}

fn verify_ecdsa(sig_oid: &str, spki: &[u8], tbs: &[u8], sig: &[u8]) -> SelfSignature {
    use p256::ecdsa::signature::Verifier;
    let p256_key = p256::ecdsa::VerifyingKey::from_public_key_der(spki);
    let p384_key = p384::ecdsa::VerifyingKey::from_public_key_der(spki);
    let ok = match (sig_oid, p256_key, p384_key) {
        ("1.2.840.10045.4.3.2", Ok(k), _) => p256::ecdsa::Signature::from_der(sig)
            .map(|s| k.verify(tbs, &s).is_ok())
            .unwrap_or(false),
        ("1.2.840.10045.4.3.3", _, Ok(k)) => p384::ecdsa::Signature::from_der(sig)
            .map(|s| k.verify(tbs, &s).is_ok())
            .unwrap_or(false),
        ("1.2.840.10045.4.3.2", _, Ok(_)) | ("1.2.840.10045.4.3.3", Ok(_), _) => {
            return SelfSignature::Unsupported("ECDSA curve/hash pairing".into())
        }
        _ => return SelfSignature::Unsupported("ECDSA curve".into()),
    };
    if ok {
        SelfSignature::Valid
    } else {
        SelfSignature::Invalid
    }
}

/// Self-signed rule: the certificate's own public key verifies its
/// signature. Issuer/subject equality is reported but never decisive.
pub fn check_self_signed(cert: &CertificateSummary) -> Outcome {
    let corroboration = if cert.issuer_equals_subject { "issuer equals subject" } else { "issuer differs from subject" };
    match &cert.self_signature {
        SelfSignature::Valid => Outcome::vulnerable(format!(
            "signature verifies under the certificate's own key ({corroboration}); sha256 {}",
            cert.fingerprint
        )),
        SelfSignature::Invalid => Outcome::clean(format!("not self-signed ({corroboration})")),
        SelfSignature::Unsupported(why) => Outcome::inconclusive(format!("cannot verify: {why}")),
    }
}

/// Validity rule: outside `[not_before, not_after]` is a failure either way.
pub fn check_expiry(cert: &CertificateSummary, now: DateTime<Utc>) -> Outcome {
    if now > cert.not_after {
        Outcome::vulnerable(format!("expired at {}", cert.not_after.to_rfc3339()))
    } else if now < cert.not_before {
        Outcome::vulnerable(format!("not valid before {}", cert.not_before.to_rfc3339()))
    } else {
        Outcome::clean(format!("valid until {}", cert.not_after.to_rfc3339()))
    }
}

/// Case-insensitive exact match, or a leading `*.` wildcard standing for
/// exactly one non-empty label.
pub fn hostname_matches(pattern: &str, host: &str) -> bool {
    let pattern = pattern.trim_end_matches('.').to_ascii_lowercase();
    let host = host.trim_end_matches('.').to_ascii_lowercase();
    if pattern.is_empty() || host.is_empty() {
        return false;
    }
    match pattern.strip_prefix("*.") {
        Some(base) => match host.split_once('.') {
            Some((label, rest)) => !label.is_empty() && !base.is_empty() && rest == base,
            None => false,
        },
        None => pattern == host,
    }
}

pub fn check_hostname(cert: &CertificateSummary, host: &str) -> Outcome {
    let mut names: Vec<&str> = cert.san_dns_names.iter().map(String::as_str).collect();
    if !cert.subject_cn.is_empty() {
        names.push(&cert.subject_cn);
    }
    if names.is_empty() {
        return Outcome::vulnerable("no names in certificate");
    }
    match names.iter().find(|n| hostname_matches(n, host)) {
        Some(n) => Outcome::clean(format!("{host} matches {n}")),
        None => Outcome::vulnerable(format!("{host} not covered by [{}]", names.join(", "))),
    }
}

pub fn check_key_strength(cert: &CertificateSummary) -> Outcome {
    let Some(family) = cert.key_family else {
        return Outcome::inconclusive(format!("unknown key family ({} bits)", cert.key_bits));
    };
    if family == KeyFamily::DiscreteLog {
        // Subgroup order against 224 when published, else modulus against 2048.
        return match cert.group_order_bits {
            Some(q) if q < 224 => Outcome::vulnerable(format!("DH group order {q} bits < 224 (order reading)")),
            Some(q) => Outcome::clean(format!("DH group order {q} bits >= 224 (order reading)")),
            None if cert.key_bits < 2048 => Outcome::vulnerable(format!(
                "DH modulus {} bits < 2048 (modulus reading; no group order published)",
                cert.key_bits
            )),
            None => Outcome::clean(format!(
                "DH modulus {} bits >= 2048 (modulus reading; no group order published)",
                cert.key_bits
            )),
        };
    }
    let min = family.min_bits();
    if cert.key_bits < min {
        Outcome::vulnerable(format!("{family:?} key of {} bits < {min}", cert.key_bits))
    } else {
        Outcome::clean(format!("{family:?} key of {} bits", cert.key_bits))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HashStrength {
    Weak,
    Acceptable,
}

/// Classifies a signature hash name; spellings of SHA-1 all count as one.
pub fn classify_hash_name(name: &str) -> Option<HashStrength> {
    let n: String = name.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_uppercase();
    match n.as_str() {
        "MD5" | "SHA" | "SHA1" => Some(HashStrength::Weak),
        "SHA224" | "SHA256" | "SHA384" | "SHA512" | "SHA3224" | "SHA3256" | "SHA3384" | "SHA3512"
        | "ED25519" | "ED448" => Some(HashStrength::Acceptable),
        _ => None,
    }
}

pub fn check_signature_hash(cert: &CertificateSummary) -> Outcome {
    match classify_hash_name(&cert.signature_hash) {
        Some(HashStrength::Weak) => Outcome::vulnerable(format!("signed with {}", cert.signature_hash)),
        Some(HashStrength::Acceptable) => Outcome::clean(format!("signed with {}", cert.signature_hash)),
        None => Outcome::inconclusive(format!("unrecognised signature hash {}", cert.signature_hash)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FindingStatus;
    use chrono::Duration;
    use proptest::prelude::*;

    fn summary() -> CertificateSummary {
        let now = Utc::now();
        CertificateSummary {
            subject_cn: "example.com".into(),
            san_dns_names: vec!["example.com".into()],
            not_before: now - Duration::days(1),
            not_after: now + Duration::days(30),
            key_family: Some(KeyFamily::FactoringModulus),
            key_bits: 2048,
            group_order_bits: None,
            signature_hash: "SHA256".into(),
            self_signature: SelfSignature::Invalid,
            issuer_equals_subject: false,
            fingerprint: "00".into(),
        }
    }

    #[test]
    fn expiry_window() {
        let c = summary();
        let now = Utc::now();
        assert_eq!(check_expiry(&c, now).status, FindingStatus::Clean);
        let past = CertificateSummary { not_after: now - Duration::seconds(1), ..summary() };
        assert_eq!(check_expiry(&past, now).status, FindingStatus::Vulnerable);
        let future = CertificateSummary { not_before: now + Duration::days(1), ..summary() };
        assert_eq!(check_expiry(&future, now).status, FindingStatus::Vulnerable);
    }

    #[test]
    fn hostname_examples() {
        let wild = CertificateSummary { subject_cn: String::new(), san_dns_names: vec!["*.example.com".into()], ..summary() };
        assert_eq!(check_hostname(&wild, "shop.example.com").status, FindingStatus::Clean);
        assert_eq!(check_hostname(&wild, "example.com").status, FindingStatus::Vulnerable);
        assert_eq!(check_hostname(&wild, "a.b.example.com").status, FindingStatus::Vulnerable);
        let other = CertificateSummary { subject_cn: "*.n-other.com".into(), san_dns_names: vec!["*.n-other.com".into()], ..summary() };
        assert_eq!(check_hostname(&other, "a-shop.com").status, FindingStatus::Vulnerable);
        assert_eq!(check_hostname(&summary(), "EXAMPLE.com").status, FindingStatus::Clean);
        let none = CertificateSummary { subject_cn: String::new(), san_dns_names: vec![], ..summary() };
        let o = check_hostname(&none, "example.com");
        assert_eq!((o.status, o.evidence.as_str()), (FindingStatus::Vulnerable, "no names in certificate"));
    }

    #[test]
    fn key_strength_examples() {
        let weak = CertificateSummary { key_bits: 1024, ..summary() };
        assert_eq!(check_key_strength(&weak).status, FindingStatus::Vulnerable);
        assert_eq!(check_key_strength(&summary()).status, FindingStatus::Clean);
        let ec = CertificateSummary { key_family: Some(KeyFamily::EllipticCurve), key_bits: 256, ..summary() };
        assert_eq!(check_key_strength(&ec).status, FindingStatus::Clean);
        let ec_small = CertificateSummary { key_family: Some(KeyFamily::EllipticCurve), key_bits: 192, ..summary() };
        assert_eq!(check_key_strength(&ec_small).status, FindingStatus::Vulnerable);
        let unknown = CertificateSummary { key_family: None, ..summary() };
        assert_eq!(check_key_strength(&unknown).status, FindingStatus::Inconclusive);
    }

    #[test]
    fn discrete_log_reports_which_reading_fired() {
        let order = CertificateSummary { key_family: Some(KeyFamily::DiscreteLog), key_bits: 2048, group_order_bits: Some(160), ..summary() };
        let o = check_key_strength(&order);
        assert_eq!(o.status, FindingStatus::Vulnerable);
        assert!(o.evidence.contains("order reading"));
        let modulus = CertificateSummary { key_family: Some(KeyFamily::DiscreteLog), key_bits: 1024, group_order_bits: None, ..summary() };
        let o = check_key_strength(&modulus);
        assert_eq!(o.status, FindingStatus::Vulnerable);
        assert!(o.evidence.contains("modulus reading"));
    }

    #[test]
    fn signature_hash_examples() {
        for (name, status) in [
            ("SHA1", FindingStatus::Vulnerable),
            ("SHA-1", FindingStatus::Vulnerable),
            ("sha", FindingStatus::Vulnerable),
            ("MD5", FindingStatus::Vulnerable),
            ("SHA256", FindingStatus::Clean),
            ("GOST", FindingStatus::Inconclusive),
        ] {
            let c = CertificateSummary { signature_hash: name.into(), ..summary() };
            assert_eq!(check_signature_hash(&c).status, status, "{name}");
        }
    }

    #[test]
    fn self_signed_rule_follows_verification() {
        let c = CertificateSummary { self_signature: SelfSignature::Valid, issuer_equals_subject: true, ..summary() };
        assert_eq!(check_self_signed(&c).status, FindingStatus::Vulnerable);
        assert_eq!(check_self_signed(&summary()).status, FindingStatus::Clean);
        let u = CertificateSummary { self_signature: SelfSignature::Unsupported("x".into()), ..summary() };
        assert_eq!(check_self_signed(&u).status, FindingStatus::Inconclusive);
    }

    #[test]
    fn integer_bit_lengths() {
        assert_eq!(integer_bits(&[0x00, 0x80]), 8);
        assert_eq!(integer_bits(&[0x01, 0x00]), 9);
        assert_eq!(integer_bits(&[0x00]), 0);
    }

    proptest! {
        #[test]
        fn wildcard_covers_exactly_one_label(
            base in proptest::collection::vec("[a-z][a-z0-9]{0,6}", 1..4),
            extra in proptest::collection::vec("[a-z][a-z0-9]{0,6}", 0..4),
        ) {
            let base = base.join(".");
            let pattern = format!("*.{base}");
            let host = if extra.is_empty() { base.clone() } else { format!("{}.{base}", extra.join(".")) };
            prop_assert_eq!(hostname_matches(&pattern, &host), extra.len() == 1);
            prop_assert!(!hostname_matches(&pattern, &base));
        }

        #[test]
        fn expiry_is_monotone_in_time(offset in 0i64..10_000_000, later in 0i64..10_000_000) {
            let c = summary();
            let t = c.not_after + Duration::seconds(offset + 1);
            prop_assert_eq!(check_expiry(&c, t).status, FindingStatus::Vulnerable);
            prop_assert_eq!(check_expiry(&c, t + Duration::seconds(later)).status, FindingStatus::Vulnerable);
        }
    }
}
