//! SSH identification-line grabbing and OpenSSH version classification.

use std::io::{self, Read};
use std::net::{IpAddr, Shutdown, SocketAddr};

use crate::error::WireError;
use crate::model::Outcome;

use super::tcp::{connect, ConnectFailure};
use super::Timeouts;

pub const DEFAULT_PORT: u16 = 22;
/// First OpenSSH release not considered vulnerable.
pub const FIRST_SAFE_OPENSSH: (u32, u32) = (7, 6);
const MAX_LINE: usize = 255;
const MAX_PRELUDE_LINES: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpenSshVersion {
    pub major: u32,
    pub minor: u32,
    pub patch: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SshBanner {
    pub raw_line: String,
    /// `"OpenSSH"` or the raw software-version token of other products.
    pub software: String,
    /// Present only for OpenSSH banners whose `OpenSSH_X.Y` token parses.
    pub version: Option<OpenSshVersion>,
}

impl SshBanner {
    pub fn is_openssh(&self) -> bool {
        self.software == "OpenSSH"
    }
}

pub fn parse_banner(line: &str) -> Result<SshBanner, WireError> {
    let raw_line = line.trim_end_matches(['\r', '\n']).to_string();
    let rest = raw_line
        .strip_prefix("SSH-")
        .ok_or_else(|| WireError::Invalid("banner does not start with SSH-".into()))?;
    let (_proto, software_version) = rest
        .split_once('-')
        .ok_or_else(|| WireError::Invalid("banner lacks software version".into()))?;
    let token = software_version.split_whitespace().next().unwrap_or("");
    let (software, version) = match token.strip_prefix("OpenSSH_") {
        Some(v) => ("OpenSSH".to_string(), parse_openssh_version(v)),
        None => (token.to_string(), None),
    };
    Ok(SshBanner { raw_line, software, version })
}

fn parse_openssh_version(v: &str) -> Option<OpenSshVersion> {
    let (major, rest) = v.split_once('.')?;
    let major = major.parse().ok()?;
    let digits = rest.find(|c: char| !c.is_ascii_digit()).unwrap_or(rest.len());
    let minor = rest[..digits].parse().ok()?;
    let patch = (digits < rest.len()).then(|| rest[digits..].to_string());
    Some(OpenSshVersion { major, minor, patch })
}

/// Reads up to the first line starting with `SSH-`. Servers may send other
/// lines first; at most a handful are skipped. Nothing is written.
pub fn read_banner<R: Read>(r: &mut R) -> io::Result<Option<SshBanner>> {
    for _ in 0..MAX_PRELUDE_LINES {
        let Some(line) = read_line(r)? else {
            return Ok(None);
        };
        if line.starts_with("SSH-") {
            return Ok(parse_banner(&line).ok());
        }
    }
    Ok(None)
}

fn read_line<R: Read>(r: &mut R) -> io::Result<Option<String>> {
    let mut line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        match r.read(&mut byte) {
            Ok(0) => break,
            Ok(_) if byte[0] == b'\n' => break,
            Ok(_) => {
                line.push(byte[0]);
                if line.len() >= MAX_LINE {
                    break;
                }
            }
            Err(e) if line.is_empty() => {
                return match e.kind() {
                    io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => Ok(None),
                    _ => Err(e),
                }
            }
            Err(_) => break,
        }
    }
    if line.is_empty() {
        return Ok(None);
    }
    Ok(Some(String::from_utf8_lossy(&line).trim_end_matches('\r').to_string()))
}

pub fn is_vulnerable_version(major: u32, minor: u32) -> bool {
    (major, minor) < FIRST_SAFE_OPENSSH
}

/// Vulnerable-OpenSSH rule. Only `X.Y` is compared; the patch level and any
/// vendor suffix are ignored.
pub fn classify_ssh_version(banner: &SshBanner) -> Outcome {
    if !banner.is_openssh() {
        return Outcome::inconclusive(format!("not OpenSSH: {}", banner.raw_line));
    }
    match &banner.version {
        None => Outcome::inconclusive(format!("unparseable version: {}", banner.raw_line)),
        Some(v) if is_vulnerable_version(v.major, v.minor) => Outcome::vulnerable(format!(
            "OpenSSH {}.{} is older than 7.6: {}",
            v.major, v.minor, banner.raw_line
        )),
        Some(v) => Outcome::clean(format!("OpenSSH {}.{}", v.major, v.minor)),
    }
}

/// SSH-availability rule: any identification line counts.
pub fn availability_rule(banner: Option<&SshBanner>, port_open: bool) -> Outcome {
    match banner {
        Some(b) => Outcome::vulnerable(format!("banner: {}", b.raw_line)),
        None if port_open => Outcome::clean("port open but no SSH identification line"),
        None => Outcome::clean("SSH port not reachable"),
    }
}

pub fn version_rule(banner: Option<&SshBanner>) -> Outcome {
    match banner {
        Some(b) => classify_ssh_version(b),
        None => Outcome::inconclusive("no SSH banner"),
    }
}

/// Standalone banner grab on a fresh connection: connect, read one line,
/// close.
pub fn read_ssh_banner(
    ip: IpAddr,
    port: u16,
    timeouts: Timeouts,
) -> Result<Option<SshBanner>, ConnectFailure> {
    let mut stream = connect(SocketAddr::new(ip, port), timeouts.connect)?;
    let _ = stream.set_read_timeout(Some(timeouts.read));
    let banner = read_banner(&mut stream).unwrap_or(None);
    let _ = stream.shutdown(Shutdown::Both);
    Ok(banner)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FindingStatus;
    use proptest::prelude::*;
    use std::io::Cursor;

    fn openssh(major: u32, minor: u32) -> SshBanner {
        parse_banner(&format!("SSH-2.0-OpenSSH_{major}.{minor}")).unwrap()
    }

    #[test]
    fn parses_ubuntu_openssh_banner() {
        let b = parse_banner("SSH-2.0-OpenSSH_7.2p2 Ubuntu-4ubuntu2.8\r\n").unwrap();
        assert_eq!(b.raw_line, "SSH-2.0-OpenSSH_7.2p2 Ubuntu-4ubuntu2.8");
        assert_eq!(b.software, "OpenSSH");
        let v = b.version.unwrap();
        assert_eq!((v.major, v.minor, v.patch.as_deref()), (7, 2, Some("p2")));
    }

    #[test]
    fn non_openssh_has_no_version() {
        let b = parse_banner("SSH-2.0-libssh-0.9.0").unwrap();
        assert!(!b.is_openssh());
        assert_eq!(b.version, None);
        assert_eq!(classify_ssh_version(&b).status, FindingStatus::Inconclusive);
    }

    #[test]
    fn rejects_non_ssh_lines() {
        assert!(parse_banner("HTTP/1.1 400 Bad Request").is_err());
    }

    #[test]
    fn classification_examples() {
        let b = parse_banner("SSH-2.0-OpenSSH_7.2p2 Ubuntu-4ubuntu2.8").unwrap();
        assert_eq!(classify_ssh_version(&b).status, FindingStatus::Vulnerable);
        assert_eq!(classify_ssh_version(&openssh(7, 6)).status, FindingStatus::Clean);
        assert_eq!(classify_ssh_version(&openssh(8, 0)).status, FindingStatus::Clean);
        assert_eq!(classify_ssh_version(&openssh(7, 5)).status, FindingStatus::Vulnerable);
    }

    #[test]
    fn unparseable_openssh_token_is_inconclusive() {
        let b = parse_banner("SSH-2.0-OpenSSH_x.y").unwrap();
        let o = classify_ssh_version(&b);
        assert_eq!(o.status, FindingStatus::Inconclusive);
        assert!(o.evidence.contains("SSH-2.0-OpenSSH_x.y"));
    }

    #[test]
    fn reads_banner_after_prelude_lines() {
        let mut c = Cursor::new(b"hello there\r\nSSH-2.0-OpenSSH_8.9p1\r\n".to_vec());
        let b = read_banner(&mut c).unwrap().unwrap();
        assert_eq!(b.version.unwrap().minor, 9);
        assert!(read_banner(&mut Cursor::new(Vec::new())).unwrap().is_none());
    }

    #[test]
    fn missing_banner_rules() {
        assert_eq!(availability_rule(None, false).status, FindingStatus::Clean);
        assert_eq!(version_rule(None).status, FindingStatus::Inconclusive);
    }

    proptest! {
        #[test]
        fn classification_is_lexicographic(major in 0u32..20, minor in 0u32..20, patch in "(p[0-9])?") {
            let b = parse_banner(&format!("SSH-2.0-OpenSSH_{major}.{minor}{patch} Debian")).unwrap();
            let expected = (major, minor) < (7, 6);
            prop_assert_eq!(classify_ssh_version(&b).status == FindingStatus::Vulnerable, expected);
        }
    }
}
