//! Testbed configuration: one toggle per scannable case plus service knobs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use pciscan::TestCase;

use crate::certs::CertDefect;
use crate::TestbedError;

/// How the MySQL façade opens a connection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MysqlMode {
    /// Protocol-10 greeting, then answer one login attempt.
    #[default]
    Normal,
    /// An error packet in place of the greeting.
    ErrorPacket,
    /// Accept and say nothing.
    Silent,
}

/// Answer to TRACE when the TRACE toggle is off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TraceMode {
    #[default]
    Reject405,
    /// 200 with an unrelated page and no echo.
    Fake200,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestbedConfig {
    toggles: BTreeMap<TestCase, bool>,
    /// 0 picks an ephemeral port.
    pub http_port: u16,
    pub https_port: u16,
    pub mysql_port: u16,
    pub ssh_port: u16,
    pub https_enabled: bool,
    /// Replaces the default banner line (without CRLF).
    pub ssh_banner: Option<String>,
    /// Replaces the default index page.
    pub index_body: Option<String>,
    /// Server header used when the disclosure toggle is on.
    pub server_header: Option<String>,
    pub mysql_mode: MysqlMode,
    pub index_status: u16,
    pub trace_mode: TraceMode,
}

pub const DEFAULT_SERVER_HEADER: &str = "Apache/2.4.29 (Ubuntu)";
pub const NEUTRAL_SERVER_HEADER: &str = "BuggyLite";
pub const VULNERABLE_SSH_BANNER: &str = "SSH-2.0-OpenSSH_7.4p1 Debian-10+deb9u7";
pub const PATCHED_SSH_BANNER: &str = "SSH-2.0-OpenSSH_8.9p1 Ubuntu-3ubuntu0.6";

impl Default for TestbedConfig {
    fn default() -> Self {
        TestbedConfig {
            toggles: TestCase::ALL.iter().map(|c| (*c, false)).collect(),
            http_port: 0,
            https_port: 0,
            mysql_port: 0,
            ssh_port: 0,
            https_enabled: true,
            ssh_banner: None,
            index_body: None,
            server_header: None,
            mysql_mode: MysqlMode::Normal,
            index_status: 200,
            trace_mode: TraceMode::Reject405,
        }
    }
}

/// Toggles that only make sense when another one is on.
pub fn prerequisite(case: TestCase) -> Option<TestCase> {
    match case {
        TestCase::MysqlDefaultCredentials => Some(TestCase::MysqlPortOpen),
        TestCase::VulnerableOpenSsh => Some(TestCase::SshAvailable),
        _ => None,
    }
}

fn needs_https(case: TestCase) -> bool {
    matches!(case.id(), 12..=18)
}

impl TestbedConfig {
    /// All toggles off, ephemeral ports.
    pub fn new() -> Self {
        Self::default()
    }

    /// Exactly `case` plus its prerequisite.
    pub fn only(case: TestCase) -> Self {
        Self::new().with(case)
    }

    /// Turns `case` on together with its prerequisite.
    pub fn with(mut self, case: TestCase) -> Self {
        if let Some(p) = prerequisite(case) {
            self.toggles.insert(p, true);
        }
        self.toggles.insert(case, true);
        self
    }

    pub fn set(&mut self, case: TestCase, on: bool) {
        self.toggles.insert(case, on);
    }

    pub fn enabled(&self, case: TestCase) -> bool {
        self.toggles.get(&case).copied().unwrap_or(false)
    }

    pub fn enabled_cases(&self) -> BTreeSet<TestCase> {
        self.toggles.iter().filter(|(_, on)| **on).map(|(c, _)| *c).collect()
    }

    /// Certificate defects implied by the toggles.
    pub fn cert_defects(&self) -> BTreeSet<CertDefect> {
        CertDefect::ALL.into_iter().filter(|d| self.enabled(d.case())).collect()
    }

    pub fn validate(&self) -> Result<(), TestbedError> {
        for case in self.enabled_cases() {
            if let Some(p) = prerequisite(case) {
                if !self.enabled(p) {
                    return Err(TestbedError::Config(format!("case.{} requires case.{}", case.id(), p.id())));
                }
            }
            if needs_https(case) && !self.https_enabled {
                return Err(TestbedError::Config(format!("case.{} requires https = on", case.id())));
            }
        }
        if !(100..=599).contains(&self.index_status) {
            return Err(TestbedError::Config(format!("index_status {} is not an HTTP status", self.index_status)));
        }
        let ports = [self.http_port, self.https_port, self.mysql_port, self.ssh_port];
        for (i, p) in ports.iter().enumerate() {
            if *p != 0 && ports[..i].contains(p) {
                return Err(TestbedError::Config(format!("port {p} assigned to two services")));
            }
        }
        Ok(())
    }

    pub fn ssh_banner_line(&self) -> String {
        match &self.ssh_banner {
            Some(b) => b.clone(),
            None if self.enabled(TestCase::VulnerableOpenSsh) => VULNERABLE_SSH_BANNER.into(),
            None => PATCHED_SSH_BANNER.into(),
        }
    }

    pub fn server_header_value(&self) -> &str {
        if self.enabled(TestCase::ServerInfoDisclosed) {
            self.server_header.as_deref().unwrap_or(DEFAULT_SERVER_HEADER)
        } else {
            NEUTRAL_SERVER_HEADER
        }
    }
}

fn parse_switch(v: &str) -> Option<bool> {
    match v.to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" | "1" => Some(true),
        "off" | "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

impl FromStr for TestbedConfig {
    type Err = TestbedError;

    /// Line-oriented `key = value`; `#` starts a comment line.
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut cfg = TestbedConfig::new();
        let mut fixture: Option<BTreeSet<CertDefect>> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |why: &str| TestbedError::Config(format!("line {}: {why}: `{line}`", n + 1));
            let (key, value) = line.split_once('=').ok_or_else(|| bad("expected key = value"))?;
            let (key, value) = (key.trim(), value.trim());
            let port = || value.parse::<u16>().map_err(|_| bad("invalid port"));
            if let Some(id) = key.strip_prefix("case.") {
                let case = id.parse::<u8>().ok().and_then(TestCase::from_id).ok_or_else(|| bad("unknown case"))?;
                cfg.set(case, parse_switch(value).ok_or_else(|| bad("expected on or off"))?);
                continue;
            }
            match key {
                "http_port" => cfg.http_port = port()?,
                "https_port" => cfg.https_port = port()?,
                "mysql_port" => cfg.mysql_port = port()?,
                "ssh_port" => cfg.ssh_port = port()?,
                "https" => cfg.https_enabled = parse_switch(value).ok_or_else(|| bad("expected on or off"))?,
                "ssh_banner" => cfg.ssh_banner = Some(value.to_string()),
                "index_body" => cfg.index_body = Some(value.to_string()),
                "server_header" => cfg.server_header = Some(value.to_string()),
                "index_status" => cfg.index_status = value.parse().map_err(|_| bad("invalid status"))?,
                "mysql_mode" => {
                    cfg.mysql_mode = match value {
                        "normal" => MysqlMode::Normal,
                        "error" => MysqlMode::ErrorPacket,
                        "silent" => MysqlMode::Silent,
                        _ => return Err(bad("expected normal, error or silent")),
                    }
                }
                "trace_mode" => {
                    cfg.trace_mode = match value {
                        "405" | "reject" => TraceMode::Reject405,
                        "fake-200" | "fake200" => TraceMode::Fake200,
                        _ => return Err(bad("expected reject or fake-200")),
                    }
                }
                "cert_fixture" => fixture = Some(CertDefect::parse_set(value).map_err(|e| bad(&e))?),
                _ => return Err(bad("unknown key")),
            }
        }
        if let Some(wanted) = fixture {
            let implied = cfg.cert_defects();
            if wanted != implied {
                return Err(TestbedError::Config(format!(
                    "cert_fixture = {} disagrees with the certificate toggles ({})",
                    CertDefect::format_set(&wanted),
                    CertDefect::format_set(&implied)
                )));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for TestbedConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (case, on) in &self.toggles {
            writeln!(f, "# {}", case.short_name())?;
            writeln!(f, "case.{} = {}", case.id(), if *on { "on" } else { "off" })?;
        }
        writeln!(f, "http_port = {}", self.http_port)?;
        writeln!(f, "https_port = {}", self.https_port)?;
        writeln!(f, "mysql_port = {}", self.mysql_port)?;
        writeln!(f, "ssh_port = {}", self.ssh_port)?;
        writeln!(f, "https = {}", if self.https_enabled { "on" } else { "off" })?;
        writeln!(f, "cert_fixture = {}", CertDefect::format_set(&self.cert_defects()))?;
        writeln!(f, "ssh_banner = {}", self.ssh_banner_line())?;
        if let Some(b) = &self.index_body {
            writeln!(f, "index_body = {b}")?;
        }
        if let Some(s) = &self.server_header {
            writeln!(f, "server_header = {s}")?;
        }
        let mode = match self.mysql_mode {
            MysqlMode::Normal => "normal",
            MysqlMode::ErrorPacket => "error",
            MysqlMode::Silent => "silent",
        };
        writeln!(f, "mysql_mode = {mode}")?;
        writeln!(f, "index_status = {}", self.index_status)?;
        let trace = match self.trace_mode {
            TraceMode::Reject405 => "reject",
            TraceMode::Fake200 => "fake-200",
        };
        writeln!(f, "trace_mode = {trace}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dependencies_are_validated_not_fixed() {
        let mut c = TestbedConfig::new();
        c.set(TestCase::MysqlDefaultCredentials, true);
        assert!(c.validate().is_err());
        assert!(TestbedConfig::only(TestCase::MysqlDefaultCredentials).validate().is_ok());
        let mut c = TestbedConfig::only(TestCase::Tls10Supported);
        c.https_enabled = false;
        assert!(c.validate().is_err());
    }

    #[test]
    fn parses_file_syntax() {
        let c: TestbedConfig = "# demo\ncase.2 = on\ncase.5=on\nhttp_port = 8080\ntrace_mode = fake-200\n".parse().unwrap();
        assert_eq!(c.enabled_cases(), [TestCase::MysqlPortOpen, TestCase::MysqlDefaultCredentials].into());
        assert_eq!(c.http_port, 8080);
        assert_eq!(c.trace_mode, TraceMode::Fake200);
        assert!("case.5 = on".parse::<TestbedConfig>().is_err());
        assert!("case.4 = on".parse::<TestbedConfig>().is_err());
        assert!("bogus = 1".parse::<TestbedConfig>().is_err());
    }

    #[test]
    fn fixture_key_must_agree_with_toggles() {
        assert!("case.14 = on\ncert_fixture = expired".parse::<TestbedConfig>().is_ok());
        assert!("case.14 = on\ncert_fixture = good".parse::<TestbedConfig>().is_err());
        let c: TestbedConfig = "case.12 = on\ncase.14 = on\ncert_fixture = selfsigned+expired".parse().unwrap();
        assert_eq!(c.cert_defects(), [CertDefect::SelfSigned, CertDefect::Expired].into());
    }

    #[test]
    fn display_round_trips() {
        let mut c = TestbedConfig::only(TestCase::VulnerableOpenSsh).with(TestCase::WeakCertificateHash);
        c.mysql_mode = MysqlMode::Silent;
        c.index_status = 404;
        let back: TestbedConfig = c.to_string().parse().unwrap();
        assert_eq!(back.enabled_cases(), c.enabled_cases());
        assert_eq!((back.mysql_mode, back.index_status), (MysqlMode::Silent, 404));
    }
}
