//! Per-target probe plan under a connection budget, and multi-target sweeps.
//!
//! Probe order for one target:
//!
//! 1. port-22 banner (3, 19) and port-3306 greeting + login (2, 5), overlapped
//! 2. plain-HTTP redirect chain (7); its first hop is also the plain index
//! 3. one TLS session: leaf certificate (12, 14-17) and HTTPS index page
//!    (25, 29, 33 and the URL harvest for 30)
//! 4. TLS 1.0 hello (18) and weak-suite hello (13), only if 443 accepted TCP
//! 5. at most `max_dir_probes` directory GETs (30)
//! 6. TRACE with a nonce (31)
//!
//! Every established TCP connection is charged to the ledger before any
//! byte is sent. Refused connections are not charged.

use std::collections::{BTreeMap, BTreeSet};
use std::net::{IpAddr, Shutdown, SocketAddr, TcpStream};
use std::sync::Mutex;
use std::time::Duration;

use chrono::Utc;
use url::Url;

use crate::error::ScanError;
use crate::exec::{map_ordered, Strategy};
use crate::http::checks::{fresh_nonce, NONCE_HEADER};
use crate::http::client::{exchange, HttpExchange};
use crate::http::page::{extract_script_refs, internal_page_urls, is_html};
use crate::http::redirect::{follow_http_redirects, redirect_rule, HopError};
use crate::http::{self, derive_probe_directories};
use crate::model::{Finding, LedgerEntry, Outcome, ScanReport, ScanTarget, TestCase};
use crate::net::tcp::{connect, ConnectFailure};
use crate::net::{mysql, resolve, ssh, Timeouts};
use crate::tls::client::{establish, summarize_peer, TlsStream};
use crate::tls::handshake::{run_probe, tls10_hello, tls10_rule, weak_cipher_hello, weak_cipher_rule};
use crate::tls::{self, cert};

use TestCase::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServicePorts {
    pub ssh: u16,
    pub mysql: u16,
    pub http: u16,
    pub https: u16,
}

impl Default for ServicePorts {
    fn default() -> Self {
        ServicePorts { ssh: ssh::DEFAULT_PORT, mysql: mysql::DEFAULT_PORT, http: http::DEFAULT_PORT, https: tls::DEFAULT_PORT }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanConfig {
    pub timeouts: Timeouts,
    pub max_redirect_depth: u32,
    pub max_dir_probes: u32,
    pub connection_budget: u32,
    pub parallel_targets: usize,
    pub enabled_cases: BTreeSet<TestCase>,
    /// Pause between consecutive probes against one host.
    pub politeness_delay: Duration,
    pub body_cap: usize,
    pub ports: ServicePorts,
    /// Also offer triple-DES suites in the weak-cipher hello.
    pub weak_cipher_include_3des: bool,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            timeouts: Timeouts::default(),
            max_redirect_depth: http::redirect::DEFAULT_MAX_DEPTH,
            max_dir_probes: 3,
            connection_budget: 20,
            parallel_targets: 4,
            enabled_cases: TestCase::ALL.into_iter().collect(),
            politeness_delay: Duration::from_millis(100),
            body_cap: http::DEFAULT_BODY_CAP,
            ports: ServicePorts::default(),
            weak_cipher_include_3des: false,
        }
    }
}

const CERT_CASES: [TestCase; 5] =
    [SelfSignedCertificate, ExpiredCertificate, WrongHostname, InsecureModulus, WeakCertificateHash];
const INDEX_CASES: [TestCase; 4] =
    [MissingScriptIntegrity, ServerInfoDisclosed, BrowsableDirectory, SecurityHeadersMissing];

impl ScanConfig {
    fn enabled(&self, c: TestCase) -> bool {
        self.enabled_cases.contains(&c)
    }

    fn any(&self, cases: &[TestCase]) -> bool {
        cases.iter().any(|c| self.enabled(*c))
    }

    fn needs_tls_session(&self) -> bool {
        self.any(&CERT_CASES) || self.any(&INDEX_CASES) || self.any(&[WeakCipherSupported, Tls10Supported, TraceEnabled])
    }

    /// Worst-case connections for the enabled cases. For the full catalog
    /// this is `6 + max_redirect_depth + max_dir_probes`.
    pub fn connection_ceiling(&self) -> u32 {
        self.plan_size(self.max_redirect_depth.max(1), self.max_dir_probes)
    }

    /// Connections needed when every redirect chain is one hop long and one
    /// directory is probed.
    pub fn analytic_minimum(&self) -> u32 {
        self.plan_size(1, self.max_dir_probes.min(1))
    }

    fn plan_size(&self, hops: u32, dirs: u32) -> u32 {
        let mut n = 0;
        n += self.any(&[SshAvailable, VulnerableOpenSsh]) as u32;
        n += self.any(&[MysqlPortOpen, MysqlDefaultCredentials]) as u32;
        if self.enabled(PlainHttpNoRedirect) {
            n += hops;
        }
        n += self.needs_tls_session() as u32;
        n += self.enabled(Tls10Supported) as u32;
        n += self.enabled(WeakCipherSupported) as u32;
        if self.enabled(BrowsableDirectory) {
            n += dirs;
        }
        n += self.enabled(TraceEnabled) as u32;
        n
    }

    pub fn validate(&self) -> Result<(), ScanError> {
        if self.parallel_targets < 1 {
            return Err(ScanError::InvalidConfig("parallel_targets must be at least 1".into()));
        }
        if self.timeouts.connect.is_zero() || self.timeouts.read.is_zero() {
            return Err(ScanError::InvalidConfig("timeouts must be positive".into()));
        }
        if self.max_redirect_depth < 1 {
            return Err(ScanError::InvalidConfig("max_redirect_depth must be at least 1".into()));
        }
        let min = self.analytic_minimum();
        if self.connection_budget < min {
            return Err(ScanError::InvalidConfig(format!(
                "connection budget {} is below the {min} connections the enabled cases need",
                self.connection_budget
            )));
        }
        Ok(())
    }
}

/// Host plus optional per-target port overrides.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetSpec {
    pub host: String,
    pub ports: Option<ServicePorts>,
}

impl TargetSpec {
    pub fn new(host: impl Into<String>) -> Self {
        TargetSpec { host: host.into(), ports: None }
    }
    pub fn with_ports(host: impl Into<String>, ports: ServicePorts) -> Self {
        TargetSpec { host: host.into(), ports: Some(ports) }
    }
}

impl From<&str> for TargetSpec {
    fn from(h: &str) -> Self {
        TargetSpec::new(h)
    }
}

/// Connection accounting for one target.
#[derive(Debug, Default)]
pub struct BudgetLedger {
    entries: Vec<LedgerEntry>,
    total: u32,
}

impl BudgetLedger {
    pub fn total(&self) -> u32 {
        self.total
    }
    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }
    fn charge(&mut self, probe: &str) {
        self.total += 1;
        match self.entries.iter_mut().find(|e| e.probe == probe) {
            Some(e) => e.connections += 1,
            None => self.entries.push(LedgerEntry { probe: probe.to_string(), connections: 1 }),
        }
    }
}

#[derive(Debug)]
enum DialError {
    Unreachable(ConnectFailure),
    BudgetExceeded,
}

impl DialError {
    fn describe(&self) -> String {
        match self {
            DialError::Unreachable(ConnectFailure::Refused) => "connection refused".into(),
            DialError::Unreachable(ConnectFailure::Filtered(e)) => format!("no answer ({e})"),
            DialError::BudgetExceeded => "connection budget exhausted".into(),
        }
    }
}

struct Dialer {
    ip: IpAddr,
    timeouts: Timeouts,
    cap: u32,
    ledger: Mutex<BudgetLedger>,
    reserved: Mutex<u32>,
    aborted: Mutex<bool>,
}

impl Dialer {
    fn new(ip: IpAddr, config: &ScanConfig) -> Self {
        Dialer {
            ip,
            timeouts: config.timeouts,
            cap: config.connection_budget,
            ledger: Mutex::new(BudgetLedger::default()),
            reserved: Mutex::new(0),
            aborted: Mutex::new(false),
        }
    }

    fn aborted(&self) -> bool {
        *self.aborted.lock().expect("poisoned")
    }

    fn dial(&self, probe: &str, ip: IpAddr, port: u16) -> Result<TcpStream, DialError> {
        {
            let mut reserved = self.reserved.lock().expect("poisoned");
            if *reserved >= self.cap {
                *self.aborted.lock().expect("poisoned") = true;
                return Err(DialError::BudgetExceeded);
            }
            *reserved += 1;
        }
        match connect(SocketAddr::new(ip, port), self.timeouts.connect) {
            Ok(s) => {
                self.ledger.lock().expect("poisoned").charge(probe);
                Ok(s)
            }
            Err(f) => {
                *self.reserved.lock().expect("poisoned") -= 1;
                Err(DialError::Unreachable(f))
            }
        }
    }

    fn dial_target(&self, probe: &str, port: u16) -> Result<TcpStream, DialError> {
        self.dial(probe, self.ip, port)
    }

    fn into_ledger(self) -> BudgetLedger {
        self.ledger.into_inner().expect("poisoned")
    }
}

/// Outcomes collected for one target, with per-case connection attribution.
struct Findings {
    map: BTreeMap<TestCase, (Outcome, u32)>,
}

impl Findings {
    fn set(&mut self, case: TestCase, outcome: Outcome) {
        self.map.entry(case).or_insert((outcome, 0));
    }
    fn charge(&mut self, case: TestCase, n: u32) {
        if let Some(e) = self.map.get_mut(&case) {
            e.1 += n;
        }
    }
}

enum HttpFailure {
    Dial(DialError),
    Tls(String),
    Io(String),
}

impl HttpFailure {
    fn describe(&self) -> String {
        match self {
            HttpFailure::Dial(d) => d.describe(),
            HttpFailure::Tls(e) => format!("TLS: {e}"),
            HttpFailure::Io(e) => e.clone(),
        }
    }
    fn is_budget(&self) -> bool {
        matches!(self, HttpFailure::Dial(DialError::BudgetExceeded))
    }
}

struct Scan<'a> {
    host: &'a str,
    ports: ServicePorts,
    config: &'a ScanConfig,
    dialer: Dialer,
    findings: Findings,
    probes_run: u32,
}

impl<'a> Scan<'a> {
    fn enabled(&self, c: TestCase) -> bool {
        self.config.enabled(c)
    }

    fn pause(&mut self) {
        if self.probes_run > 0 && !self.config.politeness_delay.is_zero() {
            std::thread::sleep(self.config.politeness_delay);
        }
        self.probes_run += 1;
    }

    /// Marks `cases` as aborted when the budget has already run out.
    fn check_abort(&mut self, cases: &[TestCase]) -> bool {
        if self.dialer.aborted() {
            for c in cases {
                self.findings.set(*c, Outcome::probe_error("aborted: connection budget exhausted"));
            }
            return true;
        }
        false
    }

    /// Connection for `url`, wrapped in TLS for https.
    fn http_request(&self, probe: &str, url: &Url, method: &str, extra: &[(&str, &str)]) -> Result<HttpExchange, HttpFailure> {
        let host = url.host_str().unwrap_or(self.host);
        let port = url.port_or_known_default().unwrap_or(80);
        let ip = if host.eq_ignore_ascii_case(self.host) {
            self.dialer.ip
        } else {
            resolve(host).map_err(|e| HttpFailure::Io(format!("resolve {host}: {e}")))?
        };
        let mut tcp = self.dialer.dial(probe, ip, port).map_err(HttpFailure::Dial)?;
        let _ = tcp.set_read_timeout(Some(self.config.timeouts.read));
        let _ = tcp.set_write_timeout(Some(self.config.timeouts.read));
        let result = if url.scheme() == "https" {
            let mut tls = establish(tcp, host, self.config.timeouts).map_err(HttpFailure::Tls)?;
            let r = exchange(&mut tls, method, url, extra, self.config.body_cap);
            close_tls(&mut tls);
            r
        } else {
            let r = exchange(&mut tcp, method, url, extra, self.config.body_cap);
            let _ = tcp.shutdown(Shutdown::Both);
            r
        };
        result.map_err(|e| HttpFailure::Io(e.to_string()))
    }

    fn run_service_probes(&mut self) {
        let want_ssh = self.config.any(&[SshAvailable, VulnerableOpenSsh]);
        let want_mysql = self.config.any(&[MysqlPortOpen, MysqlDefaultCredentials]);
        if !want_ssh && !want_mysql {
            return;
        }
        self.pause();
        let timeouts = self.config.timeouts;
        let attempt_login = self.enabled(MysqlDefaultCredentials);
        let (ssh_port, mysql_port) = (self.ports.ssh, self.ports.mysql);
        let dialer = &self.dialer;
        let (ssh_result, mysql_result) = std::thread::scope(|s| {
            let ssh_task = want_ssh.then(|| {
                s.spawn(move || {
                    dialer.dial_target("ssh-banner", ssh_port).map(|mut stream| {
                        let _ = stream.set_read_timeout(Some(timeouts.read));
                        let banner = ssh::read_banner(&mut stream).unwrap_or(None);
                        let _ = stream.shutdown(Shutdown::Both);
                        banner
                    })
                })
            });
            let mysql_task = want_mysql.then(|| {
                s.spawn(move || {
                    dialer
                        .dial_target("mysql-handshake", mysql_port)
                        .map(|mut stream| mysql::probe_mysql(&mut stream, timeouts, attempt_login))
                })
            });
            (
                ssh_task.map(|t| t.join().expect("ssh probe panicked")),
                mysql_task.map(|t| t.join().expect("mysql probe panicked")),
            )
        });

        if let Some(result) = ssh_result {
            match result {
                Ok(banner) => {
                    self.findings.set(SshAvailable, ssh::availability_rule(banner.as_ref(), true));
                    self.findings.set(VulnerableOpenSsh, ssh::version_rule(banner.as_ref()));
                    self.findings.charge(first_enabled(self.config, &[SshAvailable, VulnerableOpenSsh]), 1);
                }
                Err(DialError::BudgetExceeded) => {
                    self.findings.set(SshAvailable, Outcome::probe_error("connection budget exhausted"));
                    self.findings.set(VulnerableOpenSsh, Outcome::probe_error("connection budget exhausted"));
                }
                Err(e) => {
                    self.findings.set(SshAvailable, Outcome::clean(format!("port {ssh_port}: {}", e.describe())));
                    self.findings.set(VulnerableOpenSsh, Outcome::inconclusive("no SSH banner"));
                }
            }
        }
        if let Some(result) = mysql_result {
            match result {
                Ok((read, login)) => {
                    self.findings.set(MysqlPortOpen, mysql::port_rule(mysql_port, Some(&read)));
                    let login_outcome = match (&read, &login) {
                        (mysql::GreetingRead::Greeting(_), Some(l)) => mysql::login_rule(Some(l)),
                        _ => Outcome::inconclusive(format!("no protocol-10 greeting: {}", read.describe())),
                    };
                    self.findings.set(MysqlDefaultCredentials, login_outcome);
                    self.findings.charge(first_enabled(self.config, &[MysqlPortOpen, MysqlDefaultCredentials]), 1);
                }
                Err(DialError::BudgetExceeded) => {
                    self.findings.set(MysqlPortOpen, Outcome::probe_error("connection budget exhausted"));
                    self.findings.set(MysqlDefaultCredentials, Outcome::probe_error("connection budget exhausted"));
                }
                Err(e) => {
                    self.findings.set(MysqlPortOpen, Outcome::clean(format!("port {mysql_port}: {}", e.describe())));
                    self.findings.set(MysqlDefaultCredentials, Outcome::inconclusive("MySQL port not reachable"));
                }
            }
        }
    }

    fn start_url(&self, scheme: &str, port: u16) -> Url {
        let host = match self.host.parse::<IpAddr>() {
            Ok(IpAddr::V6(v6)) => format!("[{v6}]"),
            _ => self.host.to_string(),
        };
        let default = if scheme == "https" { 443 } else { 80 };
        let url = if port == default { format!("{scheme}://{host}/") } else { format!("{scheme}://{host}:{port}/") };
        Url::parse(&url).expect("valid start url")
    }

    /// Returns the first hop's exchange for reuse as the plain index.
    fn run_redirect_chain(&mut self) -> Option<HttpExchange> {
        if !self.enabled(PlainHttpNoRedirect) || self.check_abort(&[PlainHttpNoRedirect]) {
            return None;
        }
        self.pause();
        let start = self.start_url("http", self.ports.http);
        let (chain, first) = follow_http_redirects(start, self.config.max_redirect_depth, |url| {
            self.http_request("http-redirect", url, "GET", &[]).map_err(|f| match f {
                HttpFailure::Dial(DialError::BudgetExceeded) => HopError::Budget,
                HttpFailure::Dial(d) => HopError::Unreachable(d.describe()),
                other => HopError::Transport(other.describe()),
            })
        });
        let hops = chain.hops.len() as u32;
        self.findings.set(PlainHttpNoRedirect, redirect_rule(&chain));
        self.findings.charge(PlainHttpNoRedirect, hops);
        first
    }

    /// Returns (listener accepted TCP, TLS session established, HTTPS index).
    fn run_tls_session(&mut self) -> (bool, bool, Option<Result<HttpExchange, String>>) {
        if !self.config.needs_tls_session() {
            return (false, false, None);
        }
        let cert_cases: Vec<TestCase> = CERT_CASES.iter().copied().filter(|c| self.enabled(*c)).collect();
        if self.check_abort(&cert_cases) {
            return (false, false, None);
        }
        self.pause();
        let tcp = match self.dialer.dial_target("tls-session", self.ports.https) {
            Ok(t) => t,
            Err(DialError::BudgetExceeded) => {
                for c in &cert_cases {
                    self.findings.set(*c, Outcome::probe_error("connection budget exhausted"));
                }
                return (false, false, None);
            }
            Err(e) => {
                for c in &cert_cases {
                    self.findings.set(*c, Outcome::inconclusive(format!("no TLS listener: {}", e.describe())));
                }
                return (false, false, None);
            }
        };
        let attribution = self.shared_tls_owner();
        self.findings.charge(attribution, 1);
        let mut stream = match establish(tcp, self.host, self.config.timeouts) {
            Ok(s) => s,
            Err(e) => {
                for c in &cert_cases {
                    self.findings.set(*c, Outcome::probe_error(format!("TLS handshake failed: {e}")));
                }
                // The late charge above may have targeted a cert case that now
                // holds a ProbeError; that is still the right owner.
                return (true, false, None);
            }
        };
        match summarize_peer(&stream) {
            Ok((summary, _der)) => self.evaluate_certificate(&summary),
            Err(e) => {
                for c in &cert_cases {
                    self.findings.set(*c, Outcome::probe_error(e.to_string()));
                }
            }
        }
        let index = self.config.any(&INDEX_CASES).then(|| {
            let url = self.start_url("https", self.ports.https);
            exchange(&mut stream, "GET", &url, &[], self.config.body_cap).map_err(|e| e.to_string())
        });
        close_tls(&mut stream);
        (true, true, index)
    }

    fn shared_tls_owner(&self) -> TestCase {
        let order = [
            SelfSignedCertificate, ExpiredCertificate, WrongHostname, InsecureModulus, WeakCertificateHash,
            MissingScriptIntegrity, ServerInfoDisclosed, SecurityHeadersMissing, BrowsableDirectory,
            Tls10Supported, WeakCipherSupported, TraceEnabled,
        ];
        first_enabled(self.config, &order)
    }

    fn evaluate_certificate(&mut self, summary: &cert::CertificateSummary) {
        let now = Utc::now();
        self.findings.set(SelfSignedCertificate, cert::check_self_signed(summary));
        self.findings.set(ExpiredCertificate, cert::check_expiry(summary, now));
        let hostname = if self.host.parse::<IpAddr>().is_ok() {
            Outcome::inconclusive("target is an IP literal; hostname check needs a DNS name")
        } else {
            cert::check_hostname(summary, self.host)
        };
        self.findings.set(WrongHostname, hostname);
        self.findings.set(InsecureModulus, cert::check_key_strength(summary));
        self.findings.set(WeakCertificateHash, cert::check_signature_hash(summary));
    }

    fn sni(&self) -> Option<&str> {
        self.host.parse::<IpAddr>().is_err().then_some(self.host)
    }

    fn run_negotiation_probes(&mut self, listener: bool) {
        for (case, probe) in [(Tls10Supported, "tls10-hello"), (WeakCipherSupported, "weak-cipher-hello")] {
            if !self.enabled(case) || self.check_abort(&[case]) {
                continue;
            }
            if !listener {
                self.findings.set(case, Outcome::inconclusive("no TLS listener"));
                continue;
            }
            self.pause();
            let hello = if case == Tls10Supported {
                tls10_hello(self.sni())
            } else {
                weak_cipher_hello(self.sni(), self.config.weak_cipher_include_3des)
            };
            match self.dialer.dial_target(probe, self.ports.https) {
                Ok(mut stream) => {
                    let result = run_probe(&mut stream, &hello, self.config.timeouts.read);
                    let outcome = if case == Tls10Supported { tls10_rule(&result) } else { weak_cipher_rule(&result) };
                    self.findings.set(case, outcome);
                    self.findings.charge(case, 1);
                }
                Err(DialError::BudgetExceeded) => self.findings.set(case, Outcome::probe_error("connection budget exhausted")),
                Err(e) => self.findings.set(case, Outcome::probe_error(format!("TLS listener vanished: {}", e.describe()))),
            }
        }
    }

    fn fetch_plain_index(&mut self) -> Option<Result<HttpExchange, String>> {
        if self.dialer.aborted() {
            return None;
        }
        self.pause();
        let url = self.start_url("http", self.ports.http);
        match self.http_request("http-index", &url, "GET", &[]) {
            Ok(ex) => {
                let owner = first_enabled(self.config, &INDEX_CASES);
                self.findings.charge(owner, 1);
                Some(Ok(ex))
            }
            Err(f) if f.is_budget() => None,
            Err(HttpFailure::Dial(DialError::Unreachable(_))) => None,
            Err(f) => Some(Err(f.describe())),
        }
    }

    fn evaluate_index(&mut self, index: Option<Result<HttpExchange, String>>) -> Option<HttpExchange> {
        let ex = match index {
            Some(Ok(ex)) => ex,
            Some(Err(e)) => {
                for c in INDEX_CASES {
                    self.findings.set(c, Outcome::probe_error(format!("index fetch failed: {e}")));
                }
                return None;
            }
            None => {
                if self.check_abort(&INDEX_CASES) {
                    return None;
                }
                for c in INDEX_CASES {
                    self.findings.set(c, Outcome::inconclusive("no HTTP or HTTPS listener for the index page"));
                }
                return None;
            }
        };
        let source = format!("index {} [{}]", ex.final_url, ex.status_code);
        let server = http::check_server_header(&ex);
        self.findings.set(ServerInfoDisclosed, Outcome::new(server.status, format!("{source}: {}", server.evidence)));
        let (_, headers) = http::check_security_headers(&ex);
        self.findings.set(SecurityHeadersMissing, Outcome::new(headers.status, format!("{source}: {}", headers.evidence)));
        let integrity = if is_html(&ex) {
            let refs = extract_script_refs(&ex, self.host);
            let o = http::check_script_integrity(&refs);
            Outcome::new(o.status, format!("{source}: {}", o.evidence))
        } else {
            Outcome::clean(format!("{source}: non-HTML index"))
        };
        self.findings.set(MissingScriptIntegrity, integrity);
        Some(ex)
    }

    fn run_directory_probes(&mut self, index: Option<&HttpExchange>) {
        if !self.enabled(BrowsableDirectory) || self.findings.map.contains_key(&BrowsableDirectory) {
            return;
        }
        let Some(index) = index else { return };
        let refs = extract_script_refs(index, self.host);
        let pages = internal_page_urls(index, self.host);
        let dirs = derive_probe_directories(&refs, &pages, self.config.max_dir_probes as usize);
        if dirs.is_empty() {
            self.findings.set(BrowsableDirectory, Outcome::inconclusive("no internal paths"));
            return;
        }
        let mut vulnerable = Vec::new();
        let mut clean = Vec::new();
        let mut failed = Vec::new();
        let mut used = 0;
        for dir in &dirs {
            if self.dialer.aborted() {
                failed.push(format!("{dir}: aborted, connection budget exhausted"));
                break;
            }
            self.pause();
            let Ok(url) = index.final_url.join(dir) else { continue };
            match self.http_request("dir-listing", &url, "GET", &[]) {
                Ok(ex) => {
                    used += 1;
                    let o = http::listing_rule(dir, &ex);
                    match o.status {
                        crate::model::FindingStatus::Vulnerable => vulnerable.push(o.evidence),
                        _ => clean.push(o.evidence),
                    }
                }
                Err(f) => {
                    if !matches!(f, HttpFailure::Dial(_)) {
                        used += 1;
                    }
                    failed.push(format!("{dir}: {}", f.describe()));
                }
            }
        }
        let outcome = if !vulnerable.is_empty() {
            Outcome::vulnerable(vulnerable.join("; "))
        } else if !failed.is_empty() && clean.is_empty() {
            if self.dialer.aborted() {
                Outcome::probe_error(failed.join("; "))
            } else {
                Outcome::inconclusive(failed.join("; "))
            }
        } else {
            let mut all = clean;
            all.extend(failed);
            Outcome::clean(all.join("; "))
        };
        self.findings.set(BrowsableDirectory, outcome);
        self.findings.charge(BrowsableDirectory, used);
    }

    fn run_trace(&mut self, scheme: Option<&'static str>) {
        if !self.enabled(TraceEnabled) || self.check_abort(&[TraceEnabled]) {
            return;
        }
        let Some(scheme) = scheme else {
            self.findings.set(TraceEnabled, Outcome::inconclusive("no HTTP or HTTPS listener"));
            return;
        };
        self.pause();
        let port = if scheme == "https" { self.ports.https } else { self.ports.http };
        let url = self.start_url(scheme, port);
        let nonce = fresh_nonce();
        match self.http_request("trace", &url, "TRACE", &[(NONCE_HEADER, &nonce)]) {
            Ok(ex) => {
                self.findings.set(TraceEnabled, http::trace_rule(&ex, &nonce));
                self.findings.charge(TraceEnabled, 1);
            }
            Err(f) => {
                let connected = !matches!(f, HttpFailure::Dial(_));
                let o = if f.is_budget() {
                    Outcome::probe_error(f.describe())
                } else {
                    Outcome::inconclusive(format!("TRACE failed: {}", f.describe()))
                };
                self.findings.set(TraceEnabled, o);
                if connected {
                    self.findings.charge(TraceEnabled, 1);
                }
            }
        }
    }
}

fn first_enabled(config: &ScanConfig, order: &[TestCase]) -> TestCase {
    order.iter().copied().find(|c| config.enabled(*c)).unwrap_or(order[0])
}

fn close_tls(stream: &mut TlsStream) {
    stream.conn.send_close_notify();
    let _ = stream.conn.complete_io(&mut stream.sock);
    let _ = stream.sock.shutdown(Shutdown::Both);
}

const SKIPPED: &str = "skipped: case disabled in configuration";

/// Runs the full probe plan against one target.
pub fn scan_target(target: &TargetSpec, config: &ScanConfig) -> ScanReport {
    let started_at = Utc::now();
    let host = target.host.trim();
    let ip = match resolve(host) {
        Ok(ip) => ip,
        Err(e) => return unresolved_report(host, started_at, &e.to_string()),
    };
    let mut scan = Scan {
        host,
        ports: target.ports.unwrap_or(config.ports),
        config,
        dialer: Dialer::new(ip, config),
        findings: Findings { map: BTreeMap::new() },
        probes_run: 0,
    };

    scan.run_service_probes();
    let plain_first_hop = scan.run_redirect_chain();
    let http_reachable = plain_first_hop.is_some();
    let (listener, tls_up, https_index) = scan.run_tls_session();
    scan.run_negotiation_probes(listener);

    let index_needed = config.any(&INDEX_CASES);
    let mut index = https_index;
    if index_needed && !matches!(index, Some(Ok(_))) {
        if let Some(first) = plain_first_hop {
            index = Some(Ok(first));
        } else if !config.enabled(PlainHttpNoRedirect) {
            index = scan.fetch_plain_index().or(index);
        }
    }
    let plain_index_seen = matches!(&index, Some(Ok(ex)) if !ex.is_https());
    let index = if index_needed { scan.evaluate_index(index) } else { None };
    scan.run_directory_probes(index.as_ref());
    let trace_scheme = if tls_up {
        Some("https")
    } else if http_reachable || plain_index_seen {
        Some("http")
    } else if !config.enabled(PlainHttpNoRedirect) && !index_needed {
        // Nothing has touched port 80 yet; let TRACE find out.
        Some("http")
    } else {
        None
    };
    scan.run_trace(trace_scheme);

    let complete = !scan.dialer.aborted();
    let mut findings_map = scan.findings.map;
    let ledger = scan.dialer.into_ledger();
    let findings: Vec<Finding> = TestCase::ALL
        .iter()
        .map(|&c| {
            if !config.enabled(c) {
                return Finding::from_outcome(c, Outcome::inconclusive(SKIPPED), 0);
            }
            let (outcome, n) = findings_map
                .remove(&c)
                .unwrap_or_else(|| (Outcome::inconclusive("not evaluated: prerequisite probe did not run"), 0));
            Finding::from_outcome(c, outcome, n)
        })
        .collect();
    ScanReport::new(
        ScanTarget { host: host.to_string(), address: Some(ip) },
        started_at,
        Utc::now(),
        findings,
        ledger.entries().to_vec(),
        complete,
    )
    .expect("engine emits one finding per case")
}

fn unresolved_report(host: &str, started_at: chrono::DateTime<Utc>, why: &str) -> ScanReport {
    let findings = TestCase::ALL
        .iter()
        .map(|&c| Finding::from_outcome(c, Outcome::probe_error(format!("cannot resolve {host}: {why}")), 0))
        .collect();
    ScanReport::new(
        ScanTarget { host: host.to_string(), address: None },
        started_at,
        Utc::now(),
        findings,
        Vec::new(),
        true,
    )
    .expect("one finding per case")
}

/// Scans every target, up to `parallel_targets` at once. Output order
/// matches input order; a failing host only affects its own report.
pub fn scan_many(targets: &[TargetSpec], config: &ScanConfig) -> Result<Vec<ScanReport>, ScanError> {
    if targets.is_empty() {
        return Err(ScanError::NoTargets);
    }
    config.validate()?;
    Ok(map_ordered(targets, Strategy::with_width(config.parallel_targets), |t| scan_target(t, config)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_ceiling_matches_analytic_bound() {
        let c = ScanConfig::default();
        assert_eq!(c.connection_ceiling(), 6 + c.max_redirect_depth + c.max_dir_probes);
        assert!(c.connection_budget >= c.connection_ceiling());
        assert!(c.validate().is_ok());
    }

    #[test]
    fn disabling_cases_shrinks_the_plan() {
        let mut c = ScanConfig { enabled_cases: [SshAvailable].into_iter().collect(), ..ScanConfig::default() };
        assert_eq!(c.connection_ceiling(), 1);
        c.enabled_cases = [Tls10Supported].into_iter().collect();
        assert_eq!(c.connection_ceiling(), 2);
    }

    #[test]
    fn rejects_budget_below_minimum() {
        let c = ScanConfig { connection_budget: 2, ..ScanConfig::default() };
        assert!(matches!(c.validate(), Err(ScanError::InvalidConfig(_))));
        let c = ScanConfig { parallel_targets: 0, ..ScanConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn empty_target_list_is_rejected() {
        assert!(matches!(scan_many(&[], &ScanConfig::default()), Err(ScanError::NoTargets)));
    }

    #[test]
    fn unresolvable_host_is_all_probe_error() {
        let r = scan_target(&TargetSpec::new("no-such-host.invalid"), &ScanConfig::default());
        assert!(r.is_total_probe_error());
        assert_eq!(r.connections_used(), 0);
        assert_eq!(r.findings().len(), 17);
    }

    #[test]
    fn ledger_merges_entries_per_probe() {
        let mut l = BudgetLedger::default();
        l.charge("http-redirect");
        l.charge("trace");
        l.charge("http-redirect");
        assert_eq!(l.total(), 3);
        assert_eq!(l.entries()[0], LedgerEntry { probe: "http-redirect".into(), connections: 2 });
    }
}
