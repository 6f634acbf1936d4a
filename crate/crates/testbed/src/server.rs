//! Listener threads, the access log and the MySQL/SSH façades.

use std::io::{self, Read, Write};
use std::net::{Ipv4Addr, Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use chrono::{DateTime, Utc};
use pciscan::engine::ServicePorts;
use pciscan::net::mysql;
use pciscan::TestCase;
use socket2::{Domain, Socket, Type};

use crate::certs::generate_cert_fixture;
use crate::config::{MysqlMode, TestbedConfig};
use crate::TestbedError;

const IO_TIMEOUT: Duration = Duration::from_secs(5);
const ACCEPT_POLL: Duration = Duration::from_millis(2);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Service {
    Http,
    Https,
    Mysql,
    Ssh,
}

impl Service {
    pub fn name(self) -> &'static str {
        match self {
            Service::Http => "http",
            Service::Https => "https",
            Service::Mysql => "mysql",
            Service::Ssh => "ssh",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessEntry {
    pub at: DateTime<Utc>,
    pub port: u16,
    pub service: Service,
    pub peer: SocketAddr,
    /// What the client sent first and how the testbed answered.
    pub summary: String,
}

/// Append-only record of accepted connections.
#[derive(Debug, Default)]
pub struct AccessLog(Mutex<Vec<AccessEntry>>);

impl AccessLog {
    fn open(&self, port: u16, service: Service, peer: SocketAddr) -> usize {
        let mut log = self.0.lock().expect("access log poisoned");
        log.push(AccessEntry { at: Utc::now(), port, service, peer, summary: String::new() });
        log.len() - 1
    }

    fn annotate(&self, idx: usize, summary: String) {
        if let Some(e) = self.0.lock().expect("access log poisoned").get_mut(idx) {
            e.summary = summary;
        }
    }

    pub fn entries(&self) -> Vec<AccessEntry> {
        self.0.lock().expect("access log poisoned").clone()
    }

    pub fn len(&self) -> usize {
        self.0.lock().expect("access log poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        self.0.lock().expect("access log poisoned").clear();
    }
}

/// A port that refuses connections: bound, so nobody else takes it, but
/// never listening.
struct ClosedPort(#[allow(dead_code)] Option<Socket>);

fn bind_listener(port: u16, service: Service) -> Result<TcpListener, TestbedError> {
    TcpListener::bind((Ipv4Addr::LOCALHOST, port))
        .map_err(|source| TestbedError::Bind { port, service: service.name(), source })
}

fn reserve_closed(port: u16, service: Service) -> Result<(u16, ClosedPort), TestbedError> {
    if port != 0 {
        // An explicit port for a disabled service is reported as given.
        return Ok((port, ClosedPort(None)));
    }
    let bind_err = |source| TestbedError::Bind { port, service: service.name(), source };
    let sock = Socket::new(Domain::IPV4, Type::STREAM, None).map_err(bind_err)?;
    sock.bind(&SocketAddr::from((Ipv4Addr::LOCALHOST, 0)).into()).map_err(bind_err)?;
    let bound = sock.local_addr().map_err(bind_err)?.as_socket().map(|a| a.port()).unwrap_or(0);
    Ok((bound, ClosedPort(Some(sock))))
}

/// A running testbed. Dropping it shuts every listener down.
pub struct TestbedHandle {
    ports: ServicePorts,
    config: Arc<TestbedConfig>,
    log: Arc<AccessLog>,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
    _closed: Vec<ClosedPort>,
}

impl std::fmt::Debug for TestbedHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TestbedHandle").field("ports", &self.ports).finish()
    }
}

impl TestbedHandle {
    /// Bound ports, in the shape the scanner takes as overrides.
    pub fn ports(&self) -> ServicePorts {
        self.ports
    }

    pub fn config(&self) -> &TestbedConfig {
        &self.config
    }

    pub fn access_log(&self) -> Vec<AccessEntry> {
        self.log.entries()
    }

    pub fn connection_count(&self) -> usize {
        self.log.len()
    }

    pub fn clear_access_log(&self) {
        self.log.clear();
    }

    /// Stops accepting and closes all listeners.
    pub fn shutdown(mut self) {
        self.stop_all();
    }

    fn stop_all(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
        self._closed.clear();
    }
}

impl Drop for TestbedHandle {
    fn drop(&mut self) {
        self.stop_all();
    }
}

type Handler = Arc<dyn Fn(TcpStream) -> io::Result<String> + Send + Sync>;

fn accept_loop(listener: TcpListener, service: Service, log: Arc<AccessLog>, stop: Arc<AtomicBool>, handler: Handler) -> JoinHandle<()> {
    let port = listener.local_addr().map(|a| a.port()).unwrap_or(0);
    std::thread::spawn(move || {
        if listener.set_nonblocking(true).is_err() {
            return;
        }
        while !stop.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, peer)) => {
                    let idx = log.open(port, service, peer);
                    let _ = stream.set_nonblocking(false);
                    let _ = stream.set_read_timeout(Some(IO_TIMEOUT));
                    let _ = stream.set_write_timeout(Some(IO_TIMEOUT));
                    let log = log.clone();
                    let handler = handler.clone();
                    std::thread::spawn(move || {
                        let summary = handler(stream).unwrap_or_else(|e| format!("error: {e}"));
                        log.annotate(idx, summary);
                    });
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => std::thread::sleep(ACCEPT_POLL),
                Err(e) => {
                    log::warn!("{} accept failed: {e}", service.name());
                    std::thread::sleep(ACCEPT_POLL);
                }
            }
        }
    })
}

fn serve_mysql(mut s: TcpStream, config: &TestbedConfig) -> io::Result<String> {
    match config.mysql_mode {
        MysqlMode::Silent => {
            let mut buf = [0u8; 256];
            let _ = s.read(&mut buf);
            Ok("silent".into())
        }
        MysqlMode::ErrorPacket => {
            let payload = mysql::error_payload(1130, "Host is not allowed to connect to this MySQL server");
            s.write_all(&mysql::encode_packet(0, &payload))?;
            let _ = s.shutdown(Shutdown::Both);
            Ok("error packet in place of greeting".into())
        }
        MysqlMode::Normal => {
            s.write_all(&mysql::encode_packet(0, &mysql::greeting_payload("8.0.0-buggylite")))?;
            let Some((seq, payload)) = mysql::read_packet(&mut s)? else {
                return Ok("greeting sent, no login".into());
            };
            let user = payload.get(32..).and_then(|rest| rest.split(|b| *b == 0).next()).unwrap_or(&[]);
            let user = String::from_utf8_lossy(user).into_owned();
            let reply = if config.enabled(TestCase::MysqlDefaultCredentials) && user == "root" {
                mysql::ok_payload()
            } else {
                mysql::error_payload(1045, &format!("Access denied for user '{user}'@'localhost' (using password: NO)"))
            };
            s.write_all(&mysql::encode_packet(seq.wrapping_add(1), &reply))?;
            let _ = s.shutdown(Shutdown::Both);
            Ok(format!("login as {user:?}: {}", if reply[0] == 0 { "accepted" } else { "denied" }))
        }
    }
}

fn serve_ssh(mut s: TcpStream, banner: &str) -> io::Result<String> {
    s.write_all(format!("{banner}\r\n").as_bytes())?;
    let _ = s.shutdown(Shutdown::Write);
    let mut sink = [0u8; 512];
    s.set_read_timeout(Some(Duration::from_secs(1)))?;
    let n = s.read(&mut sink).unwrap_or(0);
    Ok(format!("banner sent; client sent {n} bytes"))
}

fn serve_http(mut s: TcpStream, config: &TestbedConfig, https_port: u16) -> io::Result<String> {
    let Some(req) = crate::web::read_request(&mut s)? else {
        return Ok("no request".into());
    };
    let resp = crate::web::respond(&req, config, false, https_port);
    resp.write_to(&mut s)?;
    let _ = s.shutdown(Shutdown::Both);
    Ok(format!("{} {} -> {}", req.method, req.path, resp.status))
}

/// Starts every listener for `config` on 127.0.0.1.
pub fn spawn_testbed(config: TestbedConfig) -> Result<TestbedHandle, TestbedError> {
    config.validate()?;
    let config = Arc::new(config);
    let log = Arc::new(AccessLog::default());
    let stop = Arc::new(AtomicBool::new(false));
    let mut closed = Vec::new();
    let mut listeners: Vec<(TcpListener, Service)> = Vec::new();

    let mut port_of = |enabled: bool, port: u16, service: Service| -> Result<u16, TestbedError> {
        if enabled {
            let l = bind_listener(port, service)?;
            let bound = l.local_addr().map_err(|source| TestbedError::Bind { port, service: service.name(), source })?.port();
            listeners.push((l, service));
            Ok(bound)
        } else {
            let (bound, c) = reserve_closed(port, service)?;
            closed.push(c);
            Ok(bound)
        }
    };
    let ssh = port_of(config.enabled(TestCase::SshAvailable), config.ssh_port, Service::Ssh)?;
    let mysql = port_of(config.enabled(TestCase::MysqlPortOpen), config.mysql_port, Service::Mysql)?;
    let http = port_of(true, config.http_port, Service::Http)?;
    let https = port_of(config.https_enabled, config.https_port, Service::Https)?;

    let tls_config = if config.https_enabled {
        let fixture = generate_cert_fixture(&config.cert_defects(), Utc::now())?;
        Some(crate::tls::server_config(&fixture).map_err(|e| TestbedError::Tls(e.to_string()))?)
    } else {
        None
    };

    let mut threads = Vec::new();
    for (listener, service) in listeners {
        let cfg = config.clone();
        let handler: Handler = match service {
            Service::Ssh => {
                let banner = cfg.ssh_banner_line();
                Arc::new(move |s| serve_ssh(s, &banner))
            }
            Service::Mysql => Arc::new(move |s| serve_mysql(s, &cfg)),
            Service::Http => Arc::new(move |s| serve_http(s, &cfg, https)),
            Service::Https => {
                let tls = tls_config.clone().expect("https listener implies a TLS config");
                Arc::new(move |s| crate::tls::handle(s, &cfg, &tls, https))
            }
        };
        threads.push(accept_loop(listener, service, log.clone(), stop.clone(), handler));
    }

    Ok(TestbedHandle {
        ports: ServicePorts { ssh, mysql, http, https },
        config,
        log,
        stop,
        threads,
        _closed: closed,
    })
}
