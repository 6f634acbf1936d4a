//! BuggyLite: a configurable vulnerable responder for the scanner.
//!
//! Each of the seventeen scannable cases has a toggle. With a toggle on, the
//! matching listener misbehaves in exactly the way the scanner's rule looks
//! for; with it off, the listener behaves. Listeners bind 127.0.0.1 only.
//!
//! ```no_run
//! use pciscan::TestCase;
//! use pciscan_testbed::{spawn_testbed, TestbedConfig};
//!
//! let bed = spawn_testbed(TestbedConfig::only(TestCase::TraceEnabled)).unwrap();
//! println!("http on {}", bed.ports().http);
//! ```

pub mod certs;
pub mod config;
pub mod server;
pub mod tls;
pub mod web;

pub use certs::{generate_cert_fixture, CertDefect, CertFixture, FixtureError};
pub use config::{MysqlMode, TestbedConfig, TraceMode};
pub use server::{spawn_testbed, AccessEntry, Service, TestbedHandle};

#[derive(Debug, thiserror::Error)]
pub enum TestbedError {
    #[error("invalid testbed configuration: {0}")]
    Config(String),
    #[error("cannot bind {service} port {port}: {source}")]
    Bind {
        port: u16,
        service: &'static str,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Fixture(#[from] FixtureError),
    #[error("TLS setup: {0}")]
    Tls(String),
}
