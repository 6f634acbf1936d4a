//! HTTP-layer rules built around one shared index-page fetch.

pub mod checks;
pub mod client;
pub mod page;
pub mod redirect;

pub use checks::{
    check_script_integrity, check_security_headers, check_server_header, listing_rule, trace_rule,
    SECURITY_HEADERS,
};
pub use client::{HttpExchange, DEFAULT_BODY_CAP};
pub use page::{derive_probe_directories, extract_script_refs, ScriptRef};
pub use redirect::{follow_http_redirects, ChainTerminal, RedirectChain};

pub const DEFAULT_PORT: u16 = 80;
