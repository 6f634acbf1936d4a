//! Rule evaluators over captured HTTP exchanges.

use std::sync::OnceLock;

use regex::Regex;
use scraper::{Html, Selector};

use crate::model::Outcome;

use super::client::HttpExchange;
use super::page::ScriptRef;

pub const SECURITY_HEADERS: [&str; 4] = [
    "X-Frame-Options",
    "X-XSS-Protection",
    "Strict-Transport-Security",
    "X-Content-Type-Options",
];

pub const NONCE_HEADER: &str = "X-Probe-Nonce";

fn product_version() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?:^|[\s(,])[A-Za-z][A-Za-z0-9._\-]*/[0-9]").expect("static regex"))
}

/// Server-disclosure rule: a `product/version` token in any Server header.
pub fn check_server_header(ex: &HttpExchange) -> Outcome {
    let values: Vec<&str> = ex.headers.get_all("server").collect();
    if values.is_empty() {
        return Outcome::clean("no Server header");
    }
    match values.iter().find(|v| product_version().is_match(v)) {
        Some(v) => Outcome::vulnerable(format!("Server: {v}")),
        None => Outcome::clean(format!("Server: {} (no version)", values.join(", "))),
    }
}

/// Returns the missing required headers, in canonical order.
pub fn missing_security_headers(ex: &HttpExchange) -> Vec<&'static str> {
    SECURITY_HEADERS.iter().copied().filter(|h| !ex.headers.contains(h)).collect()
}

pub fn check_security_headers(ex: &HttpExchange) -> (Vec<&'static str>, Outcome) {
    let missing = missing_security_headers(ex);
    let caveat = if ex.is_https() { "" } else { " (page served over plain HTTP; HSTS checked anyway)" };
    let outcome = if missing.is_empty() {
        Outcome::clean(format!("all four security headers present{caveat}"))
    } else {
        Outcome::vulnerable(format!("missing: {}{caveat}", missing.join(", ")))
    };
    (missing, outcome)
}

/// Script-integrity rule: any cross-site script without `integrity`.
pub fn check_script_integrity(refs: &[ScriptRef]) -> Outcome {
    let offending: Vec<&str> = refs
        .iter()
        .filter(|r| !r.same_site && !r.has_integrity)
        .map(|r| r.src_url.as_str())
        .collect();
    if offending.is_empty() {
        let external = refs.iter().filter(|r| !r.same_site).count();
        Outcome::clean(format!("{external} external script(s), all with integrity"))
    } else {
        Outcome::vulnerable(format!("external scripts without integrity: {}", offending.join(", ")))
    }
}

/// Which branch of the listing heuristic matched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ListingSignal {
    IndexOfHeading,
    ParentLinkWithEntries,
}

pub fn detect_listing(body: &str) -> Option<ListingSignal> {
    let doc = Html::parse_document(body);
    let heading = Selector::parse("title, h1, h2").expect("static selector");
    if doc
        .select(&heading)
        .any(|el| el.text().collect::<String>().trim_start().starts_with("Index of"))
    {
        return Some(ListingSignal::IndexOfHeading);
    }
    let anchors = Selector::parse("a[href]").expect("static selector");
    let mut relative = 0;
    let mut parent = false;
    for el in doc.select(&anchors) {
        let href = el.value().attr("href").unwrap_or("").trim();
        let text = el.text().collect::<String>();
        if href.is_empty() || href.starts_with('/') || href.starts_with('#') || href.starts_with('?') || href.contains("://") {
            continue;
        }
        relative += 1;
        if href == ".." || href == "../" || text.trim().eq_ignore_ascii_case("parent directory") {
            parent = true;
        }
    }
    (parent && relative >= 2).then_some(ListingSignal::ParentLinkWithEntries)
}

/// Browsable-directory rule for one probed path.
pub fn listing_rule(path: &str, ex: &HttpExchange) -> Outcome {
    if ex.status_code != 200 {
        return Outcome::clean(format!("{path} answered {}", ex.status_code));
    }
    match detect_listing(&ex.body_text()) {
        Some(ListingSignal::IndexOfHeading) => Outcome::vulnerable(format!("{path} serves a listing (\"Index of\" heading)")),
        Some(ListingSignal::ParentLinkWithEntries) => {
            Outcome::vulnerable(format!("{path} serves a listing (parent link plus relative entries)"))
        }
        None => Outcome::clean(format!("{path} answered 200 without a listing")),
    }
}

/// TRACE rule: flagged only when a 200 response echoes our nonce.
pub fn trace_rule(ex: &HttpExchange, nonce: &str) -> Outcome {
    if ex.status_code != 200 {
        return Outcome::clean(format!("TRACE answered {}", ex.status_code));
    }
    if ex.body_text().contains(nonce) {
        Outcome::vulnerable(format!("TRACE echoed the request (nonce {nonce}) with 200"))
    } else {
        Outcome::clean("200 but no echo")
    }
}

pub fn fresh_nonce() -> String {
    hex::encode(rand::random::<[u8; 16]>())
}
