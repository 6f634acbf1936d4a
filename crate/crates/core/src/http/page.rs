//! Index-page harvesting: script references and internal URLs.

use std::collections::HashSet;
use std::net::IpAddr;

use scraper::{Html, Selector};
use url::Url;

use super::client::HttpExchange;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptRef {
    /// Always absolute.
    pub src_url: Url,
    pub has_integrity: bool,
    pub same_site: bool,
}

/// Registrable domain approximated by the last two DNS labels. Multi-part
/// public suffixes (`co.uk`) are over-grouped; IP literals compare whole.
pub fn registrable_domain(host: &str) -> String {
    let host = host.trim_end_matches('.').to_ascii_lowercase();
    if host.parse::<IpAddr>().is_ok() || host.starts_with('[') {
        return host;
    }
    let labels: Vec<&str> = host.split('.').collect();
    if labels.len() <= 2 {
        return host;
    }
    labels[labels.len() - 2..].join(".")
}

pub fn is_same_site(url: &Url, target_host: &str) -> bool {
    match url.host_str() {
        Some(h) => registrable_domain(h) == registrable_domain(target_host),
        None => false,
    }
}

pub fn is_html(ex: &HttpExchange) -> bool {
    if let Some(ct) = ex.headers.get("content-type") {
        return ct.to_ascii_lowercase().contains("html");
    }
    let head: String = ex.body_text().chars().take(1024).collect::<String>().to_ascii_lowercase();
    let head = head.trim_start();
    head.starts_with("<!doctype html") || head.contains("<html") || head.contains("<script")
}

fn selector(s: &str) -> Selector {
    Selector::parse(s).expect("static selector")
}

pub fn extract_script_refs(ex: &HttpExchange, target_host: &str) -> Vec<ScriptRef> {
    if !is_html(ex) {
        return Vec::new();
    }
    let doc = Html::parse_document(&ex.body_text());
    doc.select(&selector("script[src]"))
        .filter_map(|el| {
            let src = el.value().attr("src")?.trim();
            let src_url = ex.final_url.join(src).ok()?;
            if !matches!(src_url.scheme(), "http" | "https") {
                return None;
            }
            let has_integrity = el.value().attr("integrity").map(|v| !v.trim().is_empty()).unwrap_or(false);
            let same_site = is_same_site(&src_url, target_host);
            Some(ScriptRef { src_url, has_integrity, same_site })
        })
        .collect()
}

/// Same-site URLs referenced by anchors, stylesheets and images.
pub fn internal_page_urls(ex: &HttpExchange, target_host: &str) -> Vec<Url> {
    if !is_html(ex) {
        return Vec::new();
    }
    let doc = Html::parse_document(&ex.body_text());
    let mut out = Vec::new();
    for (sel, attr) in [("a[href]", "href"), ("link[href]", "href"), ("img[src]", "src")] {
        for el in doc.select(&selector(sel)) {
            let Some(v) = el.value().attr(attr) else { continue };
            if let Ok(u) = ex.final_url.join(v.trim()) {
                if matches!(u.scheme(), "http" | "https") && is_same_site(&u, target_host) {
                    out.push(u);
                }
            }
        }
    }
    out
}

fn parent_dir(path: &str) -> &str {
    match path.rfind('/') {
        Some(i) => &path[..=i],
        None => "/",
    }
}

fn common_dir(a: &str, b: &str) -> String {
    let mut out = String::from("/");
    for (x, y) in a.split('/').zip(b.split('/')).skip(1) {
        if x != y || x.is_empty() {
            break;
        }
        out.push_str(x);
        out.push('/');
    }
    out
}

/// Candidate directories for the listing probe: the deepest common parent
/// of all internal paths, then each distinct first-level directory, in
/// first-seen order, deduplicated and capped.
pub fn derive_probe_directories(refs: &[ScriptRef], page_urls: &[Url], cap: usize) -> Vec<String> {
    let paths: Vec<&str> = refs
        .iter()
        .filter(|r| r.same_site)
        .map(|r| r.src_url.path())
        .chain(page_urls.iter().map(|u| u.path()))
        .filter(|p| *p != "/" && !p.is_empty())
        .collect();
    let Some(first) = paths.first() else {
        return Vec::new();
    };
    let common = paths
        .iter()
        .skip(1)
        .fold(parent_dir(first).to_string(), |acc, p| common_dir(&acc, parent_dir(p)));
    let mut out = vec![common];
    for p in &paths {
        let mut segs = p.split('/').skip(1);
        if let (Some(dir), Some(_)) = (segs.next(), segs.next()) {
            if !dir.is_empty() {
                out.push(format!("/{dir}/"));
            }
        }
    }
    let mut seen = HashSet::new();
    out.retain(|d| seen.insert(d.clone()));
    out.truncate(cap);
    out
}
