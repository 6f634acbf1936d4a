//! Plain-HTTP redirect chain following for the HTTPS-enforcement rule.

use std::collections::HashSet;
use std::fmt;

use url::Url;

use crate::model::Outcome;

use super::client::HttpExchange;

pub const DEFAULT_MAX_DEPTH: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainTerminal {
    HttpsReached,
    PlainTerminal,
    DepthExceeded,
    Loop,
    /// No listener on the first hop.
    NoHttp,
    /// A later hop could not be fetched.
    Broken,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RedirectChain {
    /// Fetched plain-HTTP hops in order.
    pub hops: Vec<(Url, u16)>,
    pub terminal: ChainTerminal,
    /// The HTTPS location the chain ended on, if any.
    pub https_target: Option<Url>,
    pub failure: Option<String>,
}

impl fmt::Display for RedirectChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let hops: Vec<String> = self.hops.iter().map(|(u, s)| format!("{u} [{s}]")).collect();
        write!(f, "{}", hops.join(" -> "))?;
        if let Some(t) = &self.https_target {
            write!(f, " -> {t}")?;
        }
        write!(f, " ({:?})", self.terminal)
    }
}

/// How a single hop failed.
#[derive(Debug)]
pub enum HopError {
    /// Nothing listening (refused or filtered).
    Unreachable(String),
    Transport(String),
    /// The shared connection budget is spent.
    Budget,
}

/// Follows redirects starting at `start` (a plain-HTTP URL). `fetch`
/// performs one GET per hop on its own connection. Returns the chain and
/// the first hop's exchange, which doubles as the plain-HTTP index page.
pub fn follow_http_redirects<F>(start: Url, max_depth: u32, mut fetch: F) -> (RedirectChain, Option<HttpExchange>)
where
    F: FnMut(&Url) -> Result<HttpExchange, HopError>,
{
    let max_depth = max_depth.max(1) as usize;
    let mut chain = RedirectChain { hops: Vec::new(), terminal: ChainTerminal::PlainTerminal, https_target: None, failure: None };
    let mut first = None;
    let mut seen = HashSet::new();
    let mut url = start;
    loop {
        if !seen.insert(url.clone()) {
            chain.terminal = ChainTerminal::Loop;
            break;
        }
        if chain.hops.len() >= max_depth {
            chain.terminal = ChainTerminal::DepthExceeded;
            break;
        }
        let ex = match fetch(&url) {
            Ok(ex) => ex,
            Err(e) => {
                let (terminal, why) = match e {
                    HopError::Unreachable(why) if chain.hops.is_empty() => (ChainTerminal::NoHttp, why),
                    HopError::Unreachable(why) | HopError::Transport(why) => (ChainTerminal::Broken, why),
                    HopError::Budget => (ChainTerminal::Broken, "connection budget exhausted".to_string()),
                };
                chain.terminal = terminal;
                chain.failure = Some(why);
                break;
            }
        };
        chain.hops.push((url.clone(), ex.status_code));
        let next = ex
            .is_redirect()
            .then(|| ex.headers.get("location").and_then(|l| url.join(l).ok()))
            .flatten();
        if first.is_none() {
            first = Some(ex);
        }
        match next {
            Some(n) if n.scheme() == "https" => {
                chain.terminal = ChainTerminal::HttpsReached;
                chain.https_target = Some(n);
                break;
            }
            Some(n) if n.scheme() == "http" => url = n,
            _ => {
                chain.terminal = ChainTerminal::PlainTerminal;
                break;
            }
        }
    }
    (chain, first)
}

/// HTTPS-enforcement rule over a followed chain.
pub fn redirect_rule(chain: &RedirectChain) -> Outcome {
    match chain.terminal {
        ChainTerminal::HttpsReached => Outcome::clean(format!("redirects to HTTPS: {chain}")),
        ChainTerminal::NoHttp => Outcome::clean("no HTTP listener"),
        ChainTerminal::Broken if chain.hops.is_empty() => {
            Outcome::probe_error(chain.failure.clone().unwrap_or_default())
        }
        ChainTerminal::Broken => Outcome::inconclusive(format!(
            "chain broke before reaching HTTPS: {chain}: {}",
            chain.failure.as_deref().unwrap_or("")
        )),
        ChainTerminal::PlainTerminal | ChainTerminal::DepthExceeded | ChainTerminal::Loop => {
            Outcome::vulnerable(format!("HTTP not redirected to HTTPS: {chain}"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::client::Headers;
    use super::*;
    use crate::model::FindingStatus;

    fn resp(url: &Url, status: u16, location: Option<&str>) -> HttpExchange {
        let headers = location.map(|l| vec![("Location".to_string(), l.to_string())]).unwrap_or_default();
        HttpExchange {
            request: String::new(),
            status_code: status,
            headers: Headers::new(headers),
            body: b"<html></html>".to_vec(),
            body_truncated: false,
            final_url: url.clone(),
        }
    }

    fn start() -> Url {
        Url::parse("http://shop.example/").unwrap()
    }

    #[test]
    fn first_hop_https_is_clean() {
        let mut calls = 0;
        let (chain, first) = follow_http_redirects(start(), 10, |u| {
            calls += 1;
            Ok(resp(u, 301, Some("https://shop.example/")))
        });
        assert_eq!(chain.terminal, ChainTerminal::HttpsReached);
        assert_eq!(calls, 1);
        assert!(first.is_some());
        assert_eq!(redirect_rule(&chain).status, FindingStatus::Clean);
    }

    #[test]
    fn plain_200_is_vulnerable() {
        let (chain, _) = follow_http_redirects(start(), 10, |u| Ok(resp(u, 200, None)));
        assert_eq!(chain.terminal, ChainTerminal::PlainTerminal);
        assert_eq!(redirect_rule(&chain).status, FindingStatus::Vulnerable);
    }

    #[test]
    fn loop_is_vulnerable() {
        let (chain, _) = follow_http_redirects(start(), 10, |u| {
            let next = if u.path() == "/" { "/b" } else { "/" };
            Ok(resp(u, 301, Some(next)))
        });
        assert_eq!(chain.terminal, ChainTerminal::Loop);
        assert_eq!(chain.hops.len(), 2);
        assert_eq!(redirect_rule(&chain).status, FindingStatus::Vulnerable);
    }

    #[test]
    fn depth_is_capped() {
        let mut n = 0;
        let (chain, _) = follow_http_redirects(start(), 3, |u| {
            n += 1;
            Ok(resp(u, 302, Some(&format!("/p{n}"))))
        });
        assert_eq!(chain.terminal, ChainTerminal::DepthExceeded);
        assert_eq!(chain.hops.len(), 3);
        assert_eq!(n, 3);
    }

    #[test]
    fn closed_port_is_clean() {
        let (chain, first) = follow_http_redirects(start(), 10, |_| Err(HopError::Unreachable("refused".into())));
        assert!(first.is_none());
        let o = redirect_rule(&chain);
        assert_eq!((o.status, o.evidence.as_str()), (FindingStatus::Clean, "no HTTP listener"));
    }
}
