//! HTTP behaviour of the testbed, independent of the transport.

use std::io::{self, Read, Write};

use pciscan::TestCase;

use crate::config::{TestbedConfig, TraceMode};

pub const EXTERNAL_SCRIPT: &str = "https://cdn.buggylite-static.net/jquery-3.3.1.min.js";
const EXTERNAL_SCRIPT_SRI: &str = "sha384-tsQFqpEReu7ZLhBV2VZlAu7zcOV+rXbYlF2cqB8txI/8aZajjp4Bqd+V6D5IgvKT";
const MAX_REQUEST: usize = 64 * 1024;

/// A parsed request plus the exact bytes it arrived as.
#[derive(Debug, Clone)]
pub struct Request {
    pub method: String,
    pub path: String,
    pub host: Option<String>,
    pub raw: Vec<u8>,
}

/// Reads one request head (and a declared body) from `r`.
pub fn read_request<R: Read>(r: &mut R) -> io::Result<Option<Request>> {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 4096];
    let head_end = loop {
        if let Some(i) = find(&buf, b"\r\n\r\n") {
            break i + 4;
        }
        if buf.len() > MAX_REQUEST {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "request head too large"));
        }
        let n = match r.read(&mut chunk) {
            Ok(n) => n,
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => 0,
            Err(e) => return Err(e),
        };
        if n == 0 {
            return Ok(None);
        }
        buf.extend_from_slice(&chunk[..n]);
    };
    let mut headers = [httparse::EMPTY_HEADER; 64];
    let mut req = httparse::Request::new(&mut headers);
    req.parse(&buf[..head_end]).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
    let method = req.method.unwrap_or("GET").to_string();
    let path = req.path.unwrap_or("/").to_string();
    let header = |name: &str| {
        req.headers
            .iter()
            .find(|h| h.name.eq_ignore_ascii_case(name))
            .and_then(|h| std::str::from_utf8(h.value).ok())
            .map(str::to_string)
    };
    let host = header("host");
    let body_len: usize = header("content-length").and_then(|v| v.trim().parse().ok()).unwrap_or(0);
    let want = head_end + body_len.min(MAX_REQUEST);
    while buf.len() < want {
        let n = r.read(&mut chunk)?;
        if n == 0 {
            break;
        }
        buf.extend_from_slice(&chunk[..n]);
    }
    buf.truncate(want.min(buf.len()));
    Ok(Some(Request { method, path, host, raw: buf }))
}

fn find(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w == needle)
}

pub struct Response {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl Response {
    fn new(status: u16, content_type: &str, body: impl Into<Vec<u8>>) -> Self {
        Response { status, headers: vec![("Content-Type".into(), content_type.into())], body: body.into() }
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        let mut head = format!("HTTP/1.1 {} {}\r\n", self.status, reason(self.status));
        for (k, v) in &self.headers {
            head.push_str(&format!("{k}: {v}\r\n"));
        }
        head.push_str(&format!("Content-Length: {}\r\nConnection: close\r\n\r\n", self.body.len()));
        w.write_all(head.as_bytes())?;
        w.write_all(&self.body)?;
        w.flush()
    }
}

fn reason(status: u16) -> &'static str {
    match status {
        200 => "OK",
        301 => "Moved Permanently",
        403 => "Forbidden",
        404 => "Not Found",
        405 => "Method Not Allowed",
        500 => "Internal Server Error",
        _ => "Status",
    }
}

pub fn index_page(config: &TestbedConfig) -> String {
    if let Some(body) = &config.index_body {
        return body.clone();
    }
    let external = if config.enabled(TestCase::MissingScriptIntegrity) {
        format!(r#"<script src="{EXTERNAL_SCRIPT}"></script>"#)
    } else {
        format!(r#"<script src="{EXTERNAL_SCRIPT}" integrity="{EXTERNAL_SCRIPT_SRI}" crossorigin="anonymous"></script>"#)
    };
    format!(
        r#"<!DOCTYPE html>
<html>
<head>
<title>BuggyLite Shop</title>
{external}
<script src="/js/app.js"></script>
<script src="/js/cart.js"></script>
</head>
<body>
<h1>BuggyLite Shop</h1>
<p>Welcome. Nothing here is for sale.</p>
</body>
</html>
"#
    )
}

fn listing_page() -> String {
    r#"<!DOCTYPE HTML PUBLIC "-//W3C//DTD HTML 3.2 Final//EN">
<html>
<head><title>Index of /js</title></head>
<body>
<h1>Index of /js</h1>
<pre><a href="../">Parent Directory</a>
<a href="app.js">app.js</a>
<a href="cart.js">cart.js</a>
</pre>
</body>
</html>
"#
    .into()
}

/// Headers every response carries, per the disclosure and header toggles.
fn decorate(mut resp: Response, config: &TestbedConfig) -> Response {
    resp.headers.push(("Server".into(), config.server_header_value().into()));
    if !config.enabled(TestCase::SecurityHeadersMissing) {
        for (k, v) in [
            ("X-Frame-Options", "DENY"),
            ("X-XSS-Protection", "1; mode=block"),
            ("Strict-Transport-Security", "max-age=31536000"),
            ("X-Content-Type-Options", "nosniff"),
        ] {
            resp.headers.push((k.into(), v.into()));
        }
    }
    resp
}

/// Answer for `req`. `tls` is false on the plain-HTTP port, whose GETs
/// redirect to `https_port` unless the plain-HTTP toggle is on.
pub fn respond(req: &Request, config: &TestbedConfig, tls: bool, https_port: u16) -> Response {
    let resp = if req.method == "TRACE" {
        trace(req, config)
    } else if !tls && !config.enabled(TestCase::PlainHttpNoRedirect) {
        let host = req.host.as_deref().map(strip_port).unwrap_or("localhost");
        let location = if https_port == 443 { format!("https://{host}/") } else { format!("https://{host}:{https_port}/") };
        let mut r = Response::new(301, "text/html", format!("<a href=\"{location}\">moved</a>"));
        r.headers.push(("Location".into(), location));
        r
    } else if req.method != "GET" && req.method != "HEAD" {
        Response::new(405, "text/plain", "method not allowed\n")
    } else {
        match req.path.split('?').next().unwrap_or("/") {
            "/" | "/index.html" => Response::new(config.index_status, "text/html; charset=utf-8", index_page(config)),
            "/js/" | "/js" => {
                if config.enabled(TestCase::BrowsableDirectory) {
                    Response::new(200, "text/html", listing_page())
                } else {
                    Response::new(403, "text/html", "<h1>Forbidden</h1>")
                }
            }
            "/js/app.js" | "/js/cart.js" => Response::new(200, "application/javascript", "console.log('buggylite');\n"),
            _ => Response::new(404, "text/html", "<h1>Not Found</h1>"),
        }
    };
    let mut resp = decorate(resp, config);
    if req.method == "HEAD" {
        resp.body.clear();
    }
    resp
}

fn strip_port(host: &str) -> &str {
    if host.starts_with('[') {
        return host.split_inclusive(']').next().unwrap_or(host);
    }
    host.rsplit_once(':').map(|(h, _)| h).unwrap_or(host)
}

fn trace(req: &Request, config: &TestbedConfig) -> Response {
    if config.enabled(TestCase::TraceEnabled) {
        return Response::new(200, "message/http", req.raw.clone());
    }
    match config.trace_mode {
        TraceMode::Reject405 => Response::new(405, "text/plain", "TRACE not allowed\n"),
        TraceMode::Fake200 => Response::new(200, "text/html", "<html><body>OK</body></html>"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(method: &str, path: &str) -> Request {
        let raw = format!("{method} {path} HTTP/1.1\r\nHost: localhost:8080\r\nX-Probe-Nonce: abc123\r\n\r\n");
        read_request(&mut raw.as_bytes()).unwrap().unwrap()
    }

    #[test]
    fn parses_request_head() {
        let r = req("GET", "/js/");
        assert_eq!((r.method.as_str(), r.path.as_str(), r.host.as_deref()), ("GET", "/js/", Some("localhost:8080")));
        assert!(read_request(&mut &b""[..]).unwrap().is_none());
    }

    #[test]
    fn plain_http_redirects_by_default() {
        let r = respond(&req("GET", "/"), &TestbedConfig::new(), false, 8443);
        assert_eq!(r.status, 301);
        assert!(r.headers.iter().any(|(k, v)| k == "Location" && v == "https://localhost:8443/"));
        let r = respond(&req("GET", "/"), &TestbedConfig::only(TestCase::PlainHttpNoRedirect), false, 8443);
        assert_eq!(r.status, 200);
    }

    #[test]
    fn trace_modes() {
        let echo = respond(&req("TRACE", "/"), &TestbedConfig::only(TestCase::TraceEnabled), true, 443);
        assert_eq!(echo.status, 200);
        assert!(String::from_utf8_lossy(&echo.body).contains("X-Probe-Nonce: abc123"));
        assert_eq!(respond(&req("TRACE", "/"), &TestbedConfig::new(), true, 443).status, 405);
        let mut c = TestbedConfig::new();
        c.trace_mode = TraceMode::Fake200;
        let fake = respond(&req("TRACE", "/"), &c, true, 443);
        assert_eq!(fake.status, 200);
        assert!(!String::from_utf8_lossy(&fake.body).contains("abc123"));
    }

    #[test]
    fn header_toggles() {
        let has = |r: &Response, k: &str| r.headers.iter().any(|(n, _)| n == k);
        let r = respond(&req("GET", "/"), &TestbedConfig::new(), true, 443);
        assert!(has(&r, "Strict-Transport-Security"));
        let r = respond(&req("GET", "/"), &TestbedConfig::only(TestCase::SecurityHeadersMissing), true, 443);
        assert!(!has(&r, "X-Frame-Options"));
    }

    #[test]
    fn listing_toggle() {
        assert_eq!(respond(&req("GET", "/js/"), &TestbedConfig::new(), true, 443).status, 403);
        let r = respond(&req("GET", "/js/"), &TestbedConfig::only(TestCase::BrowsableDirectory), true, 443);
        assert!(String::from_utf8_lossy(&r.body).contains("Index of /js"));
    }
}
