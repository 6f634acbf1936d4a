//! One-request-per-connection HTTP/1.1 client.

use std::io::{self, Read, Write};

use url::Url;

pub const USER_AGENT: &str = concat!("pciscan/", env!("CARGO_PKG_VERSION"), " (non-intrusive compliance check)");
pub const DEFAULT_BODY_CAP: usize = 2 * 1024 * 1024;
const MAX_HEAD: usize = 64 * 1024;

/// Response header multimap; names compare case-insensitively.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Headers(Vec<(String, String)>);

impl Headers {
    pub fn new(pairs: Vec<(String, String)>) -> Self {
        Headers(pairs)
    }
    pub fn get(&self, name: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }
    pub fn get_all<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.0
            .iter()
            .filter(move |(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpExchange {
    /// Request line and headers exactly as sent.
    pub request: String,
    pub status_code: u16,
    pub headers: Headers,
    /// Body, at most the configured cap.
    pub body: Vec<u8>,
    pub body_truncated: bool,
    pub final_url: Url,
}

impl HttpExchange {
    pub fn is_https(&self) -> bool {
        self.final_url.scheme() == "https"
    }
    pub fn body_text(&self) -> std::borrow::Cow<'_, str> {
        String::from_utf8_lossy(&self.body)
    }
    pub fn is_redirect(&self) -> bool {
        (300..400).contains(&self.status_code)
    }
}

pub fn host_header(url: &Url) -> String {
    let host = url.host_str().unwrap_or("");
    match url.port() {
        Some(p) => format!("{host}:{p}"),
        None => host.to_string(),
    }
}

pub fn build_request(method: &str, url: &Url, extra: &[(&str, &str)]) -> String {
    let mut target = url.path().to_string();
    if let Some(q) = url.query() {
        target.push('?');
        target.push_str(q);
    }
    let mut req = format!(
        "{method} {target} HTTP/1.1\r\nHost: {}\r\nUser-Agent: {USER_AGENT}\r\nAccept: */*\r\nConnection: close\r\n",
        host_header(url)
    );
    for (k, v) in extra {
        req.push_str(&format!("{k}: {v}\r\n"));
    }
    req.push_str("\r\n");
    req
}

/// Sends one request and reads the response. The stream is not reused.
pub fn exchange<S: Read + Write>(
    stream: &mut S,
    method: &str,
    url: &Url,
    extra: &[(&str, &str)],
    body_cap: usize,
) -> io::Result<HttpExchange> {
    let request = build_request(method, url, extra);
    stream.write_all(request.as_bytes())?;
    stream.flush()?;
    let (status_code, headers, body, body_truncated) = read_response(stream, body_cap, method == "HEAD")?;
    Ok(HttpExchange { request, status_code, headers, body, body_truncated, final_url: url.clone() })
}

fn read_response<R: Read>(r: &mut R, body_cap: usize, head_only: bool) -> io::Result<(u16, Headers, Vec<u8>, bool)> {
    let mut buf = Vec::with_capacity(8192);
    let mut chunk = [0u8; 8192];
    let (status, headers, head_len) = loop {
        let n = read_some(r, &mut chunk)?;
        if n == 0 {
            return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "connection closed before response head"));
        }
        buf.extend_from_slice(&chunk[..n]);
        let mut raw_headers = [httparse::EMPTY_HEADER; 96];
        let mut resp = httparse::Response::new(&mut raw_headers);
        match resp.parse(&buf) {
            Ok(httparse::Status::Complete(len)) => {
                let status = resp.code.unwrap_or(0);
                let headers = resp
                    .headers
                    .iter()
                    .map(|h| (h.name.to_string(), String::from_utf8_lossy(h.value).trim().to_string()))
                    .collect();
                break (status, Headers(headers), len);
            }
            Ok(httparse::Status::Partial) if buf.len() < MAX_HEAD => continue,
            Ok(httparse::Status::Partial) => {
                return Err(io::Error::new(io::ErrorKind::InvalidData, "response head too large"))
            }
            Err(e) => return Err(io::Error::new(io::ErrorKind::InvalidData, format!("bad response: {e}"))),
        }
    };
    let mut raw_body = buf.split_off(head_len);
    if head_only || status == 204 || status == 304 {
        return Ok((status, headers, Vec::new(), false));
    }
    let chunked = headers
        .get("transfer-encoding")
        .map(|v| v.to_ascii_lowercase().contains("chunked"))
        .unwrap_or(false);
    let content_length = if chunked { None } else { headers.get("content-length").and_then(|v| v.parse::<usize>().ok()) };
    // Chunk framing overhead is bounded by a small factor of the payload.
    let raw_cap = if chunked { body_cap + body_cap / 8 + 4096 } else { body_cap };
    let want = content_length.map(|l| l.min(raw_cap)).unwrap_or(raw_cap);
    let mut truncated = false;
    while raw_body.len() < want {
        match read_some(r, &mut chunk) {
            Ok(0) => break,
            Ok(n) => raw_body.extend_from_slice(&chunk[..n]),
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => break,
            Err(e) => return Err(e),
        }
    }
    if raw_body.len() >= raw_cap && content_length.map(|l| l > raw_cap).unwrap_or(true) {
        truncated = true;
    }
    raw_body.truncate(want);
    let mut body = if chunked { decode_chunked(&raw_body) } else { raw_body };
    if body.len() > body_cap {
        body.truncate(body_cap);
        truncated = true;
    }
    Ok((status, headers, body, truncated))
}

/// A peer closing a TLS stream without close_notify still ends the body.
fn read_some<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    match r.read(buf) {
        Err(e) if matches!(e.kind(), io::ErrorKind::UnexpectedEof | io::ErrorKind::ConnectionReset) => Ok(0),
        other => other,
    }
}

fn decode_chunked(mut raw: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    while let Some(eol) = raw.windows(2).position(|w| w == b"\r\n") {
        let size_field = String::from_utf8_lossy(&raw[..eol]);
        let size_hex = size_field.split(';').next().unwrap_or("").trim();
        let Ok(size) = usize::from_str_radix(size_hex, 16) else { break };
        raw = &raw[eol + 2..];
        if size == 0 {
            break;
        }
        let take = size.min(raw.len());
        out.extend_from_slice(&raw[..take]);
        if take < size || raw.len() < size + 2 {
            break;
        }
        raw = &raw[size + 2..];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    struct Canned {
        input: Cursor<Vec<u8>>,
        sent: Vec<u8>,
    }
    impl Read for Canned {
        fn read(&mut self, b: &mut [u8]) -> io::Result<usize> {
            self.input.read(b)
        }
    }
    impl Write for Canned {
        fn write(&mut self, b: &[u8]) -> io::Result<usize> {
            self.sent.extend_from_slice(b);
            Ok(b.len())
        }
        fn flush(&mut self) -> io::Result<()> {
            Ok(())
        }
    }

    fn run(response: &str, cap: usize) -> HttpExchange {
        let mut c = Canned { input: Cursor::new(response.as_bytes().to_vec()), sent: vec![] };
        let url = Url::parse("http://example.com:8080/a?b=1").unwrap();
        let ex = exchange(&mut c, "GET", &url, &[("X-Probe-Nonce", "n1")], cap).unwrap();
        assert_eq!(String::from_utf8(c.sent).unwrap(), ex.request);
        ex
    }

    #[test]
    fn request_carries_required_headers() {
        let url = Url::parse("http://example.com/").unwrap();
        let r = build_request("TRACE", &url, &[("X-Probe-Nonce", "abc")]);
        assert!(r.starts_with("TRACE / HTTP/1.1\r\nHost: example.com\r\n"));
        assert!(r.contains("User-Agent: pciscan/"));
        assert!(r.contains("Accept: */*\r\n"));
        assert!(r.contains("Connection: close\r\n"));
        assert!(r.ends_with("X-Probe-Nonce: abc\r\n\r\n"));
    }

    #[test]
    fn parses_content_length_body_and_headers() {
        let ex = run("HTTP/1.1 200 OK\r\nServer: nginx\r\nx-frame-options: DENY\r\nX-Frame-Options: SAMEORIGIN\r\nContent-Length: 5\r\n\r\nhello trailing", 1024);
        assert_eq!(ex.status_code, 200);
        assert_eq!(ex.body, b"hello");
        assert!(ex.request.starts_with("GET /a?b=1 HTTP/1.1\r\nHost: example.com:8080\r\n"));
        assert_eq!(ex.headers.get_all("X-FRAME-OPTIONS").count(), 2);
        assert_eq!(ex.headers.get("server"), Some("nginx"));
    }

    #[test]
    fn decodes_chunked_body() {
        let ex = run("HTTP/1.1 200 OK\r\nTransfer-Encoding: chunked\r\n\r\n5\r\nhello\r\n6\r\n world\r\n0\r\n\r\n", 1024);
        assert_eq!(ex.body, b"hello world");
    }

    #[test]
    fn caps_body() {
        let body = "x".repeat(100);
        let ex = run(&format!("HTTP/1.1 200 OK\r\n\r\n{body}"), 10);
        assert_eq!(ex.body.len(), 10);
        assert!(ex.body_truncated);
    }

    #[test]
    fn rejects_garbage() {
        let mut c = Canned { input: Cursor::new(b"SSH-2.0-OpenSSH_8.0\r\n\r\n".to_vec()), sent: vec![] };
        let url = Url::parse("http://example.com/").unwrap();
        assert!(exchange(&mut c, "GET", &url, &[], 100).is_err());
    }
}
