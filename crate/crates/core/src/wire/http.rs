//! HTTP/1.1 request/response head codec.
//!
//! Header names keep their exact received casing; the censor's
//! case-sensitivity behavior depends on it. Bodies are opaque bytes.

use serde::{Deserialize, Serialize};

use super::WireError;

const CRLF: &str = "\r\n";
const HEAD_END: &[u8] = b"\r\n\r\n";

/// A parsed request head. `headers` preserves byte-exact name casing and
/// arrival order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpRequest {
    pub method: String,
    pub path: String,
    pub version: String,
    pub headers: Vec<(String, String)>,
}

impl HttpRequest {
    pub fn get(path: &str, host: &str) -> Self {
        Self {
            method: "GET".to_string(),
            path: path.to_string(),
            version: "HTTP/1.1".to_string(),
            headers: vec![("Host".to_string(), host.to_string())],
        }
    }

    /// Host derived from the Host header, looked up case-insensitively as the
    /// protocol requires. The censor does its own, stricter lookup.
    pub fn host(&self) -> Option<&str> {
        self.header_ci("host")
    }

    /// First header whose name equals `name` byte-for-byte.
    pub fn header_exact(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }

    /// First header whose name matches `name` ASCII-case-insensitively.
    pub fn header_ci(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpResponse {
    pub status_code: u16,
    pub reason: String,
    pub headers: Vec<(String, String)>,
    #[serde(with = "hex::serde")]
    pub body: Vec<u8>,
}

impl HttpResponse {
    pub fn new(status_code: u16, reason: &str, body: Vec<u8>) -> Self {
        Self {
            status_code,
            reason: reason.to_string(),
            headers: Vec::new(),
            body,
        }
    }

    pub fn with_header(mut self, name: &str, value: &str) -> Self {
        self.headers.push((name.to_string(), value.to_string()));
        self
    }
}

/// Parses a complete request head (through CRLFCRLF). Anything after the
/// terminator is ignored; requests in this simulator carry no bodies.
pub fn parse_http_request(bytes: &[u8]) -> Result<HttpRequest, WireError> {
    let head_len = find_head_end(bytes)?;
    let head = std::str::from_utf8(&bytes[..head_len])
        .map_err(|_| WireError::MalformedHttp("non-UTF-8 request head"))?;
    let mut lines = head.split(CRLF);
    let request_line = lines
        .next()
        .filter(|l| !l.is_empty())
        .ok_or(WireError::MalformedHttp("missing request line"))?;
    let mut parts = request_line.split(' ');
    let (method, path, version) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
        (Some(m), Some(p), Some(v), None) if !m.is_empty() && !p.is_empty() && !v.is_empty() => {
            (m, p, v)
        }
        _ => return Err(WireError::MalformedHttp("missing request line")),
    };
    let headers = parse_headers(lines)?;
    Ok(HttpRequest {
        method: method.to_string(),
        path: path.to_string(),
        version: version.to_string(),
        headers,
    })
}

/// Renders a request head, reproducing header-name bytes exactly.
pub fn render_http_request(req: &HttpRequest) -> Vec<u8> {
    let mut out = String::new();
    out.push_str(&req.method);
    out.push(' ');
    out.push_str(&req.path);
    out.push(' ');
    out.push_str(&req.version);
    out.push_str(CRLF);
    for (name, value) in &req.headers {
        out.push_str(name);
        out.push_str(": ");
        out.push_str(value);
        out.push_str(CRLF);
    }
    out.push_str(CRLF);
    out.into_bytes()
}

/// Renders a response with CRLF line endings, adding Content-Length when the
/// caller did not set one.
pub fn render_http_response(resp: &HttpResponse) -> Vec<u8> {
    let mut out = format!("HTTP/1.1 {} {}{CRLF}", resp.status_code, resp.reason);
    let mut has_length = false;
    for (name, value) in &resp.headers {
        if name.eq_ignore_ascii_case("content-length") {
            has_length = true;
        }
        out.push_str(name);
        out.push_str(": ");
        out.push_str(value);
        out.push_str(CRLF);
    }
    if !has_length {
        out.push_str(&format!("Content-Length: {}{CRLF}", resp.body.len()));
    }
    out.push_str(CRLF);
    let mut bytes = out.into_bytes();
    bytes.extend_from_slice(&resp.body);
    bytes
}

/// Parses a response head plus body (the remainder after CRLFCRLF).
pub fn parse_http_response(bytes: &[u8]) -> Result<HttpResponse, WireError> {
    let head_len = find_head_end(bytes)?;
    let head = std::str::from_utf8(&bytes[..head_len])
        .map_err(|_| WireError::MalformedHttp("non-UTF-8 response head"))?;
    let mut lines = head.split(CRLF);
    let status_line = lines
        .next()
        .filter(|l| !l.is_empty())
        .ok_or(WireError::MalformedHttp("missing status line"))?;
    let mut parts = status_line.splitn(3, ' ');
    let version = parts.next().unwrap_or_default();
    if !version.starts_with("HTTP/") {
        return Err(WireError::MalformedHttp("missing status line"));
    }
    let status_code: u16 = parts
        .next()
        .and_then(|c| c.parse().ok())
        .ok_or(WireError::MalformedHttp("bad status code"))?;
    if !(100..=599).contains(&status_code) {
        return Err(WireError::MalformedHttp("status code out of range"));
    }
    let reason = parts.next().unwrap_or_default().to_string();
    let headers = parse_headers(lines)?;
    let body = bytes[head_len + HEAD_END.len()..].to_vec();
    Ok(HttpResponse {
        status_code,
        reason,
        headers,
        body,
    })
}

fn find_head_end(bytes: &[u8]) -> Result<usize, WireError> {
    bytes
        .windows(HEAD_END.len())
        .position(|w| w == HEAD_END)
        .ok_or(WireError::MalformedHttp("missing CRLFCRLF terminator"))
}

fn parse_headers<'a>(
    lines: impl Iterator<Item = &'a str>,
) -> Result<Vec<(String, String)>, WireError> {
    let mut headers = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let (name, value) = line
            .split_once(':')
            .ok_or(WireError::MalformedHttp("header without colon"))?;
        if name.is_empty() {
            return Err(WireError::MalformedHttp("empty header name"));
        }
        headers.push((name.to_string(), value.trim().to_string()));
    }
    Ok(headers)
}
