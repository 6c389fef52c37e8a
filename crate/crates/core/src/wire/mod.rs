//! Byte-exact codecs for the protocol surface the censor and the probes
//! share: DNS messages, HTTP/1.1 request/response heads, TLS ClientHello
//! records, and a transport-payload protocol classifier.
//!
//! All functions here are pure and stateless; they are safe to call from any
//! number of threads.

mod classify;
mod dns;
mod http;
mod tls;

pub use classify::{classify_protocol, ProtocolClass};
pub use dns::{decode_dns, encode_dns_query, DnsAnswer, DnsMessage, MAX_LABEL_LEN, MAX_NAME_LEN};
pub use http::{
    parse_http_request, parse_http_response, render_http_request, render_http_response,
    HttpRequest, HttpResponse,
};
pub use tls::{
    build_client_hello, build_server_hello, looks_like_handshake_record, parse_client_hello,
    ClientHello,
};

/// Errors produced by the wire codecs.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("malformed DNS message: {0}")]
    MalformedDns(&'static str),
    #[error("malformed HTTP message: {0}")]
    MalformedHttp(&'static str),
    #[error("not a TLS ClientHello: {0}")]
    NotClientHello(&'static str),
    #[error("malformed TLS record: {0}")]
    MalformedTls(&'static str),
}
