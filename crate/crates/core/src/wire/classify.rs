//! First-payload protocol classification for the whitelist layer.
//!
//! Classification requires both the expected port and a payload grammar
//! match: a DPI whitelist that forwards "DNS, HTTP, HTTPS" inspects content,
//! not just ports.

use serde::{Deserialize, Serialize};

use super::{decode_dns, tls};
use crate::netsim::Transport;

/// Known HTTP method tokens. Membership is checked case-insensitively here:
/// DPI classifiers are liberal about what still "looks like" web traffic,
/// while the rule engine in the censor matches method tokens exactly.
const METHOD_TOKENS: &[&str] = &[
    "GET", "HEAD", "POST", "PUT", "DELETE", "CONNECT", "OPTIONS", "TRACE", "PATCH",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolClass {
    DnsUdp,
    Http,
    Tls,
    Other,
}

impl std::fmt::Display for ProtocolClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ProtocolClass::DnsUdp => "dns_udp",
            ProtocolClass::Http => "http",
            ProtocolClass::Tls => "tls",
            ProtocolClass::Other => "other",
        };
        f.write_str(s)
    }
}

/// Classifies the first data unit of a flow. Total: anything that fails the
/// port+grammar checks is `Other`.
pub fn classify_protocol(proto: Transport, dst_port: u16, payload: &[u8]) -> ProtocolClass {
    match proto {
        Transport::Udp => {
            if dst_port == 53 && is_dns_query(payload) {
                return ProtocolClass::DnsUdp;
            }
        }
        Transport::Tcp => {
            if dst_port == 80 && starts_with_method_token(payload) {
                return ProtocolClass::Http;
            }
            if dst_port == 443 && tls::looks_like_handshake_record(payload) {
                return ProtocolClass::Tls;
            }
        }
    }
    ProtocolClass::Other
}

fn is_dns_query(payload: &[u8]) -> bool {
    matches!(decode_dns(payload), Ok(msg) if !msg.is_response)
}

fn starts_with_method_token(payload: &[u8]) -> bool {
    METHOD_TOKENS.iter().any(|token| {
        payload.len() > token.len()
            && payload[token.len()] == b' '
            && payload[..token.len()].eq_ignore_ascii_case(token.as_bytes())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::{build_client_hello, encode_dns_query};

    #[test]
    fn dns_query_on_port_53() {
        let query = encode_dns_query(9, "example.org").unwrap();
        assert_eq!(
            classify_protocol(Transport::Udp, 53, &query),
            ProtocolClass::DnsUdp
        );
        // Same bytes on another port fail the port check.
        assert_eq!(
            classify_protocol(Transport::Udp, 5353, &query),
            ProtocolClass::Other
        );
    }

    #[test]
    fn openvpn_like_payload_is_other() {
        let payload = [0x38, 0x01, 0x02, 0x03, 0x04, 0x05, 0x06, 0x07, 0x08, 0x00];
        assert_eq!(
            classify_protocol(Transport::Udp, 1194, &payload),
            ProtocolClass::Other
        );
    }

    #[test]
    fn client_hello_on_port_443() {
        let hello = build_client_hello(Some("example.org"));
        assert_eq!(
            classify_protocol(Transport::Tcp, 443, &hello),
            ProtocolClass::Tls
        );
    }

    #[test]
    fn split_client_hello_fragment_is_other() {
        // First segment of a hello split across two segments: record header
        // intact, body cut short. No reassembly, so it does not classify.
        let mut fragment = build_client_hello(Some("example.org"));
        fragment.truncate(fragment.len() / 2);
        assert_eq!(
            classify_protocol(Transport::Tcp, 443, &fragment),
            ProtocolClass::Other
        );
    }

    #[test]
    fn http_request_on_port_80() {
        assert_eq!(
            classify_protocol(Transport::Tcp, 80, b"GET / HTTP/1.1\r\n\r\n"),
            ProtocolClass::Http
        );
        // Mixed-case method still classifies as web traffic.
        assert_eq!(
            classify_protocol(Transport::Tcp, 80, b"gET / HTTP/1.1\r\n\r\n"),
            ProtocolClass::Http
        );
        // Method token must be followed by a space.
        assert_eq!(
            classify_protocol(Transport::Tcp, 80, b"GETX/ HTTP/1.1\r\n\r\n"),
            ProtocolClass::Other
        );
    }

    #[test]
    fn dns_response_does_not_classify_as_query() {
        use crate::wire::{DnsAnswer, DnsMessage};
        let msg = DnsMessage::response(
            1,
            "example.org",
            vec![DnsAnswer {
                name: "example.org".to_string(),
                addr: std::net::Ipv4Addr::new(198, 18, 0, 1),
                ttl_seconds: 60,
            }],
        );
        assert_eq!(
            classify_protocol(Transport::Udp, 53, &msg.encode().unwrap()),
            ProtocolClass::Other
        );
    }

    #[test]
    fn empty_payload_is_other() {
        assert_eq!(
            classify_protocol(Transport::Tcp, 80, b""),
            ProtocolClass::Other
        );
        assert_eq!(
            classify_protocol(Transport::Udp, 53, b""),
            ProtocolClass::Other
        );
    }
}
