//! Minimal DNS wire codec: A-record queries and responses.
//!
//! The encoder never emits compression pointers; the decoder tolerates them.
//! Only QTYPE A / QCLASS IN with a single question is modeled, which is all
//! the poisoning behavior needs.

use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use super::WireError;

/// Longest single label permitted in a domain name.
pub const MAX_LABEL_LEN: usize = 63;
/// Longest full domain name (presentation form, without trailing dot).
pub const MAX_NAME_LEN: usize = 253;

const QTYPE_A: u16 = 1;
const QCLASS_IN: u16 = 1;
const FLAGS_QUERY: u16 = 0x0100; // RD
const FLAGS_RESPONSE: u16 = 0x8180; // QR | RD | RA
const MAX_POINTER_JUMPS: usize = 16;

/// One A record in the answer section.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DnsAnswer {
    pub name: String,
    pub addr: Ipv4Addr,
    pub ttl_seconds: u32,
}

/// A decoded (or to-be-encoded) DNS message with a single A question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DnsMessage {
    pub id: u16,
    pub is_response: bool,
    pub qname: String,
    pub answers: Vec<DnsAnswer>,
}

impl DnsMessage {
    pub fn query(id: u16, qname: &str) -> Self {
        Self {
            id,
            is_response: false,
            qname: qname.to_string(),
            answers: Vec::new(),
        }
    }

    pub fn response(id: u16, qname: &str, answers: Vec<DnsAnswer>) -> Self {
        Self {
            id,
            is_response: true,
            qname: qname.to_string(),
            answers,
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        if !self.is_response && !self.answers.is_empty() {
            return Err(WireError::MalformedDns("query carries answer records"));
        }
        let mut out = Vec::with_capacity(64);
        out.extend_from_slice(&self.id.to_be_bytes());
        let flags = if self.is_response {
            FLAGS_RESPONSE
        } else {
            FLAGS_QUERY
        };
        out.extend_from_slice(&flags.to_be_bytes());
        out.extend_from_slice(&1u16.to_be_bytes()); // QDCOUNT
        out.extend_from_slice(&(self.answers.len() as u16).to_be_bytes()); // ANCOUNT
        out.extend_from_slice(&0u16.to_be_bytes()); // NSCOUNT
        out.extend_from_slice(&0u16.to_be_bytes()); // ARCOUNT
        encode_name(&self.qname, &mut out)?;
        out.extend_from_slice(&QTYPE_A.to_be_bytes());
        out.extend_from_slice(&QCLASS_IN.to_be_bytes());
        for answer in &self.answers {
            encode_name(&answer.name, &mut out)?;
            out.extend_from_slice(&QTYPE_A.to_be_bytes());
            out.extend_from_slice(&QCLASS_IN.to_be_bytes());
            out.extend_from_slice(&answer.ttl_seconds.to_be_bytes());
            out.extend_from_slice(&4u16.to_be_bytes());
            out.extend_from_slice(&answer.addr.octets());
        }
        Ok(out)
    }
}

/// Encodes a single-question A query.
pub fn encode_dns_query(id: u16, qname: &str) -> Result<Vec<u8>, WireError> {
    DnsMessage::query(id, qname).encode()
}

/// Decodes a DNS message, keeping the question name and any A/IN answers.
/// Non-A answer records are skipped; compression pointers are followed.
pub fn decode_dns(bytes: &[u8]) -> Result<DnsMessage, WireError> {
    let mut cur = Cursor::new(bytes);
    let id = cur.read_u16()?;
    let flags = cur.read_u16()?;
    let qdcount = cur.read_u16()?;
    let ancount = cur.read_u16()?;
    let _nscount = cur.read_u16()?;
    let _arcount = cur.read_u16()?;
    if qdcount != 1 {
        return Err(WireError::MalformedDns("expected exactly one question"));
    }
    let qname = read_name(&mut cur)?;
    let qtype = cur.read_u16()?;
    let _qclass = cur.read_u16()?;
    if qtype != QTYPE_A {
        return Err(WireError::MalformedDns("unsupported qtype"));
    }
    let is_response = flags & 0x8000 != 0;
    let mut answers = Vec::with_capacity(ancount as usize);
    for _ in 0..ancount {
        let name = read_name(&mut cur)?;
        let rtype = cur.read_u16()?;
        let rclass = cur.read_u16()?;
        let ttl_seconds = cur.read_u32()?;
        let rdlen = cur.read_u16()? as usize;
        let rdata = cur.read_slice(rdlen)?;
        if rtype == QTYPE_A && rclass == QCLASS_IN {
            if rdlen != 4 {
                return Err(WireError::MalformedDns("A record with bad rdlength"));
            }
            answers.push(DnsAnswer {
                name,
                addr: Ipv4Addr::new(rdata[0], rdata[1], rdata[2], rdata[3]),
                ttl_seconds,
            });
        }
    }
    if !is_response && !answers.is_empty() {
        return Err(WireError::MalformedDns("query carries answer records"));
    }
    Ok(DnsMessage {
        id,
        is_response,
        qname,
        answers,
    })
}

fn encode_name(name: &str, out: &mut Vec<u8>) -> Result<(), WireError> {
    if name.is_empty() || name.len() > MAX_NAME_LEN {
        return Err(WireError::MalformedDns("name length out of range"));
    }
    for label in name.split('.') {
        if label.is_empty() || label.len() > MAX_LABEL_LEN {
            return Err(WireError::MalformedDns("label length out of range"));
        }
        if !label.bytes().all(|b| b.is_ascii() && b != b'.') {
            return Err(WireError::MalformedDns("non-ASCII label"));
        }
        out.push(label.len() as u8);
        out.extend_from_slice(label.as_bytes());
    }
    out.push(0);
    Ok(())
}

fn read_name(cur: &mut Cursor<'_>) -> Result<String, WireError> {
    let mut labels: Vec<String> = Vec::new();
    let mut pos = cur.pos;
    let mut jumped = false;
    let mut jumps = 0;
    loop {
        let len = *cur
            .bytes
            .get(pos)
            .ok_or(WireError::MalformedDns("truncated name"))? as usize;
        if len & 0xC0 == 0xC0 {
            // compression pointer
            let low =
                *cur.bytes
                    .get(pos + 1)
                    .ok_or(WireError::MalformedDns("truncated pointer"))? as usize;
            if !jumped {
                cur.pos = pos + 2;
                jumped = true;
            }
            pos = ((len & 0x3F) << 8) | low;
            jumps += 1;
            if jumps > MAX_POINTER_JUMPS {
                return Err(WireError::MalformedDns("pointer loop"));
            }
            continue;
        }
        if len == 0 {
            if !jumped {
                cur.pos = pos + 1;
            }
            break;
        }
        if len > MAX_LABEL_LEN {
            return Err(WireError::MalformedDns("label length out of range"));
        }
        let raw = cur
            .bytes
            .get(pos + 1..pos + 1 + len)
            .ok_or(WireError::MalformedDns("truncated label"))?;
        let label =
            std::str::from_utf8(raw).map_err(|_| WireError::MalformedDns("non-ASCII label"))?;
        labels.push(label.to_string());
        pos += 1 + len;
    }
    let name = labels.join(".");
    if name.is_empty() || name.len() > MAX_NAME_LEN {
        return Err(WireError::MalformedDns("name length out of range"));
    }
    Ok(name)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn read_slice(&mut self, len: usize) -> Result<&'a [u8], WireError> {
        let out = self
            .bytes
            .get(self.pos..self.pos + len)
            .ok_or(WireError::MalformedDns("truncated message"))?;
        self.pos += len;
        Ok(out)
    }

    fn read_u16(&mut self) -> Result<u16, WireError> {
        let s = self.read_slice(2)?;
        Ok(u16::from_be_bytes([s[0], s[1]]))
    }

    fn read_u32(&mut self) -> Result<u32, WireError> {
        let s = self.read_slice(4)?;
        Ok(u32::from_be_bytes([s[0], s[1], s[2], s[3]]))
    }
}
