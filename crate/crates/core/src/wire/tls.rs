//! TLS record framing for handshake type 1: build and parse ClientHello
//! messages far enough to extract the SNI host_name entry. No key exchange,
//! no crypto.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::WireError;

const CONTENT_TYPE_HANDSHAKE: u8 = 22;
const HANDSHAKE_CLIENT_HELLO: u8 = 1;
const HANDSHAKE_SERVER_HELLO: u8 = 2;
const EXT_SERVER_NAME: u16 = 0;
const SNI_HOST_NAME: u8 = 0;

/// The fields of a ClientHello this simulator models.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientHello {
    pub record_version: [u8; 2],
    pub sni: Option<String>,
    #[serde(with = "hex::serde")]
    pub raw: Vec<u8>,
}

/// Builds a deterministic ClientHello record, with a server_name extension
/// when `sni` is given. The 32 random bytes are derived from the SNI so the
/// same probe input always produces the same bytes.
pub fn build_client_hello(sni: Option<&str>) -> Vec<u8> {
    let mut body = Vec::with_capacity(128);
    body.extend_from_slice(&[0x03, 0x03]); // client_version TLS 1.2
    body.extend_from_slice(&derived_random(sni.unwrap_or("no-sni")));
    body.push(0); // session_id length
    body.extend_from_slice(&[0x00, 0x06, 0x13, 0x01, 0x13, 0x02, 0xc0, 0x2f]); // cipher_suites
    body.extend_from_slice(&[0x01, 0x00]); // compression: null only
    let mut extensions = Vec::new();
    if let Some(name) = sni {
        let name_bytes = name.as_bytes();
        let list_len = (name_bytes.len() + 3) as u16;
        let ext_len = list_len + 2;
        extensions.extend_from_slice(&EXT_SERVER_NAME.to_be_bytes());
        extensions.extend_from_slice(&ext_len.to_be_bytes());
        extensions.extend_from_slice(&list_len.to_be_bytes());
        extensions.push(SNI_HOST_NAME);
        extensions.extend_from_slice(&(name_bytes.len() as u16).to_be_bytes());
        extensions.extend_from_slice(name_bytes);
    }
    body.extend_from_slice(&(extensions.len() as u16).to_be_bytes());
    body.extend_from_slice(&extensions);

    let mut handshake = Vec::with_capacity(body.len() + 4);
    handshake.push(HANDSHAKE_CLIENT_HELLO);
    handshake.extend_from_slice(&u24(body.len()));
    handshake.extend_from_slice(&body);

    let mut record = Vec::with_capacity(handshake.len() + 5);
    record.push(CONTENT_TYPE_HANDSHAKE);
    record.extend_from_slice(&[0x03, 0x01]); // record-layer version
    record.extend_from_slice(&(handshake.len() as u16).to_be_bytes());
    record.extend_from_slice(&handshake);
    record
}

/// A minimal deterministic ServerHello record; probes only check that server
/// handshake bytes arrived before any reset.
pub fn build_server_hello() -> Vec<u8> {
    let mut body = Vec::with_capacity(40);
    body.extend_from_slice(&[0x03, 0x03]);
    body.extend_from_slice(&derived_random("server-hello"));
    body.push(0); // session_id length
    body.extend_from_slice(&[0x13, 0x01]); // chosen cipher
    body.push(0); // compression
    body.extend_from_slice(&[0x00, 0x00]); // no extensions

    let mut handshake = Vec::with_capacity(body.len() + 4);
    handshake.push(HANDSHAKE_SERVER_HELLO);
    handshake.extend_from_slice(&u24(body.len()));
    handshake.extend_from_slice(&body);

    let mut record = Vec::with_capacity(handshake.len() + 5);
    record.push(CONTENT_TYPE_HANDSHAKE);
    record.extend_from_slice(&[0x03, 0x03]);
    record.extend_from_slice(&(handshake.len() as u16).to_be_bytes());
    record.extend_from_slice(&handshake);
    record
}

/// True when the payload begins with a complete TLS handshake record.
/// Records split across segments are not reassembled, so a fragment whose
/// declared length overruns the payload does not count.
pub fn looks_like_handshake_record(payload: &[u8]) -> bool {
    if payload.len() < 5 || payload[0] != CONTENT_TYPE_HANDSHAKE || payload[1] != 0x03 {
        return false;
    }
    let record_len = u16::from_be_bytes([payload[3], payload[4]]) as usize;
    5 + record_len <= payload.len()
}

/// Parses a ClientHello record and extracts the SNI when present.
pub fn parse_client_hello(bytes: &[u8]) -> Result<ClientHello, WireError> {
    if bytes.first() != Some(&CONTENT_TYPE_HANDSHAKE) {
        return Err(WireError::NotClientHello(
            "record content-type is not handshake",
        ));
    }
    if bytes.len() < 5 {
        return Err(WireError::MalformedTls("truncated record header"));
    }
    let record_version = [bytes[1], bytes[2]];
    let record_len = u16::from_be_bytes([bytes[3], bytes[4]]) as usize;
    let record = bytes
        .get(5..5 + record_len)
        .ok_or(WireError::MalformedTls("record length exceeds input"))?;
    if record.first() != Some(&HANDSHAKE_CLIENT_HELLO) {
        return Err(WireError::NotClientHello(
            "handshake type is not client_hello",
        ));
    }
    if record.len() < 4 {
        return Err(WireError::MalformedTls("truncated handshake header"));
    }
    let body_len = ((record[1] as usize) << 16) | ((record[2] as usize) << 8) | record[3] as usize;
    let body = record
        .get(4..4 + body_len)
        .ok_or(WireError::MalformedTls("handshake length exceeds record"))?;

    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8], WireError> {
        let s = body
            .get(*pos..*pos + n)
            .ok_or(WireError::MalformedTls("truncated client_hello body"))?;
        *pos += n;
        Ok(s)
    };
    take(&mut pos, 2)?; // client_version
    take(&mut pos, 32)?; // random
    let session_len = take(&mut pos, 1)?[0] as usize;
    take(&mut pos, session_len)?;
    let cipher_len = {
        let s = take(&mut pos, 2)?;
        u16::from_be_bytes([s[0], s[1]]) as usize
    };
    take(&mut pos, cipher_len)?;
    let compression_len = take(&mut pos, 1)?[0] as usize;
    take(&mut pos, compression_len)?;

    let mut sni = None;
    if pos < body.len() {
        let ext_total = {
            let s = take(&mut pos, 2)?;
            u16::from_be_bytes([s[0], s[1]]) as usize
        };
        let ext_end = pos + ext_total;
        if ext_end > body.len() {
            return Err(WireError::MalformedTls("extensions length exceeds body"));
        }
        while pos < ext_end {
            let ext_type = {
                let s = take(&mut pos, 2)?;
                u16::from_be_bytes([s[0], s[1]])
            };
            let ext_len = {
                let s = take(&mut pos, 2)?;
                u16::from_be_bytes([s[0], s[1]]) as usize
            };
            let ext = take(&mut pos, ext_len)?;
            if ext_type == EXT_SERVER_NAME {
                sni = parse_server_name(ext)?;
            }
        }
    }
    Ok(ClientHello {
        record_version,
        sni,
        raw: bytes.to_vec(),
    })
}

fn parse_server_name(ext: &[u8]) -> Result<Option<String>, WireError> {
    if ext.len() < 2 {
        return Err(WireError::MalformedTls("truncated server_name list"));
    }
    let list_len = u16::from_be_bytes([ext[0], ext[1]]) as usize;
    let list = ext.get(2..2 + list_len).ok_or(WireError::MalformedTls(
        "server_name list exceeds extension",
    ))?;
    let mut pos = 0usize;
    while pos + 3 <= list.len() {
        let name_type = list[pos];
        let name_len = u16::from_be_bytes([list[pos + 1], list[pos + 2]]) as usize;
        let name = list
            .get(pos + 3..pos + 3 + name_len)
            .ok_or(WireError::MalformedTls("truncated host_name entry"))?;
        if name_type == SNI_HOST_NAME {
            let host = std::str::from_utf8(name)
                .map_err(|_| WireError::MalformedTls("non-UTF-8 host_name"))?;
            return Ok(Some(host.to_string()));
        }
        pos += 3 + name_len;
    }
    Ok(None)
}

fn derived_random(seed: &str) -> [u8; 32] {
    let digest = Sha256::digest(seed.as_bytes());
    let mut out = [0u8; 32];
    out.copy_from_slice(&digest);
    out
}

fn u24(len: usize) -> [u8; 3] {
    [(len >> 16) as u8, (len >> 8) as u8, len as u8]
}
