//! Simulated datagrams/segments and the identifiers they travel between.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Default initial TTL for application traffic. TTL-limited tracing overrides
/// it per probe packet.
pub const DEFAULT_TTL: u8 = 64;

/// Identity of an end host (vantage client, resolver, origin server, ...).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HostId(pub String);

impl HostId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for HostId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

impl fmt::Display for HostId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Identity of a forwarding hop.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RouterId(pub String);

impl RouterId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for RouterId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

impl fmt::Display for RouterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Transport kind. "TCP-lite" carries flags and payload as discrete events;
/// there is no sequence-number arithmetic or retransmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    Tcp,
    Udp,
}

/// TCP-lite flag set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TcpFlags {
    pub syn: bool,
    pub ack: bool,
    pub rst: bool,
    pub fin: bool,
    pub psh: bool,
}

impl TcpFlags {
    pub const SYN: Self = Self {
        syn: true,
        ack: false,
        rst: false,
        fin: false,
        psh: false,
    };
    pub const SYN_ACK: Self = Self {
        syn: true,
        ack: true,
        rst: false,
        fin: false,
        psh: false,
    };
    pub const ACK: Self = Self {
        syn: false,
        ack: true,
        rst: false,
        fin: false,
        psh: false,
    };
    pub const RST: Self = Self {
        syn: false,
        ack: false,
        rst: true,
        fin: false,
        psh: false,
    };
    pub const PSH_ACK: Self = Self {
        syn: false,
        ack: true,
        rst: false,
        fin: false,
        psh: true,
    };
}

/// A simulated network packet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packet {
    pub src: HostId,
    pub dst: HostId,
    pub ttl: u8,
    pub proto: Transport,
    pub src_port: u16,
    pub dst_port: u16,
    /// Present iff `proto` is TCP.
    pub tcp_flags: Option<TcpFlags>,
    #[serde(with = "hex::serde")]
    pub payload: Vec<u8>,
}

impl Packet {
    pub fn udp(src: HostId, dst: HostId, src_port: u16, dst_port: u16, payload: Vec<u8>) -> Self {
        Self {
            src,
            dst,
            ttl: DEFAULT_TTL,
            proto: Transport::Udp,
            src_port,
            dst_port,
            tcp_flags: None,
            payload,
        }
    }

    pub fn tcp(
        src: HostId,
        dst: HostId,
        src_port: u16,
        dst_port: u16,
        flags: TcpFlags,
        payload: Vec<u8>,
    ) -> Self {
        Self {
            src,
            dst,
            ttl: DEFAULT_TTL,
            proto: Transport::Tcp,
            src_port,
            dst_port,
            tcp_flags: Some(flags),
            payload,
        }
    }

    pub fn with_ttl(mut self, ttl: u8) -> Self {
        self.ttl = ttl;
        self
    }

    /// Checks the packet invariants: ttl >= 1 on send, tcp_flags present iff
    /// the transport is TCP.
    pub fn is_valid(&self) -> bool {
        self.ttl >= 1 && (self.tcp_flags.is_some() == (self.proto == Transport::Tcp))
    }

    pub fn flags(&self) -> TcpFlags {
        self.tcp_flags.unwrap_or_default()
    }
}
