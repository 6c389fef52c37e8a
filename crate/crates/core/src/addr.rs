//! Small IPv4 prefix type used for the poison pool and bogon sets.

use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// An IPv4 network in CIDR notation, e.g. `10.10.34.0/24`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ipv4Net {
    network: Ipv4Addr,
    prefix_len: u8,
}

impl Ipv4Net {
    pub fn new(network: Ipv4Addr, prefix_len: u8) -> Result<Self, InvalidNet> {
        if prefix_len > 32 {
            return Err(InvalidNet(format!(
                "prefix length {prefix_len} out of range"
            )));
        }
        Ok(Self {
            network,
            prefix_len,
        })
    }

    pub fn network(&self) -> Ipv4Addr {
        self.network
    }

    pub fn prefix_len(&self) -> u8 {
        self.prefix_len
    }

    pub fn contains(&self, addr: Ipv4Addr) -> bool {
        if self.prefix_len == 0 {
            return true;
        }
        let shift = 32 - u32::from(self.prefix_len);
        (u32::from(addr) >> shift) == (u32::from(self.network) >> shift)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid IPv4 network: {0}")]
pub struct InvalidNet(String);

impl FromStr for Ipv4Net {
    type Err = InvalidNet;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (addr, len) = s
            .split_once('/')
            .ok_or_else(|| InvalidNet(format!("missing prefix length in {s:?}")))?;
        let network = addr
            .parse::<Ipv4Addr>()
            .map_err(|e| InvalidNet(format!("{s:?}: {e}")))?;
        let prefix_len = len
            .parse::<u8>()
            .map_err(|e| InvalidNet(format!("{s:?}: {e}")))?;
        Self::new(network, prefix_len)
    }
}

impl fmt::Display for Ipv4Net {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.network, self.prefix_len)
    }
}

impl Serialize for Ipv4Net {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Ipv4Net {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contains_respects_prefix() {
        let net: Ipv4Net = "10.10.34.0/24".parse().unwrap();
        assert!(net.contains(Ipv4Addr::new(10, 10, 34, 34)));
        assert!(net.contains(Ipv4Addr::new(10, 10, 34, 255)));
        assert!(!net.contains(Ipv4Addr::new(10, 10, 35, 1)));
        assert!(!net.contains(Ipv4Addr::new(192, 168, 34, 34)));
    }

    #[test]
    fn zero_prefix_matches_everything() {
        let net: Ipv4Net = "0.0.0.0/0".parse().unwrap();
        assert!(net.contains(Ipv4Addr::new(203, 0, 113, 9)));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!("10.0.0.0".parse::<Ipv4Net>().is_err());
        assert!("10.0.0.0/33".parse::<Ipv4Net>().is_err());
        assert!("not-an-addr/8".parse::<Ipv4Net>().is_err());
    }

    #[test]
    fn serde_round_trip() {
        let net: Ipv4Net = "10.10.34.0/24".parse().unwrap();
        let json = serde_json::to_string(&net).unwrap();
        assert_eq!(json, "\"10.10.34.0/24\"");
        let back: Ipv4Net = serde_json::from_str(&json).unwrap();
        assert_eq!(back, net);
    }
}
