//! Deterministic simulated network substrate: hosts, per-vantage hop chains,
//! TTL semantics, and the chokepoint hop where the censor middlebox sits.
//!
//! The model is message-level and single-flow-ordered. There is no loss,
//! reordering, or latency; the interesting behavior is all in what the
//! middlebox does to traffic crossing its hop.

mod flow;
mod packet;
mod topology;
mod world;

pub use flow::{tcp_handshake, udp_round_trip, ConnectionResult, FlowEvent, TcpFlow};
pub use packet::{HostId, Packet, RouterId, TcpFlags, Transport, DEFAULT_TTL};
pub use topology::{build_topology, Topology, TopologySpec};
pub use world::{ServerModel, World, AUTHORITATIVE_TTL};

use serde::{Deserialize, Serialize};

use crate::censor::{apply_policy, CensorPolicy, FlowTable};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NetsimError {
    #[error("malformed topology spec: {0}")]
    MalformedSpec(String),
    #[error("unknown host: {0}")]
    UnknownHost(HostId),
}

/// What happened to a forwarded packet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeliveryKind {
    /// Reached its destination host.
    Delivered,
    /// TTL reached zero at the named hop; nothing was delivered.
    TimeExceeded { router: RouterId, hop: usize },
    /// The censor spoke for the destination; see `response_packets`.
    InjectedResponse,
    /// The censor discarded the packet without any response.
    SilentlyDropped,
}

/// Outcome of forwarding a single packet, together with every packet that
/// came back toward the sender. A silently dropped packet produces none.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryOutcome {
    pub kind: DeliveryKind,
    pub response_packets: Vec<Packet>,
}

impl DeliveryOutcome {
    pub fn delivered() -> Self {
        Self {
            kind: DeliveryKind::Delivered,
            response_packets: Vec::new(),
        }
    }

    pub fn time_exceeded(router: RouterId, hop: usize) -> Self {
        Self {
            kind: DeliveryKind::TimeExceeded { router, hop },
            response_packets: Vec::new(),
        }
    }

    pub fn injected(packets: Vec<Packet>) -> Self {
        Self {
            kind: DeliveryKind::InjectedResponse,
            response_packets: packets,
        }
    }

    pub fn silently_dropped() -> Self {
        Self {
            kind: DeliveryKind::SilentlyDropped,
            response_packets: Vec::new(),
        }
    }

    pub fn is_interference(&self) -> bool {
        matches!(
            self.kind,
            DeliveryKind::InjectedResponse | DeliveryKind::SilentlyDropped
        )
    }
}

/// Walks the sender's hop chain with standard TTL semantics.
///
/// The packet reaches hop `i` (1-based) iff its initial TTL is at least `i`.
/// On arrival at the chokepoint hop the censor inspects the packet before
/// any TTL discard — an expiring packet is still seen by the middlebox, which
/// is exactly what makes TTL-limited tracing localize it. Delivery to the
/// destination requires the TTL to survive every hop.
pub fn forward(
    pkt: &Packet,
    topo: &Topology,
    policy: &CensorPolicy,
    flows: &mut FlowTable,
) -> Result<DeliveryOutcome, NetsimError> {
    if !topo.is_vantage(&pkt.src) {
        return Err(NetsimError::UnknownHost(pkt.src.clone()));
    }
    if !topo.contains_host(&pkt.dst) {
        return Err(NetsimError::UnknownHost(pkt.dst.clone()));
    }
    debug_assert!(pkt.is_valid(), "packet violates send invariants");
    let path = topo.path(&pkt.src).expect("vantage has a path");
    let chokepoint_index = topo
        .chokepoint_index(&pkt.src)
        .expect("vantage has an index");
    let mut ttl = pkt.ttl;
    for (i, router) in path.iter().enumerate() {
        let hop = i + 1;
        if hop == chokepoint_index {
            let action = apply_policy(pkt, flows, policy);
            if !action.is_pass() {
                let responses = action.materialize(pkt);
                return Ok(if responses.is_empty() {
                    DeliveryOutcome::silently_dropped()
                } else {
                    DeliveryOutcome::injected(responses)
                });
            }
        }
        ttl -= 1;
        if ttl == 0 {
            return Ok(DeliveryOutcome::time_exceeded(router.clone(), hop));
        }
    }
    Ok(DeliveryOutcome::delivered())
}
