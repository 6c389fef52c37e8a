//! Client-side flow drivers: the TCP-lite handshake/data dialog and the UDP
//! request/response round trip. Each flow owns its own censor-visible state
//! and records a transcript of everything it sent and received, in order.

use serde::{Deserialize, Serialize};

use crate::censor::FlowTable;

use super::packet::{HostId, Packet, TcpFlags};
use super::world::World;
use super::{DeliveryKind, DeliveryOutcome, NetsimError};

/// One entry in a flow transcript, as seen from the client.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "dir", rename_all = "snake_case")]
pub enum FlowEvent {
    Sent { packet: Packet },
    Received { packet: Packet },
}

/// Result of a TCP-lite three-way handshake.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectionResult {
    Established,
    ResetAtSyn,
    SilentTimeout,
}

/// A TCP-lite flow from a vantage client to a server port.
///
/// The handshake always runs at the default TTL; only data segments take a
/// caller-chosen TTL. TTL-limited tracing relies on this: the connection is
/// built normally and the triggering payload is what walks the path hop by
/// hop.
pub struct TcpFlow<'w> {
    world: &'w World,
    client: HostId,
    server: HostId,
    src_port: u16,
    dst_port: u16,
    flows: FlowTable,
    transcript: Vec<FlowEvent>,
    established: bool,
}

impl<'w> TcpFlow<'w> {
    pub fn open(
        world: &'w World,
        client: HostId,
        server: HostId,
        src_port: u16,
        dst_port: u16,
    ) -> Self {
        Self {
            world,
            client,
            server,
            src_port,
            dst_port,
            flows: FlowTable::new(),
            transcript: Vec::new(),
            established: false,
        }
    }

    pub fn transcript(&self) -> &[FlowEvent] {
        &self.transcript
    }

    pub fn into_transcript(self) -> Vec<FlowEvent> {
        self.transcript
    }

    pub fn is_established(&self) -> bool {
        self.established
    }

    fn send(&mut self, pkt: Packet) -> Result<DeliveryOutcome, NetsimError> {
        self.transcript.push(FlowEvent::Sent {
            packet: pkt.clone(),
        });
        let outcome = self.world.send(&pkt, &mut self.flows)?;
        for response in &outcome.response_packets {
            self.transcript.push(FlowEvent::Received {
                packet: response.clone(),
            });
        }
        Ok(outcome)
    }

    fn segment(&self, flags: TcpFlags, payload: Vec<u8>) -> Packet {
        Packet::tcp(
            self.client.clone(),
            self.server.clone(),
            self.src_port,
            self.dst_port,
            flags,
            payload,
        )
    }

    /// SYN → SYN/ACK → ACK. A whitelist drop of the SYN shows up as
    /// `SilentTimeout`; an injected RST as `ResetAtSyn`.
    pub fn handshake(&mut self) -> Result<ConnectionResult, NetsimError> {
        let outcome = self.send(self.segment(TcpFlags::SYN, Vec::new()))?;
        match outcome.kind {
            DeliveryKind::SilentlyDropped | DeliveryKind::TimeExceeded { .. } => {
                return Ok(ConnectionResult::SilentTimeout);
            }
            DeliveryKind::InjectedResponse => {
                if outcome.response_packets.iter().any(|p| p.flags().rst) {
                    return Ok(ConnectionResult::ResetAtSyn);
                }
                return Ok(ConnectionResult::SilentTimeout);
            }
            DeliveryKind::Delivered => {}
        }
        let syn_ack = outcome.response_packets.iter().any(|p| {
            let f = p.flags();
            f.syn && f.ack
        });
        if !syn_ack {
            return Ok(ConnectionResult::SilentTimeout);
        }
        self.send(self.segment(TcpFlags::ACK, Vec::new()))?;
        self.established = true;
        Ok(ConnectionResult::Established)
    }

    /// Sends one data segment at the given TTL and returns the raw outcome.
    pub fn send_data(&mut self, payload: Vec<u8>, ttl: u8) -> Result<DeliveryOutcome, NetsimError> {
        let pkt = self.segment(TcpFlags::PSH_ACK, payload).with_ttl(ttl);
        self.send(pkt)
    }
}

/// Simulates a TCP-lite handshake and reports how it ended.
pub fn tcp_handshake(
    client: &HostId,
    server: &HostId,
    dst_port: u16,
    world: &World,
) -> Result<ConnectionResult, NetsimError> {
    let mut flow = TcpFlow::open(world, client.clone(), server.clone(), 40000, dst_port);
    flow.handshake()
}

/// Sends one UDP datagram and returns (sent packet, outcome).
pub fn udp_round_trip(
    world: &World,
    client: &HostId,
    server: &HostId,
    src_port: u16,
    dst_port: u16,
    payload: Vec<u8>,
    ttl: u8,
) -> Result<(Packet, DeliveryOutcome), NetsimError> {
    let pkt =
        Packet::udp(client.clone(), server.clone(), src_port, dst_port, payload).with_ttl(ttl);
    let mut flows = FlowTable::new();
    let outcome = world.send(&pkt, &mut flows)?;
    Ok((pkt, outcome))
}
