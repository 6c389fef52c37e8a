//! Packet-level simulation of a multi-layer national censorship gateway,
//! together with the active-measurement probe suite that detects, classifies,
//! and localizes each interference layer.
//!
//! The crate is organized around five modules:
//!
//! * [`netsim`] — deterministic network substrate: hosts, per-vantage hop
//!   chains, TTL semantics, and the chokepoint hop where the middlebox sits.
//! * [`wire`] — byte-exact codecs for the minimal protocol surface the censor
//!   and the probes need: DNS, HTTP/1.1 request heads, TLS ClientHello (SNI),
//!   and a first-payload protocol classifier.
//! * [`censor`] — the DPI middlebox: protocol whitelist, DNS poisoning, HTTP
//!   blockpage/reset injection, and SNI-based resets, evaluated in a fixed
//!   layer order against a [`censor::CensorPolicy`].
//! * [`probe`] — the measurement client: per-layer probes, baseline
//!   comparison, verdict classification, TTL-limited interference
//!   localization, and cross-vantage chokepoint consensus.
//! * [`harness`] — scenario ingestion, campaign orchestration, aggregate
//!   statistics, and report persistence. The `censim` binary wraps it in a
//!   CLI.
//!
//! Everything is single-flow-ordered and deterministic: identical scenario
//! and seed produce byte-identical reports.

pub mod addr;
pub mod censor;
pub mod harness;
pub mod netsim;
pub mod probe;
pub mod wire;
