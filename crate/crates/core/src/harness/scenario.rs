//! Scenario files: the schema, the loader, and invariant validation.
//!
//! A scenario fully determines a run: topology, censor policy, the domain
//! test list with expected categories, the protocol-matrix targets, the
//! probe plan, and the seed. See `docs/scenario-schema.md` for the field
//! reference.

use std::collections::BTreeSet;
use std::net::Ipv4Addr;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::censor::{match_dns, match_http, CensorPolicy};
use crate::netsim::{build_topology, HostId, ServerModel, TopologySpec, World};
use crate::probe::{HttpMutation, MatrixTarget, ProbeLayer};
use crate::wire::{encode_dns_query, render_http_request, HttpRequest};

use super::HarnessError;

/// Expected censorship status of a test-list domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainCategory {
    Blacklisted,
    Whitelisted,
    Neutral,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainEntry {
    pub name: String,
    pub category: DomainCategory,
}

/// Matrix target port: fixed, or drawn from the seeded RNG at run time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PortSpec {
    Fixed(u16),
    #[serde(rename = "random-high")]
    RandomHigh(RandomHighTag),
}

/// Serde helper so `"random-high"` parses as [`PortSpec::RandomHigh`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RandomHighTag {
    #[serde(rename = "random-high")]
    RandomHigh,
}

/// First-payload template for a matrix target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PayloadTemplate {
    DnsQuery { domain: String },
    HttpGet { domain: String, path: String },
    TlsClientHello { domain: String },
    Raw { hex: String },
}

impl PayloadTemplate {
    pub fn build(&self) -> Result<Vec<u8>, HarnessError> {
        match self {
            PayloadTemplate::DnsQuery { domain } => encode_dns_query(7, domain)
                .map_err(|e| HarnessError::Validation(format!("matrix dns payload: {e}"))),
            PayloadTemplate::HttpGet { domain, path } => {
                Ok(render_http_request(&HttpRequest::get(path, domain)))
            }
            PayloadTemplate::TlsClientHello { domain } => {
                Ok(crate::wire::build_client_hello(Some(domain)))
            }
            PayloadTemplate::Raw { hex } => hex::decode(hex)
                .map_err(|e| HarnessError::Validation(format!("matrix raw payload: {e}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioTarget {
    pub label: String,
    pub proto: crate::netsim::Transport,
    pub port: PortSpec,
    pub payload: PayloadTemplate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceProbe {
    pub layer: ProbeLayer,
    pub domain: String,
}

/// Which probes run, from which vantages, with which mutations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbePlan {
    pub dns_vantage: String,
    pub http_vantage: String,
    pub tls_vantage: String,
    pub matrix_vantage: String,
    #[serde(default)]
    pub http_mutations: Vec<HttpMutation>,
    #[serde(default)]
    pub http_mutation_domains: Vec<String>,
    pub trace_vantages: Vec<String>,
    pub trace_probes: Vec<TraceProbe>,
    pub trace_max_ttl: u8,
}

/// Scenario topology: the netsim spec plus the roles the probes need.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioTopology {
    #[serde(flatten)]
    pub spec: TopologySpec,
    pub resolver: String,
    pub origin: String,
    pub baseline_server: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub topology: ScenarioTopology,
    pub policy: CensorPolicy,
    pub domains: Vec<DomainEntry>,
    pub matrix_targets: Vec<ScenarioTarget>,
    pub probe_plan: ProbePlan,
}

impl Scenario {
    pub fn domain_names(&self) -> impl Iterator<Item = &str> {
        self.domains.iter().map(|d| d.name.as_str())
    }

    /// Sorted domain list; the documented probe order.
    pub fn sorted_domains(&self) -> Vec<&DomainEntry> {
        let mut domains: Vec<&DomainEntry> = self.domains.iter().collect();
        domains.sort_by(|a, b| a.name.cmp(&b.name));
        domains
    }

    /// Stable digest identifying this scenario's content.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = serde_json::to_vec(self).expect("scenario serializes");
        hex::encode(Sha256::digest(canonical))
    }

    /// Builds the immutable world this scenario describes. Every test-list
    /// domain gets an authoritative record derived from its position in the
    /// sorted list, well outside any bogon range.
    pub fn build_world(&self) -> Result<World, HarnessError> {
        let topology = build_topology(&self.topology.spec)
            .map_err(|e| HarnessError::Validation(e.to_string()))?;
        let mut servers = ServerModel::new(
            HostId(self.topology.resolver.clone()),
            HostId(self.topology.origin.clone()),
        );
        for (i, domain) in self.sorted_domains().iter().enumerate() {
            servers.add_record(&domain.name, authoritative_addr(i));
        }
        Ok(World::new(topology, self.policy.clone(), servers))
    }

    /// Resolves matrix targets to concrete payload bytes. Random-high ports
    /// are drawn by the runner and substituted before this is called.
    pub fn resolve_targets(
        &self,
        random_high_port: u16,
    ) -> Result<Vec<MatrixTarget>, HarnessError> {
        self.matrix_targets
            .iter()
            .map(|t| {
                let port = match t.port {
                    PortSpec::Fixed(p) => p,
                    PortSpec::RandomHigh(_) => random_high_port,
                };
                Ok(MatrixTarget {
                    label: t.label.clone(),
                    proto: t.proto,
                    port,
                    payload: t.payload.build()?,
                })
            })
            .collect()
    }

    /// Full invariant validation; returns the first violation.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let invalid = |msg: String| Err(HarnessError::Validation(msg));

        let topology = build_topology(&self.topology.spec)
            .map_err(|e| HarnessError::Validation(e.to_string()))?;
        for role in [
            &self.topology.resolver,
            &self.topology.origin,
            &self.topology.baseline_server,
        ] {
            let host = HostId(role.clone());
            if !topology.contains_host(&host) || topology.is_vantage(&host) {
                return invalid(format!(
                    "role host {role} must be a non-vantage topology host"
                ));
            }
        }

        self.policy.validate().map_err(HarnessError::Validation)?;

        let mut seen = BTreeSet::new();
        for entry in &self.domains {
            if !seen.insert(entry.name.to_ascii_lowercase()) {
                return invalid(format!("domain {} listed twice", entry.name));
            }
            if let Err(e) = encode_dns_query(0, &entry.name) {
                return invalid(format!("domain {} is not a probeable name: {e}", entry.name));
            }
            let layers = self.claiming_layers(&entry.name);
            match entry.category {
                DomainCategory::Blacklisted => {
                    if layers.len() != 1 {
                        return invalid(format!(
                            "blacklisted domain {} must be claimed by exactly one layer, found {:?}",
                            entry.name, layers
                        ));
                    }
                }
                DomainCategory::Whitelisted => {
                    if !self.policy.is_exempt(&entry.name) {
                        return invalid(format!(
                            "whitelisted domain {} is missing from dns_whitelist",
                            entry.name
                        ));
                    }
                }
                DomainCategory::Neutral => {
                    if !layers.is_empty() || self.policy.is_exempt(&entry.name) {
                        return invalid(format!(
                            "neutral domain {} appears in policy lists {:?}",
                            entry.name, layers
                        ));
                    }
                }
            }
        }

        // Authoritative records must stay clear of the poison pool.
        for i in 0..self.domains.len() {
            if self.policy.poison_pool.contains(authoritative_addr(i)) {
                return invalid("authoritative address space overlaps poison pool".to_string());
            }
        }

        if self.matrix_targets.is_empty() {
            return invalid("matrix_targets must not be empty".to_string());
        }
        for target in &self.matrix_targets {
            target.payload.build()?;
        }

        let plan = &self.probe_plan;
        for vantage in [
            &plan.dns_vantage,
            &plan.http_vantage,
            &plan.tls_vantage,
            &plan.matrix_vantage,
        ]
        .into_iter()
        .chain(plan.trace_vantages.iter())
        {
            if !topology.is_vantage(&HostId(vantage.clone())) {
                return invalid(format!("probe plan names unknown vantage {vantage}"));
            }
        }
        let known: BTreeSet<String> = self
            .domains
            .iter()
            .map(|d| d.name.to_ascii_lowercase())
            .collect();
        for domain in plan
            .trace_probes
            .iter()
            .map(|p| &p.domain)
            .chain(plan.http_mutation_domains.iter())
        {
            if !known.contains(&domain.to_ascii_lowercase()) {
                return invalid(format!("probe plan names unknown domain {domain}"));
            }
        }
        if plan.trace_max_ttl == 0 {
            return invalid("trace_max_ttl must be at least 1".to_string());
        }
        Ok(())
    }

    /// Which policy layers claim a domain, evaluated with the same matchers
    /// the censor uses (a canonical GET / with Host = domain for HTTP).
    fn claiming_layers(&self, domain: &str) -> Vec<&'static str> {
        let mut layers = Vec::new();
        if match_dns(domain, &self.policy).is_some() {
            layers.push("dns");
        }
        let request = HttpRequest::get("/", domain);
        if match_http(&request, &self.policy).is_some() {
            layers.push("http");
        }
        if self.policy.sni_blacklist.iter().any(|p| p.matches(domain)) {
            layers.push("sni");
        }
        layers
    }
}

/// Deterministic authoritative address for the i-th sorted domain:
/// 198.18.0.0/15 benchmark space, never private.
pub(crate) fn authoritative_addr(index: usize) -> Ipv4Addr {
    let index = index as u32;
    Ipv4Addr::new(198, 18, (index / 250) as u8, (index % 250 + 1) as u8)
}

/// Loads and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Parse {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    let scenario: Scenario = serde_json::from_str(&text).map_err(|e| HarnessError::Parse {
        path: path.display().to_string(),
        detail: format!("line {}, column {}: {e}", e.line(), e.column()),
    })?;
    scenario.validate()?;
    Ok(scenario)
}
