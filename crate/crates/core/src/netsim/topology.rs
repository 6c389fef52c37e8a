//! Multi-ISP hop chains converging on a single chokepoint hop.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::packet::{HostId, RouterId};
use super::NetsimError;

/// Declarative input for [`build_topology`]. Each vantage has one upstream
/// route, used for every destination it talks to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologySpec {
    /// Vantage host → ordered hop chain toward the outside world.
    pub vantage_paths: BTreeMap<String, Vec<String>>,
    /// Non-vantage hosts (resolver, origin servers, baseline server).
    pub servers: Vec<String>,
    /// Router hosting the censor middlebox. Must appear in every path.
    pub chokepoint: String,
}

/// A validated topology. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    hosts: BTreeSet<HostId>,
    vantages: BTreeSet<HostId>,
    paths: BTreeMap<HostId, Vec<RouterId>>,
    chokepoint: RouterId,
    /// Per-vantage 1-based hop index of the chokepoint.
    chokepoint_indices: BTreeMap<HostId, usize>,
}

/// Validates a [`TopologySpec`]: at least one vantage, every path contains
/// the chokepoint exactly once, and no path repeats a router.
pub fn build_topology(spec: &TopologySpec) -> Result<Topology, NetsimError> {
    if spec.vantage_paths.is_empty() {
        return Err(NetsimError::MalformedSpec(
            "topology lists no vantage paths".to_string(),
        ));
    }
    let chokepoint = RouterId(spec.chokepoint.clone());
    let mut hosts = BTreeSet::new();
    let mut vantages = BTreeSet::new();
    let mut paths = BTreeMap::new();
    let mut chokepoint_indices = BTreeMap::new();

    for (vantage, hops) in &spec.vantage_paths {
        let vantage = HostId(vantage.clone());
        let mut seen = BTreeSet::new();
        let mut index = None;
        for (i, hop) in hops.iter().enumerate() {
            if !seen.insert(hop.as_str()) {
                return Err(NetsimError::MalformedSpec(format!(
                    "path for {vantage} repeats router {hop}"
                )));
            }
            if hop == &spec.chokepoint {
                index = Some(i + 1);
            }
        }
        let index = index.ok_or_else(|| {
            NetsimError::MalformedSpec(format!(
                "path for {vantage} omits chokepoint {}",
                spec.chokepoint
            ))
        })?;
        chokepoint_indices.insert(vantage.clone(), index);
        paths.insert(
            vantage.clone(),
            hops.iter().map(|h| RouterId(h.clone())).collect(),
        );
        vantages.insert(vantage.clone());
        hosts.insert(vantage);
    }
    for server in &spec.servers {
        let host = HostId(server.clone());
        if vantages.contains(&host) {
            return Err(NetsimError::MalformedSpec(format!(
                "host {host} is listed both as vantage and server"
            )));
        }
        hosts.insert(host);
    }
    Ok(Topology {
        hosts,
        vantages,
        paths,
        chokepoint,
        chokepoint_indices,
    })
}

impl Topology {
    pub fn contains_host(&self, host: &HostId) -> bool {
        self.hosts.contains(host)
    }

    pub fn is_vantage(&self, host: &HostId) -> bool {
        self.vantages.contains(host)
    }

    pub fn vantages(&self) -> impl Iterator<Item = &HostId> {
        self.vantages.iter()
    }

    pub fn path(&self, vantage: &HostId) -> Option<&[RouterId]> {
        self.paths.get(vantage).map(Vec::as_slice)
    }

    pub fn chokepoint(&self) -> &RouterId {
        &self.chokepoint
    }

    /// 1-based hop index of the chokepoint on this vantage's path.
    pub fn chokepoint_index(&self, vantage: &HostId) -> Option<usize> {
        self.chokepoint_indices.get(vantage).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(paths: &[(&str, &[&str])], chokepoint: &str) -> TopologySpec {
        TopologySpec {
            vantage_paths: paths
                .iter()
                .map(|(v, hops)| (v.to_string(), hops.iter().map(|h| h.to_string()).collect()))
                .collect(),
            servers: vec!["origin".to_string()],
            chokepoint: chokepoint.to_string(),
        }
    }

    #[test]
    fn chokepoint_indices_follow_path_position() {
        let topo = build_topology(&spec(
            &[
                ("isp1", &["r1", "r2", "GW", "r4"]),
                ("isp2", &["r5", "GW", "r4"]),
            ],
            "GW",
        ))
        .unwrap();
        assert_eq!(topo.chokepoint_index(&"isp1".into()), Some(3));
        assert_eq!(topo.chokepoint_index(&"isp2".into()), Some(2));
        assert_eq!(topo.chokepoint().as_str(), "GW");
    }

    #[test]
    fn single_hop_path_is_the_smallest_valid_topology() {
        let topo = build_topology(&spec(&[("v", &["GW"])], "GW")).unwrap();
        assert_eq!(topo.chokepoint_index(&"v".into()), Some(1));
    }

    #[test]
    fn path_missing_chokepoint_is_malformed() {
        let err = build_topology(&spec(&[("v", &["r1", "r2"])], "GW")).unwrap_err();
        assert!(matches!(err, NetsimError::MalformedSpec(_)));
    }

    #[test]
    fn repeated_router_is_malformed() {
        let err = build_topology(&spec(&[("v", &["r1", "GW", "r1"])], "GW")).unwrap_err();
        assert!(matches!(err, NetsimError::MalformedSpec(_)));
    }

    #[test]
    fn empty_spec_is_malformed() {
        let err = build_topology(&spec(&[], "GW")).unwrap_err();
        assert!(matches!(err, NetsimError::MalformedSpec(_)));
    }

    #[test]
    fn host_cannot_be_vantage_and_server() {
        let mut s = spec(&[("v", &["GW"])], "GW");
        s.servers.push("v".to_string());
        assert!(build_topology(&s).is_err());
    }
}
