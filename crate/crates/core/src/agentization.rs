//! Turning graph elements into agents: an actor on every node, a critic on
//! every edge.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{ARTIFACT_CLOSE, ARTIFACT_OPEN, APPROVE_TOKEN};
use crate::topology::{Edge, NodeId, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Actor,
    Critic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub kind: AgentKind,
    pub template_id: String,
    pub role_text: String,
    pub temperature: f64,
    pub max_reply_tokens: u32,
}

impl AgentProfile {
    fn check(&self) -> Result<(), AgentizationError> {
        if self.role_text.trim().is_empty() {
            return Err(AgentizationError::InvalidProfile(format!("{}: empty role_text", self.template_id)));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(AgentizationError::InvalidProfile(format!("{}: negative temperature", self.template_id)));
        }
        if self.max_reply_tokens == 0 {
            return Err(AgentizationError::InvalidProfile(format!("{}: max_reply_tokens must be positive", self.template_id)));
        }
        Ok(())
    }
}

/// Identity of an agent inside one network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AgentId {
    Actor(NodeId),
    Critic(NodeId, NodeId),
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentId::Actor(v) => write!(f, "a{v}"),
            AgentId::Critic(a, b) => write!(f, "a{a}-{b}"),
        }
    }
}

impl Serialize for AgentId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[derive(Debug, Error)]
pub enum AgentizationError {
    #[error("profile library is empty")]
    EmptyLibrary,
    #[error("profile library has no {0:?} template")]
    MissingKind(AgentKind),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("cannot read profile library: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse profile library: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentAssignment {
    pub node_agents: BTreeMap<NodeId, AgentProfile>,
    pub edge_agents: BTreeMap<Edge, AgentProfile>,
}

impl AgentAssignment {
    pub fn agent_count(&self) -> usize {
        self.node_agents.len() + self.edge_agents.len()
    }

    pub fn actor(&self, node: NodeId) -> Option<&AgentProfile> {
        self.node_agents.get(&node)
    }

    pub fn critic(&self, edge: Edge) -> Option<&AgentProfile> {
        self.edge_agents.get(&edge)
    }

    /// True when the domains match the topology's node and edge sets.
    pub fn covers(&self, t: &Topology) -> bool {
        self.node_agents.len() == t.node_count()
            && t.nodes().all(|v| self.node_agents.contains_key(&v))
            && self.edge_agents.len() == t.edge_count()
            && t.edges().iter().all(|e| self.edge_agents.contains_key(e))
    }
}

/// Generic actor and critic templates for a task domain.
pub fn default_library(domain: &str) -> Vec<AgentProfile> {
    vec![
        AgentProfile {
            kind: AgentKind::Actor,
            template_id: "actor.generic".into(),
            role_text: format!(
                "You are a {domain} practitioner on a collaborative team. Produce or refine the artifact \
                 for the task, following the instructions you receive. Wrap the complete artifact in \
                 {ARTIFACT_OPEN} and {ARTIFACT_CLOSE}."
            ),
            temperature: 0.2,
            max_reply_tokens: 1024,
        },
        AgentProfile {
            kind: AgentKind::Critic,
            template_id: "critic.generic".into(),
            role_text: format!(
                "You are a {domain} reviewer. Review the artifact you are given, identify concrete flaws \
                 and issue precise refinement instructions. Reply with {APPROVE_TOKEN} when no further \
                 changes are needed."
            ),
            temperature: 0.7,
            max_reply_tokens: 512,
        },
    ]
}

/// Reads a JSON list of profiles.
pub fn load_library(path: &Path) -> Result<Vec<AgentProfile>, AgentizationError> {
    let text = std::fs::read_to_string(path)?;
    let library: Vec<AgentProfile> = serde_json::from_str(&text)?;
    for profile in &library {
        profile.check()?;
    }
    Ok(library)
}

/// Assigns actors to nodes and critics to edges, cycling through the
/// library's templates of each kind in canonical node/edge order.
///
/// `seed` is accepted for stochastic assignment schemes; round-robin ignores it.
pub fn agentize(t: &Topology, library: &[AgentProfile], _seed: u64) -> Result<AgentAssignment, AgentizationError> {
    if library.is_empty() {
        return Err(AgentizationError::EmptyLibrary);
    }
    for profile in library {
        profile.check()?;
    }
    let actors: Vec<&AgentProfile> = library.iter().filter(|p| p.kind == AgentKind::Actor).collect();
    let critics: Vec<&AgentProfile> = library.iter().filter(|p| p.kind == AgentKind::Critic).collect();
    if actors.is_empty() {
        return Err(AgentizationError::MissingKind(AgentKind::Actor));
    }
    if critics.is_empty() {
        return Err(AgentizationError::MissingKind(AgentKind::Critic));
    }

    let node_agents = t
        .nodes()
        .enumerate()
        .map(|(i, v)| (v, actors[i % actors.len()].clone()))
        .collect();
    let edge_agents = t
        .edges()
        .iter()
        .enumerate()
        .map(|(i, &e)| (e, critics[i % critics.len()].clone()))
        .collect();
    Ok(AgentAssignment { node_agents, edge_agents })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{generate, TopologyKind};

    #[test]
    fn chain_of_three_has_five_agents() {
        let t = generate(TopologyKind::Chain, 3, 0).unwrap();
        let a = agentize(&t, &default_library("software"), 0).unwrap();
        assert_eq!(a.node_agents.len(), 3);
        assert_eq!(a.edge_agents.len(), 2);
        assert_eq!(a.agent_count(), 5);
        assert!(a.node_agents.values().all(|p| p.kind == AgentKind::Actor));
        assert!(a.edge_agents.values().all(|p| p.kind == AgentKind::Critic));
        assert!(a.covers(&t));
    }

    #[test]
    fn mesh_of_four_has_ten_agents() {
        let t = generate(TopologyKind::Mesh, 4, 0).unwrap();
        assert_eq!(agentize(&t, &default_library("x"), 0).unwrap().agent_count(), 10);
    }

    #[test]
    fn single_node_has_one_actor() {
        let t = generate(TopologyKind::Chain, 1, 0).unwrap();
        let a = agentize(&t, &default_library("x"), 0).unwrap();
        assert_eq!((a.node_agents.len(), a.edge_agents.len()), (1, 0));
    }

    #[test]
    fn library_errors() {
        let t = generate(TopologyKind::Chain, 2, 0).unwrap();
        assert!(matches!(agentize(&t, &[], 0), Err(AgentizationError::EmptyLibrary)));
        let only_actor = vec![default_library("x").remove(0)];
        assert!(matches!(
            agentize(&t, &only_actor, 0),
            Err(AgentizationError::MissingKind(AgentKind::Critic))
        ));
        let mut blank = default_library("x");
        blank[1].role_text = "  ".into();
        assert!(matches!(agentize(&t, &blank, 0), Err(AgentizationError::InvalidProfile(_))));
    }

    #[test]
    fn round_robin_over_templates() {
        let mut library = default_library("x");
        let mut second = library[0].clone();
        second.template_id = "actor.second".into();
        library.push(second);
        let t = generate(TopologyKind::Chain, 4, 0).unwrap();
        let a = agentize(&t, &library, 0).unwrap();
        let ids: Vec<&str> = a.node_agents.values().map(|p| p.template_id.as_str()).collect();
        assert_eq!(ids, vec!["actor.generic", "actor.second", "actor.generic", "actor.second"]);
        assert_eq!(a, agentize(&t, &library, 99).unwrap());
    }

    #[test]
    fn agent_ids_display() {
        assert_eq!(AgentId::Actor(NodeId(3)).to_string(), "a3");
        assert_eq!(AgentId::Critic(NodeId(0), NodeId(1)).to_string(), "a0-1");
    }

    #[test]
    fn library_file_round_trip() {
        let dir = std::env::temp_dir().join(format!("dagnet-lib-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("lib.json");
        std::fs::write(&path, serde_json::to_string(&default_library("law")).unwrap()).unwrap();
        assert_eq!(load_library(&path).unwrap(), default_library("law"));
        std::fs::write(&path, "[{\"kind\": \"actor\"}]").unwrap();
        assert!(matches!(load_library(&path), Err(AgentizationError::Parse(_))));
        std::fs::remove_dir_all(&dir).ok();
    }
}
