//! Constraint graph over agents.
//!
//! Agents are adjacent when their variables share a utility function. The
//! graph drives pseudo-tree construction; disconnected instances split into
//! independent components that are solved separately.

use super::{AgentId, DcopInstance};

/// Undirected constraint graph. `members` restricts the graph to a subset of
/// agents (a connected component); for a freshly built graph it holds every
/// agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintGraph {
    agent_count: usize,
    members: Vec<AgentId>,
    adjacency: Vec<Vec<AgentId>>,
    edges: Vec<(AgentId, AgentId)>,
}

/// Builds the constraint graph: an edge joins two agents whenever some
/// function's scope contains both of their variables. No self-loops; edges
/// and neighbor lists are sorted by agent index.
pub fn build_constraint_graph(instance: &DcopInstance) -> ConstraintGraph {
    let m = instance.agent_count();
    let mut adjacency: Vec<Vec<AgentId>> = vec![Vec::new(); m];
    let mut edges = Vec::new();
    for f in instance.functions() {
        let agents: Vec<AgentId> = f.scope.iter().map(|&v| instance.agent_of(v)).collect();
        for i in 0..agents.len() {
            for j in i + 1..agents.len() {
                let (a, b) = if agents[i] < agents[j] {
                    (agents[i], agents[j])
                } else {
                    (agents[j], agents[i])
                };
                if a != b && !adjacency[a].contains(&b) {
                    adjacency[a].push(b);
                    adjacency[b].push(a);
                    edges.push((a, b));
                }
            }
        }
    }
    for list in &mut adjacency {
        list.sort_unstable();
    }
    edges.sort_unstable();
    ConstraintGraph {
        agent_count: m,
        members: (0..m).collect(),
        adjacency,
        edges,
    }
}

impl ConstraintGraph {
    pub fn agent_count(&self) -> usize {
        self.agent_count
    }

    pub fn members(&self) -> &[AgentId] {
        &self.members
    }

    pub fn contains(&self, agent: AgentId) -> bool {
        self.members.binary_search(&agent).is_ok()
    }

    pub fn neighbors(&self, agent: AgentId) -> &[AgentId] {
        &self.adjacency[agent]
    }

    pub fn edges(&self) -> &[(AgentId, AgentId)] {
        &self.edges
    }

    /// Connected components among the members, each sorted ascending, listed
    /// in order of their smallest agent.
    pub fn connected_components(&self) -> Vec<Vec<AgentId>> {
        let mut seen = vec![false; self.agent_count];
        let mut components = Vec::new();
        for &start in &self.members {
            if seen[start] {
                continue;
            }
            let mut component = Vec::new();
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(a) = stack.pop() {
                component.push(a);
                for &b in &self.adjacency[a] {
                    if !seen[b] {
                        seen[b] = true;
                        stack.push(b);
                    }
                }
            }
            component.sort_unstable();
            components.push(component);
        }
        components
    }

    pub fn is_connected(&self) -> bool {
        self.connected_components().len() <= 1
    }

    /// Restriction of the graph to `members` (assumed sorted; typically one
    /// connected component).
    pub fn induced(&self, members: &[AgentId]) -> ConstraintGraph {
        let keep = |a: AgentId| members.binary_search(&a).is_ok();
        let mut adjacency: Vec<Vec<AgentId>> = vec![Vec::new(); self.agent_count];
        for &a in members {
            adjacency[a] = self
                .adjacency[a]
                .iter()
                .copied()
                .filter(|&b| keep(b))
                .collect();
        }
        let edges = self
            .edges
            .iter()
            .copied()
            .filter(|&(a, b)| keep(a) && keep(b))
            .collect();
        ConstraintGraph {
            agent_count: self.agent_count,
            members: members.to_vec(),
            adjacency,
            edges,
        }
    }
}
