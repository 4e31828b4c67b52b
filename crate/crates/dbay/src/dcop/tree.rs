//! Pseudo-tree construction and function allocation.
//!
//! A pseudo-tree is a rooted spanning tree of the constraint graph in which
//! every graph edge joins an ancestor-descendant pair. Tree edges become
//! parent/child links; the remaining back edges become pseudo-parent/
//! pseudo-child links. Each utility function is then allocated to the
//! deepest agent in its scope: functions touching only that agent are local,
//! the rest are shared with (pseudo-)ancestors.

use super::{AgentId, ConstraintGraph, DcopError, DcopInstance, FunctionId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoTree {
    root: AgentId,
    members: Vec<AgentId>,
    parent: Vec<Option<AgentId>>,
    pseudo_parents: Vec<Vec<AgentId>>,
    children: Vec<Vec<AgentId>>,
    pseudo_children: Vec<Vec<AgentId>>,
    depth: Vec<usize>,
    local_functions: Vec<Vec<FunctionId>>,
    shared_functions: Vec<Vec<FunctionId>>,
}

/// Depth-first traversal from `root`, visiting neighbors in ascending agent
/// order. Fails with `DisconnectedGraph` when the graph's members are not
/// all reachable from the root.
pub fn build_pseudo_tree(graph: &ConstraintGraph, root: AgentId) -> Result<PseudoTree, DcopError> {
    if !graph.contains(root) {
        return Err(DcopError::UnknownAgent { agent: root });
    }
    let m = graph.agent_count();
    let mut parent: Vec<Option<AgentId>> = vec![None; m];
    let mut pseudo_parents: Vec<Vec<AgentId>> = vec![Vec::new(); m];
    let mut children: Vec<Vec<AgentId>> = vec![Vec::new(); m];
    let mut pseudo_children: Vec<Vec<AgentId>> = vec![Vec::new(); m];
    let mut depth = vec![0usize; m];
    let mut visited = vec![false; m];
    let mut on_stack = vec![false; m];

    // Explicit stack of (agent, next neighbor index) replicates the
    // recursive ascending-order traversal.
    let mut stack: Vec<(AgentId, usize)> = vec![(root, 0)];
    visited[root] = true;
    on_stack[root] = true;
    let mut reached = 1usize;

    while let Some(&mut (a, ref mut next)) = stack.last_mut() {
        let neighbors = graph.neighbors(a);
        if *next >= neighbors.len() {
            on_stack[a] = false;
            stack.pop();
            continue;
        }
        let b = neighbors[*next];
        *next += 1;
        if !visited[b] {
            visited[b] = true;
            on_stack[b] = true;
            parent[b] = Some(a);
            depth[b] = depth[a] + 1;
            children[a].push(b);
            reached += 1;
            stack.push((b, 0));
        } else if on_stack[b] && parent[a] != Some(b) {
            // Back edge to a strict ancestor: record the pseudo relation
            // once, from the descendant side.
            pseudo_parents[a].push(b);
            pseudo_children[b].push(a);
        }
    }

    if reached != graph.members().len() {
        return Err(DcopError::DisconnectedGraph);
    }
    for list in pseudo_parents.iter_mut().chain(pseudo_children.iter_mut()) {
        list.sort_unstable();
    }
    Ok(PseudoTree {
        root,
        members: graph.members().to_vec(),
        parent,
        pseudo_parents,
        children,
        pseudo_children,
        depth,
        local_functions: vec![Vec::new(); m],
        shared_functions: vec![Vec::new(); m],
    })
}

/// Allocates every function whose scope lies inside the tree to the deepest
/// scope agent. Unary functions land in the agent's local set, all others in
/// its shared set. Functions whose scope is disjoint from the tree's members
/// are skipped (they belong to another component); a partially contained or
/// off-branch scope is an error.
pub fn allocate_functions(
    instance: &DcopInstance,
    tree: &mut PseudoTree,
) -> Result<(), DcopError> {
    for slot in tree
        .local_functions
        .iter_mut()
        .chain(tree.shared_functions.iter_mut())
    {
        slot.clear();
    }
    for f in instance.functions() {
        let agents: Vec<AgentId> = f.scope.iter().map(|&v| instance.agent_of(v)).collect();
        let inside = agents.iter().filter(|&&a| tree.is_member(a)).count();
        if inside == 0 {
            continue;
        }
        if inside != agents.len() {
            return Err(DcopError::ScopeNotOnBranch { function: f.id });
        }
        let deepest = *agents
            .iter()
            .max_by_key(|&&a| (tree.depth[a], a))
            .expect("scope is nonempty");
        for &a in &agents {
            if a != deepest && !tree.is_strict_ancestor(a, deepest) {
                return Err(DcopError::ScopeNotOnBranch { function: f.id });
            }
        }
        if agents.iter().all(|&a| a == deepest) {
            tree.local_functions[deepest].push(f.id);
        } else {
            tree.shared_functions[deepest].push(f.id);
        }
    }
    Ok(())
}

/// Builds the constraint graph, roots the pseudo-tree at the lowest member
/// agent, and allocates functions, for one connected graph.
pub fn prepare_tree(
    instance: &DcopInstance,
    graph: &ConstraintGraph,
) -> Result<PseudoTree, DcopError> {
    let root = *graph
        .members()
        .first()
        .ok_or(DcopError::DisconnectedGraph)?;
    let mut tree = build_pseudo_tree(graph, root)?;
    allocate_functions(instance, &mut tree)?;
    Ok(tree)
}

impl PseudoTree {
    pub fn root(&self) -> AgentId {
        self.root
    }

    pub fn members(&self) -> &[AgentId] {
        &self.members
    }

    pub fn is_member(&self, agent: AgentId) -> bool {
        self.members.binary_search(&agent).is_ok()
    }

    pub fn parent(&self, agent: AgentId) -> Option<AgentId> {
        self.parent[agent]
    }

    pub fn children(&self, agent: AgentId) -> &[AgentId] {
        &self.children[agent]
    }

    pub fn pseudo_parents(&self, agent: AgentId) -> &[AgentId] {
        &self.pseudo_parents[agent]
    }

    pub fn pseudo_children(&self, agent: AgentId) -> &[AgentId] {
        &self.pseudo_children[agent]
    }

    pub fn depth(&self, agent: AgentId) -> usize {
        self.depth[agent]
    }

    pub fn local_functions(&self, agent: AgentId) -> &[FunctionId] {
        &self.local_functions[agent]
    }

    pub fn shared_functions(&self, agent: AgentId) -> &[FunctionId] {
        &self.shared_functions[agent]
    }

    /// Combined function set of an agent (local then shared).
    pub fn functions_of(&self, agent: AgentId) -> Vec<FunctionId> {
        let mut all = self.local_functions[agent].clone();
        all.extend_from_slice(&self.shared_functions[agent]);
        all
    }

    pub fn is_leaf(&self, agent: AgentId) -> bool {
        self.children[agent].is_empty()
    }

    /// True when `a` lies strictly above `b` on b's root path.
    pub fn is_strict_ancestor(&self, a: AgentId, b: AgentId) -> bool {
        let mut cur = self.parent[b];
        while let Some(p) = cur {
            if p == a {
                return true;
            }
            cur = self.parent[p];
        }
        false
    }

    /// Agents on the path from the root down to `agent`, excluding `agent`.
    pub fn ancestors(&self, agent: AgentId) -> Vec<AgentId> {
        let mut chain = Vec::new();
        let mut cur = self.parent[agent];
        while let Some(p) = cur {
            chain.push(p);
            cur = self.parent[p];
        }
        chain.reverse();
        chain
    }

    /// Members in depth-first preorder (parents before children).
    pub fn preorder(&self) -> Vec<AgentId> {
        let mut order = Vec::with_capacity(self.members.len());
        let mut stack = vec![self.root];
        while let Some(a) = stack.pop() {
            order.push(a);
            for &c in self.children[a].iter().rev() {
                stack.push(c);
            }
        }
        order
    }
}
