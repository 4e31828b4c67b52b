//! Centralized grid baselines: exhaustive enumeration over equidistant
//! discretizations, and an exact utility-propagation solver over the
//! pseudo-tree (join tables bottom-up, propagate argmax values top-down).
//!
//! Both solvers report the canonical objective value of the assignment they
//! pick (re-evaluated over the functions in index order), so two solvers
//! that agree on the assignment agree on the utility bit-for-bit regardless
//! of their internal accumulation order. The table solver is exact on the
//! grid, which makes fine reference optima reachable where enumeration is
//! not.

use thiserror::Error;

use crate::dcop::{
    evaluate_objective, Assignment, DcopError, DcopInstance, Operator, PseudoTree, VariableId,
};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("grid needs at least one sample per variable")]
    EmptyGrid,
    #[error("enumeration would take {cells} evaluations, above the cap of {cap}")]
    CapExceeded { cells: u128, cap: u128 },
    #[error("tables disagree on the grid of variable {variable}")]
    GridMismatch { variable: VariableId },
    #[error(
        "separator of agent {agent} spans {cells} cells, above the cap of {cap}; \
         refine the tree or coarsen the grid"
    )]
    SeparatorTooLarge {
        agent: usize,
        cells: u128,
        cap: u128,
    },
    #[error(transparent)]
    Dcop(#[from] DcopError),
}

/// Default evaluation cap for exhaustive enumeration.
pub const ENUMERATION_CAP: u128 = 100_000_000;

/// Default cap on materialized table cells in the table solver.
pub const TABLE_CELL_CAP: u128 = 200_000_000;

/// Per-variable sample values; equidistant including both endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<Vec<f64>>,
}

impl Grid {
    /// `k` samples per variable: both endpoints included for k ≥ 2, the
    /// domain midpoint for k = 1.
    pub fn equidistant(instance: &DcopInstance, k: usize) -> Result<Self, BaselineError> {
        if k == 0 {
            return Err(BaselineError::EmptyGrid);
        }
        let points = instance
            .domains()
            .iter()
            .map(|d| {
                if k == 1 {
                    vec![d.midpoint()]
                } else {
                    (0..k)
                        .map(|i| d.denormalize(i as f64 / (k - 1) as f64))
                        .collect()
                }
            })
            .collect();
        Ok(Self { points })
    }

    pub fn points(&self, variable: VariableId) -> &[f64] {
        &self.points[variable]
    }

    pub fn len(&self, variable: VariableId) -> usize {
        self.points[variable].len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn cell_count(&self, variables: &[VariableId]) -> u128 {
        variables
            .iter()
            .map(|&v| self.points[v].len() as u128)
            .product()
    }
}

/// Steps `indices` through the cross product of `extents` in odometer order
/// (last axis fastest); returns false after the last cell.
fn advance(indices: &mut [usize], extents: &[usize]) -> bool {
    for axis in (0..indices.len()).rev() {
        indices[axis] += 1;
        if indices[axis] < extents[axis] {
            return true;
        }
        indices[axis] = 0;
    }
    false
}

/// Full enumeration of the grid. Ties resolve to the lexicographically
/// smallest grid index vector.
pub fn exhaustive_solve(
    instance: &DcopInstance,
    grid: &Grid,
) -> Result<(Assignment, f64), BaselineError> {
    exhaustive_solve_capped(instance, grid, ENUMERATION_CAP)
}

pub fn exhaustive_solve_capped(
    instance: &DcopInstance,
    grid: &Grid,
    cap: u128,
) -> Result<(Assignment, f64), BaselineError> {
    let n = instance.variable_count();
    let all: Vec<VariableId> = (0..n).collect();
    let cells = grid.cell_count(&all);
    if cells > cap {
        return Err(BaselineError::CapExceeded { cells, cap });
    }
    let extents: Vec<usize> = (0..n).map(|v| grid.len(v)).collect();
    let mut indices = vec![0usize; n];
    let mut best_indices = indices.clone();
    let mut best = f64::NEG_INFINITY;
    let op = instance.operator();
    let mut args = Vec::new();
    loop {
        // Canonical fold over functions in id order, without building an
        // assignment map per cell.
        let mut value = op.identity();
        for f in instance.functions() {
            args.clear();
            for &v in &f.scope {
                args.push(grid.points(v)[indices[v]]);
            }
            value = op.combine(value, f.evaluate(&args));
        }
        if value > best {
            best = value;
            best_indices.copy_from_slice(&indices);
        }
        if n == 0 || !advance(&mut indices, &extents) {
            break;
        }
    }
    let mut out = Assignment::new();
    for (v, &idx) in best_indices.iter().enumerate() {
        out.set(v, grid.points(v)[idx]);
    }
    let utility = evaluate_objective(instance, &out)?;
    Ok((out, utility))
}

/// Dense utility table over the grid cells of its scope. Scope is kept
/// sorted by variable id; `values` is row-major with the last scope axis
/// fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityTable {
    pub scope: Vec<VariableId>,
    pub extents: Vec<usize>,
    pub values: Vec<f64>,
}

impl UtilityTable {
    /// Scalar table with empty scope (the join identity carrier).
    pub fn scalar(value: f64) -> Self {
        Self {
            scope: Vec::new(),
            extents: Vec::new(),
            values: vec![value],
        }
    }

    /// Tabulates one utility function over the grid of its scope, cells in
    /// sorted-variable order.
    pub fn from_function(
        instance: &DcopInstance,
        function: usize,
        grid: &Grid,
    ) -> Result<Self, BaselineError> {
        let f = instance.function(function);
        let mut scope = f.scope.clone();
        scope.sort_unstable();
        let extents: Vec<usize> = scope.iter().map(|&v| grid.len(v)).collect();
        let cells = grid.cell_count(&scope);
        if cells > TABLE_CELL_CAP {
            return Err(BaselineError::SeparatorTooLarge {
                agent: instance.agent_of(*scope.last().unwrap()),
                cells,
                cap: TABLE_CELL_CAP,
            });
        }
        // Argument order follows the function's own scope order.
        let arg_slots: Vec<usize> = f
            .scope
            .iter()
            .map(|v| scope.iter().position(|s| s == v).unwrap())
            .collect();
        let mut values = Vec::with_capacity(cells as usize);
        let mut indices = vec![0usize; scope.len()];
        let mut args = vec![0.0; f.scope.len()];
        loop {
            for (slot, &axis) in arg_slots.iter().enumerate() {
                args[slot] = grid.points(scope[axis])[indices[axis]];
            }
            values.push(f.evaluate(&args));
            if indices.is_empty() || !advance(&mut indices, &extents) {
                break;
            }
        }
        Ok(Self {
            scope,
            extents,
            values,
        })
    }

    fn flat_index(&self, indices: &[usize]) -> usize {
        let mut flat = 0;
        for (axis, &i) in indices.iter().enumerate() {
            flat = flat * self.extents[axis] + i;
        }
        flat
    }

    /// Value at a cell given index positions for a superset scope.
    fn value_in(&self, super_scope: &[VariableId], super_indices: &[usize]) -> f64 {
        let mut flat = 0;
        for (axis, &v) in self.scope.iter().enumerate() {
            let pos = super_scope.iter().position(|&s| s == v).unwrap();
            flat = flat * self.extents[axis] + super_indices[pos];
        }
        self.values[flat]
    }
}

/// Joins two tables: the scope becomes the union, and aligned cells combine
/// under the operator.
pub fn dpop_join(
    a: &UtilityTable,
    b: &UtilityTable,
    op: Operator,
) -> Result<UtilityTable, BaselineError> {
    for (axis, &v) in a.scope.iter().enumerate() {
        if let Some(other) = b.scope.iter().position(|&w| w == v) {
            if a.extents[axis] != b.extents[other] {
                return Err(BaselineError::GridMismatch { variable: v });
            }
        }
    }
    let mut scope: Vec<VariableId> = a.scope.iter().chain(b.scope.iter()).copied().collect();
    scope.sort_unstable();
    scope.dedup();
    let extents: Vec<usize> = scope
        .iter()
        .map(|&v| {
            a.scope
                .iter()
                .position(|&w| w == v)
                .map(|i| a.extents[i])
                .unwrap_or_else(|| {
                    let i = b.scope.iter().position(|&w| w == v).unwrap();
                    b.extents[i]
                })
        })
        .collect();
    let cells: usize = extents.iter().product::<usize>().max(1);
    let mut values = Vec::with_capacity(cells);
    let mut indices = vec![0usize; scope.len()];
    loop {
        let va = a.value_in(&scope, &indices);
        let vb = b.value_in(&scope, &indices);
        values.push(op.combine(va, vb));
        if indices.is_empty() || !advance(&mut indices, &extents) {
            break;
        }
    }
    Ok(UtilityTable {
        scope,
        extents,
        values,
    })
}

/// Argmax bookkeeping of a projection: for every cell of the remaining
/// scope, the grid indices of the projected variables that achieved the
/// maximum (ties to the lowest indices).
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionArgmax {
    pub projected: Vec<VariableId>,
    pub scope: Vec<VariableId>,
    pub extents: Vec<usize>,
    pub argmax: Vec<Vec<usize>>,
}

impl ProjectionArgmax {
    /// Projected-variable grid indices for the remaining-scope cell.
    pub fn lookup(&self, indices: &[usize]) -> &[usize] {
        let mut flat = 0;
        for (axis, &i) in indices.iter().enumerate() {
            flat = flat * self.extents[axis] + i;
        }
        &self.argmax[flat]
    }
}

/// Maximizes the table over `vars`, recording per-cell argmax indices.
pub fn dpop_project(
    table: &UtilityTable,
    vars: &[VariableId],
) -> (UtilityTable, ProjectionArgmax) {
    let projected: Vec<VariableId> = table
        .scope
        .iter()
        .copied()
        .filter(|v| vars.contains(v))
        .collect();
    let remaining: Vec<VariableId> = table
        .scope
        .iter()
        .copied()
        .filter(|v| !vars.contains(v))
        .collect();
    let rem_extents: Vec<usize> = remaining
        .iter()
        .map(|&v| table.extents[table.scope.iter().position(|&w| w == v).unwrap()])
        .collect();
    let proj_extents: Vec<usize> = projected
        .iter()
        .map(|&v| table.extents[table.scope.iter().position(|&w| w == v).unwrap()])
        .collect();
    let rem_cells: usize = rem_extents.iter().product::<usize>().max(1);
    let mut values = Vec::with_capacity(rem_cells);
    let mut argmax = Vec::with_capacity(rem_cells);
    let mut rem_indices = vec![0usize; remaining.len()];
    let mut full_indices = vec![0usize; table.scope.len()];
    loop {
        let mut proj_indices = vec![0usize; projected.len()];
        let mut best = f64::NEG_INFINITY;
        let mut best_proj = proj_indices.clone();
        loop {
            for (axis, &v) in table.scope.iter().enumerate() {
                full_indices[axis] = if let Some(p) = projected.iter().position(|&w| w == v) {
                    proj_indices[p]
                } else {
                    let r = remaining.iter().position(|&w| w == v).unwrap();
                    rem_indices[r]
                };
            }
            let value = table.values[table.flat_index(&full_indices)];
            if value > best {
                best = value;
                best_proj.copy_from_slice(&proj_indices);
            }
            if proj_indices.is_empty() || !advance(&mut proj_indices, &proj_extents) {
                break;
            }
        }
        values.push(best);
        argmax.push(best_proj);
        if rem_indices.is_empty() || !advance(&mut rem_indices, &rem_extents) {
            break;
        }
    }
    (
        UtilityTable {
            scope: remaining.clone(),
            extents: rem_extents.clone(),
            values,
        },
        ProjectionArgmax {
            projected,
            scope: remaining,
            extents: rem_extents,
            argmax,
        },
    )
}

/// Exact grid optimum via utility propagation over the pseudo-tree.
///
/// Bottom-up, every agent fuses its allocated function tables and child
/// messages and projects out its own variable in a single pass, so the full
/// joint table over `{own} ∪ separator` is never materialized; only
/// separator-sized messages are. Top-down, each agent fixes its variable
/// from the recorded argmax at its ancestors' cell.
pub fn dpop_solve(
    instance: &DcopInstance,
    tree: &PseudoTree,
    grid: &Grid,
) -> Result<(Assignment, f64), BaselineError> {
    dpop_solve_capped(instance, tree, grid, TABLE_CELL_CAP)
}

struct AgentPlan {
    separator: Vec<VariableId>,
    /// Own-variable grid index per separator cell.
    choice: Vec<u32>,
}

pub fn dpop_solve_capped(
    instance: &DcopInstance,
    tree: &PseudoTree,
    grid: &Grid,
    cap: u128,
) -> Result<(Assignment, f64), BaselineError> {
    let op = instance.operator();
    let order = tree.preorder();
    let mut messages: Vec<Option<UtilityTable>> = vec![None; instance.agent_count()];
    let mut plans: Vec<Option<AgentPlan>> = (0..instance.agent_count()).map(|_| None).collect();

    for &agent in order.iter().rev() {
        let own = instance.variable_of(agent);
        let mut inputs: Vec<UtilityTable> = Vec::new();
        for fid in tree.functions_of(agent) {
            inputs.push(UtilityTable::from_function(instance, fid, grid)?);
        }
        for &child in tree.children(agent) {
            inputs.push(messages[child].take().expect("child processed first"));
        }
        // Fused join + project: enumerate separator cells, scan the own
        // variable, combine inputs on the fly.
        let mut separator: Vec<VariableId> = inputs
            .iter()
            .flat_map(|t| t.scope.iter().copied())
            .filter(|&v| v != own)
            .collect();
        separator.sort_unstable();
        separator.dedup();
        let sep_cells = grid.cell_count(&separator);
        if sep_cells > cap {
            return Err(BaselineError::SeparatorTooLarge {
                agent,
                cells: sep_cells,
                cap,
            });
        }
        let sep_extents: Vec<usize> = separator.iter().map(|&v| grid.len(v)).collect();
        let own_extent = grid.len(own);
        let mut full_scope = separator.clone();
        full_scope.push(own);
        full_scope.sort_unstable();
        let own_pos = full_scope.iter().position(|&v| v == own).unwrap();

        let mut values = Vec::with_capacity(sep_cells as usize);
        let mut choice = Vec::with_capacity(sep_cells as usize);
        let mut sep_indices = vec![0usize; separator.len()];
        let mut full_indices = vec![0usize; full_scope.len()];
        loop {
            for (axis, &v) in full_scope.iter().enumerate() {
                if v != own {
                    let s = separator.iter().position(|&w| w == v).unwrap();
                    full_indices[axis] = sep_indices[s];
                }
            }
            let mut best = f64::NEG_INFINITY;
            let mut best_own = 0u32;
            for own_idx in 0..own_extent {
                full_indices[own_pos] = own_idx;
                let mut acc = op.identity();
                for t in &inputs {
                    acc = op.combine(acc, t.value_in(&full_scope, &full_indices));
                }
                if acc > best {
                    best = acc;
                    best_own = own_idx as u32;
                }
            }
            values.push(best);
            choice.push(best_own);
            if sep_indices.is_empty() || !advance(&mut sep_indices, &sep_extents) {
                break;
            }
        }
        plans[agent] = Some(AgentPlan {
            separator: separator.clone(),
            choice,
        });
        messages[agent] = Some(UtilityTable {
            scope: separator,
            extents: sep_extents,
            values,
        });
    }

    // Value propagation: walk the tree top-down, fixing each variable from
    // the recorded choice at its separator cell.
    let mut chosen_index: Vec<usize> = vec![0; instance.variable_count()];
    let mut assignment = Assignment::new();
    for &agent in &order {
        let plan = plans[agent].as_ref().expect("all agents planned");
        let mut flat = 0usize;
        for &v in &plan.separator {
            flat = flat * grid.len(v) + chosen_index[v];
        }
        let own = instance.variable_of(agent);
        let own_idx = plan.choice[flat] as usize;
        chosen_index[own] = own_idx;
        assignment.set(own, grid.points(own)[own_idx]);
    }

    // Canonical utility of the assignment over the functions this tree
    // owns, folded in function-id order. For a tree spanning the whole
    // instance this is exactly the objective; for one component of a
    // disconnected instance it is that component's share.
    let mut owned: Vec<usize> = tree
        .members()
        .iter()
        .flat_map(|&a| tree.functions_of(a))
        .collect();
    owned.sort_unstable();
    let mut utility = op.identity();
    let mut args = Vec::new();
    for fid in owned {
        let f = instance.function(fid);
        args.clear();
        for &v in &f.scope {
            args.push(assignment.get(v).ok_or(DcopError::IncompleteAssignment { variable: v })?);
        }
        utility = op.combine(utility, f.evaluate(&args));
    }
    Ok((assignment, utility))
}
