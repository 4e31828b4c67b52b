//! Problem representation for continuous DCOPs.
//!
//! A problem is the tuple of agents, variables, continuous domains, utility
//! functions, a variable-to-agent allocation, and an aggregation operator.
//! This artifact fixes one variable per agent (the allocation is a
//! bijection), which matches the sensor benchmark and keeps the message
//! protocol one-dimensional per agent.

mod graph;
mod tree;

pub use graph::{build_constraint_graph, ConstraintGraph};
pub use tree::{allocate_functions, build_pseudo_tree, prepare_tree, PseudoTree};

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type AgentId = usize;
pub type VariableId = usize;
pub type FunctionId = usize;

/// Errors raised while constructing or evaluating a DCOP.
#[derive(Debug, Error)]
pub enum DcopError {
    #[error("empty domain: lower {lower} must be strictly below upper {upper}")]
    EmptyDomain { lower: f64, upper: f64 },
    #[error("allocation must be a bijection between {variables} variables and {agents} agents")]
    AllocationNotBijective { variables: usize, agents: usize },
    #[error("function {function}: scope is empty")]
    EmptyScope { function: FunctionId },
    #[error("function {function}: variable {variable} repeats in scope")]
    DuplicateScopeVariable {
        function: FunctionId,
        variable: VariableId,
    },
    #[error("function {function}: scope variable {variable} out of range (< {bound} expected)")]
    ScopeOutOfRange {
        function: FunctionId,
        variable: VariableId,
        bound: usize,
    },
    #[error("function {function}: expected {scope} Lipschitz entries, got {got}")]
    LipschitzArityMismatch {
        function: FunctionId,
        scope: usize,
        got: usize,
    },
    #[error("function {function}: Lipschitz constant for variable {variable} is negative")]
    NegativeLipschitz {
        function: FunctionId,
        variable: VariableId,
    },
    #[error("assignment incomplete: variable {variable} has no value")]
    IncompleteAssignment { variable: VariableId },
    #[error("constraint graph is disconnected; solve the components separately")]
    DisconnectedGraph,
    #[error("agent {agent} is not part of this graph")]
    UnknownAgent { agent: AgentId },
    #[error("function {function}: scope agents do not lie on a single branch of the pseudo-tree")]
    ScopeNotOnBranch { function: FunctionId },
}

/// Closed interval of admissible values for one variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDomain")]
pub struct ContinuousDomain {
    lower: f64,
    upper: f64,
}

#[derive(Deserialize)]
struct RawDomain {
    lower: f64,
    upper: f64,
}

impl TryFrom<RawDomain> for ContinuousDomain {
    type Error = DcopError;

    fn try_from(raw: RawDomain) -> Result<Self, DcopError> {
        ContinuousDomain::new(raw.lower, raw.upper)
    }
}

impl ContinuousDomain {
    pub fn new(lower: f64, upper: f64) -> Result<Self, DcopError> {
        if !lower.is_finite() || !upper.is_finite() || lower >= upper {
            return Err(DcopError::EmptyDomain { lower, upper });
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        self.lower + 0.5 * self.width()
    }

    pub fn contains(&self, x: f64) -> bool {
        (self.lower..=self.upper).contains(&x)
    }

    /// Maps a domain value onto [0, 1].
    pub fn normalize(&self, x: f64) -> f64 {
        ((x - self.lower) / self.width()).clamp(0.0, 1.0)
    }

    /// Maps a normalized coordinate in [0, 1] back to a domain value.
    pub fn denormalize(&self, t: f64) -> f64 {
        if t <= 0.0 {
            self.lower
        } else if t >= 1.0 {
            self.upper
        } else {
            self.lower + t * self.width()
        }
    }
}

/// Operator aggregating utility functions into the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operator {
    Sum,
    Max,
}

impl Operator {
    pub fn identity(&self) -> f64 {
        match self {
            Operator::Sum => 0.0,
            Operator::Max => f64::NEG_INFINITY,
        }
    }

    pub fn combine(&self, a: f64, b: f64) -> f64 {
        match self {
            Operator::Sum => a + b,
            Operator::Max => a.max(b),
        }
    }
}

/// Arbitrary evaluation closure for code-defined utility functions.
pub type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Evaluator backing a utility function.
///
/// The data-carrying variants round-trip through problem files; `Custom`
/// wraps an arbitrary closure and is only constructible in code.
#[derive(Clone)]
pub enum FunctionKind {
    /// Coverage reward for one target observed by the sensors in scope:
    /// the best per-sensor tent `1 - |angle error| / view_angle`, gated by
    /// sensing range. Angles in degrees; `wrap` selects the minimal wrapped
    /// angular difference.
    SensorTarget {
        target: [f64; 2],
        sensors: Vec<[f64; 2]>,
        range: f64,
        view_angle: f64,
        wrap: bool,
    },
    /// Multilinear interpolation over a knot grid, one knot vector per scope
    /// variable; `values` is row-major with the last axis fastest.
    PiecewiseLinear {
        knots: Vec<Vec<f64>>,
        values: Vec<f64>,
    },
    Constant(f64),
    Custom(Evaluator),
}

impl fmt::Debug for FunctionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunctionKind::SensorTarget { target, .. } => {
                write!(f, "SensorTarget({:?})", target)
            }
            FunctionKind::PiecewiseLinear { knots, .. } => {
                write!(f, "PiecewiseLinear({} axes)", knots.len())
            }
            FunctionKind::Constant(c) => write!(f, "Constant({c})"),
            FunctionKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Minimal wrapped angular distance in degrees, in [0, 180].
pub(crate) fn wrapped_angle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    if d > 180.0 {
        360.0 - d
    } else {
        d
    }
}

fn sensor_target_utility(
    omega: f64,
    sensor: [f64; 2],
    target: [f64; 2],
    view_angle: f64,
    range: f64,
    wrap: bool,
) -> f64 {
    let dx = target[0] - sensor[0];
    let dy = target[1] - sensor[1];
    if (dx * dx + dy * dy).sqrt() > range {
        return 0.0;
    }
    let bearing = dy.atan2(dx).to_degrees();
    let diff = if wrap {
        wrapped_angle_distance(omega, bearing)
    } else {
        (omega - bearing).abs()
    };
    if diff <= view_angle {
        1.0 - diff / view_angle
    } else {
        0.0
    }
}

/// Multilinear interpolation of `values` over the per-axis `knots` at `args`.
fn piecewise_linear_eval(knots: &[Vec<f64>], values: &[f64], args: &[f64]) -> f64 {
    debug_assert_eq!(knots.len(), args.len());
    // Per axis: bracketing knot index pair and blend weight.
    let mut cells = Vec::with_capacity(knots.len());
    for (axis, &x) in knots.iter().zip(args) {
        let n = axis.len();
        debug_assert!(n >= 1);
        if n == 1 {
            cells.push((0usize, 0usize, 0.0));
            continue;
        }
        let x = x.clamp(axis[0], axis[n - 1]);
        let hi = axis.partition_point(|&k| k < x).min(n - 1).max(1);
        let lo = hi - 1;
        let gap = axis[hi] - axis[lo];
        let t = if gap > 0.0 { (x - axis[lo]) / gap } else { 0.0 };
        cells.push((lo, hi, t));
    }
    let strides = row_major_strides(knots);
    let corners = 1usize << cells.len();
    let mut acc = 0.0;
    for corner in 0..corners {
        let mut weight = 1.0;
        let mut index = 0usize;
        for (axis, &(lo, hi, t)) in cells.iter().enumerate() {
            let high_side = corner >> axis & 1 == 1;
            weight *= if high_side { t } else { 1.0 - t };
            index += strides[axis] * if high_side { hi } else { lo };
        }
        if weight != 0.0 {
            acc += weight * values[index];
        }
    }
    acc
}

fn row_major_strides(knots: &[Vec<f64>]) -> Vec<usize> {
    let mut strides = vec![1usize; knots.len()];
    for axis in (0..knots.len().saturating_sub(1)).rev() {
        strides[axis] = strides[axis + 1] * knots[axis + 1].len();
    }
    strides
}

/// One utility function: an ordered scope of variables, an evaluator, and a
/// per-scope-variable Lipschitz constant (utility units per domain unit).
#[derive(Debug, Clone)]
pub struct UtilityFunction {
    pub id: FunctionId,
    pub scope: Vec<VariableId>,
    pub kind: FunctionKind,
    pub lipschitz: Vec<f64>,
}

impl UtilityFunction {
    pub fn new(
        id: FunctionId,
        scope: Vec<VariableId>,
        kind: FunctionKind,
        lipschitz: Vec<f64>,
    ) -> Self {
        Self {
            id,
            scope,
            kind,
            lipschitz,
        }
    }

    /// Evaluates the function; `args` are aligned with `scope`.
    pub fn evaluate(&self, args: &[f64]) -> f64 {
        debug_assert_eq!(args.len(), self.scope.len());
        match &self.kind {
            FunctionKind::SensorTarget {
                target,
                sensors,
                range,
                view_angle,
                wrap,
            } => {
                let mut best = 0.0f64;
                for (sensor, &omega) in sensors.iter().zip(args) {
                    let u = sensor_target_utility(omega, *sensor, *target, *view_angle, *range, *wrap);
                    if u > best {
                        best = u;
                    }
                }
                best
            }
            FunctionKind::PiecewiseLinear { knots, values } => {
                piecewise_linear_eval(knots, values, args)
            }
            FunctionKind::Constant(c) => *c,
            FunctionKind::Custom(f) => f(args),
        }
    }

    /// Lipschitz constant of the function with respect to `variable`.
    pub fn lipschitz_for(&self, variable: VariableId) -> f64 {
        self.scope
            .iter()
            .position(|&v| v == variable)
            .map(|i| self.lipschitz[i])
            .unwrap_or(0.0)
    }
}

/// Per-axis Lipschitz constants of a multilinear knot table: the steepest
/// slope between adjacent knots along each axis.
pub fn piecewise_linear_lipschitz(knots: &[Vec<f64>], values: &[f64]) -> Vec<f64> {
    let strides = row_major_strides(knots);
    let extents: Vec<usize> = knots.iter().map(|k| k.len()).collect();
    let total: usize = extents.iter().product();
    let mut out = vec![0.0; knots.len()];
    for (axis, knot) in knots.iter().enumerate() {
        if knot.len() < 2 {
            continue;
        }
        let mut steepest = 0.0f64;
        for flat in 0..total {
            let pos = flat / strides[axis] % extents[axis];
            if pos + 1 == extents[axis] {
                continue;
            }
            let gap = knot[pos + 1] - knot[pos];
            let slope = ((values[flat + strides[axis]] - values[flat]) / gap).abs();
            steepest = steepest.max(slope);
        }
        out[axis] = steepest;
    }
    out
}

/// A continuous DCOP with one variable per agent.
#[derive(Debug, Clone)]
pub struct DcopInstance {
    domains: Vec<ContinuousDomain>,
    functions: Vec<UtilityFunction>,
    allocation: Vec<AgentId>,
    variable_of: Vec<VariableId>,
    operator: Operator,
}

impl DcopInstance {
    pub fn new(
        domains: Vec<ContinuousDomain>,
        functions: Vec<UtilityFunction>,
        allocation: Vec<AgentId>,
        operator: Operator,
    ) -> Result<Self, DcopError> {
        let n = domains.len();
        if allocation.len() != n {
            return Err(DcopError::AllocationNotBijective {
                variables: n,
                agents: allocation.len(),
            });
        }
        let mut variable_of = vec![usize::MAX; n];
        for (variable, &agent) in allocation.iter().enumerate() {
            if agent >= n || variable_of[agent] != usize::MAX {
                return Err(DcopError::AllocationNotBijective {
                    variables: n,
                    agents: n,
                });
            }
            variable_of[agent] = variable;
        }
        for f in &functions {
            if f.scope.is_empty() {
                return Err(DcopError::EmptyScope { function: f.id });
            }
            for (i, &v) in f.scope.iter().enumerate() {
                if v >= n {
                    return Err(DcopError::ScopeOutOfRange {
                        function: f.id,
                        variable: v,
                        bound: n,
                    });
                }
                if f.scope[..i].contains(&v) {
                    return Err(DcopError::DuplicateScopeVariable {
                        function: f.id,
                        variable: v,
                    });
                }
            }
            if f.lipschitz.len() != f.scope.len() {
                return Err(DcopError::LipschitzArityMismatch {
                    function: f.id,
                    scope: f.scope.len(),
                    got: f.lipschitz.len(),
                });
            }
            if let Some(i) = f.lipschitz.iter().position(|&l| l.is_nan() || l < 0.0) {
                return Err(DcopError::NegativeLipschitz {
                    function: f.id,
                    variable: f.scope[i],
                });
            }
        }
        Ok(Self {
            domains,
            functions,
            allocation,
            variable_of,
            operator,
        })
    }

    /// Instance where agent `i` owns variable `i`.
    pub fn with_identity_allocation(
        domains: Vec<ContinuousDomain>,
        functions: Vec<UtilityFunction>,
        operator: Operator,
    ) -> Result<Self, DcopError> {
        let allocation = (0..domains.len()).collect();
        Self::new(domains, functions, allocation, operator)
    }

    pub fn agent_count(&self) -> usize {
        self.domains.len()
    }

    pub fn variable_count(&self) -> usize {
        self.domains.len()
    }

    pub fn domain(&self, variable: VariableId) -> &ContinuousDomain {
        &self.domains[variable]
    }

    pub fn domains(&self) -> &[ContinuousDomain] {
        &self.domains
    }

    pub fn functions(&self) -> &[UtilityFunction] {
        &self.functions
    }

    pub fn function(&self, id: FunctionId) -> &UtilityFunction {
        &self.functions[id]
    }

    pub fn operator(&self) -> Operator {
        self.operator
    }

    pub fn agent_of(&self, variable: VariableId) -> AgentId {
        self.allocation[variable]
    }

    pub fn variable_of(&self, agent: AgentId) -> VariableId {
        self.variable_of[agent]
    }

    pub fn allocation(&self) -> &[AgentId] {
        &self.allocation
    }

    /// Sum over all functions containing `variable` of their Lipschitz
    /// constant with respect to it (domain units). This bounds the slope of
    /// the agent's aggregate objective, including child best responses,
    /// because a pointwise optimum over functions each L-Lipschitz in one
    /// argument stays L-Lipschitz in that argument.
    pub fn variable_lipschitz(&self, variable: VariableId) -> f64 {
        self.functions
            .iter()
            .map(|f| f.lipschitz_for(variable))
            .sum()
    }
}

/// Partial or complete projection of variables onto their domains.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    values: BTreeMap<VariableId, f64>,
}

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, variable: VariableId, value: f64) {
        self.values.insert(variable, value);
    }

    pub fn get(&self, variable: VariableId) -> Option<f64> {
        self.values.get(&variable).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (VariableId, f64)> + '_ {
        self.values.iter().map(|(&v, &x)| (v, x))
    }

    pub fn merge(&mut self, other: &Assignment) {
        for (v, x) in other.iter() {
            self.values.insert(v, x);
        }
    }

    /// Checks every assigned value against its variable's domain.
    pub fn respects_domains(&self, instance: &DcopInstance) -> bool {
        self.iter().all(|(v, x)| instance.domain(v).contains(x))
    }
}

/// Aggregates every utility function at a complete assignment.
pub fn evaluate_objective(instance: &DcopInstance, assignment: &Assignment) -> Result<f64, DcopError> {
    let mut acc = instance.operator().identity();
    let mut args = Vec::new();
    for f in instance.functions() {
        args.clear();
        for &v in &f.scope {
            let x = assignment
                .get(v)
                .ok_or(DcopError::IncompleteAssignment { variable: v })?;
            args.push(x);
        }
        acc = instance.operator().combine(acc, f.evaluate(&args));
    }
    Ok(acc)
}
