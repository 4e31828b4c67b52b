//! Deterministic in-process execution of the protocol: a message bus with
//! strictly increasing sequence numbers, FIFO delivery, run-to-completion
//! handlers, trace recording, and run metrics.
//!
//! The scheduler is single-threaded on purpose: the protocol only assumes
//! reliable FIFO channels between tree neighbors, so a threaded transport
//! could replace it, but a deterministic bus makes every run replayable
//! bit-for-bit. Instances whose constraint graph is disconnected are solved
//! as independent components, lowest-indexed agent first.

use std::collections::VecDeque;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dcop::{
    build_constraint_graph, evaluate_objective, prepare_tree, AgentId, Assignment, DcopError,
    DcopInstance, PseudoTree,
};
use crate::protocol::{
    AgentSettings, AgentState, MessageBody, ProtocolError, SamplingStrategy,
};

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("message addressed to unregistered agent {agent}")]
    UnknownRecipient { agent: AgentId },
    #[error("agent {agent} attempted to message itself")]
    SelfSend { agent: AgentId },
    #[error("run stalled: agent {agent} never finished")]
    Stalled { agent: AgentId },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Dcop(#[from] DcopError),
}

/// One traced message: a strictly increasing sequence number plus the wire
/// record of kind, endpoints, and payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub seq: u64,
    pub from: AgentId,
    pub to: AgentId,
    #[serde(flatten)]
    pub body: MessageBody,
}

/// Counters of one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub samples_per_agent: std::collections::BTreeMap<AgentId, u64>,
    pub sample_messages: u64,
    pub utility_messages: u64,
    pub final_messages: u64,
    pub utility_evaluations: u64,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl RunMetrics {
    pub fn total_samples(&self) -> u64 {
        self.samples_per_agent.values().sum()
    }

    pub fn total_messages(&self) -> u64 {
        self.sample_messages + self.utility_messages + self.final_messages
    }

    fn absorb(&mut self, other: RunMetrics) {
        for (agent, n) in other.samples_per_agent {
            *self.samples_per_agent.entry(agent).or_insert(0) += n;
        }
        self.sample_messages += other.sample_messages;
        self.utility_messages += other.utility_messages;
        self.final_messages += other.final_messages;
        self.utility_evaluations += other.utility_evaluations;
    }
}

/// Execution switches.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Record every envelope. Off by default: deep trees exchange millions
    /// of messages and sweeps only need the counters.
    pub record_trace: bool,
}

/// Solver configuration for one instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Per-agent sample budgets (samples per received sample message).
    pub budgets: Vec<usize>,
    pub xi: f64,
    pub strategy: SamplingStrategy,
    /// Optional per-agent kernel-scale overrides (normalized units).
    pub kernel_scales: Option<Vec<f64>>,
    /// Acquisition search tolerance (normalized input units).
    pub search_tolerance: f64,
}

impl SolverConfig {
    pub fn uniform(agents: usize, budget: usize) -> Self {
        Self {
            budgets: vec![budget; agents],
            xi: 0.0,
            strategy: SamplingStrategy::Bayesian,
            kernel_scales: None,
            search_tolerance: crate::acquisition::SEARCH_TOLERANCE,
        }
    }

    pub fn with_xi(mut self, xi: f64) -> Self {
        self.xi = xi;
        self
    }

    pub fn with_strategy(mut self, strategy: SamplingStrategy) -> Self {
        self.strategy = strategy;
        self
    }

    fn settings_for(&self, agent: AgentId) -> AgentSettings {
        AgentSettings {
            budget: self.budgets[agent],
            xi: self.xi,
            strategy: self.strategy,
            kernel_scale: self.kernel_scales.as_ref().map(|k| k[agent]),
            search_tolerance: self.search_tolerance,
        }
    }
}

/// Result of running one pseudo-tree to completion.
#[derive(Debug)]
pub struct ComponentRun {
    pub assignment: Assignment,
    pub metrics: RunMetrics,
    pub trace: Vec<Envelope>,
}

/// In-process message bus: global FIFO queue (which preserves per-pair
/// order), sequence numbers assigned at send time, recipients validated
/// before queuing.
pub(crate) struct Scheduler {
    queue: VecDeque<Envelope>,
    next_seq: u64,
    registered: Vec<bool>,
    trace: Vec<Envelope>,
    record_trace: bool,
    pub sample_messages: u64,
    pub utility_messages: u64,
    pub final_messages: u64,
}

impl Scheduler {
    pub(crate) fn new(agent_count: usize, members: &[AgentId], record_trace: bool) -> Self {
        let mut registered = vec![false; agent_count];
        for &a in members {
            registered[a] = true;
        }
        Self {
            queue: VecDeque::new(),
            next_seq: 0,
            registered,
            trace: Vec::new(),
            record_trace,
            sample_messages: 0,
            utility_messages: 0,
            final_messages: 0,
        }
    }

    pub(crate) fn send(
        &mut self,
        from: AgentId,
        to: AgentId,
        body: MessageBody,
    ) -> Result<(), RuntimeError> {
        if from == to {
            return Err(RuntimeError::SelfSend { agent: from });
        }
        if to >= self.registered.len() || !self.registered[to] {
            return Err(RuntimeError::UnknownRecipient { agent: to });
        }
        match body {
            MessageBody::Sample(_) => self.sample_messages += 1,
            MessageBody::Utility(_) => self.utility_messages += 1,
            MessageBody::Final(_) => self.final_messages += 1,
        }
        let envelope = Envelope {
            seq: self.next_seq,
            from,
            to,
            body,
        };
        self.next_seq += 1;
        if self.record_trace {
            self.trace.push(envelope.clone());
        }
        self.queue.push_back(envelope);
        Ok(())
    }

    pub(crate) fn dispatch_next(&mut self) -> Option<Envelope> {
        self.queue.pop_front()
    }

    pub(crate) fn into_trace(self) -> Vec<Envelope> {
        self.trace
    }
}

/// Executes the protocol on one pseudo-tree: initialization, the nested
/// sampling loops, and the final phase, until the bus drains and every
/// member agent has fixed its assignment.
pub fn run_to_completion(
    instance: &Arc<DcopInstance>,
    tree: &PseudoTree,
    config: &SolverConfig,
    seed: u64,
    options: &RunOptions,
) -> Result<ComponentRun, RuntimeError> {
    let started = Instant::now();
    let mut agents: Vec<Option<AgentState>> = (0..instance.agent_count()).map(|_| None).collect();
    for &id in tree.members() {
        agents[id] = Some(AgentState::new(
            instance.clone(),
            tree,
            id,
            &config.settings_for(id),
        )?);
    }
    let mut bus = Scheduler::new(instance.agent_count(), tree.members(), options.record_trace);

    let root = tree.root();
    let mut outbox = Vec::new();
    agents[root]
        .as_mut()
        .expect("root is a member")
        .start_root(&mut outbox)?;
    for (to, body) in outbox.drain(..) {
        bus.send(root, to, body)?;
    }

    while let Some(envelope) = bus.dispatch_next() {
        let agent = agents[envelope.to]
            .as_mut()
            .ok_or(RuntimeError::UnknownRecipient { agent: envelope.to })?;
        match &envelope.body {
            MessageBody::Sample(m) => agent.handle_sample(envelope.from, m, &mut outbox)?,
            MessageBody::Utility(m) => agent.handle_utility(envelope.from, m, &mut outbox)?,
            MessageBody::Final(m) => agent.handle_final(envelope.from, m, &mut outbox)?,
        }
        for (to, body) in outbox.drain(..) {
            bus.send(envelope.to, to, body)?;
        }
    }

    let mut assignment = Assignment::new();
    let mut metrics = RunMetrics {
        seed,
        ..Default::default()
    };
    for &id in tree.members() {
        let agent = agents[id].as_ref().expect("member agent exists");
        if !agent.is_finished() {
            return Err(RuntimeError::Stalled { agent: id });
        }
        let value = agent
            .best_assignment()
            .ok_or(RuntimeError::Stalled { agent: id })?;
        assignment.set(agent.variable(), value);
        metrics
            .samples_per_agent
            .insert(id, agent.samples_taken());
        metrics.utility_evaluations += agent.utility_evaluations();
    }
    metrics.sample_messages = bus.sample_messages;
    metrics.utility_messages = bus.utility_messages;
    metrics.final_messages = bus.final_messages;
    metrics.wall_time = started.elapsed();
    Ok(ComponentRun {
        assignment,
        metrics,
        trace: bus.into_trace(),
    })
}

/// Full solve outcome across all constraint-graph components.
#[derive(Debug)]
pub struct SolveOutcome {
    pub assignment: Assignment,
    /// Canonical objective value of the assignment.
    pub utility: f64,
    pub metrics: RunMetrics,
    pub trace: Vec<Envelope>,
    pub components: usize,
}

/// Solves a whole instance: splits the constraint graph into connected
/// components, runs the protocol per component (rooted at the lowest agent
/// index), and merges assignments, metrics, and traces. Agents untouched by
/// any function keep their domain midpoint.
pub fn solve(
    instance: &Arc<DcopInstance>,
    config: &SolverConfig,
    seed: u64,
    options: &RunOptions,
) -> Result<SolveOutcome, RuntimeError> {
    let started = Instant::now();
    let graph = build_constraint_graph(instance);
    let mut assignment = Assignment::new();
    let mut metrics = RunMetrics {
        seed,
        ..Default::default()
    };
    let mut trace = Vec::new();
    let mut components = 0;
    for component in graph.connected_components() {
        components += 1;
        if component.len() == 1 {
            let agent = component[0];
            let variable = instance.variable_of(agent);
            let touched = instance
                .functions()
                .iter()
                .any(|f| f.scope.contains(&variable));
            if !touched {
                assignment.set(variable, instance.domain(variable).midpoint());
                metrics.samples_per_agent.insert(agent, 0);
                continue;
            }
        }
        let tree = prepare_tree(instance, &graph.induced(&component))?;
        let run = run_to_completion(instance, &tree, config, seed, options)?;
        assignment.merge(&run.assignment);
        metrics.absorb(run.metrics);
        let offset = trace.len() as u64;
        trace.extend(run.trace.into_iter().map(|mut e| {
            e.seq += offset;
            e
        }));
    }
    let utility = evaluate_objective(instance, &assignment)?;
    metrics.wall_time = started.elapsed();
    Ok(SolveOutcome {
        assignment,
        utility,
        metrics,
        trace,
        components,
    })
}
