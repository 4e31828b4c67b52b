//! The agent state machine for continuous DCOP solving.
//!
//! Four phases: pseudo-tree construction and function allocation (handled in
//! [`crate::dcop`]), then nested sample/utility optimization, then
//! final-assignment propagation.
//!
//! Every agent owns one variable. On receiving a sample message (its
//! ancestors' tentative values), the agent runs a budgeted Bayesian
//! optimization loop over its own variable: the first three samples are the
//! domain endpoints and midpoint, the rest maximize expected improvement.
//! Each of its own samples is appended to the ancestor samples and sent to
//! its children, which recursively run their own full budgeted loops before
//! replying with their best utility. The reply to the parent is therefore
//! the optimal utility reachable below, which makes replies deterministic
//! functions of the received sample message: repeats are answered from the
//! completed-session store without resampling.
//!
//! After the root exhausts its budget it fixes its best sample and sends a
//! final message; every agent looks up its best response to the final
//! ancestor assignment, appends it, and forwards, until the leaves finish.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{
    kernel_scale_for, select_next_sample_with_tolerance, AcquisitionError, AcquisitionParams,
    LipschitzModel, SEARCH_TOLERANCE,
};
use crate::dcop::{
    AgentId, ContinuousDomain, DcopInstance, FunctionId, Operator, PseudoTree, VariableId,
};
use crate::gp::{DirichletKernel, GpError, ObservationSet};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("agent {agent}: function {function} needs a sample from agent {missing}, absent from the sample message")]
    MissingAncestorSample {
        agent: AgentId,
        function: FunctionId,
        missing: AgentId,
    },
    #[error("agent {agent}: final assignment was never sampled (cache key mismatch)")]
    UnknownParentSample { agent: AgentId },
    #[error("agent {agent}: unexpected {kind} message from agent {from}")]
    UnexpectedMessage {
        agent: AgentId,
        from: AgentId,
        kind: &'static str,
    },
    #[error("agent {agent}: received a new sample message while one is being optimized")]
    SessionAlreadyActive { agent: AgentId },
    #[error("agent {agent}: sample budget must be at least 1")]
    EmptyBudget { agent: AgentId },
    #[error("agent {agent}: local utility is not finite")]
    NonFiniteUtility { agent: AgentId },
    #[error("agent {agent}: {source}")]
    Acquisition {
        agent: AgentId,
        source: AcquisitionError,
    },
    #[error("agent {agent}: {source}")]
    Gp { agent: AgentId, source: GpError },
}

/// Agent-keyed value maps serialize with string keys so the wire format
/// survives generic JSON tooling and tagged-enum flattening.
mod agent_map {
    use super::AgentId;
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<AgentId, f64>,
        ser: S,
    ) -> Result<S::Ok, S::Error> {
        let keyed: BTreeMap<String, f64> = map.iter().map(|(&a, &v)| (a.to_string(), v)).collect();
        keyed.serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        de: D,
    ) -> Result<BTreeMap<AgentId, f64>, D::Error> {
        let keyed = BTreeMap::<String, f64>::deserialize(de)?;
        keyed
            .into_iter()
            .map(|(k, v)| k.parse::<AgentId>().map(|a| (a, v)).map_err(D::Error::custom))
            .collect()
    }
}

/// Tentative values of the sender and all its tree ancestors, keyed by
/// agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMessage {
    #[serde(with = "agent_map")]
    pub samples: BTreeMap<AgentId, f64>,
}

/// Best aggregate utility of the sender's subtree for the sample message it
/// answers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityMessage {
    pub utility: f64,
}

/// Fixed optimal assignments, growing on the way down the tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalMessage {
    #[serde(with = "agent_map")]
    pub assignments: BTreeMap<AgentId, f64>,
}

/// Wire form of a protocol message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum MessageBody {
    Sample(SampleMessage),
    Utility(UtilityMessage),
    Final(FinalMessage),
}

impl MessageBody {
    pub fn kind(&self) -> &'static str {
        match self {
            MessageBody::Sample(_) => "sample",
            MessageBody::Utility(_) => "utility",
            MessageBody::Final(_) => "final",
        }
    }
}

/// Messages an agent wants delivered, in emission order.
pub type Outbox = Vec<(AgentId, MessageBody)>;

/// How an agent picks its own samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplingStrategy {
    /// Endpoint/midpoint bootstrap, then expected-improvement maximization.
    Bayesian,
    /// Equidistant sweep of the given number of points (endpoints included;
    /// a single point means the midpoint). Turns the protocol into an exact
    /// nested grid search for cross-validation.
    GridSweep(usize),
}

/// Per-agent solver knobs.
#[derive(Debug, Clone)]
pub struct AgentSettings {
    pub budget: usize,
    pub xi: f64,
    pub strategy: SamplingStrategy,
    /// Kernel scale override (normalized units); derived from the
    /// instance's Lipschitz constants when absent.
    pub kernel_scale: Option<f64>,
    /// Acquisition search tolerance in normalized input units.
    pub search_tolerance: f64,
}

/// Sample values are quantized to 12 decimal digits for map keying, so the
/// final phase finds the sessions recorded during sampling without exact
/// float identity.
pub fn quantize(value: f64) -> i64 {
    (value * 1e12).round() as i64
}

pub type SampleKey = Vec<(AgentId, i64)>;

fn key_of(samples: &BTreeMap<AgentId, f64>) -> SampleKey {
    samples.iter().map(|(&a, &v)| (a, quantize(v))).collect()
}

#[derive(Debug, Clone, Copy)]
struct Completed {
    best_x: f64,
    best_y: f64,
}

#[derive(Debug)]
struct Pending {
    x_domain: f64,
    x_norm: f64,
    local_part: f64,
    awaiting: Vec<AgentId>,
    child_acc: Option<f64>,
}

#[derive(Debug)]
struct Session {
    key: SampleKey,
    context: BTreeMap<AgentId, f64>,
    observations: ObservationSet,
    /// Incumbent in domain units (the observation set tracks it in
    /// normalized units; this keeps the exact sampled value).
    best: Option<(f64, f64)>,
    taken: usize,
    pending: Option<Pending>,
}

enum Selection {
    Sample(f64),
    Done,
}

enum Step {
    Recorded,
    AwaitingChildren,
    SessionComplete,
}

/// One agent of the running protocol.
#[derive(Debug)]
pub struct AgentState {
    id: AgentId,
    variable: VariableId,
    domain: ContinuousDomain,
    parent: Option<AgentId>,
    children: Vec<AgentId>,
    function_ids: Vec<FunctionId>,
    instance: Arc<DcopInstance>,
    operator: Operator,
    kernel: Option<DirichletKernel>,
    params: AcquisitionParams,
    budget: usize,
    strategy: SamplingStrategy,
    search_tolerance: f64,
    active: Option<Session>,
    completed: HashMap<SampleKey, Completed>,
    /// Agents appearing in received sample messages; fixes the key layout
    /// for the final-phase lookup.
    context_ids: Option<Vec<AgentId>>,
    best_assignment: Option<f64>,
    finished: bool,
    samples_taken: u64,
    utility_evaluations: u64,
}

impl AgentState {
    pub fn new(
        instance: Arc<DcopInstance>,
        tree: &PseudoTree,
        id: AgentId,
        settings: &AgentSettings,
    ) -> Result<Self, ProtocolError> {
        if settings.budget == 0 {
            return Err(ProtocolError::EmptyBudget { agent: id });
        }
        let variable = instance.variable_of(id);
        let domain = *instance.domain(variable);
        let normalized_lipschitz = settings
            .kernel_scale
            .unwrap_or_else(|| instance.variable_lipschitz(variable) * domain.width());
        let kernel = match kernel_scale_for(&LipschitzModel::new(normalized_lipschitz)) {
            Ok(k) => Some(k),
            Err(AcquisitionError::ZeroLipschitz) => None,
            Err(e) => return Err(ProtocolError::Acquisition { agent: id, source: e }),
        };
        Ok(Self {
            id,
            variable,
            domain,
            parent: tree.parent(id),
            children: tree.children(id).to_vec(),
            function_ids: tree.functions_of(id),
            operator: instance.operator(),
            instance,
            kernel,
            params: AcquisitionParams { xi: settings.xi },
            budget: settings.budget,
            strategy: settings.strategy,
            search_tolerance: if settings.search_tolerance > 0.0 {
                settings.search_tolerance
            } else {
                SEARCH_TOLERANCE
            },
            active: None,
            completed: HashMap::new(),
            context_ids: None,
            best_assignment: None,
            finished: false,
            samples_taken: 0,
            utility_evaluations: 0,
        })
    }

    pub fn id(&self) -> AgentId {
        self.id
    }

    pub fn variable(&self) -> VariableId {
        self.variable
    }

    pub fn is_root(&self) -> bool {
        self.parent.is_none()
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn best_assignment(&self) -> Option<f64> {
        self.best_assignment
    }

    pub fn samples_taken(&self) -> u64 {
        self.samples_taken
    }

    pub fn utility_evaluations(&self) -> u64 {
        self.utility_evaluations
    }

    /// Kicks off the root's budgeted loop (the only agent that samples
    /// without a received sample message).
    pub fn start_root(&mut self, out: &mut Outbox) -> Result<(), ProtocolError> {
        debug_assert!(self.is_root());
        self.open_session(BTreeMap::new());
        self.drive(out)
    }

    pub fn handle_sample(
        &mut self,
        from: AgentId,
        msg: &SampleMessage,
        out: &mut Outbox,
    ) -> Result<(), ProtocolError> {
        if self.parent != Some(from) {
            return Err(ProtocolError::UnexpectedMessage {
                agent: self.id,
                from,
                kind: "sample",
            });
        }
        if self.context_ids.is_none() {
            self.context_ids = Some(msg.samples.keys().copied().collect());
        }
        let key = key_of(&msg.samples);
        if let Some(done) = self.completed.get(&key) {
            // Same ancestor samples as an exhausted session: the reply must
            // repeat bit-for-bit, so answer from the store.
            out.push((
                from,
                MessageBody::Utility(UtilityMessage {
                    utility: done.best_y,
                }),
            ));
            return Ok(());
        }
        if self.active.is_some() {
            return Err(ProtocolError::SessionAlreadyActive { agent: self.id });
        }
        self.open_session(msg.samples.clone());
        self.drive(out)
    }

    pub fn handle_utility(
        &mut self,
        from: AgentId,
        msg: &UtilityMessage,
        out: &mut Outbox,
    ) -> Result<(), ProtocolError> {
        let agent = self.id;
        let session = self.active.as_mut().ok_or(ProtocolError::UnexpectedMessage {
            agent,
            from,
            kind: "utility",
        })?;
        let pending = session
            .pending
            .as_mut()
            .ok_or(ProtocolError::UnexpectedMessage {
                agent,
                from,
                kind: "utility",
            })?;
        let slot = pending
            .awaiting
            .iter()
            .position(|&c| c == from)
            .ok_or(ProtocolError::UnexpectedMessage {
                agent,
                from,
                kind: "utility",
            })?;
        pending.awaiting.swap_remove(slot);
        pending.child_acc = Some(match pending.child_acc {
            None => msg.utility,
            Some(acc) => self.operator.combine(acc, msg.utility),
        });
        if !pending.awaiting.is_empty() {
            return Ok(());
        }
        let pending = session.pending.take().expect("checked above");
        let total = self.operator.combine(
            pending.local_part,
            pending.child_acc.expect("at least one child replied"),
        );
        self.complete_observation(pending.x_domain, pending.x_norm, total)?;
        self.drive(out)
    }

    pub fn handle_final(
        &mut self,
        from: AgentId,
        msg: &FinalMessage,
        out: &mut Outbox,
    ) -> Result<(), ProtocolError> {
        if self.parent != Some(from) {
            return Err(ProtocolError::UnexpectedMessage {
                agent: self.id,
                from,
                kind: "final",
            });
        }
        self.process_final(msg, out)
    }

    /// Looks up the best response recorded for the final ancestor
    /// assignment, appends it, and forwards downward.
    fn process_final(&mut self, msg: &FinalMessage, out: &mut Outbox) -> Result<(), ProtocolError> {
        let ids = self
            .context_ids
            .as_ref()
            .ok_or(ProtocolError::UnknownParentSample { agent: self.id })?;
        let key: SampleKey = ids
            .iter()
            .filter_map(|a| msg.assignments.get(a).map(|&v| (*a, quantize(v))))
            .collect();
        if key.len() != ids.len() {
            return Err(ProtocolError::UnknownParentSample { agent: self.id });
        }
        let done = self
            .completed
            .get(&key)
            .ok_or(ProtocolError::UnknownParentSample { agent: self.id })?;
        self.best_assignment = Some(done.best_x);
        let mut fwd = msg.clone();
        fwd.assignments.insert(self.id, done.best_x);
        for &child in &self.children {
            out.push((child, MessageBody::Final(fwd.clone())));
        }
        self.finished = true;
        Ok(())
    }

    fn open_session(&mut self, context: BTreeMap<AgentId, f64>) {
        debug_assert!(self.active.is_none());
        self.active = Some(Session {
            key: key_of(&context),
            context,
            observations: ObservationSet::new(),
            best: None,
            taken: 0,
            pending: None,
        });
    }

    /// Runs iterations until the session awaits children or completes.
    fn drive(&mut self, out: &mut Outbox) -> Result<(), ProtocolError> {
        while matches!(self.optimize_local_variables(out)?, Step::Recorded) {}
        Ok(())
    }

    /// One iteration of the budgeted loop: select the next own sample, and
    /// either record its utility directly (leaf) or broadcast the extended
    /// sample message and wait for the children.
    fn optimize_local_variables(&mut self, out: &mut Outbox) -> Result<Step, ProtocolError> {
        debug_assert!(self.active.as_ref().is_some_and(|s| s.pending.is_none()));
        let x_domain = match self.select_own_sample()? {
            Selection::Done => {
                self.close_session(out)?;
                return Ok(Step::SessionComplete);
            }
            Selection::Sample(x) => x,
        };
        let x_norm = self.domain.normalize(x_domain);
        let session = self.active.as_ref().expect("session is active");
        let mut own_sample = session.context.clone();
        own_sample.insert(self.id, x_domain);
        let local_part = self.calculate_local_utility(&own_sample)?;
        if self.children.is_empty() {
            self.complete_observation(x_domain, x_norm, local_part)?;
            return Ok(Step::Recorded);
        }
        let session = self.active.as_mut().expect("session is active");
        session.pending = Some(Pending {
            x_domain,
            x_norm,
            local_part,
            awaiting: self.children.clone(),
            child_acc: None,
        });
        for &child in &self.children {
            out.push((
                child,
                MessageBody::Sample(SampleMessage {
                    samples: own_sample.clone(),
                }),
            ));
        }
        Ok(Step::AwaitingChildren)
    }

    /// Aggregate of the agent's allocated functions at the extended sample
    /// message (ancestor samples plus its own tentative value).
    fn calculate_local_utility(
        &mut self,
        own_sample: &BTreeMap<AgentId, f64>,
    ) -> Result<f64, ProtocolError> {
        let mut acc = self.operator.identity();
        let mut args = Vec::new();
        for &fid in &self.function_ids {
            let f = self.instance.function(fid);
            args.clear();
            for &v in &f.scope {
                let owner = self.instance.agent_of(v);
                let value =
                    own_sample
                        .get(&owner)
                        .copied()
                        .ok_or(ProtocolError::MissingAncestorSample {
                            agent: self.id,
                            function: fid,
                            missing: owner,
                        })?;
                args.push(value);
            }
            acc = self.operator.combine(acc, f.evaluate(&args));
            self.utility_evaluations += 1;
        }
        Ok(acc)
    }

    fn complete_observation(
        &mut self,
        x_domain: f64,
        x_norm: f64,
        utility: f64,
    ) -> Result<(), ProtocolError> {
        if !utility.is_finite() && !(self.function_ids.is_empty() && self.children.is_empty()) {
            return Err(ProtocolError::NonFiniteUtility { agent: self.id });
        }
        let agent = self.id;
        let session = self.active.as_mut().expect("session is active");
        if utility.is_finite() {
            match session.observations.insert(x_norm, utility) {
                Ok(()) => {}
                // A re-observed input carries no information; the loop for
                // this sample message has converged.
                Err(GpError::DuplicateInput { .. }) => return Ok(()),
                Err(source) => return Err(ProtocolError::Gp { agent, source }),
            }
        }
        let better = match session.best {
            None => true,
            Some((bx, by)) => utility > by || (utility == by && x_domain < bx),
        };
        if better {
            session.best = Some((x_domain, utility));
        }
        session.taken += 1;
        self.samples_taken += 1;
        Ok(())
    }

    fn select_own_sample(&mut self) -> Result<Selection, ProtocolError> {
        let session = self.active.as_ref().expect("session is active");
        let taken = session.taken;
        if taken >= self.budget {
            return Ok(Selection::Done);
        }
        match self.strategy {
            SamplingStrategy::GridSweep(k) => {
                if taken >= k {
                    return Ok(Selection::Done);
                }
                let x = if k == 1 {
                    self.domain.midpoint()
                } else {
                    self.domain.denormalize(taken as f64 / (k - 1) as f64)
                };
                Ok(Selection::Sample(x))
            }
            SamplingStrategy::Bayesian => {
                let Some(kernel) = self.kernel else {
                    // Constant objective in this variable: one sample
                    // anywhere carries all the information.
                    return if taken == 0 {
                        Ok(Selection::Sample(self.domain.midpoint()))
                    } else {
                        Ok(Selection::Done)
                    };
                };
                let x_norm = match taken {
                    0 => 0.0,
                    1 => 1.0,
                    2 => 0.5,
                    _ => match select_next_sample_with_tolerance(
                        &session.observations,
                        &kernel,
                        &self.params,
                        self.search_tolerance,
                    ) {
                        Ok(x) => x,
                        Err(AcquisitionError::ConvergedFlat { .. }) => return Ok(Selection::Done),
                        Err(source) => {
                            return Err(ProtocolError::Acquisition {
                                agent: self.id,
                                source,
                            })
                        }
                    },
                };
                if session.observations.contains_input(x_norm) {
                    // The search re-proposed an observed point (possible on
                    // hairline intervals); nothing new to learn.
                    return Ok(Selection::Done);
                }
                Ok(Selection::Sample(self.domain.denormalize(x_norm)))
            }
        }
    }

    /// Ends the loop for the current sample message: store the incumbent,
    /// reply to the parent with the best utility (or, at the root, fix the
    /// assignment and start the final phase).
    fn close_session(&mut self, out: &mut Outbox) -> Result<(), ProtocolError> {
        let session = self.active.take().expect("session is active");
        let (best_x, best_y) = session
            .best
            .ok_or(ProtocolError::EmptyBudget { agent: self.id })?;
        self.completed.insert(session.key, Completed { best_x, best_y });
        if let Some(parent) = self.parent {
            out.push((
                parent,
                MessageBody::Utility(UtilityMessage { utility: best_y }),
            ));
        } else {
            self.best_assignment = Some(best_x);
            let mut assignments = BTreeMap::new();
            assignments.insert(self.id, best_x);
            for &child in &self.children {
                out.push((
                    child,
                    MessageBody::Final(FinalMessage {
                        assignments: assignments.clone(),
                    }),
                ));
            }
            self.finished = true;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dcop::{
        build_constraint_graph, prepare_tree, ContinuousDomain, FunctionKind, UtilityFunction,
    };

    fn chain_instance() -> Arc<DcopInstance> {
        // Two agents sharing one function peaked at (0.25, 0.75).
        let f = UtilityFunction::new(
            0,
            vec![0, 1],
            FunctionKind::Custom(Arc::new(|a: &[f64]| {
                2.0 - (a[0] - 0.25).abs() - (a[1] - 0.75).abs()
            })),
            vec![1.0, 1.0],
        );
        Arc::new(
            DcopInstance::with_identity_allocation(
                vec![ContinuousDomain::new(0.0, 1.0).unwrap(); 2],
                vec![f],
                Operator::Sum,
            )
            .unwrap(),
        )
    }

    fn settings(budget: usize) -> AgentSettings {
        AgentSettings {
            budget,
            xi: 0.0,
            strategy: SamplingStrategy::Bayesian,
            kernel_scale: None,
            search_tolerance: SEARCH_TOLERANCE,
        }
    }

    fn tree_of(instance: &Arc<DcopInstance>) -> crate::dcop::PseudoTree {
        let graph = build_constraint_graph(instance);
        prepare_tree(instance, &graph).unwrap()
    }

    #[test]
    fn leaf_bootstraps_lower_endpoint_first() {
        let instance = chain_instance();
        let tree = tree_of(&instance);
        let mut leaf = AgentState::new(instance.clone(), &tree, 1, &settings(5)).unwrap();
        let mut out = Outbox::new();
        let msg = SampleMessage {
            samples: BTreeMap::from([(0, 0.5)]),
        };
        leaf.handle_sample(0, &msg, &mut out).unwrap();
        // The leaf runs its whole loop synchronously and replies once.
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].0, 0);
        let MessageBody::Utility(u) = &out[0].1 else {
            panic!("expected a utility reply");
        };
        // Best possible at x0 = 0.5: 2 - 0.25 - 0 = 1.75.
        assert!(u.utility <= 1.75 + 1e-12);
        assert_eq!(leaf.samples_taken(), 5);
    }

    #[test]
    fn replayed_sample_message_reuses_completed_session() {
        let instance = chain_instance();
        let tree = tree_of(&instance);
        let mut leaf = AgentState::new(instance.clone(), &tree, 1, &settings(6)).unwrap();
        let msg = SampleMessage {
            samples: BTreeMap::from([(0, 0.3)]),
        };
        let mut out1 = Outbox::new();
        leaf.handle_sample(0, &msg, &mut out1).unwrap();
        let samples_after_first = leaf.samples_taken();
        let mut out2 = Outbox::new();
        leaf.handle_sample(0, &msg, &mut out2).unwrap();
        assert_eq!(out1, out2, "replies must replay bit-identically");
        assert_eq!(leaf.samples_taken(), samples_after_first, "no resampling");
    }

    #[test]
    fn constant_local_objective_sends_constant_utilities() {
        let f = UtilityFunction::new(
            0,
            vec![0, 1],
            FunctionKind::Constant(3.5),
            vec![0.0, 0.0],
        );
        let instance = Arc::new(
            DcopInstance::with_identity_allocation(
                vec![ContinuousDomain::new(0.0, 1.0).unwrap(); 2],
                vec![f],
                Operator::Sum,
            )
            .unwrap(),
        );
        let tree = tree_of(&instance);
        let mut leaf = AgentState::new(instance.clone(), &tree, 1, &settings(5)).unwrap();
        for trial in 0..3 {
            let msg = SampleMessage {
                samples: BTreeMap::from([(0, trial as f64 / 4.0)]),
            };
            let mut out = Outbox::new();
            leaf.handle_sample(0, &msg, &mut out).unwrap();
            let MessageBody::Utility(u) = &out[0].1 else {
                panic!("expected a utility reply");
            };
            assert_eq!(u.utility, 3.5);
        }
        // Zero Lipschitz constant collapses the loop to a single sample.
        assert_eq!(leaf.samples_taken(), 3);
    }

    #[test]
    fn missing_ancestor_sample_is_reported() {
        let instance = chain_instance();
        let tree = tree_of(&instance);
        let mut leaf = AgentState::new(instance.clone(), &tree, 1, &settings(4)).unwrap();
        let msg = SampleMessage {
            samples: BTreeMap::new(),
        };
        let mut out = Outbox::new();
        let err = leaf.handle_sample(0, &msg, &mut out).unwrap_err();
        assert!(matches!(
            err,
            ProtocolError::MissingAncestorSample {
                agent: 1,
                function: 0,
                missing: 0
            }
        ));
    }

    #[test]
    fn sample_from_non_parent_is_rejected() {
        let instance = chain_instance();
        let tree = tree_of(&instance);
        let mut leaf = AgentState::new(instance.clone(), &tree, 1, &settings(4)).unwrap();
        let msg = SampleMessage {
            samples: BTreeMap::from([(0, 0.5)]),
        };
        let mut out = Outbox::new();
        assert!(matches!(
            leaf.handle_sample(1, &msg, &mut out),
            Err(ProtocolError::UnexpectedMessage { .. })
        ));
    }

    #[test]
    fn final_lookup_unknown_key_fails() {
        let instance = chain_instance();
        let tree = tree_of(&instance);
        let mut leaf = AgentState::new(instance.clone(), &tree, 1, &settings(4)).unwrap();
        let msg = SampleMessage {
            samples: BTreeMap::from([(0, 0.5)]),
        };
        let mut out = Outbox::new();
        leaf.handle_sample(0, &msg, &mut out).unwrap();
        let bad = FinalMessage {
            assignments: BTreeMap::from([(0, 0.123456)]),
        };
        let mut out = Outbox::new();
        assert!(matches!(
            leaf.handle_final(0, &bad, &mut out),
            Err(ProtocolError::UnknownParentSample { agent: 1 })
        ));
        // The sampled key works and ends the leaf.
        let good = FinalMessage {
            assignments: BTreeMap::from([(0, 0.5)]),
        };
        let mut out = Outbox::new();
        leaf.handle_final(0, &good, &mut out).unwrap();
        assert!(leaf.is_finished());
        assert!(leaf.best_assignment().is_some());
        assert!(out.is_empty());
    }

    #[test]
    fn quantization_tolerates_sub_picoscale_noise() {
        let a = BTreeMap::from([(0usize, 0.1 + 1e-14)]);
        let b = BTreeMap::from([(0usize, 0.1)]);
        assert_eq!(key_of(&a), key_of(&b));
    }

    #[test]
    fn wire_format_round_trips() {
        let body = MessageBody::Sample(SampleMessage {
            samples: BTreeMap::from([(0, -180.0), (2, 0.125)]),
        });
        let json = serde_json::to_string(&body).unwrap();
        assert!(json.contains("\"kind\":\"sample\""));
        assert!(json.contains("\"payload\""));
        let back: MessageBody = serde_json::from_str(&json).unwrap();
        assert_eq!(body, back);
    }
}
