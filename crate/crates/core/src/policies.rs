//! Schedulers compared by the simulator.
//!
//! Centralized kinds pick at most one node per slot through [`Policy::decide`].
//! The decentralized kind (ETSU) never sees the network: each node maps its
//! own index through the threshold mapping to a transmission probability via
//! [`Policy::transmit_probability`], which takes a single node's state.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{NodeState, Packet, SourceModel};
use crate::indices::{aoi_error_index, aoi_separate_index, IndexError, IndexTable};
use crate::mdp::greedy_two_state_policy;
use crate::meanfield::{self, MeanFieldError, MeanFieldSolution, PlanParams, ThresholdMapping};
use crate::rng::DrawStream;
use crate::sim::NodeConfig;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("{kind} is a {model:?} policy and cannot be asked for a {requested} decision")]
    InformationModel {
        kind: PolicyKind,
        model: InformationModel,
        requested: &'static str,
    },
    #[error("{kind} cannot schedule this network: {reason}")]
    Unsupported { kind: PolicyKind, reason: String },
    #[error("unknown policy {0:?}")]
    UnknownKind(String),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    MeanField(#[from] MeanFieldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    OptimalTwoState,
    CentralizedWhittle,
    Etsu,
    SeparateAoi,
    AoiErrorIndex,
    MaxDifference,
    RoundRobin,
    Random,
}

/// What a policy is allowed to observe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InformationModel {
    /// Sees every node's true error.
    Genie,
    /// Sees what nodes report to the controller.
    Centralized,
    /// Each node sees only its own state.
    Decentralized,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 8] = [
        PolicyKind::OptimalTwoState,
        PolicyKind::CentralizedWhittle,
        PolicyKind::Etsu,
        PolicyKind::SeparateAoi,
        PolicyKind::AoiErrorIndex,
        PolicyKind::MaxDifference,
        PolicyKind::RoundRobin,
        PolicyKind::Random,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::OptimalTwoState => "optimal_two_state",
            PolicyKind::CentralizedWhittle => "centralized_whittle",
            PolicyKind::Etsu => "etsu",
            PolicyKind::SeparateAoi => "separate_aoi",
            PolicyKind::AoiErrorIndex => "aoi_error_index",
            PolicyKind::MaxDifference => "max_difference",
            PolicyKind::RoundRobin => "round_robin",
            PolicyKind::Random => "random",
        }
    }

    pub fn information_model(&self) -> InformationModel {
        match self {
            PolicyKind::OptimalTwoState | PolicyKind::MaxDifference => InformationModel::Genie,
            PolicyKind::Etsu => InformationModel::Decentralized,
            _ => InformationModel::Centralized,
        }
    }

    pub fn is_decentralized(&self) -> bool {
        self.information_model() == InformationModel::Decentralized
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| PolicyError::UnknownKind(s.to_string()))
    }
}

/// A policy choice plus its parameters. The ETSU mapping is normally
/// planned from `nu` at simulation setup; `mapping` overrides it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    #[serde(default)]
    pub nu: Option<f64>,
    #[serde(default)]
    pub mapping: Option<ThresholdMapping>,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            nu: None,
            mapping: None,
        }
    }

    pub fn etsu(nu: f64) -> Self {
        Self {
            kind: PolicyKind::Etsu,
            nu: Some(nu),
            mapping: None,
        }
    }

    pub fn with_mapping(mut self, mapping: ThresholdMapping) -> Self {
        self.mapping = Some(mapping);
        self
    }
}

/// Nodes attempting a transmission in one slot or contention round.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Action {
    pub transmitters: Vec<usize>,
}

impl Action {
    pub fn idle() -> Self {
        Self::default()
    }

    pub fn single(n: usize) -> Self {
        Self {
            transmitters: vec![n],
        }
    }

    pub fn is_idle(&self) -> bool {
        self.transmitters.is_empty()
    }
}

impl From<Option<usize>> for Action {
    fn from(n: Option<usize>) -> Self {
        n.map_or_else(Action::idle, Action::single)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feedback {
    Ack,
    Nack,
    Idle,
}

/// Applies the controller's feedback to the sender: an ACK installs the
/// packet as the tracked status. `age` is the packet's age on arrival.
pub fn apply_feedback(state: &mut NodeState, feedback: Feedback, packet: Packet, age: u64) {
    if feedback == Feedback::Ack {
        state.deliver(packet.status, age);
        state.since_update = age;
    }
}

/// Runtime instance of a [`PolicySpec`] for one simulation.
#[derive(Debug, Clone)]
pub struct Policy {
    spec: PolicySpec,
    tables: Vec<IndexTable>,
    stay_scale: Vec<f64>,
    flip: Vec<Option<f64>>,
    weights: Vec<f64>,
    mapping: Option<ThresholdMapping>,
    plan: Option<MeanFieldSolution>,
    acks: Vec<u64>,
    nacks: Vec<u64>,
}

fn argmax(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if v > 0.0 && best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

impl Policy {
    /// Builds the runtime policy. For ETSU without an explicit mapping this
    /// runs the mean-field planner on the population: symmetric-walk rates
    /// taken from node 0, the threshold index from node 0's error function
    /// and the population-mean `p_e`.
    pub fn new(
        spec: &PolicySpec,
        nodes: &[NodeConfig],
        slot_ratio: f64,
    ) -> Result<Self, PolicyError> {
        let kind = spec.kind;
        if nodes.is_empty() {
            return Err(PolicyError::Unsupported {
                kind,
                reason: "no nodes".into(),
            });
        }
        let flip: Vec<Option<f64>> = nodes
            .iter()
            .map(|c| match c.source {
                SourceModel::TwoState(src) => Some(src.p()),
                SourceModel::RandomWalk(_) => None,
            })
            .collect();
        if kind == PolicyKind::OptimalTwoState && flip.iter().any(Option::is_none) {
            return Err(PolicyError::Unsupported {
                kind,
                reason: "every source must be two-state".into(),
            });
        }
        let stay_scale = nodes
            .iter()
            .map(|c| match c.source {
                SourceModel::RandomWalk(w) if w.q_stay() < 1.0 => 1.0 / (1.0 - w.q_stay()),
                _ => 1.0,
            })
            .collect();
        let mut policy = Self {
            spec: spec.clone(),
            tables: nodes
                .iter()
                .map(|c| IndexTable::new(c.error.clone()))
                .collect(),
            stay_scale,
            flip,
            weights: nodes.iter().map(|c| c.error.weight()).collect(),
            mapping: spec.mapping,
            plan: None,
            acks: vec![0; nodes.len()],
            nacks: vec![0; nodes.len()],
        };
        if kind == PolicyKind::Etsu && policy.mapping.is_none() {
            let nu = spec.nu.ok_or_else(|| PolicyError::Unsupported {
                kind,
                reason: "etsu needs nu or an explicit mapping".into(),
            })?;
            let (lambda, mu) = match nodes[0].source {
                SourceModel::RandomWalk(w) => {
                    let r = 0.5 * (w.q_up() + w.q_down());
                    (r, r)
                }
                SourceModel::TwoState(_) => (0.5, 0.5),
            };
            let mean_pe = nodes.iter().map(|c| c.p_e).sum::<f64>() / nodes.len() as f64;
            let sol = meanfield::plan(&PlanParams {
                lambda,
                mu,
                nu,
                n: nodes.len(),
                slot_ratio,
                error: nodes[0].error.clone(),
                p_e: mean_pe,
            })?;
            policy.mapping = Some(sol.mapping());
            policy.plan = Some(sol);
        }
        Ok(policy)
    }

    pub fn kind(&self) -> PolicyKind {
        self.spec.kind
    }

    pub fn spec(&self) -> &PolicySpec {
        &self.spec
    }

    /// The planned mean-field operating point, if one was computed.
    pub fn plan(&self) -> Option<&MeanFieldSolution> {
        self.plan.as_ref()
    }

    pub fn mapping(&self) -> Option<ThresholdMapping> {
        self.mapping
    }

    /// Status-difference index of node `n`: the random-walk Whittle index
    /// scaled by the channel success probability and the stay correction.
    /// A node whose channel always fails has index 0.
    pub fn index(&mut self, n: usize, state: &NodeState) -> Result<f64, PolicyError> {
        if state.p_e >= 1.0 {
            return Ok(0.0);
        }
        let raw = self.tables[n].index_unreliable(state.d(), state.p_e)?;
        Ok(raw * self.stay_scale[n])
    }

    fn aoi_priority(&self, n: usize, state: &NodeState) -> Result<f64, PolicyError> {
        match self.flip[n] {
            Some(p) => match state.buffer {
                Some(pkt) => Ok(aoi_separate_index(
                    pkt.age,
                    state.h.saturating_sub(pkt.age),
                    p,
                )?),
                None => Ok(0.0),
            },
            None => Ok(aoi_error_index(state.h, state.p_e, self.weights[n])),
        }
    }

    /// Centralized decision for slot `t`.
    pub fn decide(
        &mut self,
        t: u64,
        nodes: &[NodeState],
        rng: &mut DrawStream,
    ) -> Result<Action, PolicyError> {
        let kind = self.spec.kind;
        let choice = match kind {
            PolicyKind::Etsu => {
                return Err(PolicyError::InformationModel {
                    kind,
                    model: kind.information_model(),
                    requested: "network-wide",
                })
            }
            PolicyKind::OptimalTwoState => {
                let mut bits = 0u32;
                let mut p = Vec::with_capacity(nodes.len());
                for (n, st) in nodes.iter().enumerate() {
                    if st.d() > 0 {
                        bits |= 1 << n;
                    }
                    p.push(self.flip[n].unwrap_or(0.5));
                }
                if nodes.len() > 32 {
                    let best = (0..nodes.len())
                        .filter(|&n| nodes[n].d() > 0)
                        .min_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
                    return Ok(best.into());
                }
                greedy_two_state_policy(bits, &p)
            }
            PolicyKind::CentralizedWhittle => {
                let mut idx = Vec::with_capacity(nodes.len());
                for (n, st) in nodes.iter().enumerate() {
                    idx.push(self.index(n, st)?);
                }
                argmax(idx.into_iter())
            }
            PolicyKind::SeparateAoi => {
                let mut idx = Vec::with_capacity(nodes.len());
                for (n, st) in nodes.iter().enumerate() {
                    idx.push(self.aoi_priority(n, st)?);
                }
                argmax(idx.into_iter())
            }
            PolicyKind::AoiErrorIndex => argmax(
                nodes
                    .iter()
                    .enumerate()
                    .map(|(n, st)| aoi_error_index(st.h, st.p_e, self.weights[n])),
            ),
            PolicyKind::MaxDifference => argmax(
                nodes
                    .iter()
                    .enumerate()
                    .map(|(n, st)| self.weights[n] * st.d() as f64),
            ),
            PolicyKind::RoundRobin => Some((t % nodes.len() as u64) as usize),
            PolicyKind::Random => Some(rng.below(nodes.len())),
        };
        Ok(choice.into())
    }

    /// Per-node ETSU transmission probability `Ψ(I_n)`, computed from the
    /// node's own state only.
    pub fn transmit_probability(&mut self, n: usize, own: &NodeState) -> Result<f64, PolicyError> {
        let kind = self.spec.kind;
        let Some(mapping) = self.mapping.filter(|_| kind == PolicyKind::Etsu) else {
            return Err(PolicyError::InformationModel {
                kind,
                model: kind.information_model(),
                requested: "per-node contention",
            });
        };
        Ok(mapping.prob(self.index(n, own)?))
    }

    /// The packet node `n` sends when scheduled. The separate baseline sends
    /// its buffered sample for two-state sources; every other case samples
    /// the current status.
    pub fn payload(&self, n: usize, state: &NodeState) -> Option<Packet> {
        if self.spec.kind == PolicyKind::SeparateAoi && self.flip[n].is_some() {
            state.buffer
        } else {
            Some(Packet {
                status: state.s,
                age: 0,
            })
        }
    }

    pub fn on_feedback(&mut self, n: usize, feedback: Feedback) {
        match feedback {
            Feedback::Ack => self.acks[n] += 1,
            Feedback::Nack => self.nacks[n] += 1,
            Feedback::Idle => {}
        }
    }

    pub fn acks(&self) -> &[u64] {
        &self.acks
    }

    pub fn nacks(&self) -> &[u64] {
        &self.nacks
    }
}
