//! Slot-level network simulator.
//!
//! Centralized slot order: the policy decides, the channel resolves the
//! attempt, everyone ages by one slot, a delivered packet installs its
//! status, sources step, sample-at-change sources refresh their buffer, and
//! the metrics read the post-step state.
//!
//! ETSU runs on one of three contention models:
//!
//! - `Slotted`: one Bernoulli round per data slot.
//! - `MiniSlot`: p-persistent contention. An idle mini-slot costs
//!   `1/slot_ratio` of a data slot and a transmission costs a whole slot;
//!   sources step whenever accumulated virtual time crosses a slot boundary.
//! - `Ideal`: a uniformly chosen eligible node transmits each slot with no
//!   contention loss, the population model the mean-field design assumes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ErrorFunction, NodeState, Packet, SourceModel};
use crate::policies::{apply_feedback, Feedback, Policy, PolicyError, PolicyKind, PolicySpec};
use crate::rng::{Concern, DrawStream, Streams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeConfig {
    pub source: SourceModel,
    /// Error function, carrying the node's weight.
    pub error: ErrorFunction,
    pub p_e: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContentionModel {
    Slotted,
    #[default]
    MiniSlot,
    Ideal,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum InitialState {
    /// `s = ŝ = 0` for every node.
    #[default]
    Synchronized,
    /// `ŝ = 0` and `s` uniform on `{0..=spread}` (walks) or on `{0, 1}`
    /// (two-state sources).
    RandomOffset { spread: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub nodes: Vec<NodeConfig>,
    /// Number of data slots.
    pub horizon: u64,
    pub policy: PolicySpec,
    /// Only consulted by ETSU.
    pub contention: ContentionModel,
    /// `t_slot / t_c`.
    pub slot_ratio: f64,
    pub seed: u64,
    pub initial: InitialState,
    /// Leading slots excluded from the averages.
    pub warmup: u64,
    /// Track asymmetric walks with a constant-drift predictor.
    pub drift_correction: bool,
    /// Also report the time-average fraction of nodes with `d ≥` this value.
    pub track_threshold: Option<u64>,
}

impl SimConfig {
    pub fn new(nodes: Vec<NodeConfig>, horizon: u64, policy: PolicySpec, seed: u64) -> Self {
        Self {
            nodes,
            horizon,
            policy,
            contention: ContentionModel::default(),
            slot_ratio: 10.0,
            seed,
            initial: InitialState::default(),
            warmup: 0,
            drift_correction: false,
            track_threshold: None,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.nodes.is_empty() {
            return bad("at least one node is required".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if self.warmup >= self.horizon {
            return bad(format!(
                "warmup {} must be below horizon {}",
                self.warmup, self.horizon
            ));
        }
        if !(self.slot_ratio > 0.0 && self.slot_ratio.is_finite()) {
            return bad(format!("slot_ratio {} must be positive", self.slot_ratio));
        }
        for (n, c) in self.nodes.iter().enumerate() {
            if !(0.0..=1.0).contains(&c.p_e) {
                return bad(format!("node {n}: p_e {} outside [0, 1]", c.p_e));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct NodeReport {
    pub mean_error: f64,
    pub mean_aoi: f64,
    pub successes: u64,
    pub attempts: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SimReport {
    /// `(1/T) Σ_t (1/N) Σ_n w_n δ_n(d_n(t))`.
    pub avg_weighted_error: f64,
    pub avg_aoi: f64,
    pub per_node: Vec<NodeReport>,
    pub successes: u64,
    pub collisions: u64,
    /// Slots (or contention frames) with no transmitter.
    pub idles: u64,
    pub channel_failures: u64,
    pub idle_minislots: u64,
    /// Data slots simulated.
    pub slots: u64,
    /// Virtual time in data-slot units.
    pub elapsed: f64,
    pub fraction_at_threshold: Option<f64>,
}

struct Network<'a> {
    cfg: &'a SimConfig,
    states: Vec<NodeState>,
    sources: Vec<DrawStream>,
    channel: Vec<DrawStream>,
    slot: u64,
    sum_error: Vec<f64>,
    sum_aoi: Vec<f64>,
    above: f64,
    report: SimReport,
}

impl<'a> Network<'a> {
    fn new(cfg: &'a SimConfig, streams: &Streams) -> Self {
        let n = cfg.nodes.len();
        let mut setup = streams.stream(Concern::Setup, 0);
        let states = cfg
            .nodes
            .iter()
            .map(|c| {
                let s = match (cfg.initial, c.source) {
                    (InitialState::Synchronized, _) => 0,
                    (InitialState::RandomOffset { .. }, SourceModel::TwoState(_)) => {
                        setup.below(2) as i64
                    }
                    (InitialState::RandomOffset { spread }, SourceModel::RandomWalk(_)) => {
                        setup.below(spread as usize + 1) as i64
                    }
                };
                let mut st = NodeState::new(s, 0, c.p_e);
                if cfg.drift_correction {
                    if let SourceModel::RandomWalk(w) = c.source {
                        st.drift = w.drift();
                    }
                }
                if !c.source.is_two_state() {
                    st.buffer = Some(Packet { status: s, age: 0 });
                }
                st
            })
            .collect();
        Self {
            cfg,
            states,
            sources: (0..n).map(|i| streams.stream(Concern::Source, i)).collect(),
            channel: (0..n)
                .map(|i| streams.stream(Concern::Channel, i))
                .collect(),
            slot: 0,
            sum_error: vec![0.0; n],
            sum_aoi: vec![0.0; n],
            above: 0.0,
            report: SimReport {
                per_node: vec![NodeReport::default(); n],
                ..SimReport::default()
            },
        }
    }

    fn done(&self) -> bool {
        self.slot >= self.cfg.horizon
    }

    /// Resolves a single transmitter against its channel draw.
    fn attempt(&mut self, n: usize) -> Feedback {
        self.report.per_node[n].attempts += 1;
        if self.channel[n].uniform() >= self.states[n].p_e {
            self.report.successes += 1;
            self.report.per_node[n].successes += 1;
            Feedback::Ack
        } else {
            self.report.channel_failures += 1;
            Feedback::Nack
        }
    }

    /// Ages everyone, installs `delivery`, steps the sources and samples the
    /// metrics: one data slot.
    fn advance(&mut self, delivery: Option<(usize, Packet)>) -> Result<(), SimError> {
        for st in &mut self.states {
            st.h += 1;
            st.since_update += 1;
            if let Some(p) = st.buffer.as_mut() {
                p.age += 1;
            }
        }
        if let Some((n, pkt)) = delivery {
            self.install(n, pkt);
        }
        self.step_sources()
    }

    fn install(&mut self, n: usize, pkt: Packet) {
        let st = &mut self.states[n];
        let age = pkt.age + 1;
        apply_feedback(st, Feedback::Ack, pkt, age);
        if self.cfg.nodes[n].source.is_two_state() {
            st.buffer = None;
        }
    }

    fn step_sources(&mut self) -> Result<(), SimError> {
        let counted = self.slot >= self.cfg.warmup;
        let mut above = 0usize;
        for (n, st) in self.states.iter_mut().enumerate() {
            let cfg = &self.cfg.nodes[n];
            let before = st.s;
            st.s = cfg.source.step(st.s, self.sources[n].uniform());
            match cfg.source {
                SourceModel::TwoState(_) if st.s != before => {
                    st.buffer = Some(Packet {
                        status: st.s,
                        age: 0,
                    });
                }
                SourceModel::RandomWalk(_) => {
                    st.buffer = Some(Packet {
                        status: st.s,
                        age: 0,
                    });
                }
                _ => {}
            }
            if counted {
                let d = st.d();
                self.sum_error[n] += cfg
                    .error
                    .weighted(d)
                    .map_err(|e| SimError::Config(format!("node {n}: {e}")))?;
                self.sum_aoi[n] += st.h as f64;
                if let Some(th) = self.cfg.track_threshold {
                    if d >= th {
                        above += 1;
                    }
                }
            }
        }
        if counted {
            self.above += above as f64 / self.states.len() as f64;
        }
        self.slot += 1;
        Ok(())
    }

    fn finish(mut self, frac: f64) -> SimReport {
        let n = self.states.len() as f64;
        let t = (self.cfg.horizon - self.cfg.warmup) as f64;
        for (i, r) in self.report.per_node.iter_mut().enumerate() {
            r.mean_error = self.sum_error[i] / t;
            r.mean_aoi = self.sum_aoi[i] / t;
        }
        self.report.avg_weighted_error = self.sum_error.iter().sum::<f64>() / (t * n);
        self.report.avg_aoi = self.sum_aoi.iter().sum::<f64>() / (t * n);
        self.report.slots = self.slot;
        self.report.elapsed = self.slot as f64 + frac;
        self.report.fraction_at_threshold = self.cfg.track_threshold.map(|_| self.above / t);
        self.report
    }
}

/// Simulates `config` and returns its time averages. Deterministic in the
/// configuration, including the seed.
pub fn run(config: &SimConfig) -> Result<SimReport, SimError> {
    config.validate()?;
    let mut policy = Policy::new(&config.policy, &config.nodes, config.slot_ratio)?;
    let streams = Streams::new(config.seed);
    let mut net = Network::new(config, &streams);
    if policy.kind() == PolicyKind::Etsu {
        let frac = run_etsu(config, &mut policy, &streams, &mut net)?;
        return Ok(net.finish(frac));
    }
    let mut rng = streams.stream(Concern::Policy, 0);
    while !net.done() {
        let action = policy.decide(net.slot, &net.states, &mut rng)?;
        let mut delivery = None;
        match action.transmitters.as_slice() {
            [] => net.report.idles += 1,
            &[n] => match policy.payload(n, &net.states[n]) {
                Some(pkt) => {
                    let fb = net.attempt(n);
                    policy.on_feedback(n, fb);
                    if fb == Feedback::Ack {
                        delivery = Some((n, pkt));
                    }
                }
                None => net.report.idles += 1,
            },
            _ => unreachable!("centralized policies schedule at most one node"),
        }
        net.advance(delivery)?;
    }
    Ok(net.finish(0.0))
}

/// Outcome of one contention frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    /// Single transmitter whose packet got through the channel.
    pub winner: Option<usize>,
    pub transmitters: usize,
    pub idle_minislots: u64,
    /// Virtual time spent, in data-slot units.
    pub elapsed: f64,
    pub channel_failure: bool,
}

/// One p-persistent contention round among nodes with the given transmit
/// probabilities, one draw per eligible node. Returns the transmitters.
pub fn contention_round(probs: &[(usize, f64)], draws: &mut [DrawStream]) -> Vec<usize> {
    probs
        .iter()
        .filter(|&&(n, p)| draws[n].uniform() < p)
        .map(|&(n, _)| n)
        .collect()
}

/// A full contention frame with fixed eligible set: idle mini-slots until
/// someone transmits, then one data-slot transmission. No eligible nodes
/// means one idle data slot. Used for studying the protocol in isolation;
/// the simulator interleaves frames with source evolution itself.
pub fn run_contention_frame(
    probs: &[(usize, f64)],
    slot_ratio: f64,
    p_e: &[f64],
    contention: &mut [DrawStream],
    channel: &mut [DrawStream],
) -> Frame {
    let mut frame = Frame {
        winner: None,
        transmitters: 0,
        idle_minislots: 0,
        elapsed: 1.0,
        channel_failure: false,
    };
    if probs.iter().all(|&(_, p)| p <= 0.0) {
        return frame;
    }
    loop {
        let tx = contention_round(probs, contention);
        if tx.is_empty() {
            frame.idle_minislots += 1;
            continue;
        }
        frame.elapsed = frame.idle_minislots as f64 / slot_ratio + 1.0;
        frame.transmitters = tx.len();
        if let [n] = tx[..] {
            if channel[n].uniform() >= p_e[n] {
                frame.winner = Some(n);
            } else {
                frame.channel_failure = true;
            }
        }
        return frame;
    }
}

fn run_etsu(
    cfg: &SimConfig,
    policy: &mut Policy,
    streams: &Streams,
    net: &mut Network<'_>,
) -> Result<f64, SimError> {
    let n = cfg.nodes.len();
    let mut contention: Vec<DrawStream> = (0..n)
        .map(|i| streams.stream(Concern::Contention, i))
        .collect();
    let mut pick = streams.stream(Concern::Policy, 0);
    let mut probs: Vec<(usize, f64)> = Vec::with_capacity(n);
    let mut frac = 0.0f64;
    let minislot = 1.0 / cfg.slot_ratio;
    while !net.done() {
        probs.clear();
        for (i, st) in net.states.iter().enumerate() {
            let p = policy.transmit_probability(i, st)?;
            if p > 0.0 {
                probs.push((i, p));
            }
        }
        if probs.is_empty() {
            net.report.idles += 1;
            net.advance(None)?;
            continue;
        }
        let tx = match cfg.contention {
            ContentionModel::Ideal => vec![probs[pick.below(probs.len())].0],
            _ => contention_round(&probs, &mut contention),
        };
        if tx.is_empty() {
            if cfg.contention == ContentionModel::Slotted {
                net.report.idles += 1;
                net.advance(None)?;
                continue;
            }
            net.report.idle_minislots += 1;
            frac += minislot;
            if frac >= 1.0 - 1e-9 {
                frac = (frac - 1.0).max(0.0);
                net.advance(None)?;
            }
            continue;
        }
        // Packets are sampled when the transmission starts.
        let outcome = match tx[..] {
            [i] => {
                let fb = net.attempt(i);
                policy.on_feedback(i, fb);
                (fb == Feedback::Ack).then(|| {
                    (
                        i,
                        Packet {
                            status: net.states[i].s,
                            age: 0,
                        },
                    )
                })
            }
            _ => {
                net.report.collisions += 1;
                for &i in &tx {
                    net.report.per_node[i].attempts += 1;
                    policy.on_feedback(i, Feedback::Nack);
                }
                None
            }
        };
        if frac > 0.0 && cfg.contention == ContentionModel::MiniSlot {
            // The transmission straddles a slot boundary: sources step
            // before the packet lands.
            net.advance(None)?;
            if let Some((i, pkt)) = outcome {
                net.install(i, pkt);
            }
        } else {
            net.advance(outcome)?;
        }
    }
    Ok(frac)
}
