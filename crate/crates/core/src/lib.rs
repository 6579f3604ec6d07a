//! # s2sched
//!
//! Status-update scheduling for multiaccess wireless networks, driven by how
//! far each remote estimate has drifted from its source rather than by how
//! stale it is.
//!
//! The crate is organised bottom-up:
//!
//! - [`domain`]: source processes (two-state Markov, integer random walk),
//!   tracking-error functions and per-node runtime state.
//! - [`indices`]: closed-form scheduling priorities: the random-walk Whittle
//!   index and its unreliable-channel scaling, the AoI indices used by the
//!   separate sample-then-schedule baseline and the non-linear AoI threshold.
//! - [`mdp`]: exact and numerical oracles (finite-horizon backwards induction,
//!   average-cost Bellman solvers, numeric Whittle indices, indexability
//!   certification, a small joint-chain optimum).
//! - [`meanfield`]: the threshold/contention-probability design of the
//!   decentralized event-triggered protocol (ETSU).
//! - [`policies`]: the schedulers compared by the simulator.
//! - [`sim`]: the slot-level network simulator.
//! - [`experiments`]: presets, the verification suite, configuration files
//!   and CSV output used by the `s2sched` binary.
//!
//! All randomness flows through [`rng::Streams`], keyed by seed, concern and
//! node, so two policies simulated with the same seed see the same source
//! sample paths.

pub mod domain;
pub mod experiments;
pub mod indices;
pub mod mdp;
pub mod meanfield;
pub mod policies;
pub mod rng;
pub mod sim;

pub use domain::{
    ErrorFunction, ErrorKind, Extension, NodeState, Packet, RandomWalkSource, SourceModel,
    TwoStateSource,
};
pub use meanfield::{MeanFieldSolution, ThresholdMapping};
pub use policies::{PolicyKind, PolicySpec};
pub use sim::{ContentionModel, NodeConfig, SimConfig, SimReport};
