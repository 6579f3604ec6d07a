//! Joint optimum for up to three symmetric random-walk nodes.
//!
//! The joint chain follows the simulator's slot order: a successful update
//! resets the node's difference to 0 before its source steps, so the next
//! difference is 1. A node at `d = 0` also moves to 1; any other node moves
//! up or down by one with probability ½ each, reflecting at its `d_max`.
//! The per-slot cost is `(1/N) Σ w_n δ_n(d_n)`.

use super::{evaluate, AverageCostSolver, Choice, FiniteMdp, MdpError};
use crate::domain::ErrorFunction;

pub const MAX_ARMS: usize = 3;
pub const MAX_D: u64 = 20;

#[derive(Debug, Clone)]
pub struct ArmSpec {
    pub error: ErrorFunction,
    pub p_e: f64,
    pub d_max: u64,
}

impl ArmSpec {
    pub fn new(error: ErrorFunction, p_e: f64, d_max: u64) -> Self {
        Self { error, p_e, d_max }
    }
}

/// Action per joint state: `None` idles, `Some(n)` updates node `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPolicy {
    dims: Vec<u64>,
    actions: Vec<Option<usize>>,
}

impl JointPolicy {
    /// Action at the given differences; values above a node's `d_max` are
    /// clamped to it.
    pub fn action(&self, d: &[u64]) -> Option<usize> {
        self.actions[encode(&self.dims, d)]
    }

    pub fn dims(&self) -> &[u64] {
        &self.dims
    }
}

#[derive(Debug, Clone)]
pub struct MultiNodeSolution {
    pub average_cost: f64,
    pub policy: JointPolicy,
    pub iterations: usize,
    pub residual: f64,
}

fn encode(dims: &[u64], d: &[u64]) -> usize {
    let mut idx = 0usize;
    for (&top, &x) in dims.iter().zip(d) {
        idx = idx * (top as usize + 1) + x.min(top) as usize;
    }
    idx
}

fn decode(dims: &[u64], mut idx: usize) -> Vec<u64> {
    let mut d = vec![0; dims.len()];
    for (slot, &top) in d.iter_mut().zip(dims).rev() {
        let base = top as usize + 1;
        *slot = (idx % base) as u64;
        idx /= base;
    }
    d
}

fn validate(arms: &[ArmSpec]) -> Result<(), MdpError> {
    if arms.is_empty() {
        return Err(MdpError::Invalid("no nodes".into()));
    }
    if arms.len() > MAX_ARMS {
        return Err(MdpError::TooLarge {
            what: "nodes",
            value: arms.len(),
            bound: MAX_ARMS,
        });
    }
    for a in arms {
        if a.d_max > MAX_D {
            return Err(MdpError::TooLarge {
                what: "d_max",
                value: a.d_max as usize,
                bound: MAX_D as usize,
            });
        }
        if a.d_max < 1 {
            return Err(MdpError::Invalid("d_max must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&a.p_e) {
            return Err(MdpError::Invalid(format!("p_e = {} outside [0, 1]", a.p_e)));
        }
    }
    Ok(())
}

/// Marginal next-difference distribution of one node.
fn marginal(d: u64, top: u64, updated: bool, p_e: f64) -> Vec<(u64, f64)> {
    let free = if d == 0 {
        vec![(1.min(top), 1.0)]
    } else {
        vec![(d - 1, 0.5), ((d + 1).min(top), 0.5)]
    };
    if !updated {
        return free;
    }
    let mut out = vec![(1.min(top), 1.0 - p_e)];
    if p_e > 0.0 {
        out.extend(free.into_iter().map(|(x, p)| (x, p * p_e)));
    }
    out
}

fn transitions(
    arms: &[ArmSpec],
    dims: &[u64],
    d: &[u64],
    action: Option<usize>,
) -> Vec<(usize, f64)> {
    let mut joint: Vec<(Vec<u64>, f64)> = vec![(Vec::new(), 1.0)];
    for (n, arm) in arms.iter().enumerate() {
        let m = marginal(d[n], arm.d_max, action == Some(n), arm.p_e);
        joint = joint
            .into_iter()
            .flat_map(|(prefix, p)| {
                m.iter().map(move |&(x, q)| {
                    let mut v = prefix.clone();
                    v.push(x);
                    (v, p * q)
                })
            })
            .filter(|(_, p)| *p > 0.0)
            .collect();
    }
    let mut out: Vec<(usize, f64)> = joint
        .into_iter()
        .map(|(v, p)| (encode(dims, &v), p))
        .collect();
    out.sort_by_key(|x| x.0);
    out.dedup_by(|b, a| {
        if a.0 == b.0 {
            a.1 += b.1;
            true
        } else {
            false
        }
    });
    out
}

fn state_cost(arms: &[ArmSpec], d: &[u64]) -> Result<f64, MdpError> {
    let mut c = 0.0;
    for (arm, &x) in arms.iter().zip(d) {
        c += arm.error.weighted(x)?;
    }
    Ok(c / arms.len() as f64)
}

/// Builds the joint MDP. Choices are listed idle first, then nodes in id
/// order, so ties prefer idling and then the lowest id.
type FixedPolicy<'a> = &'a dyn Fn(&[u64]) -> Option<usize>;

fn build(
    arms: &[ArmSpec],
    fixed: Option<FixedPolicy<'_>>,
) -> Result<(FiniteMdp, Vec<u64>), MdpError> {
    let dims: Vec<u64> = arms.iter().map(|a| a.d_max).collect();
    let size: usize = dims.iter().map(|&t| t as usize + 1).product();
    let mut choices = Vec::with_capacity(size);
    for idx in 0..size {
        let d = decode(&dims, idx);
        let cost = state_cost(arms, &d)?;
        let actions: Vec<Option<usize>> = match fixed {
            Some(pi) => vec![pi(&d).filter(|&n| n < arms.len())],
            None => std::iter::once(None)
                .chain((0..arms.len()).map(Some))
                .collect(),
        };
        choices.push(
            actions
                .into_iter()
                .map(|a| Choice {
                    action: a.map_or(0, |n| n + 1),
                    cost,
                    next: transitions(arms, &dims, &d, a),
                })
                .collect(),
        );
    }
    Ok((FiniteMdp { choices }, dims))
}

fn solver() -> AverageCostSolver {
    AverageCostSolver {
        polish_up_to: 2000,
        ..AverageCostSolver::default()
    }
}

/// Optimal average cost of the truncated joint chain.
pub fn multi_node_optimal(arms: &[ArmSpec]) -> Result<MultiNodeSolution, MdpError> {
    validate(arms)?;
    let (mdp, dims) = build(arms, None)?;
    let sol = solver().solve(&mdp)?;
    let actions = (0..mdp.n_states())
        .map(|s| sol.action(&mdp, s).checked_sub(1))
        .collect();
    Ok(MultiNodeSolution {
        average_cost: sol.average_cost,
        policy: JointPolicy { dims, actions },
        iterations: sol.iterations,
        residual: sol.residual,
    })
}

/// Exact long-run average cost of a stationary policy on the same chain.
pub fn evaluate_policy(
    arms: &[ArmSpec],
    policy: impl Fn(&[u64]) -> Option<usize>,
) -> Result<f64, MdpError> {
    validate(arms)?;
    let (mdp, _) = build(arms, Some(&policy))?;
    if mdp.n_states() <= 2000 {
        let zeros = vec![0; mdp.n_states()];
        return evaluate(&mdp, &zeros, 0).map(|(g, _)| g);
    }
    Ok(solver().solve(&mdp)?.average_cost)
}
