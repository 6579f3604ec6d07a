//! Ground-truth oracles.
//!
//! - [`two_state`]: finite-horizon backwards induction over the error
//!   pattern of a two-state network, and the greedy rule it is checked
//!   against.
//! - [`single_arm`]: the decomposed random-walk arm with an auxiliary update
//!   cost `m`, its numeric Whittle index and an indexability certifier.
//! - [`multi_node`]: the joint chain of up to three random-walk nodes under
//!   one update per slot.
//!
//! The average-cost problems share [`AverageCostSolver`]: relative value
//! iteration with span-seminorm stopping, optionally followed by exact
//! policy-iteration steps on small chains.

pub mod multi_node;
pub mod single_arm;
pub mod two_state;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::domain::DomainError;
use crate::indices::IndexError;

pub use multi_node::{
    evaluate_policy, multi_node_optimal, ArmSpec, JointPolicy, MultiNodeSolution,
};
pub use single_arm::{
    aoi_arm_index, indexability_check, numeric_whittle, single_arm_rvi, Indexability,
    SingleArmProblem, SingleArmSolution,
};
pub use two_state::{
    evaluate_two_state_policy, greedy_two_state_policy, two_state_backwards_induction,
    ErrorPattern, TwoStateSolution,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MdpError {
    #[error("relative value iteration did not converge in {iterations} iterations (span residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("optimal policy is not of threshold type: update set {update_set:?}")]
    NonThreshold { update_set: Vec<usize> },
    #[error("bisection bracket [{lo}, {hi}] does not contain the index at d = {d}")]
    Bracket { d: u64, lo: f64, hi: f64 },
    #[error("{what} = {value} exceeds the supported bound {bound}")]
    TooLarge {
        what: &'static str,
        value: usize,
        bound: usize,
    },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("singular policy-evaluation system")]
    Singular,
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// One available action in a state: its expected one-slot cost and sparse
/// next-state distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Choice {
    pub action: usize,
    pub cost: f64,
    pub next: Vec<(usize, f64)>,
}

/// Explicit finite MDP. Choices are listed in tie-break preference order:
/// on exact ties the earliest choice wins.
#[derive(Debug, Clone, Default)]
pub struct FiniteMdp {
    pub choices: Vec<Vec<Choice>>,
}

impl FiniteMdp {
    pub fn n_states(&self) -> usize {
        self.choices.len()
    }

    fn q(&self, _s: usize, c: &Choice, h: &[f64]) -> f64 {
        c.cost + c.next.iter().map(|&(j, p)| p * h[j]).sum::<f64>()
    }

    fn cost_scale(&self) -> f64 {
        self.choices
            .iter()
            .flatten()
            .map(|c| c.cost.abs())
            .fold(1.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct AverageCostSolver {
    /// Span tolerance, relative to `max(1, max |cost|)`.
    pub span_tol: f64,
    pub max_iterations: usize,
    /// Weight of the Bellman update in the aperiodicity transform
    /// `h ← (1 − τ) h + τ T h`.
    pub tau: f64,
    /// Reference state pinned to zero in the relative cost function.
    pub reference: usize,
    /// Finish with exact policy iteration when the chain has at most this
    /// many states.
    pub polish_up_to: usize,
}

impl Default for AverageCostSolver {
    fn default() -> Self {
        Self {
            span_tol: 1e-10,
            max_iterations: 1_000_000,
            tau: 0.5,
            reference: 0,
            polish_up_to: 600,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AverageCostSolution {
    pub average_cost: f64,
    /// Relative cost function, zero at the reference state.
    pub relative: Vec<f64>,
    /// Index into `choices[s]` of the chosen action.
    pub policy: Vec<usize>,
    pub iterations: usize,
    /// Final span of `T h − h` (before any polishing).
    pub residual: f64,
    pub polished: bool,
}

impl AverageCostSolution {
    /// Q-value of each choice in state `s` under the final relative costs.
    pub fn q_values(&self, mdp: &FiniteMdp, s: usize) -> Vec<f64> {
        mdp.choices[s]
            .iter()
            .map(|c| mdp.q(s, c, &self.relative))
            .collect()
    }

    pub fn action(&self, mdp: &FiniteMdp, s: usize) -> usize {
        mdp.choices[s][self.policy[s]].action
    }
}

/// First minimiser, switching only on strict improvement.
fn argmin_first(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best
}

impl AverageCostSolver {
    pub fn solve(&self, mdp: &FiniteMdp) -> Result<AverageCostSolution, MdpError> {
        self.solve_from(mdp, None)
    }

    /// Runs relative value iteration from `warm` (or zero), then polishes.
    pub fn solve_from(
        &self,
        mdp: &FiniteMdp,
        warm: Option<&[f64]>,
    ) -> Result<AverageCostSolution, MdpError> {
        let n = mdp.n_states();
        if n == 0 {
            return Err(MdpError::Invalid("empty state space".into()));
        }
        let tol = self.span_tol * mdp.cost_scale();
        let mut h: Vec<f64> = match warm {
            Some(w) if w.len() == n => w.to_vec(),
            _ => vec![0.0; n],
        };
        let mut next = vec![0.0; n];
        let mut residual = f64::INFINITY;
        let mut gain = 0.0;
        let mut iterations = 0;
        while iterations < self.max_iterations {
            iterations += 1;
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for s in 0..n {
                let (_, best) = argmin_first(mdp.choices[s].iter().map(|c| mdp.q(s, c, &h)));
                let t = (1.0 - self.tau) * h[s] + self.tau * best;
                let g = t - h[s];
                lo = lo.min(g);
                hi = hi.max(g);
                next[s] = t;
            }
            residual = hi - lo;
            gain = 0.5 * (hi + lo) / self.tau;
            let pin = next[self.reference];
            for (dst, src) in h.iter_mut().zip(&next) {
                *dst = src - pin;
            }
            if residual <= tol * self.tau {
                break;
            }
        }
        if residual > tol * self.tau {
            return Err(MdpError::NotConverged {
                iterations,
                residual,
            });
        }
        let policy: Vec<usize> = (0..n)
            .map(|s| argmin_first(mdp.choices[s].iter().map(|c| mdp.q(s, c, &h))).0)
            .collect();
        let mut sol = AverageCostSolution {
            average_cost: gain,
            relative: h,
            policy,
            iterations,
            residual: residual / self.tau,
            polished: false,
        };
        if n <= self.polish_up_to {
            self.polish(mdp, &mut sol)?;
        }
        Ok(sol)
    }

    /// Exact policy iteration from `policy` until no state can strictly
    /// improve. Skips value iteration entirely; useful when a nearby problem
    /// has already been solved.
    pub fn policy_iteration(
        &self,
        mdp: &FiniteMdp,
        policy: Vec<usize>,
    ) -> Result<AverageCostSolution, MdpError> {
        let mut sol = AverageCostSolution {
            average_cost: 0.0,
            relative: vec![0.0; mdp.n_states()],
            policy,
            iterations: 0,
            residual: 0.0,
            polished: false,
        };
        self.polish(mdp, &mut sol)?;
        Ok(sol)
    }

    fn polish(&self, mdp: &FiniteMdp, sol: &mut AverageCostSolution) -> Result<(), MdpError> {
        let n = mdp.n_states();
        let scale = mdp.cost_scale();
        for _ in 0..200 {
            let (gain, h) = evaluate(mdp, &sol.policy, self.reference)?;
            sol.average_cost = gain;
            sol.relative = h;
            let mut changed = false;
            for s in 0..n {
                let q: Vec<f64> = mdp.choices[s]
                    .iter()
                    .map(|c| mdp.q(s, c, &sol.relative))
                    .collect();
                let current = q[sol.policy[s]];
                let (best_i, best) = argmin_first(q.iter().copied());
                if best < current - 1e-12 * (scale + current.abs()) {
                    sol.policy[s] = best_i;
                    changed = true;
                }
            }
            if !changed {
                sol.polished = true;
                return Ok(());
            }
        }
        Ok(())
    }
}

/// Exact gain and relative costs of a stationary policy (unichain assumed):
/// solves `h + g 1 = c + P h` with `h[reference] = 0`.
pub fn evaluate(
    mdp: &FiniteMdp,
    policy: &[usize],
    reference: usize,
) -> Result<(f64, Vec<f64>), MdpError> {
    let n = mdp.n_states();
    let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
    let mut b = DVector::<f64>::zeros(n + 1);
    for s in 0..n {
        let c = &mdp.choices[s][policy[s]];
        a[(s, s)] += 1.0;
        for &(j, p) in &c.next {
            a[(s, j)] -= p;
        }
        a[(s, n)] = 1.0;
        b[s] = c.cost;
    }
    a[(n, reference)] = 1.0;
    let x = a.lu().solve(&b).ok_or(MdpError::Singular)?;
    let gain = x[n];
    let h = x.iter().take(n).copied().collect();
    Ok((gain, h))
}
