//! Finite-horizon oracle for a network of two-state Markov sources.
//!
//! The reduced state is the error pattern: bit `n` is set when node `n`'s
//! tracked status differs from the source. Decisions are taken at
//! `t = 0..T−1`; the cost of a decision is the expected number of erroneous
//! nodes after the sources step, so the total is `E Σ_{t=1}^{T} |d(t)|`.
//!
//! Updating node `n` clears its bit before the step. A node's next error bit
//! is therefore 1 with probability `1 − p_n` if it is still wrong, and `p_n`
//! otherwise.

use super::MdpError;
use crate::domain::TwoStateSource;

/// Bitmask over nodes; bit `n` set means node `n` is in error.
pub type ErrorPattern = u32;

pub const MAX_NODES: usize = 12;
pub const MAX_HORIZON: usize = 32;

#[derive(Debug, Clone)]
pub struct TwoStateSolution {
    p: Vec<f64>,
    /// `values[k][d]`: optimal expected cost with `k` decisions remaining.
    values: Vec<Vec<f64>>,
    /// `policy[t][d]`: optimal action at decision time `t`.
    policy: Vec<Vec<Option<usize>>>,
}

impl TwoStateSolution {
    pub fn horizon(&self) -> usize {
        self.policy.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.p.len()
    }

    /// Optimal expected total error count starting from pattern `d`.
    pub fn value(&self, d: ErrorPattern) -> f64 {
        self.values[self.horizon()][d as usize]
    }

    /// Optimal value with `remaining` decisions left.
    pub fn value_to_go(&self, remaining: usize, d: ErrorPattern) -> f64 {
        self.values[remaining][d as usize]
    }

    /// Optimal action at decision time `t` (`None` = idle).
    pub fn action(&self, t: usize, d: ErrorPattern) -> Option<usize> {
        self.policy[t][d as usize]
    }

    /// All actions within the tie tolerance of the optimum at `(t, d)`.
    pub fn optimal_actions(&self, t: usize, d: ErrorPattern) -> Vec<Option<usize>> {
        let remaining = self.horizon() - t;
        let next = expected_next(&self.p, &self.values[remaining - 1]);
        let q = action_values(&self.p, &next, d);
        let best = q.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
        q.into_iter()
            .filter(|&(_, v)| v <= best + tie_tol(best))
            .map(|(a, _)| a)
            .collect()
    }
}

fn tie_tol(v: f64) -> f64 {
    1e-12 * v.abs().max(1.0)
}

fn validate(p: &[f64], horizon: usize) -> Result<(), MdpError> {
    if p.is_empty() {
        return Err(MdpError::Invalid("no nodes".into()));
    }
    if p.len() > MAX_NODES {
        return Err(MdpError::TooLarge {
            what: "N",
            value: p.len(),
            bound: MAX_NODES,
        });
    }
    if horizon > MAX_HORIZON {
        return Err(MdpError::TooLarge {
            what: "T",
            value: horizon,
            bound: MAX_HORIZON,
        });
    }
    for &pn in p {
        TwoStateSource::new(pn)?;
    }
    Ok(())
}

/// Expected immediate cost given the effective (post-update) error pattern.
fn stage_cost(p: &[f64], e: ErrorPattern) -> f64 {
    p.iter()
        .enumerate()
        .map(|(n, &pn)| if e >> n & 1 == 1 { 1.0 - pn } else { pn })
        .sum()
}

/// `G(e) = E[V(d') | e]`, one butterfly pass per node.
fn expected_next(p: &[f64], v: &[f64]) -> Vec<f64> {
    let mut g = v.to_vec();
    for (n, &pn) in p.iter().enumerate() {
        let bit = 1usize << n;
        for x in 0..g.len() {
            if x & bit == 0 {
                let (v0, v1) = (g[x], g[x | bit]);
                g[x] = (1.0 - pn) * v0 + pn * v1;
                g[x | bit] = pn * v0 + (1.0 - pn) * v1;
            }
        }
    }
    g
}

/// `(action, value)` for idle and each erroneous node, in preference order.
fn action_values(p: &[f64], next: &[f64], d: ErrorPattern) -> Vec<(Option<usize>, f64)> {
    let mut out = vec![(None, stage_cost(p, d) + next[d as usize])];
    for n in 0..p.len() {
        if d >> n & 1 == 1 {
            let e = d & !(1 << n);
            out.push((Some(n), stage_cost(p, e) + next[e as usize]));
        }
    }
    out
}

/// Exact backwards induction over the `2^N` error patterns.
pub fn two_state_backwards_induction(
    p: &[f64],
    horizon: usize,
) -> Result<TwoStateSolution, MdpError> {
    validate(p, horizon)?;
    let size = 1usize << p.len();
    let mut values = vec![vec![0.0; size]];
    let mut policy = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let next = expected_next(p, values.last().unwrap());
        let mut v = vec![0.0; size];
        let mut pol = vec![None; size];
        for d in 0..size {
            let q = action_values(p, &next, d as ErrorPattern);
            let (mut best_a, mut best_v) = q[0];
            for &(a, val) in &q[1..] {
                if val < best_v - tie_tol(best_v) {
                    best_a = a;
                    best_v = val;
                }
            }
            v[d] = best_v;
            pol[d] = best_a;
        }
        values.push(v);
        policy.push(pol);
    }
    // `policy` was filled from the last stage backwards.
    policy.reverse();
    Ok(TwoStateSolution {
        p: p.to_vec(),
        values,
        policy,
    })
}

/// The greedy rule: among erroneous nodes, update the one least likely to
/// flip. Ties go to the lowest id; idle when nothing is wrong.
pub fn greedy_two_state_policy(d: ErrorPattern, p: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (n, &pn) in p.iter().enumerate() {
        if d >> n & 1 == 1 && best.is_none_or(|b| pn < p[b]) {
            best = Some(n);
        }
    }
    best
}

/// Exact expected total cost of an arbitrary (possibly time-varying) policy
/// over `horizon` decisions, for every initial pattern.
pub fn evaluate_two_state_policy(
    p: &[f64],
    horizon: usize,
    policy: impl Fn(usize, ErrorPattern) -> Option<usize>,
) -> Result<Vec<f64>, MdpError> {
    validate(p, horizon)?;
    let size = 1usize << p.len();
    let mut v = vec![0.0; size];
    for t in (0..horizon).rev() {
        let next = expected_next(p, &v);
        v = (0..size)
            .map(|d| {
                let d = d as ErrorPattern;
                let e = match policy(t, d) {
                    Some(n) if n < p.len() => d & !(1 << n),
                    _ => d,
                };
                stage_cost(p, e) + next[e as usize]
            })
            .collect();
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_node_average_is_p() {
        let sol = two_state_backwards_induction(&[0.3], 32).unwrap();
        for d in 0..2 {
            assert!((sol.value(d) / 32.0 - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn greedy_examples() {
        let p = [0.1, 0.4];
        assert_eq!(greedy_two_state_policy(0b11, &p), Some(0));
        assert_eq!(greedy_two_state_policy(0b10, &p), Some(1));
        assert_eq!(greedy_two_state_policy(0b00, &p), None);
        assert_eq!(greedy_two_state_policy(0b11, &[0.2, 0.2]), Some(0));
    }

    #[test]
    fn induction_picks_lower_flip_probability() {
        let p = [0.1, 0.4];
        let sol = two_state_backwards_induction(&p, 8).unwrap();
        for t in 0..8 {
            assert_eq!(sol.action(t, 0b11), Some(0));
            assert_eq!(sol.action(t, 0), None);
            assert!(sol.optimal_actions(t, 0).contains(&None));
        }
    }

    #[test]
    fn greedy_matches_optimum_on_a_small_case() {
        let p = [0.05, 0.3, 0.45];
        let sol = two_state_backwards_induction(&p, 6).unwrap();
        let greedy =
            evaluate_two_state_policy(&p, 6, |_, d| greedy_two_state_policy(d, &p)).unwrap();
        for d in 0..8u32 {
            assert!((greedy[d as usize] - sol.value(d)).abs() < 1e-12);
        }
        let idle = evaluate_two_state_policy(&p, 6, |_, _| None).unwrap();
        assert!(idle[7] > sol.value(7) + 1e-3);
    }

    #[test]
    fn bounds_are_enforced() {
        assert!(two_state_backwards_induction(&[0.1; 13], 4).is_err());
        assert!(two_state_backwards_induction(&[0.1], 33).is_err());
        assert!(two_state_backwards_induction(&[0.6], 4).is_err());
    }
}
