//! The decomposed single-arm problem for a symmetric random-walk node.
//!
//! State `d` is the status difference. Idling costs `w δ(d)` and moves `d`
//! up or down by one with probability ½ each; from `d = 0` the arm moves to 1
//! with probability ½ and otherwise stays. Updating costs `m`; it succeeds
//! with probability `1 − p_e` (next state as from 0) and otherwise behaves
//! like an idle slot. The chain is truncated at `d_max` with a reflecting
//! boundary and solved for its average cost with `f(0) = 0`.

use super::{AverageCostSolution, AverageCostSolver, Choice, FiniteMdp, MdpError};
use crate::domain::ErrorFunction;
use crate::indices::whittle_random_walk;

const IDLE: usize = 0;
const UPDATE: usize = 1;

#[derive(Debug, Clone)]
pub struct SingleArmProblem {
    pub error: ErrorFunction,
    /// Auxiliary cost per update.
    pub m: f64,
    pub p_e: f64,
    pub d_max: u64,
}

impl SingleArmProblem {
    pub fn new(error: ErrorFunction, m: f64, p_e: f64, d_max: u64) -> Result<Self, MdpError> {
        let prob = Self {
            error,
            m,
            p_e,
            d_max,
        };
        prob.validate()?;
        Ok(prob)
    }

    fn validate(&self) -> Result<(), MdpError> {
        if !(self.m >= 0.0 && self.m.is_finite()) {
            return Err(MdpError::Invalid(format!(
                "m = {} must be finite and >= 0",
                self.m
            )));
        }
        if !(0.0..1.0).contains(&self.p_e) {
            return Err(MdpError::Invalid(format!(
                "p_e = {} outside [0, 1)",
                self.p_e
            )));
        }
        if self.d_max < 2 {
            return Err(MdpError::Invalid("d_max must be at least 2".into()));
        }
        Ok(())
    }

    fn costs(&self) -> Result<Vec<f64>, MdpError> {
        (0..=self.d_max)
            .map(|d| self.error.weighted(d).map_err(MdpError::from))
            .collect()
    }

    fn idle_next(&self, d: usize) -> Vec<(usize, f64)> {
        let top = self.d_max as usize;
        if d == 0 {
            vec![(0, 0.5), (1, 0.5)]
        } else {
            vec![(d - 1, 0.5), ((d + 1).min(top), 0.5)]
        }
    }

    fn build(&self, costs: &[f64]) -> FiniteMdp {
        let choices = (0..costs.len())
            .map(|d| {
                let idle = self.idle_next(d);
                let mut upd: Vec<(usize, f64)> =
                    vec![(0, 0.5 * (1.0 - self.p_e)), (1, 0.5 * (1.0 - self.p_e))];
                if self.p_e > 0.0 {
                    upd.extend(idle.iter().map(|&(j, p)| (j, p * self.p_e)));
                }
                vec![
                    Choice {
                        action: IDLE,
                        cost: costs[d],
                        next: idle,
                    },
                    Choice {
                        action: UPDATE,
                        cost: self.m + self.p_e * costs[d],
                        next: upd,
                    },
                ]
            })
            .collect();
        FiniteMdp { choices }
    }
}

#[derive(Debug, Clone)]
pub struct SingleArmSolution {
    pub average_cost: f64,
    /// Relative cost `f(d)` with `f(0) = 0`.
    pub relative: Vec<f64>,
    /// Q-value of idling in each state.
    pub q_idle: Vec<f64>,
    /// Q-value of updating in each state.
    pub q_update: Vec<f64>,
    /// Smallest `d` at which updating is strictly better; `None` if idling is
    /// optimal everywhere on the truncated chain.
    pub threshold: Option<u64>,
    pub iterations: usize,
    pub residual: f64,
}

impl SingleArmSolution {
    /// Idling is optimal at `d` (ties count as idle).
    pub fn idles_at(&self, d: u64) -> bool {
        self.q_idle[d as usize] <= self.q_update[d as usize]
    }

    pub fn idle_set(&self) -> Vec<u64> {
        (0..self.q_idle.len() as u64)
            .filter(|&d| self.idles_at(d))
            .collect()
    }
}

fn finish(
    mdp: &FiniteMdp,
    sol: AverageCostSolution,
) -> Result<(SingleArmSolution, Vec<usize>), MdpError> {
    let n = mdp.n_states();
    let mut q_idle = Vec::with_capacity(n);
    let mut q_update = Vec::with_capacity(n);
    for s in 0..n {
        let q = sol.q_values(mdp, s);
        q_idle.push(q[IDLE]);
        q_update.push(q[UPDATE]);
    }
    let update_set: Vec<usize> = (0..n).filter(|&d| q_update[d] < q_idle[d]).collect();
    let threshold = update_set.first().map(|&d| d as u64);
    if let Some(&first) = update_set.first() {
        if update_set.len() != n - first {
            return Err(MdpError::NonThreshold { update_set });
        }
    }
    let policy = (0..n)
        .map(|d| {
            if q_update[d] < q_idle[d] {
                UPDATE
            } else {
                IDLE
            }
        })
        .collect();
    Ok((
        SingleArmSolution {
            average_cost: sol.average_cost,
            relative: sol.relative,
            q_idle,
            q_update,
            threshold,
            iterations: sol.iterations,
            residual: sol.residual,
        },
        policy,
    ))
}

/// Solves the single-arm problem by relative value iteration, finished with
/// exact policy-iteration steps, and checks that the optimal policy is a
/// threshold in `d`.
pub fn single_arm_rvi(prob: &SingleArmProblem) -> Result<SingleArmSolution, MdpError> {
    prob.validate()?;
    let mdp = prob.build(&prob.costs()?);
    let sol = AverageCostSolver::default().solve(&mdp)?;
    finish(&mdp, sol).map(|(s, _)| s)
}

/// Re-solves a sequence of related problems, warm-starting each from the
/// previous optimal policy.
struct WarmArm {
    solver: AverageCostSolver,
    costs: Vec<f64>,
    policy: Option<Vec<usize>>,
}

impl WarmArm {
    fn new(prob: &SingleArmProblem) -> Result<Self, MdpError> {
        prob.validate()?;
        Ok(Self {
            solver: AverageCostSolver::default(),
            costs: prob.costs()?,
            policy: None,
        })
    }

    fn solve(&mut self, prob: &SingleArmProblem) -> Result<SingleArmSolution, MdpError> {
        let mdp = prob.build(&self.costs);
        let sol = match self.policy.take() {
            Some(p) => self.solver.policy_iteration(&mdp, p)?,
            None => self.solver.solve(&mdp)?,
        };
        let (out, policy) = finish(&mdp, sol)?;
        self.policy = Some(policy);
        Ok(out)
    }
}

/// Default truncation for index computations at `d`: `max(60, 2d + 16)`,
/// cut back (never below `d + 6`) to where `δ` exceeds `10⁴ · max(1, δ(d + 1))`
/// so fast-growing costs stay within floating-point range of the threshold
/// region.
pub fn default_d_max(d: u64, f: &ErrorFunction) -> u64 {
    let cap = (2 * d + 16).max(60);
    let limit = 1e4 * f.eval(d + 1).unwrap_or(1.0).max(1.0);
    let mut top = d + 6;
    while top < cap && f.eval(top + 1).is_ok_and(|v| v <= limit) {
        top += 1;
    }
    top
}

/// Whittle index at `d` by bisection on `m`: the infimum cost at which idling
/// at `d` is optimal.
pub fn numeric_whittle(
    d: u64,
    f: &ErrorFunction,
    p_e: f64,
    d_max: Option<u64>,
) -> Result<f64, MdpError> {
    if d == 0 {
        return Err(MdpError::Invalid("numeric_whittle needs d >= 1".into()));
    }
    let d_max = d_max.unwrap_or_else(|| default_d_max(d, f));
    if d >= d_max {
        return Err(MdpError::Invalid(format!(
            "d = {d} must be below d_max = {d_max}"
        )));
    }
    let mut prob = SingleArmProblem::new(f.clone(), 0.0, p_e, d_max)?;
    let mut arm = WarmArm::new(&prob)?;
    let mut idles = |m: f64, prob: &mut SingleArmProblem| -> Result<bool, MdpError> {
        prob.m = m;
        Ok(arm.solve(prob)?.idles_at(d))
    };
    let (mut lo, mut hi) = (0.0, 2.0 * whittle_random_walk(d, f)? + 1.0);
    if idles(lo, &mut prob)? {
        return Ok(0.0);
    }
    if !idles(hi, &mut prob)? {
        return Err(MdpError::Bracket { d, lo, hi });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-9 || mid <= lo || mid >= hi {
            break;
        }
        if idles(mid, &mut prob)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Whittle index of a generate-at-will AoI arm, by bisection.
///
/// The state `x ≥ 2` is the age the node will have after the slot if it
/// idles. Idling costs `g(x)` and moves to `x + 1`; updating costs `m` and,
/// on success (probability `1 − p_e`), incurs `g(1)` and moves to 2; a
/// failed update behaves like an idle slot. Ages are truncated at `x_max`.
pub fn aoi_arm_index(
    x: u64,
    g: &dyn Fn(u64) -> f64,
    p_e: f64,
    x_max: u64,
) -> Result<f64, MdpError> {
    if x < 2 || x >= x_max {
        return Err(MdpError::Invalid(format!("state {x} outside [2, {x_max})")));
    }
    if !(0.0..1.0).contains(&p_e) {
        return Err(MdpError::Invalid(format!("p_e = {p_e} outside [0, 1)")));
    }
    let n = (x_max - 1) as usize;
    let build = |m: f64| {
        let choices = (0..n)
            .map(|s| {
                let age = s as u64 + 2;
                let up = (s + 1).min(n - 1);
                let mut upd = vec![(0, 1.0 - p_e)];
                if p_e > 0.0 {
                    upd.push((up, p_e));
                }
                vec![
                    Choice {
                        action: IDLE,
                        cost: g(age),
                        next: vec![(up, 1.0)],
                    },
                    Choice {
                        action: UPDATE,
                        cost: m + (1.0 - p_e) * g(1) + p_e * g(age),
                        next: upd,
                    },
                ]
            })
            .collect();
        FiniteMdp { choices }
    };
    let solver = AverageCostSolver::default();
    let s = (x - 2) as usize;
    let mut policy: Option<Vec<usize>> = None;
    let mut idles = |m: f64| -> Result<bool, MdpError> {
        let mdp = build(m);
        let sol = match policy.take() {
            Some(p) => solver.policy_iteration(&mdp, p)?,
            None => solver.solve(&mdp)?,
        };
        let q = sol.q_values(&mdp, s);
        policy = Some(sol.policy.clone());
        Ok(q[IDLE] <= q[UPDATE])
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while !idles(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Err(MdpError::Bracket { d: x, lo, hi });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-10 * hi.max(1.0) || mid <= lo || mid >= hi {
            break;
        }
        if idles(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Indexability {
    Certified,
    /// `d` idles at `m1` but not at the larger `m2`.
    Counterexample {
        m1: f64,
        m2: f64,
        d: u64,
    },
    /// A state with positive error idles at zero update cost.
    IdleAtZero {
        d: u64,
    },
    /// `d` still updates at the largest tested cost.
    NotCovered {
        m: f64,
        d: u64,
    },
}

impl Indexability {
    pub fn is_certified(&self) -> bool {
        matches!(self, Indexability::Certified)
    }
}

/// Checks that the idle set grows along `m_grid`, holds no error state at
/// the first grid point, and covers `{1..d_max}` at the last.
///
/// State 0 always idles (updating there gains nothing), so the idle set at
/// zero cost is `{0}` rather than empty.
pub fn indexability_check(
    f: &ErrorFunction,
    p_e: f64,
    m_grid: &[f64],
    d_max: u64,
) -> Result<Indexability, MdpError> {
    if m_grid.is_empty() || m_grid.windows(2).any(|w| w[1] < w[0]) || m_grid[0] < 0.0 {
        return Err(MdpError::Invalid(
            "m grid must be non-empty, ascending and non-negative".into(),
        ));
    }
    let mut prob = SingleArmProblem::new(f.clone(), m_grid[0], p_e, d_max)?;
    let mut arm = WarmArm::new(&prob)?;
    let mut previous: Option<(f64, Vec<bool>)> = None;
    for &m in m_grid {
        prob.m = m;
        let sol = arm.solve(&prob)?;
        let idle: Vec<bool> = (0..=d_max).map(|d| sol.idles_at(d)).collect();
        match &previous {
            None => {
                if m == 0.0 {
                    if let Some(d) = (1..=d_max).find(|&d| idle[d as usize]) {
                        return Ok(Indexability::IdleAtZero { d });
                    }
                }
            }
            Some((m1, before)) => {
                if let Some(d) = (0..=d_max).find(|&d| before[d as usize] && !idle[d as usize]) {
                    return Ok(Indexability::Counterexample { m1: *m1, m2: m, d });
                }
            }
        }
        previous = Some((m, idle));
    }
    let (m, idle) = previous.expect("grid is non-empty");
    if let Some(d) = (1..=d_max).find(|&d| !idle[d as usize]) {
        return Ok(Indexability::NotCovered { m, d });
    }
    Ok(Indexability::Certified)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arm(f: ErrorFunction, m: f64, p_e: f64) -> SingleArmSolution {
        single_arm_rvi(&SingleArmProblem::new(f, m, p_e, 60).unwrap()).unwrap()
    }

    #[test]
    fn free_updates_give_threshold_one() {
        assert_eq!(arm(ErrorFunction::linear(), 0.0, 0.0).threshold, Some(1));
    }

    #[test]
    fn threshold_inverts_closed_form() {
        let f = ErrorFunction::linear();
        for big_d in 2..8u64 {
            let lo = whittle_random_walk(big_d - 1, &f).unwrap();
            let hi = whittle_random_walk(big_d, &f).unwrap();
            let sol = arm(f.clone(), 0.5 * (lo + hi), 0.0);
            assert_eq!(sol.threshold, Some(big_d));
        }
        assert_eq!(arm(ErrorFunction::indicator(), 3.5, 0.0).threshold, Some(4));
    }

    #[test]
    fn numeric_index_examples() {
        let lin = ErrorFunction::linear();
        assert!((numeric_whittle(3, &lin, 0.0, None).unwrap() - 10.0).abs() < 1e-4);
        let ind = ErrorFunction::indicator();
        assert!((numeric_whittle(1, &ind, 0.0, None).unwrap() - 1.0).abs() < 1e-4);
        let v = numeric_whittle(2, &lin, 0.05, None).unwrap();
        assert!((v - 3.8).abs() / v < 0.05, "{v}");
    }

    #[test]
    fn indexable_on_linear_grid() {
        let grid: Vec<f64> = (0..=100).map(|k| 0.5 * k as f64).collect();
        let res = indexability_check(&ErrorFunction::linear(), 0.0, &grid, 5).unwrap();
        assert_eq!(res, Indexability::Certified);
    }

    #[test]
    fn truncation_doubling_is_stable() {
        let f = ErrorFunction::quadratic();
        let a = single_arm_rvi(&SingleArmProblem::new(f.clone(), 30.0, 0.05, 40).unwrap()).unwrap();
        let b = single_arm_rvi(&SingleArmProblem::new(f, 30.0, 0.05, 80).unwrap()).unwrap();
        assert!((a.average_cost - b.average_cost).abs() < 1e-7);
    }

    #[test]
    fn aoi_arm_matches_renewal_formula() {
        use crate::indices::nonlinear_aoi_threshold;
        // H_th = round((1 − ν) N) = 8 for ν = 0.2, N = 10.
        for g in [|h: u64| h as f64, |h: u64| (h * h) as f64] {
            let closed = nonlinear_aoi_threshold(g, 0.2, 10, 0.0).unwrap();
            let numeric = aoi_arm_index(8, &g, 0.0, 200).unwrap();
            assert!(
                (closed - numeric).abs() < 1e-6 * closed.max(1.0),
                "{closed} vs {numeric}"
            );
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(SingleArmProblem::new(ErrorFunction::linear(), -1.0, 0.0, 10).is_err());
        assert!(SingleArmProblem::new(ErrorFunction::linear(), 1.0, 1.0, 10).is_err());
        assert!(numeric_whittle(0, &ErrorFunction::linear(), 0.0, None).is_err());
    }
}
