//! Source processes, tracking-error functions and per-node runtime state.

use thiserror::Error;

/// Tolerance on `q_up + q_down + q_stay = 1`.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("{name} = {value} is outside {range}")]
    InvalidProbability {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("step probabilities sum to {sum}, expected 1")]
    ProbabilitySum { sum: f64 },
    #[error("two-state source status must be 0 or 1, got {0}")]
    InvalidTwoState(u8),
    #[error(
        "tabulated error function has no value at d = {d} (table length {len}, no extension rule)"
    )]
    OutsideTable { d: u64, len: usize },
    #[error("error function weight must be finite and nonnegative, got {0}")]
    InvalidWeight(f64),
    #[error("threshold error function needs D0 >= 1, got {0}")]
    InvalidThreshold(u64),
    #[error("tabulated error function must have at least one entry")]
    EmptyTable,
    #[error(transparent)]
    Violation(#[from] ErrorViolation),
}

/// Why an error function fails the `δ(0) = 0 ≤ δ(1) ≤ ...` contract.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ErrorViolation {
    #[error("δ(0) = {0}, expected 0")]
    NonZeroAtOrigin(f64),
    #[error("δ decreases at d = {d}")]
    Decreasing { d: u64 },
    #[error("δ(d) = {value} at d = {d} is not a finite nonnegative number")]
    InvalidValue { d: u64, value: f64 },
    #[error("δ is identically zero on [0, {d_max}]")]
    AllZero { d_max: u64 },
    #[error("δ undefined at d = {d}")]
    Undefined { d: u64 },
}

fn check_probability(
    name: &'static str,
    value: f64,
    ok: bool,
    range: &'static str,
) -> Result<(), DomainError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(DomainError::InvalidProbability { name, value, range })
    }
}

/// Symmetric two-state Markov source with per-slot flip probability `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoStateSource {
    p: f64,
}

impl TwoStateSource {
    pub fn new(p: f64) -> Result<Self, DomainError> {
        check_probability("p", p, p > 0.0 && p <= 0.5, "(0, 0.5]")?;
        Ok(Self { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}

/// Integer random walk with i.i.d. increments in {+1, -1, 0}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomWalkSource {
    q_up: f64,
    q_down: f64,
    q_stay: f64,
}

impl RandomWalkSource {
    pub fn new(q_up: f64, q_down: f64, q_stay: f64) -> Result<Self, DomainError> {
        for (name, q) in [("q_up", q_up), ("q_down", q_down), ("q_stay", q_stay)] {
            check_probability(name, q, (0.0..=1.0).contains(&q), "[0, 1]")?;
        }
        let sum = q_up + q_down + q_stay;
        if (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
            return Err(DomainError::ProbabilitySum { sum });
        }
        Ok(Self {
            q_up,
            q_down,
            q_stay,
        })
    }

    /// q_up = q_down = 1/2, no stay.
    pub fn symmetric() -> Self {
        Self {
            q_up: 0.5,
            q_down: 0.5,
            q_stay: 0.0,
        }
    }

    pub fn q_up(&self) -> f64 {
        self.q_up
    }

    pub fn q_down(&self) -> f64 {
        self.q_down
    }

    pub fn q_stay(&self) -> f64 {
        self.q_stay
    }

    /// Expected increment per slot.
    pub fn drift(&self) -> f64 {
        self.q_up - self.q_down
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceModel {
    TwoState(TwoStateSource),
    RandomWalk(RandomWalkSource),
}

impl SourceModel {
    /// Advances a status by one slot using the uniform draw `u`.
    #[inline]
    pub fn step(&self, s: i64, u: f64) -> i64 {
        match self {
            SourceModel::TwoState(src) => {
                if u < src.p {
                    1 - s
                } else {
                    s
                }
            }
            SourceModel::RandomWalk(w) => walk_step(s, w.q_up, w.q_down, u),
        }
    }

    pub fn is_two_state(&self) -> bool {
        matches!(self, SourceModel::TwoState(_))
    }
}

#[inline]
fn walk_step(s: i64, q_up: f64, q_down: f64, u: f64) -> i64 {
    if u < q_up {
        s.saturating_add(1)
    } else if u < q_up + q_down {
        s.saturating_sub(1)
    } else {
        s
    }
}

/// One slot of a two-state source: flips iff `rand < p`.
pub fn step_two_state(state: u8, p: f64, rand: f64) -> Result<u8, DomainError> {
    if state > 1 {
        return Err(DomainError::InvalidTwoState(state));
    }
    let src = TwoStateSource::new(p)?;
    Ok(SourceModel::TwoState(src).step(state as i64, rand) as u8)
}

/// One slot of a random walk. `[0, q_up)` steps up, `[q_up, q_up + q_down)`
/// steps down, the remainder stays.
pub fn step_random_walk(
    state: i64,
    q_up: f64,
    q_down: f64,
    q_stay: f64,
    rand: f64,
) -> Result<i64, DomainError> {
    let w = RandomWalkSource::new(q_up, q_down, q_stay)?;
    Ok(walk_step(state, w.q_up, w.q_down, rand))
}

/// How a tabulated error function continues past its last entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Extension {
    /// Queries past the table are errors.
    #[default]
    None,
    /// Repeat the last value.
    HoldLast,
    /// Continue with the last increment.
    LinearTail,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ErrorKind {
    /// δ(d) = d
    Linear,
    /// δ(d) = d²
    Quadratic,
    /// δ(d) = e^d − 1
    Exponential,
    /// δ(d) = 1{d ≥ 1}
    Indicator,
    /// δ(d) = 1{d ≥ d0}
    Threshold { d0: u64 },
    /// δ(d) = values[d] on the table, then per `extension`.
    Tabulated {
        values: Vec<f64>,
        extension: Extension,
    },
}

/// A weighted tracking-error function `w · δ(|s − ŝ|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorFunction {
    kind: ErrorKind,
    weight: f64,
}

impl ErrorFunction {
    pub fn new(kind: ErrorKind, weight: f64) -> Result<Self, DomainError> {
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(DomainError::InvalidWeight(weight));
        }
        match &kind {
            ErrorKind::Threshold { d0 } if *d0 == 0 => {
                return Err(DomainError::InvalidThreshold(0));
            }
            ErrorKind::Tabulated { values, .. } if values.is_empty() => {
                return Err(DomainError::EmptyTable);
            }
            _ => {}
        }
        Ok(Self { kind, weight })
    }

    pub fn linear() -> Self {
        Self::unit(ErrorKind::Linear)
    }

    pub fn quadratic() -> Self {
        Self::unit(ErrorKind::Quadratic)
    }

    pub fn exponential() -> Self {
        Self::unit(ErrorKind::Exponential)
    }

    pub fn indicator() -> Self {
        Self::unit(ErrorKind::Indicator)
    }

    pub fn tabulated(values: Vec<f64>, extension: Extension) -> Result<Self, DomainError> {
        Self::new(ErrorKind::Tabulated { values, extension }, 1.0)
    }

    fn unit(kind: ErrorKind) -> Self {
        Self { kind, weight: 1.0 }
    }

    pub fn with_weight(mut self, weight: f64) -> Result<Self, DomainError> {
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(DomainError::InvalidWeight(weight));
        }
        self.weight = weight;
        Ok(self)
    }

    pub fn kind(&self) -> &ErrorKind {
        &self.kind
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Unweighted δ(d).
    pub fn eval(&self, d: u64) -> Result<f64, DomainError> {
        Ok(match &self.kind {
            ErrorKind::Linear => d as f64,
            ErrorKind::Quadratic => (d as f64) * (d as f64),
            ErrorKind::Exponential => (d as f64).exp_m1(),
            ErrorKind::Indicator => {
                if d >= 1 {
                    1.0
                } else {
                    0.0
                }
            }
            ErrorKind::Threshold { d0 } => {
                if d >= *d0 {
                    1.0
                } else {
                    0.0
                }
            }
            ErrorKind::Tabulated { values, extension } => {
                let len = values.len();
                match values.get(d as usize) {
                    Some(v) => *v,
                    None => {
                        let last = values[len - 1];
                        match extension {
                            Extension::None => return Err(DomainError::OutsideTable { d, len }),
                            Extension::HoldLast => last,
                            Extension::LinearTail => {
                                let slope = if len >= 2 {
                                    last - values[len - 2]
                                } else {
                                    0.0
                                };
                                last + slope * (d - (len as u64 - 1)) as f64
                            }
                        }
                    }
                }
            }
        })
    }

    /// w · δ(d).
    pub fn weighted(&self, d: u64) -> Result<f64, DomainError> {
        Ok(self.weight * self.eval(d)?)
    }

    /// Largest d answerable without an extension rule, if any.
    pub fn defined_up_to(&self) -> Option<u64> {
        match &self.kind {
            ErrorKind::Tabulated {
                values,
                extension: Extension::None,
            } => Some(values.len() as u64 - 1),
            _ => None,
        }
    }
}

/// δ(d) for any error function.
pub fn eval_error(f: &ErrorFunction, d: u64) -> Result<f64, DomainError> {
    f.eval(d)
}

/// Checks δ(0) = 0, monotonicity on `[0, d_max]` and that some δ(d) > 0 there.
pub fn validate_error_function(f: &ErrorFunction, d_max: u64) -> Result<(), ErrorViolation> {
    let value = |d: u64| -> Result<f64, ErrorViolation> {
        let v = f.eval(d).map_err(|_| ErrorViolation::Undefined { d })?;
        if v.is_nan() || v < 0.0 {
            return Err(ErrorViolation::InvalidValue { d, value: v });
        }
        Ok(v)
    };
    let zero = value(0)?;
    if zero != 0.0 {
        return Err(ErrorViolation::NonZeroAtOrigin(zero));
    }
    let mut prev = zero;
    let mut any_positive = false;
    for d in 1..=d_max.max(1) {
        let v = value(d)?;
        if v < prev {
            return Err(ErrorViolation::Decreasing { d });
        }
        any_positive |= v > 0.0;
        prev = v;
    }
    if any_positive {
        Ok(())
    } else {
        Err(ErrorViolation::AllZero { d_max })
    }
}

/// The newest sampled status waiting in a node's buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    pub status: i64,
    pub age: u64,
}

/// Runtime state of one node as seen at a slot boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    /// True status.
    pub s: i64,
    /// Status last delivered to the controller.
    pub s_hat: i64,
    /// Age of information in slots.
    pub h: u64,
    pub buffer: Option<Packet>,
    /// Per-transmission error probability.
    pub p_e: f64,
    /// Tracker-side drift compensation per slot since the last delivery
    /// (zero unless drift correction is enabled).
    pub drift: f64,
    pub since_update: u64,
}

impl NodeState {
    pub fn new(s: i64, s_hat: i64, p_e: f64) -> Self {
        Self {
            s,
            s_hat,
            h: 0,
            buffer: None,
            p_e,
            drift: 0.0,
            since_update: 0,
        }
    }

    /// The controller's current estimate: the last delivered status, shifted
    /// by the predicted drift when compensation is on.
    #[inline]
    pub fn tracked(&self) -> i64 {
        if self.drift == 0.0 {
            self.s_hat
        } else {
            let shift = (self.drift * self.since_update as f64).round() as i64;
            self.s_hat.saturating_add(shift)
        }
    }

    /// |s − ŝ| against the tracked estimate.
    #[inline]
    pub fn d(&self) -> u64 {
        self.s.abs_diff(self.tracked())
    }

    /// Age of the buffered packet, if any.
    pub fn a(&self) -> Option<u64> {
        self.buffer.map(|p| p.age)
    }

    /// h − a for the buffered packet, if any.
    pub fn b(&self) -> Option<u64> {
        self.buffer.map(|p| self.h.saturating_sub(p.age))
    }

    /// Records a successful delivery of `status` sampled `age` slots ago.
    pub fn deliver(&mut self, status: i64, age: u64) {
        self.s_hat = status;
        self.h = age;
        self.since_update = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_state_examples() {
        assert_eq!(step_two_state(0, 0.3, 0.1).unwrap(), 1);
        assert_eq!(step_two_state(1, 0.3, 0.9).unwrap(), 1);
        assert_eq!(step_two_state(0, 0.5, 0.5).unwrap(), 0);
    }

    #[test]
    fn two_state_rejects_bad_p() {
        for p in [0.0, -0.1, 0.51, f64::NAN] {
            assert!(step_two_state(0, p, 0.2).is_err(), "p = {p}");
        }
        assert!(step_two_state(2, 0.3, 0.2).is_err());
    }

    #[test]
    fn random_walk_examples() {
        assert_eq!(step_random_walk(5, 0.5, 0.5, 0.0, 0.2).unwrap(), 6);
        assert_eq!(step_random_walk(5, 0.5, 0.5, 0.0, 0.7).unwrap(), 4);
        assert_eq!(step_random_walk(0, 0.3, 0.3, 0.4, 0.99).unwrap(), 0);
    }

    #[test]
    fn random_walk_rejects_bad_sum() {
        assert!(matches!(
            step_random_walk(0, 0.5, 0.5, 0.1, 0.3),
            Err(DomainError::ProbabilitySum { .. })
        ));
        assert!(step_random_walk(0, 0.5, 0.5, 1e-13, 0.3).is_ok());
    }

    #[test]
    fn walk_saturates_instead_of_overflowing() {
        let w = SourceModel::RandomWalk(RandomWalkSource::symmetric());
        assert_eq!(w.step(i64::MAX, 0.1), i64::MAX);
        assert_eq!(w.step(i64::MIN, 0.9), i64::MIN);
        let big = 1i64 << 62;
        let n = NodeState::new(big, -big, 0.0);
        assert_eq!(n.d(), 1u64 << 63);
    }

    #[test]
    fn eval_examples() {
        assert_eq!(eval_error(&ErrorFunction::linear(), 0).unwrap(), 0.0);
        let e2 = eval_error(&ErrorFunction::exponential(), 2).unwrap();
        assert!((e2 - (2f64.exp() - 1.0)).abs() < 1e-12);
        assert!((e2 - 6.389).abs() < 1e-3);
        assert_eq!(eval_error(&ErrorFunction::indicator(), 7).unwrap(), 1.0);
        let thr = ErrorFunction::new(ErrorKind::Threshold { d0: 3 }, 1.0).unwrap();
        assert_eq!(thr.eval(2).unwrap(), 0.0);
        assert_eq!(thr.eval(3).unwrap(), 1.0);
    }

    #[test]
    fn tabulated_extension_rules() {
        let none = ErrorFunction::tabulated(vec![0.0, 1.0, 3.0], Extension::None).unwrap();
        assert_eq!(none.eval(2).unwrap(), 3.0);
        assert_eq!(
            none.eval(3),
            Err(DomainError::OutsideTable { d: 3, len: 3 })
        );
        let hold = ErrorFunction::tabulated(vec![0.0, 1.0, 3.0], Extension::HoldLast).unwrap();
        assert_eq!(hold.eval(10).unwrap(), 3.0);
        let lin = ErrorFunction::tabulated(vec![0.0, 1.0, 3.0], Extension::LinearTail).unwrap();
        assert_eq!(lin.eval(5).unwrap(), 9.0);
    }

    #[test]
    fn validation_examples() {
        assert_eq!(
            validate_error_function(&ErrorFunction::linear(), 100),
            Ok(())
        );
        let bumpy = ErrorFunction::tabulated(vec![0.0, 2.0, 1.0], Extension::None).unwrap();
        assert_eq!(
            validate_error_function(&bumpy, 2),
            Err(ErrorViolation::Decreasing { d: 2 })
        );
        let flat = ErrorFunction::tabulated(vec![0.0, 0.0, 0.0], Extension::None).unwrap();
        assert_eq!(
            validate_error_function(&flat, 2),
            Err(ErrorViolation::AllZero { d_max: 2 })
        );
        let offset = ErrorFunction::tabulated(vec![1.0, 2.0], Extension::None).unwrap();
        assert_eq!(
            validate_error_function(&offset, 1),
            Err(ErrorViolation::NonZeroAtOrigin(1.0))
        );
        let short = ErrorFunction::tabulated(vec![0.0, 2.0], Extension::None).unwrap();
        assert_eq!(
            validate_error_function(&short, 4),
            Err(ErrorViolation::Undefined { d: 2 })
        );
    }

    #[test]
    fn builtin_kinds_are_monotone() {
        let kinds = [
            ErrorFunction::linear(),
            ErrorFunction::quadratic(),
            ErrorFunction::exponential(),
            ErrorFunction::indicator(),
            ErrorFunction::new(ErrorKind::Threshold { d0: 4 }, 2.0).unwrap(),
        ];
        for f in &kinds {
            assert_eq!(validate_error_function(f, 200), Ok(()), "{f:?}");
        }
    }

    #[test]
    fn constructor_rejections() {
        assert!(ErrorFunction::new(ErrorKind::Threshold { d0: 0 }, 1.0).is_err());
        assert!(ErrorFunction::linear().with_weight(-1.0).is_err());
        assert!(ErrorFunction::tabulated(vec![], Extension::None).is_err());
        assert!(TwoStateSource::new(0.0).is_err());
        assert!(RandomWalkSource::new(-0.1, 0.6, 0.5).is_err());
    }

    #[test]
    fn node_state_derived_quantities() {
        let mut n = NodeState::new(5, 2, 0.1);
        assert_eq!(n.d(), 3);
        assert_eq!(n.a(), None);
        n.h = 7;
        n.buffer = Some(Packet { status: 5, age: 2 });
        assert_eq!(n.a(), Some(2));
        assert_eq!(n.b(), Some(5));
        n.deliver(5, 2);
        assert_eq!(n.d(), 0);
        assert_eq!(n.h, 2);
    }

    #[test]
    fn drift_prediction_shifts_estimate() {
        let mut n = NodeState::new(10, 0, 0.0);
        n.drift = 0.4;
        n.since_update = 10;
        assert_eq!(n.tracked(), 4);
        assert_eq!(n.d(), 6);
    }
}
