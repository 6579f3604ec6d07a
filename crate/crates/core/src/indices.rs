//! Closed-form scheduling indices.
//!
//! Higher values mean more urgent. All functions are pure; [`IndexTable`]
//! is a per-caller cache for the per-slot hot path.

use crate::domain::{DomainError, ErrorFunction};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IndexError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
}

fn check_pe(p_e: f64) -> Result<(), IndexError> {
    if (0.0..1.0).contains(&p_e) {
        Ok(())
    } else {
        Err(IndexError::OutOfRange {
            name: "p_e",
            value: p_e,
            range: "[0, 1)",
        })
    }
}

/// Whittle index of a random-walk arm at status difference `d`:
/// `w · Σ_{i=1}^{d} (2i − d) δ(i)`, summed in order.
pub fn whittle_random_walk(d: u64, f: &ErrorFunction) -> Result<f64, IndexError> {
    let mut sum = 0.0;
    let df = d as f64;
    for i in 1..=d {
        sum += (2.0 * i as f64 - df) * f.eval(i)?;
    }
    Ok(f.weight() * sum)
}

/// The reliable-channel index scaled by the success probability `1 − p_e`.
pub fn whittle_random_walk_unreliable(
    d: u64,
    f: &ErrorFunction,
    p_e: f64,
) -> Result<f64, IndexError> {
    check_pe(p_e)?;
    Ok(whittle_random_walk(d, f)? * (1.0 - p_e))
}

/// AoI Whittle index of a node with a buffered packet of age `a`, `b = h − a`
/// and Bernoulli packet arrivals of rate `p`.
pub fn aoi_separate_index(a: u64, b: u64, p: f64) -> Result<f64, IndexError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(IndexError::OutOfRange {
            name: "p",
            value: p,
            range: "(0, 1]",
        });
    }
    let (a, b) = (a as f64, b as f64);
    if b > 0.5 * p * (a * a - a) + a {
        let x = (b + 0.5 * a * (a - 1.0) * p) / (1.0 - p + a * p);
        Ok(0.5 * x * x + (1.0 / p - 0.5) * x)
    } else {
        Ok(b / p)
    }
}

/// AoI index with channel errors, `w (1 − p_e) h²`.
pub fn aoi_error_index(h: u64, p_e: f64, w: f64) -> f64 {
    let h = h as f64;
    w * (1.0 - p_e) * h * h
}

/// `H_th = round((1 − ν) N / (1 − p_e))`, at least 1.
pub fn aoi_threshold_horizon(nu: f64, n: usize, p_e: f64) -> Result<u64, IndexError> {
    check_pe(p_e)?;
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(IndexError::OutOfRange {
            name: "nu",
            value: nu,
            range: "(0, 1]",
        });
    }
    let raw = (1.0 - nu) * n as f64 / (1.0 - p_e);
    Ok((raw.round() as u64).max(1))
}

/// Index threshold for a non-decreasing AoI cost `g`:
/// `Σ_{h=1}^{H_th} (g(H_th) − g(h)) (1 − p_e)`.
pub fn nonlinear_aoi_threshold(
    g: impl Fn(u64) -> f64,
    nu: f64,
    n: usize,
    p_e: f64,
) -> Result<f64, IndexError> {
    let horizon = aoi_threshold_horizon(nu, n, p_e)?;
    let top = g(horizon);
    let sum: f64 = (1..=horizon).map(|h| top - g(h)).sum();
    Ok(sum * (1.0 - p_e))
}

/// Prefix sums `Σ δ(i)` and `Σ i δ(i)` so the random-walk index costs O(1)
/// per query once the table covers `d`.
///
/// The index is `w (2 Σ i δ(i) − d Σ δ(i))`, which equals the ordered sum up
/// to rounding.
#[derive(Debug, Clone)]
pub struct IndexTable {
    error: ErrorFunction,
    sum_delta: Vec<f64>,
    sum_i_delta: Vec<f64>,
}

impl IndexTable {
    pub fn new(error: ErrorFunction) -> Self {
        Self {
            error,
            sum_delta: vec![0.0],
            sum_i_delta: vec![0.0],
        }
    }

    pub fn error(&self) -> &ErrorFunction {
        &self.error
    }

    fn grow_to(&mut self, d: usize) -> Result<(), IndexError> {
        while self.sum_delta.len() <= d {
            let i = self.sum_delta.len();
            let delta = self.error.eval(i as u64)?;
            let s1 = self.sum_delta[i - 1] + delta;
            let s2 = self.sum_i_delta[i - 1] + i as f64 * delta;
            self.sum_delta.push(s1);
            self.sum_i_delta.push(s2);
        }
        Ok(())
    }

    /// Reliable-channel index at `d`.
    pub fn index(&mut self, d: u64) -> Result<f64, IndexError> {
        let du = d as usize;
        self.grow_to(du)?;
        let raw = 2.0 * self.sum_i_delta[du] - d as f64 * self.sum_delta[du];
        Ok(self.error.weight() * raw.max(0.0))
    }

    pub fn index_unreliable(&mut self, d: u64, p_e: f64) -> Result<f64, IndexError> {
        check_pe(p_e)?;
        Ok(self.index(d)? * (1.0 - p_e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ErrorKind, Extension};

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * (1.0 + b.abs())
    }

    #[test]
    fn whittle_examples() {
        assert_eq!(
            whittle_random_walk(0, &ErrorFunction::exponential()).unwrap(),
            0.0
        );
        // (-1)(1) + (1)(2) + (3)(3)
        assert_eq!(
            whittle_random_walk(3, &ErrorFunction::linear()).unwrap(),
            10.0
        );
        // (-2) + 0 + 2 + 4
        assert_eq!(
            whittle_random_walk(4, &ErrorFunction::indicator()).unwrap(),
            4.0
        );
    }

    #[test]
    fn indicator_index_is_d() {
        let f = ErrorFunction::indicator().with_weight(2.5).unwrap();
        for d in 0..200 {
            assert_eq!(whittle_random_walk(d, &f).unwrap(), 2.5 * d as f64);
        }
    }

    #[test]
    fn unreliable_examples() {
        let lin = ErrorFunction::linear();
        assert_eq!(whittle_random_walk_unreliable(3, &lin, 0.0).unwrap(), 10.0);
        assert!(close(
            whittle_random_walk_unreliable(3, &lin, 0.1).unwrap(),
            9.0
        ));
        let v = whittle_random_walk_unreliable(5, &lin, 0.999).unwrap();
        assert!(v >= 0.0);
        assert!(close(v, 35.0 * 0.001));
        assert!(whittle_random_walk_unreliable(3, &lin, 1.0).is_err());
        assert!(whittle_random_walk_unreliable(3, &lin, -0.1).is_err());
    }

    #[test]
    fn separate_index_examples() {
        assert_eq!(aoi_separate_index(1, 3, 0.5).unwrap(), 9.0);
        assert_eq!(aoi_separate_index(2, 1, 0.5).unwrap(), 2.0);
        assert_eq!(aoi_separate_index(0, 0, 0.3).unwrap(), 0.0);
        assert!(aoi_separate_index(1, 1, 0.0).is_err());
    }

    #[test]
    fn aoi_error_index_examples() {
        assert_eq!(aoi_error_index(0, 0.3, 2.0), 0.0);
        assert_eq!(aoi_error_index(4, 0.0, 1.0), 16.0);
        assert_eq!(aoi_error_index(4, 0.5, 1.0), 8.0);
    }

    #[test]
    fn nonlinear_threshold_examples() {
        assert_eq!(aoi_threshold_horizon(0.2, 10, 0.0).unwrap(), 8);
        assert_eq!(
            nonlinear_aoi_threshold(|h| h as f64, 0.2, 10, 0.0).unwrap(),
            28.0
        );
        assert_eq!(nonlinear_aoi_threshold(|_| 3.0, 0.4, 25, 0.2).unwrap(), 0.0);
        assert_eq!(
            nonlinear_aoi_threshold(|h| (h * h) as f64, 0.5, 4, 0.0).unwrap(),
            3.0
        );
        assert!(nonlinear_aoi_threshold(|h| h as f64, 0.5, 4, 1.0).is_err());
        // Rounds to nearest, floors at one.
        assert_eq!(aoi_threshold_horizon(0.99, 10, 0.0).unwrap(), 1);
        assert_eq!(aoi_threshold_horizon(0.25, 10, 0.0).unwrap(), 8);
    }

    #[test]
    fn table_matches_ordered_sum() {
        let kinds = [
            ErrorFunction::linear(),
            ErrorFunction::quadratic(),
            ErrorFunction::exponential(),
            ErrorFunction::indicator(),
            ErrorFunction::new(ErrorKind::Threshold { d0: 5 }, 0.5).unwrap(),
            ErrorFunction::tabulated(vec![0.0, 0.5, 0.5, 2.0], Extension::LinearTail).unwrap(),
        ];
        for f in kinds {
            let mut t = IndexTable::new(f.clone());
            for d in (0..120).rev().chain(0..120) {
                let direct = whittle_random_walk(d, &f).unwrap();
                let cached = t.index(d).unwrap();
                assert!(
                    (direct - cached).abs() <= 1e-10 * (1.0 + direct.abs()),
                    "{f:?} d={d}: {direct} vs {cached}"
                );
            }
        }
    }

    #[test]
    fn table_propagates_undefined_entries() {
        let f = ErrorFunction::tabulated(vec![0.0, 1.0], Extension::None).unwrap();
        let mut t = IndexTable::new(f);
        assert_eq!(t.index(1).unwrap(), 1.0);
        assert!(t.index(2).is_err());
    }
}
