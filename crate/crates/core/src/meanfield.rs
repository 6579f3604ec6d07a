//! Mean-field design of the event-triggered protocol.
//!
//! A node's status difference is modelled as a birth-death chain. Below the
//! threshold `D_th` it moves up with probability `λ`, down with `μ` and stays
//! otherwise (state 0 only moves up). At or above the threshold the node
//! competes and is reset to 0 with probability `ε = 1/(νN)`; otherwise it
//! moves as before. The threshold is chosen so that a fraction `ν` of the
//! population sits at or above it, and the contention probability maximises
//! p-persistent CSMA throughput among the `νN` competitors.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::ErrorFunction;
use crate::indices::{whittle_random_walk_unreliable, IndexError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeanFieldError {
    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("upper block did not reach tail tolerance at K = {k} (tail mass {tail:e})")]
    Truncation { k: usize, tail: f64 },
    #[error("no sign change of the threshold equation up to d = {hi}; 1/sigma table: {table:?}")]
    NoRoot { hi: f64, table: Vec<(f64, f64)> },
    #[error("closed form undefined for nu N = {nu_n} (needs nu N > 1.5 and lambda = mu)")]
    ClosedForm { nu_n: f64 },
    #[error(transparent)]
    Index(#[from] IndexError),
}

type Result<T> = std::result::Result<T, MeanFieldError>;

fn check(name: &'static str, value: f64, ok: bool, range: &'static str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(MeanFieldError::OutOfRange { name, value, range })
    }
}

/// `λ`, `μ` within 1e−9 of each other use the `λ = μ` branch.
pub const BRANCH_TOL: f64 = 1e-9;
const MAX_K: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldChain {
    pub lambda: f64,
    pub mu: f64,
    pub eps: f64,
    pub d_th: u64,
}

/// Solution of `(I − P̂)ᵀ x = e₁` on an upper block of `x.len()` states:
/// `x_j` is the expected number of visits to the `j`-th competing state
/// starting from the first one, so `β = Σ x`.
#[derive(Debug, Clone)]
pub struct UpperBlock {
    pub visits: Vec<f64>,
    pub beta: f64,
}

impl MeanFieldChain {
    pub fn new(lambda: f64, mu: f64, eps: f64, d_th: u64) -> Result<Self> {
        check("lambda", lambda, lambda > 0.0 && lambda <= 1.0, "(0, 1]")?;
        check("mu", mu, mu > 0.0 && mu <= 1.0, "(0, 1]")?;
        check(
            "lambda + mu",
            lambda + mu,
            lambda + mu <= 1.0 + 1e-12,
            "(0, 1]",
        )?;
        check("eps", eps, eps > 0.0 && eps <= 1.0, "(0, 1]")?;
        check("d_th", d_th as f64, d_th >= 1, ">= 1")?;
        Ok(Self {
            lambda,
            mu,
            eps,
            d_th,
        })
    }

    pub fn gamma(&self) -> f64 {
        (1.0 - self.lambda - self.mu).max(0.0)
    }

    /// Visits on an upper block truncated at `k` states (reflecting top).
    pub fn upper_block_truncated(&self, k: usize) -> UpperBlock {
        let k = k.max(1);
        let keep = 1.0 - self.eps;
        let (up, down, stay) = (self.lambda * keep, self.mu * keep, self.gamma() * keep);
        // Transposed tridiagonal system: sub = −up, diag = 1 − stay (+ −up on
        // the last row, where the up move reflects), super = −down.
        let mut diag = vec![1.0 - stay; k];
        diag[k - 1] -= up;
        let sub = -up;
        let sup = -down;
        let mut rhs = vec![0.0; k];
        rhs[0] = 1.0;
        // Thomas algorithm.
        let mut c = vec![0.0; k];
        let mut x = vec![0.0; k];
        let mut denom = diag[0];
        c[0] = sup / denom;
        x[0] = rhs[0] / denom;
        for i in 1..k {
            denom = diag[i] - sub * c[i - 1];
            c[i] = sup / denom;
            x[i] = (rhs[i] - sub * x[i - 1]) / denom;
        }
        for i in (0..k - 1).rev() {
            x[i] -= c[i] * x[i + 1];
        }
        let beta = x.iter().sum();
        UpperBlock { visits: x, beta }
    }

    /// Upper block grown until `β` is stable to 1e−12 and the truncated tail
    /// carries less than 1e−10 of the block's mass.
    pub fn upper_block(&self) -> Result<UpperBlock> {
        let mut k = 64;
        let mut prev = self.upper_block_truncated(k);
        loop {
            let next_k = (2 * k).min(MAX_K);
            let next = self.upper_block_truncated(next_k);
            let tail = next.visits[next_k - 1] / next.beta;
            let stable = (next.beta - prev.beta).abs() <= 1e-12 * next.beta;
            if stable && tail < 1e-10 {
                return Ok(next);
            }
            if next_k == MAX_K {
                return Err(MeanFieldError::Truncation { k: next_k, tail });
            }
            k = next_k;
            prev = next;
        }
    }

    /// `β = e₁ᵀ (I − P̂)⁻¹ 1`, the expected time spent competing per entry.
    pub fn beta(&self) -> Result<f64> {
        Ok(self.upper_block()?.beta)
    }

    /// Stationary distribution over `0..D_th + K`, with `K` auto-grown.
    pub fn stationary_distribution(&self) -> Result<Vec<f64>> {
        let block = self.upper_block()?;
        Ok(self.stationary_with(&block))
    }

    /// Stationary distribution on a fixed truncation of the upper block.
    pub fn stationary_truncated(&self, k: usize) -> Vec<f64> {
        self.stationary_with(&self.upper_block_truncated(k))
    }

    fn stationary_with(&self, block: &UpperBlock) -> Vec<f64> {
        let lower = self.d_th as usize;
        let mut pi = vec![0.0; lower + block.visits.len()];
        // Unnormalised, with π_{D_th − 1} = 1. Flux across each lower cut:
        // λ π_d = μ π_{d+1} + ε σ.
        pi[lower - 1] = 1.0;
        let sigma = self.lambda * block.beta;
        for d in (0..lower - 1).rev() {
            pi[d] = (self.mu * pi[d + 1] + self.eps * sigma) / self.lambda;
        }
        for (dst, &v) in pi[lower..].iter_mut().zip(&block.visits) {
            *dst = self.lambda * v;
        }
        let total: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|p| *p /= total);
        pi
    }

    /// Stationary mass at or above the threshold.
    pub fn sigma(&self) -> Result<f64> {
        let pi = self.stationary_distribution()?;
        Ok(pi[self.d_th as usize..].iter().sum())
    }

    /// One step of the truncated chain applied to a row vector, `π P`.
    pub fn step_distribution(&self, pi: &[f64]) -> Vec<f64> {
        let n = pi.len();
        let lower = self.d_th as usize;
        let (l, m, g, e) = (self.lambda, self.mu, self.gamma(), self.eps);
        let mut out = vec![0.0; n];
        for (i, &p) in pi.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let (scale, reset) = if i >= lower { (1.0 - e, e) } else { (1.0, 0.0) };
            out[0] += p * reset;
            if i == 0 {
                out[0] += p * (1.0 - l);
                out[1.min(n - 1)] += p * l;
                continue;
            }
            out[i - 1] += p * scale * m;
            out[i] += p * scale * g;
            if i + 1 < n {
                out[i + 1] += p * scale * l;
            } else {
                out[i] += p * scale * l;
            }
        }
        out
    }
}

/// The right-hand side of the threshold equation, `1/σ(d)` for real `d`.
pub fn inv_sigma(d: f64, lambda: f64, mu: f64, eps: f64, beta: f64) -> f64 {
    if (lambda - mu).abs() < BRANCH_TOL {
        d / (lambda * beta) + eps * d * (d - 1.0) / (2.0 * lambda) + 1.0
    } else {
        let r = lambda / mu;
        (r.powf(1.0 - d) - r) / (1.0 - r) * (1.0 / (lambda * beta) - eps / (lambda - mu))
            + eps * d / (lambda - mu)
            + 1.0
    }
}

fn check_population(nu: f64, n: usize) -> Result<f64> {
    check("nu", nu, nu > 0.0 && nu <= 1.0, "(0, 1]")?;
    let nu_n = nu * n as f64;
    check("nu N", nu_n, nu_n >= 1.0, ">= 1")?;
    Ok(nu_n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRoot {
    /// Real solution of the threshold equation.
    pub raw_root: f64,
    /// Deployed integer threshold, `max(1, ⌈raw_root⌉)`.
    pub d_th: u64,
    pub beta: f64,
    pub eps: f64,
}

/// Solves `1/σ(d) = 1/ν` for `d` by bisection and rounds the root up.
pub fn solve_threshold(lambda: f64, mu: f64, nu: f64, n: usize) -> Result<ThresholdRoot> {
    let nu_n = check_population(nu, n)?;
    let eps = 1.0 / nu_n;
    let beta = MeanFieldChain::new(lambda, mu, eps, 1)?.beta()?;
    let g = |d: f64| inv_sigma(d, lambda, mu, eps, beta) - 1.0 / nu;
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut table = vec![(0.0, g(0.0) + 1.0 / nu)];
    while g(hi) < 0.0 {
        table.push((hi, g(hi) + 1.0 / nu));
        lo = hi;
        hi *= 2.0;
        if hi > 1e15 {
            return Err(MeanFieldError::NoRoot { hi, table });
        }
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let raw_root = if g(0.0) >= 0.0 { 0.0 } else { 0.5 * (lo + hi) };
    let d_th = (raw_root.ceil() as u64).max(1);
    Ok(ThresholdRoot {
        raw_root,
        d_th,
        beta,
        eps,
    })
}

/// Closed-form `β` of the symmetric upper block,
/// `(1 + a/2b + √(a²/4b² − 1)) / (a + 2b)` with `a = 2λ(1−ε) + ε` and
/// `b = −λ(1−ε)`.
pub fn closed_form_beta(lambda: f64, eps: f64) -> Result<f64> {
    let a = 2.0 * lambda * (1.0 - eps) + eps;
    let b = -lambda * (1.0 - eps);
    if b == 0.0 {
        return Err(MeanFieldError::ClosedForm { nu_n: 1.0 / eps });
    }
    let ratio = a / (2.0 * b);
    Ok((1.0 + ratio + (ratio * ratio - 1.0).sqrt()) / (a + 2.0 * b))
}

/// Closed-form threshold root for `λ = μ`:
/// `½ − νN/β + √(ν²N²/β² − νN/β + ¼ − 2λνN(1 − 1/ν))`.
///
/// The square root carries coefficient 1; this is what solving the
/// quadratic `d² + (2νN/β − 1) d + 2λνN(1 − 1/ν) = 0` gives.
pub fn closed_form_threshold(lambda: f64, nu: f64, n: usize) -> Result<f64> {
    let nu_n = check_population(nu, n)?;
    if nu_n <= 1.5 {
        return Err(MeanFieldError::ClosedForm { nu_n });
    }
    let beta = closed_form_beta(lambda, 1.0 / nu_n)?;
    let k = nu_n / beta;
    let disc = k * k - k + 0.25 - 2.0 * lambda * nu_n * (1.0 - 1.0 / nu);
    Ok(0.5 - k + disc.sqrt())
}

/// `F(p) = (1 − p)^n − r (n p + (1 − p)^n − 1)`, whose root is `p_tx`.
pub fn ptx_residual(p: f64, n: u32, slot_ratio: f64) -> f64 {
    let q = (1.0 - p).powi(n as i32);
    q - slot_ratio * (n as f64 * p + q - 1.0)
}

/// Expected successful transmissions per data-slot time when `n`
/// contenders each transmit with probability `p` per mini-slot and an idle
/// mini-slot costs `1/r` of a data slot.
pub fn contention_throughput(p: f64, n: u32, slot_ratio: f64) -> f64 {
    let q = (1.0 - p).powi(n as i32);
    let success = n as f64 * p * (1.0 - p).powi(n as i32 - 1);
    success / (q / slot_ratio + 1.0 - q)
}

/// Number of contenders `max(1, round(νN))`.
pub fn contenders(nu: f64, n: usize) -> u32 {
    ((nu * n as f64).round() as u32).max(1)
}

/// Root of [`ptx_residual`] in `(0, 1]` by bisection.
pub fn solve_ptx(nu: f64, n: usize, slot_ratio: f64) -> Result<f64> {
    check_population(nu, n)?;
    check(
        "slot_ratio",
        slot_ratio,
        slot_ratio > 0.0 && slot_ratio.is_finite(),
        "(0, inf)",
    )?;
    let k = contenders(nu, n);
    let f = |p: f64| ptx_residual(p, k, slot_ratio);
    if f(1.0) == 0.0 {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = f(mid);
        if v == 0.0 {
            return Ok(mid);
        }
        if mid <= lo || mid >= hi {
            break;
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `Ψ(I) = p_tx` if `I ≥ I_th`, else 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMapping {
    pub i_th: f64,
    pub p_tx: f64,
}

impl ThresholdMapping {
    pub fn new(i_th: f64, p_tx: f64) -> Result<Self> {
        check("I_th", i_th, i_th >= 0.0 && i_th.is_finite(), "[0, inf)")?;
        check("p_tx", p_tx, p_tx > 0.0 && p_tx <= 1.0, "(0, 1]")?;
        Ok(Self { i_th, p_tx })
    }

    pub fn prob(&self, index: f64) -> f64 {
        if index >= self.i_th {
            self.p_tx
        } else {
            0.0
        }
    }
}

pub fn build_mapping(i_th: f64, p_tx: f64) -> Result<ThresholdMapping> {
    ThresholdMapping::new(i_th, p_tx)
}

/// The index at the integer threshold.
pub fn index_threshold_from_d(d_th: u64, f: &ErrorFunction, p_e: f64) -> Result<f64> {
    check("d_th", d_th as f64, d_th >= 1, ">= 1")?;
    Ok(whittle_random_walk_unreliable(d_th, f, p_e)?)
}

#[derive(Debug, Clone)]
pub struct PlanParams {
    pub lambda: f64,
    pub mu: f64,
    pub nu: f64,
    pub n: usize,
    pub slot_ratio: f64,
    pub error: ErrorFunction,
    pub p_e: f64,
}

impl PlanParams {
    /// Symmetric walk, linear error, reliable channel, ten mini-slots per
    /// data slot.
    pub fn symmetric(nu: f64, n: usize) -> Self {
        Self {
            lambda: 0.5,
            mu: 0.5,
            nu,
            n,
            slot_ratio: 10.0,
            error: ErrorFunction::linear(),
            p_e: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldSolution {
    pub d_th: u64,
    pub raw_root: f64,
    pub i_th: f64,
    pub p_tx: f64,
    /// Competing mass at the integer threshold.
    pub sigma: f64,
    /// Competing mass at the real root (equals `ν` up to solver error).
    pub sigma_raw: f64,
    pub beta: f64,
    pub eps: f64,
}

impl MeanFieldSolution {
    pub fn mapping(&self) -> ThresholdMapping {
        ThresholdMapping {
            i_th: self.i_th,
            p_tx: self.p_tx,
        }
    }
}

/// Threshold, index threshold and contention probability for one
/// population.
pub fn plan(params: &PlanParams) -> Result<MeanFieldSolution> {
    let root = solve_threshold(params.lambda, params.mu, params.nu, params.n)?;
    let p_tx = solve_ptx(params.nu, params.n, params.slot_ratio)?;
    let i_th = index_threshold_from_d(root.d_th, &params.error, params.p_e)?;
    let sigma = 1.0
        / inv_sigma(
            root.d_th as f64,
            params.lambda,
            params.mu,
            root.eps,
            root.beta,
        );
    let sigma_raw = 1.0 / inv_sigma(root.raw_root, params.lambda, params.mu, root.eps, root.beta);
    Ok(MeanFieldSolution {
        d_th: root.d_th,
        raw_root: root.raw_root,
        i_th,
        p_tx,
        sigma,
        sigma_raw,
        beta: root.beta,
        eps: root.eps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ptx_exact_values() {
        assert_eq!(solve_ptx(1.0, 1, 1.0).unwrap(), 1.0);
        assert_eq!(solve_ptx(1.0, 2, 1.0).unwrap(), 0.5);
        let p = solve_ptx(0.5, 10, 10.0).unwrap();
        assert!(p > 0.0 && p < 1.0);
        assert!(ptx_residual(p, 5, 10.0).abs() < 1e-10);
    }

    #[test]
    fn mapping_is_inclusive() {
        let m = build_mapping(5.0, 0.3).unwrap();
        assert_eq!(m.prob(5.0), 0.3);
        assert_eq!(m.prob(4.999), 0.0);
        assert_eq!(build_mapping(0.0, 0.3).unwrap().prob(0.0), 0.3);
        assert!(build_mapping(1.0, 0.0).is_err());
    }

    #[test]
    fn index_threshold_examples() {
        let lin = ErrorFunction::linear();
        assert_eq!(index_threshold_from_d(3, &lin, 0.0).unwrap(), 10.0);
        assert!((index_threshold_from_d(3, &lin, 0.1).unwrap() - 9.0).abs() < 1e-12);
        let f = ErrorFunction::exponential().with_weight(2.0).unwrap();
        let v = index_threshold_from_d(1, &f, 0.0).unwrap();
        assert!((v - 2.0 * (1f64.exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn closed_form_beta_matches_linear_solve() {
        for nu_n in [2.0, 5.0, 20.0, 50.0] {
            let eps = 1.0 / nu_n;
            let num = MeanFieldChain::new(0.5, 0.5, eps, 1)
                .unwrap()
                .beta()
                .unwrap();
            let cf = closed_form_beta(0.5, eps).unwrap();
            assert!((num - cf).abs() <= 1e-9 * cf, "{nu_n}: {num} vs {cf}");
        }
    }

    #[test]
    fn sigma_at_raw_root_is_nu() {
        let sol = plan(&PlanParams::symmetric(0.1, 50)).unwrap();
        assert!((sol.sigma_raw - 0.1).abs() < 1e-9);
        assert!(sol.sigma <= 0.1 + 1e-12);
        let chain = MeanFieldChain::new(0.5, 0.5, sol.eps, sol.d_th).unwrap();
        assert!((chain.sigma().unwrap() - sol.sigma).abs() < 1e-10);
    }

    #[test]
    fn everyone_competes_at_nu_one() {
        let r = solve_threshold(0.5, 0.5, 1.0, 20).unwrap();
        assert_eq!(r.d_th, 1);
    }
}
