//! Oracle verification suite: every closed form against an independent
//! numeric oracle.

use serde::Serialize;

use crate::domain::{ErrorFunction, Extension};
use crate::indices::{aoi_threshold_horizon, nonlinear_aoi_threshold, whittle_random_walk};
use crate::mdp::{
    aoi_arm_index, evaluate_two_state_policy, greedy_two_state_policy, indexability_check,
    numeric_whittle, two_state_backwards_induction, Indexability,
};
use crate::meanfield::{
    closed_form_threshold, contenders, inv_sigma, ptx_residual, solve_ptx, solve_threshold,
    MeanFieldChain,
};
use crate::rng::{Concern, DrawStream, Streams};

const SUITE_SEED: u64 = 20_240_611;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VerifyOptions {
    /// Smaller instance counts and grids.
    pub quick: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }

    fn failed(name: &str, err: impl std::fmt::Display) -> Self {
        Self::new(name, false, format!("error: {err}"))
    }
}

fn draws(tag: usize) -> DrawStream {
    Streams::new(SUITE_SEED).stream(Concern::Setup, tag)
}

/// Runs every check and returns one result per check, in a fixed order.
pub fn verify(opts: VerifyOptions) -> Vec<CheckResult> {
    vec![
        greedy_optimality(opts),
        closed_form_index(opts),
        indexability(opts),
        unreliable_index_gap(),
        threshold_closed_form(opts),
        stationary(opts),
        sigma_monotone(opts),
        ptx(opts),
        aoi_threshold(),
    ]
}

/// Greedy two-state policy against backwards induction.
pub fn greedy_optimality(opts: VerifyOptions) -> CheckResult {
    const NAME: &str = "greedy_vs_backwards_induction";
    let count = if opts.quick { 50 } else { 200 };
    let mut rng = draws(1);
    let mut worst = 0.0f64;
    for k in 0..count {
        let n = 2 + rng.below(2);
        let horizon = [4, 8][rng.below(2)];
        let p: Vec<f64> = (0..n).map(|_| 0.5 * (1.0 - rng.uniform())).collect();
        let opt = match two_state_backwards_induction(&p, horizon) {
            Ok(s) => s,
            Err(e) => return CheckResult::failed(NAME, e),
        };
        let greedy =
            match evaluate_two_state_policy(&p, horizon, |_, d| greedy_two_state_policy(d, &p)) {
                Ok(v) => v,
                Err(e) => return CheckResult::failed(NAME, e),
            };
        for (d, g) in greedy.iter().enumerate() {
            let gap = (g - opt.value(d as u32)).abs();
            worst = worst.max(gap);
            if gap > 1e-12 {
                return CheckResult::new(
                    NAME,
                    false,
                    format!("instance {k}: p = {p:?}, T = {horizon}, d = {d:b}, gap {gap:e}"),
                );
            }
        }
    }
    CheckResult::new(NAME, true, format!("{count} instances, max gap {worst:e}"))
}

/// The error functions exercised by the index checks.
pub fn test_error_functions(random_tables: usize) -> Vec<(String, ErrorFunction)> {
    let mut out = vec![
        ("linear".to_string(), ErrorFunction::linear()),
        ("quadratic".to_string(), ErrorFunction::quadratic()),
        ("exponential".to_string(), ErrorFunction::exponential()),
        ("indicator".to_string(), ErrorFunction::indicator()),
    ];
    let mut rng = draws(2);
    for k in 0..random_tables {
        let mut values = vec![0.0];
        for _ in 0..24 {
            let last = *values.last().unwrap();
            values.push(last + 2.0 * rng.uniform());
        }
        let f = ErrorFunction::tabulated(values, Extension::LinearTail).expect("non-empty table");
        out.push((format!("tabulated_{k}"), f));
    }
    out
}

/// Random-walk closed-form index against bisection on the single-arm MDP.
pub fn closed_form_index(opts: VerifyOptions) -> CheckResult {
    const NAME: &str = "closed_form_index_vs_numeric";
    let (d_top, tables) = if opts.quick { (8, 3) } else { (20, 10) };
    let mut worst = (0.0f64, String::new());
    for (label, f) in test_error_functions(tables) {
        for d in 1..=d_top {
            let closed = match whittle_random_walk(d, &f) {
                Ok(v) => v,
                Err(e) => return CheckResult::failed(NAME, e),
            };
            let numeric = match numeric_whittle(d, &f, 0.0, None) {
                Ok(v) => v,
                Err(e) => return CheckResult::failed(NAME, format!("{label}, d = {d}: {e}")),
            };
            let gap = (closed - numeric).abs();
            if gap > worst.0 {
                worst = (gap, format!("{label} d = {d}"));
            }
            if gap > 1e-3 {
                return CheckResult::new(
                    NAME,
                    false,
                    format!("{label}, d = {d}: closed {closed} numeric {numeric}"),
                );
            }
        }
    }
    CheckResult::new(
        NAME,
        true,
        format!("max abs gap {:e} at {}", worst.0, worst.1),
    )
}

/// Idle-set nesting along `[0, 2 I(20)]` for every test error function.
pub fn indexability(opts: VerifyOptions) -> CheckResult {
    const NAME: &str = "indexability";
    let (tables, points) = if opts.quick { (3, 41) } else { (10, 201) };
    let d_max = 20;
    let mut checked = 0;
    for (label, f) in test_error_functions(tables) {
        let top = match whittle_random_walk(d_max, &f) {
            Ok(v) => 2.0 * v,
            Err(e) => return CheckResult::failed(NAME, e),
        };
        for p_e in [0.0, 0.05, 0.2] {
            let mut grid: Vec<f64> = (0..points)
                .map(|k| top * k as f64 / (points - 1) as f64)
                .collect();
            // Refine around each index so that small-d switches are seen even
            // when the grid is coarse relative to I(20).
            for d in 1..=d_max {
                let i = whittle_random_walk(d, &f).unwrap_or(0.0) * (1.0 - p_e);
                grid.extend([0.999 * i, 1.001 * i]);
            }
            grid.retain(|m| *m >= 0.0 && *m <= top);
            grid.sort_by(f64::total_cmp);
            grid.dedup();
            match indexability_check(&f, p_e, &grid, d_max) {
                Ok(Indexability::Certified) => checked += 1,
                Ok(other) => {
                    return CheckResult::new(
                        NAME,
                        false,
                        format!("{label}, p_e = {p_e}: {other:?}"),
                    )
                }
                Err(e) => return CheckResult::failed(NAME, format!("{label}, p_e = {p_e}: {e}")),
            }
        }
    }
    CheckResult::new(NAME, true, format!("{checked} (δ, p_e) cases certified"))
}

/// Relative gap between the `(1 − p_e)`-scaled index and the numeric index
/// for linear δ, `d ≤ 10`.
pub fn unreliable_gap_table(p_e: f64) -> Result<Vec<(u64, f64)>, crate::mdp::MdpError> {
    let f = ErrorFunction::linear();
    (1..=10)
        .map(|d| {
            let approx = whittle_random_walk(d, &f)? * (1.0 - p_e);
            let numeric = numeric_whittle(d, &f, p_e, None)?;
            Ok((d, (approx - numeric).abs() / numeric))
        })
        .collect()
}

/// The gap table is reported for several `p_e`; only `p_e = 0.05` is held
/// to the 5% bound.
pub fn unreliable_index_gap() -> CheckResult {
    const NAME: &str = "unreliable_index_gap";
    let mut detail = Vec::new();
    let mut passed = true;
    for p_e in [0.01, 0.05, 0.1, 0.2] {
        let table = match unreliable_gap_table(p_e) {
            Ok(t) => t,
            Err(e) => return CheckResult::failed(NAME, e),
        };
        let worst = table.iter().map(|&(_, g)| g).fold(0.0, f64::max);
        if p_e == 0.05 && worst > 0.05 {
            passed = false;
        }
        let cells: Vec<String> = table.iter().map(|(d, g)| format!("{d}:{g:.4}")).collect();
        detail.push(format!("p_e={p_e} max {worst:.4} [{}]", cells.join(" ")));
    }
    CheckResult::new(NAME, passed, detail.join("; "))
}

/// Closed-form threshold root against bisection on `1/σ(d) = 1/ν`.
pub fn threshold_closed_form(opts: VerifyOptions) -> CheckResult {
    const NAME: &str = "threshold_closed_form";
    let count = if opts.quick { 20 } else { 50 };
    let mut rng = draws(3);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < count {
        let nu = rng.between(0.02, 0.5);
        let n = 10 + rng.below(491);
        if nu * n as f64 <= 1.5 {
            continue;
        }
        done += 1;
        let closed = match closed_form_threshold(0.5, nu, n) {
            Ok(v) => v,
            Err(e) => return CheckResult::failed(NAME, e),
        };
        let root = match solve_threshold(0.5, 0.5, nu, n) {
            Ok(r) => r.raw_root,
            Err(e) => return CheckResult::failed(NAME, e),
        };
        let gap = (closed - root).abs();
        worst = worst.max(gap);
        if gap > 1e-6 {
            return CheckResult::new(
                NAME,
                false,
                format!("nu = {nu}, N = {n}: closed {closed} numeric {root}"),
            );
        }
    }
    CheckResult::new(NAME, true, format!("{count} instances, max gap {worst:e}"))
}

fn random_chain(rng: &mut DrawStream, max_threshold: usize) -> (f64, f64, f64, u64) {
    let lambda = rng.between(0.05, 0.5);
    let mu = if rng.uniform() < 0.3 {
        lambda
    } else {
        rng.between(0.05, 1.0 - lambda)
    };
    let eps = rng.between(0.01, 0.9);
    let d_th = 1 + rng.below(max_threshold) as u64;
    (lambda, mu, eps, d_th)
}

/// Balance residual and normalisation of the stationary distribution.
pub fn stationary(opts: VerifyOptions) -> CheckResult {
    const NAME: &str = "stationary_residuals";
    let count = if opts.quick { 20 } else { 100 };
    let mut rng = draws(4);
    let mut worst = (0.0f64, 0.0f64);
    for _ in 0..count {
        let (lambda, mu, eps, d_th) = random_chain(&mut rng, 30);
        let chain = match MeanFieldChain::new(lambda, mu, eps, d_th) {
            Ok(c) => c,
            Err(e) => return CheckResult::failed(NAME, e),
        };
        let pi = match chain.stationary_distribution() {
            Ok(p) => p,
            Err(e) => return CheckResult::failed(NAME, e),
        };
        let next = chain.step_distribution(&pi);
        let res = pi
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let mass = (pi.iter().sum::<f64>() - 1.0).abs();
        worst = (worst.0.max(res), worst.1.max(mass));
        if res >= 1e-8 || mass > 1e-10 {
            return CheckResult::new(
                NAME,
                false,
                format!(
                    "λ={lambda} μ={mu} ε={eps} D_th={d_th}: residual {res:e}, mass error {mass:e}"
                ),
            );
        }
    }
    CheckResult::new(
        NAME,
        true,
        format!(
            "{count} chains, max residual {:e}, max mass error {:e}",
            worst.0, worst.1
        ),
    )
}

/// `σ(D_th)` is non-increasing in the threshold.
pub fn sigma_monotone(opts: VerifyOptions) -> CheckResult {
    const NAME: &str = "sigma_monotone";
    let count = if opts.quick { 3 } else { 10 };
    let mut rng = draws(5);
    for _ in 0..count {
        let (lambda, mu, eps, _) = random_chain(&mut rng, 1);
        let beta = match MeanFieldChain::new(lambda, mu, eps, 1).and_then(|c| c.beta()) {
            Ok(b) => b,
            Err(e) => return CheckResult::failed(NAME, e),
        };
        let mut prev = f64::INFINITY;
        for d in 1..=100u64 {
            let sigma = 1.0 / inv_sigma(d as f64, lambda, mu, eps, beta);
            if sigma > prev * (1.0 + 1e-12) {
                return CheckResult::new(
                    NAME,
                    false,
                    format!(
                        "λ={lambda} μ={mu} ε={eps}: σ({d}) = {sigma} > σ({}) = {prev}",
                        d - 1
                    ),
                );
            }
            prev = sigma;
        }
    }
    CheckResult::new(NAME, true, format!("{count} chains, D_th in 1..=100"))
}

/// Contention probability: exact values and root residuals.
pub fn ptx(opts: VerifyOptions) -> CheckResult {
    const NAME: &str = "contention_probability";
    let exact = [(1.0, 1, 1.0, 1.0), (1.0, 2, 1.0, 0.5)];
    for (nu, n, r, want) in exact {
        match solve_ptx(nu, n, r) {
            Ok(p) if p == want => {}
            Ok(p) => {
                return CheckResult::new(
                    NAME,
                    false,
                    format!("nu N = {}, r = {r}: p = {p}, want {want}", nu * n as f64),
                )
            }
            Err(e) => return CheckResult::failed(NAME, e),
        }
    }
    let count = if opts.quick { 20 } else { 100 };
    let mut rng = draws(6);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let n = 2 + rng.below(499);
        let nu = rng.between(1.0 / n as f64, 1.0);
        let r = rng.between(1.0, 50.0);
        let p = match solve_ptx(nu, n, r) {
            Ok(p) => p,
            Err(e) => return CheckResult::failed(NAME, e),
        };
        let res = ptx_residual(p, contenders(nu, n), r).abs();
        worst = worst.max(res);
        if res >= 1e-10 {
            return CheckResult::new(
                NAME,
                false,
                format!("nu={nu} N={n} r={r}: residual {res:e}"),
            );
        }
    }
    CheckResult::new(
        NAME,
        true,
        format!("exact values hold; {count} roots, max residual {worst:e}"),
    )
}

/// Nonlinear AoI threshold index against bisection on the single-arm AoI
/// MDP, on a reliable channel.
pub fn aoi_threshold() -> CheckResult {
    const NAME: &str = "aoi_threshold_vs_arm";
    type Cost = fn(u64) -> f64;
    let costs: [(&str, Cost); 3] = [
        ("h", |h| h as f64),
        ("h^2", |h| (h * h) as f64),
        ("sqrt h", |h| (h as f64).sqrt()),
    ];
    let cases = [(0.5, 10), (0.2, 10), (0.1, 30), (0.3, 20)];
    let mut worst = 0.0f64;
    for (label, g) in costs {
        for (nu, n) in cases {
            let horizon = match aoi_threshold_horizon(nu, n, 0.0) {
                Ok(h) => h,
                Err(e) => return CheckResult::failed(NAME, e),
            };
            if horizon < 2 {
                continue;
            }
            let closed = match nonlinear_aoi_threshold(g, nu, n, 0.0) {
                Ok(v) => v,
                Err(e) => return CheckResult::failed(NAME, e),
            };
            let numeric = match aoi_arm_index(horizon, &g, 0.0, 2 * horizon + 20) {
                Ok(v) => v,
                Err(e) => return CheckResult::failed(NAME, e),
            };
            let rel = (closed - numeric).abs() / closed.abs().max(1e-12);
            worst = worst.max(rel);
            if rel > 1e-6 {
                return CheckResult::new(
                    NAME,
                    false,
                    format!("g = {label}, H = {horizon}: closed {closed} numeric {numeric}"),
                );
            }
        }
    }
    CheckResult::new(NAME, true, format!("max relative gap {worst:e}"))
}
