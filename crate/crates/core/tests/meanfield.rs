use nalgebra::{DMatrix, DVector};
use s2sched::meanfield::{
    contention_throughput, inv_sigma, ptx_residual, solve_ptx, MeanFieldChain,
};
use s2sched::rng::{Concern, DrawStream, Streams};
use s2sched::sim::run_contention_frame;

/// Transition matrix of the chain on `0..size`, reflecting at the top.
fn dense_chain(c: &MeanFieldChain, size: usize) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(size, size);
    let th = c.d_th as usize;
    for i in 0..size {
        let (scale, reset) = if i >= th {
            (1.0 - c.eps, c.eps)
        } else {
            (1.0, 0.0)
        };
        p[(i, 0)] += reset;
        if i == 0 {
            p[(0, 1)] += scale * c.lambda;
            p[(0, 0)] += scale * (1.0 - c.lambda);
            continue;
        }
        let up = if i + 1 < size { i + 1 } else { i };
        p[(i, up)] += scale * c.lambda;
        p[(i, i - 1)] += scale * c.mu;
        p[(i, i)] += scale * (1.0 - c.lambda - c.mu);
    }
    p
}

fn dense_stationary(p: &DMatrix<f64>) -> Vec<f64> {
    let n = p.nrows();
    let mut a = p.transpose() - DMatrix::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    a.lu()
        .solve(&b)
        .expect("irreducible chain")
        .iter()
        .copied()
        .collect()
}

fn cases() -> Vec<MeanFieldChain> {
    vec![
        MeanFieldChain::new(0.5, 0.5, 0.1, 5).unwrap(),
        MeanFieldChain::new(0.3, 0.5, 0.2, 3).unwrap(),
        MeanFieldChain::new(0.4, 0.2, 0.3, 8).unwrap(),
        MeanFieldChain::new(0.25, 0.25, 0.05, 12).unwrap(),
    ]
}

#[test]
fn stationary_matches_dense_solve() {
    for c in cases() {
        let pi = c.stationary_distribution().unwrap();
        let dense = dense_stationary(&dense_chain(&c, pi.len() + 200));
        for (a, b) in pi.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-9, "{c:?}: {a} vs {b}");
        }
    }
}

#[test]
fn lower_block_flux_balance() {
    for c in cases() {
        let pi = c.stationary_distribution().unwrap();
        let sigma: f64 = pi[c.d_th as usize..].iter().sum();
        for d in 0..c.d_th as usize {
            let lhs = c.lambda * pi[d]
                - c.mu
                    * pi[d + 1]
                    * if d + 1 >= c.d_th as usize {
                        1.0 - c.eps
                    } else {
                        1.0
                    };
            assert!((lhs - c.eps * sigma).abs() < 1e-12, "{c:?} d = {d}");
        }
    }
}

fn episode(c: &MeanFieldChain, rng: &mut DrawStream) -> u64 {
    let th = c.d_th;
    let mut d = th;
    let mut visits = 0;
    loop {
        visits += 1;
        if rng.uniform() < c.eps {
            return visits;
        }
        let u = rng.uniform();
        if u < c.lambda {
            d += 1;
        } else if u < c.lambda + c.mu {
            d -= 1;
            if d < th {
                return visits;
            }
        }
    }
}

#[test]
fn beta_matches_monte_carlo() {
    let mut rng = Streams::new(21).stream(Concern::Setup, 0);
    for c in cases().into_iter().take(2) {
        let beta = c.beta().unwrap();
        let n = 1_000_000;
        let samples: Vec<f64> = (0..n).map(|_| episode(&c, &mut rng) as f64).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - beta).abs() < 4.0 * se, "{mean} vs {beta} (se {se})");
    }
}

#[test]
fn sigma_matches_long_run_fraction() {
    let c = MeanFieldChain::new(0.5, 0.5, 0.1, 5).unwrap();
    let sigma = c.sigma().unwrap();
    let mut rng = Streams::new(3).stream(Concern::Setup, 1);
    let (mut d, mut above) = (0u64, 0u64);
    let steps = 2_000_000;
    for _ in 0..steps {
        if d >= c.d_th && rng.uniform() < c.eps {
            d = 0;
        } else {
            let u = rng.uniform();
            if u < c.lambda {
                d += 1;
            } else if u < c.lambda + c.mu && d > 0 {
                d -= 1;
            }
        }
        above += u64::from(d >= c.d_th);
    }
    let frac = above as f64 / steps as f64;
    assert!((frac - sigma).abs() < 0.01, "{frac} vs {sigma}");
}

#[test]
fn sigma_from_chain_matches_closed_expression() {
    for c in cases() {
        let beta = c.beta().unwrap();
        let a = c.sigma().unwrap();
        let b = 1.0 / inv_sigma(c.d_th as f64, c.lambda, c.mu, c.eps, beta);
        assert!((a - b).abs() < 1e-10, "{c:?}: {a} vs {b}");
    }
}

#[test]
fn contention_equation_has_one_root() {
    for n in [2u32, 3, 5, 10, 50] {
        for r in [1.0, 5.0, 10.0, 30.0] {
            let grid: Vec<f64> = (1..=10_000).map(|k| k as f64 / 10_000.0).collect();
            let changes = grid
                .windows(2)
                .filter(|w| ptx_residual(w[0], n, r).signum() != ptx_residual(w[1], n, r).signum())
                .count();
            assert!(changes <= 1, "n = {n}, r = {r}: {changes} sign changes");
        }
    }
}

#[test]
fn contention_frames_reach_predicted_throughput() {
    for (n, r) in [(2usize, 1.0), (5, 10.0)] {
        let p = solve_ptx(1.0, n, r).unwrap();
        let probs: Vec<(usize, f64)> = (0..n).map(|i| (i, p)).collect();
        let streams = Streams::new(17);
        let mut contention: Vec<DrawStream> = (0..n)
            .map(|i| streams.stream(Concern::Contention, i))
            .collect();
        let mut channel: Vec<DrawStream> = (0..n)
            .map(|i| streams.stream(Concern::Channel, i))
            .collect();
        let p_e = vec![0.0; n];
        let (mut wins, mut time) = (0u64, 0.0);
        for _ in 0..200_000 {
            let f = run_contention_frame(&probs, r, &p_e, &mut contention, &mut channel);
            wins += u64::from(f.winner.is_some());
            time += f.elapsed;
        }
        let rate = wins as f64 / time;
        let want = contention_throughput(p, n as u32, r);
        assert!(
            (rate - want).abs() / want < 0.01,
            "n = {n}: {rate} vs {want}"
        );
    }
}
