use s2sched::domain::ErrorFunction;
use s2sched::indices::whittle_random_walk;
use s2sched::mdp::{
    evaluate_policy, evaluate_two_state_policy, greedy_two_state_policy, indexability_check,
    multi_node_optimal, numeric_whittle, single_arm_rvi, two_state_backwards_induction, ArmSpec,
    AverageCostSolver, Choice, FiniteMdp, SingleArmProblem,
};
use s2sched::rng::{Concern, Streams};

fn choice(action: usize, cost: f64, next: Vec<(usize, f64)>) -> Choice {
    Choice { action, cost, next }
}

#[test]
fn replacement_problem_gain() {
    // Good state drifts to bad; in the bad state keep paying 2 or replace for 5.
    let mdp = FiniteMdp {
        choices: vec![
            vec![choice(0, 0.0, vec![(0, 0.9), (1, 0.1)])],
            vec![
                choice(0, 2.0, vec![(1, 1.0)]),
                choice(1, 5.0, vec![(0, 1.0)]),
            ],
        ],
    };
    let sol = AverageCostSolver::default().solve(&mdp).unwrap();
    assert!((sol.average_cost - 5.0 / 11.0).abs() < 1e-9);
    assert_eq!(sol.action(&mdp, 1), 1);
}

#[test]
fn greedy_matches_induction_on_larger_networks() {
    let mut rng = Streams::new(5).stream(Concern::Setup, 0);
    for _ in 0..20 {
        let n = 4 + rng.below(3);
        let p: Vec<f64> = (0..n).map(|_| rng.between(0.01, 0.5)).collect();
        let opt = two_state_backwards_induction(&p, 6).unwrap();
        let greedy =
            evaluate_two_state_policy(&p, 6, |_, d| greedy_two_state_policy(d, &p)).unwrap();
        for (d, g) in greedy.iter().enumerate() {
            assert!((g - opt.value(d as u32)).abs() < 1e-12);
        }
    }
}

#[test]
fn never_updating_is_worse() {
    let p = [0.1, 0.3, 0.45];
    let opt = two_state_backwards_induction(&p, 8).unwrap();
    let idle = evaluate_two_state_policy(&p, 8, |_, _| None).unwrap();
    assert!(idle[0b111] > opt.value(0b111) + 0.1);
}

#[test]
fn single_arm_cost_matches_monte_carlo() {
    let f = ErrorFunction::linear();
    let (m, p_e) = (10.0, 0.2);
    let sol = single_arm_rvi(&SingleArmProblem::new(f.clone(), m, p_e, 60).unwrap()).unwrap();
    let mut rng = Streams::new(9).stream(Concern::Source, 0);
    let steps = 2_000_000;
    let mut d = 0u64;
    let mut total = 0.0;
    for _ in 0..steps {
        let drift = |d: u64, u: f64| -> u64 {
            if d == 0 {
                u64::from(u < 0.5)
            } else if u < 0.5 {
                (d + 1).min(60)
            } else {
                d - 1
            }
        };
        if sol.idles_at(d) {
            total += f.eval(d).unwrap();
            d = drift(d, rng.uniform());
        } else {
            total += m + p_e * f.eval(d).unwrap();
            if rng.uniform() >= p_e {
                d = u64::from(rng.uniform() < 0.5);
            } else {
                d = drift(d, rng.uniform());
            }
        }
    }
    let mc = total / steps as f64;
    assert!(
        (mc - sol.average_cost).abs() / sol.average_cost < 0.02,
        "{mc} vs {}",
        sol.average_cost
    );
}

#[test]
fn numeric_index_matches_closed_form_small() {
    for f in [
        ErrorFunction::linear(),
        ErrorFunction::quadratic(),
        ErrorFunction::indicator(),
    ] {
        for d in 1..=6 {
            let a = whittle_random_walk(d, &f).unwrap();
            let b = numeric_whittle(d, &f, 0.0, None).unwrap();
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }
}

#[test]
fn quadratic_is_indexable_with_errors() {
    let f = ErrorFunction::quadratic();
    let top = 2.0 * whittle_random_walk(10, &f).unwrap();
    let grid: Vec<f64> = (0..=80).map(|k| top * k as f64 / 80.0).collect();
    assert!(indexability_check(&f, 0.1, &grid, 10)
        .unwrap()
        .is_certified());
}

#[test]
fn truncation_doubling_is_stable() {
    let f = ErrorFunction::quadratic();
    let a = single_arm_rvi(&SingleArmProblem::new(f.clone(), 30.0, 0.05, 40).unwrap()).unwrap();
    let b = single_arm_rvi(&SingleArmProblem::new(f, 30.0, 0.05, 80).unwrap()).unwrap();
    assert!((a.average_cost - b.average_cost).abs() < 1e-7);
    assert_eq!(a.threshold, b.threshold);
}

#[test]
fn joint_optimum_beats_heuristics() {
    let arms = [
        ArmSpec::new(ErrorFunction::linear(), 0.1, 12),
        ArmSpec::new(ErrorFunction::quadratic(), 0.3, 12),
    ];
    let opt = multi_node_optimal(&arms).unwrap();
    let own = evaluate_policy(&arms, |d| opt.policy.action(d)).unwrap();
    assert!((own - opt.average_cost).abs() < 1e-8 * opt.average_cost);
    let max_d = evaluate_policy(&arms, |d| {
        if d[0] == 0 && d[1] == 0 {
            None
        } else if d[0] >= d[1] {
            Some(0)
        } else {
            Some(1)
        }
    })
    .unwrap();
    let alternate = evaluate_policy(&arms, |d| Some(((d[0] + d[1]) % 2) as usize)).unwrap();
    assert!(opt.average_cost <= max_d + 1e-9);
    assert!(opt.average_cost <= alternate + 1e-9);
    assert!(opt.average_cost < max_d - 1e-3);
}
