use s2sched::domain::{ErrorFunction, RandomWalkSource, SourceModel, TwoStateSource};
use s2sched::mdp::{multi_node_optimal, ArmSpec};
use s2sched::policies::{PolicyKind, PolicySpec};
use s2sched::sim::{run, ContentionModel, NodeConfig, SimConfig};

fn walk(p_e: f64) -> NodeConfig {
    NodeConfig {
        source: SourceModel::RandomWalk(RandomWalkSource::symmetric()),
        error: ErrorFunction::linear(),
        p_e,
    }
}

fn two_state(p: f64) -> NodeConfig {
    NodeConfig {
        source: SourceModel::TwoState(TwoStateSource::new(p).unwrap()),
        error: ErrorFunction::indicator(),
        p_e: 0.0,
    }
}

#[test]
fn same_config_same_report() {
    for kind in PolicyKind::ALL {
        let nodes = if kind == PolicyKind::OptimalTwoState || kind == PolicyKind::SeparateAoi {
            vec![two_state(0.2), two_state(0.4), two_state(0.1)]
        } else {
            vec![walk(0.1), walk(0.2), walk(0.0), walk(0.3)]
        };
        let spec = if kind == PolicyKind::Etsu {
            PolicySpec::etsu(0.5)
        } else {
            PolicySpec::new(kind)
        };
        let cfg = SimConfig::new(nodes, 5_000, spec, 77);
        assert_eq!(run(&cfg).unwrap(), run(&cfg).unwrap(), "{kind}");
    }
}

#[test]
fn dead_channels_give_the_never_update_path_for_every_policy() {
    let nodes: Vec<NodeConfig> = (0..5).map(|_| walk(1.0)).collect();
    let mut errors = Vec::new();
    for spec in [
        PolicySpec::new(PolicyKind::CentralizedWhittle),
        PolicySpec::new(PolicyKind::AoiErrorIndex),
        PolicySpec::new(PolicyKind::RoundRobin),
        PolicySpec::new(PolicyKind::Random),
    ] {
        let r = run(&SimConfig::new(nodes.clone(), 20_000, spec, 5)).unwrap();
        assert_eq!(r.successes, 0);
        errors.push(r.avg_weighted_error);
    }
    assert!(errors.windows(2).all(|w| w[0] == w[1]), "{errors:?}");
}

#[test]
fn homogeneous_index_policy_equals_max_difference() {
    let nodes: Vec<NodeConfig> = (0..6).map(|_| walk(0.15)).collect();
    let a = run(&SimConfig::new(
        nodes.clone(),
        50_000,
        PolicySpec::new(PolicyKind::CentralizedWhittle),
        8,
    ))
    .unwrap();
    let b = run(&SimConfig::new(
        nodes,
        50_000,
        PolicySpec::new(PolicyKind::MaxDifference),
        8,
    ))
    .unwrap();
    assert_eq!(a.avg_weighted_error, b.avg_weighted_error);
    assert_eq!(a.successes, b.successes);
}

#[test]
fn slots_are_classified_once() {
    let nodes: Vec<NodeConfig> = (0..8).map(|i| walk(0.05 * i as f64)).collect();
    let r = run(&SimConfig::new(
        nodes.clone(),
        30_000,
        PolicySpec::new(PolicyKind::CentralizedWhittle),
        2,
    ))
    .unwrap();
    assert_eq!(
        r.successes + r.channel_failures + r.collisions + r.idles,
        r.slots
    );
    let mut cfg = SimConfig::new(nodes, 30_000, PolicySpec::etsu(0.4), 2);
    cfg.contention = ContentionModel::Slotted;
    let r = run(&cfg).unwrap();
    assert_eq!(
        r.successes + r.channel_failures + r.collisions + r.idles,
        r.slots
    );
    assert!(r.collisions > 0);
}

#[test]
fn mini_slot_time_accounting() {
    let nodes: Vec<NodeConfig> = (0..20).map(|_| walk(0.0)).collect();
    let r = run(&SimConfig::new(nodes, 20_000, PolicySpec::etsu(0.2), 4)).unwrap();
    assert_eq!(r.slots, 20_000);
    assert!(r.idle_minislots > 0);
    let transmissions = r.successes + r.channel_failures + r.collisions;
    // Idle minislots cost a tenth of a slot each; every slot is a
    // transmission, an empty round or ten idle minislots.
    let covered = transmissions as f64 + r.idles as f64 + r.idle_minislots as f64 / 10.0;
    assert!(
        (covered - r.elapsed).abs() <= 1.0 + 1e-6,
        "{covered} vs {}",
        r.elapsed
    );
}

#[test]
fn two_node_index_policy_is_near_optimal() {
    let nodes = vec![walk(0.0), walk(0.0)];
    let arms: Vec<ArmSpec> = nodes
        .iter()
        .map(|c| ArmSpec::new(c.error.clone(), c.p_e, 20))
        .collect();
    let opt = multi_node_optimal(&arms).unwrap().average_cost;
    let r = run(&SimConfig::new(
        nodes,
        1_000_000,
        PolicySpec::new(PolicyKind::CentralizedWhittle),
        6,
    ))
    .unwrap();
    let rel = (r.avg_weighted_error - opt).abs() / opt;
    assert!(rel < 0.02, "{} vs {opt}", r.avg_weighted_error);
}

#[test]
fn genie_two_state_beats_separate() {
    let nodes = vec![
        two_state(0.1),
        two_state(0.3),
        two_state(0.45),
        two_state(0.2),
    ];
    let a = run(&SimConfig::new(
        nodes.clone(),
        100_000,
        PolicySpec::new(PolicyKind::OptimalTwoState),
        1,
    ))
    .unwrap();
    let b = run(&SimConfig::new(
        nodes,
        100_000,
        PolicySpec::new(PolicyKind::SeparateAoi),
        1,
    ))
    .unwrap();
    assert!(a.avg_weighted_error < b.avg_weighted_error);
}
