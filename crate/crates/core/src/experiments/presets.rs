//! Named experiments at desk scale.

use crate::domain::{ErrorFunction, RandomWalkSource, SourceModel, TwoStateSource};
use crate::indices::IndexTable;
use crate::mdp::{evaluate_policy, multi_node_optimal, ArmSpec};
use crate::policies::{PolicyKind, PolicySpec};
use crate::rng::{derive_seed, Concern, Streams};
use crate::sim::{ContentionModel, NodeConfig, SimConfig};

use super::{add_summaries, report_rows, run_jobs, ExperimentError, Job, Row};

fn check_reps(reps: u32, horizon: u64) -> Result<(), ExperimentError> {
    if reps == 0 || horizon == 0 {
        return Err(ExperimentError::Invalid(
            "replications and horizon must be positive".into(),
        ));
    }
    Ok(())
}

fn walk_node(error: ErrorFunction, p_e: f64) -> NodeConfig {
    NodeConfig {
        source: SourceModel::RandomWalk(RandomWalkSource::symmetric()),
        error,
        p_e,
    }
}

/// Two-state network: genie-aided optimal S² against the separate
/// sample-at-change + AoI-index baseline, sweeping the lower end of the
/// flip-probability range.
#[derive(Debug, Clone, PartialEq)]
pub struct Fig2Params {
    pub p_min_grid: Vec<f64>,
    pub n: usize,
    pub horizon: u64,
    pub replications: u32,
    pub seed: u64,
}

impl Default for Fig2Params {
    fn default() -> Self {
        Self {
            p_min_grid: vec![0.05, 0.1, 0.2, 0.3, 0.4],
            n: 10,
            horizon: 100_000,
            replications: 20,
            seed: 1,
        }
    }
}

pub fn fig2(params: &Fig2Params) -> Result<Vec<Row>, ExperimentError> {
    check_reps(params.replications, params.horizon)?;
    if params.n == 0 || params.p_min_grid.iter().any(|&p| !(p > 0.0 && p < 0.5)) {
        return Err(ExperimentError::Invalid(
            "need n >= 1 and p_min grid within (0, 0.5)".into(),
        ));
    }
    let mut jobs = Vec::new();
    for (g, &p_min) in params.p_min_grid.iter().enumerate() {
        for rep in 0..params.replications {
            let seed = derive_seed(params.seed, rep as u64);
            let mut setup = Streams::new(seed).stream(Concern::Setup, 1 + g);
            let nodes: Vec<NodeConfig> = (0..params.n)
                .map(|_| {
                    let p = setup.between(p_min, 0.5);
                    Ok(NodeConfig {
                        source: SourceModel::TwoState(TwoStateSource::new(p)?),
                        error: ErrorFunction::indicator(),
                        p_e: 0.0,
                    })
                })
                .collect::<Result<_, crate::domain::DomainError>>()
                .map_err(|e| ExperimentError::Invalid(e.to_string()))?;
            for kind in [PolicyKind::OptimalTwoState, PolicyKind::SeparateAoi] {
                jobs.push(Job {
                    sweep_value: p_min,
                    policy: kind.name().to_string(),
                    replication: rep,
                    config: SimConfig::new(
                        nodes.clone(),
                        params.horizon,
                        PolicySpec::new(kind),
                        seed,
                    ),
                });
            }
        }
    }
    let reports = run_jobs(&jobs)?;
    let mut rows = report_rows("fig2", params.seed, &jobs, &reports);
    add_summaries(&mut rows);
    Ok(rows)
}

/// Two heterogeneous random-walk nodes (`δ₁ = d`, `δ₂ = eᵈ − 1` with
/// `p_e,2` fixed): the centralized index policy, simulated, against the
/// joint optimum of the truncated chain. Also reports the exact cost of the
/// index policy on that chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Fig3aParams {
    pub pe1_grid: Vec<f64>,
    pub pe2: f64,
    pub horizon: u64,
    pub replications: u32,
    pub d_max: u64,
    pub seed: u64,
}

impl Default for Fig3aParams {
    fn default() -> Self {
        Self {
            pe1_grid: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
            pe2: 0.9,
            horizon: 1_000_000,
            replications: 1,
            d_max: 20,
            seed: 1,
        }
    }
}

fn fig3a_nodes(pe1: f64, pe2: f64) -> Vec<NodeConfig> {
    vec![
        walk_node(ErrorFunction::linear(), pe1),
        walk_node(ErrorFunction::exponential(), pe2),
    ]
}

/// Optimum and exact index-policy cost of the truncated two-node chain.
pub fn fig3a_oracles(pe1: f64, pe2: f64, d_max: u64) -> Result<(f64, f64), ExperimentError> {
    let nodes = fig3a_nodes(pe1, pe2);
    let arms: Vec<ArmSpec> = nodes
        .iter()
        .map(|c| ArmSpec::new(c.error.clone(), c.p_e, d_max))
        .collect();
    let opt = multi_node_optimal(&arms)?;
    let mut tables = Vec::with_capacity(nodes.len());
    for c in &nodes {
        let mut t = IndexTable::new(c.error.clone());
        let row = (0..=d_max)
            .map(|d| t.index_unreliable(d, c.p_e))
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| ExperimentError::Invalid(e.to_string()))?;
        tables.push(row);
    }
    let index_cost = evaluate_policy(&arms, |d| {
        let mut best: Option<(usize, f64)> = None;
        for (n, &x) in d.iter().enumerate() {
            let v = tables[n][x as usize];
            if v > 0.0 && best.is_none_or(|(_, b)| v > b) {
                best = Some((n, v));
            }
        }
        best.map(|(n, _)| n)
    })?;
    Ok((opt.average_cost, index_cost))
}

pub fn fig3a(params: &Fig3aParams) -> Result<Vec<Row>, ExperimentError> {
    check_reps(params.replications, params.horizon)?;
    if params
        .pe1_grid
        .iter()
        .chain([&params.pe2])
        .any(|&p| !(0.0..1.0).contains(&p))
    {
        return Err(ExperimentError::Invalid(
            "p_e values must lie in [0, 1)".into(),
        ));
    }
    let mut jobs = Vec::new();
    for &pe1 in &params.pe1_grid {
        for rep in 0..params.replications {
            let seed = derive_seed(params.seed, rep as u64);
            jobs.push(Job {
                sweep_value: pe1,
                policy: PolicyKind::CentralizedWhittle.name().to_string(),
                replication: rep,
                config: SimConfig::new(
                    fig3a_nodes(pe1, params.pe2),
                    params.horizon,
                    PolicySpec::new(PolicyKind::CentralizedWhittle),
                    seed,
                ),
            });
        }
    }
    let reports = run_jobs(&jobs)?;
    let mut rows: Vec<Row> = report_rows("fig3a", params.seed, &jobs, &reports)
        .into_iter()
        .filter(|r| r.metric == "avg_weighted_error")
        .collect();
    for &pe1 in &params.pe1_grid {
        let (opt, idx) = fig3a_oracles(pe1, params.pe2, params.d_max)?;
        for (policy, value) in [("mdp_optimal", opt), ("index_truncated_exact", idx)] {
            rows.push(Row {
                preset: "fig3a".into(),
                seed: params.seed,
                replication: "0".into(),
                sweep_value: pe1,
                policy: policy.into(),
                metric: "avg_weighted_error".into(),
                value,
            });
        }
    }
    add_summaries(&mut rows);
    Ok(rows)
}

/// Linear-error random walks with `p_e,n ~ U[0, 0.3]` and `ν = 5/N`: ETSU
/// against the centralized index policy and the AoI-index baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct Fig3bParams {
    pub n_grid: Vec<usize>,
    pub horizon: u64,
    pub replications: u32,
    pub slot_ratio: f64,
    pub contention: ContentionModel,
    /// Also run ETSU under ideal contention (policy `etsu_ideal`).
    pub include_ideal: bool,
    pub seed: u64,
}

impl Default for Fig3bParams {
    fn default() -> Self {
        Self {
            n_grid: vec![10, 30, 50, 100],
            horizon: 100_000,
            replications: 20,
            slot_ratio: 10.0,
            contention: ContentionModel::MiniSlot,
            include_ideal: false,
            seed: 1,
        }
    }
}

pub fn fig3b(params: &Fig3bParams) -> Result<Vec<Row>, ExperimentError> {
    check_reps(params.replications, params.horizon)?;
    if params.n_grid.iter().any(|&n| n < 5) {
        return Err(ExperimentError::Invalid(
            "N grid entries must be at least 5 (nu = 5/N)".into(),
        ));
    }
    let mut jobs = Vec::new();
    for (g, &n) in params.n_grid.iter().enumerate() {
        for rep in 0..params.replications {
            let seed = derive_seed(params.seed, rep as u64);
            let mut setup = Streams::new(seed).stream(Concern::Setup, 1 + g);
            let nodes: Vec<NodeConfig> = (0..n)
                .map(|_| walk_node(ErrorFunction::linear(), setup.between(0.0, 0.3)))
                .collect();
            let nu = 5.0 / n as f64;
            let mut variants = vec![
                ("etsu", PolicySpec::etsu(nu), params.contention),
                (
                    "centralized_whittle",
                    PolicySpec::new(PolicyKind::CentralizedWhittle),
                    params.contention,
                ),
                (
                    "aoi_error_index",
                    PolicySpec::new(PolicyKind::AoiErrorIndex),
                    params.contention,
                ),
            ];
            if params.include_ideal {
                variants.push(("etsu_ideal", PolicySpec::etsu(nu), ContentionModel::Ideal));
            }
            for (label, spec, contention) in variants {
                let mut config = SimConfig::new(nodes.clone(), params.horizon, spec, seed);
                config.contention = contention;
                config.slot_ratio = params.slot_ratio;
                jobs.push(Job {
                    sweep_value: n as f64,
                    policy: label.to_string(),
                    replication: rep,
                    config,
                });
            }
        }
    }
    let reports = run_jobs(&jobs)?;
    let mut rows = report_rows("fig3b", params.seed, &jobs, &reports);
    add_summaries(&mut rows);
    Ok(rows)
}

/// Synthetic field: nodes on a square grid track spatially varying random
/// walks. Nodes far from the centre change more slowly (larger stay
/// probability), weigh less and see worse channels.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthFieldParams {
    pub n: usize,
    pub horizon: u64,
    pub replications: u32,
    pub nu: f64,
    pub seed: u64,
}

impl Default for SynthFieldParams {
    fn default() -> Self {
        Self {
            n: 64,
            horizon: 100_000,
            replications: 20,
            nu: 0.1,
            seed: 1,
        }
    }
}

pub fn synth_field_nodes(n: usize, seed: u64) -> Result<Vec<NodeConfig>, ExperimentError> {
    let side = (n as f64).sqrt().ceil() as usize;
    let centre = (side as f64 - 1.0) / 2.0;
    let max_r = (2.0 * centre * centre).sqrt().max(1.0);
    let mut setup = Streams::new(seed).stream(Concern::Setup, 0);
    (0..n)
        .map(|i| {
            let (x, y) = ((i % side) as f64, (i / side) as f64);
            let r = ((x - centre).powi(2) + (y - centre).powi(2)).sqrt() / max_r;
            let jitter = setup.between(-0.05, 0.05);
            let q_stay = (0.6 * r + jitter).clamp(0.0, 0.9);
            let move_p = (1.0 - q_stay) / 2.0;
            let walk = RandomWalkSource::new(move_p, 1.0 - q_stay - move_p, q_stay)
                .map_err(|e| ExperimentError::Invalid(e.to_string()))?;
            let error = ErrorFunction::linear()
                .with_weight(2.0 - r)
                .map_err(|e| ExperimentError::Invalid(e.to_string()))?;
            Ok(NodeConfig {
                source: SourceModel::RandomWalk(walk),
                error,
                p_e: (0.3 * r).min(0.3),
            })
        })
        .collect()
}

pub fn synth_field(params: &SynthFieldParams) -> Result<Vec<Row>, ExperimentError> {
    check_reps(params.replications, params.horizon)?;
    if params.n == 0
        || !(params.nu > 0.0 && params.nu <= 1.0)
        || params.nu * (params.n as f64) < 1.0
    {
        return Err(ExperimentError::Invalid(
            "need n >= 1, nu in (0, 1] and nu n >= 1".into(),
        ));
    }
    let mut jobs = Vec::new();
    for rep in 0..params.replications {
        let seed = derive_seed(params.seed, rep as u64);
        let nodes = synth_field_nodes(params.n, seed)?;
        let specs = [
            PolicySpec::new(PolicyKind::CentralizedWhittle),
            PolicySpec::etsu(params.nu),
            PolicySpec::new(PolicyKind::AoiErrorIndex),
            PolicySpec::new(PolicyKind::MaxDifference),
            PolicySpec::new(PolicyKind::RoundRobin),
        ];
        for spec in specs {
            jobs.push(Job {
                sweep_value: params.n as f64,
                policy: spec.kind.name().to_string(),
                replication: rep,
                config: SimConfig::new(nodes.clone(), params.horizon, spec, seed),
            });
        }
    }
    let reports = run_jobs(&jobs)?;
    let mut rows = report_rows("synth-field", params.seed, &jobs, &reports);
    add_summaries(&mut rows);
    Ok(rows)
}
