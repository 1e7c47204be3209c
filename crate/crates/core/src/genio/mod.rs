//! Random instance generation and the JSON instance format.
//!
//! The generator lays the base nodes out as four layers: supply, two
//! interior layers, demand. Each pair of nodes in consecutive layers is
//! joined with probability `density`, and a node left without an in- or
//! out-arc gets one to a uniformly drawn node of the neighbouring layer.
//! The source feeds every supply node, every demand node drains to the
//! sink, and the artificial source reaches every demand node.
//!
//! Draws come from ChaCha8 seeded with the given seed, in this order:
//! layer arcs (row-major over tails, then heads), repair arcs, supplies,
//! capacities and rewards per arc in arc order, the no-split no-merge
//! sample, then demands scenario by scenario. Integer quantities are
//! uniform on their closed ranges; rewards are uniform reals rounded to
//! hundredths.

mod format;

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{Arc, Instance, Network, NodeId, NodeRole, Scenario, ScenarioSet};

pub use format::{from_json, read_instance, to_json, write_instance, FormatError, SCHEMA_VERSION};

pub const SUPPLY_RANGE: (u64, u64) = (100, 600);
pub const CAPACITY_RANGE: (u64, u64) = (100, 300);
pub const DEMAND_RANGE: (u64, u64) = (100, 200);
pub const SOURCE_REWARD_RANGE: (f64, f64) = (5.0, 10.0);
pub const ARTIFICIAL_REWARD_RANGE: (f64, f64) = (-10.0, -5.0);
pub const INNER_REWARD_RANGE: (f64, f64) = (-2.0, 2.0);
/// Smallest base network the layer layout supports with every role present.
pub const MIN_NODES: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum GenerateError {
    #[error("at least {MIN_NODES} base nodes are needed, got {0}")]
    TooFewNodes(usize),
    #[error("density must lie in (0, 1], got {0}")]
    Density(f64),
    #[error("at least one scenario is needed")]
    NoScenarios,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    /// Base nodes, excluding source, sink and artificial source.
    pub nodes: usize,
    pub scenarios: usize,
    pub seed: u64,
    pub density: f64,
}

impl GeneratorParams {
    pub fn new(nodes: usize, scenarios: usize, seed: u64) -> Self {
        GeneratorParams {
            nodes,
            scenarios,
            seed,
            density: 0.4,
        }
    }
}

/// Supply, demand and no-split no-merge counts for `n` base nodes: 10%,
/// 30% and 50% rounded down, with at least one supply and one demand node.
pub fn role_counts(n: usize) -> (usize, usize, usize) {
    ((n / 10).max(1), (3 * n / 10).max(1), n / 2)
}

pub fn generate(params: &GeneratorParams) -> Result<Instance, GenerateError> {
    let n = params.nodes;
    if n < MIN_NODES {
        return Err(GenerateError::TooFewNodes(n));
    }
    if !(params.density > 0.0 && params.density <= 1.0) {
        return Err(GenerateError::Density(params.density));
    }
    if params.scenarios == 0 {
        return Err(GenerateError::NoScenarios);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (n_supply, n_demand, n_nsnm) = role_counts(n);
    let n_interior = n - n_supply - n_demand;
    let first_interior = n_interior.div_ceil(2);
    let layers: [Vec<usize>; 4] = [
        (0..n_supply).collect(),
        (n_supply..n_supply + first_interior).collect(),
        (n_supply + first_interior..n_supply + n_interior).collect(),
        (n_supply + n_interior..n).collect(),
    ];
    let (source, artificial, sink) = (n, n + 1, n + 2);
    let mut roles = vec![NodeRole::Interior; n + 3];
    for &v in &layers[0] {
        roles[v] = NodeRole::Supply;
    }
    for &v in &layers[3] {
        roles[v] = NodeRole::Demand;
    }
    roles[source] = NodeRole::Source;
    roles[artificial] = NodeRole::Artificial;
    roles[sink] = NodeRole::Sink;

    let mut base: Vec<(usize, usize)> = Vec::new();
    for k in 0..3 {
        for &u in &layers[k] {
            for &v in &layers[k + 1] {
                if rng.gen_bool(params.density) {
                    base.push((u, v));
                }
            }
        }
    }
    for k in 0..3 {
        for &u in &layers[k] {
            if !base.iter().any(|&(t, _)| t == u) {
                let v = layers[k + 1][rng.gen_range(0..layers[k + 1].len())];
                base.push((u, v));
            }
        }
        for &v in &layers[k + 1] {
            if !base.iter().any(|&(_, h)| h == v) {
                let u = layers[k][rng.gen_range(0..layers[k].len())];
                base.push((u, v));
            }
        }
    }
    base.sort_unstable();

    let uniform = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| {
        (rng.gen_range(lo..=hi) * 100.0).round() / 100.0
    };
    let mut arcs = Vec::new();
    for &v in &layers[0] {
        let supply = rng.gen_range(SUPPLY_RANGE.0..=SUPPLY_RANGE.1);
        let reward = uniform(&mut rng, SOURCE_REWARD_RANGE);
        arcs.push(arc(source, v, Some(supply), reward));
    }
    for &(u, v) in &base {
        let capacity = rng.gen_range(CAPACITY_RANGE.0..=CAPACITY_RANGE.1);
        let reward = uniform(&mut rng, INNER_REWARD_RANGE);
        arcs.push(arc(u, v, Some(capacity), reward));
    }
    for &v in &layers[3] {
        // Overridden by every scenario's demand.
        arcs.push(arc(v, sink, Some(DEMAND_RANGE.1), 0.0));
    }
    for &v in &layers[3] {
        let reward = uniform(&mut rng, ARTIFICIAL_REWARD_RANGE);
        arcs.push(arc(artificial, v, None, reward));
    }

    let eligible: Vec<usize> = layers[1]
        .iter()
        .chain(&layers[2])
        .chain(&layers[3])
        .copied()
        .collect();
    let mut nsnm: Vec<NodeId> = sample(&mut rng, eligible.len(), n_nsnm.min(eligible.len()))
        .into_iter()
        .map(|k| NodeId(eligible[k]))
        .collect();
    nsnm.sort_unstable();

    let probability = 1.0 / params.scenarios as f64;
    let scenarios = (0..params.scenarios)
        .map(|_| {
            let demand: BTreeMap<NodeId, u64> = layers[3]
                .iter()
                .map(|&v| (NodeId(v), rng.gen_range(DEMAND_RANGE.0..=DEMAND_RANGE.1)))
                .collect();
            Scenario {
                probability,
                demand,
            }
        })
        .collect();

    let network = Network::new(roles, arcs, nsnm).expect("generated arcs reference existing nodes");
    Ok(Instance::with_computed_gamma(
        network,
        ScenarioSet { scenarios },
    ))
}

fn arc(tail: usize, head: usize, upper: Option<u64>, reward: f64) -> Arc {
    Arc {
        tail: NodeId(tail),
        head: NodeId(head),
        lower: 0,
        upper,
        reward,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate;

    #[test]
    fn forty_nodes_have_the_documented_role_counts() {
        let inst = generate(&GeneratorParams::new(40, 3, 1)).unwrap();
        let net = &inst.network;
        assert_eq!(net.nodes_with_role(NodeRole::Supply).count(), 4);
        assert_eq!(net.nodes_with_role(NodeRole::Demand).count(), 12);
        assert_eq!(net.nsnm_nodes().len(), 20);
        assert_eq!(validate(&inst), vec![]);
    }

    #[test]
    fn same_seed_same_instance() {
        let p = GeneratorParams::new(12, 3, 99);
        assert_eq!(generate(&p).unwrap(), generate(&p).unwrap());
        let other = GeneratorParams { seed: 100, ..p };
        assert_ne!(
            generate(&other).unwrap(),
            generate(&GeneratorParams::new(12, 3, 99)).unwrap()
        );
    }

    #[test]
    fn parameters_are_checked() {
        assert_eq!(
            generate(&GeneratorParams::new(5, 1, 0)),
            Err(GenerateError::TooFewNodes(5))
        );
        let p = GeneratorParams {
            density: 0.0,
            ..GeneratorParams::new(10, 1, 0)
        };
        assert_eq!(generate(&p), Err(GenerateError::Density(0.0)));
        assert_eq!(
            generate(&GeneratorParams::new(10, 0, 0)),
            Err(GenerateError::NoScenarios)
        );
    }

    #[test]
    fn small_networks_keep_every_role() {
        for n in MIN_NODES..12 {
            for seed in 0..20 {
                let inst = generate(&GeneratorParams::new(n, 2, seed)).unwrap();
                assert_eq!(validate(&inst), vec![], "n = {n}, seed = {seed}");
                assert!(inst.network.nodes_with_role(NodeRole::Supply).count() >= 1);
            }
        }
    }

    #[test]
    fn nsnm_nodes_are_interior_or_demand() {
        for seed in 0..20 {
            let inst = generate(&GeneratorParams::new(20, 1, seed)).unwrap();
            for &q in inst.network.nsnm_nodes() {
                assert!(matches!(
                    inst.network.role(q),
                    NodeRole::Interior | NodeRole::Demand
                ));
            }
        }
    }
}
