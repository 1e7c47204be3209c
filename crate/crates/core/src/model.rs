//! Instance types: the augmented flow network, the no-split no-merge node
//! set, demand scenarios and the a priori bound on the second-stage value.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArcId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for ArcId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    Source,
    Sink,
    /// Backup source covering demand shortfalls at a penalty.
    Artificial,
    Supply,
    Demand,
    Interior,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arc {
    pub tail: NodeId,
    pub head: NodeId,
    pub lower: u64,
    /// `None` marks an uncapacitated arc (only the artificial source uses it).
    pub upper: Option<u64>,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    roles: Vec<NodeRole>,
    arcs: Vec<Arc>,
    nsnm: Vec<NodeId>,
    in_arcs: Vec<Vec<ArcId>>,
    out_arcs: Vec<Vec<ArcId>>,
    is_nsnm: Vec<bool>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("arc {arc} references node {node}, but the network has {count} nodes")]
    DanglingArc {
        arc: ArcId,
        node: NodeId,
        count: usize,
    },
    #[error("no-split no-merge node {0} does not exist")]
    UnknownNsnmNode(NodeId),
    #[error("scenario index {index} out of range ({count} scenarios)")]
    ScenarioOutOfRange { index: usize, count: usize },
}

impl Network {
    /// Builds a network and its adjacency lists. Only referential integrity
    /// is enforced here; the structural rules are reported by [`validate`].
    pub fn new(
        roles: Vec<NodeRole>,
        arcs: Vec<Arc>,
        nsnm: Vec<NodeId>,
    ) -> Result<Self, ModelError> {
        let n = roles.len();
        let mut in_arcs = vec![Vec::new(); n];
        let mut out_arcs = vec![Vec::new(); n];
        for (k, arc) in arcs.iter().enumerate() {
            for node in [arc.tail, arc.head] {
                if node.0 >= n {
                    return Err(ModelError::DanglingArc {
                        arc: ArcId(k),
                        node,
                        count: n,
                    });
                }
            }
            out_arcs[arc.tail.0].push(ArcId(k));
            in_arcs[arc.head.0].push(ArcId(k));
        }
        let mut nsnm = nsnm;
        nsnm.sort();
        nsnm.dedup();
        let mut is_nsnm = vec![false; n];
        for &q in &nsnm {
            if q.0 >= n {
                return Err(ModelError::UnknownNsnmNode(q));
            }
            is_nsnm[q.0] = true;
        }
        Ok(Network {
            roles,
            arcs,
            nsnm,
            in_arcs,
            out_arcs,
            is_nsnm,
        })
    }

    pub fn node_count(&self) -> usize {
        self.roles.len()
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn roles(&self) -> &[NodeRole] {
        &self.roles
    }

    pub fn role(&self, node: NodeId) -> NodeRole {
        self.roles[node.0]
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn arc(&self, id: ArcId) -> &Arc {
        &self.arcs[id.0]
    }

    /// No-split no-merge nodes in ascending id order.
    pub fn nsnm_nodes(&self) -> &[NodeId] {
        &self.nsnm
    }

    pub fn is_nsnm(&self, node: NodeId) -> bool {
        self.is_nsnm[node.0]
    }

    /// Incoming arcs in ascending id order.
    pub fn in_arcs(&self, node: NodeId) -> &[ArcId] {
        &self.in_arcs[node.0]
    }

    /// Outgoing arcs in ascending id order.
    pub fn out_arcs(&self, node: NodeId) -> &[ArcId] {
        &self.out_arcs[node.0]
    }

    pub fn nodes_with_role(&self, role: NodeRole) -> impl Iterator<Item = NodeId> + '_ {
        self.roles
            .iter()
            .enumerate()
            .filter(move |(_, r)| **r == role)
            .map(|(k, _)| NodeId(k))
    }

    fn unique_role(&self, role: NodeRole) -> Option<NodeId> {
        let mut it = self.nodes_with_role(role);
        let first = it.next();
        if it.next().is_some() {
            None
        } else {
            first
        }
    }

    pub fn source(&self) -> Option<NodeId> {
        self.unique_role(NodeRole::Source)
    }

    pub fn sink(&self) -> Option<NodeId> {
        self.unique_role(NodeRole::Sink)
    }

    pub fn artificial(&self) -> Option<NodeId> {
        self.unique_role(NodeRole::Artificial)
    }

    /// Nodes that carry a flow-conservation row: everything except the
    /// source, the sink and the artificial source.
    pub fn has_conservation(&self, node: NodeId) -> bool {
        !matches!(
            self.roles[node.0],
            NodeRole::Source | NodeRole::Sink | NodeRole::Artificial
        )
    }

    /// The arc from a demand node into the sink, if any.
    pub fn demand_arc(&self, node: NodeId) -> Option<ArcId> {
        self.out_arcs(node)
            .iter()
            .copied()
            .find(|&a| self.role(self.arc(a).head) == NodeRole::Sink)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub probability: f64,
    pub demand: BTreeMap<NodeId, u64>,
}

impl Scenario {
    pub fn total_demand(&self) -> u64 {
        self.demand.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScenarioSet {
    pub scenarios: Vec<Scenario>,
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Scenario> {
        self.scenarios.get(index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub network: Network,
    pub scenarios: ScenarioSet,
    pub gamma: f64,
}

/// Effective real-valued arc bounds under one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Instance {
    /// Builds an instance with Γ computed from the data.
    pub fn with_computed_gamma(network: Network, scenarios: ScenarioSet) -> Self {
        let mut instance = Instance {
            network,
            scenarios,
            gamma: 1.0,
        };
        instance.gamma = compute_gamma(&instance);
        instance
    }

    pub fn scenario_bounds(&self, index: usize) -> Result<ArcBounds, ModelError> {
        let scenario = self
            .scenarios
            .get(index)
            .ok_or(ModelError::ScenarioOutOfRange {
                index,
                count: self.scenarios.len(),
            })?;
        Ok(bounds_under(&self.network, scenario))
    }
}

fn bounds_under(network: &Network, scenario: &Scenario) -> ArcBounds {
    let total = scenario.total_demand() as f64;
    let mut lower = Vec::with_capacity(network.arc_count());
    let mut upper = Vec::with_capacity(network.arc_count());
    for arc in network.arcs() {
        let tail_role = network.role(arc.tail);
        let head_role = network.role(arc.head);
        let (lo, hi) = if head_role == NodeRole::Sink && network.role(arc.tail) == NodeRole::Demand
        {
            let d = scenario.demand.get(&arc.tail).copied().unwrap_or(0) as f64;
            (d, d)
        } else if tail_role == NodeRole::Artificial {
            let cap = arc.upper.map_or(total, |u| (u as f64).min(total));
            (arc.lower as f64, cap)
        } else {
            (
                arc.lower as f64,
                arc.upper.map_or(f64::INFINITY, |u| u as f64),
            )
        };
        lower.push(lo);
        upper.push(hi);
    }
    ArcBounds { lower, upper }
}

/// Returns a copy of the network with the scenario's demands written onto the
/// sink arcs and the artificial arcs capped at the scenario's total demand.
pub fn apply_scenario(
    network: &Network,
    index: usize,
    scenarios: &ScenarioSet,
) -> Result<Network, ModelError> {
    let scenario = scenarios.get(index).ok_or(ModelError::ScenarioOutOfRange {
        index,
        count: scenarios.len(),
    })?;
    let total = scenario.total_demand();
    let mut out = network.clone();
    for arc in out.arcs.iter_mut() {
        if network.role(arc.head) == NodeRole::Sink && network.role(arc.tail) == NodeRole::Demand {
            let d = scenario.demand.get(&arc.tail).copied().unwrap_or(0);
            arc.lower = d;
            arc.upper = Some(d);
        } else if network.role(arc.tail) == NodeRole::Artificial {
            arc.upper = Some(arc.upper.map_or(total, |u| u.min(total)));
        }
    }
    Ok(out)
}

/// Γ = max over scenarios of the larger of Σ max(0, r)·u and Σ max(0, -r)·u,
/// floored at 1.
pub fn compute_gamma(instance: &Instance) -> f64 {
    let mut gamma = 0.0f64;
    for scenario in &instance.scenarios.scenarios {
        let bounds = bounds_under(&instance.network, scenario);
        let mut pos = 0.0;
        let mut neg = 0.0;
        for (arc, &u) in instance.network.arcs().iter().zip(&bounds.upper) {
            if arc.reward > 0.0 {
                pos += arc.reward * u;
            } else if arc.reward < 0.0 {
                neg += -arc.reward * u;
            }
        }
        gamma = gamma.max(pos).max(neg);
    }
    if gamma > 0.0 && gamma.is_finite() {
        gamma
    } else if gamma.is_finite() {
        1.0
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

/// Lists every structural problem with the instance. An empty list means the
/// instance is valid.
pub fn validate(instance: &Instance) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |location: String, message: String| out.push(Violation { location, message });
    let net = &instance.network;

    for (role, name) in [
        (NodeRole::Source, "source"),
        (NodeRole::Sink, "sink"),
        (NodeRole::Artificial, "artificial source"),
    ] {
        let count = net.nodes_with_role(role).count();
        if count != 1 {
            push(
                "Network.nodes".into(),
                format!("expected exactly one {name}, found {count}"),
            );
        }
    }

    for (k, arc) in net.arcs().iter().enumerate() {
        let loc = format!("Network.arcs[{k}] ({} -> {})", arc.tail, arc.head);
        let tail = net.role(arc.tail);
        let head = net.role(arc.head);
        if head == NodeRole::Source {
            push(loc.clone(), "arc enters the source".into());
        }
        if tail == NodeRole::Sink {
            push(loc.clone(), "arc leaves the sink".into());
        }
        if tail == NodeRole::Source && head != NodeRole::Supply {
            push(loc.clone(), "source arcs must end at supply nodes".into());
        }
        if tail == NodeRole::Artificial && head != NodeRole::Demand {
            push(
                loc.clone(),
                "artificial-source arcs must end at demand nodes".into(),
            );
        }
        if head == NodeRole::Artificial {
            push(loc.clone(), "arc enters the artificial source".into());
        }
        if arc.tail == arc.head {
            push(loc.clone(), "self-loop".into());
        }
        if !arc.reward.is_finite() {
            push(loc.clone(), "reward is not finite".into());
        }
        if arc.upper.is_none() && tail != NodeRole::Artificial {
            push(
                loc.clone(),
                "only artificial-source arcs may be uncapacitated".into(),
            );
        }
    }

    for q in net.nodes_with_role(NodeRole::Demand) {
        if net.demand_arc(q).is_none() {
            push(
                format!("Network.nodes[{}]", q.0),
                "demand node has no arc to the sink".into(),
            );
        }
    }

    for &q in net.nsnm_nodes() {
        let loc = format!("Network.nsnm[{}]", q.0);
        if matches!(
            net.role(q),
            NodeRole::Source | NodeRole::Sink | NodeRole::Artificial
        ) {
            push(
                loc.clone(),
                "source, sink and artificial source cannot be no-split no-merge".into(),
            );
        }
        if net.in_arcs(q).is_empty() || net.out_arcs(q).is_empty() {
            push(
                loc,
                "no-split no-merge node needs incoming and outgoing arcs".into(),
            );
        }
    }

    let scen = &instance.scenarios;
    if scen.is_empty() {
        push("ScenarioSet".into(), "no scenarios".into());
    }
    let total: f64 = scen.scenarios.iter().map(|s| s.probability).sum();
    if !scen.is_empty() && (total - 1.0).abs() > 1e-9 {
        push(
            "ScenarioSet".into(),
            format!("probabilities sum to {total}, expected 1"),
        );
    }
    for (k, s) in scen.scenarios.iter().enumerate() {
        let loc = format!("ScenarioSet[{k}]");
        if !(0.0..=1.0).contains(&s.probability) || s.probability.is_nan() {
            push(
                loc.clone(),
                format!("probability {} outside [0, 1]", s.probability),
            );
        }
        for q in net.nodes_with_role(NodeRole::Demand) {
            if !s.demand.contains_key(&q) {
                push(loc.clone(), format!("no demand given for demand node {q}"));
            }
        }
        for q in s.demand.keys() {
            if q.0 >= net.node_count() || net.role(*q) != NodeRole::Demand {
                push(loc.clone(), format!("demand keyed on non-demand node {q}"));
            }
        }
        let bounds = bounds_under(net, s);
        for (a, (lo, hi)) in bounds.lower.iter().zip(&bounds.upper).enumerate() {
            if lo > hi {
                push(
                    format!("{loc} arc {a}"),
                    format!("lower bound {lo} exceeds upper bound {hi}"),
                );
            }
        }
    }

    if !(instance.gamma.is_finite() && instance.gamma > 0.0) {
        push(
            "Instance.gamma".into(),
            format!("gamma {} must be positive and finite", instance.gamma),
        );
    } else if !scen.is_empty() {
        let needed = compute_gamma(instance);
        if instance.gamma + 1e-9 * needed.max(1.0) < needed {
            push(
                "Instance.gamma".into(),
                format!(
                    "gamma {} is below the reward bound {needed}",
                    instance.gamma
                ),
            );
        }
    }
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// s -> a -> q -> t, s0 -> q, with q a no-split no-merge demand node fed
    /// from two sides.
    pub(crate) fn five_node() -> Instance {
        use NodeRole::*;
        let roles = vec![Source, Supply, Demand, Sink, Artificial];
        let arc = |t: usize, h: usize, u: Option<u64>, r: f64| Arc {
            tail: NodeId(t),
            head: NodeId(h),
            lower: 0,
            upper: u,
            reward: r,
        };
        let arcs = vec![
            arc(0, 1, Some(300), 8.0),
            arc(1, 2, Some(200), 1.0),
            arc(2, 3, Some(0), 0.0),
            arc(4, 2, None, -7.0),
        ];
        let network = Network::new(roles, arcs, vec![NodeId(2)]).unwrap();
        let mut demand = BTreeMap::new();
        demand.insert(NodeId(2), 150);
        let scenarios = ScenarioSet {
            scenarios: vec![Scenario {
                probability: 1.0,
                demand,
            }],
        };
        Instance::with_computed_gamma(network, scenarios)
    }

    #[test]
    fn well_formed_instance_is_valid() {
        assert_eq!(validate(&five_node()), vec![]);
    }

    #[test]
    fn probability_mass_must_be_one() {
        let mut inst = five_node();
        inst.scenarios.scenarios[0].probability = 0.9;
        let v = validate(&inst);
        assert_eq!(v.len(), 1);
        assert!(v[0].location.starts_with("ScenarioSet"));
    }

    #[test]
    fn arc_into_source_is_flagged() {
        let inst = five_node();
        let mut arcs = inst.network.arcs().to_vec();
        arcs.push(Arc {
            tail: NodeId(1),
            head: NodeId(0),
            lower: 0,
            upper: Some(5),
            reward: 0.0,
        });
        let network = Network::new(inst.network.roles().to_vec(), arcs, vec![NodeId(2)]).unwrap();
        let inst = Instance { network, ..inst };
        let v = validate(&inst);
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].location.contains("arcs[4]"));
    }

    #[test]
    fn scenario_fixes_demand_arcs_and_caps_artificial_arcs() {
        let inst = five_node();
        let applied = apply_scenario(&inst.network, 0, &inst.scenarios).unwrap();
        let arc = applied.arc(ArcId(2));
        assert_eq!((arc.lower, arc.upper), (150, Some(150)));
        assert_eq!(applied.arc(ArcId(3)).upper, Some(150));
        assert_eq!(applied.arc(ArcId(1)).upper, Some(200));
        let twice = apply_scenario(&applied, 0, &inst.scenarios).unwrap();
        assert_eq!(twice, applied);
        assert!(apply_scenario(&inst.network, 1, &inst.scenarios).is_err());
    }

    #[test]
    fn gamma_takes_the_larger_side() {
        use NodeRole::*;
        let roles = vec![Source, Supply, Interior, Demand, Sink, Artificial];
        let mk = |t, h, r| Arc {
            tail: NodeId(t),
            head: NodeId(h),
            lower: 0,
            upper: Some(10),
            reward: r,
        };
        let arcs = vec![mk(0, 1, 5.0), mk(1, 2, -2.0), mk(2, 3, 3.0)];
        let network = Network::new(roles, arcs, vec![]).unwrap();
        let scenarios = ScenarioSet {
            scenarios: vec![Scenario {
                probability: 1.0,
                demand: BTreeMap::from([(NodeId(3), 4)]),
            }],
        };
        let inst = Instance::with_computed_gamma(network, scenarios);
        assert_eq!(inst.gamma, 80.0);
    }

    #[test]
    fn gamma_floor_for_zero_rewards() {
        let mut inst = five_node();
        let arcs: Vec<Arc> = inst
            .network
            .arcs()
            .iter()
            .map(|a| Arc {
                reward: 0.0,
                ..a.clone()
            })
            .collect();
        inst.network = Network::new(inst.network.roles().to_vec(), arcs, vec![NodeId(2)]).unwrap();
        assert_eq!(compute_gamma(&inst), 1.0);
    }

    #[test]
    fn gamma_is_max_over_scenarios() {
        // Only the artificial arc carries scenario-dependent capacity.
        let mut inst = five_node();
        let arcs: Vec<Arc> = inst
            .network
            .arcs()
            .iter()
            .enumerate()
            .map(|(k, a)| Arc {
                reward: if k == 3 { -7.0 } else { 0.0 },
                ..a.clone()
            })
            .collect();
        inst.network = Network::new(inst.network.roles().to_vec(), arcs, vec![NodeId(2)]).unwrap();
        let mut s2 = inst.scenarios.scenarios[0].clone();
        s2.demand.insert(NodeId(2), 190);
        inst.scenarios.scenarios[0].probability = 0.5;
        s2.probability = 0.5;
        inst.scenarios.scenarios.push(s2);
        // 7 * 150 versus 7 * 190.
        assert_eq!(compute_gamma(&inst), 1330.0);
    }
}
