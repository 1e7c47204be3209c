//! Scenario subproblems for a fixed first-stage matching, dual extraction,
//! and the optimality and feasibility cuts built from them.
//!
//! Every subproblem row whose right-hand side depends on y keeps that
//! dependence as `constant + Σ coefficient·y`, so a dual vector or a Farkas
//! ray turns into an affine function of y by weighting those pieces.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ArcId, Instance, ModelError, NodeId};
use crate::simplexlp::{self, FarkasRay, LpError, LpOutcome, LpProblem, OptimalSolution, Sense};
use crate::transform::{
    cut_to_layer_contributions, CutSense, LayerCut, NsnmIndexing, TransformError,
};

#[derive(Debug, Error)]
pub enum BendersError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error("scenario {scenario}: {source}")]
    Lp {
        scenario: usize,
        #[source]
        source: LpError,
    },
    #[error("scenario {0}: subproblem is unbounded")]
    Unbounded(usize),
    #[error("y has {got} entries, the instance has {expected} pairs")]
    YShape { expected: usize, got: usize },
    #[error("no scenario outcomes to build a cut from")]
    NoOutcomes,
}

/// What a subproblem row enforces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    /// Inflow equals outflow at a node.
    Conservation(NodeId),
    /// x_in - x_out ≤ u_in (1 - y) for one pair at a no-split no-merge node.
    PairForward { incoming: ArcId, outgoing: ArcId },
    /// x_out - x_in ≤ u_out (1 - y).
    PairBackward { incoming: ArcId, outgoing: ArcId },
    /// An incoming arc carries flow only if it is matched.
    MatchedIn(ArcId),
    /// An outgoing arc carries flow only if it is matched.
    MatchedOut(ArcId),
}

/// One scenario's flow LP at a fixed y, with the y-dependence of every
/// right-hand side kept alongside.
#[derive(Debug, Clone)]
pub struct Subproblem {
    pub scenario: usize,
    /// Variable `k` is the flow on arc `k`.
    pub lp: LpProblem,
    pub kinds: Vec<RowKind>,
    rhs_constant: Vec<f64>,
    rhs_terms: Vec<Vec<(usize, f64)>>,
}

impl Subproblem {
    /// Right-hand sides of every row at `y`.
    pub fn rhs_at(&self, y: &[f64]) -> Vec<f64> {
        self.rhs_constant
            .iter()
            .zip(&self.rhs_terms)
            .map(|(c, terms)| c + terms.iter().map(|&(k, a)| a * y[k]).sum::<f64>())
            .collect()
    }

    /// f(y; θ) for the optimal dual θ as (coefficients, constant). At the
    /// generating y it equals the optimal value.
    pub fn optimality_function(&self, solution: &OptimalSolution, y_len: usize) -> (Vec<f64>, f64) {
        let mut constant = 0.0;
        for j in 0..self.lp.num_vars() {
            let d = solution.reduced_costs[j];
            if d > 0.0 {
                constant += d * self.lp.upper[j];
            } else if d < 0.0 {
                constant += d * self.lp.lower[j];
            }
        }
        self.weight_rows(&solution.duals, constant, y_len)
    }

    /// The left side of f(y; ray) ≥ 0, which every y with a feasible
    /// subproblem satisfies.
    pub fn feasibility_function(&self, ray: &FarkasRay, y_len: usize) -> (Vec<f64>, f64) {
        let r = &ray.multipliers;
        let mut g = vec![0.0; self.lp.num_vars()];
        for (row, &ri) in self.lp.rows.iter().zip(r) {
            for &(j, a) in &row.coeffs {
                g[j] += ri * a;
            }
        }
        // Minimum of (Aᵀr)·x over the bound box is y-independent.
        let mut constant = 0.0;
        for (j, &gj) in g.iter().enumerate() {
            if gj > 0.0 {
                constant -= gj * self.lp.lower[j];
            } else if gj < 0.0 {
                constant -= gj * self.lp.upper[j];
            }
        }
        self.weight_rows(r, constant, y_len)
    }

    fn weight_rows(&self, multipliers: &[f64], mut constant: f64, y_len: usize) -> (Vec<f64>, f64) {
        let mut coefficients = vec![0.0; y_len];
        for ((&m, c), terms) in multipliers
            .iter()
            .zip(&self.rhs_constant)
            .zip(&self.rhs_terms)
        {
            if m == 0.0 {
                continue;
            }
            constant += m * c;
            for &(k, a) in terms {
                coefficients[k] += m * a;
            }
        }
        (coefficients, constant)
    }
}

/// Builds scenario `scenario`'s flow LP at `y` (flat, in
/// [`NsnmIndexing::y_index`] order; fractional or non-matching values are
/// accepted).
pub fn build_subproblem(
    instance: &Instance,
    idx: &NsnmIndexing,
    scenario: usize,
    y: &[f64],
) -> Result<Subproblem, BendersError> {
    if y.len() != idx.y_len() {
        return Err(BendersError::YShape {
            expected: idx.y_len(),
            got: y.len(),
        });
    }
    let network = &instance.network;
    let bounds = instance.scenario_bounds(scenario)?;
    let mut lp = LpProblem::new();
    for (k, arc) in network.arcs().iter().enumerate() {
        lp.add_var(bounds.lower[k], bounds.upper[k], arc.reward);
    }
    let mut kinds = Vec::new();
    let mut rhs_constant = Vec::new();
    let mut rhs_terms: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut push = |lp: &mut LpProblem,
                    kind,
                    coeffs: Vec<(usize, f64)>,
                    sense,
                    constant: f64,
                    terms: Vec<(usize, f64)>| {
        let rhs = constant + terms.iter().map(|&(k, a)| a * y[k]).sum::<f64>();
        lp.add_row(coeffs, sense, rhs);
        kinds.push(kind);
        rhs_constant.push(constant);
        rhs_terms.push(terms);
    };

    for node in 0..network.node_count() {
        let node = NodeId(node);
        if !network.has_conservation(node) {
            continue;
        }
        let coeffs: Vec<(usize, f64)> = network
            .in_arcs(node)
            .iter()
            .map(|a| (a.0, 1.0))
            .chain(network.out_arcs(node).iter().map(|a| (a.0, -1.0)))
            .collect();
        push(
            &mut lp,
            RowKind::Conservation(node),
            coeffs,
            Sense::Eq,
            0.0,
            Vec::new(),
        );
    }

    for (b, block) in idx.blocks().iter().enumerate() {
        for (i, &incoming) in block.in_arcs.iter().enumerate() {
            let u_in = bounds.upper[incoming.0];
            for (j, &outgoing) in block.out_arcs.iter().enumerate() {
                let u_out = bounds.upper[outgoing.0];
                let k = idx.y_index(b, i, j);
                push(
                    &mut lp,
                    RowKind::PairForward { incoming, outgoing },
                    vec![(incoming.0, 1.0), (outgoing.0, -1.0)],
                    Sense::Le,
                    u_in,
                    vec![(k, -u_in)],
                );
                push(
                    &mut lp,
                    RowKind::PairBackward { incoming, outgoing },
                    vec![(outgoing.0, 1.0), (incoming.0, -1.0)],
                    Sense::Le,
                    u_out,
                    vec![(k, -u_out)],
                );
            }
        }
        for (i, &incoming) in block.in_arcs.iter().enumerate() {
            let u_in = bounds.upper[incoming.0];
            let terms = (0..block.out_arcs.len())
                .map(|j| (idx.y_index(b, i, j), u_in))
                .collect();
            push(
                &mut lp,
                RowKind::MatchedIn(incoming),
                vec![(incoming.0, 1.0)],
                Sense::Le,
                0.0,
                terms,
            );
        }
        for (j, &outgoing) in block.out_arcs.iter().enumerate() {
            let u_out = bounds.upper[outgoing.0];
            let terms = (0..block.in_arcs.len())
                .map(|i| (idx.y_index(b, i, j), u_out))
                .collect();
            push(
                &mut lp,
                RowKind::MatchedOut(outgoing),
                vec![(outgoing.0, 1.0)],
                Sense::Le,
                0.0,
                terms,
            );
        }
    }

    Ok(Subproblem {
        scenario,
        lp,
        kinds,
        rhs_constant,
        rhs_terms,
    })
}

/// A solved scenario subproblem.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub subproblem: Subproblem,
    pub outcome: LpOutcome,
}

impl ScenarioOutcome {
    pub fn scenario(&self) -> usize {
        self.subproblem.scenario
    }
}

/// Builds and solves every scenario with positive probability at `y`, in
/// parallel on the current rayon pool. Results are in scenario order.
pub fn solve_scenarios(
    instance: &Instance,
    idx: &NsnmIndexing,
    y: &[f64],
) -> Result<Vec<ScenarioOutcome>, BendersError> {
    let active: Vec<usize> = (0..instance.scenarios.len())
        .filter(|&s| instance.scenarios.scenarios[s].probability > 0.0)
        .collect();
    active
        .par_iter()
        .map(|&s| {
            let subproblem = build_subproblem(instance, idx, s, y)?;
            let outcome = simplexlp::solve(&subproblem.lp).map_err(|source| BendersError::Lp {
                scenario: s,
                source,
            })?;
            if let LpOutcome::Unbounded(_) = outcome {
                return Err(BendersError::Unbounded(s));
            }
            Ok(ScenarioOutcome {
                subproblem,
                outcome,
            })
        })
        .collect()
}

/// Where a cut came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub scenarios: Vec<usize>,
    pub iteration: usize,
}

/// A Benders cut in y-space: `z ≤ a·y + constant` (optimality) or
/// `a·y + constant ≥ 0` (feasibility).
#[derive(Debug, Clone, PartialEq)]
pub struct Cut {
    pub kind: CutSense,
    pub coefficients: Vec<f64>,
    pub constant: f64,
    pub provenance: Provenance,
}

impl Cut {
    /// a·y + constant.
    pub fn evaluate(&self, y: &[f64]) -> f64 {
        self.coefficients
            .iter()
            .zip(y)
            .map(|(a, v)| a * v)
            .sum::<f64>()
            + self.constant
    }

    pub fn to_layer_cut(&self, idx: &NsnmIndexing) -> Result<LayerCut, TransformError> {
        cut_to_layer_contributions(&self.coefficients, self.constant, self.kind, idx)
    }

    /// Identity used for pool deduplication: sense plus every number rounded
    /// to 1e-9.
    pub fn key(&self) -> (bool, Vec<i64>) {
        let round = |v: f64| (v * 1e9).round() as i64;
        let mut k: Vec<i64> = self.coefficients.iter().map(|&v| round(v)).collect();
        k.push(round(self.constant));
        (self.kind == CutSense::Optimality, k)
    }
}

/// Turns scenario outcomes into one cut. The lowest-index infeasible
/// scenario yields a feasibility cut scaled so its largest absolute number
/// is 1; otherwise the probability-weighted optimality cut is returned.
pub fn make_cut(
    instance: &Instance,
    idx: &NsnmIndexing,
    outcomes: &[ScenarioOutcome],
) -> Result<Cut, BendersError> {
    if outcomes.is_empty() {
        return Err(BendersError::NoOutcomes);
    }
    let y_len = idx.y_len();
    if let Some(o) = outcomes
        .iter()
        .filter(|o| o.outcome.is_infeasible())
        .min_by_key(|o| o.scenario())
    {
        let LpOutcome::Infeasible(ray) = &o.outcome else {
            unreachable!()
        };
        let (mut coefficients, mut constant) = o.subproblem.feasibility_function(ray, y_len);
        let scale = coefficients
            .iter()
            .fold(constant.abs(), |m, v| m.max(v.abs()));
        if scale > 0.0 {
            coefficients.iter_mut().for_each(|v| *v /= scale);
            constant /= scale;
        }
        return Ok(Cut {
            kind: CutSense::Feasibility,
            coefficients,
            constant,
            provenance: Provenance {
                scenarios: vec![o.scenario()],
                iteration: 0,
            },
        });
    }
    let mut coefficients = vec![0.0; y_len];
    let mut constant = 0.0;
    let mut scenarios = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        let s = o.scenario();
        let LpOutcome::Optimal(solution) = &o.outcome else {
            return Err(BendersError::Unbounded(s));
        };
        let p = instance.scenarios.scenarios[s].probability;
        let (a, c) = o.subproblem.optimality_function(solution, y_len);
        for (acc, v) in coefficients.iter_mut().zip(a) {
            *acc += p * v;
        }
        constant += p * c;
        scenarios.push(s);
    }
    Ok(Cut {
        kind: CutSense::Optimality,
        coefficients,
        constant,
        provenance: Provenance {
            scenarios,
            iteration: 0,
        },
    })
}

/// Expected second-stage value at one y.
#[derive(Debug, Clone, PartialEq)]
pub enum Evaluation {
    /// Probability-weighted value plus per-scenario values and flows (in
    /// scenario order, zero-probability scenarios omitted).
    Feasible {
        value: f64,
        scenario_values: Vec<(usize, f64)>,
        flows: Vec<(usize, Vec<f64>)>,
    },
    /// The first scenario with no feasible flow.
    Infeasible { scenario: usize },
}

pub fn evaluate_outcomes(instance: &Instance, outcomes: &[ScenarioOutcome]) -> Evaluation {
    let mut value = 0.0;
    let mut scenario_values = Vec::with_capacity(outcomes.len());
    let mut flows = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        match &o.outcome {
            LpOutcome::Optimal(sol) => {
                value += instance.scenarios.scenarios[o.scenario()].probability * sol.objective;
                scenario_values.push((o.scenario(), sol.objective));
                flows.push((o.scenario(), sol.x.clone()));
            }
            _ => {
                return Evaluation::Infeasible {
                    scenario: o.scenario(),
                }
            }
        }
    }
    Evaluation::Feasible {
        value,
        scenario_values,
        flows,
    }
}

/// Arc classification by whether the tail has in-arcs and the head has
/// out-arcs. The dual rows differ per class in which node prices appear.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArcClass {
    /// Tail has no in-arcs, head has out-arcs.
    Entry,
    /// Tail has in-arcs, head has no out-arcs.
    Exit,
    /// Both ends are inner nodes.
    Inner,
    /// Tail has no in-arcs and head has no out-arcs.
    Direct,
}

pub fn arc_class(instance: &Instance, arc: ArcId) -> ArcClass {
    let network = &instance.network;
    let a = network.arc(arc);
    match (
        network.in_arcs(a.tail).is_empty(),
        network.out_arcs(a.head).is_empty(),
    ) {
        (true, false) => ArcClass::Entry,
        (false, true) => ArcClass::Exit,
        (false, false) => ArcClass::Inner,
        (true, true) => ArcClass::Direct,
    }
}

/// The dual of scenario `scenario`'s subproblem at `y`, written out
/// variable by variable from the network, as a maximization of -f(y; θ).
/// Free node prices are split into two nonnegative parts. Used to check the
/// duals read off the primal solve, never on the solve path.
pub fn assemble_dual(
    instance: &Instance,
    idx: &NsnmIndexing,
    scenario: usize,
    y: &[f64],
) -> Result<LpProblem, BendersError> {
    if y.len() != idx.y_len() {
        return Err(BendersError::YShape {
            expected: idx.y_len(),
            got: y.len(),
        });
    }
    let network = &instance.network;
    let bounds = instance.scenario_bounds(scenario)?;
    let mut dual = LpProblem::new();
    // One column per arc of the primal: Σ (coefficient × price) ≥ reward.
    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); network.arc_count()];

    for node in 0..network.node_count() {
        let node = NodeId(node);
        if !network.has_conservation(node) {
            continue;
        }
        let plus = dual.add_var(0.0, f64::INFINITY, 0.0);
        let minus = dual.add_var(0.0, f64::INFINITY, 0.0);
        for &a in network.in_arcs(node) {
            columns[a.0].extend([(plus, 1.0), (minus, -1.0)]);
        }
        for &a in network.out_arcs(node) {
            columns[a.0].extend([(plus, -1.0), (minus, 1.0)]);
        }
    }
    for k in 0..network.arc_count() {
        let lower_price = dual.add_var(0.0, f64::INFINITY, bounds.lower[k]);
        columns[k].push((lower_price, -1.0));
        if bounds.upper[k].is_finite() {
            let upper_price = dual.add_var(0.0, f64::INFINITY, -bounds.upper[k]);
            columns[k].push((upper_price, 1.0));
        }
    }
    for (b, block) in idx.blocks().iter().enumerate() {
        for (i, &incoming) in block.in_arcs.iter().enumerate() {
            let u_in = bounds.upper[incoming.0];
            for (j, &outgoing) in block.out_arcs.iter().enumerate() {
                let u_out = bounds.upper[outgoing.0];
                let yk = y[idx.y_index(b, i, j)];
                let forward = dual.add_var(0.0, f64::INFINITY, -u_in * (1.0 - yk));
                columns[incoming.0].push((forward, 1.0));
                columns[outgoing.0].push((forward, -1.0));
                let backward = dual.add_var(0.0, f64::INFINITY, -u_out * (1.0 - yk));
                columns[outgoing.0].push((backward, 1.0));
                columns[incoming.0].push((backward, -1.0));
            }
        }
        for (i, &incoming) in block.in_arcs.iter().enumerate() {
            let matched: f64 = (0..block.out_arcs.len())
                .map(|j| y[idx.y_index(b, i, j)])
                .sum();
            let v = dual.add_var(0.0, f64::INFINITY, -bounds.upper[incoming.0] * matched);
            columns[incoming.0].push((v, 1.0));
        }
        for (j, &outgoing) in block.out_arcs.iter().enumerate() {
            let matched: f64 = (0..block.in_arcs.len())
                .map(|i| y[idx.y_index(b, i, j)])
                .sum();
            let v = dual.add_var(0.0, f64::INFINITY, -bounds.upper[outgoing.0] * matched);
            columns[outgoing.0].push((v, 1.0));
        }
    }
    for (k, column) in columns.into_iter().enumerate() {
        dual.add_row(column, Sense::Ge, network.arcs()[k].reward);
    }
    Ok(dual)
}
