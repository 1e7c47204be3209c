//! Ground truth by brute force: try every matching, solve every scenario's
//! flow LP, keep the best expected value.
//!
//! The flow LP here is written for an integral matching directly (matched
//! pairs carry equal flow, unmatched arcs carry none) rather than through the
//! big-M rows of the decomposition, so the two solvers share no modelling
//! code beyond the instance types and the LP kernel.

use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{Instance, NodeId};
use crate::report::{ScenarioFlow, SolveReport, SolveStats, Termination};
use crate::simplexlp::{self, LpError, LpOutcome, LpProblem, Sense};
use crate::transform::{node_matchings, w_to_y, NsnmIndexing, WAssignment};

pub const DEFAULT_CAP: u128 = 1_000_000;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("{count} matchings exceed the enumeration cap of {cap}")]
    CapExceeded { count: u128, cap: u128 },
    #[error("scenario {scenario}: {source}")]
    Lp {
        scenario: usize,
        #[source]
        source: LpError,
    },
    #[error("scenario {0}: flow LP is unbounded")]
    Unbounded(usize),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone)]
pub struct OracleConfig {
    pub cap: u128,
    /// Worker threads; 0 uses the rayon default.
    pub parallelism: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            cap: DEFAULT_CAP,
            parallelism: 0,
        }
    }
}

/// Every matching of every node, as flat compact vectors in lexicographic
/// order (first node most significant).
pub fn enumerate_matchings(idx: &NsnmIndexing, cap: u128) -> Result<Matchings, OracleError> {
    let count = idx.total_matching_count();
    if count > cap {
        return Err(OracleError::CapExceeded { count, cap });
    }
    let per_node: Vec<Vec<Vec<u32>>> = idx
        .blocks()
        .iter()
        .map(|b| node_matchings(b.in_degree(), b.out_degree()))
        .collect();
    Ok(Matchings {
        cursor: vec![0; per_node.len()],
        per_node,
        done: false,
    })
}

/// Odometer over the per-node matching lists.
pub struct Matchings {
    per_node: Vec<Vec<Vec<u32>>>,
    cursor: Vec<usize>,
    done: bool,
}

impl Iterator for Matchings {
    type Item = Vec<u32>;

    fn next(&mut self) -> Option<Vec<u32>> {
        if self.done {
            return None;
        }
        let flat: Vec<u32> = self
            .per_node
            .iter()
            .zip(&self.cursor)
            .flat_map(|(m, &c)| m[c].iter().copied())
            .collect();
        let mut k = self.cursor.len();
        loop {
            if k == 0 {
                self.done = true;
                break;
            }
            k -= 1;
            self.cursor[k] += 1;
            if self.cursor[k] < self.per_node[k].len() {
                break;
            }
            self.cursor[k] = 0;
        }
        Some(flat)
    }
}

/// Flow LP of one scenario under a fixed matching, or `None` when an arc
/// with a positive lower bound is forced empty.
pub fn matching_flow_lp(
    instance: &Instance,
    idx: &NsnmIndexing,
    scenario: usize,
    w: &[u32],
) -> Option<LpProblem> {
    let network = &instance.network;
    let bounds = instance
        .scenario_bounds(scenario)
        .expect("scenario index in range");
    let mut closed = vec![false; network.arc_count()];
    let mut pairs = Vec::new();
    let mut offset = 0;
    for block in idx.blocks() {
        let mut out_used = vec![false; block.out_arcs.len()];
        for (i, &incoming) in block.in_arcs.iter().enumerate() {
            match w[offset + i] {
                0 => closed[incoming.0] = true,
                j => {
                    let outgoing = block.out_arcs[j as usize - 1];
                    out_used[j as usize - 1] = true;
                    pairs.push((incoming.0, outgoing.0));
                }
            }
        }
        for (j, &outgoing) in block.out_arcs.iter().enumerate() {
            if !out_used[j] {
                closed[outgoing.0] = true;
            }
        }
        offset += block.in_arcs.len();
    }
    let mut lp = LpProblem::new();
    for (k, arc) in network.arcs().iter().enumerate() {
        let (lo, hi) = (bounds.lower[k], bounds.upper[k]);
        if closed[k] {
            if lo > 0.0 {
                return None;
            }
            lp.add_var(0.0, 0.0, arc.reward);
        } else {
            lp.add_var(lo, hi, arc.reward);
        }
    }
    for node in 0..network.node_count() {
        let node = NodeId(node);
        if network.has_conservation(node) {
            let row = network
                .in_arcs(node)
                .iter()
                .map(|a| (a.0, 1.0))
                .chain(network.out_arcs(node).iter().map(|a| (a.0, -1.0)));
            lp.add_row(row, Sense::Eq, 0.0);
        }
    }
    for (a, b) in pairs {
        lp.add_row([(a, 1.0), (b, -1.0)], Sense::Eq, 0.0);
    }
    Some(lp)
}

/// Expected value of one matching with its per-scenario solutions, or
/// `None` if some positive-probability scenario has no feasible flow.
pub fn evaluate_matching(
    instance: &Instance,
    idx: &NsnmIndexing,
    w: &[u32],
) -> Result<Option<(f64, Vec<ScenarioFlow>)>, OracleError> {
    let mut value = 0.0;
    let mut scenarios = Vec::new();
    for (s, scenario) in instance.scenarios.scenarios.iter().enumerate() {
        if scenario.probability <= 0.0 {
            continue;
        }
        let Some(lp) = matching_flow_lp(instance, idx, s, w) else {
            return Ok(None);
        };
        match simplexlp::solve(&lp).map_err(|source| OracleError::Lp {
            scenario: s,
            source,
        })? {
            LpOutcome::Optimal(sol) => {
                value += scenario.probability * sol.objective;
                scenarios.push(ScenarioFlow {
                    scenario: s,
                    value: sol.objective,
                    flows: sol.x,
                });
            }
            LpOutcome::Infeasible(_) => return Ok(None),
            LpOutcome::Unbounded(_) => return Err(OracleError::Unbounded(s)),
        }
    }
    Ok(Some((value, scenarios)))
}

/// Maximizes the expected value over every matching. Ties go to the
/// lexicographically smallest matching.
pub fn solve_exhaustive(
    instance: &Instance,
    config: &OracleConfig,
) -> Result<SolveReport, OracleError> {
    let start = Instant::now();
    let idx = NsnmIndexing::new(&instance.network);
    let all: Vec<Vec<u32>> = enumerate_matchings(&idx, config.cap)?.collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| OracleError::ThreadPool(e.to_string()))?;
    let results: Vec<Option<(f64, Vec<ScenarioFlow>)>> = pool.install(|| {
        all.par_iter()
            .map(|w| evaluate_matching(instance, &idx, w))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let active = instance
        .scenarios
        .scenarios
        .iter()
        .filter(|s| s.probability > 0.0)
        .count();
    let stats = SolveStats {
        iterations: all.len(),
        lp_solves: all.len() * active,
        wall_time_secs: start.elapsed().as_secs_f64(),
        ..SolveStats::default()
    };
    let mut best: Option<(usize, f64)> = None;
    for (k, r) in results.iter().enumerate() {
        if let Some((v, _)) = r {
            if best.is_none_or(|(_, b)| *v > b) {
                best = Some((k, *v));
            }
        }
    }
    let Some((k, value)) = best else {
        return Ok(SolveReport::infeasible(stats, Vec::new()));
    };
    let w = all[k].clone();
    let y = w_to_y(
        &WAssignment::from_flat(&w, &idx).expect("enumerated matching"),
        &idx,
    )
    .expect("enumerated matching")
    .flat();
    let scenarios = results[k]
        .as_ref()
        .map(|(_, s)| s.clone())
        .unwrap_or_default();
    Ok(SolveReport {
        termination: Termination::Optimal,
        value: Some(value),
        w: Some(w),
        y: Some(y),
        scenarios,
        upper_bound: Some(value),
        stats,
        trajectory: Vec::new(),
    })
}
