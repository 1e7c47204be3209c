//! Solver output shared by the decomposition engine and the enumeration
//! oracle.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Optimal,
    TimeLimit,
    Infeasible,
}

/// One scenario's flows at the reported matching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFlow {
    pub scenario: usize,
    pub value: f64,
    /// Flow per arc, indexed by arc id.
    pub flows: Vec<f64>,
}

/// Which diagram produced a progress event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Restricted,
    Relaxed,
}

/// One cut-loop iteration as seen from outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressEvent {
    pub iteration: usize,
    pub phase: Phase,
    /// Search-tree node being processed, counted from 0.
    pub node: usize,
    /// Longest-path value of the current diagram.
    pub bound: f64,
    /// Best known feasible value, if any.
    pub incumbent: Option<f64>,
    /// Best proven upper bound on the optimum at this point.
    pub upper_bound: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub nodes_explored: usize,
    pub optimality_cuts: usize,
    pub feasibility_cuts: usize,
    pub lp_solves: usize,
    pub max_width: usize,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub termination: Termination,
    /// Expected second-stage value at `w`.
    pub value: Option<f64>,
    /// Compact matching, one entry per incoming arc of each no-split
    /// no-merge node.
    pub w: Option<Vec<u32>>,
    /// Flat pair indicators in the same node order.
    pub y: Option<Vec<f64>>,
    pub scenarios: Vec<ScenarioFlow>,
    /// Best proven upper bound; equals `value` on optimal termination.
    pub upper_bound: Option<f64>,
    pub stats: SolveStats,
    pub trajectory: Vec<ProgressEvent>,
}

impl SolveReport {
    pub fn infeasible(stats: SolveStats, trajectory: Vec<ProgressEvent>) -> Self {
        SolveReport {
            termination: Termination::Infeasible,
            value: None,
            w: None,
            y: None,
            scenarios: Vec::new(),
            upper_bound: None,
            stats,
            trajectory,
        }
    }

    /// The trajectory as CSV with a header line.
    pub fn trajectory_csv(&self) -> String {
        let mut out = String::from("iteration,phase,node,bound,incumbent,upper_bound\n");
        for e in &self.trajectory {
            let phase = match e.phase {
                Phase::Restricted => "restricted",
                Phase::Relaxed => "relaxed",
            };
            let incumbent = e.incumbent.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.iteration, phase, e.node, e.bound, incumbent, e.upper_bound
            ));
        }
        out
    }
}
