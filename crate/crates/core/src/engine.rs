//! Branch-and-bound over compact matchings with decision-diagram masters.
//!
//! Each search node fixes a prefix of the compact vector. A restricted
//! diagram under that prefix and the global cut pool supplies feasible
//! matchings and refines itself with the cuts they generate; if it was not
//! exact, a relaxed diagram is refined the same way to obtain a bound, and
//! the node is split along the relaxed diagram's last exact layer.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::benders::{self, BendersError, Cut, Evaluation, ScenarioOutcome};
use crate::diagram::{Diagram, DiagramError, MasterBuilder};
use crate::model::{validate, Instance};
use crate::report::{Phase, ProgressEvent, ScenarioFlow, SolveReport, SolveStats, Termination};
use crate::transform::{
    is_matching, w_flat_to_y_values, CutSense, LayerCut, NsnmIndexing, TransformError,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Benders(#[from] BendersError),
    #[error(transparent)]
    Diagram(#[from] DiagramError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineTolerances {
    /// A node is closed once its bound is within `absolute + relative·|v*|`
    /// of the incumbent value v*.
    pub absolute: f64,
    pub relative: f64,
    /// A relaxed cut loop stops after `stall_iterations` consecutive
    /// optimality cuts that improve the bound by less than
    /// `stall_improvement`.
    pub stall_improvement: f64,
    pub stall_iterations: usize,
}

impl Default for EngineTolerances {
    fn default() -> Self {
        EngineTolerances {
            absolute: 1e-7,
            relative: 1e-12,
            stall_improvement: 1e-6,
            stall_iterations: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Maximum diagram width; `None` compiles exact diagrams.
    pub width_limit: Option<usize>,
    pub tolerances: EngineTolerances,
    pub time_limit: Option<Duration>,
    /// Worker threads for scenario solves; 0 uses the rayon default.
    pub parallelism: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            width_limit: Some(64),
            tolerances: EngineTolerances::default(),
            time_limit: None,
            parallelism: 0,
        }
    }
}

/// A search node: a fixed prefix and the bound it was queued with.
#[derive(Debug, Clone)]
struct Pending {
    prefix: Vec<u32>,
    bound: f64,
    order: usize,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    /// Larger bound first, then earlier insertion.
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then(other.order.cmp(&self.order))
    }
}

struct Incumbent {
    value: f64,
    w: Vec<u32>,
    scenarios: Vec<ScenarioFlow>,
}

/// How a cut loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LoopEnd {
    /// No point of the diagram survived the cuts.
    Emptied,
    /// The bound fell to the incumbent.
    Dominated,
    /// The longest path's bound matched its true value.
    Solved,
    /// A repeated cut or too little progress.
    Stalled,
    TimeUp,
}

struct Search<'a> {
    instance: &'a Instance,
    idx: NsnmIndexing,
    config: &'a SolverConfig,
    pool: rayon::ThreadPool,
    start: Instant,
    cuts: Vec<LayerCut>,
    cut_keys: HashSet<(bool, Vec<i64>)>,
    incumbent: Option<Incumbent>,
    queue: BinaryHeap<Pending>,
    inserted: usize,
    stats: SolveStats,
    trajectory: Vec<ProgressEvent>,
    observer: &'a mut dyn FnMut(&ProgressEvent),
    node: usize,
}

/// Solves the instance to optimality (or until the time limit).
pub fn solve(instance: &Instance, config: &SolverConfig) -> Result<SolveReport, EngineError> {
    solve_observed(instance, config, &mut |_| {})
}

/// Like [`solve`], reporting every cut-loop iteration to `observer`.
pub fn solve_observed(
    instance: &Instance,
    config: &SolverConfig,
    observer: &mut dyn FnMut(&ProgressEvent),
) -> Result<SolveReport, EngineError> {
    let violations = validate(instance);
    if !violations.is_empty() {
        let text: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(EngineError::InvalidInstance(text.join("; ")));
    }
    if config.width_limit == Some(0) {
        return Err(EngineError::InvalidConfig(
            "width limit must be at least 1".into(),
        ));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| EngineError::ThreadPool(e.to_string()))?;
    let mut search = Search {
        instance,
        idx: NsnmIndexing::new(&instance.network),
        config,
        pool,
        start: Instant::now(),
        cuts: Vec::new(),
        cut_keys: HashSet::new(),
        incumbent: None,
        queue: BinaryHeap::new(),
        inserted: 0,
        stats: SolveStats::default(),
        trajectory: Vec::new(),
        observer,
        node: 0,
    };
    search.run()
}

impl Search<'_> {
    fn run(&mut self) -> Result<SolveReport, EngineError> {
        self.push(Vec::new(), self.instance.gamma);
        let mut timed_out = false;
        while let Some(pending) = self.queue.pop() {
            if self.time_up() {
                self.queue.push(pending);
                timed_out = true;
                break;
            }
            if self.closes(pending.bound) {
                continue;
            }
            self.stats.nodes_explored += 1;
            if self.process(&pending)? == LoopEnd::TimeUp {
                // The node is unfinished; its bound still counts.
                self.queue.push(pending);
                timed_out = true;
                break;
            }
            self.node += 1;
        }
        self.stats.wall_time_secs = self.start.elapsed().as_secs_f64();
        let stats = self.stats.clone();
        let trajectory = std::mem::take(&mut self.trajectory);
        let open_bound = self
            .queue
            .iter()
            .map(|p| p.bound)
            .fold(f64::NEG_INFINITY, f64::max);
        let Some(best) = self.incumbent.take() else {
            if timed_out {
                let mut report = SolveReport::infeasible(stats, trajectory);
                report.termination = Termination::TimeLimit;
                report.upper_bound = open_bound.is_finite().then_some(open_bound);
                return Ok(report);
            }
            return Ok(SolveReport::infeasible(stats, trajectory));
        };
        let y = w_flat_to_y_values(&best.w, &self.idx);
        let (termination, upper) = if timed_out {
            (Termination::TimeLimit, open_bound.max(best.value))
        } else {
            (Termination::Optimal, best.value)
        };
        Ok(SolveReport {
            termination,
            value: Some(best.value),
            w: Some(best.w),
            y: Some(y),
            scenarios: best.scenarios,
            upper_bound: Some(upper),
            stats,
            trajectory,
        })
    }

    fn time_up(&self) -> bool {
        self.config
            .time_limit
            .is_some_and(|limit| self.start.elapsed() >= limit)
    }

    /// Whether a bound cannot beat the incumbent by more than the tolerance.
    fn closes(&self, bound: f64) -> bool {
        match &self.incumbent {
            Some(inc) => {
                let tol = &self.config.tolerances;
                bound <= inc.value + tol.absolute + tol.relative * inc.value.abs()
            }
            None => false,
        }
    }

    fn push(&mut self, prefix: Vec<u32>, bound: f64) {
        self.queue.push(Pending {
            prefix,
            bound,
            order: self.inserted,
        });
        self.inserted += 1;
    }

    fn builder(&self, prefix: &[u32]) -> MasterBuilder<'_> {
        MasterBuilder::new(&self.idx, self.instance.gamma)
            .with_prefix(prefix)
            .with_cuts(self.cuts.iter())
    }

    fn process(&mut self, pending: &Pending) -> Result<LoopEnd, EngineError> {
        if pending.prefix.len() == self.idx.w_len() {
            // A single point: evaluating it settles the node.
            self.evaluate(&pending.prefix)?;
            return Ok(LoopEnd::Solved);
        }

        let restricted = match self.config.width_limit {
            Some(width) => self.builder(&pending.prefix).restricted(width),
            None => self.builder(&pending.prefix).exact(),
        };
        let (restricted, end, _) = self.cut_loop(restricted, Phase::Restricted, pending.bound)?;
        if end == LoopEnd::TimeUp {
            return Ok(end);
        }
        let settled = restricted.exact
            && matches!(end, LoopEnd::Emptied | LoopEnd::Dominated | LoopEnd::Solved);
        if settled {
            return Ok(end);
        }

        let width = self
            .config
            .width_limit
            .expect("an unlimited width always gives an exact restricted diagram");
        let relaxed = self.builder(&pending.prefix).relaxed(width);
        let (relaxed, end, bound) = self.cut_loop(relaxed, Phase::Relaxed, pending.bound)?;
        match end {
            LoopEnd::TimeUp | LoopEnd::Emptied | LoopEnd::Dominated => return Ok(end),
            LoopEnd::Solved if relaxed.exact => return Ok(end),
            _ => {}
        }
        self.branch(&relaxed, &pending.prefix, bound);
        Ok(end)
    }

    /// Queues one child per node of the relaxed diagram's last exact layer,
    /// or one per label of the first free layer if that layer is the prefix
    /// itself.
    fn branch(&mut self, relaxed: &Diagram, prefix: &[u32], parent_bound: f64) {
        let depth = relaxed.last_exact_layer.min(self.idx.w_len());
        let top = relaxed.top_values();
        let bottom = relaxed.bottom_values();
        let mut children: Vec<(Vec<u32>, f64)> = Vec::new();
        if depth > prefix.len() {
            for u in 0..relaxed.nodes[depth].len() {
                let labels = relaxed.longest_prefix(depth, u);
                let child: Vec<u32> = labels.iter().filter_map(|l| l.value()).collect();
                children.push((child, top[depth][u] + bottom[depth][u]));
            }
        } else {
            let layer = prefix.len();
            let mut seen = HashSet::new();
            for arc in &relaxed.arcs[layer] {
                let Some(v) = arc.label.value() else { continue };
                if seen.insert(v) {
                    let bound = top[layer][arc.tail] + arc.weight + bottom[layer + 1][arc.head];
                    let mut child = prefix.to_vec();
                    child.push(v);
                    // Several arcs may carry the label; keep the best bound.
                    children.push((child, bound));
                } else if let Some(c) = children.iter_mut().find(|c| c.0.last() == Some(&v)) {
                    c.1 =
                        c.1.max(top[layer][arc.tail] + arc.weight + bottom[layer + 1][arc.head]);
                }
            }
        }
        for (child, bound) in children {
            let bound = bound.min(parent_bound);
            if !self.closes(bound) {
                self.push(child, bound);
            }
        }
    }

    /// Repeats longest path, scenario solves, cut, refinement. Returns the
    /// final diagram, why the loop ended, and the best bound seen.
    fn cut_loop(
        &mut self,
        mut diagram: Diagram,
        phase: Phase,
        parent_bound: f64,
    ) -> Result<(Diagram, LoopEnd, f64), EngineError> {
        let mut bound = parent_bound;
        let mut stalled = 0;
        loop {
            if diagram.is_empty() {
                return Ok((diagram, LoopEnd::Emptied, bound));
            }
            if self.time_up() {
                return Ok((diagram, LoopEnd::TimeUp, bound));
            }
            self.stats.max_width = self.stats.max_width.max(diagram.width());
            let path = diagram.longest_path()?;
            let previous = bound;
            // The relaxed bound is reported as the best bound so far; the
            // restricted one is not a bound on the node and is shown as is.
            let shown = match phase {
                Phase::Relaxed => {
                    bound = bound.min(path.value);
                    bound
                }
                Phase::Restricted => path.value,
            };
            self.stats.iterations += 1;
            let event = ProgressEvent {
                iteration: self.stats.iterations,
                phase,
                node: self.node,
                bound: shown,
                incumbent: self.incumbent.as_ref().map(|i| i.value),
                upper_bound: self.global_upper(match phase {
                    Phase::Relaxed => bound,
                    Phase::Restricted => parent_bound,
                }),
            };
            log::debug!("{event:?}");
            (self.observer)(&event);
            self.trajectory.push(event);

            if self.closes(path.value) || (phase == Phase::Relaxed && self.closes(bound)) {
                return Ok((diagram, LoopEnd::Dominated, bound));
            }
            let w = path.assignment();
            let y = w_flat_to_y_values(&w, &self.idx);
            let outcomes = self.solve_scenarios(&y)?;
            let matching = is_matching(&w, &self.idx);
            let mut value = None;
            if let Evaluation::Feasible { value: v, .. } =
                benders::evaluate_outcomes(self.instance, &outcomes)
            {
                value = Some(v);
                if matching {
                    self.offer(&w, v, &outcomes);
                }
            }
            if let Some(v) = value {
                let tol = &self.config.tolerances;
                if path.value <= v + tol.absolute + tol.relative * v.abs() {
                    return Ok((diagram, LoopEnd::Solved, bound));
                }
            }
            let cut = benders::make_cut(self.instance, &self.idx, &outcomes)?;
            let is_optimality = cut.kind == CutSense::Optimality;
            let Some(layer_cut) = self.add_cut(cut)? else {
                return Ok((diagram, LoopEnd::Stalled, bound));
            };
            diagram = match crate::diagram::refine(&diagram, &layer_cut) {
                Ok(d) => d,
                Err(DiagramError::Infeasible) => {
                    return Ok((diagram_empty(diagram), LoopEnd::Emptied, bound))
                }
                Err(e) => return Err(e.into()),
            };
            // Feasibility cuts remove points without moving the bound, so
            // only optimality cuts count toward a stall.
            if phase == Phase::Relaxed && is_optimality {
                if previous - bound < self.config.tolerances.stall_improvement {
                    stalled += 1;
                } else {
                    stalled = 0;
                }
                if stalled >= self.config.tolerances.stall_iterations {
                    return Ok((diagram, LoopEnd::Stalled, bound));
                }
            }
        }
    }

    /// Best upper bound over the incumbent, the current node and the queue.
    fn global_upper(&self, node_bound: f64) -> f64 {
        let queued = self
            .queue
            .iter()
            .map(|p| p.bound)
            .fold(f64::NEG_INFINITY, f64::max);
        let incumbent = self
            .incumbent
            .as_ref()
            .map_or(f64::NEG_INFINITY, |i| i.value);
        node_bound.max(queued).max(incumbent)
    }

    fn solve_scenarios(&mut self, y: &[f64]) -> Result<Vec<ScenarioOutcome>, EngineError> {
        let outcomes = self
            .pool
            .install(|| benders::solve_scenarios(self.instance, &self.idx, y))?;
        self.stats.lp_solves += outcomes.len();
        Ok(outcomes)
    }

    fn evaluate(&mut self, w: &[u32]) -> Result<(), EngineError> {
        if !is_matching(w, &self.idx) {
            return Ok(());
        }
        let y = w_flat_to_y_values(w, &self.idx);
        let outcomes = self.solve_scenarios(&y)?;
        if let Evaluation::Feasible { value, .. } =
            benders::evaluate_outcomes(self.instance, &outcomes)
        {
            self.offer(w, value, &outcomes);
        }
        Ok(())
    }

    /// Records a feasible matching if it beats the incumbent (ties keep the
    /// older one).
    fn offer(&mut self, w: &[u32], value: f64, outcomes: &[ScenarioOutcome]) {
        if self.incumbent.as_ref().is_some_and(|i| value <= i.value) {
            return;
        }
        let Evaluation::Feasible {
            scenario_values,
            flows,
            ..
        } = benders::evaluate_outcomes(self.instance, outcomes)
        else {
            return;
        };
        let scenarios = scenario_values
            .into_iter()
            .zip(flows)
            .map(|((scenario, value), (_, flows))| ScenarioFlow {
                scenario,
                value,
                flows,
            })
            .collect();
        log::info!("incumbent {value} at w = {w:?}");
        self.incumbent = Some(Incumbent {
            value,
            w: w.to_vec(),
            scenarios,
        });
    }

    /// Adds a cut to the pool. Returns `None` if it was already there.
    fn add_cut(&mut self, mut cut: Cut) -> Result<Option<LayerCut>, EngineError> {
        if !self.cut_keys.insert(cut.key()) {
            return Ok(None);
        }
        cut.provenance.iteration = self.stats.iterations;
        match cut.kind {
            CutSense::Optimality => self.stats.optimality_cuts += 1,
            CutSense::Feasibility => self.stats.feasibility_cuts += 1,
        }
        let layer_cut = cut.to_layer_cut(&self.idx)?;
        self.cuts.push(layer_cut.clone());
        Ok(Some(layer_cut))
    }
}

/// The diagram with every layer cleared, standing for an empty set.
fn diagram_empty(mut d: Diagram) -> Diagram {
    for layer in d.nodes.iter_mut().skip(1) {
        layer.clear();
    }
    for layer in d.arcs.iter_mut() {
        layer.clear();
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::five_node;
    use crate::oracle::{solve_exhaustive, OracleConfig};

    #[test]
    fn five_node_matches_the_oracle() {
        let inst = five_node();
        for width in [Some(1), Some(2), None] {
            let config = SolverConfig {
                width_limit: width,
                ..SolverConfig::default()
            };
            let report = solve(&inst, &config).unwrap();
            assert_eq!(report.termination, Termination::Optimal);
            assert_eq!(report.w, Some(vec![1, 0]));
            assert!((report.value.unwrap() - 1350.0).abs() < 1e-6);
        }
        let oracle = solve_exhaustive(&inst, &OracleConfig::default()).unwrap();
        assert_eq!(oracle.value, Some(1350.0));
    }

    #[test]
    fn queue_prefers_larger_bounds_then_fifo() {
        let mut heap = BinaryHeap::new();
        heap.push(Pending {
            prefix: vec![0],
            bound: 1.0,
            order: 0,
        });
        heap.push(Pending {
            prefix: vec![1],
            bound: 2.0,
            order: 1,
        });
        heap.push(Pending {
            prefix: vec![2],
            bound: 2.0,
            order: 2,
        });
        let order: Vec<u32> = std::iter::from_fn(|| heap.pop())
            .map(|p| p.prefix[0])
            .collect();
        assert_eq!(order, vec![1, 2, 0]);
    }

    #[test]
    fn zero_width_is_rejected() {
        let config = SolverConfig {
            width_limit: Some(0),
            ..SolverConfig::default()
        };
        assert!(matches!(
            solve(&five_node(), &config),
            Err(EngineError::InvalidConfig(_))
        ));
    }

    #[test]
    fn invalid_instances_are_rejected() {
        let mut inst = five_node();
        inst.scenarios.scenarios[0].probability = 0.5;
        assert!(matches!(
            solve(&inst, &SolverConfig::default()),
            Err(EngineError::InvalidInstance(_))
        ));
    }

    #[test]
    fn shortfall_beyond_capacity_uses_the_artificial_source() {
        // The supply path cannot carry this demand alone.
        let mut inst = five_node();
        inst.scenarios.scenarios[0]
            .demand
            .insert(crate::model::NodeId(2), 100_000);
        inst.gamma = crate::model::compute_gamma(&inst);
        let report = solve(&inst, &SolverConfig::default()).unwrap();
        // s0 covers any shortfall, so the instance is still feasible.
        assert_eq!(report.termination, Termination::Optimal);
        let oracle = solve_exhaustive(&inst, &OracleConfig::default()).unwrap();
        assert!((report.value.unwrap() - oracle.value.unwrap()).abs() < 1e-6);
    }
}
