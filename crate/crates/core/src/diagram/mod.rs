//! Layered decision diagrams over the compact matching variables, closed by
//! a layer of two bound arcs per node that carries the value estimate.

mod build;
pub mod fixtures;
mod merge;
mod refine;
mod state;

use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

pub use build::{build_exact, build_relaxed, build_restricted, MasterBuilder};
pub use refine::refine;
pub use state::StateSet;

/// Absolute tolerance for treating two accumulated cut values as equal.
pub const ACC_TOLERANCE: f64 = 1e-9;
/// Slack allowed before a path counts as violating a feasibility cut.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiagramKind {
    Exact,
    Relaxed,
    Restricted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Label {
    /// Value of a discrete variable.
    Value(u32),
    /// Upper end of the value variable's range.
    Upper(f64),
    /// Lower end of the value variable's range.
    Lower(f64),
}

impl Label {
    pub fn value(self) -> Option<u32> {
        match self {
            Label::Value(v) => Some(v),
            _ => None,
        }
    }

    pub fn bound(self) -> Option<f64> {
        match self {
            Label::Upper(z) | Label::Lower(z) => Some(z),
            Label::Value(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagramArc {
    /// Index into the tail's node layer.
    pub tail: usize,
    /// Index into the next node layer.
    pub head: usize,
    pub label: Label,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagramNode {
    pub state: StateSet,
    /// Reached by a single root path, never produced by merging.
    pub exact: bool,
}

#[derive(Debug, Error, PartialEq)]
pub enum DiagramError {
    #[error("the diagram has no root-terminal path")]
    Empty,
    #[error("no point satisfies all cuts")]
    Infeasible,
    #[error("malformed diagram: {0}")]
    Malformed(String),
    #[error("cut does not fit the diagram: {0}")]
    CutShape(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagram {
    pub kind: DiagramKind,
    pub width_limit: Option<usize>,
    /// `nodes[0]` holds the root and the last layer the terminal.
    pub nodes: Vec<Vec<DiagramNode>>,
    /// `arcs[j]` connects `nodes[j]` to `nodes[j + 1]`.
    pub arcs: Vec<Vec<DiagramArc>>,
    /// Deepest node layer whose nodes (and all nodes above) are exact.
    pub last_exact_layer: usize,
    /// Whether the encoded set equals the set the diagram stands for: no
    /// merging lost information and no node was dropped.
    pub exact: bool,
    /// Whether the last arc layer carries bound labels.
    pub has_bound_layer: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongestPath {
    pub value: f64,
    pub labels: Vec<Label>,
}

impl LongestPath {
    /// Values of the discrete layers.
    pub fn assignment(&self) -> Vec<u32> {
        self.labels.iter().filter_map(|l| l.value()).collect()
    }

    /// Label of the bound layer, if the diagram has one.
    pub fn bound(&self) -> Option<f64> {
        self.labels.last().and_then(|l| l.bound())
    }
}

impl Diagram {
    /// Assembles a diagram from explicit layers, checking that arcs point at
    /// existing nodes, and prunes nodes off every root-terminal path.
    pub fn from_parts(
        kind: DiagramKind,
        width_limit: Option<usize>,
        nodes: Vec<Vec<DiagramNode>>,
        arcs: Vec<Vec<DiagramArc>>,
        has_bound_layer: bool,
    ) -> Result<Self, DiagramError> {
        if nodes.len() != arcs.len() + 1 {
            return Err(DiagramError::Malformed(format!(
                "{} node layers for {} arc layers",
                nodes.len(),
                arcs.len()
            )));
        }
        if nodes[0].len() != 1 || nodes.last().is_none_or(|l| l.len() != 1) {
            return Err(DiagramError::Malformed(
                "root and terminal layers need exactly one node".into(),
            ));
        }
        for (j, layer) in arcs.iter().enumerate() {
            for a in layer {
                if a.tail >= nodes[j].len() || a.head >= nodes[j + 1].len() {
                    return Err(DiagramError::Malformed(format!(
                        "arc layer {j} references a missing node"
                    )));
                }
            }
        }
        let mut d = Diagram {
            kind,
            width_limit,
            nodes,
            arcs,
            last_exact_layer: 0,
            exact: true,
            has_bound_layer,
        };
        d.prune_dead();
        d.recompute_last_exact();
        Ok(d)
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.iter().any(|l| l.is_empty())
    }

    pub fn arc_layers(&self) -> usize {
        self.arcs.len()
    }

    /// Arc layers that carry discrete values.
    pub fn value_layers(&self) -> usize {
        self.arcs.len() - usize::from(self.has_bound_layer)
    }

    pub fn width(&self) -> usize {
        self.nodes.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.iter().map(Vec::len).sum()
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.iter().map(Vec::len).sum()
    }

    /// Longest root-terminal path under the arcs' own weights.
    pub fn longest_path(&self) -> Result<LongestPath, DiagramError> {
        self.longest_path_with(|_, a| a.weight)
    }

    /// Longest path under custom weights `weight(arc_layer, arc)`. Ties go to
    /// the first arc in layer order.
    pub fn longest_path_with(
        &self,
        weight: impl Fn(usize, &DiagramArc) -> f64,
    ) -> Result<LongestPath, DiagramError> {
        if self.is_empty() {
            return Err(DiagramError::Empty);
        }
        let mut best: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|l| vec![f64::NEG_INFINITY; l.len()])
            .collect();
        let mut pred: Vec<Vec<Option<usize>>> =
            self.nodes.iter().map(|l| vec![None; l.len()]).collect();
        best[0][0] = 0.0;
        for (j, layer) in self.arcs.iter().enumerate() {
            for (k, a) in layer.iter().enumerate() {
                let from = best[j][a.tail];
                if from == f64::NEG_INFINITY {
                    continue;
                }
                let v = from + weight(j, a);
                if v > best[j + 1][a.head] {
                    best[j + 1][a.head] = v;
                    pred[j + 1][a.head] = Some(k);
                }
            }
        }
        let last = self.nodes.len() - 1;
        if best[last][0] == f64::NEG_INFINITY {
            return Err(DiagramError::Empty);
        }
        let mut labels = Vec::with_capacity(self.arcs.len());
        let mut node = 0;
        for j in (0..self.arcs.len()).rev() {
            let k = pred[j + 1][node].ok_or(DiagramError::Empty)?;
            let a = &self.arcs[j][k];
            labels.push(a.label);
            node = a.tail;
        }
        labels.reverse();
        Ok(LongestPath {
            value: best[last][0],
            labels,
        })
    }

    /// Longest root-to-node values under the arc weights, per layer.
    pub fn top_values(&self) -> Vec<Vec<f64>> {
        let mut top: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|l| vec![f64::NEG_INFINITY; l.len()])
            .collect();
        if self.is_empty() {
            return top;
        }
        top[0][0] = 0.0;
        for (j, layer) in self.arcs.iter().enumerate() {
            for a in layer {
                let v = top[j][a.tail] + a.weight;
                if v > top[j + 1][a.head] {
                    top[j + 1][a.head] = v;
                }
            }
        }
        top
    }

    /// Longest node-to-terminal values under the arc weights, per layer.
    pub fn bottom_values(&self) -> Vec<Vec<f64>> {
        let mut bottom: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|l| vec![f64::NEG_INFINITY; l.len()])
            .collect();
        if self.is_empty() {
            return bottom;
        }
        let last = self.nodes.len() - 1;
        bottom[last][0] = 0.0;
        for j in (0..self.arcs.len()).rev() {
            for a in &self.arcs[j] {
                let v = bottom[j + 1][a.head] + a.weight;
                if v > bottom[j][a.tail] {
                    bottom[j][a.tail] = v;
                }
            }
        }
        bottom
    }

    /// Labels of a longest root path into `node` at `layer`.
    pub fn longest_prefix(&self, layer: usize, node: usize) -> Vec<Label> {
        let top = self.top_values();
        let mut labels = Vec::with_capacity(layer);
        let mut cur = node;
        for j in (0..layer).rev() {
            let arc = self.arcs[j]
                .iter()
                .filter(|a| a.head == cur && top[j][a.tail] > f64::NEG_INFINITY)
                .max_by(|a, b| {
                    (top[j][a.tail] + a.weight)
                        .partial_cmp(&(top[j][b.tail] + b.weight))
                        .unwrap_or(std::cmp::Ordering::Equal)
                        // Prefer the earlier arc on ties.
                        .then(std::cmp::Ordering::Greater)
                })
                .expect("every node has an incoming arc");
            labels.push(arc.label);
            cur = arc.tail;
        }
        labels.reverse();
        labels
    }

    /// All root-terminal paths with their weights, up to `limit` paths.
    pub fn paths(&self, limit: usize) -> Vec<(Vec<Label>, f64)> {
        let mut out = Vec::new();
        if self.is_empty() {
            return out;
        }
        let mut by_tail: Vec<Vec<Vec<usize>>> = self
            .nodes
            .iter()
            .map(|l| vec![Vec::new(); l.len()])
            .collect();
        for (j, layer) in self.arcs.iter().enumerate() {
            for (k, a) in layer.iter().enumerate() {
                by_tail[j][a.tail].push(k);
            }
        }
        let mut stack: Vec<Label> = Vec::new();
        self.walk(0, 0, 0.0, &by_tail, &mut stack, &mut out, limit);
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn walk(
        &self,
        layer: usize,
        node: usize,
        acc: f64,
        by_tail: &[Vec<Vec<usize>>],
        stack: &mut Vec<Label>,
        out: &mut Vec<(Vec<Label>, f64)>,
        limit: usize,
    ) {
        if out.len() >= limit {
            return;
        }
        if layer == self.arcs.len() {
            out.push((stack.clone(), acc));
            return;
        }
        for &k in &by_tail[layer][node] {
            let a = &self.arcs[layer][k];
            stack.push(a.label);
            self.walk(
                layer + 1,
                a.head,
                acc + a.weight,
                by_tail,
                stack,
                out,
                limit,
            );
            stack.pop();
        }
    }

    /// Distinct discrete assignments encoded by the diagram.
    pub fn assignments(&self, limit: usize) -> BTreeSet<Vec<u32>> {
        let cut = self.value_layers();
        let mut out = BTreeSet::new();
        if self.is_empty() {
            return out;
        }
        // Walk only the value layers; bound arcs multiply paths without
        // changing the assignment.
        let mut frontier: Vec<(usize, Vec<u32>)> = vec![(0, Vec::new())];
        for j in 0..cut {
            let mut next = Vec::new();
            for (node, prefix) in &frontier {
                for a in self.arcs[j].iter().filter(|a| a.tail == *node) {
                    let mut p = prefix.clone();
                    p.push(a.label.value().unwrap_or(u32::MAX));
                    next.push((a.head, p));
                }
            }
            next.sort();
            next.dedup();
            assert!(next.len() <= limit, "more than {limit} partial assignments");
            frontier = next;
        }
        for (_, p) in frontier {
            out.insert(p);
        }
        out
    }

    /// Graphviz rendering, one line per arc with its label and weight.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph dd {\n  rankdir=TB;\n");
        for (j, layer) in self.nodes.iter().enumerate() {
            for (k, n) in layer.iter().enumerate() {
                let style = if n.exact { "solid" } else { "dashed" };
                let _ = writeln!(s, "  u{j}_{k} [label=\"{}\", style={style}];", n.state);
            }
        }
        for (j, layer) in self.arcs.iter().enumerate() {
            for a in layer {
                let label = match a.label {
                    Label::Value(v) => v.to_string(),
                    Label::Upper(z) => format!("+{z}"),
                    Label::Lower(z) => format!("-{}", -z),
                };
                let _ = writeln!(
                    s,
                    "  u{j}_{} -> u{}_{} [label=\"{label} / {}\"];",
                    a.tail,
                    j + 1,
                    a.head,
                    a.weight
                );
            }
        }
        s.push_str("}\n");
        s
    }

    /// Removes nodes that are unreachable from the root or cannot reach the
    /// terminal. Leaves every layer empty when no path survives.
    pub(crate) fn prune_dead(&mut self) {
        let layers = self.nodes.len();
        let mut alive: Vec<Vec<bool>> = self.nodes.iter().map(|l| vec![false; l.len()]).collect();
        let mut reach: Vec<Vec<bool>> = alive.clone();
        if !self.nodes[0].is_empty() {
            reach[0][0] = true;
        }
        for j in 0..self.arcs.len() {
            for a in &self.arcs[j] {
                if reach[j][a.tail] {
                    reach[j + 1][a.head] = true;
                }
            }
        }
        if let Some(t) = alive[layers - 1].first_mut() {
            *t = reach[layers - 1][0];
        }
        for j in (0..self.arcs.len()).rev() {
            for a in &self.arcs[j] {
                if alive[j + 1][a.head] && reach[j][a.tail] {
                    alive[j][a.tail] = true;
                }
            }
        }
        if !alive[0].first().copied().unwrap_or(false) {
            for l in &mut self.nodes {
                l.clear();
            }
            for l in &mut self.arcs {
                l.clear();
            }
            return;
        }
        let mut remap: Vec<Vec<usize>> = Vec::with_capacity(layers);
        for (j, layer) in self.nodes.iter_mut().enumerate() {
            let mut map = vec![usize::MAX; layer.len()];
            let mut kept = Vec::with_capacity(layer.len());
            for (k, node) in layer.drain(..).enumerate() {
                if alive[j][k] {
                    map[k] = kept.len();
                    kept.push(node);
                }
            }
            *layer = kept;
            remap.push(map);
        }
        for (j, layer) in self.arcs.iter_mut().enumerate() {
            layer.retain(|a| alive[j][a.tail] && alive[j + 1][a.head]);
            for a in layer.iter_mut() {
                a.tail = remap[j][a.tail];
                a.head = remap[j + 1][a.head];
            }
        }
    }

    pub(crate) fn recompute_last_exact(&mut self) {
        let mut last = 0;
        for (j, layer) in self.nodes.iter().enumerate() {
            if layer.iter().all(|n| n.exact) {
                last = j;
            } else {
                break;
            }
        }
        self.last_exact_layer = last;
    }
}
