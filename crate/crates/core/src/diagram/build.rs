//! Top-down compilation of master diagrams: one layer per incoming arc of
//! every no-split no-merge node, then the bound layer.

use std::collections::HashMap;

use super::merge::merge_to_width;
use super::{
    Diagram, DiagramArc, DiagramKind, DiagramNode, Label, StateSet, ACC_TOLERANCE,
    FEASIBILITY_TOLERANCE,
};
use crate::model::Instance;
use crate::transform::{CutSense, LayerCut, NsnmIndexing};

/// Compiles master diagrams under an optional fixed prefix and a set of cuts
/// that are applied during construction.
#[derive(Debug, Clone)]
pub struct MasterBuilder<'a> {
    idx: &'a NsnmIndexing,
    gamma: f64,
    prefix: Vec<u32>,
    cuts: Vec<&'a LayerCut>,
}

pub fn build_exact(instance: &Instance, idx: &NsnmIndexing) -> Diagram {
    MasterBuilder::new(idx, instance.gamma).exact()
}

pub fn build_relaxed(instance: &Instance, idx: &NsnmIndexing, width_limit: usize) -> Diagram {
    MasterBuilder::new(idx, instance.gamma).relaxed(width_limit)
}

pub fn build_restricted(instance: &Instance, idx: &NsnmIndexing, width_limit: usize) -> Diagram {
    MasterBuilder::new(idx, instance.gamma).restricted(width_limit)
}

struct Frontier {
    state: StateSet,
    acc: Vec<f64>,
    exact: bool,
}

struct Candidate {
    parent: usize,
    label: u32,
    state: StateSet,
    acc: Vec<f64>,
    parent_exact: bool,
}

/// Output of grouping one layer's candidates into nodes.
struct LayerGroups {
    nodes: Vec<Frontier>,
    /// Node of each candidate, `None` if dropped.
    assignment: Vec<Option<usize>>,
    dropped: bool,
    merged: bool,
}

impl<'a> MasterBuilder<'a> {
    pub fn new(idx: &'a NsnmIndexing, gamma: f64) -> Self {
        MasterBuilder {
            idx,
            gamma,
            prefix: Vec::new(),
            cuts: Vec::new(),
        }
    }

    /// Fixes the first layers to `prefix`; the diagram then encodes only
    /// completions of it.
    pub fn with_prefix(mut self, prefix: &[u32]) -> Self {
        self.prefix = prefix.to_vec();
        self
    }

    /// Cuts enforced while compiling (feasibility cuts prune, optimality
    /// cuts lower the upper bound labels).
    pub fn with_cuts(mut self, cuts: impl IntoIterator<Item = &'a LayerCut>) -> Self {
        self.cuts.extend(cuts);
        self
    }

    pub fn exact(&self) -> Diagram {
        self.compile(DiagramKind::Exact, None)
    }

    pub fn relaxed(&self, width_limit: usize) -> Diagram {
        self.compile(DiagramKind::Relaxed, Some(width_limit.max(1)))
    }

    pub fn restricted(&self, width_limit: usize) -> Diagram {
        self.compile(DiagramKind::Restricted, Some(width_limit.max(1)))
    }

    pub fn compile(&self, kind: DiagramKind, width_limit: Option<usize>) -> Diagram {
        let idx = self.idx;
        let layers = idx.w_len();
        let k = self.cuts.len();
        let gamma = self.gamma;

        // Largest contribution each cut can still collect from a layer on.
        let mut remaining = vec![vec![0.0; layers + 1]; k];
        for (c, cut) in self.cuts.iter().enumerate() {
            for l in (0..layers).rev() {
                let best = cut.tables[l]
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max);
                remaining[c][l] = remaining[c][l + 1] + best.max(0.0);
            }
        }

        let block_state = |layer: usize| -> StateSet {
            if layer >= layers {
                StateSet::full(0)
            } else {
                let (b, _) = idx.layer_position(layer);
                StateSet::full(idx.blocks()[b].out_degree())
            }
        };

        let mut frontier = vec![Frontier {
            state: block_state(0),
            acc: vec![0.0; k],
            exact: true,
        }];
        let mut nodes = vec![vec![DiagramNode {
            state: frontier[0].state.clone(),
            exact: true,
        }]];
        let mut arcs: Vec<Vec<DiagramArc>> = Vec::with_capacity(layers + 1);
        let mut dropped = false;
        let mut merged = false;

        for l in 0..layers {
            let (b, pos) = idx.layer_position(l);
            let block = &idx.blocks()[b];
            let resets = pos + 1 == block.in_degree();
            let reset_state = resets.then(|| block_state(l + 1));

            let mut candidates = Vec::new();
            for (ui, u) in frontier.iter().enumerate() {
                let fixed = self.prefix.get(l).copied();
                let labels: Vec<u32> = match fixed {
                    Some(v) => {
                        if u.state.contains(v) {
                            vec![v]
                        } else {
                            vec![]
                        }
                    }
                    None => u.state.iter().collect(),
                };
                'label: for label in labels {
                    let mut acc = u.acc.clone();
                    for (c, cut) in self.cuts.iter().enumerate() {
                        acc[c] += cut.tables[l][label as usize];
                        if cut.sense == CutSense::Feasibility
                            && acc[c] + cut.constant + remaining[c][l + 1] < -FEASIBILITY_TOLERANCE
                        {
                            continue 'label;
                        }
                    }
                    let state = match &reset_state {
                        Some(s) => s.clone(),
                        None => {
                            let mut s = u.state.clone();
                            if label > 0 {
                                s.remove(label);
                            }
                            s
                        }
                    };
                    candidates.push(Candidate {
                        parent: ui,
                        label,
                        state,
                        acc,
                        parent_exact: u.exact,
                    });
                }
            }

            let groups = self.group(kind, width_limit, candidates.iter(), &remaining, l + 1);
            dropped |= groups.dropped;
            merged |= groups.merged;
            let mut layer_arcs = Vec::with_capacity(candidates.len());
            for (cand, slot) in candidates.iter().zip(&groups.assignment) {
                if let Some(h) = slot {
                    layer_arcs.push(DiagramArc {
                        tail: cand.parent,
                        head: *h,
                        label: Label::Value(cand.label),
                        weight: 0.0,
                    });
                }
            }
            arcs.push(layer_arcs);
            nodes.push(
                groups
                    .nodes
                    .iter()
                    .map(|f| DiagramNode {
                        state: f.state.clone(),
                        exact: f.exact,
                    })
                    .collect(),
            );
            frontier = groups.nodes;
        }

        let mut bound_arcs = Vec::with_capacity(2 * frontier.len());
        for (ui, u) in frontier.iter().enumerate() {
            let mut upper = gamma;
            let mut feasible = true;
            for (c, cut) in self.cuts.iter().enumerate() {
                let v = u.acc[c] + cut.constant;
                match cut.sense {
                    CutSense::Optimality => upper = upper.min(v),
                    CutSense::Feasibility => feasible &= v >= -FEASIBILITY_TOLERANCE,
                }
            }
            if feasible {
                bound_arcs.push(DiagramArc {
                    tail: ui,
                    head: 0,
                    label: Label::Upper(upper),
                    weight: upper,
                });
                bound_arcs.push(DiagramArc {
                    tail: ui,
                    head: 0,
                    label: Label::Lower(-gamma),
                    weight: -gamma,
                });
            }
        }
        arcs.push(bound_arcs);
        nodes.push(vec![DiagramNode {
            state: StateSet::full(0),
            exact: true,
        }]);

        let exact = match kind {
            DiagramKind::Exact => true,
            DiagramKind::Restricted => !dropped,
            DiagramKind::Relaxed => !merged,
        };
        let mut d = Diagram {
            kind,
            width_limit,
            nodes,
            arcs,
            last_exact_layer: 0,
            exact,
            has_bound_layer: true,
        };
        // The terminal is exact by construction; it must not extend the
        // exact prefix past merged layers.
        d.prune_dead();
        d.recompute_last_exact();
        d
    }

    fn group<'c>(
        &self,
        kind: DiagramKind,
        width_limit: Option<usize>,
        candidates: impl ExactSizeIterator<Item = &'c Candidate> + Clone,
        remaining: &[Vec<f64>],
        next_layer: usize,
    ) -> LayerGroups {
        let count = candidates.len();
        let width = width_limit.unwrap_or(usize::MAX);

        if kind == DiagramKind::Relaxed
            && count <= width
            && candidates.clone().all(|c| c.parent_exact)
        {
            let nodes = candidates
                .map(|c| Frontier {
                    state: c.state.clone(),
                    acc: c.acc.clone(),
                    exact: true,
                })
                .collect();
            return LayerGroups {
                nodes,
                assignment: (0..count).map(Some).collect(),
                dropped: false,
                merged: false,
            };
        }

        // Lossless grouping on (state, accumulated cut values).
        let mut index: HashMap<(StateSet, Vec<i64>), usize> = HashMap::new();
        let mut nodes: Vec<Frontier> = Vec::new();
        let mut sizes: Vec<usize> = Vec::new();
        let mut assignment: Vec<Option<usize>> = Vec::with_capacity(count);
        for c in candidates {
            let key = (
                c.state.clone(),
                c.acc
                    .iter()
                    .map(|v| (v / ACC_TOLERANCE).round() as i64)
                    .collect(),
            );
            let slot = *index.entry(key).or_insert_with(|| {
                nodes.push(Frontier {
                    state: c.state.clone(),
                    acc: c.acc.clone(),
                    exact: c.parent_exact,
                });
                sizes.push(0);
                nodes.len() - 1
            });
            sizes[slot] += 1;
            if sizes[slot] > 1 {
                nodes[slot].exact = false;
            }
            assignment.push(Some(slot));
        }
        if nodes.len() <= width {
            return LayerGroups {
                nodes,
                assignment,
                dropped: false,
                merged: false,
            };
        }

        match kind {
            DiagramKind::Exact => LayerGroups {
                nodes,
                assignment,
                dropped: false,
                merged: false,
            },
            DiagramKind::Restricted => {
                let keys: Vec<f64> = nodes
                    .iter()
                    .map(|n| self.optimistic_bound(&n.acc, remaining, next_layer))
                    .collect();
                let mut order: Vec<usize> = (0..nodes.len()).collect();
                order.sort_by(|&a, &b| {
                    keys[b]
                        .total_cmp(&keys[a])
                        .then(nodes[b].state.len().cmp(&nodes[a].state.len()))
                        .then(nodes[a].state.lex_cmp(&nodes[b].state))
                        .then(a.cmp(&b))
                });
                let mut keep: Vec<usize> = order[..width].to_vec();
                keep.sort_unstable();
                let mut remap = vec![None; nodes.len()];
                for (new, &old) in keep.iter().enumerate() {
                    remap[old] = Some(new);
                }
                let mut slots: Vec<Option<Frontier>> = nodes.into_iter().map(Some).collect();
                let kept = keep
                    .iter()
                    .map(|&old| slots[old].take().expect("kept once"))
                    .collect();
                let assignment = assignment
                    .into_iter()
                    .map(|s| s.and_then(|s| remap[s]))
                    .collect();
                LayerGroups {
                    nodes: kept,
                    assignment,
                    dropped: true,
                    merged: false,
                }
            }
            DiagramKind::Relaxed => {
                let items: Vec<(StateSet, (Vec<f64>, Vec<usize>, bool))> = nodes
                    .into_iter()
                    .enumerate()
                    .map(|(k, n)| (n.state, (n.acc, vec![k], n.exact)))
                    .collect();
                let out = merge_to_width(items, width, |(mut a, mut ma, _), (b, mb, _)| {
                    for (x, y) in a.iter_mut().zip(&b) {
                        *x = x.max(*y);
                    }
                    ma.extend(mb);
                    (a, ma, false)
                });
                let mut old_to_new = HashMap::new();
                let mut merged_nodes = Vec::with_capacity(out.len());
                for (new, m) in out.into_iter().enumerate() {
                    for &old in &m.payload.1 {
                        old_to_new.insert(old, new);
                    }
                    merged_nodes.push(Frontier {
                        state: m.state,
                        acc: m.payload.0,
                        exact: m.payload.2 && !m.merged,
                    });
                }
                let assignment = assignment
                    .into_iter()
                    .map(|s| s.map(|s| old_to_new[&s]))
                    .collect();
                LayerGroups {
                    nodes: merged_nodes,
                    assignment,
                    dropped: false,
                    merged: true,
                }
            }
        }
    }

    /// Upper estimate of the best bound label reachable from a node.
    fn optimistic_bound(&self, acc: &[f64], remaining: &[Vec<f64>], layer: usize) -> f64 {
        let mut v = self.gamma;
        for (c, cut) in self.cuts.iter().enumerate() {
            if cut.sense == CutSense::Optimality {
                v = v.min(acc[c] + cut.constant + remaining[c][layer]);
            }
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::{cut_to_layer_contributions, node_matchings, w_to_y, WAssignment};
    use std::collections::BTreeSet;

    fn enumerate(idx: &NsnmIndexing) -> BTreeSet<Vec<u32>> {
        let per_node: Vec<Vec<Vec<u32>>> = idx
            .blocks()
            .iter()
            .map(|b| node_matchings(b.in_degree(), b.out_degree()))
            .collect();
        let mut out = BTreeSet::new();
        let mut combo = vec![0usize; per_node.len()];
        loop {
            out.insert(
                combo
                    .iter()
                    .zip(&per_node)
                    .flat_map(|(&k, all)| all[k].clone())
                    .collect(),
            );
            let mut i = per_node.len();
            loop {
                if i == 0 {
                    return out;
                }
                i -= 1;
                combo[i] += 1;
                if combo[i] < per_node[i].len() {
                    break;
                }
                combo[i] = 0;
            }
        }
    }

    #[test]
    fn exact_counts_match_matching_formula() {
        for m in 1..=4 {
            for n in 1..=4 {
                let idx = NsnmIndexing::from_shapes(&[(m, n)]);
                let d = MasterBuilder::new(&idx, 10.0).exact();
                let got = d.assignments(100_000);
                assert_eq!(
                    got.len() as u128,
                    NsnmIndexing::matching_count(m, n),
                    "{m}x{n}"
                );
                assert_eq!(got, enumerate(&idx));
                assert_eq!(d.arc_layers(), m + 1);
            }
        }
        let idx = NsnmIndexing::from_shapes(&[(2, 2)]);
        let d = MasterBuilder::new(&idx, 10.0).exact();
        assert_eq!(d.paths(1000).len(), 14);
        assert_eq!(idx.y_space_layers(), 5);
    }

    #[test]
    fn multi_node_blocks_reset_state() {
        let idx = NsnmIndexing::from_shapes(&[(2, 2), (1, 3), (2, 1)]);
        let d = MasterBuilder::new(&idx, 10.0).exact();
        assert_eq!(d.assignments(100_000), enumerate(&idx));
        // Block boundaries collapse to one node without cuts.
        assert_eq!(d.nodes[2].len(), 1);
        assert_eq!(d.nodes[3].len(), 1);
    }

    #[test]
    fn relaxed_and_restricted_bracket_exact() {
        let idx = NsnmIndexing::from_shapes(&[(3, 3), (2, 3)]);
        let exact = MasterBuilder::new(&idx, 10.0).exact().assignments(1 << 20);
        for w in [1, 2, 4] {
            let relaxed = MasterBuilder::new(&idx, 10.0).relaxed(w);
            let restricted = MasterBuilder::new(&idx, 10.0).restricted(w);
            assert!(relaxed.width() <= w && restricted.width() <= w);
            assert!(exact.is_subset(&relaxed.assignments(1 << 20)));
            let r = restricted.assignments(1 << 20);
            assert!(!r.is_empty() && r.is_subset(&exact));
        }
        let wide = MasterBuilder::new(&idx, 10.0).relaxed(1000);
        assert_eq!(wide.assignments(1 << 20), exact);
        assert!(wide.exact);
        let chain = MasterBuilder::new(&idx, 10.0).relaxed(1);
        for (j, layer) in chain.nodes.iter().enumerate().take(idx.w_len()) {
            let (b, _) = if j < idx.w_len() {
                idx.layer_position(j)
            } else {
                (0, 0)
            };
            assert_eq!(layer[0].state, StateSet::full(idx.blocks()[b].out_degree()));
        }
    }

    #[test]
    fn restricted_width_one_keeps_only_feasible_paths() {
        let idx = NsnmIndexing::from_shapes(&[(2, 2)]);
        let d = MasterBuilder::new(&idx, 10.0).restricted(1);
        assert_eq!(d.width(), 1);
        let paths = d.assignments(100);
        // w1 = 0 keeps the widest state, and every w2 completes it.
        assert_eq!(paths.len(), 3);
        let all = enumerate(&idx);
        assert!(paths.iter().all(|p| all.contains(p)));
        assert!(!d.exact);
    }

    #[test]
    fn prefixes_fix_the_first_layers() {
        let idx = NsnmIndexing::from_shapes(&[(2, 2)]);
        let d = MasterBuilder::new(&idx, 10.0).with_prefix(&[2]).exact();
        let got: Vec<Vec<u32>> = d.assignments(100).into_iter().collect();
        assert_eq!(got, vec![vec![2, 0], vec![2, 1]]);
        let full = MasterBuilder::new(&idx, 10.0).with_prefix(&[2, 1]).exact();
        assert_eq!(full.paths(100).len(), 2);
        let bad = MasterBuilder::new(&idx, 10.0).with_prefix(&[3]).exact();
        assert!(bad.is_empty());
    }

    #[test]
    fn compiled_cuts_bound_the_labels() {
        let idx = NsnmIndexing::from_shapes(&[(2, 2)]);
        let mut a = vec![0.0; idx.y_len()];
        a[idx.y_index(0, 0, 0)] = 3.0;
        a[idx.y_index(0, 1, 1)] = -1.0;
        let opt = cut_to_layer_contributions(&a, 1.0, CutSense::Optimality, &idx).unwrap();
        // At least one of the two pairs must be used.
        let mut f = vec![0.0; idx.y_len()];
        for v in f.iter_mut() {
            *v = 1.0;
        }
        let feas = cut_to_layer_contributions(&f, -1.0, CutSense::Feasibility, &idx).unwrap();
        let d = MasterBuilder::new(&idx, 10.0)
            .with_cuts([&opt, &feas])
            .exact();
        let paths = d.paths(1000);
        for (labels, value) in paths {
            let w: Vec<u32> = labels.iter().filter_map(|l| l.value()).collect();
            assert_ne!(w, vec![0, 0]);
            if let Some(Label::Upper(z)) = labels.last() {
                let y = w_to_y(
                    &WAssignment {
                        blocks: vec![w.clone()],
                    },
                    &idx,
                )
                .unwrap()
                .flat();
                let bound: f64 = a.iter().zip(&y).map(|(x, v)| x * v).sum::<f64>() + 1.0;
                assert_eq!(*z, bound.min(10.0));
                assert_eq!(value, *z);
            }
        }
    }
}
