//! Cut-driven refinement: split nodes by accumulated cut value, drop arcs
//! that cannot satisfy a feasibility cut, and lower the upper bound labels
//! under an optimality cut.

use std::collections::HashMap;

use super::merge::merge_to_width;
use super::{
    Diagram, DiagramArc, DiagramError, DiagramKind, DiagramNode, Label, StateSet, ACC_TOLERANCE,
    FEASIBILITY_TOLERANCE,
};
use crate::transform::{CutSense, LayerCut};

#[derive(Clone)]
struct Split {
    /// Nodes of the input layer represented by this node.
    olds: Vec<usize>,
    acc: f64,
    state: StateSet,
    exact: bool,
    /// Longest weighted root path into this node.
    top: f64,
}

struct Candidate {
    tail: usize,
    old_head: usize,
    label: Label,
    weight: f64,
    acc: f64,
}

/// Returns the diagram restricted to paths that satisfy the cut (exact and
/// restricted inputs) or a relaxation of those paths (relaxed inputs).
pub fn refine(d: &Diagram, cut: &LayerCut) -> Result<Diagram, DiagramError> {
    if d.is_empty() {
        return Err(DiagramError::Infeasible);
    }
    let value_layers = d.value_layers();
    if cut.tables.len() != value_layers {
        return Err(DiagramError::CutShape(format!(
            "{} tables for {value_layers} value layers",
            cut.tables.len()
        )));
    }
    if cut.sense == CutSense::Optimality && !d.has_bound_layer {
        return Err(DiagramError::CutShape(
            "optimality cut on a diagram without a bound layer".into(),
        ));
    }
    let contribution = |layer: usize, label: Label| -> Result<f64, DiagramError> {
        if layer >= value_layers {
            return Ok(0.0);
        }
        let v = label
            .value()
            .ok_or_else(|| DiagramError::CutShape("bound label in a value layer".into()))?;
        cut.tables[layer].get(v as usize).copied().ok_or_else(|| {
            DiagramError::CutShape(format!("label {v} outside the table of layer {layer}"))
        })
    };

    let layers = d.arcs.len();
    // Best cut completion from each input node.
    let mut completion: Vec<Vec<f64>> = d
        .nodes
        .iter()
        .map(|l| vec![f64::NEG_INFINITY; l.len()])
        .collect();
    completion[layers][0] = 0.0;
    for j in (0..layers).rev() {
        for a in &d.arcs[j] {
            let v = contribution(j, a.label)? + completion[j + 1][a.head];
            if v > completion[j][a.tail] {
                completion[j][a.tail] = v;
            }
        }
    }
    let bottom = d.bottom_values();
    let mut by_tail: Vec<Vec<Vec<usize>>> =
        d.nodes.iter().map(|l| vec![Vec::new(); l.len()]).collect();
    for (j, layer) in d.arcs.iter().enumerate() {
        for (k, a) in layer.iter().enumerate() {
            by_tail[j][a.tail].push(k);
        }
    }

    let width = match d.kind {
        DiagramKind::Exact => usize::MAX,
        _ => d.width_limit.unwrap_or(usize::MAX),
    };
    let feasibility = cut.sense == CutSense::Feasibility;
    let mut dropped = false;
    let mut merged = false;

    let root = &d.nodes[0][0];
    let mut current = vec![Split {
        olds: vec![0],
        acc: 0.0,
        state: root.state.clone(),
        exact: root.exact,
        top: 0.0,
    }];
    let mut nodes: Vec<Vec<DiagramNode>> = vec![vec![root.clone()]];
    let mut arcs: Vec<Vec<DiagramArc>> = Vec::with_capacity(layers);

    for j in 0..layers {
        let last = j + 1 == layers;
        let mut candidates: Vec<Candidate> = Vec::new();
        for (t, split) in current.iter().enumerate() {
            for &old in &split.olds {
                for &k in &by_tail[j][old] {
                    let a = &d.arcs[j][k];
                    let acc = split.acc + contribution(j, a.label)?;
                    if feasibility
                        && acc + completion[j + 1][a.head] + cut.constant < -FEASIBILITY_TOLERANCE
                    {
                        continue;
                    }
                    let (label, weight) = match a.label {
                        Label::Upper(z) if !feasibility => {
                            let z = z.min(acc + cut.constant);
                            (
                                Label::Upper(z),
                                a.weight - (a.label.bound().unwrap_or(0.0) - z),
                            )
                        }
                        _ => (a.label, a.weight),
                    };
                    candidates.push(Candidate {
                        tail: t,
                        old_head: a.head,
                        label,
                        weight,
                        acc,
                    });
                }
            }
        }

        if last {
            let mut layer_arcs: Vec<DiagramArc> = Vec::new();
            for c in candidates {
                push_arc(
                    &mut layer_arcs,
                    DiagramArc {
                        tail: c.tail,
                        head: 0,
                        label: c.label,
                        weight: c.weight,
                    },
                );
            }
            arcs.push(layer_arcs);
            nodes.push(vec![d.nodes[layers][0].clone()]);
            break;
        }

        // Split on (input node, accumulated value).
        let mut index: HashMap<(usize, i64), usize> = HashMap::new();
        let mut splits: Vec<Split> = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        let mut slot_of: Vec<usize> = Vec::with_capacity(candidates.len());
        for c in &candidates {
            let key = (c.old_head, (c.acc / ACC_TOLERANCE).round() as i64);
            let tail = &current[c.tail];
            let top = tail.top + c.weight;
            let slot = *index.entry(key).or_insert_with(|| {
                let old = &d.nodes[j + 1][c.old_head];
                splits.push(Split {
                    olds: vec![c.old_head],
                    acc: c.acc,
                    state: old.state.clone(),
                    exact: old.exact && tail.exact,
                    top,
                });
                counts.push(0);
                splits.len() - 1
            });
            counts[slot] += 1;
            if counts[slot] > 1 {
                splits[slot].exact = false;
                splits[slot].top = splits[slot].top.max(top);
            }
            slot_of.push(slot);
        }

        let mut remap: Vec<Option<usize>> = (0..splits.len()).map(Some).collect();
        if splits.len() > width {
            match d.kind {
                DiagramKind::Exact => {}
                DiagramKind::Restricted => {
                    dropped = true;
                    let score: Vec<f64> = splits
                        .iter()
                        .map(|s| {
                            let old = s.olds[0];
                            let mut est = bottom[j + 1][old];
                            if !feasibility {
                                est = est.min(s.acc + cut.constant + completion[j + 1][old]);
                            }
                            s.top + est
                        })
                        .collect();
                    let mut order: Vec<usize> = (0..splits.len()).collect();
                    order.sort_by(|&a, &b| {
                        score[b]
                            .total_cmp(&score[a])
                            .then(splits[b].state.len().cmp(&splits[a].state.len()))
                            .then(splits[a].state.lex_cmp(&splits[b].state))
                            .then(a.cmp(&b))
                    });
                    let mut keep = order[..width].to_vec();
                    keep.sort_unstable();
                    remap = vec![None; splits.len()];
                    let mut kept = Vec::with_capacity(width);
                    for (new, &old) in keep.iter().enumerate() {
                        remap[old] = Some(new);
                        kept.push(splits[old].clone());
                    }
                    splits = kept;
                }
                DiagramKind::Relaxed => {
                    merged = true;
                    let items: Vec<(StateSet, (Split, Vec<usize>))> = splits
                        .into_iter()
                        .enumerate()
                        .map(|(k, s)| (s.state.clone(), (s, vec![k])))
                        .collect();
                    let out = merge_to_width(items, width, |(mut a, mut ka), (b, kb)| {
                        a.olds.extend(b.olds);
                        a.olds.sort_unstable();
                        a.olds.dedup();
                        a.acc = a.acc.max(b.acc);
                        a.top = a.top.max(b.top);
                        a.exact = false;
                        ka.extend(kb);
                        (a, ka)
                    });
                    remap = vec![None; remap.len()];
                    splits = Vec::with_capacity(out.len());
                    for (new, m) in out.into_iter().enumerate() {
                        let (mut s, members) = m.payload;
                        s.state = m.state;
                        for k in members {
                            remap[k] = Some(new);
                        }
                        splits.push(s);
                    }
                }
            }
        }

        let mut layer_arcs: Vec<DiagramArc> = Vec::with_capacity(candidates.len());
        for (c, &slot) in candidates.iter().zip(&slot_of) {
            if let Some(head) = remap[slot] {
                push_arc(
                    &mut layer_arcs,
                    DiagramArc {
                        tail: c.tail,
                        head,
                        label: c.label,
                        weight: c.weight,
                    },
                );
            }
        }
        arcs.push(layer_arcs);
        nodes.push(
            splits
                .iter()
                .map(|s| DiagramNode {
                    state: s.state.clone(),
                    exact: s.exact,
                })
                .collect(),
        );
        current = splits;
        if current.is_empty() {
            // Remaining layers stay empty.
            for _ in j + 1..layers {
                arcs.push(Vec::new());
                nodes.push(Vec::new());
            }
            break;
        }
    }

    let exact = match d.kind {
        DiagramKind::Exact => d.exact,
        DiagramKind::Restricted => d.exact && !dropped,
        DiagramKind::Relaxed => d.exact && !merged,
    };
    let mut out = Diagram {
        kind: d.kind,
        width_limit: d.width_limit,
        nodes,
        arcs,
        last_exact_layer: 0,
        exact,
        has_bound_layer: d.has_bound_layer,
    };
    out.prune_dead();
    if out.is_empty() {
        return Err(DiagramError::Infeasible);
    }
    out.recompute_last_exact();
    Ok(out)
}

/// Adds an arc unless an identical (tail, head, label) arc exists, in which
/// case the larger weight wins.
fn push_arc(layer: &mut Vec<DiagramArc>, arc: DiagramArc) {
    if let Some(existing) = layer
        .iter_mut()
        .rev()
        .take_while(|a| a.tail == arc.tail)
        .find(|a| a.head == arc.head && a.label == arc.label)
    {
        existing.weight = existing.weight.max(arc.weight);
        return;
    }
    layer.push(arc);
}

#[cfg(test)]
mod tests {
    use super::super::fixtures;
    use super::super::MasterBuilder;
    use super::*;
    use crate::transform::{cut_to_layer_contributions, w_to_y, NsnmIndexing, WAssignment};

    #[test]
    fn master_example_refines_to_21() {
        let d = fixtures::two_var_master(1000.0);
        assert_eq!(
            d.longest_path().unwrap().labels.last(),
            Some(&Label::Upper(25.0))
        );
        let before = d.longest_path().unwrap();
        assert_eq!(before.assignment(), vec![1, 1]);
        assert_eq!(before.value, 31.0);
        let r = refine(&d, &fixtures::two_var_master_cut()).unwrap();
        let after = r.longest_path().unwrap();
        assert_eq!(after.assignment(), vec![1, 1]);
        assert_eq!(after.bound(), Some(15.0));
        assert_eq!(after.value, 21.0);
        let uppers: Vec<f64> = r.arcs[2]
            .iter()
            .filter_map(|a| match a.label {
                Label::Upper(z) => Some(z),
                _ => None,
            })
            .collect();
        assert_eq!(uppers, vec![15.0, 10.0]);
        // Lower labels are untouched.
        assert_eq!(
            r.arcs[2]
                .iter()
                .filter(|a| a.label == Label::Lower(-1000.0))
                .count(),
            2
        );
    }

    #[test]
    fn zero_cut_is_identity() {
        let idx = NsnmIndexing::from_shapes(&[(2, 3), (2, 2)]);
        let d = MasterBuilder::new(&idx, 50.0).exact();
        for sense in [CutSense::Feasibility, CutSense::Optimality] {
            let cut = LayerCut {
                constant: 50.0,
                ..LayerCut::zero(sense, &idx)
            };
            let r = refine(&d, &cut).unwrap();
            assert_eq!(r.node_count(), d.node_count());
            assert_eq!(r.arc_count(), d.arc_count());
            assert_eq!(r.assignments(1 << 16), d.assignments(1 << 16));
        }
    }

    #[test]
    fn feasibility_cut_removes_exactly_the_violators() {
        let idx = NsnmIndexing::from_shapes(&[(2, 2)]);
        let d = MasterBuilder::new(&idx, 10.0).exact();
        // -y11 - y22 + 1.5 >= 0 removes only w = (1, 2).
        let mut a = vec![0.0; idx.y_len()];
        a[idx.y_index(0, 0, 0)] = -1.0;
        a[idx.y_index(0, 1, 1)] = -1.0;
        let cut = cut_to_layer_contributions(&a, 1.5, CutSense::Feasibility, &idx).unwrap();
        let r = refine(&d, &cut).unwrap();
        let before = d.assignments(100);
        let after = r.assignments(100);
        assert_eq!(before.len(), 7);
        assert_eq!(after.len(), 6);
        assert!(!after.contains(&vec![1, 2]));
    }

    #[test]
    fn refine_matches_enumeration_on_random_cuts() {
        use rand::{Rng, SeedableRng};
        let idx = NsnmIndexing::from_shapes(&[(3, 2), (2, 3)]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..40 {
            let a: Vec<f64> = (0..idx.y_len())
                .map(|_| rng.gen_range(-3..=3) as f64)
                .collect();
            let c = rng.gen_range(-2..=4) as f64;
            let sense = if rng.gen_bool(0.5) {
                CutSense::Feasibility
            } else {
                CutSense::Optimality
            };
            let cut = cut_to_layer_contributions(&a, c, sense, &idx).unwrap();
            let d = MasterBuilder::new(&idx, 100.0).exact();
            let expected: Vec<(Vec<u32>, f64)> = d
                .assignments(1 << 16)
                .into_iter()
                .map(|w| {
                    let y = w_to_y(&WAssignment::from_flat(&w, &idx).unwrap(), &idx)
                        .unwrap()
                        .flat();
                    let v = a.iter().zip(&y).map(|(x, v)| x * v).sum::<f64>() + c;
                    (w, v)
                })
                .collect();
            match refine(&d, &cut) {
                Ok(r) => {
                    let got = r.assignments(1 << 16);
                    for (w, v) in &expected {
                        let keep = sense == CutSense::Optimality || *v >= 0.0;
                        assert_eq!(got.contains(w), keep);
                    }
                    if sense == CutSense::Optimality {
                        for (labels, _) in r.paths(1 << 16) {
                            if let Some(Label::Upper(z)) = labels.last() {
                                let w: Vec<u32> = labels.iter().filter_map(|l| l.value()).collect();
                                let v = expected.iter().find(|(x, _)| *x == w).unwrap().1;
                                assert_eq!(*z, v.min(100.0));
                            }
                        }
                    }
                }
                Err(DiagramError::Infeasible) => {
                    assert!(
                        expected.iter().all(|(_, v)| *v < 0.0) && sense == CutSense::Feasibility
                    );
                }
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn relaxed_refinement_stays_a_relaxation() {
        use rand::{Rng, SeedableRng};
        let idx = NsnmIndexing::from_shapes(&[(3, 3), (2, 2)]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for w in [1, 2, 4] {
            let mut exact = MasterBuilder::new(&idx, 100.0).exact();
            let mut relaxed = MasterBuilder::new(&idx, 100.0).relaxed(w);
            for _ in 0..6 {
                let a: Vec<f64> = (0..idx.y_len())
                    .map(|_| rng.gen_range(-3..=3) as f64)
                    .collect();
                let sense = if rng.gen_bool(0.4) {
                    CutSense::Feasibility
                } else {
                    CutSense::Optimality
                };
                let cut = cut_to_layer_contributions(&a, 3.0, sense, &idx).unwrap();
                let (Ok(e), Ok(r)) = (refine(&exact, &cut), refine(&relaxed, &cut)) else {
                    break;
                };
                assert!(r.width() <= w);
                assert!(e.assignments(1 << 16).is_subset(&r.assignments(1 << 16)));
                assert!(r.longest_path().unwrap().value >= e.longest_path().unwrap().value - 1e-9);
                exact = e;
                relaxed = r;
            }
        }
    }

    #[test]
    fn cut_shape_is_checked() {
        let d = fixtures::three_var_exact();
        let idx = NsnmIndexing::from_shapes(&[(2, 2)]);
        let cut = LayerCut::zero(CutSense::Feasibility, &idx);
        assert!(matches!(refine(&d, &cut), Err(DiagramError::CutShape(_))));
        let opt = LayerCut {
            sense: CutSense::Optimality,
            tables: vec![vec![0.0, 1.0]; 3],
            constant: 0.0,
        };
        assert!(matches!(refine(&d, &opt), Err(DiagramError::CutShape(_))));
    }
}
