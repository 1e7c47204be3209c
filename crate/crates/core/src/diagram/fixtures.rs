//! Hand-built diagrams for small textbook problems, used in tests and docs.
//!
//! The three-variable family encodes the feasible set
//! {(1,0,0), (1,0,1), (0,1,0), (0,0,1), (0,0,0)} with objective
//! 5·y1 + 10·y2 + 4·y3. The two-variable master encodes {(0,0), (1,1)} with
//! objective 2·y1 + 4·y2 + z and z ≤ 25.

use super::{Diagram, DiagramArc, DiagramKind, DiagramNode, Label, StateSet};
use crate::transform::{CutSense, LayerCut};

fn layers(sizes: &[usize]) -> Vec<Vec<DiagramNode>> {
    sizes
        .iter()
        .map(|&n| {
            vec![
                DiagramNode {
                    state: StateSet::empty(),
                    exact: true
                };
                n
            ]
        })
        .collect()
}

fn value(tail: usize, head: usize, v: u32, weight: f64) -> DiagramArc {
    DiagramArc {
        tail,
        head,
        label: Label::Value(v),
        weight,
    }
}

/// Coefficients of the three-variable objective.
pub const THREE_VAR_WEIGHTS: [f64; 3] = [5.0, 10.0, 4.0];

fn w(layer: usize, v: u32) -> f64 {
    if v == 1 {
        THREE_VAR_WEIGHTS[layer]
    } else {
        0.0
    }
}

/// Exact diagram of width 3.
pub fn three_var_exact() -> Diagram {
    let arcs = vec![
        vec![value(0, 0, 1, w(0, 1)), value(0, 1, 0, 0.0)],
        vec![
            value(0, 0, 0, 0.0),
            value(1, 1, 1, w(1, 1)),
            value(1, 2, 0, 0.0),
        ],
        vec![
            value(0, 0, 0, 0.0),
            value(0, 0, 1, w(2, 1)),
            value(1, 0, 0, 0.0),
            value(2, 0, 1, w(2, 1)),
            value(2, 0, 0, 0.0),
        ],
    ];
    Diagram::from_parts(DiagramKind::Exact, None, layers(&[1, 2, 3, 1]), arcs, false)
        .expect("valid fixture")
}

/// Width-2 relaxation: the y1=0,y2=1 branch shares a node with y1=1,y2=0.
pub fn three_var_relaxed() -> Diagram {
    let arcs = vec![
        vec![value(0, 0, 1, w(0, 1)), value(0, 1, 0, 0.0)],
        vec![
            value(0, 0, 0, 0.0),
            value(1, 0, 1, w(1, 1)),
            value(1, 1, 0, 0.0),
        ],
        vec![
            value(0, 0, 0, 0.0),
            value(0, 0, 1, w(2, 1)),
            value(1, 0, 1, w(2, 1)),
            value(1, 0, 0, 0.0),
        ],
    ];
    let mut nodes = layers(&[1, 2, 2, 1]);
    nodes[2][0].exact = false;
    let mut d = Diagram::from_parts(DiagramKind::Relaxed, Some(2), nodes, arcs, false)
        .expect("valid fixture");
    d.exact = false;
    d
}

/// Width-2 restriction that drops the y2=1 branch.
pub fn three_var_restricted() -> Diagram {
    let arcs = vec![
        vec![value(0, 0, 1, w(0, 1)), value(0, 1, 0, 0.0)],
        vec![value(0, 0, 0, 0.0), value(1, 1, 0, 0.0)],
        vec![
            value(0, 0, 0, 0.0),
            value(0, 0, 1, w(2, 1)),
            value(1, 0, 1, w(2, 1)),
            value(1, 0, 0, 0.0),
        ],
    ];
    let mut d = Diagram::from_parts(
        DiagramKind::Restricted,
        Some(2),
        layers(&[1, 2, 2, 1]),
        arcs,
        false,
    )
    .expect("valid fixture");
    d.exact = false;
    d
}

/// Master diagram over {(0,0), (1,1)} with bound arcs +25 and `-big_m`.
pub fn two_var_master(big_m: f64) -> Diagram {
    let bound = |tail: usize| {
        [
            DiagramArc {
                tail,
                head: 0,
                label: Label::Upper(25.0),
                weight: 25.0,
            },
            DiagramArc {
                tail,
                head: 0,
                label: Label::Lower(-big_m),
                weight: -big_m,
            },
        ]
    };
    let arcs = vec![
        vec![value(0, 0, 1, 2.0), value(0, 1, 0, 0.0)],
        vec![value(0, 0, 1, 4.0), value(1, 1, 0, 0.0)],
        bound(0).into_iter().chain(bound(1)).collect(),
    ];
    Diagram::from_parts(DiagramKind::Exact, None, layers(&[1, 2, 2, 1]), arcs, true)
        .expect("valid fixture")
}

/// The cut z ≤ 3·y1 + 2·y2 + 10 in per-layer form.
pub fn two_var_master_cut() -> LayerCut {
    LayerCut {
        sense: CutSense::Optimality,
        tables: vec![vec![0.0, 3.0], vec![0.0, 2.0]],
        constant: 10.0,
    }
}
