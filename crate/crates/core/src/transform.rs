//! Matching variables in two encodings. The binary form `y[q][i][j]` says
//! whether incoming arc `i` of node `q` is matched with outgoing arc `j`; the
//! compact form `w[q][i]` stores the 1-based index of the matched outgoing arc,
//! or 0 when `i` is unmatched. Decision diagrams work on the compact form, the
//! flow subproblems on the binary one.

use thiserror::Error;

use crate::model::{ArcId, Network, NodeId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TransformError {
    #[error("node {node}: outgoing index {value} used by more than one incoming arc")]
    DuplicateMatch { node: NodeId, value: u32 },
    #[error("node {node}: entry {value} exceeds the {limit} outgoing arcs")]
    OutOfRange {
        node: NodeId,
        value: u32,
        limit: usize,
    },
    #[error("node {node}: incoming arc {row} is matched {count} times")]
    RowSum {
        node: NodeId,
        row: usize,
        count: usize,
    },
    #[error("node {node}: outgoing arc {col} is matched {count} times")]
    ColumnSum {
        node: NodeId,
        col: usize,
        count: usize,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("arcs {incoming} and {outgoing} do not form a pair at a no-split no-merge node")]
    UnknownPair { incoming: ArcId, outgoing: ArcId },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeIndexing {
    pub node: NodeId,
    /// Position `k` holds the incoming arc with index `k + 1`.
    pub in_arcs: Vec<ArcId>,
    pub out_arcs: Vec<ArcId>,
}

impl NodeIndexing {
    pub fn in_degree(&self) -> usize {
        self.in_arcs.len()
    }

    pub fn out_degree(&self) -> usize {
        self.out_arcs.len()
    }

    /// 1-based index of an incoming arc.
    pub fn in_index(&self, arc: ArcId) -> Option<usize> {
        self.in_arcs.iter().position(|&a| a == arc).map(|p| p + 1)
    }

    /// 1-based index of an outgoing arc.
    pub fn out_index(&self, arc: ArcId) -> Option<usize> {
        self.out_arcs.iter().position(|&a| a == arc).map(|p| p + 1)
    }
}

/// Deterministic arc numbering at every no-split no-merge node, together with
/// the flat layouts of the compact and binary vectors built on it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NsnmIndexing {
    blocks: Vec<NodeIndexing>,
    w_offset: Vec<usize>,
    y_offset: Vec<usize>,
}

impl NsnmIndexing {
    pub fn new(network: &Network) -> Self {
        let blocks = network
            .nsnm_nodes()
            .iter()
            .map(|&q| NodeIndexing {
                node: q,
                in_arcs: network.in_arcs(q).to_vec(),
                out_arcs: network.out_arcs(q).to_vec(),
            })
            .collect();
        Self::from_blocks(blocks)
    }

    /// Builds an indexing from explicit per-node arc lists (mainly for tests
    /// on bare matching nodes).
    pub fn from_blocks(blocks: Vec<NodeIndexing>) -> Self {
        let mut w_offset = Vec::with_capacity(blocks.len() + 1);
        let mut y_offset = Vec::with_capacity(blocks.len() + 1);
        let (mut w, mut y) = (0, 0);
        for b in &blocks {
            w_offset.push(w);
            y_offset.push(y);
            w += b.in_degree();
            y += b.in_degree() * b.out_degree();
        }
        w_offset.push(w);
        y_offset.push(y);
        NsnmIndexing {
            blocks,
            w_offset,
            y_offset,
        }
    }

    /// A bare indexing for nodes with the given (in, out) degrees, with
    /// synthetic arc ids.
    pub fn from_shapes(shapes: &[(usize, usize)]) -> Self {
        let mut next = 0;
        let mut blocks = Vec::new();
        for (k, &(m, n)) in shapes.iter().enumerate() {
            let in_arcs = (next..next + m).map(ArcId).collect();
            next += m;
            let out_arcs = (next..next + n).map(ArcId).collect();
            next += n;
            blocks.push(NodeIndexing {
                node: NodeId(k),
                in_arcs,
                out_arcs,
            });
        }
        Self::from_blocks(blocks)
    }

    pub fn blocks(&self) -> &[NodeIndexing] {
        &self.blocks
    }

    /// Length of the flat compact vector, which is also the number of
    /// matching layers in a master diagram.
    pub fn w_len(&self) -> usize {
        *self.w_offset.last().unwrap_or(&0)
    }

    /// Length of the flat binary vector.
    pub fn y_len(&self) -> usize {
        *self.y_offset.last().unwrap_or(&0)
    }

    /// Arc layers a binary-space diagram would need: one per pair plus the
    /// bound layer.
    pub fn y_space_layers(&self) -> usize {
        self.y_len() + 1
    }

    pub fn w_offset(&self, block: usize) -> usize {
        self.w_offset[block]
    }

    /// Block and 0-based incoming position of a flat compact coordinate.
    pub fn layer_position(&self, layer: usize) -> (usize, usize) {
        let block = self.w_offset.partition_point(|&o| o <= layer) - 1;
        (block, layer - self.w_offset[block])
    }

    /// Flat binary coordinate of the pair (incoming position `i`, outgoing
    /// position `j`), both 0-based, at `block`.
    pub fn y_index(&self, block: usize, i: usize, j: usize) -> usize {
        self.y_offset[block] + i * self.blocks[block].out_degree() + j
    }

    /// Flat binary coordinate of an arc pair, if it exists.
    pub fn pair_index(&self, incoming: ArcId, outgoing: ArcId) -> Option<usize> {
        for (b, block) in self.blocks.iter().enumerate() {
            if let (Some(i), Some(j)) = (block.in_index(incoming), block.out_index(outgoing)) {
                return Some(self.y_index(b, i - 1, j - 1));
            }
        }
        None
    }

    /// Number of matchings a node with `m` incoming and `n` outgoing arcs
    /// admits, as Σ_k C(m,k)·C(n,k)·k!.
    pub fn matching_count(m: usize, n: usize) -> u128 {
        let mut total = 0u128;
        for k in 0..=m.min(n) {
            total += binomial(m, k) * binomial(n, k) * factorial(k);
        }
        total
    }

    pub fn total_matching_count(&self) -> u128 {
        self.blocks
            .iter()
            .map(|b| Self::matching_count(b.in_degree(), b.out_degree()))
            .fold(1u128, |acc, c| acc.saturating_mul(c))
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    let mut r = 1u128;
    for i in 0..k {
        r = r * (n - i) as u128 / (i as u128 + 1);
    }
    r
}

fn factorial(k: usize) -> u128 {
    (1..=k as u128).product()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WAssignment {
    pub blocks: Vec<Vec<u32>>,
}

impl WAssignment {
    pub fn zeros(idx: &NsnmIndexing) -> Self {
        WAssignment {
            blocks: idx
                .blocks()
                .iter()
                .map(|b| vec![0; b.in_degree()])
                .collect(),
        }
    }

    pub fn from_flat(flat: &[u32], idx: &NsnmIndexing) -> Result<Self, TransformError> {
        if flat.len() != idx.w_len() {
            return Err(TransformError::Shape(format!(
                "expected {} entries, got {}",
                idx.w_len(),
                flat.len()
            )));
        }
        let blocks = (0..idx.blocks().len())
            .map(|b| flat[idx.w_offset(b)..idx.w_offset(b + 1)].to_vec())
            .collect();
        Ok(WAssignment { blocks })
    }

    pub fn flat(&self) -> Vec<u32> {
        self.blocks.concat()
    }

    pub fn check(&self, idx: &NsnmIndexing) -> Result<(), TransformError> {
        check_shape(self.blocks.len(), idx)?;
        for (block, w) in idx.blocks().iter().zip(&self.blocks) {
            if w.len() != block.in_degree() {
                return Err(TransformError::Shape(format!(
                    "node {} expects {} entries",
                    block.node,
                    block.in_degree()
                )));
            }
            let mut seen = vec![false; block.out_degree() + 1];
            for &v in w {
                if v as usize > block.out_degree() {
                    return Err(TransformError::OutOfRange {
                        node: block.node,
                        value: v,
                        limit: block.out_degree(),
                    });
                }
                if v > 0 {
                    if seen[v as usize] {
                        return Err(TransformError::DuplicateMatch {
                            node: block.node,
                            value: v,
                        });
                    }
                    seen[v as usize] = true;
                }
            }
        }
        Ok(())
    }
}

fn check_shape(blocks: usize, idx: &NsnmIndexing) -> Result<(), TransformError> {
    if blocks != idx.blocks().len() {
        return Err(TransformError::Shape(format!(
            "expected {} nodes, got {blocks}",
            idx.blocks().len()
        )));
    }
    Ok(())
}

/// One 0/1 matrix per node, rows indexed by incoming arcs.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct YAssignment {
    pub blocks: Vec<Vec<Vec<bool>>>,
}

impl YAssignment {
    pub fn zeros(idx: &NsnmIndexing) -> Self {
        YAssignment {
            blocks: idx
                .blocks()
                .iter()
                .map(|b| vec![vec![false; b.out_degree()]; b.in_degree()])
                .collect(),
        }
    }

    /// Flat 0/1 vector in [`NsnmIndexing::y_index`] order.
    pub fn flat(&self) -> Vec<f64> {
        self.blocks
            .iter()
            .flat_map(|m| {
                m.iter()
                    .flat_map(|row| row.iter().map(|&b| if b { 1.0 } else { 0.0 }))
            })
            .collect()
    }

    pub fn check(&self, idx: &NsnmIndexing) -> Result<(), TransformError> {
        check_shape(self.blocks.len(), idx)?;
        for (block, y) in idx.blocks().iter().zip(&self.blocks) {
            if y.len() != block.in_degree() || y.iter().any(|r| r.len() != block.out_degree()) {
                return Err(TransformError::Shape(format!(
                    "node {} matrix has the wrong shape",
                    block.node
                )));
            }
            for (i, row) in y.iter().enumerate() {
                let count = row.iter().filter(|&&b| b).count();
                if count > 1 {
                    return Err(TransformError::RowSum {
                        node: block.node,
                        row: i + 1,
                        count,
                    });
                }
            }
            for j in 0..block.out_degree() {
                let count = y.iter().filter(|row| row[j]).count();
                if count > 1 {
                    return Err(TransformError::ColumnSum {
                        node: block.node,
                        col: j + 1,
                        count,
                    });
                }
            }
        }
        Ok(())
    }
}

/// y_ij = 1 exactly when w_i = j.
pub fn w_to_y(w: &WAssignment, idx: &NsnmIndexing) -> Result<YAssignment, TransformError> {
    w.check(idx)?;
    let mut y = YAssignment::zeros(idx);
    for (matrix, wq) in y.blocks.iter_mut().zip(&w.blocks) {
        for (row, &v) in matrix.iter_mut().zip(wq) {
            if v > 0 {
                row[v as usize - 1] = true;
            }
        }
    }
    Ok(y)
}

/// Flat 0/1 image of any in-range compact vector, including ones that reuse
/// an outgoing index (as relaxed diagrams may produce).
pub fn w_flat_to_y_values(flat: &[u32], idx: &NsnmIndexing) -> Vec<f64> {
    let mut y = vec![0.0; idx.y_len()];
    for (layer, &v) in flat.iter().enumerate() {
        if v > 0 {
            let (b, i) = idx.layer_position(layer);
            y[idx.y_index(b, i, v as usize - 1)] = 1.0;
        }
    }
    y
}

/// Whether a flat compact vector is a matching at every node.
pub fn is_matching(flat: &[u32], idx: &NsnmIndexing) -> bool {
    WAssignment::from_flat(flat, idx)
        .and_then(|w| w.check(idx))
        .is_ok()
}

/// w_i = Σ_j j·y_ij.
pub fn y_to_w(y: &YAssignment, idx: &NsnmIndexing) -> Result<WAssignment, TransformError> {
    y.check(idx)?;
    let blocks = y
        .blocks
        .iter()
        .map(|m| {
            m.iter()
                .map(|row| row.iter().position(|&b| b).map_or(0, |j| j as u32 + 1))
                .collect()
        })
        .collect();
    Ok(WAssignment { blocks })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CutSense {
    /// z ≤ Σ g + constant
    Optimality,
    /// Σ g + constant ≥ 0
    Feasibility,
}

/// A linear inequality in y rewritten as one lookup table per compact layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCut {
    pub sense: CutSense,
    /// `tables[layer][label]` is the contribution of choosing `label` at
    /// `layer`.
    pub tables: Vec<Vec<f64>>,
    pub constant: f64,
}

impl LayerCut {
    pub fn zero(sense: CutSense, idx: &NsnmIndexing) -> Self {
        let tables = (0..idx.w_len())
            .map(|l| vec![0.0; idx.blocks()[idx.layer_position(l).0].out_degree() + 1])
            .collect();
        LayerCut {
            sense,
            tables,
            constant: 0.0,
        }
    }

    /// Σ_layers table[layer][w_layer] + constant.
    pub fn evaluate(&self, flat_w: &[u32]) -> f64 {
        self.tables
            .iter()
            .zip(flat_w)
            .map(|(t, &v)| t[v as usize])
            .sum::<f64>()
            + self.constant
    }
}

/// Rewrites a·y + constant as per-layer tables over the compact labels.
/// `coefficients` is a flat vector in [`NsnmIndexing::y_index`] order.
pub fn cut_to_layer_contributions(
    coefficients: &[f64],
    constant: f64,
    sense: CutSense,
    idx: &NsnmIndexing,
) -> Result<LayerCut, TransformError> {
    if coefficients.len() != idx.y_len() {
        return Err(TransformError::Shape(format!(
            "expected {} coefficients, got {}",
            idx.y_len(),
            coefficients.len()
        )));
    }
    let mut tables = Vec::with_capacity(idx.w_len());
    for (b, block) in idx.blocks().iter().enumerate() {
        for i in 0..block.in_degree() {
            let mut table = vec![0.0; block.out_degree() + 1];
            for j in 0..block.out_degree() {
                table[j + 1] = coefficients[idx.y_index(b, i, j)];
            }
            tables.push(table);
        }
    }
    Ok(LayerCut {
        sense,
        tables,
        constant,
    })
}

/// Builds a flat coefficient vector from (incoming arc, outgoing arc,
/// coefficient) triples.
pub fn coefficients_from_pairs(
    pairs: &[(ArcId, ArcId, f64)],
    idx: &NsnmIndexing,
) -> Result<Vec<f64>, TransformError> {
    let mut out = vec![0.0; idx.y_len()];
    for &(incoming, outgoing, a) in pairs {
        let k = idx
            .pair_index(incoming, outgoing)
            .ok_or(TransformError::UnknownPair { incoming, outgoing })?;
        out[k] += a;
    }
    Ok(out)
}

/// Every matching of one node in lexicographic order of its compact vector.
pub fn node_matchings(in_degree: usize, out_degree: usize) -> Vec<Vec<u32>> {
    fn rec(
        pos: usize,
        m: usize,
        n: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<u32>,
        out: &mut Vec<Vec<u32>>,
    ) {
        if pos == m {
            out.push(cur.clone());
            return;
        }
        for v in 0..=n {
            if v > 0 && used[v] {
                continue;
            }
            if v > 0 {
                used[v] = true;
            }
            cur.push(v as u32);
            rec(pos + 1, m, n, used, cur, out);
            cur.pop();
            if v > 0 {
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(
        0,
        in_degree,
        out_degree,
        &mut vec![false; out_degree + 1],
        &mut Vec::new(),
        &mut out,
    );
    out
}
