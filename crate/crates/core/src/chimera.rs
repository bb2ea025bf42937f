//! Chimera topology, bipartite chain embedding and RBM-to-QUBO conversion.
//!
//! Qubit numbering: cell `(r, c)` holds `2 * cell_size` qubits. Shore 0 is
//! the vertical side (coupled to the same position in cells `(r ± 1, c)`),
//! shore 1 the horizontal side (coupled to `(r, c ± 1)`). Within a cell every
//! shore-0 qubit is coupled to every shore-1 qubit.
//!
//! Index of qubit `k` on shore `s` of cell `(r, c)` is
//! `((r * cols + c) * 2 + s) * cell_size + k`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::sampler::RbmParameters;
use crate::{Error, Result};

pub const DEFAULT_CELL_SIZE: usize = 4;

const VERTICAL: usize = 0;
const HORIZONTAL: usize = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChimeraGraph {
    pub rows: usize,
    pub cols: usize,
    pub cell_size: usize,
    pub n_qubits: usize,
    /// Couplers as `(low, high)` qubit pairs, sorted.
    pub edges: Vec<(usize, usize)>,
}

impl ChimeraGraph {
    pub fn qubit(&self, row: usize, col: usize, shore: usize, k: usize) -> usize {
        ((row * self.cols + col) * 2 + shore) * self.cell_size + k
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let key = (a.min(b), a.max(b));
        self.edges.binary_search(&key).is_ok()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    /// Closed-form coupler count for a `rows × cols` grid of `K(L, L)` cells.
    pub fn expected_edge_count(rows: usize, cols: usize, cell_size: usize) -> usize {
        rows * cols * cell_size * cell_size
            + cell_size * (rows * (cols - 1) + cols * (rows - 1))
    }
}

/// Builds a `rows × cols` chimera grid of `K(cell_size, cell_size)` cells.
pub fn build_chimera(rows: usize, cols: usize, cell_size: usize) -> Result<ChimeraGraph> {
    if rows == 0 || cols == 0 || cell_size == 0 {
        return Err(Error::invalid("chimera dimensions must be at least 1"));
    }
    let mut g = ChimeraGraph {
        rows,
        cols,
        cell_size,
        n_qubits: rows * cols * 2 * cell_size,
        edges: Vec::new(),
    };
    let mut edges = Vec::with_capacity(ChimeraGraph::expected_edge_count(rows, cols, cell_size));
    for r in 0..rows {
        for c in 0..cols {
            for a in 0..cell_size {
                for b in 0..cell_size {
                    edges.push((g.qubit(r, c, VERTICAL, a), g.qubit(r, c, HORIZONTAL, b)));
                }
            }
            for k in 0..cell_size {
                if r + 1 < rows {
                    edges.push((g.qubit(r, c, VERTICAL, k), g.qubit(r + 1, c, VERTICAL, k)));
                }
                if c + 1 < cols {
                    edges.push((g.qubit(r, c, HORIZONTAL, k), g.qubit(r, c + 1, HORIZONTAL, k)));
                }
            }
        }
    }
    for e in edges.iter_mut() {
        *e = (e.0.min(e.1), e.0.max(e.1));
    }
    edges.sort_unstable();
    g.edges = edges;
    Ok(g)
}

/// Logical RBM units mapped to chains of physical qubits.
///
/// Chains are stored as paths: consecutive qubits of a chain share a coupler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub visible_chains: Vec<Vec<usize>>,
    pub hidden_chains: Vec<Vec<usize>>,
    /// Physical coupler `(visible qubit, hidden qubit)` carrying `W[i][j]`,
    /// row-major over `(i, j)`.
    pub couplers: Vec<(usize, usize)>,
    pub chain_strength: f64,
}

impl Embedding {
    pub fn n_visible(&self) -> usize {
        self.visible_chains.len()
    }

    pub fn n_hidden(&self) -> usize {
        self.hidden_chains.len()
    }

    pub fn coupler(&self, i: usize, j: usize) -> (usize, usize) {
        self.couplers[i * self.n_hidden() + j]
    }

    pub fn chains(&self) -> impl Iterator<Item = &Vec<usize>> {
        self.visible_chains.iter().chain(self.hidden_chains.iter())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("embedding serializes")
    }

    /// Checks chain disjointness, chain connectivity and edge coverage
    /// against `graph`.
    pub fn validate(&self, graph: &ChimeraGraph) -> Result<()> {
        let mut seen = BTreeSet::new();
        for chain in self.chains() {
            if chain.is_empty() {
                return Err(Error::invalid("embedding contains an empty chain"));
            }
            for &q in chain {
                if q >= graph.n_qubits {
                    return Err(Error::invalid(format!("qubit {q} is not in the graph")));
                }
                if !seen.insert(q) {
                    return Err(Error::invalid(format!("qubit {q} belongs to two chains")));
                }
            }
            if !is_connected(chain, graph) {
                return Err(Error::invalid(format!("chain {chain:?} is not connected")));
            }
        }
        if self.couplers.len() != self.n_visible() * self.n_hidden() {
            return Err(Error::invalid("coupler table does not cover every RBM edge"));
        }
        for i in 0..self.n_visible() {
            for j in 0..self.n_hidden() {
                let (qv, qh) = self.coupler(i, j);
                if !self.visible_chains[i].contains(&qv)
                    || !self.hidden_chains[j].contains(&qh)
                    || !graph.has_edge(qv, qh)
                {
                    return Err(Error::invalid(format!(
                        "no physical coupler joins visible {i} and hidden {j}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Physical assignment with every chain set to its logical value.
    pub fn embed_state(&self, v: &[u8], h: &[u8], n_qubits: usize) -> Vec<u8> {
        let mut x = vec![0u8; n_qubits];
        for (chain, &bit) in self.visible_chains.iter().zip(v) {
            chain.iter().for_each(|&q| x[q] = bit);
        }
        for (chain, &bit) in self.hidden_chains.iter().zip(h) {
            chain.iter().for_each(|&q| x[q] = bit);
        }
        x
    }
}

fn is_connected(chain: &[usize], graph: &ChimeraGraph) -> bool {
    let members: BTreeSet<usize> = chain.iter().copied().collect();
    let mut reached = BTreeSet::from([chain[0]]);
    let mut queue = VecDeque::from([chain[0]]);
    while let Some(q) = queue.pop_front() {
        for &n in &members {
            if !reached.contains(&n) && graph.has_edge(q, n) {
                reached.insert(n);
                queue.push_back(n);
            }
        }
    }
    reached.len() == members.len()
}

/// Embeds the complete bipartite RBM graph with one-dimensional chains.
///
/// Visible unit `i` occupies position `i % L` of block row `i / L` as a
/// horizontal chain; hidden unit `j` occupies position `j % L` of block
/// column `j / L` as a vertical chain. The two chains meet in cell
/// `(i / L, j / L)` where an intra-cell coupler joins them. Chains only span
/// the block rows and columns in use. When the RBM does not fit that way
/// round, the transposed layout (visible vertical, hidden horizontal) is
/// tried.
pub fn embed_rbm(
    n_visible: usize,
    n_hidden: usize,
    graph: &ChimeraGraph,
    chain_strength: f64,
) -> Result<Embedding> {
    if n_visible == 0 || n_hidden == 0 {
        return Err(Error::invalid("RBM layers must have at least one unit"));
    }
    if !(chain_strength.is_finite() && chain_strength > 0.0) {
        return Err(Error::invalid(format!(
            "chain strength must be positive, got {chain_strength}"
        )));
    }
    let l = graph.cell_size;
    let blocks_v = n_visible.div_ceil(l);
    let blocks_h = n_hidden.div_ceil(l);

    let transposed = if blocks_v <= graph.rows && blocks_h <= graph.cols {
        false
    } else if blocks_v <= graph.cols && blocks_h <= graph.rows {
        true
    } else {
        let limit = if blocks_v > graph.rows.max(graph.cols) {
            format!("{n_visible} visible units need {blocks_v} blocks of {l}")
        } else if blocks_h > graph.rows.max(graph.cols) {
            format!("{n_hidden} hidden units need {blocks_h} blocks of {l}")
        } else {
            format!(
                "{n_visible} visible and {n_hidden} hidden units need a {blocks_v}x{blocks_h} block grid"
            )
        };
        return Err(Error::capacity(format!(
            "RBM does not fit a {}x{} chimera graph: {limit}",
            graph.rows, graph.cols
        )));
    };

    // Horizontal chain for unit `u` crossing `span` block columns, vertical
    // chain crossing `span` block rows.
    let horizontal = |u: usize, span: usize| -> Vec<usize> {
        (0..span)
            .map(|c| graph.qubit(u / l, c, HORIZONTAL, u % l))
            .collect()
    };
    let vertical = |u: usize, span: usize| -> Vec<usize> {
        (0..span)
            .map(|r| graph.qubit(r, u / l, VERTICAL, u % l))
            .collect()
    };

    let (visible_chains, hidden_chains): (Vec<_>, Vec<_>) = if transposed {
        (
            (0..n_visible).map(|i| vertical(i, blocks_h)).collect(),
            (0..n_hidden).map(|j| horizontal(j, blocks_v)).collect(),
        )
    } else {
        (
            (0..n_visible).map(|i| horizontal(i, blocks_h)).collect(),
            (0..n_hidden).map(|j| vertical(j, blocks_v)).collect(),
        )
    };

    let mut couplers = Vec::with_capacity(n_visible * n_hidden);
    for i in 0..n_visible {
        for j in 0..n_hidden {
            // meeting cell sits at index j/L along a visible chain and i/L
            // along a hidden chain
            couplers.push((visible_chains[i][j / l], hidden_chains[j][i / l]));
        }
    }

    Ok(Embedding {
        visible_chains,
        hidden_chains,
        couplers,
        chain_strength,
    })
}

/// `2 · max(|a|∞, |b|∞, |W|∞) + 1`.
pub fn default_chain_strength(params: &RbmParameters) -> f64 {
    2.0 * params.max_abs() + 1.0
}

/// Quadratic objective over binary variables,
/// `Σ linear_i x_i + Σ quadratic_ij x_i x_j + offset`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuboProblem {
    pub linear: BTreeMap<usize, f64>,
    /// Keys are `(low, high)` variable pairs.
    pub quadratic: BTreeMap<(usize, usize), f64>,
    pub offset: f64,
}

impl QuboProblem {
    fn add_linear(&mut self, i: usize, c: f64) {
        *self.linear.entry(i).or_insert(0.0) += c;
    }

    fn add_quadratic(&mut self, i: usize, j: usize, c: f64) {
        *self.quadratic.entry((i.min(j), i.max(j))).or_insert(0.0) += c;
    }

    /// Objective for an assignment indexed by variable label.
    pub fn objective(&self, x: &[u8]) -> f64 {
        let lin: f64 = self
            .linear
            .iter()
            .filter(|(&i, _)| x[i] == 1)
            .map(|(_, c)| c)
            .sum();
        let quad: f64 = self
            .quadratic
            .iter()
            .filter(|(&(i, j), _)| x[i] == 1 && x[j] == 1)
            .map(|(_, c)| c)
            .sum();
        lin + quad + self.offset
    }
}

/// RBM energy as a QUBO over logical variables: visible `i` is variable `i`,
/// hidden `j` is variable `n_visible + j`.
pub fn logical_qubo(params: &RbmParameters) -> QuboProblem {
    let nv = params.n_visible();
    let mut q = QuboProblem::default();
    for (i, a) in params.visible_bias.iter().enumerate() {
        q.add_linear(i, -a);
    }
    for (j, b) in params.hidden_bias.iter().enumerate() {
        q.add_linear(nv + j, -b);
    }
    for ((i, j), w) in params.weights.indexed_iter() {
        q.add_quadratic(i, nv + j, -w);
    }
    q
}

/// Physical QUBO over chimera qubits.
///
/// Each logical linear term is split evenly over its chain, each weight sits
/// on the embedding's coupler for that pair, and every chain link carries the
/// penalty `s · (x_p + x_q − 2 x_p x_q)`, zero when the two qubits agree.
pub fn rbm_to_qubo(params: &RbmParameters, embedding: &Embedding) -> Result<QuboProblem> {
    params.validate()?;
    if params.n_visible() != embedding.n_visible() || params.n_hidden() != embedding.n_hidden() {
        return Err(Error::invalid(format!(
            "parameters are {}x{} but embedding covers {}x{}",
            params.n_visible(),
            params.n_hidden(),
            embedding.n_visible(),
            embedding.n_hidden()
        )));
    }
    let mut q = QuboProblem::default();
    let s = embedding.chain_strength;
    let biases = params
        .visible_bias
        .iter()
        .zip(&embedding.visible_chains)
        .chain(params.hidden_bias.iter().zip(&embedding.hidden_chains));
    for (bias, chain) in biases {
        let share = -bias / chain.len() as f64;
        for &qb in chain {
            q.add_linear(qb, share);
        }
        for link in chain.windows(2) {
            q.add_linear(link[0], s);
            q.add_linear(link[1], s);
            q.add_quadratic(link[0], link[1], -2.0 * s);
        }
    }
    for ((i, j), w) in params.weights.indexed_iter() {
        let (qv, qh) = embedding.coupler(i, j);
        q.add_quadratic(qv, qh, -w);
    }
    Ok(q)
}
