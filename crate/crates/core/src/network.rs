//! Communication graphs, Metropolis mixing matrices, and spectral constants.
//!
//! The mixing matrix `W` is doubly stochastic with support on the graph
//! edges plus the diagonal. Its deviation norm `eta = ||W - (1/m) 1 1^T||`
//! drives every consensus bound; `c = 2 sqrt(2m) / (1 - eta)` is the derived
//! constant that multiplies the clipping threshold in those bounds.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::derive_stream;

/// Tolerance on row/column sums when validating double stochasticity.
pub const STOCHASTICITY_TOL: f64 = 1e-10;

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

/// Undirected connected graph on agents `0..m`, no self-loops or duplicates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    m: usize,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Build from an edge list; validates simplicity and connectivity.
    pub fn new(m: usize, mut edges: Vec<(usize, usize)>) -> Result<Self> {
        if m < 2 {
            return Err(Error::invalid("graph needs at least 2 agents"));
        }
        for e in edges.iter_mut() {
            if e.0 == e.1 {
                return Err(Error::invalid(format!("self-loop at node {}", e.0)));
            }
            if e.0 >= m || e.1 >= m {
                return Err(Error::invalid(format!("edge {e:?} out of range")));
            }
            if e.0 > e.1 {
                *e = (e.1, e.0);
            }
        }
        edges.sort_unstable();
        edges.dedup();
        let g = Graph { m, edges };
        if !g.is_connected() {
            return Err(Error::invalid("graph is not connected"));
        }
        Ok(g)
    }

    pub fn agent_count(&self) -> usize {
        self.m
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.m];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        let e = if i < j { (i, j) } else { (j, i) };
        self.edges.binary_search(&e).is_ok()
    }

    fn is_connected(&self) -> bool {
        let mut adj = vec![Vec::new(); self.m];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        let mut seen = vec![false; self.m];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == self.m
    }
}

// ---------------------------------------------------------------------------
// Topologies
// ---------------------------------------------------------------------------

/// Declarative topology description: `{kind, m, rows?, cols?, p?, seed?}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologyConfig {
    Ring { m: usize },
    Grid { rows: usize, cols: usize },
    ErdosRenyi { m: usize, p: f64, seed: u64 },
}

impl TopologyConfig {
    pub fn agent_count(&self) -> usize {
        match self {
            TopologyConfig::Ring { m } => *m,
            TopologyConfig::Grid { rows, cols } => rows * cols,
            TopologyConfig::ErdosRenyi { m, .. } => *m,
        }
    }

    /// Short label used in output file names.
    pub fn label(&self) -> String {
        match self {
            TopologyConfig::Ring { m } => format!("ring{m}"),
            TopologyConfig::Grid { rows, cols } => format!("grid{rows}x{cols}"),
            TopologyConfig::ErdosRenyi { m, p, seed } => format!("er{m}p{p}s{seed}"),
        }
    }

    pub fn build(&self) -> Result<Graph> {
        match self {
            TopologyConfig::Ring { m } => ring(*m),
            TopologyConfig::Grid { rows, cols } => grid(*rows, *cols),
            TopologyConfig::ErdosRenyi { m, p, seed } => erdos_renyi(*m, *p, *seed),
        }
    }
}

/// Cycle over `m >= 2` agents (a single edge for `m = 2`).
pub fn ring(m: usize) -> Result<Graph> {
    if m < 2 {
        return Err(Error::invalid("ring needs at least 2 agents"));
    }
    let mut edges: Vec<(usize, usize)> = (0..m - 1).map(|i| (i, i + 1)).collect();
    if m > 2 {
        edges.push((0, m - 1));
    }
    Graph::new(m, edges)
}

/// `rows x cols` lattice with 4-neighbour connectivity.
pub fn grid(rows: usize, cols: usize) -> Result<Graph> {
    let m = rows * cols;
    if m < 2 {
        return Err(Error::invalid("grid needs at least 2 agents"));
    }
    let id = |r: usize, c: usize| r * cols + c;
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push((id(r, c), id(r, c + 1)));
            }
            if r + 1 < rows {
                edges.push((id(r, c), id(r + 1, c)));
            }
        }
    }
    Graph::new(m, edges)
}

/// G(m, p) rejection-sampled until connected; the seed is incremented per
/// attempt so results are a deterministic function of `(m, p, seed)`.
pub fn erdos_renyi(m: usize, p: f64, seed: u64) -> Result<Graph> {
    if m < 2 {
        return Err(Error::invalid("erdos_renyi needs at least 2 agents"));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::invalid("erdos_renyi needs p in (0, 1]"));
    }
    for attempt in 0..1000u64 {
        let mut rng = derive_stream(seed.wrapping_add(attempt), 0x4752_4150);
        let mut edges = Vec::new();
        for i in 0..m {
            for j in (i + 1)..m {
                if rng.gen::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        if let Ok(g) = Graph::new(m, edges) {
            return Ok(g);
        }
    }
    Err(Error::Generation(format!(
        "erdos_renyi({m}, {p}) produced no connected graph in 1000 attempts"
    )))
}

/// Convenience dispatcher mirroring the topology config kinds.
pub fn build_topology(config: &TopologyConfig) -> Result<Graph> {
    config.build()
}

// ---------------------------------------------------------------------------
// Mixing matrix
// ---------------------------------------------------------------------------

/// Doubly stochastic mixing matrix with its spectral constants.
#[derive(Clone, Debug, PartialEq)]
pub struct MixingMatrix {
    w: DMatrix<f64>,
    eta: f64,
    c: f64,
}

impl MixingMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn agent_count(&self) -> usize {
        self.w.nrows()
    }

    /// Deviation norm `||W - (1/m) 1 1^T||`.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Consensus constant `2 sqrt(2m) / (1 - eta)`.
    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.w[(i, j)]
    }

    /// CSV form (plain rows of weights) for external inspection.
    pub fn to_csv(&self) -> String {
        let m = self.agent_count();
        let mut out = String::new();
        for i in 0..m {
            let row: Vec<String> = (0..m).map(|j| format!("{}", self.w[(i, j)])).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Wrap an externally supplied doubly stochastic matrix.
    pub fn from_matrix(w: DMatrix<f64>) -> Result<Self> {
        let (eta, c) = spectral_constants(&w)?;
        Ok(MixingMatrix { w, eta, c })
    }
}

/// Metropolis-Hastings weights on a connected graph:
/// `W_ij = 1/(1 + max{deg_i, deg_j})` on edges, diagonal absorbs the rest.
/// Symmetric with positive diagonal, hence doubly stochastic with `eta < 1`.
pub fn metropolis_weights(graph: &Graph) -> Result<MixingMatrix> {
    let m = graph.agent_count();
    let deg = graph.degrees();
    let mut w = DMatrix::zeros(m, m);
    for &(i, j) in graph.edges() {
        let v = 1.0 / (1.0 + deg[i].max(deg[j]) as f64);
        w[(i, j)] = v;
        w[(j, i)] = v;
    }
    for i in 0..m {
        let off: f64 = (0..m).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    MixingMatrix::from_matrix(w)
}

/// Spectral constants of a doubly stochastic matrix: the deviation-matrix
/// operator norm `eta` (largest singular value of `W - (1/m) 1 1^T`) and
/// `c = 2 sqrt(2m) / (1 - eta)`.
pub fn spectral_constants(w: &DMatrix<f64>) -> Result<(f64, f64)> {
    let m = w.nrows();
    if m < 1 || w.ncols() != m {
        return Err(Error::invalid("mixing matrix must be square"));
    }
    for i in 0..m {
        let row: f64 = w.row(i).iter().sum();
        let col: f64 = w.column(i).iter().sum();
        if (row - 1.0).abs() > STOCHASTICITY_TOL || (col - 1.0).abs() > STOCHASTICITY_TOL {
            return Err(Error::invalid(format!(
                "matrix is not doubly stochastic (row/col {i} sums {row}, {col})"
            )));
        }
    }
    let mut dev = w.clone();
    let avg = 1.0 / m as f64;
    for v in dev.iter_mut() {
        *v -= avg;
    }
    let eta = dev
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0f64, |a, &b| a.max(b));
    if eta >= 1.0 - 1e-9 {
        return Err(Error::invalid(format!(
            "degenerate network: eta = {eta} (no consensus contraction)"
        )));
    }
    let c = 2.0 * (2.0 * m as f64).sqrt() / (1.0 - eta);
    Ok((eta, c))
}
