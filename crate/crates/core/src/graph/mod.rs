//! Padded attributed graphs, datasets, persistence and splitting.
//!
//! A [`Graph`] stores a dense `n_max × n_max` adjacency, an `n_max × d`
//! feature matrix and a node mask whose leading `n` entries are one. All
//! graphs are undirected and unweighted. Labels are `+1` / `-1`.

mod io;
mod split;

pub use io::{load_dataset, read_dataset, save_dataset, write_dataset, GraphRecord};
pub use split::{holdout, split};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Label {
    Pos,
    Neg,
}

impl Label {
    pub const BOTH: [Label; 2] = [Label::Pos, Label::Neg];

    pub fn sign(self) -> f64 {
        match self {
            Label::Pos => 1.0,
            Label::Neg => -1.0,
        }
    }

    pub fn flip(self) -> Label {
        match self {
            Label::Pos => Label::Neg,
            Label::Neg => Label::Pos,
        }
    }

    /// `[1, 0]` for `+1`, `[0, 1]` for `-1`.
    pub fn one_hot(self) -> [f64; 2] {
        match self {
            Label::Pos => [1.0, 0.0],
            Label::Neg => [0.0, 1.0],
        }
    }
}

impl TryFrom<i8> for Label {
    type Error = String;

    fn try_from(v: i8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(Label::Pos),
            -1 => Ok(Label::Neg),
            other => Err(format!("label must be 1 or -1, got {other}")),
        }
    }
}

impl From<Label> for i8 {
    fn from(l: Label) -> i8 {
        match l {
            Label::Pos => 1,
            Label::Neg => -1,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", i8::from(*self))
    }
}

/// One broken [`Graph`] invariant.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Violation {
    StorageSize { field: &'static str, expected: usize, got: usize },
    NodeCountExceedsPad { n: usize, n_max: usize },
    NonBinaryEntry { row: usize, col: usize },
    Asymmetric { row: usize, col: usize },
    SelfLoop { node: usize },
    EdgeOnMaskedNode { row: usize, col: usize },
    NonBinaryMask { node: usize },
    MaskMismatch { node: usize },
    MaskedFeatureNonZero { node: usize },
    NonFiniteFeature { node: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::StorageSize { field, expected, got } => {
                write!(f, "{field} holds {got} entries, expected {expected}")
            }
            Violation::NodeCountExceedsPad { n, n_max } => {
                write!(f, "node count {n} exceeds pad size {n_max}")
            }
            Violation::NonBinaryEntry { row, col } => {
                write!(f, "adjacency entry ({row},{col}) is not 0 or 1")
            }
            Violation::Asymmetric { row, col } => {
                write!(f, "adjacency asymmetric at ({row},{col})")
            }
            Violation::SelfLoop { node } => write!(f, "self-loop on node {node}"),
            Violation::EdgeOnMaskedNode { row, col } => {
                write!(f, "edge ({row},{col}) touches a masked-out node")
            }
            Violation::NonBinaryMask { node } => write!(f, "mask entry {node} is not 0 or 1"),
            Violation::MaskMismatch { node } => {
                write!(f, "mask entry {node} disagrees with leading-n layout")
            }
            Violation::MaskedFeatureNonZero { node } => {
                write!(f, "features of masked-out node {node} are nonzero")
            }
            Violation::NonFiniteFeature { node } => {
                write!(f, "features of node {node} are not finite")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid graph: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("graph has {n} nodes but the pad size is {n_max}")]
    TooLarge { n: usize, n_max: usize },
    #[error("{0}")]
    Shape(String),
    #[error("graph {index}: {}", join_violations(violations))]
    InvalidMember { index: usize, violations: Vec<Violation> },
    #[error("graph {index} is unlabeled")]
    Unlabeled { index: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("split fractions must be positive and sum to 1, got {0:?}")]
    BadFractions([f64; 3]),
    #[error("split leaves the {part} part without graphs of label {label}")]
    EmptyPart { part: &'static str, label: Label },
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    pub n: usize,
    pub n_max: usize,
    pub d: usize,
    /// Row-major `n_max × n_max`, entries 0/1.
    pub adj: Vec<u8>,
    /// Row-major `n_max × d`.
    pub features: Vec<f64>,
    pub mask: Vec<u8>,
    pub label: Option<Label>,
}

impl Graph {
    /// Builds an unpadded graph (`n_max = n`) from an edge list.
    pub fn from_edges(
        n: usize,
        edges: &[(usize, usize)],
        features: Vec<f64>,
        d: usize,
        label: Option<Label>,
    ) -> Result<Self, GraphError> {
        if features.len() != n * d {
            return Err(GraphError::Shape(format!(
                "feature matrix has {} values, expected {n}×{d}",
                features.len()
            )));
        }
        let mut adj = vec![0u8; n * n];
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(GraphError::Shape(format!("edge ({i},{j}) out of range for n={n}")));
            }
            adj[i * n + j] = 1;
            adj[j * n + i] = 1;
        }
        let g = Graph {
            n,
            n_max: n,
            d,
            adj,
            features,
            mask: vec![1; n],
            label,
        };
        g.validate().map_err(GraphError::Invalid)?;
        Ok(g)
    }

    /// Builds an unpadded graph from dense rows.
    pub fn from_dense(
        adj_rows: &[Vec<u8>],
        feature_rows: &[Vec<f64>],
        d: usize,
        label: Option<Label>,
    ) -> Result<Self, GraphError> {
        let n = adj_rows.len();
        if feature_rows.len() != n {
            return Err(GraphError::Shape(format!(
                "adjacency has {n} rows but features have {}",
                feature_rows.len()
            )));
        }
        let mut adj = Vec::with_capacity(n * n);
        for (i, row) in adj_rows.iter().enumerate() {
            if row.len() != n {
                return Err(GraphError::Shape(format!(
                    "adjacency row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            adj.extend_from_slice(row);
        }
        let mut features = Vec::with_capacity(n * d);
        for (i, row) in feature_rows.iter().enumerate() {
            if row.len() != d {
                return Err(GraphError::Shape(format!(
                    "feature row {i} has width {}, expected {d}",
                    row.len()
                )));
            }
            features.extend_from_slice(row);
        }
        let g = Graph {
            n,
            n_max: n,
            d,
            adj,
            features,
            mask: vec![1; n],
            label,
        };
        g.validate().map_err(GraphError::Invalid)?;
        Ok(g)
    }

    pub fn edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.n_max + j] == 1
    }

    pub fn feature_row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn edge_count(&self) -> usize {
        (0..self.n)
            .map(|i| (i + 1..self.n).filter(|&j| self.edge(i, j)).count())
            .sum()
    }

    /// Edge density over the `n(n-1)/2` observed pairs.
    pub fn density(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        self.edge_count() as f64 / (self.n * (self.n - 1) / 2) as f64
    }

    pub fn with_label(mut self, label: Option<Label>) -> Self {
        self.label = label;
        self
    }

    /// Every violated invariant, or `Ok` when none.
    pub fn validate(&self) -> Result<(), Vec<Violation>> {
        let mut out = Vec::new();
        let nm = self.n_max;
        let sizes = [
            ("adj", nm * nm, self.adj.len()),
            ("features", nm * self.d, self.features.len()),
            ("mask", nm, self.mask.len()),
        ];
        for (field, expected, got) in sizes {
            if expected != got {
                out.push(Violation::StorageSize { field, expected, got });
            }
        }
        if !out.is_empty() {
            return Err(out);
        }
        if self.n > nm {
            out.push(Violation::NodeCountExceedsPad { n: self.n, n_max: nm });
        }
        for (i, &m) in self.mask.iter().enumerate() {
            if m > 1 {
                out.push(Violation::NonBinaryMask { node: i });
            } else if (m == 1) != (i < self.n) {
                out.push(Violation::MaskMismatch { node: i });
            }
        }
        for i in 0..nm {
            for j in 0..nm {
                let a = self.adj[i * nm + j];
                if a > 1 {
                    out.push(Violation::NonBinaryEntry { row: i, col: j });
                    continue;
                }
                if a == 0 {
                    continue;
                }
                if i == j {
                    out.push(Violation::SelfLoop { node: i });
                } else if self.adj[j * nm + i] != a && i < j {
                    out.push(Violation::Asymmetric { row: i, col: j });
                } else if self.adj[j * nm + i] == 0 && i > j {
                    out.push(Violation::Asymmetric { row: j, col: i });
                }
                if self.mask[i] != 1 || self.mask[j] != 1 {
                    out.push(Violation::EdgeOnMaskedNode { row: i, col: j });
                }
            }
        }
        for i in 0..nm {
            let row = &self.features[i * self.d..(i + 1) * self.d];
            if row.iter().any(|v| !v.is_finite()) {
                out.push(Violation::NonFiniteFeature { node: i });
            } else if self.mask[i] != 1 && row.iter().any(|&v| v != 0.0) {
                out.push(Violation::MaskedFeatureNonZero { node: i });
            }
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }

    /// Embeds the graph in the leading block of an `n_max`-node pad.
    pub fn pad_to(&self, n_max: usize) -> Result<Graph, GraphError> {
        if self.n > n_max {
            return Err(GraphError::TooLarge { n: self.n, n_max });
        }
        let mut adj = vec![0u8; n_max * n_max];
        let mut features = vec![0.0; n_max * self.d];
        for i in 0..self.n {
            for j in 0..self.n {
                adj[i * n_max + j] = self.adj[i * self.n_max + j];
            }
            features[i * self.d..(i + 1) * self.d].copy_from_slice(self.feature_row(i));
        }
        let mut mask = vec![0u8; n_max];
        mask[..self.n].fill(1);
        Ok(Graph {
            n: self.n,
            n_max,
            d: self.d,
            adj,
            features,
            mask,
            label: self.label,
        })
    }

    /// Unordered node triples with all three edges present.
    pub fn triangle_count(&self) -> Result<usize, GraphError> {
        self.validate().map_err(GraphError::Invalid)?;
        let mut count = 0;
        for i in 0..self.n {
            for j in i + 1..self.n {
                if !self.edge(i, j) {
                    continue;
                }
                for k in j + 1..self.n {
                    if self.edge(i, k) && self.edge(j, k) {
                        count += 1;
                    }
                }
            }
        }
        Ok(count)
    }
}

/// Graphs sharing one pad size and feature width.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    graphs: Vec<Graph>,
    n_max: usize,
    d: usize,
}

impl Dataset {
    /// Validates every member and checks that pad size and width agree.
    pub fn new(graphs: Vec<Graph>, n_max: usize, d: usize) -> Result<Self, GraphError> {
        for (index, g) in graphs.iter().enumerate() {
            if g.n_max != n_max || g.d != d {
                return Err(GraphError::Shape(format!(
                    "graph {index} has n_max={} d={}, dataset expects n_max={n_max} d={d}",
                    g.n_max, g.d
                )));
            }
            g.validate()
                .map_err(|violations| GraphError::InvalidMember { index, violations })?;
        }
        Ok(Self { graphs, n_max, d })
    }

    /// Pads every graph to the largest node count (or `n_max` when given).
    pub fn from_graphs(graphs: Vec<Graph>, n_max: Option<usize>) -> Result<Self, GraphError> {
        let n_max = n_max.unwrap_or_else(|| graphs.iter().map(|g| g.n).max().unwrap_or(0));
        let d = graphs.first().map_or(0, |g| g.d);
        let padded = graphs
            .iter()
            .map(|g| g.pad_to(n_max))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(padded, n_max, d)
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn get(&self, index: usize) -> Option<&Graph> {
        self.graphs.get(index)
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Graph> {
        self.graphs.iter()
    }

    /// Number of graphs carrying `label`.
    pub fn count_label(&self, label: Label) -> usize {
        self.graphs.iter().filter(|g| g.label == Some(label)).count()
    }

    /// Labels of all graphs; errors on the first unlabeled graph.
    pub fn labels(&self) -> Result<Vec<Label>, GraphError> {
        self.graphs
            .iter()
            .enumerate()
            .map(|(index, g)| g.label.ok_or(GraphError::Unlabeled { index }))
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            graphs: indices.iter().map(|&i| self.graphs[i].clone()).collect(),
            n_max: self.n_max,
            d: self.d,
        }
    }

    pub fn with_label(&self, label: Label) -> Dataset {
        Dataset {
            graphs: self
                .graphs
                .iter()
                .filter(|g| g.label == Some(label))
                .cloned()
                .collect(),
            n_max: self.n_max,
            d: self.d,
        }
    }

    pub fn into_graphs(self) -> Vec<Graph> {
        self.graphs
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a Graph;
    type IntoIter = std::slice::Iter<'a, Graph>;

    fn into_iter(self) -> Self::IntoIter {
        self.graphs.iter()
    }
}
