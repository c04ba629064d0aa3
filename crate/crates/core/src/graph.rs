//! Graph ingestion, adjacency and the symmetric normalized Laplacian.
//!
//! Text formats (all whitespace separated, `#` starts a comment):
//!
//! ```text
//! edges     one "u v" pair per line, 0-indexed; a third column is rejected
//! features  N lines of d₀ decimals
//! labels    N lines, one integer each; -1 marks an unlabeled node
//! splits    N lines, one of train | val | test | none
//! ```
//!
//! Edges are symmetrized on load: `0 1` and `1 0` describe the same
//! undirected edge.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ShapeError;
use crate::sparse::CsrMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("{file}:{line}: node index {index} out of range for {num_nodes} nodes")]
    IndexOutOfRange {
        file: String,
        line: usize,
        index: usize,
        num_nodes: usize,
    },
    #[error("node {node} appears in both the {first} and {second} masks")]
    MaskOverlap {
        node: usize,
        first: Split,
        second: Split,
    },
    #[error("node {node} is in the {split} split but has no label")]
    UnlabeledInSplit { node: usize, split: Split },
    #[error("feature row {row} contains a non-finite value")]
    NonFiniteFeature { row: usize },
    #[error("{what} has {got} rows, expected {expected}")]
    RowCount {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("node {node} has degree zero; enable self-loops or remove the node")]
    ZeroDegree { node: usize },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

/// Which evaluation split a node belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    None,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::None => "none",
        })
    }
}

/// Undirected attributed graph with labels and evaluation splits.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    features: Array2<f64>,
    labels: Vec<Option<usize>>,
    splits: Vec<Split>,
}

/// Facts gathered while loading a graph from text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub isolated_nodes: usize,
    pub duplicate_edges: usize,
    pub self_loops_dropped: usize,
}

impl Graph {
    /// Validates and assembles a graph. `edges` may contain both
    /// orientations and duplicates; self-loops are dropped.
    pub fn new(
        features: Array2<f64>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        labels: Vec<Option<usize>>,
        splits: Vec<Split>,
    ) -> Result<Self, GraphError> {
        let n = features.nrows();
        check_rows("labels", labels.len(), n)?;
        check_rows("splits", splits.len(), n)?;
        if let Some(row) = features
            .rows()
            .into_iter()
            .position(|r| r.iter().any(|v| !v.is_finite()))
        {
            return Err(GraphError::NonFiniteFeature { row });
        }
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            for index in [u, v] {
                if index >= n {
                    return Err(GraphError::IndexOutOfRange {
                        file: "<edges>".into(),
                        line: 0,
                        index,
                        num_nodes: n,
                    });
                }
            }
            if u != v {
                set.insert((u.min(v), u.max(v)));
            }
        }
        for (node, (&split, label)) in splits.iter().zip(&labels).enumerate() {
            if split != Split::None && label.is_none() {
                return Err(GraphError::UnlabeledInSplit { node, split });
            }
        }
        Ok(Self {
            num_nodes: n,
            edges: set.into_iter().collect(),
            features,
            labels,
            splits,
        })
    }

    /// Builds a graph from three boolean masks, rejecting overlaps.
    pub fn with_masks(
        features: Array2<f64>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        labels: Vec<Option<usize>>,
        train: &[bool],
        val: &[bool],
        test: &[bool],
    ) -> Result<Self, GraphError> {
        let n = features.nrows();
        check_rows("train mask", train.len(), n)?;
        check_rows("val mask", val.len(), n)?;
        check_rows("test mask", test.len(), n)?;
        let mut splits = vec![Split::None; n];
        for node in 0..n {
            let flagged = [(train[node], Split::Train), (val[node], Split::Val), (test[node], Split::Test)];
            for (on, split) in flagged {
                if !on {
                    continue;
                }
                if splits[node] != Split::None {
                    return Err(GraphError::MaskOverlap {
                        node,
                        first: splits[node],
                        second: split,
                    });
                }
                splits[node] = split;
            }
        }
        Self::new(features, edges, labels, splits)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Undirected edges as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().flatten().max().map_or(0, |&c| c + 1)
    }

    /// Node indices belonging to `split`, ascending.
    pub fn split_nodes(&self, split: Split) -> Vec<usize> {
        self.splits
            .iter()
            .enumerate()
            .filter(|&(_, &s)| s == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn mask(&self, split: Split) -> Vec<bool> {
        self.splits.iter().map(|&s| s == split).collect()
    }

    /// Degree of every node in the simple undirected graph (no self-loops).
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    pub fn isolated_nodes(&self) -> usize {
        self.degrees().iter().filter(|&&d| d == 0).count()
    }

    /// Fraction of edges whose endpoints share a label (edges touching an
    /// unlabeled node are skipped).
    pub fn edge_homophily(&self) -> f64 {
        let (same, total) = self
            .edges
            .iter()
            .filter_map(|&(u, v)| Some((self.labels[u]?, self.labels[v]?)))
            .fold((0usize, 0usize), |(s, t), (a, b)| (s + usize::from(a == b), t + 1));
        if total == 0 {
            0.0
        } else {
            same as f64 / total as f64
        }
    }

    /// Same graph with a different feature matrix (used by corruption).
    pub fn with_features(&self, features: Array2<f64>) -> Result<Self, GraphError> {
        Self::new(
            features,
            self.edges.iter().copied(),
            self.labels.clone(),
            self.splits.clone(),
        )
    }

    /// Same graph with a subset of the edges.
    pub fn with_edges(&self, edges: Vec<(usize, usize)>) -> Result<Self, GraphError> {
        Self::new(
            self.features.clone(),
            edges,
            self.labels.clone(),
            self.splits.clone(),
        )
    }

    /// Symmetric 0/1 adjacency, optionally with the identity added.
    pub fn adjacency(&self, self_loops: bool) -> CsrMatrix {
        let mut triplets = Vec::with_capacity(2 * self.edges.len() + self.num_nodes);
        for &(u, v) in &self.edges {
            triplets.push((u, v, 1.0));
            triplets.push((v, u, 1.0));
        }
        if self_loops {
            triplets.extend((0..self.num_nodes).map(|i| (i, i, 1.0)));
        }
        CsrMatrix::from_triplets(self.num_nodes, self.num_nodes, &triplets)
    }
}

fn check_rows(what: &'static str, got: usize, expected: usize) -> Result<(), GraphError> {
    if got == expected {
        Ok(())
    } else {
        Err(GraphError::RowCount {
            what,
            got,
            expected,
        })
    }
}

/// `L = I − D^{-1/2}(A + sI)D^{-1/2}` with `s = 1` when `self_loops` is set.
///
/// Without self-loops every node must have at least one neighbour.
pub fn normalized_laplacian(graph: &Graph, self_loops: bool) -> Result<CsrMatrix, GraphError> {
    let n = graph.num_nodes();
    let extra = usize::from(self_loops);
    let degrees: Vec<usize> = graph.degrees().into_iter().map(|d| d + extra).collect();
    if let Some(node) = degrees.iter().position(|&d| d == 0) {
        return Err(GraphError::ZeroDegree { node });
    }
    let inv_sqrt: Vec<f64> = degrees.iter().map(|&d| 1.0 / (d as f64).sqrt()).collect();
    let mut triplets = Vec::with_capacity(2 * graph.edges().len() + n);
    for i in 0..n {
        // Diagonal entry is always stored so the sparsity pattern includes it.
        let self_term = if self_loops { inv_sqrt[i] * inv_sqrt[i] } else { 0.0 };
        triplets.push((i, i, 1.0 - self_term));
    }
    for &(u, v) in graph.edges() {
        let w = -inv_sqrt[u] * inv_sqrt[v];
        triplets.push((u, v, w));
        triplets.push((v, u, w));
    }
    Ok(CsrMatrix::from_triplets(n, n, &triplets))
}

/// `tr(XᵀLX)`.
pub fn laplacian_quadratic(laplacian: &CsrMatrix, x: &ArrayView2<'_, f64>) -> Result<f64, ShapeError> {
    let (rows, cols) = laplacian.shape();
    if rows != cols || x.nrows() != rows {
        return Err(ShapeError::new("laplacian_quadratic", (rows, cols), x.dim()));
    }
    let mut total = 0.0;
    for r in 0..rows {
        let xr = x.row(r);
        for (c, v) in laplacian.row(r) {
            total += v * xr.dot(&x.row(c));
        }
    }
    Ok(total)
}

/// Loads a graph from the four text files.
pub fn load_graph(
    edge_path: &Path,
    feature_path: &Path,
    label_path: &Path,
    split_path: &Path,
) -> Result<(Graph, IngestReport), GraphError> {
    let read = |p: &Path| {
        std::fs::read_to_string(p).map_err(|e| GraphError::Io {
            path: p.display().to_string(),
            message: e.to_string(),
        })
    };
    parse_graph(
        (&edge_path.display().to_string(), &read(edge_path)?),
        (&feature_path.display().to_string(), &read(feature_path)?),
        (&label_path.display().to_string(), &read(label_path)?),
        (&split_path.display().to_string(), &read(split_path)?),
    )
}

/// Loads `edges.txt`, `features.txt`, `labels.txt` and `splits.txt` from
/// one directory (the layout written by [`write_graph`]).
pub fn load_dir(dir: &Path) -> Result<(Graph, IngestReport), GraphError> {
    load_graph(
        &dir.join("edges.txt"),
        &dir.join("features.txt"),
        &dir.join("labels.txt"),
        &dir.join("splits.txt"),
    )
}

/// Parses the four text formats from memory. Each argument is
/// `(name used in error messages, contents)`.
pub fn parse_graph(
    edges: (&str, &str),
    features: (&str, &str),
    labels: (&str, &str),
    splits: (&str, &str),
) -> Result<(Graph, IngestReport), GraphError> {
    let features_m = parse_features(features.0, features.1)?;
    let n = features_m.nrows();
    let labels_v = parse_labels(labels.0, labels.1)?;
    let splits_v = parse_splits(splits.0, splits.1)?;
    let raw_edges = parse_edges(edges.0, edges.1, n)?;

    let mut report = IngestReport::default();
    let mut seen = BTreeSet::new();
    for &(u, v) in &raw_edges {
        if u == v {
            report.self_loops_dropped += 1;
        } else if !seen.insert((u.min(v), u.max(v))) {
            report.duplicate_edges += 1;
        }
    }
    let graph = Graph::new(features_m, raw_edges, labels_v, splits_v)?;
    report.isolated_nodes = graph.isolated_nodes();
    log::info!(
        "loaded graph: {} nodes, {} edges, {} isolated",
        graph.num_nodes(),
        graph.edges().len(),
        report.isolated_nodes
    );
    Ok((graph, report))
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let body = line.split('#').next().unwrap_or("");
        let tokens: Vec<&str> = body.split_whitespace().collect();
        (!tokens.is_empty()).then_some((i + 1, tokens))
    })
}

fn parse_err(file: &str, line: usize, message: impl Into<String>) -> GraphError {
    GraphError::Parse {
        file: file.to_string(),
        line,
        message: message.into(),
    }
}

fn parse_edges(file: &str, text: &str, n: usize) -> Result<Vec<(usize, usize)>, GraphError> {
    let mut out = Vec::new();
    for (line, tokens) in content_lines(text) {
        if tokens.len() != 2 {
            let message = if tokens.len() > 2 {
                "edge weights are not supported; expected \"u v\"".to_string()
            } else {
                format!("expected \"u v\", found {} token(s)", tokens.len())
            };
            return Err(parse_err(file, line, message));
        }
        let mut pair = [0usize; 2];
        for (slot, tok) in pair.iter_mut().zip(&tokens) {
            *slot = tok
                .parse()
                .map_err(|_| parse_err(file, line, format!("invalid node index {tok:?}")))?;
            if *slot >= n {
                return Err(GraphError::IndexOutOfRange {
                    file: file.to_string(),
                    line,
                    index: *slot,
                    num_nodes: n,
                });
            }
        }
        out.push((pair[0], pair[1]));
    }
    Ok(out)
}

fn parse_features(file: &str, text: &str) -> Result<Array2<f64>, GraphError> {
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (line, tokens) in content_lines(text) {
        match width {
            None => width = Some(tokens.len()),
            Some(w) if w != tokens.len() => {
                return Err(parse_err(
                    file,
                    line,
                    format!("expected {w} values, found {}", tokens.len()),
                ))
            }
            _ => {}
        }
        for tok in tokens {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(file, line, format!("invalid number {tok:?}")))?;
            if !v.is_finite() {
                return Err(GraphError::NonFiniteFeature { row: rows });
            }
            data.push(v);
        }
        rows += 1;
    }
    let width = width.unwrap_or(0);
    Ok(Array2::from_shape_vec((rows, width), data).expect("row widths checked"))
}

fn parse_labels(file: &str, text: &str) -> Result<Vec<Option<usize>>, GraphError> {
    content_lines(text)
        .map(|(line, tokens)| {
            if tokens.len() != 1 {
                return Err(parse_err(file, line, "expected a single integer label"));
            }
            let v: i64 = tokens[0]
                .parse()
                .map_err(|_| parse_err(file, line, format!("invalid label {:?}", tokens[0])))?;
            match v {
                -1 => Ok(None),
                v if v >= 0 => Ok(Some(v as usize)),
                _ => Err(parse_err(file, line, "labels must be >= 0 or -1")),
            }
        })
        .collect()
}

fn parse_splits(file: &str, text: &str) -> Result<Vec<Split>, GraphError> {
    content_lines(text)
        .map(|(line, tokens)| match tokens.as_slice() {
            ["train"] => Ok(Split::Train),
            ["val"] => Ok(Split::Val),
            ["test"] => Ok(Split::Test),
            ["none"] => Ok(Split::None),
            _ => Err(parse_err(
                file,
                line,
                "expected one of train, val, test, none",
            )),
        })
        .collect()
}

/// Writes a graph in the four text formats (the inverse of [`load_graph`]).
pub fn write_graph(graph: &Graph, dir: &Path) -> std::io::Result<()> {
    use std::fmt::Write as _;
    std::fs::create_dir_all(dir)?;
    let mut edges = String::new();
    for &(u, v) in graph.edges() {
        let _ = writeln!(edges, "{u} {v}");
    }
    let mut features = String::new();
    for row in graph.features().rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(features, "{}", line.join(" "));
    }
    let mut labels = String::new();
    for l in graph.labels() {
        let _ = writeln!(labels, "{}", l.map_or(-1, |c| c as i64));
    }
    let mut splits = String::new();
    for s in graph.splits() {
        let _ = writeln!(splits, "{s}");
    }
    std::fs::write(dir.join("edges.txt"), edges)?;
    std::fs::write(dir.join("features.txt"), features)?;
    std::fs::write(dir.join("labels.txt"), labels)?;
    std::fs::write(dir.join("splits.txt"), splits)
}
