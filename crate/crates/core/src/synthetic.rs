//! Seeded stochastic-block-model graphs for desk-scale experiments.
//!
//! Class `c` has feature mean `μ_c`, with `μ` spread evenly on a random
//! unit direction per class pair (for two classes: `±signal·u`), plus unit
//! Gaussian noise. Each edge is intra-class with probability `homophily`.

use std::collections::BTreeSet;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::graph::{Graph, GraphError, Split};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmSpec {
    pub nodes: usize,
    pub feature_dim: usize,
    pub classes: usize,
    pub avg_degree: f64,
    /// Probability that an edge joins two nodes of the same class.
    pub homophily: f64,
    /// Distance of each class mean from the origin.
    pub signal: f64,
    pub train_per_class: usize,
    pub val_per_class: usize,
    pub seed: u64,
}

impl SbmSpec {
    /// Two blocks, 200 nodes, 16 features, mostly intra-class edges.
    pub fn homophilous(seed: u64) -> Self {
        Self {
            nodes: 200,
            feature_dim: 16,
            classes: 2,
            avg_degree: 8.0,
            homophily: 0.9,
            signal: 1.0,
            train_per_class: 20,
            val_per_class: 20,
            seed,
        }
    }

    /// Same size and signal, mostly cross-class edges.
    pub fn heterophilous(seed: u64) -> Self {
        Self {
            homophily: 0.1,
            ..Self::homophilous(seed)
        }
    }
}

/// Resolves a data source: `synthetic:homophilous:<seed>`,
/// `synthetic:heterophilous:<seed>` (seed optional, default 0), or a
/// directory holding the four graph text files.
pub fn load_source(source: &str) -> Result<Graph, GraphError> {
    if let Some(rest) = source.strip_prefix("synthetic:") {
        let (kind, seed) = rest.split_once(':').unwrap_or((rest, "0"));
        let bad = |message: String| GraphError::Parse {
            file: source.to_string(),
            line: 0,
            message,
        };
        let seed: u64 = seed.parse().map_err(|_| bad(format!("invalid seed `{seed}`")))?;
        let spec = match kind {
            "homophilous" => SbmSpec::homophilous(seed),
            "heterophilous" => SbmSpec::heterophilous(seed),
            other => return Err(bad(format!("unknown synthetic graph `{other}`"))),
        };
        return generate(&spec);
    }
    crate::graph::load_dir(std::path::Path::new(source)).map(|(g, _)| g)
}

pub fn generate(spec: &SbmSpec) -> Result<Graph, GraphError> {
    let mut rng = stream(spec.seed, Stream::Data);
    let n = spec.nodes;
    let c = spec.classes.max(1);

    let mut labels: Vec<usize> = (0..n).map(|i| i % c).collect();
    labels.shuffle(&mut rng);

    let means: Vec<Array1<f64>> = {
        let mut dirs = Vec::with_capacity(c);
        for k in 0..c {
            if c == 2 && k == 1 {
                let first: &Array1<f64> = &dirs[0];
                dirs.push(-first);
                continue;
            }
            let raw: Array1<f64> = Array1::from_shape_simple_fn(spec.feature_dim, || StandardNormal.sample(&mut rng));
            let norm: f64 = raw.dot(&raw).sqrt();
            dirs.push(raw * (spec.signal / norm));
        }
        dirs
    };
    let mut features = Array2::<f64>::from_shape_simple_fn((n, spec.feature_dim), || StandardNormal.sample(&mut rng));
    for (mut row, &y) in features.rows_mut().into_iter().zip(&labels) {
        row += &means[y];
    }

    let by_class: Vec<Vec<usize>> = (0..c)
        .map(|k| (0..n).filter(|&i| labels[i] == k).collect())
        .collect();
    let target = ((n as f64 * spec.avg_degree) / 2.0).round() as usize;
    let max_edges = n * (n - 1) / 2;
    let mut edges = BTreeSet::new();
    let mut attempts = 0usize;
    while edges.len() < target.min(max_edges) && attempts < 100 * target + 1000 {
        attempts += 1;
        let intra = c == 1 || rng.random_bool(spec.homophily.clamp(0.0, 1.0));
        let a = rng.random_range(0..c);
        let b = if intra {
            a
        } else {
            (a + rng.random_range(1..c)) % c
        };
        let u = by_class[a][rng.random_range(0..by_class[a].len())];
        let v = by_class[b][rng.random_range(0..by_class[b].len())];
        if u != v {
            edges.insert((u.min(v), u.max(v)));
        }
    }

    let mut splits = vec![Split::Test; n];
    for members in &by_class {
        let mut order = members.clone();
        order.shuffle(&mut rng);
        for (rank, &node) in order.iter().enumerate() {
            splits[node] = if rank < spec.train_per_class {
                Split::Train
            } else if rank < spec.train_per_class + spec.val_per_class {
                Split::Val
            } else {
                Split::Test
            };
        }
    }

    Graph::new(features, edges, labels.into_iter().map(Some).collect(), splits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_splits() {
        let g = generate(&SbmSpec::homophilous(3)).unwrap();
        assert_eq!(g.num_nodes(), 200);
        assert_eq!(g.feature_dim(), 16);
        assert_eq!(g.num_classes(), 2);
        assert_eq!(g.split_nodes(Split::Train).len(), 40);
        assert_eq!(g.split_nodes(Split::Val).len(), 40);
        assert_eq!(g.split_nodes(Split::Test).len(), 120);
        assert_eq!(g.edges().len(), 800);
    }

    #[test]
    fn homophily_levels() {
        let h = generate(&SbmSpec::homophilous(1)).unwrap().edge_homophily();
        let x = generate(&SbmSpec::heterophilous(1)).unwrap().edge_homophily();
        assert!(h > 0.85, "{h}");
        assert!(x < 0.15, "{x}");
    }

    #[test]
    fn sources() {
        assert_eq!(load_source("synthetic:heterophilous:4").unwrap(), generate(&SbmSpec::heterophilous(4)).unwrap());
        assert_eq!(load_source("synthetic:homophilous").unwrap(), generate(&SbmSpec::homophilous(0)).unwrap());
        assert!(load_source("synthetic:ring:1").is_err());
        assert!(load_source("/nonexistent/dir").is_err());
    }

    #[test]
    fn seeded() {
        let a = generate(&SbmSpec::homophilous(5)).unwrap();
        let b = generate(&SbmSpec::homophilous(5)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate(&SbmSpec::homophilous(6)).unwrap());
    }
}
