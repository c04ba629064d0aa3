//! Corruption harness, sweeps, phase diagrams and gate analysis.
//!
//! Robustness follows a clean-train / corrupt-eval protocol: each seed
//! trains once on the clean graph, then the trained model is scored on
//! corrupted copies. Corruption is pure and seed-deterministic.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::TrainConfig;
use crate::dynamics::Variant;
use crate::error::Result;
use crate::graph::{normalized_laplacian, Graph, Split};
use crate::model::{run, GhnModel};
use crate::record::{hash_of, mean_std, RunRecord};
use crate::rng::{stream, Stream};
use crate::theory::{operating_point, OperatingPoint};

/// Across-seed standard deviation above which outcomes count as bimodal.
pub const BIMODAL_STD: f64 = 0.10;

#[derive(Debug, Error, PartialEq)]
pub enum ExperimentError {
    #[error("corruption level {0} outside [0, 1]")]
    InvalidLevel(f64),
    #[error("{0} list is empty")]
    Empty(&'static str),
    #[error("gate analysis needs a gated variant; nomem has no gate")]
    NoGate,
    #[error("invalid value {value} for axis {axis}: {reason}")]
    InvalidAxisValue { axis: String, value: f64, reason: String },
    #[error("unknown {what} `{name}`")]
    Unknown { what: &'static str, name: String },
}

impl ExperimentError {
    pub fn is_config(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    EdgeDrop,
    FeatureMask,
    FeatureNoise,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 3] = [Self::EdgeDrop, Self::FeatureMask, Self::FeatureNoise];

    pub fn name(self) -> &'static str {
        match self {
            Self::EdgeDrop => "edge_drop",
            Self::FeatureMask => "feature_mask",
            Self::FeatureNoise => "feature_noise",
        }
    }

    pub fn parse(s: &str) -> std::result::Result<Self, ExperimentError> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ExperimentError::Unknown {
                what: "corruption kind",
                name: s.into(),
            })
    }
}

/// Granularity of feature masking.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// Zero a fraction of individual matrix entries.
    #[default]
    Entries,
    /// Zero a fraction of whole node rows.
    Rows,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub level: f64,
    pub seed: u64,
    #[serde(default)]
    pub mask_mode: MaskMode,
}

impl CorruptionSpec {
    pub fn new(kind: CorruptionKind, level: f64, seed: u64) -> Self {
        Self {
            kind,
            level,
            seed,
            mask_mode: MaskMode::Entries,
        }
    }
}

/// Returns a corrupted copy; labels and splits are untouched.
pub fn corrupt(graph: &Graph, spec: &CorruptionSpec) -> Result<Graph> {
    if !(0.0..=1.0).contains(&spec.level) {
        return Err(ExperimentError::InvalidLevel(spec.level).into());
    }
    let mut rng = stream(spec.seed, Stream::Corruption);
    match spec.kind {
        CorruptionKind::EdgeDrop => {
            let edges = graph.edges();
            let drop = (spec.level * edges.len() as f64).floor() as usize;
            let mut removed = vec![false; edges.len()];
            for i in sample(&mut rng, edges.len(), drop) {
                removed[i] = true;
            }
            let kept = edges
                .iter()
                .zip(&removed)
                .filter(|(_, &r)| !r)
                .map(|(&e, _)| e)
                .collect();
            Ok(graph.with_edges(kept)?)
        }
        CorruptionKind::FeatureMask => {
            let mut x = graph.features().clone();
            let (n, d) = x.dim();
            match spec.mask_mode {
                MaskMode::Entries => {
                    let count = (spec.level * (n * d) as f64).floor() as usize;
                    for flat in sample(&mut rng, n * d, count) {
                        x[[flat / d, flat % d]] = 0.0;
                    }
                }
                MaskMode::Rows => {
                    let count = (spec.level * n as f64).floor() as usize;
                    for row in sample(&mut rng, n, count) {
                        x.row_mut(row).fill(0.0);
                    }
                }
            }
            Ok(graph.with_features(x)?)
        }
        CorruptionKind::FeatureNoise => {
            let clean = graph.features();
            let std: Vec<f64> = clean
                .columns()
                .into_iter()
                .map(|c| c.std(0.0))
                .collect();
            let mut x = clean.clone();
            if spec.level > 0.0 {
                for mut row in x.rows_mut() {
                    for (j, v) in row.iter_mut().enumerate() {
                        let sd = spec.level * std[j];
                        if sd > 0.0 {
                            *v += Normal::new(0.0, sd).expect("positive std").sample(&mut rng);
                        }
                    }
                }
            }
            Ok(graph.with_features(x)?)
        }
    }
}

/// Signed relative change in percent: `(corrupted − clean)/clean × 100`.
pub fn relative_drop(clean: f64, corrupted: f64) -> f64 {
    (corrupted - clean) / clean * 100.0
}

/// `Some(std > 0.10)` for two or more seeds, `None` otherwise.
pub fn bimodal_flag(accuracies: &[f64]) -> Option<bool> {
    mean_std(accuracies).1.map(|s| s > BIMODAL_STD)
}

/// A delimiter-separated output row.
pub trait TableRow {
    fn header() -> Vec<&'static str>;
    fn cells(&self) -> Vec<String>;
}

pub fn render_tsv<R: TableRow>(rows: &[R]) -> String {
    let mut s = R::header().join("\t");
    s.push('\n');
    for r in rows {
        s.push_str(&r.cells().join("\t"));
        s.push('\n');
    }
    s
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{x:.4}"))
}

fn opt_flag(v: Option<bool>) -> String {
    v.map_or_else(|| "NA".into(), |b| b.to_string())
}

/// `(x, mean, std)` series for external plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub series: String,
    pub x: f64,
    pub mean: f64,
    pub std: Option<f64>,
}

pub fn render_plot_data(points: &[PlotPoint]) -> String {
    let mut s = String::from("series\tx\tmean\tstd\n");
    for p in points {
        let _ = writeln!(s, "{}\t{}\t{:.6}\t{}", p.series, p.x, p.mean, p.std.map_or("NA".into(), |v| format!("{v:.6}")));
    }
    s
}

fn seeded(cfg: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig { seed, ..cfg.clone() }
}

/// Trains every `(config, seed)` job in parallel; output order follows the
/// input order.
fn train_all(graph: &Graph, jobs: &[TrainConfig]) -> Result<Vec<(GhnModel, RunRecord)>> {
    jobs.par_iter().map(|cfg| run(graph, cfg)).collect()
}

/// Trains `cfg` once per seed, in parallel; results follow `seeds` order.
pub fn train_seeds(graph: &Graph, cfg: &TrainConfig, seeds: &[u64]) -> Result<Vec<(GhnModel, RunRecord)>> {
    if seeds.is_empty() {
        return Err(ExperimentError::Empty("seed").into());
    }
    let jobs: Vec<TrainConfig> = seeds.iter().map(|&s| seeded(cfg, s)).collect();
    train_all(graph, &jobs)
}

// ---- robustness ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub variant: Variant,
    pub kind: CorruptionKind,
    pub level: f64,
    pub mean: f64,
    pub std: Option<f64>,
    /// Relative to the clean (level 0) mean of the same variant.
    pub relative_drop: f64,
    pub config_hash: String,
}

impl TableRow for RobustnessRow {
    fn header() -> Vec<&'static str> {
        vec!["variant", "kind", "level", "mean", "std", "relative_drop_pct", "config_hash"]
    }
    fn cells(&self) -> Vec<String> {
        vec![
            self.variant.to_string(),
            self.kind.name().into(),
            format!("{}", self.level),
            format!("{:.4}", self.mean),
            opt(self.std),
            format!("{:.2}", self.relative_drop),
            self.config_hash.clone(),
        ]
    }
}

/// Clean-trained models per `(variant, seed)` scored on corrupted copies.
pub fn robustness_curve(
    graph: &Graph,
    base: &TrainConfig,
    variants: &[Variant],
    kinds: &[CorruptionKind],
    levels: &[f64],
    mask_mode: MaskMode,
    seeds: &[u64],
) -> Result<Vec<RobustnessRow>> {
    if variants.is_empty() || kinds.is_empty() || seeds.is_empty() {
        return Err(ExperimentError::Empty("variant, kind or seed").into());
    }
    if levels.is_empty() {
        return Err(ExperimentError::Empty("level").into());
    }
    if let Some(&bad) = levels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(ExperimentError::InvalidLevel(bad).into());
    }
    let mut rows = Vec::new();
    for &variant in variants {
        let cfg = TrainConfig { variant, ..base.clone() };
        let jobs: Vec<TrainConfig> = seeds.iter().map(|&s| seeded(&cfg, s)).collect();
        let trained = train_all(graph, &jobs)?;
        let clean: Vec<f64> = trained.iter().map(|(_, r)| r.test_acc).collect();
        let clean_mean = mean_std(&clean).0;
        let config_hash = hash_of(&cfg)?;
        for &kind in kinds {
            for &level in levels {
                let accs = trained
                    .par_iter()
                    .map(|(model, rec)| -> Result<f64> {
                        if level == 0.0 {
                            return Ok(rec.test_acc);
                        }
                        let spec = CorruptionSpec {
                            mask_mode,
                            ..CorruptionSpec::new(kind, level, rec.seed)
                        };
                        let g = corrupt(graph, &spec)?;
                        let l = normalized_laplacian(&g, cfg.self_loops)?;
                        match model.evaluate(&g, &l, Split::Test) {
                            Ok(a) => Ok(a),
                            Err(crate::Error::Model(crate::model::ModelError::NonFinite { .. })) => Ok(0.0),
                            Err(e) => Err(e),
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                let (mean, std) = mean_std(&accs);
                rows.push(RobustnessRow {
                    variant,
                    kind,
                    level,
                    mean,
                    std,
                    relative_drop: relative_drop(clean_mean, mean),
                    config_hash: config_hash.clone(),
                });
            }
        }
    }
    Ok(rows)
}

// ---- phase diagram ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    pub variant: Variant,
    pub beta_init: f64,
    pub num_patterns: usize,
    pub mean: f64,
    pub std: Option<f64>,
    pub bimodal: Option<bool>,
    pub collapses: usize,
    pub config_hash: String,
}

impl TableRow for PhaseCell {
    fn header() -> Vec<&'static str> {
        vec!["variant", "beta_init", "K", "mean", "std", "bimodal", "collapses", "config_hash"]
    }
    fn cells(&self) -> Vec<String> {
        vec![
            self.variant.to_string(),
            format!("{}", self.beta_init),
            self.num_patterns.to_string(),
            format!("{:.4}", self.mean),
            opt(self.std),
            opt_flag(self.bimodal),
            self.collapses.to_string(),
            self.config_hash.clone(),
        ]
    }
}

/// Trains every `(β_init, K)` cell over the seeds (β stays learnable).
pub fn phase_diagram(
    graph: &Graph,
    base: &TrainConfig,
    variant: Variant,
    beta_grid: &[f64],
    k_grid: &[usize],
    seeds: &[u64],
) -> Result<Vec<PhaseCell>> {
    if !matches!(variant, Variant::Lse | Variant::Lsr) {
        return Err(ExperimentError::Unknown {
            what: "phase-diagram variant",
            name: variant.to_string(),
        }
        .into());
    }
    if beta_grid.is_empty() || k_grid.is_empty() || seeds.is_empty() {
        return Err(ExperimentError::Empty("beta, K or seed").into());
    }
    let cells: Vec<TrainConfig> = beta_grid
        .iter()
        .flat_map(|&b| {
            k_grid.iter().map(move |&k| TrainConfig {
                variant,
                beta_init: b,
                num_patterns: k,
                ..base.clone()
            })
        })
        .collect();
    for c in &cells {
        c.validate()?;
    }
    let jobs: Vec<TrainConfig> = cells
        .iter()
        .flat_map(|c| seeds.iter().map(move |&s| seeded(c, s)))
        .collect();
    let records: Vec<RunRecord> = jobs
        .par_iter()
        .map(|cfg| run(graph, cfg).map(|(_, r)| r))
        .collect::<Result<_>>()?;
    cells
        .iter()
        .zip(records.chunks(seeds.len()))
        .map(|(c, recs)| {
            let accs: Vec<f64> = recs.iter().map(|r| r.test_acc).collect();
            let (mean, std) = mean_std(&accs);
            Ok(PhaseCell {
                variant,
                beta_init: c.beta_init,
                num_patterns: c.num_patterns,
                mean,
                std,
                bimodal: bimodal_flag(&accs),
                collapses: recs.iter().filter(|r| r.collapsed).count(),
                config_hash: hash_of(c)?,
            })
        })
        .collect()
}

// ---- gate analysis ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateRow {
    pub level: f64,
    pub gate_mean: f64,
    pub gate_std: Option<f64>,
    pub acc_mean: f64,
    pub acc_std: Option<f64>,
}

impl GateRow {
    /// `0.727 ± 0.039`-style rendering of the gate mean.
    pub fn formatted_gate(&self) -> String {
        format!("{:.3} ± {:.3}", self.gate_mean, self.gate_std.unwrap_or(0.0))
    }

    pub fn formatted_accuracy(&self) -> String {
        format!("{:.1} ± {:.1}", 100.0 * self.acc_mean, 100.0 * self.acc_std.unwrap_or(0.0))
    }
}

impl TableRow for GateRow {
    fn header() -> Vec<&'static str> {
        vec!["mask_level", "gate_mean", "gate_std", "acc_mean", "acc_std"]
    }
    fn cells(&self) -> Vec<String> {
        vec![
            format!("{}", self.level),
            format!("{:.4}", self.gate_mean),
            opt(self.gate_std),
            format!("{:.4}", self.acc_mean),
            opt(self.acc_std),
        ]
    }
}

/// Mean gate value (over layers, iterations, nodes and coordinates) and
/// test accuracy of trained models under increasing feature masking.
pub fn gate_analysis(graph: &Graph, models: &[GhnModel], mask_levels: &[f64], seed: u64) -> Result<Vec<GateRow>> {
    if mask_levels.is_empty() {
        return Err(ExperimentError::Empty("mask level").into());
    }
    if models.is_empty() {
        return Err(ExperimentError::Empty("model").into());
    }
    if models.iter().any(|m| m.config.variant == Variant::NoMem) {
        return Err(ExperimentError::NoGate.into());
    }
    mask_levels
        .iter()
        .map(|&level| {
            let g = corrupt(graph, &CorruptionSpec::new(CorruptionKind::FeatureMask, level, seed))?;
            let mut gates = Vec::new();
            let mut accs = Vec::new();
            for m in models {
                let l = normalized_laplacian(&g, m.config.self_loops)?;
                let (logits, diag) = m.forward(&g, &l, None)?;
                let all: Vec<f64> = diag.layers.iter().flat_map(|d| d.gate_means.iter().copied()).collect();
                gates.push(all.iter().sum::<f64>() / all.len().max(1) as f64);
                accs.push(crate::model::accuracy(&logits, &g, Split::Test));
            }
            let (gate_mean, gate_std) = mean_std(&gates);
            let (acc_mean, acc_std) = mean_std(&accs);
            Ok(GateRow {
                level,
                gate_mean,
                gate_std,
                acc_mean,
                acc_std,
            })
        })
        .collect()
}

/// Trains one model per seed and runs [`gate_analysis`] on them.
pub fn train_and_gate_analysis(graph: &Graph, cfg: &TrainConfig, mask_levels: &[f64], seeds: &[u64]) -> Result<Vec<GateRow>> {
    if cfg.variant == Variant::NoMem {
        return Err(ExperimentError::NoGate.into());
    }
    if mask_levels.is_empty() {
        return Err(ExperimentError::Empty("mask level").into());
    }
    let models: Vec<GhnModel> = train_seeds(graph, cfg, seeds)?.into_iter().map(|(m, _)| m).collect();
    gate_analysis(graph, &models, mask_levels, cfg.seed)
}

// ---- operating points ----

/// Per-layer `β‖M‖²_σ` summary across the given runs (one entry per layer
/// index present in every record).
pub fn operating_points(records: &[RunRecord]) -> Vec<OperatingPoint> {
    let layers = records.iter().map(|r| r.layers.len()).min().unwrap_or(0);
    (0..layers)
        .filter_map(|l| {
            let pairs: Vec<(f64, f64)> = records
                .iter()
                .map(|r| (r.layers[l].beta, r.layers[l].spectral_norm_m_sq))
                .collect();
            operating_point(&pairs)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingRow {
    pub layer: usize,
    #[serde(flatten)]
    pub point: OperatingPoint,
}

impl TableRow for OperatingRow {
    fn header() -> Vec<&'static str> {
        vec!["layer", "beta_mean", "spectral_norm_m_sq_mean", "product_mean", "product_std_across_seeds", "regime"]
    }
    fn cells(&self) -> Vec<String> {
        let p = &self.point;
        vec![
            self.layer.to_string(),
            format!("{:.4}", p.beta_mean),
            format!("{:.4}", p.spectral_norm_m_sq_mean),
            format!("{:.4}", p.product_mean),
            opt(p.product_std),
            p.regime.to_string(),
        ]
    }
}

// ---- ablations ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Lambda,
    Iterations,
    Heads,
    NegativeLambda,
}

impl Axis {
    pub const ALL: [Axis; 4] = [Axis::Lambda, Axis::Iterations, Axis::Heads, Axis::NegativeLambda];

    pub fn name(self) -> &'static str {
        match self {
            Axis::Lambda => "lambda",
            Axis::Iterations => "T",
            Axis::Heads => "H",
            Axis::NegativeLambda => "negative_lambda",
        }
    }

    pub fn parse(s: &str) -> std::result::Result<Self, ExperimentError> {
        Self::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s) || (s == "iterations" && *a == Axis::Iterations) || (s == "heads" && *a == Axis::Heads))
            .ok_or_else(|| ExperimentError::Unknown {
                what: "axis",
                name: s.into(),
            })
    }

    /// Applies `value` to a copy of `base`.
    pub fn apply(self, base: &TrainConfig, value: f64) -> Result<TrainConfig> {
        let bad = |reason: &str| ExperimentError::InvalidAxisValue {
            axis: self.name().into(),
            value,
            reason: reason.into(),
        };
        let count = |v: f64| -> std::result::Result<usize, ExperimentError> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(bad("expected a positive integer"))
            }
        };
        let mut cfg = base.clone();
        match self {
            Axis::Lambda => cfg.lambda = value,
            Axis::NegativeLambda => {
                if value > 0.0 {
                    return Err(bad("negative-lambda sweeps take values <= 0").into());
                }
                cfg.lambda = value;
            }
            Axis::Iterations => cfg.iterations = count(value)?,
            Axis::Heads => cfg.heads = count(value)?,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: Axis,
    pub value: f64,
    pub mean: f64,
    pub std: Option<f64>,
    pub collapses: usize,
    pub bimodal: Option<bool>,
    pub config_key: String,
    pub config_hash: String,
}

impl TableRow for SweepRow {
    fn header() -> Vec<&'static str> {
        vec!["axis", "value", "mean", "std", "collapses", "bimodal", "config_hash"]
    }
    fn cells(&self) -> Vec<String> {
        vec![
            self.axis.name().into(),
            format!("{}", self.value),
            format!("{:.4}", self.mean),
            opt(self.std),
            self.collapses.to_string(),
            opt_flag(self.bimodal),
            self.config_hash.clone(),
        ]
    }
}

/// One row per axis value: mean ± std test accuracy over seeds.
pub fn ablation_sweep(
    graph: &Graph,
    axis: Axis,
    values: &[f64],
    base: &TrainConfig,
    seeds: &[u64],
) -> Result<(Vec<SweepRow>, Vec<RunRecord>)> {
    if values.is_empty() || seeds.is_empty() {
        return Err(ExperimentError::Empty("axis value or seed").into());
    }
    let configs = values
        .iter()
        .map(|&v| axis.apply(base, v))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<TrainConfig> = configs
        .iter()
        .flat_map(|c| seeds.iter().map(move |&s| seeded(c, s)))
        .collect();
    let records: Vec<RunRecord> = jobs
        .par_iter()
        .map(|cfg| run(graph, cfg).map(|(_, r)| r))
        .collect::<Result<_>>()?;
    let rows = configs
        .iter()
        .zip(values)
        .zip(records.chunks(seeds.len()))
        .map(|((c, &value), recs)| {
            let accs: Vec<f64> = recs.iter().map(|r| r.test_acc).collect();
            let (mean, std) = mean_std(&accs);
            Ok(SweepRow {
                axis,
                value,
                mean,
                std,
                collapses: recs.iter().filter(|r| r.collapsed).count(),
                bimodal: bimodal_flag(&accs),
                config_key: c.key(),
                config_hash: hash_of(c)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((rows, records))
}

pub fn sweep_plot_data(rows: &[SweepRow]) -> Vec<PlotPoint> {
    rows.iter()
        .map(|r| PlotPoint {
            series: r.axis.name().into(),
            x: r.value,
            mean: r.mean,
            std: r.std,
        })
        .collect()
}

pub fn robustness_plot_data(rows: &[RobustnessRow]) -> Vec<PlotPoint> {
    rows.iter()
        .map(|r| PlotPoint {
            series: format!("{}:{}", r.variant, r.kind.name()),
            x: r.level,
            mean: r.mean,
            std: r.std,
        })
        .collect()
}

pub fn phase_plot_data(cells: &[PhaseCell]) -> Vec<PlotPoint> {
    cells
        .iter()
        .map(|c| PlotPoint {
            series: format!("{}:K={}", c.variant, c.num_patterns),
            x: c.beta_init,
            mean: c.mean,
            std: c.std,
        })
        .collect()
}

pub fn gate_plot_data(rows: &[GateRow]) -> Vec<PlotPoint> {
    rows.iter()
        .flat_map(|r| {
            [
                PlotPoint {
                    series: "gate".into(),
                    x: r.level,
                    mean: r.gate_mean,
                    std: r.gate_std,
                },
                PlotPoint {
                    series: "accuracy".into(),
                    x: r.level,
                    mean: r.acc_mean,
                    std: r.acc_std,
                },
            ]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate, SbmSpec};

    fn grid_graph() -> Graph {
        // 10 nodes, 4 features
        generate(&SbmSpec {
            nodes: 10,
            feature_dim: 4,
            avg_degree: 3.0,
            train_per_class: 2,
            val_per_class: 1,
            ..SbmSpec::homophilous(2)
        })
        .unwrap()
    }

    #[test]
    fn level_zero_is_identity() {
        let g = grid_graph();
        for kind in CorruptionKind::ALL {
            assert_eq!(corrupt(&g, &CorruptionSpec::new(kind, 0.0, 1)).unwrap(), g);
        }
    }

    #[test]
    fn full_edge_drop_leaves_zero_laplacian() {
        let g = grid_graph();
        let c = corrupt(&g, &CorruptionSpec::new(CorruptionKind::EdgeDrop, 1.0, 1)).unwrap();
        assert!(c.edges().is_empty());
        let l = normalized_laplacian(&c, true).unwrap();
        assert!(l.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn half_mask_zeroes_twenty_entries() {
        let g = grid_graph();
        let x = g.features().mapv(|v| v + 10.0); // no zeros beforehand
        let g = g.with_features(x).unwrap();
        let c = corrupt(&g, &CorruptionSpec::new(CorruptionKind::FeatureMask, 0.5, 4)).unwrap();
        assert_eq!(c.features().iter().filter(|&&v| v == 0.0).count(), 20);
        let rows = CorruptionSpec {
            mask_mode: MaskMode::Rows,
            ..CorruptionSpec::new(CorruptionKind::FeatureMask, 0.5, 4)
        };
        let c = corrupt(&g, &rows).unwrap();
        let zero_rows = c.features().rows().into_iter().filter(|r| r.iter().all(|&v| v == 0.0)).count();
        assert_eq!(zero_rows, 5);
    }

    #[test]
    fn edge_drop_count_and_determinism() {
        let g = generate(&SbmSpec::homophilous(0)).unwrap();
        let spec = CorruptionSpec::new(CorruptionKind::EdgeDrop, 0.3, 9);
        let a = corrupt(&g, &spec).unwrap();
        assert_eq!(a.edges().len(), 800 - 240);
        assert_eq!(a, corrupt(&g, &spec).unwrap());
        assert_eq!(a.splits(), g.splits());
        assert_eq!(a.labels(), g.labels());
        let n = corrupt(&g, &CorruptionSpec::new(CorruptionKind::FeatureNoise, 0.5, 9)).unwrap();
        assert_eq!(n, corrupt(&g, &CorruptionSpec::new(CorruptionKind::FeatureNoise, 0.5, 9)).unwrap());
        assert_ne!(n.features(), g.features());
        assert!(corrupt(&g, &CorruptionSpec::new(CorruptionKind::EdgeDrop, 1.5, 9)).is_err());
    }

    #[test]
    fn relative_drop_arithmetic() {
        assert!((relative_drop(80.0, 72.0) + 10.0).abs() < 1e-12);
    }

    #[test]
    fn bimodality_rule() {
        let mut split = vec![0.94; 5];
        split.extend([0.50; 5]);
        assert_eq!(bimodal_flag(&split), Some(true));
        assert_eq!(bimodal_flag(&[0.94; 10]), Some(false));
        assert_eq!(bimodal_flag(&[0.94]), None);
    }

    #[test]
    fn zeroed_gate_reports_sigmoid_two() {
        let g = generate(&SbmSpec {
            nodes: 40,
            ..SbmSpec::homophilous(3)
        })
        .unwrap();
        let cfg = TrainConfig {
            hidden_dim: 8,
            num_patterns: 8,
            ..TrainConfig::default()
        };
        let mut m = GhnModel::new(&cfg, g.feature_dim(), 2).unwrap();
        for layer in 0..m.num_layers() {
            let (w, b) = m.gate_mut(layer);
            w.fill(0.0);
            b.fill(2.0);
        }
        let rows = gate_analysis(&g, &[m], &[0.0, 0.3, 0.7], 1).unwrap();
        let s2 = 1.0 / (1.0 + (-2.0f64).exp());
        for r in &rows {
            assert!((r.gate_mean - s2).abs() < 1e-12);
        }
        assert!(rows[0].formatted_gate().starts_with("0.881 ± "));
        assert!(gate_analysis(&g, &[], &[0.0], 1).is_err());
        let m = GhnModel::new(&cfg, g.feature_dim(), 2).unwrap();
        assert!(gate_analysis(&g, &[m], &[], 1).is_err());
    }

    #[test]
    fn heads_axis_rejects_indivisible() {
        let err = Axis::Heads.apply(&TrainConfig::default(), 3.0).unwrap_err();
        assert_eq!(err.category(), crate::ErrorCategory::Config);
        assert!(Axis::NegativeLambda.apply(&TrainConfig::default(), 0.1).is_err());
        assert_eq!(Axis::parse("T").unwrap(), Axis::Iterations);
    }

    #[test]
    fn tables_render() {
        let row = SweepRow {
            axis: Axis::Lambda,
            value: 0.3,
            mean: 0.9,
            std: None,
            collapses: 0,
            bimodal: None,
            config_key: "k".into(),
            config_hash: "h".into(),
        };
        let t = render_tsv(&[row.clone()]);
        assert!(t.starts_with("axis\tvalue"));
        assert!(t.contains("lambda\t0.3\t0.9000\tNA"));
        assert!(render_plot_data(&sweep_plot_data(&[row])).contains("lambda\t0.3\t0.900000\tNA"));
    }
}
