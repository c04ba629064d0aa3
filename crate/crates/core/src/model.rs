//! Encoder → stacked layers → linear classifier, trained full-graph with
//! Adam and early stopping on validation accuracy.
//!
//! Each layer runs `T` gated update iterations from its input and then
//! applies `LayerNorm(X_T + skip · X_in)`, followed by dropout in training.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Mat, Tape, Var};
use crate::config::TrainConfig;
use crate::dynamics::{iterate_tape, Diagnostics, DynamicsError, Variant};
use crate::error::Result;
use crate::graph::{normalized_laplacian, Graph, Split};
use crate::memory::{BankVars, GateVars};
use crate::record::{hash_of, mean_std, EpochMetrics, LayerDiagnostics, RunRecord};
use crate::rng::{stream, RunRng, Stream};
use crate::sparse::CsrMatrix;
use crate::theory::spectral_norm;

const LN_EPS: f64 = 1e-5;
const PER_LAYER: usize = 6;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("feature dimension {got} does not match the encoder input {expected}")]
    FeatureDim { expected: usize, got: usize },
    #[error("non-finite activations at {location}")]
    NonFinite { location: String },
    #[error("empty hyperparameter grid or seed list")]
    EmptyGrid,
    #[error("no labeled training nodes")]
    NoTrainingNodes,
}

impl ModelError {
    pub fn is_config(&self) -> bool {
        matches!(self, ModelError::EmptyGrid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Mat,
    /// Whether L2 weight decay applies.
    pub decay: bool,
    pub frozen: bool,
}

/// Parameters in a fixed order: encoder weight and bias, then per layer
/// `patterns, log_beta, gate_weight, gate_bias, ln_gain, ln_bias`, then
/// classifier weight and bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GhnModel {
    pub config: TrainConfig,
    pub in_dim: usize,
    pub classes: usize,
    pub params: Vec<Param>,
}

/// Forward-pass diagnostics, one entry per layer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForwardDiagnostics {
    pub layers: Vec<Diagnostics>,
}

fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Mat {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..bound))
}

fn param(name: impl Into<String>, value: Mat, decay: bool, frozen: bool) -> Param {
    Param {
        name: name.into(),
        value,
        decay,
        frozen,
    }
}

impl GhnModel {
    /// Initialises a model from the `Init` stream of `cfg.seed`.
    pub fn new(cfg: &TrainConfig, in_dim: usize, classes: usize) -> Result<Self> {
        cfg.validate()?;
        let mut rng = stream(cfg.seed, Stream::Init);
        let d = cfg.hidden_dim;
        let mut params = vec![
            param("encoder.weight", uniform(in_dim, d, in_dim, &mut rng), true, false),
            param("encoder.bias", uniform(1, d, in_dim, &mut rng), true, false),
        ];
        for layer in 0..cfg.num_layers {
            let scale = 1.0 / (d as f64).sqrt();
            let mut m = Array2::from_shape_simple_fn((cfg.num_patterns, d), || {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            });
            if let Some(target) = cfg.pattern_sq_norm {
                let sigma = spectral_norm(&m.view(), 1e-15)?;
                m *= target.sqrt() / sigma;
            }
            let p = |n: &str| format!("layer{layer}.{n}");
            params.push(param(p("patterns"), m, true, cfg.freeze_patterns));
            params.push(param(
                p("log_beta"),
                Array2::from_elem((1, 1), cfg.beta_init.ln()),
                false,
                cfg.freeze_beta,
            ));
            params.push(param(p("gate.weight"), uniform(2 * d, d, 2 * d, &mut rng), true, false));
            params.push(param(p("gate.bias"), Array2::from_elem((1, d), cfg.gate_bias), false, false));
            params.push(param(p("norm.gain"), Array2::ones((1, d)), false, false));
            params.push(param(p("norm.bias"), Array2::zeros((1, d)), false, false));
        }
        params.push(param("classifier.weight", uniform(d, classes, d, &mut rng), true, false));
        params.push(param("classifier.bias", uniform(1, classes, d, &mut rng), true, false));
        Ok(Self {
            config: cfg.clone(),
            in_dim,
            classes,
            params,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.config.num_layers
    }

    fn layer_base(layer: usize) -> usize {
        2 + PER_LAYER * layer
    }

    /// Count of parameters that influence the output.
    pub fn parameter_count(&self) -> usize {
        let nomem = self.config.variant == Variant::NoMem;
        self.params
            .iter()
            .filter(|p| !(nomem && (p.name.ends_with("patterns") || p.name.ends_with("log_beta") || p.name.contains(".gate."))))
            .map(|p| p.value.len())
            .sum()
    }

    pub fn patterns(&self, layer: usize) -> &Mat {
        &self.params[Self::layer_base(layer)].value
    }

    pub fn beta(&self, layer: usize) -> f64 {
        self.params[Self::layer_base(layer) + 1].value[[0, 0]].exp()
    }

    /// Mutable access to a layer's gate weight and bias.
    pub fn gate_mut(&mut self, layer: usize) -> (&mut Mat, &mut Mat) {
        let base = Self::layer_base(layer);
        let (head, tail) = self.params.split_at_mut(base + 3);
        (&mut head[base + 2].value, &mut tail[0].value)
    }

    fn bind<'a>(&self, tape: &mut Tape<'a>) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| {
                if p.frozen {
                    tape.constant(p.value.clone())
                } else {
                    tape.param(p.value.clone())
                }
            })
            .collect()
    }

    fn forward_tape<'a>(
        &self,
        tape: &mut Tape<'a>,
        vars: &[Var],
        features: Var,
        l: &'a CsrMatrix,
        mut dropout: Option<&mut RunRng>,
    ) -> Result<(Var, ForwardDiagnostics)> {
        let cfg = &self.config;
        let rate = cfg.dropout;
        let mut h = tape.matmul(features, vars[0])?;
        h = tape.add_row(h, vars[1])?;
        h = tape.relu(h);
        if let Some(rng) = dropout.as_deref_mut() {
            h = tape.dropout_mask(h, rate, rng);
        }
        let dyn_cfg = cfg.dynamics();
        let mut diag = ForwardDiagnostics::default();
        for layer in 0..cfg.num_layers {
            let base = Self::layer_base(layer);
            let log_beta = vars[base + 1];
            let bank = BankVars {
                patterns: vars[base],
                log_beta,
                beta: tape.exp(log_beta),
                groups: cfg.effective_groups(),
                heads: cfg.heads,
            };
            let gate = GateVars {
                weight: vars[base + 2],
                bias: vars[base + 3],
            };
            let (xt, d) = iterate_tape(tape, h, &bank, Some(&gate), &dyn_cfg, l).map_err(|e| match e {
                DynamicsError::NonFinite { iteration } => ModelError::NonFinite {
                    location: format!("layer {layer}, iteration {iteration}"),
                }
                .into(),
                other => crate::Error::from(other),
            })?;
            diag.layers.push(d);
            let skip = tape.scale(h, cfg.skip_weight);
            let sum = tape.add(xt, skip)?;
            h = tape.layer_norm(sum, vars[base + 4], vars[base + 5], LN_EPS)?;
            if let Some(rng) = dropout.as_deref_mut() {
                h = tape.dropout_mask(h, rate, rng);
            }
        }
        let n = vars.len();
        let mut logits = tape.matmul(h, vars[n - 2])?;
        logits = tape.add_row(logits, vars[n - 1])?;
        if tape.value(logits).iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite {
                location: "classifier".into(),
            }
            .into());
        }
        Ok((logits, diag))
    }

    fn check_features(&self, graph: &Graph) -> Result<()> {
        if graph.feature_dim() != self.in_dim {
            return Err(ModelError::FeatureDim {
                expected: self.in_dim,
                got: graph.feature_dim(),
            }
            .into());
        }
        Ok(())
    }

    /// Logits `N × C`. Dropout is active only when `training` is set, drawing
    /// from `rng`.
    pub fn forward(
        &self,
        graph: &Graph,
        l: &CsrMatrix,
        training: Option<&mut RunRng>,
    ) -> Result<(Mat, ForwardDiagnostics)> {
        self.check_features(graph)?;
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let x = tape.constant(graph.features().clone());
        let (logits, diag) = self.forward_tape(&mut tape, &vars, x, l, training)?;
        Ok((tape.value(logits).clone(), diag))
    }

    /// Mean cross-entropy over `nodes` (evaluation mode) and its gradient
    /// with respect to every parameter.
    pub fn loss_and_grads(&self, graph: &Graph, l: &CsrMatrix, nodes: &[usize]) -> Result<(f64, Vec<Mat>)> {
        self.check_features(graph)?;
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let x = tape.constant(graph.features().clone());
        let (logits, _) = self.forward_tape(&mut tape, &vars, x, l, None)?;
        let targets = targets(graph, nodes);
        let loss = tape.cross_entropy_with_logits(logits, &targets)?;
        let value = tape.scalar_value(loss);
        tape.backward(loss)?;
        Ok((value, vars.iter().map(|&v| tape.grad_or_zeros(v)).collect()))
    }

    /// Trains in place and returns the run record. Parameters end at the
    /// best-validation epoch.
    pub fn train(&mut self, graph: &Graph, l: &CsrMatrix) -> Result<RunRecord> {
        self.check_features(graph)?;
        let cfg = self.config.clone();
        let train_nodes = graph.split_nodes(Split::Train);
        if train_nodes.is_empty() {
            return Err(ModelError::NoTrainingNodes.into());
        }
        let train_targets = targets(graph, &train_nodes);
        let mut dropout_rng = stream(cfg.seed, Stream::Dropout);
        let mut adam = Adam::new(&self.params, cfg.learning_rate, cfg.weight_decay);

        let mut epochs = Vec::new();
        let mut best_val = f64::NEG_INFINITY;
        let mut best_epoch = 0;
        let mut best_params: Option<Vec<Param>> = None;
        let mut since_best = 0;
        let mut collapse_epoch = None;
        let mut stopped_epoch = 0;

        for epoch in 1..=cfg.epochs {
            stopped_epoch = epoch;
            let step = (|| -> Result<Option<(f64, Vec<Mat>)>> {
                let mut tape = Tape::new();
                let vars = self.bind(&mut tape);
                let x = tape.constant(graph.features().clone());
                let (logits, _) = self.forward_tape(&mut tape, &vars, x, l, Some(&mut dropout_rng))?;
                let loss = tape.cross_entropy_with_logits(logits, &train_targets)?;
                let value = tape.scalar_value(loss);
                if !value.is_finite() {
                    return Ok(None);
                }
                tape.backward(loss)?;
                Ok(Some((value, vars.iter().map(|&v| tape.grad_or_zeros(v)).collect())))
            })();
            let (loss, grads) = match step {
                Ok(Some(v)) => v,
                Ok(None) | Err(crate::Error::Model(ModelError::NonFinite { .. })) => {
                    collapse_epoch = Some(epoch);
                    break;
                }
                Err(e) => return Err(e),
            };
            adam.step(&mut self.params, &grads);

            let (train_acc, val_acc) = match self.forward(graph, l, None) {
                Ok((logits, _)) => (
                    accuracy(&logits, graph, Split::Train),
                    accuracy(&logits, graph, Split::Val),
                ),
                Err(crate::Error::Model(ModelError::NonFinite { .. })) => {
                    collapse_epoch = Some(epoch);
                    break;
                }
                Err(e) => return Err(e),
            };
            epochs.push(EpochMetrics {
                epoch,
                train_loss: loss,
                train_acc,
                val_acc,
            });
            if val_acc > best_val {
                best_val = val_acc;
                best_epoch = epoch;
                best_params = Some(self.params.clone());
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    break;
                }
            }
        }
        if let Some(p) = best_params {
            self.params = p;
        }

        let (train_acc, val_acc, test_acc, layers, final_collapse) = match self.forward(graph, l, None) {
            Ok((logits, diag)) => (
                accuracy(&logits, graph, Split::Train),
                accuracy(&logits, graph, Split::Val),
                accuracy(&logits, graph, Split::Test),
                self.layer_diagnostics(&diag)?,
                false,
            ),
            // A diverged network scores as a constant (class 0) predictor.
            Err(crate::Error::Model(ModelError::NonFinite { .. })) => (
                constant_accuracy(graph, Split::Train),
                constant_accuracy(graph, Split::Val),
                constant_accuracy(graph, Split::Test),
                Vec::new(),
                true,
            ),
            Err(e) => return Err(e),
        };
        if final_collapse && collapse_epoch.is_none() {
            collapse_epoch = Some(stopped_epoch);
        }

        Ok(RunRecord {
            config_key: cfg.key(),
            config_hash: hash_of(&cfg)?,
            seed: cfg.seed,
            config: cfg,
            parameter_count: self.parameter_count(),
            epochs,
            best_epoch,
            stopped_epoch,
            train_acc,
            val_acc,
            test_acc,
            layers,
            collapsed: collapse_epoch.is_some(),
            collapse_epoch,
        })
    }

    fn layer_diagnostics(&self, diag: &ForwardDiagnostics) -> Result<Vec<LayerDiagnostics>> {
        (0..self.num_layers())
            .map(|layer| {
                let sigma = spectral_norm(&self.patterns(layer).view(), 1e-12)?;
                let beta = self.beta(layer);
                let d = diag.layers.get(layer).cloned().unwrap_or_default();
                Ok(LayerDiagnostics {
                    beta,
                    spectral_norm_m_sq: sigma * sigma,
                    product: beta * sigma * sigma,
                    gate_means: d.gate_means,
                    step_norms: d.step_norms,
                })
            })
            .collect()
    }

    /// Evaluation-mode accuracy on a split.
    pub fn evaluate(&self, graph: &Graph, l: &CsrMatrix, split: Split) -> Result<f64> {
        let (logits, _) = self.forward(graph, l, None)?;
        Ok(accuracy(&logits, graph, split))
    }
}

fn constant_accuracy(graph: &Graph, split: Split) -> f64 {
    let labels: Vec<usize> = graph
        .split_nodes(split)
        .into_iter()
        .filter_map(|n| graph.labels()[n])
        .collect();
    if labels.is_empty() {
        return 0.0;
    }
    labels.iter().filter(|&&c| c == 0).count() as f64 / labels.len() as f64
}

fn targets(graph: &Graph, nodes: &[usize]) -> Vec<(usize, usize)> {
    nodes
        .iter()
        .filter_map(|&n| graph.labels()[n].map(|c| (n, c)))
        .collect()
}

/// Fraction of labeled nodes in `split` whose arg-max logit is the label.
/// Rows with non-finite logits count as wrong; an empty split scores 0.
pub fn accuracy(logits: &Mat, graph: &Graph, split: Split) -> f64 {
    let nodes = graph.split_nodes(split);
    let mut total = 0usize;
    let mut hits = 0usize;
    for n in nodes {
        let Some(label) = graph.labels()[n] else { continue };
        total += 1;
        let row = logits.row(n);
        if row.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let pred = row
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
            .0;
        hits += usize::from(pred == label);
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// Adam with L2 weight decay added to the gradient.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    weight_decay: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl Adam {
    pub fn new(params: &[Param], lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: params.iter().map(|p| Array2::zeros(p.value.raw_dim())).collect(),
            v: params.iter().map(|p| Array2::zeros(p.value.raw_dim())).collect(),
        }
    }

    pub fn step(&mut self, params: &mut [Param], grads: &[Mat]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            if p.frozen {
                continue;
            }
            let wd = if p.decay { self.weight_decay } else { 0.0 };
            let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
            ndarray::Zip::from(&mut p.value)
                .and(g)
                .and(&mut self.m[i])
                .and(&mut self.v[i])
                .for_each(|w, &gi, m, v| {
                    let gi = gi + wd * *w;
                    *m = b1 * *m + (1.0 - b1) * gi;
                    *v = b2 * *v + (1.0 - b2) * gi * gi;
                    *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
        }
    }
}

/// Builds the Laplacian for `cfg`, initialises a model and trains it.
pub fn run(graph: &Graph, cfg: &TrainConfig) -> Result<(GhnModel, RunRecord)> {
    let l = normalized_laplacian(graph, cfg.self_loops)?;
    let mut model = GhnModel::new(cfg, graph.feature_dim(), graph.num_classes())?;
    let record = model.train(graph, &l)?;
    Ok((model, record))
}

/// Per-config aggregate over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub config_key: String,
    pub val_mean: f64,
    pub test_mean: f64,
    pub test_std: Option<f64>,
    pub collapses: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOutcome {
    pub best: TrainConfig,
    pub best_summary: ConfigSummary,
    pub summaries: Vec<ConfigSummary>,
    /// Sorted by config key, then seed.
    pub records: Vec<RunRecord>,
}

/// Trains every `(config, seed)` pair in parallel and selects the config
/// with the highest mean validation accuracy; ties go to the
/// lexicographically smallest config key.
pub fn grid_search(graph: &Graph, grid: &[TrainConfig], seeds: &[u64]) -> Result<GridOutcome> {
    if grid.is_empty() || seeds.is_empty() {
        return Err(ModelError::EmptyGrid.into());
    }
    let jobs: Vec<TrainConfig> = grid
        .iter()
        .flat_map(|c| seeds.iter().map(move |&s| TrainConfig { seed: s, ..c.clone() }))
        .collect();
    let mut records = jobs
        .par_iter()
        .map(|cfg| run(graph, cfg).map(|(_, r)| r))
        .collect::<Result<Vec<_>>>()?;
    records.sort_by(|a, b| a.config_key.cmp(&b.config_key).then(a.seed.cmp(&b.seed)));

    let summaries = summarize(&records);
    let best_summary = summaries
        .iter()
        .fold(None::<&ConfigSummary>, |best, s| match best {
            Some(b) if s.val_mean <= b.val_mean => Some(b),
            _ => Some(s),
        })
        .cloned()
        .expect("non-empty grid");
    let best = grid
        .iter()
        .find(|c| c.key() == best_summary.config_key)
        .cloned()
        .expect("summary key comes from the grid");
    Ok(GridOutcome {
        best,
        best_summary,
        summaries,
        records,
    })
}

/// Groups records (sorted by key) into per-config summaries.
pub fn summarize(records: &[RunRecord]) -> Vec<ConfigSummary> {
    let mut out: Vec<ConfigSummary> = Vec::new();
    let mut start = 0;
    while start < records.len() {
        let key = &records[start].config_key;
        let end = start + records[start..].iter().take_while(|r| &r.config_key == key).count();
        let group = &records[start..end];
        let vals: Vec<f64> = group.iter().map(|r| r.val_acc).collect();
        let tests: Vec<f64> = group.iter().map(|r| r.test_acc).collect();
        let (test_mean, test_std) = mean_std(&tests);
        out.push(ConfigSummary {
            config_key: key.clone(),
            val_mean: mean_std(&vals).0,
            test_mean,
            test_std,
            collapses: group.iter().filter(|r| r.collapsed).count(),
        });
        start = end;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate, SbmSpec};

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            hidden_dim: 8,
            num_patterns: 8,
            groups: 2,
            epochs: 30,
            patience: 100,
            ..TrainConfig::default()
        }
    }

    fn small_graph() -> Graph {
        generate(&SbmSpec {
            nodes: 30,
            feature_dim: 5,
            avg_degree: 4.0,
            train_per_class: 5,
            val_per_class: 5,
            ..SbmSpec::homophilous(1)
        })
        .unwrap()
    }

    #[test]
    fn zero_layers_is_encoder_then_classifier() {
        let g = small_graph();
        let l = normalized_laplacian(&g, true).unwrap();
        let cfg = TrainConfig { num_layers: 0, ..small_cfg() };
        let m = GhnModel::new(&cfg, 5, 2).unwrap();
        let (logits, _) = m.forward(&g, &l, None).unwrap();
        let p = &m.params;
        let h = (g.features().dot(&p[0].value) + &p[1].value).mapv(|v| v.max(0.0));
        let expect = h.dot(&p[2].value) + &p[3].value;
        assert!((&logits - &expect).iter().all(|v| v.abs() < 1e-12));
        assert_eq!(logits.dim(), (30, 2));
    }

    #[test]
    fn nomem_zero_lambda_layer_is_scaled_layer_norm() {
        let g = small_graph();
        let l = normalized_laplacian(&g, true).unwrap();
        let cfg = TrainConfig {
            num_layers: 1,
            variant: Variant::NoMem,
            lambda: 0.0,
            ..small_cfg()
        };
        let m = GhnModel::new(&cfg, 5, 2).unwrap();
        let (logits, _) = m.forward(&g, &l, None).unwrap();
        let p = &m.params;
        let h = (g.features().dot(&p[0].value) + &p[1].value).mapv(|v| v.max(0.0));
        let s = &h * 1.1;
        let mut ln = s.clone();
        for mut row in ln.rows_mut() {
            let mean = row.mean().unwrap();
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / row.len() as f64;
            row.mapv_inplace(|v| (v - mean) / (var + LN_EPS).sqrt());
        }
        let expect = ln.dot(&p[8].value) + &p[9].value;
        assert!((&logits - &expect).iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn forward_is_deterministic() {
        let g = small_graph();
        let l = normalized_laplacian(&g, true).unwrap();
        let a = GhnModel::new(&small_cfg(), 5, 2).unwrap();
        let b = GhnModel::new(&small_cfg(), 5, 2).unwrap();
        let mut ra = stream(3, Stream::Dropout);
        let mut rb = stream(3, Stream::Dropout);
        assert_eq!(
            a.forward(&g, &l, Some(&mut ra)).unwrap().0,
            b.forward(&g, &l, Some(&mut rb)).unwrap().0
        );
    }

    #[test]
    fn feature_dim_checked() {
        let g = small_graph();
        let l = normalized_laplacian(&g, true).unwrap();
        let m = GhnModel::new(&small_cfg(), 7, 2).unwrap();
        assert!(matches!(
            m.forward(&g, &l, None),
            Err(crate::Error::Model(ModelError::FeatureDim { expected: 7, got: 5 }))
        ));
    }

    #[test]
    fn gradients_reach_patterns_and_match_differences() {
        let g = small_graph();
        let l = normalized_laplacian(&g, true).unwrap();
        for variant in [Variant::Lse, Variant::Lsr, Variant::Hier] {
            let cfg = TrainConfig { variant, ..small_cfg() };
            let m = GhnModel::new(&cfg, 5, 2).unwrap();
            let nodes = g.split_nodes(Split::Train);
            let (_, grads) = m.loss_and_grads(&g, &l, &nodes).unwrap();
            let gm = &grads[GhnModel::layer_base(0)];
            if variant != Variant::Lsr {
                assert!(gm.iter().any(|v| v.abs() > 0.0), "{variant}: pattern gradient vanished");
            }
            let mut rng = stream(11, Stream::Theory);
            for _ in 0..5 {
                let pi = rng.random_range(0..m.params.len());
                let shape = m.params[pi].value.dim();
                let (r, c) = (rng.random_range(0..shape.0), rng.random_range(0..shape.1));
                let h = 1e-5;
                let mut plus = m.clone();
                plus.params[pi].value[[r, c]] += h;
                let mut minus = m.clone();
                minus.params[pi].value[[r, c]] -= h;
                let fd = (plus.loss_and_grads(&g, &l, &nodes).unwrap().0
                    - minus.loss_and_grads(&g, &l, &nodes).unwrap().0)
                    / (2.0 * h);
                let an = grads[pi][[r, c]];
                assert!(
                    (fd - an).abs() <= 1e-4 * an.abs().max(1e-3),
                    "{variant} {}[{r},{c}]: fd {fd} vs analytic {an}",
                    m.params[pi].name
                );
            }
        }
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let g = small_graph();
        let l = normalized_laplacian(&g, true).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 5,
            ..small_cfg()
        };
        let mut m = GhnModel::new(&cfg, 5, 2).unwrap();
        let before = m.params.clone();
        let rec = m.train(&g, &l).unwrap();
        assert_eq!(m.params, before);
        assert!(rec.epochs.windows(2).all(|w| w[0].val_acc == w[1].val_acc));
    }

    #[test]
    fn patience_one_stops_at_second_epoch() {
        let g = small_graph();
        let l = normalized_laplacian(&g, true).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            patience: 1,
            ..small_cfg()
        };
        let rec = GhnModel::new(&cfg, 5, 2).unwrap().train(&g, &l).unwrap();
        assert_eq!(rec.stopped_epoch, 2);
        assert_eq!(rec.best_epoch, 1);
    }

    #[test]
    fn restored_parameters_score_best_validation() {
        let g = small_graph();
        let cfg = TrainConfig { epochs: 40, patience: 10, ..small_cfg() };
        let (_, rec) = run(&g, &cfg).unwrap();
        let best = rec.epochs.iter().map(|e| e.val_acc).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(rec.val_acc, best);
        assert_eq!(run(&g, &cfg).unwrap().1, rec);
    }

    #[test]
    fn divergence_is_recorded_as_collapse() {
        let g = small_graph();
        let cfg = TrainConfig {
            lambda: -1e154,
            alpha: 1.0,
            epochs: 5,
            ..small_cfg()
        };
        let (_, rec) = run(&g, &cfg).unwrap();
        assert!(rec.collapsed);
        assert_eq!(rec.collapse_epoch, Some(1));
    }

    #[test]
    fn frozen_operating_point() {
        let g = small_graph();
        let cfg = TrainConfig {
            freeze_beta: true,
            freeze_patterns: true,
            pattern_sq_norm: Some(2.0),
            epochs: 5,
            ..small_cfg()
        };
        let (_, rec) = run(&g, &cfg).unwrap();
        for layer in &rec.layers {
            assert!((layer.product - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn grid_singleton_and_tie_break() {
        let g = small_graph();
        let cfg = TrainConfig { epochs: 3, ..small_cfg() };
        let out = grid_search(&g, &[cfg.clone()], &[0, 1]).unwrap();
        assert_eq!(out.best.key(), cfg.key());
        assert_eq!(out.records.len(), 2);

        // zero learning rate + identical init ⇒ identical validation means
        let a = TrainConfig { learning_rate: 0.0, weight_decay: 1e-3, ..cfg.clone() };
        let b = TrainConfig { learning_rate: 0.0, weight_decay: 1e-4, ..cfg.clone() };
        let out = grid_search(&g, &[a.clone(), b.clone()], &[0]).unwrap();
        let smallest = a.key().min(b.key());
        assert_eq!(out.best.key(), smallest);
        assert!(grid_search(&g, &[], &[0]).is_err());
    }
}
