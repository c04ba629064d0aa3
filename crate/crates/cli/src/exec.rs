//! Manifest execution. Commands never act on their arguments directly: they
//! are first frozen into a [`RunManifest`], which is the only input here.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ghn_core::config::TrainConfig;
use ghn_core::experiments::{
    self, render_plot_data, render_tsv, Axis, CorruptionKind, CorruptionSpec, MaskMode, OperatingRow, PlotPoint,
};
use ghn_core::graph::normalized_laplacian;
use ghn_core::model::GhnModel;
use ghn_core::record::{append_jsonl, mean_std, read_jsonl, RunManifest, RunRecord};
use ghn_core::synthetic::load_source;
use ghn_core::theory::{self, Status};
use ghn_core::dynamics::Variant;
use ghn_core::Split;
use serde_json::{json, Value};

use crate::args::parse_list;
use crate::UsageError;

/// What a command produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub manifest_hash: String,
    /// Files written, manifest first.
    pub files: Vec<PathBuf>,
    /// Human-readable summary for stdout.
    pub summary: String,
    /// Machine-readable main result.
    pub result: Value,
    /// Names of failed certificates (verify-theory only).
    pub failed_certificates: Vec<String>,
}

pub fn manifest(
    command: &str,
    config: &TrainConfig,
    options: BTreeMap<String, String>,
    data: Vec<String>,
    seeds: Vec<u64>,
    out: &Path,
) -> RunManifest {
    let now = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    RunManifest {
        command: command.into(),
        config: config.to_text(),
        options: options.into_iter().map(|(k, v)| format!("{k}={v}")).collect(),
        data,
        seeds,
        output_dir: out.display().to_string(),
        timestamp: Some(format!("unix:{now}")),
    }
}

struct Writer {
    dir: PathBuf,
    tag: String,
    files: Vec<PathBuf>,
}

impl Writer {
    fn path(&self, stem: &str, ext: &str) -> PathBuf {
        self.dir.join(format!("{stem}-{}.{ext}", self.tag))
    }

    fn text(&mut self, stem: &str, ext: &str, contents: &str) -> Result<PathBuf> {
        let p = self.path(stem, ext);
        std::fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))?;
        self.files.push(p.clone());
        Ok(p)
    }

    fn jsonl(&mut self, stem: &str, rows: &[RunRecord]) -> Result<PathBuf> {
        let p = self.path(stem, "jsonl");
        if p.exists() {
            std::fs::remove_file(&p)?;
        }
        append_jsonl(&p, rows)?;
        self.files.push(p.clone());
        Ok(p)
    }

    fn plot(&mut self, enabled: bool, points: &[PlotPoint]) -> Result<()> {
        if enabled {
            self.text("plot", "tsv", &render_plot_data(points))?;
        }
        Ok(())
    }
}

struct Options(BTreeMap<String, String>);

impl Options {
    fn parse(list: &[String]) -> Result<Self, UsageError> {
        list.iter()
            .map(|kv| {
                kv.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| UsageError(format!("malformed manifest option `{kv}`")))
            })
            .collect::<Result<_, _>>()
            .map(Options)
    }

    fn get(&self, key: &str) -> Result<&str, UsageError> {
        self.0
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| UsageError(format!("manifest is missing option `{key}`")))
    }

    fn flag(&self, key: &str) -> bool {
        self.0.get(key).is_some_and(|v| v == "true")
    }
}

fn mask_mode(s: &str) -> Result<MaskMode, UsageError> {
    match s {
        "entries" => Ok(MaskMode::Entries),
        "rows" => Ok(MaskMode::Rows),
        other => Err(UsageError(format!("unknown mask mode `{other}` (entries | rows)"))),
    }
}

fn variants(s: &str) -> Result<Vec<Variant>, UsageError> {
    s.split(',')
        .map(str::trim)
        .map(|v| Variant::parse(v).ok_or_else(|| UsageError(format!("unknown variant `{v}`"))))
        .collect()
}

fn fmt_std(s: Option<f64>) -> String {
    s.map_or_else(|| "NA".into(), |v| format!("{v:.4}"))
}

/// Executes `m`, writing the manifest and every output into `out`.
pub fn execute(m: &RunManifest, out: &Path) -> Result<Outcome> {
    let hash = m.hash()?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut w = Writer {
        dir: out.to_path_buf(),
        tag: hash[..16].to_string(),
        files: Vec::new(),
    };
    let saved = RunManifest {
        output_dir: out.display().to_string(),
        ..m.clone()
    };
    let manifest_path = w.path("manifest", "json");
    saved.save(&manifest_path)?;
    w.files.push(manifest_path);

    let cfg = TrainConfig::from_text(&m.config).map_err(ghn_core::Error::from)?;
    let opts = Options::parse(&m.options)?;
    let plot = opts.flag("emit_plot_data");
    let graph = || -> Result<ghn_core::Graph> {
        let src = m.data.first().ok_or_else(|| UsageError("manifest names no data source".into()))?;
        Ok(load_source(src).map_err(ghn_core::Error::from)?)
    };
    let mut failed = Vec::new();
    let mut summary = String::new();

    let result = match m.command.as_str() {
        "train" => {
            let g = graph()?;
            let trained = experiments::train_seeds(&g, &cfg, &m.seeds)?;
            let records: Vec<RunRecord> = trained.iter().map(|(_, r)| r.clone()).collect();
            w.jsonl("records", &records)?;
            let mut table = String::from("seed\tbest_epoch\tstopped_epoch\ttrain_acc\tval_acc\ttest_acc\tcollapsed\trecord_hash\n");
            for (model, r) in &trained {
                let _ = writeln!(
                    table,
                    "{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{}\t{}",
                    r.seed, r.best_epoch, r.stopped_epoch, r.train_acc, r.val_acc, r.test_acc, r.collapsed, r.hash()?
                );
                let p = w.path(&format!("model-seed{}", r.seed), "json");
                std::fs::write(&p, serde_json::to_string(model)?)?;
                w.files.push(p);
            }
            w.text("train", "tsv", &table)?;
            let tests: Vec<f64> = records.iter().map(|r| r.test_acc).collect();
            let (mean, std) = mean_std(&tests);
            let _ = writeln!(summary, "{table}test accuracy {mean:.4} ± {} over {} seed(s)", fmt_std(std), tests.len());
            let longest = records.iter().map(|r| r.epochs.len()).max().unwrap_or(0);
            let curve: Vec<PlotPoint> = (0..longest)
                .map(|e| {
                    let vals: Vec<f64> = records.iter().filter_map(|r| r.epochs.get(e).map(|m| m.val_acc)).collect();
                    let (mean, std) = mean_std(&vals);
                    PlotPoint {
                        series: "val_acc".into(),
                        x: (e + 1) as f64,
                        mean,
                        std,
                    }
                })
                .collect();
            w.plot(plot, &curve)?;
            json!({ "test_mean": mean, "test_std": std, "record_hashes": records.iter().map(|r| r.hash()).collect::<Result<Vec<_>, _>>()? })
        }
        "evaluate" => {
            let path = opts.get("model")?;
            let text = std::fs::read_to_string(path).map_err(|e| ghn_core::Error::io(path, e))?;
            let model: GhnModel = serde_json::from_str(&text).map_err(ghn_core::Error::from)?;
            let mut g = graph()?;
            if let Some(kind) = opts.0.get("corrupt") {
                let spec = CorruptionSpec {
                    kind: CorruptionKind::parse(kind)?,
                    level: opts.get("level")?.parse().map_err(|_| UsageError("invalid level".into()))?,
                    seed: opts.get("corruption_seed")?.parse().map_err(|_| UsageError("invalid corruption seed".into()))?,
                    mask_mode: mask_mode(opts.get("mask_mode")?)?,
                };
                g = experiments::corrupt(&g, &spec)?;
            }
            let l = normalized_laplacian(&g, model.config.self_loops).map_err(ghn_core::Error::from)?;
            let mut table = String::from("split\taccuracy\n");
            let mut res = serde_json::Map::new();
            for split in [Split::Train, Split::Val, Split::Test] {
                let acc = model.evaluate(&g, &l, split)?;
                let _ = writeln!(table, "{split}\t{acc:.4}");
                res.insert(split.to_string(), json!(acc));
            }
            w.text("evaluate", "tsv", &table)?;
            summary.push_str(&table);
            Value::Object(res)
        }
        "sweep" => {
            let g = graph()?;
            let axis = Axis::parse(opts.get("axis")?)?;
            let values: Vec<f64> = parse_list("axis value", opts.get("values")?)?;
            let (rows, records) = experiments::ablation_sweep(&g, axis, &values, &cfg, &m.seeds)?;
            w.jsonl("records", &records)?;
            let table = render_tsv(&rows);
            w.text("sweep", "tsv", &table)?;
            w.plot(plot, &experiments::sweep_plot_data(&rows))?;
            summary.push_str(&table);
            serde_json::to_value(&rows)?
        }
        "corrupt" => {
            let g = graph()?;
            let vs = variants(opts.get("variants")?)?;
            let kinds = opts
                .get("kinds")?
                .split(',')
                .map(|k| CorruptionKind::parse(k.trim()))
                .collect::<Result<Vec<_>, _>>()?;
            let levels: Vec<f64> = parse_list("level", opts.get("levels")?)?;
            let rows = experiments::robustness_curve(&g, &cfg, &vs, &kinds, &levels, mask_mode(opts.get("mask_mode")?)?, &m.seeds)?;
            let table = render_tsv(&rows);
            w.text("robustness", "tsv", &table)?;
            w.plot(plot, &experiments::robustness_plot_data(&rows))?;
            summary.push_str(&table);
            serde_json::to_value(&rows)?
        }
        "phase-diagram" => {
            let g = graph()?;
            let betas: Vec<f64> = parse_list("beta", opts.get("betas")?)?;
            let ks: Vec<usize> = parse_list("K", opts.get("ks")?)?;
            let cells = experiments::phase_diagram(&g, &cfg, cfg.variant, &betas, &ks, &m.seeds)?;
            let table = render_tsv(&cells);
            w.text("phase", "tsv", &table)?;
            w.plot(plot, &experiments::phase_plot_data(&cells))?;
            summary.push_str(&table);
            serde_json::to_value(&cells)?
        }
        "gate-analysis" => {
            let g = graph()?;
            let levels: Vec<f64> = parse_list("level", opts.get("levels")?)?;
            let rows = experiments::train_and_gate_analysis(&g, &cfg, &levels, &m.seeds)?;
            let table = render_tsv(&rows);
            w.text("gates", "tsv", &table)?;
            w.plot(plot, &experiments::gate_plot_data(&rows))?;
            summary.push_str(&table);
            for r in &rows {
                let _ = writeln!(
                    summary,
                    "mask {:>3.0}%: g = {}  acc = {}",
                    100.0 * r.level,
                    r.formatted_gate(),
                    r.formatted_accuracy()
                );
            }
            serde_json::to_value(&rows)?
        }
        "verify-theory" => {
            let seed = *m.seeds.first().unwrap_or(&0);
            let steps: usize = opts.get("steps")?.parse().map_err(|_| UsageError("invalid steps".into()))?;
            let mut table = String::from("instance\tregime\tproduct\trho\tmu\tcertificate\tstatus\tslack\n");
            let mut reports = Vec::new();
            for (name, inst) in theory::bundled_instances(seed).map_err(ghn_core::Error::from)? {
                let report = theory::verify(&inst, seed, steps).map_err(ghn_core::Error::from)?;
                let c = &report.constants;
                for cert in &report.certificates {
                    let _ = writeln!(
                        table,
                        "{name}\t{}\t{:.4}\t{:.4}\t{:.4}\t{}\t{:?}\t{}",
                        c.regime,
                        c.product,
                        c.rho,
                        c.mu,
                        cert.name,
                        cert.status,
                        cert.slack.map_or("NA".into(), |s| format!("{s:.3e}"))
                    );
                    if cert.status == Status::Fail {
                        failed.push(format!("{name}/{}", cert.name));
                    }
                }
                reports.push(json!({ "instance": name, "report": report }));
            }
            w.text("theory", "tsv", &table)?;
            let v = Value::Array(reports);
            w.text("theory", "json", &serde_json::to_string_pretty(&v)?)?;
            summary.push_str(&table);
            let _ = writeln!(
                summary,
                "{}",
                if failed.is_empty() { "all certificates passed".to_string() } else { format!("FAILED: {}", failed.join(", ")) }
            );
            v
        }
        "operating-point" => {
            let records: Vec<RunRecord> = match opts.0.get("records") {
                Some(p) => read_jsonl(Path::new(p))?,
                None => {
                    let g = graph()?;
                    let r: Vec<RunRecord> = experiments::train_seeds(&g, &cfg, &m.seeds)?.into_iter().map(|(_, r)| r).collect();
                    w.jsonl("records", &r)?;
                    r
                }
            };
            let rows: Vec<OperatingRow> = experiments::operating_points(&records)
                .into_iter()
                .enumerate()
                .map(|(layer, point)| OperatingRow { layer, point })
                .collect();
            let table = render_tsv(&rows);
            w.text("operating_point", "tsv", &table)?;
            summary.push_str(&table);
            for r in &rows {
                let _ = writeln!(
                    summary,
                    "layer {}: beta*||M||^2 = {:.2} ± {} across seeds ({})",
                    r.layer,
                    r.point.product_mean,
                    r.point.product_std.map_or("NA".into(), |s| format!("{s:.2}")),
                    r.point.regime
                );
            }
            serde_json::to_value(&rows)?
        }
        other => return Err(UsageError(format!("unknown manifest command `{other}`")).into()),
    };

    Ok(Outcome {
        manifest_hash: hash,
        files: w.files,
        summary,
        result,
        failed_certificates: failed,
    })
}
