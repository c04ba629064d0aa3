//! `ghn` command-line front end.
//!
//! Each subcommand is resolved into a [`RunManifest`] (resolved config text,
//! options, data sources, seeds) and then executed from that manifest alone,
//! so `ghn replay <manifest>` reproduces every output bit for bit. Output
//! files carry the first 16 hex digits of the manifest hash in their names.

pub mod args;
pub mod exec;

use std::collections::BTreeMap;

use ghn_core::config::{ConfigError, TrainConfig};
use ghn_core::graph::{write_graph, GraphError};
use ghn_core::record::RunManifest;
use ghn_core::synthetic::{generate, SbmSpec};
use ghn_core::theory::TheoryError;

pub use args::{Cli, Command};
pub use exec::{execute, Outcome};

/// Malformed command-line input that is not a config-key problem.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// Exit code for an error: config 2, data 3, numeric 4, certificate 5.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<ghn_core::Error>() {
            return e.category().exit_code();
        }
        if cause.is::<ConfigError>() || cause.is::<UsageError>() {
            return 2;
        }
        if cause.is::<GraphError>() || cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return 3;
        }
        if let Some(TheoryError::CertificateFailed { .. }) = cause.downcast_ref::<TheoryError>() {
            return 5;
        }
    }
    4
}

fn opts<const N: usize>(pairs: [(&str, String); N]) -> BTreeMap<String, String> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Builds the manifest for a subcommand and executes it.
pub fn run(cli: Cli) -> anyhow::Result<Outcome> {
    use args::parse_seeds;
    let (m, out) = match cli.command {
        Command::Train { config, data, out } => {
            let o = opts([("emit_plot_data", out.emit_plot_data.to_string())]);
            (exec::manifest("train", &config.resolve()?, o, vec![data.data], parse_seeds(&data.seeds)?, &out.out_dir), out.out_dir)
        }
        Command::Evaluate {
            model,
            data,
            corrupt,
            level,
            mask_mode,
            corruption_seed,
            out,
        } => {
            let mut o = opts([
                ("model", model.display().to_string()),
                ("level", level.to_string()),
                ("mask_mode", mask_mode),
                ("corruption_seed", corruption_seed.to_string()),
                ("emit_plot_data", out.emit_plot_data.to_string()),
            ]);
            if let Some(kind) = corrupt {
                o.insert("corrupt".into(), kind);
            }
            (exec::manifest("evaluate", &TrainConfig::default(), o, vec![data], vec![], &out.out_dir), out.out_dir)
        }
        Command::Sweep { axis, values, config, data, out } => {
            let o = opts([("axis", axis), ("values", values), ("emit_plot_data", out.emit_plot_data.to_string())]);
            (exec::manifest("sweep", &config.resolve()?, o, vec![data.data], parse_seeds(&data.seeds)?, &out.out_dir), out.out_dir)
        }
        Command::Corrupt {
            variants,
            kinds,
            levels,
            mask_mode,
            config,
            data,
            out,
        } => {
            let o = opts([
                ("variants", variants),
                ("kinds", kinds),
                ("levels", levels),
                ("mask_mode", mask_mode),
                ("emit_plot_data", out.emit_plot_data.to_string()),
            ]);
            (exec::manifest("corrupt", &config.resolve()?, o, vec![data.data], parse_seeds(&data.seeds)?, &out.out_dir), out.out_dir)
        }
        Command::PhaseDiagram { betas, ks, config, data, out } => {
            let o = opts([("betas", betas), ("ks", ks), ("emit_plot_data", out.emit_plot_data.to_string())]);
            let m = exec::manifest("phase-diagram", &config.resolve()?, o, vec![data.data], parse_seeds(&data.seeds)?, &out.out_dir);
            (m, out.out_dir)
        }
        Command::GateAnalysis { levels, config, data, out } => {
            let o = opts([("levels", levels), ("emit_plot_data", out.emit_plot_data.to_string())]);
            let m = exec::manifest("gate-analysis", &config.resolve()?, o, vec![data.data], parse_seeds(&data.seeds)?, &out.out_dir);
            (m, out.out_dir)
        }
        Command::VerifyTheory { seed, steps, out } => {
            let o = opts([("steps", steps.to_string()), ("emit_plot_data", out.emit_plot_data.to_string())]);
            let m = exec::manifest("verify-theory", &TrainConfig::default(), o, vec!["bundled".into()], vec![seed], &out.out_dir);
            (m, out.out_dir)
        }
        Command::OperatingPoint { records, config, data, out } => {
            let mut o = opts([("emit_plot_data", out.emit_plot_data.to_string())]);
            if let Some(r) = records {
                o.insert("records".into(), r.display().to_string());
            }
            let m = exec::manifest("operating-point", &config.resolve()?, o, vec![data.data], parse_seeds(&data.seeds)?, &out.out_dir);
            (m, out.out_dir)
        }
        Command::MakeSynthetic { kind, seed, out } => {
            let spec = match kind.as_str() {
                "homophilous" => SbmSpec::homophilous(seed),
                "heterophilous" => SbmSpec::heterophilous(seed),
                other => return Err(UsageError(format!("unknown synthetic kind `{other}`")).into()),
            };
            let g = generate(&spec)?;
            write_graph(&g, &out).map_err(|e| ghn_core::Error::io(out.display().to_string(), e))?;
            return Ok(Outcome {
                manifest_hash: String::new(),
                files: ["edges", "features", "labels", "splits"].iter().map(|f| out.join(format!("{f}.txt"))).collect(),
                summary: format!(
                    "wrote {} nodes, {} edges, edge homophily {:.3} to {}\n",
                    g.num_nodes(),
                    g.edges().len(),
                    g.edge_homophily(),
                    out.display()
                ),
                result: serde_json::Value::Null,
                failed_certificates: vec![],
            });
        }
        Command::Replay { manifest, out } => {
            let m = RunManifest::load(&manifest)?;
            let out = out.unwrap_or_else(|| m.output_dir.clone().into());
            (m, out)
        }
    };
    let mut outcome = execute(&m, &out)?;
    outcome.summary.push_str(&format!("manifest {}\n", outcome.manifest_hash));
    Ok(outcome)
}
