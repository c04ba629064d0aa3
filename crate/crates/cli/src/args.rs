use std::path::PathBuf;

use clap::{value_parser, Arg, ArgAction, ArgMatches, Args, FromArgMatches, Parser, Subcommand};
use ghn_core::config::{describe_keys, TrainConfig, KEYS};

use crate::UsageError;

#[derive(Debug, Parser)]
#[command(
    name = "ghn",
    version,
    about = "Graph Hopfield Networks: training, robustness sweeps and convergence certificates",
    after_help = format!("Config keys (defaults < --config file < flags):\n{}", describe_keys())
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model per seed and write run records.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Score a saved model, optionally on a corrupted copy of the data.
    Evaluate {
        /// Model file written by `train`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "synthetic:homophilous:0")]
        data: String,
        /// Corruption kind: edge_drop | feature_mask | feature_noise.
        #[arg(long)]
        corrupt: Option<String>,
        #[arg(long, default_value_t = 0.0)]
        level: f64,
        /// Feature masking granularity: entries | rows.
        #[arg(long, default_value = "entries")]
        mask_mode: String,
        #[arg(long, default_value_t = 0)]
        corruption_seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Ablation sweep along one axis: lambda | T | H | negative_lambda.
    Sweep {
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long)]
        values: String,
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Clean-train / corrupt-eval robustness curves.
    Corrupt {
        #[arg(long, default_value = "lse,nomem")]
        variants: String,
        #[arg(long, default_value = "edge_drop,feature_mask,feature_noise")]
        kinds: String,
        #[arg(long, default_value = "0,0.1,0.2,0.3,0.4,0.5")]
        levels: String,
        #[arg(long, default_value = "entries")]
        mask_mode: String,
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Accuracy over a (beta_init, K) grid for the configured variant.
    PhaseDiagram {
        #[arg(long, default_value = "0.5,1,2,4,8")]
        betas: String,
        #[arg(long, default_value = "16,64,256")]
        ks: String,
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Mean gate value and accuracy under increasing feature masking.
    GateAnalysis {
        #[arg(long, default_value = "0,0.1,0.3,0.5,0.7")]
        levels: String,
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run every convergence certificate on the bundled instances.
    VerifyTheory {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Gradient-descent steps per descent certificate.
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Report the trained operating point beta * ||M||^2 per layer.
    OperatingPoint {
        /// Read run records instead of training.
        #[arg(long)]
        records: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Write a synthetic block graph in the four text files.
    MakeSynthetic {
        /// homophilous | heterophilous
        #[arg(long, default_value = "homophilous")]
        kind: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run a manifest; outputs are bit-identical to the original run.
    Replay {
        manifest: PathBuf,
        /// Output directory (defaults to the manifest's own).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// `synthetic:homophilous[:seed]`, `synthetic:heterophilous[:seed]`, or a
    /// directory with edges.txt, features.txt, labels.txt, splits.txt.
    #[arg(long, default_value = "synthetic:homophilous:0")]
    pub data: String,
    /// Seeds as a list (`0,1,2`) and/or ranges (`0..10`).
    #[arg(long, default_value = "0")]
    pub seeds: String,
}

#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long = "out-dir", default_value = "runs")]
    pub out_dir: PathBuf,
    /// Also write (x, mean, std) series for external plotting.
    #[arg(long)]
    pub emit_plot_data: bool,
}

/// `--config FILE`, repeated `--set key=value`, and one flag per config key.
#[derive(Debug, Clone, Default)]
pub struct ConfigArgs {
    pub file: Option<PathBuf>,
    /// `(key, value)` overrides in application order.
    pub overrides: Vec<(String, String)>,
}

fn flag(key: &str) -> String {
    key.replace('_', "-")
}

impl FromArgMatches for ConfigArgs {
    fn from_arg_matches(m: &ArgMatches) -> Result<Self, clap::Error> {
        let mut overrides = Vec::new();
        if let Some(sets) = m.get_many::<String>("set") {
            for s in sets {
                let (k, v) = s.split_once('=').ok_or_else(|| {
                    clap::Error::raw(clap::error::ErrorKind::InvalidValue, format!("--set expects key=value, got `{s}`\n"))
                })?;
                overrides.push((k.trim().to_string(), v.trim().to_string()));
            }
        }
        for (key, _, _) in KEYS {
            if let Some(v) = m.get_one::<String>(key) {
                overrides.push((key.to_string(), v.clone()));
            }
        }
        Ok(Self {
            file: m.get_one::<PathBuf>("config").cloned(),
            overrides,
        })
    }

    fn update_from_arg_matches(&mut self, m: &ArgMatches) -> Result<(), clap::Error> {
        *self = Self::from_arg_matches(m)?;
        Ok(())
    }
}

impl Args for ConfigArgs {
    fn augment_args(cmd: clap::Command) -> clap::Command {
        let mut cmd = cmd
            .arg(
                Arg::new("config")
                    .long("config")
                    .value_name("FILE")
                    .value_parser(value_parser!(PathBuf))
                    .help("Flat key=value config file"),
            )
            .arg(
                Arg::new("set")
                    .long("set")
                    .value_name("KEY=VALUE")
                    .action(ArgAction::Append)
                    .help("Override any config key (repeatable)"),
            );
        for (key, default, help) in KEYS {
            cmd = cmd.arg(
                Arg::new(*key)
                    .long(flag(key))
                    .value_name("VALUE")
                    .help(format!("{help} [default: {default}]"))
                    .help_heading("Config keys"),
            );
        }
        cmd
    }

    fn augment_args_for_update(cmd: clap::Command) -> clap::Command {
        Self::augment_args(cmd)
    }
}

impl ConfigArgs {
    /// Defaults, then the file, then flags; validated.
    pub fn resolve(&self) -> anyhow::Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        if let Some(path) = &self.file {
            let text = std::fs::read_to_string(path).map_err(|e| ghn_core::Error::io(path.display().to_string(), e))?;
            cfg.apply_text(&text).map_err(ghn_core::Error::from)?;
        }
        for (k, v) in &self.overrides {
            cfg.set(k, v).map_err(ghn_core::Error::from)?;
        }
        cfg.validate().map_err(ghn_core::Error::from)?;
        Ok(cfg)
    }
}

/// Parses `0,1,5..8` into `[0, 1, 5, 6, 7]`.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, UsageError> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || UsageError(format!("invalid seed list entry `{part}`"));
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.parse().map_err(|_| bad())?;
            let b: u64 = b.parse().map_err(|_| bad())?;
            out.extend(a..b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() {
        return Err(UsageError("seed list is empty".into()));
    }
    Ok(out)
}

pub fn parse_list<T: std::str::FromStr>(what: &str, text: &str) -> Result<Vec<T>, UsageError> {
    text.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().map_err(|_| UsageError(format!("invalid {what} `{p}`"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds() {
        assert_eq!(parse_seeds("0,1,5..8").unwrap(), vec![0, 1, 5, 6, 7]);
        assert!(parse_seeds("x").is_err());
        assert!(parse_seeds("").is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.txt");
        std::fs::write(&p, "lambda=0.1\nalpha=0.5\n").unwrap();
        let cli = Cli::try_parse_from(["ghn", "train", "--config", p.to_str().unwrap(), "--lambda", "0.2"]).unwrap();
        let Command::Train { config, .. } = cli.command else { panic!() };
        let cfg = config.resolve().unwrap();
        assert_eq!((cfg.lambda, cfg.alpha), (0.2, 0.5));
    }
}
