use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::parse_value;

#[derive(Debug, Parser)]
#[command(name = "cuisinesense", version, about = "Two-stage food-intake recognition from wrist and head IMU streams")]
pub struct Cli {
    /// Print every configuration key with its default, then exit.
    #[arg(long)]
    pub help_config: bool,

    #[command(subcommand)]
    pub command: Option<Command>,
}

/// Flags shared by every subcommand. Each one mirrors a configuration key.
#[derive(Clone, Debug, Default, Args)]
pub struct Common {
    /// TOML config file, or a run.json to replay a recorded run.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Root seed (`seed`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (`paths.out_dir`).
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Dataset manifest (`paths.manifest`).
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Detector checkpoint (`paths.detector`).
    #[arg(long, value_name = "FILE")]
    pub detector: Option<PathBuf>,
    /// Classifier checkpoint (`paths.classifier`).
    #[arg(long, value_name = "FILE")]
    pub classifier: Option<PathBuf>,
    /// Training epochs (`training.epochs`).
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mini-batch size (`training.batch_size`).
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adam learning rate (`training.lr`).
    #[arg(long)]
    pub lr: Option<f64>,
    /// Set any configuration key, e.g. `--set detector.draws=16`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset: session CSVs, manifest and summary.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        subjects: Option<usize>,
        /// Eating minutes per class and subject.
        #[arg(long)]
        minutes: Option<f64>,
    },
    /// Train the masked-reconstruction U-Net on training eating windows.
    TrainDetector {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mask_ratio: Option<f64>,
    },
    /// Set the error threshold from validation eating windows; writes a new
    /// checkpoint.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Percentile in (0, 100], or `auto`.
        #[arg(long)]
        percentile: Option<String>,
    },
    /// Mask-ratio by percentile grid on the validation split.
    Search {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        ratios: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        percentiles: Option<Vec<f64>>,
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Train the windowed-attention food classifier on training eating windows.
    TrainClassifier {
        #[command(flatten)]
        common: Common,
    },
    /// Two-stage evaluation on the test split: metrics, confusion matrix,
    /// ablation.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Also time inference and add it to metrics.json (not byte-stable).
        #[arg(long)]
        with_latency: bool,
    },
    /// Classifier-only accuracy over confidence thresholds 0.1..0.9.
    Ablate {
        #[command(flatten)]
        common: Common,
    },
    /// Label every window of one recording.
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "FILE")]
        watch: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        glasses: Option<PathBuf>,
        /// Optional ground truth; adds accuracy to the summary.
        #[arg(long, value_name = "FILE")]
        labels: Option<PathBuf>,
    },
    /// Time single-window two-stage inference.
    Latency {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        warmup: Option<usize>,
    },
    /// Finite-difference check of every differentiable op.
    GradCheck {
        #[command(flatten)]
        common: Common,
        /// Number of consecutive seeds starting at `--seed` (default 0).
        #[arg(long, default_value_t = 3)]
        seeds: u64,
    },
}

fn push<T: Into<toml::Value>>(out: &mut Vec<(String, toml::Value)>, key: &str, v: Option<T>) {
    if let Some(v) = v {
        out.push((key.to_string(), v.into()));
    }
}

fn path_value(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.to_string_lossy().into_owned())
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::TrainDetector { .. } => "train-detector",
            Command::Calibrate { .. } => "calibrate",
            Command::Search { .. } => "search",
            Command::TrainClassifier { .. } => "train-classifier",
            Command::Eval { .. } => "eval",
            Command::Ablate { .. } => "ablate",
            Command::Infer { .. } => "infer",
            Command::Latency { .. } => "latency",
            Command::GradCheck { .. } => "grad-check",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::Synth { common, .. }
            | Command::TrainDetector { common, .. }
            | Command::Calibrate { common, .. }
            | Command::Search { common, .. }
            | Command::TrainClassifier { common }
            | Command::Eval { common, .. }
            | Command::Ablate { common }
            | Command::Infer { common, .. }
            | Command::Latency { common, .. }
            | Command::GradCheck { common, .. } => common,
        }
    }

    /// `--set` pairs first, then dedicated flags, so a flag wins over a
    /// `--set` of the same key.
    pub fn overrides(&self) -> crate::error::Result<Vec<(String, toml::Value)>> {
        let c = self.common();
        let mut out = Vec::new();
        for s in &c.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| crate::error::CliError::Config(format!("--set expects KEY=VALUE, got `{s}`")))?;
            out.push((k.trim().to_string(), parse_value(v.trim())));
        }
        let int = |v: Option<u64>| v.map(|v| v as i64);
        let size = |v: Option<usize>| v.map(|v| v as i64);
        push(&mut out, "seed", int(c.seed));
        push(&mut out, "paths.out_dir", path_value(&c.out_dir));
        push(&mut out, "paths.manifest", path_value(&c.manifest));
        push(&mut out, "paths.detector", path_value(&c.detector));
        push(&mut out, "paths.classifier", path_value(&c.classifier));
        push(&mut out, "training.epochs", size(c.epochs));
        push(&mut out, "training.batch_size", size(c.batch_size));
        push(&mut out, "training.lr", c.lr);
        match self {
            Command::Synth {
                classes,
                subjects,
                minutes,
                ..
            } => {
                push(&mut out, "synth.classes", size(*classes));
                push(&mut out, "synth.subjects", size(*subjects));
                push(&mut out, "synth.minutes", *minutes);
            }
            Command::TrainDetector { mask_ratio, .. } => push(&mut out, "detector.mask_ratio", *mask_ratio),
            Command::Calibrate { percentile, .. } => {
                push(&mut out, "detector.percentile", percentile.as_deref().map(parse_value))
            }
            Command::Search {
                ratios,
                percentiles,
                top_k,
                ..
            } => {
                push(&mut out, "search.ratios", ratios.clone());
                push(&mut out, "search.percentiles", percentiles.clone());
                push(&mut out, "search.top_k", size(*top_k));
            }
            Command::Infer {
                watch, glasses, labels, ..
            } => {
                push(&mut out, "paths.watch", path_value(watch));
                push(&mut out, "paths.glasses", path_value(glasses));
                push(&mut out, "paths.labels", path_value(labels));
            }
            Command::Latency { trials, warmup, .. } => {
                push(&mut out, "latency.trials", size(*trials));
                push(&mut out, "latency.warmup", size(*warmup));
            }
            Command::TrainClassifier { .. } | Command::Eval { .. } | Command::Ablate { .. } | Command::GradCheck { .. } => {}
        }
        Ok(out)
    }
}
