//! Run configuration: a TOML file, then `--set key=value` pairs and
//! dedicated flags on top, deserialized into [`RunConfig`].

use std::path::{Path, PathBuf};

use cuisine_core::classifier::SwinConfig;
use cuisine_core::dataset::SplitConfig;
use cuisine_core::detector::{ScoreMode, ScoringConfig, UNetConfig};
use cuisine_core::synth::DatasetSpec;
use cuisine_core::train::TrainOptions;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct RunConfig {
    /// Root of every random stream; required by commands that draw numbers.
    pub seed: Option<u64>,
    pub paths: Paths,
    pub synth: SynthSection,
    pub split: SplitSection,
    pub training: TrainingSection,
    pub detector: DetectorSection,
    pub classifier: ClassifierSection,
    pub search: SearchSection,
    pub latency: LatencySection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub out_dir: PathBuf,
    pub manifest: Option<PathBuf>,
    pub detector: Option<PathBuf>,
    pub classifier: Option<PathBuf>,
    pub watch: Option<PathBuf>,
    pub glasses: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub classes: usize,
    pub subjects: usize,
    pub minutes: f64,
    pub distractor_intensity: f64,
    pub gesture_noise: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub test_fraction: f64,
    pub val_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

/// A fixed percentile or `"auto"` (best validation accuracy among 80, 90,
/// 95, 99, 100).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Percentile {
    Fixed(f64),
    Named(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub base_channels: usize,
    pub depth: usize,
    pub mask_ratio: f64,
    pub segment_len: usize,
    pub percentile: Percentile,
    pub score_mode: ScoreMode,
    pub draws: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    pub patch_size: usize,
    pub embed_dim: usize,
    pub depths: Vec<usize>,
    pub heads: Vec<usize>,
    pub window: usize,
    pub mlp_ratio: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub ratios: Vec<f64>,
    pub percentiles: Vec<f64>,
    pub top_k: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencySection {
    pub trials: usize,
    pub warmup: usize,
}


impl Default for Paths {
    fn default() -> Self {
        Paths {
            out_dir: PathBuf::from("out"),
            manifest: None,
            detector: None,
            classifier: None,
            watch: None,
            glasses: None,
            labels: None,
        }
    }
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = DatasetSpec::new(5, 4, 1.0, 0);
        SynthSection {
            classes: d.classes,
            subjects: d.subjects,
            minutes: d.minutes_per_class,
            distractor_intensity: d.distractor_intensity,
            gesture_noise: d.gesture_noise,
        }
    }
}

impl Default for SplitSection {
    fn default() -> Self {
        let s = SplitConfig::default();
        SplitSection {
            test_fraction: s.test_fraction,
            val_fraction: s.val_fraction,
        }
    }
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainOptions::default();
        TrainingSection {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
        }
    }
}

impl Default for DetectorSection {
    fn default() -> Self {
        let u = UNetConfig::default();
        let s = ScoringConfig::default();
        DetectorSection {
            base_channels: u.base_channels,
            depth: u.depth,
            mask_ratio: u.mask_ratio,
            segment_len: u.mask_segment_len,
            percentile: Percentile::Fixed(80.0),
            score_mode: s.mode,
            draws: s.draws,
        }
    }
}

impl Default for ClassifierSection {
    fn default() -> Self {
        let s = SwinConfig::default();
        ClassifierSection {
            patch_size: s.patch_size,
            embed_dim: s.embed_dim,
            depths: s.stage_depths,
            heads: s.stage_heads,
            window: s.window_size,
            mlp_ratio: s.mlp_ratio,
        }
    }
}

impl Default for SearchSection {
    fn default() -> Self {
        SearchSection {
            ratios: vec![0.1, 0.15, 0.2],
            percentiles: vec![70.0, 80.0, 90.0],
            top_k: 20,
        }
    }
}

impl Default for LatencySection {
    fn default() -> Self {
        LatencySection { trials: 100, warmup: 10 }
    }
}

/// Every key with its meaning, in file order. `--help-config` prints these
/// next to the defaults.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "root seed for every random stream (required for synth, training and search)"),
    ("paths.out_dir", "directory receiving every output of the command"),
    ("paths.manifest", "dataset manifest written by synth"),
    ("paths.detector", "detector checkpoint to read"),
    ("paths.classifier", "classifier checkpoint to read"),
    ("paths.watch", "watch CSV for infer"),
    ("paths.glasses", "glasses CSV for infer"),
    ("paths.labels", "optional label CSV for infer"),
    ("synth.classes", "food classes in the synthetic dataset (2..=11)"),
    ("synth.subjects", "synthetic subjects, one session per class each"),
    ("synth.minutes", "eating minutes per class and subject"),
    ("synth.distractor_intensity", "amplitude scale of non-eating segments"),
    ("synth.gesture_noise", "white-noise sigma on eating gestures"),
    ("split.test_fraction", "middle fraction of each session held out for testing"),
    ("split.val_fraction", "middle fraction of the rest held out for validation"),
    ("training.epochs", "passes over the training windows"),
    ("training.batch_size", "windows per Adam step"),
    ("training.lr", "Adam learning rate"),
    ("detector.base_channels", "U-Net channels at the first level"),
    ("detector.depth", "U-Net pooling levels"),
    ("detector.mask_ratio", "fraction of timesteps masked, in (0, 1)"),
    ("detector.segment_len", "timesteps per masked run"),
    ("detector.percentile", "calibration percentile in (0, 100], or \"auto\""),
    ("detector.score_mode", "\"masked\" (masked steps only) or \"full\" reconstruction error"),
    ("detector.draws", "inference masks averaged per window"),
    ("classifier.patch_size", "timesteps per patch token"),
    ("classifier.embed_dim", "token width of the first stage"),
    ("classifier.depths", "transformer blocks per stage"),
    ("classifier.heads", "attention heads per stage"),
    ("classifier.window", "tokens per attention window"),
    ("classifier.mlp_ratio", "MLP hidden width over token width"),
    ("search.ratios", "mask ratios tried by search"),
    ("search.percentiles", "percentiles tried by search"),
    ("search.top_k", "ranked cells reported by search"),
    ("latency.trials", "timed two-stage runs (at least 100 recommended)"),
    ("latency.warmup", "untimed runs before timing"),
];

/// Commented TOML listing every key at its default.
pub fn schema_text() -> String {
    let defaults = toml::Table::try_from(RunConfig::default()).expect("defaults serialize");
    let mut out = String::from("# cuisinesense configuration; every key is optional.\n");
    out.push_str("# Flags override the file; `--set key=value` reaches any key below.\n");
    let mut section = "";
    for (key, doc) in KEYS {
        let (sec, name) = key.rsplit_once('.').unwrap_or(("", key));
        if sec != section {
            out.push_str(&format!("\n[{sec}]\n"));
            section = sec;
        }
        let value = lookup(&defaults, key);
        out.push_str(&format!("# {doc}\n"));
        match value {
            Some(v) => out.push_str(&format!("{name} = {v}\n")),
            None => out.push_str(&format!("# {name} = (unset)\n")),
        }
    }
    out
}

fn lookup<'a>(table: &'a toml::Table, key: &str) -> Option<&'a toml::Value> {
    let mut parts = key.split('.');
    let mut v = table.get(parts.next()?)?;
    for p in parts {
        v = v.as_table()?.get(p)?;
    }
    Some(v)
}

/// Parse a `--set` value as a TOML literal, falling back to a bare string.
pub fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    if !KEYS.iter().any(|(k, _)| *k == key) {
        return Err(CliError::Config(format!("unknown configuration key `{key}`")));
    }
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("non-empty key");
    let mut t = table;
    for p in parts {
        t = t
            .entry(p)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("`{p}` is not a section")))?;
    }
    t.insert(last.to_string(), value);
    Ok(())
}

/// Read a config file. A `.json` file may be a `run.json`, in which case the
/// resolved config recorded for `command` is used.
pub fn load_file(path: &Path, command: &str) -> Result<toml::Table> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    if path.extension().is_some_and(|e| e == "json") {
        let mut v: serde_json::Value = serde_json::from_str(&text)?;
        if let Some(runs) = v.get_mut("runs") {
            v = runs
                .get_mut(command)
                .and_then(|r| r.get_mut("config"))
                .map(serde_json::Value::take)
                .ok_or_else(|| CliError::Config(format!("{} has no `{command}` run", path.display())))?;
        }
        let cfg: RunConfig = serde_json::from_value(v)?;
        return toml::Table::try_from(cfg).map_err(|e| CliError::Config(e.to_string()));
    }
    text.parse::<toml::Table>()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Apply overrides in order and deserialize.
pub fn resolve(mut table: toml::Table, overrides: &[(String, toml::Value)]) -> Result<RunConfig> {
    for (k, v) in overrides {
        set_path(&mut table, k, v.clone())?;
    }
    let cfg: RunConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if let Percentile::Named(n) = &self.detector.percentile {
            if n != "auto" {
                return Err(CliError::Config(format!("detector.percentile must be a number or \"auto\", got {n:?}")));
            }
        }
        if self.detector.draws == 0 {
            return Err(CliError::Config("detector.draws must be at least 1".into()));
        }
        Ok(())
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| CliError::Config("`seed` is required for this command (--seed)".into()))
    }

    pub fn require_path(&self, key: &str) -> Result<&Path> {
        let p = match key {
            "manifest" => &self.paths.manifest,
            "detector" => &self.paths.detector,
            "classifier" => &self.paths.classifier,
            "watch" => &self.paths.watch,
            "glasses" => &self.paths.glasses,
            _ => &self.paths.labels,
        };
        let p = p
            .as_deref()
            .ok_or_else(|| CliError::Config(format!("`paths.{key}` is required (--{key})")))?;
        if !p.exists() {
            return Err(CliError::Config(format!("paths.{key} = {} does not exist", p.display())));
        }
        Ok(p)
    }

    pub fn dataset_spec(&self) -> Result<DatasetSpec> {
        let s = &self.synth;
        Ok(DatasetSpec {
            distractor_intensity: s.distractor_intensity,
            gesture_noise: s.gesture_noise,
            ..DatasetSpec::new(s.classes, s.subjects, s.minutes, self.require_seed()?)
        })
    }

    pub fn split(&self) -> SplitConfig {
        SplitConfig {
            test_fraction: self.split.test_fraction,
            val_fraction: self.split.val_fraction,
        }
    }

    pub fn train_options(&self) -> Result<TrainOptions> {
        Ok(TrainOptions {
            epochs: self.training.epochs,
            batch_size: self.training.batch_size,
            lr: self.training.lr,
            seed: self.require_seed()?,
        })
    }

    pub fn unet(&self) -> UNetConfig {
        let d = &self.detector;
        UNetConfig {
            base_channels: d.base_channels,
            depth: d.depth,
            mask_ratio: d.mask_ratio,
            mask_segment_len: d.segment_len,
            ..UNetConfig::default()
        }
    }

    pub fn scoring(&self) -> Result<ScoringConfig> {
        Ok(ScoringConfig {
            mode: self.detector.score_mode,
            draws: self.detector.draws,
            seed: self.require_seed()?,
        })
    }

    pub fn swin(&self) -> SwinConfig {
        let c = &self.classifier;
        SwinConfig {
            patch_size: c.patch_size,
            embed_dim: c.embed_dim,
            stage_depths: c.depths.clone(),
            stage_heads: c.heads.clone(),
            window_size: c.window,
            mlp_ratio: c.mlp_ratio,
            ..SwinConfig::default()
        }
    }
}
