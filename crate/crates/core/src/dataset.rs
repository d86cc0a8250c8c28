//! Dataset manifests and the canonical train / validation / test split.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{io_err, CoreError, Result};
use crate::imu::{
    middle_block, parse_session, segment, IntakeState, Session, SessionMeta, Utensil, WindowPair,
    WINDOW_HOP, WINDOW_LEN,
};

/// One session entry; CSV paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub subject_id: String,
    pub utensil: Utensil,
    pub watch_csv: String,
    pub glasses_csv: String,
    pub labels_csv: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Manifest(pub Vec<ManifestEntry>);

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(io_err(path))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self)?;
        cuisine_nn::checkpoint::write_atomic(path, &json).map_err(io_err(path))
    }
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Parse every session listed in a manifest, in manifest order.
pub fn load_sessions(manifest_path: &Path) -> Result<Vec<Session>> {
    let manifest = Manifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    manifest
        .0
        .iter()
        .map(|e| {
            parse_session(
                &resolve(base, &e.watch_csv),
                &resolve(base, &e.glasses_csv),
                &resolve(base, &e.labels_csv),
                &SessionMeta {
                    subject_id: e.subject_id.clone(),
                    utensil: e.utensil,
                },
            )
        })
        .collect()
}

/// Time-ordered windows of one recording session.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowGroup {
    pub subject_id: String,
    pub windows: Vec<WindowPair>,
}

pub fn window_groups(sessions: &[Session]) -> Result<Vec<WindowGroup>> {
    sessions
        .iter()
        .map(|s| {
            Ok(WindowGroup {
                subject_id: s.subject_id.clone(),
                windows: segment(s, WINDOW_LEN, WINDOW_HOP)?,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    /// Middle fraction of each session held out for testing.
    pub test_fraction: f64,
    /// Middle fraction of each session's remaining windows held out for
    /// validation (threshold calibration and hyperparameter search).
    pub val_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            test_fraction: 0.2,
            val_fraction: 0.2,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<WindowPair>,
    pub validation: Vec<WindowPair>,
    pub test: Vec<WindowPair>,
}

/// Hold out the middle block of every session for test, then the middle
/// block of what remains for validation. Splitting per session rather than
/// per subject keeps both intake states in every held-out block.
pub fn split_groups(groups: &[WindowGroup], cfg: SplitConfig) -> Result<DatasetSplit> {
    let mut out = DatasetSplit::default();
    for g in groups {
        let test = middle_block(g.windows.len(), cfg.test_fraction)?;
        out.test.extend_from_slice(&g.windows[test.clone()]);
        let rest: Vec<&WindowPair> = g.windows[..test.start]
            .iter()
            .chain(&g.windows[test.end..])
            .collect();
        let val = middle_block(rest.len(), cfg.val_fraction)?;
        for (i, w) in rest.into_iter().enumerate() {
            if val.contains(&i) {
                out.validation.push(w.clone());
            } else {
                out.train.push(w.clone());
            }
        }
    }
    Ok(out)
}

/// Load a manifest, segment and split in one step.
pub fn load_split(manifest_path: &Path, cfg: SplitConfig) -> Result<DatasetSplit> {
    let sessions = load_sessions(manifest_path)?;
    if sessions.is_empty() {
        return Err(CoreError::InvalidArgument(format!(
            "{} lists no sessions",
            manifest_path.display()
        )));
    }
    split_groups(&window_groups(&sessions)?, cfg)
}

pub fn eating_only(windows: &[WindowPair]) -> Vec<WindowPair> {
    windows
        .iter()
        .filter(|w| w.state() == IntakeState::Eating)
        .cloned()
        .collect()
}
