//! Deterministic synthetic eating sessions with separable gesture classes and
//! non-eating distractors.
//!
//! All randomness comes from [`SplitMix64`] seeded per session and segment via
//! `derive_seed`, so a fixed seed reproduces the same CSV bytes on every
//! platform.

use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::{Path, PathBuf};

use cuisine_nn::rng::derive_seed;
use cuisine_nn::SplitMix64;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dataset::{Manifest, ManifestEntry};
use crate::error::{io_err, CoreError, Result};
use crate::imu::{
    segment, write_session, Device, ImuSample, IntakeState, LabelInterval, SensorStream, Session,
    SessionFiles, Utensil, WindowPair, NUM_FOODS, WINDOW_HOP, WINDOW_LEN,
};

/// Glasses see the wrist pattern attenuated by this factor.
pub const GLASSES_GAIN: f64 = 0.3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GestureSpec {
    pub class_id: usize,
    pub base_freq: f64,
    pub amp: [f64; 6],
    pub harmonics: u32,
    pub harmonic_decay: f64,
    pub noise_sigma: f64,
    pub duration: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistractorKind {
    /// Resting posture: per-channel offset plus sensor noise.
    Idle,
    /// Fast tremor-like tones in the 6-12 Hz band.
    Jitter,
    /// A slow enveloped movement that is not an intake gesture.
    GestureBurst,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistractorSpec {
    pub kind: DistractorKind,
    pub intensity: f64,
    pub duration: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SegmentSpec {
    Gesture(GestureSpec),
    Distractor(DistractorSpec),
}

impl SegmentSpec {
    pub fn duration(&self) -> f64 {
        match self {
            SegmentSpec::Gesture(g) => g.duration,
            SegmentSpec::Distractor(d) => d.duration,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            SegmentSpec::Gesture(g) => {
                g.class_id < NUM_FOODS
                    && g.base_freq > 0.0
                    && g.duration > 0.0
                    && g.noise_sigma >= 0.0
                    && g.harmonic_decay > 0.0
                    && g.harmonic_decay <= 1.0
                    && g.amp.iter().all(|a| a.is_finite())
            }
            SegmentSpec::Distractor(d) => d.duration > 0.0 && d.intensity >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(CoreError::InvalidArgument(format!("bad segment spec {self:?}")))
        }
    }
}

/// Fixed per-channel phase offset.
fn phase(ch: usize) -> f64 {
    ch as f64 * PI / 6.0
}

/// One segment turned into a deterministic signal plus a noise level, both
/// evaluated at local time.
enum Realized {
    Gesture {
        freq: f64,
        amp: [f64; 6],
        weights: Vec<f64>,
        sigma: f64,
    },
    Idle {
        offset: [f64; 6],
        sigma: f64,
    },
    Tones {
        freq: [f64; 6],
        amp: [f64; 6],
        phase: [f64; 6],
        sigma: f64,
        duration: Option<f64>,
    },
}

impl Realized {
    fn new(spec: &SegmentSpec, rng: &mut SplitMix64) -> Self {
        match spec {
            SegmentSpec::Gesture(g) => Realized::Gesture {
                freq: g.base_freq,
                amp: g.amp,
                weights: (0..=g.harmonics).map(|h| g.harmonic_decay.powi(h as i32)).collect(),
                sigma: g.noise_sigma,
            },
            SegmentSpec::Distractor(d) => {
                let s = d.intensity;
                match d.kind {
                    DistractorKind::Idle => Realized::Idle {
                        offset: std::array::from_fn(|_| rng.uniform(-1.0, 1.0) * s),
                        sigma: s,
                    },
                    DistractorKind::Jitter => Realized::Tones {
                        freq: std::array::from_fn(|_| rng.uniform(6.0, 12.0)),
                        amp: std::array::from_fn(|_| s * rng.uniform(0.5, 1.0)),
                        phase: std::array::from_fn(|_| rng.uniform(0.0, TAU)),
                        sigma: 0.5 * s,
                        duration: None,
                    },
                    DistractorKind::GestureBurst => Realized::Tones {
                        freq: std::array::from_fn(|_| rng.uniform(0.5, 3.0)),
                        amp: std::array::from_fn(|_| s * rng.uniform(0.5, 1.5)),
                        phase: std::array::from_fn(|_| rng.uniform(0.0, TAU)),
                        sigma: 0.5 * s,
                        duration: Some(d.duration),
                    },
                }
            }
        }
    }

    fn deterministic(&self, t: f64) -> [f64; 6] {
        match self {
            Realized::Gesture {
                freq,
                amp,
                weights,
                ..
            } => std::array::from_fn(|c| {
                let s: f64 = weights
                    .iter()
                    .enumerate()
                    .map(|(h, w)| w * (TAU * freq * (h + 1) as f64 * t + phase(c)).sin())
                    .sum();
                amp[c] * s
            }),
            Realized::Idle { offset, .. } => *offset,
            Realized::Tones {
                freq,
                amp,
                phase,
                duration,
                ..
            } => {
                // Hann envelope for bursts
                let env = duration.map_or(1.0, |d| (PI * (t / d).clamp(0.0, 1.0)).sin().powi(2));
                std::array::from_fn(|c| env * amp[c] * (TAU * freq[c] * t + phase[c]).sin())
            }
        }
    }

    fn sigma(&self) -> f64 {
        match self {
            Realized::Gesture { sigma, .. } | Realized::Idle { sigma, .. } | Realized::Tones { sigma, .. } => {
                *sigma
            }
        }
    }
}

fn sample_count(duration: f64, rate: f64) -> usize {
    (duration * rate - 1e-9).ceil() as usize
}

fn render(
    device: Device,
    segments: &[(f64, f64, Realized)],
    total: f64,
    gain: f64,
    rng: &mut SplitMix64,
) -> Result<SensorStream> {
    let rate = device.nominal_rate();
    let mut seg = 0;
    let samples = (0..sample_count(total, rate))
        .map(|i| {
            let t = i as f64 / rate;
            while seg + 1 < segments.len() && t >= segments[seg + 1].0 {
                seg += 1;
            }
            let (start, _, ref r) = segments[seg];
            let det = r.deterministic(t - start);
            let sigma = r.sigma();
            let ch = std::array::from_fn(|c| gain * det[c] + sigma * rng.normal());
            ImuSample::from_channels(t, ch)
        })
        .collect();
    SensorStream::new(device, rate, samples)
}

/// Concatenate segments in order into one session. Identical `(specs, seed)`
/// give bit-identical sessions.
pub fn generate_session(
    specs: &[SegmentSpec],
    seed: u64,
    subject_id: &str,
    utensil: Utensil,
) -> Result<Session> {
    if specs.is_empty() {
        return Err(CoreError::InvalidArgument("no segments".into()));
    }
    let mut segments = Vec::with_capacity(specs.len());
    let mut labels = Vec::with_capacity(specs.len());
    let mut t = 0.0;
    for (i, spec) in specs.iter().enumerate() {
        spec.validate()?;
        let mut rng = SplitMix64::for_purpose(seed, &format!("segment/{i}"));
        let end = t + spec.duration();
        labels.push(match spec {
            SegmentSpec::Gesture(g) => LabelInterval::eating(t, end, g.class_id),
            SegmentSpec::Distractor(_) => LabelInterval::non_eating(t, end),
        });
        segments.push((t, end, Realized::new(spec, &mut rng)));
        t = end;
    }
    let mut watch_rng = SplitMix64::for_purpose(seed, "noise/watch");
    let mut glasses_rng = SplitMix64::for_purpose(seed, "noise/glasses");
    let watch = render(Device::Watch, &segments, t, 1.0, &mut watch_rng)?;
    let glasses = render(Device::Glasses, &segments, t, GLASSES_GAIN, &mut glasses_rng)?;
    Session::new(subject_id, utensil, watch, glasses, labels)
}

// ---------------------------------------------------------------------------
// Datasets

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub classes: usize,
    pub subjects: usize,
    pub minutes_per_class: f64,
    pub seed: u64,
    /// Distractor intensity in the same units as the gesture amplitudes.
    pub distractor_intensity: f64,
    pub gesture_noise: f64,
}

impl DatasetSpec {
    pub fn new(classes: usize, subjects: usize, minutes_per_class: f64, seed: u64) -> Self {
        DatasetSpec {
            classes,
            subjects,
            minutes_per_class,
            seed,
            distractor_intensity: 0.8,
            gesture_noise: 0.05,
        }
    }
}

/// Eating chunk length: ten hops, so chunk edges land on window starts.
pub const EATING_CHUNK: f64 = 12.8;
/// Distractor chunk length: six hops.
pub const DISTRACTOR_CHUNK: f64 = 7.68;

/// Nominal gesture of a class before subject perturbation.
pub fn class_gesture(class_id: usize, noise_sigma: f64, duration: f64) -> GestureSpec {
    GestureSpec {
        class_id,
        base_freq: 0.8 + 0.3 * class_id as f64,
        amp: std::array::from_fn(|ch| 0.5 + 1.5 * ((7 * class_id + 3 * ch) % 11) as f64 / 10.0),
        harmonics: (class_id % 3) as u32,
        harmonic_decay: 0.5,
        noise_sigma,
        duration,
    }
}

pub fn class_utensil(class_id: usize) -> Utensil {
    match class_id % 3 {
        0 => Utensil::Chopsticks,
        1 => Utensil::Spoon,
        _ => Utensil::Hand,
    }
}

/// Segment layout of one subject/class session: distractor chunks around
/// `round(minutes * 60 / 12.8)` eating chunks, cycling distractor kinds.
pub fn session_specs(spec: &DatasetSpec, class_id: usize, subject: usize) -> Vec<SegmentSpec> {
    let mut rng = SplitMix64::for_purpose(spec.seed, &format!("subject/{subject}/class/{class_id}"));
    let freq_scale = 1.0 + rng.uniform(-0.03, 0.03);
    let amp_scale: [f64; 6] = std::array::from_fn(|_| 1.0 + rng.uniform(-0.1, 0.1));
    let mut g = class_gesture(class_id, spec.gesture_noise, EATING_CHUNK);
    g.base_freq *= freq_scale;
    for (a, s) in g.amp.iter_mut().zip(amp_scale) {
        *a *= s;
    }
    let chunks = ((spec.minutes_per_class * 60.0 / EATING_CHUNK).round() as usize).max(1);
    let kinds = [DistractorKind::Idle, DistractorKind::Jitter, DistractorKind::GestureBurst];
    let offset = class_id + subject;
    let distractor = |k: usize| {
        SegmentSpec::Distractor(DistractorSpec {
            kind: kinds[(k + offset) % kinds.len()],
            intensity: spec.distractor_intensity,
            duration: DISTRACTOR_CHUNK,
        })
    };
    let mut out = vec![distractor(0)];
    for k in 0..chunks {
        out.push(SegmentSpec::Gesture(g.clone()));
        out.push(distractor(k + 1));
    }
    out
}

/// Per-window spectral features: magnitude spectrum of each watch channel,
/// DC removed, whole vector scaled to unit norm.
pub fn spectral_features(w: &WindowPair, planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let rows = w.watch();
    let fft = planner.plan_fft_forward(rows.len());
    let mut feats = Vec::with_capacity(6 * (rows.len() / 2));
    for c in 0..6 {
        let mean = rows.iter().map(|r| r[c]).sum::<f64>() / rows.len() as f64;
        let mut buf: Vec<Complex<f64>> = rows.iter().map(|r| Complex::new(r[c] - mean, 0.0)).collect();
        fft.process(&mut buf);
        feats.extend(buf[1..=rows.len() / 2].iter().map(|z| z.norm()));
    }
    let norm = feats.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    feats.iter_mut().for_each(|v| *v /= norm);
    feats
}

/// Nearest-centroid spectral classifier over eating windows: centroids from
/// even-indexed windows, accuracy on odd-indexed ones.
pub fn spectral_oracle_accuracy(windows: &[WindowPair]) -> Result<f64> {
    let mut planner = FftPlanner::new();
    let eating: Vec<(usize, Vec<f64>)> = windows
        .iter()
        .filter(|w| w.state() == IntakeState::Eating)
        .map(|w| (w.food().expect("eating window has food"), spectral_features(w, &mut planner)))
        .collect();
    if eating.len() < 2 {
        return Err(CoreError::TooFewSamples {
            needed: 2,
            got: eating.len(),
        });
    }
    let dim = eating[0].1.len();
    let mut sums = vec![vec![0.0; dim]; NUM_FOODS];
    let mut counts = [0usize; NUM_FOODS];
    for (_, (class, f)) in eating.iter().enumerate().filter(|(i, _)| i % 2 == 0) {
        counts[*class] += 1;
        sums[*class].iter_mut().zip(f).for_each(|(s, v)| *s += v);
    }
    let centroids: Vec<(usize, Vec<f64>)> = sums
        .into_iter()
        .enumerate()
        .filter(|(c, _)| counts[*c] > 0)
        .map(|(c, s)| (c, s.into_iter().map(|v| v / counts[c] as f64).collect()))
        .collect();
    let (mut correct, mut total) = (0usize, 0usize);
    for (class, f) in eating.iter().skip(1).step_by(2) {
        let best = centroids
            .iter()
            .map(|(c, m)| (*c, m.iter().zip(f).map(|(a, b)| (a - b).powi(2)).sum::<f64>()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(c, _)| c);
        total += 1;
        correct += usize::from(best == Some(*class));
    }
    Ok(correct as f64 / total as f64)
}

/// Summary written to `synth.json` next to the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub spec: DatasetSpec,
    pub sessions: usize,
    pub windows: usize,
    pub eating_windows: usize,
    pub oracle_accuracy: f64,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "synth.json";

/// Generate all sessions into `out_dir/sessions/`, write the manifest and a
/// summary with the spectral-oracle accuracy.
pub fn generate_dataset(spec: &DatasetSpec, out_dir: &Path) -> Result<(PathBuf, SynthSummary)> {
    if !(2..=NUM_FOODS).contains(&spec.classes) || spec.subjects < 2 {
        return Err(CoreError::InvalidArgument(format!(
            "need 2..={NUM_FOODS} classes and at least 2 subjects, got {} and {}",
            spec.classes, spec.subjects
        )));
    }
    if !(spec.minutes_per_class > 0.0) {
        return Err(CoreError::InvalidArgument("minutes per class must be positive".into()));
    }
    let session_dir = out_dir.join("sessions");
    fs::create_dir_all(&session_dir).map_err(io_err(&session_dir))?;
    let mut entries = Vec::new();
    let mut windows = Vec::new();
    for subject in 0..spec.subjects {
        for class_id in 0..spec.classes {
            let subject_id = format!("s{subject}");
            let specs = session_specs(spec, class_id, subject);
            let seed = derive_seed(spec.seed, &format!("session/{subject}/{class_id}"));
            let session = generate_session(&specs, seed, &subject_id, class_utensil(class_id))?;
            let stem = format!("{subject_id}_c{class_id}");
            write_session(&session, &SessionFiles::in_dir(&session_dir, &stem))?;
            windows.extend(segment(&session, WINDOW_LEN, WINDOW_HOP)?);
            entries.push(ManifestEntry {
                subject_id,
                utensil: session.utensil,
                watch_csv: format!("sessions/{stem}_watch.csv"),
                glasses_csv: format!("sessions/{stem}_glasses.csv"),
                labels_csv: format!("sessions/{stem}_labels.csv"),
            });
        }
    }
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let manifest = Manifest(entries);
    manifest.save(&manifest_path)?;
    let summary = SynthSummary {
        spec: spec.clone(),
        sessions: manifest.0.len(),
        windows: windows.len(),
        eating_windows: windows.iter().filter(|w| w.state() == IntakeState::Eating).count(),
        oracle_accuracy: spectral_oracle_accuracy(&windows)?,
    };
    let summary_path = out_dir.join(SUMMARY_FILE);
    let json = serde_json::to_vec_pretty(&summary)?;
    cuisine_nn::checkpoint::write_atomic(&summary_path, &json).map_err(io_err(&summary_path))?;
    Ok((manifest_path, summary))
}

pub fn load_summary(dataset_dir: &Path) -> Result<SynthSummary> {
    let path = dataset_dir.join(SUMMARY_FILE);
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    Ok(serde_json::from_slice(&bytes)?)
}
