//! Inertial sensor streams, labeled sessions and fixed-shape model windows.
//!
//! Sessions are stored as three CSV files: one per device with header
//! `t,ax,ay,az,gx,gy,gz` (seconds, m/s², rad/s) and a label file with header
//! `start,end,state,food` where `state` is `eating` or `noneating` and `food`
//! is blank or an integer class id in `0..=10`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{io_err, CoreError, Result};

/// Number of food classes.
pub const NUM_FOODS: usize = 11;
/// Rows of the watch matrix per window.
pub const WATCH_ROWS: usize = 128;
/// Rows of the glasses matrix per window.
pub const GLASSES_ROWS: usize = 25;
pub const WINDOW_LEN: f64 = 2.56;
pub const WINDOW_HOP: f64 = 1.28;

/// Slack for comparing times that went through decimal text or accumulation.
const TIME_EPS: f64 = 1e-9;

pub const STREAM_HEADER: [&str; 7] = ["t", "ax", "ay", "az", "gx", "gy", "gz"];
pub const LABEL_HEADER: [&str; 4] = ["start", "end", "state", "food"];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub t: f64,
    pub accel: [f64; 3],
    pub gyro: [f64; 3],
}

impl ImuSample {
    pub fn from_channels(t: f64, ch: [f64; 6]) -> Self {
        ImuSample {
            t,
            accel: [ch[0], ch[1], ch[2]],
            gyro: [ch[3], ch[4], ch[5]],
        }
    }

    pub fn channels(&self) -> [f64; 6] {
        let [ax, ay, az] = self.accel;
        let [gx, gy, gz] = self.gyro;
        [ax, ay, az, gx, gy, gz]
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.channels().iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Device {
    Watch,
    Glasses,
}

impl Device {
    pub fn nominal_rate(self) -> f64 {
        match self {
            Device::Watch => 50.0,
            Device::Glasses => 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensorStream {
    device: Device,
    nominal_rate: f64,
    samples: Vec<ImuSample>,
}

impl SensorStream {
    pub fn new(device: Device, nominal_rate: f64, samples: Vec<ImuSample>) -> Result<Self> {
        if !(nominal_rate > 0.0 && nominal_rate.is_finite()) {
            return Err(CoreError::InvalidSession(format!("nominal rate {nominal_rate}")));
        }
        if samples.is_empty() {
            return Err(CoreError::InvalidSession(format!("{device:?} stream has no samples")));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(CoreError::InvalidSession(format!("{device:?} sample {i} is not finite")));
        }
        if let Some(i) = samples.windows(2).position(|w| w[1].t <= w[0].t) {
            return Err(CoreError::InvalidSession(format!(
                "{device:?} timestamps not increasing at sample {}",
                i + 1
            )));
        }
        Ok(SensorStream {
            device,
            nominal_rate,
            samples,
        })
    }

    pub fn device(&self) -> Device {
        self.device
    }

    pub fn nominal_rate(&self) -> f64 {
        self.nominal_rate
    }

    pub fn samples(&self) -> &[ImuSample] {
        &self.samples
    }

    pub fn first_t(&self) -> f64 {
        self.samples[0].t
    }

    pub fn last_t(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }

    /// End of the time span the samples cover: one sample period past the last.
    pub fn end_t(&self) -> f64 {
        self.last_t() + 1.0 / self.nominal_rate
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntakeState {
    Eating,
    NonEating,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelInterval {
    pub start: f64,
    pub end: f64,
    pub state: IntakeState,
    pub food: Option<usize>,
}

impl LabelInterval {
    pub fn eating(start: f64, end: f64, food: usize) -> Self {
        LabelInterval {
            start,
            end,
            state: IntakeState::Eating,
            food: Some(food),
        }
    }

    pub fn non_eating(start: f64, end: f64) -> Self {
        LabelInterval {
            start,
            end,
            state: IntakeState::NonEating,
            food: None,
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if !(self.start.is_finite() && self.end.is_finite() && self.start < self.end) {
            return Err(format!("interval [{}, {}] is empty or not finite", self.start, self.end));
        }
        match (self.state, self.food) {
            (IntakeState::Eating, Some(f)) if f < NUM_FOODS => Ok(()),
            (IntakeState::Eating, Some(f)) => Err(format!("food id {f} out of range")),
            (IntakeState::Eating, None) => Err("eating interval without food id".into()),
            (IntakeState::NonEating, Some(_)) => Err("non-eating interval with food id".into()),
            (IntakeState::NonEating, None) => Ok(()),
        }
    }

    fn overlap(&self, start: f64, end: f64) -> f64 {
        (self.end.min(end) - self.start.max(start)).max(0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Utensil {
    Chopsticks,
    Spoon,
    Hand,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Session {
    pub subject_id: String,
    pub utensil: Utensil,
    pub watch: SensorStream,
    pub glasses: SensorStream,
    pub labels: Vec<LabelInterval>,
}

/// First pair of overlapping intervals, as indices into `labels`.
fn find_overlap(labels: &[LabelInterval]) -> Option<(usize, usize)> {
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| labels[a].start.total_cmp(&labels[b].start).then(a.cmp(&b)));
    order.windows(2).find_map(|w| {
        let (a, b) = (w[0], w[1]);
        (labels[b].start < labels[a].end - TIME_EPS).then_some((a.min(b), a.max(b)))
    })
}

impl Session {
    pub fn new(
        subject_id: impl Into<String>,
        utensil: Utensil,
        watch: SensorStream,
        glasses: SensorStream,
        labels: Vec<LabelInterval>,
    ) -> Result<Self> {
        if watch.device() != Device::Watch || glasses.device() != Device::Glasses {
            return Err(CoreError::InvalidSession("stream devices swapped".into()));
        }
        for (i, l) in labels.iter().enumerate() {
            l.validate()
                .map_err(|e| CoreError::InvalidSession(format!("label {i}: {e}")))?;
        }
        if let Some((i, j)) = find_overlap(&labels) {
            return Err(CoreError::OverlappingLabels(i, j));
        }
        for s in [&watch, &glasses] {
            for (i, l) in labels.iter().enumerate() {
                if l.start < s.first_t() - TIME_EPS || l.end > s.end_t() + TIME_EPS {
                    return Err(CoreError::InvalidSession(format!(
                        "label {i} [{}, {}] outside {:?} stream [{}, {}]",
                        l.start,
                        l.end,
                        s.device(),
                        s.first_t(),
                        s.end_t()
                    )));
                }
            }
        }
        Ok(Session {
            subject_id: subject_id.into(),
            utensil,
            watch,
            glasses,
            labels,
        })
    }

    /// Start of the span covered by both streams.
    pub fn start_t(&self) -> f64 {
        self.watch.first_t().max(self.glasses.first_t())
    }

    /// Length of the span covered by both streams.
    pub fn duration(&self) -> f64 {
        self.watch.end_t().min(self.glasses.end_t()) - self.start_t()
    }
}

/// One synchronized model input.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowPair {
    start_t: f64,
    watch: Vec<[f64; 6]>,
    glasses: Vec<[f64; 6]>,
    state: IntakeState,
    food: Option<usize>,
}

impl WindowPair {
    pub fn new(
        start_t: f64,
        watch: Vec<[f64; 6]>,
        glasses: Vec<[f64; 6]>,
        state: IntakeState,
        food: Option<usize>,
    ) -> Result<Self> {
        if watch.len() != WATCH_ROWS || glasses.len() != GLASSES_ROWS {
            return Err(CoreError::InvalidArgument(format!(
                "window shapes {}x6 / {}x6, expected {WATCH_ROWS}x6 / {GLASSES_ROWS}x6",
                watch.len(),
                glasses.len()
            )));
        }
        match (state, food) {
            (IntakeState::Eating, Some(f)) if f < NUM_FOODS => {}
            (IntakeState::NonEating, None) => {}
            _ => {
                return Err(CoreError::InvalidArgument(format!(
                    "state {state:?} with food {food:?}"
                )))
            }
        }
        Ok(WindowPair {
            start_t,
            watch,
            glasses,
            state,
            food,
        })
    }

    pub fn start_t(&self) -> f64 {
        self.start_t
    }

    /// 128 x 6 watch rows.
    pub fn watch(&self) -> &[[f64; 6]] {
        &self.watch
    }

    /// 25 x 6 glasses rows.
    pub fn glasses(&self) -> &[[f64; 6]] {
        &self.glasses
    }

    pub fn state(&self) -> IntakeState {
        self.state
    }

    pub fn food(&self) -> Option<usize> {
        self.food
    }
}

// ---------------------------------------------------------------------------
// CSV ingestion

fn malformed(path: &Path, line: u64, reason: impl Into<String>) -> CoreError {
    CoreError::MalformedRow {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn check_header(rdr: &mut csv::Reader<fs::File>, path: &Path, expected: &[&str]) -> Result<()> {
    let header = rdr
        .headers()
        .map_err(|e| malformed(path, 1, e.to_string()))?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(malformed(
            path,
            1,
            format!("header {:?}, expected {}", header, expected.join(",")),
        ));
    }
    Ok(())
}

/// Read one device CSV. Rows must have strictly increasing `t`.
pub fn read_stream(path: &Path, device: Device) -> Result<SensorStream> {
    let mut rdr = csv_reader(path)?;
    check_header(&mut rdr, path, &STREAM_HEADER)?;
    let mut samples: Vec<ImuSample> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            malformed(path, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 7 {
            return Err(malformed(path, line, format!("{} fields, expected 7", rec.len())));
        }
        let mut v = [0.0; 7];
        for (slot, field) in v.iter_mut().zip(rec.iter()) {
            *slot = field
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| malformed(path, line, format!("bad number `{field}`")))?;
        }
        if let Some(prev) = samples.last() {
            if v[0] <= prev.t {
                return Err(CoreError::NonMonotonicTime {
                    path: path.to_path_buf(),
                    line,
                });
            }
        }
        samples.push(ImuSample::from_channels(v[0], [v[1], v[2], v[3], v[4], v[5], v[6]]));
    }
    SensorStream::new(device, device.nominal_rate(), samples)
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelInterval>> {
    let mut rdr = csv_reader(path)?;
    check_header(&mut rdr, path, &LABEL_HEADER)?;
    let mut labels = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            malformed(path, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 4 {
            return Err(malformed(path, line, format!("{} fields, expected 4", rec.len())));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| malformed(path, line, format!("bad number `{s}`")))
        };
        let state = match &rec[2] {
            "eating" => IntakeState::Eating,
            "noneating" => IntakeState::NonEating,
            other => return Err(malformed(path, line, format!("bad state `{other}`"))),
        };
        let food = match &rec[3] {
            "" => None,
            s => Some(
                s.parse::<usize>()
                    .ok()
                    .filter(|&f| f < NUM_FOODS)
                    .ok_or_else(|| malformed(path, line, format!("bad food id `{s}`")))?,
            ),
        };
        let label = LabelInterval {
            start: num(&rec[0])?,
            end: num(&rec[1])?,
            state,
            food,
        };
        label.validate().map_err(|e| malformed(path, line, e))?;
        labels.push(label);
    }
    Ok(labels)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub subject_id: String,
    pub utensil: Utensil,
}

pub fn parse_session(
    watch_path: &Path,
    glasses_path: &Path,
    labels_path: &Path,
    meta: &SessionMeta,
) -> Result<Session> {
    let watch = read_stream(watch_path, Device::Watch)?;
    let glasses = read_stream(glasses_path, Device::Glasses)?;
    let labels = read_labels(labels_path)?;
    Session::new(meta.subject_id.clone(), meta.utensil, watch, glasses, labels)
}

pub fn write_stream(path: &Path, stream: &SensorStream) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(STREAM_HEADER).map_err(|e| csv_io(path, e))?;
    for s in stream.samples() {
        // `Display` for f64 prints the shortest text that parses back exactly.
        let mut row = vec![s.t.to_string()];
        row.extend(s.channels().iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_labels(path: &Path, labels: &[LabelInterval]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(LABEL_HEADER).map_err(|e| csv_io(path, e))?;
    for l in labels {
        let state = match l.state {
            IntakeState::Eating => "eating",
            IntakeState::NonEating => "noneating",
        };
        let food = l.food.map(|f| f.to_string()).unwrap_or_default();
        w.write_record([l.start.to_string(), l.end.to_string(), state.to_string(), food])
            .map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

fn csv_io(path: &Path, e: csv::Error) -> CoreError {
    CoreError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    }
}

/// Paths of the three files making up one stored session.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SessionFiles {
    pub watch: PathBuf,
    pub glasses: PathBuf,
    pub labels: PathBuf,
}

impl SessionFiles {
    pub fn in_dir(dir: &Path, stem: &str) -> Self {
        SessionFiles {
            watch: dir.join(format!("{stem}_watch.csv")),
            glasses: dir.join(format!("{stem}_glasses.csv")),
            labels: dir.join(format!("{stem}_labels.csv")),
        }
    }
}

pub fn write_session(session: &Session, files: &SessionFiles) -> Result<()> {
    write_stream(&files.watch, &session.watch)?;
    write_stream(&files.glasses, &session.glasses)?;
    write_labels(&files.labels, &session.labels)
}

// ---------------------------------------------------------------------------
// Resampling and segmentation

/// Linear interpolation of `n` rows at `t0 + k / rate`. Query times within
/// 1e-9 s of a sample time return that sample's values exactly.
pub fn resample(stream: &SensorStream, t0: f64, rate: f64, n: usize) -> Result<Vec<[f64; 6]>> {
    if !(rate > 0.0) || n == 0 {
        return Err(CoreError::InvalidArgument(format!("rate {rate}, rows {n}")));
    }
    let samples = stream.samples();
    let t_end = t0 + (n - 1) as f64 / rate;
    if t0 < stream.first_t() - TIME_EPS || t_end > stream.last_t() + TIME_EPS {
        return Err(CoreError::OutOfRange {
            start: t0,
            end: t_end,
            first: stream.first_t(),
            last: stream.last_t(),
        });
    }
    let mut out = Vec::with_capacity(n);
    // first sample with t > query
    let mut hi = samples.partition_point(|s| s.t <= t0);
    for k in 0..n {
        let t = t0 + k as f64 / rate;
        while hi < samples.len() && samples[hi].t <= t {
            hi += 1;
        }
        let lo = hi.saturating_sub(1);
        let row = if (samples[lo].t - t).abs() <= TIME_EPS {
            samples[lo].channels()
        } else if hi < samples.len() && (samples[hi].t - t).abs() <= TIME_EPS {
            samples[hi].channels()
        } else if hi == 0 || hi == samples.len() {
            // within TIME_EPS of an end, guarded above
            samples[lo.min(samples.len() - 1)].channels()
        } else {
            let (a, b) = (&samples[lo], &samples[hi]);
            let w = (t - a.t) / (b.t - a.t);
            let (ca, cb) = (a.channels(), b.channels());
            std::array::from_fn(|c| ca[c] + w * (cb[c] - ca[c]))
        };
        out.push(row);
    }
    Ok(out)
}

/// Number of windows of `window_len` at stride `hop` inside `duration`.
pub fn window_count(duration: f64, window_len: f64, hop: f64) -> usize {
    if duration + TIME_EPS < window_len {
        0
    } else {
        ((duration - window_len) / hop + TIME_EPS).floor() as usize + 1
    }
}

/// Label of `[start, start + len]`: eating iff strictly more than half of the
/// span lies inside eating intervals (an exact half goes to non-eating). The
/// food id comes from the eating interval with the largest overlap.
pub fn window_label(labels: &[LabelInterval], start: f64, len: f64) -> (IntakeState, Option<usize>) {
    let end = start + len;
    let mut eating = 0.0;
    let mut best: Option<(f64, usize)> = None;
    for l in labels.iter().filter(|l| l.state == IntakeState::Eating) {
        let o = l.overlap(start, end);
        eating += o;
        if o > 0.0 && best.is_none_or(|(b, _)| o > b) {
            best = Some((o, l.food.expect("eating label has food")));
        }
    }
    if eating / len > 0.5 + TIME_EPS {
        (IntakeState::Eating, best.map(|(_, f)| f))
    } else {
        (IntakeState::NonEating, None)
    }
}

/// Cut a session into overlapping windows starting at the common stream start.
/// Watch rows are resampled at `128 / window_len` Hz, glasses rows at
/// `25 / window_len` Hz.
pub fn segment(session: &Session, window_len: f64, hop: f64) -> Result<Vec<WindowPair>> {
    if !(window_len > 0.0) || !(hop > 0.0) || hop > window_len {
        return Err(CoreError::InvalidArgument(format!(
            "window_len {window_len}, hop {hop}"
        )));
    }
    let duration = session.duration();
    let count = window_count(duration, window_len, hop);
    if count == 0 {
        return Err(CoreError::SessionTooShort {
            duration,
            window_len,
        });
    }
    let t0 = session.start_t();
    let watch_rate = WATCH_ROWS as f64 / window_len;
    let glasses_rate = GLASSES_ROWS as f64 / window_len;
    (0..count)
        .map(|k| {
            let start = t0 + k as f64 * hop;
            let watch = resample(&session.watch, start, watch_rate, WATCH_ROWS)?;
            let glasses = resample(&session.glasses, start, glasses_rate, GLASSES_ROWS)?;
            let (state, food) = window_label(&session.labels, start, window_len);
            WindowPair::new(start, watch, glasses, state, food)
        })
        .collect()
}

/// Index range `[start, end)` of the contiguous middle block holding
/// `round(test_fraction * n)` items (at least one, leaving at least one).
pub fn middle_block(n: usize, test_fraction: f64) -> Result<std::ops::Range<usize>> {
    if n < 3 {
        return Err(CoreError::InvalidArgument(format!("{n} windows, need at least 3")));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CoreError::InvalidArgument(format!("test fraction {test_fraction}")));
    }
    let n_test = ((test_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let start = (n - n_test) / 2;
    Ok(start..start + n_test)
}

/// Per group, the middle `test_fraction` of the time-ordered items go to the
/// test side and the rest to the train side.
pub fn split_subject_independent<T: Clone>(
    groups: &[Vec<T>],
    test_fraction: f64,
) -> Result<(Vec<Vec<T>>, Vec<Vec<T>>)> {
    let mut train = Vec::with_capacity(groups.len());
    let mut test = Vec::with_capacity(groups.len());
    for g in groups {
        let r = middle_block(g.len(), test_fraction)?;
        test.push(g[r.clone()].to_vec());
        let mut rest = g[..r.start].to_vec();
        rest.extend_from_slice(&g[r.end..]);
        train.push(rest);
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(device: Device, rate: f64, n: usize, f: impl Fn(f64) -> f64) -> SensorStream {
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / rate;
                ImuSample::from_channels(t, [f(t); 6])
            })
            .collect();
        SensorStream::new(device, rate, samples).unwrap()
    }

    fn session(duration: f64, labels: Vec<LabelInterval>) -> Session {
        let nw = (duration * 50.0).round() as usize;
        let ng = (duration * 10.0).ceil() as usize;
        Session::new(
            "s0",
            Utensil::Spoon,
            stream(Device::Watch, 50.0, nw, |t| t),
            stream(Device::Glasses, 10.0, ng, |t| t),
            labels,
        )
        .unwrap()
    }

    #[test]
    fn resample_constant_and_linear() {
        let s = stream(Device::Watch, 50.0, 200, |_| 1.0);
        let m = resample(&s, 0.3, 33.0, 40).unwrap();
        assert!(m.iter().flatten().all(|&v| v == 1.0));

        let s = stream(Device::Watch, 50.0, 200, |t| t);
        let m = resample(&s, 0.01, 50.0, 100).unwrap();
        for (k, row) in m.iter().enumerate() {
            let t = 0.01 + k as f64 / 50.0;
            assert!((row[0] - t).abs() < 1e-12);
        }
    }

    #[test]
    fn resample_sine_within_interpolation_bound() {
        // 1 Hz sine sampled at 10 Hz; linear interpolation error <= h^2/8 * max|f''|
        let tau = std::f64::consts::TAU;
        let s = stream(Device::Glasses, 10.0, 101, |t| (tau * t).sin());
        let m = resample(&s, 0.0, 50.0, 500).unwrap();
        let bound = 0.1f64.powi(2) / 8.0 * tau.powi(2);
        let max_err = m
            .iter()
            .enumerate()
            .map(|(k, r)| (r[0] - (tau * k as f64 / 50.0).sin()).abs())
            .fold(0.0, f64::max);
        assert!(max_err <= bound, "{max_err} > {bound}");
        // the peak error sits midway between samples at the crest: 1 - cos(pi/10)
        assert!(max_err > 0.9 * (1.0 - (std::f64::consts::PI / 10.0).cos()));
    }

    #[test]
    fn resample_out_of_range() {
        let s = stream(Device::Watch, 50.0, 10, |t| t);
        assert!(matches!(resample(&s, 0.0, 50.0, 11), Err(CoreError::OutOfRange { .. })));
        assert!(matches!(resample(&s, -0.1, 50.0, 2), Err(CoreError::OutOfRange { .. })));
    }

    #[test]
    fn resample_own_grid_is_bit_exact() {
        let s = stream(Device::Watch, 50.0, 300, |t| (3.1 * t).sin() * 1.7);
        let m = resample(&s, s.first_t(), 50.0, 300).unwrap();
        for (row, sample) in m.iter().zip(s.samples()) {
            assert_eq!(row, &sample.channels());
        }
    }

    #[test]
    fn window_counts() {
        let s = session(12.8, vec![]);
        assert_eq!(segment(&s, WINDOW_LEN, WINDOW_HOP).unwrap().len(), 9);
        let s = session(2.56, vec![]);
        assert_eq!(segment(&s, WINDOW_LEN, WINDOW_HOP).unwrap().len(), 1);
        let s = session(2.0, vec![]);
        assert!(matches!(
            segment(&s, WINDOW_LEN, WINDOW_HOP),
            Err(CoreError::SessionTooShort { .. })
        ));
        for d in [2.56, 3.0, 3.84, 10.0, 12.8, 100.0] {
            let brute = (0..)
                .map(|k| k as f64 * 1.28)
                .take_while(|s| s + 2.56 <= d + 1e-9)
                .count();
            assert_eq!(window_count(d, 2.56, 1.28), brute, "duration {d}");
        }
    }

    #[test]
    fn majority_overlap_labels() {
        let labels = vec![LabelInterval::eating(0.0, 2.0, 4), LabelInterval::non_eating(2.0, 5.0)];
        assert_eq!(window_label(&labels, 0.0, 2.56), (IntakeState::Eating, Some(4)));
        // exactly half eating goes to non-eating
        let labels = vec![LabelInterval::eating(0.0, 1.28, 4)];
        assert_eq!(window_label(&labels, 0.0, 2.56), (IntakeState::NonEating, None));
        // food from the larger overlap
        let labels = vec![LabelInterval::eating(0.0, 0.6, 1), LabelInterval::eating(0.6, 2.56, 7)];
        assert_eq!(window_label(&labels, 0.0, 2.56), (IntakeState::Eating, Some(7)));
    }

    #[test]
    fn segment_shapes_and_determinism() {
        let s = session(12.8, vec![LabelInterval::eating(0.0, 6.0, 2)]);
        let a = segment(&s, WINDOW_LEN, WINDOW_HOP).unwrap();
        let b = segment(&s, WINDOW_LEN, WINDOW_HOP).unwrap();
        assert_eq!(a, b);
        for (k, w) in a.iter().enumerate() {
            assert_eq!(w.watch().len(), 128);
            assert_eq!(w.glasses().len(), 25);
            assert!((w.start_t() - k as f64 * 1.28).abs() < 1e-12);
        }
        assert_eq!(a[0].state(), IntakeState::Eating);
        assert_eq!(a[8].state(), IntakeState::NonEating);
        // glasses rows are 0.1024 s apart
        assert!((a[1].glasses()[3][0] - (1.28 + 3.0 * 0.1024)).abs() < 1e-9);
    }

    #[test]
    fn overlapping_labels_rejected() {
        let r = Session::new(
            "s",
            Utensil::Hand,
            stream(Device::Watch, 50.0, 500, |t| t),
            stream(Device::Glasses, 10.0, 100, |t| t),
            vec![LabelInterval::eating(0.0, 5.0, 3), LabelInterval::non_eating(4.0, 8.0)],
        );
        assert!(matches!(r, Err(CoreError::OverlappingLabels(0, 1))));
    }

    #[test]
    fn middle_split() {
        let r = middle_block(2700, 1.0 / 9.0).unwrap();
        assert_eq!(r.len(), 300);
        assert_eq!(r.start, 1200);
        assert_eq!(middle_block(10, 0.2).unwrap(), 4..6);

        let groups = vec![(0..10).collect::<Vec<_>>(), (100..117).collect()];
        let (train, test) = split_subject_independent(&groups, 0.2).unwrap();
        assert_eq!(test[0], vec![4, 5]);
        for ((tr, te), g) in train.iter().zip(&test).zip(&groups) {
            assert_eq!(tr.len() + te.len(), g.len());
            assert!(tr.iter().all(|x| !te.contains(x)));
        }
        assert!(middle_block(2, 0.5).is_err());
    }
}
