//! Recordings turned into training material: ingest, phase-shift
//! augmentation, windowing, leave-one-subject-out splits, and the binary
//! dataset and checkpoint formats.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use echopose_autodiff::{ParamSet, Tensor};
use fnv::FnvHasher;

use crate::error::{Error, Result};
use crate::features::{FeatureExtractor, FeatureFrame};
use crate::model::{soft_label, Batch, ModelConfig, PoseEstimator, PositionDiscriminator, WindowSpec, POSE_DIM};
use crate::sim::{BFormat, PoseFrame, NUM_JOINTS};

/// One excitation period: its feature and the pose during it.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    /// Row-major `b x 7`.
    pub feature: Vec<f32>,
    /// 21 joints x (x, y, z), meters.
    pub pose: Vec<f32>,
    pub distance_cm: f32,
    pub subject_id: u16,
}

impl FrameRecord {
    pub fn feature_frame(&self, b: usize) -> Result<FeatureFrame> {
        FeatureFrame::from_f32(b, &self.feature)
    }

    pub fn pose_frame(&self) -> Result<PoseFrame> {
        PoseFrame::from_flat(&self.pose.iter().map(|&v| v as f64).collect::<Vec<_>>())
    }
}

/// Consecutive frames of one subject standing at one mark. Augmented copies
/// are separate sessions with a non-zero `shift` (fraction of a period).
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub subject_id: u16,
    pub distance_cm: f32,
    pub shift: f64,
    pub records: Vec<FrameRecord>,
}

impl Session {
    pub fn is_augmented(&self) -> bool {
        self.shift != 0.0
    }
}

/// One row of a pose CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseRow {
    pub frame_idx: usize,
    pub subject_id: u16,
    pub distance_cm: f64,
    pub pose: PoseFrame,
}

pub fn pose_csv_header() -> String {
    let mut h = String::from("frame_idx,subject_id,distance_cm");
    for j in 0..NUM_JOINTS {
        for c in ["x", "y", "z"] {
            h.push_str(&format!(",j{j}{c}"));
        }
    }
    h
}

pub fn write_pose_csv(path: &Path, rows: &[PoseRow]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", pose_csv_header())?;
    for r in rows {
        write!(w, "{},{},{}", r.frame_idx, r.subject_id, r.distance_cm)?;
        for v in r.pose.to_flat() {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pose_csv(path: &Path) -> Result<Vec<PoseRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == pose_csv_header() => {}
        _ => return Err(Error::format(format!("{} lacks the pose CSV header", path.display()))),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 3 + POSE_DIM {
                return Err(Error::format(format!("pose CSV row {} has {} fields, expected {}", i + 1, f.len(), 3 + POSE_DIM)));
            }
            let bad = |what: &str| Error::format(format!("pose CSV row {}: bad {what}", i + 1));
            let values = f[3..].iter().map(|s| s.parse::<f64>().map_err(|_| bad("coordinate"))).collect::<Result<Vec<_>>>()?;
            Ok(PoseRow {
                frame_idx: f[0].parse().map_err(|_| bad("frame_idx"))?,
                subject_id: f[1].parse().map_err(|_| bad("subject_id"))?,
                distance_cm: f[2].parse().map_err(|_| bad("distance_cm"))?,
                pose: PoseFrame::from_flat(&values)?,
            })
        })
        .collect()
}

pub fn write_wav(path: &Path, audio: &BFormat) -> Result<()> {
    let spec = hound::WavSpec { channels: 4, sample_rate: audio.sample_rate, bits_per_sample: 32, sample_format: hound::SampleFormat::Float };
    let mut w = hound::WavWriter::create(path, spec)?;
    for i in 0..audio.len() {
        for ch in &audio.channels {
            w.write_sample(ch[i])?;
        }
    }
    w.finalize()?;
    Ok(())
}

pub fn read_wav(path: &Path) -> Result<BFormat> {
    let mut r = hound::WavReader::open(path)?;
    let spec = r.spec();
    if spec.channels != 4 {
        return Err(Error::format(format!("{} has {} channels; B-format needs 4 (W, X, Y, Z)", path.display(), spec.channels)));
    }
    if spec.sample_format != hound::SampleFormat::Float || spec.bits_per_sample != 32 {
        return Err(Error::format(format!("{} is not 32-bit float audio", path.display())));
    }
    let mut channels: [Vec<f32>; 4] = Default::default();
    for (i, s) in r.samples::<f32>().enumerate() {
        channels[i % 4].push(s?);
    }
    Ok(BFormat { sample_rate: spec.sample_rate, channels })
}

fn to_record(feature: &FeatureFrame, pose: &[f64], distance_cm: f64, subject_id: u16) -> FrameRecord {
    FrameRecord {
        feature: feature.to_f32(),
        pose: pose.iter().map(|&v| v as f32).collect(),
        distance_cm: distance_cm as f32,
        subject_id,
    }
}

fn check_rows(rows: &[PoseRow]) -> Result<(u16, f64)> {
    let first = rows.first().ok_or_else(|| Error::format("pose CSV has no rows"))?;
    if first.distance_cm < 0.0 || first.distance_cm.is_nan() {
        return Err(Error::format("distance_cm must be non-negative"));
    }
    if rows.iter().any(|r| r.subject_id != first.subject_id || r.distance_cm != first.distance_cm) {
        return Err(Error::format("a recording must hold one subject at one distance"));
    }
    Ok((first.subject_id, first.distance_cm))
}

/// Number of usable periods in a recording of `samples` samples with `rows` pose rows.
fn usable_periods(samples: usize, rows: usize, period_len: usize) -> Result<usize> {
    if samples == 0 {
        return Err(Error::format("audio is empty"));
    }
    let periods = samples / period_len;
    if periods == 0 {
        return Err(Error::format(format!("audio of {samples} samples is shorter than one period")));
    }
    if rows.abs_diff(periods) > 1 {
        return Err(Error::format(format!("{rows} pose rows do not match {periods} audio periods")));
    }
    Ok(periods.min(rows))
}

/// One [`FrameRecord`] per complete excitation period.
pub fn ingest(audio: &BFormat, rows: &[PoseRow], fx: &FeatureExtractor) -> Result<Session> {
    let (subject_id, distance_cm) = check_rows(rows)?;
    let n = usable_periods(audio.len(), rows.len(), fx.period_len())?;
    let frames = fx.extract(audio.channel_slices(), 0)?;
    let records = frames[..n].iter().zip(rows).map(|(f, r)| to_record(f, &r.pose.to_flat(), distance_cm, subject_id)).collect();
    Ok(Session { subject_id, distance_cm: distance_cm as f32, shift: 0.0, records })
}

pub fn ingest_files(wav: &Path, csv: &Path, fx: &FeatureExtractor) -> Result<Session> {
    let audio = read_wav(wav)?;
    if audio.sample_rate as f64 != fx.bank().sample_rate() {
        return Err(Error::format(format!("{} is sampled at {} Hz, expected {}", wav.display(), audio.sample_rate, fx.bank().sample_rate())));
    }
    ingest(&audio, &read_pose_csv(csv)?, fx)
}

/// The original session followed by one re-framed copy per phase shift.
///
/// A copy shifted by `a` of a period starts `round(a * L)` samples late, so
/// its frame `t` straddles original periods `t` and `t + 1`; its target is
/// `(1 - a') p_t + a' p_{t+1}` with `a'` the realized sample offset over `L`.
/// Every copy loses the last frame.
pub fn augment_phase(audio: &BFormat, rows: &[PoseRow], alphas: &[f64], fx: &FeatureExtractor) -> Result<Vec<Session>> {
    let period = fx.period_len();
    let mut offsets = Vec::with_capacity(alphas.len());
    for &a in alphas {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::invalid(format!("phase shift {a} must lie strictly between 0 and 1")));
        }
        let off = (a * period as f64).round() as usize;
        if off == 0 || off >= period {
            return Err(Error::invalid(format!("phase shift {a} rounds to {off} samples, outside (0, {period})")));
        }
        offsets.push(off);
    }
    let base = ingest(audio, rows, fx)?;
    let n = base.records.len();
    let mut out = vec![base];
    for off in offsets {
        let a = off as f64 / period as f64;
        let frames = fx.extract(audio.channel_slices(), off)?;
        let m = frames.len().min(n.saturating_sub(1));
        let (subject_id, distance_cm) = (out[0].subject_id, out[0].distance_cm as f64);
        let records = (0..m)
            .map(|t| {
                let target = rows[t].pose.lerp(&rows[t + 1].pose, a);
                to_record(&frames[t], &target.to_flat(), distance_cm, subject_id)
            })
            .collect();
        out.push(Session { subject_id, distance_cm: distance_cm as f32, shift: a, records });
    }
    Ok(out)
}

/// A window into a session: frames `[start - k, start + n)`, targets `[start, start + n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowRef {
    pub session: usize,
    pub start: usize,
}

/// Window start offsets `k, k + n, ...`; `floor((len - k) / n)` of them.
pub fn window_starts(len: usize, spec: WindowSpec) -> Result<Vec<usize>> {
    if len < spec.len() {
        return Err(Error::invalid(format!("sequence of {len} frames is shorter than one {}-frame window", spec.len())));
    }
    Ok((0..(len - spec.k) / spec.n).map(|i| spec.k + i * spec.n).collect())
}

/// Every window of every session long enough to hold one.
pub fn windows(sessions: &[Session], spec: WindowSpec) -> Vec<WindowRef> {
    sessions
        .iter()
        .enumerate()
        .flat_map(|(s, sess)| {
            window_starts(sess.records.len(), spec).unwrap_or_default().into_iter().map(move |start| WindowRef { session: s, start })
        })
        .collect()
}

/// A materialized training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    /// `(n + k)` frames of `b x 7` features.
    pub window: Vec<Vec<f32>>,
    /// `n` poses.
    pub targets: Vec<Vec<f32>>,
    pub label: crate::model::SoftPositionLabel,
}

/// Materialized windows of one session.
pub fn window(records: &[FrameRecord], spec: WindowSpec) -> Result<Vec<TrainSample>> {
    let label_of = |r: &FrameRecord| soft_label(r.distance_cm as f64);
    Ok(window_starts(records.len(), spec)?
        .into_iter()
        .map(|s| TrainSample {
            window: records[s - spec.k..s + spec.n].iter().map(|r| r.feature.clone()).collect(),
            targets: records[s..s + spec.n].iter().map(|r| r.pose.clone()).collect(),
            label: label_of(&records[s]),
        })
        .collect())
}

/// Held-out subject's sessions go to test; everything else to train.
pub fn split_loso(sessions: Vec<Session>, held_out: u16) -> Result<(Vec<Session>, Vec<Session>)> {
    if !sessions.iter().any(|s| s.subject_id == held_out) {
        return Err(Error::invalid(format!("subject {held_out} does not appear in the data")));
    }
    Ok(sessions.into_iter().partition(|s| s.subject_id != held_out))
}

/// Per-feature standardization fitted on training frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl Normalizer {
    pub fn fit(sessions: &[Session]) -> Result<Self> {
        let dim = sessions.iter().flat_map(|s| s.records.first()).map(|r| r.feature.len()).next().ok_or_else(|| Error::invalid("no frames to fit"))?;
        let mut sum = vec![0.0f64; dim];
        let mut sq = vec![0.0f64; dim];
        let mut n = 0usize;
        for r in sessions.iter().flat_map(|s| &s.records) {
            if r.feature.len() != dim {
                return Err(Error::format("frames differ in feature size"));
            }
            for ((s, q), &v) in sum.iter_mut().zip(sq.iter_mut()).zip(&r.feature) {
                *s += v as f64;
                *q += (v as f64) * (v as f64);
            }
            n += 1;
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let std = sq.iter().zip(&mean).map(|(q, m)| ((q / n as f64 - m * m).max(0.0).sqrt().max(1e-3)) as f32).collect();
        Ok(Self { mean: mean.into_iter().map(|m| m as f32).collect(), std })
    }

    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }
}

/// Mean training pose, used as the estimator's initial output.
pub fn mean_pose(sessions: &[Session]) -> Result<Vec<f64>> {
    let mut acc = vec![0.0f64; POSE_DIM];
    let mut n = 0usize;
    for r in sessions.iter().flat_map(|s| &s.records) {
        acc.iter_mut().zip(&r.pose).for_each(|(a, &p)| *a += p as f64);
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid("no frames to average"));
    }
    Ok(acc.into_iter().map(|a| a / n as f64).collect())
}

/// Stacks windows into model tensors: `N x 7 x (n+k) x b` inputs.
pub fn make_batch(sessions: &[Session], refs: &[WindowRef], spec: WindowSpec, norm: &Normalizer) -> Result<Batch<f32>> {
    if refs.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let dim = norm.mean.len();
    let b = dim / 7;
    let t_len = spec.len();
    let n = refs.len();
    let mut x = vec![0.0f32; n * 7 * t_len * b];
    let mut y = Vec::with_capacity(n * spec.n * POSE_DIM);
    let mut labels = Vec::with_capacity(n * 5);
    for (i, r) in refs.iter().enumerate() {
        let sess = sessions.get(r.session).ok_or_else(|| Error::invalid("window refers to a missing session"))?;
        if r.start < spec.k || r.start + spec.n > sess.records.len() {
            return Err(Error::invalid("window exceeds its session"));
        }
        for (t, rec) in sess.records[r.start - spec.k..r.start + spec.n].iter().enumerate() {
            if rec.feature.len() != dim {
                return Err(Error::format("feature size does not match the normalizer"));
            }
            for j in 0..b {
                for c in 0..7 {
                    let f = j * 7 + c;
                    x[((i * 7 + c) * t_len + t) * b + j] = (rec.feature[f] - norm.mean[f]) / norm.std[f];
                }
            }
        }
        for rec in &sess.records[r.start..r.start + spec.n] {
            y.extend_from_slice(&rec.pose);
        }
        labels.extend(soft_label(sess.distance_cm as f64).probs.iter().map(|&p| p as f32));
    }
    Ok(Batch {
        x: Tensor::new(vec![n, 7, t_len, b], x)?,
        y: Tensor::new(vec![n, spec.n, POSE_DIM], y)?,
        labels: Tensor::new(vec![n, 5], labels)?,
    })
}

const DATASET_MAGIC: &[u8; 8] = b"APOSEDS1";
const CHECKPOINT_MAGIC: &[u8; 8] = b"APCHKPT1";

/// Frames plus the acquisition settings they were computed with.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sample_rate: u32,
    pub period_len: u32,
    pub b: u32,
    pub sessions: Vec<Session>,
}

impl Dataset {
    pub fn frame_count(&self) -> usize {
        self.sessions.iter().map(|s| s.records.len()).sum()
    }

    pub fn subjects(&self) -> Vec<u16> {
        let mut ids: Vec<u16> = self.sessions.iter().map(|s| s.subject_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::format("file ends early"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        Ok(self.take(n * 4)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
    }
}

fn put_f32s(out: &mut Vec<u8>, v: &[f32]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

/// Dataset file bytes. Sessions are stored back to back; a change of
/// subject or distance starts a new session on reading.
pub fn encode_dataset(ds: &Dataset) -> Result<Vec<u8>> {
    let fdim = ds.b as usize * 7;
    let mut out = Vec::with_capacity(32 + ds.frame_count() * (fdim + POSE_DIM + 2) * 4);
    out.extend_from_slice(DATASET_MAGIC);
    for v in [ds.sample_rate, ds.period_len, ds.b, NUM_JOINTS as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(ds.frame_count() as u64).to_le_bytes());
    for r in ds.sessions.iter().flat_map(|s| &s.records) {
        if r.feature.len() != fdim || r.pose.len() != POSE_DIM {
            return Err(Error::invalid("frame does not match the dataset geometry"));
        }
        put_f32s(&mut out, &r.feature);
        put_f32s(&mut out, &r.pose);
        out.extend_from_slice(&r.distance_cm.to_le_bytes());
        out.extend_from_slice(&r.subject_id.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(8)? != DATASET_MAGIC {
        return Err(Error::format("not a dataset file (bad magic)"));
    }
    let (sample_rate, period_len, b, joints) = (c.u32()?, c.u32()?, c.u32()?, c.u32()?);
    if joints as usize != NUM_JOINTS {
        return Err(Error::format(format!("dataset has {joints} joints, expected {NUM_JOINTS}")));
    }
    let n = c.u64()? as usize;
    let fdim = b as usize * 7;
    let frame_bytes = (fdim + POSE_DIM + 1) * 4 + 4;
    if bytes.len() != 32 + n * frame_bytes {
        return Err(Error::format(format!("dataset size {} does not match {n} frames", bytes.len())));
    }
    let mut sessions: Vec<Session> = Vec::new();
    for _ in 0..n {
        let feature = c.f32s(fdim)?;
        let pose = c.f32s(POSE_DIM)?;
        let distance_cm = f32::from_le_bytes(c.take(4)?.try_into().expect("4 bytes"));
        let subject_id = c.u16()?;
        let _reserved = c.u16()?;
        let rec = FrameRecord { feature, pose, distance_cm, subject_id };
        match sessions.last_mut() {
            Some(s) if s.subject_id == subject_id && s.distance_cm.to_bits() == distance_cm.to_bits() => s.records.push(rec),
            _ => sessions.push(Session { subject_id, distance_cm, shift: 0.0, records: vec![rec] }),
        }
    }
    Ok(Dataset { sample_rate, period_len, b, sessions })
}

pub fn serialize_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&encode_dataset(ds)?)?;
    w.flush()?;
    Ok(())
}

pub fn deserialize_dataset(path: &Path) -> Result<Dataset> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    decode_dataset(&bytes)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    use std::hash::Hasher;
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

/// Everything needed to run a trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub estimator: PoseEstimator<f32>,
    pub discriminator: PositionDiscriminator<f32>,
    pub normalizer: Normalizer,
}

impl Checkpoint {
    fn tensors(&self) -> Vec<(String, Tensor<f32>)> {
        let w = self.estimator.config.window;
        let mut out = vec![
            ("meta.window".to_string(), Tensor::new(vec![2], vec![w.n as f32, w.k as f32]).expect("sized")),
            ("norm.mean".to_string(), Tensor::new(vec![self.normalizer.mean.len()], self.normalizer.mean.clone()).expect("sized")),
            ("norm.std".to_string(), Tensor::new(vec![self.normalizer.std.len()], self.normalizer.std.clone()).expect("sized")),
        ];
        for (name, t) in self.estimator.params.iter().chain(self.discriminator.params.iter()) {
            out.push((name.to_string(), t.clone()));
        }
        out
    }

    fn from_tensors(tensors: Vec<(String, Tensor<f32>)>) -> Result<Self> {
        let mut meta = None;
        let mut mean = None;
        let mut std = None;
        let mut est = ParamSet::new();
        let mut disc = ParamSet::new();
        for (name, t) in tensors {
            match name.as_str() {
                "meta.window" => meta = Some(t),
                "norm.mean" => mean = Some(t.into_data()),
                "norm.std" => std = Some(t.into_data()),
                n if n.starts_with("disc.") => {
                    disc.insert(name, t);
                }
                _ => {
                    est.insert(name, t);
                }
            }
        }
        let missing = |what: &str| Error::format(format!("checkpoint lacks {what}"));
        let meta = meta.ok_or_else(|| missing("meta.window"))?;
        let (mean, std) = (mean.ok_or_else(|| missing("norm.mean"))?, std.ok_or_else(|| missing("norm.std"))?);
        if meta.numel() != 2 || mean.len() != std.len() || mean.len() % 7 != 0 {
            return Err(Error::format("checkpoint metadata is inconsistent"));
        }
        let window = WindowSpec::new(meta.data()[0] as usize, meta.data()[1] as usize)?;
        let dims = |name: &str| est.by_name(name).map(|t| t.shape().to_vec()).ok_or_else(|| missing(name));
        let mut config = ModelConfig::new(mean.len() / 7, window);
        for i in 0..4 {
            config.conv_channels[i] = dims(&format!("conv{}.w", i + 1))?[0];
        }
        config.proj_channels = dims("proj.w")?[0];
        let t1 = dims("temporal1.w")?;
        config.temporal_channels = t1[0];
        config.temporal_kernel = *t1.last().unwrap_or(&1);
        Ok(Self {
            estimator: PoseEstimator::from_params(config, est)?,
            discriminator: PositionDiscriminator::from_params(disc)?,
            normalizer: Normalizer { mean, std },
        })
    }
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Result<Vec<u8>> {
    let tensors = ck.tensors();
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in &tensors {
        let nb = name.as_bytes();
        let len = u16::try_from(nb.len()).map_err(|_| Error::invalid(format!("tensor name {name} is too long")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(nb);
        out.push(u8::try_from(t.ndim()).map_err(|_| Error::invalid("tensor rank exceeds 255"))?);
        for &d in t.shape() {
            out.extend_from_slice(&u32::try_from(d).map_err(|_| Error::invalid("tensor dimension exceeds u32"))?.to_le_bytes());
        }
        put_f32s(&mut out, t.data());
    }
    let h = fnv1a(&out);
    out.extend_from_slice(&h.to_le_bytes());
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::format("not a checkpoint file (bad magic)"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    if fnv1a(body) != u64::from_le_bytes(tail.try_into().expect("8 bytes")) {
        return Err(Error::format("checkpoint hash mismatch; the file is corrupted"));
    }
    let mut c = Cursor { buf: body, pos: 8 };
    let count = c.u32()? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let len = c.u16()? as usize;
        let name = String::from_utf8(c.take(len)?.to_vec()).map_err(|_| Error::format("tensor name is not UTF-8"))?;
        let ndim = c.u8()? as usize;
        let shape = (0..ndim).map(|_| c.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let data = c.f32s(shape.iter().product())?;
        tensors.push((name, Tensor::new(shape, data)?));
    }
    if c.pos != body.len() {
        return Err(Error::format("trailing bytes after the last tensor"));
    }
    Checkpoint::from_tensors(tensors)
}

pub fn serialize_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    std::fs::write(path, encode_checkpoint(ck)?)?;
    Ok(())
}

pub fn deserialize_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&std::fs::read(path)?)
}

/// FNV-1a over a checkpoint's parameter bytes, for cheap equality audits.
pub fn params_hash(params: &ParamSet<f32>) -> u64 {
    let mut bytes = Vec::with_capacity(params.numel() * 4);
    for (_, t) in params.iter() {
        put_f32s(&mut bytes, t.data());
    }
    fnv1a(&bytes)
}
