//! End-to-end flows: render a synthetic corpus, build leave-one-subject-out
//! training data, train, and evaluate.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::dataset::{
    augment_phase, ingest, make_batch, mean_pose, read_pose_csv, read_wav, serialize_dataset, windows, write_pose_csv, write_wav, Checkpoint,
    Dataset, Normalizer, PoseRow, Session,
};
use crate::error::{Error, Result};
use crate::features::{pca_project, FeatureExtractor, FeatureFrame, Pca};
use crate::metrics::{per_position_report, EvalReport};
use crate::model::{LossReport, PoseEstimator, PositionDiscriminator, Trainer, POSE_DIM};
use crate::plot::ScatterSeries;
use crate::signal::{generate_tsp, TspSignal};
use crate::sim::{pose_sequencer, render_bformat, render_empty_room, BFormat, Subject};

/// Audio and poses of one subject at one mark.
#[derive(Debug, Clone)]
pub struct Recording {
    pub subject_id: u16,
    pub distance_cm: f64,
    pub audio: BFormat,
    pub rows: Vec<PoseRow>,
}

pub fn tsp_for(cfg: &RunConfig) -> Result<TspSignal> {
    generate_tsp(cfg.sample_rate as f64, cfg.period_len, cfg.f_lo, cfg.f_hi)
}

pub fn extractor_for(cfg: &RunConfig) -> Result<FeatureExtractor> {
    FeatureExtractor::new(&cfg.feature_config(), cfg.sample_rate as f64, cfg.period_len)
}

fn noise_seed(cfg: &RunConfig, subject_id: u16, distance_cm: f64) -> u64 {
    cfg.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ ((subject_id as u64) << 32) ^ (distance_cm * 100.0).round() as u64
}

/// Renders one session of the synthetic corpus.
pub fn synth_recording(cfg: &RunConfig, tsp: &TspSignal, subject_id: u16, distance_cm: f64) -> Result<Recording> {
    if cfg.duration_s.is_nan() || cfg.duration_s <= 0.0 {
        return Err(Error::invalid("duration must be positive"));
    }
    let subject = Subject::from_seed(subject_id, cfg.seed);
    let poses = pose_sequencer(&cfg.motions, cfg.fps(), distance_cm, cfg.duration_s, &subject, &cfg.scene.placement())?;
    let audio = render_bformat(&cfg.scene, tsp, &poses, Some(noise_seed(cfg, subject_id, distance_cm)))?;
    let rows = poses.into_iter().enumerate().map(|(i, pose)| PoseRow { frame_idx: i, subject_id, distance_cm, pose }).collect();
    Ok(Recording { subject_id, distance_cm, audio, rows })
}

/// Empty-room recording of `n_frames` periods.
pub fn synth_empty_room(cfg: &RunConfig, tsp: &TspSignal, n_frames: usize) -> Result<BFormat> {
    render_empty_room(&cfg.scene, tsp, n_frames, Some(noise_seed(cfg, 0, 0.0) ^ 0xe3e3))
}

pub fn recording_stem(subject_id: u16, distance_cm: f64) -> String {
    format!("s{subject_id}_d{}", distance_cm.round() as i64)
}

/// Every (subject, distance) pair of the configured corpus, subjects numbered from 1.
pub fn corpus_plan(cfg: &RunConfig) -> Vec<(u16, f64)> {
    (1..=cfg.subjects).flat_map(|s| cfg.distances.iter().map(move |&d| (s, d))).collect()
}

/// Writes WAV, pose CSV and an unaugmented dataset file for every session, plus a manifest.
pub fn synth_corpus(cfg: &RunConfig, dir: &Path) -> Result<String> {
    cfg.validate()?;
    fs::create_dir_all(dir)?;
    let tsp = tsp_for(cfg)?;
    let fx = extractor_for(cfg)?;
    let mut sessions = Vec::new();
    let mut manifest = String::from("stem,subject_id,distance_cm,frames\n");
    for (s, d) in corpus_plan(cfg) {
        let rec = synth_recording(cfg, &tsp, s, d)?;
        let stem = recording_stem(s, d);
        write_wav(&dir.join(format!("{stem}.wav")), &rec.audio)?;
        write_pose_csv(&dir.join(format!("{stem}.csv")), &rec.rows)?;
        let sess = ingest(&rec.audio, &rec.rows, &fx)?;
        let _ = writeln!(manifest, "{stem},{s},{d},{}", sess.records.len());
        sessions.push(sess);
    }
    let ds = Dataset { sample_rate: cfg.sample_rate, period_len: cfg.period_len as u32, b: cfg.b as u32, sessions };
    serialize_dataset(&dir.join("dataset.apds"), &ds)?;
    fs::write(dir.join("manifest.csv"), &manifest)?;
    fs::write(dir.join("config.txt"), cfg.to_text())?;
    Ok(manifest)
}

/// Recordings listed in a corpus manifest.
pub fn corpus_entries(dir: &Path) -> Result<Vec<(String, u16, f64)>> {
    let text = fs::read_to_string(dir.join("manifest.csv"))?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = || Error::format(format!("bad manifest line {l:?}"));
            if f.len() != 4 {
                return Err(bad());
            }
            Ok((f[0].to_string(), f[1].parse().map_err(|_| bad())?, f[2].parse().map_err(|_| bad())?))
        })
        .collect()
}

pub fn load_recording(dir: &Path, stem: &str) -> Result<Recording> {
    let audio = read_wav(&dir.join(format!("{stem}.wav")))?;
    let rows = read_pose_csv(&dir.join(format!("{stem}.csv")))?;
    let first = rows.first().ok_or_else(|| Error::format(format!("{stem}.csv has no rows")))?;
    Ok(Recording { subject_id: first.subject_id, distance_cm: first.distance_cm, audio, rows })
}

/// Sessions of one recording; augmented copies only when `augment` is set.
pub fn recording_sessions(rec: &Recording, alphas: &[f64], augment: bool, fx: &FeatureExtractor) -> Result<Vec<Session>> {
    if augment {
        augment_phase(&rec.audio, &rec.rows, alphas, fx)
    } else {
        Ok(vec![ingest(&rec.audio, &rec.rows, fx)?])
    }
}

/// Train (augmented) and test (raw) sessions for holding out `cfg.held_out`.
pub fn loso_sessions<I>(cfg: &RunConfig, recordings: I) -> Result<(Vec<Session>, Vec<Session>)>
where
    I: IntoIterator<Item = Result<Recording>>,
{
    let fx = extractor_for(cfg)?;
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for rec in recordings {
        let rec = rec?;
        if rec.subject_id == cfg.held_out {
            test.extend(recording_sessions(&rec, &cfg.alphas, false, &fx)?);
        } else {
            train.extend(recording_sessions(&rec, &cfg.alphas, true, &fx)?);
        }
    }
    if test.is_empty() {
        return Err(Error::invalid(format!("held-out subject {} has no recordings", cfg.held_out)));
    }
    if train.is_empty() {
        return Err(Error::invalid("no training subjects left after holding one out"));
    }
    Ok((train, test))
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub losses: Vec<LossReport>,
}

/// Untrained model with normalization and output bias fitted to `train`.
pub fn initial_checkpoint(cfg: &RunConfig, train: &[Session]) -> Result<Checkpoint> {
    let normalizer = Normalizer::fit(train)?;
    let mean = mean_pose(train)?;
    let estimator = PoseEstimator::new(cfg.model_config(), &mean, cfg.seed)?;
    let discriminator = PositionDiscriminator::new(cfg.model_config().tap_dim(), cfg.seed);
    Ok(Checkpoint { estimator, discriminator, normalizer })
}

/// Adversarial training over shuffled windows. `on_epoch` sees the model after each epoch.
pub fn train(
    cfg: &RunConfig,
    train_sessions: &[Session],
    mut on_step: impl FnMut(&LossReport),
    mut on_epoch: impl FnMut(usize, &Checkpoint) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let init = initial_checkpoint(cfg, train_sessions)?;
    let spec = cfg.window();
    let mut refs = windows(train_sessions, spec);
    if refs.is_empty() {
        return Err(Error::invalid(format!("no training session holds a full {}-frame window", spec.len())));
    }
    let mut trainer = Trainer::new(init.estimator, init.discriminator, cfg.lr, cfg.lr_disc, cfg.loss_weights());
    let normalizer = init.normalizer;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7a11);
    let mut losses = Vec::new();
    let cap = if cfg.max_steps == 0 { usize::MAX } else { cfg.max_steps };
    'epochs: for epoch in 0..cfg.epochs {
        refs.shuffle(&mut rng);
        for chunk in refs.chunks(cfg.batch_size) {
            if losses.len() >= cap {
                break 'epochs;
            }
            let batch = make_batch(train_sessions, chunk, spec, &normalizer)?;
            let report = trainer.train_step(&batch)?;
            on_step(&report);
            losses.push(report);
        }
        let ck = Checkpoint { estimator: trainer.estimator.clone(), discriminator: trainer.discriminator.clone(), normalizer: normalizer.clone() };
        on_epoch(epoch, &ck)?;
    }
    let checkpoint = Checkpoint { estimator: trainer.estimator, discriminator: trainer.discriminator, normalizer };
    Ok(TrainOutcome { checkpoint, losses })
}

/// Frame-aligned predictions and ground truth.
#[derive(Debug, Clone, Default)]
pub struct Predictions {
    pub pred: Vec<Vec<f64>>,
    pub gt: Vec<Vec<f64>>,
    pub distances: Vec<f64>,
}

impl Predictions {
    pub fn report(&self) -> Result<EvalReport> {
        per_position_report(&self.pred, &self.gt, &self.distances)
    }
}

/// Runs the model over every window of every session.
pub fn predict_sessions(ck: &Checkpoint, sessions: &[Session]) -> Result<Predictions> {
    let spec = ck.estimator.config.window;
    let refs = windows(sessions, spec);
    if refs.is_empty() {
        return Err(Error::invalid("no session is long enough for one window"));
    }
    let mut out = Predictions::default();
    for chunk in refs.chunks(32) {
        let batch = make_batch(sessions, chunk, spec, &ck.normalizer)?;
        let (poses, _) = ck.estimator.predict(&batch.x)?;
        for (i, r) in chunk.iter().enumerate() {
            let sess = &sessions[r.session];
            for t in 0..spec.n {
                let off = (i * spec.n + t) * POSE_DIM;
                out.pred.push(poses.data()[off..off + POSE_DIM].iter().map(|&v| v as f64).collect());
                out.gt.push(sess.records[r.start + t].pose.iter().map(|&v| v as f64).collect());
                out.distances.push(sess.distance_cm as f64);
            }
        }
    }
    Ok(out)
}

/// Predicts `pose` for every frame the model would be scored on.
pub fn constant_predictions(pose: &[f64], sessions: &[Session], spec: crate::model::WindowSpec) -> Predictions {
    let mut out = Predictions::default();
    for r in windows(sessions, spec) {
        let sess = &sessions[r.session];
        for t in 0..spec.n {
            out.pred.push(pose.to_vec());
            out.gt.push(sess.records[r.start + t].pose.iter().map(|&v| v as f64).collect());
            out.distances.push(sess.distance_cm as f64);
        }
    }
    out
}

/// Output locations of a training run.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub dir: PathBuf,
}

impl RunPaths {
    pub fn checkpoint(&self) -> PathBuf {
        self.dir.join("model.apck")
    }

    pub fn epoch_checkpoint(&self, epoch: usize) -> PathBuf {
        self.dir.join(format!("model_epoch{}.apck", epoch + 1))
    }

    pub fn losses(&self) -> PathBuf {
        self.dir.join("losses.csv")
    }

    pub fn report_csv(&self) -> PathBuf {
        self.dir.join("report.csv")
    }

    pub fn report_txt(&self) -> PathBuf {
        self.dir.join("report.txt")
    }
}

pub fn losses_csv(losses: &[LossReport]) -> String {
    let mut s = String::from(LossReport::CSV_HEADER);
    s.push('\n');
    for l in losses {
        s.push_str(&l.csv_line());
        s.push('\n');
    }
    s
}

pub fn parse_losses_csv(text: &str) -> Result<Vec<LossReport>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(LossReport::CSV_HEADER) {
        return Err(Error::format("loss CSV lacks its header"));
    }
    lines.filter(|l| !l.trim().is_empty()).map(LossReport::parse_csv_line).collect()
}

/// Feature-space PCA with one class per standing distance plus the empty room.
#[derive(Debug, Clone)]
pub struct PcaDiagnostic {
    pub pca: Pca,
    /// Empty room first, then distances in increasing order.
    pub series: Vec<ScatterSeries>,
}

impl PcaDiagnostic {
    pub fn centroid(&self, label: &str) -> Option<[f64; 2]> {
        self.series.iter().find(|s| s.label == label).and_then(ScatterSeries::centroid)
    }
}

pub const EMPTY_ROOM: &str = "empty room";

pub fn distance_label(d: f64) -> String {
    format!("{} cm", d.round() as i64)
}

/// Projects every `stride`-th frame of `sessions` and of an empty-room
/// recording as long as the longest session onto the top two principal axes.
pub fn pca_diagnostic(cfg: &RunConfig, sessions: &[Session], stride: usize) -> Result<PcaDiagnostic> {
    let stride = stride.max(1);
    let b = cfg.b;
    let len = sessions.iter().map(|s| s.records.len()).max().ok_or_else(|| Error::invalid("no sessions to project"))?;
    let fx = extractor_for(cfg)?;
    let empty = synth_empty_room(cfg, &tsp_for(cfg)?, len)?;
    let mut frames: Vec<FeatureFrame> = fx.extract(empty.channel_slices(), 0)?.into_iter().step_by(stride).collect();
    let mut labels = vec![EMPTY_ROOM.to_string(); frames.len()];
    for s in sessions {
        for r in s.records.iter().step_by(stride) {
            frames.push(r.feature_frame(b)?);
            labels.push(distance_label(s.distance_cm as f64));
        }
    }
    let pca = pca_project(&frames, 2)?;
    let mut distances: Vec<f64> = sessions.iter().map(|s| s.distance_cm as f64).collect();
    distances.sort_by(f64::total_cmp);
    distances.dedup();
    let order = std::iter::once(EMPTY_ROOM.to_string()).chain(distances.into_iter().map(distance_label));
    let series = order
        .map(|label| {
            let points = pca.points.iter().zip(&labels).filter(|(_, l)| **l == label).map(|(p, _)| [p[0], p[1]]).collect();
            ScatterSeries { label, points }
        })
        .collect();
    Ok(PcaDiagnostic { pca, series })
}
