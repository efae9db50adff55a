use echopose::config::RunConfig;
use echopose::dataset::*;
use echopose::model::{WindowSpec, POSE_DIM};
use echopose::pipeline::{extractor_for, initial_checkpoint, loso_sessions, synth_recording, tsp_for, Recording};
use echopose::sim::{pose_sequencer, render_bformat, BFormat, Motion, Subject};
use echopose::Error;
use proptest::prelude::*;

fn short_cfg(seconds: f64) -> RunConfig {
    RunConfig { duration_s: seconds, ..RunConfig::default() }
}

fn recording(cfg: &RunConfig, subject: u16, d: f64) -> Recording {
    synth_recording(cfg, &tsp_for(cfg).unwrap(), subject, d).unwrap()
}

#[test]
fn ten_second_render_yields_one_record_per_whole_period() {
    let cfg = short_cfg(10.0);
    let rec = recording(&cfg, 1, 25.0);
    let sess = ingest(&rec.audio, &rec.rows, &extractor_for(&cfg).unwrap()).unwrap();
    let expected = (16000 * 10) / 600;
    assert_eq!(expected, 266);
    assert_eq!(sess.records.len(), expected);
    assert!(sess.records.iter().all(|r| r.feature.len() == 64 * 7 && r.pose.len() == POSE_DIM && r.subject_id == 1 && r.distance_cm == 25.0));
}

#[test]
fn empty_or_mismatched_inputs_are_rejected() {
    let cfg = short_cfg(1.0);
    let fx = extractor_for(&cfg).unwrap();
    let rec = recording(&cfg, 1, 0.0);
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("empty.wav");
    let csv = dir.path().join("poses.csv");
    write_wav(&wav, &BFormat { sample_rate: 16000, channels: Default::default() }).unwrap();
    write_pose_csv(&csv, &rec.rows).unwrap();
    assert!(matches!(ingest_files(&wav, &csv, &fx), Err(Error::Format(_))));
    // far fewer pose rows than periods
    assert!(ingest(&rec.audio, &rec.rows[..rec.rows.len() - 5], &fx).is_err());
    // one row short is within tolerance
    assert_eq!(ingest(&rec.audio, &rec.rows[..rec.rows.len() - 1], &fx).unwrap().records.len(), rec.rows.len() - 1);
}

#[test]
fn two_channel_wav_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("stereo.wav");
    let spec = hound::WavSpec { channels: 2, sample_rate: 16000, bits_per_sample: 32, sample_format: hound::SampleFormat::Float };
    let mut w = hound::WavWriter::create(&path, spec).unwrap();
    for _ in 0..1200 {
        w.write_sample(0.0f32).unwrap();
    }
    w.finalize().unwrap();
    assert!(matches!(read_wav(&path), Err(Error::Format(_))));
}

#[test]
fn files_round_trip_bit_exactly() {
    let cfg = short_cfg(4.0);
    let fx = extractor_for(&cfg).unwrap();
    let rec = recording(&cfg, 2, 50.0);
    let dir = tempfile::tempdir().unwrap();
    let (wav, csv) = (dir.path().join("a.wav"), dir.path().join("a.csv"));
    write_wav(&wav, &rec.audio).unwrap();
    write_pose_csv(&csv, &rec.rows).unwrap();
    assert_eq!(read_wav(&wav).unwrap(), rec.audio);
    assert_eq!(read_pose_csv(&csv).unwrap(), rec.rows);
    let from_files = ingest_files(&wav, &csv, &fx).unwrap();
    assert_eq!(from_files, ingest(&rec.audio, &rec.rows, &fx).unwrap());

    let ds = Dataset { sample_rate: 16000, period_len: 600, b: 64, sessions: vec![Session { records: from_files.records[..100].to_vec(), ..from_files }] };
    let path = dir.path().join("d.apds");
    serialize_dataset(&path, &ds).unwrap();
    let back = deserialize_dataset(&path).unwrap();
    assert_eq!(back, ds);
    assert_eq!(back.frame_count(), 100);
    for (a, b) in back.sessions[0].records.iter().zip(&ds.sessions[0].records) {
        assert!(a.feature.iter().zip(&b.feature).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[3] ^= 0xff;
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(deserialize_dataset(&path), Err(Error::Format(_))));
}

#[test]
fn checkpoint_round_trip_preserves_every_tensor() {
    let cfg = short_cfg(2.0);
    let fx = extractor_for(&cfg).unwrap();
    let rec = recording(&cfg, 1, 75.0);
    let sess = vec![ingest(&rec.audio, &rec.rows, &fx).unwrap()];
    let ck = initial_checkpoint(&cfg, &sess).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.apck");
    serialize_checkpoint(&path, &ck).unwrap();
    let back = deserialize_checkpoint(&path).unwrap();
    assert_eq!(back, ck);
    assert_eq!(params_hash(&back.estimator.params), params_hash(&ck.estimator.params));
    assert_eq!(params_hash(&back.discriminator.params), params_hash(&ck.discriminator.params));

    let bytes = std::fs::read(&path).unwrap();
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'Z';
    assert!(matches!(decode_checkpoint(&bad_magic), Err(Error::Format(_))));
    let mut flipped = bytes.clone();
    flipped[bytes.len() / 2] ^= 1;
    assert!(matches!(decode_checkpoint(&flipped), Err(Error::Format(_))));
    assert!(deserialize_checkpoint(&dir.path().join("missing.apck")).is_err());
}

#[test]
fn augmentation_triples_frames_minus_one_per_shift() {
    let cfg = short_cfg(6.0);
    let fx = extractor_for(&cfg).unwrap();
    let rec = recording(&cfg, 3, 100.0);
    let raw = ingest(&rec.audio, &rec.rows, &fx).unwrap();
    let out = augment_phase(&rec.audio, &rec.rows, &[1.0 / 3.0, 2.0 / 3.0], &fx).unwrap();
    assert_eq!(out.len(), 3);
    assert_eq!(out[0], raw);
    let total: usize = out.iter().map(|s| s.records.len()).sum();
    let n = raw.records.len();
    assert!(total <= 3 * n && total >= 3 * n - 4);
    assert_eq!(total, 3 * n - 2);
    assert_eq!(out[1].shift, 200.0 / 600.0);
    assert_eq!(out[2].shift, 400.0 / 600.0);
    assert!(out[1..].iter().all(|s| s.is_augmented() && s.subject_id == 3));

    let none = augment_phase(&rec.audio, &rec.rows, &[], &fx).unwrap();
    assert_eq!(none, vec![raw]);
    for bad in [0.0, 1.0, -0.2, 1.5] {
        assert!(augment_phase(&rec.audio, &rec.rows, &[bad], &fx).is_err());
    }
}

#[test]
fn shifted_targets_interpolate_neighbouring_poses() {
    let cfg = short_cfg(2.0);
    let fx = extractor_for(&cfg).unwrap();
    let rec = recording(&cfg, 1, 0.0);
    let out = augment_phase(&rec.audio, &rec.rows, &[0.25], &fx).unwrap();
    for (t, r) in out[1].records.iter().enumerate() {
        let (p0, p1) = (rec.rows[t].pose.to_flat(), rec.rows[t + 1].pose.to_flat());
        for i in 0..POSE_DIM {
            let oracle = (0.75 * p0[i] + 0.25 * p1[i]) as f32;
            assert!((r.pose[i] - oracle).abs() < 1e-6);
        }
    }
}

fn static_scene(fps: f64) -> (Vec<echopose::sim::PoseFrame>, BFormat) {
    let cfg = short_cfg(2.0);
    let poses = pose_sequencer(&[Motion::Standing], fps, 50.0, 2.0, &Subject::nominal(1), &cfg.scene.placement()).unwrap();
    let audio = render_bformat(&cfg.scene, &tsp_for(&cfg).unwrap(), &poses, None).unwrap();
    (poses, audio)
}

#[test]
fn static_scene_has_phase_diverse_features_and_equal_targets() {
    let cfg = short_cfg(2.0);
    let fx = extractor_for(&cfg).unwrap();
    let (poses, audio) = static_scene(cfg.fps());
    assert!(poses.windows(2).all(|w| w[0] == w[1]));
    let rows: Vec<PoseRow> = poses.iter().enumerate().map(|(i, p)| PoseRow { frame_idx: i, subject_id: 1, distance_cm: 50.0, pose: p.clone() }).collect();
    let out = augment_phase(&audio, &rows, &[1.0 / 3.0, 2.0 / 3.0], &fx).unwrap();
    let target = poses[0].to_flat().map(|v| v as f32);
    for s in &out {
        assert!(s.records.iter().all(|r| r.pose == target));
    }
    for s in &out[1..] {
        let diff: f32 = s.records[3].feature.iter().zip(&out[0].records[3].feature).map(|(a, b)| (a - b).abs()).sum();
        assert!(diff > 1.0, "shifted frame features should differ, diff {diff}");
    }
}

#[test]
fn loso_keeps_augmentation_on_the_training_side() {
    let cfg = RunConfig { duration_s: 1.5, distances: vec![0.0, 100.0], subjects: 3, held_out: 2, ..RunConfig::default() };
    let tsp = tsp_for(&cfg).unwrap();
    let recs: Vec<_> = [(1, 0.0), (1, 100.0), (2, 0.0), (2, 100.0), (3, 0.0)].into_iter().map(|(s, d)| synth_recording(&cfg, &tsp, s, d)).collect();
    let raw: Vec<usize> = recs.iter().map(|r| r.as_ref().unwrap().rows.len()).collect();
    let (train, test) = loso_sessions(&cfg, recs).unwrap();
    assert!(test.iter().all(|s| s.subject_id == 2 && !s.is_augmented()));
    assert!(train.iter().all(|s| s.subject_id != 2));
    assert_eq!(test.iter().map(|s| s.records.len()).sum::<usize>(), raw[2] + raw[3]);
    let raw_train = raw[0] + raw[1] + raw[4];
    assert_eq!(train.iter().map(|s| s.records.len()).sum::<usize>(), 3 * raw_train - 2 * 3);
    let bad = RunConfig { held_out: 9, ..cfg.clone() };
    let recs: Vec<_> = [(1, 0.0)].into_iter().map(|(s, d)| synth_recording(&cfg, &tsp, s, d)).collect();
    assert!(loso_sessions(&bad, recs).is_err());
}

#[test]
fn batches_standardize_with_the_fitted_normalizer() {
    let cfg = short_cfg(2.0);
    let fx = extractor_for(&cfg).unwrap();
    let rec = recording(&cfg, 1, 25.0);
    let sessions = vec![ingest(&rec.audio, &rec.rows, &fx).unwrap()];
    let norm = Normalizer::fit(&sessions).unwrap();
    let spec = WindowSpec::default();
    let refs = windows(&sessions, spec);
    let batch = make_batch(&sessions, &refs, spec, &norm).unwrap();
    assert_eq!(batch.x.shape(), &[refs.len(), 7, 24, 64]);
    assert!(batch.x.data().iter().all(|v| v.is_finite()));
    for i in 0..refs.len() {
        assert_eq!(&batch.labels.data()[i * 5..i * 5 + 5], &[0.0, 1.0, 0.0, 0.0, 0.0]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn windows_cover_every_target_once(len in 1usize..200, n in 1usize..12, k in 0usize..20) {
        let spec = WindowSpec::new(n, k).unwrap();
        match window_starts(len, spec) {
            Err(_) => prop_assert!(len < n + k),
            Ok(starts) => {
                prop_assert_eq!(starts.len(), (len - k) / n);
                let mut seen = vec![0u8; len];
                for (i, &s) in starts.iter().enumerate() {
                    prop_assert_eq!(s, i * n + k);
                    prop_assert!(s >= k && s + n <= len);
                    for t in s..s + n {
                        seen[t] += 1;
                    }
                }
                let covered = k + starts.len() * n;
                prop_assert!(seen[..k].iter().all(|&c| c == 0));
                prop_assert!(seen[k..covered].iter().all(|&c| c == 1));
                prop_assert!(len - covered < n);
            }
        }
    }
}
