//! Forward model standing in for real recordings: a shoebox room with a
//! loudspeaker, a first-order ambisonic microphone and a moving body.
//!
//! Each frame sums delayed, attenuated copies of the continuously repeating
//! excitation over three path families: the direct path (attenuated when body
//! capsules block it), one point scatterer per joint, and the six first-order
//! wall images. Paths are encoded into B-format with unit W gain.

mod body;
mod motion;

pub use body::{Joint, PoseFrame, BONES, NUM_JOINTS};
pub use motion::{parse_script, pose_sequencer, Motion, Placement, Subject};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geom::{segment_distance, Vec3};
use crate::signal::TspSignal;

/// Room, transducers and the acoustic constants of the forward model.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub room_dims: Vec3,
    pub speaker_pos: Vec3,
    pub mic_pos: Vec3,
    pub wall_reflectance: f64,
    /// Per-joint scattering amplitude in meters; roughly half the radius of
    /// the body part a joint stands for.
    pub scatter_gain: f64,
    /// Body capsule radius, meters.
    pub occlusion_radius: f64,
    /// Attenuation per intersecting capsule in `exp(-sigma * count)`.
    pub occlusion_sigma: f64,
    /// Noise level relative to the direct path of a full-scale excitation.
    /// The noise also stands in for the diffuse reverberant field.
    pub noise_snr_db: f64,
    pub speed_of_sound: f64,
}

impl Default for Scene {
    fn default() -> Self {
        Self {
            room_dims: Vec3::new(7.0, 9.0, 3.0),
            speaker_pos: Vec3::new(2.0, 4.5, 1.2),
            mic_pos: Vec3::new(5.0, 4.5, 1.2),
            wall_reflectance: 0.4,
            scatter_gain: 0.03,
            occlusion_radius: 0.1,
            occlusion_sigma: 2.0,
            noise_snr_db: 10.0,
            speed_of_sound: 343.0,
        }
    }
}

fn strictly_inside(p: Vec3, dims: Vec3) -> bool {
    p.x > 0.0 && p.y > 0.0 && p.z > 0.0 && p.x < dims.x && p.y < dims.y && p.z < dims.z
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        if !(self.room_dims.x > 0.0 && self.room_dims.y > 0.0 && self.room_dims.z > 0.0) {
            return Err(Error::invalid("room dimensions must be positive"));
        }
        if !strictly_inside(self.speaker_pos, self.room_dims) || !strictly_inside(self.mic_pos, self.room_dims) {
            return Err(Error::invalid("speaker and microphone must lie strictly inside the room"));
        }
        if !(0.0..=1.0).contains(&self.wall_reflectance) {
            return Err(Error::invalid("wall reflectance must be in [0, 1]"));
        }
        if self.scatter_gain.is_nan() || self.scatter_gain < 0.0 || self.occlusion_radius < 0.0 || self.occlusion_sigma < 0.0 {
            return Err(Error::invalid("scatter gain, occlusion radius and sigma must be non-negative"));
        }
        if self.speed_of_sound.is_nan() || self.speed_of_sound <= 0.0 {
            return Err(Error::invalid("speed of sound must be positive"));
        }
        if self.speaker_pos == self.mic_pos {
            return Err(Error::invalid("speaker and microphone coincide"));
        }
        Ok(())
    }

    /// Body placement: midpoint of the speaker-mic line on the floor, lateral
    /// axis along the line, offsets horizontal and perpendicular to it.
    pub fn placement(&self) -> Placement {
        let mid = self.speaker_pos.lerp(self.mic_pos, 0.5);
        let line = self.mic_pos - self.speaker_pos;
        let lateral = Vec3::new(line.x, line.y, 0.0).unit();
        let away = Vec3::new(-lateral.y, lateral.x, 0.0);
        Placement { origin: Vec3::new(mid.x, mid.y, 0.0), lateral, away }
    }

    pub fn direct_distance(&self) -> f64 {
        self.speaker_pos.dist(self.mic_pos)
    }

    /// Standard deviation of the additive noise.
    pub fn noise_std(&self) -> f64 {
        let reference_rms = std::f64::consts::FRAC_1_SQRT_2 / self.direct_distance();
        reference_rms * 10f64.powf(-self.noise_snr_db / 20.0)
    }

    fn image_sources(&self) -> [Vec3; 6] {
        let s = self.speaker_pos;
        let d = self.room_dims;
        [
            Vec3::new(-s.x, s.y, s.z),
            Vec3::new(2.0 * d.x - s.x, s.y, s.z),
            Vec3::new(s.x, -s.y, s.z),
            Vec3::new(s.x, 2.0 * d.y - s.y, s.z),
            Vec3::new(s.x, s.y, -s.z),
            Vec3::new(s.x, s.y, 2.0 * d.z - s.z),
        ]
    }
}

/// One propagation path as seen at the microphone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterPath {
    /// Seconds.
    pub delay: f64,
    pub gain: f64,
    /// Unit vector from the microphone toward where the sound arrives from.
    pub arrival_dir: Vec3,
}

/// Number of body capsules that intersect the speaker-mic segment.
pub fn occluding_capsules(scene: &Scene, pose: &PoseFrame) -> usize {
    BONES
        .iter()
        .filter(|(a, b)| {
            segment_distance(pose.joint(*a), pose.joint(*b), scene.speaker_pos, scene.mic_pos) <= scene.occlusion_radius
        })
        .count()
}

/// Direct-path attenuation `exp(-sigma * count)`; no body means no attenuation.
pub fn occlusion_gain(scene: &Scene, pose: Option<&PoseFrame>) -> f64 {
    match pose {
        None => 1.0,
        Some(p) => (-scene.occlusion_sigma * occluding_capsules(scene, p) as f64).exp(),
    }
}

/// Direct, per-joint scatter and first-order wall paths. Paths with zero gain are omitted.
pub fn enumerate_paths(scene: &Scene, pose: Option<&PoseFrame>) -> Vec<ScatterPath> {
    let c = scene.speed_of_sound;
    let mic = scene.mic_pos;
    let spk = scene.speaker_pos;
    let mut paths = Vec::with_capacity(1 + NUM_JOINTS + 6);
    let direct = scene.direct_distance();
    paths.push(ScatterPath { delay: direct / c, gain: occlusion_gain(scene, pose) / direct, arrival_dir: (spk - mic).unit() });
    if let Some(pose) = pose {
        if scene.scatter_gain > 0.0 {
            for &j in pose.joints() {
                let d_sj = spk.dist(j).max(1e-3);
                let d_jm = j.dist(mic).max(1e-3);
                paths.push(ScatterPath {
                    delay: (d_sj + d_jm) / c,
                    gain: scene.scatter_gain / (d_sj * d_jm),
                    arrival_dir: (j - mic).unit(),
                });
            }
        }
    }
    if scene.wall_reflectance > 0.0 {
        for img in scene.image_sources() {
            let d = img.dist(mic);
            paths.push(ScatterPath { delay: d / c, gain: scene.wall_reflectance / d, arrival_dir: (img - mic).unit() });
        }
    }
    paths
}

/// Four-channel first-order ambisonic audio, channel order W, X, Y, Z.
#[derive(Debug, Clone, PartialEq)]
pub struct BFormat {
    pub sample_rate: u32,
    pub channels: [Vec<f32>; 4],
}

impl BFormat {
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel_slices(&self) -> [&[f32]; 4] {
        [&self.channels[0], &self.channels[1], &self.channels[2], &self.channels[3]]
    }
}

/// Renders `paths_per_frame.len()` frames of one excitation period each.
/// `noise_seed = None` renders noiselessly.
pub fn render_paths(scene: &Scene, tsp: &TspSignal, paths_per_frame: &[Vec<ScatterPath>], noise_seed: Option<u64>) -> Result<BFormat> {
    if paths_per_frame.is_empty() {
        return Err(Error::invalid("cannot render zero frames"));
    }
    let period = tsp.period_len();
    let fs = tsp.sample_rate();
    let total = paths_per_frame.len() * period;
    let mut acc: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; total]);
    for (f, paths) in paths_per_frame.iter().enumerate() {
        let start = f * period;
        for p in paths {
            let lag = p.delay * fs;
            let d = [1.0, p.arrival_dir.x, p.arrival_dir.y, p.arrival_dir.z];
            for i in start..start + period {
                let v = p.gain * tsp.periodic_at(i as f64 - lag);
                for (ch, &k) in acc.iter_mut().zip(&d) {
                    ch[i] += v * k;
                }
            }
        }
    }
    if let Some(seed) = noise_seed {
        let std = scene.noise_std();
        if std > 0.0 {
            let normal = Normal::new(0.0, std).map_err(|e| Error::invalid(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for ch in acc.iter_mut() {
                for v in ch.iter_mut() {
                    *v += normal.sample(&mut rng);
                }
            }
        }
    }
    Ok(BFormat { sample_rate: fs.round() as u32, channels: acc.map(|ch| ch.into_iter().map(|v| v as f32).collect()) })
}

/// Renders one excitation period per pose.
pub fn render_bformat(scene: &Scene, tsp: &TspSignal, poses: &[PoseFrame], noise_seed: Option<u64>) -> Result<BFormat> {
    scene.validate()?;
    if poses.is_empty() {
        return Err(Error::invalid("pose sequence is empty; nothing to render"));
    }
    for (i, p) in poses.iter().enumerate() {
        if !p.joints().iter().all(|&j| {
            j.x >= 0.0 && j.y >= 0.0 && j.z >= 0.0 && j.x <= scene.room_dims.x && j.y <= scene.room_dims.y && j.z <= scene.room_dims.z
        }) {
            return Err(Error::invalid(format!("pose {i} leaves the room")));
        }
    }
    let paths: Vec<Vec<ScatterPath>> = poses.iter().map(|p| enumerate_paths(scene, Some(p))).collect();
    render_paths(scene, tsp, &paths, noise_seed)
}

/// Renders `n_frames` periods of the room with nobody in it.
pub fn render_empty_room(scene: &Scene, tsp: &TspSignal, n_frames: usize, noise_seed: Option<u64>) -> Result<BFormat> {
    scene.validate()?;
    let paths = vec![enumerate_paths(scene, None); n_frames];
    render_paths(scene, tsp, &paths, noise_seed)
}
