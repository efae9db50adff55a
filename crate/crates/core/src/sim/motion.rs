//! Scripted motion: keyframe timelines interpolated into smooth 21-joint trajectories.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::body::{self, LocalPose, PoseFrame, NUM_JOINTS};
use crate::error::{Error, Result};
use crate::geom::Vec3;

/// Movement vocabulary of the recording sessions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Motion {
    Standing,
    Walking,
    Squatting,
    Bowing,
    TPose,
}

impl Motion {
    pub const ALL: [Motion; 5] = [Motion::Walking, Motion::Squatting, Motion::Bowing, Motion::Standing, Motion::TPose];

    pub fn name(self) -> &'static str {
        match self {
            Motion::Standing => "standing",
            Motion::Walking => "walking",
            Motion::Squatting => "squatting",
            Motion::Bowing => "bowing",
            Motion::TPose => "t_pose",
        }
    }

    /// Keyframes as `(seconds after the previous keyframe, pose)`.
    fn segment(self) -> Vec<(f64, LocalPose)> {
        match self {
            Motion::Standing => vec![(1.0, body::standing()), (2.0, body::standing())],
            Motion::Walking => {
                let mut k = vec![(1.0, body::walk(0.0))];
                for step in 1..=8 {
                    k.push((0.3, body::walk((step % 4) as f64 / 4.0)));
                }
                k.push((0.8, body::standing()));
                k
            }
            Motion::Squatting => vec![(1.0, body::standing()), (1.2, body::squat()), (0.6, body::squat()), (1.2, body::standing())],
            Motion::Bowing => vec![(1.0, body::standing()), (1.2, body::bow(1.0)), (0.5, body::bow(1.0)), (1.2, body::standing())],
            Motion::TPose => vec![(1.0, body::standing()), (1.2, body::t_pose()), (1.0, body::t_pose()), (1.2, body::standing())],
        }
    }
}

impl FromStr for Motion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Motion::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown motion {s:?}")))
    }
}

/// Per-subject body and timing variation.
#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub id: u16,
    /// Uniform limb-length scale in [0.9, 1.1].
    pub scale: f64,
    /// Playback-speed factor in [0.9, 1.1].
    pub tempo: f64,
    /// Amplitude of the slow postural sway, meters.
    pub sway: f64,
    sway_phase: [f64; 2],
}

impl Subject {
    pub fn from_seed(id: u16, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x5eed_0000 + id as u64));
        Self {
            id,
            scale: rng.gen_range(0.9..=1.1),
            tempo: rng.gen_range(0.9..=1.1),
            sway: SWAY_AMPLITUDE,
            sway_phase: [rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI)],
        }
    }

    /// Unscaled reference body, no sway.
    pub fn nominal(id: u16) -> Self {
        Self { id, scale: 1.0, tempo: 1.0, sway: 0.0, sway_phase: [0.0; 2] }
    }
}

/// Where the body stands: floor point on the speaker-mic line, the body's lateral
/// axis (along the line) and the horizontal direction away from the line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub origin: Vec3,
    pub lateral: Vec3,
    pub away: Vec3,
}

impl Placement {
    fn to_room(&self, local: Vec3, offset_m: f64) -> Vec3 {
        self.origin + self.away * (offset_m + local.y) + self.lateral * local.x + Vec3::new(0.0, 0.0, local.z)
    }
}

const SWAY_AMPLITUDE: f64 = 0.004;

fn hermite(p0: Vec3, p1: Vec3, m0: Vec3, m1: Vec3, h: f64, s: f64) -> Vec3 {
    let s2 = s * s;
    let s3 = s2 * s;
    // written relative to p0 so a held keyframe reproduces p0 exactly
    p0 + (p1 - p0) * (3.0 * s2 - 2.0 * s3) + m0 * (h * (s3 - 2.0 * s2 + s)) + m1 * (h * (s3 - s2))
}

/// Smooth trajectories cycling through the keyframes of `script`, offset
/// `stand_distance_cm` away from the speaker-mic line.
pub fn pose_sequencer(
    script: &[Motion],
    fps: f64,
    stand_distance_cm: f64,
    duration_s: f64,
    subject: &Subject,
    placement: &Placement,
) -> Result<Vec<PoseFrame>> {
    if script.is_empty() {
        return Err(Error::invalid("motion script is empty"));
    }
    if fps.is_nan() || fps <= 0.0 {
        return Err(Error::invalid("fps must be positive"));
    }
    if duration_s.is_nan() || duration_s <= 0.0 {
        return Err(Error::invalid("duration must be positive"));
    }
    if stand_distance_cm.is_nan() || stand_distance_cm < 0.0 {
        return Err(Error::invalid("stand distance must be non-negative"));
    }

    // timeline long enough to cover the duration plus one spare keyframe
    let mut times = vec![0.0];
    let mut keys: Vec<LocalPose> = vec![body::standing()];
    let mut t = 0.0;
    'fill: loop {
        for m in script {
            for (dt, pose) in m.segment() {
                t += dt / subject.tempo;
                times.push(t);
                keys.push(pose);
                if t > duration_s + 1.0 {
                    break 'fill;
                }
            }
        }
    }

    let tangent = |i: usize, j: usize| -> Vec3 {
        let lo = i.saturating_sub(1);
        let hi = (i + 1).min(times.len() - 1);
        (keys[hi][j] - keys[lo][j]) * (1.0 / (times[hi] - times[lo]))
    };

    let n_frames = (duration_s * fps + 1e-9).floor() as usize;
    let offset_m = stand_distance_cm / 100.0;
    let mut out = Vec::with_capacity(n_frames);
    let mut seg = 0;
    for f in 0..n_frames {
        let t = f as f64 / fps;
        while times[seg + 1] < t {
            seg += 1;
        }
        let h = times[seg + 1] - times[seg];
        let s = (t - times[seg]) / h;
        let sway = Vec3::new(
            subject.sway * (2.0 * PI * 0.23 * t + subject.sway_phase[0]).sin(),
            subject.sway * (2.0 * PI * 0.17 * t + subject.sway_phase[1]).sin(),
            0.0,
        );
        let mut joints = [Vec3::ZERO; NUM_JOINTS];
        for (j, out_j) in joints.iter_mut().enumerate() {
            let local = hermite(keys[seg][j], keys[seg + 1][j], tangent(seg, j), tangent(seg + 1, j), h, s) * subject.scale;
            *out_j = placement.to_room(local, offset_m) + sway;
        }
        out.push(PoseFrame::new(joints));
    }
    Ok(out)
}

/// Parses a comma-separated motion list.
pub fn parse_script(s: &str) -> Result<Vec<Motion>> {
    s.split(',').map(str::trim).filter(|m| !m.is_empty()).map(Motion::from_str).collect()
}
