//! 21-joint skeleton, its bone topology, and the keyframe poses motions are built from.

use crate::error::{Error, Result};
use crate::geom::Vec3;

pub const NUM_JOINTS: usize = 21;

/// Joint order used throughout: pose files, model outputs and metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(usize)]
pub enum Joint {
    Head,
    Neck,
    LeftShoulder,
    RightShoulder,
    LeftArm,
    RightArm,
    LeftForearm,
    RightForearm,
    LeftHand,
    RightHand,
    Waist,
    LeftThigh,
    RightThigh,
    LeftShin,
    RightShin,
    LeftFoot,
    RightFoot,
    LeftToe,
    RightToe,
    Hip,
    Spine,
}

impl Joint {
    pub const ALL: [Joint; NUM_JOINTS] = [
        Joint::Head,
        Joint::Neck,
        Joint::LeftShoulder,
        Joint::RightShoulder,
        Joint::LeftArm,
        Joint::RightArm,
        Joint::LeftForearm,
        Joint::RightForearm,
        Joint::LeftHand,
        Joint::RightHand,
        Joint::Waist,
        Joint::LeftThigh,
        Joint::RightThigh,
        Joint::LeftShin,
        Joint::RightShin,
        Joint::LeftFoot,
        Joint::RightFoot,
        Joint::LeftToe,
        Joint::RightToe,
        Joint::Hip,
        Joint::Spine,
    ];

    pub fn idx(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Joint::Head => "head",
            Joint::Neck => "neck",
            Joint::LeftShoulder => "left_shoulder",
            Joint::RightShoulder => "right_shoulder",
            Joint::LeftArm => "left_arm",
            Joint::RightArm => "right_arm",
            Joint::LeftForearm => "left_forearm",
            Joint::RightForearm => "right_forearm",
            Joint::LeftHand => "left_hand",
            Joint::RightHand => "right_hand",
            Joint::Waist => "waist",
            Joint::LeftThigh => "left_thigh",
            Joint::RightThigh => "right_thigh",
            Joint::LeftShin => "left_shin",
            Joint::RightShin => "right_shin",
            Joint::LeftFoot => "left_foot",
            Joint::RightFoot => "right_foot",
            Joint::LeftToe => "left_toe",
            Joint::RightToe => "right_toe",
            Joint::Hip => "hip",
            Joint::Spine => "spine",
        }
    }

    /// Left/right counterpart (self for midline joints).
    pub fn mirror(self) -> Joint {
        use Joint::*;
        match self {
            LeftShoulder => RightShoulder,
            RightShoulder => LeftShoulder,
            LeftArm => RightArm,
            RightArm => LeftArm,
            LeftForearm => RightForearm,
            RightForearm => LeftForearm,
            LeftHand => RightHand,
            RightHand => LeftHand,
            LeftThigh => RightThigh,
            RightThigh => LeftThigh,
            LeftShin => RightShin,
            RightShin => LeftShin,
            LeftFoot => RightFoot,
            RightFoot => LeftFoot,
            LeftToe => RightToe,
            RightToe => LeftToe,
            other => other,
        }
    }
}

/// Connected joint pairs; each is a capsule for occlusion and a stick in plots.
pub const BONES: [(Joint, Joint); 20] = {
    use Joint::*;
    [
        (Head, Neck),
        (Neck, Spine),
        (Spine, Waist),
        (Waist, Hip),
        (Neck, LeftShoulder),
        (Neck, RightShoulder),
        (LeftShoulder, LeftArm),
        (LeftArm, LeftForearm),
        (LeftForearm, LeftHand),
        (RightShoulder, RightArm),
        (RightArm, RightForearm),
        (RightForearm, RightHand),
        (Hip, LeftThigh),
        (LeftThigh, LeftShin),
        (LeftShin, LeftFoot),
        (LeftFoot, LeftToe),
        (Hip, RightThigh),
        (RightThigh, RightShin),
        (RightShin, RightFoot),
        (RightFoot, RightToe),
    ]
};

/// One body pose: 21 joints in meters, room frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseFrame {
    joints: [Vec3; NUM_JOINTS],
}

impl PoseFrame {
    pub fn new(joints: [Vec3; NUM_JOINTS]) -> Self {
        Self { joints }
    }

    /// From 63 coordinates in joint-major `x, y, z` order.
    pub fn from_flat(values: &[f64]) -> Result<Self> {
        if values.len() != NUM_JOINTS * 3 {
            return Err(Error::format(format!("pose needs {} coordinates, got {}", NUM_JOINTS * 3, values.len())));
        }
        let mut joints = [Vec3::ZERO; NUM_JOINTS];
        for (j, c) in values.chunks_exact(3).enumerate() {
            joints[j] = Vec3::new(c[0], c[1], c[2]);
        }
        Ok(Self { joints })
    }

    pub fn joints(&self) -> &[Vec3; NUM_JOINTS] {
        &self.joints
    }

    pub fn joint(&self, j: Joint) -> Vec3 {
        self.joints[j.idx()]
    }

    pub fn to_flat(&self) -> [f64; NUM_JOINTS * 3] {
        let mut out = [0.0; NUM_JOINTS * 3];
        for (j, p) in self.joints.iter().enumerate() {
            out[3 * j..3 * j + 3].copy_from_slice(&p.to_array());
        }
        out
    }

    pub fn translated(&self, offset: Vec3) -> Self {
        Self { joints: self.joints.map(|p| p + offset) }
    }

    pub fn lerp(&self, other: &PoseFrame, t: f64) -> Self {
        let mut joints = self.joints;
        for (a, b) in joints.iter_mut().zip(other.joints.iter()) {
            *a = a.lerp(*b, t);
        }
        Self { joints }
    }

    /// Largest per-joint displacement between two poses.
    pub fn max_displacement(&self, other: &PoseFrame) -> f64 {
        self.joints.iter().zip(other.joints.iter()).map(|(a, b)| a.dist(*b)).fold(0.0, f64::max)
    }
}

/// Body-local keyframe: x lateral (subject's right), y forward, z up, feet on z = 0.
pub(crate) type LocalPose = [Vec3; NUM_JOINTS];

pub(crate) const UPPER_ARM: f64 = 0.28;
pub(crate) const FOREARM: f64 = 0.25;
const HAND: f64 = 0.08;
const SHOULDER_Z: f64 = 1.45;
const SHOULDER_X: f64 = 0.19;

fn sided(pose: &mut LocalPose, left: Joint, p: Vec3) {
    pose[left.idx()] = p;
    pose[left.mirror().idx()] = Vec3::new(-p.x, p.y, p.z);
}

pub(crate) fn standing() -> LocalPose {
    use Joint::*;
    let mut p = [Vec3::ZERO; NUM_JOINTS];
    p[Head.idx()] = Vec3::new(0.0, 0.02, 1.65);
    p[Neck.idx()] = Vec3::new(0.0, 0.0, 1.50);
    p[Spine.idx()] = Vec3::new(0.0, 0.0, 1.30);
    p[Waist.idx()] = Vec3::new(0.0, 0.0, 1.08);
    p[Hip.idx()] = Vec3::new(0.0, 0.0, 0.95);
    sided(&mut p, LeftShoulder, Vec3::new(-SHOULDER_X, 0.0, SHOULDER_Z));
    sided(&mut p, LeftArm, Vec3::new(-0.22, 0.0, SHOULDER_Z - UPPER_ARM));
    sided(&mut p, LeftForearm, Vec3::new(-0.23, 0.02, SHOULDER_Z - UPPER_ARM - FOREARM));
    sided(&mut p, LeftHand, Vec3::new(-0.23, 0.03, SHOULDER_Z - UPPER_ARM - FOREARM - HAND));
    sided(&mut p, LeftThigh, Vec3::new(-0.10, 0.0, 0.92));
    sided(&mut p, LeftShin, Vec3::new(-0.10, 0.01, 0.50));
    sided(&mut p, LeftFoot, Vec3::new(-0.10, 0.0, 0.08));
    sided(&mut p, LeftToe, Vec3::new(-0.10, 0.15, 0.02));
    p
}

pub(crate) fn t_pose() -> LocalPose {
    use Joint::*;
    let mut p = standing();
    sided(&mut p, LeftArm, Vec3::new(-SHOULDER_X - UPPER_ARM, 0.0, SHOULDER_Z));
    sided(&mut p, LeftForearm, Vec3::new(-SHOULDER_X - UPPER_ARM - FOREARM, 0.0, SHOULDER_Z));
    sided(&mut p, LeftHand, Vec3::new(-SHOULDER_X - UPPER_ARM - FOREARM - HAND, 0.0, SHOULDER_Z));
    p
}

pub(crate) fn squat() -> LocalPose {
    use Joint::*;
    let mut p = [Vec3::ZERO; NUM_JOINTS];
    p[Hip.idx()] = Vec3::new(0.0, -0.12, 0.58);
    p[Waist.idx()] = Vec3::new(0.0, -0.08, 0.71);
    p[Spine.idx()] = Vec3::new(0.0, 0.02, 0.92);
    p[Neck.idx()] = Vec3::new(0.0, 0.10, 1.10);
    p[Head.idx()] = Vec3::new(0.0, 0.15, 1.24);
    sided(&mut p, LeftShoulder, Vec3::new(-SHOULDER_X, 0.08, 1.05));
    sided(&mut p, LeftArm, Vec3::new(-0.21, 0.34, 1.02));
    sided(&mut p, LeftForearm, Vec3::new(-0.20, 0.58, 1.02));
    sided(&mut p, LeftHand, Vec3::new(-0.20, 0.66, 1.02));
    sided(&mut p, LeftThigh, Vec3::new(-0.11, -0.10, 0.56));
    sided(&mut p, LeftShin, Vec3::new(-0.14, 0.26, 0.48));
    sided(&mut p, LeftFoot, Vec3::new(-0.12, 0.0, 0.08));
    sided(&mut p, LeftToe, Vec3::new(-0.12, 0.15, 0.02));
    p
}

/// Rotation about the lateral axis through `pivot`; positive pitches forward (+y).
fn pitch(p: Vec3, pivot: Vec3, angle: f64) -> Vec3 {
    let d = p - pivot;
    let (s, c) = angle.sin_cos();
    pivot + Vec3::new(d.x, d.y * c + d.z * s, -d.y * s + d.z * c)
}

const UPPER_BODY: [Joint; 13] = {
    use Joint::*;
    [
        Head,
        Neck,
        Spine,
        Waist,
        LeftShoulder,
        RightShoulder,
        LeftArm,
        RightArm,
        LeftForearm,
        RightForearm,
        LeftHand,
        RightHand,
        Hip,
    ]
};

pub(crate) fn bow(angle: f64) -> LocalPose {
    let mut p = standing();
    let pivot = p[Joint::Hip.idx()];
    for j in UPPER_BODY {
        if j != Joint::Hip {
            p[j.idx()] = pitch(p[j.idx()], pivot, angle);
        }
    }
    p
}

/// Walking-in-place keyframe; `phase` in [0, 1) over one stride.
pub(crate) fn walk(phase: f64) -> LocalPose {
    use Joint::*;
    let mut p = standing();
    let swing = 0.35 * (2.0 * std::f64::consts::PI * phase).sin();
    let lift = 0.06 * (2.0 * std::f64::consts::PI * phase).cos().max(0.0);
    for (thigh, leg, sign) in [(LeftThigh, [LeftShin, LeftFoot, LeftToe], 1.0), (RightThigh, [RightShin, RightFoot, RightToe], -1.0)] {
        let pivot = p[thigh.idx()];
        for j in leg {
            p[j.idx()] = pitch(p[j.idx()], pivot, sign * swing);
            if sign > 0.0 {
                p[j.idx()].z += lift;
            }
        }
    }
    let base_z = [LeftToe, RightToe].iter().map(|j| p[j.idx()].z).fold(f64::INFINITY, f64::min) - 0.02;
    if base_z < 0.0 {
        for v in p.iter_mut() {
            v.z -= base_z;
        }
    }
    for (shoulder, arm, sign) in [(LeftShoulder, [LeftArm, LeftForearm, LeftHand], -1.0), (RightShoulder, [RightArm, RightForearm, RightHand], 1.0)] {
        let pivot = p[shoulder.idx()];
        for j in arm {
            p[j.idx()] = pitch(p[j.idx()], pivot, sign * 0.8 * swing);
        }
    }
    p
}
