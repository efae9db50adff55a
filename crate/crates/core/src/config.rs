//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::geom::Vec3;
use crate::model::{LossWeights, ModelConfig, WindowSpec};
use crate::sim::{parse_script, Motion, Scene};

/// Every tunable of the synth/train/eval pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sample_rate: u32,
    pub period_len: usize,
    pub f_lo: f64,
    pub f_hi: f64,
    pub b: usize,
    pub n_fft: usize,
    pub n: usize,
    pub k: usize,
    pub w_alpha: f64,
    pub w_beta: f64,
    pub w_gamma: f64,
    pub lr: f64,
    pub lr_disc: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Caps the number of training steps; 0 means no cap.
    pub max_steps: usize,
    pub seed: u64,
    pub alphas: Vec<f64>,
    pub subjects: u16,
    pub distances: Vec<f64>,
    pub duration_s: f64,
    pub motions: Vec<Motion>,
    pub held_out: u16,
    pub scene: Scene,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16000,
            period_len: 600,
            f_lo: 100.0,
            f_hi: 7600.0,
            b: 64,
            n_fft: 512,
            n: 8,
            k: 16,
            w_alpha: 1.0,
            w_beta: 10.0,
            w_gamma: 1.0,
            lr: 1e-3,
            lr_disc: 1e-3,
            batch_size: 16,
            epochs: 2,
            max_steps: 0,
            seed: 0,
            alphas: vec![1.0 / 3.0, 2.0 / 3.0],
            subjects: 5,
            distances: vec![0.0, 25.0, 50.0, 75.0, 100.0],
            duration_s: 60.0,
            motions: vec![Motion::Walking, Motion::Squatting, Motion::Bowing, Motion::Standing, Motion::TPose],
            held_out: 1,
            scene: Scene::default(),
            data_dir: PathBuf::from("corpus"),
            out_dir: PathBuf::from("runs"),
        }
    }
}

fn parse_list(v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_fraction(s))
        .collect()
}

/// Accepts decimals and `p/q` fractions.
fn parse_fraction(s: &str) -> Result<f64> {
    let bad = || Error::invalid(format!("{s:?} is not a number"));
    match s.split_once('/') {
        Some((p, q)) => {
            let (p, q) = (p.trim().parse::<f64>().map_err(|_| bad())?, q.trim().parse::<f64>().map_err(|_| bad())?);
            if q == 0.0 {
                return Err(bad());
            }
            Ok(p / q)
        }
        None => s.parse().map_err(|_| bad()),
    }
}

fn parse_vec3(v: &str) -> Result<Vec3> {
    match parse_list(v)?.as_slice() {
        [x, y, z] => Ok(Vec3::new(*x, *y, *z)),
        _ => Err(Error::invalid(format!("{v:?} is not an x,y,z triple"))),
    }
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn fmt_vec3(v: Vec3) -> String {
    fmt_list(&v.to_array())
}

impl RunConfig {
    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let num = |s: &str| -> Result<f64> { parse_fraction(s) };
        let int = |s: &str| -> Result<u64> { s.parse().map_err(|_| Error::invalid(format!("{key} = {s:?} is not a non-negative integer"))) };
        match key {
            "sample_rate" => self.sample_rate = int(v)? as u32,
            "period_len" => self.period_len = int(v)? as usize,
            "f_lo" => self.f_lo = num(v)?,
            "f_hi" => self.f_hi = num(v)?,
            "b" => self.b = int(v)? as usize,
            "n_fft" => self.n_fft = int(v)? as usize,
            "n" => self.n = int(v)? as usize,
            "k" => self.k = int(v)? as usize,
            "w_alpha" | "walpha" => self.w_alpha = num(v)?,
            "w_beta" | "wbeta" => self.w_beta = num(v)?,
            "w_gamma" | "wgamma" => self.w_gamma = num(v)?,
            "lr" => self.lr = num(v)?,
            "lr_disc" => self.lr_disc = num(v)?,
            "batch_size" => self.batch_size = int(v)? as usize,
            "epochs" => self.epochs = int(v)? as usize,
            "max_steps" => self.max_steps = int(v)? as usize,
            "seed" => self.seed = int(v)?,
            "alphas" => self.alphas = parse_list(v)?,
            "subjects" => self.subjects = u16::try_from(int(v)?).map_err(|_| Error::invalid("too many subjects"))?,
            "distances" => self.distances = parse_list(v)?,
            "duration_s" => self.duration_s = num(v)?,
            "motions" => self.motions = parse_script(v)?,
            "held_out" => self.held_out = u16::try_from(int(v)?).map_err(|_| Error::invalid("subject id out of range"))?,
            "room_dims" => self.scene.room_dims = parse_vec3(v)?,
            "speaker_pos" => self.scene.speaker_pos = parse_vec3(v)?,
            "mic_pos" => self.scene.mic_pos = parse_vec3(v)?,
            "wall_reflectance" => self.scene.wall_reflectance = num(v)?,
            "scatter_gain" => self.scene.scatter_gain = num(v)?,
            "occlusion_radius" => self.scene.occlusion_radius = num(v)?,
            "occlusion_sigma" => self.scene.occlusion_sigma = num(v)?,
            "noise_snr_db" => self.scene.noise_snr_db = num(v)?,
            "speed_of_sound" => self.scene.speed_of_sound = num(v)?,
            "data_dir" => self.data_dir = PathBuf::from(v),
            "out_dir" => self.out_dir = PathBuf::from(v),
            _ => return Err(Error::invalid(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::invalid(format!("config line {}: expected key = value", i + 1)))?;
            self.set(k.trim(), v).map_err(|e| Error::invalid(format!("config line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(&std::fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    /// Canonical text form; parsing it reproduces `self`.
    pub fn to_text(&self) -> String {
        let s = &self.scene;
        let motions = self.motions.iter().map(|m| m.name()).collect::<Vec<_>>().join(",");
        let pairs: Vec<(&str, String)> = vec![
            ("sample_rate", self.sample_rate.to_string()),
            ("period_len", self.period_len.to_string()),
            ("f_lo", self.f_lo.to_string()),
            ("f_hi", self.f_hi.to_string()),
            ("b", self.b.to_string()),
            ("n_fft", self.n_fft.to_string()),
            ("n", self.n.to_string()),
            ("k", self.k.to_string()),
            ("w_alpha", self.w_alpha.to_string()),
            ("w_beta", self.w_beta.to_string()),
            ("w_gamma", self.w_gamma.to_string()),
            ("lr", self.lr.to_string()),
            ("lr_disc", self.lr_disc.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("max_steps", self.max_steps.to_string()),
            ("seed", self.seed.to_string()),
            ("alphas", fmt_list(&self.alphas)),
            ("subjects", self.subjects.to_string()),
            ("distances", fmt_list(&self.distances)),
            ("duration_s", self.duration_s.to_string()),
            ("motions", motions),
            ("held_out", self.held_out.to_string()),
            ("room_dims", fmt_vec3(s.room_dims)),
            ("speaker_pos", fmt_vec3(s.speaker_pos)),
            ("mic_pos", fmt_vec3(s.mic_pos)),
            ("wall_reflectance", s.wall_reflectance.to_string()),
            ("scatter_gain", s.scatter_gain.to_string()),
            ("occlusion_radius", s.occlusion_radius.to_string()),
            ("occlusion_sigma", s.occlusion_sigma.to_string()),
            ("noise_snr_db", s.noise_snr_db.to_string()),
            ("speed_of_sound", s.speed_of_sound.to_string()),
            ("data_dir", self.data_dir.display().to_string()),
            ("out_dir", self.out_dir.display().to_string()),
        ];
        let mut out = String::new();
        for (k, v) in pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.period_len == 0 || self.sample_rate == 0 {
            return Err(Error::invalid("sample_rate and period_len must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        if !(self.lr >= 0.0 && self.lr_disc >= 0.0) {
            return Err(Error::invalid("learning rates must be non-negative"));
        }
        if self.subjects == 0 {
            return Err(Error::invalid("need at least one subject"));
        }
        if self.distances.iter().any(|d| !(0.0..=100.0).contains(d)) || self.distances.is_empty() {
            return Err(Error::invalid("distances must be listed and lie in [0, 100] cm"));
        }
        if self.motions.is_empty() {
            return Err(Error::invalid("motion script is empty"));
        }
        if self.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(Error::invalid("alphas must lie strictly between 0 and 1"));
        }
        self.loss_weights().validate()?;
        self.model_config().validate()?;
        self.scene.validate()
    }

    pub fn fps(&self) -> f64 {
        self.sample_rate as f64 / self.period_len as f64
    }

    pub fn window(&self) -> WindowSpec {
        WindowSpec { n: self.n, k: self.k }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights { w_alpha: self.w_alpha, w_beta: self.w_beta, w_gamma: self.w_gamma }
    }

    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig { b: self.b, n_fft: self.n_fft, f_lo: self.f_lo, f_hi: self.f_hi }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig::new(self.b, self.window())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_the_reference_hyperparameters() {
        let c = RunConfig::default();
        assert_eq!((c.n, c.k), (8, 16));
        assert_eq!((c.w_alpha, c.w_beta, c.w_gamma), (1.0, 10.0, 1.0));
        assert_eq!(c.alphas, vec![1.0 / 3.0, 2.0 / 3.0]);
        c.validate().unwrap();
    }

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        c.apply_text("k = 0 # no prior\nalphas =\nmotions = walking, t_pose\nmic_pos = 5,4.5,1.3\n").unwrap();
        assert_eq!(c.k, 0);
        assert!(c.alphas.is_empty());
        let mut d = RunConfig::default();
        d.apply_text(&c.to_text()).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn fractions_and_errors() {
        let mut c = RunConfig::default();
        c.set("alphas", "1/3, 2/3").unwrap();
        assert_eq!(c.alphas, vec![1.0 / 3.0, 2.0 / 3.0]);
        assert!(c.set("nope", "1").is_err());
        assert!(c.set("n", "-1").is_err());
        assert!(c.apply_text("just words").is_err());
        c.set("alphas", "1.5").unwrap();
        assert!(c.validate().is_err());
    }
}
