//! Pose estimator, position discriminator, their losses and the adversarial
//! training step.
//!
//! The estimator reads `n + k` consecutive feature frames as a 7-channel
//! image (time x mel), collapses the mel axis with a small 2D conv stack,
//! then a temporal projection maps each of the last `n` frames together
//! with its `k` predecessors to one pose. The discriminator is a single
//! dense layer on the time-averaged 2D features and guesses where the
//! subject stands; the estimator is rewarded for keeping it uncertain.

use echopose_autodiff::{clip_global_norm, AdamState, Graph, ParamSet, Real, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::sim::NUM_JOINTS;

/// Standing-distance anchors of the discriminator classes, cm.
pub const ANCHORS_CM: [f64; 5] = [0.0, 25.0, 50.0, 75.0, 100.0];
pub const POSE_DIM: usize = NUM_JOINTS * 3;
/// Probability floor inside the discriminator cross-entropy.
pub const CE_EPS: f64 = 1e-12;
pub const CLIP_NORM: f64 = 5.0;
const LEAKY_SLOPE: f64 = 0.1;

/// `n` poses are estimated per window from `n + k` frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub n: usize,
    pub k: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { n: 8, k: 16 }
    }
}

impl WindowSpec {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("window must produce at least one pose (n >= 1)"));
        }
        Ok(Self { n, k })
    }

    pub fn len(&self) -> usize {
        self.n + self.k
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub w_alpha: f64,
    pub w_beta: f64,
    pub w_gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { w_alpha: 1.0, w_beta: 10.0, w_gamma: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.w_alpha, self.w_beta, self.w_gamma].iter().any(|w| w.is_nan() || *w < 0.0) {
            return Err(Error::invalid("loss weights must be non-negative"));
        }
        Ok(())
    }
}

/// Distribution over [`ANCHORS_CM`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftPositionLabel {
    pub probs: [f64; 5],
}

/// Linear interpolation between the two anchors around `distance_cm`, clamped to the anchor range.
pub fn soft_label(distance_cm: f64) -> SoftPositionLabel {
    let d = distance_cm.clamp(ANCHORS_CM[0], ANCHORS_CM[4]);
    let mut probs = [0.0; 5];
    let step = ANCHORS_CM[1] - ANCHORS_CM[0];
    let pos = (d - ANCHORS_CM[0]) / step;
    let lo = (pos.floor() as usize).min(3);
    let frac = pos - lo as f64;
    probs[lo] = 1.0 - frac;
    probs[lo + 1] += frac;
    SoftPositionLabel { probs }
}

/// Architecture sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub b: usize,
    pub window: WindowSpec,
    /// Output channels of the four 3x3 conv layers.
    pub conv_channels: [usize; 4],
    /// Width of the temporal projection and hidden temporal layers.
    pub proj_channels: usize,
    pub temporal_channels: usize,
    pub temporal_kernel: usize,
}

impl ModelConfig {
    pub fn new(b: usize, window: WindowSpec) -> Self {
        Self { b, window, conv_channels: [32, 32, 64, 64], proj_channels: 64, temporal_channels: 128, temporal_kernel: 5 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.b == 0 || self.b % 4 != 0 {
            return Err(Error::invalid(format!("mel band count {} must be a positive multiple of 4", self.b)));
        }
        if self.temporal_kernel % 2 == 0 {
            return Err(Error::invalid("temporal kernel must be odd"));
        }
        WindowSpec::new(self.window.n, self.window.k)?;
        Ok(())
    }

    pub fn tap_dim(&self) -> usize {
        self.conv_channels[3]
    }
}

fn he_normal<T: Real>(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let std = (2.0 / ((1.0 + LEAKY_SLOPE * LEAKY_SLOPE) * fan_in as f64)).sqrt();
    let normal = Normal::new(0.0, std).expect("finite std");
    let numel = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..numel).map(|_| T::of(normal.sample(rng))).collect()).expect("sized")
}

/// The pose regressor `f`. Parameter order is fixed by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseEstimator<T: Real> {
    pub config: ModelConfig,
    pub params: ParamSet<T>,
}

/// Vars of one estimator forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    /// `N x n x 63`.
    pub poses: Var,
    /// `N x tap_dim`.
    pub tap: Var,
}

impl<T: Real> PoseEstimator<T> {
    /// Random initialization; the output bias starts at `mean_pose`.
    pub fn new(config: ModelConfig, mean_pose: &[f64], seed: u64) -> Result<Self> {
        config.validate()?;
        if mean_pose.len() != POSE_DIM {
            return Err(Error::invalid(format!("mean pose needs {POSE_DIM} values")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let mut c_in = 7;
        for (i, &c) in config.conv_channels.iter().enumerate() {
            params.insert(format!("conv{}.w", i + 1), he_normal(&[c, c_in, 3, 3], c_in * 9, &mut rng));
            params.insert(format!("conv{}.b", i + 1), Tensor::zeros(&[c]));
            c_in = c;
        }
        let kp = config.window.k + 1;
        params.insert("proj.w", he_normal(&[config.proj_channels, c_in, kp], c_in * kp, &mut rng));
        params.insert("proj.b", Tensor::zeros(&[config.proj_channels]));
        let (h, kt) = (config.temporal_channels, config.temporal_kernel);
        params.insert("temporal1.w", he_normal(&[h, config.proj_channels, kt], config.proj_channels * kt, &mut rng));
        params.insert("temporal1.b", Tensor::zeros(&[h]));
        params.insert("temporal2.w", he_normal(&[h, h, kt], h * kt, &mut rng));
        params.insert("temporal2.b", Tensor::zeros(&[h]));
        // small output weights: the first steps refine the mean pose instead of fighting noise
        let mut out_w: Tensor<T> = he_normal(&[POSE_DIM, h, kt], h * kt, &mut rng);
        out_w.data_mut().iter_mut().for_each(|v| *v *= T::of(0.1));
        params.insert("out.w", out_w);
        params.insert("out.b", Tensor::new(vec![POSE_DIM], mean_pose.iter().map(|&v| T::of(v)).collect())?);
        Ok(Self { config, params })
    }

    /// Rebuilds from named tensors, checking every shape against `config`.
    pub fn from_params(config: ModelConfig, params: ParamSet<T>) -> Result<Self> {
        let reference = PoseEstimator::<T>::new(config.clone(), &[0.0; POSE_DIM], 0)?;
        if reference.params.names() != params.names() {
            return Err(Error::format("estimator parameter names do not match the architecture"));
        }
        for ((name, a), (_, b)) in reference.params.iter().zip(params.iter()) {
            if a.shape() != b.shape() {
                return Err(Error::format(format!("parameter {name} has shape {:?}, expected {:?}", b.shape(), a.shape())));
            }
        }
        Ok(Self { config, params })
    }

    pub fn cast<U: Real>(&self) -> PoseEstimator<U> {
        PoseEstimator { config: self.config.clone(), params: self.params.cast() }
    }

    /// Records the forward pass of `x` (`N x 7 x (n+k) x b`) on `g` using bound parameter vars.
    pub fn forward(&self, g: &mut Graph<T>, vars: &[Var], x: Var) -> Result<Forward> {
        let shape = g.shape(x).to_vec();
        let w = self.config.window;
        if shape.len() != 4 || shape[1] != 7 || shape[2] != w.len() || shape[3] != self.config.b {
            return Err(Error::invalid(format!(
                "window tensor {shape:?} does not match N x 7 x {} x {}",
                w.len(),
                self.config.b
            )));
        }
        let p = |name: &str| vars[self.params.index_of(name).expect("known parameter")];
        let mut h = x;
        for i in 1..=4 {
            h = g.conv2d(h, p(&format!("conv{i}.w")), Some(p(&format!("conv{i}.b"))), 1, 1)?;
            h = g.leaky_relu(h, LEAKY_SLOPE);
            if i % 2 == 0 {
                h = g.avg_pool_last(h, 2)?;
            }
        }
        let per_frame = g.mean_axis(h, 3)?; // N x C x T
        let tap = g.mean_axis(per_frame, 2)?; // N x C
        let mut t = g.conv1d(per_frame, p("proj.w"), Some(p("proj.b")), 1, 0)?; // N x P x n
        t = g.leaky_relu(t, LEAKY_SLOPE);
        let pad = self.config.temporal_kernel / 2;
        for i in 1..=2 {
            t = g.conv1d(t, p(&format!("temporal{i}.w")), Some(p(&format!("temporal{i}.b"))), 1, pad)?;
            t = g.leaky_relu(t, LEAKY_SLOPE);
        }
        t = g.conv1d(t, p("out.w"), Some(p("out.b")), 1, pad)?; // N x 63 x n
        let poses = g.transpose12(t)?;
        Ok(Forward { poses, tap })
    }

    /// Plain inference: `N x n x 63` poses and `N x tap_dim` features.
    pub fn predict(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let mut g = Graph::new();
        let vars = self.params.bind(&mut g, false);
        let xv = g.constant(x.clone());
        let f = self.forward(&mut g, &vars, xv)?;
        Ok((g.value(f.poses).clone(), g.value(f.tap).clone()))
    }
}

/// One dense layer from the estimator tap to the anchor classes.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionDiscriminator<T: Real> {
    pub params: ParamSet<T>,
}

impl<T: Real> PositionDiscriminator<T> {
    pub fn new(tap_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd15c);
        let std = (1.0 / tap_dim as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        let mut params = ParamSet::new();
        params.insert(
            "disc.w",
            Tensor::new(vec![tap_dim, ANCHORS_CM.len()], (0..tap_dim * 5).map(|_| T::of(normal.sample(&mut rng))).collect()).expect("sized"),
        );
        params.insert("disc.b", Tensor::zeros(&[ANCHORS_CM.len()]));
        Self { params }
    }

    pub fn from_params(params: ParamSet<T>) -> Result<Self> {
        match (params.by_name("disc.w"), params.by_name("disc.b")) {
            (Some(w), Some(b)) if params.len() == 2 && w.ndim() == 2 && w.shape()[1] == 5 && b.shape() == [5] => Ok(Self { params }),
            _ => Err(Error::format("discriminator needs disc.w (D x 5) and disc.b (5)")),
        }
    }

    pub fn cast<U: Real>(&self) -> PositionDiscriminator<U> {
        PositionDiscriminator { params: self.params.cast() }
    }

    /// Softmax class probabilities, `N x 5`.
    pub fn forward(&self, g: &mut Graph<T>, vars: &[Var], tap: Var) -> Result<Var> {
        let logits = g.linear(tap, vars[0], Some(vars[1]))?;
        Ok(g.softmax(logits)?)
    }

    pub fn predict(&self, tap: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let vars = self.params.bind(&mut g, false);
        let t = g.constant(tap.clone());
        let p = self.forward(&mut g, &vars, t)?;
        Ok(g.value(p).clone())
    }
}

fn flatten_rows<T: Real>(g: &mut Graph<T>, x: Var) -> Result<Var> {
    let shape = g.shape(x).to_vec();
    let cols = *shape.last().expect("non-scalar");
    let rows = shape.iter().product::<usize>() / cols.max(1);
    Ok(g.reshape(x, &[rows, cols])?)
}

/// Mean Euclidean norm of per-frame 63-vector errors. Inputs `... x n x 63`.
pub fn pose_loss_var<T: Real>(g: &mut Graph<T>, pred: Var, gt: Var) -> Result<Var> {
    let d = g.sub(pred, gt)?;
    let rows = flatten_rows(g, d)?;
    let norms = g.norm_rows(rows)?;
    Ok(g.mean(norms)?)
}

/// Mean norm of velocity mismatches within each sequence along axis `time_axis`.
pub fn smooth_loss_var<T: Real>(g: &mut Graph<T>, pred: Var, gt: Var, time_axis: usize) -> Result<Var> {
    let dp = g.diff_axis(pred, time_axis)?;
    let dg = g.diff_axis(gt, time_axis)?;
    let d = g.sub(dp, dg)?;
    let rows = flatten_rows(g, d)?;
    let norms = g.norm_rows(rows)?;
    Ok(g.mean(norms)?)
}

/// Mean population standard deviation of the probability rows.
pub fn std_loss_var<T: Real>(g: &mut Graph<T>, probs: Var) -> Result<Var> {
    let s = g.std_rows(probs)?;
    Ok(g.mean(s)?)
}

fn pose_tensor(poses: &[Vec<f64>]) -> Result<Tensor<f64>> {
    if poses.is_empty() || poses.iter().any(|p| p.len() != POSE_DIM) {
        return Err(Error::invalid(format!("pose sequences must be non-empty lists of {POSE_DIM}-vectors")));
    }
    Ok(Tensor::new(vec![poses.len(), POSE_DIM], poses.concat())?)
}

/// `(1/T) sum_t ||pred_t - gt_t||` over flattened 63-vectors.
pub fn pose_loss(pred: &[Vec<f64>], gt: &[Vec<f64>]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::invalid("pose sequences differ in length"));
    }
    let mut g = Graph::new();
    let p = g.constant(pose_tensor(pred)?);
    let t = g.constant(pose_tensor(gt)?);
    let l = pose_loss_var(&mut g, p, t)?;
    Ok(g.value(l).item())
}

/// `(1/(T-1)) sum_t ||(pred_t - pred_{t-1}) - (gt_t - gt_{t-1})||`.
pub fn smooth_loss(pred: &[Vec<f64>], gt: &[Vec<f64>]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::invalid("pose sequences differ in length"));
    }
    if pred.len() < 2 {
        return Err(Error::invalid("smoothness needs at least two frames"));
    }
    let mut g = Graph::new();
    let p = g.constant(pose_tensor(pred)?);
    let t = g.constant(pose_tensor(gt)?);
    let l = smooth_loss_var(&mut g, p, t, 0)?;
    Ok(g.value(l).item())
}

/// Mean population std of discriminator output rows.
pub fn std_loss(probs: &[[f64; 5]]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::invalid("no probability rows"));
    }
    for r in probs {
        let s: f64 = r.iter().sum();
        if (s - 1.0).abs() > 1e-4 || r.iter().any(|&p| p < 0.0) {
            return Err(Error::invalid(format!("row {r:?} is not a probability vector")));
        }
    }
    let mut g = Graph::new();
    let p = g.constant(Tensor::new(vec![probs.len(), 5], probs.concat())?);
    let l = std_loss_var(&mut g, p)?;
    Ok(g.value(l).item())
}

pub fn total_loss(pose: f64, smooth: f64, std: f64, w: &LossWeights) -> f64 {
    w.w_alpha * pose + w.w_beta * smooth + w.w_gamma * std
}

/// `-sum target * ln(max(probs, eps))`.
pub fn discriminator_ce(probs: &[f64; 5], target: &SoftPositionLabel) -> f64 {
    probs.iter().zip(&target.probs).filter(|(_, &t)| t > 0.0).map(|(&p, &t)| -t * p.max(CE_EPS).ln()).sum()
}

/// Model inputs and targets for a batch of windows.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    /// `N x 7 x (n+k) x b`, already normalized.
    pub x: Tensor<T>,
    /// `N x n x 63`.
    pub y: Tensor<T>,
    /// `N x 5` soft position labels.
    pub labels: Tensor<T>,
}

impl<T: Real> Batch<T> {
    pub fn len(&self) -> usize {
        self.x.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Loss values of one training step, in CSV column order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossReport {
    pub step: usize,
    pub l_pose: f64,
    pub l_smooth: f64,
    pub l_std: f64,
    pub l_disc_ce: f64,
    pub total: f64,
}

impl LossReport {
    pub const CSV_HEADER: &'static str = "step,l_pose,l_smooth,l_std,l_disc_ce,total";

    pub fn csv_line(&self) -> String {
        format!("{},{},{},{},{},{}", self.step, self.l_pose, self.l_smooth, self.l_std, self.l_disc_ce, self.total)
    }

    pub fn parse_csv_line(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 6 {
            return Err(Error::format(format!("loss line {line:?} does not have 6 fields")));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::format(format!("bad number {s:?} in loss CSV")));
        Ok(Self {
            step: f[0].parse().map_err(|_| Error::format(format!("bad step {:?}", f[0])))?,
            l_pose: num(f[1])?,
            l_smooth: num(f[2])?,
            l_std: num(f[3])?,
            l_disc_ce: num(f[4])?,
            total: num(f[5])?,
        })
    }
}

/// Estimator, discriminator and their optimizer states.
#[derive(Debug, Clone)]
pub struct Trainer<T: Real> {
    pub estimator: PoseEstimator<T>,
    pub discriminator: PositionDiscriminator<T>,
    pub adam_est: AdamState<T>,
    pub adam_disc: AdamState<T>,
    pub weights: LossWeights,
    pub steps: usize,
}

impl<T: Real> Trainer<T> {
    pub fn new(estimator: PoseEstimator<T>, discriminator: PositionDiscriminator<T>, lr_est: f64, lr_disc: f64, weights: LossWeights) -> Self {
        let adam_est = AdamState::new(&estimator.params, lr_est);
        let adam_disc = AdamState::new(&discriminator.params, lr_disc);
        Self { estimator, discriminator, adam_est, adam_disc, weights, steps: 0 }
    }

    /// One adversarial round: discriminator update, then estimator update.
    ///
    /// The estimator forward is recorded once. Its tap values, which do not
    /// depend on the discriminator, serve as detached inputs for the
    /// discriminator update; the estimator loss then uses the updated
    /// discriminator as constants.
    pub fn train_step(&mut self, batch: &Batch<T>) -> Result<LossReport> {
        self.weights.validate()?;
        let mut g = Graph::new();
        let est_vars = self.estimator.params.bind(&mut g, true);
        let x = g.constant(batch.x.clone());
        let fwd = self.estimator.forward(&mut g, &est_vars, x)?;
        let tap_value = g.value(fwd.tap).clone();

        // phase A: discriminator on detached features
        let l_disc_ce = {
            let mut gd = Graph::new();
            let dv = self.discriminator.params.bind(&mut gd, true);
            let tap = gd.constant(tap_value);
            let probs = self.discriminator.forward(&mut gd, &dv, tap)?;
            let ce = gd.cross_entropy(probs, &batch.labels, CE_EPS)?;
            let value = gd.value(ce).item().as_f64();
            if !value.is_finite() {
                return Err(Error::Numeric(format!("discriminator loss is {value} at step {}", self.steps)));
            }
            let mut grads = gd.backward(ce)?;
            let mut gs: Vec<Vec<T>> = dv.iter().map(|&v| grads.take(v).expect("trainable")).collect();
            clip_global_norm(&mut gs, CLIP_NORM);
            self.adam_disc.step(&mut self.discriminator.params, &gs)?;
            value
        };

        // phase B: estimator against the frozen, updated discriminator
        let y = g.constant(batch.y.clone());
        let l_pose = pose_loss_var(&mut g, fwd.poses, y)?;
        let mut total = g.scale(l_pose, self.weights.w_alpha);
        let l_smooth = if self.estimator.config.window.n >= 2 {
            let s = smooth_loss_var(&mut g, fwd.poses, y, 1)?;
            let ws = g.scale(s, self.weights.w_beta);
            total = g.add(total, ws)?;
            g.value(s).item().as_f64()
        } else {
            0.0
        };
        let l_std = if self.weights.w_gamma > 0.0 {
            let dv = self.discriminator.params.bind(&mut g, false);
            let probs = self.discriminator.forward(&mut g, &dv, fwd.tap)?;
            let s = std_loss_var(&mut g, probs)?;
            let ws = g.scale(s, self.weights.w_gamma);
            total = g.add(total, ws)?;
            g.value(s).item().as_f64()
        } else {
            // reported only; the estimator gradient never touches the discriminator
            let probs = self.discriminator.predict(g.value(fwd.tap))?;
            let mut gs = Graph::new();
            let p = gs.constant(probs);
            let s = std_loss_var(&mut gs, p)?;
            gs.value(s).item().as_f64()
        };
        let report = LossReport {
            step: self.steps,
            l_pose: g.value(l_pose).item().as_f64(),
            l_smooth,
            l_std,
            l_disc_ce,
            total: g.value(total).item().as_f64(),
        };
        if !report.total.is_finite() {
            return Err(Error::Numeric(format!("estimator loss is {} at step {}", report.total, self.steps)));
        }
        let mut grads = g.backward(total)?;
        let mut gs: Vec<Vec<T>> = est_vars
            .iter()
            .zip(self.estimator.params.iter())
            .map(|(&v, (_, t))| grads.take(v).unwrap_or_else(|| vec![T::zero(); t.numel()]))
            .collect();
        let norm = clip_global_norm(&mut gs, CLIP_NORM);
        if !norm.is_finite() {
            return Err(Error::Numeric(format!("gradient norm is {norm} at step {}", self.steps)));
        }
        self.adam_est.step(&mut self.estimator.params, &gs)?;
        self.steps += 1;
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_labels_interpolate_and_clamp() {
        assert_eq!(soft_label(25.0).probs, [0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(soft_label(37.5).probs, [0.0, 0.5, 0.5, 0.0, 0.0]);
        assert_eq!(soft_label(130.0).probs, [0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(soft_label(100.0).probs, [0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(soft_label(0.0).probs, [1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(soft_label(-5.0).probs, [1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn discriminator_ce_reference_values() {
        let onehot = soft_label(50.0);
        assert!(discriminator_ce(&onehot.probs, &onehot) < 1e-12);
        assert!((discriminator_ce(&[0.2; 5], &soft_label(60.0)) - 5f64.ln()).abs() < 1e-12);
        let half = soft_label(37.5);
        assert!((discriminator_ce(&half.probs, &half) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn loss_closed_forms() {
        assert_eq!(std_loss(&[[0.2; 5]]).unwrap(), 0.0);
        assert!((std_loss(&[[1.0, 0.0, 0.0, 0.0, 0.0]]).unwrap() - 0.4).abs() < 1e-12);
        assert!((std_loss(&[[0.2; 5], [0.0, 1.0, 0.0, 0.0, 0.0]]).unwrap() - 0.2).abs() < 1e-12);
        assert!(std_loss(&[[0.5; 5]]).is_err());
        assert_eq!(total_loss(1.0, 1.0, 1.0, &LossWeights::default()), 12.0);
        assert_eq!(total_loss(0.0, 0.0, 0.0, &LossWeights::default()), 0.0);
    }

    #[test]
    fn pose_and_smooth_hand_cases() {
        let a = vec![vec![0.0; POSE_DIM]; 2];
        let mut b = a.clone();
        b[1][0] = 3.0;
        b[1][1] = 4.0;
        assert!((pose_loss(&b, &a).unwrap() - 2.5).abs() < 1e-12);
        assert_eq!(pose_loss(&a, &a).unwrap(), 0.0);
        let mut c = a.clone();
        c[1][0] = 1.0;
        assert!((smooth_loss(&c, &a).unwrap() - 1.0).abs() < 1e-12);
        let shifted: Vec<Vec<f64>> = c.iter().map(|p| p.iter().map(|v| v + 0.7).collect()).collect();
        assert!(smooth_loss(&shifted, &c).unwrap() < 1e-12);
        assert!(smooth_loss(&a[..1], &a[..1]).is_err());
        assert!(pose_loss(&a, &a[..1]).is_err());
    }

    #[test]
    fn window_spec_bounds() {
        assert!(WindowSpec::new(0, 3).is_err());
        assert_eq!(WindowSpec::default().len(), 24);
        assert_eq!(WindowSpec::new(8, 0).unwrap().len(), 8);
    }

    #[test]
    fn loss_csv_round_trip() {
        let r = LossReport { step: 3, l_pose: 0.25, l_smooth: 0.125, l_std: 0.1, l_disc_ce: 1.5, total: 2.0 };
        assert_eq!(LossReport::parse_csv_line(&r.csv_line()).unwrap(), r);
        assert!(LossReport::parse_csv_line("1,2,3").is_err());
    }
}
