//! Per-period acoustic features: four log-mel columns (W, X, Y, Z) next to
//! three mel-pooled intensity-vector columns, giving a `b x 7` matrix.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Added before taking logs and to the intensity norm.
pub const LOG_FLOOR: f64 = 1e-10;

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// HTK-scale triangular filterbank with unit peak weight.
#[derive(Debug, Clone, PartialEq)]
pub struct MelBank {
    b: usize,
    n_bins: usize,
    sample_rate: f64,
    f_lo: f64,
    f_hi: f64,
    centers: Vec<f64>,
    /// Row-major `b x n_bins`.
    weights: Vec<f64>,
    /// Per-filter `(first, last+1)` bin range with non-zero weight.
    support: Vec<(usize, usize)>,
}

impl MelBank {
    pub fn new(b: usize, n_fft: usize, sample_rate: f64, f_lo: f64, f_hi: f64) -> Result<Self> {
        if b == 0 {
            return Err(Error::invalid("mel band count must be positive"));
        }
        if !(f_lo >= 0.0 && f_lo < f_hi && f_hi <= sample_rate / 2.0) {
            return Err(Error::invalid(format!("mel range {f_lo}..{f_hi} Hz is invalid for {sample_rate} Hz audio")));
        }
        let n_bins = n_fft / 2 + 1;
        let (m_lo, m_hi) = (hz_to_mel(f_lo), hz_to_mel(f_hi));
        let edges: Vec<f64> = (0..b + 2).map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (b + 1) as f64)).collect();
        let bin_hz = sample_rate / n_fft as f64;
        let mut weights = vec![0.0; b * n_bins];
        let mut support = Vec::with_capacity(b);
        for j in 0..b {
            let (lo, c, hi) = (edges[j], edges[j + 1], edges[j + 2]);
            let row = &mut weights[j * n_bins..(j + 1) * n_bins];
            for (k, w) in row.iter_mut().enumerate() {
                let f = k as f64 * bin_hz;
                *w = if f > lo && f <= c {
                    (f - lo) / (c - lo)
                } else if f > c && f < hi {
                    (hi - f) / (hi - c)
                } else {
                    0.0
                };
            }
            let first = row.iter().position(|&w| w > 0.0);
            let last = row.iter().rposition(|&w| w > 0.0);
            match (first, last) {
                (Some(a), Some(z)) => support.push((a, z + 1)),
                _ => {
                    return Err(Error::invalid(format!(
                        "mel filter {j} ({lo:.1}-{hi:.1} Hz) contains no FFT bin; increase n_fft or reduce b"
                    )))
                }
            }
        }
        Ok(Self { b, n_bins, sample_rate, f_lo, f_hi, centers: edges[1..=b].to_vec(), weights, support })
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn range(&self) -> (f64, f64) {
        (self.f_lo, self.f_hi)
    }

    /// Center frequency of every filter, Hz.
    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn filter(&self, j: usize) -> &[f64] {
        &self.weights[j * self.n_bins..(j + 1) * self.n_bins]
    }

    /// `weights . spectrum` for a length-`n_bins` real spectrum.
    pub fn apply(&self, spectrum: &[f64]) -> Vec<f64> {
        (0..self.b)
            .map(|j| {
                let (a, z) = self.support[j];
                self.filter(j)[a..z].iter().zip(&spectrum[a..z]).map(|(w, s)| w * s).sum()
            })
            .collect()
    }
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

/// Hann-windowed short-time Fourier transform; one row of `n_fft/2 + 1` bins per frame.
pub fn stft(channel: &[f64], n_fft: usize, hop: usize) -> Result<Vec<Vec<Complex64>>> {
    let plan = StftPlan::new(n_fft, hop)?;
    plan.run(channel)
}

struct StftPlan {
    n_fft: usize,
    hop: usize,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for StftPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StftPlan").field("n_fft", &self.n_fft).field("hop", &self.hop).finish()
    }
}

impl StftPlan {
    fn new(n_fft: usize, hop: usize) -> Result<Self> {
        if !n_fft.is_power_of_two() || n_fft < 2 {
            return Err(Error::invalid(format!("n_fft {n_fft} is not a power of two")));
        }
        if hop == 0 || hop > n_fft {
            return Err(Error::invalid(format!("hop {hop} must be in 1..={n_fft}")));
        }
        Ok(Self { n_fft, hop, window: hann(n_fft), fft: FftPlanner::new().plan_fft_forward(n_fft) })
    }

    fn frame_count(&self, len: usize) -> usize {
        if len < self.n_fft {
            0
        } else {
            (len - self.n_fft) / self.hop + 1
        }
    }

    fn run<S: Copy + Into<f64>>(&self, channel: &[S]) -> Result<Vec<Vec<Complex64>>> {
        if channel.len() < self.n_fft {
            return Err(Error::invalid(format!("signal of {} samples is shorter than n_fft {}", channel.len(), self.n_fft)));
        }
        let n_bins = self.n_fft / 2 + 1;
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n_fft];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        (0..self.frame_count(channel.len()))
            .map(|f| {
                let seg = &channel[f * self.hop..f * self.hop + self.n_fft];
                for ((b, &x), w) in buf.iter_mut().zip(seg).zip(&self.window) {
                    *b = Complex64::new(x.into() * w, 0.0);
                }
                self.fft.process_with_scratch(&mut buf, &mut scratch);
                Ok(buf[..n_bins].to_vec())
            })
            .collect()
    }
}

/// STFT of the four B-format channels over one excitation period.
pub type BFormatStft = [Vec<Vec<Complex64>>; 4];

fn check_geometry(spec: &BFormatStft, bank: &MelBank) -> Result<()> {
    let frames = spec[0].len();
    if frames == 0 {
        return Err(Error::invalid("STFT has no frames"));
    }
    for ch in spec {
        if ch.len() != frames || ch.iter().any(|row| row.len() != bank.n_bins()) {
            return Err(Error::invalid("B-format channels disagree in STFT geometry or do not match the mel bank"));
        }
    }
    Ok(())
}

/// `b x 4` log-mel energies, row-major, columns W, X, Y, Z.
pub fn logmel_frame(spec: &BFormatStft, bank: &MelBank) -> Result<Vec<f64>> {
    check_geometry(spec, bank)?;
    let b = bank.b();
    let frames = spec[0].len() as f64;
    let mut out = vec![0.0; b * 4];
    for (c, ch) in spec.iter().enumerate() {
        let mut power = vec![0.0; bank.n_bins()];
        for row in ch {
            for (p, z) in power.iter_mut().zip(row) {
                *p += z.norm_sqr();
            }
        }
        power.iter_mut().for_each(|p| *p /= frames);
        for (j, e) in bank.apply(&power).into_iter().enumerate() {
            out[j * 4 + c] = (e + LOG_FLOOR).ln();
        }
    }
    Ok(out)
}

/// `b x 3` mel-pooled unit intensity vectors, row-major.
pub fn intensity_frame(spec: &BFormatStft, bank: &MelBank) -> Result<Vec<f64>> {
    check_geometry(spec, bank)?;
    let n_bins = bank.n_bins();
    let frames = spec[0].len();
    // per-bin unit intensity averaged over the frames of the period
    let mut unit = vec![[0.0f64; 3]; n_bins];
    for f in 0..frames {
        for (k, u) in unit.iter_mut().enumerate() {
            let w = spec[0][f][k].conj();
            let i = [(w * spec[1][f][k]).re, (w * spec[2][f][k]).re, (w * spec[3][f][k]).re];
            let norm = (i[0] * i[0] + i[1] * i[1] + i[2] * i[2]).sqrt() + LOG_FLOOR;
            for d in 0..3 {
                u[d] += i[d] / norm / frames as f64;
            }
        }
    }
    let mut out = vec![0.0; bank.b() * 3];
    for j in 0..bank.b() {
        let (a, z) = bank.support[j];
        let w = &bank.filter(j)[a..z];
        let total: f64 = w.iter().sum();
        for d in 0..3 {
            out[j * 3 + d] = w.iter().zip(&unit[a..z]).map(|(w, u)| w * u[d]).sum::<f64>() / total;
        }
    }
    Ok(out)
}

/// The `b x 7` feature of one excitation period.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    b: usize,
    logmel: Vec<f64>,
    intensity: Vec<f64>,
}

impl FeatureFrame {
    pub const CHANNELS: usize = 7;

    pub fn b(&self) -> usize {
        self.b
    }

    /// Row-major `b x 4`.
    pub fn logmel(&self) -> &[f64] {
        &self.logmel
    }

    /// Row-major `b x 3`.
    pub fn intensity(&self) -> &[f64] {
        &self.intensity
    }

    /// Row-major `b x 7` in f32, the on-disk and model-input layout.
    pub fn to_f32(&self) -> Vec<f32> {
        assemble_rows(self).into_iter().map(|v| v as f32).collect()
    }

    pub fn from_f32(b: usize, data: &[f32]) -> Result<Self> {
        if data.len() != b * 7 {
            return Err(Error::format(format!("feature of {} values is not {b} x 7", data.len())));
        }
        let rows: Vec<f64> = data.iter().map(|&v| v as f64).collect();
        let (l, i) = split_rows(b, &rows);
        Ok(Self { b, logmel: l, intensity: i })
    }
}

fn assemble_rows(f: &FeatureFrame) -> Vec<f64> {
    let mut out = Vec::with_capacity(f.b * 7);
    for j in 0..f.b {
        out.extend_from_slice(&f.logmel[j * 4..j * 4 + 4]);
        out.extend_from_slice(&f.intensity[j * 3..j * 3 + 3]);
    }
    out
}

fn split_rows(b: usize, rows: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut l = Vec::with_capacity(b * 4);
    let mut i = Vec::with_capacity(b * 3);
    for r in rows.chunks_exact(7) {
        l.extend_from_slice(&r[..4]);
        i.extend_from_slice(&r[4..]);
    }
    (l, i)
}

/// Joins `b x 4` log-mel and `b x 3` intensity matrices.
pub fn assemble(logmel: &[f64], intensity: &[f64]) -> Result<FeatureFrame> {
    if logmel.len() % 4 != 0 || intensity.len() % 3 != 0 || logmel.len() / 4 != intensity.len() / 3 {
        return Err(Error::invalid(format!(
            "log-mel ({} values) and intensity ({} values) disagree in band count",
            logmel.len(),
            intensity.len()
        )));
    }
    Ok(FeatureFrame { b: logmel.len() / 4, logmel: logmel.to_vec(), intensity: intensity.to_vec() })
}

/// Row-major `b x 7` matrix, columns `[W X Y Z | Ix Iy Iz]`.
pub fn assembled(frame: &FeatureFrame) -> Vec<f64> {
    assemble_rows(frame)
}

/// Inverse of [`assemble`].
pub fn disassemble(frame: &FeatureFrame) -> (Vec<f64>, Vec<f64>) {
    (frame.logmel.clone(), frame.intensity.clone())
}

/// Front-end settings.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub b: usize,
    pub n_fft: usize,
    pub f_lo: f64,
    pub f_hi: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { b: 64, n_fft: 512, f_lo: 100.0, f_hi: 7600.0 }
    }
}

/// Turns a four-channel stream into one [`FeatureFrame`] per excitation period.
#[derive(Debug)]
pub struct FeatureExtractor {
    bank: MelBank,
    plan: StftPlan,
    period_len: usize,
}

impl FeatureExtractor {
    /// The STFT hop is the largest value that lets whole frames tile exactly
    /// one period, so each feature sees only its own period.
    pub fn new(cfg: &FeatureConfig, sample_rate: f64, period_len: usize) -> Result<Self> {
        if period_len < cfg.n_fft {
            return Err(Error::invalid(format!("period of {period_len} samples is shorter than n_fft {}", cfg.n_fft)));
        }
        let span = period_len - cfg.n_fft;
        let hop = match span {
            0 => cfg.n_fft,
            _ => (1..=span).find(|&m| span % m == 0 && span / m <= cfg.n_fft).map_or(1, |m| span / m),
        };
        Ok(Self { bank: MelBank::new(cfg.b, cfg.n_fft, sample_rate, cfg.f_lo, cfg.f_hi)?, plan: StftPlan::new(cfg.n_fft, hop)?, period_len })
    }

    pub fn bank(&self) -> &MelBank {
        &self.bank
    }

    pub fn hop(&self) -> usize {
        self.plan.hop
    }

    pub fn period_len(&self) -> usize {
        self.period_len
    }

    pub fn stft_frames_per_period(&self) -> usize {
        self.plan.frame_count(self.period_len)
    }

    /// Feature of one period given as four equally long slices.
    pub fn frame<S: Copy + Into<f64>>(&self, channels: [&[S]; 4]) -> Result<FeatureFrame> {
        if channels.iter().any(|c| c.len() != self.period_len) {
            return Err(Error::invalid(format!("each channel must hold exactly one {}-sample period", self.period_len)));
        }
        let spec: BFormatStft = [self.plan.run(channels[0])?, self.plan.run(channels[1])?, self.plan.run(channels[2])?, self.plan.run(channels[3])?];
        assemble(&logmel_frame(&spec, &self.bank)?, &intensity_frame(&spec, &self.bank)?)
    }

    /// Features of every complete period of the stream after skipping `offset` samples.
    pub fn extract<S: Copy + Into<f64>>(&self, channels: [&[S]; 4], offset: usize) -> Result<Vec<FeatureFrame>> {
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::format("B-format channels differ in length"));
        }
        let n = len.saturating_sub(offset) / self.period_len;
        (0..n)
            .map(|t| {
                let s = offset + t * self.period_len;
                let e = s + self.period_len;
                self.frame([&channels[0][s..e], &channels[1][s..e], &channels[2][s..e], &channels[3][s..e]])
            })
            .collect()
    }
}

/// Top principal components of flattened frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Unit-norm principal axes, strongest first.
    pub axes: Vec<Vec<f64>>,
    /// Variance captured by each axis.
    pub explained_variance: Vec<f64>,
    pub total_variance: f64,
    /// `N x dims` projections of the inputs.
    pub points: Vec<Vec<f64>>,
}

const PCA_TOL: f64 = 1e-10;
const PCA_MAX_ITER: usize = 1000;

/// PCA by power iteration with deflation, on row vectors of equal length.
pub fn pca(rows: &[Vec<f64>], dims: usize) -> Result<Pca> {
    let n = rows.len();
    if dims == 0 || n < dims {
        return Err(Error::invalid(format!("PCA to {dims} dims needs at least that many points, got {n}")));
    }
    let d = rows[0].len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::invalid("PCA rows differ in length"));
    }
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n as f64;
        }
    }
    let centered: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().zip(&mean).map(|(v, m)| v - m).collect()).collect();
    let total_variance: f64 = centered.iter().flatten().map(|v| v * v).sum::<f64>() / n as f64;
    if total_variance <= 1e-300 {
        return Err(Error::invalid("PCA input has zero variance"));
    }

    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut axes: Vec<Vec<f64>> = Vec::with_capacity(dims);
    let mut explained = Vec::with_capacity(dims);
    // covariance-vector product C v = X^T (X v) / n, with found axes projected out
    let cov_times = |v: &[f64], axes: &[Vec<f64>]| -> Vec<f64> {
        let mut out = vec![0.0; d];
        for r in &centered {
            let s = dot(r, v);
            for (o, x) in out.iter_mut().zip(r) {
                *o += s * x;
            }
        }
        out.iter_mut().for_each(|o| *o /= n as f64);
        for a in axes {
            let p = dot(&out, a);
            out.iter_mut().zip(a).for_each(|(o, x)| *o -= p * x);
        }
        out
    };
    for c in 0..dims {
        // deterministic start: the row with the largest residual norm
        let residual = |r: &Vec<f64>| {
            let mut v = r.clone();
            for a in &axes {
                let p = dot(&v, a);
                v.iter_mut().zip(a).for_each(|(o, x)| *o -= p * x);
            }
            v
        };
        let mut v = centered.iter().map(residual).max_by(|a, b| dot(a, a).total_cmp(&dot(b, b))).unwrap_or_default();
        let norm = dot(&v, &v).sqrt();
        if norm <= 1e-300 {
            return Err(Error::invalid(format!("PCA input has rank below {}", c + 1)));
        }
        v.iter_mut().for_each(|x| *x /= norm);
        let mut lambda = 0.0;
        for _ in 0..PCA_MAX_ITER {
            let mut w = cov_times(&v, &axes);
            let wn = dot(&w, &w).sqrt();
            if wn <= 1e-300 {
                break;
            }
            w.iter_mut().for_each(|x| *x /= wn);
            let delta = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = w;
            lambda = wn;
            if delta < PCA_TOL {
                break;
            }
        }
        // re-orthogonalize against earlier axes to keep the Gram matrix exact
        for a in &axes {
            let p = dot(&v, a);
            v.iter_mut().zip(a).for_each(|(o, x)| *o -= p * x);
        }
        let vn = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= vn);
        // fix sign so the largest-magnitude coordinate is positive
        let big = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if big < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        axes.push(v);
        explained.push(lambda);
    }
    let points = centered.iter().map(|r| axes.iter().map(|a| dot(r, a)).collect()).collect();
    Ok(Pca { mean, axes, explained_variance: explained, total_variance, points })
}

/// PCA over flattened `b x 7` frames.
pub fn pca_project(frames: &[FeatureFrame], dims: usize) -> Result<Pca> {
    let rows: Vec<Vec<f64>> = frames.iter().map(assembled).collect();
    pca(&rows, dims)
}
