//! TSP excitation and the stream re-framing primitives built on it.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// One period of a logarithmic swept sine, emitted back to back.
#[derive(Debug, Clone, PartialEq)]
pub struct TspSignal {
    samples: Vec<f64>,
    sample_rate: f64,
    f_lo: f64,
    f_hi: f64,
}

impl TspSignal {
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn period_len(&self) -> usize {
        self.samples.len()
    }

    pub fn f_lo(&self) -> f64 {
        self.f_lo
    }

    pub fn f_hi(&self) -> f64 {
        self.f_hi
    }

    /// Value of the endlessly repeated signal at fractional sample time `t`
    /// (linear interpolation, wraps in both directions).
    #[inline]
    pub fn periodic_at(&self, t: f64) -> f64 {
        let len = self.samples.len();
        let base = t.floor();
        let frac = t - base;
        let i0 = (base as i64).rem_euclid(len as i64) as usize;
        let i1 = if i0 + 1 == len { 0 } else { i0 + 1 };
        self.samples[i0] * (1.0 - frac) + self.samples[i1] * frac
    }

    /// Same geometry with every sample zeroed; used for noise-only renders.
    pub fn silent(&self) -> Self {
        Self { samples: vec![0.0; self.samples.len()], ..self.clone() }
    }
}

/// Exponential sweep from `f_lo` to `f_hi` over exactly `period_len` samples.
pub fn generate_tsp(sample_rate: f64, period_len: usize, f_lo: f64, f_hi: f64) -> Result<TspSignal> {
    if period_len == 0 {
        return Err(Error::invalid("period_len must be positive"));
    }
    if sample_rate.is_nan() || sample_rate <= 0.0 {
        return Err(Error::invalid("sample_rate must be positive"));
    }
    if f_lo.is_nan() || f_lo <= 0.0 || f_lo >= f_hi {
        return Err(Error::invalid(format!("need 0 < f_lo < f_hi, got {f_lo} and {f_hi}")));
    }
    if f_hi >= sample_rate / 2.0 {
        return Err(Error::invalid(format!("f_hi {f_hi} Hz is at or above Nyquist ({} Hz)", sample_rate / 2.0)));
    }
    let duration = period_len as f64 / sample_rate;
    let rate = (f_hi / f_lo).ln();
    // phase(t) = 2 pi f_lo T / ln(f_hi/f_lo) * (exp(t ln(f_hi/f_lo) / T) - 1)
    let k = 2.0 * PI * f_lo * duration / rate;
    let samples = (0..period_len)
        .map(|i| {
            let t = i as f64 / sample_rate;
            (k * ((t / duration * rate).exp() - 1.0)).sin()
        })
        .collect();
    Ok(TspSignal { samples, sample_rate, f_lo, f_hi })
}

/// Drops the first `alpha` samples so that subsequent framing starts `alpha`
/// samples into the excitation period.
pub fn phase_shift_stream<S>(stream: &[S], alpha: usize, period_len: usize) -> Result<&[S]> {
    if alpha >= period_len {
        return Err(Error::invalid(format!("phase shift {alpha} outside [0, {period_len})")));
    }
    if stream.len() < alpha + period_len {
        return Err(Error::invalid(format!(
            "stream of {} samples too short for shift {alpha} plus one {period_len}-sample frame",
            stream.len()
        )));
    }
    Ok(&stream[alpha..])
}

/// Complete consecutive frames of `frame_len` samples.
pub fn frames<S>(stream: &[S], frame_len: usize) -> impl Iterator<Item = &[S]> {
    stream.chunks_exact(frame_len)
}

/// Delays `buffer` by a real number of samples using linear interpolation.
/// The leading region is zero-filled; the output has the input's length.
pub fn fractional_delay(buffer: &[f64], delay: f64) -> Vec<f64> {
    assert!(delay >= 0.0, "delay must be non-negative");
    let n = buffer.len();
    let whole = delay.floor();
    let frac = delay - whole;
    let shift = if whole >= n as f64 { n } else { whole as usize };
    let at = |i: isize| if i >= 0 && (i as usize) < n { buffer[i as usize] } else { 0.0 };
    (0..n)
        .map(|i| {
            if i < shift {
                return 0.0;
            }
            let src = (i - shift) as isize;
            (1.0 - frac) * at(src) + frac * at(src - 1)
        })
        .collect()
}
