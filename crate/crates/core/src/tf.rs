//! Short-time Fourier analysis and synthesis.
//!
//! Framing convention: the signal is reflect-padded by `window_length / 2`
//! samples on both sides, so frame `t` is centered on original sample
//! `t * hop_length`. The frame count is
//!
//! ```text
//! T = 1 + floor(n / hop_length)
//! ```
//!
//! Each frame takes `window_length` samples, multiplies by the analysis
//! window, zero-pads to `fft_size` and keeps the `fft_size / 2 + 1`
//! non-negative frequency bins. Synthesis is weighted overlap-add with the
//! same window followed by division by the overlapped squared window, which
//! is the least-squares inverse of the analysis operator.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::par;

/// Guard for the overlap-add normalization.
const OLA_EPS: f64 = 1e-10;

/// Relative flatness required of the overlapped squared window.
const COLA_TOL: f64 = 1e-6;

/// Mono time-domain audio.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidWaveform("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("sample {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean of squared samples.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    /// Square root of the periodic Hann window. Its square is Hann, so the
    /// analysis/synthesis pair overlap-adds to a constant at hop = N/R, R >= 2.
    SqrtHann,
    Hann,
    Rectangular,
}

impl WindowKind {
    /// Periodic window coefficients of length `len`.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        let hann = |n: usize| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos();
        (0..len)
            .map(|n| match self {
                WindowKind::SqrtHann => hann(n).sqrt(),
                WindowKind::Hann => hann(n),
                WindowKind::Rectangular => 1.0,
            })
            .collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            WindowKind::SqrtHann => "sqrt_hann",
            WindowKind::Hann => "hann",
            WindowKind::Rectangular => "rectangular",
        }
    }
}

impl std::str::FromStr for WindowKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sqrt_hann" | "sqrt-hann" => Ok(WindowKind::SqrtHann),
            "hann" => Ok(WindowKind::Hann),
            "rectangular" | "rect" | "boxcar" => Ok(WindowKind::Rectangular),
            other => Err(Error::InvalidStftParams(format!("unknown window {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftParams {
    pub window_length: usize,
    pub hop_length: usize,
    pub window: WindowKind,
    pub fft_size: usize,
}

impl Default for StftParams {
    /// 32 ms square-root-Hann window with 8 ms hop at 16 kHz.
    fn default() -> Self {
        Self {
            window_length: 512,
            hop_length: 128,
            window: WindowKind::SqrtHann,
            fft_size: 512,
        }
    }
}

impl StftParams {
    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Number of frames produced for a signal of `len` samples.
    pub fn frames_for(&self, len: usize) -> usize {
        1 + len / self.hop_length
    }

    /// Checks ordering constraints and the constant overlap-add condition of
    /// the squared window at this hop.
    pub fn validate(&self) -> Result<()> {
        if self.hop_length == 0 {
            return Err(Error::InvalidStftParams("hop_length must be positive".into()));
        }
        if self.hop_length > self.window_length {
            return Err(Error::InvalidStftParams(format!(
                "hop_length {} exceeds window_length {}",
                self.hop_length, self.window_length
            )));
        }
        if self.window_length > self.fft_size {
            return Err(Error::InvalidStftParams(format!(
                "window_length {} exceeds fft_size {}",
                self.window_length, self.fft_size
            )));
        }
        let w = self.window.coefficients(self.window_length);
        let mut overlap = vec![0.0; self.hop_length];
        for (n, c) in w.iter().enumerate() {
            overlap[n % self.hop_length] += c * c;
        }
        let max = overlap.iter().cloned().fold(f64::MIN, f64::max);
        let min = overlap.iter().cloned().fold(f64::MAX, f64::min);
        if max <= 0.0 || (max - min) > COLA_TOL * max {
            return Err(Error::NonCola(format!(
                "{} window of {} samples at hop {} (overlap range {min:.6}..{max:.6})",
                self.window.name(),
                self.window_length,
                self.hop_length
            )));
        }
        Ok(())
    }
}

/// Complex time-frequency representation, frames x bins, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TfRepr {
    frames: usize,
    bins: usize,
    values: Vec<Complex64>,
    params: StftParams,
    sample_rate: u32,
    signal_len: usize,
}

impl TfRepr {
    pub fn new(
        frames: usize,
        bins: usize,
        values: Vec<Complex64>,
        params: StftParams,
        sample_rate: u32,
        signal_len: usize,
    ) -> Result<Self> {
        if frames.checked_mul(bins) != Some(values.len()) {
            return Err(Error::ShapeMismatch(format!(
                "{frames}x{bins} grid needs {} values, got {}",
                frames.saturating_mul(bins),
                values.len()
            )));
        }
        if bins != params.bins() {
            return Err(Error::ShapeMismatch(format!(
                "{bins} bins but fft_size {} implies {}",
                params.fft_size,
                params.bins()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("time-frequency value".into()));
        }
        Ok(Self {
            frames,
            bins,
            values,
            params,
            sample_rate,
            signal_len,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn get(&self, t: usize, f: usize) -> Complex64 {
        self.values[t * self.bins + f]
    }

    pub fn params(&self) -> &StftParams {
        &self.params
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Length in samples of the signal this representation was computed from.
    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    /// Same grid and metadata, new values.
    pub fn with_values(&self, values: Vec<Complex64>) -> Result<Self> {
        Self::new(
            self.frames,
            self.bins,
            values,
            self.params,
            self.sample_rate,
            self.signal_len,
        )
    }
}

/// Index into a signal of length `n` with whole-sample symmetric reflection
/// (the edge sample is not repeated).
fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

fn plan(size: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut planner = FftPlanner::<f64>::new();
    if inverse {
        planner.plan_fft_inverse(size)
    } else {
        planner.plan_fft_forward(size)
    }
}

pub fn stft(w: &Waveform, p: &StftParams) -> Result<TfRepr> {
    if w.is_empty() {
        return Err(Error::EmptyWaveform);
    }
    p.validate()?;
    let n = w.len();
    let pad = (p.window_length / 2) as isize;
    let frames = p.frames_for(n);
    let bins = p.bins();
    let window = p.window.coefficients(p.window_length);
    let fft = plan(p.fft_size, false);
    let x = w.samples();

    let mut values = vec![Complex64::new(0.0, 0.0); frames * bins];
    par::map_chunks_mut(&mut values, bins, |t, row| {
        let mut buf = vec![Complex64::new(0.0, 0.0); p.fft_size];
        let start = (t * p.hop_length) as isize - pad;
        for (k, (slot, c)) in buf.iter_mut().zip(&window).enumerate() {
            let src = reflect_index(start + k as isize, n);
            *slot = Complex64::new(x[src] * c, 0.0);
        }
        fft.process(&mut buf);
        row.copy_from_slice(&buf[..bins]);
    });

    TfRepr::new(frames, bins, values, *p, w.sample_rate(), n)
}

pub fn istft(tf: &TfRepr) -> Result<Waveform> {
    let p = tf.params();
    p.validate()?;
    let n = tf.signal_len();
    let pad = p.window_length / 2;
    let window = p.window.coefficients(p.window_length);
    let ifft = plan(p.fft_size, true);
    let scale = 1.0 / p.fft_size as f64;
    let bins = tf.bins();

    let mut frames_td = vec![0.0; tf.frames() * p.window_length];
    par::map_chunks_mut(&mut frames_td, p.window_length, |t, out| {
        let mut buf = vec![Complex64::new(0.0, 0.0); p.fft_size];
        let row = &tf.values()[t * bins..(t + 1) * bins];
        buf[..bins].copy_from_slice(row);
        for k in bins..p.fft_size {
            buf[k] = buf[p.fft_size - k].conj();
        }
        ifft.process(&mut buf);
        for ((o, b), c) in out.iter_mut().zip(&buf).zip(&window) {
            *o = b.re * scale * c;
        }
    });

    let padded_len = n + 2 * pad + p.window_length;
    let mut acc = vec![0.0; padded_len];
    let mut norm = vec![0.0; padded_len];
    let wsq: Vec<f64> = window.iter().map(|c| c * c).collect();
    for (t, frame) in frames_td.chunks_exact(p.window_length).enumerate() {
        let start = t * p.hop_length;
        for (k, v) in frame.iter().enumerate() {
            acc[start + k] += v;
            norm[start + k] += wsq[k];
        }
    }
    let samples = (0..n)
        .map(|i| {
            let d = norm[i + pad];
            if d > OLA_EPS {
                acc[i + pad] / d
            } else {
                0.0
            }
        })
        .collect();
    Waveform::new(samples, tf.sample_rate())
}

/// Elementwise modulus as a frames x bins matrix.
pub fn magnitude(tf: &TfRepr) -> Matrix {
    let data = tf.values().iter().map(|v| v.norm()).collect();
    Matrix::new(tf.frames(), tf.bins(), data).expect("grid dimensions are consistent")
}

/// Number of bins selected by [`loudest_bins`] for `total` bins.
///
/// `ceil(percentile * total)` with a small absolute slack so that products
/// such as `0.07 * 100` that land a rounding error above an integer do not
/// round up to the next count.
pub fn loud_count(percentile: f64, total: usize) -> usize {
    let x = percentile * total as f64;
    ((x - 1e-9).ceil().max(1.0) as usize).min(total)
}

/// Flat indices (`t * F + f`) of the loudest `ceil(percentile * T * F)` bins by
/// linear magnitude, loudest first. Ties go to the lower flat index.
pub fn loudest_bins(mag: &Matrix, percentile: f64) -> Result<Vec<usize>> {
    if mag.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    if !(percentile > 0.0 && percentile <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "percentile must be in (0, 1], got {percentile}"
        )));
    }
    let vals = mag.as_slice();
    let count = loud_count(percentile, vals.len());
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    let order = |a: &usize, b: &usize| vals[*b].total_cmp(&vals[*a]).then(a.cmp(b));
    if count < idx.len() {
        idx.select_nth_unstable_by(count, order);
        idx.truncate(count);
    }
    idx.sort_unstable_by(order);
    Ok(idx)
}

/// Band-limited resampling with a Blackman-windowed sinc kernel.
///
/// The cutoff sits at the lower of the two Nyquist frequencies. Output length
/// is `round(len * target_rate / source_rate)`.
pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    if target_rate == 0 {
        return Err(Error::InvalidArgument("target sample rate must be positive".into()));
    }
    if target_rate == w.sample_rate() {
        return Ok(w.clone());
    }
    const ZERO_CROSSINGS: f64 = 32.0;
    let ratio = target_rate as f64 / w.sample_rate() as f64;
    let cutoff = ratio.min(1.0);
    let half_width = ZERO_CROSSINGS / cutoff;
    let x = w.samples();
    let n_in = x.len() as isize;
    let n_out = (x.len() as f64 * ratio).round() as usize;

    let sinc = |v: f64| {
        if v.abs() < 1e-12 {
            1.0
        } else {
            (PI * v).sin() / (PI * v)
        }
    };
    let blackman = |u: f64| {
        // u in [-1, 1]
        let a = PI * (u + 1.0);
        0.42 - 0.5 * a.cos() + 0.08 * (2.0 * a).cos()
    };

    let out = par::map_range(n_out, |j| {
        let center = j as f64 / ratio;
        let lo = (center - half_width).ceil() as isize;
        let hi = (center + half_width).floor() as isize;
        let mut acc = 0.0;
        for i in lo.max(0)..=hi.min(n_in - 1) {
            let d = center - i as f64;
            acc += x[i as usize] * cutoff * sinc(cutoff * d) * blackman(d / half_width);
        }
        acc
    });
    Waveform::new(out, target_rate)
}
