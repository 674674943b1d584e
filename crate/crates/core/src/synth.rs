//! Synthetic source families and mixture construction.
//!
//! Each family is a deterministic function of `(length, sample_rate, seed)`
//! and is normalized to unit RMS before mixing.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng, STREAM_MIXTURE};
use crate::tf::Waveform;

/// Mixture peak after normalization.
pub const MIX_PEAK: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SignalKind {
    /// Harmonic series with 1/h amplitudes, slow vibrato and a syllabic
    /// amplitude envelope. `f0_hz` is the range the fundamental is drawn from.
    HarmonicTone { f0_hz: (f64, f64), harmonics: usize },
    /// Linear frequency sweep across the whole duration.
    Chirp { start_hz: (f64, f64), end_hz: (f64, f64) },
    /// Band-limited Gaussian noise gated into bursts.
    NoiseBurst { low_hz: f64, high_hz: f64, bursts_per_sec: f64 },
    /// Jittered impulse train exciting a damped resonance.
    PulseTrain { rate_hz: (f64, f64), center_hz: f64 },
}

fn draw(r: &mut impl Rng, range: (f64, f64)) -> f64 {
    if range.1 > range.0 {
        r.random_range(range.0..range.1)
    } else {
        range.0
    }
}

impl SignalKind {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyq = sample_rate as f64 / 2.0;
        let ok_range = |r: (f64, f64)| r.0 > 0.0 && r.0 <= r.1 && r.1 < nyq;
        let ok = match self {
            SignalKind::HarmonicTone { f0_hz, harmonics } => ok_range(*f0_hz) && *harmonics >= 1,
            SignalKind::Chirp { start_hz, end_hz } => ok_range(*start_hz) && ok_range(*end_hz),
            SignalKind::NoiseBurst {
                low_hz,
                high_hz,
                bursts_per_sec,
            } => ok_range((*low_hz, *high_hz)) && low_hz < high_hz && *bursts_per_sec > 0.0,
            SignalKind::PulseTrain { rate_hz, center_hz } => {
                ok_range(*rate_hz) && *center_hz > 0.0 && *center_hz < nyq
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid source family {self:?} at {sample_rate} Hz")))
        }
    }

    /// Unit-RMS realization of this family.
    pub fn generate(&self, len: usize, sample_rate: u32, seed: u64) -> Result<Vec<f64>> {
        self.validate(sample_rate)?;
        let sr = sample_rate as f64;
        let mut r = rng(seed);
        let mut x = match self {
            SignalKind::HarmonicTone { f0_hz, harmonics } => {
                let f0 = draw(&mut r, *f0_hz);
                let vib_rate = r.random_range(4.0..6.0);
                let env_rate = r.random_range(2.0..4.0);
                let env_phase = r.random_range(0.0..2.0 * PI);
                let phases: Vec<f64> = (0..*harmonics).map(|_| r.random_range(0.0..2.0 * PI)).collect();
                let mut phase = 0.0;
                let mut out = Vec::with_capacity(len);
                for i in 0..len {
                    let t = i as f64 / sr;
                    let f = f0 * (1.0 + 0.01 * (2.0 * PI * vib_rate * t).sin());
                    phase += 2.0 * PI * f / sr;
                    let env = 0.6 + 0.4 * (2.0 * PI * env_rate * t + env_phase).sin();
                    let mut s = 0.0;
                    for (h, ph) in phases.iter().enumerate() {
                        let order = (h + 1) as f64;
                        if f0 * order * 1.02 >= sr / 2.0 {
                            break;
                        }
                        s += (order * phase + ph).sin() / order;
                    }
                    out.push(env * s);
                }
                out
            }
            SignalKind::Chirp { start_hz, end_hz } => {
                let f_start = draw(&mut r, *start_hz);
                let f_end = draw(&mut r, *end_hz);
                let dur = len as f64 / sr;
                let ph0 = r.random_range(0.0..2.0 * PI);
                (0..len)
                    .map(|i| {
                        let t = i as f64 / sr;
                        (ph0 + 2.0 * PI * (f_start * t + (f_end - f_start) * t * t / (2.0 * dur))).sin()
                    })
                    .collect()
            }
            SignalKind::NoiseBurst {
                low_hz,
                high_hz,
                bursts_per_sec,
            } => {
                let noise: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut r)).collect();
                let mut band = bandpass(&noise, sr, *low_hz, *high_hz);
                let seg = ((sr / bursts_per_sec) as usize).max(1);
                let ramp = ((0.01 * sr) as usize).max(1);
                let n_seg = len.div_ceil(seg);
                let mut on: Vec<bool> = (0..n_seg).map(|_| r.random_bool(0.7)).collect();
                if !on.iter().any(|b| *b) {
                    on[0] = true;
                }
                for (i, s) in band.iter_mut().enumerate() {
                    let k = i / seg;
                    let pos = i % seg;
                    let gain = if !on[k] {
                        0.0
                    } else {
                        let edge = pos.min(seg - 1 - pos);
                        if edge < ramp {
                            0.5 - 0.5 * (PI * edge as f64 / ramp as f64).cos()
                        } else {
                            1.0
                        }
                    };
                    *s *= gain;
                }
                band
            }
            SignalKind::PulseTrain { rate_hz, center_hz } => {
                let rate = draw(&mut r, *rate_hz);
                let period = sr / rate;
                let decay = 0.005 * sr;
                let kernel_len = (decay * 8.0) as usize;
                let kernel: Vec<f64> = (0..kernel_len)
                    .map(|i| (-(i as f64) / decay).exp() * (2.0 * PI * center_hz * i as f64 / sr).sin())
                    .collect();
                let mut out = vec![0.0; len];
                let mut t = r.random_range(0.0..period);
                while (t as usize) < len {
                    let start = t as usize;
                    let amp = r.random_range(0.5..1.0);
                    for (o, k) in out[start..].iter_mut().zip(&kernel) {
                        *o += amp * k;
                    }
                    t += period * r.random_range(0.9..1.1);
                }
                out
            }
        };
        let rms = (x.iter().map(|s| s * s).sum::<f64>() / len.max(1) as f64).sqrt();
        if rms > 0.0 {
            x.iter_mut().for_each(|s| *s /= rms);
        }
        Ok(x)
    }
}

/// Brick-wall band-pass through a full-length FFT.
fn bandpass(x: &[f64], sr: f64, low: f64, high: f64) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex64> = x.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        let bin = k.min(n - k);
        let f = bin as f64 * sr / n as f64;
        if f < low || f > high {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|v| v.re / n as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    pub duration: f64,
    pub sample_rate: u32,
    /// Level of each later source relative to the first, `10 log10(P_k / P_0)`,
    /// drawn uniformly, in dB.
    pub snr_range: (f64, f64),
    pub source_kinds: Vec<SignalKind>,
    pub seed: u64,
}

impl Default for MixSpec {
    /// Two sources, 5 s at 16 kHz, relative SNR in [-2.5, 2.5] dB.
    fn default() -> Self {
        Self {
            duration: 5.0,
            sample_rate: 16_000,
            snr_range: (-2.5, 2.5),
            source_kinds: vec![
                SignalKind::HarmonicTone {
                    f0_hz: (120.0, 200.0),
                    harmonics: 6,
                },
                SignalKind::NoiseBurst {
                    low_hz: 2500.0,
                    high_hz: 6000.0,
                    bursts_per_sec: 4.0,
                },
            ],
            seed: 0,
        }
    }
}

impl MixSpec {
    /// Accompaniment-plus-lead preset with the lead fixed 10 dB above the
    /// accompaniment (source 0 is the accompaniment).
    pub fn lead_over_accompaniment() -> Self {
        Self {
            snr_range: (10.0, 10.0),
            source_kinds: vec![
                SignalKind::HarmonicTone {
                    f0_hz: (55.0, 110.0),
                    harmonics: 4,
                },
                SignalKind::HarmonicTone {
                    f0_hz: (500.0, 900.0),
                    harmonics: 4,
                },
            ],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidArgument(format!("duration must be > 0, got {}", self.duration)));
        }
        if self.sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if !(self.snr_range.0 <= self.snr_range.1) {
            return Err(Error::InvalidArgument(format!("bad SNR range {:?}", self.snr_range)));
        }
        if self.source_kinds.len() < 2 {
            return Err(Error::InvalidArgument("a mixture needs at least 2 sources".into()));
        }
        for k in &self.source_kinds {
            k.validate(self.sample_rate)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        (self.duration * self.sample_rate as f64).round() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub mixture: Waveform,
    pub references: Vec<Waveform>,
    /// Drawn SNR of each source relative to source 0 (0 for source 0).
    pub snrs_db: Vec<f64>,
}

/// Generates the sources, scales sources 1.. to their drawn level relative
/// to source 0 (mean power), applies one shared gain so the mixture peaks at
/// [`MIX_PEAK`], and sums. The mixture is computed from the already-scaled
/// references, so it equals their sum exactly.
pub fn make_mixture(spec: &MixSpec) -> Result<Mixture> {
    spec.validate()?;
    let len = spec.len();
    if len == 0 {
        return Err(Error::InvalidArgument("mixture would be empty".into()));
    }
    let mut r = rng(derive_seed(spec.seed, STREAM_MIXTURE, u64::MAX, 0));
    let mut sources = Vec::with_capacity(spec.source_kinds.len());
    for (i, kind) in spec.source_kinds.iter().enumerate() {
        sources.push(kind.generate(len, spec.sample_rate, derive_seed(spec.seed, STREAM_MIXTURE, i as u64, 1))?);
    }
    let power = |x: &[f64]| x.iter().map(|s| s * s).sum::<f64>() / x.len() as f64;
    let p0 = power(&sources[0]);
    let mut snrs = vec![0.0];
    for s in sources.iter_mut().skip(1) {
        let snr = draw(&mut r, spec.snr_range);
        let target = p0 * 10f64.powf(snr / 10.0);
        let g = (target / power(s)).sqrt();
        s.iter_mut().for_each(|v| *v *= g);
        snrs.push(snr);
    }
    let peak = (0..len)
        .map(|i| sources.iter().map(|s| s[i]).sum::<f64>().abs())
        .fold(0.0, f64::max);
    let gain = if peak > 0.0 { MIX_PEAK / peak } else { 1.0 };
    for s in sources.iter_mut() {
        s.iter_mut().for_each(|v| *v *= gain);
    }
    let mix: Vec<f64> = (0..len).map(|i| sources.iter().map(|s| s[i]).sum()).collect();
    Ok(Mixture {
        mixture: Waveform::new(mix, spec.sample_rate)?,
        references: sources
            .into_iter()
            .map(|s| Waveform::new(s, spec.sample_rate))
            .collect::<Result<_>>()?,
        snrs_db: snrs,
    })
}
