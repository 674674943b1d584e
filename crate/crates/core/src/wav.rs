//! Mono WAV I/O.
//!
//! Reads 16-bit PCM and 32-bit float files at any sample rate. Multi-channel
//! input is downmixed by averaging channels per frame. No resampling happens
//! here; use [`crate::tf::resample`] explicitly.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tf::Waveform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WavEncoding {
    #[default]
    Pcm16,
    Float32,
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<(Waveform, WavEncoding)> {
    let mut reader = WavReader::open(path)?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let (interleaved, encoding): (Vec<f64>, _) = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => (
            reader
                .samples::<i16>()
                .map(|s| s.map(|v| v as f64 / 32768.0))
                .collect::<std::result::Result<_, _>>()?,
            WavEncoding::Pcm16,
        ),
        (SampleFormat::Float, 32) => (
            reader
                .samples::<f32>()
                .map(|s| s.map(|v| v as f64))
                .collect::<std::result::Result<_, _>>()?,
            WavEncoding::Float32,
        ),
        (fmt, bits) => {
            return Err(Error::InvalidArgument(format!(
                "unsupported WAV encoding: {bits}-bit {fmt:?}"
            )))
        }
    };
    let mono = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f64>() / channels as f64)
            .collect()
    };
    Ok((Waveform::new(mono, spec.sample_rate)?, encoding))
}

/// Writes a mono file. PCM output clips to [-1, 1].
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform, encoding: WavEncoding) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: w.sample_rate(),
        bits_per_sample: match encoding {
            WavEncoding::Pcm16 => 16,
            WavEncoding::Float32 => 32,
        },
        sample_format: match encoding {
            WavEncoding::Pcm16 => SampleFormat::Int,
            WavEncoding::Float32 => SampleFormat::Float,
        },
    };
    let mut writer = WavWriter::create(path, spec)?;
    for &s in w.samples() {
        match encoding {
            WavEncoding::Pcm16 => writer.write_sample((s.clamp(-1.0, 1.0) * 32767.0).round() as i16)?,
            WavEncoding::Float32 => writer.write_sample(s as f32)?,
        }
    }
    writer.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trip_is_exact_for_f32_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let w = Waveform::new(vec![0.25, -0.5, 0.125, 0.0], 22_050).unwrap();
        write_wav(&p, &w, WavEncoding::Float32).unwrap();
        let (back, enc) = read_wav(&p).unwrap();
        assert_eq!(enc, WavEncoding::Float32);
        assert_eq!(back, w);
    }

    #[test]
    fn pcm16_quantizes_and_clips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.wav");
        let w = Waveform::new(vec![0.5, -2.0, 1e-6], 16_000).unwrap();
        write_wav(&p, &w, WavEncoding::Pcm16).unwrap();
        let (back, enc) = read_wav(&p).unwrap();
        assert_eq!(enc, WavEncoding::Pcm16);
        assert!((back.samples()[0] - 0.5).abs() < 1e-4);
        assert!((back.samples()[1] + 32767.0 / 32768.0).abs() < 1e-9);
        assert_eq!(back.samples()[2], 0.0);
    }

    #[test]
    fn stereo_is_averaged() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        };
        let mut wr = WavWriter::create(&p, spec).unwrap();
        for s in [0.5f32, 0.25, -1.0, 0.0] {
            wr.write_sample(s).unwrap();
        }
        wr.finalize().unwrap();
        let (w, _) = read_wav(&p).unwrap();
        assert_eq!(w.samples(), &[0.375, -0.5]);
        assert_eq!(w.sample_rate(), 8000);
    }
}
