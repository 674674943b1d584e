mod common;

use std::f64::consts::PI;

use common::{noise, rel_err_db, sine};
use dcconf::{
    apply_masks, istft, loudest_bins, magnitude, masks_from_posteriors, oracle_embed, separate, si_sdr, stft,
    ClusterResult, MaskKind, Matrix, SeparationConfig, StftParams, Waveform, WindowKind,
};
use proptest::prelude::*;

fn interior_err_db(a: &[f64], b: &[f64], margin: usize) -> f64 {
    rel_err_db(&a[margin..a.len() - margin], &b[margin..b.len() - margin])
}

/// Direct DFT of one reflect-padded, windowed frame.
fn dft_frame(x: &[f64], t: usize, p: &StftParams) -> Vec<(f64, f64)> {
    let n = x.len() as isize;
    let wl = p.window_length;
    let start = (t * p.hop_length) as isize - (wl / 2) as isize;
    let frame: Vec<f64> = (0..wl)
        .map(|k| {
            let mut i = start + k as isize;
            if i < 0 {
                i = -i;
            }
            if i >= n {
                i = 2 * (n - 1) - i;
            }
            let w = (0.5 - 0.5 * (2.0 * PI * k as f64 / wl as f64).cos()).sqrt();
            x[i as usize] * w
        })
        .collect();
    (0..p.fft_size / 2 + 1)
        .map(|f| {
            frame.iter().enumerate().fold((0.0, 0.0), |(re, im), (k, v)| {
                let ang = -2.0 * PI * (f * k) as f64 / p.fft_size as f64;
                (re + v * ang.cos(), im + v * ang.sin())
            })
        })
        .collect()
}

#[test]
fn stft_matches_direct_dft() {
    let x = noise(3000, 5);
    let p = StftParams::default();
    let tf = stft(&Waveform::new(x.clone(), 16_000).unwrap(), &p).unwrap();
    assert_eq!(tf.frames(), 1 + 3000 / 128);
    for t in [0, 1, 7, tf.frames() - 1] {
        for (f, (re, im)) in dft_frame(&x, t, &p).into_iter().enumerate() {
            let v = tf.get(t, f);
            assert!((v.re - re).abs() < 1e-9 && (v.im - im).abs() < 1e-9, "t={t} f={f}");
        }
    }
}

#[test]
fn round_trip_noise_and_sines() {
    let p = StftParams::default();
    let signals = vec![
        noise(16_000, 1),
        sine(440.0, 16_000, 16_000, 0.8),
        sine(1234.5, 12_345, 16_000, 0.3),
        sine(50.0, 20_000, 16_000, 1.0)
            .iter()
            .zip(sine(3000.0, 20_000, 16_000, 0.2))
            .map(|(a, b)| a + b)
            .collect(),
    ];
    for x in signals {
        let w = Waveform::new(x.clone(), 16_000).unwrap();
        let back = istft(&stft(&w, &p).unwrap()).unwrap();
        assert_eq!(back.len(), x.len());
        let err = interior_err_db(back.samples(), &x, p.window_length);
        assert!(err <= -60.0, "interior error {err} dB");
        assert!(rel_err_db(back.samples(), &x) <= -60.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn round_trip_any_length(len in 600usize..5000, seed in 0u64..1000, hop_div in prop::sample::select(vec![2usize, 4])) {
        let p = StftParams { window_length: 256, hop_length: 256 / hop_div, window: WindowKind::SqrtHann, fft_size: 256 };
        let x = noise(len, seed);
        let back = istft(&stft(&Waveform::new(x.clone(), 8000).unwrap(), &p).unwrap()).unwrap();
        prop_assert!(rel_err_db(back.samples(), &x) <= -60.0);
    }

    #[test]
    fn loudest_bins_are_the_top_values(vals in prop::collection::vec(0u8..20, 1..200), pct in 0.01f64..1.0) {
        let n = vals.len();
        let m = Matrix::new(1, n, vals.iter().map(|v| *v as f64).collect()).unwrap();
        let got = loudest_bins(&m, pct).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|a, b| vals[*b].cmp(&vals[*a]).then(a.cmp(b)));
        let count = ((pct * n as f64) - 1e-9).ceil().max(1.0) as usize;
        prop_assert_eq!(got, order[..count.min(n)].to_vec());
    }
}

#[test]
fn non_cola_parameters_are_rejected() {
    let p = StftParams {
        window_length: 512,
        hop_length: 384,
        window: WindowKind::SqrtHann,
        fft_size: 512,
    };
    let w = Waveform::new(noise(4000, 0), 16_000).unwrap();
    assert!(stft(&w, &p).is_err());
}

fn two_tone() -> (Waveform, Vec<Waveform>) {
    let a = sine(500.0, 32_000, 16_000, 0.4);
    let b = sine(3000.0, 32_000, 16_000, 0.4);
    let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
    (
        Waveform::new(mix, 16_000).unwrap(),
        vec![Waveform::new(a, 16_000).unwrap(), Waveform::new(b, 16_000).unwrap()],
    )
}

#[test]
fn oracle_separation_of_disjoint_tones() {
    let (mix, refs) = two_tone();
    let p = StftParams::default();
    let tfs: Vec<_> = refs.iter().map(|r| stft(r, &p).unwrap()).collect();
    let field = oracle_embed(&tfs, 0.0, 20, 0).unwrap();
    let out = separate(&mix, &field, &SeparationConfig::default()).unwrap();
    assert_eq!(out.sources.len(), 2);
    let direct = si_sdr(&out.sources[0], &refs[0]).unwrap() + si_sdr(&out.sources[1], &refs[1]).unwrap();
    let swapped = si_sdr(&out.sources[1], &refs[0]).unwrap() + si_sdr(&out.sources[0], &refs[1]).unwrap();
    let best = direct.max(swapped) / 2.0;
    assert!(best >= 30.0, "mean SI-SDR {best}");
}

#[test]
fn soft_masks_sum_back_to_mixture() {
    let (mix, refs) = two_tone();
    let p = StftParams::default();
    let tfs: Vec<_> = refs.iter().map(|r| stft(r, &p).unwrap()).collect();
    for sigma in [0.0, 0.5, 1.0] {
        let field = oracle_embed(&tfs, sigma, 20, 3).unwrap();
        let out = separate(&mix, &field, &SeparationConfig::default()).unwrap();
        let sum: Vec<f64> = (0..mix.len())
            .map(|i| out.sources.iter().map(|s| s.samples()[i]).sum())
            .collect();
        let err = rel_err_db(&sum, mix.samples());
        assert!(err <= -50.0, "sigma {sigma}: {err} dB");
    }
}

#[test]
fn masks_partition_unity() {
    let post = Matrix::from_rows(&[[0.2, 0.8], [0.5, 0.5], [1.0, 0.0], [0.3, 0.7], [0.9, 0.1], [0.6, 0.4]]).unwrap();
    let r = ClusterResult::from_posteriors(post).unwrap();
    for kind in [MaskKind::Soft, MaskKind::Binary] {
        let m = masks_from_posteriors(&r, 2, 3, kind).unwrap();
        for i in 0..6 {
            let s: f64 = (0..2).map(|k| m.mask(k)[i]).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
    assert!(masks_from_posteriors(&r, 3, 3, MaskKind::Soft).is_err());
}

#[test]
fn binary_masks_select_bins() {
    let w = Waveform::new(noise(2000, 2), 16_000).unwrap();
    let tf = stft(&w, &StftParams::default()).unwrap();
    let n = tf.frames() * tf.bins();
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let r = ClusterResult::from_labels(&labels, 2).unwrap();
    let masks = masks_from_posteriors(&r, tf.frames(), tf.bins(), MaskKind::Binary).unwrap();
    let parts = apply_masks(&tf, &masks).unwrap();
    let mag = magnitude(&tf);
    for i in 0..n {
        let keep = i % 2;
        assert_eq!(parts[keep].values()[i], tf.values()[i]);
        assert_eq!(parts[1 - keep].values()[i].norm(), 0.0);
        assert_eq!(mag.as_slice()[i], tf.values()[i].norm());
    }
}
