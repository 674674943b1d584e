mod common;

use common::noise;
use dcconf::evaluation::si_sdr_slices;
use dcconf::{eval_separation, pearson, selection_stats, si_sdr, Waveform};
use proptest::prelude::*;

fn wf(v: Vec<f64>) -> Waveform {
    Waveform::new(v, 16_000).unwrap()
}

/// SI-SDR through the normalized correlation between estimate and reference.
fn projection_oracle(est: &[f64], reference: &[f64]) -> f64 {
    let dot: f64 = est.iter().zip(reference).map(|(a, b)| a * b).sum();
    let ee: f64 = est.iter().map(|a| a * a).sum();
    let rr: f64 = reference.iter().map(|b| b * b).sum();
    let rho2 = dot * dot / (ee * rr);
    10.0 * (rho2 / (1.0 - rho2)).log10()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn scale_invariant(seed in 0u64..10_000, gain in prop::sample::select(vec![1e-3, 0.5, 2.0, 37.0, 1e3]), mix in 0.05f64..2.0) {
        let r = noise(800, seed);
        let n = noise(800, seed + 1);
        let e: Vec<f64> = r.iter().zip(&n).map(|(a, b)| a + mix * b).collect();
        let scaled: Vec<f64> = e.iter().map(|v| v * gain).collect();
        let base = si_sdr_slices(&e, &r).unwrap();
        prop_assert!((si_sdr_slices(&scaled, &r).unwrap() - base).abs() < 1e-6);
    }

    #[test]
    fn agrees_with_projection_oracle(seed in 0u64..10_000, mix in 0.05f64..3.0) {
        let r = noise(1000, seed);
        let n = noise(1000, seed + 7);
        let e: Vec<f64> = r.iter().zip(&n).map(|(a, b)| a + mix * b).collect();
        let got = si_sdr_slices(&e, &r).unwrap();
        prop_assert!((got - projection_oracle(&e, &r)).abs() < 1e-9, "{}", got);
    }

    #[test]
    fn two_source_permutation_matches_exhaustive(seed in 0u64..10_000, m0 in 0.0f64..2.0, m1 in 0.0f64..2.0) {
        let r0 = noise(500, seed);
        let r1 = noise(500, seed + 1);
        let e0: Vec<f64> = r1.iter().zip(&r0).map(|(a, b)| a + m0 * b).collect();
        let e1: Vec<f64> = r0.iter().zip(&r1).map(|(a, b)| a + m1 * b).collect();
        let refs = [wf(r0.clone()), wf(r1.clone())];
        let ests = [wf(e0.clone()), wf(e1.clone())];
        let res = eval_separation(&ests, &refs).unwrap();
        let keep = si_sdr_slices(&e0, &r0).unwrap() + si_sdr_slices(&e1, &r1).unwrap();
        let swap = si_sdr_slices(&e1, &r0).unwrap() + si_sdr_slices(&e0, &r1).unwrap();
        let want = if swap > keep { vec![1, 0] } else { vec![0, 1] };
        prop_assert_eq!(&res.permutation, &want);
        prop_assert!((res.mean_sdr - keep.max(swap) / 2.0).abs() < 1e-12);
    }
}

#[test]
fn identity_is_capped() {
    let r = wf(noise(1000, 3));
    assert_eq!(si_sdr(&r, &r).unwrap(), 100.0);
    let silent = wf(vec![0.0; 1000]);
    assert_eq!(si_sdr(&silent, &r).unwrap(), -100.0);
}

#[test]
fn three_source_permutation() {
    let refs: Vec<Waveform> = (0..3).map(|i| wf(noise(400, 10 + i))).collect();
    let ests = vec![refs[2].clone(), refs[0].clone(), refs[1].clone()];
    let res = eval_separation(&ests, &refs).unwrap();
    assert_eq!(res.permutation, vec![1, 2, 0]);
    assert_eq!(res.per_source_sdr, vec![100.0; 3]);
}

#[test]
fn pearson_five_points() {
    let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
    let ys = [2.0, 4.0, 5.0, 4.0, 5.0];
    // Centered sums: sxy = 6, sxx = 10, syy = 6.
    let want = 6.0 / (10.0f64 * 6.0).sqrt();
    assert!((pearson(&xs, &ys).unwrap() - want).abs() < 1e-12);
    assert!((pearson(&ys, &xs).unwrap() - want).abs() < 1e-12);
}

#[test]
fn pearson_is_shift_and_scale_invariant() {
    let xs = noise(50, 1);
    let ys = noise(50, 2);
    let base = pearson(&xs, &ys).unwrap();
    let moved: Vec<f64> = xs.iter().map(|x| 1e6 + 3.0 * x).collect();
    assert!((pearson(&moved, &ys).unwrap() - base).abs() < 1e-9);
}

#[test]
fn selection_stats_from_pairs() {
    // (true, predicted) pairs over 3 domains.
    let mut trials = Vec::new();
    trials.extend(std::iter::repeat_n((0, 0), 8));
    trials.extend(std::iter::repeat_n((0, 1), 2));
    trials.extend(std::iter::repeat_n((1, 1), 10));
    trials.extend(std::iter::repeat_n((2, 2), 5));
    trials.extend(std::iter::repeat_n((2, 0), 5));
    let s = selection_stats(&trials, 3).unwrap();
    assert_eq!(s.confusion, vec![vec![8, 0, 5], vec![2, 10, 0], vec![0, 0, 5]]);
    assert_eq!(s.precision, vec![8.0 / 13.0, 10.0 / 12.0, 1.0]);
    assert_eq!(s.recall, vec![0.8, 1.0, 0.5]);
    assert_eq!(s.per_domain_counts(), vec![10, 10, 10]);
    assert!((s.accuracy() - 23.0 / 30.0).abs() < 1e-12);
}
