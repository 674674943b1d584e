#![allow(dead_code)]

use dcconf::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// O(n^2) silhouette straight from the definitions, with a full distance table.
pub fn brute_silhouettes(points: &[Vec<f64>], labels: &[usize]) -> Vec<f64> {
    let n = points.len();
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            dist[i][j] = points[i]
                .iter()
                .zip(&points[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
        }
    }
    let clusters: Vec<usize> = {
        let mut c: Vec<usize> = labels.to_vec();
        c.sort_unstable();
        c.dedup();
        c
    };
    (0..n)
        .map(|i| {
            let same: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
            if same.is_empty() {
                return 0.0;
            }
            let a = same.iter().map(|&j| dist[i][j]).sum::<f64>() / same.len() as f64;
            let mut b = f64::INFINITY;
            for &c in &clusters {
                if c == labels[i] {
                    continue;
                }
                let members: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
                let m = members.iter().map(|&j| dist[i][j]).sum::<f64>() / members.len() as f64;
                b = b.min(m);
            }
            if a == 0.0 && b == 0.0 {
                0.0
            } else {
                (b - a) / a.max(b)
            }
        })
        .collect()
}

/// Adjusted Rand index from the contingency table.
pub fn ari(a: &[usize], b: &[usize]) -> f64 {
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let c2 = |n: u64| (n * n.saturating_sub(1)) as f64 / 2.0;
    let sum_ij: f64 = table.iter().flatten().map(|&n| c2(n)).sum();
    let sum_a: f64 = table.iter().map(|r| c2(r.iter().sum())).sum();
    let sum_b: f64 = (0..kb).map(|j| c2(table.iter().map(|r| r[j]).sum())).sum();
    let total = c2(a.len() as u64);
    let expected = sum_a * sum_b / total;
    let max = (sum_a + sum_b) / 2.0;
    if max == expected {
        return 1.0;
    }
    (sum_ij - expected) / (max - expected)
}

/// Lloyd's algorithm from fixed initial means; nearest mean wins, lowest index on ties.
pub fn hard_kmeans(points: &Matrix, init: &Matrix, max_iters: usize) -> Vec<usize> {
    let (n, d, k) = (points.rows(), points.cols(), init.rows());
    let mut means: Vec<Vec<f64>> = (0..k).map(|c| init.row(c).to_vec()).collect();
    let mut labels = vec![usize::MAX; n];
    for _ in 0..max_iters {
        let next: Vec<usize> = (0..n)
            .map(|i| {
                let x = points.row(i);
                let mut best = (0, f64::INFINITY);
                for (c, m) in means.iter().enumerate() {
                    let d2: f64 = x.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum();
                    if d2 < best.1 {
                        best = (c, d2);
                    }
                }
                best.0
            })
            .collect();
        if next == labels {
            break;
        }
        labels = next;
        for (c, m) in means.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
            if members.is_empty() {
                continue;
            }
            for (j, v) in m.iter_mut().enumerate().take(d) {
                *v = members.iter().map(|&i| points.get(i, j)).sum::<f64>() / members.len() as f64;
            }
        }
    }
    labels
}

/// Points around `k` well separated centres, with their true labels.
pub fn blobs(n: usize, dim: usize, k: usize, spread: f64, seed: u64) -> (Matrix, Vec<usize>) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..dim).map(|_| r.random_range(-10.0..10.0)).collect())
        .collect();
    let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    let mut data = Vec::with_capacity(n * dim);
    for &l in &labels {
        for c in &centres[l] {
            data.push(c + spread * r.random_range(-1.0..1.0));
        }
    }
    (Matrix::new(n, dim, data).unwrap(), labels)
}

pub fn sine(freq: f64, len: usize, rate: u32, amp: f64) -> Vec<f64> {
    (0..len)
        .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin())
        .collect()
}

pub fn noise(len: usize, seed: u64) -> Vec<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| r.random_range(-1.0..1.0)).collect()
}

/// Error energy relative to reference energy, in dB.
pub fn rel_err_db(est: &[f64], reference: &[f64]) -> f64 {
    let e: f64 = est.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum();
    let r: f64 = reference.iter().map(|b| b * b).sum();
    10.0 * (e / r).log10()
}
