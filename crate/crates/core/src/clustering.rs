//! Soft K-means with exponential responsibilities.
//!
//! ```text
//! gamma_ik = exp(-beta * |x_i - mu_k|^2) / sum_l exp(-beta * |x_i - mu_l|^2)
//! mu_k     = sum_i gamma_ik x_i / sum_i gamma_ik
//! ```
//!
//! Responsibilities are evaluated with a log-sum-exp shift. The recorded
//! objective is the soft K-means free energy
//!
//! ```text
//! F = sum_ik gamma_ik |x_i - mu_k|^2 + (1 / beta) sum_ik gamma_ik ln gamma_ik
//! ```
//!
//! which both steps minimize, so that trace never increases. Its first term,
//! the soft-assignment distortion, is recorded separately; it has no such
//! guarantee at finite stiffness, and the two agree as posteriors harden.
//!
//! Reductions over points are formed per fixed block of rows and combined in
//! block order, so results do not depend on the number of worker threads.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{sq_dist, Matrix};
use crate::par;
use crate::seed::rng;

/// A cluster whose total responsibility falls below this is treated as empty.
const EMPTY_MASS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    KMeansPlusPlus,
    Provided(Matrix),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftKMeansConfig {
    pub k: usize,
    /// Inverse temperature `beta`.
    pub stiffness: f64,
    pub max_iters: usize,
    /// Stop once the mean centroid displacement of an iteration drops below this.
    pub tol: f64,
    pub seed: u64,
    pub init: Init,
}

impl Default for SoftKMeansConfig {
    fn default() -> Self {
        Self {
            k: 2,
            stiffness: 5.0,
            max_iters: 300,
            tol: 1e-4,
            seed: 0,
            init: Init::KMeansPlusPlus,
        }
    }
}

impl SoftKMeansConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidArgument(format!("k must be >= 2, got {}", self.k)));
        }
        if !(self.stiffness > 0.0 && self.stiffness.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "stiffness must be positive and finite, got {}",
                self.stiffness
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be > 0, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    /// K x D cluster means.
    pub means: Matrix,
    /// N x K responsibilities; rows sum to one.
    pub posteriors: Matrix,
    /// Argmax of each posterior row, lowest index on ties.
    pub hard_labels: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    /// Free energy after initialization and after every iteration.
    pub objective_trace: Vec<f64>,
    /// Soft distortion `sum_ik gamma_ik |x_i - mu_k|^2` at the same points.
    pub distortion_trace: Vec<f64>,
    /// Number of empty-cluster rescues performed.
    pub reseeded: usize,
}

impl ClusterResult {
    pub fn k(&self) -> usize {
        self.posteriors.cols()
    }

    /// Builds a result from given posteriors, deriving hard labels. Means are
    /// left empty; useful for scoring externally produced clusterings.
    pub fn from_posteriors(posteriors: Matrix) -> Result<Self> {
        for (i, row) in posteriors.iter_rows().enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-6 || row.iter().any(|g| !(0.0..=1.0).contains(g)) {
                return Err(Error::InvalidArgument(format!(
                    "posterior row {i} is not a distribution"
                )));
            }
        }
        let hard_labels = posteriors.iter_rows().map(argmax).collect();
        Ok(Self {
            means: Matrix::zeros(posteriors.cols(), 0),
            posteriors,
            hard_labels,
            iterations: 0,
            converged: true,
            objective_trace: Vec::new(),
            distortion_trace: Vec::new(),
            reseeded: 0,
        })
    }

    /// One-hot posteriors for the given labels.
    pub fn from_labels(labels: &[usize], k: usize) -> Result<Self> {
        let mut post = Matrix::zeros(labels.len(), k);
        for (i, &l) in labels.iter().enumerate() {
            if l >= k {
                return Err(Error::InvalidArgument(format!("label {l} >= k {k}")));
            }
            post.set(i, l, 1.0);
        }
        Self::from_posteriors(post)
    }
}

/// Index of the largest value, lowest index on exact ties.
pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = k;
        }
    }
    best
}

/// D^2-weighted seeding.
pub fn kmeanspp_init(points: &Matrix, k: usize, seed: u64) -> Result<Matrix> {
    let n = points.rows();
    if n < k {
        return Err(Error::TooFewPoints { n, k });
    }
    if k == 0 {
        return Ok(Matrix::zeros(0, points.cols()));
    }
    let mut r = rng(seed);
    let mut means = Matrix::zeros(k, points.cols());
    let first = r.random_range(0..n);
    means.row_mut(0).copy_from_slice(points.row(first));
    let mut d2: Vec<f64> = par::map_range(n, |i| sq_dist(points.row(i), points.row(first)));
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = r.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, w) in d2.iter().enumerate() {
                acc += w;
                if acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave target just above the final partial sum.
            pick.unwrap_or_else(|| d2.iter().rposition(|w| *w > 0.0).expect("total > 0"))
        } else {
            r.random_range(0..n)
        };
        means.row_mut(c).copy_from_slice(points.row(pick));
        let chosen = points.row(pick);
        let updated = par::map_range(n, |i| d2[i].min(sq_dist(points.row(i), chosen)));
        d2 = updated;
    }
    Ok(means)
}

struct BlockStats {
    sums: Vec<f64>,
    mass: Vec<f64>,
    energy: f64,
    distortion: f64,
}

/// E-step into `post`, returning per-block sufficient statistics for the
/// following M-step.
fn e_step(points: &Matrix, means: &Matrix, beta: f64, post: &mut Matrix) -> BlockStats {
    let k = means.rows();
    let dim = points.cols();
    let blocks = par::map_chunks_mut(post.as_mut_slice(), par::BLOCK_ROWS * k, |b, chunk| {
        let start = b * par::BLOCK_ROWS;
        let mut stats = BlockStats {
            sums: vec![0.0; k * dim],
            mass: vec![0.0; k],
            energy: 0.0,
            distortion: 0.0,
        };
        let mut d2 = vec![0.0; k];
        let mut logit = vec![0.0; k];
        let mut ex = vec![0.0; k];
        for (r, prow) in chunk.chunks_exact_mut(k).enumerate() {
            let x = points.row(start + r);
            for c in 0..k {
                d2[c] = sq_dist(x, means.row(c));
                logit[c] = -beta * d2[c];
            }
            let m = logit.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for l in logit.iter_mut() {
                *l -= m;
            }
            for c in 0..k {
                ex[c] = logit[c].exp();
            }
            let z: f64 = ex.iter().sum();
            let ln_z = z.ln();
            for c in 0..k {
                let log_g = logit[c] - ln_z;
                let g = ex[c] / z;
                prow[c] = g;
                stats.energy += g * d2[c] + g * log_g / beta;
                stats.distortion += g * d2[c];
                stats.mass[c] += g;
                if g > 0.0 {
                    for (s, xv) in stats.sums[c * dim..(c + 1) * dim].iter_mut().zip(x) {
                        *s += g * xv;
                    }
                }
            }
        }
        stats
    });
    let mut total = BlockStats {
        sums: vec![0.0; k * dim],
        mass: vec![0.0; k],
        energy: 0.0,
        distortion: 0.0,
    };
    for b in blocks {
        for (t, s) in total.sums.iter_mut().zip(&b.sums) {
            *t += s;
        }
        for (t, s) in total.mass.iter_mut().zip(&b.mass) {
            *t += s;
        }
        total.energy += b.energy;
        total.distortion += b.distortion;
    }
    total
}

pub fn soft_kmeans(points: &Matrix, cfg: &SoftKMeansConfig) -> Result<ClusterResult> {
    cfg.validate()?;
    let (n, dim, k) = (points.rows(), points.cols(), cfg.k);
    if n < k {
        return Err(Error::TooFewPoints { n, k });
    }
    if !points.all_finite() {
        return Err(Error::NonFinite("clustering input".into()));
    }
    let mut means = match &cfg.init {
        Init::KMeansPlusPlus => kmeanspp_init(points, k, cfg.seed)?,
        Init::Provided(m) => {
            if m.rows() != k || m.cols() != dim {
                return Err(Error::ShapeMismatch(format!(
                    "initial means are {}x{}, expected {k}x{dim}",
                    m.rows(),
                    m.cols()
                )));
            }
            m.clone()
        }
    };

    let beta = cfg.stiffness;
    let mut post = Matrix::zeros(n, k);
    let mut stats = e_step(points, &means, beta, &mut post);
    let mut trace = vec![stats.energy];
    let mut distortion = vec![stats.distortion];
    let mut converged = false;
    let mut iterations = 0;
    let mut reseeded = 0;

    for iter in 1..=cfg.max_iters {
        let mut next = Matrix::zeros(k, dim);
        let mut taken: Vec<usize> = Vec::new();
        for c in 0..k {
            if stats.mass[c] > EMPTY_MASS {
                for (m, s) in next.row_mut(c).iter_mut().zip(&stats.sums[c * dim..(c + 1) * dim]) {
                    *m = s / stats.mass[c];
                }
            } else {
                let far = farthest_point(points, &means, &post, &taken);
                log::warn!("soft k-means: cluster {c} is empty at iteration {iter}; reseeding to point {far}");
                next.row_mut(c).copy_from_slice(points.row(far));
                taken.push(far);
                reseeded += 1;
            }
        }
        let movement = (0..k)
            .map(|c| sq_dist(next.row(c), means.row(c)).sqrt())
            .sum::<f64>()
            / k as f64;
        means = next;
        stats = e_step(points, &means, beta, &mut post);
        trace.push(stats.energy);
        distortion.push(stats.distortion);
        iterations = iter;
        if movement < cfg.tol {
            converged = true;
            break;
        }
    }

    let hard_labels = post.iter_rows().map(argmax).collect();
    Ok(ClusterResult {
        means,
        posteriors: post,
        hard_labels,
        iterations,
        converged,
        objective_trace: trace,
        distortion_trace: distortion,
        reseeded,
    })
}

/// Point farthest from the mean of its current hard cluster, skipping points
/// already used for a rescue in this iteration.
fn farthest_point(points: &Matrix, means: &Matrix, post: &Matrix, taken: &[usize]) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..points.rows() {
        if taken.contains(&i) {
            continue;
        }
        let d = sq_dist(points.row(i), means.row(argmax(post.row(i))));
        if d > best.1 {
            best = (i, d);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn blobs(centers: &[[f64; 2]], per: usize, spread: f64, seed: u64) -> (Matrix, Vec<usize>) {
        let mut r = rng(seed);
        let noise = Normal::new(0.0, spread).unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, ctr) in centers.iter().enumerate() {
            for _ in 0..per {
                rows.push(vec![ctr[0] + noise.sample(&mut r), ctr[1] + noise.sample(&mut r)]);
                labels.push(c);
            }
        }
        (Matrix::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn config_validation() {
        let p = Matrix::zeros(4, 2);
        for cfg in [
            SoftKMeansConfig { k: 1, ..Default::default() },
            SoftKMeansConfig { stiffness: 0.0, ..Default::default() },
            SoftKMeansConfig { max_iters: 0, ..Default::default() },
            SoftKMeansConfig { tol: 0.0, ..Default::default() },
        ] {
            assert!(matches!(soft_kmeans(&p, &cfg), Err(Error::InvalidArgument(_))));
        }
        assert!(matches!(
            soft_kmeans(&Matrix::zeros(1, 2), &SoftKMeansConfig::default()),
            Err(Error::TooFewPoints { n: 1, k: 2 })
        ));
        let nan = Matrix::new(2, 1, vec![0.0, f64::NAN]).unwrap();
        assert!(matches!(soft_kmeans(&nan, &SoftKMeansConfig::default()), Err(Error::NonFinite(_))));
    }

    #[test]
    fn separated_blobs_give_one_hot_posteriors() {
        // Responsibility of the far cluster is about exp(-5 * 100) ~ 1e-217.
        let centers = [[0.0, 0.0], [10.0, 0.0]];
        let (pts, truth) = blobs(&centers, 100, 0.01, 4);
        let res = soft_kmeans(&pts, &SoftKMeansConfig::default()).unwrap();
        for row in res.posteriors.iter_rows() {
            assert!(row.iter().all(|g| *g < 1e-6 || *g > 1.0 - 1e-6));
        }
        for c in 0..2 {
            let m = res.means.row(c);
            let nearest = centers
                .iter()
                .map(|ct| ((m[0] - ct[0]).powi(2) + (m[1] - ct[1]).powi(2)).sqrt())
                .fold(f64::MAX, f64::min);
            assert!(nearest < 0.01);
        }
        // Same partition as the truth, up to relabeling.
        let map = res.hard_labels[0];
        for (l, t) in res.hard_labels.iter().zip(&truth) {
            assert_eq!(*l == map, *t == 0);
        }
        assert!(res.converged);
    }

    #[test]
    fn n_equals_k_is_a_fixed_point() {
        let pts = Matrix::from_rows(&[[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]]).unwrap();
        let cfg = SoftKMeansConfig { k: 3, ..Default::default() };
        let res = soft_kmeans(&pts, &cfg).unwrap();
        let mut labels = res.hard_labels.clone();
        labels.sort_unstable();
        assert_eq!(labels, vec![0, 1, 2]);
        assert!(res.objective_trace.last().unwrap().abs() < 1e-12);
        for row in res.posteriors.iter_rows() {
            assert!(row.iter().cloned().fold(0.0, f64::max) > 1.0 - 1e-12);
        }
    }

    #[test]
    fn kmeanspp_edge_cases() {
        let pts = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        let means = kmeanspp_init(&pts, 3, 7).unwrap();
        let mut rows: Vec<Vec<f64>> = means.iter_rows().map(|r| r.to_vec()).collect();
        rows.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(rows, vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);

        let same = Matrix::from_rows(&[[0.5, 0.5]; 5]).unwrap();
        let means = kmeanspp_init(&same, 3, 1).unwrap();
        assert!(means.iter_rows().all(|r| r == [0.5, 0.5]));

        assert!(matches!(kmeanspp_init(&pts, 4, 0), Err(Error::TooFewPoints { .. })));
    }

    #[test]
    fn kmeanspp_splits_far_blobs() {
        let (pts, truth) = blobs(&[[0.0, 0.0], [100.0, 0.0]], 50, 1.0, 2);
        let mut split = 0;
        for seed in 0..1000 {
            let m = kmeanspp_init(&pts, 2, seed).unwrap();
            if (m.get(0, 0) < 50.0) != (m.get(1, 0) < 50.0) {
                split += 1;
            }
        }
        assert!(split >= 990, "{split}");
        assert_eq!(truth.len(), 100);
    }

    #[test]
    fn provided_init_shape_checked() {
        let pts = Matrix::zeros(5, 3);
        let cfg = SoftKMeansConfig {
            init: Init::Provided(Matrix::zeros(2, 2)),
            ..Default::default()
        };
        assert!(matches!(soft_kmeans(&pts, &cfg), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn empty_cluster_is_reseeded() {
        // Second initial mean far from everything: its responsibility underflows.
        let (pts, _) = blobs(&[[0.0, 0.0], [1.0, 0.0]], 20, 0.05, 8);
        let cfg = SoftKMeansConfig {
            init: Init::Provided(Matrix::from_rows(&[[0.5, 0.0], [1e3, 1e3]]).unwrap()),
            ..Default::default()
        };
        let res = soft_kmeans(&pts, &cfg).unwrap();
        assert!(res.reseeded >= 1);
        assert!(res.means.row(1)[0] < 10.0);
    }

    #[test]
    fn from_labels_round_trip() {
        let r = ClusterResult::from_labels(&[0, 2, 1, 2], 3).unwrap();
        assert_eq!(r.hard_labels, vec![0, 2, 1, 2]);
        assert_eq!(r.k(), 3);
        assert!(ClusterResult::from_labels(&[3], 3).is_err());
        let bad = Matrix::from_rows(&[[0.7, 0.7]]).unwrap();
        assert!(ClusterResult::from_posteriors(bad).is_err());
    }
}
