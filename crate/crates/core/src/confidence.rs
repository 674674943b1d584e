//! Clusterability confidence: sampled silhouette times posterior strength.
//!
//! For an embedding field clustered into `K >= 2` groups:
//!
//! * the loud pool is the `ceil(p * T * F)` loudest bins of the mixture
//!   magnitude (`p` = 1% by default);
//! * `S` is the mean silhouette of up to `N` (default 1000) points drawn
//!   uniformly without replacement from the pool, with clusters given by the
//!   hard labels of the sampled points;
//! * `P` is the mean of `(K * max_k gamma_ik - 1) / (K - 1)` over the whole pool;
//! * `C = S * P`.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::clustering::ClusterResult;
use crate::embedding::EmbeddingField;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::par;
use crate::seed::rng;
use crate::tf::loudest_bins;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    #[default]
    Euclidean,
}

impl Distance {
    #[inline]
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Distance::Euclidean => crate::matrix::sq_dist(a, b).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceConfig {
    pub sample_size: usize,
    pub loud_percentile: f64,
    pub seed: u64,
    #[serde(default)]
    pub distance: Distance,
}

impl Default for ConfidenceConfig {
    fn default() -> Self {
        Self {
            sample_size: 1000,
            loud_percentile: 0.01,
            seed: 0,
            distance: Distance::Euclidean,
        }
    }
}

impl ConfidenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_size < 2 {
            return Err(Error::InvalidArgument(format!(
                "sample_size must be >= 2, got {}",
                self.sample_size
            )));
        }
        if !(self.loud_percentile > 0.0 && self.loud_percentile <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "loud_percentile must be in (0, 1], got {}",
                self.loud_percentile
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceReport {
    pub silhouette: f64,
    pub posterior_strength: f64,
    pub confidence: f64,
    pub k: usize,
    pub sample_size_used: usize,
    #[serde(rename = "loud_pool_size")]
    pub loud_indices_count: usize,
    pub seed: u64,
    /// Flat TF indices used for the silhouette, ascending.
    #[serde(skip)]
    pub sampled_indices: Vec<usize>,
    /// Silhouette of each sampled point, aligned with `sampled_indices`.
    #[serde(skip)]
    pub per_point_silhouette: Vec<f64>,
}

/// Per-point silhouettes of a labelled point set using Euclidean distance.
///
/// `a` is the mean distance to the other members of the point's cluster,
/// `b` the smallest mean distance to another non-empty cluster, and
/// `s = (b - a) / max(a, b)`. A point alone in its cluster scores 0, as does a
/// point with `a = b = 0`.
pub fn sample_silhouettes(points: &Matrix, labels: &[usize]) -> Result<Vec<f64>> {
    sample_silhouettes_with(points, labels, Distance::Euclidean)
}

fn sample_silhouettes_with(points: &Matrix, labels: &[usize], dist: Distance) -> Result<Vec<f64>> {
    let counts = cluster_counts(points, labels)?;
    Ok(par::map_range(points.rows(), |i| silhouette_of(i, points, labels, &counts, dist)))
}

fn cluster_counts(points: &Matrix, labels: &[usize]) -> Result<Vec<usize>> {
    if labels.len() != points.rows() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {} points",
            labels.len(),
            points.rows()
        )));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    if counts.iter().filter(|c| **c > 0).count() < 2 {
        return Err(Error::DegenerateClustering);
    }
    Ok(counts)
}

fn silhouette_of(i: usize, points: &Matrix, labels: &[usize], counts: &[usize], dist: Distance) -> f64 {
    let own = labels[i];
    if counts[own] == 1 {
        return 0.0;
    }
    let mut sums = vec![0.0; counts.len()];
    let x = points.row(i);
    for (j, &l) in labels.iter().enumerate() {
        if j != i {
            sums[l] += dist.eval(x, points.row(j));
        }
    }
    let a = sums[own] / (counts[own] - 1) as f64;
    let b = sums
        .iter()
        .zip(counts)
        .enumerate()
        .filter(|(c, (_, n))| *c != own && **n > 0)
        .map(|(_, (s, n))| s / *n as f64)
        .fold(f64::INFINITY, f64::min);
    let denom = a.max(b);
    if denom <= 0.0 {
        0.0
    } else {
        ((b - a) / denom).clamp(-1.0, 1.0)
    }
}

/// Silhouette of point `i` within a labelled sample.
pub fn silhouette_point(i: usize, points: &Matrix, labels: &[usize]) -> Result<f64> {
    if i >= points.rows() {
        return Err(Error::InvalidArgument(format!(
            "point {i} out of range for {} points",
            points.rows()
        )));
    }
    let counts = cluster_counts(points, labels)?;
    Ok(silhouette_of(i, points, labels, &counts, Distance::Euclidean))
}

/// Posterior strength of one point: `(K * max_k gamma_k - 1) / (K - 1)`.
pub fn posterior_strength_point(gamma: &[f64]) -> Result<f64> {
    let k = gamma.len();
    if k < 2 {
        return Err(Error::InvalidArgument(format!("posterior strength needs K >= 2, got {k}")));
    }
    let max = gamma.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(((k as f64 * max - 1.0) / (k as f64 - 1.0)).clamp(0.0, 1.0))
}

/// Mean posterior strength over `loud_indices`.
pub fn posterior_strength(result: &ClusterResult, loud_indices: &[usize]) -> Result<f64> {
    if result.k() < 2 {
        return Err(Error::InvalidArgument(format!(
            "posterior strength needs K >= 2, got {}",
            result.k()
        )));
    }
    if loud_indices.is_empty() {
        return Err(Error::InvalidArgument("empty loud pool".into()));
    }
    let n = result.posteriors.rows();
    let mut sum = 0.0;
    for &i in loud_indices {
        if i >= n {
            return Err(Error::ShapeMismatch(format!("index {i} outside {n} posterior rows")));
        }
        sum += posterior_strength_point(result.posteriors.row(i))?;
    }
    Ok(sum / loud_indices.len() as f64)
}

/// Outcome of the sampled silhouette computation.
#[derive(Debug, Clone, PartialEq)]
pub struct SilhouetteSample {
    pub score: f64,
    pub sampled_indices: Vec<usize>,
    pub per_point: Vec<f64>,
    pub loud_pool: Vec<usize>,
}

fn check_shapes(field: &EmbeddingField, result: &ClusterResult, mag: &Matrix) -> Result<()> {
    if (mag.rows(), mag.cols()) != (field.frames(), field.bins()) {
        return Err(Error::ShapeMismatch(format!(
            "magnitude is {}x{}, embedding grid is {}",
            mag.rows(),
            mag.cols(),
            field.shape_string()
        )));
    }
    if result.posteriors.rows() != field.len() || result.hard_labels.len() != field.len() {
        return Err(Error::ShapeMismatch(format!(
            "clustering has {} points, embedding grid has {}",
            result.posteriors.rows(),
            field.len()
        )));
    }
    Ok(())
}

pub fn silhouette_score(
    field: &EmbeddingField,
    result: &ClusterResult,
    mag: &Matrix,
    cfg: &ConfidenceConfig,
) -> Result<SilhouetteSample> {
    cfg.validate()?;
    check_shapes(field, result, mag)?;
    let loud_pool = loudest_bins(mag, cfg.loud_percentile)?;
    if loud_pool.len() < 2 {
        return Err(Error::DegenerateClustering);
    }
    let amount = cfg.sample_size.min(loud_pool.len());
    let mut sampled: Vec<usize> = index::sample(&mut rng(cfg.seed), loud_pool.len(), amount)
        .into_iter()
        .map(|j| loud_pool[j])
        .collect();
    sampled.sort_unstable();

    let points = field.gather(&sampled);
    let labels: Vec<usize> = sampled.iter().map(|&i| result.hard_labels[i]).collect();
    let per_point = sample_silhouettes_with(&points, &labels, cfg.distance)?;
    let score = per_point.iter().sum::<f64>() / per_point.len() as f64;
    Ok(SilhouetteSample {
        score,
        sampled_indices: sampled,
        per_point,
        loud_pool,
    })
}

pub fn confidence(
    field: &EmbeddingField,
    result: &ClusterResult,
    mag: &Matrix,
    cfg: &ConfidenceConfig,
) -> Result<ConfidenceReport> {
    let sil = silhouette_score(field, result, mag, cfg)?;
    let p = posterior_strength(result, &sil.loud_pool)?;
    let report = ConfidenceReport {
        silhouette: sil.score,
        posterior_strength: p,
        confidence: sil.score * p,
        k: result.k(),
        sample_size_used: sil.sampled_indices.len(),
        loud_indices_count: sil.loud_pool.len(),
        seed: cfg.seed,
        sampled_indices: sil.sampled_indices,
        per_point_silhouette: sil.per_point,
    };
    debug_assert!((-1.0..=1.0).contains(&report.silhouette));
    debug_assert!((0.0..=1.0).contains(&report.posterior_strength));
    Ok(report)
}
