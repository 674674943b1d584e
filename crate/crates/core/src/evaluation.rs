//! Reference-based metrics and selection statistics.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tf::Waveform;

/// Reported SI-SDR is clamped to `[-SDR_CAP_DB, SDR_CAP_DB]`.
pub const SDR_CAP_DB: f64 = 100.0;

/// Residual energy at or below this fraction of the target energy counts as
/// a perfect reconstruction.
const PERFECT_RESIDUAL: f64 = 1e-10;

/// Largest source count resolved by exhaustive permutation search.
const MAX_PERMUTATION_K: usize = 8;

/// Scale-invariant signal-to-distortion ratio in dB.
///
/// ```text
/// alpha  = <est, ref> / |ref|^2
/// SI-SDR = 10 log10(|alpha ref|^2 / |alpha ref - est|^2)
/// ```
///
/// Clamped to +/-100 dB; a zero estimate scores -100 dB.
pub fn si_sdr(estimate: &Waveform, reference: &Waveform) -> Result<f64> {
    si_sdr_slices(estimate.samples(), reference.samples())
}

pub fn si_sdr_slices(est: &[f64], reference: &[f64]) -> Result<f64> {
    if est.len() != reference.len() {
        return Err(Error::LengthMismatch(format!(
            "estimate has {} samples, reference {}",
            est.len(),
            reference.len()
        )));
    }
    let ref_energy: f64 = reference.iter().map(|s| s * s).sum();
    if ref_energy == 0.0 {
        return Err(Error::ZeroReference);
    }
    let dot: f64 = est.iter().zip(reference).map(|(e, r)| e * r).sum();
    let alpha = dot / ref_energy;
    let (mut target, mut residual) = (0.0, 0.0);
    for (e, r) in est.iter().zip(reference) {
        let t = alpha * r;
        target += t * t;
        residual += (t - e) * (t - e);
    }
    if target == 0.0 {
        return Ok(-SDR_CAP_DB);
    }
    if residual <= PERFECT_RESIDUAL * target {
        return Ok(SDR_CAP_DB);
    }
    Ok((10.0 * (target / residual).log10()).clamp(-SDR_CAP_DB, SDR_CAP_DB))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// SI-SDR of each reference against its matched estimate, in reference order.
    pub per_source_sdr: Vec<f64>,
    pub mean_sdr: f64,
    /// `permutation[r]` is the estimate index matched to reference `r`.
    pub permutation: Vec<usize>,
}

/// Matches estimates to references by exhaustive search over permutations,
/// maximizing mean SI-SDR. The first permutation in lexicographic order wins
/// exact ties.
pub fn eval_separation(estimates: &[Waveform], references: &[Waveform]) -> Result<EvalResult> {
    let k = references.len();
    if estimates.len() != k {
        return Err(Error::LengthMismatch(format!(
            "{} estimates for {k} references",
            estimates.len()
        )));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("no references".into()));
    }
    if k > MAX_PERMUTATION_K {
        return Err(Error::InvalidArgument(format!(
            "exhaustive permutation search supports at most {MAX_PERMUTATION_K} sources, got {k}"
        )));
    }
    // sdr[r][e]
    let mut sdr = vec![vec![0.0; k]; k];
    for (r, reference) in references.iter().enumerate() {
        for (e, est) in estimates.iter().enumerate() {
            sdr[r][e] = si_sdr(est, reference)?;
        }
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for perm in (0..k).permutations(k) {
        let total: f64 = perm.iter().enumerate().map(|(r, &e)| sdr[r][e]).sum();
        if best.as_ref().is_none_or(|(b, _)| total > *b) {
            best = Some((total, perm));
        }
    }
    let (_, permutation) = best.expect("k >= 1 yields a permutation");
    let per_source_sdr: Vec<f64> = permutation.iter().enumerate().map(|(r, &e)| sdr[r][e]).collect();
    let mean_sdr = per_source_sdr.iter().sum::<f64>() / k as f64;
    Ok(EvalResult {
        per_source_sdr,
        mean_sdr,
        permutation,
    })
}

/// Pearson product-moment correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch(format!("{} xs vs {} ys", xs.len(), ys.len())));
    }
    if xs.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "correlation needs at least 3 pairs, got {}",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::DegenerateVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStats {
    /// `confusion[predicted][true]`.
    pub confusion: Vec<Vec<usize>>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
}

impl SelectionStats {
    /// Fraction of trials on the diagonal.
    pub fn accuracy(&self) -> f64 {
        let total: usize = self.confusion.iter().flatten().sum();
        let diag: usize = (0..self.confusion.len()).map(|m| self.confusion[m][m]).sum();
        diag as f64 / total as f64
    }

    /// Number of trials per true label.
    pub fn per_domain_counts(&self) -> Vec<usize> {
        let m = self.confusion.len();
        (0..m).map(|t| (0..m).map(|p| self.confusion[p][t]).sum()).collect()
    }

    /// Builds statistics from an already tabulated `confusion[predicted][true]`.
    pub fn from_confusion(confusion: Vec<Vec<usize>>) -> Result<Self> {
        let m = confusion.len();
        if m == 0 || confusion.iter().any(|r| r.len() != m) {
            return Err(Error::ShapeMismatch("confusion matrix must be square and non-empty".into()));
        }
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = (0..m)
            .map(|p| ratio(confusion[p][p], confusion[p].iter().sum()))
            .collect();
        let recall = (0..m)
            .map(|t| ratio(confusion[t][t], (0..m).map(|p| confusion[p][t]).sum()))
            .collect();
        Ok(Self {
            confusion,
            precision,
            recall,
        })
    }
}

/// Tabulates `(true_label, predicted_label)` pairs over `m` labels.
///
/// Precision of label `j` is the fraction of trials predicted `j` that were
/// truly `j`; recall is the fraction of trials truly `j` predicted `j`. A
/// ratio with an empty denominator is reported as 0.
pub fn selection_stats(trials: &[(usize, usize)], m: usize) -> Result<SelectionStats> {
    if trials.is_empty() {
        return Err(Error::EmptyTrials);
    }
    let mut confusion = vec![vec![0usize; m]; m];
    for &(t, p) in trials {
        if t >= m || p >= m {
            return Err(Error::InvalidArgument(format!("label pair ({t}, {p}) outside {m} labels")));
        }
        confusion[p][t] += 1;
    }
    SelectionStats::from_confusion(confusion)
}
