//! Selecting one separation among several candidate models.
//!
//! Every candidate is always run to completion: separated, scored, and (when
//! references are available) evaluated. Strategies only differ in how the
//! final index is chosen.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::confidence::{confidence, ConfidenceConfig, ConfidenceReport};
use crate::embedding::{EmbeddingField, EmbeddingSource};
use crate::error::{Error, Result};
use crate::evaluation::{eval_separation, EvalResult};
use crate::par;
use crate::seed::rng;
use crate::separation::{separate_detailed, SeparationConfig, SeparationResult};
use crate::tf::{magnitude, Waveform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Highest confidence wins.
    Confidence,
    /// Highest mean SI-SDR against references wins; an upper bound.
    Oracle,
    /// Uniform seeded draw; a lower bound.
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Oracle, Strategy::Confidence, Strategy::Random];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Confidence => "confidence",
            Strategy::Oracle => "oracle",
            Strategy::Random => "random",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "confidence" => Ok(Strategy::Confidence),
            "oracle" => Ok(Strategy::Oracle),
            "random" => Ok(Strategy::Random),
            other => Err(Error::InvalidArgument(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub separation: SeparationConfig,
    pub confidence: ConfidenceConfig,
}

/// A candidate model's embedding of the mixture.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub source: EmbeddingSource,
    pub field: EmbeddingField,
}

#[derive(Debug, Clone)]
pub struct CandidateOutcome {
    pub source: EmbeddingSource,
    /// `None` exactly when the loud-bin sample collapsed to one cluster.
    pub confidence: Option<ConfidenceReport>,
    pub separation: SeparationResult,
    pub sdr: Option<EvalResult>,
}

impl CandidateOutcome {
    pub fn degenerate(&self) -> bool {
        self.confidence.is_none()
    }

    pub fn confidence_value(&self) -> Option<f64> {
        self.confidence.as_ref().map(|c| c.confidence)
    }
}

#[derive(Debug, Clone)]
pub struct SelectionReport {
    pub outcomes: Vec<CandidateOutcome>,
    pub chosen_index: usize,
    pub strategy: Strategy,
    pub seed: u64,
    /// Set when the confidence strategy found no non-degenerate candidate and
    /// fell back to index 0.
    pub all_degenerate: bool,
}

impl SelectionReport {
    pub fn chosen(&self) -> &CandidateOutcome {
        &self.outcomes[self.chosen_index]
    }

    pub fn summary(&self) -> SelectionSummary {
        SelectionSummary {
            strategy: self.strategy,
            chosen_index: self.chosen_index,
            chosen_name: self.chosen().source.name.clone(),
            seed: self.seed,
            all_degenerate: self.all_degenerate,
            candidates: self
                .outcomes
                .iter()
                .map(|o| CandidateSummary {
                    name: o.source.name.clone(),
                    confidence: o.confidence.as_ref().map(|c| c.confidence),
                    silhouette: o.confidence.as_ref().map(|c| c.silhouette),
                    posterior_strength: o.confidence.as_ref().map(|c| c.posterior_strength),
                    degenerate: o.degenerate(),
                    mean_sdr: o.sdr.as_ref().map(|e| e.mean_sdr),
                })
                .collect(),
        }
    }
}

/// JSON view of a [`SelectionReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub strategy: Strategy,
    pub chosen_index: usize,
    pub chosen_name: String,
    pub seed: u64,
    pub all_degenerate: bool,
    pub candidates: Vec<CandidateSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub name: String,
    pub confidence: Option<f64>,
    pub silhouette: Option<f64>,
    pub posterior_strength: Option<f64>,
    pub degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_sdr: Option<f64>,
}

/// Runs separation, confidence, and optional evaluation for every candidate.
/// Outcomes are returned in candidate order.
pub fn evaluate_candidates(
    mixture: &Waveform,
    candidates: &[Candidate],
    cfg: &PipelineConfig,
    references: Option<&[Waveform]>,
) -> Result<Vec<CandidateOutcome>> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidates".into()));
    }
    let mut seen = HashSet::new();
    for c in candidates {
        if c.source.name.is_empty() {
            return Err(Error::InvalidArgument("candidate name must be non-empty".into()));
        }
        if !seen.insert(c.source.name.as_str()) {
            return Err(Error::InvalidArgument(format!("duplicate candidate name {:?}", c.source.name)));
        }
    }
    par::map_range(candidates.len(), |i| evaluate_candidate(mixture, &candidates[i], cfg, references))
        .into_iter()
        .collect()
}

/// Separation, confidence, and optional evaluation for one candidate. A
/// degenerate clustering yields an outcome without a confidence report.
pub fn evaluate_candidate(
    mixture: &Waveform,
    candidate: &Candidate,
    cfg: &PipelineConfig,
    references: Option<&[Waveform]>,
) -> Result<CandidateOutcome> {
    let det = separate_detailed(mixture, &candidate.field, &cfg.separation, &candidate.source.name)?;
    let mag = magnitude(&det.mixture_tf);
    let conf = match confidence(&candidate.field, &det.clusters, &mag, &cfg.confidence) {
        Ok(r) => Some(r),
        Err(Error::DegenerateClustering) => None,
        Err(e) => return Err(e),
    };
    let sdr = references
        .map(|refs| eval_separation(&det.result.sources, refs))
        .transpose()?;
    Ok(CandidateOutcome {
        source: candidate.source.clone(),
        confidence: conf,
        separation: det.result,
        sdr,
    })
}

/// Candidate order by descending confidence; `None` (degenerate) last; ties
/// keep input order.
pub fn rank_by_confidence(confidences: &[Option<f64>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..confidences.len()).collect();
    order.sort_by(|&a, &b| match (confidences[a], confidences[b]) {
        (Some(x), Some(y)) => y.partial_cmp(&x).unwrap_or(std::cmp::Ordering::Equal),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    order
}

pub fn rank_candidates(outcomes: &[CandidateOutcome]) -> Vec<usize> {
    let c: Vec<Option<f64>> = outcomes.iter().map(CandidateOutcome::confidence_value).collect();
    rank_by_confidence(&c)
}

/// Picks an index under `strategy`. Returns `(index, all_degenerate)`.
pub fn choose(outcomes: &[CandidateOutcome], strategy: Strategy, seed: u64) -> Result<(usize, bool)> {
    if outcomes.is_empty() {
        return Err(Error::InvalidArgument("no candidates".into()));
    }
    match strategy {
        Strategy::Confidence => {
            let all_degenerate = outcomes.iter().all(CandidateOutcome::degenerate);
            Ok((rank_candidates(outcomes)[0], all_degenerate))
        }
        Strategy::Oracle => {
            let sdrs = outcomes
                .iter()
                .map(|o| o.sdr.as_ref().map(|e| e.mean_sdr))
                .collect::<Option<Vec<f64>>>()
                .ok_or(Error::MissingReferences)?;
            Ok((argmax_first(&sdrs), false))
        }
        Strategy::Random => Ok((random_index(outcomes.len(), seed), false)),
    }
}

/// Uniform draw in `0..m` from a generator seeded with `seed`.
pub fn random_index(m: usize, seed: u64) -> usize {
    rng(seed).random_range(0..m)
}

fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Runs all candidates and chooses one.
pub fn select(
    mixture: &Waveform,
    candidates: &[Candidate],
    strategy: Strategy,
    cfg: &PipelineConfig,
    references: Option<&[Waveform]>,
    seed: u64,
) -> Result<SelectionReport> {
    if strategy == Strategy::Oracle && references.is_none() {
        return Err(Error::MissingReferences);
    }
    let outcomes = evaluate_candidates(mixture, candidates, cfg, references)?;
    let (chosen_index, all_degenerate) = choose(&outcomes, strategy, seed)?;
    if all_degenerate {
        log::warn!("all {} candidates produced degenerate clusterings", outcomes.len());
    }
    Ok(SelectionReport {
        outcomes,
        chosen_index,
        strategy,
        seed,
        all_degenerate,
    })
}
