//! Ground-truth-free confidence scoring for clustering-based source separation.
//!
//! A deep-clustering style separator maps every time-frequency bin of a
//! mixture spectrogram to an embedding vector and then clusters those vectors;
//! each cluster becomes one separated source. This crate scores how
//! *clusterable* such an embedding field is, without access to reference
//! signals, and uses that score to pick the best output among several
//! candidate models.
//!
//! The score for an embedding field `X` clustered into `K` groups is
//!
//! ```text
//! C(X) = S(X) * P(X)
//! ```
//!
//! where `S` is the mean silhouette over a sample drawn from the loudest bins
//! and `P` is the posterior strength of the soft K-means responsibilities over
//! the same loud pool, rescaled so that a uniform posterior maps to 0 and a
//! one-hot posterior maps to 1.
//!
//! ## Pipeline
//!
//! ```text
//! Waveform -> stft -> TfRepr --------------------------+
//!                                                      |
//! EmbeddingField -> soft_kmeans -> ClusterResult -> masks -> istft -> sources
//!                                       |
//!                                       +-> confidence (S, P, C)
//! ```
//!
//! ## Features
//!
//! - `parallel` (default): data-parallel inner loops through rayon. Disabling
//!   it gives a purely sequential build with bitwise-identical results.

pub mod bench;
pub mod clustering;
pub mod confidence;
pub mod embedding;
pub mod ensemble;
pub mod error;
pub mod evaluation;
pub mod matrix;
mod par;
pub mod seed;
pub mod separation;
pub mod synth;
pub mod tf;
pub mod wav;

pub use clustering::{kmeanspp_init, soft_kmeans, ClusterResult, Init, SoftKMeansConfig};
pub use confidence::{
    confidence, posterior_strength, posterior_strength_point, silhouette_point, silhouette_score,
    ConfidenceConfig, ConfidenceReport, SilhouetteSample,
};
pub use embedding::{
    blob_embed, oracle_embed, read_emb, write_emb, EmbeddingField, EmbeddingSource, Sidecar,
    SourceKind,
};
pub use ensemble::{
    rank_candidates, select, Candidate, CandidateOutcome, PipelineConfig, SelectionReport,
    Strategy,
};
pub use error::{Error, Result};
pub use evaluation::{eval_separation, pearson, selection_stats, si_sdr, EvalResult, SelectionStats};
pub use matrix::Matrix;
pub use separation::{
    apply_masks, masks_from_posteriors, separate, MaskKind, MaskSet, SeparationConfig,
    SeparationResult,
};
pub use synth::{make_mixture, MixSpec, Mixture, SignalKind};
pub use tf::{istft, loudest_bins, magnitude, resample, stft, StftParams, TfRepr, Waveform, WindowKind};

/// Default embedding dimensionality of the reference networks.
pub const DEFAULT_EMBEDDING_DIM: usize = 20;

/// Default analysis sample rate in Hz.
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;
