//! Mask-based separation from cluster posteriors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clustering::{soft_kmeans, ClusterResult, SoftKMeansConfig};
use crate::embedding::EmbeddingField;
use crate::error::{Error, Result};
use crate::par;
use crate::tf::{istft, stft, StftParams, TfRepr, Waveform};
use crate::wav::{write_wav, WavEncoding};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    /// Posteriors used directly.
    #[default]
    Soft,
    /// One-hot of the hard label.
    Binary,
}

impl std::str::FromStr for MaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "soft" => Ok(MaskKind::Soft),
            "binary" => Ok(MaskKind::Binary),
            other => Err(Error::InvalidArgument(format!("unknown mask kind {other:?}"))),
        }
    }
}

/// `K` masks over a `T x F` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    kind: MaskKind,
    frames: usize,
    bins: usize,
    masks: Vec<Vec<f64>>,
}

impl MaskSet {
    /// Validates the partition invariants: soft masks lie in [0, 1] and sum
    /// to one per bin; binary masks are one-hot per bin.
    pub fn new(kind: MaskKind, frames: usize, bins: usize, masks: Vec<Vec<f64>>) -> Result<Self> {
        let n = frames * bins;
        if masks.is_empty() {
            return Err(Error::InvalidArgument("mask set needs at least one mask".into()));
        }
        if let Some(m) = masks.iter().find(|m| m.len() != n) {
            return Err(Error::ShapeMismatch(format!(
                "mask has {} entries, grid {frames}x{bins} has {n}",
                m.len()
            )));
        }
        for i in 0..n {
            let mut sum = 0.0;
            for m in &masks {
                let v = m[i];
                let ok = match kind {
                    MaskKind::Soft => (0.0..=1.0).contains(&v),
                    MaskKind::Binary => v == 0.0 || v == 1.0,
                };
                if !ok {
                    return Err(Error::InvalidArgument(format!("{kind:?} mask value {v} at bin {i}")));
                }
                sum += v;
            }
            let ok = match kind {
                MaskKind::Soft => (sum - 1.0).abs() <= 1e-6,
                MaskKind::Binary => sum == 1.0,
            };
            if !ok {
                return Err(Error::InvalidArgument(format!("masks sum to {sum} at bin {i}")));
            }
        }
        Ok(Self {
            kind,
            frames,
            bins,
            masks,
        })
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn mask(&self, k: usize) -> &[f64] {
        &self.masks[k]
    }
}

pub fn masks_from_posteriors(
    result: &ClusterResult,
    frames: usize,
    bins: usize,
    kind: MaskKind,
) -> Result<MaskSet> {
    let n = frames * bins;
    if result.posteriors.rows() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} posterior rows for a {frames}x{bins} grid",
            result.posteriors.rows()
        )));
    }
    let k = result.k();
    let mut masks = vec![vec![0.0; n]; k];
    for i in 0..n {
        match kind {
            MaskKind::Soft => {
                // Renormalize away the last-ulp drift of the responsibilities.
                let row = result.posteriors.row(i);
                let s: f64 = row.iter().sum();
                for (m, g) in masks.iter_mut().zip(row) {
                    m[i] = (g / s).clamp(0.0, 1.0);
                }
            }
            MaskKind::Binary => masks[result.hard_labels[i]][i] = 1.0,
        }
    }
    MaskSet::new(kind, frames, bins, masks)
}

/// Multiplies the complex mixture by each mask; mixture phase is kept.
pub fn apply_masks(mixture: &TfRepr, masks: &MaskSet) -> Result<Vec<TfRepr>> {
    if (mixture.frames(), mixture.bins()) != (masks.frames(), masks.bins()) {
        return Err(Error::ShapeMismatch(format!(
            "mixture grid {}x{} vs mask grid {}x{}",
            mixture.frames(),
            mixture.bins(),
            masks.frames(),
            masks.bins()
        )));
    }
    (0..masks.len())
        .map(|k| {
            let values = mixture
                .values()
                .iter()
                .zip(masks.mask(k))
                .map(|(z, m)| z * m)
                .collect();
            mixture.with_values(values)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationConfig {
    pub stft: StftParams,
    pub clustering: SoftKMeansConfig,
    pub mask: MaskKind,
}

impl Default for SeparationConfig {
    fn default() -> Self {
        Self {
            stft: StftParams::default(),
            clustering: SoftKMeansConfig::default(),
            mask: MaskKind::Soft,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationResult {
    /// One waveform per cluster, in cluster index order.
    pub sources: Vec<Waveform>,
    pub masks: MaskSet,
    pub model_name: String,
}

/// Separation together with the intermediate products needed for scoring.
#[derive(Debug, Clone)]
pub struct DetailedSeparation {
    pub result: SeparationResult,
    pub clusters: ClusterResult,
    pub mixture_tf: TfRepr,
}

/// Checks that `field` lives on the TF grid of `tf`.
pub fn check_grid(field: &EmbeddingField, tf: &TfRepr) -> Result<()> {
    if (field.frames(), field.bins()) != (tf.frames(), tf.bins()) {
        return Err(Error::ShapeMismatch(format!(
            "embedding grid {} does not match mixture TF grid {}x{}",
            field.shape_string(),
            tf.frames(),
            tf.bins()
        )));
    }
    Ok(())
}

/// stft -> soft k-means on every bin -> masks -> istft.
pub fn separate_detailed(
    mixture: &Waveform,
    field: &EmbeddingField,
    cfg: &SeparationConfig,
    model_name: &str,
) -> Result<DetailedSeparation> {
    cfg.clustering.validate()?;
    let mixture_tf = stft(mixture, &cfg.stft)?;
    check_grid(field, &mixture_tf)?;
    let clusters = soft_kmeans(&field.to_points(), &cfg.clustering)?;
    let masks = masks_from_posteriors(&clusters, mixture_tf.frames(), mixture_tf.bins(), cfg.mask)?;
    let tfs = apply_masks(&mixture_tf, &masks)?;
    let sources = par::map_range(tfs.len(), |k| istft(&tfs[k]))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(DetailedSeparation {
        result: SeparationResult {
            sources,
            masks,
            model_name: model_name.to_string(),
        },
        clusters,
        mixture_tf,
    })
}

pub fn separate(mixture: &Waveform, field: &EmbeddingField, cfg: &SeparationConfig) -> Result<SeparationResult> {
    separate_detailed(mixture, field, cfg, "").map(|d| d.result)
}

/// Writes `<dir>/<stem>_src<k>.wav` for every source.
pub fn write_sources(
    result: &SeparationResult,
    dir: impl AsRef<Path>,
    stem: &str,
    encoding: WavEncoding,
) -> Result<Vec<PathBuf>> {
    result
        .sources
        .iter()
        .enumerate()
        .map(|(k, w)| {
            let p = dir.as_ref().join(format!("{stem}_src{k}.wav"));
            write_wav(&p, w, encoding)?;
            Ok(p)
        })
        .collect()
}
