//! Embedding fields, the EMB1 exchange format, and built-in embedders.
//!
//! # EMB1 layout
//!
//! ```text
//! offset  size        content
//! 0       4           ASCII "EMB1"
//! 4       4           T (frames), u32 little-endian
//! 8       4           F (bins),   u32 little-endian
//! 12      4           D (dim),    u32 little-endian
//! 16      T*F*D*4     f32 little-endian, time-major (t outer, f, d inner)
//! ```
//!
//! An optional sidecar `<path>.json` carries free-form metadata such as the
//! producing model, its domain, and the STFT parameters of the grid.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed::rng;
use crate::tf::{StftParams, TfRepr, WindowKind};

pub const EMB_MAGIC: &[u8; 4] = b"EMB1";
pub const EMB_HEADER_LEN: usize = 16;

/// Per-bin embedding vectors, frames x bins x dim, time-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingField {
    frames: usize,
    bins: usize,
    dim: usize,
    values: Vec<f32>,
}

impl EmbeddingField {
    pub fn new(frames: usize, bins: usize, dim: usize, values: Vec<f32>) -> Result<Self> {
        let len = frames
            .checked_mul(bins)
            .and_then(|v| v.checked_mul(dim))
            .ok_or_else(|| Error::ShapeMismatch(format!("{frames}x{bins}x{dim} overflows")))?;
        if len != values.len() {
            return Err(Error::ShapeMismatch(format!(
                "{frames}x{bins}x{dim} field needs {len} values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("embedding value at offset {i}")));
        }
        Ok(Self {
            frames,
            bins,
            dim,
            values,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of embedded points, `T * F`.
    pub fn len(&self) -> usize {
        self.frames * self.bins
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Embedding of flat bin index `i = t * F + f`.
    pub fn point(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, t: usize, f: usize) -> &[f32] {
        self.point(t * self.bins + f)
    }

    /// All points as an `(T*F) x D` matrix.
    pub fn to_points(&self) -> Matrix {
        Matrix::new(
            self.len(),
            self.dim,
            self.values.iter().map(|v| *v as f64).collect(),
        )
        .expect("field dimensions are consistent")
    }

    /// Selected points as a `len(indices) x D` matrix.
    pub fn gather(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend(self.point(i).iter().map(|v| *v as f64));
        }
        Matrix::new(indices.len(), self.dim, data).expect("gathered rows have field dim")
    }

    pub fn shape_string(&self) -> String {
        format!("{}x{}x{}", self.frames, self.bins, self.dim)
    }
}

pub fn encode_emb(field: &EmbeddingField) -> Result<Vec<u8>> {
    let dims = [field.frames, field.bins, field.dim].map(u32::try_from);
    let [Ok(t), Ok(f), Ok(d)] = dims else {
        return Err(Error::InvalidArgument(format!(
            "field {} exceeds the u32 header range",
            field.shape_string()
        )));
    };
    let mut out = Vec::with_capacity(EMB_HEADER_LEN + field.values.len() * 4);
    out.extend_from_slice(EMB_MAGIC);
    for v in [t, f, d] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in &field.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_emb(bytes: &[u8]) -> Result<EmbeddingField> {
    if bytes.len() < 4 || &bytes[..4] != EMB_MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < EMB_HEADER_LEN {
        return Err(Error::TruncatedPayload {
            expected: EMB_HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4-byte slice"));
    let (t, f, d) = (word(4), word(8), word(12));
    let overflow = Error::DimensionOverflow {
        frames: t,
        bins: f,
        dim: d,
    };
    let expected = (t as u64)
        .checked_mul(f as u64)
        .and_then(|v| v.checked_mul(d as u64))
        .and_then(|v| v.checked_mul(4))
        .ok_or(overflow)?;
    let actual = (bytes.len() - EMB_HEADER_LEN) as u64;
    if actual < expected {
        return Err(Error::TruncatedPayload { expected, actual });
    }
    if actual > expected {
        return Err(Error::TrailingBytes { expected, actual });
    }
    let values: Vec<f32> = bytes[EMB_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect();
    EmbeddingField::new(t as usize, f as usize, d as usize, values)
}

pub fn write_emb(field: &EmbeddingField, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_emb(field)?;
    let mut file = fs::File::create(path)?;
    file.write_all(&bytes)?;
    file.flush()?;
    Ok(())
}

pub fn read_emb(path: impl AsRef<Path>) -> Result<EmbeddingField> {
    decode_emb(&fs::read(path)?)
}

/// STFT parameters as recorded in a sidecar. Producers that only know the
/// window and hop may omit the rest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SidecarStft {
    pub window_length: usize,
    pub hop_length: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fft_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<WindowKind>,
}

impl From<StftParams> for SidecarStft {
    fn from(p: StftParams) -> Self {
        Self {
            window_length: p.window_length,
            hop_length: p.hop_length,
            fft_size: Some(p.fft_size),
            window: Some(p.window),
        }
    }
}

impl SidecarStft {
    /// Errors naming every field that disagrees with `params`.
    pub fn check(&self, params: &StftParams) -> Result<()> {
        let mut diffs = Vec::new();
        if self.window_length != params.window_length {
            diffs.push(format!(
                "window_length {} (sidecar) vs {} (configured)",
                self.window_length, params.window_length
            ));
        }
        if self.hop_length != params.hop_length {
            diffs.push(format!(
                "hop_length {} (sidecar) vs {} (configured)",
                self.hop_length, params.hop_length
            ));
        }
        if let Some(n) = self.fft_size.filter(|n| *n != params.fft_size) {
            diffs.push(format!("fft_size {n} (sidecar) vs {} (configured)", params.fft_size));
        }
        if let Some(w) = self.window.filter(|w| *w != params.window) {
            diffs.push(format!(
                "window {} (sidecar) vs {} (configured)",
                w.name(),
                params.window.name()
            ));
        }
        if diffs.is_empty() {
            Ok(())
        } else {
            Err(Error::StftMismatch(diffs.join(", ")))
        }
    }
}

/// Metadata stored next to an EMB1 file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_rate: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stft: Option<SidecarStft>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

pub fn sidecar_path(emb_path: impl AsRef<Path>) -> PathBuf {
    let mut s = emb_path.as_ref().as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_sidecar(emb_path: impl AsRef<Path>, sidecar: &Sidecar) -> Result<()> {
    let mut text = serde_json::to_string_pretty(sidecar)?;
    text.push('\n');
    fs::write(sidecar_path(emb_path), text)?;
    Ok(())
}

/// Reads `<emb_path>.json` if it exists.
pub fn read_sidecar(emb_path: impl AsRef<Path>) -> Result<Option<Sidecar>> {
    let p = sidecar_path(emb_path);
    if !p.exists() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_str(&fs::read_to_string(p)?)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    File,
    Oracle,
    Synthetic,
}

/// A named producer of embedding fields; one per candidate model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSource {
    pub name: String,
    pub kind: SourceKind,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl EmbeddingSource {
    pub fn new(name: impl Into<String>, kind: SourceKind) -> Self {
        Self {
            name: name.into(),
            kind,
            metadata: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }
}

/// Ideal-binary-mask embeddings.
///
/// Bin `(t, f)` is embedded as the one-hot indicator of the reference with the
/// largest magnitude there (lowest reference index on ties), zero-padded to
/// `dim`, plus i.i.d. Gaussian noise of standard deviation `noise_sigma` on
/// every coordinate, clamped to `[0, 1]`.
pub fn oracle_embed(
    references: &[TfRepr],
    noise_sigma: f64,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingField> {
    let k = references.len();
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "oracle embedding needs at least 2 references, got {k}"
        )));
    }
    let (frames, bins) = (references[0].frames(), references[0].bins());
    for (i, r) in references.iter().enumerate().skip(1) {
        if (r.frames(), r.bins()) != (frames, bins) {
            return Err(Error::ShapeMismatch(format!(
                "reference {i} is {}x{}, reference 0 is {frames}x{bins}",
                r.frames(),
                r.bins()
            )));
        }
    }
    if dim < k {
        return Err(Error::InvalidArgument(format!(
            "embedding dim {dim} is smaller than the {k} references"
        )));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise sigma must be finite and >= 0, got {noise_sigma}"
        )));
    }

    let n = frames * bins;
    let mut values = vec![0.0f32; n * dim];
    for i in 0..n {
        let mut owner = 0;
        let mut best = references[0].values()[i].norm();
        for (j, r) in references.iter().enumerate().skip(1) {
            let m = r.values()[i].norm();
            if m > best {
                best = m;
                owner = j;
            }
        }
        values[i * dim + owner] = 1.0;
    }
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma)
            .map_err(|e| Error::InvalidArgument(format!("noise sigma: {e}")))?;
        let mut r = rng(seed);
        for v in values.iter_mut() {
            *v = (*v as f64 + normal.sample(&mut r)).clamp(0.0, 1.0) as f32;
        }
    }
    EmbeddingField::new(frames, bins, dim, values)
}

/// Gaussian blob embeddings with known labels.
///
/// Cluster means sit on scaled unit axes, `mean_k = separation / sqrt(2) * e_k`,
/// when `k <= dim` (pairwise distance exactly `separation`), and on a line,
/// `mean_k = k * separation * e_0`, otherwise. Labels are balanced
/// (`i mod k`) and then shuffled.
pub fn blob_embed(
    frames: usize,
    bins: usize,
    dim: usize,
    k: usize,
    separation: f64,
    spread: f64,
    seed: u64,
) -> Result<(EmbeddingField, Vec<usize>)> {
    if k < 1 || dim < 1 {
        return Err(Error::InvalidArgument(format!("need k >= 1 and dim >= 1, got k={k}, dim={dim}")));
    }
    if !(separation >= 0.0) || !(spread > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need separation >= 0 and spread > 0, got {separation}, {spread}"
        )));
    }
    let n = frames * bins;
    let mut means = vec![vec![0.0f64; dim]; k];
    for (c, m) in means.iter_mut().enumerate() {
        if k <= dim {
            m[c] = separation / std::f64::consts::SQRT_2;
        } else {
            m[0] = c as f64 * separation;
        }
    }
    let mut r = rng(seed);
    let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    labels.shuffle(&mut r);
    let normal = Normal::new(0.0, spread).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut values = Vec::with_capacity(n * dim);
    for &l in &labels {
        for &mu in &means[l] {
            values.push((mu + normal.sample(&mut r)) as f32);
        }
    }
    Ok((EmbeddingField::new(frames, bins, dim, values)?, labels))
}
