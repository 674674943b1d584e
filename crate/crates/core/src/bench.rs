//! Desk-scale experiment drivers.
//!
//! * [`correlation_bench`]: one mixture per trial, oracle embeddings degraded
//!   by a grid of noise levels, and the resulting (confidence, SI-SDR) pairs.
//! * [`ensemble_bench`]: several synthetic domains, one candidate embedder
//!   matched to each (low noise on its own domain, high noise elsewhere), and
//!   the oracle / confidence / random selection strategies on every trial.
//!
//! Both are reproducible from `(config, master_seed)`: every random stream of
//! every trial is derived through [`crate::seed::derive_seed`], and trials are
//! collected in index order regardless of scheduling.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::embedding::{oracle_embed, EmbeddingSource, SourceKind};
use crate::ensemble::{choose, evaluate_candidate, Candidate, CandidateOutcome, PipelineConfig, Strategy};
use crate::error::{Error, Result};
use crate::evaluation::{pearson, SelectionStats};
use crate::par;
use crate::seed::{derive_seed, STREAM_CLUSTER, STREAM_EMBED, STREAM_MIXTURE, STREAM_SAMPLE, STREAM_SELECT};
use crate::synth::{make_mixture, MixSpec, Mixture, SignalKind};
use crate::tf::{stft, TfRepr};
use crate::DEFAULT_EMBEDDING_DIM;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrelationConfig {
    pub trials: usize,
    pub sigma_grid: Vec<f64>,
    pub sources: Vec<SignalKind>,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        Self {
            trials: 30,
            sigma_grid: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            sources: MixSpec::default().source_kinds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainConfig {
    pub name: String,
    pub sources: Vec<SignalKind>,
    /// Overrides the bench-wide SNR range for this domain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_range: Option<(f64, f64)>,
}

/// One candidate embedder of the ensemble bench.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSpec {
    pub name: String,
    /// Domain on which this embedder uses the matched noise level.
    pub matched_domain: Option<String>,
    /// Noise and clustering seed stream. Two candidates with the same matched
    /// domain and stream produce identical outcomes.
    pub noise_stream: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub trials_per_domain: usize,
    pub matched_sigma: f64,
    pub mismatched_sigma: f64,
    pub domains: Vec<DomainConfig>,
    /// Defaults to one candidate per domain, in domain order.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<CandidateSpec>>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            trials_per_domain: 100,
            matched_sigma: 0.05,
            mismatched_sigma: 0.8,
            domains: default_domains(),
            candidates: None,
        }
    }
}

impl EnsembleConfig {
    pub fn candidate_specs(&self) -> Vec<CandidateSpec> {
        self.candidates.clone().unwrap_or_else(|| {
            self.domains
                .iter()
                .enumerate()
                .map(|(i, d)| CandidateSpec {
                    name: format!("{}_model", d.name),
                    matched_domain: Some(d.name.clone()),
                    noise_stream: i as u64,
                })
                .collect()
        })
    }
}

/// Three synthetic domains loosely shaped after speech-on-speech, lead over
/// accompaniment, and environmental events.
pub fn default_domains() -> Vec<DomainConfig> {
    vec![
        DomainConfig {
            name: "speech".into(),
            sources: vec![
                SignalKind::HarmonicTone {
                    f0_hz: (90.0, 140.0),
                    harmonics: 8,
                },
                SignalKind::HarmonicTone {
                    f0_hz: (190.0, 280.0),
                    harmonics: 6,
                },
            ],
            snr_range: None,
        },
        DomainConfig {
            name: "music".into(),
            sources: vec![
                SignalKind::HarmonicTone {
                    f0_hz: (55.0, 110.0),
                    harmonics: 4,
                },
                SignalKind::PulseTrain {
                    rate_hz: (3.0, 8.0),
                    center_hz: 3500.0,
                },
            ],
            snr_range: None,
        },
        DomainConfig {
            name: "environmental".into(),
            sources: vec![
                SignalKind::NoiseBurst {
                    low_hz: 400.0,
                    high_hz: 1400.0,
                    bursts_per_sec: 4.0,
                },
                SignalKind::NoiseBurst {
                    low_hz: 3000.0,
                    high_hz: 4000.0,
                    bursts_per_sec: 4.0,
                },
            ],
            snr_range: None,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub duration: f64,
    pub sample_rate: u32,
    pub snr_range: (f64, f64),
    pub dim: usize,
    pub pipeline: PipelineConfig,
    pub correlation: CorrelationConfig,
    pub ensemble: EnsembleConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            duration: 5.0,
            sample_rate: 16_000,
            snr_range: (-2.5, 2.5),
            dim: DEFAULT_EMBEDDING_DIM,
            pipeline: PipelineConfig::default(),
            correlation: CorrelationConfig::default(),
            ensemble: EnsembleConfig::default(),
        }
    }
}

impl BenchConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    fn mix_spec(&self, sources: &[SignalKind], snr: Option<(f64, f64)>, seed: u64) -> MixSpec {
        MixSpec {
            duration: self.duration,
            sample_rate: self.sample_rate,
            snr_range: snr.unwrap_or(self.snr_range),
            source_kinds: sources.to_vec(),
            seed,
        }
    }

    /// Pipeline config with the clustering and sampling seeds of one trial.
    fn seeded_pipeline(&self, master: u64, trial: u64, stream: u64) -> PipelineConfig {
        let mut p = self.pipeline.clone();
        p.separation.clustering.seed = derive_seed(master, STREAM_CLUSTER, trial, stream);
        p.confidence.seed = derive_seed(master, STREAM_SAMPLE, trial, 0);
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub detail: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRun<R> {
    pub master_seed: u64,
    pub config: BenchConfig,
    pub rows: Vec<R>,
    pub failures: Vec<TrialFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub sigma: f64,
    pub trial: usize,
    pub confidence: Option<f64>,
    pub silhouette: Option<f64>,
    pub posterior_strength: Option<f64>,
    pub mean_sdr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaSummary {
    pub sigma: f64,
    pub trials: usize,
    pub degenerate: usize,
    pub mean_confidence: f64,
    pub mean_sdr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSummary {
    /// Pearson r between confidence and mean SI-SDR over non-degenerate rows.
    pub pearson_r: Option<f64>,
    pub per_sigma: Vec<SigmaSummary>,
    pub failures: usize,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl BenchRun<CorrelationRow> {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["sigma", "trial", "confidence", "silhouette", "posterior_strength", "mean_sdr"])?;
        for r in &self.rows {
            w.write_record([
                r.sigma.to_string(),
                r.trial.to_string(),
                fmt_opt(r.confidence),
                fmt_opt(r.silhouette),
                fmt_opt(r.posterior_strength),
                r.mean_sdr.to_string(),
            ])?;
        }
        csv_string(w)
    }

    pub fn summary(&self) -> CorrelationSummary {
        let scored: Vec<&CorrelationRow> = self.rows.iter().filter(|r| r.confidence.is_some()).collect();
        let xs: Vec<f64> = scored.iter().filter_map(|r| r.confidence).collect();
        let ys: Vec<f64> = scored.iter().map(|r| r.mean_sdr).collect();
        let mut per_sigma = Vec::new();
        for &s in &self.config.correlation.sigma_grid {
            let rows: Vec<&CorrelationRow> = self.rows.iter().filter(|r| r.sigma == s).collect();
            let conf: Vec<f64> = rows.iter().filter_map(|r| r.confidence).collect();
            per_sigma.push(SigmaSummary {
                sigma: s,
                trials: rows.len(),
                degenerate: rows.len() - conf.len(),
                mean_confidence: mean(&conf),
                mean_sdr: mean(&rows.iter().map(|r| r.mean_sdr).collect::<Vec<_>>()),
            });
        }
        CorrelationSummary {
            pearson_r: pearson(&xs, &ys).ok(),
            per_sigma,
            failures: self.failures.len(),
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn reference_tfs(cfg: &BenchConfig, mix: &Mixture) -> Result<Vec<TfRepr>> {
    mix.references
        .iter()
        .map(|r| stft(r, &cfg.pipeline.separation.stft))
        .collect()
}

pub fn correlation_bench(cfg: &BenchConfig, master_seed: u64) -> Result<BenchRun<CorrelationRow>> {
    let cc = &cfg.correlation;
    if cc.trials == 0 || cc.sigma_grid.is_empty() {
        return Err(Error::InvalidArgument("correlation bench needs trials and a sigma grid".into()));
    }
    let mixtures: Vec<Result<(Mixture, Vec<TfRepr>)>> = par::map_range(cc.trials, |t| {
        let spec = cfg.mix_spec(&cc.sources, None, derive_seed(master_seed, STREAM_MIXTURE, t as u64, 0));
        let mix = make_mixture(&spec)?;
        let tfs = reference_tfs(cfg, &mix)?;
        Ok((mix, tfs))
    });
    let n_sigma = cc.sigma_grid.len();
    let results = par::map_range(cc.trials * n_sigma, |job| -> Result<CorrelationRow> {
        let (t, j) = (job / n_sigma, job % n_sigma);
        let sigma = cc.sigma_grid[j];
        let (mix, tfs) = mixtures[t].as_ref().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let field = oracle_embed(tfs, sigma, cfg.dim, derive_seed(master_seed, STREAM_EMBED, t as u64, j as u64))?;
        let cand = Candidate {
            source: EmbeddingSource::new(format!("oracle_sigma_{sigma}"), SourceKind::Oracle),
            field,
        };
        let pipe = cfg.seeded_pipeline(master_seed, t as u64, j as u64);
        let out = evaluate_candidate(&mix.mixture, &cand, &pipe, Some(&mix.references))?;
        Ok(CorrelationRow {
            sigma,
            trial: t,
            confidence: out.confidence.as_ref().map(|c| c.confidence),
            silhouette: out.confidence.as_ref().map(|c| c.silhouette),
            posterior_strength: out.confidence.as_ref().map(|c| c.posterior_strength),
            mean_sdr: out.sdr.as_ref().map(|e| e.mean_sdr).expect("references supplied"),
        })
    });
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (job, r) in results.into_iter().enumerate() {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => failures.push(TrialFailure {
                trial: job / n_sigma,
                detail: format!("sigma={}", cc.sigma_grid[job % n_sigma]),
                message: e.to_string(),
            }),
        }
    }
    Ok(BenchRun {
        master_seed,
        config: cfg.clone(),
        rows,
        failures,
    })
}

/// One ensemble-bench trial: every candidate scored once, then chosen under
/// each strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleTrial {
    pub domain: usize,
    pub trial: usize,
    pub confidences: Vec<Option<f64>>,
    pub sdrs: Vec<f64>,
    pub chosen: BTreeMap<String, usize>,
}

impl EnsembleTrial {
    pub fn chosen_by(&self, s: Strategy) -> usize {
        self.chosen[s.name()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub domains: Vec<String>,
    pub candidates: Vec<String>,
    /// Confidence-strategy selections, `confusion[chosen candidate][true domain]`.
    pub stats: SelectionStats,
    pub accuracy: f64,
    /// Mean SI-SDR per strategy and domain, strategy name -> per-domain values.
    pub strategy_sdr: BTreeMap<String, Vec<f64>>,
    /// Mean SI-SDR of always using one candidate, `[candidate][domain]`.
    pub single_model_sdr: Vec<Vec<f64>>,
    /// Fraction of trials on which the random strategy picked each candidate.
    pub random_frequencies: Vec<f64>,
    pub failures: usize,
}

impl BenchRun<EnsembleTrial> {
    /// One row per trial and strategy.
    pub fn to_csv(&self) -> Result<String> {
        let m = self.config.ensemble.candidate_specs().len();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["domain".to_string(), "trial".into(), "strategy".into(), "chosen".into()];
        header.extend((0..m).map(|i| format!("confidence_{i}")));
        header.extend((0..m).map(|i| format!("sdr_{i}")));
        w.write_record(&header)?;
        for t in &self.rows {
            for s in Strategy::ALL {
                let mut rec = vec![
                    self.config.ensemble.domains[t.domain].name.clone(),
                    t.trial.to_string(),
                    s.name().to_string(),
                    t.chosen_by(s).to_string(),
                ];
                rec.extend(t.confidences.iter().map(|c| fmt_opt(*c)));
                rec.extend(t.sdrs.iter().map(|v| v.to_string()));
                w.write_record(&rec)?;
            }
        }
        csv_string(w)
    }

    pub fn summary(&self) -> Result<EnsembleSummary> {
        let ec = &self.config.ensemble;
        let specs = ec.candidate_specs();
        let (n_dom, m) = (ec.domains.len(), specs.len());
        let pairs: Vec<(usize, usize)> = self
            .rows
            .iter()
            .map(|t| (t.domain, t.chosen_by(Strategy::Confidence)))
            .collect();
        let labels = n_dom.max(m);
        let stats = crate::evaluation::selection_stats(&pairs, labels)?;
        let accuracy = pairs.iter().filter(|(d, c)| d == c).count() as f64 / pairs.len() as f64;

        let per_domain = |f: &dyn Fn(&EnsembleTrial) -> f64| -> Vec<f64> {
            (0..n_dom)
                .map(|d| {
                    let v: Vec<f64> = self.rows.iter().filter(|t| t.domain == d).map(f).collect();
                    mean(&v)
                })
                .collect()
        };
        let mut strategy_sdr = BTreeMap::new();
        for s in Strategy::ALL {
            strategy_sdr.insert(s.name().to_string(), per_domain(&|t: &EnsembleTrial| t.sdrs[t.chosen_by(s)]));
        }
        let single_model_sdr = (0..m).map(|c| per_domain(&|t: &EnsembleTrial| t.sdrs[c])).collect();
        let mut freq = vec![0.0; m];
        for t in &self.rows {
            freq[t.chosen_by(Strategy::Random)] += 1.0 / self.rows.len() as f64;
        }
        Ok(EnsembleSummary {
            domains: ec.domains.iter().map(|d| d.name.clone()).collect(),
            candidates: specs.iter().map(|c| c.name.clone()).collect(),
            stats,
            accuracy,
            strategy_sdr,
            single_model_sdr,
            random_frequencies: freq,
            failures: self.failures.len(),
        })
    }
}

pub fn ensemble_bench(cfg: &BenchConfig, master_seed: u64) -> Result<BenchRun<EnsembleTrial>> {
    let ec = &cfg.ensemble;
    let specs = ec.candidate_specs();
    if ec.domains.len() < 2 {
        return Err(Error::InvalidArgument("ensemble bench needs at least 2 domains".into()));
    }
    if specs.is_empty() || ec.trials_per_domain == 0 {
        return Err(Error::InvalidArgument("ensemble bench needs candidates and trials".into()));
    }
    for s in &specs {
        if let Some(d) = &s.matched_domain {
            if !ec.domains.iter().any(|x| &x.name == d) {
                return Err(Error::InvalidArgument(format!("candidate {} matches unknown domain {d}", s.name)));
            }
        }
    }
    let n = ec.trials_per_domain;
    let results = par::map_range(ec.domains.len() * n, |g| -> Result<EnsembleTrial> {
        let (d, t) = (g / n, g % n);
        let domain = &ec.domains[d];
        let spec = cfg.mix_spec(
            &domain.sources,
            domain.snr_range,
            derive_seed(master_seed, STREAM_MIXTURE, d as u64, t as u64),
        );
        let mix = make_mixture(&spec)?;
        let tfs = reference_tfs(cfg, &mix)?;
        let outcomes: Vec<CandidateOutcome> = specs
            .iter()
            .map(|c| {
                let matched = c.matched_domain.as_deref() == Some(domain.name.as_str());
                let sigma = if matched { ec.matched_sigma } else { ec.mismatched_sigma };
                let field = oracle_embed(
                    &tfs,
                    sigma,
                    cfg.dim,
                    derive_seed(master_seed, STREAM_EMBED, g as u64, c.noise_stream),
                )?;
                let cand = Candidate {
                    source: EmbeddingSource::new(c.name.clone(), SourceKind::Oracle),
                    field,
                };
                let pipe = cfg.seeded_pipeline(master_seed, g as u64, c.noise_stream);
                evaluate_candidate(&mix.mixture, &cand, &pipe, Some(&mix.references))
            })
            .collect::<Result<_>>()?;
        let mut chosen = BTreeMap::new();
        for s in Strategy::ALL {
            let (idx, _) = choose(&outcomes, s, derive_seed(master_seed, STREAM_SELECT, g as u64, 0))?;
            chosen.insert(s.name().to_string(), idx);
        }
        Ok(EnsembleTrial {
            domain: d,
            trial: t,
            confidences: outcomes.iter().map(CandidateOutcome::confidence_value).collect(),
            sdrs: outcomes
                .iter()
                .map(|o| o.sdr.as_ref().map(|e| e.mean_sdr).expect("references supplied"))
                .collect(),
            chosen,
        })
    });
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (g, r) in results.into_iter().enumerate() {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => failures.push(TrialFailure {
                trial: g % n,
                detail: format!("domain={}", ec.domains[g / n].name),
                message: e.to_string(),
            }),
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyTrials);
    }
    Ok(BenchRun {
        master_seed,
        config: cfg.clone(),
        rows,
        failures,
    })
}
