//! `dcconf` command-line tool.
//!
//! Exit codes: 0 on success, 1 on usage, I/O or shape errors (one line on
//! stderr), 2 when the result is valid but degenerate. Machine-readable
//! output goes to stdout, diagnostics to stderr.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dcconf::bench::{correlation_bench, ensemble_bench, BenchConfig};
use dcconf::embedding::{read_sidecar, write_sidecar};
use dcconf::separation::{check_grid, write_sources};
use dcconf::wav::{read_wav, write_wav, WavEncoding};
use dcconf::{
    confidence, eval_separation, magnitude, make_mixture, oracle_embed, read_emb, resample, select, separate, stft,
    write_emb, Candidate, ConfidenceConfig, EmbeddingField, EmbeddingSource, Error, MaskKind, MixSpec,
    PipelineConfig, SeparationConfig, Sidecar, SoftKMeansConfig, SourceKind, StftParams, Strategy, Waveform,
    WindowKind,
};
use serde::Serialize;
use serde_json::json;

#[derive(Parser)]
#[command(name = "dcconf", version, about = "Confidence scoring and model selection for deep-clustering separation")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster an embedding field and print its confidence report.
    Confidence {
        mixture: PathBuf,
        embeddings: PathBuf,
        #[command(flatten)]
        opts: PipelineOpts,
    },
    /// Separate a mixture with one embedding field.
    Separate {
        mixture: PathBuf,
        embeddings: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Mask::Soft)]
        mask: Mask,
        #[arg(long, value_enum)]
        encoding: Option<Encoding>,
        #[command(flatten)]
        opts: PipelineOpts,
    },
    /// Run every candidate embedding and keep one separation.
    Select {
        mixture: PathBuf,
        #[arg(required = true)]
        embeddings: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = StrategyArg::Confidence)]
        strategy: StrategyArg,
        /// Reference sources; required by the oracle strategy.
        #[arg(long, num_args = 1..)]
        references: Vec<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, value_enum)]
        encoding: Option<Encoding>,
        #[command(flatten)]
        opts: PipelineOpts,
    },
    /// Permutation-resolved SI-SDR of estimates against references.
    Evaluate {
        #[arg(long, num_args = 1.., required = true)]
        estimates: Vec<PathBuf>,
        #[arg(long, num_args = 1.., required = true)]
        references: Vec<PathBuf>,
    },
    /// Write ideal embeddings computed from reference sources.
    EmbedOracle {
        #[arg(long, num_args = 2.., required = true)]
        references: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Standard deviation of the Gaussian noise added to every coordinate.
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long, default_value_t = dcconf::DEFAULT_EMBEDDING_DIM)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        stft: StftOpts,
    },
    /// Generate a synthetic mixture and its references.
    MakeMixture {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5.0)]
        duration: f64,
        #[arg(long, value_enum, default_value_t = Preset::Default)]
        preset: Preset,
        #[arg(long, value_enum, default_value_t = Encoding::Float32)]
        encoding: Encoding,
    },
    /// Resample a WAV file with a windowed-sinc filter.
    Resample {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = dcconf::DEFAULT_SAMPLE_RATE)]
        rate: u32,
    },
    /// Run a synthetic benchmark.
    Bench {
        #[arg(value_enum)]
        kind: BenchKind,
        /// JSON configuration; omitted fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        master_seed: u64,
        /// Print the per-trial CSV instead of the JSON summary.
        #[arg(long)]
        csv: bool,
        /// Also write `<kind>.csv` and `<kind>_summary.json` here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct StftOpts {
    /// STFT window length in samples.
    #[arg(long, default_value_t = 512)]
    window: usize,
    #[arg(long, default_value_t = 128)]
    hop: usize,
    /// FFT size; defaults to the window length.
    #[arg(long)]
    fft_size: Option<usize>,
    #[arg(long, default_value = "sqrt-hann")]
    window_kind: WindowKind,
}

impl StftOpts {
    fn params(&self) -> StftParams {
        StftParams {
            window_length: self.window,
            hop_length: self.hop,
            window: self.window_kind,
            fft_size: self.fft_size.unwrap_or(self.window),
        }
    }
}

#[derive(Args, Clone)]
struct PipelineOpts {
    /// Number of clusters.
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 1000)]
    sample_size: usize,
    #[arg(long, default_value_t = 0.01)]
    loud_percentile: f64,
    /// Soft K-means stiffness.
    #[arg(long, default_value_t = 5.0)]
    stiffness: f64,
    #[arg(long, default_value_t = 300)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Seed for clustering, sampling and the random strategy.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    stft: StftOpts,
}

impl PipelineOpts {
    fn config(&self, mask: MaskKind) -> Result<PipelineConfig, Error> {
        let cfg = PipelineConfig {
            separation: SeparationConfig {
                stft: self.stft.params(),
                clustering: SoftKMeansConfig {
                    k: self.k,
                    stiffness: self.stiffness,
                    max_iters: self.max_iters,
                    tol: self.tol,
                    seed: self.seed,
                    ..Default::default()
                },
                mask,
            },
            confidence: ConfidenceConfig {
                sample_size: self.sample_size,
                loud_percentile: self.loud_percentile,
                seed: self.seed,
                ..Default::default()
            },
        };
        cfg.separation.stft.validate()?;
        cfg.separation.clustering.validate()?;
        cfg.confidence.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mask {
    Soft,
    Binary,
}

#[derive(Clone, Copy, ValueEnum)]
enum Encoding {
    Pcm16,
    Float32,
}

impl From<Encoding> for WavEncoding {
    fn from(e: Encoding) -> Self {
        match e {
            Encoding::Pcm16 => WavEncoding::Pcm16,
            Encoding::Float32 => WavEncoding::Float32,
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum StrategyArg {
    Confidence,
    Oracle,
    Random,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Confidence => Strategy::Confidence,
            StrategyArg::Oracle => Strategy::Oracle,
            StrategyArg::Random => Strategy::Random,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Default,
    LeadOverAccompaniment,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchKind {
    Correlation,
    Ensemble,
}

/// Successful completion, or a valid result that should exit with 2.
enum Outcome {
    Done,
    Degenerate,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli.command) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Degenerate) => ExitCode::from(2),
        Err(e) => {
            eprintln!("dcconf: error: {}", one_line(&e.to_string()));
            ExitCode::from(1)
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn print_json(v: &impl Serialize) -> Result<(), Error> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn with_path<T>(path: &Path, r: Result<T, Error>) -> Result<T, Error> {
    r.map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        Error::Wav(w) => Error::InvalidArgument(format!("{}: {w}", path.display())),
        other => other,
    })
}

fn load_wav(path: &Path) -> Result<(Waveform, WavEncoding), Error> {
    with_path(path, read_wav(path))
}

fn load_wavs(paths: &[PathBuf]) -> Result<Vec<Waveform>, Error> {
    paths.iter().map(|p| load_wav(p).map(|(w, _)| w)).collect()
}

/// Reads an EMB1 file and checks its sidecar, if any, against the configured
/// STFT and the mixture's sample rate.
fn load_candidate(path: &Path, params: &StftParams, sample_rate: u32) -> Result<(Candidate, Option<Sidecar>), Error> {
    let field: EmbeddingField = with_path(path, read_emb(path))?;
    let sidecar = with_path(path, read_sidecar(path))?;
    if let Some(side) = &sidecar {
        if let Some(stft) = &side.stft {
            stft.check(params).map_err(|e| match e {
                Error::StftMismatch(m) => Error::StftMismatch(format!("{}: {m}", path.display())),
                other => other,
            })?;
        }
        if let Some(rate) = side.sample_rate.filter(|r| *r != sample_rate) {
            return Err(Error::InvalidArgument(format!(
                "{}: embeddings were computed at {rate} Hz but the mixture is {sample_rate} Hz",
                path.display()
            )));
        }
        if let Some(d) = side.dim.filter(|d| *d != field.dim()) {
            return Err(Error::ShapeMismatch(format!(
                "{}: sidecar says dim {d}, file holds {}",
                path.display(),
                field.dim()
            )));
        }
    }
    let name = sidecar
        .as_ref()
        .and_then(|s| s.model.clone())
        .unwrap_or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
    let mut source = EmbeddingSource::new(name, SourceKind::File).with_meta("path", path.display().to_string());
    if let Some(d) = sidecar.as_ref().and_then(|s| s.domain.clone()) {
        source = source.with_meta("domain", d);
    }
    Ok((Candidate { source, field }, sidecar))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "mixture".into())
}

fn run(cmd: Command) -> Result<Outcome, Error> {
    match cmd {
        Command::Confidence {
            mixture,
            embeddings,
            opts,
        } => cmd_confidence(&mixture, &embeddings, &opts),
        Command::Separate {
            mixture,
            embeddings,
            out_dir,
            mask,
            encoding,
            opts,
        } => cmd_separate(&mixture, &embeddings, &out_dir, mask, encoding, &opts),
        Command::Select {
            mixture,
            embeddings,
            strategy,
            references,
            out_dir,
            encoding,
            opts,
        } => cmd_select(&mixture, &embeddings, strategy, &references, &out_dir, encoding, &opts),
        Command::Evaluate { estimates, references } => {
            let est = load_wavs(&estimates)?;
            let refs = load_wavs(&references)?;
            print_json(&eval_separation(&est, &refs)?)?;
            Ok(Outcome::Done)
        }
        Command::EmbedOracle {
            references,
            out,
            sigma,
            dim,
            seed,
            stft: opts,
        } => cmd_embed_oracle(&references, &out, sigma, dim, seed, &opts),
        Command::MakeMixture {
            out_dir,
            seed,
            duration,
            preset,
            encoding,
        } => cmd_make_mixture(&out_dir, seed, duration, preset, encoding.into()),
        Command::Resample { input, output, rate } => {
            let (w, enc) = load_wav(&input)?;
            let out = resample(&w, rate)?;
            with_path(&output, write_wav(&output, &out, enc))?;
            print_json(&json!({
                "input_rate": w.sample_rate(),
                "output_rate": rate,
                "samples": out.len(),
            }))?;
            Ok(Outcome::Done)
        }
        Command::Bench {
            kind,
            config,
            master_seed,
            csv,
            out_dir,
        } => cmd_bench(kind, config.as_deref(), master_seed, csv, out_dir.as_deref()),
    }
}

fn cmd_confidence(mixture: &Path, embeddings: &Path, opts: &PipelineOpts) -> Result<Outcome, Error> {
    let cfg = opts.config(MaskKind::Soft)?;
    let (mix, _) = load_wav(mixture)?;
    let (cand, _) = load_candidate(embeddings, &cfg.separation.stft, mix.sample_rate())?;
    let tf = stft(&mix, &cfg.separation.stft)?;
    check_grid(&cand.field, &tf)?;
    let clusters = dcconf::soft_kmeans(&cand.field.to_points(), &cfg.separation.clustering)?;
    match confidence(&cand.field, &clusters, &magnitude(&tf), &cfg.confidence) {
        Ok(report) => {
            print_json(&report)?;
            Ok(Outcome::Done)
        }
        Err(Error::DegenerateClustering) => {
            print_json(&json!({
                "degenerate": true,
                "confidence": -1.0,
                "k": cfg.separation.clustering.k,
                "seed": cfg.confidence.seed,
            }))?;
            Ok(Outcome::Degenerate)
        }
        Err(e) => Err(e),
    }
}

fn cmd_separate(
    mixture: &Path,
    embeddings: &Path,
    out_dir: &Path,
    mask: Mask,
    encoding: Option<Encoding>,
    opts: &PipelineOpts,
) -> Result<Outcome, Error> {
    let mask = match mask {
        Mask::Soft => MaskKind::Soft,
        Mask::Binary => MaskKind::Binary,
    };
    let cfg = opts.config(mask)?;
    let (mix, enc) = load_wav(mixture)?;
    let (cand, _) = load_candidate(embeddings, &cfg.separation.stft, mix.sample_rate())?;
    let result = separate(&mix, &cand.field, &cfg.separation)?;
    fs::create_dir_all(out_dir)?;
    let enc = encoding.map(WavEncoding::from).unwrap_or(enc);
    let paths = write_sources(&result, out_dir, &stem(mixture), enc)?;
    print_json(&json!({
        "model": cand.source.name,
        "sources": paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    }))?;
    Ok(Outcome::Done)
}

#[allow(clippy::too_many_arguments)]
fn cmd_select(
    mixture: &Path,
    embeddings: &[PathBuf],
    strategy: StrategyArg,
    references: &[PathBuf],
    out_dir: &Path,
    encoding: Option<Encoding>,
    opts: &PipelineOpts,
) -> Result<Outcome, Error> {
    if strategy == StrategyArg::Oracle && references.is_empty() {
        return Err(Error::InvalidArgument(
            "--strategy oracle requires --references <WAV>...".into(),
        ));
    }
    let cfg = opts.config(MaskKind::Soft)?;
    let (mix, enc) = load_wav(mixture)?;
    let mut candidates = Vec::with_capacity(embeddings.len());
    for path in embeddings {
        let (mut cand, _) = load_candidate(path, &cfg.separation.stft, mix.sample_rate())?;
        if candidates.iter().any(|c: &Candidate| c.source.name == cand.source.name) {
            cand.source.name = path.display().to_string();
        }
        candidates.push(cand);
    }
    let refs = if references.is_empty() {
        None
    } else {
        Some(load_wavs(references)?)
    };
    let report = select(&mix, &candidates, strategy.into(), &cfg, refs.as_deref(), opts.seed)?;
    fs::create_dir_all(out_dir)?;
    let enc = encoding.map(WavEncoding::from).unwrap_or(enc);
    let paths = write_sources(&report.chosen().separation, out_dir, &stem(mixture), enc)?;
    let mut summary = serde_json::to_value(report.summary())?;
    summary["sources"] = json!(paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>());
    print_json(&summary)?;
    Ok(if report.all_degenerate && report.strategy == Strategy::Confidence {
        Outcome::Degenerate
    } else {
        Outcome::Done
    })
}

fn cmd_embed_oracle(
    references: &[PathBuf],
    out: &Path,
    sigma: f64,
    dim: usize,
    seed: u64,
    opts: &StftOpts,
) -> Result<Outcome, Error> {
    let params = opts.params();
    params.validate()?;
    let refs = load_wavs(references)?;
    let rate = refs[0].sample_rate();
    if let Some(bad) = refs.iter().position(|r| r.sample_rate() != rate || r.len() != refs[0].len()) {
        return Err(Error::ShapeMismatch(format!(
            "reference {} differs from reference 0 in length or sample rate",
            references[bad].display()
        )));
    }
    let tfs = refs.iter().map(|r| stft(r, &params)).collect::<Result<Vec<_>, _>>()?;
    let field = oracle_embed(&tfs, sigma, dim, seed)?;
    with_path(out, write_emb(&field, out))?;
    let mut side = Sidecar {
        model: Some(format!("oracle_sigma_{sigma}")),
        domain: None,
        sample_rate: Some(rate),
        dim: Some(dim),
        stft: Some(params.into()),
        ..Default::default()
    };
    side.extra.insert("noise_sigma".into(), json!(sigma));
    side.extra.insert("seed".into(), json!(seed));
    write_sidecar(out, &side)?;
    print_json(&json!({
        "path": out.display().to_string(),
        "frames": field.frames(),
        "bins": field.bins(),
        "dim": field.dim(),
    }))?;
    Ok(Outcome::Done)
}

fn cmd_make_mixture(out_dir: &Path, seed: u64, duration: f64, preset: Preset, enc: WavEncoding) -> Result<Outcome, Error> {
    let base = match preset {
        Preset::Default => MixSpec::default(),
        Preset::LeadOverAccompaniment => MixSpec::lead_over_accompaniment(),
    };
    let spec = MixSpec { seed, duration, ..base };
    let mix = make_mixture(&spec)?;
    fs::create_dir_all(out_dir)?;
    let mix_path = out_dir.join("mixture.wav");
    write_wav(&mix_path, &mix.mixture, enc)?;
    let mut refs = Vec::new();
    for (i, r) in mix.references.iter().enumerate() {
        let p = out_dir.join(format!("reference{i}.wav"));
        write_wav(&p, r, enc)?;
        refs.push(p.display().to_string());
    }
    print_json(&json!({
        "mixture": mix_path.display().to_string(),
        "references": refs,
        "snrs_db": mix.snrs_db,
        "spec": spec,
    }))?;
    Ok(Outcome::Done)
}

fn cmd_bench(
    kind: BenchKind,
    config: Option<&Path>,
    master_seed: u64,
    csv: bool,
    out_dir: Option<&Path>,
) -> Result<Outcome, Error> {
    let cfg = match config {
        Some(p) => with_path(p, fs::read_to_string(p).map_err(Error::from))
            .and_then(|text| BenchConfig::from_json(&text))?,
        None => BenchConfig::default(),
    };
    let (name, table, summary, failures) = match kind {
        BenchKind::Correlation => {
            let run = correlation_bench(&cfg, master_seed)?;
            ("correlation", run.to_csv()?, serde_json::to_value(run.summary())?, run.failures)
        }
        BenchKind::Ensemble => {
            let run = ensemble_bench(&cfg, master_seed)?;
            ("ensemble", run.to_csv()?, serde_json::to_value(run.summary()?)?, run.failures)
        }
    };
    for f in &failures {
        log::warn!("trial {} ({}) failed: {}", f.trial, f.detail, f.message);
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("{name}.csv")), &table)?;
        fs::write(
            dir.join(format!("{name}_summary.json")),
            serde_json::to_string_pretty(&summary)? + "\n",
        )?;
    }
    if csv {
        print!("{table}");
    } else {
        print_json(&summary)?;
    }
    Ok(Outcome::Done)
}
