//! `spectail`: batch spectral analysis, theorem sweeps, synthetic corpora and
//! detector training from the command line.

mod analyze;
mod cache;
mod exit;
mod manifest;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use spectail::harmonics::Activation2d;
use spectail::ingest::{center_crop_pow2, decode, Channel, DEFAULT_ANALYSIS_SIZE};
use spectail::spectrum::{radial_log_power, DEFAULT_BINS};
use spectail::stal::{
    evaluate, pixel_summary, sample_from_plane, train, Sample, SavedModel, TrainConfig,
};
use spectail::synth::{synth_corpus, write_gray_png, SynthConfig};
use spectail::verify::{run_verification, SweepOptions};

use crate::analyze::AnalyzeOptions;
use crate::cache::SpectrumCache;
use crate::exit::{CliError, EXIT_CODES_HELP};
use crate::manifest::{CorpusManifest, Entry, Label};

#[derive(Parser)]
#[command(name = "spectail", version, about, after_help = EXIT_CODES_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Radial log-power spectrum of one image as CSV on stdout.
    Spectrum(SpectrumArgs),
    /// Spectral statistics for every image in a manifest.
    Analyze(AnalyzeArgs),
    /// Randomized oracle sweeps of the harmonic identities.
    Theorems(TheoremArgs),
    /// Generate a labeled synthetic corpus of PNGs plus a manifest.
    Synth(SynthArgs),
    /// Train the detector on a manifest.
    Train(TrainArgs),
    /// Evaluate a trained detector on a manifest.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SpectrumArgs {
    image: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    /// Plane to analyze: y, r, g or b.
    #[arg(long, default_value = "y")]
    channel: Channel,
    /// Side of the centered power-of-two crop.
    #[arg(long, default_value_t = DEFAULT_ANALYSIS_SIZE)]
    size: usize,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// CSV manifest of `path,label[,tag]`; relative paths resolve against its directory.
    manifest: PathBuf,
    out_dir: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    #[arg(long, default_value = "y")]
    channel: Channel,
    #[arg(long, default_value_t = DEFAULT_ANALYSIS_SIZE)]
    size: usize,
    /// Skip the spectrum cache in `<out_dir>/cache`.
    #[arg(long)]
    no_cache: bool,
}

#[derive(Args)]
struct TheoremArgs {
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    max_depth: usize,
    /// Negate the leading coefficient in the closed form (harness self-test).
    #[arg(long, hide = true)]
    sabotage: bool,
}

#[derive(Args)]
struct SynthArgs {
    out_dir: PathBuf,
    /// Images per class.
    #[arg(long, default_value_t = 16)]
    count: usize,
    #[arg(long, default_value_t = 256)]
    size: usize,
    /// identity, relu, leaky_relu or silu.
    #[arg(long, default_value = "relu")]
    activation: String,
    #[arg(long, default_value_t = 4)]
    depth: usize,
    /// JPEG-degrade every image at this quality.
    #[arg(long)]
    jpeg_quality: Option<u8>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// Training manifest.
    #[arg(long)]
    train: PathBuf,
    /// Held-out manifest evaluated after training.
    #[arg(long)]
    eval: Option<PathBuf>,
    /// Output model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Training log CSV.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Metrics JSON for the held-out set.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// JSON training configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Zero the auxiliary loss weights (spatial-only baseline).
    #[arg(long)]
    spatial_only: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Also write the metrics JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(format!("cannot create {}: {e}", path.display())))
}

fn cmd_spectrum(args: SpectrumArgs) -> Result<(), CliError> {
    let plane = decode(&args.image)?.channel(args.channel);
    let spec = radial_log_power(&center_crop_pow2(&plane, args.size)?, args.bins)?;
    let mut buf = Vec::new();
    spec.write_csv(&mut buf).expect("writing to memory");
    std::io::stdout()
        .write_all(&buf)
        .map_err(|e| CliError::io(format!("cannot write stdout: {e}")))
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let manifest = CorpusManifest::load(&args.manifest)?;
    let opts = AnalyzeOptions {
        size: args.size,
        bins: args.bins,
        channel: args.channel,
        use_cache: !args.no_cache,
    };
    create_dir(&args.out_dir)?;
    let cache = if opts.use_cache {
        let dir = args.out_dir.join("cache");
        Some(SpectrumCache::new(dir.clone()).map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))?)
    } else {
        None
    };
    let rows = analyze::analyze(&manifest, &opts, cache.as_ref());
    let report = analyze::report(&rows, &opts);
    analyze::write_outputs(&rows, &report, &args.out_dir)?;
    for e in &report.errors {
        eprintln!("skipped {}: {}", e.path, e.message);
    }
    eprintln!(
        "analyzed {} of {} images into {}",
        report.analyzed,
        report.images,
        args.out_dir.display()
    );
    analyze::status(&rows)
}

fn cmd_theorems(args: TheoremArgs) -> Result<(), CliError> {
    let report = run_verification(&SweepOptions {
        trials: args.trials,
        seed: args.seed,
        max_depth: args.max_depth,
        sabotage: args.sabotage,
    })?;
    print!("{}", report.render());
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::new(exit::ASSERTION, "verification failed"))
    }
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let activation = Activation2d::parse(&args.activation).map_err(|e| CliError::invalid(e.to_string()))?;
    let cfg = SynthConfig {
        count: args.count,
        size: args.size,
        activation,
        depth: args.depth,
        jpeg_quality: args.jpeg_quality,
        seed: args.seed,
        ..SynthConfig::default()
    };
    cfg.validate()?;
    create_dir(&args.out_dir)?;
    let images = synth_corpus(&cfg)?;
    let jpeg = args.jpeg_quality.map(|q| format!("-q{q}")).unwrap_or_default();
    let mut entries = Vec::with_capacity(images.len());
    for img in &images {
        let file = format!("{}.png", img.name);
        write_gray_png(&img.plane, &args.out_dir.join(&file))?;
        let (label, tag) = if img.label == 0 {
            (Label::Real, format!("pink{jpeg}"))
        } else {
            (Label::Fake, format!("{}-d{}{jpeg}", args.activation.to_ascii_lowercase(), args.depth))
        };
        entries.push(Entry {
            path: file,
            label,
            tag: Some(tag),
        });
    }
    let manifest = args.out_dir.join("manifest.csv");
    CorpusManifest::write(&manifest, &entries)?;
    eprintln!("wrote {} images and {}", images.len(), manifest.display());
    Ok(())
}

/// Decodes every manifest image in parallel; the first failure in manifest order wins.
fn load_planes<T: Send>(
    manifest: &CorpusManifest,
    f: impl Fn(&spectail::Plane, u8) -> spectail::Result<T> + Sync,
) -> Result<Vec<T>, CliError> {
    manifest
        .entries
        .par_iter()
        .map(|e| {
            let plane = decode(&manifest.resolve(e))?.channel(Channel::Y);
            f(&plane, e.label.as_u8())
        })
        .collect::<spectail::Result<Vec<T>>>()
        .map_err(CliError::from)
}

fn load_samples(path: &Path) -> Result<Vec<Sample>, CliError> {
    load_planes(&CorpusManifest::load(path)?, sample_from_plane)
}

fn metrics_json(acc: &spectail::stal::ClassAccuracy) -> String {
    let mut s = serde_json::to_string_pretty(acc).expect("metrics serialize");
    s.push('\n');
    s
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(p) => serde_json::from_str::<TrainConfig>(&read_text(p)?)
            .map_err(|e| CliError::invalid(format!("bad config {}: {e}", p.display())))?,
        None => TrainConfig::default(),
    };
    cfg.steps = args.steps.unwrap_or(cfg.steps);
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    cfg.batch_size = args.batch_size.unwrap_or(cfg.batch_size);
    cfg.learning_rate = args.learning_rate.unwrap_or(cfg.learning_rate);
    cfg.beta = args.beta.unwrap_or(cfg.beta);
    if args.spatial_only {
        cfg.weights = cfg.weights.spatial_only();
    }
    cfg.validate()?;

    let train_set = load_samples(&args.train)?;
    let eval_set = args.eval.as_deref().map(load_samples).transpose()?;
    let outcome = train(&train_set, eval_set.as_deref(), &cfg)?;
    let saved = SavedModel {
        config: cfg,
        model: outcome.model,
    };
    write_text(&args.model, &saved.to_json())?;
    if let Some(p) = &args.log {
        let mut buf = Vec::new();
        outcome.log.write_csv(&mut buf).expect("writing to memory");
        fs::write(p, buf).map_err(|e| CliError::io(format!("cannot write {}: {e}", p.display())))?;
    }
    if let Some(acc) = &outcome.final_eval {
        let text = metrics_json(acc);
        if let Some(p) = &args.metrics {
            write_text(p, &text)?;
        }
        print!("{text}");
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let saved = SavedModel::from_json(&read_text(&args.model)?)?;
    let manifest = CorpusManifest::load(&args.manifest)?;
    let samples = load_planes(&manifest, |plane, label| {
        Ok(Sample {
            features: Vec::new(),
            pixels: pixel_summary(plane)?,
            label,
        })
    })?;
    let acc = evaluate(&saved.model, &samples)?;
    let text = metrics_json(&acc);
    if let Some(p) = &args.out {
        write_text(p, &text)?;
    }
    print!("{text}");
    Ok(())
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("SPECTAIL_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::invalid(format!("SPECTAIL_THREADS={raw:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::invalid(format!("cannot configure {n} threads: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Spectrum(a) => cmd_spectrum(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Theorems(a) => cmd_theorems(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::INVALID } else { exit::OK });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
