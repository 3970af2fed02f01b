use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use specdecay::classifier::{evaluate, knn_train, Label, DEFAULT_K};
use specdecay::fitting::{fit_decay, DEFAULT_K_T};
use specdecay::fixtures::Population;
use specdecay::harness::{
    export_results, extract_features, extract_many, list_images, read_feature_csv, run_suite,
    write_feature_csv, ExportFormat, FeatureConfig, FeatureRow, SuiteConfig,
};
use specdecay::imageio::load_image;
use specdecay::spectral::{default_bin_count, dft2, reduced_spectrum, Normalization};
use specdecay::synthesis::{explicit_target, fit_image, spoof_image, DEFAULT_ALPHA};
use specdecay::{imageio::to_grayscale, CompressionQuality, LabeledSample, Model};

const THREADS_ENV: &str = "SPECDECAY_THREADS";

#[derive(Debug, Parser)]
#[command(name = "specdecay", version, about = "Spectral decay features for real vs. generated image detection")]
struct Cli {
    /// Log progress (-v) or debug detail (-vv) to stderr.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the reduced spectrum of one image.
    Spectrum(SpectrumArgs),
    /// Extract decay features for every image in a directory.
    Features(FeaturesArgs),
    /// Train a k-NN model from labeled feature CSVs.
    Train(TrainArgs),
    /// Classify an image or the rows of a feature CSV.
    Predict(PredictArgs),
    /// Score a model on labeled feature CSVs.
    Evaluate(EvaluateArgs),
    /// Run the experiments described by a config file.
    Experiment(ExperimentArgs),
    /// Rescale an image's spectral tail toward a target decay.
    Spoof(SpoofArgs),
    /// Write synthetic images with prescribed spectral tails.
    Fixtures(FixturesArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NormalizeBy {
    Dc,
    Kt,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct Pipeline {
    /// Center-crop to this square side length first.
    #[arg(long)]
    crop: Option<usize>,
    /// JPEG quality for a recompression round trip; 100 skips it.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u8).range(1..=100))]
    quality: u8,
    #[arg(long = "k-t", default_value_t = DEFAULT_K_T)]
    k_t: f64,
    /// Radial bins; defaults to half the longer side.
    #[arg(long)]
    bins: Option<usize>,
}

impl Pipeline {
    fn config(&self) -> Result<FeatureConfig> {
        Ok(FeatureConfig {
            crop_to: self.crop,
            quality: CompressionQuality::new(self.quality)?,
            k_t: self.k_t,
            n_bins: self.bins,
        })
    }
}

#[derive(Debug, Args)]
struct SpectrumArgs {
    image: PathBuf,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long = "k-t", default_value_t = DEFAULT_K_T)]
    k_t: f64,
    #[arg(long, value_enum, default_value = "dc")]
    normalize: NormalizeBy,
    #[arg(long, value_enum, default_value = "csv")]
    out: OutputFormat,
}

#[derive(Debug, Args)]
struct FeaturesArgs {
    dir: PathBuf,
    #[command(flatten)]
    pipeline: Pipeline,
    /// Reject images whose side length differs from this.
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    label: Option<Label>,
    /// Source tag stored with labeled rows; defaults to the directory name.
    #[arg(long)]
    tag: Option<String>,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(required = true)]
    features: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// An image, or a feature CSV (by `.csv` extension).
    input: PathBuf,
    #[command(flatten)]
    pipeline: Pipeline,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(required = true)]
    features: Vec<PathBuf>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: OutputFormat,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("target").required(true).args(["target_image", "b1"])))]
struct SpoofArgs {
    image: PathBuf,
    /// Take the target decay from this image's fit.
    #[arg(long)]
    target_image: Option<PathBuf>,
    #[arg(long, requires = "b2")]
    b1: Option<f64>,
    #[arg(long, requires = "b1", allow_hyphen_values = true)]
    b2: Option<f64>,
    #[arg(long = "k-t", default_value_t = DEFAULT_K_T)]
    k_t: f64,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Output image; `.png`, `.jpg` or `.jpeg`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    Real,
    Flat,
}

#[derive(Debug, Args)]
struct FixturesArgs {
    #[arg(long, value_enum)]
    population: Kind,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 256)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// An error in how the command was invoked rather than in the data.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match configure_threads().and_then(|()| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .map_err(|_| usage(format!("{THREADS_ENV}={value:?} is not a thread count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("configuring the thread pool")
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Spectrum(a) => spectrum(a),
        Command::Features(a) => features(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Experiment(a) => experiment(a),
        Command::Spoof(a) => spoof(a),
        Command::Fixtures(a) => fixtures(a),
    }
}

fn check_k_t(k_t: f64) -> Result<()> {
    if k_t > 0.0 && k_t < 1.0 {
        Ok(())
    } else {
        Err(usage(format!("--k-t {k_t} must lie in (0, 1)")))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn spectrum(a: SpectrumArgs) -> Result<()> {
    check_k_t(a.k_t)?;
    let img = load_image::<f64>(&a.image)?;
    let gray = to_grayscale(&img)?;
    let bins = a.bins.unwrap_or_else(|| default_bin_count(gray.width(), gray.height()));
    let normalization = match a.normalize {
        NormalizeBy::Dc => Normalization::DcGain,
        NormalizeBy::Kt => Normalization::Threshold { k_t: a.k_t },
    };
    let rs = reduced_spectrum(&dft2(&gray)?, bins, normalization)?;
    let mut out = io::stdout().lock();
    match a.out {
        OutputFormat::Csv => rs.write_csv(&mut out)?,
        OutputFormat::Json => {
            let fit = fit_decay(&rs, a.k_t).ok();
            let doc = serde_json::json!({ "spectrum": rs, "fit": fit });
            serde_json::to_writer_pretty(&mut out, &doc)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

fn features(a: FeaturesArgs) -> Result<()> {
    check_k_t(a.pipeline.k_t)?;
    if a.tag.is_some() && a.label.is_none() {
        return Err(usage("--tag needs --label"));
    }
    let cfg = a.pipeline.config()?;
    let files = list_images(&a.dir).with_context(|| format!("listing {}", a.dir.display()))?;
    if files.is_empty() {
        bail!("no PNG or JPEG images in {}", a.dir.display());
    }
    let tag = a.tag.clone().unwrap_or_else(|| {
        a.dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let mut rows = Vec::with_capacity(files.len());
    let mut failed = 0;
    for (id, outcome) in extract_many(&files, "", a.resolution, &cfg) {
        match outcome {
            Ok(p) => {
                let row = FeatureRow::new(id, &p);
                rows.push(match a.label {
                    Some(label) => row.labeled(label, &tag),
                    None => row,
                });
            }
            Err(e) => {
                log::warn!("skipping {id}: {e}");
                failed += 1;
            }
        }
    }
    if rows.is_empty() {
        bail!("all {failed} images failed");
    }
    log::info!("extracted {} images, skipped {failed}", rows.len());
    write_feature_csv(&rows, output(a.out.as_deref())?)?;
    Ok(())
}

fn read_samples(paths: &[PathBuf]) -> Result<Vec<LabeledSample<f64>>> {
    let mut samples = Vec::new();
    for path in paths {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        for row in read_feature_csv(BufReader::new(file))
            .with_context(|| format!("reading {}", path.display()))?
        {
            let id = row.image_id.clone();
            samples.push(
                row.sample()
                    .with_context(|| format!("{}: row {id} has no label", path.display()))?,
            );
        }
    }
    Ok(samples)
}

fn load_model(path: &Path) -> Result<Model> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file))
        .with_context(|| format!("parsing model {}", path.display()))
}

fn train(a: TrainArgs) -> Result<()> {
    if a.k == 0 || a.k.is_multiple_of(2) {
        return Err(usage(format!("--k {} must be odd and positive", a.k)));
    }
    let samples = read_samples(&a.features)?;
    let model = knn_train(&samples, a.k)?;
    for w in &model.warnings {
        log::warn!("{w}");
    }
    let mut out = create(&a.out)?;
    serde_json::to_writer_pretty(&mut out, &model)?;
    out.flush()?;
    log::info!("trained on {} samples, k = {}", samples.len(), a.k);
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let mut out = io::stdout().lock();
    writeln!(out, "image_id,b1,b2,predicted")?;
    if a.input.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let file = File::open(&a.input).with_context(|| format!("opening {}", a.input.display()))?;
        for row in read_feature_csv(BufReader::new(file))? {
            let label = model.predict(row.features())?;
            writeln!(out, "{},{},{},{label}", row.image_id, row.b1, row.b2)?;
        }
    } else {
        check_k_t(a.pipeline.k_t)?;
        let img = load_image::<f64>(&a.input)?;
        let p = extract_features(&img, &a.pipeline.config()?)?;
        let label = model.predict(specdecay::Features::new(p.b1, p.b2))?;
        writeln!(out, "{},{},{},{label}", a.input.display(), p.b1, p.b2)?;
    }
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let test = read_samples(&a.features)?;
    let report = evaluate(&model, &test)?;
    let doc = serde_json::json!({
        "n_test": test.len(),
        "overall": report.overall,
        "per_tag": report.per_tag,
        "confusion": report.confusion,
    });
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, &doc)?;
    writeln!(out)?;
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let suite = SuiteConfig::load(&a.config)
        .with_context(|| format!("loading {}", a.config.display()))?;
    for cfg in suite.experiments() {
        cfg.validate().map_err(|e| usage(format!("{}: {e}", cfg.name)))?;
    }
    let results = run_suite(&suite)?;
    let format = match a.format {
        OutputFormat::Csv => ExportFormat::Csv,
        OutputFormat::Json => ExportFormat::Json,
    };
    let mut written = export_results(&results, &a.out, format)?;
    if let Some(name) = a.config.file_name() {
        let copy = a.out.join(name);
        std::fs::copy(&a.config, &copy)
            .with_context(|| format!("copying config to {}", copy.display()))?;
        written.push(copy);
    }
    for r in &results {
        println!(
            "{}: overall {:.4} ({} test images)",
            r.config.name, r.overall_accuracy, r.n_test
        );
    }
    for p in written {
        log::info!("wrote {}", p.display());
    }
    Ok(())
}

fn spoof(a: SpoofArgs) -> Result<()> {
    check_k_t(a.k_t)?;
    if a.alpha < 0.0 {
        return Err(usage(format!("--alpha {} must be non-negative", a.alpha)));
    }
    let ext = a
        .out
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default();
    if !matches!(ext.as_str(), "png" | "jpg" | "jpeg") {
        return Err(usage("--out must end in .png, .jpg or .jpeg"));
    }
    let img = load_image::<f64>(&a.image)?;
    let target = match (&a.target_image, a.b1, a.b2) {
        (Some(path), _, _) => fit_image(&load_image::<f64>(path)?, a.k_t, None)
            .with_context(|| format!("fitting target {}", path.display()))?,
        (None, Some(b1), Some(b2)) => explicit_target(b1, b2, a.k_t),
        _ => return Err(usage("give --target-image or both --b1 and --b2")),
    };
    let outcome = spoof_image(&img, target, a.k_t, a.alpha)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    if ext == "png" {
        outcome.image.save_png(&a.out)?;
    } else {
        outcome.image.save_jpeg(&a.out, CompressionQuality::MAX)?;
    }
    let doc = serde_json::json!({
        "source": outcome.config.source,
        "target": outcome.config.target,
        "k_t": a.k_t,
        "alpha": a.alpha,
        "clipped": outcome.clipped,
        "max_abs_diff": outcome.max_abs_diff,
        "source_fit": "grayscale; gain applied to every channel",
    });
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, &doc)?;
    writeln!(out)?;
    Ok(())
}

fn fixtures(a: FixturesArgs) -> Result<()> {
    use rand::SeedableRng;

    if a.size < 16 {
        return Err(usage("--size must be at least 16"));
    }
    let pop = match a.population {
        Kind::Real => Population::real_like(),
        Kind::Flat => Population::generated_like(),
    };
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(a.seed);
    for i in 0..a.count {
        let (img, _) = pop.sample::<f64, _>(a.size, &mut rng);
        img.save_png(a.out.join(format!("{}{i:05}.png", pop.tag)))?;
    }
    Ok(())
}
