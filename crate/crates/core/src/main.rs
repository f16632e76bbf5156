//! `reverbkit` command line: corpus generation, training, inference,
//! analysis, convolution, evaluation and a convolution benchmark.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use reverbkit::acoustics::{multiband_t60, octave_bands};
use reverbkit::convolver::{apply_ir_with, convolve_direct, ConvolutionPlan, Normalize};
use reverbkit::dataset::{build_corpus, preprocess_image, Corpus, Image, Split, SplitFractions};
use reverbkit::dsp::{read_wav_mono, write_spectrogram, write_wav, AudioBuffer, WavFormat};
use reverbkit::eval::{
    ablation_suite, depth_steering, evaluate_model, histogram_counts, histogram_image, nn_baseline, AblationReport,
    EvalReport, DISPLAY_CLIP_PCT,
};
use reverbkit::gan::{infer, metrics_csv, prepare_split, train_with, Ablation, GanModel, TrainConfig};
use reverbkit::irsynth::PhaseMode;
use reverbkit::preset::{Preset, PresetName, PRESET_ENV};
use reverbkit::Error;

#[derive(Debug, Parser)]
#[command(name = "reverbkit", version, about = "Room impulse responses from images, and the tools around them")]
struct Cli {
    /// Scale preset.
    #[arg(long, global = true, env = PRESET_ENV, default_value = "toy")]
    preset: PresetName,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a synthetic paired corpus (WAV, RGB, depth, manifest).
    Dataset(DatasetArgs),
    /// Train one model per seed on a corpus.
    Train(TrainArgs),
    /// Generate an impulse response for an image.
    Infer(InferArgs),
    /// Report the T60 of an impulse response.
    Analyze(AnalyzeArgs),
    /// Convolve a dry signal with an impulse response.
    Convolve(ConvolveArgs),
    /// Evaluate checkpoints on a corpus test split.
    Eval(EvalArgs),
    /// Time partitioned against direct convolution.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct DatasetArgs {
    /// Number of scenes.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Train, validation and test fractions.
    #[arg(long, default_value_t = SplitFractions::default())]
    fractions: SplitFractions,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Output directory for checkpoints, metrics and the resolved config.
    #[arg(long)]
    out: PathBuf,
    /// TOML training config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    seeds: Vec<u64>,
    /// main, no_depth, no_t60p, or a `+` combination.
    #[arg(long)]
    ablation: Option<Ablation>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lambda_l1: Option<f64>,
    #[arg(long)]
    lambda_t60: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Phase {
    Random,
    Iterative,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// RGB image; center-cropped and resized to the preset size.
    #[arg(long)]
    image: PathBuf,
    /// 16-bit depth PNG scaled to [0, 1]. Zero depth when absent.
    #[arg(long)]
    depth: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replace the depth map with a constant in [0, 1].
    #[arg(long, value_parser = unit_interval)]
    depth_override: Option<f32>,
    #[arg(long, value_enum, default_value_t = Phase::Random)]
    phase: Phase,
    /// Output WAV.
    #[arg(long)]
    out: PathBuf,
    /// Also write the log-magnitude spectrogram.
    #[arg(long)]
    spectrogram: Option<PathBuf>,
    #[arg(long, default_value = "float32")]
    format: WavFormat,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Bands {
    None,
    Octave,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    ir: PathBuf,
    #[arg(long, value_enum, default_value_t = Bands::None)]
    bands: Bands,
}

#[derive(Debug, Args)]
struct ConvolveArgs {
    dry: PathBuf,
    ir: PathBuf,
    out: PathBuf,
    /// none, peak or rms.
    #[arg(long, default_value = "peak")]
    normalize: Normalize,
    /// Partition size, a power of two.
    #[arg(long)]
    block_size: Option<usize>,
    #[arg(long, default_value = "float32")]
    format: WavFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EvalMode {
    Single,
    Ablation,
    Nn,
    Depth,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = EvalMode::Single)]
    mode: EvalMode,
    /// Trained checkpoints (repeatable).
    #[arg(long = "checkpoint")]
    checkpoints: Vec<PathBuf>,
    /// Output directory for reports.
    #[arg(long)]
    out: PathBuf,
    /// Ablation mode: train each variant per seed instead of loading checkpoints.
    #[arg(long)]
    train: bool,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    seeds: Vec<u64>,
    /// Variants trained with `--train` (repeatable).
    #[arg(long = "variant", default_values = ["main", "no_t60p", "no_depth"])]
    variants: Vec<Ablation>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Histogram bin width in percent.
    #[arg(long, default_value_t = 25.0)]
    bin_width: f64,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "1024,8192,65536")]
    ir_len: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "256,1024,4096")]
    block: Vec<usize>,
    /// Dry signal length in seconds.
    #[arg(long, default_value_t = 1.0)]
    seconds: f64,
    #[arg(long, default_value_t = 22_050)]
    sample_rate: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn unit_interval(s: &str) -> Result<f32, String> {
    let v: f32 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    log::info!("resolved config: {cli:?}");
    let preset = Preset::from_name(cli.preset);
    let result = match cli.command {
        Command::Dataset(a) => cmd_dataset(a, &preset),
        Command::Train(a) => cmd_train(a, cli.preset),
        Command::Infer(a) => cmd_infer(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Convolve(a) => cmd_convolve(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            let _ = Cli::command().error(ErrorKind::ArgumentConflict, msg).print();
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn cmd_dataset(a: DatasetArgs, preset: &Preset) -> Outcome {
    let manifest = build_corpus(&a.out, a.n as usize, &a.fractions, a.seed, preset)?;
    let counts = Split::ALL.map(|s| manifest.split(s).count());
    println!(
        "{}: {} scenes (train {}, val {}, test {})",
        a.out.display(),
        manifest.entries.len(),
        counts[0],
        counts[1],
        counts[2]
    );
    Ok(())
}

fn cmd_train(a: TrainArgs, preset_name: PresetName) -> Outcome {
    let mut base = match &a.config {
        Some(path) => TrainConfig::read(path)?,
        None => TrainConfig::for_preset(preset_name),
    };
    if let Some(e) = a.epochs {
        base.epochs = e;
    }
    if let Some(b) = a.batch_size {
        base.batch_size = b;
    }
    if let Some(l) = a.lambda_l1 {
        base.lambda_l1 = l;
    }
    if let Some(l) = a.lambda_t60 {
        base.lambda_t60 = l;
    }
    if let Some(ab) = a.ablation {
        base = base.with_ablation(ab);
    }
    if a.seeds.is_empty() {
        return Err(Failure::Usage("at least one seed is required".into()));
    }
    let corpus = Corpus::open(&a.corpus)?;
    let preset = Preset::from_name(base.preset);
    if corpus.manifest.preset != base.preset {
        return Err(Error::InvalidParameter {
            name: "preset",
            reason: format!("corpus was built for `{}`, config asks for `{}`", corpus.manifest.preset, base.preset),
        }
        .into());
    }
    let train_set = prepare_split(&corpus, Split::Train, &preset)?;
    let val_set = prepare_split(&corpus, Split::Val, &preset)?;
    create_dir(&a.out)?;
    for &seed in &a.seeds {
        let config = TrainConfig { seed, ..base.clone() }.resolved()?;
        log::info!("resolved training config:\n{}", config.to_toml());
        let stem = format!("{}-seed{seed}", config.ablation().label());
        write_text(&a.out.join(format!("{stem}.toml")), &config.to_toml())?;
        let outcome = train_with(&train_set, &val_set, &config, |_| {})?;
        let ckpt = a.out.join(format!("{stem}.ckpt"));
        outcome.model.save(&ckpt)?;
        write_text(&a.out.join(format!("{stem}.metrics.csv")), &metrics_csv(&outcome.metrics))?;
        println!("{}", ckpt.display());
    }
    Ok(())
}

fn cmd_infer(a: InferArgs) -> Outcome {
    let model = GanModel::load(&a.checkpoint)?;
    let s = model.preset.image_size;
    let rgb = preprocess_image(&Image::read_rgb_png(&a.image)?, s)?;
    let depth = match &a.depth {
        Some(p) => preprocess_image(&Image::read_depth_png(p)?, s)?,
        None => {
            if a.depth_override.is_none() && !model.ablation.no_depth {
                log::warn!("no depth map given; using zero depth");
            }
            Image::filled(s, s, 1, 0.0)
        }
    };
    let mut out = infer(&model, &rgb, &depth, a.seed, a.depth_override)?;
    if let Phase::Iterative = a.phase {
        out.ir = reverbkit::irsynth::spectrogram_to_ir(&out.spectrogram, PhaseMode::iterative(), a.seed)?;
    }
    write_wav(&a.out, &out.ir, a.format)?;
    if let Some(p) = &a.spectrogram {
        write_spectrogram(p, &out.spectrogram)?;
    }
    println!("{} ({:.3} s)", a.out.display(), out.ir.duration());
    Ok(())
}

fn cmd_analyze(a: AnalyzeArgs) -> Outcome {
    let ir = read_wav_mono(&a.ir)?;
    let bands = match a.bands {
        Bands::None => Vec::new(),
        Bands::Octave => octave_bands(ir.sample_rate()),
    };
    print!("{}", multiband_t60(&ir, &bands)?);
    Ok(())
}

fn cmd_convolve(a: ConvolveArgs) -> Outcome {
    let dry = read_wav_mono(&a.dry)?;
    let ir = read_wav_mono(&a.ir)?;
    let wet = apply_ir_with(&dry, &ir, a.normalize, a.block_size)?;
    write_wav(&a.out, &wet, a.format)?;
    println!("{} ({} samples)", a.out.display(), wet.len());
    Ok(())
}

fn write_report(dir: &Path, stem: &str, report: &EvalReport, bin_width: f64) -> Result<(), Error> {
    write_text(&dir.join(format!("{stem}.tsv")), &report.to_tsv())?;
    write_text(&dir.join(format!("{stem}.summary.txt")), &report.summary_text())?;
    write_text(&dir.join(format!("{stem}.hist.csv")), &report.histogram_csv(bin_width))?;
    let clipped: Vec<f64> = report.rows.iter().map(|r| r.signed_error.clamp(-100.0, DISPLAY_CLIP_PCT)).collect();
    let counts = histogram_counts(&clipped, -100.0, DISPLAY_CLIP_PCT, bin_width);
    histogram_image(&counts, 4, 160).write_rgb_png(dir.join(format!("{stem}.hist.png")))?;
    print!("{}", report.summary_text());
    Ok(())
}

fn load_models(paths: &[PathBuf]) -> Result<Vec<GanModel>, Failure> {
    if paths.is_empty() {
        return Err(Failure::Usage("at least one --checkpoint is required".into()));
    }
    Ok(paths.iter().map(GanModel::load).collect::<Result<_, _>>()?)
}

fn cmd_eval(a: EvalArgs) -> Outcome {
    if a.mode == EvalMode::Ablation && !a.train && a.checkpoints.len() < 2 {
        return Err(Failure::Usage("ablation mode needs two or more --checkpoint values, or --train".into()));
    }
    let corpus = Corpus::open(&a.corpus)?;
    let corpus_id = corpus.manifest.id();
    let preset = Preset::from_name(corpus.manifest.preset);
    let test = prepare_split(&corpus, Split::Test, &preset)?;
    create_dir(&a.out)?;
    match a.mode {
        EvalMode::Single => {
            for model in load_models(&a.checkpoints)? {
                let report = evaluate_model(&model, &test, &corpus_id)?;
                write_report(&a.out, &format!("{}-seed{}", report.variant, model.seed), &report, a.bin_width)?;
            }
        }
        EvalMode::Nn => {
            let models = load_models(&a.checkpoints)?;
            let train_set = prepare_split(&corpus, Split::Train, &preset)?;
            for model in models {
                let report = nn_baseline(&model, &train_set, &test, &corpus_id)?;
                write_report(&a.out, &format!("nn-seed{}", model.seed), &report, a.bin_width)?;
            }
        }
        EvalMode::Depth => {
            for model in load_models(&a.checkpoints)? {
                let report = depth_steering(&model, &test)?;
                let stem = format!("depth-{}-seed{}", model.ablation.label(), model.seed);
                write_text(&a.out.join(format!("{stem}.summary.txt")), &report.summary_text())?;
                write_text(&a.out.join(format!("{stem}.hist.csv")), &report.histogram_csv(2.0, 0.05))?;
                print!("{}", report.summary_text());
            }
        }
        EvalMode::Ablation => {
            let ablation = if a.train {
                let mut base = TrainConfig::for_preset(corpus.manifest.preset);
                if let Some(e) = a.epochs {
                    base.epochs = e;
                }
                log::info!("resolved base training config:\n{}", base.to_toml());
                let train_set = prepare_split(&corpus, Split::Train, &preset)?;
                let val_set = prepare_split(&corpus, Split::Val, &preset)?;
                let mut saved = Ok(());
                let report = ablation_suite(&train_set, &val_set, &test, &base, &a.variants, &a.seeds, &corpus_id, |m, _| {
                    if saved.is_ok() {
                        saved = m.save(a.out.join(format!("{}-seed{}.ckpt", m.ablation.label(), m.seed)));
                    }
                })?;
                saved?;
                report
            } else {
                let mut reports = Vec::new();
                for model in load_models(&a.checkpoints)? {
                    reports.push(evaluate_model(&model, &test, &corpus_id)?);
                }
                AblationReport { reports }
            };
            for r in &ablation.reports {
                let stem = format!("{}-seed{}", r.variant, r.seeds.first().copied().unwrap_or_default());
                write_report(&a.out, &stem, r, a.bin_width)?;
            }
            let table = ablation.ordering_table();
            write_text(&a.out.join("ordering.tsv"), &table)?;
            print!("{table}");
        }
    }
    Ok(())
}

fn time<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn noise(len: usize, rate: u32, rng: &mut ChaCha8Rng) -> Result<AudioBuffer, Error> {
    AudioBuffer::new((0..len).map(|_| rng.random_range(-1.0f32..1.0)).collect(), rate)
}

fn cmd_bench(a: BenchArgs) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let dry = noise((a.seconds * a.sample_rate as f64).round() as usize, a.sample_rate, &mut rng)?;
    println!("ir_len\tblock\tdirect_ms\tpartitioned_ms\tspeedup");
    for &n in &a.ir_len {
        let ir = noise(n, a.sample_rate, &mut rng)?;
        let (direct, t_direct) = time(|| convolve_direct(&dry, &ir));
        direct?;
        for &block in &a.block {
            let plan = Arc::new(ConvolutionPlan::new(&ir, block)?);
            let (wet, t_part) = time(|| plan.convolve(&dry));
            wet?;
            println!(
                "{n}\t{block}\t{:.2}\t{:.2}\t{:.1}",
                t_direct.as_secs_f64() * 1e3,
                t_part.as_secs_f64() * 1e3,
                t_direct.as_secs_f64() / t_part.as_secs_f64()
            );
        }
    }
    Ok(())
}
