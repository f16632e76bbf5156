//! T60 error statistics of generated impulse responses, ablation
//! comparisons, a nearest-neighbour baseline and constant-depth steering.

use std::fmt::Write as _;

use crate::acoustics::{estimate_t60, t60_percent_error};
use crate::dataset::Image;
use crate::dsp::AudioBuffer;
use crate::error::{Error, Result};
use crate::gan::{encode_batch, infer_batch_unchecked, train, Ablation, GanModel, PreparedSample, TrainConfig};
use crate::irsynth::{spectrogram_to_ir, PhaseMode};
use crate::preset::Preset;

/// Noise and phase seed used for every evaluated sample.
pub const EVAL_SEED: u64 = 0xe7a1;
/// Display clip for percent errors in histograms.
pub const DISPLAY_CLIP_PCT: f64 = 2000.0;

/// Mean, sample standard deviation and median.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                count: 0,
                mean: f64::NAN,
                std: f64::NAN,
                median: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        Self { count: n, mean, std, median }
    }
}

/// One scored test sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub id: String,
    pub reference_t60: f64,
    pub generated_t60: f64,
    pub signed_error: f64,
    pub abs_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub variant: String,
    pub seeds: Vec<u64>,
    pub corpus_id: String,
    pub rows: Vec<EvalRow>,
    /// Samples left out because a T60 could not be fitted.
    pub excluded: usize,
}

impl EvalReport {
    /// Statistics of the signed percent errors.
    pub fn signed(&self) -> Summary {
        Summary::of(&self.rows.iter().map(|r| r.signed_error).collect::<Vec<_>>())
    }

    /// Statistics of the absolute percent errors.
    pub fn absolute(&self) -> Summary {
        Summary::of(&self.rows.iter().map(|r| r.abs_error).collect::<Vec<_>>())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("id\treference_t60\tgenerated_t60\tsigned_error_pct\tabs_error_pct\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{:.6}\t{:.6}\t{:.4}\t{:.4}",
                r.id, r.reference_t60, r.generated_t60, r.signed_error, r.abs_error
            );
        }
        out
    }

    pub fn summary_text(&self) -> String {
        let (s, a) = (self.signed(), self.absolute());
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let mut out = String::new();
        let _ = writeln!(out, "variant\t{}", self.variant);
        let _ = writeln!(out, "corpus\t{}", self.corpus_id);
        let _ = writeln!(out, "seeds\t{}", seeds.join(","));
        let _ = writeln!(out, "samples\t{}", s.count);
        let _ = writeln!(out, "excluded\t{}", self.excluded);
        let _ = writeln!(out, "mean_pct\t{:.4}", s.mean);
        let _ = writeln!(out, "std_pct\t{:.4}", s.std);
        let _ = writeln!(out, "median_pct\t{:.4}", s.median);
        let _ = writeln!(out, "abs_mean_pct\t{:.4}", a.mean);
        let _ = writeln!(out, "abs_median_pct\t{:.4}", a.median);
        out
    }

    /// Histogram of signed errors clipped to [-100, 2000] %.
    pub fn histogram_csv(&self, bin_width: f64) -> String {
        let values: Vec<f64> = self.rows.iter().map(|r| r.signed_error.clamp(-100.0, DISPLAY_CLIP_PCT)).collect();
        histogram_csv(&values, -100.0, DISPLAY_CLIP_PCT, bin_width)
    }
}

/// `bin_start,bin_end,count` rows covering `[lo, hi]`; values at `hi` fall
/// in the last bin.
pub fn histogram_csv(values: &[f64], lo: f64, hi: f64, bin_width: f64) -> String {
    let counts = histogram_counts(values, lo, hi, bin_width);
    let mut out = String::from("bin_start,bin_end,count\n");
    for (k, c) in counts.iter().enumerate() {
        let start = lo + k as f64 * bin_width;
        let _ = writeln!(out, "{},{},{}", start, (start + bin_width).min(hi), c);
    }
    out
}

/// Bin counts over `[lo, hi]`; values outside fall in the edge bins.
pub fn histogram_counts(values: &[f64], lo: f64, hi: f64, bin_width: f64) -> Vec<usize> {
    let bins = (((hi - lo) / bin_width).ceil() as usize).max(1);
    let mut counts = vec![0usize; bins];
    for &v in values {
        let k = (((v - lo) / bin_width).floor().max(0.0) as usize).min(bins - 1);
        counts[k] += 1;
    }
    counts
}

/// Bar chart of `counts`, dark bars on white, `height` pixels tall.
pub fn histogram_image(counts: &[usize], bar_width: usize, height: usize) -> Image {
    let width = (counts.len() * bar_width).max(1);
    let mut img = Image::filled(width, height, 3, 1.0);
    let top = counts.iter().copied().max().unwrap_or(0).max(1);
    for (k, &c) in counts.iter().enumerate() {
        let bar = (c * height).div_ceil(top);
        for y in height - bar..height {
            for x in k * bar_width..(k + 1) * bar_width - usize::from(bar_width > 2) {
                for ch in 0..3 {
                    img.set(ch, y, x, [0.2, 0.3, 0.5][ch]);
                }
            }
        }
    }
    img
}

/// Scores generated impulse responses (paired with test samples) against
/// the references.
pub fn score(
    variant: &str,
    seeds: &[u64],
    corpus_id: &str,
    samples: &[&PreparedSample],
    generated: &[AudioBuffer],
) -> Result<EvalReport> {
    let t60s: Vec<Option<f64>> = generated
        .iter()
        .map(|ir| estimate_t60(ir).ok().filter(|a| a.status == crate::acoustics::FitStatus::Regular).map(|a| a.t60))
        .collect();
    score_t60(variant, seeds, corpus_id, samples, &t60s)
}

fn score_t60(
    variant: &str,
    seeds: &[u64],
    corpus_id: &str,
    samples: &[&PreparedSample],
    generated: &[Option<f64>],
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("test split"));
    }
    let mut rows = Vec::new();
    let mut excluded = 0;
    for (s, g) in samples.iter().zip(generated) {
        match (s.reference_t60, g) {
            (Some(reference), Some(generated)) => {
                let e = t60_percent_error(*generated, reference)?;
                rows.push(EvalRow {
                    id: s.id.clone(),
                    reference_t60: reference,
                    generated_t60: *generated,
                    signed_error: e.signed,
                    abs_error: e.absolute,
                });
            }
            _ => excluded += 1,
        }
    }
    Ok(EvalReport {
        variant: variant.to_string(),
        seeds: seeds.to_vec(),
        corpus_id: corpus_id.to_string(),
        rows,
        excluded,
    })
}

fn masked_inputs(model: &GanModel, test: &[PreparedSample], depth: Option<f32>) -> Vec<Vec<f32>> {
    let s = model.preset.image_size;
    test.iter()
        .map(|t| {
            let mut x = t.input.clone();
            if model.ablation.no_depth {
                x[3 * s * s..].fill(0.0);
            } else if let Some(d) = depth {
                x[3 * s * s..].fill(d);
            }
            x
        })
        .collect()
}

fn generate_irs(model: &GanModel, test: &[PreparedSample], depth: Option<f32>) -> Result<Vec<AudioBuffer>> {
    let inputs = masked_inputs(model, test, depth);
    let refs: Vec<&[f32]> = inputs.iter().map(Vec::as_slice).collect();
    let seeds = vec![EVAL_SEED; refs.len()];
    Ok(infer_batch_unchecked(model, &refs, &seeds, PhaseMode::Random)?
        .into_iter()
        .map(|i| i.ir)
        .collect())
}

/// Renders every test scene with [`EVAL_SEED`] and scores it.
pub fn evaluate_model(model: &GanModel, test: &[PreparedSample], corpus_id: &str) -> Result<EvalReport> {
    if !model.is_trained() {
        return Err(Error::Untrained);
    }
    evaluate_model_unchecked(model, test, corpus_id)
}

/// [`evaluate_model`] for untrained baselines.
pub fn evaluate_model_unchecked(model: &GanModel, test: &[PreparedSample], corpus_id: &str) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::EmptyInput("test split"));
    }
    let irs = generate_irs(model, test, None)?;
    let refs: Vec<&PreparedSample> = test.iter().collect();
    let label = if model.is_trained() { model.ablation.label() } else { "untrained" };
    score(label, &[model.seed], corpus_id, &refs, &irs)
}

/// Renders each reference spectrogram itself; isolates the error added by
/// phase reconstruction and analysis.
pub fn evaluate_oracle(preset: &Preset, test: &[PreparedSample], corpus_id: &str) -> Result<EvalReport> {
    let (frames, bins) = preset.spectrogram_shape();
    let mut irs = Vec::with_capacity(test.len());
    for t in test {
        let mut values = vec![0.0f32; frames * bins];
        for b in 0..bins {
            for f in 0..frames {
                values[f * bins + b] = t.logmag[b * frames + f];
            }
        }
        let spec = crate::dsp::Spectrogram::from_log_magnitude(values, frames, bins, preset.stft)?;
        irs.push(spectrogram_to_ir(&spec, PhaseMode::Random, EVAL_SEED)?);
    }
    let refs: Vec<&PreparedSample> = test.iter().collect();
    score("oracle", &[], corpus_id, &refs, &irs)
}

/// Nearest training scene by encoder-feature distance; its reference IR
/// is the prediction.
pub fn nn_baseline(
    model: &GanModel,
    train_set: &[PreparedSample],
    test: &[PreparedSample],
    corpus_id: &str,
) -> Result<EvalReport> {
    if train_set.is_empty() {
        return Err(Error::EmptyInput("training split"));
    }
    if test.is_empty() {
        return Err(Error::EmptyInput("test split"));
    }
    let features = |set: &[PreparedSample]| {
        let inputs = masked_inputs(model, set, None);
        let refs: Vec<&[f32]> = inputs.iter().map(Vec::as_slice).collect();
        encode_batch(model, &refs)
    };
    let train_f = features(train_set)?;
    let test_f = features(test)?;
    let predicted: Vec<Option<f64>> = test_f
        .iter()
        .map(|q| {
            let dist = |f: &Vec<f32>| f.iter().zip(q).map(|(a, b)| ((a - b) as f64).powi(2)).sum::<f64>();
            let (best, _) = train_f
                .iter()
                .enumerate()
                .map(|(i, f)| (i, dist(f)))
                .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            train_set[best].reference_t60
        })
        .collect();
    let refs: Vec<&PreparedSample> = test.iter().collect();
    score_t60("nearest_neighbour", &[model.seed], corpus_id, &refs, &predicted)
}

/// Trained-model reports for every (variant, seed) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub reports: Vec<EvalReport>,
}

impl AblationReport {
    pub fn get(&self, variant: &str, seed: u64) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.variant == variant && r.seeds == [seed])
    }

    /// Per seed, variants ordered by `|mean signed error|`, best first.
    pub fn ordering_table(&self) -> String {
        let mut seeds: Vec<u64> = self.reports.iter().flat_map(|r| r.seeds.clone()).collect();
        seeds.sort_unstable();
        seeds.dedup();
        let mut out = String::from("seed\tvariant\tmean_pct\tstd_pct\tmedian_pct\tabs_median_pct\trank\n");
        for seed in seeds {
            let mut rows: Vec<&EvalReport> = self.reports.iter().filter(|r| r.seeds == [seed]).collect();
            rows.sort_by(|a, b| a.signed().mean.abs().total_cmp(&b.signed().mean.abs()));
            for (rank, r) in rows.iter().enumerate() {
                let (s, a) = (r.signed(), r.absolute());
                let _ = writeln!(
                    out,
                    "{seed}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{}",
                    r.variant,
                    s.mean,
                    s.std,
                    s.median,
                    a.median,
                    rank + 1
                );
            }
        }
        out
    }
}

/// Trains each variant for each seed on the same data and evaluates on
/// `test`. `on_model` sees every trained model (for saving checkpoints).
pub fn ablation_suite(
    train_set: &[PreparedSample],
    val: &[PreparedSample],
    test: &[PreparedSample],
    base: &TrainConfig,
    variants: &[Ablation],
    seeds: &[u64],
    corpus_id: &str,
    mut on_model: impl FnMut(&GanModel, &EvalReport),
) -> Result<AblationReport> {
    if seeds.len() < 2 {
        return Err(Error::invalid("seeds", "an ablation needs at least two seeds"));
    }
    if variants.is_empty() {
        return Err(Error::invalid("variants", "no variants given"));
    }
    let mut reports = Vec::with_capacity(variants.len() * seeds.len());
    for &variant in variants {
        for &seed in seeds {
            let config = TrainConfig { seed, ..base.clone() }.with_ablation(variant);
            log::info!("training {} seed {seed}", variant.label());
            let outcome = train(train_set, val, &config)?;
            let report = evaluate_model(&outcome.model, test, corpus_id)?;
            on_model(&outcome.model, &report);
            reports.push(report);
        }
    }
    Ok(AblationReport { reports })
}

/// Generated T60 values (seconds) for one depth condition.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthDistribution {
    pub label: String,
    pub t60: Vec<f64>,
    pub excluded: usize,
}

impl DepthDistribution {
    pub fn summary(&self) -> Summary {
        Summary::of(&self.t60)
    }
}

/// Constant depth used as the "far" condition.
pub const MAX_DEPTH: f32 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DepthSteeringReport {
    pub scene: DepthDistribution,
    pub zero: DepthDistribution,
    pub max: DepthDistribution,
}

impl DepthSteeringReport {
    pub fn distributions(&self) -> [&DepthDistribution; 3] {
        [&self.scene, &self.zero, &self.max]
    }

    pub fn summary_text(&self) -> String {
        let mut out = String::from("depth\tcount\texcluded\tmean_s\tstd_s\tmedian_s\n");
        for d in self.distributions() {
            let s = d.summary();
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}",
                d.label, s.count, d.excluded, s.mean, s.std, s.median
            );
        }
        out
    }

    /// Histogram of each distribution over `[0, hi]` seconds.
    pub fn histogram_csv(&self, hi: f64, bin_width: f64) -> String {
        let mut out = String::from("depth,bin_start,bin_end,count\n");
        for d in self.distributions() {
            let clipped: Vec<f64> = d.t60.iter().map(|v| v.min(hi)).collect();
            for line in histogram_csv(&clipped, 0.0, hi, bin_width).lines().skip(1) {
                let _ = writeln!(out, "{},{line}", d.label);
            }
        }
        out
    }
}

fn depth_distribution(model: &GanModel, test: &[PreparedSample], depth: Option<f32>, label: &str) -> Result<DepthDistribution> {
    let irs = generate_irs(model, test, depth)?;
    let mut t60 = Vec::with_capacity(irs.len());
    let mut excluded = 0;
    for ir in &irs {
        match estimate_t60(ir) {
            Ok(a) if a.status == crate::acoustics::FitStatus::Regular => t60.push(a.t60),
            _ => excluded += 1,
        }
    }
    Ok(DepthDistribution {
        label: label.to_string(),
        t60,
        excluded,
    })
}

/// Generated T60 distributions with the scene depth, constant 0 and
/// constant [`MAX_DEPTH`].
pub fn depth_steering(model: &GanModel, test: &[PreparedSample]) -> Result<DepthSteeringReport> {
    if !model.is_trained() {
        return Err(Error::Untrained);
    }
    if test.is_empty() {
        return Err(Error::EmptyInput("test split"));
    }
    Ok(DepthSteeringReport {
        scene: depth_distribution(model, test, None, "scene")?,
        zero: depth_distribution(model, test, Some(0.0), "zero")?,
        max: depth_distribution(model, test, Some(MAX_DEPTH), "max")?,
    })
}
