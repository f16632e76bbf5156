//! Alternating least-squares GAN training with three Adam optimizers.
//!
//! Each batch: encode the scenes, append noise, generate; one discriminator
//! step on real and generated spectrograms (condition detached); then one
//! joint generator + encoder step through the freshly updated
//! discriminator.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::infer::infer_batch_unchecked;
use super::loss::{discriminator_loss, generator_loss, proxy_target, LossTerms, LossWeights, T60pTargets};
use super::model::{concat_features, stack, Ablation, GanModel, Normalization};
use crate::acoustics::{estimate_t60, t60_percent_error, FitStatus};
use crate::autodiff::{Adam, AdamConfig, Graph, ParamSet, Tensor, Var};
use crate::dataset::{preprocess_image, Corpus, SceneSample, Split};
use crate::dsp::analyze_log_spectrogram;
use crate::error::{Error, Result};
use crate::irsynth::PhaseMode;
use crate::preset::{Preset, PresetName};

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub preset: PresetName,
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda_l1: f64,
    pub lambda_t60: f64,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub lr_encoder: f64,
    pub seed: u64,
    pub no_depth: bool,
    pub no_t60p: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::for_preset(PresetName::Toy)
    }
}

impl TrainConfig {
    pub fn for_preset(name: PresetName) -> Self {
        let p = Preset::from_name(name);
        Self {
            preset: name,
            epochs: 50,
            batch_size: p.batch_size,
            lambda_l1: p.lambda_l1,
            lambda_t60: p.lambda_t60,
            lr_generator: p.lr_generator,
            lr_discriminator: p.lr_discriminator,
            lr_encoder: p.lr_encoder,
            seed: 0,
            no_depth: false,
            no_t60p: false,
        }
    }

    pub fn ablation(&self) -> Ablation {
        Ablation {
            no_depth: self.no_depth,
            no_t60p: self.no_t60p,
        }
    }

    pub fn with_ablation(mut self, ablation: Ablation) -> Self {
        self.no_depth = ablation.no_depth;
        self.no_t60p = ablation.no_t60p;
        self
    }

    /// Applies the ablation switches to the weights (`no_t60p` zeroes the
    /// proxy weight) and checks ranges.
    pub fn resolved(&self) -> Result<Self> {
        let mut out = self.clone();
        if out.no_t60p {
            out.lambda_t60 = 0.0;
        }
        if out.epochs == 0 {
            return Err(Error::invalid("epochs", "must be at least 1"));
        }
        if out.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        for (name, v) in [
            ("lambda_l1", out.lambda_l1),
            ("lambda_t60", out.lambda_t60),
            ("lr_generator", out.lr_generator),
            ("lr_discriminator", out.lr_discriminator),
            ("lr_encoder", out.lr_encoder),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, format!("must be finite and non-negative, got {v}")));
            }
        }
        Ok(out)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plain fields serialize")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::format("training config", e.to_string()))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_toml(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            l1: self.lambda_l1,
            t60: self.lambda_t60,
        }
    }
}

/// A scene converted to network inputs and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSample {
    pub id: String,
    /// RGB then depth, `[4, S, S]`.
    pub input: Vec<f32>,
    /// Log-magnitudes, bin-major `[bins, frames]`.
    pub logmag: Vec<f32>,
    /// T60 proxy of `logmag` when its fit is regular.
    pub proxy_t60: Option<f64>,
    /// T60 of the reference impulse response when its fit is regular.
    pub reference_t60: Option<f64>,
}

/// Resizes images if needed, analyzes the IR and measures both T60s.
pub fn prepare_sample(sample: &SceneSample, preset: &Preset) -> Result<PreparedSample> {
    let s = preset.image_size;
    let fit = |img: &crate::dataset::Image| {
        if img.width == s && img.height == s {
            Ok(img.clone())
        } else {
            preprocess_image(img, s)
        }
    };
    let rgb = fit(&sample.rgb)?;
    let depth = fit(&sample.depth)?;
    let mut input = rgb.data;
    input.extend_from_slice(&depth.data);
    let spec = analyze_log_spectrogram(&sample.ir, &preset.stft)?;
    let (frames, bins) = preset.spectrogram_shape();
    if (spec.frames(), spec.bins()) != (frames, bins) {
        return Err(Error::ShapeMismatch {
            expected: vec![frames, bins],
            actual: vec![spec.frames(), spec.bins()],
        });
    }
    let values = spec.log_magnitude()?;
    let mut logmag = vec![0.0f32; frames * bins];
    for f in 0..frames {
        for b in 0..bins {
            logmag[b * frames + f] = values[f * bins + b];
        }
    }
    let proxy_t60 = proxy_target(&logmag, bins, frames, preset.stft.frame_period());
    let reference_t60 = estimate_t60(&sample.ir)
        .ok()
        .filter(|a| a.status == FitStatus::Regular)
        .map(|a| a.t60);
    Ok(PreparedSample {
        id: sample.entry.id.clone(),
        input,
        logmag,
        proxy_t60,
        reference_t60,
    })
}

pub fn prepare_split(corpus: &Corpus, split: Split, preset: &Preset) -> Result<Vec<PreparedSample>> {
    corpus
        .manifest
        .split(split)
        .map(|e| prepare_sample(&corpus.load_entry(e)?, preset))
        .collect()
}

/// Metric row for one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_adv: f64,
    pub g_l1: f64,
    pub g_t60p: f64,
    /// Mean absolute T60 error (%) over the validation split; NaN without one.
    pub val_t60_err_mean: f64,
}

pub const METRICS_HEADER: &str = "epoch,d_loss,g_adv,g_l1,g_t60p,val_t60_err_mean";

pub fn metrics_csv(rows: &[EpochMetrics]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.epoch, r.d_loss, r.g_adv, r.g_l1, r.g_t60p, r.val_t60_err_mean
        );
    }
    out
}

/// Outcome of one optimization step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub d_loss: f64,
    pub terms: LossTerms,
    /// Parameters whose gradient was missing or identically zero.
    pub dead_parameters: Vec<String>,
}

fn collect_grads(g: &Graph<f32>, bound: &[Var], params: &ParamSet<f32>, dead: &mut Vec<String>) -> Vec<Option<Vec<f32>>> {
    bound
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let grad = g.grad(v).map(<[f32]>::to_vec);
            if grad.as_ref().is_none_or(|gr| gr.iter().all(|&x| x == 0.0)) {
                dead.push(params.name(i).to_string());
            }
            grad
        })
        .collect()
}

fn apply(adam: &mut Adam<f32>, params: &mut ParamSet<f32>, grads: &[Option<Vec<f32>>]) -> Result<()> {
    let refs: Vec<Option<&[f32]>> = grads.iter().map(|g| g.as_deref()).collect();
    adam.step(params, &refs)
}

/// Holds the model, optimizers and RNG between steps.
pub struct Trainer<'a> {
    model: GanModel,
    config: TrainConfig,
    data: &'a [PreparedSample],
    opt_e: Adam<f32>,
    opt_g: Adam<f32>,
    opt_d: Adam<f32>,
    rng: ChaCha8Rng,
    epoch: usize,
    step: usize,
}

impl<'a> Trainer<'a> {
    /// Initializes networks from `config.seed` and the normalization from
    /// the training targets.
    pub fn new(data: &'a [PreparedSample], config: &TrainConfig) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyInput("training split"));
        }
        let config = config.resolved()?;
        let preset = Preset::from_name(config.preset);
        let norm = Normalization::fit(data.iter().map(|s| s.logmag.as_slice()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut model = GanModel::new(&preset, norm, config.ablation(), &mut rng)?;
        model.seed = config.seed;
        let s = preset.image_size;
        let (frames, bins) = preset.spectrogram_shape();
        if let Some(bad) = data.iter().find(|d| d.input.len() != 4 * s * s || d.logmag.len() != frames * bins) {
            return Err(Error::invalid("training data", format!("sample {} does not match the preset", bad.id)));
        }
        Ok(Self {
            opt_e: Adam::new(AdamConfig::with_lr(config.lr_encoder), &model.encoder.params),
            opt_g: Adam::new(AdamConfig::with_lr(config.lr_generator), &model.generator.params),
            opt_d: Adam::new(AdamConfig::with_lr(config.lr_discriminator), &model.discriminator.params),
            model,
            config,
            data,
            rng,
            epoch: 0,
            step: 0,
        })
    }

    pub fn model(&self) -> &GanModel {
        &self.model
    }

    pub fn into_model(self) -> GanModel {
        self.model
    }

    fn diverged(&self, detail: String) -> Error {
        let norms: Vec<String> = [
            ("encoder", &self.model.encoder.params),
            ("generator", &self.model.generator.params),
            ("discriminator", &self.model.discriminator.params),
        ]
        .iter()
        .map(|(n, p)| {
            let sq: f64 = p.iter().flat_map(|(_, t)| t.data()).map(|&v| (v as f64).powi(2)).sum();
            format!("{n} |w|={:.4e}", sq.sqrt())
        })
        .collect();
        log::error!("training diverged: {detail}; {}", norms.join(", "));
        Error::Diverged {
            epoch: self.epoch,
            step: self.step,
            detail: format!("{detail}; {}", norms.join(", ")),
        }
    }

    /// One discriminator step followed by one generator + encoder step on
    /// the samples at `batch`.
    pub fn step(&mut self, batch: &[usize]) -> Result<StepReport> {
        let preset = self.model.preset;
        let (frames, bins) = preset.spectrogram_shape();
        let s = preset.image_size;
        let n = batch.len();
        let norm = self.model.norm;
        let mut inputs: Vec<Vec<f32>> = batch.iter().map(|&i| self.data[i].input.clone()).collect();
        if self.model.ablation.no_depth {
            for x in &mut inputs {
                x[3 * s * s..].fill(0.0);
            }
        }
        let reals: Vec<Vec<f32>> = batch
            .iter()
            .map(|&i| self.data[i].logmag.iter().map(|&v| norm.normalize(v)).collect())
            .collect();
        let targets: Vec<Option<f64>> = batch.iter().map(|&i| self.data[i].proxy_t60).collect();
        let noise: Vec<f32> = (0..n * preset.noise).map(|_| StandardNormal.sample(&mut self.rng)).collect();
        let input_refs: Vec<&[f32]> = inputs.iter().map(Vec::as_slice).collect();
        let real_refs: Vec<&[f32]> = reals.iter().map(Vec::as_slice).collect();
        let mut dead = Vec::new();

        // Forward E and G once; the generated batch feeds both steps.
        let mut gg = Graph::<f32>::new();
        let e_bound = self.model.encoder.params.bind(&mut gg, true);
        let g_bound = self.model.generator.params.bind(&mut gg, true);
        let x = gg.input(stack(&input_refs, &[4, s, s])?);
        let feats = self.model.encoder.forward(&mut gg, &e_bound, x)?;
        let u = gg.input(Tensor::new(vec![n, preset.noise], noise)?);
        let z = concat_features(&mut gg, feats, u)?;
        let fake = self.model.generator.forward(&mut gg, &g_bound, z)?;

        // Discriminator step.
        let d_loss = {
            let mut gd = Graph::<f32>::new();
            let d_bound = self.model.discriminator.params.bind(&mut gd, true);
            let real = gd.input(stack(&real_refs, &[1, bins, frames])?);
            let fake_d = gd.input(gg.value(fake).clone());
            let cond = gd.input(gg.value(feats).clone());
            let specs = gd.concat_batch(real, fake_d)?;
            let conds = gd.concat_batch(cond, cond)?;
            let out = self.model.discriminator.forward(&mut gd, &d_bound, specs, conds)?;
            let d_real = gd.slice_batch(out, 0, n)?;
            let d_fake = gd.slice_batch(out, n, n)?;
            let loss = discriminator_loss(&mut gd, d_real, d_fake)?;
            let value = gd.value(loss).item() as f64;
            if !value.is_finite() {
                return Err(self.diverged(format!("discriminator loss {value}")));
            }
            gd.backward(loss)?;
            let grads = collect_grads(&gd, &d_bound, &self.model.discriminator.params, &mut dead);
            apply(&mut self.opt_d, &mut self.model.discriminator.params, &grads)?;
            value
        };

        // Generator + encoder step against the updated discriminator.
        let d_bound = self.model.discriminator.params.bind(&mut gg, false);
        let d_fake = self.model.discriminator.forward(&mut gg, &d_bound, fake, feats)?;
        let real = gg.input(stack(&real_refs, &[1, bins, frames])?);
        let t60 = T60pTargets {
            targets: &targets,
            norm,
            frame_period: preset.stft.frame_period(),
        };
        let (loss, terms) = generator_loss(&mut gg, d_fake, fake, real, self.config.weights(), Some(&t60))?;
        if !terms.total().is_finite() {
            return Err(self.diverged(format!(
                "generator loss terms adv={} l1={} t60p={}",
                terms.adversarial, terms.l1, terms.t60p
            )));
        }
        gg.backward(loss)?;
        let ge = collect_grads(&gg, &e_bound, &self.model.encoder.params, &mut dead);
        let gg_grads = collect_grads(&gg, &g_bound, &self.model.generator.params, &mut dead);
        apply(&mut self.opt_e, &mut self.model.encoder.params, &ge)?;
        apply(&mut self.opt_g, &mut self.model.generator.params, &gg_grads)?;
        self.step += 1;
        if terms.t60p_skipped > 0 {
            log::debug!("step {}: {} samples without a T60 target", self.step, terms.t60p_skipped);
        }
        Ok(StepReport {
            d_loss,
            terms,
            dead_parameters: dead,
        })
    }

    /// One shuffled pass over the training data; returns mean losses.
    pub fn run_epoch(&mut self) -> Result<EpochMetrics> {
        let mut order: Vec<usize> = (0..self.data.len()).collect();
        order.shuffle(&mut self.rng);
        let mut sums = [0.0f64; 4];
        let mut batches = 0usize;
        for batch in order.chunks(self.config.batch_size) {
            let r = self.step(batch)?;
            for (acc, v) in sums.iter_mut().zip([r.d_loss, r.terms.adversarial, r.terms.l1, r.terms.t60p]) {
                *acc += v;
            }
            batches += 1;
        }
        let row = EpochMetrics {
            epoch: self.epoch,
            d_loss: sums[0] / batches as f64,
            g_adv: sums[1] / batches as f64,
            g_l1: sums[2] / batches as f64,
            g_t60p: sums[3] / batches as f64,
            val_t60_err_mean: f64::NAN,
        };
        self.epoch += 1;
        self.model.epochs_trained = self.epoch;
        Ok(row)
    }
}

/// Seed used for validation rendering.
pub const VALIDATION_SEED: u64 = 0x5eed;

/// Mean absolute T60 error (%) of rendered outputs against the reference
/// impulse responses; samples without a regular reference fit are skipped.
pub fn validation_error(model: &GanModel, val: &[PreparedSample]) -> Result<f64> {
    let s = model.preset.image_size;
    let usable: Vec<&PreparedSample> = val.iter().filter(|v| v.reference_t60.is_some()).collect();
    if usable.is_empty() {
        return Ok(f64::NAN);
    }
    let inputs: Vec<Vec<f32>> = usable
        .iter()
        .map(|v| {
            let mut x = v.input.clone();
            if model.ablation.no_depth {
                x[3 * s * s..].fill(0.0);
            }
            x
        })
        .collect();
    let refs: Vec<&[f32]> = inputs.iter().map(Vec::as_slice).collect();
    let seeds = vec![VALIDATION_SEED; refs.len()];
    let outputs = infer_batch_unchecked(model, &refs, &seeds, PhaseMode::Random)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for (out, v) in outputs.iter().zip(&usable) {
        let Ok(a) = estimate_t60(&out.ir) else { continue };
        if let Ok(e) = t60_percent_error(a.t60, v.reference_t60.unwrap()) {
            total += e.absolute;
            count += 1;
        }
    }
    Ok(if count == 0 { f64::NAN } else { total / count as f64 })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: GanModel,
    pub metrics: Vec<EpochMetrics>,
}

/// Full training run; `on_epoch` sees every metric row as it is produced.
pub fn train_with(
    train: &[PreparedSample],
    val: &[PreparedSample],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    let config = config.resolved()?;
    let mut trainer = Trainer::new(train, &config)?;
    let mut metrics = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let mut row = trainer.run_epoch()?;
        row.val_t60_err_mean = validation_error(trainer.model(), val)?;
        log::info!(
            "epoch {}: d={:.4} adv={:.4} l1={:.4} t60p={:.4} val_err={:.1}%",
            row.epoch,
            row.d_loss,
            row.g_adv,
            row.g_l1,
            row.g_t60p,
            row.val_t60_err_mean
        );
        on_epoch(&row);
        metrics.push(row);
    }
    Ok(TrainOutcome {
        model: trainer.into_model(),
        metrics,
    })
}

pub fn train(train: &[PreparedSample], val: &[PreparedSample], config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(train, val, config, |_| {})
}

/// Loads the train and validation splits of `corpus` and trains on them.
pub fn train_corpus(corpus: &Corpus, config: &TrainConfig) -> Result<TrainOutcome> {
    let preset = Preset::from_name(config.preset);
    if corpus.manifest.preset != config.preset {
        return Err(Error::invalid(
            "preset",
            format!("corpus was built for `{}`, config asks for `{}`", corpus.manifest.preset, config.preset),
        ));
    }
    let train_set = prepare_split(corpus, Split::Train, &preset)?;
    let val_set = prepare_split(corpus, Split::Val, &preset)?;
    train(&train_set, &val_set, config)
}
