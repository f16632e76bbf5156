//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! fails.
//!
//! The full run takes about half an hour on one core; nine 50-epoch
//! trainings on a 2000-scene toy corpus dominate. Criterion numbers given
//! as arguments select a subset: `cargo test --test acceptance -- 1 2 7`.

use std::collections::BTreeSet;
use std::error::Error as StdError;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use reverbkit::acoustics::{estimate_t60, t60_proxy, t60_proxy_grid, FitStatus, GridLayout, GridShape, ProxyAxis};
use reverbkit::autodiff::gradcheck::{check_gradients, random_tensor};
use reverbkit::autodiff::{Graph, Tensor, Var};
use reverbkit::convolver::{convolve_direct, ConvolutionPlan};
use reverbkit::dataset::{build_corpus, Corpus, Split, SplitFractions};
use reverbkit::dsp::{istft, log_magnitude, stft, trim_nyquist, write_wav, AudioBuffer, StftConfig, WavFormat, WindowKind};
use reverbkit::eval::{
    ablation_suite, depth_steering, evaluate_model, evaluate_model_unchecked, nn_baseline, AblationReport, EvalReport,
};
use reverbkit::gan::{
    concat_features, discriminator_loss, generator_loss, infer_batch_unchecked, metrics_csv, prepare_split, proxy_target,
    train, Ablation, GanModel, LossWeights, Normalization, PreparedSample, T60pTargets, TrainConfig, Trainer,
};
use reverbkit::irsynth::{shaped_noise_ir, spectrogram_to_ir, PhaseMode, ShapedNoiseParams};
use reverbkit::preset::Preset;

type Check = Result<(bool, String), Box<dyn StdError>>;

const SEEDS: [u64; 3] = [1, 2, 3];
const CORPUS_SIZE: usize = 2000;
const CORPUS_SEED: u64 = 7;
const EPOCHS: usize = 50;

struct Runner {
    selected: Option<BTreeSet<usize>>,
    results: Vec<(usize, bool)>,
}

impl Runner {
    fn wants(&self, id: usize) -> bool {
        self.selected.as_ref().is_none_or(|s| s.contains(&id))
    }

    fn run(&mut self, id: usize, name: &str, budget: Duration, f: impl FnOnce() -> Check) {
        if !self.wants(id) {
            return;
        }
        let start = Instant::now();
        let (ok, detail) = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(Ok(r)) => r,
            Ok(Err(e)) => (false, format!("error: {e}")),
            Err(_) => (false, "panicked".into()),
        };
        let t = start.elapsed();
        let in_time = t <= budget;
        let pass = ok && in_time;
        println!(
            "criterion {id:>2} {} {name}: {detail} [{:.1} s of {} s{}]",
            if pass { "PASS" } else { "FAIL" },
            t.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", over budget" }
        );
        self.results.push((id, pass));
    }
}

fn noise(len: usize, rate: u32, seed: u64) -> AudioBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    AudioBuffer::new((0..len).map(|_| rng.random_range(-1.0f32..1.0)).collect(), rate).unwrap()
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn spectrogram_geometry() -> Check {
    let p = Preset::paper();
    let x = noise(p.stft.num_samples, p.stft.sample_rate, 1);
    let spec = trim_nyquist(&log_magnitude(&stft(&x, &p.stft)?)?)?;
    let ok = spec.frames() == 512
        && spec.bins() == 512
        && p.spectrogram_shape() == (512, 512)
        && (p.stft.num_samples, p.stft.window_size, p.stft.hop, p.stft.sample_rate) == (130_977, 1024, 256, 22_050);
    Ok((ok, format!("{} frames x {} bins from {} samples", spec.frames(), spec.bins(), p.stft.num_samples)))
}

fn stft_round_trip() -> Check {
    let mut worst = f64::INFINITY;
    for preset in [Preset::paper(), Preset::toy()] {
        for seed in 0..100 {
            let x = noise(preset.stft.num_samples, preset.stft.sample_rate, seed);
            let y = istft(&stft(&x, &preset.stft)?)?;
            let signal: f64 = x.samples().iter().map(|&v| (v as f64).powi(2)).sum();
            let err: f64 = x.samples().iter().zip(y.samples()).map(|(&a, &b)| ((a - b) as f64).powi(2)).sum();
            worst = worst.min(10.0 * (signal / err).log10());
        }
    }
    Ok((worst >= 60.0, format!("minimum SNR {worst:.1} dB over 200 signals")))
}

fn t60_estimator() -> Check {
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for t60 in [0.1, 0.25, 0.5, 1.0, 2.0, 3.0] {
        let mut total = 0.0;
        for seed in 0..20 {
            let ir = shaped_noise_ir(&ShapedNoiseParams::broadband(t60, 2.0 * t60 + 0.25, 22_050, seed))?;
            total += (estimate_t60(&ir)?.t60 - t60).abs() / t60 * 100.0;
        }
        let mean = total / 20.0;
        worst = worst.max(mean);
        parts.push(format!("{t60}s:{mean:.2}%"));
    }
    Ok((worst < 5.0, format!("mean |error| {}", parts.join(" "))))
}

fn proxy_gradient() -> Check {
    let shape = GridShape {
        frames: 64,
        bins: 32,
        layout: GridLayout::FrameMajor,
    };
    let step = Preset::toy().stft.frame_period();
    let h = 1e-4;
    let (mut worst, mut checked, mut skipped, mut used) = (0.0f64, 0usize, 0usize, 0usize);
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rate = rng.random_range(0.05..0.3);
        let jitter = rng.random_range(0.1..1.5);
        let v: Vec<f64> = (0..shape.frames * shape.bins)
            .map(|i| -rate * (i / shape.bins) as f64 + jitter * rng.random_range(-1.0..1.0))
            .collect();
        let out = t60_proxy_grid(&v, shape, step, ProxyAxis::Frequency);
        if out.status != FitStatus::Regular {
            continue;
        }
        used += 1;
        for idx in 0..v.len() {
            let mut probe = v.clone();
            probe[idx] += h;
            let p = t60_proxy_grid(&probe, shape, step, ProxyAxis::Frequency);
            probe[idx] -= 2.0 * h;
            let m = t60_proxy_grid(&probe, shape, step, ProxyAxis::Frequency);
            if p.span != out.span || m.span != out.span {
                skipped += 1;
                continue;
            }
            let fd = (p.t60 - m.t60) / (2.0 * h);
            let g = out.gradient[idx];
            worst = worst.max((fd - g).abs() / g.abs().max(fd.abs()).max(1e-8));
            checked += 1;
        }
    }
    Ok((
        worst < 1e-3 && used >= 45,
        format!("max relative error {worst:.2e} over {checked} entries of {used} grids ({skipped} span flips skipped)"),
    ))
}

fn proxy_render_consistency() -> Check {
    let toy = Preset::toy();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut rel = Vec::new();
    for seed in 0..100 {
        let t60 = rng.random_range(0.1..0.35);
        let ir = shaped_noise_ir(&ShapedNoiseParams::broadband(t60, toy.stft.duration(), toy.stft.sample_rate, seed))?;
        let logmag = trim_nyquist(&log_magnitude(&stft(&ir, &toy.stft)?)?)?;
        let proxy = t60_proxy(&logmag)?.t60;
        let rendered = estimate_t60(&spectrogram_to_ir(&logmag, PhaseMode::Random, seed)?)?.t60;
        rel.push((proxy - rendered).abs() / proxy * 100.0);
    }
    let m = median(&mut rel);
    Ok((m < 10.0, format!("median |proxy - rendered| / proxy {m:.2}% over 100 cases")))
}

fn time<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn convolution() -> Check {
    let rate = 22_050;
    let dry = noise(rate as usize, rate, 100);
    let (mut worst, mut faster, mut lines) = (0.0f64, true, Vec::new());
    for (k, ir_len) in [1024usize, 8192, 65536].into_iter().enumerate() {
        let ir = noise(ir_len, rate, 200 + k as u64).scaled(0.1);
        let (direct, t_direct) = time(|| convolve_direct(&dry, &ir));
        let direct = direct?;
        let peak = direct.peak() as f64;
        for block in [256usize, 1024, 4096] {
            let plan = Arc::new(ConvolutionPlan::new(&ir, block)?);
            let (wet, t_part) = time(|| plan.convolve(&dry));
            let wet = wet?;
            let err = wet
                .samples()
                .iter()
                .zip(direct.samples())
                .map(|(a, b)| (a - b).abs() as f64)
                .fold(0.0, f64::max)
                / peak;
            worst = worst.max(err);
            if ir_len >= 8192 {
                faster &= t_part < t_direct;
                lines.push(format!(
                    "{ir_len}/{block}: {:.0} vs {:.0} ms",
                    t_part.as_secs_f64() * 1e3,
                    t_direct.as_secs_f64() * 1e3
                ));
            }
        }
    }
    Ok((
        worst <= 1e-6 && faster,
        format!("max error {worst:.2e} x peak; partitioned vs direct {}", lines.join(", ")),
    ))
}

fn loss_identities() -> Check {
    let mut g = Graph::<f64>::new();
    let one = g.input(Tensor::filled(vec![4, 1], 1.0));
    let zero = g.input(Tensor::filled(vec![4, 1], 0.0));
    let d_loss = discriminator_loss(&mut g, one, zero)?;
    let d_zero = g.value(d_loss).item() == 0.0;

    // A decaying grid on multiples of 2^-10 so every denormalization is exact.
    let (bins, frames) = (16, 48);
    let norm = Normalization::new(-8.0, 0.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let real: Vec<f32> = (0..bins * frames)
        .map(|i| {
            let v = -0.04 * (i % frames) as f32 + 0.9 + rng.random_range(-0.02f32..0.02);
            (v * 1024.0).round() / 1024.0
        })
        .collect();
    let dn: Vec<f32> = real.iter().map(|&v| norm.denormalize(v)).collect();
    let targets = [proxy_target(&dn, bins, frames, 0.01)];
    let t = T60pTargets {
        targets: &targets,
        norm,
        frame_period: 0.01,
    };
    let real_t = Tensor::new(vec![1, 1, bins, frames], real.iter().map(|&v| v as f64).collect())?;
    let shifted = Tensor::new(vec![1, 1, bins, frames], real.iter().map(|&v| v as f64 - 0.25).collect())?;

    let mut g = Graph::<f64>::new();
    let (rv, fv) = (g.input(real_t.clone()), g.input(real_t.clone()));
    let d1 = g.input(Tensor::filled(vec![1, 1], 1.0));
    let (total, terms) = generator_loss(&mut g, d1, fv, rv, LossWeights::default(), Some(&t))?;
    let g_zero = g.value(total).item() == 0.0 && terms.total() == 0.0;

    let mut g = Graph::<f64>::new();
    let (rv, fv) = (g.input(real_t.clone()), g.input(shifted.clone()));
    let d1 = g.input(Tensor::filled(vec![1, 1], 1.0));
    let (_, terms) = generator_loss(&mut g, d1, fv, rv, LossWeights::default(), Some(&t))?;
    let l1_exact = terms.l1 == 100.0 * 0.25;

    let no_t60p = TrainConfig::default().with_ablation(Ablation {
        no_depth: false,
        no_t60p: true,
    });
    let weights = no_t60p.resolved()?.weights();
    let mut g = Graph::<f64>::new();
    let (rv, fv) = (g.input(real_t), g.input(shifted));
    let d1 = g.input(Tensor::filled(vec![1, 1], 0.3));
    let (total, terms) = generator_loss(&mut g, d1, fv, rv, weights, Some(&t))?;
    let t60_zero = terms.t60p == 0.0 && g.value(total).item() == terms.total();

    Ok((
        d_zero && g_zero && l1_exact && t60_zero && targets[0].is_some(),
        format!("d_loss=0 {d_zero}, g_loss=0 {g_zero}, L1 = 100 mean|d| {l1_exact}, T60p=0 under no_t60p {t60_zero}"),
    ))
}

fn tiny_preset() -> Preset {
    Preset {
        stft: StftConfig {
            window_size: 64,
            hop: 32,
            window: WindowKind::Hann,
            sample_rate: 8000,
            num_samples: 31 * 32,
            center: true,
        },
        image_size: 16,
        features: 4,
        noise: 2,
        batch_size: 2,
        ..Preset::toy()
    }
}

fn op_gradients() -> Vec<(&'static str, f64)> {
    type Build = fn(&mut Graph<f64>, &[Var]) -> Var;
    let cases: Vec<(&str, Vec<Vec<usize>>, Build)> = vec![
        ("conv2d", vec![vec![2, 3, 6, 6], vec![4, 3, 3, 3], vec![4]], |g, v| {
            let y = g.conv2d(v[0], v[1], Some(v[2]), 2, 1).unwrap();
            let y = g.tanh(y);
            g.mean_square_to(y, 0.3)
        }),
        ("conv_transpose2d", vec![vec![2, 3, 3, 3], vec![3, 2, 4, 4], vec![2]], |g, v| {
            let y = g.conv_transpose2d(v[0], v[1], Some(v[2]), 2, 1).unwrap();
            let y = g.tanh(y);
            g.mean_square_to(y, -0.2)
        }),
        ("dense", vec![vec![3, 5], vec![4, 5], vec![4]], |g, v| {
            let y = g.dense(v[0], v[1], Some(v[2])).unwrap();
            g.mean_square_to(y, 1.0)
        }),
        ("leaky_relu", vec![vec![2, 7]], |g, v| {
            let y = g.leaky_relu(v[0], 0.2);
            g.mean_square_to(y, 0.1)
        }),
        ("pixel_norm", vec![vec![2, 3, 2, 2]], |g, v| {
            let y = g.pixel_norm(v[0], 1e-8).unwrap();
            let y = g.tanh(y);
            g.mean_square_to(y, 0.2)
        }),
        ("tile/concat/slice", vec![vec![2, 2, 3, 3], vec![2, 3]], |g, v| {
            let c = g.tile_spatial(v[1], 3, 3).unwrap();
            let y = g.concat_channels(v[0], c).unwrap();
            let y = g.concat_batch(y, y).unwrap();
            let y = g.slice_batch(y, 1, 2).unwrap();
            let y = g.tanh(y);
            g.mean_square_to(y, 0.5)
        }),
        ("resize_bilinear", vec![vec![1, 2, 3, 4]], |g, v| {
            let y = g.resize_bilinear(v[0], 7, 9).unwrap();
            g.mean_square_to(y, 0.1)
        }),
        ("losses", vec![vec![2, 6], vec![2, 6]], |g, v| {
            let l1 = g.mean_abs_diff(v[0], v[1]).unwrap();
            let d = g.sub(v[0], v[1]).unwrap();
            let sq = g.mean_square_to(d, 1.0);
            g.weighted_sum(&[(l1, 3.0), (sq, 0.5)]).unwrap()
        }),
    ];
    cases
        .into_iter()
        .map(|(name, shapes, build)| {
            let inputs: Vec<Tensor<f64>> = shapes.iter().enumerate().map(|(i, s)| random_tensor(s, 100 + i as u64)).collect();
            (name, check_gradients(&inputs, &build, 1e-4))
        })
        .collect()
}

fn end_to_end_autodiff(root: &Path) -> Check {
    let ops = op_gradients();
    let op_worst = ops.iter().map(|o| o.1).fold(0.0, f64::max);

    let preset = tiny_preset();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let m = GanModel::new(&preset, Normalization::new(-12.0, 2.0)?, Ablation::default(), &mut rng)?;
    let (frames, bins) = preset.spectrogram_shape();
    let s = preset.image_size;
    let mut inputs: Vec<Tensor<f64>> = Vec::new();
    for p in [&m.encoder.params, &m.generator.params, &m.discriminator.params] {
        inputs.extend(p.iter().map(|(_, t)| t.cast::<f64>()));
    }
    let (ne, ng) = (m.encoder.params.len(), m.generator.params.len());
    let nparams = inputs.len();
    inputs.extend([
        random_tensor(&[2, 4, s, s], 11),
        random_tensor(&[2, preset.noise], 12),
        random_tensor(&[2, 1, bins, frames], 13),
    ]);
    let build = move |g: &mut Graph<f64>, v: &[Var]| {
        let (e, rest) = v.split_at(ne);
        let (gen, rest) = rest.split_at(ng);
        let (d, data) = rest.split_at(nparams - ne - ng);
        let feats = m.encoder.forward(g, e, data[0]).unwrap();
        let z = concat_features(g, feats, data[1]).unwrap();
        let fake = m.generator.forward(g, gen, z).unwrap();
        let d_fake = m.discriminator.forward(g, d, fake, feats).unwrap();
        let d_real = m.discriminator.forward(g, d, data[2], feats).unwrap();
        let dl = discriminator_loss(g, d_real, d_fake).unwrap();
        let (gl, _) = generator_loss(g, d_fake, fake, data[2], LossWeights { l1: 1.0, t60: 0.0 }, None).unwrap();
        g.weighted_sum(&[(dl, 1.0), (gl, 0.5)]).unwrap()
    };
    let net_worst = check_gradients(&inputs, &build, 1e-6);

    let toy = Preset::toy();
    let dir = root.join("step");
    build_corpus(&dir, 40, &SplitFractions::default(), 4, &toy)?;
    let data = prepare_split(&Corpus::open(&dir)?, Split::Train, &toy)?;
    let config = TrainConfig {
        seed: 1,
        epochs: 1,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(&data, &config)?;
    let batch: Vec<usize> = (0..config.batch_size).collect();
    let report = trainer.step(&batch)?;
    let worst_name = ops.iter().max_by(|a, b| a.1.total_cmp(&b.1)).map(|o| o.0).unwrap_or("");
    Ok((
        op_worst < 1e-3 && net_worst < 1e-3 && report.dead_parameters.is_empty(),
        format!(
            "{} ops max rel error {op_worst:.1e} ({worst_name}); full E+G+D {net_worst:.1e}; dead after one step: {:?}",
            ops.len(),
            report.dead_parameters
        ),
    ))
}

struct Run {
    variant: Ablation,
    seed: u64,
    model: GanModel,
    report: EvalReport,
    elapsed: Duration,
}

struct Study {
    corpus_id: String,
    test: Vec<PreparedSample>,
    runs: Vec<Run>,
}

impl Study {
    fn run(&self, variant: Ablation, seed: u64) -> Option<&Run> {
        self.runs.iter().find(|r| r.variant == variant && r.seed == seed)
    }
}

const MAIN: Ablation = Ablation {
    no_depth: false,
    no_t60p: false,
};
const NO_T60P: Ablation = Ablation {
    no_depth: false,
    no_t60p: true,
};
const NO_DEPTH: Ablation = Ablation {
    no_depth: true,
    no_t60p: false,
};

fn build_study(root: &Path, variants: &[Ablation]) -> Result<Study, Box<dyn StdError>> {
    let toy = Preset::toy();
    let dir = root.join("corpus");
    let (_, t) = time(|| build_corpus(&dir, CORPUS_SIZE, &SplitFractions::default(), CORPUS_SEED, &toy));
    let corpus = Corpus::open(&dir)?;
    eprintln!("corpus: {} scenes in {:.1} s", corpus.manifest.entries.len(), t.as_secs_f64());
    let train_set = prepare_split(&corpus, Split::Train, &toy)?;
    let val = prepare_split(&corpus, Split::Val, &toy)?;
    let test = prepare_split(&corpus, Split::Test, &toy)?;
    let corpus_id = corpus.manifest.id();
    let base = TrainConfig {
        epochs: EPOCHS,
        ..TrainConfig::default()
    };
    let mut runs = Vec::new();
    let mut last = Instant::now();
    ablation_suite(&train_set, &val, &test, &base, variants, &SEEDS, &corpus_id, |model, report| {
        let elapsed = last.elapsed();
        last = Instant::now();
        eprintln!(
            "trained {} seed {} in {:.0} s: median |T60 error| {:.1}%",
            model.ablation.label(),
            model.seed,
            elapsed.as_secs_f64(),
            report.absolute().median
        );
        runs.push(Run {
            variant: model.ablation,
            seed: model.seed,
            model: model.clone(),
            report: report.clone(),
            elapsed,
        });
    })?;
    Ok(Study {
        corpus_id,
        test,
        runs,
    })
}

fn training_outcome(study: &Study) -> Check {
    let toy = Preset::toy();
    let (mut within, mut beats, mut in_time) = (0, true, true);
    let mut parts = Vec::new();
    for seed in SEEDS {
        let run = study.run(MAIN, seed).ok_or("missing main run")?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let untrained = GanModel::new(&toy, run.model.norm, MAIN, &mut rng)?;
        let baseline = evaluate_model_unchecked(&untrained, &study.test, &study.corpus_id)?.absolute().median;
        let med = run.report.absolute().median;
        within += usize::from(med <= 30.0);
        beats &= baseline >= 3.0 * med;
        in_time &= run.elapsed < Duration::from_secs(30 * 60);
        parts.push(format!(
            "seed {seed}: {med:.1}% vs untrained {baseline:.0}% ({:.0} s)",
            run.elapsed.as_secs_f64()
        ));
    }
    Ok((
        within >= 2 && beats && in_time,
        format!("median |T60 error| <= 30% in {within}/3; {}", parts.join("; ")),
    ))
}

fn ablation_ordering(study: &Study) -> Check {
    let mut wins = 0;
    let mut parts = Vec::new();
    for seed in SEEDS {
        let main = study.run(MAIN, seed).ok_or("missing main run")?.report.signed().mean;
        let ablated = study.run(NO_T60P, seed).ok_or("missing no_t60p run")?.report.signed().mean;
        let ok = main.abs() <= ablated.abs();
        wins += usize::from(ok);
        parts.push(format!(
            "seed {seed}: main {main:+.1}% vs no_t60p {ablated:+.1}%{}",
            if ok { "" } else { " (reversed)" }
        ));
    }
    Ok((wins >= 2, format!("main |mu| <= no_t60p |mu| in {wins}/3; {}", parts.join("; "))))
}

fn depth_direction(study: &Study) -> Check {
    let (mut wins, mut dead) = (0, true);
    let mut parts = Vec::new();
    for seed in SEEDS {
        let run = study.run(MAIN, seed).ok_or("missing main run")?;
        let r = depth_steering(&run.model, &study.test)?;
        let (zero, max) = (r.zero.summary().mean, r.max.summary().mean);
        wins += usize::from(max > zero);
        let blind = study.run(NO_DEPTH, seed).ok_or("missing no_depth run")?;
        let b = depth_steering(&blind.model, &study.test)?;
        let (bz, bm) = (b.zero.summary().mean, b.max.summary().mean);
        let gap = (bm - bz).abs() / bz * 100.0;
        dead &= gap < 5.0;
        parts.push(format!(
            "seed {seed}: zero {zero:.3} s, max {max:.3} s; no_depth gap {gap:.2}%"
        ));
    }
    Ok((wins >= 2 && dead, format!("max > zero in {wins}/3; {}", parts.join("; "))))
}

fn same_files(a: &Path, b: &Path) -> Result<bool, Box<dyn StdError>> {
    let manifest = std::fs::read_to_string(a.join("manifest.tsv"))?;
    if manifest != std::fs::read_to_string(b.join("manifest.tsv"))? {
        return Ok(false);
    }
    let corpus = Corpus::open(a)?;
    for e in &corpus.manifest.entries {
        for f in [&e.wav, &e.rgb, &e.depth] {
            if std::fs::read(a.join(f))? != std::fs::read(b.join(f))? {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn determinism(root: &Path) -> Check {
    let toy = Preset::toy();
    let (a, b) = (root.join("det-a"), root.join("det-b"));
    for d in [&a, &b] {
        build_corpus(d, 200, &SplitFractions::default(), 11, &toy)?;
    }
    let dataset = same_files(&a, &b)?;

    let corpus = Corpus::open(&a)?;
    let train_set = prepare_split(&corpus, Split::Train, &toy)?;
    let test = prepare_split(&corpus, Split::Test, &toy)?;
    let config = TrainConfig {
        epochs: 1,
        seed: 5,
        ..TrainConfig::default()
    };
    let first = train(&train_set, &[], &config)?;
    let second = train(&train_set, &[], &config)?;
    let (ca, cb) = (root.join("a.ckpt"), root.join("b.ckpt"));
    first.model.save(&ca)?;
    second.model.save(&cb)?;
    let training = std::fs::read(&ca)? == std::fs::read(&cb)? && metrics_csv(&first.metrics) == metrics_csv(&second.metrics);

    let model = GanModel::load(&ca)?;
    let inputs: Vec<&[f32]> = test.iter().map(|t| t.input.as_slice()).collect();
    let mut wavs = Vec::new();
    for name in ["x.wav", "y.wav"] {
        let out = infer_batch_unchecked(&model, &inputs[..1], &[42], PhaseMode::Random)?;
        write_wav(root.join(name), &out[0].ir, WavFormat::Float32)?;
        wavs.push(std::fs::read(root.join(name))?);
    }
    let inference = wavs[0] == wavs[1];

    let render = || -> Result<String, Box<dyn StdError>> {
        let r = evaluate_model(&model, &test, "det")?;
        let nn = nn_baseline(&model, &train_set, &test, "det")?;
        let depth = depth_steering(&model, &test)?;
        let table = AblationReport {
            reports: vec![r.clone(), nn.clone()],
        }
        .ordering_table();
        Ok([r.to_tsv(), r.summary_text(), r.histogram_csv(25.0), nn.to_tsv(), depth.summary_text(), depth.histogram_csv(2.0, 0.05), table].concat())
    };
    let reports = render()? == render()?;
    Ok((
        dataset && training && inference && reports,
        format!("dataset {dataset}, epoch 0 {training}, inference {inference}, reports {reports}"),
    ))
}

fn main() {
    let selected: BTreeSet<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut runner = Runner {
        selected: (!selected.is_empty()).then_some(selected),
        results: Vec::new(),
    };
    let root = tempfile::tempdir().expect("temporary directory");
    let secs = Duration::from_secs;

    runner.run(1, "spectrogram geometry", secs(1), spectrogram_geometry);
    runner.run(2, "STFT round trip", secs(10), stft_round_trip);
    runner.run(3, "T60 estimator vs closed form", secs(30), t60_estimator);
    runner.run(4, "T60 proxy gradient", secs(60), proxy_gradient);
    runner.run(5, "proxy/render consistency", secs(120), proxy_render_consistency);
    runner.run(6, "convolution equivalence and speed", secs(120), convolution);
    runner.run(7, "loss unit identities", secs(1), loss_identities);
    runner.run(8, "end-to-end autodiff", secs(120), || end_to_end_autodiff(root.path()));

    let mut variants = Vec::new();
    if [9, 10, 11].iter().any(|&c| runner.wants(c)) {
        variants.push(MAIN);
    }
    if runner.wants(10) {
        variants.push(NO_T60P);
    }
    if runner.wants(11) {
        variants.push(NO_DEPTH);
    }
    if !variants.is_empty() {
        match build_study(root.path(), &variants) {
            Ok(study) => {
                runner.run(9, "desk-scale training outcome", secs(3 * 30 * 60), || training_outcome(&study));
                runner.run(10, "ablation ordering", secs(60), || ablation_ordering(&study));
                runner.run(11, "depth steering direction", secs(10 * 60), || depth_direction(&study));
            }
            Err(e) => {
                for id in [9, 10, 11] {
                    runner.run(id, "trained-model criteria", secs(1), || Err(format!("study failed: {e}").into()));
                }
            }
        }
    }
    runner.run(12, "determinism", secs(5 * 60), || determinism(root.path()));

    let failed: Vec<usize> = runner.results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} passed{}",
        runner.results.len() - failed.len(),
        runner.results.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!("; failed {failed:?}")
        }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
