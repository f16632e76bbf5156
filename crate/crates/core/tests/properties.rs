//! Property tests over the public API.

use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use reverbkit::acoustics::{estimate_t60, schroeder_edc, t60_proxy, FitStatus};
use reverbkit::convolver::{apply_ir, convolve_direct, ConvolutionPlan, Normalize};
use reverbkit::dataset::{
    direction_to_pano, plan_corpus, view_center_direction, Manifest, ManifestEntry, Split, SplitFractions,
};
use reverbkit::dsp::{istft, log_magnitude, stft, trim_nyquist, AudioBuffer, Spectrogram, SpectrogramData, StftConfig};
use reverbkit::eval::{EvalReport, EvalRow, Summary};
use reverbkit::gan::Normalization;
use reverbkit::irsynth::{shaped_noise_ir, ShapedNoiseParams};
use reverbkit::preset::PresetName;

fn noise(len: usize, rate: u32, seed: u64) -> AudioBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    AudioBuffer::new((0..len).map(|_| rng.random_range(-1.0f32..1.0)).collect(), rate).unwrap()
}

fn snr_db(reference: &[f32], estimate: &[f32]) -> f64 {
    let signal: f64 = reference.iter().map(|&v| (v as f64).powi(2)).sum();
    let err: f64 = reference.iter().zip(estimate).map(|(&a, &b)| ((a - b) as f64).powi(2)).sum();
    10.0 * (signal / err.max(1e-300)).log10()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stft_round_trip(seed in any::<u64>()) {
        let config = StftConfig::toy();
        let x = noise(config.num_samples, config.sample_rate, seed);
        let y = istft(&stft(&x, &config).unwrap()).unwrap();
        prop_assert!(snr_db(x.samples(), &y.samples()[..x.len()]) >= 60.0);
    }

    #[test]
    fn log_magnitude_inverts_above_floor(seed in any::<u64>()) {
        let config = StftConfig::toy();
        let spec = stft(&noise(config.num_samples, config.sample_rate, seed), &config).unwrap();
        let logs = log_magnitude(&spec).unwrap();
        for (c, &l) in spec.complex().unwrap().iter().zip(logs.log_magnitude().unwrap()) {
            let mag = c.norm();
            if mag >= 1e-8 {
                prop_assert!((l.exp() - mag).abs() <= 1e-5 * mag.max(1e-3));
            }
        }
    }

    #[test]
    fn trim_keeps_retained_bins(seed in any::<u64>()) {
        let config = StftConfig::toy();
        let spec = stft(&noise(config.num_samples, config.sample_rate, seed), &config).unwrap();
        let trimmed = trim_nyquist(&spec).unwrap();
        let (full, cut) = (spec.complex().unwrap(), trimmed.complex().unwrap());
        prop_assert_eq!(trimmed.bins() + 1, spec.bins());
        for f in 0..spec.frames() {
            prop_assert_eq!(&full[f * spec.bins()..f * spec.bins() + trimmed.bins()], &cut[f * trimmed.bins()..(f + 1) * trimmed.bins()]);
        }
    }

    #[test]
    fn edc_starts_at_zero_and_never_rises(values in prop::collection::vec(0.0f64..1.0, 8..400)) {
        prop_assume!(values.iter().any(|&v| v != 0.0));
        let edc = schroeder_edc(&values, 1e-3).unwrap();
        prop_assert_eq!(edc.edc_db[0], 0.0);
        prop_assert!(edc.edc_db.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn t60_is_amplitude_invariant(seed in any::<u64>(), gain in 0.01f32..20.0) {
        let ir = shaped_noise_ir(&ShapedNoiseParams::broadband(0.4, 1.0, 16000, seed)).unwrap();
        let a = estimate_t60(&ir).unwrap().t60;
        let b = estimate_t60(&ir.scaled(gain)).unwrap().t60;
        prop_assert!((a - b).abs() <= 1e-6 * a, "{} vs {}", a, b);
    }

    #[test]
    fn proxy_ignores_constant_offsets(seed in any::<u64>(), offset in -20.0f32..20.0) {
        let config = StftConfig::toy();
        let ir = shaped_noise_ir(&ShapedNoiseParams::broadband(0.3, config.duration(), config.sample_rate, seed)).unwrap();
        let spec = trim_nyquist(&log_magnitude(&stft(&ir, &config).unwrap()).unwrap()).unwrap();
        // On a 2^-10 grid, shifting by a multiple of 1/4 is lossless in f32.
        let grid: Vec<f32> = spec.log_magnitude().unwrap().iter().map(|v| (v * 1024.0).round() / 1024.0).collect();
        let offset = (offset * 4.0).round() / 4.0;
        let shifted: Vec<f32> = grid.iter().map(|v| v + offset).collect();
        let make = |v: Vec<f32>| Spectrogram::new(SpectrogramData::LogMagnitude(v), spec.frames(), spec.bins(), config).unwrap();
        let (a, b) = (t60_proxy(&make(grid)).unwrap(), t60_proxy(&make(shifted)).unwrap());
        prop_assume!(a.status == FitStatus::Regular);
        prop_assert_eq!(a.t60, b.t60);
    }

    #[test]
    fn streaming_matches_direct(
        seed in any::<u64>(),
        ir_len in 1usize..3000,
        block_exp in 6u32..11,
        dry_len in 1usize..4000,
    ) {
        let ir = noise(ir_len, 8000, seed);
        let dry = noise(dry_len, 8000, seed ^ 1);
        let plan = Arc::new(ConvolutionPlan::new(&ir, 1 << block_exp).unwrap());
        let fast = plan.convolve(&dry).unwrap();
        let slow = convolve_direct(&dry, &ir).unwrap();
        let tol = 1e-6 * slow.peak();
        prop_assert_eq!(fast.len(), slow.len());
        for (a, b) in fast.samples().iter().zip(slow.samples()) {
            prop_assert!((a - b).abs() <= tol.max(1e-7));
        }
    }

    #[test]
    fn convolution_is_linear(seed in any::<u64>(), a in -2.0f32..2.0, b in -2.0f32..2.0) {
        let h = noise(700, 8000, seed);
        let x = noise(2000, 8000, seed ^ 2);
        let y = noise(2000, 8000, seed ^ 3);
        let mix: Vec<f32> = x.samples().iter().zip(y.samples()).map(|(p, q)| a * p + b * q).collect();
        let lhs = apply_ir(&AudioBuffer::new(mix, 8000).unwrap(), &h, Normalize::None).unwrap();
        let hx = apply_ir(&x, &h, Normalize::None).unwrap();
        let hy = apply_ir(&y, &h, Normalize::None).unwrap();
        let tol = 1e-5 * lhs.peak().max(1.0);
        for ((l, p), q) in lhs.samples().iter().zip(hx.samples()).zip(hy.samples()) {
            prop_assert!((l - (a * p + b * q)).abs() <= tol);
        }
    }

    #[test]
    fn normalization_is_an_affine_bijection(lo in -40.0f32..-1.0, span in 0.5f32..40.0, t in -1.0f32..1.0) {
        let norm = Normalization::new(lo, lo + span).unwrap();
        prop_assert_eq!(norm.normalize(lo), -1.0);
        prop_assert!((norm.normalize(lo + span) - 1.0).abs() < 1e-6);
        prop_assert!((norm.normalize(norm.denormalize(t)) - t).abs() < 1e-5);
    }

    #[test]
    fn split_counts_cover_every_scene(n in 1usize..3000, seed in any::<u64>()) {
        let fractions = SplitFractions::default();
        let counts = fractions.counts(n);
        prop_assert_eq!(counts.iter().sum::<usize>(), n);
        if n <= 300 {
            let plan = plan_corpus(n, &fractions, seed).unwrap();
            for (k, split) in Split::ALL.iter().enumerate() {
                prop_assert_eq!(plan.iter().filter(|p| p.1 == *split).count(), counts[k]);
            }
        }
    }

    #[test]
    fn view_center_projects_back(yaw in -3.1f64..3.1, pitch in -1.2f64..1.2) {
        let (w, h) = (2048usize, 1024usize);
        let (x, y) = direction_to_pano(view_center_direction(yaw, pitch), w, h);
        let expect_x = (yaw / (2.0 * std::f64::consts::PI) + 0.5) * w as f64;
        let expect_y = (0.5 - pitch / std::f64::consts::PI) * h as f64;
        let dx = (x - expect_x).abs().min(w as f64 - (x - expect_x).abs());
        prop_assert!(dx <= 1.0 && (y - expect_y).abs() <= 1.0, "({}, {}) vs ({}, {})", x, y, expect_x, expect_y);
    }

    #[test]
    fn report_summary_matches_rows(errors in prop::collection::vec(-100.0f64..3000.0, 1..60)) {
        let rows: Vec<EvalRow> = errors
            .iter()
            .enumerate()
            .map(|(i, &e)| EvalRow {
                id: format!("{i:05}"),
                reference_t60: 0.5,
                generated_t60: 0.5 * (1.0 + e / 100.0),
                signed_error: e,
                abs_error: e.abs(),
            })
            .collect();
        let report = EvalReport { variant: "main".into(), seeds: vec![1], corpus_id: "c".into(), rows, excluded: 0 };
        prop_assert_eq!(report.signed(), Summary::of(&errors));
        prop_assert_eq!(report.signed().count, errors.len());
    }
}

#[test]
fn manifest_text_round_trips() {
    let plan = plan_corpus(40, &SplitFractions::default(), 9).unwrap();
    let entries = plan
        .iter()
        .enumerate()
        .map(|(i, (params, split))| ManifestEntry {
            id: format!("{i:06}"),
            split: *split,
            params: *params,
            t60: params.target_t60(),
            wav: format!("wav/{i:06}.wav").into(),
            rgb: format!("rgb/{i:06}.png").into(),
            depth: format!("depth/{i:06}.png").into(),
        })
        .collect();
    let manifest = Manifest {
        preset: PresetName::Toy,
        seed: 9,
        fractions: SplitFractions::default(),
        entries,
    };
    let text = manifest.to_string();
    let back: Manifest = text.parse().unwrap();
    assert_eq!(back.to_string(), text);
    assert_eq!(back.entries.len(), 40);
    let mut ids: Vec<&str> = back.entries.iter().map(|e| e.id.as_str()).collect();
    ids.dedup();
    assert_eq!(ids.len(), 40, "ids are unique, so no id sits in two splits");
}
