//! Forward passes of a trained model: features, latents, spectrograms and
//! rendered impulse responses.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::model::{stack, GanModel};
use crate::autodiff::Graph;
use crate::dataset::Image;
use crate::dsp::{AudioBuffer, Spectrogram};
use crate::error::{Error, Result};
use crate::irsynth::{spectrogram_to_ir, PhaseMode};

/// Samples per forward pass when many scenes are processed together.
pub const INFERENCE_BATCH: usize = 32;

fn check_input(model: &GanModel, input: &[f32]) -> Result<()> {
    let s = model.preset.image_size;
    if input.len() != 4 * s * s {
        return Err(Error::ShapeMismatch {
            expected: vec![4, s, s],
            actual: vec![input.len()],
        });
    }
    Ok(())
}

/// Encoder features for packed `[4, S, S]` inputs.
pub fn encode_batch(model: &GanModel, inputs: &[&[f32]]) -> Result<Vec<Vec<f32>>> {
    let s = model.preset.image_size;
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(INFERENCE_BATCH) {
        for input in chunk {
            check_input(model, input)?;
        }
        let mut g = Graph::<f32>::new();
        let bound = model.encoder.params.bind(&mut g, false);
        let x = g.input(stack(chunk, &[4, s, s])?);
        let f = model.encoder.forward(&mut g, &bound, x)?;
        out.extend(g.value(f).data().chunks_exact(model.preset.features).map(<[f32]>::to_vec));
    }
    Ok(out)
}

pub fn encode(model: &GanModel, input: &[f32]) -> Result<Vec<f32>> {
    Ok(encode_batch(model, &[input])?.remove(0))
}

/// Standard normal noise of the preset length, seeded.
pub fn noise(model: &GanModel, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..model.preset.noise).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// `features ++ u`, `u ~ N(0, 1)` drawn from `seed`.
pub fn make_latent(model: &GanModel, features: &[f32], seed: u64) -> Result<Vec<f32>> {
    if features.len() != model.preset.features {
        return Err(Error::ShapeMismatch {
            expected: vec![model.preset.features],
            actual: vec![features.len()],
        });
    }
    let mut z = features.to_vec();
    z.extend(noise(model, seed));
    Ok(z)
}

/// Normalized bin-major grids in [-1, 1] for each latent.
pub fn generate_batch(model: &GanModel, latents: &[&[f32]]) -> Result<Vec<Vec<f32>>> {
    let latent = model.preset.latent();
    let (frames, bins) = model.preset.spectrogram_shape();
    let mut out = Vec::with_capacity(latents.len());
    for chunk in latents.chunks(INFERENCE_BATCH) {
        if let Some(z) = chunk.iter().find(|z| z.len() != latent) {
            return Err(Error::ShapeMismatch {
                expected: vec![latent],
                actual: vec![z.len()],
            });
        }
        let mut g = Graph::<f32>::new();
        let bound = model.generator.params.bind(&mut g, false);
        let z = g.input(stack(chunk, &[latent])?);
        let y = model.generator.forward(&mut g, &bound, z)?;
        out.extend(g.value(y).data().chunks_exact(bins * frames).map(<[f32]>::to_vec));
    }
    Ok(out)
}

/// Discriminator scores for normalized bin-major grids and their conditions.
pub fn discriminate_batch(model: &GanModel, specs: &[&[f32]], conds: &[&[f32]]) -> Result<Vec<f32>> {
    let (frames, bins) = model.preset.spectrogram_shape();
    if specs.len() != conds.len() {
        return Err(Error::ShapeMismatch {
            expected: vec![specs.len()],
            actual: vec![conds.len()],
        });
    }
    let mut out = Vec::with_capacity(specs.len());
    for (sc, cc) in specs.chunks(INFERENCE_BATCH).zip(conds.chunks(INFERENCE_BATCH)) {
        let mut g = Graph::<f32>::new();
        let bound = model.discriminator.params.bind(&mut g, false);
        let x = g.input(stack(sc, &[1, bins, frames])?);
        let c = g.input(stack(cc, &[model.preset.features])?);
        let d = model.discriminator.forward(&mut g, &bound, x, c)?;
        out.extend_from_slice(g.value(d).data());
    }
    Ok(out)
}

/// Denormalizes a bin-major generator output into a frame-major
/// log-magnitude [`Spectrogram`].
pub fn to_spectrogram(model: &GanModel, normalized: &[f32]) -> Result<Spectrogram> {
    let (frames, bins) = model.preset.spectrogram_shape();
    if normalized.len() != frames * bins {
        return Err(Error::ShapeMismatch {
            expected: vec![bins, frames],
            actual: vec![normalized.len()],
        });
    }
    let mut values = vec![0.0f32; frames * bins];
    for b in 0..bins {
        for f in 0..frames {
            values[f * bins + b] = model.norm.denormalize(normalized[b * frames + f]);
        }
    }
    Spectrogram::from_log_magnitude(values, frames, bins, model.preset.stft)
}

/// Frame-major log-magnitudes to the normalized bin-major layout.
pub fn to_normalized_grid(model: &GanModel, spec: &Spectrogram) -> Result<Vec<f32>> {
    let (frames, bins) = model.preset.spectrogram_shape();
    if (spec.frames(), spec.bins()) != (frames, bins) {
        return Err(Error::ShapeMismatch {
            expected: vec![frames, bins],
            actual: vec![spec.frames(), spec.bins()],
        });
    }
    let values = spec.log_magnitude()?;
    let mut out = vec![0.0f32; frames * bins];
    for f in 0..frames {
        for b in 0..bins {
            out[b * frames + f] = model.norm.normalize(values[f * bins + b]);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub spectrogram: Spectrogram,
    pub ir: AudioBuffer,
}

/// Generates and renders one impulse response per packed input; sample `i`
/// uses `seeds[i]` for both the noise and the rendering phase.
pub fn infer_batch_unchecked(model: &GanModel, inputs: &[&[f32]], seeds: &[u64], phase: PhaseMode) -> Result<Vec<Inference>> {
    if inputs.len() != seeds.len() {
        return Err(Error::ShapeMismatch {
            expected: vec![inputs.len()],
            actual: vec![seeds.len()],
        });
    }
    let features = encode_batch(model, inputs)?;
    let latents = features
        .iter()
        .zip(seeds)
        .map(|(f, &seed)| make_latent(model, f, seed))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&[f32]> = latents.iter().map(Vec::as_slice).collect();
    let grids = generate_batch(model, &refs)?;
    grids
        .iter()
        .zip(seeds)
        .map(|(grid, &seed)| {
            let spectrogram = to_spectrogram(model, grid)?;
            let ir = spectrogram_to_ir(&spectrogram, phase, seed)?;
            Ok(Inference { spectrogram, ir })
        })
        .collect()
}

/// Image + depth to spectrogram and impulse response. `depth_override`
/// replaces the depth map with a constant in [0, 1].
pub fn infer(model: &GanModel, rgb: &Image, depth: &Image, seed: u64, depth_override: Option<f32>) -> Result<Inference> {
    if !model.is_trained() {
        return Err(Error::Untrained);
    }
    infer_unchecked(model, rgb, depth, seed, depth_override)
}

/// [`infer`] without the trained-model check, for untrained baselines.
pub fn infer_unchecked(
    model: &GanModel,
    rgb: &Image,
    depth: &Image,
    seed: u64,
    depth_override: Option<f32>,
) -> Result<Inference> {
    let input = model.scene_input(rgb, depth, depth_override)?;
    Ok(infer_batch_unchecked(model, &[&input], &[seed], PhaseMode::Random)?.remove(0))
}
