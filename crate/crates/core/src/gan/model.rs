//! Encoder, generator and discriminator topologies and the model container.
//!
//! Spectrogram tensors are `[N, 1, bins, frames]`: rows are frequencies,
//! columns are time, like an image of the spectrogram.
//!
//! * Encoder: `4xSxS` -> conv k4 s4 (8) -> conv k4 s2 (16) -> conv k4 s2 (16)
//!   -> dense to `F` features. Leaky ReLU after each conv.
//! * Generator: dense `F+Z -> 32x4x4`, then transposed convs k4 s2 doubling
//!   the grid until it is at least 1/8 of the output side, pixel norm and
//!   leaky ReLU after each, a 3x3 conv to one channel, tanh, and a fixed
//!   bilinear resize to `bins x frames`.
//! * Discriminator: conv k4 s4 (8) -> conv k4 s4 (16), the condition tiled
//!   and concatenated, 1x1 conv (16), conv k4 s2 (16), dense to one linear
//!   output.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;

use crate::autodiff::checkpoint::Checkpoint;
use crate::autodiff::{Conv2d, ConvTranspose2d, Dense, Graph, ParamSet, Scalar, Tensor, Var};
use crate::dataset::Image;
use crate::error::{Error, Result};
use crate::preset::{Preset, PresetName};

pub const LEAK: f64 = 0.2;
pub const PIXEL_NORM_EPS: f64 = 1e-8;
const GEN_BASE: usize = 4;
const GEN_BASE_CHANNELS: usize = 32;
const GEN_CHANNELS: usize = 16;
pub const CHECKPOINT_FORMAT: &str = "reverbkit-gan-1";

fn lrelu<T: Scalar>(g: &mut Graph<T>, x: Var) -> Var {
    g.leaky_relu(x, T::lit(LEAK))
}

/// Image feature extractor producing the conditioning vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    convs: [Conv2d; 3],
    fc: Dense,
    grid: usize,
    pub params: ParamSet<f32>,
}

impl Encoder {
    pub fn new(preset: &Preset, rng: &mut impl Rng) -> Result<Self> {
        let s = preset.image_size;
        if s % 16 != 0 || s == 0 {
            return Err(Error::invalid("image_size", format!("{s} is not a multiple of 16")));
        }
        let mut params = ParamSet::new();
        let convs = [
            Conv2d::new(&mut params, "encoder.conv1", 4, 8, 4, 4, 0, rng),
            Conv2d::new(&mut params, "encoder.conv2", 8, 16, 4, 2, 1, rng),
            Conv2d::new(&mut params, "encoder.conv3", 16, 16, 4, 2, 1, rng),
        ];
        let grid = s / 16;
        let fc = Dense::new(&mut params, "encoder.fc", 16 * grid * grid, preset.features, rng);
        Ok(Self {
            convs,
            fc,
            grid,
            params,
        })
    }

    /// `[N, 4, S, S]` -> `[N, F]`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, bound: &[Var], x: Var) -> Result<Var> {
        let mut h = x;
        for conv in &self.convs {
            h = conv.forward(g, bound, h)?;
            h = lrelu(g, h);
        }
        let n = g.value(h).shape()[0];
        let flat = g.reshape(h, vec![n, 16 * self.grid * self.grid])?;
        self.fc.forward(g, bound, flat)
    }
}

/// Maps a latent vector to a normalized log-magnitude spectrogram.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    fc: Dense,
    ups: Vec<ConvTranspose2d>,
    head: Conv2d,
    grid: usize,
    bins: usize,
    frames: usize,
    pub params: ParamSet<f32>,
}

impl Generator {
    pub fn new(preset: &Preset, rng: &mut impl Rng) -> Result<Self> {
        let (frames, bins) = preset.spectrogram_shape();
        let mut params = ParamSet::new();
        let fc = Dense::new(
            &mut params,
            "generator.fc",
            preset.latent(),
            GEN_BASE_CHANNELS * GEN_BASE * GEN_BASE,
            rng,
        );
        let mut ups = Vec::new();
        let mut grid = GEN_BASE;
        let mut channels = GEN_BASE_CHANNELS;
        while grid * 8 < bins.max(frames) {
            let name = format!("generator.up{}", ups.len() + 1);
            ups.push(ConvTranspose2d::new(&mut params, &name, channels, GEN_CHANNELS, 4, 2, 1, rng));
            channels = GEN_CHANNELS;
            grid *= 2;
        }
        let head = Conv2d::new(&mut params, "generator.head", channels, 1, 3, 1, 1, rng);
        Ok(Self {
            fc,
            ups,
            head,
            grid,
            bins,
            frames,
            params,
        })
    }

    /// `[N, F+Z]` -> `[N, 1, bins, frames]` in [-1, 1].
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, bound: &[Var], z: Var) -> Result<Var> {
        let n = g.value(z).shape()[0];
        let h = self.fc.forward(g, bound, z)?;
        let h = g.reshape(h, vec![n, GEN_BASE_CHANNELS, GEN_BASE, GEN_BASE])?;
        let h = g.pixel_norm(h, T::lit(PIXEL_NORM_EPS))?;
        let mut h = lrelu(g, h);
        for up in &self.ups {
            h = up.forward(g, bound, h)?;
            h = g.pixel_norm(h, T::lit(PIXEL_NORM_EPS))?;
            h = lrelu(g, h);
        }
        let h = self.head.forward(g, bound, h)?;
        let h = g.tanh(h);
        if self.grid == self.bins && self.grid == self.frames {
            return Ok(h);
        }
        g.resize_bilinear(h, self.bins, self.frames)
    }
}

/// Conditional real/fake critic with a linear scalar output.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    stem: [Conv2d; 2],
    mix: Conv2d,
    down: Conv2d,
    fc: Dense,
    mid: (usize, usize),
    end: (usize, usize),
    pub params: ParamSet<f32>,
}

impl Discriminator {
    pub fn new(preset: &Preset, rng: &mut impl Rng) -> Result<Self> {
        let (frames, bins) = preset.spectrogram_shape();
        if bins % 32 != 0 || frames % 32 != 0 {
            return Err(Error::invalid(
                "spectrogram shape",
                format!("{bins}x{frames} is not a multiple of 32 on both sides"),
            ));
        }
        let mut params = ParamSet::new();
        let stem = [
            Conv2d::new(&mut params, "discriminator.conv1", 1, 8, 4, 4, 0, rng),
            Conv2d::new(&mut params, "discriminator.conv2", 8, 16, 4, 4, 0, rng),
        ];
        let mix = Conv2d::new(&mut params, "discriminator.mix", 16 + preset.features, 16, 1, 1, 0, rng);
        let down = Conv2d::new(&mut params, "discriminator.conv3", 16, 16, 4, 2, 1, rng);
        let end = (bins / 32, frames / 32);
        let fc = Dense::new(&mut params, "discriminator.fc", 16 * end.0 * end.1, 1, rng);
        Ok(Self {
            stem,
            mix,
            down,
            fc,
            mid: (bins / 16, frames / 16),
            end,
            params,
        })
    }

    /// `spec [N, 1, bins, frames]`, `cond [N, F]` -> `[N, 1]`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, bound: &[Var], spec: Var, cond: Var) -> Result<Var> {
        let mut h = spec;
        for conv in &self.stem {
            h = conv.forward(g, bound, h)?;
            h = lrelu(g, h);
        }
        let tiled = g.tile_spatial(cond, self.mid.0, self.mid.1)?;
        let h = g.concat_channels(h, tiled)?;
        let h = self.mix.forward(g, bound, h)?;
        let h = lrelu(g, h);
        let h = self.down.forward(g, bound, h)?;
        let h = lrelu(g, h);
        let n = g.value(h).shape()[0];
        let flat = g.reshape(h, vec![n, 16 * self.end.0 * self.end.1])?;
        self.fc.forward(g, bound, flat)
    }
}

/// Affine map between log-magnitudes in `[min, max]` and `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub min: f32,
    pub max: f32,
}

impl Normalization {
    pub fn new(min: f32, max: f32) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && max > min) {
            return Err(Error::invalid("normalization", format!("need finite min < max, got [{min}, {max}]")));
        }
        Ok(Self { min, max })
    }

    /// Range of all values of the given log-magnitude grids.
    pub fn fit<'a>(grids: impl IntoIterator<Item = &'a [f32]>) -> Result<Self> {
        let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
        for grid in grids {
            for &v in grid {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        Self::new(lo, hi)
    }

    #[inline]
    pub fn half_range(&self) -> f32 {
        (self.max - self.min) / 2.0
    }

    #[inline]
    pub fn normalize(&self, v: f32) -> f32 {
        (v - self.min) / self.half_range() - 1.0
    }

    #[inline]
    pub fn denormalize(&self, v: f32) -> f32 {
        self.min + (v + 1.0) * self.half_range()
    }
}

/// Ablation switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Ablation {
    /// Zero the depth channel in training and inference.
    pub no_depth: bool,
    /// Drop the T60 proxy term from the generator loss.
    pub no_t60p: bool,
}

impl Ablation {
    pub fn label(&self) -> &'static str {
        match (self.no_depth, self.no_t60p) {
            (false, false) => "main",
            (true, false) => "no_depth",
            (false, true) => "no_t60p",
            (true, true) => "no_depth+no_t60p",
        }
    }
}

impl std::str::FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut out = Ablation::default();
        for part in s.split(['+', ',']).map(str::trim) {
            match part {
                "main" | "none" | "" => {}
                "no_depth" => out.no_depth = true,
                "no_t60p" => out.no_t60p = true,
                other => return Err(Error::invalid("ablation", format!("unknown ablation `{other}`"))),
            }
        }
        Ok(out)
    }
}

/// The three networks plus everything needed to interpret their outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct GanModel {
    pub preset: Preset,
    pub encoder: Encoder,
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub norm: Normalization,
    pub ablation: Ablation,
    /// Training epochs completed; zero means untrained.
    pub epochs_trained: usize,
    pub seed: u64,
}

impl GanModel {
    pub fn new(preset: &Preset, norm: Normalization, ablation: Ablation, rng: &mut impl Rng) -> Result<Self> {
        Ok(Self {
            preset: *preset,
            encoder: Encoder::new(preset, rng)?,
            generator: Generator::new(preset, rng)?,
            discriminator: Discriminator::new(preset, rng)?,
            norm,
            ablation,
            epochs_trained: 0,
            seed: 0,
        })
    }

    pub fn is_trained(&self) -> bool {
        self.epochs_trained > 0
    }

    /// Packs RGB and depth into the `[4, S, S]` input; depth is zeroed under
    /// the no-depth ablation and replaced when `depth_override` is given.
    pub fn scene_input(&self, rgb: &Image, depth: &Image, depth_override: Option<f32>) -> Result<Vec<f32>> {
        let s = self.preset.image_size;
        if rgb.channels != 3 || depth.channels != 1 {
            return Err(Error::ShapeMismatch {
                expected: vec![3, 1],
                actual: vec![rgb.channels, depth.channels],
            });
        }
        if (rgb.width, rgb.height, depth.width, depth.height) != (s, s, s, s) {
            return Err(Error::ShapeMismatch {
                expected: vec![s, s],
                actual: vec![rgb.height, rgb.width, depth.height, depth.width],
            });
        }
        if let Some(d) = depth_override {
            if !(0.0..=1.0).contains(&d) {
                return Err(Error::invalid("depth_override", format!("{d} outside [0, 1]")));
            }
        }
        let mut out = Vec::with_capacity(4 * s * s);
        out.extend_from_slice(&rgb.data);
        if self.ablation.no_depth {
            out.resize(4 * s * s, 0.0);
        } else if let Some(d) = depth_override {
            out.resize(4 * s * s, d);
        } else {
            out.extend_from_slice(&depth.data);
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("scene input"));
        }
        Ok(out)
    }

    fn all_params(&self) -> [&ParamSet<f32>; 3] {
        [&self.encoder.params, &self.generator.params, &self.discriminator.params]
    }

    pub fn parameter_count(&self) -> usize {
        self.all_params().iter().map(|p| p.count()).sum()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let p = &self.preset;
        let (frames, bins) = p.spectrogram_shape();
        let mut header = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            header.insert(k.to_string(), v);
        };
        put("format", CHECKPOINT_FORMAT.into());
        put("preset", p.name.to_string());
        put("image_size", p.image_size.to_string());
        put("features", p.features.to_string());
        put("noise", p.noise.to_string());
        put("frames", frames.to_string());
        put("bins", bins.to_string());
        put("norm.min", self.norm.min.to_string());
        put("norm.max", self.norm.max.to_string());
        put("ablation.no_depth", self.ablation.no_depth.to_string());
        put("ablation.no_t60p", self.ablation.no_t60p.to_string());
        put("epochs_trained", self.epochs_trained.to_string());
        put("seed", self.seed.to_string());
        let tensors = self
            .all_params()
            .iter()
            .flat_map(|ps| ps.iter().map(|(n, t)| (n.to_string(), t.clone())))
            .collect();
        Checkpoint { header, tensors }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let get = |k: &str| ck.get(k).ok_or_else(|| Error::format("checkpoint", format!("missing header `{k}`")));
        fn parse<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::format("checkpoint", format!("bad value for `{k}`: `{v}`")))
        }
        if get("format")? != CHECKPOINT_FORMAT {
            return Err(Error::format("checkpoint", format!("unsupported format `{}`", get("format")?)));
        }
        let preset = Preset::from_name(get("preset")?.parse::<PresetName>()?);
        let (frames, bins) = preset.spectrogram_shape();
        for (k, expect) in [
            ("image_size", preset.image_size),
            ("features", preset.features),
            ("noise", preset.noise),
            ("frames", frames),
            ("bins", bins),
        ] {
            let v: usize = parse(k, get(k)?)?;
            if v != expect {
                return Err(Error::format("checkpoint", format!("`{k}` = {v} does not match preset ({expect})")));
            }
        }
        let norm = Normalization::new(parse("norm.min", get("norm.min")?)?, parse("norm.max", get("norm.max")?)?)?;
        let ablation = Ablation {
            no_depth: parse("ablation.no_depth", get("ablation.no_depth")?)?,
            no_t60p: parse("ablation.no_t60p", get("ablation.no_t60p")?)?,
        };
        // Initial values are overwritten below; any seed will do.
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut model = GanModel::new(&preset, norm, ablation, &mut rng)?;
        model.epochs_trained = parse("epochs_trained", get("epochs_trained")?)?;
        model.seed = parse("seed", get("seed")?)?;
        let lookup = |n: &str| ck.tensor(n).cloned();
        model.encoder.params.load(lookup)?;
        model.generator.params.load(lookup)?;
        model.discriminator.params.load(lookup)?;
        let expected = model.encoder.params.len() + model.generator.params.len() + model.discriminator.params.len();
        if ck.tensors.len() != expected {
            return Err(Error::format(
                "checkpoint",
                format!("expected {expected} tensors, found {}", ck.tensors.len()),
            ));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::read(path)?)
    }
}

/// `[N, a] ++ [N, b]` -> `[N, a + b]` along the feature axis.
pub fn concat_features<T: Scalar>(g: &mut Graph<T>, a: Var, b: Var) -> Result<Var> {
    let (n, fa) = (g.value(a).shape()[0], g.value(a).shape()[1]);
    let fb = g.value(b).shape()[1];
    let a4 = g.reshape(a, vec![n, fa, 1, 1])?;
    let b4 = g.reshape(b, vec![n, fb, 1, 1])?;
    let cat = g.concat_channels(a4, b4)?;
    g.reshape(cat, vec![n, fa + fb])
}

/// Stacks per-sample vectors into one tensor of shape `[N, ...item]`.
pub(crate) fn stack<T: Scalar>(items: &[&[f32]], item_shape: &[usize]) -> Result<Tensor<T>> {
    let mut shape = vec![items.len()];
    shape.extend_from_slice(item_shape);
    let data = items.iter().flat_map(|v| v.iter().map(|&x| T::lit(x as f64))).collect();
    Tensor::new(shape, data)
}
