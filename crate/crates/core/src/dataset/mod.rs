//! Synthetic paired corpus (room view + depth + impulse response) and the
//! preprocessing rules applied to real assets.
//!
//! A scene is a shoebox room with relative scale `s` and absorption `a`.
//! Its impulse response is two-band shaped noise with fullband T60
//! `s (1 - a) / 15` seconds and a faster-decaying 4 kHz band, so both size
//! and surface cues in the picture carry information about the reverb.

mod image;
mod render;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use self::image::{direction_to_pano, equirect_to_rectilinear, preprocess_image, view_center_direction, Image};
pub use render::{render_room, Room, View, CAMERA_SETBACK_M, EYE_HEIGHT_M, HORIZONTAL_FOV, MAX_DEPTH_M};

use crate::dsp::{read_wav_mono, write_wav, AudioBuffer, MultichannelAudio, WavFormat};
use crate::error::{Error, Result};
use crate::irsynth::{render_shaped_noise, ShapedNoiseParams};
use crate::preset::{Preset, PresetName};

/// Seconds of T60 per unit of `s (1 - a)`.
pub const T60_PER_SCALE: f64 = 1.0 / 15.0;
/// Accepted range of the relative room scale.
pub const SCALE_RANGE: (f64, f64) = (0.5, 10.0);
pub const ABSORPTION_RANGE: (f64, f64) = (0.1, 0.9);
/// Ranges sampled by [`build_corpus`]; T60 covers [0.05, 0.6] s.
pub const CORPUS_SCALE_RANGE: (f64, f64) = (1.25, 10.0);
pub const CORPUS_ABSORPTION_RANGE: (f64, f64) = (0.1, 0.4);
pub const LOW_BAND_HZ: f64 = 500.0;
pub const HIGH_BAND_HZ: f64 = 4000.0;
pub const DIRECT_TO_REVERB_DB: f64 = -10.0;
pub const MANIFEST_FILE: &str = "manifest.tsv";

/// Generation parameters of one scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneParams {
    /// Relative room scale.
    pub s: f64,
    /// Mean surface absorption.
    pub a: f64,
    pub seed: u64,
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        if !(SCALE_RANGE.0..=SCALE_RANGE.1).contains(&self.s) {
            return Err(Error::invalid("s", format!("room scale {} outside {:?}", self.s, SCALE_RANGE)));
        }
        if !(ABSORPTION_RANGE.0..=ABSORPTION_RANGE.1).contains(&self.a) {
            return Err(Error::invalid("a", format!("absorption {} outside {:?}", self.a, ABSORPTION_RANGE)));
        }
        Ok(())
    }

    /// Fullband T60 the impulse response is synthesized with.
    pub fn target_t60(&self) -> f64 {
        T60_PER_SCALE * self.s * (1.0 - self.a)
    }

    /// 4 kHz band T60; absorptive rooms lose highs faster.
    pub fn high_band_t60(&self) -> f64 {
        self.target_t60() * (1.0 - 0.5 * self.a)
    }

    fn noise_params(&self, preset: &Preset, seed: u64) -> ShapedNoiseParams {
        ShapedNoiseParams {
            band_t60: vec![(LOW_BAND_HZ, self.target_t60()), (HIGH_BAND_HZ, self.high_band_t60())],
            direct_to_reverb_db: DIRECT_TO_REVERB_DB,
            onset_delay: 0.0,
            duration: preset.stft.duration(),
            sample_rate: preset.stft.sample_rate,
            seed,
        }
    }
}

/// One rendered scene: square RGB view, depth in [0, 1] and its IR.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub params: SceneParams,
    pub rgb: Image,
    pub depth: Image,
    pub ir: AudioBuffer,
}

fn scene_unchecked(params: &SceneParams, preset: &Preset) -> Result<Scene> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut jitter = |r: f64| rng.random_range(-r..=r);
    let view = View {
        yaw: jitter(0.12),
        pitch: jitter(0.04),
        tint: [1.0 + jitter(0.05), 1.0 + jitter(0.05), 1.0 + jitter(0.05)],
    };
    let ir_seed = rng.random::<u64>();
    let room = Room::from_scale(params.s, params.a);
    let (rgb, depth) = render_room(&room, &view, preset.image_size);
    let ir = render_shaped_noise(&params.noise_params(preset, ir_seed))?;
    Ok(Scene {
        params: *params,
        rgb,
        depth,
        ir: fit_duration(&ir, preset),
    })
}

/// Renders the room view, its depth map and the matching impulse response.
/// Deterministic in `params`.
pub fn generate_scene(params: &SceneParams, preset: &Preset) -> Result<Scene> {
    if preset.stft.duration() < 2.0 * params.target_t60() {
        log::warn!(
            "target T60 {:.3} s is over half the {:.3} s response length",
            params.target_t60(),
            preset.stft.duration()
        );
    }
    scene_unchecked(params, preset)
}

/// How the channels of a recording are arranged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelLayout {
    /// First-order ambisonics, W first.
    BFormat,
    Stereo,
    Mono,
}

impl ChannelLayout {
    pub fn as_str(self) -> &'static str {
        match self {
            ChannelLayout::BFormat => "bformat",
            ChannelLayout::Stereo => "stereo",
            ChannelLayout::Mono => "mono",
        }
    }

    pub fn channels(self) -> usize {
        match self {
            ChannelLayout::BFormat => 4,
            ChannelLayout::Stereo => 2,
            ChannelLayout::Mono => 1,
        }
    }
}

impl FromStr for ChannelLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bformat" | "b-format" => Ok(ChannelLayout::BFormat),
            "stereo" => Ok(ChannelLayout::Stereo),
            "mono" => Ok(ChannelLayout::Mono),
            other => Err(Error::invalid("layout", format!("unknown layout `{other}`"))),
        }
    }
}

/// B-format keeps W only, stereo averages, mono passes through.
pub fn downmix(audio: &MultichannelAudio, layout: ChannelLayout) -> Result<AudioBuffer> {
    if audio.channel_count() != layout.channels() {
        return Err(Error::ChannelLayout {
            layout: layout.as_str(),
            expected: layout.channels(),
            actual: audio.channel_count(),
        });
    }
    let samples = match layout {
        ChannelLayout::BFormat | ChannelLayout::Mono => audio.channels[0].clone(),
        ChannelLayout::Stereo => audio.channels[0].iter().zip(&audio.channels[1]).map(|(l, r)| (l + r) / 2.0).collect(),
    };
    AudioBuffer::new(samples, audio.sample_rate)
}

/// Truncates or zero-pads to the preset sample count.
pub fn fit_duration(ir: &AudioBuffer, preset: &Preset) -> AudioBuffer {
    let n = preset.stft.num_samples;
    let mut samples = ir.samples().to_vec();
    samples.resize(n, 0.0);
    AudioBuffer::new(samples, ir.sample_rate()).expect("finite samples stay finite")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid("split", format!("unknown split `{other}`"))),
        }
    }
}

/// Train / validation / test proportions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.867,
            val: 0.014,
            test: 0.119,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return Err(Error::invalid("fractions", format!("need three values in [0, 1] summing to 1, got {parts:?}")));
        }
        Ok(())
    }

    /// Train and validation sizes are `round(n f)`; test takes the rest.
    pub fn counts(&self, n: usize) -> [usize; 3] {
        let train = ((n as f64 * self.train).round() as usize).min(n);
        let val = ((n as f64 * self.val).round() as usize).min(n - train);
        [train, val, n - train - val]
    }
}

impl fmt::Display for SplitFractions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.train, self.val, self.test)
    }
}

impl FromStr for SplitFractions {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::invalid("fractions", format!("expected three comma-separated numbers, got `{s}`")))?;
        let [train, val, test] = parts[..] else {
            return Err(Error::invalid("fractions", format!("expected three values, got {}", parts.len())));
        };
        let out = Self { train, val, test };
        out.validate()?;
        Ok(out)
    }
}

/// One manifest row. Paths are relative to the corpus root.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
    pub params: SceneParams,
    pub t60: f64,
    pub wav: PathBuf,
    pub rgb: PathBuf,
    pub depth: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub preset: PresetName,
    pub seed: u64,
    pub fractions: SplitFractions,
    pub entries: Vec<ManifestEntry>,
}

const MANIFEST_COLUMNS: &str = "id\tsplit\ts\ta\tseed\tt60\twav\trgb\tdepth";

impl fmt::Display for Manifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# reverbkit corpus v1")?;
        writeln!(f, "# preset\t{}", self.preset)?;
        writeln!(f, "# seed\t{}", self.seed)?;
        writeln!(f, "# fractions\t{}", self.fractions)?;
        writeln!(f, "{MANIFEST_COLUMNS}")?;
        for e in &self.entries {
            writeln!(
                f,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                e.id,
                e.split,
                e.params.s,
                e.params.a,
                e.params.seed,
                e.t60,
                e.wav.display(),
                e.rgb.display(),
                e.depth.display()
            )?;
        }
        Ok(())
    }
}

impl FromStr for Manifest {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let bad = |reason: String| Error::format("manifest", reason);
        let (mut preset, mut seed, mut fractions) = (None, None, None);
        let mut entries = Vec::new();
        let mut saw_columns = false;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            if let Some(meta) = line.strip_prefix("# ") {
                if let Some((k, v)) = meta.split_once('\t') {
                    match k {
                        "preset" => preset = Some(v.parse::<PresetName>()?),
                        "seed" => seed = Some(v.parse::<u64>().map_err(|_| bad(format!("bad seed `{v}`")))?),
                        "fractions" => fractions = Some(v.parse::<SplitFractions>()?),
                        _ => {}
                    }
                }
                continue;
            }
            if !saw_columns {
                if line != MANIFEST_COLUMNS {
                    return Err(bad(format!("unexpected column header `{line}`")));
                }
                saw_columns = true;
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 9 {
                return Err(bad(format!("expected 9 columns, got {}", cols.len())));
            }
            let num = |i: usize| cols[i].parse::<f64>().map_err(|_| bad(format!("bad number `{}`", cols[i])));
            entries.push(ManifestEntry {
                id: cols[0].to_string(),
                split: cols[1].parse()?,
                params: SceneParams {
                    s: num(2)?,
                    a: num(3)?,
                    seed: cols[4].parse().map_err(|_| bad(format!("bad seed `{}`", cols[4])))?,
                },
                t60: num(5)?,
                wav: cols[6].into(),
                rgb: cols[7].into(),
                depth: cols[8].into(),
            });
        }
        Ok(Manifest {
            preset: preset.ok_or_else(|| bad("missing preset".into()))?,
            seed: seed.ok_or_else(|| bad("missing seed".into()))?,
            fractions: fractions.ok_or_else(|| bad("missing fractions".into()))?,
            entries,
        })
    }
}

impl Manifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Short identifier for reports: preset, seed and size.
    pub fn id(&self) -> String {
        format!("{}-seed{}-n{}", self.preset, self.seed, self.entries.len())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?.parse()
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_string()).map_err(|e| Error::io(path, e))
    }
}

/// SplitMix64 finalizer, used to derive independent per-sample seeds.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Latin-hypercube draw of `n` `(s, a)` pairs over the corpus ranges, plus
/// their split assignment and per-sample seeds. No I/O.
pub fn plan_corpus(n: usize, fractions: &SplitFractions, seed: u64) -> Result<Vec<(SceneParams, Split)>> {
    if n == 0 {
        return Err(Error::invalid("n", "corpus needs at least one sample"));
    }
    fractions.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut strata_s: Vec<usize> = (0..n).collect();
    let mut strata_a: Vec<usize> = (0..n).collect();
    strata_s.shuffle(&mut rng);
    strata_a.shuffle(&mut rng);
    let lerp = |(lo, hi): (f64, f64), stratum: usize, u: f64| lo + (hi - lo) * (stratum as f64 + u) / n as f64;
    let params: Vec<SceneParams> = (0..n)
        .map(|i| SceneParams {
            s: lerp(CORPUS_SCALE_RANGE, strata_s[i], rng.random()),
            a: lerp(CORPUS_ABSORPTION_RANGE, strata_a[i], rng.random()),
            seed: splitmix64(seed ^ splitmix64(i as u64)),
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let [train, val, _] = fractions.counts(n);
    let mut splits = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        splits[i] = if rank < train {
            Split::Train
        } else if rank < train + val {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(params.into_iter().zip(splits).collect())
}

/// Writes `n` scenes under `out_dir/{train,val,test}/` and the manifest.
pub fn build_corpus(
    out_dir: impl AsRef<Path>,
    n: usize,
    fractions: &SplitFractions,
    seed: u64,
    preset: &Preset,
) -> Result<Manifest> {
    let out_dir = out_dir.as_ref();
    let plan = plan_corpus(n, fractions, seed)?;
    for split in Split::ALL {
        let dir = out_dir.join(split.as_str());
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let long = plan.iter().filter(|(p, _)| preset.stft.duration() < 2.0 * p.target_t60()).count();
    if long > 0 {
        log::warn!(
            "{long} of {n} scenes have T60 over half the {:.3} s response length",
            preset.stft.duration()
        );
    }
    let width = n.to_string().len().max(5);
    let mut entries = Vec::with_capacity(n);
    for (i, (params, split)) in plan.into_iter().enumerate() {
        let id = format!("{i:0width$}");
        let scene = scene_unchecked(&params, preset)?;
        let rel = |ext: &str| PathBuf::from(split.as_str()).join(format!("{id}{ext}"));
        let entry = ManifestEntry {
            id: id.clone(),
            split,
            params,
            t60: params.target_t60(),
            wav: rel(".wav"),
            rgb: rel(".png"),
            depth: rel(".depth.png"),
        };
        write_wav(out_dir.join(&entry.wav), &scene.ir, WavFormat::Float32)?;
        scene.rgb.write_rgb_png(out_dir.join(&entry.rgb))?;
        scene.depth.write_depth_png(out_dir.join(&entry.depth))?;
        entries.push(entry);
    }
    let manifest = Manifest {
        preset: preset.name,
        seed,
        fractions: *fractions,
        entries,
    };
    manifest.write(out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// A corpus scene loaded back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSample {
    pub entry: ManifestEntry,
    pub rgb: Image,
    pub depth: Image,
    pub ir: AudioBuffer,
}

/// A corpus directory with its parsed manifest.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl Corpus {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let manifest = Manifest::read(root.join(MANIFEST_FILE))?;
        Ok(Self { root, manifest })
    }

    pub fn load_entry(&self, entry: &ManifestEntry) -> Result<SceneSample> {
        Ok(SceneSample {
            entry: entry.clone(),
            rgb: Image::read_rgb_png(self.root.join(&entry.rgb))?,
            depth: Image::read_depth_png(self.root.join(&entry.depth))?,
            ir: read_wav_mono(self.root.join(&entry.wav))?,
        })
    }

    pub fn load_split(&self, split: Split) -> Result<Vec<SceneSample>> {
        self.manifest.split(split).map(|e| self.load_entry(e)).collect()
    }
}
