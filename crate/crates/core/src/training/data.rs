//! Training and evaluation data: synthetic clip distributions or on-disk
//! manifests, cropped and prepared as network inputs.

use std::path::Path;

use rand::Rng;
use serde::Deserialize;

use super::synth::{Clip, SynthDataSpec};
use crate::align::{align_sequence, Position};
use crate::analytics::total_variation;
use crate::error::{ensure, Error, Result};
use crate::frame_io::{bicubic_downsample, load_frames, DatasetManifest, FlowField, FrameSequence, Image};
use crate::model::{ModelConfig, NetworkInput};
use crate::numerics::Tensor;

/// Where clips come from.
#[derive(Clone, Debug)]
pub enum DataSource {
    Synthetic(SynthDataSpec),
    /// HR frames per clip, flows loaded lazily per window.
    Manifest { manifest: DatasetManifest, frames: Vec<Vec<Image>> },
}

#[derive(Deserialize)]
struct Probe {
    clips: Option<serde_json::Value>,
}

impl DataSource {
    /// Reads a JSON file that is either a dataset manifest (has a `clips`
    /// array) or a synthetic data spec.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let probe: Probe = serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if matches!(probe.clips, Some(serde_json::Value::Array(_))) {
            Self::from_manifest(DatasetManifest::load(path)?)
        } else {
            let spec: SynthDataSpec =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            spec.validate()?;
            Ok(DataSource::Synthetic(spec))
        }
    }

    pub fn from_manifest(manifest: DatasetManifest) -> Result<Self> {
        ensure!(!manifest.clips.is_empty(), Config, "manifest lists no clips");
        let frames = manifest
            .clips
            .iter()
            .map(|c| load_frames(c).map(FrameSequence::into_frames))
            .collect::<Result<Vec<_>>>()?;
        Ok(DataSource::Manifest { manifest, frames })
    }

    /// Window of `2n+1` frames centred on `centre` of manifest clip `index`.
    fn manifest_clip(&self, cfg: &ModelConfig, index: usize, centre: usize) -> Result<Clip> {
        let DataSource::Manifest { manifest, frames } = self else { unreachable!("manifest source") };
        let entry = &manifest.clips[index];
        ensure!(
            entry.scale == cfg.scale,
            Config,
            "clip {} has scale {}, model expects {}",
            entry.display_name(index),
            entry.scale,
            cfg.scale
        );
        let hr = &frames[index];
        let n = cfg.n;
        let lr = (centre - n..=centre + n)
            .map(|t| bicubic_downsample(&hr[t], entry.scale))
            .collect::<Result<Vec<_>>>()?;
        let flows = (centre - n..=centre + n)
            .map(|t| if t == centre { Ok(None) } else { entry.load_flow(centre, t) })
            .collect::<Result<Vec<_>>>()?;
        Ok(Clip { lr: FrameSequence::new(lr, n)?, flows, hr_reference: hr[centre].clone() })
    }

    fn check_window(&self, cfg: &ModelConfig) -> Result<()> {
        if let DataSource::Manifest { manifest, frames } = self {
            for (i, f) in frames.iter().enumerate() {
                ensure!(
                    f.len() >= cfg.frames(),
                    Config,
                    "clip {} has {} frames, the model needs {}",
                    manifest.clips[i].display_name(i),
                    f.len(),
                    cfg.frames()
                );
            }
        }
        Ok(())
    }

    /// A random training clip.
    pub fn draw(&self, cfg: &ModelConfig, rng: &mut impl Rng) -> Result<Clip> {
        match self {
            DataSource::Synthetic(spec) => {
                ensure!(spec.scale == cfg.scale, Config, "data scale {} differs from model scale {}", spec.scale, cfg.scale);
                ensure!(
                    spec.channels == cfg.image_channels,
                    Config,
                    "data has {} channels, model expects {}",
                    spec.channels,
                    cfg.image_channels
                );
                spec.sample_clip(cfg.frames(), rng)
            }
            DataSource::Manifest { frames, .. } => {
                self.check_window(cfg)?;
                let index = rng.gen_range(0..frames.len());
                let centre = rng.gen_range(cfg.n..frames[index].len() - cfg.n);
                self.manifest_clip(cfg, index, centre)
            }
        }
    }

    /// Fixed held-out clips: `count` fresh synthetic clips drawn from a stream
    /// that depends only on the data spec, or the central window of the first
    /// `count` manifest clips.
    pub fn validation_set(&self, cfg: &ModelConfig, count: usize) -> Result<Vec<Clip>> {
        match self {
            DataSource::Synthetic(spec) => {
                let mut rng = rand_chacha::ChaCha8Rng::from_seed_stream(spec.seed, VALIDATION_STREAM);
                (0..count).map(|_| self.draw(cfg, &mut rng)).collect()
            }
            DataSource::Manifest { frames, .. } => {
                self.check_window(cfg)?;
                (0..count.min(frames.len())).map(|i| self.manifest_clip(cfg, i, frames[i].len() / 2)).collect()
            }
        }
    }

    /// Clips for `eval`: the spec's `clips` synthetic clips, or every manifest clip's central window.
    pub fn evaluation_set(&self, cfg: &ModelConfig) -> Result<Vec<Clip>> {
        match self {
            DataSource::Synthetic(spec) => self.validation_set(cfg, spec.clips),
            DataSource::Manifest { frames, .. } => self.validation_set(cfg, frames.len()),
        }
    }

    pub fn is_synthetic(&self) -> bool {
        matches!(self, DataSource::Synthetic(_))
    }
}

/// Stream id reserved for validation clips.
pub const VALIDATION_STREAM: u64 = u64::MAX;

/// Seeding helper: one independent ChaCha stream per `(seed, stream)`.
pub trait SeedStream {
    fn from_seed_stream(seed: u64, stream: u64) -> Self;
}

impl SeedStream for rand_chacha::ChaCha8Rng {
    fn from_seed_stream(seed: u64, stream: u64) -> Self {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        rng
    }
}

/// LR crop rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropWindow {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl CropWindow {
    /// Centred `size×size` crop (clamped to the frame) whose offset is a multiple of `align`.
    pub fn centred(height: usize, width: usize, size: usize, align: usize) -> Self {
        let (ch, cw) = (size.min(height), size.min(width));
        let snap = |free: usize| (free / 2) / align.max(1) * align.max(1);
        Self { top: snap(height - ch), left: snap(width - cw), height: ch, width: cw }
    }

    /// Random `size×size` crop with offsets on multiples of `align`.
    pub fn random(height: usize, width: usize, size: usize, align: usize, rng: &mut impl Rng) -> Self {
        let (ch, cw) = (size.min(height), size.min(width));
        let a = align.max(1);
        let pick = |free: usize, rng: &mut dyn rand::RngCore| rng.gen_range(0..=free / a) * a;
        let top = pick(height - ch, rng);
        let left = pick(width - cw, rng);
        Self { top, left, height: ch, width: cw }
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self { top: 0, left: 0, height, width }
    }
}

/// Network input and HR target for one clip.
#[derive(Clone, Debug)]
pub struct PreparedClip {
    pub input: NetworkInput<f32>,
    /// `[sH·sW, channels]` target rows.
    pub target: Tensor<f32>,
    pub target_image: Image,
    /// Mean total variation of the flows supplied to the aligner.
    pub flow_tv: Option<f64>,
}

/// Applies the alignment protocol and crops. Image-space alignment runs on the
/// full frames before cropping so content shifted in from outside the crop is
/// available; feature-space alignment runs on the cropped frames and flows.
pub fn prepare_clip(cfg: &ModelConfig, clip: &Clip, crop: CropWindow) -> Result<PreparedClip> {
    let CropWindow { top, left, height, width } = crop;
    let position = cfg.alignment.position();
    let flow_tv = if cfg.alignment.needs_flow() {
        let tvs = clip.flows.iter().flatten().map(total_variation).collect::<Result<Vec<_>>>()?;
        (!tvs.is_empty()).then(|| tvs.iter().sum::<f64>() / tvs.len() as f64)
    } else {
        None
    };
    let crop_seq = |seq: &FrameSequence| seq.map_frames(|f| f.crop(top, left, height, width));
    let input = match position {
        Position::None => NetworkInput::unaligned(cfg, &crop_seq(&clip.lr)?)?,
        Position::Image => {
            let aligned = align_sequence(&clip.lr, &clip.flows, cfg.alignment, cfg.window)?;
            NetworkInput::unaligned(cfg, &crop_seq(&aligned)?)?
        }
        Position::Feature => {
            let flows: Vec<Option<FlowField>> = clip
                .flows
                .iter()
                .map(|f| f.as_ref().map(|f| f.crop(top, left, height, width)).transpose())
                .collect::<Result<_>>()?;
            NetworkInput::new(cfg, &crop_seq(&clip.lr)?, &flows)?
        }
    };
    let s = cfg.scale;
    let target_image = clip.hr_reference.crop(top * s, left * s, height * s, width * s)?;
    let c = target_image.channels();
    let target = Tensor::new(&[height * s * width * s, c], target_image.data().to_vec())?;
    Ok(PreparedClip { input, target, target_image, flow_tv })
}
