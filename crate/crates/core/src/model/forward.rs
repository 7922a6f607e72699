//! The full network: shallow features, optional alignment, attention blocks,
//! reference-frame reconstruction.

use std::sync::Arc;

use super::layers::{conv3x3, mfsab_graph, pixel_shuffle_map, BlockVars, ParamVars};
use super::window::WindowGeometry;
use super::{ModelConfig, ModelWeights};
use crate::align::{check_flows, Position};
use crate::error::{ensure, Result};
use crate::frame_io::{bicubic_upsample, FlowField, FrameSequence, Image};
use crate::numerics::{Real, RowMap, Tape, Tensor, Var};

/// A clip prepared for the network: stacked frames, the alignment resampling
/// (if any) and the bicubic-upsampled reference used as the global skip.
#[derive(Clone, Debug)]
pub struct NetworkInput<T: Real = f32> {
    /// `[frames, H, W, image_channels]`.
    pub frames: Tensor<T>,
    pub reference: usize,
    alignment: Option<(Position, Arc<RowMap>)>,
    /// `[sH, sW, image_channels]`.
    pub upsampled: Tensor<T>,
}

fn stack_frames<T: Real>(seq: &FrameSequence) -> Result<Tensor<T>> {
    let (h, w, c) = seq.dims();
    let data = seq.frames().iter().flat_map(|f| f.data().iter().map(|&v| T::lit(v as f64))).collect();
    Tensor::new(&[seq.len(), h, w, c], data)
}

fn check_sequence(cfg: &ModelConfig, seq: &FrameSequence) -> Result<()> {
    ensure!(
        seq.len() == cfg.frames(),
        Argument,
        "model expects {} frames, sequence has {}",
        cfg.frames(),
        seq.len()
    );
    ensure!(
        seq.dims().2 == cfg.image_channels,
        Argument,
        "model expects {} image channels, frames have {}",
        cfg.image_channels,
        seq.dims().2
    );
    Ok(())
}

impl<T: Real> NetworkInput<T> {
    /// Input whose supporting frames are resampled by `cfg.alignment` using
    /// `flows[i]`, the flow from the reference to frame `i`.
    pub fn new(cfg: &ModelConfig, seq: &FrameSequence, flows: &[Option<FlowField>]) -> Result<Self> {
        check_sequence(cfg, seq)?;
        check_flows(seq.len(), seq.reference(), flows, cfg.alignment)?;
        let mut input = Self::unaligned(cfg, seq)?;
        let position = cfg.alignment.position();
        if position == Position::None {
            return Ok(input);
        }
        let (h, w, _) = seq.dims();
        let blocks = (0..seq.len())
            .map(|i| {
                if i == seq.reference() {
                    return Ok(None);
                }
                let flow = flows[i].as_ref().expect("checked above");
                ensure!(
                    flow.height() == h && flow.width() == w,
                    Dimension,
                    "flow {}×{} does not match frames {}×{}",
                    flow.height(),
                    flow.width(),
                    h,
                    w
                );
                cfg.alignment.plan(flow, cfg.window)
            })
            .collect::<Result<Vec<_>>>()?;
        input.alignment = Some((position, Arc::new(RowMap::block_diagonal(h * w, &blocks))));
        Ok(input)
    }

    /// Input fed to the network as is, e.g. frames already aligned in image space.
    pub fn unaligned(cfg: &ModelConfig, seq: &FrameSequence) -> Result<Self> {
        check_sequence(cfg, seq)?;
        let up = bicubic_upsample(seq.reference_frame(), cfg.scale)?;
        let (uh, uw, uc) = up.dims();
        let upsampled = Tensor::new(&[uh, uw, uc], up.data().iter().map(|&v| T::lit(v as f64)).collect())?;
        Ok(Self { frames: stack_frames(seq)?, reference: seq.reference(), alignment: None, upsampled })
    }

    /// `(frames, H, W, channels)`.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        let s = self.frames.shape();
        (s[0], s[1], s[2], s[3])
    }
}

fn align_stage<T: Real>(tape: &mut Tape<T>, x: Var, input: &NetworkInput<T>, at: Position) -> Result<Var> {
    match &input.alignment {
        Some((position, map)) if *position == at => tape.row_map(x, map.clone()),
        _ => Ok(x),
    }
}

/// Records the network on `tape` and returns the unclamped `[sH·sW, image_channels]` output.
pub fn network_graph<T: Real>(
    tape: &mut Tape<T>,
    cfg: &ModelConfig,
    params: &ParamVars,
    input: &NetworkInput<T>,
) -> Result<Var> {
    let (f, h, w, ci) = input.dims();
    ensure!(f == cfg.frames() && ci == cfg.image_channels, Argument, "input does not match the model config");
    let pixels = f * h * w;
    let x = tape.constant(input.frames.clone().reshape(&[pixels, ci])?);
    let x = align_stage(tape, x, input, Position::Image)?;
    let mut x = conv3x3(tape, x, f, h, w, params.get("embed.weight")?, params.get("embed.bias")?)?;
    if cfg.uses_feature_blocks() {
        for r in 0..cfg.feature_depth {
            let p = |s: &str| params.get(&format!("feat{r}.{s}"));
            let y = conv3x3(tape, x, f, h, w, p("conv1.weight")?, p("conv1.bias")?)?;
            let y = tape.relu(y);
            let y = conv3x3(tape, y, f, h, w, p("conv2.weight")?, p("conv2.bias")?)?;
            x = tape.add(x, y)?;
        }
    }
    let mut x = align_stage(tape, x, input, Position::Feature)?;
    let mut group_in = x;
    for b in 0..cfg.blocks {
        let geometry = WindowGeometry::new(f, h, w, cfg.window, cfg.shift_for_block(b))?;
        let vars = BlockVars::lookup(params, b)?;
        x = mfsab_graph(tape, x, geometry, cfg.heads, &vars)?;
        if (b + 1) % cfg.shortcut_every == 0 {
            x = tape.add(x, group_in)?;
            group_in = x;
        }
    }
    let reference = Arc::new(RowMap::gather(pixels, (0..h * w).map(|p| Some(input.reference * h * w + p))));
    let x = tape.row_map(x, reference)?;
    let y = conv3x3(tape, x, 1, h, w, params.get("recon.weight")?, params.get("recon.bias")?)?;
    let s = cfg.scale;
    let y = tape.reshape(y, &[h * w * ci * s * s, 1])?;
    let y = tape.row_map(y, Arc::new(pixel_shuffle_map(h, w, ci, s)))?;
    let y = tape.reshape(y, &[h * s * w * s, ci])?;
    let skip = tape.constant(input.upsampled.clone().reshape(&[h * s * w * s, ci])?);
    tape.add(y, skip)
}

/// Runs the network without recording gradients; output is unclamped `[sH, sW, image_channels]`.
pub fn network_output<T: Real>(cfg: &ModelConfig, weights: &ModelWeights<T>, input: &NetworkInput<T>) -> Result<Tensor<T>> {
    weights.check_config(cfg)?;
    let mut tape = Tape::new();
    let params = ParamVars::register_with(&mut tape, weights, |_| false);
    let y = network_graph(&mut tape, cfg, &params, input)?;
    let (_, h, w, ci) = input.dims();
    tape.value(y).clone().reshape(&[h * cfg.scale, w * cfg.scale, ci])?.check_finite("model output")
}

/// Super-resolves the reference frame of `seq`; the result is clamped to `[0, 1]`.
pub fn model_forward(
    cfg: &ModelConfig,
    weights: &ModelWeights<f32>,
    seq: &FrameSequence,
    flows: &[Option<FlowField>],
) -> Result<Image> {
    cfg.validate()?;
    let input = NetworkInput::new(cfg, seq, flows)?;
    let out = network_output(cfg, weights, &input)?;
    let s = out.shape().to_vec();
    Ok(Image::new(s[0], s[1], s[2], out.into_data())?.clamp01())
}
