//! Synthetic video with exact motion: an analytic high-resolution pattern is
//! evaluated at shifted coordinates, then bicubic-downsampled. Patterns carry
//! frequencies above the low-resolution Nyquist limit, so sub-pixel shifts
//! produce different aliasing in every frame.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::frame_io::{bicubic_downsample, FlowField, FrameSequence, Image};

/// One oriented sinusoid: `amplitude · sin(2π·frequency·(x cos θ + y sin θ) + phase)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wave {
    /// Cycles per high-resolution pixel.
    pub frequency: f64,
    /// Radians.
    pub angle: f64,
    pub phase: f64,
    pub amplitude: f64,
}

impl Wave {
    fn at(&self, y: f64, x: f64) -> f64 {
        let t = x * self.angle.cos() + y * self.angle.sin();
        self.amplitude * (2.0 * PI * self.frequency * t + self.phase).sin()
    }
}

/// Closed-form intensity pattern on the continuous high-resolution plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Pattern {
    /// `0.5 + Σ waves`, clipped to `[0, 1]`.
    Sinusoids { waves: Vec<Wave> },
    /// Rotated checkerboard with edges softened by `tanh(sharpness · …)`.
    Checkerboard { period: f64, angle: f64, phase: f64, sharpness: f64, contrast: f64 },
}

impl Pattern {
    /// Intensity at HR coordinates `(y, x)` (pixel centres at integers).
    pub fn at(&self, y: f64, x: f64) -> f64 {
        let v = match self {
            Pattern::Sinusoids { waves } => 0.5 + waves.iter().map(|w| w.at(y, x)).sum::<f64>(),
            Pattern::Checkerboard { period, angle, phase, sharpness, contrast } => {
                let (s, c) = angle.sin_cos();
                let u = (x * c + y * s) * 2.0 * PI / period + phase;
                let v = (-x * s + y * c) * 2.0 * PI / period + phase;
                0.5 + 0.5 * contrast * (sharpness * u.sin() * v.sin()).tanh()
            }
        };
        v.clamp(0.0, 1.0)
    }

    fn is_valid(&self) -> bool {
        match self {
            Pattern::Sinusoids { waves } => waves
                .iter()
                .all(|w| w.frequency.is_finite() && w.angle.is_finite() && w.phase.is_finite() && w.amplitude.is_finite()),
            Pattern::Checkerboard { period, angle, phase, sharpness, contrast } => {
                *period > 0.0 && angle.is_finite() && phase.is_finite() && sharpness.is_finite() && contrast.is_finite()
            }
        }
    }
}

/// A single synthetic clip: pattern, per-frame HR shifts `[dx, dy]`, scale and size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthClipSpec {
    pub pattern: Pattern,
    /// HR displacement of the pattern in each frame, `[dx, dy]` pixels.
    pub shifts: Vec<[f64; 2]>,
    pub scale: usize,
    pub hr_height: usize,
    pub hr_width: usize,
    #[serde(default = "one")]
    pub channels: usize,
    /// Per-channel gains for colour clips; ignored for grey.
    #[serde(default)]
    pub channel_gains: Vec<f64>,
}

fn one() -> usize {
    1
}

/// Low-resolution frames, flows from the reference to each frame and the HR reference.
#[derive(Clone, Debug)]
pub struct Clip {
    pub lr: FrameSequence,
    /// `flows[t]`, reference → frame `t` in LR pixels; `None` at the reference.
    pub flows: Vec<Option<FlowField>>,
    pub hr_reference: Image,
}

impl SynthClipSpec {
    pub fn validate(&self) -> Result<()> {
        ensure!((1..=4).contains(&self.scale), Config, "scale {} not in 1..=4", self.scale);
        ensure!(!self.shifts.is_empty(), Config, "a clip needs at least one frame");
        ensure!(
            self.hr_height > 0 && self.hr_width > 0 && self.hr_height % self.scale == 0 && self.hr_width % self.scale == 0,
            Config,
            "HR size {}×{} must be positive and divisible by {}",
            self.hr_height,
            self.hr_width,
            self.scale
        );
        ensure!(self.channels == 1 || self.channels == 3, Config, "channels must be 1 or 3");
        ensure!(self.shifts.iter().flatten().all(|v| v.is_finite()), Config, "shifts must be finite");
        ensure!(self.pattern.is_valid(), Config, "pattern parameters must be finite");
        Ok(())
    }

    pub fn reference(&self) -> usize {
        self.shifts.len() / 2
    }

    /// HR frame `t`: the pattern translated by `shifts[t]`.
    pub fn hr_frame(&self, t: usize) -> Image {
        self.render(t, 0)
    }

    /// LR frame `t`: rendered with a margin covering the bicubic footprint and
    /// cropped after downsampling, so no pixel sees a reflected border.
    pub fn lr_frame(&self, t: usize) -> Result<Image> {
        let lr_margin = 2;
        let wide = bicubic_downsample(&self.render(t, lr_margin * self.scale), self.scale)?;
        wide.crop(lr_margin, lr_margin, self.hr_height / self.scale, self.hr_width / self.scale)
    }

    fn render(&self, t: usize, margin: usize) -> Image {
        let [dx, dy] = self.shifts[t];
        let gain = |c: usize| if self.channels == 1 { 1.0 } else { self.channel_gains.get(c).copied().unwrap_or(1.0) };
        let m = margin as f64;
        Image::from_fn(self.hr_height + 2 * margin, self.hr_width + 2 * margin, self.channels, |y, x, c| {
            let v = self.pattern.at(y as f64 - m - dy, x as f64 - m - dx);
            (0.5 + gain(c) * (v - 0.5)).clamp(0.0, 1.0) as f32
        })
    }
}

/// Renders HR frames, downsamples them and derives the exact flows.
///
/// The rng perturbs nothing here; it is accepted so callers can thread one
/// generator through clip sampling and synthesis.
pub fn synthesize_clip(spec: &SynthClipSpec, _rng: &mut impl Rng) -> Result<Clip> {
    spec.validate()?;
    let s = spec.scale as f64;
    let reference = spec.reference();
    let mut lr = Vec::with_capacity(spec.shifts.len());
    let mut hr_reference = None;
    for t in 0..spec.shifts.len() {
        lr.push(spec.lr_frame(t)?);
        if t == reference {
            hr_reference = Some(spec.hr_frame(t));
        }
    }
    let (h, w) = (spec.hr_height / spec.scale, spec.hr_width / spec.scale);
    let [rx, ry] = spec.shifts[reference];
    let flows = spec
        .shifts
        .iter()
        .enumerate()
        .map(|(t, &[dx, dy])| (t != reference).then(|| FlowField::constant(h, w, ((dx - rx) / s) as f32, ((dy - ry) / s) as f32)))
        .collect();
    Ok(Clip { lr: FrameSequence::new(lr, reference)?, flows, hr_reference: hr_reference.expect("reference rendered") })
}

/// Distribution of synthetic clips used for training, validation and the `synth` command.
///
/// Motion is a constant velocity per clip: speed uniform in
/// `[shift_min, shift_max]` LR pixels per frame, direction uniform, so frame
/// `t` sits `(t - ref)·v` from the reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthDataSpec {
    pub lr_height: usize,
    pub lr_width: usize,
    pub scale: usize,
    pub channels: usize,
    /// Frames per clip for `synth`; training uses the model's frame count.
    pub frames: usize,
    pub shift_min: f64,
    pub shift_max: f64,
    /// Standard deviation (LR pixels) of i.i.d. noise added to supplied flows.
    pub flow_noise: f64,
    /// Clips written by `synth` and evaluated by `eval`.
    pub clips: usize,
    pub seed: u64,
    /// Range of sinusoid frequencies, cycles per HR pixel.
    pub frequency_min: f64,
    pub frequency_max: f64,
    pub waves_min: usize,
    pub waves_max: usize,
    pub checkerboard_probability: f64,
}

impl Default for SynthDataSpec {
    fn default() -> Self {
        Self {
            lr_height: 80,
            lr_width: 80,
            scale: 2,
            channels: 1,
            frames: 3,
            shift_min: 0.0,
            shift_max: 4.0,
            flow_noise: 0.0,
            clips: 16,
            seed: 0,
            frequency_min: 0.02,
            frequency_max: 0.45,
            waves_min: 2,
            waves_max: 4,
            checkerboard_probability: 0.25,
        }
    }
}

impl SynthDataSpec {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.lr_height > 0 && self.lr_width > 0, Config, "LR size must be positive");
        ensure!((1..=4).contains(&self.scale), Config, "scale {} not in 1..=4", self.scale);
        ensure!(self.channels == 1 || self.channels == 3, Config, "channels must be 1 or 3");
        ensure!(self.frames >= 1, Config, "frames must be positive");
        ensure!(
            self.shift_min >= 0.0 && self.shift_min <= self.shift_max && self.shift_max.is_finite(),
            Config,
            "shift range must satisfy 0 <= shift_min <= shift_max"
        );
        ensure!(self.flow_noise >= 0.0 && self.flow_noise.is_finite(), Config, "flow_noise must be non-negative");
        ensure!(
            0.0 < self.frequency_min && self.frequency_min <= self.frequency_max,
            Config,
            "frequency range must be positive and ordered"
        );
        ensure!(
            1 <= self.waves_min && self.waves_min <= self.waves_max,
            Config,
            "wave count range must be positive and ordered"
        );
        ensure!((0.0..=1.0).contains(&self.checkerboard_probability), Config, "probability out of range");
        Ok(())
    }

    /// Draws a clip spec with `frames` frames.
    pub fn sample_spec(&self, frames: usize, rng: &mut impl Rng) -> SynthClipSpec {
        let pattern = if rng.gen::<f64>() < self.checkerboard_probability {
            Pattern::Checkerboard {
                period: rng.gen_range(3.0..16.0),
                angle: rng.gen_range(0.0..PI),
                phase: rng.gen_range(0.0..2.0 * PI),
                sharpness: rng.gen_range(1.0..6.0),
                contrast: rng.gen_range(0.4..0.9),
            }
        } else {
            let count = rng.gen_range(self.waves_min..=self.waves_max);
            let total = rng.gen_range(0.25..0.45);
            let raw: Vec<f64> = (0..count).map(|_| rng.gen_range(0.2..1.0)).collect();
            let norm: f64 = raw.iter().sum();
            let waves = raw
                .iter()
                .map(|r| Wave {
                    frequency: rng.gen_range(self.frequency_min..=self.frequency_max),
                    angle: rng.gen_range(0.0..PI),
                    phase: rng.gen_range(0.0..2.0 * PI),
                    amplitude: total * r / norm,
                })
                .collect();
            Pattern::Sinusoids { waves }
        };
        let speed = if self.shift_max > self.shift_min { rng.gen_range(self.shift_min..=self.shift_max) } else { self.shift_min };
        let heading = rng.gen_range(0.0..2.0 * PI);
        let (vx, vy) = (speed * heading.cos() * self.scale as f64, speed * heading.sin() * self.scale as f64);
        let reference = frames / 2;
        let shifts = (0..frames)
            .map(|t| {
                let k = t as f64 - reference as f64;
                [k * vx, k * vy]
            })
            .collect();
        let channel_gains = if self.channels == 3 { (0..3).map(|_| rng.gen_range(0.6..1.0)).collect() } else { Vec::new() };
        SynthClipSpec {
            pattern,
            shifts,
            scale: self.scale,
            hr_height: self.lr_height * self.scale,
            hr_width: self.lr_width * self.scale,
            channels: self.channels,
            channel_gains,
        }
    }

    /// Samples and renders a clip; supplied flows carry `flow_noise`.
    pub fn sample_clip(&self, frames: usize, rng: &mut impl Rng) -> Result<Clip> {
        let spec = self.sample_spec(frames, rng);
        let mut clip = synthesize_clip(&spec, rng)?;
        // Drawn unconditionally so the clip sequence does not depend on `flow_noise`.
        let mut noise_rng = ChaCha8Rng::seed_from_u64(rng.gen());
        if self.flow_noise > 0.0 {
            let noise = Normal::new(0.0, self.flow_noise).expect("finite std");
            for flow in clip.flows.iter_mut().flatten() {
                let u = flow.u().iter().map(|&u| u + noise.sample(&mut noise_rng) as f32).collect();
                let v = flow.v().iter().map(|&v| v + noise.sample(&mut noise_rng) as f32).collect();
                *flow = FlowField::new(flow.height(), flow.width(), u, v)?;
            }
        }
        Ok(clip)
    }
}
