//! The training loop.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{prepare_clip, CropWindow, DataSource, PreparedClip, SeedStream};
use super::optim::{adam_step, cosine_lr, AdamParams, OptimizerState};
use crate::error::{ensure, Error, Result};
use crate::metrics::{psnr_value, Channels};
use crate::model::{network_graph, network_output, ModelConfig, ModelWeights, ParamVars};
use crate::numerics::Tape;
use crate::par;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr0: f64,
    pub total_iters: usize,
    pub batch: usize,
    /// Side of the LR training crop.
    pub lr_patch: usize,
    pub seed: u64,
    pub eps_charbonnier: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub eta_min: f64,
    /// Iterations between loss lines in the log.
    pub log_every: usize,
    /// Iterations between validation passes.
    pub val_every: usize,
    pub val_clips: usize,
    /// Side of the centred LR validation crop.
    pub val_patch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 4e-4,
            total_iters: 1000,
            batch: 4,
            lr_patch: 16,
            seed: 0,
            eps_charbonnier: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            eta_min: 1e-7,
            log_every: 50,
            val_every: 500,
            val_clips: 16,
            val_patch: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, model: &ModelConfig) -> Result<()> {
        ensure!(self.lr0 > 0.0 && self.lr0.is_finite(), Config, "lr0 must be positive");
        ensure!(self.eta_min >= 0.0 && self.eta_min <= self.lr0, Config, "eta_min must lie in [0, lr0]");
        ensure!(self.batch >= 1, Config, "batch must be positive");
        ensure!(
            self.lr_patch >= 1 && self.lr_patch % model.window == 0,
            Config,
            "lr_patch {} must be a positive multiple of the window size {}",
            self.lr_patch,
            model.window
        );
        ensure!(self.val_patch >= 1, Config, "val_patch must be positive");
        ensure!(self.eps_charbonnier > 0.0, Config, "eps_charbonnier must be positive");
        ensure!(
            (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.adam_eps > 0.0,
            Config,
            "Adam parameters out of range"
        );
        ensure!(self.log_every >= 1 && self.val_every >= 1, Config, "logging intervals must be positive");
        Ok(())
    }

    pub fn adam(&self) -> AdamParams {
        AdamParams { beta1: self.beta1, beta2: self.beta2, eps: self.adam_eps }
    }
}

/// One JSON line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub iter: usize,
    pub lr: f64,
    /// Mean training loss since the previous line; validation loss on the line for iteration 0.
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub val_psnr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub flow_tv: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub weights: ModelWeights<f32>,
    pub log: Vec<LogEntry>,
}

impl TrainOutput {
    /// Validation PSNR of the last line that has one.
    pub fn final_val_psnr(&self) -> Option<f64> {
        self.log.iter().rev().find_map(|e| e.val_psnr)
    }

    pub fn initial_val_psnr(&self) -> Option<f64> {
        self.log.first().and_then(|e| e.val_psnr)
    }

    pub fn log_jsonl(&self) -> String {
        self.log.iter().map(|e| serde_json::to_string(e).expect("log entry serialises") + "\n").collect()
    }
}

/// Mean PSNR (Y channel) and Charbonnier loss of `weights` over prepared validation clips.
pub fn validate(cfg: &ModelConfig, weights: &ModelWeights<f32>, clips: &[PreparedClip], eps: f64) -> Result<(f64, f64)> {
    ensure!(!clips.is_empty(), Argument, "empty validation set");
    let scores = par::map(clips, |c| -> Result<(f64, f64)> {
        let out = network_output(cfg, weights, &c.input)?;
        let loss = super::charbonnier_loss(&out.clone().reshape(c.target.shape())?, &c.target, eps)?;
        let s = out.shape().to_vec();
        let img = crate::frame_io::Image::new(s[0], s[1], s[2], out.into_data())?.clamp01();
        Ok((psnr_value(&img, &c.target_image, Channels::Y)?, loss))
    });
    let mut psnr_sum = 0.0;
    let mut loss_sum = 0.0;
    for s in scores {
        let (p, l) = s?;
        psnr_sum += p;
        loss_sum += l;
    }
    Ok((psnr_sum / clips.len() as f64, loss_sum / clips.len() as f64))
}

struct SampleResult {
    loss: f64,
    grads: Vec<Vec<f32>>,
    flow_tv: Option<f64>,
}

fn sample_gradients(
    cfg: &ModelConfig,
    weights: &ModelWeights<f32>,
    prepared: &PreparedClip,
    eps: f64,
) -> Result<SampleResult> {
    let mut tape = Tape::new();
    let params = ParamVars::register(&mut tape, weights);
    let y = network_graph(&mut tape, cfg, &params, &prepared.input)?;
    let loss = tape.charbonnier(y, &prepared.target, eps)?;
    let value = tape.value(loss).data()[0] as f64;
    if !value.is_finite() {
        return Err(Error::Training("non-finite loss".into()));
    }
    let mut grads = tape.backward(loss)?;
    let buffers = params
        .vars()
        .iter()
        .zip(weights.tensors())
        .map(|(&v, t)| grads.take_or_zeros(v, t.len()))
        .collect();
    Ok(SampleResult { loss: value, grads: buffers, flow_tv: prepared.flow_tv })
}

/// Trains from the seeded initialisation. `on_entry` sees every log line as it
/// is produced, so a caller can persist progress even if training later fails.
///
/// Deterministic: sample `b` of iteration `i` draws from its own random stream,
/// per-sample gradients are summed in batch order, and the result does not
/// depend on the number of worker threads.
pub fn train(
    cfg: &ModelConfig,
    tc: &TrainConfig,
    data: &DataSource,
    mut on_entry: impl FnMut(&LogEntry),
) -> Result<TrainOutput> {
    cfg.validate()?;
    tc.validate(cfg)?;
    let mut init_rng = ChaCha8Rng::from_seed_stream(tc.seed, 0);
    let mut weights = ModelWeights::<f32>::init(cfg, &mut init_rng)?;
    let mut log = Vec::new();
    if tc.total_iters == 0 {
        return Ok(TrainOutput { weights, log });
    }
    let val_clips = data
        .validation_set(cfg, tc.val_clips)?
        .iter()
        .map(|clip| {
            let (h, w, _) = clip.lr.dims();
            prepare_clip(cfg, clip, CropWindow::centred(h, w, tc.val_patch, cfg.window))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut push = |e: LogEntry, log: &mut Vec<LogEntry>| {
        on_entry(&e);
        log.push(e);
    };
    let (psnr0, loss0) = validate(cfg, &weights, &val_clips, tc.eps_charbonnier)?;
    push(LogEntry { iter: 0, lr: tc.lr0, loss: loss0, val_psnr: Some(psnr0), flow_tv: None }, &mut log);

    let mut state = OptimizerState::new(&weights);
    let (mut loss_acc, mut tv_acc, mut tv_count, mut since_log) = (0.0, 0.0, 0usize, 0usize);
    let slots: Vec<usize> = (0..tc.batch).collect();
    for iter in 0..tc.total_iters {
        let lr = cosine_lr(iter, tc.total_iters, tc.lr0, tc.eta_min)?;
        let results = par::map(&slots, |&b| -> Result<SampleResult> {
            let stream = 1 + (iter * tc.batch + b) as u64;
            let mut rng = ChaCha8Rng::from_seed_stream(tc.seed, stream);
            let clip = data.draw(cfg, &mut rng)?;
            let (h, w, _) = clip.lr.dims();
            let crop = if data.is_synthetic() {
                CropWindow::centred(h, w, tc.lr_patch, cfg.window)
            } else {
                CropWindow::random(h, w, tc.lr_patch, cfg.window, &mut rng)
            };
            let prepared = prepare_clip(cfg, &clip, crop)?;
            sample_gradients(cfg, &weights, &prepared, tc.eps_charbonnier)
        });
        let mut sum: Option<Vec<Vec<f32>>> = None;
        let mut batch_loss = 0.0;
        for r in results {
            let r = r?;
            batch_loss += r.loss;
            if let Some(tv) = r.flow_tv {
                tv_acc += tv;
                tv_count += 1;
            }
            match &mut sum {
                None => sum = Some(r.grads),
                Some(acc) => {
                    for (a, g) in acc.iter_mut().zip(&r.grads) {
                        for (x, y) in a.iter_mut().zip(g) {
                            *x += *y;
                        }
                    }
                }
            }
        }
        let mut grads = sum.expect("batch is non-empty");
        let scale = 1.0 / tc.batch as f32;
        grads.iter_mut().flatten().for_each(|g| *g *= scale);
        adam_step(&mut weights, &mut state, &grads, lr, tc.adam())?;
        loss_acc += batch_loss / tc.batch as f64;
        since_log += 1;

        let done = iter + 1;
        let validate_now = done % tc.val_every == 0 || done == tc.total_iters;
        if done % tc.log_every == 0 || validate_now {
            let val_psnr = if validate_now {
                Some(validate(cfg, &weights, &val_clips, tc.eps_charbonnier)?.0)
            } else {
                None
            };
            let flow_tv = (tv_count > 0).then(|| tv_acc / tv_count as f64);
            let entry = LogEntry { iter: done, lr, loss: loss_acc / since_log as f64, val_psnr, flow_tv };
            push(entry, &mut log);
            (loss_acc, tv_acc, tv_count, since_log) = (0.0, 0.0, 0, 0);
        }
    }
    Ok(TrainOutput { weights, log })
}
