use serde::{Deserialize, Serialize};

use super::{psnr_value, ssim, Channels};
use crate::error::{ensure, Result};
use crate::frame_io::Image;
use crate::model::{network_output, ModelConfig, ModelWeights};
use crate::par;
use crate::training::{prepare_clip, CropWindow, DataSource};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct EvalOptions {
    pub channels: Channels,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipScore {
    pub clip: String,
    /// `None` when prediction and ground truth are identical.
    pub psnr: Option<f64>,
    pub psnr_infinite: bool,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub channels: Channels,
    /// Pixels removed from each border before scoring.
    pub border_crop: usize,
    pub clips: Vec<ClipScore>,
    /// Mean over clips; `None` when any clip is infinite.
    pub mean_psnr: Option<f64>,
    pub mean_psnr_infinite: bool,
    pub mean_ssim: f64,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

/// Scores `(name, prediction, ground truth)` triples.
pub fn evaluate_images(pairs: &[(String, Image, Image)], opts: EvalOptions) -> Result<EvalReport> {
    ensure!(!pairs.is_empty(), Argument, "nothing to evaluate");
    let scores = par::map(pairs, |(name, pred, gt)| -> Result<ClipScore> {
        let p = psnr_value(pred, gt, opts.channels)?;
        let s = ssim(pred, gt, opts.channels)?;
        let infinite = p.is_infinite();
        Ok(ClipScore { clip: name.clone(), psnr: (!infinite).then_some(p), psnr_infinite: infinite, ssim: s })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let n = scores.len() as f64;
    let mean_psnr_infinite = scores.iter().any(|c| c.psnr_infinite);
    let mean_psnr = (!mean_psnr_infinite).then(|| scores.iter().map(|c| c.psnr.expect("finite")).sum::<f64>() / n);
    let mean_ssim = scores.iter().map(|c| c.ssim).sum::<f64>() / n;
    Ok(EvalReport { channels: opts.channels, border_crop: 0, clips: scores, mean_psnr, mean_psnr_infinite, mean_ssim })
}

/// Super-resolves the reference frame of every evaluation clip (whole
/// frames, alignment per the model's mode) and scores it against the HR reference.
pub fn evaluate(cfg: &ModelConfig, weights: &ModelWeights<f32>, data: &DataSource, opts: EvalOptions) -> Result<EvalReport> {
    cfg.validate()?;
    weights.check_config(cfg)?;
    let clips = data.evaluation_set(cfg)?;
    let names: Vec<String> = match data {
        DataSource::Manifest { manifest, .. } => {
            manifest.clips.iter().enumerate().map(|(i, c)| c.display_name(i)).collect()
        }
        DataSource::Synthetic(_) => (0..clips.len()).map(|i| format!("synth{i:03}")).collect(),
    };
    let indices: Vec<usize> = (0..clips.len()).collect();
    let pairs = par::map(&indices, |&i| -> Result<(String, Image, Image)> {
        let clip = &clips[i];
        let (h, w, _) = clip.lr.dims();
        let prepared = prepare_clip(cfg, clip, CropWindow::full(h, w))?;
        let out = network_output(cfg, weights, &prepared.input)?;
        let s = out.shape().to_vec();
        let pred = Image::new(s[0], s[1], s[2], out.into_data())?.clamp01();
        Ok((names[i].clone(), pred, prepared.target_image))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    evaluate_images(&pairs, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::SynthDataSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_predictions_are_flagged_infinite() {
        let gt = Image::from_fn(16, 16, 1, |y, x, _| ((y * 3 + x) % 7) as f32 / 7.0);
        let report = evaluate_images(&[("a".into(), gt.clone(), gt.clone())], EvalOptions::default()).unwrap();
        assert!(report.mean_psnr_infinite && report.mean_psnr.is_none());
        assert!(report.clips[0].psnr_infinite);
        assert!((report.mean_ssim - 1.0).abs() < 1e-12);
        let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(json["channels"], "y");
    }

    #[test]
    fn mean_is_arithmetic_mean() {
        let a = Image::from_fn(12, 12, 1, |y, x, _| ((y + x) % 5) as f32 / 5.0);
        let b = Image::new(12, 12, 1, a.data().iter().map(|v| v * 0.9).collect()).unwrap();
        let c = Image::new(12, 12, 1, a.data().iter().map(|v| v * 0.7 + 0.1).collect()).unwrap();
        let r = evaluate_images(&[("1".into(), b, a.clone()), ("2".into(), c, a)], EvalOptions::default()).unwrap();
        let want = (r.clips[0].psnr.unwrap() + r.clips[1].psnr.unwrap()) / 2.0;
        assert_eq!(r.mean_psnr, Some(want));
    }

    #[test]
    fn evaluation_is_repeatable() {
        let cfg = ModelConfig::tiny(1, 4, 8, 2);
        let weights = ModelWeights::init(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let data = DataSource::Synthetic(SynthDataSpec { lr_height: 12, lr_width: 12, clips: 2, ..Default::default() });
        let a = evaluate(&cfg, &weights, &data, EvalOptions::default()).unwrap().to_json();
        let b = evaluate(&cfg, &weights, &data, EvalOptions::default()).unwrap().to_json();
        assert_eq!(a, b);
    }
}
