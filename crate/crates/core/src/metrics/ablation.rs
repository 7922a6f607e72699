use serde::Serialize;

use super::{evaluate, EvalOptions};
use crate::align::{AlignmentMode, Position, Resampling};
use crate::error::{ensure, Result};
use crate::model::ModelConfig;
use crate::training::{train, DataSource, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub mode: AlignmentMode,
    /// `-`, `Img.` or `Feat.`
    pub position: &'static str,
    /// `-`, `BI` or `NN`; patch alignment moves whole patches, a nearest-neighbour resampling.
    pub resampling: &'static str,
    pub params: usize,
    pub psnr: Option<f64>,
    pub ssim: f64,
    pub final_val_psnr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

fn labels(mode: AlignmentMode) -> (&'static str, &'static str) {
    let position = match mode.position() {
        Position::None => "-",
        Position::Image => "Img.",
        Position::Feature => "Feat.",
    };
    let resampling = match mode.resampling() {
        Resampling::None => "-",
        Resampling::Bilinear => "BI",
        Resampling::Nearest | Resampling::Patch => "NN",
    };
    (position, resampling)
}

/// Trains one model per mode with identical seed and budget, then evaluates each on the same clips.
pub fn run_ablation(
    base: &ModelConfig,
    modes: &[AlignmentMode],
    tc: &TrainConfig,
    data: &DataSource,
    opts: EvalOptions,
) -> Result<AblationTable> {
    ensure!(!modes.is_empty(), Argument, "no alignment modes given");
    for (i, m) in modes.iter().enumerate() {
        ensure!(!modes[..i].contains(m), Argument, "alignment mode {} listed twice", m);
    }
    let mut rows = Vec::with_capacity(modes.len());
    for &mode in modes {
        let mut cfg = base.clone();
        cfg.alignment = mode;
        let out = train(&cfg, tc, data, |_| {})?;
        let report = evaluate(&cfg, &out.weights, data, opts)?;
        let (position, resampling) = labels(mode);
        rows.push(AblationRow {
            mode,
            position,
            resampling,
            params: out.weights.param_count(),
            psnr: report.mean_psnr,
            ssim: report.mean_ssim,
            final_val_psnr: out.final_val_psnr(),
        });
    }
    Ok(AblationTable { rows })
}
