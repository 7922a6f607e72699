//! Image quality metrics, model evaluation and the alignment ablation.

mod ablation;
mod evaluate;

pub use ablation::{run_ablation, AblationRow, AblationTable};
pub use evaluate::{evaluate, evaluate_images, ClipScore, EvalOptions, EvalReport};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::frame_io::Image;

/// Channel convention for metrics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Channels {
    /// BT.601 luma of RGB input; grey input as is.
    #[default]
    Y,
    Rgb,
}

impl std::str::FromStr for Channels {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "y" => Ok(Channels::Y),
            "rgb" => Ok(Channels::Rgb),
            _ => Err(crate::Error::Argument(format!("unknown channel convention {s:?}"))),
        }
    }
}

fn check_pair(a: &Image, b: &Image) -> Result<()> {
    ensure!(a.same_dims(b), Dimension, "image shapes {:?} and {:?} differ", a.dims(), b.dims());
    Ok(())
}

/// `10·log10(max² / MSE)` in dB over every value; `+∞` when the images are equal.
pub fn psnr(a: &Image, b: &Image, max_val: f64) -> Result<f64> {
    check_pair(a, b)?;
    ensure!(!a.data().is_empty(), Dimension, "PSNR of empty images");
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (max_val * max_val / mse).log10())
}

/// PSNR at unit dynamic range under a channel convention.
pub fn psnr_value(pred: &Image, gt: &Image, channels: Channels) -> Result<f64> {
    match channels {
        Channels::Y => psnr(&pred.to_luma(), &gt.to_luma(), 1.0),
        Channels::Rgb => psnr(pred, gt, 1.0),
    }
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable valid-mode filtering of an `h×w` plane with the SSIM window.
fn filter_valid(x: &[f64], h: usize, w: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x0 in 0..ow {
            rows[y * ow + x0] = (0..SSIM_WINDOW).map(|k| g[k] * x[y * w + x0 + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y0 in 0..oh {
        for x0 in 0..ow {
            out[y0 * ow + x0] = (0..SSIM_WINDOW).map(|k| g[k] * rows[(y0 + k) * ow + x0]).sum();
        }
    }
    out
}

/// Mean SSIM of single-channel planes (dynamic range 1, 11×11 Gaussian window
/// with σ = 1.5, no padding).
pub fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize) -> Result<f64> {
    ensure!(a.len() == h * w && b.len() == h * w, Dimension, "plane sizes do not match {}×{}", h, w);
    ensure!(
        h >= SSIM_WINDOW && w >= SSIM_WINDOW,
        Dimension,
        "SSIM needs at least {}×{} pixels, got {}×{}",
        SSIM_WINDOW,
        SSIM_WINDOW,
        h,
        w
    );
    let g = gaussian_window();
    let (c1, c2) = ((K1 * 1.0).powi(2), (K2 * 1.0).powi(2));
    let mu_a = filter_valid(a, h, w, &g);
    let mu_b = filter_valid(b, h, w, &g);
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<_>>();
    let e_aa = filter_valid(&prod(a, a), h, w, &g);
    let e_bb = filter_valid(&prod(b, b), h, w, &g);
    let e_ab = filter_valid(&prod(a, b), h, w, &g);
    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / n as f64)
}

/// SSIM under a channel convention; RGB averages the per-channel values.
pub fn ssim(a: &Image, b: &Image, channels: Channels) -> Result<f64> {
    check_pair(a, b)?;
    let (a, b) = match channels {
        Channels::Y => (a.to_luma(), b.to_luma()),
        Channels::Rgb => (a.clone(), b.clone()),
    };
    let (h, w, c) = a.dims();
    let plane = |img: &Image, ch: usize| img.data().iter().skip(ch).step_by(c).map(|&v| v as f64).collect::<Vec<_>>();
    let mut total = 0.0;
    for ch in 0..c {
        total += ssim_plane(&plane(&a, ch), &plane(&b, ch), h, w)?;
    }
    Ok(total / c as f64)
}
