//! Bicubic resampling (Keys kernel, a = -0.5) with antialiasing on decimation,
//! symmetric border extension, computed in 64-bit.

use super::Image;
use crate::error::{ensure, Result};

const A: f64 = -0.5;

pub fn cubic(x: f64) -> f64 {
    let t = x.abs();
    if t <= 1.0 {
        (A + 2.0) * t.powi(3) - (A + 3.0) * t.powi(2) + 1.0
    } else if t < 2.0 {
        A * t.powi(3) - 5.0 * A * t.powi(2) + 8.0 * A * t - 4.0 * A
    } else {
        0.0
    }
}

/// Symmetric (edge-duplicating) reflection of `i` into `0..n`.
pub fn reflect_symmetric(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - 1 - j;
    }
    j as usize
}

/// Per-output-sample taps `(input index, weight)` for resizing an axis of
/// length `input` to `output`.
pub fn axis_taps(input: usize, output: usize) -> Vec<Vec<(usize, f64)>> {
    let ratio = input as f64 / output as f64;
    let kscale = ratio.max(1.0);
    let half = 2.0 * kscale;
    (0..output)
        .map(|o| {
            let center = (o as f64 + 0.5) * ratio - 0.5;
            let lo = (center - half).floor() as isize;
            let hi = (center + half).ceil() as isize;
            let mut taps: Vec<(isize, f64)> =
                (lo..=hi).map(|j| (j, cubic((center - j as f64) / kscale))).filter(|&(_, w)| w != 0.0).collect();
            let total: f64 = taps.iter().map(|t| t.1).sum();
            for t in &mut taps {
                t.1 /= total;
            }
            taps.into_iter().map(|(j, w)| (reflect_symmetric(j, input), w)).collect()
        })
        .collect()
}

fn resize(img: &Image, out_h: usize, out_w: usize) -> Image {
    let (h, w, c) = img.dims();
    let xt = axis_taps(w, out_w);
    let yt = axis_taps(h, out_h);
    let mut rows = vec![0.0f64; h * out_w * c];
    for y in 0..h {
        for (ox, taps) in xt.iter().enumerate() {
            for ch in 0..c {
                rows[(y * out_w + ox) * c + ch] = taps.iter().map(|&(x, wt)| wt * img.get(y, x, ch) as f64).sum();
            }
        }
    }
    let mut out = Image::zeros(out_h, out_w, c);
    for (oy, taps) in yt.iter().enumerate() {
        for ox in 0..out_w {
            for ch in 0..c {
                let v: f64 = taps.iter().map(|&(y, wt)| wt * rows[(y * out_w + ox) * c + ch]).sum();
                out.set(oy, ox, ch, v.clamp(0.0, 1.0) as f32);
            }
        }
    }
    out
}

/// Decimate by an integer factor `s`; output is `(H/s) × (W/s)`, clamped to [0, 1].
pub fn bicubic_downsample(img: &Image, s: usize) -> Result<Image> {
    ensure!(s >= 1, Argument, "scale must be positive");
    let (h, w, _) = img.dims();
    ensure!(h % s == 0 && w % s == 0, Dimension, "{}×{} is not divisible by {}", h, w, s);
    if s == 1 {
        return Ok(img.clone());
    }
    Ok(resize(img, h / s, w / s))
}

/// Enlarge by an integer factor `s`, clamped to [0, 1].
pub fn bicubic_upsample(img: &Image, s: usize) -> Result<Image> {
    ensure!(s >= 1, Argument, "scale must be positive");
    if s == 1 {
        return Ok(img.clone());
    }
    Ok(resize(img, img.height() * s, img.width() * s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Independent 2-D oracle: explicit Keys weights, normalised, summed over the full
    // kernel footprint without separable staging.
    fn oracle(img: &Image, s: usize) -> Vec<f64> {
        let keys = |x: f64| {
            let t = x.abs();
            if t <= 1.0 {
                1.5 * t * t * t - 2.5 * t * t + 1.0
            } else if t < 2.0 {
                -0.5 * t * t * t + 2.5 * t * t - 4.0 * t + 2.0
            } else {
                0.0
            }
        };
        let weights = |o: usize, n: usize| -> Vec<(usize, f64)> {
            let center = (o as f64 + 0.5) * s as f64 - 0.5;
            let mut ws = Vec::new();
            for j in -(4 * s as isize)..(n as isize + 4 * s as isize) {
                let wt = keys((center - j as f64) / s as f64);
                if wt != 0.0 {
                    let mut k = j;
                    if k < 0 {
                        k = -k - 1;
                    }
                    if k >= n as isize {
                        k = 2 * n as isize - 1 - k;
                    }
                    ws.push((k as usize, wt));
                }
            }
            let t: f64 = ws.iter().map(|w| w.1).sum();
            ws.into_iter().map(|(k, w)| (k, w / t)).collect()
        };
        let (h, w, _) = img.dims();
        let mut out = Vec::new();
        for oy in 0..h / s {
            for ox in 0..w / s {
                let mut acc = 0.0;
                for &(y, wy) in &weights(oy, h) {
                    for &(x, wx) in &weights(ox, w) {
                        acc += wy * wx * img.get(y, x, 0) as f64;
                    }
                }
                out.push(acc.clamp(0.0, 1.0));
            }
        }
        out
    }

    #[test]
    fn constant_and_identity() {
        let img = Image::from_fn(8, 12, 3, |_, _, _| 0.3);
        let d = bicubic_downsample(&img, 4).unwrap();
        assert_eq!(d.dims(), (2, 3, 3));
        assert!(d.data().iter().all(|&v| (v - 0.3).abs() < 1e-6));
        let r = Image::from_fn(5, 5, 1, |y, x, _| (y * 5 + x) as f32 / 25.0);
        assert_eq!(bicubic_downsample(&r, 1).unwrap(), r);
    }

    #[test]
    fn ramp_matches_direct_convolution() {
        let img = Image::from_fn(8, 8, 1, |y, x, _| (x as f32 + 0.5 * y as f32) / 12.0);
        let d = bicubic_downsample(&img, 4).unwrap();
        for (got, want) in d.data().iter().zip(oracle(&img, 4)) {
            assert!((*got as f64 - want).abs() < 1e-6, "{got} vs {want}");
        }
    }

    #[test]
    fn rejects_indivisible() {
        let img = Image::zeros(8, 9, 1);
        assert!(matches!(bicubic_downsample(&img, 2), Err(crate::Error::Dimension(_))));
    }

    #[test]
    fn upsample_constant() {
        let img = Image::from_fn(4, 4, 1, |_, _, _| 0.6);
        let u = bicubic_upsample(&img, 2).unwrap();
        assert_eq!(u.dims(), (8, 8, 1));
        assert!(u.data().iter().all(|&v| (v - 0.6).abs() < 1e-6));
    }

    proptest! {
        #[test]
        fn downsample_commutes_with_mirroring(vals in proptest::collection::vec(0.0f32..1.0, 64), s in prop::sample::select(vec![2usize, 4])) {
            let img = Image::new(8, 8, 1, vals).unwrap();
            let a = bicubic_downsample(&img.mirror_horizontal(), s).unwrap();
            let b = bicubic_downsample(&img, s).unwrap().mirror_horizontal();
            for (x, y) in a.data().iter().zip(b.data()) {
                prop_assert!((x - y).abs() <= 1e-6);
            }
        }

        #[test]
        fn random_images_match_oracle(vals in proptest::collection::vec(0.0f32..1.0, 144)) {
            let img = Image::new(12, 12, 1, vals).unwrap();
            let d = bicubic_downsample(&img, 3).unwrap();
            for (got, want) in d.data().iter().zip(oracle(&img, 3)) {
                prop_assert!((*got as f64 - want).abs() < 1e-6);
            }
        }
    }
}
