//! Backward warping (bilinear, nearest) and patch alignment.
//!
//! Every operator is compiled into a [`RowMap`] sampling plan over the pixels
//! of an `H×W` grid, so the same plan moves images, feature maps on a gradient
//! tape, or anything else stored as pixel rows.

mod patch;

use serde::{Deserialize, Serialize};

pub use patch::{patch_align, patch_mean_flow, patch_plan, PatchFlowGrid};

use crate::error::{ensure, Error, Result};
use crate::frame_io::{FlowField, FrameSequence, Image};
use crate::numerics::RowMap;

/// Where and how supporting frames are brought onto the reference grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentMode {
    None,
    ImageBilinear,
    ImageNearest,
    FeatureBilinear,
    FeatureNearest,
    PatchImage,
    PatchFeature,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Position {
    None,
    Image,
    Feature,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Resampling {
    None,
    Bilinear,
    Nearest,
    Patch,
}

impl AlignmentMode {
    pub const ALL: [AlignmentMode; 7] = [
        AlignmentMode::None,
        AlignmentMode::ImageBilinear,
        AlignmentMode::ImageNearest,
        AlignmentMode::FeatureBilinear,
        AlignmentMode::FeatureNearest,
        AlignmentMode::PatchImage,
        AlignmentMode::PatchFeature,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AlignmentMode::None => "none",
            AlignmentMode::ImageBilinear => "image_bilinear",
            AlignmentMode::ImageNearest => "image_nearest",
            AlignmentMode::FeatureBilinear => "feature_bilinear",
            AlignmentMode::FeatureNearest => "feature_nearest",
            AlignmentMode::PatchImage => "patch_image",
            AlignmentMode::PatchFeature => "patch_feature",
        }
    }

    pub fn position(self) -> Position {
        match self {
            AlignmentMode::None => Position::None,
            AlignmentMode::ImageBilinear | AlignmentMode::ImageNearest | AlignmentMode::PatchImage => Position::Image,
            _ => Position::Feature,
        }
    }

    pub fn resampling(self) -> Resampling {
        match self {
            AlignmentMode::None => Resampling::None,
            AlignmentMode::ImageBilinear | AlignmentMode::FeatureBilinear => Resampling::Bilinear,
            AlignmentMode::ImageNearest | AlignmentMode::FeatureNearest => Resampling::Nearest,
            AlignmentMode::PatchImage | AlignmentMode::PatchFeature => Resampling::Patch,
        }
    }

    pub fn needs_flow(self) -> bool {
        self != AlignmentMode::None
    }

    /// Sampling plan for one supporting frame, `None` for the identity.
    pub fn plan(self, flow: &FlowField, patch: usize) -> Result<Option<RowMap>> {
        Ok(match self.resampling() {
            Resampling::None => None,
            Resampling::Bilinear => Some(bilinear_plan(flow)),
            Resampling::Nearest => Some(nearest_plan(flow)),
            Resampling::Patch => Some(patch_plan(flow, patch)?),
        })
    }
}

impl std::str::FromStr for AlignmentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AlignmentMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown alignment mode {s:?}")))
    }
}

impl std::fmt::Display for AlignmentMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Rounds half away from zero.
#[inline]
pub fn round_half_away(x: f64) -> f64 {
    x.round()
}

fn check_shapes(img: &Image, flow: &FlowField) -> Result<()> {
    ensure!(
        img.height() == flow.height() && img.width() == flow.width(),
        Dimension,
        "image is {}×{}, flow is {}×{}",
        img.height(),
        img.width(),
        flow.height(),
        flow.width()
    );
    Ok(())
}

/// Bilinear sampling at `(x + u, y + v)` with the coordinate clamped to the image first.
pub fn bilinear_plan(flow: &FlowField) -> RowMap {
    let (h, w) = (flow.height(), flow.width());
    let rows = (0..h * w).map(|p| {
        let (y, x) = (p / w, p % w);
        let (u, v) = flow.at(y, x);
        let sx = (x as f64 + u as f64).clamp(0.0, (w - 1) as f64);
        let sy = (y as f64 + v as f64).clamp(0.0, (h - 1) as f64);
        let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
        let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
        [
            (y0 * w + x0, (1.0 - fx) * (1.0 - fy)),
            (y0 * w + x1, fx * (1.0 - fy)),
            (y1 * w + x0, (1.0 - fx) * fy),
            (y1 * w + x1, fx * fy),
        ]
        .into_iter()
        .filter(|&(_, wt)| wt != 0.0)
        .collect()
    });
    RowMap::weighted(h * w, rows)
}

/// Nearest sampling: each coordinate rounded half away from zero, then clamped.
pub fn nearest_plan(flow: &FlowField) -> RowMap {
    let (h, w) = (flow.height(), flow.width());
    RowMap::gather(
        h * w,
        (0..h * w).map(|p| {
            let (y, x) = (p / w, p % w);
            let (u, v) = flow.at(y, x);
            let sx = round_half_away(x as f64 + u as f64).clamp(0.0, (w - 1) as f64) as usize;
            let sy = round_half_away(y as f64 + v as f64).clamp(0.0, (h - 1) as f64) as usize;
            Some(sy * w + sx)
        }),
    )
}

/// Applies a pixel plan to an image.
pub fn apply_plan(img: &Image, plan: &RowMap) -> Result<Image> {
    let (h, w, c) = img.dims();
    ensure!(plan.src_rows() == h * w && plan.out_rows() == h * w, Dimension, "plan does not match a {}×{} image", h, w);
    Image::new(h, w, c, plan.apply(c, img.data()))
}

pub fn warp_bilinear(img: &Image, flow: &FlowField) -> Result<Image> {
    check_shapes(img, flow)?;
    apply_plan(img, &bilinear_plan(flow))
}

pub fn warp_nearest(img: &Image, flow: &FlowField) -> Result<Image> {
    check_shapes(img, flow)?;
    apply_plan(img, &nearest_plan(flow))
}

/// Checks that `flows` has a field for every supporting frame when `mode` needs one.
pub fn check_flows(len: usize, reference: usize, flows: &[Option<FlowField>], mode: AlignmentMode) -> Result<()> {
    if !mode.needs_flow() {
        return Ok(());
    }
    for i in (0..len).filter(|&i| i != reference) {
        ensure!(
            flows.get(i).is_some_and(Option::is_some),
            Argument,
            "mode {} needs a flow from the reference to frame {}",
            mode,
            i
        );
    }
    Ok(())
}

/// Aligns every supporting frame onto the reference with the resampler of `mode`.
///
/// `flows[i]` is the flow from the reference to frame `i`; the reference slot is ignored.
pub fn align_sequence(
    seq: &FrameSequence,
    flows: &[Option<FlowField>],
    mode: AlignmentMode,
    patch: usize,
) -> Result<FrameSequence> {
    check_flows(seq.len(), seq.reference(), flows, mode)?;
    if mode == AlignmentMode::None {
        return Ok(seq.clone());
    }
    let frames = seq
        .frames()
        .iter()
        .enumerate()
        .map(|(i, f)| {
            if i == seq.reference() {
                return Ok(f.clone());
            }
            let flow = flows[i].as_ref().expect("checked above");
            check_shapes(f, flow)?;
            match mode.plan(flow, patch)? {
                Some(plan) => apply_plan(f, &plan),
                None => Ok(f.clone()),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    FrameSequence::new(frames, seq.reference())
}
