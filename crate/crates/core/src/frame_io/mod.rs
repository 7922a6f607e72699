//! Frames, flows, weights and dataset manifests on disk, plus bicubic resampling.

mod bicubic;
mod flo;
mod image;
mod manifest;
mod pnm;
mod weights;

pub use bicubic::{axis_taps, bicubic_downsample, bicubic_upsample, cubic, reflect_symmetric};
pub use flo::{decode_flo, encode_flo, read_flo, write_flo, FLO_TAG};
pub use image::{FlowField, FrameSequence, Image};
pub use manifest::{load_frames, parse_flow_key, ClipEntry, DatasetManifest};
pub use pnm::{decode_pnm, encode_pnm, read_pnm, write_pnm};
pub use weights::{decode_weights, encode_weights, load_checkpoint, load_weights, save_weights, WEIGHTS_MAGIC};
