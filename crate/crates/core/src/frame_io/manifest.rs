use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_flo, read_pnm, FlowField, FrameSequence};
use crate::error::{Error, Result};

/// Dataset description: `{clips: [{frames: [...], flows: {"t->t+k": path}, scale}]}`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DatasetManifest {
    pub clips: Vec<ClipEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ClipEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// High-resolution frames in temporal order.
    pub frames: Vec<PathBuf>,
    /// Low-resolution flows keyed `"from->to"` by frame index.
    #[serde(default)]
    pub flows: BTreeMap<String, PathBuf>,
    pub scale: usize,
}

pub fn parse_flow_key(key: &str) -> Result<(usize, usize)> {
    let bad = || Error::Format(format!("flow key {key:?} is not of the form \"t->u\""));
    let (a, b) = key.split_once("->").ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

impl ClipEntry {
    pub fn display_name(&self, index: usize) -> String {
        self.name.clone().unwrap_or_else(|| format!("clip{index:03}"))
    }

    pub fn flow_path(&self, from: usize, to: usize) -> Option<&Path> {
        self.flows
            .iter()
            .find(|(k, _)| parse_flow_key(k).ok() == Some((from, to)))
            .map(|(_, p)| p.as_path())
    }

    pub fn load_flow(&self, from: usize, to: usize) -> Result<Option<FlowField>> {
        self.flow_path(from, to).map(read_flo).transpose()
    }
}

impl DatasetManifest {
    /// Reads a manifest, resolving relative paths against its directory and
    /// checking that every referenced file exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for clip in &mut m.clips {
            for f in clip.frames.iter_mut().chain(clip.flows.values_mut()) {
                if f.is_relative() {
                    *f = base.join(&*f);
                }
            }
        }
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, clip) in self.clips.iter().enumerate() {
            if !(2..=4).contains(&clip.scale) {
                return Err(Error::Config(format!("clip {i}: scale {} not in {{2,3,4}}", clip.scale)));
            }
            if clip.frames.is_empty() {
                return Err(Error::Config(format!("clip {i} lists no frames")));
            }
            for (k, _) in &clip.flows {
                let (a, b) = parse_flow_key(k)?;
                if a >= clip.frames.len() || b >= clip.frames.len() {
                    return Err(Error::Config(format!("clip {i}: flow {k} refers to a missing frame")));
                }
            }
            for f in clip.frames.iter().chain(clip.flows.values()) {
                if !f.exists() {
                    return Err(Error::io(f, "referenced file does not exist"));
                }
            }
        }
        Ok(())
    }
}

/// Loads every frame of a clip; the reference index is the middle frame.
pub fn load_frames(entry: &ClipEntry) -> Result<FrameSequence> {
    let mut frames = Vec::with_capacity(entry.frames.len());
    for path in &entry.frames {
        let img = read_pnm(path)?;
        if let Some(first) = frames.first() {
            if !img.same_dims(first) {
                return Err(Error::io(
                    path,
                    format!("frame is {:?}, earlier frames are {:?}", img.dims(), first.dims()),
                ));
            }
        }
        frames.push(img);
    }
    let n = frames.len();
    FrameSequence::new(frames, n / 2)
}
