use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::align::AlignmentMode;
use crate::error::{ensure, Result};

fn default_feature_depth() -> usize {
    5
}

fn default_true() -> bool {
    true
}

fn default_mlp_ratio() -> usize {
    2
}

fn default_image_channels() -> usize {
    1
}

/// Architecture hyperparameters. Serialised as JSON with these field names.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Supporting frames on each side of the reference (clip length `2n + 1`).
    pub n: usize,
    /// Number of multi-frame self-attention blocks.
    pub blocks: usize,
    /// Window (and patch) side `M`.
    pub window: usize,
    /// Feature channels `C`.
    pub channels: usize,
    pub heads: usize,
    /// Blocks per residual group.
    pub shortcut_every: usize,
    pub scale: usize,
    #[serde(default = "default_image_channels")]
    pub image_channels: usize,
    pub alignment: AlignmentMode,
    /// Residual blocks after the shallow convolution on feature-level alignment paths.
    #[serde(default = "default_feature_depth")]
    pub feature_depth: usize,
    #[serde(default = "default_true")]
    pub shift_windows: bool,
    #[serde(default = "default_mlp_ratio")]
    pub mlp_ratio: usize,
}

impl ModelConfig {
    /// Small configuration used by tests and examples.
    pub fn tiny(n: usize, window: usize, channels: usize, heads: usize) -> Self {
        Self {
            n,
            blocks: 2,
            window,
            channels,
            heads,
            shortcut_every: 2,
            scale: 2,
            image_channels: 1,
            alignment: AlignmentMode::None,
            feature_depth: 5,
            shift_windows: true,
            mlp_ratio: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.window >= 1, Config, "window size must be at least 1");
        ensure!(self.blocks >= 1, Config, "at least one attention block is required");
        ensure!(self.channels >= 1 && self.heads >= 1, Config, "channels and heads must be positive");
        ensure!(
            self.channels % self.heads == 0,
            Config,
            "{} channels are not divisible by {} heads",
            self.channels,
            self.heads
        );
        ensure!((2..=4).contains(&self.scale), Config, "scale {} not in {{2,3,4}}", self.scale);
        ensure!(self.shortcut_every >= 1, Config, "shortcut_every must be positive");
        ensure!(
            self.image_channels == 1 || self.image_channels == 3,
            Config,
            "image_channels must be 1 or 3"
        );
        ensure!(self.mlp_ratio >= 1, Config, "mlp_ratio must be positive");
        Ok(())
    }

    pub fn frames(&self) -> usize {
        2 * self.n + 1
    }

    pub fn head_dim(&self) -> usize {
        self.channels / self.heads
    }

    /// Whether the feature extractor carries the extra residual blocks.
    pub fn uses_feature_blocks(&self) -> bool {
        self.alignment.position() == crate::align::Position::Feature
    }

    /// Cyclic shift applied before partitioning in block `b`.
    pub fn shift_for_block(&self, b: usize) -> usize {
        if self.shift_windows && b % 2 == 1 {
            self.window / 2
        } else {
            0
        }
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
