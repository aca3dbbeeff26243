use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

/// Architecture hyperparameters. Shapes of every parameter follow from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Width `C` of the sequence features; the backbone emits `2C` channels.
    pub channels: usize,
    /// Sequence length `T`.
    pub steps: usize,
    /// Height of pooled RoI features.
    pub roi_height: usize,
    /// Channels of the first backbone stage; later stages double it.
    pub backbone_width: usize,
    /// Number of charset symbols (the CTC blank is added on top).
    pub charset_size: usize,
    pub max_word_len: usize,
    pub nms_iou: f64,
    pub score_thresh: f64,
    pub max_proposals: usize,
    /// Bilinear samples per RoI bin along each axis.
    pub roi_sampling: usize,
    /// Boxes whose largest side distance is at most this many pixels are
    /// assigned to the stride-4 level, the rest to stride 8.
    pub level_split: f64,
    /// Levels used for the PHOC representation.
    pub phoc_levels: Vec<usize>,
    /// Size word crops are resized to when a separate retrieval network
    /// encodes cropped detections.
    pub crop_height: usize,
    pub crop_width: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::desk(36)
    }
}

impl ModelConfig {
    /// Small enough to train on a single CPU core.
    pub fn desk(charset_size: usize) -> Self {
        ModelConfig {
            channels: 16,
            steps: 15,
            roi_height: 8,
            backbone_width: 8,
            charset_size,
            max_word_len: 32,
            nms_iou: 0.5,
            score_thresh: 0.3,
            max_proposals: 100,
            roi_sampling: 2,
            level_split: 32.0,
            phoc_levels: textseek_core::phoc::DEFAULT_LEVELS.to_vec(),
            crop_height: 32,
            crop_width: 128,
        }
    }

    /// Full-width features: `T = 15`, `C = 128`, so `T * C = 1920`.
    pub fn full(charset_size: usize) -> Self {
        ModelConfig {
            channels: 128,
            steps: 15,
            backbone_width: 64,
            ..ModelConfig::desk(charset_size)
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.steps * self.channels
    }

    /// Channels of the pyramid levels and the pooled RoI features.
    pub fn pyramid_channels(&self) -> usize {
        2 * self.channels
    }

    pub fn num_classes(&self) -> usize {
        self.charset_size + 1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.channels == 0 || self.channels % 2 != 0 {
            return bad(format!("C = {} must be positive and even", self.channels));
        }
        if self.steps < 2 {
            return bad(format!("T = {} must be at least 2", self.steps));
        }
        if self.roi_height == 0 || self.roi_height % 4 != 0 {
            return bad(format!("RoI height {} must be a positive multiple of 4", self.roi_height));
        }
        if self.backbone_width == 0 || self.charset_size == 0 || self.max_word_len == 0 || self.roi_sampling == 0 {
            return bad("backbone width, charset size, word length cap and RoI sampling must be positive".into());
        }
        if !(0.0..1.0).contains(&self.score_thresh) || !(self.nms_iou > 0.0 && self.nms_iou <= 1.0) {
            return bad("score threshold must lie in [0, 1) and NMS IoU in (0, 1]".into());
        }
        if self.crop_height == 0 || self.crop_width == 0 || self.crop_height % 8 != 0 || self.crop_width % 8 != 0 {
            return bad("crop size must be a positive multiple of 8".into());
        }
        if self.phoc_levels.is_empty() || self.phoc_levels.contains(&0) {
            return bad("PHOC levels must be non-empty and positive".into());
        }
        Ok(())
    }

    pub fn phoc_dim(&self) -> usize {
        self.phoc_levels.iter().sum::<usize>() * self.charset_size
    }
}
