use serde::{Deserialize, Serialize};

use super::{
    max_feature_bytes, GraphBuilder, IrError, LayerKind, LayerOp, QuantizedGraph, TensorShape,
    WeightInit,
};

/// Largest feature map the backbone may produce, matching one feature bank.
pub const FEATURE_BUDGET: usize = 128 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    Lb,
    Dlb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DlbMerge {
    #[default]
    Add,
    Concat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSpec {
    pub kind: BlockKind,
    pub in_c: usize,
    pub mid_c: usize,
    pub out_c: usize,
    pub stride: u8,
    pub merge: DlbMerge,
}

impl BlockSpec {
    pub fn check(&self, expect: BlockKind) -> Result<(), IrError> {
        if self.kind != expect {
            return Err(IrError::InvalidConfig(format!("expected a {:?} block", expect)));
        }
        if self.stride != 1 && self.stride != 2 {
            return Err(IrError::InvalidStride(self.stride));
        }
        for c in [self.in_c, self.mid_c, self.out_c] {
            if !(1..=TensorShape::MAX_C).contains(&c) {
                return Err(IrError::InvalidChannels(format!("channel count {c} out of range")));
            }
        }
        // depthwise layers preserve channels, so the pointwise width is the block width
        if self.mid_c != self.out_c {
            return Err(IrError::InvalidChannels(format!(
                "mid channels {} must equal out channels {}",
                self.mid_c, self.out_c
            )));
        }
        if self.kind == BlockKind::Dlb && self.stride == 1 {
            match self.merge {
                DlbMerge::Add if self.in_c != self.mid_c => {
                    return Err(IrError::InvalidChannels(format!(
                        "add-merged shortcut needs in_c == mid_c == out_c, got {}/{}/{}",
                        self.in_c, self.mid_c, self.out_c
                    )))
                }
                DlbMerge::Concat if self.in_c + self.out_c > TensorShape::MAX_C => {
                    return Err(IrError::InvalidChannels(format!(
                        "concat output {} exceeds {} channels",
                        self.in_c + self.out_c,
                        TensorShape::MAX_C
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Channels leaving the block.
    pub fn output_channels(&self) -> usize {
        match (self.kind, self.merge, self.stride) {
            (BlockKind::Dlb, DlbMerge::Concat, 1) => self.in_c + self.out_c,
            _ => self.out_c,
        }
    }
}

fn default_stride() -> u8 {
    1
}

/// One stem layer in a backbone config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StemLayer {
    pub kind: LayerKind,
    #[serde(default = "default_stride")]
    pub stride: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_c: Option<usize>,
    #[serde(default)]
    pub bn: bool,
    #[serde(default)]
    pub relu: bool,
}

/// `n` repeated blocks of width `c`; only the first has stride `s`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpec {
    pub block: BlockKind,
    pub n: usize,
    pub c: usize,
    pub s: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mid: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub input: TensorShape,
    pub stem: Vec<StemLayer>,
    pub stages: Vec<StageSpec>,
    pub head_c: usize,
    #[serde(default)]
    pub dlb_merge: DlbMerge,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self::etinynet()
    }
}

fn round_width(c: usize, alpha: f64) -> usize {
    (((c as f64 * alpha) / 8.0).round() as usize * 8).max(8)
}

impl BackboneConfig {
    /// The default EtinyNet-style backbone at 256x256 RGB.
    pub fn etinynet() -> Self {
        let stage = |block, n, c, s| StageSpec { block, n, c, s, mid: None };
        Self {
            input: TensorShape { h: 256, w: 256, c: 3 },
            stem: vec![StemLayer {
                kind: LayerKind::Conv3x3,
                stride: 2,
                out_c: Some(8),
                bn: true,
                relu: true,
            }],
            stages: vec![
                stage(BlockKind::Lb, 4, 32, 2),
                stage(BlockKind::Lb, 4, 128, 2),
                stage(BlockKind::Dlb, 3, 192, 2),
                stage(BlockKind::Dlb, 2, 256, 2),
            ],
            head_c: 512,
            dlb_merge: DlbMerge::Add,
        }
    }

    /// Width-multiplied copy; every channel count rounds to the nearest
    /// multiple of 8, minimum 8.
    pub fn scaled(&self, alpha: f64) -> Self {
        let mut cfg = self.clone();
        for layer in &mut cfg.stem {
            layer.out_c = layer.out_c.map(|c| round_width(c, alpha));
        }
        for stage in &mut cfg.stages {
            stage.c = round_width(stage.c, alpha);
            stage.mid = stage.mid.map(|c| round_width(c, alpha));
        }
        cfg.head_c = round_width(cfg.head_c, alpha);
        cfg
    }

    pub fn check(&self) -> Result<(), IrError> {
        self.input.check()?;
        let mut seen_dlb = false;
        for stage in &self.stages {
            if stage.n == 0 {
                return Err(IrError::InvalidConfig("stage with zero blocks".into()));
            }
            match stage.block {
                BlockKind::Dlb => seen_dlb = true,
                BlockKind::Lb if seen_dlb => {
                    return Err(IrError::InvalidConfig("LB stage after a DLB stage".into()))
                }
                BlockKind::Lb => {}
            }
        }
        if !(1..=TensorShape::MAX_C).contains(&self.head_c) {
            return Err(IrError::InvalidChannels(format!("head channels {}", self.head_c)));
        }
        Ok(())
    }
}

/// Structured-text graph document: a backbone config plus where its weights
/// come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    #[serde(flatten)]
    pub config: BackboneConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Path of a weight image whose blobs replace the seeded ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<String>,
}

impl GraphDocument {
    pub fn new(config: BackboneConfig) -> Self {
        Self { config, width: None, seed: None, weights: None }
    }

    pub fn from_json(text: &str) -> Result<Self, IrError> {
        serde_json::from_str(text).map_err(|e| IrError::InvalidConfig(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph document serializes")
    }

    /// Config with the width multiplier applied.
    pub fn effective_config(&self) -> BackboneConfig {
        match self.width {
            Some(alpha) => self.config.scaled(alpha),
            None => self.config.clone(),
        }
    }
}

/// Stem, stages in order, 1x1 head conv, global average pooling.
pub fn build_backbone(cfg: &BackboneConfig, init: WeightInit) -> Result<QuantizedGraph, IrError> {
    cfg.check()?;
    let mut b = GraphBuilder::new(cfg.input, init);
    let mut x = b.input();
    for layer in &cfg.stem {
        x = match layer.kind {
            LayerKind::Conv3x3 | LayerKind::Conv1x1 => {
                let k = if layer.kind == LayerKind::Conv3x3 { 3 } else { 1 };
                let out_c = layer
                    .out_c
                    .ok_or_else(|| IrError::InvalidConfig("stem conv needs out_c".into()))?;
                b.conv(x, k, out_c, layer.stride, layer.bn, layer.relu)?
            }
            LayerKind::Dwconv3x3 => b.dwconv(x, layer.stride, layer.bn, layer.relu)?,
            LayerKind::Bn => b.bn(x)?,
            LayerKind::Add | LayerKind::Concat => {
                return Err(IrError::InvalidConfig("stem layers must be unary".into()))
            }
            kind => {
                let op = LayerOp { stride: layer.stride, ..LayerOp::simple(kind) };
                b.push(op, vec![x])?
            }
        };
    }
    for stage in &cfg.stages {
        for i in 0..stage.n {
            let spec = BlockSpec {
                kind: stage.block,
                in_c: b.shape(x).c,
                mid_c: stage.mid.unwrap_or(stage.c),
                out_c: stage.c,
                stride: if i == 0 { stage.s } else { 1 },
                merge: cfg.dlb_merge,
            };
            x = b.block(x, &spec)?;
        }
    }
    let head = b.conv(x, 1, cfg.head_c, 1, true, true)?;
    let out = b.gap(head)?;
    let g = b.finish(out)?;
    let peak = max_feature_bytes(&g);
    if peak > FEATURE_BUDGET {
        return Err(IrError::FeatureBudget { bytes: peak, limit: FEATURE_BUDGET });
    }
    Ok(g)
}

/// Backbone with seeded pseudo-random weights. Same seed, same bytes.
pub fn random_model(seed: u64, cfg: &BackboneConfig) -> Result<QuantizedGraph, IrError> {
    build_backbone(cfg, WeightInit::random(seed))
}
