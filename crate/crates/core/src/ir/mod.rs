//! Quantized CNN graph IR.
//!
//! A [`QuantizedGraph`] is an ordered list of layers over int8 feature tensors.
//! Every tensor is produced exactly once; tensor `0` is the graph input. Weights
//! are int8 and batch-norm parameters are kept pre-folded as per-channel fp32
//! `(scale, bias)` pairs applied to the int32 accumulator.

mod backbone;
mod builder;
mod fuzz;

pub use backbone::{
    build_backbone, random_model, BackboneConfig, BlockKind, BlockSpec, DlbMerge, GraphDocument,
    StageSpec, StemLayer,
};
pub use builder::{build_dlb, build_lb, GraphBuilder, WeightInit};
pub use fuzz::random_graph;

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

pub type TensorId = usize;
pub type BlobId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IrError {
    #[error("invalid tensor shape {h}x{w}x{c}")]
    InvalidShape { h: usize, w: usize, c: usize },
    #[error("invalid channel counts: {0}")]
    InvalidChannels(String),
    #[error("invalid stride {0}")]
    InvalidStride(u8),
    #[error("invalid layer: {0}")]
    InvalidLayer(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("tensor {0} is used before it is produced")]
    UndefinedTensor(TensorId),
    #[error("blob {0} is missing or has the wrong kind")]
    BadBlob(BlobId),
    #[error("blob {0} is never referenced")]
    UnusedBlob(BlobId),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("feature of {bytes} bytes exceeds the {limit}-byte feature banks b0/b1")]
    FeatureBudget { bytes: usize, limit: usize },
}

/// Height, width and channel count of an int8 feature tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TensorShape {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl TensorShape {
    pub const MAX_HW: usize = 256;
    pub const MAX_C: usize = 1024;

    pub fn new(h: usize, w: usize, c: usize) -> Result<Self, IrError> {
        let shape = Self { h, w, c };
        shape.check()?;
        Ok(shape)
    }

    pub fn check(&self) -> Result<(), IrError> {
        let ok = (1..=Self::MAX_HW).contains(&self.h)
            && (1..=Self::MAX_HW).contains(&self.w)
            && (1..=Self::MAX_C).contains(&self.c);
        if ok {
            Ok(())
        } else {
            Err(IrError::InvalidShape { h: self.h, w: self.w, c: self.c })
        }
    }

    pub fn pixels(&self) -> usize {
        self.h * self.w
    }

    /// One byte per element.
    pub fn bytes(&self) -> usize {
        self.h * self.w * self.c
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.h, self.w, self.c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv3x3,
    Conv1x1,
    Dwconv3x3,
    Bn,
    Relu,
    Add,
    Move,
    Dsam,
    Usam,
    Maxp,
    Gap,
    /// Channel concatenation of two tensors. Graph-level only; lowered to `move`s.
    Concat,
}

impl LayerKind {
    pub fn is_conv(self) -> bool {
        matches!(self, LayerKind::Conv3x3 | LayerKind::Conv1x1 | LayerKind::Dwconv3x3)
    }

    pub fn arity(self) -> usize {
        match self {
            LayerKind::Add | LayerKind::Concat => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv3x3 => "conv3x3",
            LayerKind::Conv1x1 => "conv1x1",
            LayerKind::Dwconv3x3 => "dwconv3x3",
            LayerKind::Bn => "bn",
            LayerKind::Relu => "relu",
            LayerKind::Add => "add",
            LayerKind::Move => "move",
            LayerKind::Dsam => "dsam",
            LayerKind::Usam => "usam",
            LayerKind::Maxp => "maxp",
            LayerKind::Gap => "gap",
            LayerKind::Concat => "concat",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerOp {
    pub kind: LayerKind,
    pub stride: u8,
    pub bn_fused: bool,
    pub relu_fused: bool,
    pub weight_id: Option<BlobId>,
    pub bnparam_id: Option<BlobId>,
}

impl LayerOp {
    pub fn simple(kind: LayerKind) -> Self {
        Self { kind, stride: 1, bn_fused: false, relu_fused: false, weight_id: None, bnparam_id: None }
    }

    pub fn check(&self) -> Result<(), IrError> {
        if self.stride != 1 && self.stride != 2 {
            return Err(IrError::InvalidStride(self.stride));
        }
        let k = self.kind;
        if self.stride == 2
            && !(k.is_conv() || matches!(k, LayerKind::Maxp | LayerKind::Dsam))
        {
            return Err(IrError::InvalidLayer(format!("{} cannot carry stride 2", k.name())));
        }
        if (self.bn_fused || self.relu_fused) && !k.is_conv() {
            return Err(IrError::InvalidLayer(format!("{} cannot carry fused bn/relu", k.name())));
        }
        if k.is_conv() != self.weight_id.is_some() {
            return Err(IrError::InvalidLayer(format!(
                "{} weight reference must be present iff the layer is a convolution",
                k.name()
            )));
        }
        let needs_bn = self.bn_fused || k == LayerKind::Bn;
        if needs_bn != self.bnparam_id.is_some() {
            return Err(IrError::InvalidLayer(format!(
                "{} bn parameter reference does not match its bn flag",
                k.name()
            )));
        }
        Ok(())
    }
}

/// Kernel dimensions of a weight blob. Depthwise kernels use `in_c == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightShape {
    pub out_c: usize,
    pub in_c: usize,
    pub k: usize,
}

impl WeightShape {
    pub fn len(&self) -> usize {
        self.out_c * self.in_c * self.k * self.k
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// int8 kernel stored `(out_c, in_c, k, k)` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightBlob {
    pub shape: WeightShape,
    pub data: Vec<i8>,
}

impl WeightBlob {
    pub fn new(shape: WeightShape, data: Vec<i8>) -> Result<Self, IrError> {
        if data.len() != shape.len() {
            return Err(IrError::InvalidLayer(format!(
                "weight blob holds {} values but shape needs {}",
                data.len(),
                shape.len()
            )));
        }
        Ok(Self { shape, data })
    }
}

/// Folded batch-norm: `y = acc * scale[c] + bias[c]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnParams {
    pub scale: Vec<f32>,
    pub bias: Vec<f32>,
}

impl BnParams {
    pub const BYTES_PER_CHANNEL: usize = 8;

    pub fn new(scale: Vec<f32>, bias: Vec<f32>) -> Result<Self, IrError> {
        if scale.len() != bias.len() {
            return Err(IrError::InvalidLayer("bn scale/bias length mismatch".into()));
        }
        if scale.iter().any(|s| !s.is_finite() || *s == 0.0) || bias.iter().any(|b| !b.is_finite())
        {
            return Err(IrError::InvalidLayer("bn scales must be finite and nonzero".into()));
        }
        Ok(Self { scale, bias })
    }

    pub fn identity(channels: usize) -> Self {
        Self { scale: vec![1.0; channels], bias: vec![0.0; channels] }
    }

    pub fn channels(&self) -> usize {
        self.scale.len()
    }

    /// Little-endian `(scale, bias)` pairs, the layout consumed by the `par` operand.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.channels() * Self::BYTES_PER_CHANNEL);
        for (s, b) in self.scale.iter().zip(&self.bias) {
            out.extend_from_slice(&s.to_le_bytes());
            out.extend_from_slice(&b.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IrError> {
        if !bytes.len().is_multiple_of(Self::BYTES_PER_CHANNEL) {
            return Err(IrError::InvalidLayer("bn parameter bytes not a multiple of 8".into()));
        }
        let mut scale = Vec::new();
        let mut bias = Vec::new();
        for pair in bytes.chunks_exact(8) {
            scale.push(f32::from_le_bytes(pair[0..4].try_into().unwrap()));
            bias.push(f32::from_le_bytes(pair[4..8].try_into().unwrap()));
        }
        Self::new(scale, bias)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Blob {
    Weights(WeightBlob),
    Bn(BnParams),
}

impl Blob {
    pub fn byte_len(&self) -> usize {
        match self {
            Blob::Weights(w) => w.data.len(),
            Blob::Bn(p) => p.channels() * BnParams::BYTES_PER_CHANNEL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub op: LayerOp,
    pub inputs: Vec<TensorId>,
    pub output: TensorId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedGraph {
    pub input: TensorShape,
    pub layers: Vec<Layer>,
    pub output: TensorId,
    pub blobs: Vec<Blob>,
    /// Shape of every tensor, indexed by id. Tensor 0 is the input.
    pub shapes: Vec<TensorShape>,
}

impl QuantizedGraph {
    pub const INPUT: TensorId = 0;

    /// A graph with no layers whose output is its input.
    pub fn identity(input: TensorShape) -> Self {
        Self { input, layers: Vec::new(), output: Self::INPUT, blobs: Vec::new(), shapes: vec![input] }
    }

    pub fn shape(&self, id: TensorId) -> TensorShape {
        self.shapes[id]
    }

    pub fn output_shape(&self) -> TensorShape {
        self.shapes[self.output]
    }

    pub fn weights(&self, id: BlobId) -> Result<&WeightBlob, IrError> {
        match self.blobs.get(id) {
            Some(Blob::Weights(w)) => Ok(w),
            _ => Err(IrError::BadBlob(id)),
        }
    }

    pub fn bn_params(&self, id: BlobId) -> Result<&BnParams, IrError> {
        match self.blobs.get(id) {
            Some(Blob::Bn(p)) => Ok(p),
            _ => Err(IrError::BadBlob(id)),
        }
    }

    /// Number of layers reading each tensor.
    pub fn use_counts(&self) -> Vec<usize> {
        let mut uses = vec![0; self.shapes.len()];
        for layer in &self.layers {
            for &t in &layer.inputs {
                uses[t] += 1;
            }
        }
        uses
    }

    /// Re-derives every tensor shape and checks the DAG and blob invariants.
    pub fn validate(&self) -> Result<(), IrError> {
        self.input.check()?;
        let mut shapes: Vec<Option<TensorShape>> = vec![None; self.shapes.len()];
        shapes[Self::INPUT] = Some(self.input);
        let mut referenced = vec![false; self.blobs.len()];
        for layer in &self.layers {
            layer.op.check()?;
            if layer.inputs.len() != layer.op.kind.arity() {
                return Err(IrError::InvalidLayer(format!(
                    "{} takes {} inputs",
                    layer.op.kind.name(),
                    layer.op.kind.arity()
                )));
            }
            let mut ins = Vec::with_capacity(layer.inputs.len());
            for &t in &layer.inputs {
                match shapes.get(t).copied().flatten() {
                    Some(s) => ins.push(s),
                    None => return Err(IrError::UndefinedTensor(t)),
                }
            }
            for id in [layer.op.weight_id, layer.op.bnparam_id].into_iter().flatten() {
                if id >= referenced.len() {
                    return Err(IrError::BadBlob(id));
                }
                referenced[id] = true;
            }
            let out = infer_shape(&layer.op, &ins, self)?;
            match shapes.get_mut(layer.output) {
                Some(slot @ None) => *slot = Some(out),
                _ => {
                    return Err(IrError::InvalidLayer(format!(
                        "tensor {} produced twice or out of range",
                        layer.output
                    )))
                }
            }
            if self.shapes[layer.output] != out {
                return Err(IrError::ShapeMismatch(format!(
                    "tensor {} recorded as {} but infers to {}",
                    layer.output, self.shapes[layer.output], out
                )));
            }
        }
        if shapes.get(self.output).copied().flatten().is_none() {
            return Err(IrError::UndefinedTensor(self.output));
        }
        if let Some(unused) = referenced.iter().position(|r| !r) {
            return Err(IrError::UnusedBlob(unused));
        }
        Ok(())
    }
}

fn halve(n: usize) -> usize {
    n.div_ceil(2)
}

/// Output shape of one layer applied to `inputs`.
pub fn infer_shape(
    op: &LayerOp,
    inputs: &[TensorShape],
    graph: &QuantizedGraph,
) -> Result<TensorShape, IrError> {
    let x = inputs[0];
    let s = op.stride as usize;
    let out = match op.kind {
        LayerKind::Conv3x3 | LayerKind::Conv1x1 => {
            let w = graph.weights(op.weight_id.ok_or(IrError::BadBlob(usize::MAX))?)?;
            let k = if op.kind == LayerKind::Conv3x3 { 3 } else { 1 };
            if w.shape.in_c != x.c || w.shape.k != k {
                return Err(IrError::ShapeMismatch(format!(
                    "{} weights {:?} do not match input {}",
                    op.kind.name(),
                    w.shape,
                    x
                )));
            }
            TensorShape { h: x.h.div_ceil(s), w: x.w.div_ceil(s), c: w.shape.out_c }
        }
        LayerKind::Dwconv3x3 => {
            let w = graph.weights(op.weight_id.ok_or(IrError::BadBlob(usize::MAX))?)?;
            if w.shape.out_c != x.c || w.shape.in_c != 1 || w.shape.k != 3 {
                return Err(IrError::ShapeMismatch(format!(
                    "dwconv weights {:?} do not match input {}",
                    w.shape, x
                )));
            }
            TensorShape { h: x.h.div_ceil(s), w: x.w.div_ceil(s), c: x.c }
        }
        LayerKind::Bn | LayerKind::Relu | LayerKind::Move => x,
        LayerKind::Add => {
            if inputs[1] != x {
                return Err(IrError::ShapeMismatch(format!("add of {} and {}", x, inputs[1])));
            }
            x
        }
        LayerKind::Concat => {
            let y = inputs[1];
            if (x.h, x.w) != (y.h, y.w) {
                return Err(IrError::ShapeMismatch(format!("concat of {} and {}", x, y)));
            }
            TensorShape { h: x.h, w: x.w, c: x.c + y.c }
        }
        LayerKind::Dsam | LayerKind::Maxp => TensorShape { h: halve(x.h), w: halve(x.w), c: x.c },
        LayerKind::Usam => TensorShape { h: x.h * 2, w: x.w * 2, c: x.c },
        LayerKind::Gap => TensorShape { h: 1, w: 1, c: x.c },
    };
    if op.kind == LayerKind::Bn || op.bn_fused {
        let p = graph.bn_params(op.bnparam_id.ok_or(IrError::BadBlob(usize::MAX))?)?;
        if p.channels() != out.c {
            return Err(IrError::ShapeMismatch(format!(
                "bn has {} channels, tensor has {}",
                p.channels(),
                out.c
            )));
        }
    }
    out.check()?;
    Ok(out)
}

/// Parameter storage of a graph in bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ParamCount {
    pub weight_bytes: usize,
    pub bn_bytes: usize,
    pub total_bytes: usize,
}

impl std::ops::Add for ParamCount {
    type Output = ParamCount;

    fn add(self, rhs: Self) -> Self {
        ParamCount {
            weight_bytes: self.weight_bytes + rhs.weight_bytes,
            bn_bytes: self.bn_bytes + rhs.bn_bytes,
            total_bytes: self.total_bytes + rhs.total_bytes,
        }
    }
}

pub fn param_count(g: &QuantizedGraph) -> ParamCount {
    let mut count = ParamCount::default();
    for blob in &g.blobs {
        match blob {
            Blob::Weights(w) => count.weight_bytes += w.data.len(),
            Blob::Bn(p) => count.bn_bytes += p.channels() * BnParams::BYTES_PER_CHANNEL,
        }
    }
    count.total_bytes = count.weight_bytes + count.bn_bytes;
    count
}

/// Largest feature footprint: every produced tensor individually, and the
/// operands of each `add`/`concat` together since both must be resident at
/// once. The input image only counts when the graph has no layers.
pub fn max_feature_bytes(g: &QuantizedGraph) -> usize {
    if g.layers.is_empty() {
        return g.input.bytes();
    }
    let single = g.shapes[1..].iter().map(TensorShape::bytes).max().unwrap_or(0);
    let joint = g
        .layers
        .iter()
        .filter(|l| matches!(l.op.kind, LayerKind::Add | LayerKind::Concat))
        .map(|l| {
            let mut ids = l.inputs.clone();
            ids.dedup();
            ids.iter().map(|&t| g.shapes[t].bytes()).sum::<usize>()
        })
        .max()
        .unwrap_or(0);
    single.max(joint)
}
