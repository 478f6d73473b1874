use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    infer_shape, BlobId, BlockKind, BlockSpec, Blob, BnParams, DlbMerge, IrError, Layer, LayerKind,
    LayerOp, QuantizedGraph, TensorId, TensorShape, WeightBlob, WeightShape,
};

/// Source of weight and batch-norm values for newly created layers.
#[derive(Debug, Clone)]
pub enum WeightInit {
    /// Zero weights, unit scales, zero biases.
    Zeros,
    /// Uniform int8 weights, scales in `[0.001, 0.1]`, biases in `[-1, 1]`.
    Random(ChaCha8Rng),
    /// Uniform int8 weights with scales shrunk by fan-in so activations stay
    /// mostly unsaturated. Used for equivalence sweeps.
    FanIn(ChaCha8Rng),
}

impl WeightInit {
    pub fn random(seed: u64) -> Self {
        WeightInit::Random(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn fan_in(seed: u64) -> Self {
        WeightInit::FanIn(ChaCha8Rng::seed_from_u64(seed))
    }

    fn weights(&mut self, n: usize) -> Vec<i8> {
        match self {
            WeightInit::Zeros => vec![0; n],
            WeightInit::Random(rng) | WeightInit::FanIn(rng) => {
                (0..n).map(|_| rng.gen::<i8>()).collect()
            }
        }
    }

    fn bn(&mut self, channels: usize, fan_in: usize) -> BnParams {
        match self {
            WeightInit::Zeros => BnParams::identity(channels),
            WeightInit::Random(rng) => {
                let scale = (0..channels).map(|_| rng.gen_range(0.001f32..=0.1)).collect();
                let bias = (0..channels).map(|_| rng.gen_range(-1.0f32..=1.0)).collect();
                BnParams { scale, bias }
            }
            WeightInit::FanIn(rng) => {
                let base = 0.6 / (64.0 * (fan_in as f32).sqrt());
                let scale = (0..channels)
                    .map(|_| {
                        let s = base * rng.gen_range(0.5f32..=1.5);
                        if rng.gen_bool(0.1) { -s } else { s }
                    })
                    .collect();
                let bias = (0..channels).map(|_| rng.gen_range(-4.0f32..=4.0)).collect();
                BnParams { scale, bias }
            }
        }
    }
}

/// Incremental construction of a [`QuantizedGraph`] with shape tracking.
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    graph: QuantizedGraph,
    init: WeightInit,
}

impl GraphBuilder {
    pub fn new(input: TensorShape, init: WeightInit) -> Self {
        Self { graph: QuantizedGraph::identity(input), init }
    }

    pub fn input(&self) -> TensorId {
        QuantizedGraph::INPUT
    }

    pub fn shape(&self, t: TensorId) -> TensorShape {
        self.graph.shapes[t]
    }

    pub fn layer_count(&self) -> usize {
        self.graph.layers.len()
    }

    pub fn add_blob(&mut self, blob: Blob) -> BlobId {
        self.graph.blobs.push(blob);
        self.graph.blobs.len() - 1
    }

    /// Appends a layer after checking it against the current graph.
    pub fn push(&mut self, op: LayerOp, inputs: Vec<TensorId>) -> Result<TensorId, IrError> {
        op.check()?;
        if inputs.len() != op.kind.arity() {
            return Err(IrError::InvalidLayer(format!("{} takes {} inputs", op.kind.name(), op.kind.arity())));
        }
        let mut shapes = Vec::with_capacity(inputs.len());
        for &t in &inputs {
            shapes.push(*self.graph.shapes.get(t).ok_or(IrError::UndefinedTensor(t))?);
        }
        let out = infer_shape(&op, &shapes, &self.graph)?;
        let id = self.graph.shapes.len();
        self.graph.shapes.push(out);
        self.graph.layers.push(Layer { op, inputs, output: id });
        Ok(id)
    }

    fn new_weights(&mut self, shape: WeightShape) -> BlobId {
        let data = self.init.weights(shape.len());
        self.add_blob(Blob::Weights(WeightBlob { shape, data }))
    }

    fn new_bn(&mut self, channels: usize, fan_in: usize) -> BlobId {
        let p = self.init.bn(channels, fan_in);
        self.add_blob(Blob::Bn(p))
    }

    /// Standard convolution with kernel `k` (1 or 3).
    pub fn conv(
        &mut self,
        x: TensorId,
        k: usize,
        out_c: usize,
        stride: u8,
        bn: bool,
        relu: bool,
    ) -> Result<TensorId, IrError> {
        let kind = match k {
            1 => LayerKind::Conv1x1,
            3 => LayerKind::Conv3x3,
            _ => return Err(IrError::InvalidLayer(format!("unsupported kernel size {k}"))),
        };
        if !(1..=TensorShape::MAX_C).contains(&out_c) {
            return Err(IrError::InvalidChannels(format!("conv output channels {out_c}")));
        }
        let in_c = self.shape(x).c;
        let w = self.new_weights(WeightShape { out_c, in_c, k });
        let p = bn.then(|| self.new_bn(out_c, in_c * k * k));
        let op = LayerOp { kind, stride, bn_fused: bn, relu_fused: relu, weight_id: Some(w), bnparam_id: p };
        self.push(op, vec![x])
    }

    pub fn dwconv(&mut self, x: TensorId, stride: u8, bn: bool, relu: bool) -> Result<TensorId, IrError> {
        let c = self.shape(x).c;
        let w = self.new_weights(WeightShape { out_c: c, in_c: 1, k: 3 });
        let p = bn.then(|| self.new_bn(c, 9));
        let op = LayerOp {
            kind: LayerKind::Dwconv3x3,
            stride,
            bn_fused: bn,
            relu_fused: relu,
            weight_id: Some(w),
            bnparam_id: p,
        };
        self.push(op, vec![x])
    }

    /// Standalone batch-norm on an int8 tensor.
    pub fn bn(&mut self, x: TensorId) -> Result<TensorId, IrError> {
        let c = self.shape(x).c;
        let p = self.new_bn(c, 1);
        let op = LayerOp { bnparam_id: Some(p), ..LayerOp::simple(LayerKind::Bn) };
        self.push(op, vec![x])
    }

    pub fn unary(&mut self, kind: LayerKind, x: TensorId) -> Result<TensorId, IrError> {
        let stride = if matches!(kind, LayerKind::Maxp | LayerKind::Dsam) { 2 } else { 1 };
        self.push(LayerOp { stride, ..LayerOp::simple(kind) }, vec![x])
    }

    pub fn relu(&mut self, x: TensorId) -> Result<TensorId, IrError> {
        self.unary(LayerKind::Relu, x)
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, IrError> {
        self.push(LayerOp::simple(LayerKind::Add), vec![a, b])
    }

    pub fn concat(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, IrError> {
        self.push(LayerOp::simple(LayerKind::Concat), vec![a, b])
    }

    pub fn gap(&mut self, x: TensorId) -> Result<TensorId, IrError> {
        self.unary(LayerKind::Gap, x)
    }

    /// Linear depthwise block: dw(no relu) -> pw(bn, relu) -> dw(bn, relu).
    pub fn lb(&mut self, x: TensorId, spec: &BlockSpec) -> Result<TensorId, IrError> {
        spec.check(BlockKind::Lb)?;
        if self.shape(x).c != spec.in_c {
            return Err(IrError::InvalidChannels(format!(
                "block expects {} input channels, tensor has {}",
                spec.in_c,
                self.shape(x).c
            )));
        }
        let d1 = self.dwconv(x, spec.stride, true, false)?;
        let p = self.conv(d1, 1, spec.mid_c, 1, true, true)?;
        self.dwconv(p, 1, true, true)
    }

    /// Dense linear depthwise block.
    ///
    /// With `add` merging the first shortcut joins the input to the output of
    /// the dw-pw pair and the second joins that pair's output to the final
    /// depthwise layer. Stride 2 drops the input shortcut. With `concat`
    /// merging the block output is concatenated after the input channels.
    pub fn dlb(&mut self, x: TensorId, spec: &BlockSpec) -> Result<TensorId, IrError> {
        spec.check(BlockKind::Dlb)?;
        if self.shape(x).c != spec.in_c {
            return Err(IrError::InvalidChannels(format!(
                "block expects {} input channels, tensor has {}",
                spec.in_c,
                self.shape(x).c
            )));
        }
        let d1 = self.dwconv(x, spec.stride, true, false)?;
        let u = self.conv(d1, 1, spec.mid_c, 1, true, true)?;
        match spec.merge {
            DlbMerge::Add => {
                let v = if spec.stride == 1 { self.add(u, x)? } else { u };
                let w = self.dwconv(v, 1, true, true)?;
                self.add(w, u)
            }
            DlbMerge::Concat => {
                let w = self.dwconv(u, 1, true, true)?;
                if spec.stride == 1 {
                    self.concat(x, w)
                } else {
                    Ok(w)
                }
            }
        }
    }

    pub fn block(&mut self, x: TensorId, spec: &BlockSpec) -> Result<TensorId, IrError> {
        match spec.kind {
            BlockKind::Lb => self.lb(x, spec),
            BlockKind::Dlb => self.dlb(x, spec),
        }
    }

    pub fn finish(mut self, output: TensorId) -> Result<QuantizedGraph, IrError> {
        self.graph.output = output;
        self.graph.validate()?;
        Ok(self.graph)
    }
}

/// Single-block graph holding one LB over `input`.
pub fn build_lb(spec: &BlockSpec, input: TensorShape, init: WeightInit) -> Result<QuantizedGraph, IrError> {
    let mut b = GraphBuilder::new(input, init);
    let out = b.lb(b.input(), spec)?;
    b.finish(out)
}

/// Single-block graph holding one DLB over `input`.
pub fn build_dlb(spec: &BlockSpec, input: TensorShape, init: WeightInit) -> Result<QuantizedGraph, IrError> {
    let mut b = GraphBuilder::new(input, init);
    let out = b.dlb(b.input(), spec)?;
    b.finish(out)
}
