//! Scalar reference interpreter over [`QuantizedGraph`].
//!
//! Plain nested loops, no banks, no layouts. Shares the arithmetic rules of
//! the simulator (int32 accumulate, fp32 BN, ties-to-even, int8 saturation)
//! but none of its code.

use thiserror::Error;

use crate::ir::{IrError, LayerKind, LayerOp, QuantizedGraph, TensorShape};
use crate::isa::Layout;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("input shape {got} does not match graph input {want}")]
    ShapeMismatch { got: TensorShape, want: TensorShape },
    #[error("bad tensor file: {0}")]
    BadFile(String),
    #[error(transparent)]
    Ir(#[from] IrError),
}

/// Canonical (channel, row, column) int8 tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefTensor {
    pub shape: TensorShape,
    pub data: Vec<i8>,
}

const MAGIC: &[u8; 4] = b"NCPT";

impl RefTensor {
    pub fn new(shape: TensorShape, data: Vec<i8>) -> Self {
        assert_eq!(data.len(), shape.h * shape.w * shape.c, "tensor data length");
        Self { shape, data }
    }

    pub fn zeros(shape: TensorShape) -> Self {
        Self::new(shape, vec![0; shape.h * shape.w * shape.c])
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> i8 {
        self.data[(c * self.shape.h + y) * self.shape.w + x]
    }

    /// `NCPT`, then h, w, c as u32 LE, then the canonical bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        for v in [self.shape.h, self.shape.w, self.shape.c] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend(self.data.iter().map(|&v| v as u8));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, OracleError> {
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(OracleError::BadFile("missing NCPT header".into()));
        }
        let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
        let shape = TensorShape::new(dim(0), dim(1), dim(2))?;
        let body = &bytes[16..];
        if body.len() != shape.h * shape.w * shape.c {
            return Err(OracleError::BadFile(format!("{} data bytes for shape {shape}", body.len())));
        }
        Ok(Self::new(shape, body.iter().map(|&b| b as i8).collect()))
    }
}

fn requant(v: f32) -> i8 {
    v.round_ties_even().clamp(-128.0, 127.0) as i8
}

fn finish(acc: i32, c: usize, op: &LayerOp, g: &QuantizedGraph) -> Result<i8, OracleError> {
    let mut v = acc as f32;
    if op.bn_fused {
        let p = g.bn_params(op.bnparam_id.ok_or(IrError::BadBlob(usize::MAX))?)?;
        v *= p.scale[c];
        v += p.bias[c];
    }
    if op.relu_fused {
        v = v.max(0.0);
    }
    Ok(requant(v))
}

fn conv(op: &LayerOp, x: &RefTensor, out: TensorShape, g: &QuantizedGraph) -> Result<RefTensor, OracleError> {
    let wb = g.weights(op.weight_id.ok_or(IrError::BadBlob(usize::MAX))?)?;
    let k = wb.shape.k;
    let s = op.stride as i64;
    let pad = (k / 2) as i64;
    let depthwise = op.kind == LayerKind::Dwconv3x3;
    let mut y = RefTensor::zeros(out);
    for o in 0..out.c {
        for oy in 0..out.h {
            for ox in 0..out.w {
                let mut acc: i32 = 0;
                let ins: Vec<usize> = if depthwise { vec![o] } else { (0..x.shape.c).collect() };
                for (wi, &ci) in ins.iter().enumerate() {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = oy as i64 * s + ky as i64 - pad;
                            let ix = ox as i64 * s + kx as i64 - pad;
                            if iy < 0 || ix < 0 || iy >= x.shape.h as i64 || ix >= x.shape.w as i64 {
                                continue;
                            }
                            let w_idx = if depthwise {
                                (o * k + ky) * k + kx
                            } else {
                                ((o * x.shape.c + wi) * k + ky) * k + kx
                            };
                            acc += wb.data[w_idx] as i32 * x.get(ci, iy as usize, ix as usize) as i32;
                        }
                    }
                }
                y.data[(o * out.h + oy) * out.w + ox] = finish(acc, o, op, g)?;
            }
        }
    }
    Ok(y)
}

fn pool(kind: LayerKind, x: &RefTensor, out: TensorShape) -> RefTensor {
    let mut y = RefTensor::zeros(out);
    let mut i = 0;
    for c in 0..out.c {
        for oy in 0..out.h {
            for ox in 0..out.w {
                y.data[i] = match kind {
                    LayerKind::Dsam => x.get(c, oy * 2, ox * 2),
                    LayerKind::Usam => x.get(c, oy / 2, ox / 2),
                    _ => {
                        let mut best = None;
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let (yy, xx) = (oy * 2 + dy, ox * 2 + dx);
                                if yy < x.shape.h && xx < x.shape.w {
                                    let v = x.get(c, yy, xx);
                                    best = Some(best.map_or(v, |b: i8| b.max(v)));
                                }
                            }
                        }
                        best.unwrap()
                    }
                };
                i += 1;
            }
        }
    }
    y
}

fn eval(op: &LayerOp, inputs: &[&RefTensor], out: TensorShape, g: &QuantizedGraph) -> Result<RefTensor, OracleError> {
    let x = inputs[0];
    Ok(match op.kind {
        LayerKind::Conv3x3 | LayerKind::Conv1x1 | LayerKind::Dwconv3x3 => conv(op, x, out, g)?,
        LayerKind::Bn => {
            let p = g.bn_params(op.bnparam_id.ok_or(IrError::BadBlob(usize::MAX))?)?;
            let hw = x.shape.h * x.shape.w;
            let data = x.data.iter().enumerate().map(|(i, &v)| {
                let c = i / hw;
                requant(v as f32 * p.scale[c] + p.bias[c])
            });
            RefTensor::new(out, data.collect())
        }
        LayerKind::Relu => RefTensor::new(out, x.data.iter().map(|&v| if v < 0 { 0 } else { v }).collect()),
        LayerKind::Add => {
            let b = inputs[1];
            let data = x.data.iter().zip(&b.data).map(|(&p, &q)| (p as i32 + q as i32).clamp(-128, 127) as i8);
            RefTensor::new(out, data.collect())
        }
        LayerKind::Move => x.clone(),
        LayerKind::Dsam | LayerKind::Usam | LayerKind::Maxp => pool(op.kind, x, out),
        LayerKind::Gap => {
            let hw = x.shape.h * x.shape.w;
            let data = x.data.chunks(hw).map(|plane| {
                let sum: i32 = plane.iter().map(|&v| v as i32).sum();
                (sum as f64 / hw as f64).round_ties_even().clamp(-128.0, 127.0) as i8
            });
            RefTensor::new(out, data.collect())
        }
        LayerKind::Concat => {
            let mut data = x.data.clone();
            data.extend_from_slice(&inputs[1].data);
            RefTensor::new(out, data)
        }
    })
}

/// Evaluates every layer of `g` on `input` and returns the graph output.
pub fn ref_run(g: &QuantizedGraph, input: &RefTensor) -> Result<RefTensor, OracleError> {
    if input.shape != g.input {
        return Err(OracleError::ShapeMismatch { got: input.shape, want: g.input });
    }
    let mut values: Vec<Option<RefTensor>> = vec![None; g.shapes.len()];
    values[QuantizedGraph::INPUT] = Some(input.clone());
    for layer in &g.layers {
        let ins: Vec<&RefTensor> = layer
            .inputs
            .iter()
            .map(|&t| values.get(t).and_then(|v| v.as_ref()).ok_or(IrError::UndefinedTensor(t)))
            .collect::<Result<_, _>>()?;
        let y = eval(&layer.op, &ins, g.shape(layer.output), g)?;
        values[layer.output] = Some(y);
    }
    Ok(values[g.output].take().ok_or(IrError::UndefinedTensor(g.output))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Mismatch {
    /// Canonical index.
    pub index: usize,
    pub c: usize,
    pub y: usize,
    pub x: usize,
    pub expected: i8,
    pub actual: i8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompareReport {
    pub elements: usize,
    pub mismatches: usize,
    pub first: Option<Mismatch>,
}

impl CompareReport {
    pub fn is_equal(&self) -> bool {
        self.mismatches == 0
    }
}

impl std::fmt::Display for CompareReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.first {
            None => write!(f, "equal ({} elements)", self.elements),
            Some(m) => write!(
                f,
                "{} of {} elements differ; first at index {} (c={}, y={}, x={}): expected {}, got {}",
                self.mismatches, self.elements, m.index, m.c, m.y, m.x, m.expected, m.actual
            ),
        }
    }
}

/// Decodes `bytes` stored in `layout` and compares with `a`.
///
/// Interleaved storage is read tile by tile: 32-channel groups, each holding
/// its channels contiguously per pixel, the last group packed to its width.
pub fn compare(a: &RefTensor, bytes: &[u8], layout: Layout) -> CompareReport {
    let TensorShape { h, w, c } = a.shape;
    let n = h * w * c;
    let mut decoded = vec![0i8; n];
    match layout {
        Layout::PixelMajor => {
            for (d, &b) in decoded.iter_mut().zip(bytes) {
                *d = b as i8;
            }
        }
        Layout::Interleaved => {
            let mut pos = 0;
            let mut c0 = 0;
            while c0 < c {
                let width = 32.min(c - c0);
                for y in 0..h {
                    for x in 0..w {
                        for dc in 0..width {
                            if let Some(&b) = bytes.get(pos) {
                                decoded[((c0 + dc) * h + y) * w + x] = b as i8;
                            }
                            pos += 1;
                        }
                    }
                }
                c0 += width;
            }
        }
    }
    let short = bytes.len() < n;
    let mut report = CompareReport { elements: n, mismatches: 0, first: None };
    for (i, (&e, &g)) in a.data.iter().zip(&decoded).enumerate() {
        // with a short buffer, missing elements always count as mismatches
        if e != g || (short && i >= bytes.len()) {
            report.mismatches += 1;
            if report.first.is_none() {
                report.first = Some(Mismatch { index: i, c: i / (h * w), y: i / w % h, x: i % w, expected: e, actual: g });
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{Blob, BnParams, GraphBuilder, WeightBlob, WeightInit, WeightShape};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn shape(h: usize, w: usize, c: usize) -> TensorShape {
        TensorShape { h, w, c }
    }

    fn random(shape: TensorShape, seed: u64) -> RefTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RefTensor::new(shape, (0..shape.h * shape.w * shape.c).map(|_| rng.gen()).collect())
    }

    #[test]
    fn identity_conv() {
        let mut b = GraphBuilder::new(shape(3, 4, 2), WeightInit::Zeros);
        let y = b.conv(b.input(), 1, 2, 1, false, false).unwrap();
        let mut g = b.finish(y).unwrap();
        let id = g.layers[0].op.weight_id.unwrap();
        g.blobs[id] = Blob::Weights(WeightBlob::new(WeightShape { out_c: 2, in_c: 2, k: 1 }, vec![1, 0, 0, 1]).unwrap());
        let x = random(shape(3, 4, 2), 1);
        assert_eq!(ref_run(&g, &x).unwrap(), x);
    }

    #[test]
    fn zero_weight_lb_gives_bias() {
        let mut b = GraphBuilder::new(shape(4, 4, 2), WeightInit::Zeros);
        let y = b.conv(b.input(), 3, 2, 1, true, true).unwrap();
        let mut g = b.finish(y).unwrap();
        let pid = g.layers[0].op.bnparam_id.unwrap();
        g.blobs[pid] = Blob::Bn(BnParams::new(vec![1.0, 1.0], vec![2.5, -3.0]).unwrap());
        let out = ref_run(&g, &random(shape(4, 4, 2), 2)).unwrap();
        assert!(out.data[..16].iter().all(|&v| v == 2));
        assert!(out.data[16..].iter().all(|&v| v == 0));
    }

    #[test]
    fn input_shape_checked() {
        let g = QuantizedGraph::identity(shape(2, 2, 2));
        assert!(matches!(ref_run(&g, &RefTensor::zeros(shape(2, 2, 3))), Err(OracleError::ShapeMismatch { .. })));
    }

    #[test]
    fn compare_reports_flipped_byte() {
        let t = random(shape(3, 5, 40), 4);
        let mut bytes = crate::layout::to_layout(Layout::Interleaved, t.shape, &t.data);
        assert!(compare(&t, &bytes, Layout::Interleaved).is_equal());
        let plain: Vec<u8> = t.data.iter().map(|&v| v as u8).collect();
        assert!(compare(&t, &plain, Layout::PixelMajor).is_equal());
        // flip the byte holding (c=33, y=1, x=2)
        let off = crate::layout::offset(Layout::Interleaved, t.shape, 1, 2, 33);
        bytes[off] ^= 0x40;
        let r = compare(&t, &bytes, Layout::Interleaved);
        assert_eq!(r.mismatches, 1);
        let m = r.first.unwrap();
        assert_eq!((m.c, m.y, m.x), (33, 1, 2));
        assert_eq!(m.index, (33 * 3 + 1) * 5 + 2);
    }

    #[test]
    fn tensor_file_round_trip() {
        let t = random(shape(2, 3, 4), 9);
        assert_eq!(RefTensor::from_bytes(&t.to_bytes()).unwrap(), t);
        assert!(RefTensor::from_bytes(&t.to_bytes()[..20]).is_err());
    }
}
