//! Absorbs `bn` and `relu` layers into the convolution that feeds them.

use crate::ir::{Layer, LayerKind, QuantizedGraph, TensorId};

/// Inclusive int8 value range a tensor can take.
type Range = (i32, i32);

const FULL: Range = (-128, 127);
const NON_NEG: Range = (0, 127);

fn output_range(layer: &Layer, ranges: &[Range]) -> Range {
    let op = &layer.op;
    match op.kind {
        LayerKind::Relu => NON_NEG,
        _ if op.relu_fused => NON_NEG,
        LayerKind::Move | LayerKind::Dsam | LayerKind::Usam | LayerKind::Maxp | LayerKind::Gap => ranges[layer.inputs[0]],
        LayerKind::Concat => {
            let (a, b) = (ranges[layer.inputs[0]], ranges[layer.inputs[1]]);
            (a.0.min(b.0), a.1.max(b.1))
        }
        _ => FULL,
    }
}

/// True when no accumulator of `layer` can leave the int8 range given its
/// input range, so clamping before a following BN is the identity.
fn accumulators_fit(g: &QuantizedGraph, layer: &Layer, input: Range) -> bool {
    let Some(Ok(w)) = layer.op.weight_id.map(|id| g.weights(id)) else {
        return false;
    };
    // zero padding always contributes 0, which the range already covers
    let (lo, hi) = (input.0.min(0), input.1.max(0));
    let per_out = w.shape.in_c * w.shape.k * w.shape.k;
    w.data.chunks(per_out).all(|taps| {
        let (mut amin, mut amax) = (0i64, 0i64);
        for &t in taps {
            let (a, b) = (t as i64 * lo as i64, t as i64 * hi as i64);
            amin += a.min(b);
            amax += a.max(b);
        }
        amin >= -128 && amax <= 127
    })
}

/// Fuses every `bn`/`relu` whose only input is a convolution output with no
/// other reader. Relu always fuses. A standalone bn fuses only into a conv
/// without bn or relu, and only when the conv's accumulators provably fit in
/// int8, since the unfused conv would clamp before the bn sees the value.
pub fn fuse(g: &QuantizedGraph) -> QuantizedGraph {
    let mut layers: Vec<Option<Layer>> = g.layers.iter().cloned().map(Some).collect();
    let mut ranges: Vec<Range> = vec![FULL; g.shapes.len()];

    for i in 0..layers.len() {
        let Some(mut layer) = layers[i].take() else { continue };
        if layer.op.kind.is_conv() {
            let input_range = ranges[layer.inputs[0]];
            loop {
                let t: TensorId = layer.output;
                if t == g.output {
                    break;
                }
                let readers: Vec<usize> = (i + 1..layers.len())
                    .filter(|&j| layers[j].as_ref().is_some_and(|l| l.inputs.contains(&t)))
                    .collect();
                let [j] = readers[..] else { break };
                let next = layers[j].as_ref().unwrap();
                if next.inputs.len() != 1 {
                    break;
                }
                match next.op.kind {
                    LayerKind::Relu => {
                        layer.op.relu_fused = true;
                    }
                    LayerKind::Bn
                        if !layer.op.bn_fused
                            && !layer.op.relu_fused
                            && accumulators_fit(g, &layer, input_range) =>
                    {
                        layer.op.bn_fused = true;
                        layer.op.bnparam_id = next.op.bnparam_id;
                    }
                    _ => break,
                }
                layer.output = next.output;
                layers[j] = None;
            }
        }
        ranges[layer.output] = output_range(&layer, &ranges);
        layers[i] = Some(layer);
    }

    QuantizedGraph { layers: layers.into_iter().flatten().collect(), ..g.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{Blob, GraphBuilder, TensorShape, WeightBlob, WeightInit};

    fn shape() -> TensorShape {
        TensorShape { h: 4, w: 4, c: 1 }
    }

    fn set_weight(g: &mut QuantizedGraph, layer: usize, v: i8) {
        let id = g.layers[layer].op.weight_id.unwrap();
        let s = g.weights(id).unwrap().shape;
        g.blobs[id] = Blob::Weights(WeightBlob::new(s, vec![v; s.len()]).unwrap());
    }

    fn kinds(g: &QuantizedGraph) -> Vec<(LayerKind, bool, bool)> {
        g.layers.iter().map(|l| (l.op.kind, l.op.bn_fused, l.op.relu_fused)).collect()
    }

    #[test]
    fn conv_bn_relu_becomes_one_layer() {
        let mut b = GraphBuilder::new(shape(), WeightInit::Zeros);
        let c = b.conv(b.input(), 1, 1, 1, false, false).unwrap();
        let n = b.bn(c).unwrap();
        let r = b.relu(n).unwrap();
        let mut g = b.finish(r).unwrap();
        set_weight(&mut g, 0, 1);
        let f = fuse(&g);
        assert_eq!(kinds(&f), [(LayerKind::Conv1x1, true, true)]);
        assert_eq!(f.layers[0].output, g.output);
        f.validate().unwrap();
    }

    #[test]
    fn large_weights_keep_bn_separate() {
        let mut b = GraphBuilder::new(shape(), WeightInit::Zeros);
        let c = b.conv(b.input(), 1, 1, 1, false, false).unwrap();
        let n = b.bn(c).unwrap();
        let mut g = b.finish(n).unwrap();
        set_weight(&mut g, 0, 2);
        assert_eq!(kinds(&fuse(&g)), [(LayerKind::Conv1x1, false, false), (LayerKind::Bn, false, false)]);
    }

    #[test]
    fn relu_without_conv_stays() {
        let mut b = GraphBuilder::new(shape(), WeightInit::Zeros);
        let r = b.relu(b.input()).unwrap();
        let g = b.finish(r).unwrap();
        assert_eq!(kinds(&fuse(&g)), [(LayerKind::Relu, false, false)]);
    }

    #[test]
    fn relu_not_fused_across_add() {
        let mut b = GraphBuilder::new(shape(), WeightInit::Zeros);
        let c = b.conv(b.input(), 1, 1, 1, false, false).unwrap();
        let n = b.bn(c).unwrap();
        let a = b.add(n, b.input()).unwrap();
        let r = b.relu(a).unwrap();
        let mut g = b.finish(r).unwrap();
        set_weight(&mut g, 0, 1);
        assert_eq!(
            kinds(&fuse(&g)),
            [(LayerKind::Conv1x1, true, false), (LayerKind::Add, false, false), (LayerKind::Relu, false, false)]
        );
    }

    #[test]
    fn shared_conv_output_is_not_fused() {
        let mut b = GraphBuilder::new(shape(), WeightInit::Zeros);
        let c = b.conv(b.input(), 1, 1, 1, false, false).unwrap();
        let r = b.relu(c).unwrap();
        let a = b.add(r, c).unwrap();
        let g = b.finish(a).unwrap();
        assert_eq!(fuse(&g).layers.len(), 3);
    }

    #[test]
    fn relu_input_range_allows_bn_fusion() {
        // a weight of -1 can produce +128 from a signed input but not from a relu output
        let mut b = GraphBuilder::new(shape(), WeightInit::Zeros);
        let r = b.relu(b.input()).unwrap();
        let c = b.conv(r, 1, 1, 1, false, false).unwrap();
        let n = b.bn(c).unwrap();
        let mut g = b.finish(n).unwrap();
        set_weight(&mut g, 1, -1);
        assert_eq!(fuse(&g).layers.len(), 2);
        let mut b = GraphBuilder::new(shape(), WeightInit::Zeros);
        let c = b.conv(b.input(), 1, 1, 1, false, false).unwrap();
        let n = b.bn(c).unwrap();
        let mut g = b.finish(n).unwrap();
        set_weight(&mut g, 0, -1);
        assert_eq!(fuse(&g).layers.len(), 2);
    }
}
