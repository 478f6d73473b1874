//! Storage layout for every tensor.

use crate::ir::{LayerKind, QuantizedGraph};
use crate::isa::Layout;

fn preference(kind: LayerKind) -> Option<Layout> {
    match kind {
        LayerKind::Conv3x3 | LayerKind::Conv1x1 => Some(Layout::PixelMajor),
        LayerKind::Dwconv3x3 => Some(Layout::Interleaved),
        _ => None,
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Picks one layout per tensor id.
///
/// A tensor takes the layout its first convolution reader prefers (pixel-major
/// for conv, interleaved for dwconv). The operands and result of an `add` share
/// one layout, chosen from the lowest-numbered member with a preference.
/// Concat results are pixel-major so each half is a contiguous channel slice.
/// Everything else defaults to pixel-major; mismatches between producer and
/// consumer are absorbed by the hardware converter.
pub fn assign_layouts(g: &QuantizedGraph) -> Vec<Layout> {
    let n = g.shapes.len();
    let mut pref: Vec<Option<Layout>> = vec![None; n];
    let mut forced = vec![false; n];
    let mut parent: Vec<usize> = (0..n).collect();
    for layer in &g.layers {
        if let Some(p) = preference(layer.op.kind) {
            let t = layer.inputs[0];
            pref[t].get_or_insert(p);
        }
        match layer.op.kind {
            LayerKind::Add => {
                for &t in &layer.inputs {
                    let (a, b) = (find(&mut parent, t), find(&mut parent, layer.output));
                    parent[a.max(b)] = a.min(b);
                }
            }
            LayerKind::Concat => forced[layer.output] = true,
            _ => {}
        }
    }
    let mut group: Vec<Option<Layout>> = vec![None; n];
    let mut group_forced = vec![false; n];
    for t in 0..n {
        let r = find(&mut parent, t);
        if group[r].is_none() {
            group[r] = pref[t];
        }
        group_forced[r] |= forced[t];
    }
    (0..n)
        .map(|t| {
            let r = find(&mut parent, t);
            if group_forced[r] {
                Layout::PixelMajor
            } else {
                group[r].unwrap_or(Layout::PixelMajor)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{build_lb, BlockKind, BlockSpec, DlbMerge, GraphBuilder, TensorShape, WeightInit};

    #[test]
    fn lb_alternates() {
        let spec = BlockSpec { kind: BlockKind::Lb, in_c: 8, mid_c: 16, out_c: 16, stride: 1, merge: DlbMerge::Add };
        let g = build_lb(&spec, TensorShape { h: 8, w: 8, c: 8 }, WeightInit::Zeros).unwrap();
        let l = assign_layouts(&g);
        let inputs: Vec<Layout> = g.layers.iter().map(|x| l[x.inputs[0]]).collect();
        assert_eq!(inputs, [Layout::Interleaved, Layout::PixelMajor, Layout::Interleaved]);
    }

    #[test]
    fn single_conv_input_is_pixel_major() {
        let mut b = GraphBuilder::new(TensorShape { h: 4, w: 4, c: 3 }, WeightInit::Zeros);
        let y = b.conv(b.input(), 3, 8, 1, true, true).unwrap();
        let g = b.finish(y).unwrap();
        assert_eq!(assign_layouts(&g)[0], Layout::PixelMajor);
    }

    #[test]
    fn add_operands_agree() {
        let mut b = GraphBuilder::new(TensorShape { h: 4, w: 4, c: 8 }, WeightInit::Zeros);
        let x = b.input();
        let p = b.conv(x, 1, 8, 1, false, false).unwrap();
        let a = b.add(p, x).unwrap();
        let d = b.dwconv(a, 1, false, false).unwrap();
        let g = b.finish(d).unwrap();
        let l = assign_layouts(&g);
        // x prefers pixel-major (conv reader) and is the lowest member
        assert_eq!((l[x], l[p], l[a]), (Layout::PixelMajor, Layout::PixelMajor, Layout::PixelMajor));
    }

    #[test]
    fn concat_result_forced_pixel_major() {
        let mut b = GraphBuilder::new(TensorShape { h: 4, w: 4, c: 8 }, WeightInit::Zeros);
        let x = b.input();
        let d = b.dwconv(x, 1, false, false).unwrap();
        let c = b.concat(x, d).unwrap();
        let e = b.dwconv(c, 1, false, false).unwrap();
        let g = b.finish(e).unwrap();
        let l = assign_layouts(&g);
        assert_eq!(l[c], Layout::PixelMajor);
        assert_eq!(l[x], Layout::Interleaved);
    }
}
