//! Byte addressing of the two tensor layouts.
//!
//! Canonical tensor data in this crate is channel-planar (`c`, then `y`, then
//! `x`), which is also the pixel-major layout. The interleaved layout splits
//! channels into tiles of [`TILE_CHANNELS`]; tile `t` starts at byte
//! `32 * t * h * w` and stores each pixel's tile channels contiguously. A final
//! partial tile is packed to its actual width, so both layouts occupy exactly
//! `h * w * c` bytes.

use crate::ir::TensorShape;
use crate::isa::{Layout, WORD_BYTES};

pub const TILE_CHANNELS: usize = WORD_BYTES;

/// Byte offset of element `(y, x, c)`.
#[inline]
pub fn offset(layout: Layout, shape: TensorShape, y: usize, x: usize, c: usize) -> usize {
    match layout {
        Layout::PixelMajor => (c * shape.h + y) * shape.w + x,
        Layout::Interleaved => {
            let tile = c / TILE_CHANNELS;
            let base = tile * TILE_CHANNELS;
            let width = (shape.c - base).min(TILE_CHANNELS);
            base * shape.h * shape.w + (y * shape.w + x) * width + (c - base)
        }
    }
}

/// Byte offset for every canonical index, in canonical order.
pub fn offsets(layout: Layout, shape: TensorShape) -> Vec<usize> {
    let mut out = Vec::with_capacity(shape.bytes());
    for c in 0..shape.c {
        for y in 0..shape.h {
            for x in 0..shape.w {
                out.push(offset(layout, shape, y, x, c));
            }
        }
    }
    out
}

/// Stores canonical data into `layout` order.
pub fn to_layout(layout: Layout, shape: TensorShape, data: &[i8]) -> Vec<u8> {
    debug_assert_eq!(data.len(), shape.bytes());
    let mut out = vec![0u8; data.len()];
    for (i, off) in offsets(layout, shape).into_iter().enumerate() {
        out[off] = data[i] as u8;
    }
    out
}

/// Reads `layout`-ordered bytes back into canonical order.
pub fn from_layout(layout: Layout, shape: TensorShape, bytes: &[u8]) -> Vec<i8> {
    debug_assert_eq!(bytes.len(), shape.bytes());
    offsets(layout, shape).into_iter().map(|off| bytes[off] as i8).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pixel_major_is_identity() {
        let shape = TensorShape { h: 2, w: 3, c: 4 };
        let data: Vec<i8> = (0..24).collect();
        let bytes = to_layout(Layout::PixelMajor, shape, &data);
        assert_eq!(bytes, (0..24u8).collect::<Vec<_>>());
    }

    #[test]
    fn interleaved_small_tile() {
        // 3 channels fit in one partial tile: pixel-interleaved
        let shape = TensorShape { h: 1, w: 2, c: 3 };
        let data = [10, 11, 20, 21, 30, 31]; // c0: 10 11, c1: 20 21, c2: 30 31
        let bytes = to_layout(Layout::Interleaved, shape, &data);
        assert_eq!(bytes, [10, 20, 30, 11, 21, 31]);
    }

    #[test]
    fn interleaved_tiles_are_word_aligned() {
        let shape = TensorShape { h: 3, w: 3, c: 40 };
        assert_eq!(offset(Layout::Interleaved, shape, 0, 0, 32), 32 * 9);
        assert_eq!(offset(Layout::Interleaved, shape, 0, 1, 32), 32 * 9 + 8);
        assert_eq!(offset(Layout::Interleaved, shape, 2, 2, 31), 8 * 32 + 31);
    }

    proptest! {
        #[test]
        fn offsets_are_a_permutation(h in 1usize..6, w in 1usize..6, c in 1usize..70, inter in any::<bool>()) {
            let layout = if inter { Layout::Interleaved } else { Layout::PixelMajor };
            let shape = TensorShape { h, w, c };
            let mut offs = offsets(layout, shape);
            offs.sort_unstable();
            prop_assert!(offs.iter().enumerate().all(|(i, &o)| i == o));
        }
    }
}
