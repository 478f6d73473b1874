//! NOU-post: int2float, fp32 multiply-add, ReLU and float2int.

/// Ties go to the even neighbour.
pub fn round_half_even(v: f32) -> f32 {
    let r = v.round();
    if (v - v.trunc()).abs() == 0.5 {
        2.0 * (v / 2.0).round()
    } else {
        r
    }
}

/// Saturating float-to-int8 conversion after rounding.
#[inline]
pub fn to_i8(v: f32) -> i8 {
    round_half_even(v).clamp(-128.0, 127.0) as i8
}

/// Per-channel BN parameters as stored in TM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostParams<'a> {
    pub scale: &'a [f32],
    pub bias: &'a [f32],
}

/// Applies the post step to one accumulator of channel `c`.
#[inline]
pub fn post_value(acc: i32, c: usize, bn: Option<PostParams<'_>>, relu: bool) -> i8 {
    let mut v = acc as f32;
    if let Some(p) = bn {
        v *= p.scale[c];
        v += p.bias[c];
    }
    if relu && v < 0.0 {
        v = 0.0;
    }
    to_i8(v)
}

/// Post-processes channel-planar accumulators (`acc.len() / channels` values per channel).
pub fn exec_post(acc: &[i32], channels: usize, bn: Option<PostParams<'_>>, relu: bool) -> Vec<i8> {
    let per = acc.len() / channels.max(1);
    acc.iter().enumerate().map(|(i, &a)| post_value(a, i / per.max(1), bn, relu)).collect()
}

/// Decodes `(scale, bias)` little-endian pairs without validation.
pub fn decode_params(bytes: &[u8]) -> (Vec<f32>, Vec<f32>) {
    let f = |b: &[u8]| f32::from_le_bytes(b.try_into().unwrap());
    bytes.chunks_exact(8).map(|p| (f(&p[..4]), f(&p[4..]))).unzip()
}
