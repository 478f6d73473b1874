//! Binary PPM (P6) images and color normalization.

use std::path::Path;

use super::HostError;
use crate::ir::TensorShape;
use crate::oracle::RefTensor;

pub const MAX_SIDE: usize = 256;

/// 8-bit RGB, row-major, interleaved `r g b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, HostError> {
        if width == 0 || height == 0 || pixels.len() != width * height * 3 {
            return Err(HostError::Ppm(format!("{width}x{height} image needs {} bytes, got {}", width * height * 3, pixels.len())));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn from_ppm(bytes: &[u8]) -> Result<Self, HostError> {
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            // whitespace and comments between header fields
            while pos < bytes.len() {
                if bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                } else if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    break;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
                pos += 1;
            }
            if start == pos {
                return Err(HostError::Ppm("truncated header".into()));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| HostError::Ppm("non-ASCII header".into()))?);
        }
        if fields[0] != "P6" {
            return Err(HostError::Ppm(format!("expected P6 magic, found {:?}", fields[0])));
        }
        let num = |s: &str, what: &str| s.parse::<usize>().map_err(|_| HostError::Ppm(format!("bad {what} {s:?}")));
        let (width, height, maxval) = (num(fields[1], "width")?, num(fields[2], "height")?, num(fields[3], "maxval")?);
        if maxval != 255 {
            return Err(HostError::Ppm(format!("only maxval 255 is supported, found {maxval}")));
        }
        // exactly one whitespace byte ends the header
        if pos >= bytes.len() {
            return Err(HostError::Ppm("missing pixel data".into()));
        }
        let data = &bytes[pos + 1..];
        let need = width * height * 3;
        if data.len() < need {
            return Err(HostError::Ppm(format!("pixel data has {} bytes, need {need}", data.len())));
        }
        Self::new(width, height, data[..need].to_vec())
    }

    pub fn load(path: &Path) -> Result<Self, HostError> {
        Self::from_ppm(&std::fs::read(path).map_err(|e| HostError::io(path, e))?)
    }

    pub fn save(&self, path: &Path) -> Result<(), HostError> {
        std::fs::write(path, self.to_ppm()).map_err(|e| HostError::io(path, e))
    }
}

/// Per-channel normalization constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalize {
    pub mean: [f32; 3],
    pub scale: [f32; 3],
}

impl Default for Normalize {
    /// Maps `[0, 255]` onto `[-128, 127]`.
    fn default() -> Self {
        Self { mean: [128.0; 3], scale: [1.0; 3] }
    }
}

/// `(v - mean_c) * scale_c`, ties to even, saturated to int8, in CHW order.
pub fn preprocess(img: &RgbImage, norm: &Normalize) -> Result<RefTensor, HostError> {
    if img.width > MAX_SIDE || img.height > MAX_SIDE {
        return Err(HostError::Oversize { width: img.width, height: img.height });
    }
    let shape = TensorShape { h: img.height, w: img.width, c: 3 };
    let mut data = vec![0i8; shape.bytes()];
    let plane = img.width * img.height;
    for (p, rgb) in img.pixels.chunks_exact(3).enumerate() {
        for c in 0..3 {
            let v = (rgb[c] as f32 - norm.mean[c]) * norm.scale[c];
            data[c * plane + p] = v.round_ties_even().clamp(-128.0, 127.0) as i8;
        }
    }
    Ok(RefTensor::new(shape, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(v: u8) -> RgbImage {
        RgbImage::new(1, 1, vec![v; 3]).unwrap()
    }

    #[test]
    fn normalization_examples() {
        let id = Normalize { mean: [0.0; 3], scale: [1.0; 3] };
        assert_eq!(preprocess(&gray(127), &id).unwrap().data, [127; 3]);
        let centered = Normalize { mean: [128.0; 3], scale: [1.0; 3] };
        assert_eq!(preprocess(&gray(128), &centered).unwrap().data, [0; 3]);
        let half = Normalize { mean: [128.0; 3], scale: [0.5; 3] };
        assert_eq!(preprocess(&gray(255), &half).unwrap().data, [64; 3]);
        // 61.5 rounds down to the even neighbour
        assert_eq!(preprocess(&gray(251), &half).unwrap().data, [62; 3]);
        assert_eq!(preprocess(&gray(0), &centered).unwrap().data, [-128; 3]);
        assert_eq!(preprocess(&gray(255), &id).unwrap().data, [127; 3]);
    }

    #[test]
    fn planar_output() {
        let img = RgbImage::new(2, 1, vec![1, 2, 3, 4, 5, 6]).unwrap();
        let t = preprocess(&img, &Normalize { mean: [0.0; 3], scale: [1.0; 3] }).unwrap();
        assert_eq!(t.data, [1, 4, 2, 5, 3, 6]);
        assert_eq!(t.get(1, 0, 1), 5);
    }

    #[test]
    fn oversize_rejected() {
        let img = RgbImage::new(257, 1, vec![0; 257 * 3]).unwrap();
        assert!(matches!(preprocess(&img, &Normalize::default()), Err(HostError::Oversize { .. })));
    }

    #[test]
    fn ppm_round_trip_with_comment() {
        let img = RgbImage::new(3, 2, (0..18).collect()).unwrap();
        assert_eq!(RgbImage::from_ppm(&img.to_ppm()).unwrap(), img);
        let mut text = b"P6 # made by hand\n3 2\n# depth\n255\n".to_vec();
        text.extend(0..18u8);
        assert_eq!(RgbImage::from_ppm(&text).unwrap(), img);
    }

    #[test]
    fn ppm_errors() {
        assert!(RgbImage::from_ppm(b"P3\n1 1\n255\n").is_err());
        assert!(RgbImage::from_ppm(b"P6\n1 1\n65535\n\0\0\0\0\0\0").is_err());
        assert!(RgbImage::from_ppm(b"P6\n2 2\n255\n\0\0\0").is_err());
        assert!(RgbImage::from_ppm(b"P6\n2").is_err());
    }
}
