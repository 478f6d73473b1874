//! Host-side post-processing: classifier head, top-k and box suppression.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HostError;

pub const DEFAULT_CLASSES: usize = 1000;
pub const DEFAULT_FEATURES: usize = 512;

/// Row-major `classes x dim` int8 weights with one output scale.
#[derive(Debug, Clone, PartialEq)]
pub struct FcWeights {
    pub classes: usize,
    pub dim: usize,
    pub data: Vec<i8>,
    pub scale: f32,
}

impl FcWeights {
    pub fn new(classes: usize, dim: usize, data: Vec<i8>, scale: f32) -> Result<Self, HostError> {
        if data.len() != classes * dim {
            return Err(HostError::DimMismatch { what: "fc weights", got: data.len(), want: classes * dim });
        }
        Ok(Self { classes, dim, data, scale })
    }

    pub fn random(classes: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..classes * dim).map(|_| rng.gen()).collect();
        Self { classes, dim, data, scale: 1.0 / 4096.0 }
    }
}

/// int32 dot products, each scaled to fp32.
pub fn fc_head(feature: &[i8], fc: &FcWeights) -> Result<Vec<f32>, HostError> {
    if feature.len() != fc.dim {
        return Err(HostError::DimMismatch { what: "feature vector", got: feature.len(), want: fc.dim });
    }
    Ok(fc
        .data
        .chunks_exact(fc.dim)
        .map(|row| {
            let acc: i32 = row.iter().zip(feature).map(|(&w, &x)| w as i32 * x as i32).sum();
            acc as f32 * fc.scale
        })
        .collect())
}

/// Indices of the `k` largest logits, ties broken by lower index.
pub fn topk(logits: &[f32], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..logits.len()).collect();
    idx.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetBox {
    pub x0: f32,
    pub y0: f32,
    pub x1: f32,
    pub y1: f32,
    pub score: f32,
    pub class: u32,
}

impl DetBox {
    pub fn new(x0: f32, y0: f32, x1: f32, y1: f32, score: f32, class: u32) -> Result<Self, HostError> {
        let b = Self { x0, y0, x1, y1, score, class };
        b.check()?;
        Ok(b)
    }

    pub fn check(&self) -> Result<(), HostError> {
        let ok = self.x0 < self.x1 && self.y0 < self.y1 && (0.0..=1.0).contains(&self.score);
        if !ok {
            return Err(HostError::BadBox(format!("{self:?}")));
        }
        Ok(())
    }

    pub fn area(&self) -> f32 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn iou(&self, o: &DetBox) -> f32 {
        let w = (self.x1.min(o.x1) - self.x0.max(o.x0)).max(0.0);
        let h = (self.y1.min(o.y1) - self.y0.max(o.y0)).max(0.0);
        let inter = w * h;
        let union = self.area() + o.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Synthetic detector head output: `n` boxes in the unit square.
    pub fn random_set(n: usize, seed: u64) -> Vec<DetBox> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let (x0, y0) = (rng.gen_range(0.0f32..0.8), rng.gen_range(0.0f32..0.8));
                let (w, h) = (rng.gen_range(0.05f32..0.2), rng.gen_range(0.05f32..0.2));
                DetBox { x0, y0, x1: x0 + w, y1: y0 + h, score: rng.gen_range(0.0f32..1.0), class: rng.gen_range(0..3) }
            })
            .collect()
    }
}

/// Greedy suppression in descending score order; a box is dropped when its
/// IoU with an already kept box exceeds `iou_thresh`. Equal scores keep input order.
pub fn nms(boxes: &[DetBox], iou_thresh: f32) -> Vec<DetBox> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| match boxes[b].score.total_cmp(&boxes[a].score) {
        Ordering::Equal => a.cmp(&b),
        o => o,
    });
    let mut kept: Vec<DetBox> = Vec::new();
    for i in order {
        if kept.iter().all(|k| k.iou(&boxes[i]) <= iou_thresh) {
            kept.push(boxes[i]);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_rows_copy_features() {
        let dim = 4;
        let mut data = vec![0i8; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1;
        }
        let fc = FcWeights::new(dim, dim, data, 1.0).unwrap();
        assert_eq!(fc_head(&[3, -7, 0, 127], &fc).unwrap(), [3.0, -7.0, 0.0, 127.0]);
        assert!(fc_head(&[1, 2], &fc).is_err());
        assert!(FcWeights::new(2, 3, vec![0; 5], 1.0).is_err());
    }

    #[test]
    fn random_head_matches_float_dot() {
        let fc = FcWeights::random(DEFAULT_CLASSES, DEFAULT_FEATURES, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<i8> = (0..DEFAULT_FEATURES).map(|_| rng.gen()).collect();
        let got = fc_head(&x, &fc).unwrap();
        for (c, &g) in got.iter().enumerate() {
            let row = &fc.data[c * DEFAULT_FEATURES..(c + 1) * DEFAULT_FEATURES];
            let acc: f64 = row.iter().zip(&x).map(|(&w, &v)| f64::from(w) * f64::from(v)).sum();
            assert_eq!(g, (acc * f64::from(fc.scale)) as f32);
        }
    }

    #[test]
    fn topk_ties_by_index() {
        assert_eq!(topk(&[1.0; 8], 5), [0, 1, 2, 3, 4]);
        assert_eq!(topk(&[0.5, 2.0, 1.0, 2.0], 3), [1, 3, 2]);
        assert_eq!(topk(&[1.0], 3), [0]);
    }

    #[test]
    fn nms_basic_cases() {
        let a = DetBox::new(0.1, 0.1, 0.5, 0.5, 0.9, 0).unwrap();
        let b = DetBox { score: 0.4, ..a };
        assert_eq!(nms(&[b, a], 0.5), [a]);
        let c = DetBox::new(0.6, 0.6, 0.9, 0.9, 0.3, 0).unwrap();
        assert_eq!(nms(&[c, a], 0.5), [a, c]);
        assert!(DetBox::new(0.5, 0.1, 0.4, 0.2, 0.5, 0).is_err());
        assert!(DetBox::new(0.1, 0.1, 0.4, 0.2, 1.5, 0).is_err());
    }

    fn brute_force(boxes: &[DetBox], t: f32) -> Vec<usize> {
        // keep i unless a higher-ranked kept box overlaps it
        let rank = |i: usize, j: usize| boxes[i].score > boxes[j].score || (boxes[i].score == boxes[j].score && i < j);
        let mut keep = vec![false; boxes.len()];
        let mut decided = vec![false; boxes.len()];
        for _ in 0..boxes.len() {
            let next = (0..boxes.len()).filter(|&i| !decided[i]).find(|&i| (0..boxes.len()).all(|j| decided[j] || j == i || rank(i, j)));
            let i = next.unwrap();
            decided[i] = true;
            keep[i] = (0..boxes.len()).all(|j| !keep[j] || boxes[i].iou(&boxes[j]) <= t);
        }
        let mut kept: Vec<usize> = (0..boxes.len()).filter(|&i| keep[i]).collect();
        kept.sort_by(|&a, &b| if rank(a, b) { Ordering::Less } else { Ordering::Greater });
        kept
    }

    #[test]
    fn nms_matches_brute_force() {
        for seed in 0..50 {
            let boxes = DetBox::random_set(10, seed);
            for t in [0.1, 0.3, 0.5] {
                let want: Vec<DetBox> = brute_force(&boxes, t).into_iter().map(|i| boxes[i]).collect();
                let got = nms(&boxes, t);
                assert_eq!(got, want, "seed {seed}");
                assert!(got.windows(2).all(|w| w[0].score > w[1].score));
                assert!(got.iter().all(|b| boxes.contains(b)));
            }
        }
    }
}
