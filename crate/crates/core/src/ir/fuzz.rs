//! Seeded random graphs for equivalence sweeps.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BlockKind, BlockSpec, DlbMerge, GraphBuilder, IrError, LayerKind, QuantizedGraph, TensorId, TensorShape, WeightInit};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    Conv3,
    Conv1,
    Dw,
    Bn,
    Relu,
    Add,
    Move,
    Dsam,
    Usam,
    Maxp,
    Concat,
    Lb,
    DlbAdd,
    DlbConcat,
}

const ALL: [Step; 14] = [
    Step::Conv3,
    Step::Conv1,
    Step::Dw,
    Step::Bn,
    Step::Relu,
    Step::Add,
    Step::Move,
    Step::Dsam,
    Step::Usam,
    Step::Maxp,
    Step::Concat,
    Step::Lb,
    Step::DlbAdd,
    Step::DlbConcat,
];

struct Gen {
    b: GraphBuilder,
    rng: ChaCha8Rng,
    x: TensorId,
    /// `x` came straight out of a convolution, so a following bn/relu would be fused.
    conv_out: bool,
}

impl Gen {
    fn shape(&self) -> TensorShape {
        self.b.shape(self.x)
    }

    fn stride(&mut self) -> u8 {
        if self.shape().h >= 4 && self.rng.gen_bool(0.3) {
            2
        } else {
            1
        }
    }

    fn channels(&mut self) -> usize {
        *[4, 8, 12, 16, 24].choose(&mut self.rng).unwrap()
    }

    fn flags(&mut self) -> (bool, bool) {
        (self.rng.gen_bool(0.7), self.rng.gen_bool(0.5))
    }

    fn set(&mut self, t: TensorId, conv_out: bool) {
        self.x = t;
        self.conv_out = conv_out;
    }

    /// Makes sure the next standalone bn/relu survives fusion.
    fn detach(&mut self) -> Result<(), IrError> {
        if self.conv_out {
            let t = self.b.unary(LayerKind::Move, self.x)?;
            self.set(t, false);
        }
        Ok(())
    }

    /// Concat needs its first half to fill whole 32-byte words.
    fn concat_ok(&self) -> bool {
        self.shape().bytes().is_multiple_of(32) && self.shape().c <= 40
    }

    /// Pointwise conv to the fewest channels (at least 8) that make the tensor word-aligned.
    fn align(&mut self) -> Result<(), IrError> {
        if self.concat_ok() {
            return Ok(());
        }
        let s = self.shape();
        let mut g = 32;
        while !(s.h * s.w).is_multiple_of(g) {
            g /= 2;
        }
        let m = 32 / g;
        let t = self.b.conv(self.x, 1, m * 8usize.div_ceil(m), 1, true, true)?;
        self.set(t, true);
        Ok(())
    }

    fn apply(&mut self, step: Step) -> Result<(), IrError> {
        let x = self.x;
        let s = self.shape();
        match step {
            Step::Conv3 | Step::Conv1 => {
                let k = if step == Step::Conv3 { 3 } else { 1 };
                let (c, st, (bn, relu)) = (self.channels(), self.stride(), self.flags());
                let t = self.b.conv(x, k, c, st, bn, relu)?;
                self.set(t, true);
            }
            Step::Dw => {
                let (st, (bn, relu)) = (self.stride(), self.flags());
                let t = self.b.dwconv(x, st, bn, relu)?;
                self.set(t, true);
            }
            Step::Bn => {
                self.detach()?;
                let t = self.b.bn(self.x)?;
                self.set(t, false);
            }
            Step::Relu => {
                self.detach()?;
                let t = self.b.relu(self.x)?;
                self.set(t, false);
            }
            Step::Add => {
                let (bn, relu) = self.flags();
                let y = if self.rng.gen_bool(0.5) {
                    self.b.dwconv(x, 1, bn, relu)?
                } else {
                    self.b.conv(x, 1, s.c, 1, bn, relu)?
                };
                let t = if self.rng.gen_bool(0.5) { self.b.add(y, x)? } else { self.b.add(x, y)? };
                self.set(t, false);
            }
            Step::Move => {
                let t = self.b.unary(LayerKind::Move, x)?;
                self.set(t, false);
            }
            Step::Dsam | Step::Maxp => {
                if s.h < 2 || s.w < 2 {
                    let t = self.b.unary(LayerKind::Usam, x)?;
                    self.set(t, false);
                }
                let kind = if step == Step::Dsam { LayerKind::Dsam } else { LayerKind::Maxp };
                let t = self.b.unary(kind, self.x)?;
                self.set(t, false);
            }
            Step::Usam => {
                if s.h > 16 || s.w > 16 {
                    let t = self.b.unary(LayerKind::Dsam, x)?;
                    self.set(t, false);
                }
                let t = self.b.unary(LayerKind::Usam, self.x)?;
                self.set(t, false);
            }
            Step::Concat => {
                self.align()?;
                let (bn, relu, c) = (self.rng.gen_bool(0.7), self.rng.gen_bool(0.5), self.channels());
                let y = self.b.conv(self.x, 3, c, 1, bn, relu)?;
                let t = self.b.concat(self.x, y)?;
                self.set(t, false);
            }
            Step::Lb => {
                let (c, st) = (self.channels(), self.stride());
                let spec = BlockSpec { kind: BlockKind::Lb, in_c: s.c, mid_c: c, out_c: c, stride: st, merge: DlbMerge::Add };
                let t = self.b.lb(x, &spec)?;
                self.set(t, true);
            }
            Step::DlbAdd => {
                let st = self.stride();
                let c = if st == 1 { s.c } else { self.channels() };
                let spec = BlockSpec { kind: BlockKind::Dlb, in_c: s.c, mid_c: c, out_c: c, stride: st, merge: DlbMerge::Add };
                let t = self.b.dlb(x, &spec)?;
                self.set(t, false);
            }
            Step::DlbConcat => {
                self.align()?;
                let in_c = self.shape().c;
                let c = self.channels();
                let spec = BlockSpec { kind: BlockKind::Dlb, in_c, mid_c: c, out_c: c, stride: 1, merge: DlbMerge::Concat };
                let t = self.b.dlb(self.x, &spec)?;
                self.set(t, false);
            }
        }
        // keep channel counts small
        if self.shape().c > 48 {
            let t = self.b.conv(self.x, 1, 16, 1, true, true)?;
            self.set(t, true);
        }
        Ok(())
    }
}

/// A small random graph that exercises every lowerable layer kind (each
/// survives fusion as its own instruction), an LB and both DLB variants.
/// Same seed, same graph.
pub fn random_graph(seed: u64) -> Result<QuantizedGraph, IrError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e63_7067);
    let side = *[8usize, 12, 16].choose(&mut rng).unwrap();
    let c = *[1usize, 3, 4, 8].choose(&mut rng).unwrap();
    let input = TensorShape { h: side, w: side, c };
    let mut steps: Vec<Step> = ALL.to_vec();
    for _ in 0..rng.gen_range(0..6) {
        steps.push(*ALL.choose(&mut rng).unwrap());
    }
    steps.shuffle(&mut rng);
    let b = GraphBuilder::new(input, WeightInit::fan_in(seed));
    let x = b.input();
    let mut g = Gen { b, rng, x, conv_out: false };
    for step in steps {
        g.apply(step)?;
    }
    let out = if g.rng.gen_bool(0.75) { g.b.gap(g.x)? } else { g.x };
    g.b.finish(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_covering() {
        for seed in 0..50 {
            let g = random_graph(seed).unwrap();
            assert_eq!(g, random_graph(seed).unwrap());
            let kinds: std::collections::BTreeSet<&str> = g.layers.iter().map(|l| l.op.kind.name()).collect();
            for k in ["conv1x1", "conv3x3", "dwconv3x3", "bn", "relu", "add", "move", "dsam", "usam", "maxp", "concat"] {
                assert!(kinds.contains(k), "seed {seed} lacks {k}: {kinds:?}");
            }
        }
    }
}
