//! Tensor-memory placement of features and parameters.

use serde::Serialize;

use super::{CompileError, TmSpec};
use crate::ir::{BlobId, QuantizedGraph, TensorId};
use crate::isa::{Bank, Layout, OperandDesc, WORD_BYTES};

/// Where one tensor lives and for which steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Placement {
    pub desc: OperandDesc,
    pub bytes: usize,
    /// Step (layer index) producing the tensor; 0 for the graph input.
    pub def: usize,
    /// Last step reading it; the graph output stays live through the last step.
    pub last_use: usize,
}

impl Placement {
    pub fn words(&self) -> usize {
        self.bytes.div_ceil(WORD_BYTES)
    }

    fn word_range(&self) -> (usize, usize) {
        let start = self.desc.word_off as usize;
        (start, start + self.words())
    }

    fn live_at(&self, step: usize) -> bool {
        self.def <= step && step <= self.last_use
    }

    fn overlaps_life(&self, def: usize, last: usize) -> bool {
        self.def <= last && def <= self.last_use
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BlobPlacement {
    pub blob: BlobId,
    pub bank: Bank,
    pub word_off: u16,
    pub bytes: usize,
}

impl BlobPlacement {
    pub fn desc(&self) -> OperandDesc {
        OperandDesc::new(self.bank, self.word_off, Layout::PixelMajor)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacementPlan {
    /// Indexed by tensor id; `None` for tensors no layer produces (fused away).
    pub tensors: Vec<Option<Placement>>,
    /// Indexed by blob id.
    pub blobs: Vec<Option<BlobPlacement>>,
    pub steps: usize,
    /// Most bytes simultaneously live in each bank, indexed by `Bank::index`.
    pub peak: [usize; 6],
    /// Highest byte address used in each bank.
    pub high_water: [usize; 6],
}

impl PlacementPlan {
    pub fn tensor(&self, t: TensorId) -> Result<&Placement, CompileError> {
        self.tensors
            .get(t)
            .and_then(Option::as_ref)
            .ok_or_else(|| CompileError::PlanMismatch(format!("tensor {t} has no placement")))
    }

    pub fn blob(&self, b: BlobId) -> Result<&BlobPlacement, CompileError> {
        self.blobs
            .get(b)
            .and_then(Option::as_ref)
            .ok_or_else(|| CompileError::PlanMismatch(format!("blob {b} has no placement")))
    }

    /// Pairs of tensors sharing bytes of a bank while both are live.
    pub fn conflicts(&self) -> Vec<(TensorId, TensorId)> {
        let placed: Vec<(TensorId, &Placement)> =
            self.tensors.iter().enumerate().filter_map(|(t, p)| p.as_ref().map(|p| (t, p))).collect();
        let mut out = Vec::new();
        for (i, &(a, pa)) in placed.iter().enumerate() {
            for &(b, pb) in &placed[i + 1..] {
                let (a0, a1) = pa.word_range();
                let (b0, b1) = pb.word_range();
                if pa.desc.bank == pb.desc.bank && a0 < b1 && b0 < a1 && pa.overlaps_life(pb.def, pb.last_use) {
                    out.push((a, b));
                }
            }
        }
        out
    }
}

/// Free word ranges of `bank` not used by placements live during `[def, last]`.
fn busy(placed: &[Placement], bank: Bank, def: usize, last: usize) -> Vec<(usize, usize)> {
    let mut v: Vec<(usize, usize)> = placed
        .iter()
        .filter(|p| p.desc.bank == bank && p.overlaps_life(def, last))
        .map(Placement::word_range)
        .collect();
    v.sort_unstable();
    v
}

fn bottom_up(busy: &[(usize, usize)], n: usize, cap: usize) -> Option<usize> {
    let mut cursor = 0;
    for &(s, e) in busy {
        if cursor + n <= s {
            return Some(cursor);
        }
        cursor = cursor.max(e);
    }
    (cursor + n <= cap).then_some(cursor)
}

fn top_down(busy: &[(usize, usize)], n: usize, cap: usize) -> Option<usize> {
    let mut by_end = busy.to_vec();
    by_end.sort_unstable_by_key(|e| std::cmp::Reverse(e.1));
    let mut cursor = cap;
    for &(s, e) in &by_end {
        if e + n <= cursor {
            return Some(cursor - n);
        }
        cursor = cursor.min(s);
    }
    (n <= cursor).then(|| cursor - n)
}

fn largest_gap(busy: &[(usize, usize)], cap: usize) -> usize {
    let mut best = 0;
    let mut cursor = 0;
    for &(s, e) in busy {
        best = best.max(s.saturating_sub(cursor));
        cursor = cursor.max(e);
    }
    best.max(cap.saturating_sub(cursor))
}

/// Places every tensor and parameter blob of a fused graph.
///
/// - The input sits at word 0 of BankI and the output in BankO (first fit,
///   falling back to the feature banks when it does not fit).
/// - Each feature goes to the bank opposite its first operand, falling back to
///   the other feature bank. Short-lived tensors fill bottom-up; tensors kept
///   across later steps (shortcut sources) fill top-down.
/// - Weights are packed in layer order into Bank2, then Bank3, each conv's
///   BN parameters starting at the word after its weights.
pub fn allocate(g: &QuantizedGraph, layouts: &[Layout], tm: &TmSpec) -> Result<PlacementPlan, CompileError> {
    let n = g.shapes.len();
    let steps = g.layers.len();
    let mut def = vec![None; n];
    let mut last = vec![0usize; n];
    def[QuantizedGraph::INPUT] = Some(0);
    for (s, layer) in g.layers.iter().enumerate() {
        def[layer.output] = Some(s);
        for &t in &layer.inputs {
            last[t] = last[t].max(s);
        }
    }
    let out_last = steps.saturating_sub(1);
    last[g.output] = last[g.output].max(out_last);
    for t in 0..n {
        if let Some(d) = def[t] {
            last[t] = last[t].max(d);
        }
    }

    let mut tensors: Vec<Option<Placement>> = vec![None; n];
    let mut placed: Vec<Placement> = Vec::new();
    let make = |t: TensorId, bank: Bank, word: usize| Placement {
        desc: OperandDesc::new(bank, word as u16, layouts[t]),
        bytes: g.shapes[t].bytes(),
        def: def[t].unwrap(),
        last_use: last[t],
    };

    let input_bytes = g.input.bytes();
    if input_bytes > tm.capacity(Bank::I) {
        return Err(CompileError::CapacityExceeded { bank: Bank::I, needed: input_bytes, available: tm.capacity(Bank::I) });
    }
    let p = make(QuantizedGraph::INPUT, Bank::I, 0);
    tensors[QuantizedGraph::INPUT] = Some(p);
    placed.push(p);

    for layer in &g.layers {
        let t = layer.output;
        let words = g.shapes[t].bytes().div_ceil(WORD_BYTES);
        let (d, l) = (def[t].unwrap(), last[t]);
        let first_bank = tensors[layer.inputs[0]].map(|p| p.desc.bank);
        let order: Vec<Bank> = if t == g.output {
            vec![Bank::O, Bank::B0, Bank::B1]
        } else if first_bank == Some(Bank::B0) {
            vec![Bank::B1, Bank::B0]
        } else {
            vec![Bank::B0, Bank::B1]
        };
        let long_lived = l > d + 1;
        let mut spot = None;
        for &bank in &order {
            let cap = tm.words(bank);
            let b = busy(&placed, bank, d, l);
            let at = if long_lived && bank != Bank::O { top_down(&b, words, cap) } else { bottom_up(&b, words, cap) };
            if let Some(w) = at {
                spot = Some((bank, w));
                break;
            }
        }
        let Some((bank, w)) = spot else {
            let bank = order[if t == g.output { 1 } else { 0 }];
            let available = largest_gap(&busy(&placed, bank, d, l), tm.words(bank)) * WORD_BYTES;
            return Err(CompileError::CapacityExceeded { bank, needed: g.shapes[t].bytes(), available });
        };
        let p = make(t, bank, w);
        tensors[t] = Some(p);
        placed.push(p);
    }

    // parameters
    let mut blobs: Vec<Option<BlobPlacement>> = vec![None; g.blobs.len()];
    let mut cursor = [0usize; 2];
    let weight_banks = [Bank::B2, Bank::B3];
    for layer in &g.layers {
        let ids: Vec<BlobId> =
            [layer.op.weight_id, layer.op.bnparam_id].into_iter().flatten().filter(|&b| blobs[b].is_none()).collect();
        if ids.is_empty() {
            continue;
        }
        let unit: usize = ids.iter().map(|&b| g.blobs[b].byte_len().div_ceil(WORD_BYTES)).sum();
        let Some(k) = (0..2).find(|&k| cursor[k] + unit <= tm.words(weight_banks[k])) else {
            return Err(CompileError::CapacityExceeded {
                bank: Bank::B3,
                needed: unit * WORD_BYTES,
                available: (tm.words(Bank::B3) - cursor[1]) * WORD_BYTES,
            });
        };
        for b in ids {
            let bytes = g.blobs[b].byte_len();
            blobs[b] = Some(BlobPlacement { blob: b, bank: weight_banks[k], word_off: cursor[k] as u16, bytes });
            cursor[k] += bytes.div_ceil(WORD_BYTES);
        }
    }

    let mut peak = [0usize; 6];
    let mut high_water = [0usize; 6];
    for p in &placed {
        let i = p.desc.bank.index();
        high_water[i] = high_water[i].max(p.word_range().1 * WORD_BYTES);
    }
    for s in 0..steps.max(1) {
        let mut live = [0usize; 6];
        for p in placed.iter().filter(|p| p.live_at(s)) {
            live[p.desc.bank.index()] += p.bytes;
        }
        for i in 0..6 {
            peak[i] = peak[i].max(live[i]);
        }
    }
    for b in blobs.iter().flatten() {
        let i = b.bank.index();
        peak[i] += b.bytes;
        high_water[i] = high_water[i].max((b.word_off as usize + b.bytes.div_ceil(WORD_BYTES)) * WORD_BYTES);
    }

    Ok(PlacementPlan { tensors, blobs, steps, peak, high_water })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::assign_layouts;
    use crate::ir::{GraphBuilder, TensorShape, WeightInit};

    #[test]
    fn fit_helpers() {
        let b = [(0, 4), (10, 12)];
        assert_eq!(bottom_up(&b, 6, 20), Some(4));
        assert_eq!(bottom_up(&b, 7, 20), Some(12));
        assert_eq!(bottom_up(&b, 9, 20), None);
        assert_eq!(top_down(&b, 8, 20), Some(12));
        assert_eq!(top_down(&b, 6, 20), Some(14));
        assert_eq!(top_down(&b, 9, 20), None);
        assert_eq!(largest_gap(&b, 20), 8);
    }

    #[test]
    fn conv_then_gap() {
        let mut b = GraphBuilder::new(TensorShape { h: 8, w: 8, c: 4 }, WeightInit::Zeros);
        let c = b.conv(b.input(), 3, 8, 2, true, true).unwrap();
        let y = b.gap(c).unwrap();
        let g = b.finish(y).unwrap();
        let plan = allocate(&g, &assign_layouts(&g), &TmSpec::default()).unwrap();
        let bank = |t: TensorId| plan.tensors[t].unwrap().desc.bank;
        assert_eq!((bank(0), bank(c), bank(y)), (Bank::I, Bank::B0, Bank::O));
        assert_eq!(plan.blob(0).unwrap().word_off, 0);
        // 288 weight bytes -> 9 words, then BN params
        assert_eq!(plan.blob(1).unwrap().word_off, 9);
        assert!(plan.conflicts().is_empty());
    }

    #[test]
    fn oversized_feature_names_bank() {
        let mut b = GraphBuilder::new(TensorShape { h: 256, w: 256, c: 3 }, WeightInit::Zeros);
        let c = b.conv(b.input(), 1, 16, 1, false, false).unwrap();
        let y = b.gap(c).unwrap();
        let g = b.finish(y).unwrap();
        let err = allocate(&g, &assign_layouts(&g), &TmSpec::default()).unwrap_err();
        match err {
            CompileError::CapacityExceeded { bank, needed, .. } => {
                assert_eq!(bank, Bank::B0);
                assert_eq!(needed, 1 << 20);
            }
            e => panic!("{e}"),
        }
    }
}
