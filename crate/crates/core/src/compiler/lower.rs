use super::image::{BlobKind, IoDesc, ManifestBlob, WeightImage, WeightManifest};
use super::{CompileError, PlacementPlan};
use crate::ir::{Blob, LayerKind, QuantizedGraph};
use crate::isa::{validate, Bank, Instruction, Layout, Opcode, OperandDesc, Program, WORD_BYTES};

fn u16_of(v: usize) -> u16 {
    v as u16
}

/// Emits one instruction per fused layer (two `move`s per concat), then `end`,
/// and packs the parameter banks.
pub fn lower(g: &QuantizedGraph, plan: &PlacementPlan) -> Result<(Program, WeightImage), CompileError> {
    if plan.steps != g.layers.len() || plan.tensors.len() != g.shapes.len() {
        return Err(CompileError::PlanMismatch(format!(
            "plan covers {} steps and {} tensors, graph has {} layers and {} tensors",
            plan.steps,
            plan.tensors.len(),
            g.layers.len(),
            g.shapes.len()
        )));
    }
    let mut out = Vec::with_capacity(g.layers.len() + 1);
    for layer in &g.layers {
        let op = &layer.op;
        let x = g.shape(layer.inputs[0]);
        let src0 = plan.tensor(layer.inputs[0])?.desc;
        let dst = plan.tensor(layer.output)?.desc;
        let shape = (u16_of(x.h), u16_of(x.w), u16_of(x.c));
        let par = match op.bnparam_id {
            Some(b) => plan.blob(b)?.desc(),
            None => OperandDesc::ZERO,
        };
        let ins = match op.kind {
            LayerKind::Conv3x3 | LayerKind::Conv1x1 | LayerKind::Dwconv3x3 => {
                let opcode = if op.kind == LayerKind::Dwconv3x3 { Opcode::Dwconv } else { Opcode::Conv };
                let w = op.weight_id.ok_or_else(|| CompileError::PlanMismatch("convolution without weights".into()))?;
                let mut ins = Instruction::unary(opcode, src0, dst, shape);
                ins.stride = op.stride;
                ins.bn_en = op.bn_fused;
                ins.relu_en = op.relu_fused;
                ins.src1 = plan.blob(w)?.desc();
                ins.par = if op.bn_fused { par } else { OperandDesc::ZERO };
                if opcode == Opcode::Conv {
                    ins.k3 = op.kind == LayerKind::Conv3x3;
                    ins.oc = u16_of(g.shape(layer.output).c);
                }
                ins
            }
            LayerKind::Bn => {
                let mut ins = Instruction::unary(Opcode::Bn, src0, dst, shape);
                ins.par = par;
                ins
            }
            LayerKind::Add => {
                let mut ins = Instruction::unary(Opcode::Add, src0, dst, shape);
                ins.src1 = plan.tensor(layer.inputs[1])?.desc;
                ins
            }
            LayerKind::Concat => {
                let y = g.shape(layer.inputs[1]);
                let split = x.bytes();
                if dst.layout != Layout::PixelMajor || !split.is_multiple_of(WORD_BYTES) {
                    return Err(CompileError::UnalignedConcat { tensor: layer.output, offset: split });
                }
                out.push(Instruction::unary(Opcode::Move, src0, dst, shape));
                let tail = OperandDesc { word_off: dst.word_off + u16_of(split / WORD_BYTES), ..dst };
                let src1 = plan.tensor(layer.inputs[1])?.desc;
                Instruction::unary(Opcode::Move, src1, tail, (u16_of(y.h), u16_of(y.w), u16_of(y.c)))
            }
            LayerKind::Relu => Instruction::unary(Opcode::Relu, src0, dst, shape),
            LayerKind::Move => Instruction::unary(Opcode::Move, src0, dst, shape),
            LayerKind::Dsam => Instruction::unary(Opcode::Dsam, src0, dst, shape),
            LayerKind::Usam => Instruction::unary(Opcode::Usam, src0, dst, shape),
            LayerKind::Maxp => Instruction::unary(Opcode::Maxp, src0, dst, shape),
            LayerKind::Gap => Instruction::unary(Opcode::Gap, src0, dst, shape),
        };
        out.push(ins);
    }
    out.push(Instruction::end());
    let program = Program::new(out);

    let diags = validate(&program);
    if !diags.is_empty() {
        return Err(CompileError::Invalid(diags.iter().map(ToString::to_string).collect()));
    }
    Ok((program, weight_image(g, plan)?))
}

fn weight_image(g: &QuantizedGraph, plan: &PlacementPlan) -> Result<WeightImage, CompileError> {
    let mut bank2 = vec![0u8; plan.high_water[Bank::B2.index()]];
    let mut bank3 = vec![0u8; plan.high_water[Bank::B3.index()]];
    let mut blobs = Vec::new();
    for p in plan.blobs.iter().flatten() {
        let (kind, bytes) = match &g.blobs[p.blob] {
            Blob::Weights(w) => (BlobKind::Weights, w.data.iter().map(|&v| v as u8).collect::<Vec<u8>>()),
            Blob::Bn(b) => (BlobKind::Bn, b.to_bytes()),
        };
        let dest = if p.bank == Bank::B2 { &mut bank2 } else { &mut bank3 };
        let at = p.word_off as usize * WORD_BYTES;
        dest[at..at + bytes.len()].copy_from_slice(&bytes);
        blobs.push(ManifestBlob { id: p.blob, kind, bank: p.bank, word_off: p.word_off, byte_len: p.bytes });
    }
    let io = |t| -> Result<IoDesc, CompileError> {
        let p = plan.tensor(t)?;
        Ok(IoDesc { shape: g.shape(t), bank: p.desc.bank, word_off: p.desc.word_off, layout: p.desc.layout })
    };
    let manifest = WeightManifest {
        blobs,
        bank2_len: bank2.len(),
        bank3_len: bank3.len(),
        input: io(QuantizedGraph::INPUT)?,
        output: io(g.output)?,
    };
    Ok(WeightImage { manifest, bank2, bank3 })
}
