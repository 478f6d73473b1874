//! 128-bit instruction word layout.
//!
//! ```text
//! [4:0]     opcode            [5] bn_en     [6] relu_en   [7] reserved
//! [8]       k3                [10:9] stride (literal 1 or 2)
//! [19:11]   ih                [28:20] iw
//! [39:29]   ic                [50:40] oc
//! [67:51]   src0  \
//! [84:68]   src1   | operand: bank[2:0], word_off[15:3], layout[16]
//! [101:85]  dst    |
//! [118:102] par   /
//! [127:119] reserved
//! jump only: [20:5] target PC
//! ```

use super::{Bank, Instruction, IsaError, Layout, Opcode, OperandDesc, ParUse};

pub const FILE_MAGIC: &[u8; 4] = b"NCP1";

const OPCODE: (u32, u32) = (0, 5);
const BN_EN: (u32, u32) = (5, 1);
const RELU_EN: (u32, u32) = (6, 1);
const RESERVED_LO: (u32, u32) = (7, 1);
const K3: (u32, u32) = (8, 1);
const STRIDE: (u32, u32) = (9, 2);
const IH: (u32, u32) = (11, 9);
const IW: (u32, u32) = (20, 9);
const IC: (u32, u32) = (29, 11);
const OC: (u32, u32) = (40, 11);
const SRC0: u32 = 51;
const SRC1: u32 = 68;
const DST: u32 = 85;
const PAR: u32 = 102;
const OPERAND_BITS: u32 = 17;
const RESERVED_HI: (u32, u32) = (119, 9);
const TARGET: (u32, u32) = (5, 16);

fn get(word: u128, (lo, width): (u32, u32)) -> u64 {
    ((word >> lo) & ((1u128 << width) - 1)) as u64
}

fn put(word: &mut u128, (lo, width): (u32, u32), value: u64) {
    debug_assert!(value < (1u64 << width));
    *word |= (value as u128) << lo;
}

fn operand_bits(d: &OperandDesc) -> u64 {
    d.bank as u64 | (d.word_off as u64) << 3 | (d.layout as u64) << 16
}

fn check_operand(field: &'static str, d: &OperandDesc) -> Result<(), IsaError> {
    if d.word_off as usize >= d.bank.words() {
        return Err(IsaError::BankRange { field, bank: d.bank as u8, word_off: d.word_off });
    }
    Ok(())
}

fn check_range(field: &'static str, value: u16, max: u16) -> Result<(), IsaError> {
    if value == 0 || value > max {
        return Err(IsaError::FieldRange { field, value: value as u64 });
    }
    Ok(())
}

fn check_zero(field: &'static str, nonzero: bool) -> Result<(), IsaError> {
    if nonzero {
        Err(IsaError::NonCanonical(field))
    } else {
        Ok(())
    }
}

/// Checks that `ins` is canonical and every used field is in range.
pub(crate) fn check_canonical(ins: &Instruction) -> Result<(), IsaError> {
    let f = ins.opcode.fields();
    if !f.flags {
        check_zero("bn", ins.bn_en)?;
        check_zero("relu", ins.relu_en)?;
    }
    if !f.k3 {
        check_zero("k3", ins.k3)?;
    }
    if f.stride {
        if ins.stride != 1 && ins.stride != 2 {
            return Err(IsaError::FieldRange { field: "stride", value: ins.stride as u64 });
        }
    } else {
        check_zero("stride", ins.stride != 0)?;
    }
    if f.shape {
        check_range("ih", ins.ih, 256)?;
        check_range("iw", ins.iw, 256)?;
        check_range("ic", ins.ic, 1024)?;
    } else {
        check_zero("ih", ins.ih != 0)?;
        check_zero("iw", ins.iw != 0)?;
        check_zero("ic", ins.ic != 0)?;
    }
    if f.oc {
        check_range("oc", ins.oc, 1024)?;
    } else {
        check_zero("oc", ins.oc != 0)?;
    }
    let par_used = match f.par {
        ParUse::Always => true,
        ParUse::WhenBn => ins.bn_en,
        ParUse::Never => false,
    };
    for (name, used, d) in [
        ("src0", f.src0, &ins.src0),
        ("src1", f.src1, &ins.src1),
        ("dst", f.dst, &ins.dst),
        ("par", par_used, &ins.par),
    ] {
        if used {
            check_operand(name, d)?;
        } else {
            check_zero(name, !d.is_zero())?;
        }
    }
    if !f.target {
        check_zero("target", ins.jump_target != 0)?;
    }
    Ok(())
}

pub fn encode(ins: &Instruction) -> Result<[u8; 16], IsaError> {
    check_canonical(ins)?;
    let mut word = 0u128;
    put(&mut word, OPCODE, ins.opcode.code() as u64);
    if ins.opcode == Opcode::Jump {
        put(&mut word, TARGET, ins.jump_target as u64);
        return Ok(word.to_le_bytes());
    }
    put(&mut word, BN_EN, ins.bn_en as u64);
    put(&mut word, RELU_EN, ins.relu_en as u64);
    put(&mut word, K3, ins.k3 as u64);
    put(&mut word, STRIDE, ins.stride as u64);
    put(&mut word, IH, ins.ih as u64);
    put(&mut word, IW, ins.iw as u64);
    put(&mut word, IC, ins.ic as u64);
    put(&mut word, OC, ins.oc as u64);
    for (base, d) in [(SRC0, &ins.src0), (SRC1, &ins.src1), (DST, &ins.dst), (PAR, &ins.par)] {
        put(&mut word, (base, OPERAND_BITS), operand_bits(d));
    }
    Ok(word.to_le_bytes())
}

fn decode_operand(field: &'static str, bits: u64) -> Result<OperandDesc, IsaError> {
    let bank_idx = (bits & 0x7) as u8;
    let word_off = ((bits >> 3) & 0x1FFF) as u16;
    let bank = Bank::from_index(bank_idx).ok_or(IsaError::BankRange { field, bank: bank_idx, word_off })?;
    let layout = if bits >> 16 & 1 == 1 { Layout::Interleaved } else { Layout::PixelMajor };
    Ok(OperandDesc { bank, word_off, layout })
}

pub fn decode(bytes: &[u8; 16]) -> Result<Instruction, IsaError> {
    let word = u128::from_le_bytes(*bytes);
    let opcode = Opcode::from_code(get(word, OPCODE) as u8)?;
    if opcode == Opcode::Jump {
        if word >> (TARGET.0 + TARGET.1) != 0 {
            return Err(IsaError::ReservedBits);
        }
        return Ok(Instruction::jump(get(word, TARGET) as u16));
    }
    if get(word, RESERVED_LO) != 0 || get(word, RESERVED_HI) != 0 {
        return Err(IsaError::ReservedBits);
    }
    let ins = Instruction {
        opcode,
        bn_en: get(word, BN_EN) == 1,
        relu_en: get(word, RELU_EN) == 1,
        k3: get(word, K3) == 1,
        stride: get(word, STRIDE) as u8,
        ih: get(word, IH) as u16,
        iw: get(word, IW) as u16,
        ic: get(word, IC) as u16,
        oc: get(word, OC) as u16,
        src0: decode_operand("src0", get(word, (SRC0, OPERAND_BITS)))?,
        src1: decode_operand("src1", get(word, (SRC1, OPERAND_BITS)))?,
        dst: decode_operand("dst", get(word, (DST, OPERAND_BITS)))?,
        par: decode_operand("par", get(word, (PAR, OPERAND_BITS)))?,
        jump_target: 0,
    };
    check_canonical(&ins)?;
    Ok(ins)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn end_and_sup_words() {
        let mut end = [0u8; 16];
        end[0] = 0x0D;
        assert_eq!(encode(&Instruction::end()).unwrap(), end);
        let mut sup = [0u8; 16];
        sup[0] = 0x0C;
        assert_eq!(encode(&Instruction::sup()).unwrap(), sup);
    }

    #[test]
    fn jump_word_packs_target() {
        // independent packing: opcode in bits 0..5, target in bits 5..21
        let expect: u128 = 0x0B | (5u128 << 5);
        assert_eq!(encode(&Instruction::jump(5)).unwrap(), expect.to_le_bytes());
        assert_eq!(decode(&expect.to_le_bytes()).unwrap(), Instruction::jump(5));
    }

    #[test]
    fn decode_errors() {
        assert_eq!(decode(&[0; 16]), Err(IsaError::IllegalOpcode(0)));
        assert_eq!(decode(&[0; 16]).unwrap_err().to_string(), "illegal opcode 0");
        let mut w = encode(&Instruction::end()).unwrap();
        w[15] |= 0x80;
        assert_eq!(decode(&w), Err(IsaError::ReservedBits));
        assert_eq!(decode(&w).unwrap_err().to_string(), "reserved bits nonzero");
        let mut w = encode(&Instruction::end()).unwrap();
        w[0] |= 0x80; // bit 7
        assert_eq!(decode(&w), Err(IsaError::ReservedBits));
        let mut w = encode(&Instruction::end()).unwrap();
        w[2] = 1; // ih on an end
        assert_eq!(decode(&w), Err(IsaError::NonCanonical("ih")));
        // jump with bits above the target set
        let w = (0x0Bu128 | 1u128 << 40).to_le_bytes();
        assert_eq!(decode(&w), Err(IsaError::ReservedBits));
    }

    #[test]
    fn decode_rejects_bad_bank() {
        let d = OperandDesc::new(Bank::B0, 0, Layout::PixelMajor);
        let ins = Instruction::unary(Opcode::Relu, d, d, (1, 1, 1));
        let mut word = u128::from_le_bytes(encode(&ins).unwrap());
        word |= 7u128 << DST; // bank index 7
        assert!(matches!(decode(&word.to_le_bytes()), Err(IsaError::BankRange { field: "dst", .. })));
    }

    #[test]
    fn encode_rejects_non_canonical_and_range() {
        let mut ins = Instruction::end();
        ins.ic = 3;
        assert_eq!(encode(&ins), Err(IsaError::NonCanonical("ic")));
        let d = OperandDesc::new(Bank::O, 1024, Layout::PixelMajor);
        let ins = Instruction::unary(Opcode::Relu, d, d, (1, 1, 1));
        assert!(matches!(encode(&ins), Err(IsaError::BankRange { .. })));
        let ok = OperandDesc::new(Bank::B0, 0, Layout::PixelMajor);
        let ins = Instruction::unary(Opcode::Relu, ok, ok, (257, 1, 1));
        assert_eq!(encode(&ins), Err(IsaError::FieldRange { field: "ih", value: 257 }));
        let mut conv = Instruction::unary(Opcode::Conv, ok, ok, (4, 4, 4));
        conv.oc = 4;
        conv.stride = 3;
        assert!(matches!(encode(&conv), Err(IsaError::FieldRange { field: "stride", .. })));
        conv.stride = 1;
        conv.src1 = OperandDesc::new(Bank::B2, 0, Layout::PixelMajor);
        conv.par = OperandDesc::new(Bank::B2, 1, Layout::PixelMajor);
        // par set without bn_en
        assert_eq!(encode(&conv), Err(IsaError::NonCanonical("par")));
        conv.bn_en = true;
        assert!(encode(&conv).is_ok());
    }
}
