//! The 13-instruction NCP instruction set.
//!
//! Every instruction is a 128-bit little-endian word. Neural (N-type)
//! instructions each describe a whole layer; control (C-type) instructions
//! steer the program counter. Operands address the tensor memory at 32-byte
//! word granularity.

mod asm;
mod encoding;
mod validate;

pub use asm::{assemble, disassemble, AsmError};
pub use encoding::{decode, encode, FILE_MAGIC};
pub use validate::{validate, Diagnostic, Severity};

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Bytes per tensor-memory word.
pub const WORD_BYTES: usize = 32;
pub const MAX_PROGRAM_LEN: usize = 1 << 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IsaError {
    #[error("illegal opcode {0}")]
    IllegalOpcode(u8),
    #[error("reserved bits nonzero")]
    ReservedBits,
    #[error("unused field `{0}` is nonzero")]
    NonCanonical(&'static str),
    #[error("field `{field}` out of range: {value}")]
    FieldRange { field: &'static str, value: u64 },
    #[error("operand `{field}` outside its bank: bank {bank}, word {word_off}")]
    BankRange { field: &'static str, bank: u8, word_off: u16 },
    #[error("bad program file: {0}")]
    BadFile(String),
    #[error("program has {0} instructions, limit is 65536")]
    TooLong(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Opcode {
    Bn = 0x01,
    Relu = 0x02,
    Conv = 0x03,
    Dwconv = 0x04,
    Add = 0x05,
    Move = 0x06,
    Dsam = 0x07,
    Usam = 0x08,
    Maxp = 0x09,
    Gap = 0x0A,
    Jump = 0x0B,
    Sup = 0x0C,
    End = 0x0D,
}

/// How an opcode uses the `par` operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ParUse {
    Never,
    Always,
    WhenBn,
}

/// Which instruction fields an opcode reads; everything else must be zero.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FieldUse {
    pub flags: bool,
    pub k3: bool,
    pub stride: bool,
    pub shape: bool,
    pub oc: bool,
    pub src0: bool,
    pub src1: bool,
    pub dst: bool,
    pub par: ParUse,
    pub target: bool,
}

impl Opcode {
    pub const ALL: [Opcode; 13] = [
        Opcode::Bn,
        Opcode::Relu,
        Opcode::Conv,
        Opcode::Dwconv,
        Opcode::Add,
        Opcode::Move,
        Opcode::Dsam,
        Opcode::Usam,
        Opcode::Maxp,
        Opcode::Gap,
        Opcode::Jump,
        Opcode::Sup,
        Opcode::End,
    ];

    pub fn from_code(code: u8) -> Result<Self, IsaError> {
        Self::ALL.get((code as usize).wrapping_sub(1)).copied().ok_or(IsaError::IllegalOpcode(code))
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::Bn => "bn",
            Opcode::Relu => "relu",
            Opcode::Conv => "conv",
            Opcode::Dwconv => "dwconv",
            Opcode::Add => "add",
            Opcode::Move => "move",
            Opcode::Dsam => "dsam",
            Opcode::Usam => "usam",
            Opcode::Maxp => "maxp",
            Opcode::Gap => "gap",
            Opcode::Jump => "jump",
            Opcode::Sup => "sup",
            Opcode::End => "end",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|op| op.mnemonic() == s)
    }

    /// Neural (layer) instruction, as opposed to control.
    pub fn is_neural(self) -> bool {
        !matches!(self, Opcode::Jump | Opcode::Sup | Opcode::End)
    }

    pub(crate) fn fields(self) -> FieldUse {
        let none = FieldUse {
            flags: false,
            k3: false,
            stride: false,
            shape: false,
            oc: false,
            src0: false,
            src1: false,
            dst: false,
            par: ParUse::Never,
            target: false,
        };
        let unary = FieldUse { shape: true, src0: true, dst: true, ..none };
        match self {
            Opcode::Bn => FieldUse { par: ParUse::Always, ..unary },
            Opcode::Relu | Opcode::Move | Opcode::Dsam | Opcode::Usam | Opcode::Maxp | Opcode::Gap => unary,
            Opcode::Conv => FieldUse {
                flags: true,
                k3: true,
                stride: true,
                oc: true,
                src1: true,
                par: ParUse::WhenBn,
                ..unary
            },
            Opcode::Dwconv => FieldUse { flags: true, stride: true, src1: true, par: ParUse::WhenBn, ..unary },
            Opcode::Add => FieldUse { src1: true, ..unary },
            Opcode::Jump => FieldUse { target: true, ..none },
            Opcode::Sup | Opcode::End => none,
        }
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

/// The six tensor-memory banks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Bank {
    #[serde(rename = "bi")]
    I = 0,
    #[serde(rename = "b0")]
    B0 = 1,
    #[serde(rename = "b1")]
    B1 = 2,
    #[serde(rename = "b2")]
    B2 = 3,
    #[serde(rename = "b3")]
    B3 = 4,
    #[serde(rename = "bo")]
    O = 5,
}

impl Bank {
    pub const ALL: [Bank; 6] = [Bank::I, Bank::B0, Bank::B1, Bank::B2, Bank::B3, Bank::O];

    pub fn from_index(i: u8) -> Option<Self> {
        Self::ALL.get(i as usize).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn bytes(self) -> usize {
        match self {
            Bank::I => 192 * 1024,
            Bank::B0 | Bank::B1 => 128 * 1024,
            Bank::B2 | Bank::B3 => 256 * 1024,
            Bank::O => 32 * 1024,
        }
    }

    pub fn words(self) -> usize {
        self.bytes() / WORD_BYTES
    }

    pub fn name(self) -> &'static str {
        match self {
            Bank::I => "bi",
            Bank::B0 => "b0",
            Bank::B1 => "b1",
            Bank::B2 => "b2",
            Bank::B3 => "b3",
            Bank::O => "bo",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|b| b.name() == s)
    }

    pub fn is_weight_bank(self) -> bool {
        matches!(self, Bank::B2 | Bank::B3)
    }
}

impl fmt::Display for Bank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Placement of a tensor in memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Each channel's pixels contiguous in row-major order, channels in sequence.
    #[default]
    PixelMajor,
    /// 32-channel tiles in sequence, channels contiguous per pixel inside a tile.
    Interleaved,
}

impl Layout {
    pub fn letter(self) -> char {
        match self {
            Layout::PixelMajor => 'p',
            Layout::Interleaved => 'i',
        }
    }
}

/// Bank, word offset and layout of one instruction operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OperandDesc {
    pub bank: Bank,
    pub word_off: u16,
    pub layout: Layout,
}

impl Default for OperandDesc {
    fn default() -> Self {
        Self::ZERO
    }
}

impl OperandDesc {
    pub const ZERO: OperandDesc = OperandDesc { bank: Bank::I, word_off: 0, layout: Layout::PixelMajor };

    pub fn new(bank: Bank, word_off: u16, layout: Layout) -> Self {
        Self { bank, word_off, layout }
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::ZERO
    }

    pub fn byte_offset(&self) -> usize {
        self.word_off as usize * WORD_BYTES
    }
}

impl fmt::Display for OperandDesc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.bank, self.word_off, self.layout.letter())
    }
}

/// One decoded instruction. Fields an opcode does not use are zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Instruction {
    pub opcode: Opcode,
    pub bn_en: bool,
    pub relu_en: bool,
    pub k3: bool,
    /// 1 or 2 for convolutions, 0 otherwise.
    pub stride: u8,
    pub ih: u16,
    pub iw: u16,
    pub ic: u16,
    pub oc: u16,
    pub src0: OperandDesc,
    pub src1: OperandDesc,
    pub dst: OperandDesc,
    pub par: OperandDesc,
    pub jump_target: u16,
}

impl Instruction {
    /// All-zero instruction of the given opcode.
    pub fn empty(opcode: Opcode) -> Self {
        Self {
            opcode,
            bn_en: false,
            relu_en: false,
            k3: false,
            stride: 0,
            ih: 0,
            iw: 0,
            ic: 0,
            oc: 0,
            src0: OperandDesc::ZERO,
            src1: OperandDesc::ZERO,
            dst: OperandDesc::ZERO,
            par: OperandDesc::ZERO,
            jump_target: 0,
        }
    }

    pub fn end() -> Self {
        Self::empty(Opcode::End)
    }

    pub fn sup() -> Self {
        Self::empty(Opcode::Sup)
    }

    pub fn jump(target: u16) -> Self {
        Self { jump_target: target, ..Self::empty(Opcode::Jump) }
    }

    /// A shape-carrying unary instruction (`relu`, `move`, `dsam`, `usam`, `maxp`, `gap`).
    pub fn unary(opcode: Opcode, src: OperandDesc, dst: OperandDesc, shape: (u16, u16, u16)) -> Self {
        Self { ih: shape.0, iw: shape.1, ic: shape.2, src0: src, dst, ..Self::empty(opcode) }
    }

    pub fn kernel(&self) -> usize {
        if self.k3 || self.opcode == Opcode::Dwconv {
            3
        } else {
            1
        }
    }

    /// Shape read from `src0` as `(h, w, c)`.
    pub fn input_shape(&self) -> (usize, usize, usize) {
        (self.ih as usize, self.iw as usize, self.ic as usize)
    }

    /// Shape written to `dst` as `(h, w, c)`.
    pub fn output_shape(&self) -> (usize, usize, usize) {
        let (h, w, c) = self.input_shape();
        let s = self.stride.max(1) as usize;
        match self.opcode {
            Opcode::Conv => (h.div_ceil(s), w.div_ceil(s), self.oc as usize),
            Opcode::Dwconv => (h.div_ceil(s), w.div_ceil(s), c),
            Opcode::Dsam | Opcode::Maxp => (h.div_ceil(2), w.div_ceil(2), c),
            Opcode::Usam => (h * 2, w * 2, c),
            Opcode::Gap => (1, 1, c),
            _ => (h, w, c),
        }
    }

    /// Channels covered by the `par` operand.
    pub fn par_channels(&self) -> usize {
        match self.opcode {
            Opcode::Conv => self.oc as usize,
            _ => self.ic as usize,
        }
    }

    /// Byte length of every operand this instruction touches.
    pub fn operand_extents(&self) -> Vec<(&'static str, OperandDesc, usize)> {
        let f = self.opcode.fields();
        let (h, w, c) = self.input_shape();
        let (oh, ow, oc) = self.output_shape();
        let mut out = Vec::new();
        if f.src0 {
            out.push(("src0", self.src0, h * w * c));
        }
        if f.src1 {
            let len = match self.opcode {
                Opcode::Conv => self.oc as usize * c * self.kernel() * self.kernel(),
                Opcode::Dwconv => c * 9,
                _ => h * w * c,
            };
            out.push(("src1", self.src1, len));
        }
        if f.dst {
            out.push(("dst", self.dst, oh * ow * oc));
        }
        let par = match f.par {
            ParUse::Always => true,
            ParUse::WhenBn => self.bn_en,
            ParUse::Never => false,
        };
        if par {
            out.push(("par", self.par, self.par_channels() * 8));
        }
        out
    }
}

impl Instruction {
    /// A uniformly drawn canonical instruction: every used field in range,
    /// every unused field zero. Not necessarily executable.
    pub fn random<R: rand::Rng + ?Sized>(rng: &mut R) -> Self {
        let opcode = Opcode::ALL[rng.gen_range(0..Opcode::ALL.len())];
        let f = opcode.fields();
        let operand = |rng: &mut R| {
            let bank = Bank::ALL[rng.gen_range(0..Bank::ALL.len())];
            let layout = if rng.gen() { Layout::Interleaved } else { Layout::PixelMajor };
            OperandDesc::new(bank, rng.gen_range(0..bank.words()) as u16, layout)
        };
        let mut ins = Self::empty(opcode);
        if f.flags {
            ins.bn_en = rng.gen();
            ins.relu_en = rng.gen();
        }
        if f.k3 {
            ins.k3 = rng.gen();
        }
        if f.stride {
            ins.stride = rng.gen_range(1..=2);
        }
        if f.shape {
            ins.ih = rng.gen_range(1..=256);
            ins.iw = rng.gen_range(1..=256);
            ins.ic = rng.gen_range(1..=1024);
        }
        if f.oc {
            ins.oc = rng.gen_range(1..=1024);
        }
        if f.src0 {
            ins.src0 = operand(rng);
        }
        if f.src1 {
            ins.src1 = operand(rng);
        }
        if f.dst {
            ins.dst = operand(rng);
        }
        let par = match f.par {
            ParUse::Always => true,
            ParUse::WhenBn => ins.bn_en,
            ParUse::Never => false,
        };
        if par {
            ins.par = operand(rng);
        }
        if f.target {
            ins.jump_target = rng.gen();
        }
        ins
    }
}

/// A sequence of instructions; execution starts at PC 0.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Program {
    pub instructions: Vec<Instruction>,
}

impl Program {
    pub fn new(instructions: Vec<Instruction>) -> Self {
        Self { instructions }
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    /// Binary program file: `NCP1`, u32 LE count, then 16 bytes per instruction.
    pub fn to_bytes(&self) -> Result<Vec<u8>, IsaError> {
        if self.len() > MAX_PROGRAM_LEN {
            return Err(IsaError::TooLong(self.len()));
        }
        let mut out = Vec::with_capacity(8 + 16 * self.len());
        out.extend_from_slice(FILE_MAGIC);
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        for ins in &self.instructions {
            out.extend_from_slice(&encode(ins)?);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IsaError> {
        if bytes.len() < 8 || &bytes[..4] != FILE_MAGIC {
            return Err(IsaError::BadFile("missing NCP1 magic".into()));
        }
        let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        if count > MAX_PROGRAM_LEN {
            return Err(IsaError::TooLong(count));
        }
        let body = &bytes[8..];
        if body.len() != count * 16 {
            return Err(IsaError::BadFile(format!(
                "header says {count} instructions but body holds {} bytes",
                body.len()
            )));
        }
        let instructions = body
            .chunks_exact(16)
            .map(|w| decode(w.try_into().unwrap()))
            .collect::<Result<_, _>>()?;
        Ok(Self { instructions })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn opcode_codes_are_dense() {
        for (i, op) in Opcode::ALL.iter().enumerate() {
            assert_eq!(op.code() as usize, i + 1);
            assert_eq!(Opcode::from_code(op.code()).unwrap(), *op);
            assert_eq!(Opcode::from_mnemonic(op.mnemonic()), Some(*op));
        }
        assert_eq!(Opcode::from_code(0), Err(IsaError::IllegalOpcode(0)));
        assert_eq!(Opcode::from_code(14), Err(IsaError::IllegalOpcode(14)));
        assert_eq!(Opcode::ALL.iter().filter(|o| o.is_neural()).count(), 10);
    }

    #[test]
    fn bank_geometry() {
        let words: Vec<_> = Bank::ALL.iter().map(|b| b.words()).collect();
        assert_eq!(words, [6144, 4096, 4096, 8192, 8192, 1024]);
        let total: usize = Bank::ALL.iter().map(|b| b.bytes()).sum();
        assert_eq!(total, 992 * 1024);
    }

    #[test]
    fn program_file_rejects_truncation() {
        let p = Program::new(vec![Instruction::end()]);
        let bytes = p.to_bytes().unwrap();
        assert_eq!(Program::from_bytes(&bytes).unwrap(), p);
        assert!(Program::from_bytes(&bytes[..20]).is_err());
        assert!(Program::from_bytes(b"NCPX\0\0\0\0").is_err());
    }
}
