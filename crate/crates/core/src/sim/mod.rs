//! Functional and cycle-approximate model of the co-processor.
//!
//! The sequence controller fetches one 128-bit word per step, decodes it and
//! hands it to the matching unit. Instructions execute one at a time.

pub mod converter;
mod exec;
pub mod post;
mod stats;
mod tm;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::{decode, encode, Bank, IsaError, Opcode, Program};

pub use converter::{layout_convert_model, ConversionStats, LayoutConverter};
pub use exec::{exec_conv, exec_dwconv, exec_simple};
pub use post::{exec_post, round_half_even, PostParams};
pub use stats::{calibrate, EnergyCoeffs, InstrRecord, Summary, TraceStats, UnitCounts, DEFAULT_ENERGY_JSON};
pub use tm::TmState;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("bank overrun: {len} bytes at byte {offset} of {bank}")]
    Overrun { bank: Bank, offset: usize, len: usize },
    #[error("operand overlap: {operand} overlaps dst")]
    Overlap { operand: &'static str },
    #[error("zero-sized shape")]
    ZeroShape,
    #[error("illegal instruction at pc {pc}: {source}")]
    Illegal { pc: usize, source: IsaError },
    #[error("pc {pc} out of range (program has {len} instructions)")]
    PcOutOfRange { pc: usize, len: usize },
    #[error("step limit of {0} instructions reached")]
    StepLimit(u64),
    #[error("pc {pc} ({opcode}): {source}")]
    At { pc: usize, opcode: Opcode, source: Box<SimError> },
    #[error("{0}")]
    BadImage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Microarchitecture parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchParams {
    /// TM word width in bytes.
    pub t_tm: usize,
    pub t_oc: usize,
    pub t_hw: usize,
    pub f_clk: f64,
    /// Pipeline fill added to every conv.
    pub conv_fill: u64,
    /// Pipeline depth added to every dwconv.
    pub dw_fill: u64,
}

impl Default for ArchParams {
    fn default() -> Self {
        Self { t_tm: 32, t_oc: 16, t_hw: 32, f_clk: 250e6, conv_fill: 8, dw_fill: 12 }
    }
}

/// GOP/s with the MAC array and the fp32 post units all busy.
pub fn peak_performance(arch: &ArchParams) -> f64 {
    ((arch.t_oc * arch.t_hw + arch.t_oc) as f64) * 2.0 * arch.f_clk / 1e9
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Running,
    Suspended,
    Ended,
}

/// Sequence-controller state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McState {
    pub pc: usize,
    pub status: Status,
}

/// A program loaded into instruction memory plus its tensor memory.
#[derive(Debug, Clone)]
pub struct Machine {
    im: Vec<[u8; 16]>,
    pub mc: McState,
    pub tm: TmState,
    pub arch: ArchParams,
    pub step_limit: u64,
    steps: u64,
    records: Vec<InstrRecord>,
}

impl Machine {
    pub const DEFAULT_STEP_LIMIT: u64 = 1 << 24;

    pub fn new(program: &Program, tm: TmState, arch: ArchParams) -> Result<Self, SimError> {
        let im = program
            .instructions
            .iter()
            .enumerate()
            .map(|(pc, ins)| encode(ins).map_err(|source| SimError::Illegal { pc, source }))
            .collect::<Result<_, _>>()?;
        Ok(Self::from_words(im, tm, arch))
    }

    /// Loads raw instruction words; illegal words fault only when fetched.
    pub fn from_words(im: Vec<[u8; 16]>, tm: TmState, arch: ArchParams) -> Self {
        Self {
            im,
            mc: McState { pc: 0, status: Status::Ended },
            tm,
            arch,
            step_limit: Self::DEFAULT_STEP_LIMIT,
            steps: 0,
            records: Vec::new(),
        }
    }

    /// Executes one instruction.
    pub fn step(&mut self) -> Result<Status, SimError> {
        let pc = self.mc.pc;
        if pc >= self.im.len() {
            return Err(SimError::PcOutOfRange { pc, len: self.im.len() });
        }
        if self.steps >= self.step_limit {
            return Err(SimError::StepLimit(self.step_limit));
        }
        self.steps += 1;
        let ins = decode(&self.im[pc]).map_err(|source| SimError::Illegal { pc, source })?;
        self.mc.status = Status::Running;
        let counts = match ins.opcode {
            Opcode::End => {
                self.mc = McState { pc: 0, status: Status::Ended };
                UnitCounts { cycles: 1, ..Default::default() }
            }
            Opcode::Sup => {
                self.mc = McState { pc: pc + 1, status: Status::Suspended };
                UnitCounts { cycles: 1, ..Default::default() }
            }
            Opcode::Jump => {
                self.mc.pc = ins.jump_target as usize;
                UnitCounts { cycles: 1, ..Default::default() }
            }
            op => {
                let r = match op {
                    Opcode::Conv => exec_conv(&ins, &mut self.tm, &self.arch),
                    Opcode::Dwconv => exec_dwconv(&ins, &mut self.tm, &self.arch),
                    _ => exec_simple(&ins, &mut self.tm, &self.arch),
                };
                self.mc.pc += 1;
                r.map_err(|e| SimError::At { pc, opcode: op, source: Box::new(e) })?
            }
        };
        self.records.push(InstrRecord { pc, opcode: ins.opcode, counts });
        Ok(self.mc.status)
    }

    /// Runs until `end` or `sup`. Calling again after `sup` resumes at the
    /// following instruction; after `end` it restarts from PC 0.
    pub fn run(&mut self) -> Result<Status, SimError> {
        loop {
            match self.step()? {
                Status::Running => {}
                s => return Ok(s),
            }
        }
    }

    pub fn records(&self) -> &[InstrRecord] {
        &self.records
    }

    pub fn stats(&self, coeffs: &EnergyCoeffs) -> TraceStats {
        TraceStats::new(self.records.clone(), self.mc.status, &self.arch, coeffs)
    }
}

/// Runs `p` from PC 0 until it ends or suspends.
pub fn run(p: &Program, tm0: TmState, arch: &ArchParams, coeffs: &EnergyCoeffs) -> Result<(TmState, TraceStats), SimError> {
    let mut m = Machine::new(p, tm0, *arch)?;
    m.run()?;
    let stats = m.stats(coeffs);
    Ok((m.tm, stats))
}
