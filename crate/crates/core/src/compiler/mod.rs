//! Graph to program lowering.
//!
//! `fuse` folds bn/relu into convolutions, `assign_layouts` picks a storage
//! layout per tensor, `allocate` places tensors and parameters in the banks
//! and `lower` emits the instruction stream and weight image.

mod alloc;
mod fuse;
mod image;
mod layouts;
mod lower;
mod report;

use thiserror::Error;

use crate::ir::{IrError, QuantizedGraph, TensorId};
use crate::isa::{Bank, Layout, Program, WORD_BYTES};

pub use alloc::{allocate, BlobPlacement, Placement, PlacementPlan};
pub use fuse::fuse;
pub use image::{BlobKind, IoDesc, ManifestBlob, WeightImage, WeightManifest, WEIGHT_MAGIC};
pub use layouts::assign_layouts;
pub use lower::lower;
pub use report::{memory_report, BankUsage, MemoryReport, TensorRow};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompileError {
    #[error("capacity exceeded in {bank}: need {needed} bytes, {available} available")]
    CapacityExceeded { bank: Bank, needed: usize, available: usize },
    #[error("concat into tensor {tensor}: second half starts at byte {offset}, not on a word boundary")]
    UnalignedConcat { tensor: TensorId, offset: usize },
    #[error("plan does not match graph: {0}")]
    PlanMismatch(String),
    #[error("generated program failed validation: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("bad weight image: {0}")]
    BadImage(String),
    #[error(transparent)]
    Ir(#[from] IrError),
}

/// Bank capacities available to the allocator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TmSpec {
    pub bytes: [usize; 6],
}

impl Default for TmSpec {
    fn default() -> Self {
        Self { bytes: Bank::ALL.map(Bank::bytes) }
    }
}

impl TmSpec {
    pub const WORD: usize = WORD_BYTES;

    pub fn capacity(&self, bank: Bank) -> usize {
        self.bytes[bank.index()].min(bank.bytes())
    }

    pub fn words(&self, bank: Bank) -> usize {
        self.capacity(bank) / WORD_BYTES
    }

    pub fn total(&self) -> usize {
        Bank::ALL.iter().map(|&b| self.capacity(b)).sum()
    }
}

/// Everything the compiler produces for one graph.
#[derive(Debug, Clone)]
pub struct Compiled {
    pub fused: QuantizedGraph,
    pub layouts: Vec<Layout>,
    pub plan: PlacementPlan,
    pub program: Program,
    pub image: WeightImage,
}

impl Compiled {
    pub fn report(&self, tm: &TmSpec) -> MemoryReport {
        memory_report(&self.plan, tm)
    }
}

pub fn compile(g: &QuantizedGraph, tm: &TmSpec) -> Result<Compiled, CompileError> {
    g.validate()?;
    let fused = fuse(g);
    let layouts = assign_layouts(&fused);
    let plan = allocate(&fused, &layouts, tm)?;
    let (program, image) = lower(&fused, &plan)?;
    Ok(Compiled { fused, layouts, plan, program, image })
}
