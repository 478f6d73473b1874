//! Weight image file: parameter bank contents plus the I/O contract of the program.

use serde::{Deserialize, Serialize};

use super::CompileError;
use crate::ir::{BlobId, TensorShape};
use crate::isa::{Bank, Layout, OperandDesc};
use crate::sim::{SimError, TmState};

pub const WEIGHT_MAGIC: &[u8; 4] = b"NCPW";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlobKind {
    Weights,
    Bn,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestBlob {
    pub id: BlobId,
    pub kind: BlobKind,
    pub bank: Bank,
    pub word_off: u16,
    pub byte_len: usize,
}

/// Location of the program's input or output tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoDesc {
    pub shape: TensorShape,
    pub bank: Bank,
    pub word_off: u16,
    pub layout: Layout,
}

impl IoDesc {
    pub fn operand(&self) -> OperandDesc {
        OperandDesc::new(self.bank, self.word_off, self.layout)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightManifest {
    pub blobs: Vec<ManifestBlob>,
    pub bank2_len: usize,
    pub bank3_len: usize,
    pub input: IoDesc,
    pub output: IoDesc,
}

/// Bank2/Bank3 contents, each starting at byte 0 of its bank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightImage {
    pub manifest: WeightManifest,
    pub bank2: Vec<u8>,
    pub bank3: Vec<u8>,
}

impl WeightImage {
    /// `NCPW`, u32 LE manifest length, JSON manifest, Bank2 bytes, Bank3 bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest = serde_json::to_vec(&self.manifest).expect("manifest");
        let mut out = Vec::with_capacity(8 + manifest.len() + self.bank2.len() + self.bank3.len());
        out.extend_from_slice(WEIGHT_MAGIC);
        out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
        out.extend_from_slice(&manifest);
        out.extend_from_slice(&self.bank2);
        out.extend_from_slice(&self.bank3);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CompileError> {
        let bad = |m: &str| CompileError::BadImage(m.to_string());
        if bytes.len() < 8 || &bytes[..4] != WEIGHT_MAGIC {
            return Err(bad("missing NCPW magic"));
        }
        let mlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let body = &bytes[8..];
        if body.len() < mlen {
            return Err(bad("truncated manifest"));
        }
        let manifest: WeightManifest =
            serde_json::from_slice(&body[..mlen]).map_err(|e| CompileError::BadImage(format!("manifest: {e}")))?;
        let rest = &body[mlen..];
        if rest.len() != manifest.bank2_len + manifest.bank3_len {
            return Err(CompileError::BadImage(format!(
                "manifest declares {} + {} bank bytes, file holds {}",
                manifest.bank2_len,
                manifest.bank3_len,
                rest.len()
            )));
        }
        if manifest.bank2_len > Bank::B2.bytes() || manifest.bank3_len > Bank::B3.bytes() {
            return Err(bad("bank contents larger than the bank"));
        }
        let (b2, b3) = rest.split_at(manifest.bank2_len);
        Ok(Self { bank2: b2.to_vec(), bank3: b3.to_vec(), manifest })
    }

    /// Copies both parameter banks into `tm`.
    pub fn load_into(&self, tm: &mut TmState) -> Result<(), SimError> {
        tm.write(Bank::B2, 0, &self.bank2)?;
        tm.write(Bank::B3, 0, &self.bank3)
    }

    /// A fresh TM with parameters loaded and `input` (canonical order) stored.
    pub fn prepare(&self, input: &[i8]) -> Result<TmState, SimError> {
        let mut tm = TmState::new();
        self.load_into(&mut tm)?;
        tm.write_tensor(self.manifest.input.operand(), self.manifest.input.shape, input)?;
        Ok(tm)
    }

    /// The output tensor in canonical order.
    pub fn read_output(&self, tm: &TmState) -> Result<Vec<i8>, SimError> {
        tm.read_tensor(self.manifest.output.operand(), self.manifest.output.shape)
    }
}
