use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::ir::TensorShape;
use crate::isa::{Bank, OperandDesc};
use crate::layout;

/// Byte contents of the six tensor-memory banks.
#[derive(Clone, PartialEq, Eq)]
pub struct TmState {
    banks: [Vec<u8>; 6],
}

impl std::fmt::Debug for TmState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut d = f.debug_struct("TmState");
        for b in Bank::ALL {
            d.field(b.name(), &self.banks[b.index()].len());
        }
        d.finish()
    }
}

impl Default for TmState {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    bank: Bank,
    bytes: usize,
    file: String,
}

impl TmState {
    pub fn new() -> Self {
        Self { banks: Bank::ALL.map(|b| vec![0u8; b.bytes()]) }
    }

    pub fn bank(&self, b: Bank) -> &[u8] {
        &self.banks[b.index()]
    }

    pub fn bank_mut(&mut self, b: Bank) -> &mut [u8] {
        &mut self.banks[b.index()]
    }

    fn check(bank: Bank, offset: usize, len: usize) -> Result<(), SimError> {
        if offset.checked_add(len).is_none_or(|end| end > bank.bytes()) {
            return Err(SimError::Overrun { bank, offset, len });
        }
        Ok(())
    }

    pub fn read(&self, bank: Bank, offset: usize, len: usize) -> Result<&[u8], SimError> {
        Self::check(bank, offset, len)?;
        Ok(&self.banks[bank.index()][offset..offset + len])
    }

    pub fn write(&mut self, bank: Bank, offset: usize, data: &[u8]) -> Result<(), SimError> {
        Self::check(bank, offset, data.len())?;
        self.banks[bank.index()][offset..offset + data.len()].copy_from_slice(data);
        Ok(())
    }

    /// Reads a tensor stored at `desc` into canonical order.
    pub fn read_tensor(&self, desc: OperandDesc, shape: TensorShape) -> Result<Vec<i8>, SimError> {
        let bytes = self.read(desc.bank, desc.byte_offset(), shape.bytes())?;
        Ok(layout::from_layout(desc.layout, shape, bytes))
    }

    /// Writes canonical data to `desc` in its layout.
    pub fn write_tensor(&mut self, desc: OperandDesc, shape: TensorShape, data: &[i8]) -> Result<(), SimError> {
        let bytes = layout::to_layout(desc.layout, shape, data);
        self.write(desc.bank, desc.byte_offset(), &bytes)
    }

    /// Writes one `<bank>.bin` per bank plus `manifest.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), SimError> {
        fs::create_dir_all(dir)?;
        let mut manifest = Vec::new();
        for b in Bank::ALL {
            let file = format!("{}.bin", b.name());
            fs::write(dir.join(&file), self.bank(b))?;
            manifest.push(ManifestEntry { bank: b, bytes: b.bytes(), file });
        }
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest).expect("manifest"))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, SimError> {
        let text = fs::read_to_string(dir.join("manifest.json"))?;
        let manifest: Vec<ManifestEntry> =
            serde_json::from_str(&text).map_err(|e| SimError::BadImage(e.to_string()))?;
        let mut tm = Self::new();
        for e in manifest {
            if e.bytes != e.bank.bytes() {
                return Err(SimError::BadImage(format!(
                    "{} holds {} bytes, expected {}",
                    e.bank,
                    e.bytes,
                    e.bank.bytes()
                )));
            }
            let data = fs::read(dir.join(&e.file))?;
            if data.len() != e.bytes {
                return Err(SimError::BadImage(format!("{} is {} bytes, manifest says {}", e.file, data.len(), e.bytes)));
            }
            tm.bank_mut(e.bank).copy_from_slice(&data);
        }
        Ok(tm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::Layout;

    #[test]
    fn bounds_are_checked() {
        let mut tm = TmState::new();
        assert!(tm.read(Bank::O, 32768 - 4, 4).is_ok());
        assert!(matches!(tm.read(Bank::O, 32768 - 4, 5), Err(SimError::Overrun { .. })));
        assert!(tm.write(Bank::B0, 131072, &[1]).is_err());
        assert!(tm.read(Bank::B0, usize::MAX, 2).is_err());
    }

    #[test]
    fn tensor_round_trip_interleaved() {
        let mut tm = TmState::new();
        let shape = TensorShape { h: 3, w: 2, c: 40 };
        let data: Vec<i8> = (0..shape.bytes()).map(|i| (i * 7) as i8).collect();
        let d = OperandDesc::new(Bank::B1, 5, Layout::Interleaved);
        tm.write_tensor(d, shape, &data).unwrap();
        assert_eq!(tm.read_tensor(d, shape).unwrap(), data);
        assert_eq!(tm.bank(Bank::B1)[159], 0);
        assert_eq!(tm.bank(Bank::B1)[161] as i8, data[shape.pixels()]);
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let mut tm = TmState::new();
        tm.write(Bank::B3, 100, &[1, 2, 3]).unwrap();
        tm.save(dir.path()).unwrap();
        assert_eq!(TmState::load(dir.path()).unwrap(), tm);
    }
}
