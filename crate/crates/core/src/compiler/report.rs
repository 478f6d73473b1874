use std::fmt::{self, Write as _};

use serde::Serialize;

use super::{PlacementPlan, TmSpec};
use crate::isa::Bank;

#[derive(Debug, Clone, Serialize)]
pub struct BankUsage {
    pub bank: Bank,
    pub capacity: usize,
    pub peak: usize,
    pub high_water: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TensorRow {
    pub tensor: usize,
    pub bank: Bank,
    pub word_off: u16,
    pub layout: char,
    pub bytes: usize,
    pub def: usize,
    pub last_use: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MemoryReport {
    pub banks: Vec<BankUsage>,
    pub tensors: Vec<TensorRow>,
    pub weight_bytes: usize,
    /// Sum of per-bank high-water marks.
    pub total_bytes: usize,
    pub total_capacity: usize,
}

impl MemoryReport {
    pub fn fits(&self) -> bool {
        self.total_bytes <= self.total_capacity && self.banks.iter().all(|b| b.high_water <= b.capacity)
    }

    pub fn bank(&self, bank: Bank) -> &BankUsage {
        &self.banks[bank.index()]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report")
    }
}

pub fn memory_report(plan: &PlacementPlan, tm: &TmSpec) -> MemoryReport {
    let banks: Vec<BankUsage> = Bank::ALL
        .iter()
        .map(|&b| BankUsage {
            bank: b,
            capacity: tm.capacity(b),
            peak: plan.peak[b.index()],
            high_water: plan.high_water[b.index()],
        })
        .collect();
    let tensors = plan
        .tensors
        .iter()
        .enumerate()
        .filter_map(|(t, p)| {
            p.map(|p| TensorRow {
                tensor: t,
                bank: p.desc.bank,
                word_off: p.desc.word_off,
                layout: p.desc.layout.letter(),
                bytes: p.bytes,
                def: p.def,
                last_use: p.last_use,
            })
        })
        .collect();
    MemoryReport {
        weight_bytes: plan.blobs.iter().flatten().map(|b| b.bytes).sum(),
        total_bytes: banks.iter().map(|b| b.high_water).sum(),
        total_capacity: banks.iter().map(|b| b.capacity).sum(),
        banks,
        tensors,
    }
}

impl fmt::Display for MemoryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        writeln!(s, "bank  capacity      peak  high-water").unwrap();
        for b in &self.banks {
            writeln!(s, "{:<4} {:>9} {:>9} {:>11}", b.bank, b.capacity, b.peak, b.high_water).unwrap();
        }
        writeln!(s, "parameters: {} bytes", self.weight_bytes).unwrap();
        writeln!(s, "on-chip total: {} of {} bytes", self.total_bytes, self.total_capacity).unwrap();
        writeln!(s).unwrap();
        writeln!(s, "tensor  place          bytes  live").unwrap();
        for t in &self.tensors {
            let place = format!("{}:{}:{}", t.bank, t.word_off, t.layout);
            writeln!(s, "{:>6}  {:<12} {:>7}  {}..{}", t.tensor, place, t.bytes, t.def, t.last_use).unwrap();
        }
        f.write_str(&s)
    }
}
