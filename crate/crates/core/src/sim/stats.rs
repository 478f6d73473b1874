use std::fmt::Write as _;
use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use super::{ArchParams, SimError, Status};
use crate::isa::Opcode;

/// Activity of one instruction, or a sum of them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitCounts {
    pub cycles: u64,
    pub mac_i8: u64,
    pub mac_f32: u64,
    pub words_read: u64,
    pub words_written: u64,
}

impl UnitCounts {
    pub fn words(&self) -> u64 {
        self.words_read + self.words_written
    }
}

impl AddAssign for UnitCounts {
    fn add_assign(&mut self, o: Self) {
        self.cycles += o.cycles;
        self.mac_i8 += o.mac_i8;
        self.mac_f32 += o.mac_f32;
        self.words_read += o.words_read;
        self.words_written += o.words_written;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstrRecord {
    pub pc: usize,
    pub opcode: Opcode,
    pub counts: UnitCounts,
}

/// Energy model coefficients (joules per event, watts static).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyCoeffs {
    pub e_mac_i8: f64,
    pub e_mac_f32: f64,
    pub e_word: f64,
    pub p_static: f64,
}

/// Calibrated coefficients shipped with the crate.
pub const DEFAULT_ENERGY_JSON: &str = include_str!("../../data/energy.json");

#[derive(Debug, Deserialize)]
struct EnergyFile {
    coefficients: EnergyCoeffs,
}

impl Default for EnergyCoeffs {
    fn default() -> Self {
        Self::from_json(DEFAULT_ENERGY_JSON).expect("bundled energy.json")
    }
}

impl EnergyCoeffs {
    /// Uncalibrated 65nm-class starting point; only the ratios matter to [`calibrate`].
    pub const NOMINAL: EnergyCoeffs =
        EnergyCoeffs { e_mac_i8: 0.2e-12, e_mac_f32: 3.7e-12, e_word: 10.0e-12, p_static: 5.0e-3 };

    /// Accepts either a bare coefficient object or `{"coefficients": {...}, ...}`.
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let c = serde_json::from_str::<EnergyFile>(text)
            .map(|f| f.coefficients)
            .or_else(|_| serde_json::from_str::<EnergyCoeffs>(text))
            .map_err(|e| SimError::BadImage(format!("energy coefficients: {e}")))?;
        c.check()?;
        Ok(c)
    }

    pub fn check(&self) -> Result<(), SimError> {
        let all = [self.e_mac_i8, self.e_mac_f32, self.e_word, self.p_static];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(SimError::BadImage("energy coefficients must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Joules for `counts` over `latency_s`.
    pub fn energy(&self, counts: &UnitCounts, latency_s: f64) -> f64 {
        counts.mac_i8 as f64 * self.e_mac_i8
            + counts.mac_f32 as f64 * self.e_mac_f32
            + counts.words() as f64 * self.e_word
            + latency_s * self.p_static
    }
}

/// Scales the dynamic coefficients of `nominal` so a run with `counts` over
/// `latency_s` averages `target_w`. Static power is kept as given.
pub fn calibrate(nominal: &EnergyCoeffs, counts: &UnitCounts, latency_s: f64, target_w: f64) -> Result<EnergyCoeffs, SimError> {
    let dynamic = EnergyCoeffs { p_static: 0.0, ..*nominal }.energy(counts, latency_s);
    let budget = target_w * latency_s - nominal.p_static * latency_s;
    if latency_s <= 0.0 || dynamic <= 0.0 || budget < 0.0 {
        return Err(SimError::BadImage(format!(
            "cannot reach {target_w} W: dynamic energy {dynamic} J, static share {} W",
            nominal.p_static
        )));
    }
    let k = budget / dynamic;
    Ok(EnergyCoeffs {
        e_mac_i8: nominal.e_mac_i8 * k,
        e_mac_f32: nominal.e_mac_f32 * k,
        e_word: nominal.e_word * k,
        p_static: nominal.p_static,
    })
}

/// Derived figures for a whole run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub status: Status,
    pub instructions: u64,
    pub cycles: u64,
    pub neural_cycles: u64,
    pub mac_i8: u64,
    pub mac_f32: u64,
    pub words_read: u64,
    pub words_written: u64,
    pub latency_s: f64,
    pub gops: f64,
    pub utilization: f64,
    pub energy_mj: f64,
    pub avg_power_mw: f64,
    pub frames_per_s_per_mj: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStats {
    pub records: Vec<InstrRecord>,
    pub totals: UnitCounts,
    pub summary: Summary,
}

impl TraceStats {
    pub fn new(records: Vec<InstrRecord>, status: Status, arch: &ArchParams, coeffs: &EnergyCoeffs) -> Self {
        let mut totals = UnitCounts::default();
        let mut neural_cycles = 0;
        for r in &records {
            totals += r.counts;
            if r.opcode.is_neural() {
                neural_cycles += r.counts.cycles;
            }
        }
        let latency_s = totals.cycles as f64 / arch.f_clk;
        let energy_j = coeffs.energy(&totals, latency_s);
        let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
        let summary = Summary {
            status,
            instructions: records.len() as u64,
            cycles: totals.cycles,
            neural_cycles,
            mac_i8: totals.mac_i8,
            mac_f32: totals.mac_f32,
            words_read: totals.words_read,
            words_written: totals.words_written,
            latency_s,
            gops: ratio(2.0 * (totals.mac_i8 + totals.mac_f32) as f64, latency_s) / 1e9,
            utilization: ratio(totals.mac_i8 as f64, totals.cycles as f64 * (arch.t_oc * arch.t_hw) as f64),
            energy_mj: energy_j * 1e3,
            avg_power_mw: ratio(energy_j, latency_s) * 1e3,
            frames_per_s_per_mj: ratio(ratio(1.0, latency_s), energy_j * 1e3),
        };
        Self { records, totals, summary }
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary")
    }

    /// One line per executed instruction.
    pub fn trace_lines(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            let c = &r.counts;
            writeln!(
                s,
                "{:>5} {:<6} cycles={:<8} mac_i8={:<10} mac_f32={:<7} words={}",
                r.pc,
                r.opcode.mnemonic(),
                c.cycles,
                c.mac_i8,
                c.mac_f32,
                c.words()
            )
            .unwrap();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_coefficients_parse() {
        let c = EnergyCoeffs::default();
        assert!(c.e_mac_i8 > 0.0 && c.p_static >= 0.0);
    }

    #[test]
    fn calibration_hits_target() {
        let counts = UnitCounts { cycles: 1000, mac_i8: 100_000, mac_f32: 500, words_read: 900, words_written: 100 };
        let t = 4e-6;
        let c = calibrate(&EnergyCoeffs::NOMINAL, &counts, t, 0.0736).unwrap();
        assert!((c.energy(&counts, t) / t - 0.0736).abs() < 1e-12);
        assert!(calibrate(&EnergyCoeffs::NOMINAL, &counts, t, 0.001).is_err());
    }

    #[test]
    fn negative_coefficients_rejected() {
        assert!(EnergyCoeffs::from_json(r#"{"e_mac_i8":-1,"e_mac_f32":0,"e_word":0,"p_static":0}"#).is_err());
    }
}
