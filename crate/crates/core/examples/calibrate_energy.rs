//! Regenerates `data/energy.json`: scales the nominal per-event energies so
//! the default backbone averages 73.6 mW, keeping static power fixed.
//!
//! cargo run --release --example calibrate_energy > crates/core/data/energy.json

use ncp::host::pipeline::{calibrate_default, CALIBRATION_POWER_W};

fn main() -> anyhow::Result<()> {
    let cal = calibrate_default(CALIBRATION_POWER_W)?;
    println!("{}", serde_json::to_string_pretty(&cal)?);
    Ok(())
}
