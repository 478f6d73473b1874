//! System-level throughput and efficiency: bus bounds, the default backbone
//! over SDIO and SPI, and the same accounting on a fixed 5.5 ms / 73.6 mW profile.

use ncp::host::pipeline::bench;
use ncp::host::{fps_bound, system_report, BusSpec, SystemProfile};
use ncp::ir::{build_backbone, BackboneConfig, TensorShape, WeightInit};
use ncp::sim::{EnergyCoeffs, Status, Summary};

fn main() -> anyhow::Result<()> {
    for side in [256, 128, 64] {
        let s = TensorShape { h: side, w: side, c: 3 };
        println!(
            "{side:>3}x{side:<3} RGB  SDIO {:>8.1} FPS  SPI {:>7.1} FPS",
            fps_bound(s, &BusSpec::SDIO),
            fps_bound(s, &BusSpec::SPI)
        );
    }

    let g = build_backbone(&BackboneConfig::etinynet(), WeightInit::Zeros)?;
    for bus in [BusSpec::SDIO, BusSpec::SPI] {
        let (_, r) = bench(&g, bus, &EnergyCoeffs::default())?;
        println!("\ndefault backbone over {:?}\n{r}", bus.kind);
    }

    let fixed = Summary {
        status: Status::Ended,
        instructions: 0,
        cycles: 1_375_000,
        neural_cycles: 1_375_000,
        mac_i8: 0,
        mac_f32: 0,
        words_read: 0,
        words_written: 0,
        latency_s: 5.5e-3,
        gops: 0.0,
        utilization: 0.0,
        energy_mj: 0.4048,
        avg_power_mw: 73.6,
        frames_per_s_per_mj: 0.0,
    };
    let mut p = SystemProfile::new(fixed, TensorShape { h: 256, w: 256, c: 3 }, BusSpec::SDIO);
    println!("\nfixed 5.5 ms / 73.6 mW profile\n{}", system_report(&p));
    p.mcu_overhead = 2e-3;
    p.mcu_power = 0.08;
    println!("\nwith 2 ms, 80 mW of MCU work per frame\n{}", system_report(&p));
    Ok(())
}
