//! Runs the default backbone on the simulator and breaks the cycle count
//! down by opcode.

use std::collections::BTreeMap;

use ncp::compiler::{compile, TmSpec};
use ncp::host::pipeline::{random_input, run_program};
use ncp::ir::{build_backbone, BackboneConfig, WeightInit};
use ncp::sim::{peak_performance, ArchParams, EnergyCoeffs};

fn main() -> anyhow::Result<()> {
    let g = build_backbone(&BackboneConfig::etinynet(), WeightInit::fan_in(0))?;
    let c = compile(&g, &TmSpec::default())?;
    let arch = ArchParams::default();
    let out = run_program(&c.program, &c.image, &random_input(&g, 0), &arch, &EnergyCoeffs::default())?;
    let st = &out.stats;

    let mut by_op: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for r in &st.records {
        let e = by_op.entry(r.opcode.mnemonic()).or_default();
        e.0 += 1;
        e.1 += r.counts.cycles;
    }
    println!("opcode   count     cycles   share");
    for (op, (n, cyc)) in &by_op {
        println!("{op:<6} {n:>6} {cyc:>10}  {:>5.1}%", 100.0 * *cyc as f64 / st.summary.cycles as f64);
    }
    println!("\npeak {:.0} GOP/s", peak_performance(&arch));
    println!("{}", st.summary_json());
    println!("first output values {:?}", &out.output.data[..16]);
    Ok(())
}
