//! Compiles the default backbone and prints the placement report and the
//! first instructions of the program.

use ncp::compiler::{compile, TmSpec};
use ncp::ir::{build_backbone, BackboneConfig, WeightInit};
use ncp::isa::{disassemble, Bank};

fn main() -> anyhow::Result<()> {
    let g = build_backbone(&BackboneConfig::etinynet(), WeightInit::fan_in(0))?;
    let tm = TmSpec::default();
    let c = compile(&g, &tm)?;
    println!("{} layers before fusion, {} after, {} instructions", g.layers.len(), c.fused.layers.len(), c.program.len());
    println!("{}", c.report(&tm));
    for line in disassemble(&c.program).lines().take(8) {
        println!("{line}");
    }
    println!("...");

    // A 1 KB feature bank cannot hold the first activation.
    let mut small = tm;
    small.bytes[Bank::B0.index()] = 1024;
    small.bytes[Bank::B1.index()] = 1024;
    match compile(&g, &small) {
        Ok(_) => println!("unexpectedly fit"),
        Err(e) => println!("\nwith 1 KB feature banks: {e}"),
    }
    Ok(())
}
