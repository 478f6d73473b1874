//! Stepping the machine by hand: `sup` suspends with the PC kept, a second
//! `run` resumes, `jump` redirects and `end` resets the PC.

use ncp::isa::assemble;
use ncp::sim::{ArchParams, EnergyCoeffs, Machine, TmState};

const SOURCE: &str = "\
relu src=b0:0:p dst=b0:0:p ih=4 iw=4 ic=32
sup
jump @done
end
done:
gap src=b0:0:p dst=bo:0:p ih=4 iw=4 ic=32
end
";

fn main() -> anyhow::Result<()> {
    let mut tm = TmState::new();
    let data: Vec<u8> = (0..512).map(|i| (i % 200) as u8).collect();
    tm.write(ncp::isa::Bank::B0, 0, &data)?;
    let mut m = Machine::new(&assemble(SOURCE)?, tm, ArchParams::default())?;

    let s = m.run()?;
    println!("first run: {s:?}, pc {}", m.mc.pc);
    let s = m.run()?;
    println!("second run: {s:?}, pc {}", m.mc.pc);
    let stats = m.stats(&EnergyCoeffs::default());
    print!("{}", stats.trace_lines());
    println!("channel means {:?}", m.tm.read(ncp::isa::Bank::O, 0, 8)?);
    Ok(())
}
