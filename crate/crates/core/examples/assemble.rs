//! Assembles a short program, validates it, and shows the 128-bit words and
//! the canonical disassembly.

use ncp::isa::{assemble, disassemble, validate, Program};

const SOURCE: &str = "\
# 3x3 stride-2 conv with fused BN+ReLU, then global average pooling
conv src=bi:0:p dst=b0:0:p w=b2:0:p par=b2:9:p ih=8 iw=8 ic=4 oc=8 k=3 s=2 bn relu
gap  src=b0:0:p dst=bo:0:p ih=4 iw=4 ic=8
end
";

fn main() -> anyhow::Result<()> {
    let p = assemble(SOURCE)?;
    for d in validate(&p) {
        println!("{d}");
    }
    let bytes = p.to_bytes()?;
    println!("{} instructions, {} bytes with header", p.len(), bytes.len());
    for (pc, word) in bytes[8..].chunks(16).enumerate() {
        let hex: String = word.iter().rev().map(|b| format!("{b:02x}")).collect();
        println!("{pc:>3}  0x{hex}");
    }
    let text = disassemble(&Program::from_bytes(&bytes)?);
    println!("\n{text}");
    assert_eq!(assemble(&text)?, p);
    Ok(())
}
