//! Layout converter stalls for several array shapes, and depthwise
//! pipeline efficiency against output size.

use ncp::isa::{Bank, Instruction, Layout, Opcode, OperandDesc};
use ncp::sim::{exec_dwconv, layout_convert_model, ArchParams, LayoutConverter, TmState};

fn main() -> anyhow::Result<()> {
    let arch = ArchParams::default();
    println!("T_oc T_hw  tiles  cycles  stalls");
    for (t_oc, t_hw) in [(16, 32), (16, 16), (8, 32), (32, 16), (32, 8)] {
        let a = ArchParams { t_oc, t_hw, ..arch };
        let s = layout_convert_model(64 * 64 * 64, &a);
        println!("{t_oc:>4} {t_hw:>4} {:>6} {:>7} {:>7}", s.tiles, s.cycles, s.stalls);
    }

    // the converter is a transpose of each T_oc x T_hw tile
    let conv = LayoutConverter::new(&arch);
    let cols: Vec<Vec<i8>> = (0..32).map(|p| (0..16).map(|c| (c * 32 + p) as i8).collect()).collect();
    let (rows, _) = conv.stream(&cols);
    println!("\nrow 1 of the first tile: {:?}", &rows[1][..8]);

    println!("\ndwconv  out    cycles  efficiency");
    for side in [8u16, 16, 32, 64, 90] {
        let mut ins = Instruction::unary(
            Opcode::Dwconv,
            OperandDesc::new(Bank::B0, 0, Layout::Interleaved),
            OperandDesc::new(Bank::B1, 0, Layout::Interleaved),
            (side, side, 16),
        );
        ins.stride = 1;
        ins.src1 = OperandDesc::new(Bank::B2, 0, Layout::PixelMajor);
        let n = exec_dwconv(&ins, &mut TmState::new(), &arch)?;
        let ideal = side as f64 * side as f64;
        println!("       {side:>3}x{side:<3} {:>6}  {:.4}", n.cycles, ideal / n.cycles as f64);
    }
    Ok(())
}
