//! Functional and cycle behaviour of the neural instructions.

use super::post::{decode_params, post_value, PostParams};
use super::{ArchParams, SimError, TmState, UnitCounts};
use crate::ir::TensorShape;
use crate::isa::{Instruction, Opcode, OperandDesc, WORD_BYTES};

fn words(bytes: usize) -> u64 {
    bytes.div_ceil(WORD_BYTES) as u64
}

fn shape((h, w, c): (usize, usize, usize)) -> Result<TensorShape, SimError> {
    if h == 0 || w == 0 || c == 0 {
        return Err(SimError::ZeroShape);
    }
    Ok(TensorShape { h, w, c })
}

/// Rejects a destination that overlaps any source. Elementwise ops may run
/// exactly in place (same offset, layout and length).
fn check_overlap(ins: &Instruction, elementwise: bool) -> Result<(), SimError> {
    let ext = ins.operand_extents();
    let Some(&(_, dst, dlen)) = ext.iter().find(|e| e.0 == "dst") else {
        return Ok(());
    };
    let d0 = dst.byte_offset();
    for &(name, src, len) in ext.iter().filter(|e| e.0 != "dst") {
        let s0 = src.byte_offset();
        if src.bank != dst.bank || s0 >= d0 + dlen || d0 >= s0 + len {
            continue;
        }
        let exact = s0 == d0 && len == dlen && src.layout == dst.layout;
        if !(elementwise && exact && name != "par") {
            return Err(SimError::Overlap { operand: name });
        }
    }
    Ok(())
}

fn read_i8(tm: &TmState, d: OperandDesc, len: usize) -> Result<Vec<i8>, SimError> {
    Ok(tm.read(d.bank, d.byte_offset(), len)?.iter().map(|&b| b as i8).collect())
}

fn read_params(tm: &TmState, ins: &Instruction, channels: usize) -> Result<(Vec<f32>, Vec<f32>), SimError> {
    Ok(decode_params(tm.read(ins.par.bank, ins.par.byte_offset(), channels * 8)?))
}

/// Input-side word traffic shared by every neural opcode.
fn io_counts(ins: &Instruction) -> UnitCounts {
    let mut c = UnitCounts::default();
    for (name, _, len) in ins.operand_extents() {
        if name == "dst" {
            c.words_written += words(len);
        } else {
            c.words_read += words(len);
        }
    }
    c
}

/// Dense 1x1 / 3x3 convolution on the outer-product MAC array.
///
/// Each cycle multiplies a column of `t_oc` weights by a row of `t_hw` im2col
/// samples; the sample row is generated from addresses and never stored.
pub fn exec_conv(ins: &Instruction, tm: &mut TmState, arch: &ArchParams) -> Result<UnitCounts, SimError> {
    let is = shape(ins.input_shape())?;
    let os = shape(ins.output_shape())?;
    check_overlap(ins, false)?;
    let k = ins.kernel();
    let s = ins.stride.max(1) as usize;
    let pad = (k / 2) as isize;
    let (ic, oc, npix) = (is.c, os.c, os.pixels());

    let x = tm.read_tensor(ins.src0, is)?;
    let wts = read_i8(tm, ins.src1, oc * ic * k * k)?;
    let params = if ins.bn_en { Some(read_params(tm, ins, oc)?) } else { None };
    let post = params.as_ref().map(|(s, b)| PostParams { scale: s, bias: b });

    let (toc, thw) = (arch.t_oc, arch.t_hw);
    let mut out = vec![0i8; oc * npix];
    let mut a = vec![0i32; thw];
    let mut acc = vec![0i32; toc * thw];
    let mut origin = vec![(0isize, 0isize); thw];
    let mut cycles = 0u64;

    for o0 in (0..oc).step_by(toc) {
        let on = (oc - o0).min(toc);
        for p0 in (0..npix).step_by(thw) {
            let pn = (npix - p0).min(thw);
            for (j, o) in origin.iter_mut().enumerate().take(pn) {
                let p = p0 + j;
                *o = (((p / os.w) * s) as isize - pad, ((p % os.w) * s) as isize - pad);
            }
            acc.fill(0);
            for ci in 0..ic {
                let plane = &x[ci * is.h * is.w..(ci + 1) * is.h * is.w];
                for ky in 0..k {
                    for kx in 0..k {
                        for (j, aj) in a.iter_mut().enumerate() {
                            *aj = 0;
                            if j < pn {
                                let (iy, ix) = (origin[j].0 + ky as isize, origin[j].1 + kx as isize);
                                if iy >= 0 && ix >= 0 && (iy as usize) < is.h && (ix as usize) < is.w {
                                    *aj = plane[iy as usize * is.w + ix as usize] as i32;
                                }
                            }
                        }
                        for i in 0..on {
                            let b = wts[((o0 + i) * ic + ci) * k * k + ky * k + kx] as i32;
                            for (r, &aj) in acc[i * thw..(i + 1) * thw].iter_mut().zip(&a) {
                                *r += b * aj;
                            }
                        }
                        cycles += 1;
                    }
                }
            }
            for i in 0..on {
                for j in 0..pn {
                    out[(o0 + i) * npix + p0 + j] = post_value(acc[i * thw + j], o0 + i, post, ins.relu_en);
                }
            }
        }
    }
    tm.write_tensor(ins.dst, os, &out)?;

    let mut c = io_counts(ins);
    c.cycles = cycles + arch.conv_fill;
    c.mac_i8 = (npix * oc * ic * k * k) as u64;
    c.mac_f32 = if ins.bn_en { (npix * oc) as u64 } else { 0 };
    Ok(c)
}

/// Depthwise 3x3: one pipeline per channel, `t_oc` channels per cycle.
pub fn exec_dwconv(ins: &Instruction, tm: &mut TmState, arch: &ArchParams) -> Result<UnitCounts, SimError> {
    let is = shape(ins.input_shape())?;
    let os = shape(ins.output_shape())?;
    check_overlap(ins, false)?;
    let s = ins.stride.max(1) as usize;
    let (c, npix) = (is.c, os.pixels());

    let x = tm.read_tensor(ins.src0, is)?;
    let wts = read_i8(tm, ins.src1, c * 9)?;
    let params = if ins.bn_en { Some(read_params(tm, ins, c)?) } else { None };
    let post = params.as_ref().map(|(s, b)| PostParams { scale: s, bias: b });

    let mut out = vec![0i8; c * npix];
    let mut cycles = 0u64;
    for c0 in (0..c).step_by(arch.t_oc) {
        for p in 0..npix {
            let (oy, ox) = (p / os.w, p % os.w);
            for ch in c0..(c0 + arch.t_oc).min(c) {
                let mut acc = 0i32;
                for tap in 0..9 {
                    let iy = (oy * s + tap / 3) as isize - 1;
                    let ix = (ox * s + tap % 3) as isize - 1;
                    if iy < 0 || ix < 0 || iy as usize >= is.h || ix as usize >= is.w {
                        continue;
                    }
                    acc += wts[ch * 9 + tap] as i32 * x[(ch * is.h + iy as usize) * is.w + ix as usize] as i32;
                }
                out[ch * npix + p] = post_value(acc, ch, post, ins.relu_en);
            }
            cycles += 1;
        }
    }
    tm.write_tensor(ins.dst, os, &out)?;

    let mut cnt = io_counts(ins);
    cnt.cycles = cycles + arch.dw_fill;
    cnt.mac_i8 = (npix * c * 9) as u64;
    cnt.mac_f32 = if ins.bn_en { (npix * c) as u64 } else { 0 };
    Ok(cnt)
}

/// `bn`, `relu`, `add`, `move`, `dsam`, `usam`, `maxp` and `gap`.
pub fn exec_simple(ins: &Instruction, tm: &mut TmState, _arch: &ArchParams) -> Result<UnitCounts, SimError> {
    let is = shape(ins.input_shape())?;
    let os = shape(ins.output_shape())?;
    let elementwise = matches!(ins.opcode, Opcode::Bn | Opcode::Relu | Opcode::Add);
    check_overlap(ins, elementwise)?;
    let x = tm.read_tensor(ins.src0, is)?;
    let mut mac_f32 = 0;
    let (h, w) = (is.h, is.w);
    let at = |c: usize, y: usize, xx: usize| x[(c * h + y) * w + xx];

    let out: Vec<i8> = match ins.opcode {
        Opcode::Bn => {
            let (scale, bias) = read_params(tm, ins, is.c)?;
            let p = Some(PostParams { scale: &scale, bias: &bias });
            mac_f32 = is.bytes() as u64;
            x.iter().enumerate().map(|(i, &v)| post_value(v as i32, i / is.pixels(), p, false)).collect()
        }
        Opcode::Relu => x.iter().map(|&v| v.max(0)).collect(),
        Opcode::Add => {
            let y = tm.read_tensor(ins.src1, is)?;
            x.iter().zip(&y).map(|(&a, &b)| a.saturating_add(b)).collect()
        }
        Opcode::Move => x.clone(),
        Opcode::Dsam | Opcode::Usam | Opcode::Maxp => {
            let mut out = Vec::with_capacity(os.bytes());
            for c in 0..os.c {
                for oy in 0..os.h {
                    for ox in 0..os.w {
                        out.push(match ins.opcode {
                            Opcode::Dsam => at(c, 2 * oy, 2 * ox),
                            Opcode::Usam => at(c, oy / 2, ox / 2),
                            _ => {
                                let mut m = i8::MIN;
                                for y in 2 * oy..(2 * oy + 2).min(h) {
                                    for xx in 2 * ox..(2 * ox + 2).min(w) {
                                        m = m.max(at(c, y, xx));
                                    }
                                }
                                m
                            }
                        });
                    }
                }
            }
            out
        }
        Opcode::Gap => {
            let n = is.pixels() as i64;
            x.chunks(is.pixels())
                .map(|plane| {
                    let sum: i64 = plane.iter().map(|&v| v as i64).sum();
                    let (q, r) = (sum.div_euclid(n), sum.rem_euclid(n));
                    let q = match (2 * r).cmp(&n) {
                        std::cmp::Ordering::Greater => q + 1,
                        std::cmp::Ordering::Equal => q + (q & 1),
                        std::cmp::Ordering::Less => q,
                    };
                    q.clamp(-128, 127) as i8
                })
                .collect()
        }
        op => unreachable!("{op} is not a simple opcode"),
    };
    tm.write_tensor(ins.dst, os, &out)?;

    let mut c = io_counts(ins);
    c.cycles = c.words();
    c.mac_f32 = mac_f32;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{Bank, Layout};

    fn desc(bank: Bank, word: u16) -> OperandDesc {
        OperandDesc::new(bank, word, Layout::PixelMajor)
    }

    fn params(tm: &mut TmState, at: usize, pairs: &[(f32, f32)]) {
        let bytes: Vec<u8> = pairs.iter().flat_map(|(s, b)| [s.to_le_bytes(), b.to_le_bytes()].concat()).collect();
        tm.write(Bank::B3, at * 32, &bytes).unwrap();
    }

    fn conv(h: u16, w: u16, ic: u16, oc: u16, k3: bool, stride: u8) -> Instruction {
        let mut ins = Instruction::unary(Opcode::Conv, desc(Bank::B0, 0), desc(Bank::B1, 0), (h, w, ic));
        ins.oc = oc;
        ins.k3 = k3;
        ins.stride = stride;
        ins.src1 = desc(Bank::B2, 0);
        ins
    }

    #[test]
    fn conv_identity_1x1() {
        let mut tm = TmState::new();
        let data: Vec<u8> = (0..20u8).map(|v| v.wrapping_mul(13)).collect();
        tm.write(Bank::B0, 0, &data).unwrap();
        tm.write(Bank::B2, 0, &[1]).unwrap();
        let mut ins = conv(4, 5, 1, 1, false, 1);
        ins.bn_en = true;
        ins.par = desc(Bank::B3, 0);
        params(&mut tm, 0, &[(1.0, 0.0)]);
        exec_conv(&ins, &mut tm, &ArchParams::default()).unwrap();
        assert_eq!(tm.read(Bank::B1, 0, 20).unwrap(), &data[..]);
    }

    #[test]
    fn conv_cycle_formula() {
        let mut tm = TmState::new();
        let ins = conv(128, 128, 8, 32, true, 2);
        let c = exec_conv(&ins, &mut tm, &ArchParams::default()).unwrap();
        assert_eq!(c.cycles, 2 * 128 * 72 + 8);
        assert_eq!(c.cycles, 18440);
        assert!(c.mac_i8 <= 512 * c.cycles);
    }

    #[test]
    fn conv_overlap_rejected() {
        let mut tm = TmState::new();
        let mut ins = conv(4, 4, 2, 2, false, 1);
        ins.dst = desc(Bank::B0, 0);
        assert!(matches!(exec_conv(&ins, &mut tm, &ArchParams::default()), Err(SimError::Overlap { .. })));
    }

    #[test]
    fn dwconv_cycles_and_zero_weights() {
        let mut tm = TmState::new();
        let mut ins = Instruction::unary(Opcode::Dwconv, desc(Bank::B0, 0), desc(Bank::B1, 0), (64, 64, 16));
        ins.stride = 1;
        ins.src1 = desc(Bank::B2, 0);
        ins.bn_en = true;
        ins.par = desc(Bank::B3, 0);
        let pairs: Vec<(f32, f32)> = (0..16).map(|c| (1.0, c as f32 - 8.5)).collect();
        params(&mut tm, 0, &pairs);
        let c = exec_dwconv(&ins, &mut tm, &ArchParams::default()).unwrap();
        assert_eq!(c.cycles, 4108);
        let out = tm.read(Bank::B1, 0, 16 * 4096).unwrap();
        for ch in 0..16 {
            let want = (ch as f32 - 8.5).round_ties_even() as i8;
            assert!(out[ch * 4096..(ch + 1) * 4096].iter().all(|&v| v as i8 == want));
        }
    }

    #[test]
    fn simple_examples() {
        let arch = ArchParams::default();
        let mut tm = TmState::new();
        // gap over constant 7
        tm.write(Bank::B0, 0, &[7; 18]).unwrap();
        let ins = Instruction::unary(Opcode::Gap, desc(Bank::B0, 0), desc(Bank::O, 0), (3, 3, 2));
        exec_simple(&ins, &mut tm, &arch).unwrap();
        assert_eq!(tm.read(Bank::O, 0, 2).unwrap(), [7, 7]);
        // saturating add, in place
        tm.write(Bank::B0, 0, &[100; 4]).unwrap();
        let mut add = Instruction::unary(Opcode::Add, desc(Bank::B0, 0), desc(Bank::B0, 0), (1, 2, 2));
        add.src1 = desc(Bank::B0, 0);
        exec_simple(&add, &mut tm, &arch).unwrap();
        assert_eq!(tm.read(Bank::B0, 0, 4).unwrap(), [127; 4]);
        // maxp
        tm.write(Bank::B0, 0, &[1, 5, 3, 2]).unwrap();
        let ins = Instruction::unary(Opcode::Maxp, desc(Bank::B0, 0), desc(Bank::B1, 0), (2, 2, 1));
        let c = exec_simple(&ins, &mut tm, &arch).unwrap();
        assert_eq!(tm.read(Bank::B1, 0, 1).unwrap(), [5]);
        assert_eq!(c.cycles, 2);
    }

    #[test]
    fn gap_rounds_half_even() {
        let arch = ArchParams::default();
        let mut tm = TmState::new();
        // sums 5 and 7 over two pixels: 2.5 -> 2, 3.5 -> 4; -5 -> -2.5 -> -2
        tm.write(Bank::B0, 0, &[2, 3, 3, 4, (-2i8) as u8, (-3i8) as u8]).unwrap();
        let ins = Instruction::unary(Opcode::Gap, desc(Bank::B0, 0), desc(Bank::O, 0), (1, 2, 3));
        exec_simple(&ins, &mut tm, &arch).unwrap();
        assert_eq!(tm.read(Bank::O, 0, 3).unwrap(), [2, 4, (-2i8) as u8]);
    }

    #[test]
    fn shifted_overlap_rejected() {
        let mut tm = TmState::new();
        let ins = Instruction::unary(Opcode::Relu, desc(Bank::B0, 0), desc(Bank::B0, 1), (8, 8, 1));
        assert!(exec_simple(&ins, &mut tm, &ArchParams::default()).is_err());
    }
}
