//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::Instant;

use ncp::compiler::{allocate, assign_layouts, compile, fuse, TmSpec};
use ncp::host::pipeline::{profile, random_input};
use ncp::host::{fps_bound, system_report, BusSpec, SystemProfile};
use ncp::ir::{
    build_backbone, build_dlb, build_lb, max_feature_bytes, param_count, random_graph, BackboneConfig, BlockKind,
    BlockSpec, DlbMerge, QuantizedGraph, TensorShape, WeightInit,
};
use ncp::isa::{assemble, decode, disassemble, encode, Bank, Instruction, Layout, Opcode, OperandDesc, Program};
use ncp::oracle::ref_run;
use ncp::sim::{
    exec_dwconv, layout_convert_model, peak_performance, ArchParams, EnergyCoeffs, Machine, Status, TmState,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KB: usize = 1024;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn peak() -> Outcome {
    let p = peak_performance(&ArchParams::default());
    outcome(p == 264.0, format!("peak performance {p} GOP/s, expected exactly 264"))
}

fn bus_bounds() -> Outcome {
    let cases = [
        ("SDIO 256x256", TensorShape { h: 256, w: 256, c: 3 }, BusSpec::SDIO, 317.9),
        ("SDIO 128x128", TensorShape { h: 128, w: 128, c: 3 }, BusSpec::SDIO, 1271.6),
        ("SPI 256x256", TensorShape { h: 256, w: 256, c: 3 }, BusSpec::SPI, 63.6),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, shape, bus, want) in cases {
        let got = fps_bound(shape, &bus);
        pass &= (got - want).abs() <= 0.1;
        parts.push(format!("{name} {got:.2} (want {want} +-0.1)"));
    }
    outcome(pass, parts.join(", "))
}

fn budgets() -> Outcome {
    let t = Instant::now();
    let g = build_backbone(&BackboneConfig::etinynet(), WeightInit::Zeros).unwrap();
    let params = param_count(&g).total_bytes;
    let feat = max_feature_bytes(&g);
    let fused = fuse(&g);
    let plan = allocate(&fused, &assign_layouts(&fused), &TmSpec::default());
    let (b0, b1, weights) = match &plan {
        Ok(p) => (p.peak[Bank::B0.index()], p.peak[Bank::B1.index()], p.blobs.iter().flatten().map(|b| b.bytes).sum()),
        Err(_) => (usize::MAX, usize::MAX, usize::MAX),
    };
    let secs = t.elapsed().as_secs_f64();
    let pass = (450 * KB..=500 * KB).contains(&params)
        && feat <= 131072
        && plan.is_ok()
        && b0 <= 128 * KB
        && b1 <= 128 * KB
        && weights <= 512 * KB
        && secs < 1.0;
    outcome(
        pass,
        format!(
            "params {params} B ({:.1} KB, want 450..500), max feature {feat} B (<= 131072), allocate {}, \
             bank0 peak {b0}, bank1 peak {b1} (<= 131072), weights {weights} B (<= 524288), {secs:.2} s",
            params as f64 / KB as f64,
            if plan.is_ok() { "ok" } else { "failed" }
        ),
    )
}

/// Inserts `sup; jump over; end` before instruction `at`, so the program
/// suspends once and must be resumed to finish.
fn splice_control(p: &Program, at: usize) -> Program {
    let mut v = p.instructions[..at].to_vec();
    v.push(Instruction::sup());
    v.push(Instruction::jump((at + 3) as u16));
    v.push(Instruction::end());
    v.extend_from_slice(&p.instructions[at..]);
    Program::new(v)
}

fn block_graph(i: u64) -> QuantizedGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + i);
    let in_c = 8 * rng.gen_range(1..=4);
    let input = TensorShape { h: 16, w: 16, c: in_c };
    let init = WeightInit::fan_in(1000 + i);
    match i % 4 {
        0 => {
            let c = 8 * rng.gen_range(1..=4);
            let spec = BlockSpec { kind: BlockKind::Lb, in_c, mid_c: c, out_c: c, stride: rng.gen_range(1..=2), merge: DlbMerge::Add };
            build_lb(&spec, input, init).unwrap()
        }
        1 => {
            let spec = BlockSpec { kind: BlockKind::Dlb, in_c, mid_c: in_c, out_c: in_c, stride: 1, merge: DlbMerge::Add };
            build_dlb(&spec, input, init).unwrap()
        }
        2 => {
            let c = 8 * rng.gen_range(1..=4);
            let spec = BlockSpec { kind: BlockKind::Dlb, in_c, mid_c: c, out_c: c, stride: 2, merge: DlbMerge::Add };
            build_dlb(&spec, input, init).unwrap()
        }
        _ => {
            let c = 8 * rng.gen_range(1..=4);
            let spec = BlockSpec { kind: BlockKind::Dlb, in_c, mid_c: c, out_c: c, stride: 1, merge: DlbMerge::Concat };
            build_dlb(&spec, input, init).unwrap()
        }
    }
}

fn equivalence() -> Outcome {
    let t = Instant::now();
    let mut graphs: Vec<(String, QuantizedGraph)> = (0..100).map(|s| (format!("random {s}"), random_graph(s).unwrap())).collect();
    graphs.extend((0..20).map(|i| (format!("block {i}"), block_graph(i))));
    let mut seen: BTreeSet<Opcode> = BTreeSet::new();
    let mut failures = Vec::new();
    for (i, (name, g)) in graphs.iter().enumerate() {
        let c = match compile(g, &TmSpec::default()) {
            Ok(c) => c,
            Err(e) => {
                failures.push(format!("{name}: compile: {e}"));
                continue;
            }
        };
        let input = random_input(g, i as u64);
        let at = i % c.program.len();
        let program = splice_control(&c.program, at);
        seen.extend(program.instructions.iter().map(|ins| ins.opcode));
        let tm = c.image.prepare(&input.data).unwrap();
        let mut m = Machine::new(&program, tm, ArchParams::default()).unwrap();
        let first = m.run();
        let second = m.run();
        if !matches!((&first, &second), (Ok(Status::Suspended), Ok(Status::Ended))) {
            failures.push(format!("{name}: control flow {first:?} then {second:?}"));
            continue;
        }
        let got = c.image.read_output(&m.tm).unwrap();
        let want = ref_run(g, &input).unwrap();
        if got != want.data {
            let n = got.iter().zip(&want.data).filter(|(a, b)| a != b).count();
            failures.push(format!("{name}: {n} of {} bytes differ", got.len()));
        }
    }
    let pass = failures.is_empty() && seen.len() == 13 && graphs.len() >= 100;
    let mut detail = format!(
        "{}/{} graphs bit-exact, {} of 13 opcodes executed, {:.1} s",
        graphs.len() - failures.len(),
        graphs.len(),
        seen.len(),
        t.elapsed().as_secs_f64()
    );
    if let Some(f) = failures.first() {
        detail.push_str(&format!("; first failure {f}"));
    }
    outcome(pass, detail)
}

fn isa_round_trips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let all: Vec<Instruction> = (0..100_000).map(|_| Instruction::random(&mut rng)).collect();
    let enc_ok = all.iter().all(|ins| encode(ins).and_then(|w| decode(&w)).as_ref() == Ok(ins));
    let asm_ok = all.chunks(1000).all(|chunk| {
        let p = Program::new(chunk.to_vec());
        let text = disassemble(&p);
        match assemble(&text) {
            Ok(q) => q == p && disassemble(&q) == text,
            Err(_) => false,
        }
    });
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let mut golden_ok = true;
    for name in ["conv", "control"] {
        let bin = std::fs::read(dir.join(format!("{name}.ncp1"))).unwrap_or_default();
        let text = std::fs::read_to_string(dir.join(format!("{name}.s"))).unwrap_or_default();
        golden_ok &= assemble(&text).map(|p| p.to_bytes().unwrap()).ok() == Some(bin.clone());
        golden_ok &= Program::from_bytes(&bin).map(|p| disassemble(&p)).ok() == Some(text);
    }
    outcome(
        enc_ok && asm_ok && golden_ok,
        format!("100000 instructions: encode/decode {enc_ok}, asm/disasm/asm {asm_ok}; golden files stable {golden_ok}"),
    )
}

fn default_summary() -> ncp::sim::Summary {
    let g = build_backbone(&BackboneConfig::etinynet(), WeightInit::Zeros).unwrap();
    profile(&g, &ArchParams::default(), &EnergyCoeffs::default()).unwrap()
}

fn latency() -> Outcome {
    let s = default_summary();
    let ms = s.latency_s * 1e3;
    outcome((2.0..=11.0).contains(&ms), format!("default backbone {} cycles = {ms:.3} ms at 250 MHz, band [2, 11] ms", s.cycles))
}

fn efficiency() -> Outcome {
    let s = default_summary();
    let r = system_report(&SystemProfile::new(s, TensorShape { h: 256, w: 256, c: 3 }, BusSpec::SDIO));
    let modeled_ok = (340.0..=560.0).contains(&r.processing_efficiency);
    let arithmetic: f64 = 181.8 / (5.5 * 73.6e-3);
    let arithmetic_ok = (arithmetic - 449.0).abs() <= 2.0;
    let power_ok = (s.avg_power_mw - 73.6).abs() < 1e-6;
    outcome(
        modeled_ok && arithmetic_ok && power_ok,
        format!(
            "modeled {:.1} Frames/s/mJ at {:.1} FPS, {:.4} mJ/frame, {:.2} mW (band [340, 560]); \
             arithmetic 181.8/(5.5 ms * 73.6 mW) = {arithmetic:.1} (449 +-2)",
            r.processing_efficiency, r.fps, r.energy_per_frame_mj, s.avg_power_mw
        ),
    )
}

fn dwconv_and_converter() -> Outcome {
    let arch = ArchParams::default();
    let mut ins = Instruction::unary(
        Opcode::Dwconv,
        OperandDesc::new(Bank::B0, 0, Layout::Interleaved),
        OperandDesc::new(Bank::B1, 0, Layout::Interleaved),
        (64, 64, 16),
    );
    ins.stride = 1;
    ins.src1 = OperandDesc::new(Bank::B2, 0, Layout::PixelMajor);
    let counts = exec_dwconv(&ins, &mut TmState::new(), &arch).unwrap();
    let eff = (64 * 64) as f64 / counts.cycles as f64;
    let mut stalls = Vec::new();
    for (t_oc, t_hw) in [(16, 32), (16, 16), (8, 32)] {
        let a = ArchParams { t_oc, t_hw, ..arch };
        stalls.push((t_oc, t_hw, layout_convert_model(64 * 64 * 64, &a).stalls));
    }
    let pass = eff >= 0.99 && stalls.iter().all(|s| s.2 == 0);
    outcome(pass, format!("dwconv 64x64x16 efficiency {eff:.4} ({} cycles, want >= 0.99); converter stalls {stalls:?}", counts.cycles))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("peak performance", peak),
        ("bus bounds", bus_bounds),
        ("model budgets", budgets),
        ("bit-exact equivalence", equivalence),
        ("ISA round trips", isa_round_trips),
        ("latency", latency),
        ("processing efficiency", efficiency),
        ("dwconv efficiency and layout converter", dwconv_and_converter),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        println!("{} [{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
