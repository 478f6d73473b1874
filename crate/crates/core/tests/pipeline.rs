use ncp::compiler::{compile, TmSpec};
use ncp::ir::{build_backbone, BackboneConfig, GraphBuilder, QuantizedGraph, TensorShape, WeightInit};
use ncp::oracle::{ref_run, RefTensor};
use ncp::sim::{run, ArchParams, EnergyCoeffs};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_input(shape: TensorShape, seed: u64) -> RefTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RefTensor::new(shape, (0..shape.bytes()).map(|_| rng.gen()).collect())
}

fn compile_and_compare(g: &QuantizedGraph, seed: u64) {
    let c = compile(g, &TmSpec::default()).unwrap();
    let x = random_input(g.input, seed);
    let tm = c.image.prepare(&x.data).unwrap();
    let (tm, _) = run(&c.program, tm, &ArchParams::default(), &EnergyCoeffs::default()).unwrap();
    let got = c.image.read_output(&tm).unwrap();
    let want = ref_run(g, &x).unwrap();
    assert_eq!(got, want.data);
}

#[test]
fn conv_gap_matches_reference() {
    let mut b = GraphBuilder::new(TensorShape { h: 8, w: 8, c: 4 }, WeightInit::fan_in(1));
    let c = b.conv(b.input(), 3, 8, 2, true, true).unwrap();
    let y = b.gap(c).unwrap();
    compile_and_compare(&b.finish(y).unwrap(), 1);
}

#[test]
fn half_width_backbone_matches_reference() {
    let cfg = BackboneConfig { input: TensorShape { h: 64, w: 64, c: 3 }, ..BackboneConfig::etinynet().scaled(0.5) };
    let g = build_backbone(&cfg, WeightInit::fan_in(7)).unwrap();
    compile_and_compare(&g, 7);
}

#[test]
fn default_backbone_matches_reference() {
    let g = build_backbone(&BackboneConfig::etinynet(), WeightInit::fan_in(11)).unwrap();
    compile_and_compare(&g, 11);
}

#[test]
fn random_graphs_match_reference() {
    let mut seen = std::collections::BTreeSet::new();
    for seed in 0..40 {
        let g = ncp::ir::random_graph(seed).unwrap();
        let c = compile(&g, &TmSpec::default()).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        seen.extend(c.program.instructions.iter().map(|i| i.opcode));
        compile_and_compare(&g, seed);
    }
    assert_eq!(seen.len(), 11, "{seen:?}");
}
