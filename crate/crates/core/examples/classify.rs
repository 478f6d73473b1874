//! Image classification the way the MCU would drive it: PPM in, color
//! normalization, backbone on the co-processor, FC head and top-5 on the host.
//!
//! cargo run --release --example classify -- [image.ppm]
//! Without an argument a synthetic 256x256 gradient is used.

use ncp::compiler::{compile, TmSpec};
use ncp::host::pipeline::run_program;
use ncp::host::{fc_head, preprocess, topk, FcWeights, Normalize, RgbImage, DEFAULT_CLASSES};
use ncp::ir::{build_backbone, BackboneConfig, WeightInit};
use ncp::sim::{ArchParams, EnergyCoeffs};

fn main() -> anyhow::Result<()> {
    let img = match std::env::args().nth(1) {
        Some(path) => RgbImage::load(path.as_ref())?,
        None => {
            let px = (0..256 * 256).flat_map(|i| [(i % 256) as u8, (i / 256) as u8, ((i * 7) % 256) as u8]).collect();
            RgbImage::new(256, 256, px)?
        }
    };
    let x = preprocess(&img, &Normalize::default())?;

    let g = build_backbone(&BackboneConfig { input: x.shape, ..BackboneConfig::etinynet() }, WeightInit::fan_in(3))?;
    let c = compile(&g, &TmSpec::default())?;
    let out = run_program(&c.program, &c.image, &x, &ArchParams::default(), &EnergyCoeffs::default())?;
    println!("feature vector: {} values, NCP time {:.3} ms", out.output.data.len(), out.stats.summary.latency_s * 1e3);

    let fc = FcWeights::random(DEFAULT_CLASSES, out.output.data.len(), 9);
    let logits = fc_head(&out.output.data, &fc)?;
    for (rank, class) in topk(&logits, 5).into_iter().enumerate() {
        println!("top-{} class {class:>4}  logit {:.4}", rank + 1, logits[class]);
    }
    Ok(())
}
