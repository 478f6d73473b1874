//! Builds the default backbone and prints its size accounting.
//!
//! cargo run --example backbone            # table
//! cargo run --example backbone -- --json  # graph document, as in data/etinynet.json

use ncp::ir::{build_backbone, max_feature_bytes, param_count, BackboneConfig, GraphDocument, WeightInit};

fn main() -> anyhow::Result<()> {
    let cfg = BackboneConfig::etinynet();
    if std::env::args().any(|a| a == "--json") {
        println!("{}", GraphDocument::new(cfg).to_json());
        return Ok(());
    }
    for alpha in [1.0, 0.75, 0.5] {
        let g = build_backbone(&cfg.scaled(alpha), WeightInit::Zeros)?;
        let p = param_count(&g);
        println!(
            "width {alpha:<4}  layers {:>3}  weights {:>7} B  bn {:>6} B  total {:>7} B ({:.1} KB)  peak feature {:>6} B",
            g.layers.len(),
            p.weight_bytes,
            p.bn_bytes,
            p.total_bytes,
            p.total_bytes as f64 / 1024.0,
            max_feature_bytes(&g)
        );
    }
    let g = build_backbone(&cfg, WeightInit::Zeros)?;
    println!();
    for (i, l) in g.layers.iter().enumerate() {
        println!("{i:>3} {:<10} s{} {} -> {}", l.op.kind.name(), l.op.stride, g.shape(l.inputs[0]), g.shape(l.output));
    }
    Ok(())
}
