//! Simulator against the reference interpreter: random graphs, then seeded
//! draws of the default backbone.
//!
//! cargo run --release --example equivalence -- [graphs] [backbone seeds]

use ncp::host::pipeline::{check_config, check_graph, random_input};
use ncp::ir::{random_graph, BackboneConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<u64>());
    let graphs = args.next().transpose()?.unwrap_or(50);
    let seeds = args.next().transpose()?.unwrap_or(3);

    let mut exact = 0;
    for seed in 0..graphs {
        let g = random_graph(seed)?;
        let r = check_graph(&g, &random_input(&g, seed), seed)?;
        if r.mismatches == 0 {
            exact += 1;
        } else {
            println!("graph {seed}: {} of {} bytes differ", r.mismatches, r.elements);
        }
    }
    println!("random graphs: {exact}/{graphs} bit-exact");
    println!("default backbone: {}", check_config(&BackboneConfig::etinynet(), seeds)?);
    Ok(())
}
