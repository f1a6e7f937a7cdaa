//! Ether flow graphs of a Ponzi and a lottery contract, side by side.

use etherscope::flow::{build_flow_graph, export_flow_graph, flow_summary, ExportFormat};
use etherscope::synth::{generate, GenConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = generate(&GenConfig { seed: 8, n_blocks: 600, ..GenConfig::default() })?;
    let gt = &corpus.ground_truth;
    let out = std::env::temp_dir().join("etherscope-flow");
    std::fs::create_dir_all(&out)?;

    for kind in ["ponzi", "lottery"] {
        let addr = gt.contracts_of(kind)[0];
        let fg = build_flow_graph(addr, &corpus.bundles)?;
        let s = flow_summary(&fg);
        println!(
            "{kind:<8} {addr}: {} investments, {} payments, {} participants over {} blocks",
            s.n_investment, s.n_payment, s.participant_count, s.lifetime_blocks
        );
        export_flow_graph(&fg, out.join(format!("{kind}.svg")), ExportFormat::Svg)?;
        export_flow_graph(&fg, out.join(format!("{kind}.csv")), ExportFormat::Csv)?;
    }
    println!("plots in {}", out.display());
    Ok(())
}
