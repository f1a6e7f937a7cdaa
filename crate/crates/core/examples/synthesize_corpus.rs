//! Generate a small labelled corpus on disk and print what was planted.
//!
//!     cargo run --example synthesize_corpus [out-dir]

use etherscope::synth::{generate_to_dir, Archetypes, GenConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("etherscope-corpus"));
    let cfg = GenConfig {
        seed: 42,
        n_blocks: 500,
        archetypes: Archetypes { ponzi: 3, lottery: 3, erc20_token: 2, erc721_token: 1 },
        ..GenConfig::default()
    };
    let corpus = generate_to_dir(&cfg, &out)?;
    let gt = &corpus.ground_truth;

    println!("wrote {} blocks, {} transactions to {}", corpus.bundles.len(), gt.tx_count, out.display());
    for c in &gt.contracts {
        let flows = gt.flows.get(&c.address).map_or(0, Vec::len);
        println!("{:<12} {} created in block {:>4} ({}), {flows} flows", c.archetype, c.address, c.creation_block, c.creation_mode);
    }
    println!("{} token transfers planted, {} malformed logs", gt.token_transfers.len(), gt.malformed_token_logs.len());
    Ok(())
}
