//! Derive the six CSV datasets and check that the money adds up.

use etherscope::derive::{derive_all, net_balances, write_datasets};
use etherscope::synth::{generate, ledger_replay, GenConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = generate(&GenConfig { seed: 11, n_blocks: 300, ..GenConfig::default() })?;
    let gt = &corpus.ground_truth;
    let ds = derive_all(&corpus.bundles, 4)?;

    let out = std::env::temp_dir().join("etherscope-datasets");
    let summary = write_datasets(&ds, &out)?;
    println!("datasets in {}", out.display());
    for (file, rows) in etherscope::derive::DATASET_FILES.iter().zip(summary.rows) {
        println!("  {:<28} {rows}", file.name);
    }
    println!("  {} malformed token logs", summary.defects);

    let rewards = corpus.bundles.iter().map(|b| (b.block.miner, gt.genesis.block_reward));
    let derived = net_balances(&ds, &gt.genesis.alloc, rewards)?;
    let replay = ledger_replay(&corpus.bundles, &gt.genesis)?;
    let nonzero = |m: &std::collections::BTreeMap<_, etherscope::chain::Wei>| m.values().filter(|v| !v.is_zero()).count();
    let agree = derived.iter().filter(|(_, v)| !v.is_zero()).all(|(a, v)| replay.balances.get(a) == Some(v));
    println!("{} non-zero balances, derived == replay: {agree}", nonzero(&derived));
    Ok(())
}
