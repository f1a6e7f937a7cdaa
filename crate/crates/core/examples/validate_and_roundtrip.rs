//! Write a corpus as JSONL, read it back through the streaming join, then
//! corrupt a few blocks and let the validator find them.

use etherscope::ingest::{read_raw, validate_chain, write_raw};
use etherscope::synth::{generate, inject_defects, GenConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = generate(&GenConfig { seed: 3, n_blocks: 200, ..GenConfig::default() })?;
    let dir = tempfile_dir("etherscope-roundtrip")?;
    write_raw(&corpus.bundles, &dir)?;
    let back = read_raw(&dir)?;
    println!("round trip equal: {}", back == corpus.bundles);
    println!("pristine: {} defects", validate_chain(&back).defects.len());

    let mut bad = back;
    let planted = inject_defects(&mut bad, 4, 1)?;
    for d in &planted {
        println!("injected {:?} at block {}", d.code, d.block_number);
    }
    for d in validate_chain(&bad).defects {
        println!("found    {d}");
    }
    Ok(())
}

fn tempfile_dir(name: &str) -> std::io::Result<std::path::PathBuf> {
    let dir = std::env::temp_dir().join(name);
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}
