//! Disassemble a hand-assembled contract and a planted one.

use etherscope::ponzi::{assemble, disassemble, opcode_table};
use etherscope::synth::{generate, GenConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let table = opcode_table();
    println!("opcode table v{}, {} buckets", table.version, table.vocabulary().len());

    // PUSH1 0x80 PUSH1 0x40 MSTORE CALLVALUE, then a stray 0xfe.
    let mut code = assemble(&[("PUSH1", &[0x80]), ("PUSH1", &[0x40]), ("MSTORE", &[]), ("CALLVALUE", &[])]);
    code.push(0xfe);
    let h = disassemble(&code);
    println!("{:02x?}", code);
    for (name, n) in &h.counts {
        println!("  {name:<10} {n}");
    }
    println!("  invalid    {}", h.invalid_count);

    let corpus = generate(&GenConfig { seed: 1, n_blocks: 20, ..GenConfig::default() })?;
    let ponzi = corpus.ground_truth.contracts.iter().find(|c| c.archetype == "ponzi").expect("a ponzi contract");
    let info = etherscope::derive::derive_contract_info(&corpus.bundles)?;
    let code = &info.iter().find(|c| c.contract_address == ponzi.address).unwrap().code;
    let h = disassemble(code.as_slice());
    let mut top: Vec<_> = h.counts.iter().collect();
    top.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
    println!("ponzi {} ({} bytes), most common:", ponzi.address, code.as_slice().len());
    for (name, n) in top.iter().take(6) {
        println!("  {name:<10} {n}");
    }
    Ok(())
}
