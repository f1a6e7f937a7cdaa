//! Bytecode templates per archetype. Each instance repeats the archetype's
//! core routine and adds some filler so that no two contracts share an
//! identical opcode profile.

use std::collections::BTreeMap;

use rand::Rng;

use crate::derive::TRANSFER_SIG;
use crate::ponzi::assemble;

type Instr = (&'static str, Vec<u8>);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlantedCode {
    pub code: Vec<u8>,
    /// Mnemonic counts of the instruction list the code was assembled from.
    pub composition: BTreeMap<String, u64>,
}

fn op(name: &'static str) -> Instr {
    (name, vec![])
}

fn push<R: Rng>(rng: &mut R, n: usize) -> Instr {
    const NAMES: [&str; 4] = ["PUSH1", "PUSH2", "PUSH3", "PUSH4"];
    let bytes = (0..n).map(|_| rng.random()).collect();
    (NAMES[n - 1], bytes)
}

fn prologue() -> Vec<Instr> {
    vec![("PUSH1", vec![0x80]), ("PUSH1", vec![0x40]), op("MSTORE")]
}

fn core<R: Rng>(archetype: &str, rng: &mut R) -> Vec<Instr> {
    let mut v = Vec::new();
    match archetype {
        "ponzi" => {
            v.extend([op("CALLVALUE"), op("ISZERO"), push(rng, 2), op("JUMPI")]);
            v.extend([op("CALLER"), push(rng, 1), op("SLOAD"), op("ADD"), op("SSTORE")]);
            v.extend([op("SELFBALANCE"), push(rng, 1), op("SLOAD"), op("LT"), push(rng, 2), op("JUMPI")]);
            v.extend([push(rng, 1), op("DUP1"), op("DUP1"), op("DUP1"), op("DUP5"), op("DUP6"), op("GAS"), op("CALL"), op("POP")]);
            v.extend([push(rng, 1), op("SLOAD"), push(rng, 1), op("ADD"), push(rng, 1), op("SSTORE"), op("JUMPDEST")]);
        }
        "lottery" => {
            v.extend([op("CALLVALUE"), push(rng, 4), op("EQ"), push(rng, 2), op("JUMPI")]);
            v.extend([op("NUMBER"), op("PREVRANDAO"), op("XOR"), op("TIMESTAMP"), op("ADD"), push(rng, 1), op("MOD")]);
            v.extend([op("SLOAD"), op("SELFBALANCE"), push(rng, 1), op("DUP1"), op("DUP1"), op("SWAP4"), op("DUP6")]);
            v.extend([op("GAS"), op("CALL"), op("POP"), op("JUMPDEST")]);
        }
        "erc20" => {
            v.extend([push(rng, 1), op("CALLDATALOAD"), ("PUSH1", vec![0xe0]), op("SHR"), op("DUP1")]);
            v.extend([("PUSH4", vec![0xa9, 0x05, 0x9c, 0xbb]), op("EQ"), push(rng, 2), op("JUMPI")]);
            v.extend([op("CALLER"), op("SLOAD"), ("PUSH1", vec![0x24]), op("CALLDATALOAD"), op("SWAP1"), op("SUB")]);
            v.extend([op("CALLER"), op("SSTORE"), ("PUSH1", vec![0x04]), op("CALLDATALOAD"), op("SLOAD"), op("ADD"), op("SSTORE")]);
            v.extend([("PUSH32", TRANSFER_SIG.0.to_vec()), ("PUSH1", vec![0x20]), ("PUSH1", vec![0x00]), op("LOG3"), op("JUMPDEST")]);
        }
        "erc721" => {
            v.extend([push(rng, 1), op("CALLDATALOAD"), ("PUSH1", vec![0xe0]), op("SHR"), op("DUP1")]);
            v.extend([("PUSH4", vec![0x23, 0xb8, 0x72, 0xdd]), op("EQ"), push(rng, 2), op("JUMPI")]);
            v.extend([("PUSH1", vec![0x44]), op("CALLDATALOAD"), op("SLOAD"), op("CALLER"), op("EQ"), push(rng, 2), op("JUMPI")]);
            v.extend([push(rng, 1), op("DUP1"), op("REVERT"), op("JUMPDEST"), ("PUSH1", vec![0x24]), op("CALLDATALOAD")]);
            v.extend([("PUSH1", vec![0x44]), op("CALLDATALOAD"), op("SSTORE")]);
            v.extend([("PUSH32", TRANSFER_SIG.0.to_vec()), push(rng, 1), op("DUP1"), op("LOG4"), op("JUMPDEST")]);
        }
        "nft_factory" => {
            v.extend([op("CODESIZE"), push(rng, 1), push(rng, 1), op("CODECOPY")]);
            v.extend([op("CODESIZE"), push(rng, 1), push(rng, 1), op("CREATE"), op("POP")]);
        }
        other => panic!("no bytecode template for {other}"),
    }
    v
}

const FILLER: [&str; 8] = ["POP", "DUP1", "SWAP1", "ADD", "MLOAD", "MSTORE", "JUMPDEST", "ISZERO"];

/// Bytecode for one instance of an archetype.
pub fn archetype_code<R: Rng>(archetype: &str, rng: &mut R) -> PlantedCode {
    let mut instrs = prologue();
    for _ in 0..rng.random_range(1..=3) {
        instrs.extend(core(archetype, rng));
        for _ in 0..rng.random_range(0..=8) {
            instrs.push(op(FILLER[rng.random_range(0..FILLER.len())]));
        }
    }
    instrs.push(op("STOP"));

    let mut composition = BTreeMap::new();
    for (name, _) in &instrs {
        *composition.entry(name.to_string()).or_insert(0) += 1;
    }
    let refs: Vec<(&str, &[u8])> = instrs.iter().map(|(n, b)| (*n, b.as_slice())).collect();
    PlantedCode { code: assemble(&refs), composition }
}
