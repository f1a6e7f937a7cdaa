//! EVM bytecode disassembly into opcode histograms.

use std::collections::BTreeMap;
use std::sync::OnceLock;

const TABLE_TSV: &str = include_str!("../../data/opcodes_v1.tsv");

/// Name of the bucket collecting bytes that are not in the table.
pub const INVALID_BUCKET: &str = "INVALID";

#[derive(Debug)]
pub struct OpcodeTable {
    pub version: u32,
    names: [Option<&'static str>; 256],
    /// Names in numeric opcode order, then INVALID.
    vocabulary: Vec<&'static str>,
    slot: [Option<usize>; 256],
}

impl OpcodeTable {
    fn parse(text: &'static str) -> OpcodeTable {
        let mut version = None;
        let mut names = [None; 256];
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("version") {
                    version = Some(v.trim().parse().expect("opcode table version"));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let (code, name) = line.split_once('\t').expect("opcode table row is code<TAB>name");
            let code = u8::from_str_radix(code.trim_start_matches("0x"), 16).expect("opcode byte");
            assert!(names[code as usize].is_none(), "duplicate opcode 0x{code:02x}");
            names[code as usize] = Some(name.trim());
        }
        let mut vocabulary = Vec::new();
        let mut slot = [None; 256];
        for (code, name) in names.iter().enumerate() {
            if let Some(n) = name {
                slot[code] = Some(vocabulary.len());
                vocabulary.push(*n);
            }
        }
        vocabulary.push(INVALID_BUCKET);
        OpcodeTable { version: version.expect("opcode table declares a version"), names, vocabulary, slot }
    }

    pub fn name(&self, byte: u8) -> Option<&'static str> {
        self.names[byte as usize]
    }

    pub fn vocabulary(&self) -> &[&'static str] {
        &self.vocabulary
    }
}

pub fn opcode_table() -> &'static OpcodeTable {
    static TABLE: OnceLock<OpcodeTable> = OnceLock::new();
    TABLE.get_or_init(|| OpcodeTable::parse(TABLE_TSV))
}

/// Number of immediate bytes following `byte`.
pub fn immediate_len(byte: u8) -> usize {
    match byte {
        0x60..=0x7f => (byte - 0x5f) as usize,
        _ => 0,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OpcodeHistogram {
    pub counts: BTreeMap<&'static str, u64>,
    pub invalid_count: u64,
}

impl OpcodeHistogram {
    pub fn total(&self) -> u64 {
        self.counts.values().sum::<u64>() + self.invalid_count
    }

    pub fn count(&self, name: &str) -> u64 {
        if name == INVALID_BUCKET {
            return self.invalid_count;
        }
        self.counts.get(name).copied().unwrap_or(0)
    }

    /// Relative frequencies in vocabulary order; all zero for empty code.
    pub fn frequencies(&self) -> Vec<f64> {
        let table = opcode_table();
        let total = self.total();
        table
            .vocabulary()
            .iter()
            .map(|n| if total == 0 { 0.0 } else { self.count(n) as f64 / total as f64 })
            .collect()
    }
}

pub fn disassemble(code: &[u8]) -> OpcodeHistogram {
    let table = opcode_table();
    let mut by_slot = vec![0u64; table.vocabulary.len()];
    let mut pc = 0;
    while pc < code.len() {
        let op = code[pc];
        match table.slot[op as usize] {
            Some(s) => by_slot[s] += 1,
            None => *by_slot.last_mut().expect("INVALID slot") += 1,
        }
        pc += 1 + immediate_len(op);
    }
    let invalid_count = by_slot.pop().expect("INVALID slot");
    let counts = table.vocabulary.iter().zip(by_slot).filter(|(_, c)| *c > 0).map(|(n, c)| (*n, c)).collect();
    OpcodeHistogram { counts, invalid_count }
}

/// Assembles a list of (mnemonic, immediate) pairs. Used by the generator to
/// plant bytecode of known composition.
pub fn assemble(instrs: &[(&str, &[u8])]) -> Vec<u8> {
    let table = opcode_table();
    let mut out = Vec::new();
    for (name, imm) in instrs {
        let byte = (0..=255u8)
            .find(|b| table.name(*b) == Some(name))
            .unwrap_or_else(|| panic!("unknown mnemonic {name}"));
        assert_eq!(imm.len(), immediate_len(byte), "{name} immediate length");
        out.push(byte);
        out.extend_from_slice(imm);
    }
    out
}
