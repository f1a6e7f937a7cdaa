use std::fmt;

use super::RawBundle;
use crate::chain::Hash32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DefectCode {
    BrokenParentLink,
    NonMonotoneNumber,
    NonMonotoneTimestamp,
    MissingReceipt,
    OrphanTrace,
    BadTxIndex,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Defect {
    pub block_number: u64,
    pub code: DefectCode,
    pub detail: String,
}

impl fmt::Display for Defect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "block {}\t{:?}\t{}", self.block_number, self.code, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub ok: bool,
    pub defects: Vec<Defect>,
}

struct Prev {
    number: u64,
    hash: Hash32,
    timestamp: u64,
}

/// Structural checks over an ordered run of bundles. Problems are reported
/// as defects; this never fails.
///
/// Each check compares a block only with its immediate predecessor, so one
/// corrupted field yields one defect rather than a cascade.
pub fn validate_chain<'a>(bundles: impl IntoIterator<Item = &'a RawBundle>) -> ValidationReport {
    let mut defects = Vec::new();
    let mut prev: Option<Prev> = None;

    for bundle in bundles {
        let block = &bundle.block;
        let mut push = |code, detail: String| defects.push(Defect { block_number: block.number, code, detail });

        if let Some(p) = &prev {
            if p.number.checked_add(1) != Some(block.number) {
                push(DefectCode::NonMonotoneNumber, format!("expected {}, found {}", p.number.saturating_add(1), block.number));
            }
            if block.parent_hash != p.hash {
                push(DefectCode::BrokenParentLink, format!("parent {} != previous hash {}", block.parent_hash, p.hash));
            }
            if block.timestamp < p.timestamp {
                push(DefectCode::NonMonotoneTimestamp, format!("{} < previous {}", block.timestamp, p.timestamp));
            }
        }

        for (pos, tx) in block.transactions.iter().enumerate() {
            if tx.tx_index as usize != pos {
                push(DefectCode::BadTxIndex, format!("tx {} at position {pos} has index {}", tx.hash, tx.tx_index));
            }
            if !bundle.receipts.contains_key(&tx.hash) {
                push(DefectCode::MissingReceipt, format!("tx {}", tx.hash));
            }
        }
        for tx_hash in bundle.traces.keys() {
            if !block.transactions.iter().any(|t| t.hash == *tx_hash) {
                push(DefectCode::OrphanTrace, format!("tx {tx_hash}"));
            }
        }

        prev = Some(Prev { number: block.number, hash: block.hash, timestamp: block.timestamp });
    }

    ValidationReport { ok: defects.is_empty(), defects }
}
