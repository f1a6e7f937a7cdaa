//! Controlled corruption of a valid corpus, one validator defect per
//! injection.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::GenError;
use crate::chain::{Hash32, TraceFrame, TraceKind, Wei};
use crate::ingest::{DefectCode, RawBundle};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InjectedDefect {
    pub block_number: u64,
    pub code: DefectCode,
}

const KINDS: [DefectCode; 6] = [
    DefectCode::BrokenParentLink,
    DefectCode::NonMonotoneTimestamp,
    DefectCode::MissingReceipt,
    DefectCode::OrphanTrace,
    DefectCode::BadTxIndex,
    DefectCode::NonMonotoneNumber,
];

/// Injects `k` defects into distinct, pairwise non-adjacent blocks so that
/// `validate_chain` reports exactly `k` defect records.
pub fn inject_defects(bundles: &mut [RawBundle], k: usize, seed: u64) -> Result<Vec<InjectedDefect>, GenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = bundles.len();
    let mut kinds = KINDS;
    kinds.shuffle(&mut rng);
    let mut used: BTreeSet<usize> = BTreeSet::new();
    let mut out = Vec::new();
    let free = |used: &BTreeSet<usize>, i: usize| !used.contains(&i) && !used.contains(&(i + 1)) && (i == 0 || !used.contains(&(i - 1)));

    for j in 0..k {
        let mut placed = false;
        for attempt in 0..KINDS.len() {
            let code = kinds[(j + attempt) % KINDS.len()];
            let eligible: Vec<usize> = (0..n)
                .filter(|&i| free(&used, i))
                .filter(|&i| match code {
                    DefectCode::BrokenParentLink => i > 0,
                    DefectCode::NonMonotoneTimestamp => i > 0 && bundles[i - 1].block.timestamp > 0,
                    DefectCode::MissingReceipt | DefectCode::BadTxIndex => !bundles[i].block.transactions.is_empty(),
                    DefectCode::OrphanTrace => true,
                    DefectCode::NonMonotoneNumber => i + 1 == n && n > 1,
                })
                .collect();
            let Some(&i) = eligible.get(rng.random_range(0..eligible.len().max(1))) else { continue };
            apply(bundles, i, code, &mut rng);
            used.insert(i);
            out.push(InjectedDefect { block_number: bundles[i].block.number, code });
            placed = true;
            break;
        }
        if !placed {
            return Err(GenError::NotEnoughBlocks { requested: k, blocks: n });
        }
    }
    Ok(out)
}

fn apply(bundles: &mut [RawBundle], i: usize, code: DefectCode, rng: &mut ChaCha8Rng) {
    let prev_ts = if i > 0 { bundles[i - 1].block.timestamp } else { 0 };
    let b = &mut bundles[i];
    match code {
        DefectCode::BrokenParentLink => {
            b.block.parent_hash = Hash32(rng.random());
        }
        DefectCode::NonMonotoneTimestamp => {
            b.block.timestamp = prev_ts - 1;
        }
        DefectCode::MissingReceipt => {
            let t = rng.random_range(0..b.block.transactions.len());
            let hash = b.block.transactions[t].hash;
            b.receipts.remove(&hash);
        }
        DefectCode::OrphanTrace => {
            let hash = Hash32(rng.random());
            let frame = TraceFrame {
                tx_hash: hash,
                block_number: b.block.number,
                trace_path: vec![0],
                kind: TraceKind::Call,
                from: crate::chain::Address(rng.random()),
                to: crate::chain::Address(rng.random()),
                value: Wei::ZERO,
                gas_used: 0,
                error: None,
                input: Default::default(),
            };
            b.traces.insert(hash, vec![frame]);
        }
        DefectCode::BadTxIndex => {
            let t = rng.random_range(0..b.block.transactions.len());
            b.block.transactions[t].tx_index += 1000;
        }
        DefectCode::NonMonotoneNumber => {
            let number = b.block.number + 1;
            b.block.number = number;
            for tx in &mut b.block.transactions {
                tx.block_number = number;
            }
            for r in b.receipts.values_mut() {
                r.block_number = number;
            }
            for f in b.traces.values_mut().flatten() {
                f.block_number = number;
            }
        }
    }
}
