//! Naive sequential balance replay over a raw corpus. Kept apart from the
//! derive module so the two can check each other.

use std::collections::BTreeMap;

use thiserror::Error;

use super::Genesis;
use crate::chain::{Address, Hash32, TraceKind, Wei};
use crate::ingest::RawBundle;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("balance of {address} goes negative in block {block_number} (tx {tx_hash:?})")]
    NegativeBalance { address: Address, block_number: u64, tx_hash: Option<Hash32> },
    #[error("balance of {address} overflows in block {block_number}")]
    Overflow { address: Address, block_number: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Replay {
    pub balances: BTreeMap<Address, Wei>,
    /// Balance after each block in which it changed.
    pub history: BTreeMap<Address, Vec<(u64, Wei)>>,
}

impl Replay {
    /// Final balances without zero entries.
    pub fn nonzero_balances(&self) -> BTreeMap<Address, Wei> {
        self.balances.iter().filter(|(_, w)| !w.is_zero()).map(|(a, w)| (*a, *w)).collect()
    }
}

struct Ledger {
    balances: BTreeMap<Address, Wei>,
    block: u64,
    tx: Option<Hash32>,
    changed: Vec<Address>,
}

impl Ledger {
    fn add(&mut self, a: Address, v: Wei) -> Result<(), ReplayError> {
        let b = self.balances.entry(a).or_insert(Wei::ZERO);
        *b = b.checked_add(v).map_err(|_| ReplayError::Overflow { address: a, block_number: self.block })?;
        self.changed.push(a);
        Ok(())
    }

    fn sub(&mut self, a: Address, v: Wei) -> Result<(), ReplayError> {
        let b = self.balances.entry(a).or_insert(Wei::ZERO);
        *b = b
            .checked_sub(v)
            .map_err(|_| ReplayError::NegativeBalance { address: a, block_number: self.block, tx_hash: self.tx })?;
        self.changed.push(a);
        Ok(())
    }

    fn transfer(&mut self, from: Address, to: Address, v: Wei) -> Result<(), ReplayError> {
        self.sub(from, v)?;
        self.add(to, v)
    }
}

/// Replays every value movement: fees to the block's miner, top-level
/// values of successful transactions, value-carrying sub-frames that were
/// not rolled back, and the block reward.
pub fn ledger_replay(bundles: &[RawBundle], genesis: &Genesis) -> Result<Replay, ReplayError> {
    let mut ledger = Ledger { balances: BTreeMap::new(), block: 0, tx: None, changed: vec![] };
    let mut history: BTreeMap<Address, Vec<(u64, Wei)>> = BTreeMap::new();
    for (a, v) in &genesis.alloc {
        ledger.add(*a, *v)?;
    }
    ledger.changed.clear();

    for bundle in bundles {
        let block = &bundle.block;
        ledger.block = block.number;
        for tx in &block.transactions {
            ledger.tx = Some(tx.hash);
            let Some(receipt) = bundle.receipts.get(&tx.hash) else { continue };
            let fee = tx
                .gas_price
                .checked_mul_u64(receipt.gas_used)
                .map_err(|_| ReplayError::Overflow { address: tx.from, block_number: block.number })?;
            ledger.transfer(tx.from, block.miner, fee)?;
            if !receipt.status.is_success() {
                continue;
            }
            let dest = tx.to.or(receipt.contract_address);
            if let Some(dest) = dest {
                ledger.transfer(tx.from, dest, tx.value)?;
            }
            let frames = bundle.traces.get(&tx.hash).map(Vec::as_slice).unwrap_or_default();
            let failed: Vec<&Vec<u32>> = frames.iter().filter(|f| f.error.is_some()).map(|f| &f.trace_path).collect();
            for f in frames {
                if f.trace_path.is_empty() || f.value.is_zero() {
                    continue;
                }
                if matches!(f.kind, TraceKind::DelegateCall | TraceKind::StaticCall) {
                    continue;
                }
                if failed.iter().any(|p| f.trace_path.starts_with(p)) {
                    continue;
                }
                ledger.transfer(f.from, f.to, f.value)?;
            }
        }
        ledger.tx = None;
        ledger.add(block.miner, genesis.block_reward)?;

        ledger.changed.sort();
        ledger.changed.dedup();
        for a in ledger.changed.drain(..) {
            history.entry(a).or_default().push((block.number, ledger.balances[&a]));
        }
    }
    Ok(Replay { balances: ledger.balances, history })
}
