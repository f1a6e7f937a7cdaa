//! The six analytical datasets derived from joined raw bundles:
//!
//! 1. block and transaction records
//! 2. internal ether transfers (value-moving sub-frames)
//! 3. contract information (creations)
//! 4. contract calls
//! 5. ERC20 token transfers
//! 6. ERC721 token transfers
//!
//! Per-block derivations are pure and run in parallel; contract creation
//! needs one sequential pass first so that calls can be matched against
//! the corpus-local contract registry.

mod output;
mod tokens;

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use thiserror::Error;

use crate::chain::{Address, Bytes, ChainError, Hash32, Status, TraceFrame, TraceKind, Wei};
use crate::ingest::RawBundle;

pub use output::{derive_all_to_dir, write_datasets, DatasetFile, DATASET_FILES, DEFECTS_FILE};
pub use tokens::{
    decode_erc20_transfers, decode_erc721_transfers, decode_transfers, MalformedTransferLog, TokenStandard,
    TokenTransferRecord, TRANSFER_SIG,
};

#[derive(Debug, Error)]
pub enum DeriveError {
    #[error("contract {address} created twice (blocks {first_block} and {second_block})")]
    DuplicateContractAddress { address: Address, first_block: u64, second_block: u64 },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("arithmetic: {0}")]
    Arithmetic(#[from] ChainError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockTxRecord {
    pub block_number: u64,
    pub timestamp: u64,
    pub miner: Address,
    pub tx_hash: Hash32,
    pub tx_index: u32,
    pub from: Address,
    pub to: Option<Address>,
    pub value: Wei,
    pub gas_price: Wei,
    pub gas_used_by_tx: u64,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InternalTransferRecord {
    pub block_number: u64,
    pub tx_hash: Hash32,
    pub trace_path: Vec<u32>,
    pub from: Address,
    pub to: Address,
    pub value: Wei,
    pub kind: TraceKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CreationMode {
    TopLevel,
    InternalCreate,
}

impl CreationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CreationMode::TopLevel => "top_level",
            CreationMode::InternalCreate => "internal_create",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractInfoRecord {
    pub contract_address: Address,
    pub creator: Address,
    pub creation_block: u64,
    pub creation_tx_hash: Hash32,
    pub creation_mode: CreationMode,
    pub code: Bytes,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractCallRecord {
    pub block_number: u64,
    pub tx_hash: Hash32,
    pub trace_path: Vec<u32>,
    pub caller: Address,
    pub callee: Address,
    pub value: Wei,
    pub kind: TraceKind,
    pub selector: Option<[u8; 4]>,
    pub status: Status,
}

/// Contracts known to the corpus, with the block each was created in.
#[derive(Debug, Clone, Default)]
pub struct ContractRegistry {
    created_at: HashMap<Address, u64>,
}

impl ContractRegistry {
    pub fn from_records(records: &[ContractInfoRecord]) -> Self {
        ContractRegistry { created_at: records.iter().map(|r| (r.contract_address, r.creation_block)).collect() }
    }

    /// True when `addr` is a contract created at or before `block`.
    pub fn is_contract_at(&self, addr: &Address, block: u64) -> bool {
        self.created_at.get(addr).is_some_and(|&b| b <= block)
    }

    pub fn contains(&self, addr: &Address) -> bool {
        self.created_at.contains_key(addr)
    }

    pub fn len(&self) -> usize {
        self.created_at.len()
    }

    pub fn is_empty(&self) -> bool {
        self.created_at.is_empty()
    }
}

/// Frames of one transaction that actually took effect: the transaction
/// succeeded and neither the frame nor any ancestor reported an error.
pub(crate) fn effective_frames<'a>(frames: &'a [TraceFrame], tx_status: Status) -> impl Iterator<Item = &'a TraceFrame> {
    let reverted: Vec<&[u32]> = frames.iter().filter(|f| f.error.is_some()).map(|f| f.trace_path.as_slice()).collect();
    frames
        .iter()
        .filter(move |f| tx_status.is_success() && !reverted.iter().any(|p| f.is_within(p)))
}

fn selector(input: &[u8]) -> Option<[u8; 4]> {
    input.get(..4).map(|s| s.try_into().expect("4 bytes"))
}

fn tx_status(bundle: &RawBundle, tx_hash: &Hash32) -> Status {
    bundle.receipt(tx_hash).map(|r| r.status).unwrap_or(Status::Failure)
}

pub fn derive_block_transactions(bundle: &RawBundle) -> Vec<BlockTxRecord> {
    let block = &bundle.block;
    block
        .transactions
        .iter()
        .map(|tx| {
            let receipt = bundle.receipt(&tx.hash);
            BlockTxRecord {
                block_number: block.number,
                timestamp: block.timestamp,
                miner: block.miner,
                tx_hash: tx.hash,
                tx_index: tx.tx_index,
                from: tx.from,
                to: tx.to,
                value: tx.value,
                gas_price: tx.gas_price,
                gas_used_by_tx: receipt.map_or(0, |r| r.gas_used),
                status: receipt.map_or(Status::Failure, |r| r.status),
            }
        })
        .collect()
}

pub fn derive_internal_transfers(bundle: &RawBundle) -> Vec<InternalTransferRecord> {
    let mut out = Vec::new();
    for tx in &bundle.block.transactions {
        let frames = bundle.traces_for(&tx.hash);
        for f in effective_frames(frames, tx_status(bundle, &tx.hash)) {
            if !f.is_top_level() && f.kind.moves_value() && !f.value.is_zero() {
                out.push(InternalTransferRecord {
                    block_number: bundle.block.number,
                    tx_hash: tx.hash,
                    trace_path: f.trace_path.clone(),
                    from: f.from,
                    to: f.to,
                    value: f.value,
                    kind: f.kind,
                });
            }
        }
    }
    out
}

/// Contract creations of one block, top-level before internal within each
/// transaction.
fn block_creations(bundle: &RawBundle) -> Vec<ContractInfoRecord> {
    let mut out = Vec::new();
    for tx in &bundle.block.transactions {
        let status = tx_status(bundle, &tx.hash);
        if tx.to.is_none() {
            if let Some(addr) = bundle.receipt(&tx.hash).and_then(|r| r.contract_address) {
                out.push(ContractInfoRecord {
                    contract_address: addr,
                    creator: tx.from,
                    creation_block: bundle.block.number,
                    creation_tx_hash: tx.hash,
                    creation_mode: CreationMode::TopLevel,
                    code: tx.input.clone(),
                });
            }
        }
        for f in effective_frames(bundle.traces_for(&tx.hash), status) {
            if !f.is_top_level() && f.kind == TraceKind::Create {
                out.push(ContractInfoRecord {
                    contract_address: f.to,
                    creator: f.from,
                    creation_block: bundle.block.number,
                    creation_tx_hash: tx.hash,
                    creation_mode: CreationMode::InternalCreate,
                    code: f.input.clone(),
                });
            }
        }
    }
    out
}

pub fn derive_contract_info<'a>(
    bundles: impl IntoIterator<Item = &'a RawBundle>,
) -> Result<Vec<ContractInfoRecord>, DeriveError> {
    let mut seen: HashMap<Address, u64> = HashMap::new();
    let mut out = Vec::new();
    for bundle in bundles {
        for rec in block_creations(bundle) {
            if let Some(&first_block) = seen.get(&rec.contract_address) {
                return Err(DeriveError::DuplicateContractAddress {
                    address: rec.contract_address,
                    first_block,
                    second_block: rec.creation_block,
                });
            }
            seen.insert(rec.contract_address, rec.creation_block);
            out.push(rec);
        }
    }
    Ok(out)
}

/// Calls into registry contracts from one block: top-level transactions and
/// call-type sub-frames. Sub-frame status reflects reverted ancestors.
pub fn derive_contract_calls(bundle: &RawBundle, registry: &ContractRegistry) -> Vec<ContractCallRecord> {
    let number = bundle.block.number;
    let mut out = Vec::new();
    for tx in &bundle.block.transactions {
        let status = tx_status(bundle, &tx.hash);
        if let Some(to) = tx.to.filter(|to| registry.is_contract_at(to, number)) {
            out.push(ContractCallRecord {
                block_number: number,
                tx_hash: tx.hash,
                trace_path: vec![],
                caller: tx.from,
                callee: to,
                value: tx.value,
                kind: TraceKind::Call,
                selector: selector(tx.input.as_slice()),
                status,
            });
        }
        let frames = bundle.traces_for(&tx.hash);
        let effective: Vec<&[u32]> = effective_frames(frames, status).map(|f| f.trace_path.as_slice()).collect();
        for f in frames {
            let is_call = matches!(f.kind, TraceKind::Call | TraceKind::DelegateCall | TraceKind::StaticCall);
            if f.is_top_level() || !is_call || !registry.is_contract_at(&f.to, number) {
                continue;
            }
            out.push(ContractCallRecord {
                block_number: number,
                tx_hash: tx.hash,
                trace_path: f.trace_path.clone(),
                caller: f.from,
                callee: f.to,
                value: f.value,
                kind: f.kind,
                selector: selector(f.input.as_slice()),
                status: if effective.contains(&f.trace_path.as_slice()) { Status::Success } else { Status::Failure },
            });
        }
    }
    out
}

/// All six datasets for a corpus, each in canonical order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SixDatasets {
    pub block_transactions: Vec<BlockTxRecord>,
    pub internal_transfers: Vec<InternalTransferRecord>,
    pub contracts: Vec<ContractInfoRecord>,
    pub contract_calls: Vec<ContractCallRecord>,
    pub erc20_transfers: Vec<TokenTransferRecord>,
    pub erc721_transfers: Vec<TokenTransferRecord>,
    pub token_defects: Vec<MalformedTransferLog>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DeriveSummary {
    /// Row counts in dataset order (1..=6).
    pub rows: [usize; 6],
    pub defects: usize,
}

impl SixDatasets {
    pub fn summary(&self) -> DeriveSummary {
        DeriveSummary {
            rows: [
                self.block_transactions.len(),
                self.internal_transfers.len(),
                self.contracts.len(),
                self.contract_calls.len(),
                self.erc20_transfers.len(),
                self.erc721_transfers.len(),
            ],
            defects: self.token_defects.len(),
        }
    }
}

#[derive(Default)]
struct BlockOutput {
    block_transactions: Vec<BlockTxRecord>,
    internal_transfers: Vec<InternalTransferRecord>,
    contract_calls: Vec<ContractCallRecord>,
    erc20: Vec<TokenTransferRecord>,
    erc721: Vec<TokenTransferRecord>,
    defects: Vec<MalformedTransferLog>,
}

fn derive_block(bundle: &RawBundle, registry: &ContractRegistry) -> BlockOutput {
    let (erc20, mut defects) = decode_erc20_transfers(bundle);
    let (erc721, d721) = decode_erc721_transfers(bundle);
    defects.extend(d721);
    defects.sort_by_key(|d| d.log_index);
    BlockOutput {
        block_transactions: derive_block_transactions(bundle),
        internal_transfers: derive_internal_transfers(bundle),
        contract_calls: derive_contract_calls(bundle, registry),
        erc20,
        erc721,
        defects,
    }
}

/// Runs every derivation over an ordered corpus on `workers` threads.
/// Output is identical for any worker count.
pub fn derive_all(bundles: &[RawBundle], workers: usize) -> Result<SixDatasets, DeriveError> {
    let contracts = derive_contract_info(bundles)?;
    let registry = ContractRegistry::from_records(&contracts);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    let per_block: Vec<BlockOutput> = pool.install(|| bundles.par_iter().map(|b| derive_block(b, &registry)).collect());

    let mut out = SixDatasets { contracts, ..Default::default() };
    for b in per_block {
        out.block_transactions.extend(b.block_transactions);
        out.internal_transfers.extend(b.internal_transfers);
        out.contract_calls.extend(b.contract_calls);
        out.erc20_transfers.extend(b.erc20);
        out.erc721_transfers.extend(b.erc721);
        out.token_defects.extend(b.defects);
    }
    Ok(out)
}

/// Final balances implied by the datasets: top-level values, internal
/// transfers, fees (gas price x gas used, paid to the block's miner) and
/// the supplied block rewards, on top of `genesis`.
pub fn net_balances(
    datasets: &SixDatasets,
    genesis: &BTreeMap<Address, Wei>,
    rewards: impl IntoIterator<Item = (Address, Wei)>,
) -> Result<BTreeMap<Address, Wei>, DeriveError> {
    let created_by: HashMap<Hash32, Address> = datasets
        .contracts
        .iter()
        .filter(|c| c.creation_mode == CreationMode::TopLevel)
        .map(|c| (c.creation_tx_hash, c.contract_address))
        .collect();

    let mut credit: BTreeMap<Address, Wei> = genesis.clone();
    let mut debit: BTreeMap<Address, Wei> = BTreeMap::new();
    let add = |m: &mut BTreeMap<Address, Wei>, a: Address, v: Wei| -> Result<(), ChainError> {
        let slot = m.entry(a).or_default();
        *slot = slot.checked_add(v)?;
        Ok(())
    };

    for (miner, reward) in rewards {
        add(&mut credit, miner, reward)?;
    }
    for tx in &datasets.block_transactions {
        let fee = tx.gas_price.checked_mul_u64(tx.gas_used_by_tx)?;
        add(&mut debit, tx.from, fee)?;
        add(&mut credit, tx.miner, fee)?;
        if tx.status.is_success() && !tx.value.is_zero() {
            let to = tx.to.or_else(|| created_by.get(&tx.tx_hash).copied());
            if let Some(to) = to {
                add(&mut debit, tx.from, tx.value)?;
                add(&mut credit, to, tx.value)?;
            }
        }
    }
    for t in &datasets.internal_transfers {
        add(&mut debit, t.from, t.value)?;
        add(&mut credit, t.to, t.value)?;
    }

    let mut out = BTreeMap::new();
    for (addr, c) in credit {
        let d = debit.remove(&addr).unwrap_or_default();
        out.insert(addr, c.checked_sub(d)?);
    }
    // Anything left was spent by an address that never received funds.
    if debit.values().any(|d| !d.is_zero()) {
        return Err(ChainError::Underflow.into());
    }
    Ok(out)
}
