//! Raw export ingestion: the three line-delimited files (blocks, receipts,
//! traces), their join into per-block [`RawBundle`]s, chain validation and
//! range fetching from an abstract [`BlockSource`].

mod jsonl;
mod source;
mod validate;

use std::collections::BTreeMap;
use std::path::PathBuf;

use thiserror::Error;

use crate::chain::{Block, Hash32, Receipt, TraceFrame};

pub use jsonl::{read_raw, write_raw, RawReader, BLOCKS_FILE, RECEIPTS_FILE, TRACES_FILE};
pub use source::{
    fetch_range, fetch_range_sharded, BlockSource, DirSource, Fetched, MemorySource, RemoteSource, RetryPolicy,
    SourceError, Transport,
};
pub use validate::{validate_chain, Defect, DefectCode, ValidationReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JoinErrorKind {
    MissingReceipt,
    OrphanTrace,
    OrphanReceipt,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind:?} for tx {tx_hash} in block {block_number}{}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
pub struct JoinError {
    pub kind: JoinErrorKind,
    pub tx_hash: Hash32,
    pub block_number: u64,
    /// 1-based line in the receipts/traces file, when known.
    pub line: Option<usize>,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {field}: {message}")]
    Parse { file: String, line: usize, field: String, message: String },
    #[error("join error: {0}")]
    Join(#[from] JoinError),
    #[error("invalid range {from}..={to}")]
    InvalidRange { from: u64, to: u64 },
    #[error("blocks {from}..={to} unavailable after {attempts} attempt(s): {last_error}")]
    RangeUnavailable { from: u64, to: u64, attempts: u32, last_error: String },
}

impl IngestError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IngestError::Io { path: path.into(), source }
    }
}

/// One block joined with its receipts and traces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawBundle {
    pub block: Block,
    pub receipts: BTreeMap<Hash32, Receipt>,
    /// Frames per transaction, in trace-path order. Transactions without
    /// traces have no entry.
    pub traces: BTreeMap<Hash32, Vec<TraceFrame>>,
}

impl RawBundle {
    /// Joins receipts and traces to the block by transaction hash.
    pub fn assemble(block: Block, receipts: Vec<Receipt>, traces: Vec<TraceFrame>) -> Result<RawBundle, JoinError> {
        Self::assemble_lined(
            block,
            receipts.into_iter().map(|r| (None, r)).collect(),
            traces.into_iter().map(|t| (None, t)).collect(),
        )
    }

    pub(crate) fn assemble_lined(
        block: Block,
        receipts: Vec<(Option<usize>, Receipt)>,
        traces: Vec<(Option<usize>, TraceFrame)>,
    ) -> Result<RawBundle, JoinError> {
        let known: std::collections::HashSet<Hash32> = block.transactions.iter().map(|t| t.hash).collect();
        let number = block.number;
        let err = |kind, tx_hash, line| JoinError { kind, tx_hash, block_number: number, line };

        let mut receipt_map = BTreeMap::new();
        for (line, r) in receipts {
            if !known.contains(&r.tx_hash) || receipt_map.contains_key(&r.tx_hash) {
                return Err(err(JoinErrorKind::OrphanReceipt, r.tx_hash, line));
            }
            receipt_map.insert(r.tx_hash, r);
        }
        if let Some(tx) = block.transactions.iter().find(|t| !receipt_map.contains_key(&t.hash)) {
            return Err(err(JoinErrorKind::MissingReceipt, tx.hash, None));
        }

        let mut trace_map: BTreeMap<Hash32, Vec<TraceFrame>> = BTreeMap::new();
        for (line, t) in traces {
            if !known.contains(&t.tx_hash) {
                return Err(err(JoinErrorKind::OrphanTrace, t.tx_hash, line));
            }
            trace_map.entry(t.tx_hash).or_default().push(t);
        }
        for frames in trace_map.values_mut() {
            frames.sort_by(|a, b| a.trace_path.cmp(&b.trace_path));
        }
        Ok(RawBundle { block, receipts: receipt_map, traces: trace_map })
    }

    pub fn number(&self) -> u64 {
        self.block.number
    }

    pub fn receipt(&self, tx_hash: &Hash32) -> Option<&Receipt> {
        self.receipts.get(tx_hash)
    }

    pub fn traces_for(&self, tx_hash: &Hash32) -> &[TraceFrame] {
        self.traces.get(tx_hash).map(Vec::as_slice).unwrap_or(&[])
    }
}
