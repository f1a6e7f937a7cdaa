use std::collections::BTreeMap;
use std::ops::RangeInclusive;
use std::path::Path;
use std::time::Duration;

use rayon::prelude::*;
use thiserror::Error;

use super::jsonl::{parse_blocks, parse_receipts, parse_traces, render_blocks, render_receipts, render_traces};
use super::{read_raw, IngestError, RawBundle};
use crate::chain::{Block, Receipt, TraceFrame};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SourceError {
    /// Worth retrying (timeouts, rate limits, dropped connections).
    #[error("transient: {0}")]
    Transient(String),
    #[error("fatal: {0}")]
    Fatal(String),
}

/// Anything that can hand out raw chain data for a block range.
///
/// Implementations return every record whose block number lies in the
/// range, or an error; a short answer is detected by [`fetch_range`].
pub trait BlockSource: Sync {
    fn fetch_blocks(&self, range: RangeInclusive<u64>) -> Result<Vec<Block>, SourceError>;
    fn fetch_receipts(&self, range: RangeInclusive<u64>) -> Result<Vec<Receipt>, SourceError>;
    fn fetch_traces(&self, range: RangeInclusive<u64>) -> Result<Vec<TraceFrame>, SourceError>;
}

/// In-memory source, mostly for tests and for re-serving a loaded corpus.
#[derive(Debug, Clone, Default)]
pub struct MemorySource {
    bundles: BTreeMap<u64, RawBundle>,
}

impl MemorySource {
    pub fn new(bundles: impl IntoIterator<Item = RawBundle>) -> Self {
        MemorySource { bundles: bundles.into_iter().map(|b| (b.number(), b)).collect() }
    }

    fn in_range(&self, range: RangeInclusive<u64>) -> impl Iterator<Item = &RawBundle> {
        self.bundles.range(range).map(|(_, b)| b)
    }
}

impl BlockSource for MemorySource {
    fn fetch_blocks(&self, range: RangeInclusive<u64>) -> Result<Vec<Block>, SourceError> {
        Ok(self.in_range(range).map(|b| b.block.clone()).collect())
    }

    fn fetch_receipts(&self, range: RangeInclusive<u64>) -> Result<Vec<Receipt>, SourceError> {
        Ok(self
            .in_range(range)
            .flat_map(|b| b.block.transactions.iter().filter_map(|t| b.receipt(&t.hash).cloned()))
            .collect())
    }

    fn fetch_traces(&self, range: RangeInclusive<u64>) -> Result<Vec<TraceFrame>, SourceError> {
        Ok(self
            .in_range(range)
            .flat_map(|b| b.block.transactions.iter().flat_map(|t| b.traces_for(&t.hash).iter().cloned()))
            .collect())
    }
}

/// A local export directory served as a source. The directory is read once.
#[derive(Debug, Clone)]
pub struct DirSource(MemorySource);

impl DirSource {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, IngestError> {
        Ok(DirSource(MemorySource::new(read_raw(dir)?)))
    }
}

impl BlockSource for DirSource {
    fn fetch_blocks(&self, range: RangeInclusive<u64>) -> Result<Vec<Block>, SourceError> {
        self.0.fetch_blocks(range)
    }

    fn fetch_receipts(&self, range: RangeInclusive<u64>) -> Result<Vec<Receipt>, SourceError> {
        self.0.fetch_receipts(range)
    }

    fn fetch_traces(&self, range: RangeInclusive<u64>) -> Result<Vec<TraceFrame>, SourceError> {
        self.0.fetch_traces(range)
    }
}

/// Request/response channel to a remote export service. `method` is one of
/// `blocks`, `receipts`, `traces`; the response body is JSONL in the same
/// schema as the export files.
pub trait Transport: Sync {
    fn request(&self, method: &str, from: u64, to: u64) -> Result<String, SourceError>;
}

/// Source backed by a remote endpoint speaking the JSONL export schema.
pub struct RemoteSource<T> {
    transport: T,
}

impl<T: Transport> RemoteSource<T> {
    pub fn new(transport: T) -> Self {
        RemoteSource { transport }
    }

    fn call<R>(
        &self,
        method: &str,
        range: RangeInclusive<u64>,
        parse: fn(&str) -> Result<Vec<R>, IngestError>,
    ) -> Result<Vec<R>, SourceError> {
        let body = self.transport.request(method, *range.start(), *range.end())?;
        parse(&body).map_err(|e| SourceError::Fatal(format!("bad {method} response: {e}")))
    }
}

impl<T: Transport> BlockSource for RemoteSource<T> {
    fn fetch_blocks(&self, range: RangeInclusive<u64>) -> Result<Vec<Block>, SourceError> {
        self.call("blocks", range, parse_blocks)
    }

    fn fetch_receipts(&self, range: RangeInclusive<u64>) -> Result<Vec<Receipt>, SourceError> {
        self.call("receipts", range, parse_receipts)
    }

    fn fetch_traces(&self, range: RangeInclusive<u64>) -> Result<Vec<TraceFrame>, SourceError> {
        self.call("traces", range, parse_traces)
    }
}

/// Serves a [`MemorySource`] through the remote wire format; handy for
/// exercising [`RemoteSource`] end to end.
impl Transport for MemorySource {
    fn request(&self, method: &str, from: u64, to: u64) -> Result<String, SourceError> {
        match method {
            "blocks" => Ok(render_blocks(&self.fetch_blocks(from..=to)?)),
            "receipts" => Ok(render_receipts(&self.fetch_receipts(from..=to)?)),
            "traces" => Ok(render_traces(&self.fetch_traces(from..=to)?)),
            other => Err(SourceError::Fatal(format!("unknown method {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub multiplier: u32,
    pub max_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            initial_backoff: Duration::from_millis(200),
            multiplier: 2,
            max_backoff: Duration::from_secs(10),
        }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_retries: u32) -> Self {
        RetryPolicy { max_retries, initial_backoff: Duration::ZERO, multiplier: 2, max_backoff: Duration::ZERO }
    }

    fn backoff(&self, retry: u32) -> Duration {
        let factor = self.multiplier.saturating_pow(retry.saturating_sub(1));
        self.initial_backoff.saturating_mul(factor).min(self.max_backoff)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fetched {
    pub bundles: Vec<RawBundle>,
    /// Retries spent across all attempts (and shards).
    pub retries: u32,
}

fn fetch_once(source: &dyn BlockSource, from: u64, to: u64) -> Result<Vec<RawBundle>, FetchFailure> {
    let blocks = source.fetch_blocks(from..=to)?;
    let receipts = source.fetch_receipts(from..=to)?;
    let traces = source.fetch_traces(from..=to)?;

    let expected = to - from + 1;
    let numbers: Vec<u64> = blocks.iter().map(|b| b.number).collect();
    if numbers.len() as u64 != expected || numbers.iter().enumerate().any(|(i, &n)| n != from + i as u64) {
        return Err(FetchFailure::Incomplete(format!("expected {expected} consecutive blocks, got {}", numbers.len())));
    }

    let mut receipts_by_block: BTreeMap<u64, Vec<Receipt>> = BTreeMap::new();
    for r in receipts {
        receipts_by_block.entry(r.block_number).or_default().push(r);
    }
    let mut traces_by_block: BTreeMap<u64, Vec<TraceFrame>> = BTreeMap::new();
    for t in traces {
        traces_by_block.entry(t.block_number).or_default().push(t);
    }
    if let Some(stray) = receipts_by_block.keys().chain(traces_by_block.keys()).find(|n| !(from..=to).contains(*n)) {
        return Err(FetchFailure::Fatal(IngestError::Parse {
            file: "source".into(),
            line: 0,
            field: "blockNumber".into(),
            message: format!("record for block {stray} outside requested range"),
        }));
    }

    blocks
        .into_iter()
        .map(|b| {
            let n = b.number;
            RawBundle::assemble(
                b,
                receipts_by_block.remove(&n).unwrap_or_default(),
                traces_by_block.remove(&n).unwrap_or_default(),
            )
            .map_err(|e| FetchFailure::Fatal(e.into()))
        })
        .collect()
}

enum FetchFailure {
    Transient(String),
    Incomplete(String),
    Fatal(IngestError),
}

impl From<SourceError> for FetchFailure {
    fn from(e: SourceError) -> Self {
        match e {
            SourceError::Transient(m) => FetchFailure::Transient(m),
            SourceError::Fatal(m) => FetchFailure::Incomplete(m),
        }
    }
}

/// Fetches the inclusive range `from..=to`, retrying transient failures
/// with exponential backoff. Either every block arrives or an error is
/// returned.
pub fn fetch_range(source: &dyn BlockSource, from: u64, to: u64, policy: &RetryPolicy) -> Result<Fetched, IngestError> {
    if from > to {
        return Err(IngestError::InvalidRange { from, to });
    }
    let mut retries = 0;
    loop {
        match fetch_once(source, from, to) {
            Ok(bundles) => return Ok(Fetched { bundles, retries }),
            Err(FetchFailure::Fatal(e)) => return Err(e),
            Err(FetchFailure::Incomplete(m)) => {
                return Err(IngestError::RangeUnavailable { from, to, attempts: retries + 1, last_error: m })
            }
            Err(FetchFailure::Transient(m)) => {
                if retries >= policy.max_retries {
                    return Err(IngestError::RangeUnavailable { from, to, attempts: retries + 1, last_error: m });
                }
                retries += 1;
                std::thread::sleep(policy.backoff(retries));
            }
        }
    }
}

/// Splits the range into `shard_size`-block pieces fetched on `workers`
/// threads, then merges back into block order. The result does not depend
/// on shard size or worker count.
pub fn fetch_range_sharded(
    source: &dyn BlockSource,
    from: u64,
    to: u64,
    shard_size: u64,
    workers: usize,
    policy: &RetryPolicy,
) -> Result<Fetched, IngestError> {
    if from > to {
        return Err(IngestError::InvalidRange { from, to });
    }
    let shard_size = shard_size.max(1);
    let mut shards = Vec::new();
    let mut start = from;
    loop {
        let end = start.saturating_add(shard_size - 1).min(to);
        shards.push((start, end));
        if end == to {
            break;
        }
        start = end + 1;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    let parts: Vec<Result<Fetched, IngestError>> =
        pool.install(|| shards.par_iter().map(|&(a, b)| fetch_range(source, a, b, policy)).collect());

    let mut merged = Fetched { bundles: Vec::new(), retries: 0 };
    for part in parts {
        let part = part?;
        merged.retries += part.retries;
        merged.bundles.extend(part.bundles);
    }
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicU32, Ordering};

    use super::*;
    use crate::chain::{Address, Hash32};

    fn bundles(range: RangeInclusive<u64>) -> Vec<RawBundle> {
        range
            .map(|n| RawBundle {
                block: Block {
                    number: n,
                    hash: Hash32([n as u8; 32]),
                    parent_hash: Hash32([n as u8 - 1; 32]),
                    timestamp: n * 10,
                    miner: Address::ZERO,
                    gas_limit: 1,
                    gas_used: 0,
                    transactions: vec![],
                },
                receipts: Default::default(),
                traces: Default::default(),
            })
            .collect()
    }

    struct Flaky {
        inner: MemorySource,
        failures_left: AtomicU32,
    }

    impl BlockSource for Flaky {
        fn fetch_blocks(&self, range: RangeInclusive<u64>) -> Result<Vec<Block>, SourceError> {
            if self.failures_left.load(Ordering::SeqCst) > 0 {
                self.failures_left.fetch_sub(1, Ordering::SeqCst);
                return Err(SourceError::Transient("timeout".into()));
            }
            self.inner.fetch_blocks(range)
        }
        fn fetch_receipts(&self, range: RangeInclusive<u64>) -> Result<Vec<Receipt>, SourceError> {
            self.inner.fetch_receipts(range)
        }
        fn fetch_traces(&self, range: RangeInclusive<u64>) -> Result<Vec<TraceFrame>, SourceError> {
            self.inner.fetch_traces(range)
        }
    }

    #[test]
    fn single_block() {
        let src = MemorySource::new(bundles(1..=10));
        let got = fetch_range(&src, 7, 7, &RetryPolicy::no_delay(0)).unwrap();
        assert_eq!(got.bundles.len(), 1);
        assert_eq!(got.bundles[0].number(), 7);
    }

    #[test]
    fn inverted_range() {
        let src = MemorySource::new(bundles(1..=10));
        assert!(matches!(fetch_range(&src, 9, 3, &RetryPolicy::default()), Err(IngestError::InvalidRange { .. })));
    }

    #[test]
    fn retries_then_succeeds() {
        let src = Flaky { inner: MemorySource::new(bundles(1..=10)), failures_left: AtomicU32::new(2) };
        let got = fetch_range(&src, 2, 5, &RetryPolicy::no_delay(3)).unwrap();
        assert_eq!(got.retries, 2);
        assert_eq!(got.bundles.len(), 4);
    }

    #[test]
    fn retries_exhausted() {
        let src = Flaky { inner: MemorySource::new(bundles(1..=10)), failures_left: AtomicU32::new(5) };
        match fetch_range(&src, 2, 5, &RetryPolicy::no_delay(3)) {
            Err(IngestError::RangeUnavailable { attempts, .. }) => assert_eq!(attempts, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gap_is_unavailable() {
        let mut b = bundles(1..=10);
        b.remove(4);
        let src = MemorySource::new(b);
        assert!(matches!(fetch_range(&src, 1, 10, &RetryPolicy::no_delay(1)), Err(IngestError::RangeUnavailable { .. })));
    }

    #[test]
    fn backoff_grows_and_caps() {
        let p = RetryPolicy {
            max_retries: 5,
            initial_backoff: Duration::from_millis(100),
            multiplier: 2,
            max_backoff: Duration::from_millis(300),
        };
        assert_eq!(p.backoff(1), Duration::from_millis(100));
        assert_eq!(p.backoff(2), Duration::from_millis(200));
        assert_eq!(p.backoff(3), Duration::from_millis(300));
    }

    #[test]
    fn sharding_does_not_change_result() {
        let src = MemorySource::new(bundles(1..=40));
        let whole = fetch_range(&src, 3, 37, &RetryPolicy::no_delay(0)).unwrap();
        for (shard, workers) in [(1, 4), (7, 2), (100, 8)] {
            let sharded = fetch_range_sharded(&src, 3, 37, shard, workers, &RetryPolicy::no_delay(0)).unwrap();
            assert_eq!(sharded.bundles, whole.bundles);
        }
    }
}
