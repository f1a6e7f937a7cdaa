//! Fetch a block range from a flaky remote endpoint with retries and
//! parallel shards.

use std::collections::HashSet;
use std::sync::Mutex;
use std::time::Duration;

use etherscope::ingest::{fetch_range_sharded, MemorySource, RemoteSource, RetryPolicy, SourceError, Transport};
use etherscope::synth::{generate, GenConfig};

/// Rate-limits the first request for each method and range.
struct Flaky {
    inner: MemorySource,
    seen: Mutex<HashSet<(String, u64, u64)>>,
}

impl Transport for Flaky {
    fn request(&self, method: &str, from: u64, to: u64) -> Result<String, SourceError> {
        if self.seen.lock().unwrap().insert((method.to_string(), from, to)) {
            return Err(SourceError::Transient("429 too many requests".into()));
        }
        self.inner.request(method, from, to)
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = generate(&GenConfig { seed: 2, n_blocks: 120, ..GenConfig::default() })?;
    let first = corpus.bundles[0].block.number;
    let last = corpus.bundles.last().unwrap().block.number;
    let remote = RemoteSource::new(Flaky { inner: MemorySource::new(corpus.bundles.clone()), seen: Mutex::default() });

    let policy = RetryPolicy { initial_backoff: Duration::from_millis(5), ..RetryPolicy::default() };
    let got = fetch_range_sharded(&remote, first, last, 25, 4, &policy)?;
    println!("fetched {} blocks with {} retries", got.bundles.len(), got.retries);
    println!("identical to source: {}", got.bundles == corpus.bundles);
    Ok(())
}
