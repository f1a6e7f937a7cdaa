use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Lines, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::{IngestError, JoinError, JoinErrorKind, RawBundle};
use crate::chain::{Address, Block, Bytes, Hash32, LogEvent, Receipt, Status, TraceFrame, TraceKind, Transaction, Wei};

pub const BLOCKS_FILE: &str = "blocks.jsonl";
pub const RECEIPTS_FILE: &str = "receipts.jsonl";
pub const TRACES_FILE: &str = "traces.jsonl";

// Wire records. Fields are declared in sorted key order so that plain
// serialization is already the canonical form (sorted keys, no whitespace).

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockLine {
    #[serde(rename = "gasLimit")]
    gas_limit: u64,
    #[serde(rename = "gasUsed")]
    gas_used: u64,
    hash: Hash32,
    miner: Address,
    number: u64,
    #[serde(rename = "parentHash")]
    parent_hash: Hash32,
    timestamp: u64,
    transactions: Vec<TxLine>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TxLine {
    from: Address,
    gas: u64,
    #[serde(rename = "gasPrice")]
    gas_price: Wei,
    hash: Hash32,
    index: u32,
    input: Bytes,
    nonce: u64,
    to: Option<Address>,
    value: Wei,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReceiptLine {
    #[serde(rename = "blockNumber")]
    block_number: u64,
    #[serde(rename = "contractAddress")]
    contract_address: Option<Address>,
    #[serde(rename = "gasUsed")]
    gas_used: u64,
    logs: Vec<LogLine>,
    status: u8,
    #[serde(rename = "transactionHash")]
    transaction_hash: Hash32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LogLine {
    address: Address,
    data: Bytes,
    topics: Vec<Hash32>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TraceLine {
    #[serde(rename = "blockNumber")]
    block_number: u64,
    error: Option<String>,
    from: Address,
    #[serde(rename = "gasUsed")]
    gas_used: u64,
    #[serde(default)]
    input: Bytes,
    to: Address,
    #[serde(rename = "traceAddress")]
    trace_address: Vec<u32>,
    #[serde(rename = "transactionHash")]
    transaction_hash: Hash32,
    #[serde(rename = "type")]
    kind: TraceKind,
    value: Wei,
}

trait Wire: Sized {
    type Line: Serialize + DeserializeOwned;
    fn from_line(line: Self::Line) -> Result<Self, (String, String)>;
    fn to_line(&self) -> Self::Line;
    fn block_number(&self) -> u64;
}

impl Wire for Block {
    type Line = BlockLine;

    fn from_line(b: BlockLine) -> Result<Self, (String, String)> {
        let number = b.number;
        let transactions = b
            .transactions
            .into_iter()
            .enumerate()
            .map(|(i, t)| {
                if t.to.is_none() && t.input.is_empty() {
                    return Err((format!("transactions[{i}].input"), "creation transaction without code".into()));
                }
                Ok(Transaction {
                    hash: t.hash,
                    block_number: number,
                    tx_index: t.index,
                    from: t.from,
                    to: t.to,
                    value: t.value,
                    gas: t.gas,
                    gas_price: t.gas_price,
                    input: t.input,
                    nonce: t.nonce,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Block {
            number,
            hash: b.hash,
            parent_hash: b.parent_hash,
            timestamp: b.timestamp,
            miner: b.miner,
            gas_limit: b.gas_limit,
            gas_used: b.gas_used,
            transactions,
        })
    }

    fn to_line(&self) -> BlockLine {
        BlockLine {
            gas_limit: self.gas_limit,
            gas_used: self.gas_used,
            hash: self.hash,
            miner: self.miner,
            number: self.number,
            parent_hash: self.parent_hash,
            timestamp: self.timestamp,
            transactions: self
                .transactions
                .iter()
                .map(|t| TxLine {
                    from: t.from,
                    gas: t.gas,
                    gas_price: t.gas_price,
                    hash: t.hash,
                    index: t.tx_index,
                    input: t.input.clone(),
                    nonce: t.nonce,
                    to: t.to,
                    value: t.value,
                })
                .collect(),
        }
    }

    fn block_number(&self) -> u64 {
        self.number
    }
}

impl Wire for Receipt {
    type Line = ReceiptLine;

    fn from_line(r: ReceiptLine) -> Result<Self, (String, String)> {
        let status = match r.status {
            1 => Status::Success,
            0 => Status::Failure,
            other => return Err(("status".into(), format!("expected 0 or 1, got {other}"))),
        };
        let logs = r
            .logs
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                if l.topics.is_empty() || l.topics.len() > 4 {
                    return Err((format!("logs[{i}].topics"), format!("expected 1..=4 topics, got {}", l.topics.len())));
                }
                Ok(LogEvent { address: l.address, topics: l.topics, data: l.data })
            })
            .collect::<Result<_, _>>()?;
        Ok(Receipt {
            tx_hash: r.transaction_hash,
            block_number: r.block_number,
            status,
            gas_used: r.gas_used,
            contract_address: r.contract_address,
            logs,
        })
    }

    fn to_line(&self) -> ReceiptLine {
        ReceiptLine {
            block_number: self.block_number,
            contract_address: self.contract_address,
            gas_used: self.gas_used,
            logs: self
                .logs
                .iter()
                .map(|l| LogLine { address: l.address, data: l.data.clone(), topics: l.topics.clone() })
                .collect(),
            status: u8::from(self.status.is_success()),
            transaction_hash: self.tx_hash,
        }
    }

    fn block_number(&self) -> u64 {
        self.block_number
    }
}

impl Wire for TraceFrame {
    type Line = TraceLine;

    fn from_line(t: TraceLine) -> Result<Self, (String, String)> {
        if matches!(t.kind, TraceKind::DelegateCall | TraceKind::StaticCall) && !t.value.is_zero() {
            return Err(("value".into(), format!("{} frame must not carry value", t.kind.as_str())));
        }
        Ok(TraceFrame {
            tx_hash: t.transaction_hash,
            block_number: t.block_number,
            trace_path: t.trace_address,
            kind: t.kind,
            from: t.from,
            to: t.to,
            value: t.value,
            gas_used: t.gas_used,
            error: t.error,
            input: t.input,
        })
    }

    fn to_line(&self) -> TraceLine {
        TraceLine {
            block_number: self.block_number,
            error: self.error.clone(),
            from: self.from,
            gas_used: self.gas_used,
            input: self.input.clone(),
            to: self.to,
            trace_address: self.trace_path.clone(),
            transaction_hash: self.tx_hash,
            kind: self.kind,
            value: self.value,
        }
    }

    fn block_number(&self) -> u64 {
        self.block_number
    }
}

/// Reads one record type from a JSONL file, with a one-record lookahead.
struct Cursor<T> {
    file: String,
    lines: Option<Lines<BufReader<File>>>,
    line_no: usize,
    peeked: Option<(usize, T)>,
}

impl<T: Wire> Cursor<T> {
    fn open(dir: &Path, name: &str) -> Result<Self, IngestError> {
        let path = dir.join(name);
        let file = File::open(&path).map_err(|e| IngestError::io(&path, e))?;
        Ok(Cursor { file: name.to_string(), lines: Some(BufReader::new(file).lines()), line_no: 0, peeked: None })
    }

    fn fill(&mut self) -> Result<(), IngestError> {
        if self.peeked.is_some() {
            return Ok(());
        }
        let Some(lines) = self.lines.as_mut() else { return Ok(()) };
        loop {
            match lines.next() {
                None => {
                    self.lines = None;
                    return Ok(());
                }
                Some(Err(e)) => return Err(IngestError::io(&self.file, e)),
                Some(Ok(text)) => {
                    self.line_no += 1;
                    if text.trim().is_empty() {
                        continue;
                    }
                    let record = parse_line::<T>(&self.file, self.line_no, &text)?;
                    self.peeked = Some((self.line_no, record));
                    return Ok(());
                }
            }
        }
    }

    fn peek_block(&mut self) -> Result<Option<u64>, IngestError> {
        self.fill()?;
        Ok(self.peeked.as_ref().map(|(_, r)| r.block_number()))
    }

    fn next(&mut self) -> Result<Option<(usize, T)>, IngestError> {
        self.fill()?;
        Ok(self.peeked.take())
    }
}

fn parse_line<T: Wire>(file: &str, line: usize, text: &str) -> Result<T, IngestError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: T::Line = serde_path_to_error::deserialize(de).map_err(|e| IngestError::Parse {
        file: file.to_string(),
        line,
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    T::from_line(raw).map_err(|(field, message)| IngestError::Parse { file: file.to_string(), line, field, message })
}

/// Streaming reader over a raw export directory. Yields one bundle per line
/// of `blocks.jsonl`; the receipts and traces files must be sorted by block
/// number.
pub struct RawReader {
    blocks: Cursor<Block>,
    receipts: Cursor<Receipt>,
    traces: Cursor<TraceFrame>,
    done: bool,
}

impl RawReader {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, IngestError> {
        let dir = dir.as_ref();
        Ok(RawReader {
            blocks: Cursor::open(dir, BLOCKS_FILE)?,
            receipts: Cursor::open(dir, RECEIPTS_FILE)?,
            traces: Cursor::open(dir, TRACES_FILE)?,
            done: false,
        })
    }

    fn take_for<T: Wire>(
        cursor: &mut Cursor<T>,
        number: u64,
        orphan: JoinErrorKind,
        hash_of: impl Fn(&T) -> Hash32,
    ) -> Result<Vec<(Option<usize>, T)>, IngestError> {
        let mut out = Vec::new();
        while let Some(b) = cursor.peek_block()? {
            if b > number {
                break;
            }
            let (line, rec) = cursor.next()?.expect("peeked");
            if b < number {
                return Err(JoinError { kind: orphan, tx_hash: hash_of(&rec), block_number: b, line: Some(line) }.into());
            }
            out.push((Some(line), rec));
        }
        Ok(out)
    }

    fn step(&mut self) -> Result<Option<RawBundle>, IngestError> {
        let Some((_, block)) = self.blocks.next()? else {
            if let Some((line, r)) = self.receipts.next()? {
                return Err(JoinError {
                    kind: JoinErrorKind::OrphanReceipt,
                    tx_hash: r.tx_hash,
                    block_number: r.block_number,
                    line: Some(line),
                }
                .into());
            }
            if let Some((line, t)) = self.traces.next()? {
                return Err(JoinError {
                    kind: JoinErrorKind::OrphanTrace,
                    tx_hash: t.tx_hash,
                    block_number: t.block_number,
                    line: Some(line),
                }
                .into());
            }
            return Ok(None);
        };
        let receipts = Self::take_for(&mut self.receipts, block.number, JoinErrorKind::OrphanReceipt, |r| r.tx_hash)?;
        let traces = Self::take_for(&mut self.traces, block.number, JoinErrorKind::OrphanTrace, |t| t.tx_hash)?;
        Ok(Some(RawBundle::assemble_lined(block, receipts, traces)?))
    }
}

impl Iterator for RawReader {
    type Item = Result<RawBundle, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.step() {
            Ok(Some(b)) => Some(Ok(b)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Reads a whole export directory into memory.
pub fn read_raw(dir: impl AsRef<Path>) -> Result<Vec<RawBundle>, IngestError> {
    RawReader::open(dir)?.collect()
}

fn write_line<W: Write, T: Serialize>(out: &mut W, record: &T) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, record)?;
    out.write_all(b"\n")
}

/// Writes the three export files in canonical form.
pub fn write_raw<'a>(bundles: impl IntoIterator<Item = &'a RawBundle>, dir: impl AsRef<Path>) -> Result<(), IngestError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| IngestError::io(dir, e))?;
    let create = |name: &str| {
        let path = dir.join(name);
        File::create(&path).map(BufWriter::new).map_err(|e| IngestError::io(path, e))
    };
    let mut blocks = create(BLOCKS_FILE)?;
    let mut receipts = create(RECEIPTS_FILE)?;
    let mut traces = create(TRACES_FILE)?;

    let io = |name: &str| {
        let path = dir.join(name);
        move |e| IngestError::io(path, e)
    };
    for bundle in bundles {
        write_line(&mut blocks, &bundle.block.to_line()).map_err(io(BLOCKS_FILE))?;
        for tx in &bundle.block.transactions {
            if let Some(r) = bundle.receipt(&tx.hash) {
                write_line(&mut receipts, &r.to_line()).map_err(io(RECEIPTS_FILE))?;
            }
            for frame in bundle.traces_for(&tx.hash) {
                write_line(&mut traces, &frame.to_line()).map_err(io(TRACES_FILE))?;
            }
        }
    }
    blocks.flush().map_err(io(BLOCKS_FILE))?;
    receipts.flush().map_err(io(RECEIPTS_FILE))?;
    traces.flush().map_err(io(TRACES_FILE))?;
    Ok(())
}

/// Parses JSONL text of one record kind; used by remote sources.
pub(crate) fn parse_blocks(text: &str) -> Result<Vec<Block>, IngestError> {
    parse_all(BLOCKS_FILE, text)
}

pub(crate) fn parse_receipts(text: &str) -> Result<Vec<Receipt>, IngestError> {
    parse_all(RECEIPTS_FILE, text)
}

pub(crate) fn parse_traces(text: &str) -> Result<Vec<TraceFrame>, IngestError> {
    parse_all(TRACES_FILE, text)
}

fn parse_all<T: Wire>(file: &str, text: &str) -> Result<Vec<T>, IngestError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_line::<T>(file, i + 1, l))
        .collect()
}

fn render_lines<T: Wire>(records: &[T]) -> String {
    let mut out = Vec::new();
    for r in records {
        write_line(&mut out, &r.to_line()).expect("write to vec");
    }
    String::from_utf8(out).expect("json is utf-8")
}

pub(crate) fn render_blocks(records: &[Block]) -> String {
    render_lines(records)
}

pub(crate) fn render_receipts(records: &[Receipt]) -> String {
    render_lines(records)
}

pub(crate) fn render_traces(records: &[TraceFrame]) -> String {
    render_lines(records)
}
