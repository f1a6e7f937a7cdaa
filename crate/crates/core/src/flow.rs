//! Ether Flow Graphs: the time-ordered investment (inflow) and payment
//! (outflow) events of one contract, with the running count of distinct
//! participants. Exported as CSV or as an SVG scatter where circle area
//! tracks the amount.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::chain::{Address, Hash32, Wei};
use crate::derive::{derive_contract_info, derive_internal_transfers, DeriveError};
use crate::ingest::RawBundle;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("contract {0} is not created in this corpus")]
    UnknownContract(Address),
    #[error(transparent)]
    Derive(#[from] DeriveError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlowKind {
    Investment,
    Payment,
}

impl FlowKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FlowKind::Investment => "investment",
            FlowKind::Payment => "payment",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowEvent {
    pub timestamp: u64,
    pub block_number: u64,
    pub tx_index: u32,
    /// Empty for a top-level transaction.
    pub trace_path: Vec<u32>,
    pub tx_hash: Hash32,
    pub kind: FlowKind,
    pub counterparty: Address,
    pub amount: Wei,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowGraph {
    pub contract: Address,
    /// Ordered by (block, transaction index, trace path).
    pub events: Vec<FlowEvent>,
    /// Distinct counterparties seen up to and including each event.
    pub participants_at_event: Vec<u32>,
}

impl FlowGraph {
    pub fn new(contract: Address, events: Vec<FlowEvent>) -> FlowGraph {
        let mut seen = HashSet::new();
        let participants_at_event = events
            .iter()
            .map(|e| {
                seen.insert(e.counterparty);
                seen.len() as u32
            })
            .collect();
        FlowGraph { contract, events, participants_at_event }
    }

    pub fn participant_count(&self) -> u32 {
        self.participants_at_event.last().copied().unwrap_or(0)
    }
}

/// Builds graphs for several contracts in one pass over the corpus.
pub fn build_flow_graphs<'a>(
    contracts: impl IntoIterator<Item = Address>,
    bundles: impl IntoIterator<Item = &'a RawBundle>,
) -> BTreeMap<Address, FlowGraph> {
    let mut events: HashMap<Address, Vec<FlowEvent>> = contracts.into_iter().map(|c| (c, Vec::new())).collect();

    for bundle in bundles {
        let block = &bundle.block;
        let internal = derive_internal_transfers(bundle);
        let mut internal_by_tx: HashMap<Hash32, Vec<_>> = HashMap::new();
        for t in internal {
            internal_by_tx.entry(t.tx_hash).or_default().push(t);
        }
        for tx in &block.transactions {
            let base = |kind, counterparty, amount, trace_path| FlowEvent {
                timestamp: block.timestamp,
                block_number: block.number,
                tx_index: tx.tx_index,
                trace_path,
                tx_hash: tx.hash,
                kind,
                counterparty,
                amount,
            };
            let succeeded = bundle.receipt(&tx.hash).is_some_and(|r| r.status.is_success());
            if let Some(to) = tx.to {
                if succeeded && !tx.value.is_zero() && to != tx.from {
                    if let Some(list) = events.get_mut(&to) {
                        list.push(base(FlowKind::Investment, tx.from, tx.value, vec![]));
                    }
                }
            }
            for t in internal_by_tx.get(&tx.hash).into_iter().flatten() {
                if t.from == t.to {
                    continue;
                }
                if let Some(list) = events.get_mut(&t.to) {
                    list.push(base(FlowKind::Investment, t.from, t.value, t.trace_path.clone()));
                }
                if let Some(list) = events.get_mut(&t.from) {
                    list.push(base(FlowKind::Payment, t.to, t.value, t.trace_path.clone()));
                }
            }
        }
    }
    events.into_iter().map(|(c, ev)| (c, FlowGraph::new(c, ev))).collect()
}

/// Flow graph of one contract. The contract must be created in the corpus.
pub fn build_flow_graph(contract: Address, bundles: &[RawBundle]) -> Result<FlowGraph, FlowError> {
    let known = derive_contract_info(bundles)?.iter().any(|c| c.contract_address == contract);
    if !known {
        return Err(FlowError::UnknownContract(contract));
    }
    Ok(build_flow_graphs([contract], bundles).remove(&contract).expect("requested contract"))
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FlowSummary {
    pub n_investment: u64,
    pub n_payment: u64,
    pub total_in: Wei,
    pub total_out: Wei,
    pub participant_count: u32,
    pub lifetime_blocks: u64,
}

pub fn flow_summary(fg: &FlowGraph) -> FlowSummary {
    let mut s = FlowSummary { participant_count: fg.participant_count(), ..Default::default() };
    for e in &fg.events {
        match e.kind {
            FlowKind::Investment => {
                s.n_investment += 1;
                s.total_in = s.total_in.checked_add(e.amount).expect("total inflow fits in 256 bits");
            }
            FlowKind::Payment => {
                s.n_payment += 1;
                s.total_out = s.total_out.checked_add(e.amount).expect("total outflow fits in 256 bits");
            }
        }
    }
    if let (Some(first), Some(last)) = (fg.events.first(), fg.events.last()) {
        s.lifetime_blocks = last.block_number - first.block_number;
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExportFormat {
    #[default]
    Csv,
    Svg,
}

impl FromStr for ExportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "svg" => Ok(ExportFormat::Svg),
            other => Err(format!("unknown format {other:?} (expected csv|svg)")),
        }
    }
}

pub fn flow_csv(fg: &FlowGraph) -> String {
    let mut out = String::from("timestamp,block_number,kind,counterparty,amount,cumulative_participants\n");
    for (e, p) in fg.events.iter().zip(&fg.participants_at_event) {
        let _ = writeln!(out, "{},{},{},{},{},{}", e.timestamp, e.block_number, e.kind.as_str(), e.counterparty, e.amount, p);
    }
    out
}

pub const SVG_WIDTH: f64 = 800.0;
pub const SVG_HEIGHT: f64 = 420.0;
/// Radius in pixels of the largest amount; every other circle has radius
/// `SVG_MAX_RADIUS * sqrt(amount / max_amount)`, so area is proportional
/// to amount.
pub const SVG_MAX_RADIUS: f64 = 14.0;
pub const INVESTMENT_COLOR: &str = "#d62728";
pub const PAYMENT_COLOR: &str = "#1f77b4";
const MARGIN: f64 = 56.0;

/// Scatter of events: x = timestamp, y = cumulative participants.
pub fn flow_svg(fg: &FlowGraph) -> String {
    let plot_w = SVG_WIDTH - 2.0 * MARGIN;
    let plot_h = SVG_HEIGHT - 2.0 * MARGIN;
    let (t_min, t_max) = fg
        .events
        .iter()
        .fold((u64::MAX, 0u64), |(lo, hi), e| (lo.min(e.timestamp), hi.max(e.timestamp)));
    let y_max = fg.participant_count().max(1) as f64;
    let max_amount = fg.events.iter().map(|e| e.amount.to_f64()).fold(0.0, f64::max);

    let x_of = |t: u64| {
        if t_max > t_min {
            MARGIN + plot_w * (t - t_min) as f64 / (t_max - t_min) as f64
        } else {
            MARGIN + plot_w / 2.0
        }
    };
    let y_of = |p: u32| SVG_HEIGHT - MARGIN - plot_h * p as f64 / y_max;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = SVG_WIDTH,
        h = SVG_HEIGHT
    );
    let _ = writeln!(out, r#"<title>Ether flow graph of {}</title>"#, fg.contract);
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>"#,
        m = MARGIN,
        b = SVG_HEIGHT - MARGIN,
        r = SVG_WIDTH - MARGIN
    );
    let _ = writeln!(out, r#"<line x1="{m}" y1="{m}" x2="{m}" y2="{b}" stroke="black"/>"#, m = MARGIN, b = SVG_HEIGHT - MARGIN);
    let _ = writeln!(
        out,
        r#"<text x="{x}" y="{y}" font-size="12" text-anchor="middle">time (unix seconds)</text>"#,
        x = SVG_WIDTH / 2.0,
        y = SVG_HEIGHT - 16.0
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{y}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {y})">participants</text>"#,
        y = SVG_HEIGHT / 2.0
    );
    if !fg.events.is_empty() {
        let _ = writeln!(out, r#"<text x="{MARGIN}" y="{}" font-size="10">{t_min}</text>"#, SVG_HEIGHT - MARGIN + 14.0);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{t_max}</text>"#,
            SVG_WIDTH - MARGIN,
            SVG_HEIGHT - MARGIN + 14.0
        );
        let _ = writeln!(out, r#"<text x="{}" y="{MARGIN}" font-size="10" text-anchor="end">{}</text>"#, MARGIN - 4.0, y_max);
    }
    for (i, (color, label)) in [(INVESTMENT_COLOR, "investment"), (PAYMENT_COLOR, "payment")].iter().enumerate() {
        let y = 16.0 + 16.0 * i as f64;
        let _ = writeln!(out, r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/>"#, SVG_WIDTH - 130.0, y - 9.0);
        let _ = writeln!(out, r#"<text x="{}" y="{y}" font-size="11">{label}</text>"#, SVG_WIDTH - 114.0);
    }
    for (e, &p) in fg.events.iter().zip(&fg.participants_at_event) {
        let r = if max_amount > 0.0 { SVG_MAX_RADIUS * (e.amount.to_f64() / max_amount).sqrt() } else { 0.0 };
        let color = match e.kind {
            FlowKind::Investment => INVESTMENT_COLOR,
            FlowKind::Payment => PAYMENT_COLOR,
        };
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="{:.3}" fill="{color}" fill-opacity="0.55" stroke="{color}"/>"#,
            x_of(e.timestamp),
            y_of(p),
            r
        );
    }
    out.push_str("</svg>\n");
    out
}

pub fn export_flow_graph(fg: &FlowGraph, path: impl AsRef<Path>, format: ExportFormat) -> Result<(), FlowError> {
    let path = path.as_ref();
    let text = match format {
        ExportFormat::Csv => flow_csv(fg),
        ExportFormat::Svg => flow_svg(fg),
    };
    std::fs::write(path, text).map_err(|e| FlowError::Io { path: path.to_path_buf(), source: e })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(block: u64, kind: FlowKind, who: u8, amount: u64) -> FlowEvent {
        FlowEvent {
            timestamp: 1000 + block * 13,
            block_number: block,
            tx_index: 0,
            trace_path: vec![],
            tx_hash: Hash32([block as u8; 32]),
            kind,
            counterparty: Address([who; 20]),
            amount: Wei::from_u64(amount),
        }
    }

    #[test]
    fn empty_graph() {
        let fg = FlowGraph::new(Address::ZERO, vec![]);
        assert_eq!(flow_summary(&fg), FlowSummary::default());
        assert_eq!(flow_csv(&fg).lines().count(), 1);
        assert_eq!(flow_svg(&fg).matches("<circle").count(), 0);
    }

    #[test]
    fn same_counterparty_counts_once() {
        let fg = FlowGraph::new(Address::ZERO, vec![ev(1, FlowKind::Investment, 5, 10), ev(2, FlowKind::Payment, 5, 15)]);
        assert_eq!(fg.participants_at_event, vec![1, 1]);
    }

    #[test]
    fn summary_arithmetic() {
        let fg = FlowGraph::new(
            Address::ZERO,
            vec![
                ev(3, FlowKind::Investment, 1, 1),
                ev(4, FlowKind::Investment, 2, 1),
                ev(5, FlowKind::Investment, 3, 1),
                ev(9, FlowKind::Payment, 1, 2),
            ],
        );
        let s = flow_summary(&fg);
        assert_eq!((s.n_investment, s.n_payment), (3, 1));
        assert_eq!((s.total_in, s.total_out), (Wei::from_u64(3), Wei::from_u64(2)));
        assert_eq!(s.participant_count, 3);
        assert_eq!(s.lifetime_blocks, 6);
    }

    #[test]
    fn svg_radius_tracks_sqrt_amount() {
        let fg = FlowGraph::new(Address::ZERO, vec![ev(1, FlowKind::Investment, 1, 100), ev(2, FlowKind::Payment, 2, 25)]);
        let svg = flow_svg(&fg);
        assert!(svg.contains(&format!(r#"r="{:.3}""#, SVG_MAX_RADIUS)));
        assert!(svg.contains(&format!(r#"r="{:.3}""#, SVG_MAX_RADIUS / 2.0)));
        assert_eq!(svg.matches("<circle").count(), 2);
    }
}
