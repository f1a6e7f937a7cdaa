//! Account-behaviour and opcode-frequency feature vectors.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::gini::gini;
use super::opcodes::{disassemble, opcode_table};
use super::PonziError;
use crate::chain::{parse_address, Address, SignedWei, Wei};
use crate::derive::{derive_contract_info, ContractInfoRecord};
use crate::flow::{build_flow_graphs, flow_summary, FlowGraph, FlowKind};
use crate::ingest::RawBundle;

/// Bumped whenever the column layout changes.
pub const FEATURE_LAYOUT_VERSION: u32 = 1;

/// Behavioural columns, in layout order. Opcode columns follow.
pub const BEHAVIOUR_FEATURES: [&str; 12] = [
    "n_investment",
    "n_payment",
    "payment_investment_ratio",
    "total_in",
    "total_out",
    "payout_rate",
    "paid_participant_rate",
    "gini_investments",
    "participant_count",
    "lifetime_blocks",
    "max_payment_share",
    "balance",
];

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub n_investment: u64,
    pub n_payment: u64,
    pub payment_investment_ratio: f64,
    pub total_in: Wei,
    pub total_out: Wei,
    pub payout_rate: f64,
    pub paid_participant_rate: f64,
    pub gini_investments: f64,
    pub participant_count: u64,
    pub lifetime_blocks: u64,
    pub max_payment_share: f64,
    pub balance: SignedWei,
    /// One entry per opcode vocabulary slot.
    pub opcode_freq: Vec<f64>,
}

/// Column names: behavioural fields then `op_<NAME>` per vocabulary slot.
pub fn feature_names() -> Vec<String> {
    BEHAVIOUR_FEATURES
        .iter()
        .map(|s| s.to_string())
        .chain(opcode_table().vocabulary().iter().map(|n| format!("op_{n}")))
        .collect()
}

pub fn feature_dim() -> usize {
    BEHAVIOUR_FEATURES.len() + opcode_table().vocabulary().len()
}

fn ratio(num: Wei, den: Wei) -> f64 {
    if den.is_zero() {
        0.0
    } else {
        num.to_f64() / den.to_f64()
    }
}

pub fn extract_features(fg: &FlowGraph, code: &[u8]) -> FeatureVector {
    let s = flow_summary(fg);

    // First investment index per investor; a payment to them at a later
    // event index marks them paid.
    let mut first_investment: HashMap<Address, usize> = HashMap::new();
    let mut paid: HashMap<Address, bool> = HashMap::new();
    let mut investments = Vec::new();
    let mut max_payment = Wei::ZERO;
    for (i, e) in fg.events.iter().enumerate() {
        match e.kind {
            FlowKind::Investment => {
                first_investment.entry(e.counterparty).or_insert(i);
                paid.entry(e.counterparty).or_insert(false);
                investments.push(e.amount);
            }
            FlowKind::Payment => {
                max_payment = max_payment.max(e.amount);
                if first_investment.get(&e.counterparty).is_some_and(|&first| i > first) {
                    paid.insert(e.counterparty, true);
                }
            }
        }
    }
    let n_investors = paid.len();
    let n_paid = paid.values().filter(|p| **p).count();

    FeatureVector {
        n_investment: s.n_investment,
        n_payment: s.n_payment,
        payment_investment_ratio: s.n_payment as f64 / s.n_investment.max(1) as f64,
        total_in: s.total_in,
        total_out: s.total_out,
        payout_rate: ratio(s.total_out, s.total_in),
        paid_participant_rate: if n_investors == 0 { 0.0 } else { n_paid as f64 / n_investors as f64 },
        gini_investments: gini(&investments).unwrap_or(0.0),
        participant_count: s.participant_count as u64,
        lifetime_blocks: s.lifetime_blocks,
        max_payment_share: ratio(max_payment, s.total_out),
        balance: SignedWei::difference(s.total_in, s.total_out),
        opcode_freq: disassemble(code).frequencies(),
    }
}

impl FeatureVector {
    pub fn to_f64_vec(&self) -> Vec<f64> {
        let mut v = vec![
            self.n_investment as f64,
            self.n_payment as f64,
            self.payment_investment_ratio,
            self.total_in.to_f64(),
            self.total_out.to_f64(),
            self.payout_rate,
            self.paid_participant_rate,
            self.gini_investments,
            self.participant_count as f64,
            self.lifetime_blocks as f64,
            self.max_payment_share,
            self.balance.to_f64(),
        ];
        v.extend_from_slice(&self.opcode_freq);
        v
    }

    /// CSV cells in layout order. Wei fields are exact integers; reals use
    /// the shortest representation that parses back to the same value.
    pub fn to_cells(&self) -> Vec<String> {
        let mut v = vec![
            self.n_investment.to_string(),
            self.n_payment.to_string(),
            self.payment_investment_ratio.to_string(),
            self.total_in.to_string(),
            self.total_out.to_string(),
            self.payout_rate.to_string(),
            self.paid_participant_rate.to_string(),
            self.gini_investments.to_string(),
            self.participant_count.to_string(),
            self.lifetime_blocks.to_string(),
            self.max_payment_share.to_string(),
            self.balance.to_string(),
        ];
        v.extend(self.opcode_freq.iter().map(|f| f.to_string()));
        v
    }
}

/// Features for every contract created in the corpus, in creation order.
pub fn extract_all_features(bundles: &[RawBundle], workers: usize) -> Result<Vec<(Address, FeatureVector)>, PonziError> {
    let contracts = derive_contract_info(bundles)?;
    let graphs = build_flow_graphs(contracts.iter().map(|c| c.contract_address), bundles);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build().map_err(|e| PonziError::Pool(e.to_string()))?;
    Ok(pool.install(|| {
        contracts
            .par_iter()
            .map(|c: &ContractInfoRecord| {
                let fg = &graphs[&c.contract_address];
                (c.contract_address, extract_features(fg, c.code.as_slice()))
            })
            .collect()
    }))
}

pub fn features_csv(rows: &[(Address, FeatureVector)]) -> String {
    let mut out = String::from("contract_address");
    for n in feature_names() {
        out.push(',');
        out.push_str(&n);
    }
    out.push('\n');
    for (addr, fv) in rows {
        let _ = write!(out, "{addr}");
        for c in fv.to_cells() {
            out.push(',');
            out.push_str(&c);
        }
        out.push('\n');
    }
    out
}

pub fn write_features_csv(rows: &[(Address, FeatureVector)], path: impl AsRef<Path>) -> Result<(), PonziError> {
    let path = path.as_ref();
    std::fs::write(path, features_csv(rows)).map_err(|e| PonziError::Io { path: path.to_path_buf(), source: e })
}

/// Numeric view of a features.csv file.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub rows: Vec<(Address, Vec<f64>)>,
}

impl FeatureTable {
    pub fn from_rows(rows: &[(Address, FeatureVector)]) -> FeatureTable {
        FeatureTable { names: feature_names(), rows: rows.iter().map(|(a, f)| (*a, f.to_f64_vec())).collect() }
    }

    pub fn get(&self, addr: &Address) -> Option<&[f64]> {
        self.rows.iter().find(|(a, _)| a == addr).map(|(_, v)| v.as_slice())
    }
}

pub fn read_features_csv(path: impl AsRef<Path>) -> Result<FeatureTable, PonziError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| PonziError::Io { path: path.to_path_buf(), source: e })?;
    parse_features_csv(&text)
}

pub fn parse_features_csv(text: &str) -> Result<FeatureTable, PonziError> {
    let bad = |line: usize, message: String| PonziError::Format { line, message };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| bad(1, "missing header".into()))?;
    let mut cols = header.split(',');
    if cols.next() != Some("contract_address") {
        return Err(bad(1, "first column must be contract_address".into()));
    }
    let names: Vec<String> = cols.map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let mut cells = line.split(',');
        let addr = parse_address(cells.next().unwrap_or_default()).map_err(|e| bad(i + 1, e.to_string()))?;
        let values = cells
            .enumerate()
            .map(|(j, c)| parse_cell(c).ok_or_else(|| bad(i + 1, format!("column {}: bad number {c:?}", j + 2))))
            .collect::<Result<Vec<f64>, _>>()?;
        if values.len() != names.len() {
            return Err(bad(i + 1, format!("expected {} values, got {}", names.len(), values.len())));
        }
        rows.push((addr, values));
    }
    Ok(FeatureTable { names, rows })
}

/// Integers (possibly signed, up to 256 bits) go through the wei parser so
/// they convert to f64 exactly as in memory.
fn parse_cell(c: &str) -> Option<f64> {
    if !c.is_empty() && c.trim_start_matches('-').bytes().all(|b| b.is_ascii_digit()) {
        return c.parse::<SignedWei>().ok().map(|s| s.to_f64());
    }
    c.parse::<f64>().ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::Hash32;
    use crate::flow::FlowEvent;

    fn ev(i: u64, kind: FlowKind, who: u8, amount: u64) -> FlowEvent {
        FlowEvent {
            timestamp: i,
            block_number: i,
            tx_index: 0,
            trace_path: vec![],
            tx_hash: Hash32::ZERO,
            kind,
            counterparty: Address([who; 20]),
            amount: Wei::from_u64(amount),
        }
    }

    #[test]
    fn empty_is_all_zero() {
        let fv = extract_features(&FlowGraph::new(Address::ZERO, vec![]), &[]);
        assert!(fv.to_f64_vec().iter().all(|x| *x == 0.0));
        assert_eq!(fv.to_f64_vec().len(), feature_dim());
    }

    #[test]
    fn paid_participant_rate_half() {
        let fg = FlowGraph::new(
            Address::ZERO,
            vec![ev(1, FlowKind::Investment, 1, 10), ev(2, FlowKind::Investment, 2, 10), ev(3, FlowKind::Payment, 1, 15)],
        );
        let fv = extract_features(&fg, &[]);
        assert_eq!(fv.paid_participant_rate, 0.5);
        assert_eq!(fv.payout_rate, 0.75);
        assert_eq!(fv.max_payment_share, 1.0);
        assert_eq!(fv.balance.to_string(), "5");
    }

    #[test]
    fn payment_before_investment_is_not_later() {
        let fg = FlowGraph::new(Address::ZERO, vec![ev(1, FlowKind::Payment, 1, 5), ev(2, FlowKind::Investment, 1, 10)]);
        assert_eq!(extract_features(&fg, &[]).paid_participant_rate, 0.0);
    }

    #[test]
    fn csv_roundtrip_matches_vector() {
        let fg = FlowGraph::new(Address::ZERO, vec![ev(1, FlowKind::Investment, 1, 7), ev(2, FlowKind::Payment, 2, 9)]);
        let fv = extract_features(&fg, &[0x60, 1, 0x00]);
        let rows = vec![(Address([3; 20]), fv.clone())];
        let table = parse_features_csv(&features_csv(&rows)).unwrap();
        assert_eq!(table, FeatureTable::from_rows(&rows));
        assert_eq!(table.names.len(), feature_dim());
        assert!(table.names[BEHAVIOUR_FEATURES.len()..].iter().all(|n| n.starts_with("op_")));
    }
}
