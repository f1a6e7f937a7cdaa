//! Seeded generator of synthetic raw corpora with planted behaviour
//! archetypes (Ponzi scheme, lottery, ERC20 and ERC721 tokens) and a
//! ground-truth ledger used as a test oracle.

mod bytecode;
mod defects;
mod engine;
mod replay;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{Address, Hash32, Wei};
use crate::ingest::{write_raw, IngestError, RawBundle};
use crate::ponzi::{labels_csv, Label, LabeledContract};

pub use bytecode::{archetype_code, PlantedCode};
pub use defects::{inject_defects, InjectedDefect};
pub use replay::{ledger_replay, Replay, ReplayError};

pub const GENESIS_FILE: &str = "genesis.json";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const LABELS_FILE: &str = "labels.csv";

pub const GWEI: u128 = 1_000_000_000;
pub const ETHER: u128 = 1_000_000_000_000_000_000;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("generator post-condition violated: {0}")]
    ContrastViolated(String),
    #[error("cannot place {requested} defects in a {blocks}-block corpus")]
    NotEnoughBlocks { requested: usize, blocks: usize },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Gas price of every transaction in block b:
/// `base · decay^(b − start) · (1 + amplitude · sin(2πb / period)) · (1 + noise · N(0,1))`,
/// rounded to wei with a floor of 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasProcess {
    pub amplitude: f64,
    pub base: Wei,
    pub decay_per_block: f64,
    pub noise: f64,
    pub period: u32,
}

impl Default for GasProcess {
    fn default() -> Self {
        GasProcess {
            amplitude: 0.3,
            base: Wei::from_u128(20 * GWEI),
            decay_per_block: 0.99998,
            noise: 0.05,
            period: 24,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Archetypes {
    pub erc20_token: u32,
    pub erc721_token: u32,
    pub lottery: u32,
    pub ponzi: u32,
}

impl Default for Archetypes {
    fn default() -> Self {
        Archetypes { erc20_token: 2, erc721_token: 1, lottery: 2, ponzi: 2 }
    }
}

/// Per-block activity rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intensity {
    pub lottery_draw_every: u64,
    pub lottery_entrants: u32,
    pub lottery_entry_prob: f64,
    pub lottery_revert_prob: f64,
    pub lottery_ticket: Wei,
    pub malformed_log_prob: f64,
    pub nft_mint_prob: f64,
    pub noise_tx_per_block: f64,
    pub ping_prob: f64,
    /// Investment probability right after deployment.
    pub ponzi_arrival_p0: f64,
    /// Blocks for the investment probability to fall by a factor e.
    pub ponzi_arrival_tau: f64,
    pub ponzi_failed_payout_prob: f64,
    pub ponzi_max_investment: Wei,
    pub ponzi_min_investment: Wei,
    /// Payout = investment · num / den.
    pub ponzi_payout_den: u64,
    pub ponzi_payout_num: u64,
    pub token_transfer_prob: f64,
}

impl Default for Intensity {
    fn default() -> Self {
        Intensity {
            lottery_draw_every: 40,
            lottery_entrants: 6,
            lottery_entry_prob: 0.3,
            lottery_revert_prob: 0.05,
            lottery_ticket: Wei::from_u128(ETHER / 10),
            malformed_log_prob: 0.05,
            nft_mint_prob: 0.2,
            noise_tx_per_block: 3.0,
            ping_prob: 0.1,
            ponzi_arrival_p0: 0.6,
            ponzi_arrival_tau: 300.0,
            ponzi_failed_payout_prob: 0.03,
            ponzi_max_investment: Wei::from_u128(2 * ETHER),
            ponzi_min_investment: Wei::from_u128(ETHER / 10),
            ponzi_payout_den: 2,
            ponzi_payout_num: 3,
            token_transfer_prob: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub archetypes: Archetypes,
    pub block_reward: Wei,
    pub gas: GasProcess,
    pub genesis_balance: Wei,
    pub intensity: Intensity,
    pub miners: u32,
    pub n_blocks: u64,
    pub seed: u64,
    pub start_block: u64,
    pub start_timestamp: u64,
    pub wallets: u32,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            archetypes: Archetypes::default(),
            block_reward: Wei::from_u128(2 * ETHER),
            gas: GasProcess::default(),
            genesis_balance: Wei::from_u128(1000 * ETHER),
            intensity: Intensity::default(),
            miners: 4,
            n_blocks: 1000,
            seed: 0,
            start_block: 1,
            start_timestamp: 1_500_000_000,
            wallets: 120,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: String| Err(GenError::InvalidConfig(m));
        let g = &self.gas;
        let i = &self.intensity;
        let a = &self.archetypes;
        if g.amplitude > 0.0 && g.period < 2 {
            return bad(format!("gas.period must be >= 2 when amplitude > 0 (got {})", g.period));
        }
        if !(0.0..1.0).contains(&g.amplitude) {
            return bad(format!("gas.amplitude must be in [0,1) (got {})", g.amplitude));
        }
        if !(g.noise >= 0.0 && g.noise.is_finite()) {
            return bad(format!("gas.noise must be >= 0 (got {})", g.noise));
        }
        if !(g.decay_per_block > 0.0 && g.decay_per_block.is_finite()) {
            return bad(format!("gas.decay_per_block must be > 0 (got {})", g.decay_per_block));
        }
        if g.base.is_zero() {
            return bad("gas.base must be positive".into());
        }
        for (name, p) in [
            ("lottery_entry_prob", i.lottery_entry_prob),
            ("lottery_revert_prob", i.lottery_revert_prob),
            ("malformed_log_prob", i.malformed_log_prob),
            ("nft_mint_prob", i.nft_mint_prob),
            ("ping_prob", i.ping_prob),
            ("ponzi_arrival_p0", i.ponzi_arrival_p0),
            ("ponzi_failed_payout_prob", i.ponzi_failed_payout_prob),
            ("token_transfer_prob", i.token_transfer_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must be a probability (got {p})"));
            }
        }
        if !(i.noise_tx_per_block >= 0.0 && i.noise_tx_per_block.is_finite()) {
            return bad("noise_tx_per_block must be >= 0".into());
        }
        if !(i.ponzi_arrival_tau > 0.0) {
            return bad("ponzi_arrival_tau must be > 0".into());
        }
        if i.lottery_draw_every == 0 || i.lottery_entrants == 0 {
            return bad("lottery_draw_every and lottery_entrants must be >= 1".into());
        }
        if i.ponzi_payout_den == 0 || i.ponzi_min_investment > i.ponzi_max_investment || i.ponzi_min_investment.is_zero() {
            return bad("ponzi investment range or payout ratio is empty".into());
        }
        if self.miners == 0 {
            return bad("miners must be >= 1".into());
        }
        let contracts = a.ponzi + a.lottery + a.erc20_token + a.erc721_token;
        if (contracts > 0 || i.noise_tx_per_block > 0.0) && self.wallets < 2 {
            return bad("at least 2 wallets are needed for any activity".into());
        }
        if self.start_block.checked_add(self.n_blocks).is_none() {
            return bad("block range overflows".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Genesis {
    pub alloc: BTreeMap<Address, Wei>,
    pub block_reward: Wei,
}

impl Genesis {
    pub fn read(path: impl AsRef<Path>) -> Result<Genesis, GenError> {
        read_json(path.as_ref())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), GenError> {
        write_json(self, path.as_ref())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockGas {
    pub block_number: u64,
    pub max: Wei,
    /// Lower middle element for even counts.
    pub median: Wei,
    pub min: Wei,
    pub sum: Wei,
    pub tx_count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedContract {
    pub address: Address,
    pub archetype: String,
    pub creation_block: u64,
    pub creation_mode: String,
    pub creation_tx_hash: Hash32,
    pub creator: Address,
    /// Instruction composition of the planted bytecode.
    pub opcode_counts: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedFlow {
    pub amount: Wei,
    pub block_number: u64,
    pub counterparty: Address,
    pub kind: String,
    pub trace_path: Vec<u32>,
    pub tx_hash: Hash32,
    pub tx_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedLabel {
    pub contract: Address,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedTransfer {
    pub amount_or_token_id: Wei,
    pub block_number: u64,
    pub from: Address,
    pub log_index: u32,
    pub standard: String,
    pub to: Address,
    pub token_contract: Address,
    pub tx_hash: Hash32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedMalformedLog {
    pub block_number: u64,
    pub log_index: u32,
    pub standard: String,
    pub token_contract: Address,
    pub tx_hash: Hash32,
}

/// Everything the generator planted, recorded as it happened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    /// Final balance of every address the corpus touched.
    pub balances: BTreeMap<Address, Wei>,
    pub block_gas: Vec<BlockGas>,
    pub config: GenConfig,
    pub contracts: Vec<PlantedContract>,
    /// Investment and payment events per contract, in chain order.
    pub flows: BTreeMap<Address, Vec<PlantedFlow>>,
    pub genesis: Genesis,
    pub labels: Vec<PlantedLabel>,
    pub malformed_token_logs: Vec<PlantedMalformedLog>,
    pub planted_period: u32,
    pub token_transfers: Vec<PlantedTransfer>,
    pub tx_count: u64,
}

impl GroundTruth {
    pub fn labeled_contracts(&self) -> Vec<LabeledContract> {
        self.labels
            .iter()
            .map(|l| LabeledContract { contract: l.contract, label: l.label.parse().expect("generator label") })
            .collect()
    }

    pub fn contracts_of(&self, archetype: &str) -> Vec<Address> {
        self.contracts.iter().filter(|c| c.archetype == archetype).map(|c| c.address).collect()
    }

    pub fn read(path: impl AsRef<Path>) -> Result<GroundTruth, GenError> {
        read_json(path.as_ref())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), GenError> {
        write_json(self, path.as_ref())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub bundles: Vec<RawBundle>,
    pub ground_truth: GroundTruth,
}

/// Generates a corpus in memory.
pub fn generate(config: &GenConfig) -> Result<Corpus, GenError> {
    config.validate()?;
    let corpus = engine::run(config);
    check_contrast(config, &corpus.ground_truth)?;
    Ok(corpus)
}

/// Generates a corpus and writes the three JSONL files, `genesis.json`,
/// `ground_truth.json` and `labels.csv` into `dir`.
pub fn generate_to_dir(config: &GenConfig, dir: impl AsRef<Path>) -> Result<Corpus, GenError> {
    let dir = dir.as_ref();
    let corpus = generate(config)?;
    write_corpus(&corpus, dir)?;
    Ok(corpus)
}

pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<(), GenError> {
    std::fs::create_dir_all(dir).map_err(|e| GenError::Io { path: dir.to_path_buf(), source: e })?;
    write_raw(&corpus.bundles, dir)?;
    corpus.ground_truth.genesis.write(dir.join(GENESIS_FILE))?;
    corpus.ground_truth.write(dir.join(GROUND_TRUTH_FILE))?;
    let path = dir.join(LABELS_FILE);
    std::fs::write(&path, labels_csv(&corpus.ground_truth.labeled_contracts()))
        .map_err(|e| GenError::Io { path, source: e })
}

/// Contracts whose default-intensity behaviour must show the Ponzi/lottery
/// contrast: more participants and more payments for every Ponzi instance.
fn check_contrast(config: &GenConfig, gt: &GroundTruth) -> Result<(), GenError> {
    let applies = config.n_blocks >= 200 && config.intensity == Intensity::default() && config.wallets >= 50;
    if !applies {
        return Ok(());
    }
    let stats = |addr: &Address| {
        let flows = gt.flows.get(addr).map(Vec::as_slice).unwrap_or_default();
        let participants: BTreeSet<Address> = flows.iter().map(|f| f.counterparty).collect();
        let payments = flows.iter().filter(|f| f.kind == "payment").count();
        (participants.len(), payments)
    };
    let ponzi: Vec<_> = gt.contracts_of("ponzi").iter().map(|a| (*a, stats(a))).collect();
    let lottery: Vec<_> = gt.contracts_of("lottery").iter().map(|a| (*a, stats(a))).collect();
    for (p, (pp, pn)) in &ponzi {
        for (l, (lp, ln)) in &lottery {
            if pp <= lp || pn <= ln {
                return Err(GenError::ContrastViolated(format!(
                    "ponzi {p} has {pp} participants / {pn} payments, lottery {l} has {lp} / {ln}"
                )));
            }
        }
    }
    Ok(())
}

pub(crate) fn label_of(archetype: &str) -> Option<Label> {
    match archetype {
        "ponzi" => Some(Label::Ponzi),
        "lottery" => Some(Label::Normal),
        _ => None,
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, GenError> {
    let text = std::fs::read_to_string(path).map_err(|e| GenError::Io { path: path.to_path_buf(), source: e })?;
    serde_json::from_str(&text).map_err(|e| GenError::Json { path: path.to_path_buf(), source: e })
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), GenError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| GenError::Json { path: path.to_path_buf(), source: e })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| GenError::Io { path: path.to_path_buf(), source: e })
}

#[cfg(test)]
mod tests;
