//! The block-by-block simulation behind [`super::generate`].

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::f64::consts::PI;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::bytecode::{archetype_code, PlantedCode};
use super::*;
use crate::chain::{Block, Bytes, LogEvent, Receipt, Status, TraceFrame, TraceKind, Transaction, U256};
use crate::derive::TRANSFER_SIG;

const BLOCK_GAS_LIMIT: u64 = 30_000_000;
const MAX_PAYOUTS_PER_TX: u32 = 20;
const ERC20_SUPPLY: u128 = 1_000_000 * ETHER;

// Call selectors. transfer/transferFrom/mint are the standard ERC20/ERC721
// ones, the others are arbitrary tags.
const SEL_TRANSFER: [u8; 4] = [0xa9, 0x05, 0x9c, 0xbb];
const SEL_TRANSFER_FROM: [u8; 4] = [0x23, 0xb8, 0x72, 0xdd];
const SEL_MINT: [u8; 4] = [0x40, 0xc1, 0x0f, 0x19];
const SEL_INVEST: [u8; 4] = [0xe8, 0xb5, 0xe5, 0x1f];
const SEL_ENTER: [u8; 4] = [0xe9, 0x7d, 0xcb, 0x62];
const SEL_DRAW: [u8; 4] = [0x0e, 0xec, 0xae, 0x21];
const SEL_DEPLOY: [u8; 4] = [0x77, 0x5c, 0x30, 0x0c];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Ponzi,
    Lottery,
    Erc20,
    NftFactory,
    Erc721,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::Ponzi => "ponzi",
            Kind::Lottery => "lottery",
            Kind::Erc20 => "erc20",
            Kind::NftFactory => "nft_factory",
            Kind::Erc721 => "erc721",
        }
    }
}

struct Contract {
    kind: Kind,
    address: Address,
    owner: Address,
    deploy_block: u64,
    deployed_at: Option<u64>,
    code: PlantedCode,
    /// Ponzi: (investor, amount owed), oldest first.
    queue: VecDeque<(Address, Wei)>,
    /// Lottery: fixed entrant pool and entrants of the current round.
    entrants: Vec<Address>,
    round: Vec<Address>,
    /// ERC20 balances.
    holders: BTreeMap<Address, u128>,
    /// Factory: index of the ERC721 contract it deploys.
    child: Option<usize>,
    /// ERC721 token id → owner.
    tokens: BTreeMap<u64, Address>,
    next_id: u64,
}

enum Intent {
    Deploy(usize),
    Invest { c: usize, from: Address, value: Wei },
    Enter { c: usize, from: Address },
    Draw { c: usize },
    Erc20Transfer { c: usize },
    FactoryDeploy { c: usize },
    NftMint { c: usize },
    NftTransfer { c: usize },
    Noise { from: Address, to: Address, value: Wei },
    Ping { c: usize, from: Address },
}

enum Target {
    Call(Address),
    Create(Address),
}

struct Pending {
    tx: Transaction,
    status: Status,
    logs: Vec<LogEvent>,
    frames: Vec<TraceFrame>,
    created: Option<Address>,
}

struct Engine<'a> {
    cfg: &'a GenConfig,
    rng: ChaCha8Rng,
    normal: Normal<f64>,
    balances: BTreeMap<Address, Wei>,
    nonces: HashMap<Address, u64>,
    wallets: Vec<Address>,
    miners: Vec<Address>,
    contracts: Vec<Contract>,
    index: HashMap<Address, usize>,

    planted: Vec<PlantedContract>,
    flows: BTreeMap<Address, Vec<PlantedFlow>>,
    token_transfers: Vec<PlantedTransfer>,
    malformed: Vec<PlantedMalformedLog>,
    block_gas: Vec<BlockGas>,
    tx_count: u64,

    // Block under construction.
    number: u64,
    miner: Address,
    price: Wei,
    txs: Vec<Transaction>,
    receipts: Vec<Receipt>,
    traces: Vec<TraceFrame>,
    block_logs: u32,
}

fn wei_u128(w: Wei) -> u128 {
    let l = w.0.limbs();
    assert!(l[2] == 0 && l[3] == 0, "amount exceeds 128 bits");
    l[0] as u128 | (l[1] as u128) << 64
}

fn word(v: u128) -> [u8; 32] {
    U256::from_u128(v).to_be_bytes()
}

fn addr_word(a: &Address) -> [u8; 32] {
    Hash32::from_address(a).0
}

fn calldata(selector: [u8; 4], words: &[[u8; 32]]) -> Vec<u8> {
    let mut v = selector.to_vec();
    for w in words {
        v.extend_from_slice(w);
    }
    v
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a GenConfig) -> Engine<'a> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let fresh = |rng: &mut ChaCha8Rng| Address(rng.random());
        let wallets: Vec<Address> = (0..cfg.wallets).map(|_| fresh(&mut rng)).collect();
        let miners: Vec<Address> = (0..cfg.miners).map(|_| fresh(&mut rng)).collect();
        let balances = wallets.iter().map(|w| (*w, cfg.genesis_balance)).collect();

        let a = &cfg.archetypes;
        let mut kinds = Vec::new();
        kinds.extend(std::iter::repeat_n(Kind::Ponzi, a.ponzi as usize));
        kinds.extend(std::iter::repeat_n(Kind::Lottery, a.lottery as usize));
        kinds.extend(std::iter::repeat_n(Kind::Erc20, a.erc20_token as usize));
        kinds.extend(std::iter::repeat_n(Kind::NftFactory, a.erc721_token as usize));
        let spread = (cfg.n_blocks / 20).max(1);
        let mut contracts = Vec::new();
        for (i, kind) in kinds.into_iter().enumerate() {
            let owner = *wallets.choose(&mut rng).expect("wallets validated non-empty");
            let deploy_block = cfg.start_block + i as u64 % spread;
            let entrants = if kind == Kind::Lottery {
                let k = (cfg.intensity.lottery_entrants as usize).min(wallets.len());
                wallets.choose_multiple(&mut rng, k).copied().collect()
            } else {
                vec![]
            };
            contracts.push(Contract::new(kind, fresh(&mut rng), owner, deploy_block, archetype_code(kind.name(), &mut rng), entrants));
            if kind == Kind::NftFactory {
                let child = contracts.len();
                contracts[child - 1].child = Some(child);
                contracts.push(Contract::new(
                    Kind::Erc721,
                    fresh(&mut rng),
                    owner,
                    u64::MAX,
                    archetype_code("erc721", &mut rng),
                    vec![],
                ));
            }
        }
        let index = contracts.iter().enumerate().map(|(i, c)| (c.address, i)).collect();

        Engine {
            cfg,
            rng,
            normal: Normal::new(0.0, 1.0).expect("unit normal"),
            balances,
            nonces: HashMap::new(),
            wallets,
            miners,
            contracts,
            index,
            planted: Vec::new(),
            flows: BTreeMap::new(),
            token_transfers: Vec::new(),
            malformed: Vec::new(),
            block_gas: Vec::new(),
            tx_count: 0,
            number: 0,
            miner: Address::ZERO,
            price: Wei::ZERO,
            txs: Vec::new(),
            receipts: Vec::new(),
            traces: Vec::new(),
            block_logs: 0,
        }
    }

    fn balance(&self, a: &Address) -> Wei {
        self.balances.get(a).copied().unwrap_or(Wei::ZERO)
    }

    fn credit(&mut self, a: Address, v: Wei) {
        let b = self.balances.entry(a).or_insert(Wei::ZERO);
        *b = b.checked_add(v).expect("balance overflow");
    }

    fn debit(&mut self, a: Address, v: Wei) {
        let b = self.balances.entry(a).or_insert(Wei::ZERO);
        *b = b.checked_sub(v).unwrap_or_else(|_| panic!("generator overdraft on {a}"));
    }

    fn move_value(&mut self, from: Address, to: Address, v: Wei) {
        self.debit(from, v);
        self.credit(to, v);
    }

    fn random_wallet(&mut self) -> Address {
        *self.wallets.choose(&mut self.rng).expect("wallets")
    }

    fn random_other_wallet(&mut self, not: Address) -> Address {
        loop {
            let w = self.random_wallet();
            if w != not {
                return w;
            }
        }
    }

    fn random_wei(&mut self, lo: Wei, hi: Wei) -> Wei {
        Wei::from_u128(self.rng.random_range(wei_u128(lo)..=wei_u128(hi)))
    }

    fn gas_price(&mut self, block: u64) -> Wei {
        let g = &self.cfg.gas;
        let t = (block - self.cfg.start_block) as f64;
        let trend = g.base.to_f64() * g.decay_per_block.powf(t);
        let season = if g.amplitude > 0.0 { 1.0 + g.amplitude * (2.0 * PI * block as f64 / g.period as f64).sin() } else { 1.0 };
        let noise = if g.noise > 0.0 { 1.0 + g.noise * self.normal.sample(&mut self.rng) } else { 1.0 };
        let v = (trend * season * noise).round();
        if v >= 1.0 {
            Wei::from_u128(v.min(1e36) as u128)
        } else {
            Wei::from_u64(1)
        }
    }

    fn record_flow(&mut self, contract: Address, kind: &str, counterparty: Address, amount: Wei, tx: &Transaction, path: &[u32]) {
        if !self.index.contains_key(&contract) || contract == counterparty || amount.is_zero() {
            return;
        }
        self.flows.entry(contract).or_default().push(PlantedFlow {
            amount,
            block_number: self.number,
            counterparty,
            kind: kind.to_string(),
            trace_path: path.to_vec(),
            tx_hash: tx.hash,
            tx_index: tx.tx_index,
        });
    }

    /// Starts a transaction if the sender can cover `value + gas_limit·price`.
    /// A successful transaction moves its value immediately.
    fn begin(&mut self, from: Address, target: Target, value: Wei, input: Vec<u8>, gas_limit: u64, failed: bool, traced: bool) -> Option<Pending> {
        let upfront = self.price.checked_mul_u64(gas_limit).ok().and_then(|g| g.checked_add(value).ok())?;
        if self.balance(&from) < upfront {
            return None;
        }
        let nonce = self.nonces.get(&from).copied().unwrap_or(0);
        let (to, dest, kind) = match target {
            Target::Call(a) => (Some(a), a, TraceKind::Call),
            Target::Create(a) => (None, a, TraceKind::Create),
        };
        let tx = Transaction {
            hash: Hash32(self.rng.random()),
            block_number: self.number,
            tx_index: self.txs.len() as u32,
            from,
            to,
            value,
            gas: gas_limit,
            gas_price: self.price,
            input: Bytes(input),
            nonce,
        };
        self.nonces.insert(from, nonce + 1);
        let mut frames = Vec::new();
        if traced {
            frames.push(TraceFrame {
                tx_hash: tx.hash,
                block_number: self.number,
                trace_path: vec![],
                kind,
                from,
                to: dest,
                value,
                gas_used: 0,
                error: failed.then(|| "execution reverted".to_string()),
                input: tx.input.clone(),
            });
        }
        if !failed {
            self.move_value(from, dest, value);
            self.record_flow(dest, "investment", from, value, &tx, &[]);
        }
        let status = if failed { Status::Failure } else { Status::Success };
        Some(Pending { tx, status, logs: vec![], frames, created: None })
    }

    /// Value-moving sub-frame of a successful transaction.
    fn internal(&mut self, p: &mut Pending, path: Vec<u32>, kind: TraceKind, from: Address, to: Address, value: Wei, input: Vec<u8>) {
        self.move_value(from, to, value);
        self.record_flow(to, "investment", from, value, &p.tx, &path);
        self.record_flow(from, "payment", to, value, &p.tx, &path);
        p.frames.push(self.frame(&p.tx, path, kind, from, to, value, None, input));
    }

    /// Sub-frame that has no effect on balances.
    fn inert(&mut self, p: &mut Pending, path: Vec<u32>, from: Address, to: Address, value: Wei, error: Option<&str>) {
        p.frames.push(self.frame(&p.tx, path, TraceKind::Call, from, to, value, error.map(str::to_string), vec![]));
    }

    #[allow(clippy::too_many_arguments)]
    fn frame(&self, tx: &Transaction, path: Vec<u32>, kind: TraceKind, from: Address, to: Address, value: Wei, error: Option<String>, input: Vec<u8>) -> TraceFrame {
        TraceFrame {
            tx_hash: tx.hash,
            block_number: self.number,
            trace_path: path,
            kind,
            from,
            to,
            value,
            gas_used: 9_000,
            error,
            input: Bytes(input),
        }
    }

    fn token_log(&mut self, p: &mut Pending, token: Address, standard: &str, from: Address, to: Address, amount_or_id: u128, malformed: bool) {
        let log_index = self.block_logs + p.logs.len() as u32;
        let mut topics = vec![TRANSFER_SIG, Hash32(addr_word(&from)), Hash32(addr_word(&to))];
        let data = match (standard, malformed) {
            ("ERC20", false) => word(amount_or_id).to_vec(),
            ("ERC20", true) => word(amount_or_id)[1..].to_vec(),
            (_, mal) => {
                topics.push(Hash32(word(amount_or_id)));
                if mal {
                    (0..self.rng.random_range(1..=3u8)).collect()
                } else {
                    vec![]
                }
            }
        };
        p.logs.push(LogEvent { address: token, topics, data: Bytes(data) });
        if malformed {
            self.malformed.push(PlantedMalformedLog {
                block_number: self.number,
                log_index,
                standard: standard.to_string(),
                token_contract: token,
                tx_hash: p.tx.hash,
            });
        } else {
            self.token_transfers.push(PlantedTransfer {
                amount_or_token_id: Wei::from_u128(amount_or_id),
                block_number: self.number,
                from,
                log_index,
                standard: standard.to_string(),
                to,
                token_contract: token,
                tx_hash: p.tx.hash,
            });
        }
    }

    /// Charges the fee and appends the transaction to the block.
    fn finish(&mut self, mut p: Pending, gas_used: u64) {
        assert!(gas_used <= p.tx.gas);
        let fee = self.price.checked_mul_u64(gas_used).expect("fee fits");
        self.move_value(p.tx.from, self.miner, fee);
        if let Some(root) = p.frames.first_mut() {
            if root.trace_path.is_empty() {
                root.gas_used = gas_used;
            }
        }
        self.block_logs += p.logs.len() as u32;
        self.receipts.push(Receipt {
            tx_hash: p.tx.hash,
            block_number: self.number,
            status: p.status,
            gas_used,
            contract_address: p.created,
            logs: p.logs,
        });
        self.traces.append(&mut p.frames);
        self.txs.push(p.tx);
        self.tx_count += 1;
    }

    fn plant(&mut self, c: usize, mode: &str, creator: Address, tx_hash: Hash32) {
        let k = &self.contracts[c];
        self.planted.push(PlantedContract {
            address: k.address,
            archetype: k.kind.name().to_string(),
            creation_block: self.number,
            creation_mode: mode.to_string(),
            creation_tx_hash: tx_hash,
            creator,
            opcode_counts: k.code.composition.clone(),
        });
    }

    fn plan(&mut self, b: u64) -> Vec<Intent> {
        let cfg = self.cfg;
        let it = &cfg.intensity;
        let mut out = Vec::new();
        for i in 0..self.contracts.len() {
            let c = &self.contracts[i];
            let Some(at) = c.deployed_at else {
                if c.kind != Kind::Erc721 && c.deploy_block <= b {
                    out.push(Intent::Deploy(i));
                }
                continue;
            };
            let age = b - at;
            match c.kind {
                Kind::Ponzi => {
                    let p = it.ponzi_arrival_p0 * (-(age as f64) / it.ponzi_arrival_tau).exp();
                    if self.rng.random_bool(p) {
                        let from = self.random_wallet();
                        let mut value = wei_u128(self.random_wei(it.ponzi_min_investment, it.ponzi_max_investment));
                        value -= value % it.ponzi_payout_den as u128;
                        if value > 0 {
                            out.push(Intent::Invest { c: i, from, value: Wei::from_u128(value) });
                        }
                    }
                }
                Kind::Lottery => {
                    if self.rng.random_bool(it.lottery_entry_prob) {
                        let from = *self.contracts[i].entrants.choose(&mut self.rng).expect("entrants");
                        out.push(Intent::Enter { c: i, from });
                    }
                    if age > 0 && age % it.lottery_draw_every == 0 {
                        out.push(Intent::Draw { c: i });
                    }
                }
                Kind::Erc20 => {
                    if self.rng.random_bool(it.token_transfer_prob) {
                        out.push(Intent::Erc20Transfer { c: i });
                    }
                }
                Kind::NftFactory => {
                    let child = c.child.expect("factory child");
                    if self.contracts[child].deployed_at.is_none() {
                        out.push(Intent::FactoryDeploy { c: i });
                    }
                }
                Kind::Erc721 => {
                    let has_tokens = !c.tokens.is_empty();
                    if self.rng.random_bool(it.nft_mint_prob) {
                        out.push(Intent::NftMint { c: i });
                    }
                    if has_tokens && self.rng.random_bool(it.token_transfer_prob) {
                        out.push(Intent::NftTransfer { c: i });
                    }
                }
            }
        }
        if it.noise_tx_per_block > 0.0 {
            // At rates of one or more every block carries at least one
            // transaction, so the gas-price series has no holes.
            let n = if it.noise_tx_per_block >= 1.0 {
                let extra = it.noise_tx_per_block - 1.0;
                1 + if extra > 0.0 { Poisson::new(extra).expect("poisson rate").sample(&mut self.rng) as u64 } else { 0 }
            } else {
                Poisson::new(it.noise_tx_per_block).expect("poisson rate").sample(&mut self.rng) as u64
            };
            for _ in 0..n {
                let from = self.random_wallet();
                let to = self.random_other_wallet(from);
                let value = self.random_wei(Wei::ZERO, Wei::from_u128(ETHER / 2));
                out.push(Intent::Noise { from, to, value });
            }
        }
        if self.rng.random_bool(it.ping_prob) {
            let live: Vec<usize> = (0..self.contracts.len()).filter(|i| self.contracts[*i].deployed_at.is_some()).collect();
            if let Some(&c) = live.choose(&mut self.rng) {
                let from = self.random_wallet();
                out.push(Intent::Ping { c, from });
            }
        }
        out
    }

    fn execute(&mut self, intent: Intent) {
        let cfg = self.cfg;
        let it = &cfg.intensity;
        match intent {
            Intent::Deploy(c) => {
                let (owner, addr, code) = {
                    let k = &self.contracts[c];
                    (k.owner, k.address, k.code.code.clone())
                };
                let gas_used = 100_000 + 200 * code.len() as u64;
                let Some(mut p) = self.begin(owner, Target::Create(addr), Wei::ZERO, code, gas_used + 50_000, false, true) else {
                    return;
                };
                p.created = Some(addr);
                if self.contracts[c].kind == Kind::Erc20 {
                    self.token_log(&mut p, addr, "ERC20", Address::ZERO, owner, ERC20_SUPPLY, false);
                    self.contracts[c].holders.insert(owner, ERC20_SUPPLY);
                }
                self.contracts[c].deployed_at = Some(self.number);
                self.plant(c, "top_level", owner, p.tx.hash);
                self.finish(p, gas_used);
            }
            Intent::Invest { c, from, value } => {
                let addr = self.contracts[c].address;
                let Some(mut p) = self.begin(from, Target::Call(addr), value, SEL_INVEST.to_vec(), 400_000, false, true) else {
                    return;
                };
                let owed = Wei::from_u128(wei_u128(value) / it.ponzi_payout_den as u128 * it.ponzi_payout_num as u128);
                self.contracts[c].queue.push_back((from, owed));
                let mut k = 0u32;
                while k < MAX_PAYOUTS_PER_TX {
                    let Some(&(investor, owed)) = self.contracts[c].queue.front() else { break };
                    if self.balance(&addr) < owed {
                        break;
                    }
                    if self.rng.random_bool(it.ponzi_failed_payout_prob) {
                        // Payout runs out of gas; its nested call is rolled back
                        // with it and the investor stays at the head of the queue.
                        let owner = self.contracts[c].owner;
                        self.inert(&mut p, vec![k], addr, investor, owed, Some("out of gas"));
                        self.inert(&mut p, vec![k, 0], investor, owner, owed, None);
                        k += 1;
                        break;
                    }
                    self.internal(&mut p, vec![k], TraceKind::Call, addr, investor, owed, vec![]);
                    self.contracts[c].queue.pop_front();
                    k += 1;
                }
                self.finish(p, 50_000 + 12_000 * k as u64);
            }
            Intent::Enter { c, from } => {
                let addr = self.contracts[c].address;
                let ticket = it.lottery_ticket;
                let Some(p) = self.begin(from, Target::Call(addr), ticket, SEL_ENTER.to_vec(), 80_000, false, true) else {
                    return;
                };
                self.contracts[c].round.push(from);
                self.finish(p, 45_000);
            }
            Intent::Draw { c } => {
                let (addr, owner) = (self.contracts[c].address, self.contracts[c].owner);
                let failed = self.rng.random_bool(it.lottery_revert_prob);
                let Some(mut p) = self.begin(owner, Target::Call(addr), Wei::ZERO, SEL_DRAW.to_vec(), 120_000, failed, true) else {
                    return;
                };
                let pot = self.balance(&addr);
                let winner = self.contracts[c].round.choose(&mut self.rng).copied();
                if let (Some(winner), false) = (winner, pot.is_zero()) {
                    if failed {
                        // The payout frame is traced but the whole transaction reverts.
                        self.inert(&mut p, vec![0], addr, winner, pot, None);
                    } else {
                        self.internal(&mut p, vec![0], TraceKind::Call, addr, winner, pot, vec![]);
                        self.contracts[c].round.clear();
                    }
                }
                self.finish(p, if failed { 120_000 } else { 70_000 });
            }
            Intent::Erc20Transfer { c } => {
                let addr = self.contracts[c].address;
                let holders: Vec<(Address, u128)> =
                    self.contracts[c].holders.iter().filter(|(_, b)| **b > 0).map(|(a, b)| (*a, *b)).collect();
                let Some(&(holder, bal)) = holders.choose(&mut self.rng) else { return };
                let to = self.random_other_wallet(holder);
                let amount = self.rng.random_range(1..=bal);
                let malformed = self.rng.random_bool(it.malformed_log_prob);
                let input = calldata(SEL_TRANSFER, &[addr_word(&to), word(amount)]);
                let Some(mut p) = self.begin(holder, Target::Call(addr), Wei::ZERO, input, 90_000, false, true) else {
                    return;
                };
                self.token_log(&mut p, addr, "ERC20", holder, to, amount, malformed);
                if !malformed {
                    let h = &mut self.contracts[c].holders;
                    *h.get_mut(&holder).expect("holder") -= amount;
                    *h.entry(to).or_insert(0) += amount;
                }
                self.finish(p, 52_000);
            }
            Intent::FactoryDeploy { c } => {
                let (factory, owner) = (self.contracts[c].address, self.contracts[c].owner);
                let child = self.contracts[c].child.expect("factory child");
                let (nft, code) = (self.contracts[child].address, self.contracts[child].code.code.clone());
                let Some(mut p) = self.begin(owner, Target::Call(factory), Wei::ZERO, SEL_DEPLOY.to_vec(), 2_000_000, false, true) else {
                    return;
                };
                let gas_used = 150_000 + 200 * code.len() as u64;
                self.internal(&mut p, vec![0], TraceKind::Create, factory, nft, Wei::ZERO, code);
                self.contracts[child].deployed_at = Some(self.number);
                self.plant(child, "internal_create", factory, p.tx.hash);
                self.finish(p, gas_used);
            }
            Intent::NftMint { c } => {
                let (addr, owner, id) = (self.contracts[c].address, self.contracts[c].owner, self.contracts[c].next_id);
                let to = self.random_wallet();
                let malformed = self.rng.random_bool(it.malformed_log_prob);
                let input = calldata(SEL_MINT, &[addr_word(&to), word(id as u128)]);
                let Some(mut p) = self.begin(owner, Target::Call(addr), Wei::ZERO, input, 150_000, false, true) else {
                    return;
                };
                self.token_log(&mut p, addr, "ERC721", Address::ZERO, to, id as u128, malformed);
                if !malformed {
                    self.contracts[c].tokens.insert(id, to);
                    self.contracts[c].next_id += 1;
                }
                self.finish(p, 95_000);
            }
            Intent::NftTransfer { c } => {
                let addr = self.contracts[c].address;
                let tokens: Vec<(u64, Address)> = self.contracts[c].tokens.iter().map(|(i, a)| (*i, *a)).collect();
                let Some(&(id, holder)) = tokens.choose(&mut self.rng) else { return };
                let to = self.random_other_wallet(holder);
                let malformed = self.rng.random_bool(it.malformed_log_prob);
                let input = calldata(SEL_TRANSFER_FROM, &[addr_word(&holder), addr_word(&to), word(id as u128)]);
                let Some(mut p) = self.begin(holder, Target::Call(addr), Wei::ZERO, input, 120_000, false, true) else {
                    return;
                };
                self.token_log(&mut p, addr, "ERC721", holder, to, id as u128, malformed);
                if !malformed {
                    self.contracts[c].tokens.insert(id, to);
                }
                self.finish(p, 61_000);
            }
            Intent::Noise { from, to, value } => {
                if let Some(p) = self.begin(from, Target::Call(to), value, vec![], 21_000, false, false) {
                    self.finish(p, 21_000);
                }
            }
            Intent::Ping { c, from } => {
                let addr = self.contracts[c].address;
                let input = self.rng.random::<[u8; 3]>().to_vec();
                if let Some(p) = self.begin(from, Target::Call(addr), Wei::ZERO, input, 40_000, false, true) {
                    self.finish(p, 23_500);
                }
            }
        }
    }

    fn close_block(&mut self, parent_hash: Hash32, timestamp: u64) -> RawBundle {
        let mut prices: Vec<Wei> = self.txs.iter().map(|t| t.gas_price).collect();
        if !prices.is_empty() {
            prices.sort();
            let sum = prices.iter().try_fold(Wei::ZERO, |s, p| s.checked_add(*p)).expect("gas sum fits");
            self.block_gas.push(BlockGas {
                block_number: self.number,
                max: *prices.last().expect("non-empty"),
                median: prices[(prices.len() - 1) / 2],
                min: prices[0],
                sum,
                tx_count: prices.len() as u32,
            });
        }
        self.credit(self.miner, self.cfg.block_reward);
        let gas_used = self.receipts.iter().map(|r| r.gas_used).sum();
        let block = Block {
            number: self.number,
            hash: Hash32(self.rng.random()),
            parent_hash,
            timestamp,
            miner: self.miner,
            gas_limit: BLOCK_GAS_LIMIT,
            gas_used,
            transactions: std::mem::take(&mut self.txs),
        };
        self.block_logs = 0;
        RawBundle::assemble(block, std::mem::take(&mut self.receipts), std::mem::take(&mut self.traces))
            .expect("generated block joins")
    }
}

impl Contract {
    fn new(kind: Kind, address: Address, owner: Address, deploy_block: u64, code: PlantedCode, entrants: Vec<Address>) -> Contract {
        Contract {
            kind,
            address,
            owner,
            deploy_block,
            deployed_at: None,
            code,
            queue: VecDeque::new(),
            entrants,
            round: Vec::new(),
            holders: BTreeMap::new(),
            child: None,
            tokens: BTreeMap::new(),
            next_id: 1,
        }
    }
}

pub(super) fn run(cfg: &GenConfig) -> Corpus {
    let mut e = Engine::new(cfg);
    let genesis = Genesis { alloc: e.balances.clone(), block_reward: cfg.block_reward };
    let mut bundles = Vec::with_capacity(cfg.n_blocks as usize);
    let mut parent = Hash32(e.rng.random());
    let mut timestamp = cfg.start_timestamp;

    for b in cfg.start_block..cfg.start_block + cfg.n_blocks {
        e.number = b;
        e.miner = *e.miners.choose(&mut e.rng).expect("miners");
        let intents = e.plan(b);
        let mut priced: Vec<(Wei, Intent)> = intents.into_iter().map(|i| (e.gas_price(b), i)).collect();
        // Miners include higher bids first; ties keep planning order.
        priced.sort_by(|a, b| b.0.cmp(&a.0));
        for (price, intent) in priced {
            e.price = price;
            e.execute(intent);
        }
        let bundle = e.close_block(parent, timestamp);
        parent = bundle.block.hash;
        timestamp += 12 + e.rng.random_range(0..3);
        bundles.push(bundle);
    }

    let labels = e
        .contracts
        .iter()
        .filter(|c| c.deployed_at.is_some())
        .filter_map(|c| label_of(c.kind.name()).map(|l| PlantedLabel { contract: c.address, label: l.as_str().to_string() }))
        .collect();
    let ground_truth = GroundTruth {
        balances: e.balances,
        block_gas: e.block_gas,
        config: cfg.clone(),
        contracts: e.planted,
        flows: e.flows,
        genesis,
        labels,
        malformed_token_logs: e.malformed,
        planted_period: cfg.gas.period,
        token_transfers: e.token_transfers,
        tx_count: e.tx_count,
    };
    Corpus { bundles, ground_truth }
}
