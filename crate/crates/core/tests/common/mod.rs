//! Independent reference implementations used as test oracles. Written
//! naively against the raw records; nothing here calls into the derive,
//! flow or feature code paths under test.

#![allow(dead_code)]

use std::collections::BTreeMap;

use etherscope::chain::{Address, Hash32, Status, TraceFrame, TraceKind, Wei, U256};
use etherscope::derive::{
    BlockTxRecord, ContractCallRecord, ContractInfoRecord, CreationMode, InternalTransferRecord, MalformedTransferLog,
    SixDatasets, TokenStandard, TokenTransferRecord,
};
use etherscope::ingest::RawBundle;
use etherscope::synth::GroundTruth;
use tiny_keccak::{Hasher, Keccak};

pub fn keccak256(data: &[u8]) -> [u8; 32] {
    let mut k = Keccak::v256();
    k.update(data);
    let mut out = [0u8; 32];
    k.finalize(&mut out);
    out
}

pub fn transfer_topic() -> Hash32 {
    Hash32(keccak256(b"Transfer(address,address,uint256)"))
}

fn status_of(bundle: &RawBundle, tx: &Hash32) -> Status {
    match bundle.receipts.get(tx) {
        Some(r) => r.status,
        None => Status::Failure,
    }
}

fn frames_of<'a>(bundle: &'a RawBundle, tx: &Hash32) -> &'a [TraceFrame] {
    match bundle.traces.get(tx) {
        Some(v) => v,
        None => &[],
    }
}

/// A frame took effect when its transaction succeeded and no frame on its
/// path (itself included) errored.
fn took_effect(frames: &[TraceFrame], f: &TraceFrame, status: Status) -> bool {
    if status != Status::Success {
        return false;
    }
    for g in frames {
        if g.error.is_some() && g.trace_path.len() <= f.trace_path.len() && f.trace_path[..g.trace_path.len()] == g.trace_path[..] {
            return false;
        }
    }
    true
}

fn word_to_address(w: &Hash32) -> Address {
    let mut a = [0u8; 20];
    a.copy_from_slice(&w.0[12..]);
    Address(a)
}

/// Straightforward single-threaded derivation of all six datasets.
pub fn reference_derive(bundles: &[RawBundle]) -> SixDatasets {
    let sig = transfer_topic();
    let mut ds = SixDatasets::default();

    for b in bundles {
        for tx in &b.block.transactions {
            let status = status_of(b, &tx.hash);
            if tx.to.is_none() {
                if let Some(addr) = b.receipts.get(&tx.hash).and_then(|r| r.contract_address) {
                    ds.contracts.push(ContractInfoRecord {
                        contract_address: addr,
                        creator: tx.from,
                        creation_block: b.block.number,
                        creation_tx_hash: tx.hash,
                        creation_mode: CreationMode::TopLevel,
                        code: tx.input.clone(),
                    });
                }
            }
            let frames = frames_of(b, &tx.hash);
            for f in frames {
                if !f.trace_path.is_empty() && f.kind == TraceKind::Create && took_effect(frames, f, status) {
                    ds.contracts.push(ContractInfoRecord {
                        contract_address: f.to,
                        creator: f.from,
                        creation_block: b.block.number,
                        creation_tx_hash: tx.hash,
                        creation_mode: CreationMode::InternalCreate,
                        code: f.input.clone(),
                    });
                }
            }
        }
    }
    let known = |a: &Address, block: u64| ds.contracts.iter().any(|c| c.contract_address == *a && c.creation_block <= block);
    let sel = |input: &[u8]| if input.len() >= 4 { Some([input[0], input[1], input[2], input[3]]) } else { None };

    let mut calls = Vec::new();
    for b in bundles {
        let n = b.block.number;
        let mut log_index = 0u32;
        let mut defects = Vec::new();
        for tx in &b.block.transactions {
            let receipt = b.receipts.get(&tx.hash);
            let status = status_of(b, &tx.hash);
            ds.block_transactions.push(BlockTxRecord {
                block_number: n,
                timestamp: b.block.timestamp,
                miner: b.block.miner,
                tx_hash: tx.hash,
                tx_index: tx.tx_index,
                from: tx.from,
                to: tx.to,
                value: tx.value,
                gas_price: tx.gas_price,
                gas_used_by_tx: receipt.map(|r| r.gas_used).unwrap_or(0),
                status,
            });

            let frames = frames_of(b, &tx.hash);
            for f in frames {
                let moves = matches!(f.kind, TraceKind::Call | TraceKind::Create | TraceKind::SelfDestruct);
                if !f.trace_path.is_empty() && moves && !f.value.is_zero() && took_effect(frames, f, status) {
                    ds.internal_transfers.push(InternalTransferRecord {
                        block_number: n,
                        tx_hash: tx.hash,
                        trace_path: f.trace_path.clone(),
                        from: f.from,
                        to: f.to,
                        value: f.value,
                        kind: f.kind,
                    });
                }
            }

            if let Some(to) = tx.to {
                if known(&to, n) {
                    calls.push(ContractCallRecord {
                        block_number: n,
                        tx_hash: tx.hash,
                        trace_path: vec![],
                        caller: tx.from,
                        callee: to,
                        value: tx.value,
                        kind: TraceKind::Call,
                        selector: sel(tx.input.as_slice()),
                        status,
                    });
                }
            }
            for f in frames {
                let call = matches!(f.kind, TraceKind::Call | TraceKind::DelegateCall | TraceKind::StaticCall);
                if f.trace_path.is_empty() || !call || !known(&f.to, n) {
                    continue;
                }
                calls.push(ContractCallRecord {
                    block_number: n,
                    tx_hash: tx.hash,
                    trace_path: f.trace_path.clone(),
                    caller: f.from,
                    callee: f.to,
                    value: f.value,
                    kind: f.kind,
                    selector: sel(f.input.as_slice()),
                    status: if took_effect(frames, f, status) { Status::Success } else { Status::Failure },
                });
            }

            let Some(receipt) = receipt else { continue };
            for log in &receipt.logs {
                let idx = log_index;
                log_index += 1;
                if log.topics.first() != Some(&sig) {
                    continue;
                }
                let standard = match log.topics.len() {
                    3 => TokenStandard::Erc20,
                    4 => TokenStandard::Erc721,
                    _ => continue,
                };
                let ok = match standard {
                    TokenStandard::Erc20 => log.data.as_slice().len() == 32,
                    TokenStandard::Erc721 => log.data.as_slice().is_empty(),
                };
                if !ok {
                    defects.push(MalformedTransferLog {
                        block_number: n,
                        tx_hash: tx.hash,
                        log_index: idx,
                        token_contract: log.address,
                        standard,
                        reason: String::new(),
                    });
                    continue;
                }
                let value = match standard {
                    TokenStandard::Erc20 => U256::from_be_slice(log.data.as_slice()).unwrap(),
                    TokenStandard::Erc721 => U256::from_be_slice(&log.topics[3].0).unwrap(),
                };
                let rec = TokenTransferRecord {
                    block_number: n,
                    tx_hash: tx.hash,
                    log_index: idx,
                    token_contract: log.address,
                    from: word_to_address(&log.topics[1]),
                    to: word_to_address(&log.topics[2]),
                    amount_or_token_id: value,
                    standard,
                };
                match standard {
                    TokenStandard::Erc20 => ds.erc20_transfers.push(rec),
                    TokenStandard::Erc721 => ds.erc721_transfers.push(rec),
                }
            }
        }
        ds.token_defects.extend(defects);
    }
    ds.contract_calls = calls;
    ds
}

/// Compares two dataset sets row by row. Defect reasons are free text and
/// only checked for being non-empty.
pub fn compare_datasets(got: &SixDatasets, want: &SixDatasets) -> Result<(), String> {
    fn rows<T: PartialEq + std::fmt::Debug>(name: &str, got: &[T], want: &[T]) -> Result<(), String> {
        if got.len() != want.len() {
            return Err(format!("{name}: {} rows, reference has {}", got.len(), want.len()));
        }
        for (i, (g, w)) in got.iter().zip(want).enumerate() {
            if g != w {
                return Err(format!("{name} row {i}:\n  got  {g:?}\n  want {w:?}"));
            }
        }
        Ok(())
    }
    rows("block_transactions", &got.block_transactions, &want.block_transactions)?;
    rows("internal_transfers", &got.internal_transfers, &want.internal_transfers)?;
    rows("contracts", &got.contracts, &want.contracts)?;
    rows("contract_calls", &got.contract_calls, &want.contract_calls)?;
    rows("erc20_transfers", &got.erc20_transfers, &want.erc20_transfers)?;
    rows("erc721_transfers", &got.erc721_transfers, &want.erc721_transfers)?;
    if let Some(d) = got.token_defects.iter().find(|d| d.reason.is_empty()) {
        return Err(format!("defect without reason: {d:?}"));
    }
    let strip = |v: &[MalformedTransferLog]| -> Vec<MalformedTransferLog> {
        v.iter().map(|d| MalformedTransferLog { reason: String::new(), ..d.clone() }).collect()
    };
    rows("token_defects", &strip(&got.token_defects), &strip(&want.token_defects))
}

/// Block rewards as (miner, reward) pairs, one per block.
pub fn rewards(bundles: &[RawBundle], reward: Wei) -> Vec<(Address, Wei)> {
    bundles.iter().map(|b| (b.block.miner, reward)).collect()
}

pub fn nonzero(m: &BTreeMap<Address, Wei>) -> BTreeMap<Address, Wei> {
    m.iter().filter(|(_, v)| !v.is_zero()).map(|(a, v)| (*a, *v)).collect()
}

/// O(n^2) mean absolute difference form of the Gini coefficient.
pub fn gini_brute(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let mut s = 0.0;
    for a in xs {
        for b in xs {
            s += (a - b).abs();
        }
    }
    s / (2.0 * n * n * mean)
}

/// Behavioural features recomputed from the generator's own flow records.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedBehaviour {
    pub n_investment: u64,
    pub n_payment: u64,
    pub total_in: Wei,
    pub total_out: Wei,
    pub participant_count: u64,
    pub lifetime_blocks: u64,
    pub paid_participant_rate: f64,
    pub gini_investments: f64,
    pub max_payment_share: f64,
}

pub fn planted_behaviour(gt: &GroundTruth, contract: &Address) -> PlantedBehaviour {
    let flows = gt.flows.get(contract).map(Vec::as_slice).unwrap_or_default();
    let mut p = PlantedBehaviour {
        n_investment: 0,
        n_payment: 0,
        total_in: Wei::ZERO,
        total_out: Wei::ZERO,
        participant_count: 0,
        lifetime_blocks: 0,
        paid_participant_rate: 0.0,
        gini_investments: 0.0,
        max_payment_share: 0.0,
    };
    let mut people: Vec<Address> = Vec::new();
    let mut investors: Vec<(Address, usize, bool)> = Vec::new();
    let mut invested: Vec<f64> = Vec::new();
    let mut max_payment = Wei::ZERO;
    for (i, f) in flows.iter().enumerate() {
        if !people.contains(&f.counterparty) {
            people.push(f.counterparty);
        }
        if f.kind == "investment" {
            p.n_investment += 1;
            p.total_in = p.total_in.checked_add(f.amount).unwrap();
            invested.push(f.amount.to_f64());
            if !investors.iter().any(|(a, _, _)| *a == f.counterparty) {
                investors.push((f.counterparty, i, false));
            }
        } else {
            p.n_payment += 1;
            p.total_out = p.total_out.checked_add(f.amount).unwrap();
            if f.amount > max_payment {
                max_payment = f.amount;
            }
            for inv in investors.iter_mut() {
                if inv.0 == f.counterparty && i > inv.1 {
                    inv.2 = true;
                }
            }
        }
    }
    p.participant_count = people.len() as u64;
    if let (Some(a), Some(b)) = (flows.first(), flows.last()) {
        p.lifetime_blocks = b.block_number - a.block_number;
    }
    if !investors.is_empty() {
        p.paid_participant_rate = investors.iter().filter(|i| i.2).count() as f64 / investors.len() as f64;
    }
    if !invested.is_empty() && invested.iter().any(|x| *x > 0.0) {
        p.gini_investments = gini_brute(&invested);
    }
    if !p.total_out.is_zero() {
        p.max_payment_share = max_payment.to_f64() / p.total_out.to_f64();
    }
    p
}

/// Relative closeness for reals derived from large integers.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Recursively compares two directories byte for byte.
pub fn same_tree(a: &std::path::Path, b: &std::path::Path) -> Result<usize, String> {
    let list = |d: &std::path::Path| -> Vec<std::ffi::OsString> {
        let mut v: Vec<_> = std::fs::read_dir(d).unwrap().map(|e| e.unwrap().file_name()).collect();
        v.sort();
        v
    };
    let (la, lb) = (list(a), list(b));
    if la != lb {
        return Err(format!("{} vs {}: {la:?} != {lb:?}", a.display(), b.display()));
    }
    let mut files = 0;
    for name in la {
        let (pa, pb) = (a.join(&name), b.join(&name));
        if pa.is_dir() {
            files += same_tree(&pa, &pb)?;
        } else {
            if std::fs::read(&pa).unwrap() != std::fs::read(&pb).unwrap() {
                return Err(format!("{} differs", pa.display()));
            }
            files += 1;
        }
    }
    Ok(files)
}

/// Runs every subcommand in pipeline order under `dir`, returning each
/// command's exit code and stdout. Paths in stdout are relative to `dir`.
pub fn run_cli_pipeline(dir: &std::path::Path, blocks: u64, workers: usize) -> Vec<(String, i32, String)> {
    let bin = env!("CARGO_BIN_EXE_etherscope");
    let w = workers.to_string();
    let b = blocks.to_string();
    let mut steps: Vec<(&str, Vec<String>)> = vec![
        ("synth", vec!["synth", "--out", "corpus", "--blocks", &b, "--seed", "7"]),
        ("validate", vec!["validate", "--input", "corpus"]),
        ("derive", vec!["derive", "--input", "corpus", "--out", "datasets"]),
        ("gas", vec!["gas", "--input", "corpus", "--out", "gas", "--min-lag", "12", "--max-lag", "60"]),
        ("features", vec!["features", "--input", "corpus", "--out", "features.csv"]),
        ("train", vec!["train", "--features", "features.csv", "--labels", "corpus/labels.csv", "--out", "model.txt"]),
        (
            "classify",
            vec!["classify", "--model", "model.txt", "--features", "features.csv", "--labels", "corpus/labels.csv", "--out", "scores.csv"],
        ),
    ]
    .into_iter()
    .map(|(n, a)| (n, a.into_iter().map(String::from).collect()))
    .collect();

    let mut out = Vec::new();
    let mut run = |name: &str, args: &[String]| {
        let o = std::process::Command::new(bin)
            .current_dir(dir)
            .args(args)
            .args(["--workers", &w])
            .env_clear()
            .output()
            .expect("spawn etherscope");
        out.push((name.to_string(), o.status.code().unwrap_or(-1), String::from_utf8_lossy(&o.stdout).into_owned()));
    };
    for (name, args) in steps.drain(..3) {
        run(name, &args);
    }
    // Flow exports for the first two labelled contracts, in both formats.
    let labels = std::fs::read_to_string(dir.join("corpus/labels.csv")).unwrap_or_default();
    for addr in labels.lines().skip(1).take(2).map(|l| l.split(',').next().unwrap().to_string()) {
        for ext in ["csv", "svg"] {
            let file = format!("flow_{addr}.{ext}");
            run("flow", &["flow".into(), "--input".into(), "corpus".into(), "--contract".into(), addr.clone(), "--out".into(), file]);
        }
    }
    for (name, args) in steps {
        run(name, &args);
    }
    out
}
