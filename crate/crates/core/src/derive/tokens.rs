//! ERC20 / ERC721 `Transfer` log decoding.
//!
//! Both standards emit `Transfer(address,address,uint256)`; ERC20 indexes
//! two parameters (three topics, amount in data) and ERC721 indexes all
//! three (four topics, empty data).

use std::fmt;

use crate::chain::{Address, Hash32, LogEvent, U256};
use crate::ingest::RawBundle;

/// keccak-256("Transfer(address,address,uint256)").
pub const TRANSFER_SIG: Hash32 = Hash32([
    0xdd, 0xf2, 0x52, 0xad, 0x1b, 0xe2, 0xc8, 0x9b, 0x69, 0xc2, 0xb0, 0x68, 0xfc, 0x37, 0x8d, 0xaa, 0x95, 0x2b, 0xa7, 0xf1,
    0x63, 0xc4, 0xa1, 0x16, 0x28, 0xf5, 0x5a, 0x4d, 0xf5, 0x23, 0xb3, 0xef,
]);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TokenStandard {
    Erc20,
    Erc721,
}

impl TokenStandard {
    pub fn as_str(self) -> &'static str {
        match self {
            TokenStandard::Erc20 => "ERC20",
            TokenStandard::Erc721 => "ERC721",
        }
    }

    /// Classifies a log purely by signature and topic count.
    pub fn of_log(log: &LogEvent) -> Option<TokenStandard> {
        if log.topics.first() != Some(&TRANSFER_SIG) {
            return None;
        }
        match log.topics.len() {
            3 => Some(TokenStandard::Erc20),
            4 => Some(TokenStandard::Erc721),
            _ => None,
        }
    }
}

impl fmt::Display for TokenStandard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenTransferRecord {
    pub block_number: u64,
    pub tx_hash: Hash32,
    /// Position of the log within its block.
    pub log_index: u32,
    pub token_contract: Address,
    pub from: Address,
    pub to: Address,
    pub amount_or_token_id: U256,
    pub standard: TokenStandard,
}

/// A log that matched a Transfer shape but could not be decoded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MalformedTransferLog {
    pub block_number: u64,
    pub tx_hash: Hash32,
    pub log_index: u32,
    pub token_contract: Address,
    pub standard: TokenStandard,
    pub reason: String,
}

fn decode_log(
    log: &LogEvent,
    standard: TokenStandard,
    block_number: u64,
    tx_hash: Hash32,
    log_index: u32,
) -> Result<TokenTransferRecord, MalformedTransferLog> {
    let malformed = |reason: String| MalformedTransferLog {
        block_number,
        tx_hash,
        log_index,
        token_contract: log.address,
        standard,
        reason,
    };
    let amount_or_token_id = match standard {
        TokenStandard::Erc20 => {
            if log.data.len() != 32 {
                return Err(malformed(format!("ERC20 data must be 32 bytes, got {}", log.data.len())));
            }
            U256::from_be_slice(log.data.as_slice()).expect("32 bytes")
        }
        TokenStandard::Erc721 => {
            if !log.data.is_empty() {
                return Err(malformed(format!("ERC721 data must be empty, got {} bytes", log.data.len())));
            }
            log.topics[3].to_u256()
        }
    };
    Ok(TokenTransferRecord {
        block_number,
        tx_hash,
        log_index,
        token_contract: log.address,
        from: Address::from_word(&log.topics[1]),
        to: Address::from_word(&log.topics[2]),
        amount_or_token_id,
        standard,
    })
}

/// Decodes every Transfer log of one standard in a block. Malformed
/// matches are returned separately and skipped.
pub fn decode_transfers(
    bundle: &RawBundle,
    standard: TokenStandard,
) -> (Vec<TokenTransferRecord>, Vec<MalformedTransferLog>) {
    let mut records = Vec::new();
    let mut defects = Vec::new();
    let mut log_index = 0u32;
    for tx in &bundle.block.transactions {
        let Some(receipt) = bundle.receipt(&tx.hash) else { continue };
        for log in &receipt.logs {
            if TokenStandard::of_log(log) == Some(standard) {
                match decode_log(log, standard, bundle.block.number, tx.hash, log_index) {
                    Ok(r) => records.push(r),
                    Err(d) => defects.push(d),
                }
            }
            log_index += 1;
        }
    }
    (records, defects)
}

pub fn decode_erc20_transfers(bundle: &RawBundle) -> (Vec<TokenTransferRecord>, Vec<MalformedTransferLog>) {
    decode_transfers(bundle, TokenStandard::Erc20)
}

pub fn decode_erc721_transfers(bundle: &RawBundle) -> (Vec<TokenTransferRecord>, Vec<MalformedTransferLog>) {
    decode_transfers(bundle, TokenStandard::Erc721)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{Block, Bytes, Receipt, Status, Transaction, Wei};

    fn bundle_with_logs(logs: Vec<LogEvent>) -> RawBundle {
        let tx = Transaction {
            hash: Hash32([1; 32]),
            block_number: 4,
            tx_index: 0,
            from: Address([1; 20]),
            to: Some(Address([2; 20])),
            value: Wei::ZERO,
            gas: 60_000,
            gas_price: Wei::from_u64(1),
            input: Bytes(vec![0xa9, 0x05, 0x9c, 0xbb]),
            nonce: 0,
        };
        let receipt = Receipt {
            tx_hash: tx.hash,
            block_number: 4,
            status: Status::Success,
            gas_used: 50_000,
            contract_address: None,
            logs,
        };
        let block = Block {
            number: 4,
            hash: Hash32([4; 32]),
            parent_hash: Hash32([3; 32]),
            timestamp: 1,
            miner: Address::ZERO,
            gas_limit: 1_000_000,
            gas_used: 50_000,
            transactions: vec![tx],
        };
        RawBundle::assemble(block, vec![receipt], vec![]).unwrap()
    }

    fn transfer(from: Address, to: Address, extra: Option<U256>, data: Vec<u8>) -> LogEvent {
        let mut topics = vec![TRANSFER_SIG, Hash32::from_address(&from), Hash32::from_address(&to)];
        topics.extend(extra.map(Hash32::from_u256));
        LogEvent { address: Address([9; 20]), topics, data: Bytes(data) }
    }

    #[test]
    fn unrelated_topic_ignored() {
        let log = LogEvent { address: Address([9; 20]), topics: vec![Hash32([7; 32]); 3], data: Bytes(vec![0; 32]) };
        let b = bundle_with_logs(vec![log]);
        assert_eq!(decode_erc20_transfers(&b), (vec![], vec![]));
        assert_eq!(decode_erc721_transfers(&b), (vec![], vec![]));
    }

    #[test]
    fn erc20_amount() {
        let amount = U256::from_u128(1_000_000_000_000_000_000);
        let b = bundle_with_logs(vec![transfer(Address([1; 20]), Address([2; 20]), None, amount.to_be_bytes().to_vec())]);
        let (records, defects) = decode_erc20_transfers(&b);
        assert!(defects.is_empty());
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].amount_or_token_id, amount);
        assert_eq!(records[0].from, Address([1; 20]));
        assert_eq!(records[0].to, Address([2; 20]));
        assert!(decode_erc721_transfers(&b).0.is_empty(), "3-topic log is not ERC721");
    }

    #[test]
    fn erc20_short_data_is_defect() {
        let b = bundle_with_logs(vec![transfer(Address([1; 20]), Address([2; 20]), None, vec![0; 31])]);
        let (records, defects) = decode_erc20_transfers(&b);
        assert!(records.is_empty());
        assert_eq!(defects.len(), 1);
    }

    #[test]
    fn erc721_mint_and_defect() {
        let mint = transfer(Address::ZERO, Address([2; 20]), Some(U256::from_u64(42)), vec![]);
        let bad = transfer(Address([2; 20]), Address([3; 20]), Some(U256::from_u64(42)), vec![1]);
        let b = bundle_with_logs(vec![mint, bad]);
        let (records, defects) = decode_erc721_transfers(&b);
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].from, Address::ZERO);
        assert_eq!(records[0].amount_or_token_id, U256::from_u64(42));
        assert_eq!(defects.len(), 1);
        assert_eq!(defects[0].log_index, 1);
    }
}
