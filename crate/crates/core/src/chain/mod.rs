//! Chain vocabulary shared by every other module: addresses, hashes, wei
//! quantities and the block / receipt / trace records they appear in.
//!
//! Text forms are canonical lowercase `0x` hex. Parsers accept either case.

mod uint;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use uint::U256;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("malformed hex: {0:?}")]
    MalformedHex(String),
    #[error("malformed number: {0:?}")]
    MalformedNumber(String),
    #[error("value exceeds 2^256 - 1")]
    Overflow,
    #[error("value would drop below zero")]
    Underflow,
}

fn strip_hex_prefix(text: &str) -> Option<&str> {
    text.strip_prefix("0x").or_else(|| text.strip_prefix("0X"))
}

fn decode_fixed<const N: usize>(text: &str) -> Result<[u8; N], ChainError> {
    let digits = strip_hex_prefix(text).ok_or_else(|| ChainError::MalformedHex(text.to_string()))?;
    let mut out = [0u8; N];
    if digits.len() != 2 * N {
        return Err(ChainError::MalformedHex(text.to_string()));
    }
    hex::decode_to_slice(digits, &mut out).map_err(|_| ChainError::MalformedHex(text.to_string()))?;
    Ok(out)
}

macro_rules! text_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let text = <std::borrow::Cow<'de, str>>::deserialize(d)?;
                text.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

/// 20-byte account identifier.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Address(pub [u8; 20]);

impl Address {
    pub const ZERO: Address = Address([0; 20]);

    /// Low 20 bytes of a 32-byte word, as used by indexed log topics.
    pub fn from_word(word: &Hash32) -> Address {
        let mut out = [0u8; 20];
        out.copy_from_slice(&word.0[12..]);
        Address(out)
    }
}

impl FromStr for Address {
    type Err = ChainError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        decode_fixed::<20>(s).map(Address)
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

text_serde!(Address);

pub fn parse_address(text: &str) -> Result<Address, ChainError> {
    text.parse()
}

/// 32-byte hash or topic word.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Hash32(pub [u8; 32]);

impl Hash32 {
    pub const ZERO: Hash32 = Hash32([0; 32]);

    /// Left-pads an address into a topic word.
    pub fn from_address(addr: &Address) -> Hash32 {
        let mut out = [0u8; 32];
        out[12..].copy_from_slice(&addr.0);
        Hash32(out)
    }

    pub fn from_u256(v: U256) -> Hash32 {
        Hash32(v.to_be_bytes())
    }

    pub fn to_u256(&self) -> U256 {
        U256::from_be_bytes(self.0)
    }
}

impl FromStr for Hash32 {
    type Err = ChainError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        decode_fixed::<32>(s).map(Hash32)
    }
}

impl fmt::Display for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

text_serde!(Hash32);

pub fn parse_hash(text: &str) -> Result<Hash32, ChainError> {
    text.parse()
}

/// Arbitrary-length byte payload (call input, creation code, log data).
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Bytes(pub Vec<u8>);

impl Bytes {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }
}

impl From<Vec<u8>> for Bytes {
    fn from(v: Vec<u8>) -> Self {
        Bytes(v)
    }
}

impl FromStr for Bytes {
    type Err = ChainError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = strip_hex_prefix(s).ok_or_else(|| ChainError::MalformedHex(s.to_string()))?;
        hex::decode(digits)
            .map(Bytes)
            .map_err(|_| ChainError::MalformedHex(s.to_string()))
    }
}

impl fmt::Display for Bytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(&self.0))
    }
}

impl fmt::Debug for Bytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

text_serde!(Bytes);

/// An amount of ether in wei. Arithmetic is checked; there is no wraparound.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Wei(pub U256);

impl Wei {
    pub const ZERO: Wei = Wei(U256::ZERO);
    pub const MAX: Wei = Wei(U256::MAX);

    pub const fn from_u64(v: u64) -> Wei {
        Wei(U256::from_u64(v))
    }

    pub const fn from_u128(v: u128) -> Wei {
        Wei(U256::from_u128(v))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn checked_add(self, rhs: Wei) -> Result<Wei, ChainError> {
        self.0.checked_add(rhs.0).map(Wei).ok_or(ChainError::Overflow)
    }

    pub fn checked_sub(self, rhs: Wei) -> Result<Wei, ChainError> {
        self.0.checked_sub(rhs.0).map(Wei).ok_or(ChainError::Underflow)
    }

    pub fn checked_mul_u64(self, rhs: u64) -> Result<Wei, ChainError> {
        self.0.checked_mul_u64(rhs).map(Wei).ok_or(ChainError::Overflow)
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64()
    }
}

impl FromStr for Wei {
    type Err = ChainError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match strip_hex_prefix(s) {
            Some(digits) => U256::from_hex_digits(digits),
            None => U256::from_dec_str(s),
        }
        .map(Wei)
    }
}

impl fmt::Display for Wei {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

impl fmt::Debug for Wei {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

impl From<u64> for Wei {
    fn from(v: u64) -> Self {
        Wei::from_u64(v)
    }
}

text_serde!(Wei);

pub fn parse_wei(text: &str) -> Result<Wei, ChainError> {
    text.parse()
}

pub fn checked_add(a: Wei, b: Wei) -> Result<Wei, ChainError> {
    a.checked_add(b)
}

/// Sign-magnitude 256-bit quantity, used for net balances.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SignedWei {
    negative: bool,
    magnitude: U256,
}

impl SignedWei {
    /// `a - b` without loss.
    pub fn difference(a: Wei, b: Wei) -> SignedWei {
        match a.cmp(&b) {
            Ordering::Less => SignedWei { negative: true, magnitude: b.0.checked_sub(a.0).expect("b > a") },
            _ => SignedWei { negative: false, magnitude: a.0.checked_sub(b.0).expect("a >= b") },
        }
    }

    pub fn is_negative(&self) -> bool {
        self.negative
    }

    pub fn magnitude(&self) -> Wei {
        Wei(self.magnitude)
    }

    pub fn to_f64(&self) -> f64 {
        let m = self.magnitude.to_f64();
        if self.negative {
            -m
        } else {
            m
        }
    }
}

impl fmt::Display for SignedWei {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negative {
            write!(f, "-{}", self.magnitude)
        } else {
            write!(f, "{}", self.magnitude)
        }
    }
}

impl fmt::Debug for SignedWei {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for SignedWei {
    type Err = ChainError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (negative, digits) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let magnitude = U256::from_dec_str(digits)?;
        Ok(SignedWei { negative: negative && !magnitude.is_zero(), magnitude })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Status {
    Success,
    Failure,
}

impl Status {
    pub fn is_success(self) -> bool {
        self == Status::Success
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Success => "success",
            Status::Failure => "failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub hash: Hash32,
    pub block_number: u64,
    pub tx_index: u32,
    pub from: Address,
    /// `None` for contract creation.
    pub to: Option<Address>,
    pub value: Wei,
    pub gas: u64,
    pub gas_price: Wei,
    pub input: Bytes,
    pub nonce: u64,
}

impl Transaction {
    pub fn is_creation(&self) -> bool {
        self.to.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub number: u64,
    pub hash: Hash32,
    pub parent_hash: Hash32,
    pub timestamp: u64,
    pub miner: Address,
    pub gas_limit: u64,
    pub gas_used: u64,
    pub transactions: Vec<Transaction>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEvent {
    pub address: Address,
    /// Topic 0 is the event signature hash.
    pub topics: Vec<Hash32>,
    pub data: Bytes,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Receipt {
    pub tx_hash: Hash32,
    pub block_number: u64,
    pub status: Status,
    pub gas_used: u64,
    pub contract_address: Option<Address>,
    pub logs: Vec<LogEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceKind {
    Call,
    DelegateCall,
    StaticCall,
    Create,
    SelfDestruct,
}

impl TraceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceKind::Call => "call",
            TraceKind::DelegateCall => "delegatecall",
            TraceKind::StaticCall => "staticcall",
            TraceKind::Create => "create",
            TraceKind::SelfDestruct => "selfdestruct",
        }
    }

    /// Whether frames of this kind can carry ether.
    pub fn moves_value(self) -> bool {
        matches!(self, TraceKind::Call | TraceKind::Create | TraceKind::SelfDestruct)
    }
}

/// One call frame of a transaction's execution trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceFrame {
    pub tx_hash: Hash32,
    pub block_number: u64,
    /// Position in the call tree; empty for the top-level frame.
    pub trace_path: Vec<u32>,
    pub kind: TraceKind,
    pub from: Address,
    pub to: Address,
    pub value: Wei,
    pub gas_used: u64,
    pub error: Option<String>,
    /// Call data or creation code. Absent from many trace exports; empty then.
    pub input: Bytes,
}

impl TraceFrame {
    pub fn is_top_level(&self) -> bool {
        self.trace_path.is_empty()
    }

    /// True when `self` lies inside the subtree rooted at `ancestor` (or is it).
    pub fn is_within(&self, ancestor: &[u32]) -> bool {
        self.trace_path.starts_with(ancestor)
    }
}

/// Total order over frames: block, parent transaction index, then path.
/// Slice ordering on paths places every parent before its children.
pub fn trace_order_key(frame: &TraceFrame, tx_index: u32) -> (u64, u32, &[u32]) {
    (frame.block_number, tx_index, frame.trace_path.as_slice())
}

/// Renders a trace path as dot-separated indices (`""` for the top level).
pub fn format_trace_path(path: &[u32]) -> String {
    path.iter().map(u32::to_string).collect::<Vec<_>>().join(".")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_address() {
        let text = format!("0x{}", "00".repeat(20));
        assert_eq!(parse_address(&text).unwrap(), Address::ZERO);
    }

    #[test]
    fn address_case_insensitive() {
        let mixed = "0xAbCdEf0123456789aBcDeF0123456789ABCDEF01";
        let lower = mixed.to_lowercase();
        assert_eq!(parse_address(mixed).unwrap(), parse_address(&lower).unwrap());
        assert_eq!(parse_address(mixed).unwrap().to_string(), lower);
    }

    #[test]
    fn address_rejects_bad_input() {
        for bad in ["0x1234", "00".repeat(20).as_str(), &format!("0x{}", "zz".repeat(20)), &format!("0x{}", "00".repeat(21))] {
            assert!(matches!(parse_address(bad), Err(ChainError::MalformedHex(_))), "{bad}");
        }
    }

    #[test]
    fn wei_parsing() {
        assert_eq!(parse_wei("0").unwrap(), Wei::ZERO);
        assert_eq!(parse_wei("0x10").unwrap(), Wei::from_u64(16));
        assert!(matches!(parse_wei(""), Err(ChainError::MalformedNumber(_))));
        assert!(matches!(parse_wei("12a"), Err(ChainError::MalformedNumber(_))));
        assert!(matches!(parse_wei("0x"), Err(ChainError::MalformedNumber(_))));
        assert!(matches!(parse_wei("-1"), Err(ChainError::MalformedNumber(_))));
    }

    #[test]
    fn wei_add() {
        let x = Wei::from_u64(77);
        assert_eq!(checked_add(Wei::ZERO, x).unwrap(), x);
        assert_eq!(checked_add(Wei::from_u64(1), Wei::from_u64(2)).unwrap(), Wei::from_u64(3));
        let half = Wei(U256::from_limbs([0, 0, 0, 1 << 63]));
        assert_eq!(checked_add(half, half), Err(ChainError::Overflow));
        assert_eq!(Wei::ZERO.checked_sub(Wei::from_u64(1)), Err(ChainError::Underflow));
    }

    #[test]
    fn signed_difference() {
        let d = SignedWei::difference(Wei::from_u64(3), Wei::from_u64(10));
        assert_eq!(d.to_string(), "-7");
        assert_eq!(d.to_string().parse::<SignedWei>().unwrap(), d);
        assert_eq!(SignedWei::difference(Wei::from_u64(5), Wei::from_u64(5)).to_string(), "0");
    }

    #[test]
    fn trace_paths_sort_parents_first() {
        let mut paths: Vec<Vec<u32>> = vec![vec![1], vec![0, 1], vec![], vec![0], vec![0, 0, 3]];
        paths.sort();
        assert_eq!(paths, vec![vec![], vec![0], vec![0, 0, 3], vec![0, 1], vec![1]]);
        assert_eq!(format_trace_path(&[0, 12, 3]), "0.12.3");
    }

    proptest! {
        #[test]
        fn address_round_trip(bytes in any::<[u8; 20]>()) {
            let a = Address(bytes);
            prop_assert_eq!(parse_address(&a.to_string()).unwrap(), a);
        }

        #[test]
        fn hash_round_trip(bytes in any::<[u8; 32]>()) {
            let h = Hash32(bytes);
            prop_assert_eq!(parse_hash(&h.to_string()).unwrap(), h);
        }

        #[test]
        fn wei_round_trip(limbs in any::<[u64; 4]>()) {
            let w = Wei(U256::from_limbs(limbs));
            prop_assert_eq!(parse_wei(&w.to_string()).unwrap(), w);
            prop_assert_eq!(parse_wei(&format!("0x{}", hex::encode(w.0.to_be_bytes()))).unwrap(), w);
        }

        #[test]
        fn bytes_round_trip(v in proptest::collection::vec(any::<u8>(), 0..64)) {
            let b = Bytes(v);
            prop_assert_eq!(b.to_string().parse::<Bytes>().unwrap(), b);
        }
    }
}
