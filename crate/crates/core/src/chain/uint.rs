//! Fixed-width unsigned 256-bit integer.
//!
//! Only the operations the analytics need are provided: checked add/sub,
//! multiplication by a 64-bit word, division by a 64-bit word, big-endian
//! byte conversion and decimal/hex text forms. Nothing here wraps silently.

use std::cmp::Ordering;
use std::fmt;

use super::ChainError;

/// Unsigned 256-bit integer stored as four little-endian 64-bit limbs.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct U256([u64; 4]);

impl U256 {
    pub const ZERO: U256 = U256([0; 4]);
    pub const ONE: U256 = U256([1, 0, 0, 0]);
    pub const MAX: U256 = U256([u64::MAX; 4]);

    pub const fn from_limbs(limbs: [u64; 4]) -> Self {
        U256(limbs)
    }

    pub const fn limbs(&self) -> [u64; 4] {
        self.0
    }

    pub const fn from_u64(v: u64) -> Self {
        U256([v, 0, 0, 0])
    }

    pub const fn from_u128(v: u128) -> Self {
        U256([v as u64, (v >> 64) as u64, 0, 0])
    }

    pub fn is_zero(&self) -> bool {
        self.0 == [0; 4]
    }

    /// Returns the value as `u64` when it fits.
    pub fn to_u64(&self) -> Option<u64> {
        if self.0[1..].iter().all(|&l| l == 0) {
            Some(self.0[0])
        } else {
            None
        }
    }

    /// Nearest-ish `f64`; exact up to 2^53, relative error ~1e-16 beyond.
    pub fn to_f64(&self) -> f64 {
        const TWO64: f64 = 18_446_744_073_709_551_616.0;
        self.0
            .iter()
            .rev()
            .fold(0.0, |acc, &limb| acc * TWO64 + limb as f64)
    }

    pub fn checked_add(self, rhs: U256) -> Option<U256> {
        let mut out = [0u64; 4];
        let mut carry = false;
        for (i, slot) in out.iter_mut().enumerate() {
            let (s1, c1) = self.0[i].overflowing_add(rhs.0[i]);
            let (s2, c2) = s1.overflowing_add(carry as u64);
            *slot = s2;
            carry = c1 || c2;
        }
        (!carry).then_some(U256(out))
    }

    pub fn checked_sub(self, rhs: U256) -> Option<U256> {
        let mut out = [0u64; 4];
        let mut borrow = false;
        for (i, slot) in out.iter_mut().enumerate() {
            let (d1, b1) = self.0[i].overflowing_sub(rhs.0[i]);
            let (d2, b2) = d1.overflowing_sub(borrow as u64);
            *slot = d2;
            borrow = b1 || b2;
        }
        (!borrow).then_some(U256(out))
    }

    pub fn checked_mul_u64(self, rhs: u64) -> Option<U256> {
        let mut out = [0u64; 4];
        let mut carry: u128 = 0;
        for (i, slot) in out.iter_mut().enumerate() {
            let prod = self.0[i] as u128 * rhs as u128 + carry;
            *slot = prod as u64;
            carry = prod >> 64;
        }
        (carry == 0).then_some(U256(out))
    }

    /// Quotient and remainder of division by a non-zero word.
    pub fn div_rem_u64(self, divisor: u64) -> (U256, u64) {
        assert!(divisor != 0, "division by zero");
        let mut out = [0u64; 4];
        let mut rem: u128 = 0;
        for i in (0..4).rev() {
            let cur = (rem << 64) | self.0[i] as u128;
            out[i] = (cur / divisor as u128) as u64;
            rem = cur % divisor as u128;
        }
        (U256(out), rem as u64)
    }

    pub fn from_be_bytes(bytes: [u8; 32]) -> Self {
        let mut limbs = [0u64; 4];
        for (i, chunk) in bytes.chunks_exact(8).enumerate() {
            limbs[3 - i] = u64::from_be_bytes(chunk.try_into().expect("8-byte chunk"));
        }
        U256(limbs)
    }

    /// Big-endian slice of at most 32 bytes, left-padded with zeros.
    pub fn from_be_slice(bytes: &[u8]) -> Option<Self> {
        if bytes.len() > 32 {
            return None;
        }
        let mut buf = [0u8; 32];
        buf[32 - bytes.len()..].copy_from_slice(bytes);
        Some(Self::from_be_bytes(buf))
    }

    pub fn to_be_bytes(&self) -> [u8; 32] {
        let mut out = [0u8; 32];
        for i in 0..4 {
            out[i * 8..(i + 1) * 8].copy_from_slice(&self.0[3 - i].to_be_bytes());
        }
        out
    }

    pub fn from_dec_str(text: &str) -> Result<Self, ChainError> {
        if text.is_empty() || !text.bytes().all(|b| b.is_ascii_digit()) {
            return Err(ChainError::MalformedNumber(text.to_string()));
        }
        let mut acc = U256::ZERO;
        for b in text.bytes() {
            acc = acc
                .checked_mul_u64(10)
                .and_then(|v| v.checked_add(U256::from_u64((b - b'0') as u64)))
                .ok_or(ChainError::Overflow)?;
        }
        Ok(acc)
    }

    /// Hex digits without prefix; leading zeros are allowed.
    pub fn from_hex_digits(digits: &str) -> Result<Self, ChainError> {
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(ChainError::MalformedNumber(digits.to_string()));
        }
        let significant = digits.trim_start_matches('0');
        if significant.len() > 64 {
            return Err(ChainError::Overflow);
        }
        let mut acc = U256::ZERO;
        for c in significant.chars() {
            let d = c.to_digit(16).expect("checked hex digit") as u64;
            acc = acc.checked_mul_u64(16).expect("<= 64 digits").checked_add(U256::from_u64(d)).expect("<= 64 digits");
        }
        Ok(acc)
    }
}

impl Ord for U256 {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.iter().rev().cmp(other.0.iter().rev())
    }
}

impl PartialOrd for U256 {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for U256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.pad("0");
        }
        let mut digits = Vec::with_capacity(78);
        let mut cur = *self;
        while !cur.is_zero() {
            let (q, r) = cur.div_rem_u64(10_000_000_000_000_000_000);
            cur = q;
            let chunk = if cur.is_zero() { r.to_string() } else { format!("{r:019}") };
            digits.push(chunk);
        }
        digits.reverse();
        f.pad(&digits.concat())
    }
}

impl fmt::Debug for U256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl From<u64> for U256 {
    fn from(v: u64) -> Self {
        U256::from_u64(v)
    }
}

impl From<u128> for U256 {
    fn from(v: u128) -> Self {
        U256::from_u128(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_zero_and_max() {
        assert_eq!(U256::ZERO.to_string(), "0");
        assert_eq!(
            U256::MAX.to_string(),
            "115792089237316195423570985008687907853269984665640564039457584007913129639935"
        );
    }

    #[test]
    fn decimal_boundary() {
        let max = "115792089237316195423570985008687907853269984665640564039457584007913129639935";
        assert_eq!(U256::from_dec_str(max).unwrap(), U256::MAX);
        let over = "115792089237316195423570985008687907853269984665640564039457584007913129639936";
        assert_eq!(U256::from_dec_str(over), Err(ChainError::Overflow));
    }

    #[test]
    fn hex_leading_zeros_do_not_overflow() {
        let digits = format!("{}{}", "0".repeat(10), "f".repeat(64));
        assert_eq!(U256::from_hex_digits(&digits).unwrap(), U256::MAX);
        assert_eq!(U256::from_hex_digits(&"1".repeat(65)), Err(ChainError::Overflow));
    }

    #[test]
    fn be_bytes_round_trip() {
        let v = U256::from_limbs([1, 2, 3, 4]);
        assert_eq!(U256::from_be_bytes(v.to_be_bytes()), v);
        assert_eq!(U256::from_be_slice(&[1, 0]).unwrap(), U256::from_u64(256));
    }

    #[test]
    fn to_f64_large() {
        let v = U256::from_limbs([0, 0, 0, 1]);
        assert_eq!(v.to_f64(), 2f64.powi(192));
    }
}
