use thiserror::Error;

use crate::chain::{Wei, U256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum GiniError {
    #[error("gini of an empty sequence")]
    EmptyInput,
    #[error("gini of an all-zero sequence")]
    AllZero,
}

/// Gini coefficient of real amounts, via the sorted form
/// G = Σ (2i − n − 1)·x_(i) / (n·Σx) with 1-based ranks.
pub fn gini_f64(amounts: &[f64]) -> Result<f64, GiniError> {
    if amounts.is_empty() {
        return Err(GiniError::EmptyInput);
    }
    let mut xs = amounts.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let total: f64 = xs.iter().sum();
    if total <= 0.0 {
        return Err(GiniError::AllZero);
    }
    let weighted: f64 = xs.iter().enumerate().map(|(i, x)| (2.0 * (i as f64 + 1.0) - n - 1.0) * x).sum();
    Ok(weighted / (n * total))
}

/// Gini coefficient of wei amounts. Numerator and denominator are computed
/// exactly in 256 bits and divided once, so the result does not depend on
/// the scale of the amounts beyond the final rounding.
pub fn gini(amounts: &[Wei]) -> Result<f64, GiniError> {
    if amounts.is_empty() {
        return Err(GiniError::EmptyInput);
    }
    if amounts.iter().all(|a| a.is_zero()) {
        return Err(GiniError::AllZero);
    }
    let mut xs: Vec<U256> = amounts.iter().map(|w| w.0).collect();
    xs.sort();
    let n = xs.len() as u64;
    let exact = || -> Option<(U256, U256)> {
        // Σ (2i − n − 1)·x_(i) split into positive and negative parts.
        let mut pos = U256::ZERO;
        let mut neg = U256::ZERO;
        let mut total = U256::ZERO;
        for (i, x) in xs.iter().enumerate() {
            let rank = i as u64 + 1;
            total = total.checked_add(*x)?;
            if 2 * rank > n + 1 {
                pos = pos.checked_add(x.checked_mul_u64(2 * rank - n - 1)?)?;
            } else {
                neg = neg.checked_add(x.checked_mul_u64(n + 1 - 2 * rank)?)?;
            }
        }
        Some((pos.checked_sub(neg)?, total.checked_mul_u64(n)?))
    };
    match exact() {
        Some((num, den)) => Ok(num.to_f64() / den.to_f64()),
        None => gini_f64(&xs.iter().map(|x| x.to_f64()).collect::<Vec<_>>()),
    }
}
