//! Gas-price analytics: exact per-block aggregates, trailing moving
//! averages for the long-run trend, and autocorrelation scanning for
//! periodic ("tidal") fluctuation inside a block window.
//!
//! Aggregates stay in integer wei until the final mean division.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::chain::{U256, Wei};
use crate::ingest::RawBundle;

/// Default micro-analysis window width in blocks.
pub const DEFAULT_MICRO_WINDOW: u64 = 20_000;

#[derive(Debug, Error)]
pub enum GasError {
    #[error("window must be at least 1")]
    InvalidWindow,
    #[error("invalid lag range {min_lag}..={max_lag}")]
    InvalidLagRange { min_lag: u32, max_lag: u32 },
    #[error("series of length {len} is too short for max lag {max_lag} (need {needed})")]
    SliceTooShort { len: usize, max_lag: u32, needed: usize },
    #[error("series has zero variance; periodicity is undefined")]
    ConstantSeries,
    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Exact mean: sum of prices over transaction count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeanWei {
    pub sum: U256,
    pub count: u32,
}

impl MeanWei {
    pub fn to_f64(&self) -> f64 {
        self.sum.to_f64() / self.count as f64
    }

    /// Decimal text with `digits` fractional digits, rounded half to even.
    pub fn to_fixed(&self, digits: u32) -> String {
        let scale = 10u64.pow(digits);
        let Some(scaled) = self.sum.checked_mul_u64(scale) else {
            return format!("{:.*}", digits as usize, self.to_f64());
        };
        let (mut q, rem) = scaled.div_rem_u64(self.count as u64);
        let twice = rem as u128 * 2;
        let n = self.count as u128;
        let q_odd = q.limbs()[0] & 1 == 1;
        if twice > n || (twice == n && q_odd) {
            q = q.checked_add(U256::ONE).expect("no overflow after division");
        }
        let (int_part, frac) = q.div_rem_u64(scale);
        if digits == 0 {
            int_part.to_string()
        } else {
            format!("{int_part}.{frac:0width$}", width = digits as usize)
        }
    }
}

impl fmt::Display for MeanWei {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_fixed(6))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GasPricePoint {
    pub block_number: u64,
    pub mean: MeanWei,
    /// Lower-middle element for even counts.
    pub median: Wei,
    pub min: Wei,
    pub max: Wei,
    pub tx_count: u32,
}

impl GasPricePoint {
    /// Aggregates one block's prices; `None` for an empty block.
    pub fn from_prices(block_number: u64, prices: &[Wei]) -> Option<GasPricePoint> {
        if prices.is_empty() {
            return None;
        }
        let mut sorted = prices.to_vec();
        sorted.sort_unstable();
        let sum = sorted
            .iter()
            .try_fold(U256::ZERO, |acc, p| acc.checked_add(p.0))
            .expect("sum of a block's gas prices fits in 256 bits");
        let count = sorted.len() as u32;
        Some(GasPricePoint {
            block_number,
            mean: MeanWei { sum, count },
            median: sorted[(sorted.len() - 1) / 2],
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            tx_count: count,
        })
    }

    pub fn field(&self, field: GasField) -> f64 {
        match field {
            GasField::Mean => self.mean.to_f64(),
            GasField::Median => self.median.to_f64(),
            GasField::Min => self.min.to_f64(),
            GasField::Max => self.max.to_f64(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GasField {
    #[default]
    Mean,
    Median,
    Min,
    Max,
}

impl FromStr for GasField {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mean" => Ok(GasField::Mean),
            "median" => Ok(GasField::Median),
            "min" => Ok(GasField::Min),
            "max" => Ok(GasField::Max),
            other => Err(format!("unknown gas field {other:?} (expected mean|median|min|max)")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GasPriceSeries {
    pub points: Vec<GasPricePoint>,
}

impl GasPriceSeries {
    pub fn values(&self, field: GasField) -> Vec<f64> {
        self.points.iter().map(|p| p.field(field)).collect()
    }

    /// Points whose block number lies in `from..=to`.
    pub fn slice(&self, from: u64, to: u64) -> GasPriceSeries {
        GasPriceSeries {
            points: self.points.iter().filter(|p| (from..=to).contains(&p.block_number)).cloned().collect(),
        }
    }
}

pub fn per_block_gas_stats(bundles: &[RawBundle]) -> GasPriceSeries {
    let points: Vec<Option<GasPricePoint>> = bundles
        .par_iter()
        .map(|b| {
            let prices: Vec<Wei> = b.block.transactions.iter().map(|t| t.gas_price).collect();
            GasPricePoint::from_prices(b.block.number, &prices)
        })
        .collect();
    GasPriceSeries { points: points.into_iter().flatten().collect() }
}

/// Trailing mean of `field` over `window` consecutive points. The first
/// `window - 1` points have no full window and are omitted.
pub fn moving_average(series: &GasPriceSeries, window: u32, field: GasField) -> Result<Vec<(u64, f64)>, GasError> {
    if window == 0 {
        return Err(GasError::InvalidWindow);
    }
    let w = window as usize;
    let values = series.values(field);
    Ok(values
        .windows(w)
        .zip(series.points.iter().skip(w - 1))
        .map(|(win, p)| (p.block_number, win.iter().sum::<f64>() / w as f64))
        .collect())
}

/// Ordinary least-squares slope of `y` against `x`.
pub fn ols_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Per-block log-growth rate of a positive series, fitted by least squares
/// on `ln(value)`. For a price process `base * decay^block` this recovers
/// `ln(decay)`.
pub fn log_trend_slope(points: &[(u64, f64)]) -> Option<f64> {
    let logged: Vec<(f64, f64)> = points.iter().filter(|p| p.1 > 0.0).map(|&(b, v)| (b as f64, v.ln())).collect();
    ols_slope(&logged)
}

/// Divides out a fitted exponential trend, leaving the fluctuation around 1.
/// Non-positive values are passed through unchanged.
pub fn detrend_exponential(values: &[f64]) -> Vec<f64> {
    let logged: Vec<(f64, f64)> =
        values.iter().enumerate().filter(|p| *p.1 > 0.0).map(|(i, v)| (i as f64, v.ln())).collect();
    let Some(slope) = ols_slope(&logged) else { return values.to_vec() };
    let n = logged.len() as f64;
    let intercept = logged.iter().map(|p| p.1).sum::<f64>() / n - slope * logged.iter().map(|p| p.0).sum::<f64>() / n;
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| if v > 0.0 { v / (intercept + slope * i as f64).exp() } else { v })
        .collect()
}

/// Sample autocorrelation at lag `k`:
/// `sum_t (x_t - m)(x_{t+k} - m) / sum_t (x_t - m)^2`.
/// `None` for zero variance or `k >= len`.
pub fn autocorrelation(values: &[f64], k: usize) -> Option<f64> {
    if k >= values.len() {
        return None;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let denom: f64 = values.iter().map(|x| (x - mean) * (x - mean)).sum();
    if denom == 0.0 {
        return None;
    }
    let num: f64 = values.iter().zip(&values[k..]).map(|(a, b)| (a - mean) * (b - mean)).sum();
    Some(num / denom)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicityResult {
    pub best_lag: u32,
    pub autocorrelation: f64,
    /// `(lag, r)` for every scanned lag.
    pub correlogram: Vec<(u32, f64)>,
}

/// Scans lags `min_lag..=max_lag` for the strongest autocorrelation. Ties go
/// to the smaller lag.
pub fn detect_periodicity(values: &[f64], min_lag: u32, max_lag: u32) -> Result<PeriodicityResult, GasError> {
    if min_lag == 0 || min_lag > max_lag {
        return Err(GasError::InvalidLagRange { min_lag, max_lag });
    }
    let needed = 2 * max_lag as usize;
    if values.len() < needed {
        return Err(GasError::SliceTooShort { len: values.len(), max_lag, needed });
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let centered: Vec<f64> = values.iter().map(|x| x - mean).collect();
    let denom: f64 = centered.iter().map(|d| d * d).sum();
    if denom == 0.0 {
        return Err(GasError::ConstantSeries);
    }

    let correlogram: Vec<(u32, f64)> = (min_lag..=max_lag)
        .map(|k| {
            let num: f64 = centered.iter().zip(&centered[k as usize..]).map(|(a, b)| a * b).sum();
            (k, num / denom)
        })
        .collect();
    let (best_lag, best) = argmax_lag(&correlogram);
    Ok(PeriodicityResult { best_lag, autocorrelation: best, correlogram })
}

/// First lag attaining the maximum correlation.
fn argmax_lag(correlogram: &[(u32, f64)]) -> (u32, f64) {
    correlogram
        .iter()
        .copied()
        .fold(None, |best: Option<(u32, f64)>, (k, r)| match best {
            Some((_, br)) if r <= br => best,
            _ => Some((k, r)),
        })
        .expect("non-empty lag range")
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, GasError> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| GasError::Io { path: path.to_path_buf(), source: e })
}

fn write_all(path: &Path, text: &str) -> Result<(), GasError> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| GasError::Io { path: path.to_path_buf(), source: e })
}

pub fn series_csv(series: &GasPriceSeries) -> String {
    let mut out = String::from("block_number,mean,median,min,max,tx_count\n");
    for p in &series.points {
        out.push_str(&format!("{},{},{},{},{},{}\n", p.block_number, p.mean, p.median, p.min, p.max, p.tx_count));
    }
    out
}

pub fn correlogram_csv(correlogram: &[(u32, f64)]) -> String {
    let mut out = String::from("lag,r\n");
    for (lag, r) in correlogram {
        out.push_str(&format!("{lag},{r:.6}\n"));
    }
    out
}

pub fn moving_average_csv(points: &[(u64, f64)]) -> String {
    let mut out = String::from("block_number,value\n");
    for (b, v) in points {
        out.push_str(&format!("{b},{v:.6}\n"));
    }
    out
}

pub fn export_series(series: &GasPriceSeries, path: impl AsRef<Path>) -> Result<(), GasError> {
    write_all(path.as_ref(), &series_csv(series))
}

pub fn export_correlogram(correlogram: &[(u32, f64)], path: impl AsRef<Path>) -> Result<(), GasError> {
    write_all(path.as_ref(), &correlogram_csv(correlogram))
}

pub fn export_moving_average(points: &[(u64, f64)], path: impl AsRef<Path>) -> Result<(), GasError> {
    write_all(path.as_ref(), &moving_average_csv(points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn point(block: u64, prices: &[u64]) -> GasPricePoint {
        let prices: Vec<Wei> = prices.iter().map(|&p| Wei::from_u64(p)).collect();
        GasPricePoint::from_prices(block, &prices).unwrap()
    }

    #[test]
    fn odd_block_stats() {
        let p = point(1, &[3, 1, 2]);
        assert_eq!(p.mean.to_fixed(6), "2.000000");
        assert_eq!((p.median, p.min, p.max), (Wei::from_u64(2), Wei::from_u64(1), Wei::from_u64(3)));
    }

    #[test]
    fn even_block_median_is_lower_middle() {
        assert_eq!(point(1, &[4, 1, 3, 2]).median, Wei::from_u64(2));
    }

    #[test]
    fn empty_block_has_no_point() {
        assert!(GasPricePoint::from_prices(1, &[]).is_none());
    }

    #[test]
    fn mean_rounding_half_even() {
        // 1/8 = 0.125 -> two digits: 0.12 (tie, even)
        let m = MeanWei { sum: U256::from_u64(1), count: 8 };
        assert_eq!(m.to_fixed(2), "0.12");
        let m = MeanWei { sum: U256::from_u64(3), count: 8 };
        assert_eq!(m.to_fixed(2), "0.38");
        let m = MeanWei { sum: U256::from_u64(2), count: 3 };
        assert_eq!(m.to_fixed(6), "0.666667");
    }

    #[test]
    fn moving_average_window_one_is_identity() {
        let s = GasPriceSeries { points: vec![point(1, &[5]), point(2, &[7]), point(4, &[9])] };
        let ma = moving_average(&s, 1, GasField::Max).unwrap();
        assert_eq!(ma, vec![(1, 5.0), (2, 7.0), (4, 9.0)]);
        assert!(matches!(moving_average(&s, 0, GasField::Mean), Err(GasError::InvalidWindow)));
    }

    #[test]
    fn moving_average_constant() {
        let s = GasPriceSeries { points: (0..50).map(|b| point(b, &[1_000_000_007])).collect() };
        for w in [1, 3, 17, 50] {
            let ma = moving_average(&s, w, GasField::Mean).unwrap();
            assert_eq!(ma.len(), 50 - w as usize + 1);
            assert!(ma.iter().all(|&(_, v)| v == 1_000_000_007.0));
        }
    }

    #[test]
    fn moving_average_of_linear_decay_keeps_slope() {
        let planted = -3.5;
        let s = GasPriceSeries {
            points: (0..400u64).map(|b| point(b, &[(10_000.0 + planted * b as f64) as u64])).collect(),
        };
        let ma = moving_average(&s, 25, GasField::Mean).unwrap();
        let fitted = ols_slope(&ma.iter().map(|&(b, v)| (b as f64, v)).collect::<Vec<_>>()).unwrap();
        assert!(fitted < 0.0);
        assert!((fitted - planted).abs() <= 0.05 * planted.abs(), "{fitted}");
    }

    #[test]
    fn sinusoid_period_24() {
        let xs: Vec<f64> = (0..2000).map(|t| (2.0 * std::f64::consts::PI * t as f64 / 24.0).sin()).collect();
        let res = detect_periodicity(&xs, 2, 100).unwrap();
        assert_eq!(res.best_lag, 24);
        assert_eq!(res.correlogram.len(), 99);
    }

    #[test]
    fn periodicity_errors() {
        assert!(matches!(detect_periodicity(&[3.0; 300], 1, 100), Err(GasError::ConstantSeries)));
        assert!(matches!(detect_periodicity(&[1.0, 2.0, 3.0], 1, 2), Err(GasError::SliceTooShort { .. })));
        assert!(matches!(detect_periodicity(&[1.0, 2.0, 3.0], 0, 1), Err(GasError::InvalidLagRange { .. })));
    }

    #[test]
    fn ties_prefer_smaller_lag() {
        assert_eq!(argmax_lag(&[(3, 0.1), (4, 0.5), (5, 0.5), (6, 0.2)]), (4, 0.5));
        let xs = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        assert_eq!(detect_periodicity(&xs, 1, 4).unwrap().best_lag, 2);
    }

    #[test]
    fn export_empty_series_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        export_series(&GasPriceSeries::default(), &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "block_number,mean,median,min,max,tx_count\n");
    }

    #[test]
    fn correlogram_csv_round_trip() {
        let xs: Vec<f64> = (0..500).map(|t| ((t * 7919) % 101) as f64).collect();
        let res = detect_periodicity(&xs, 1, 50).unwrap();
        let text = correlogram_csv(&res.correlogram);
        let parsed: Vec<(u32, f64)> = text
            .lines()
            .skip(1)
            .map(|l| {
                let (a, b) = l.split_once(',').unwrap();
                (a.parse().unwrap(), b.parse().unwrap())
            })
            .collect();
        assert_eq!(parsed.len(), res.correlogram.len());
        for (p, q) in parsed.iter().zip(&res.correlogram) {
            assert_eq!(p.0, q.0);
            assert!((p.1 - q.1).abs() <= 1e-6);
        }
    }

    proptest! {
        #[test]
        fn r0_is_one_and_bounded(xs in proptest::collection::vec(-1e6f64..1e6, 4..200)) {
            prop_assume!(autocorrelation(&xs, 0).is_some());
            prop_assert!((autocorrelation(&xs, 0).unwrap() - 1.0).abs() <= 1e-12);
            for k in 1..xs.len() {
                let r = autocorrelation(&xs, k).unwrap();
                prop_assert!(r.abs() <= 1.0 + 1e-12);
            }
        }

        #[test]
        fn moving_average_shift_equivariant(vals in proptest::collection::vec(1u64..1_000_000, 1..60), shift in 0u64..1_000_000, w in 1u32..10) {
            let s1 = GasPriceSeries { points: vals.iter().enumerate().map(|(i, &v)| point(i as u64, &[v])).collect() };
            let s2 = GasPriceSeries { points: vals.iter().enumerate().map(|(i, &v)| point(i as u64 + shift, &[v])).collect() };
            let a = moving_average(&s1, w, GasField::Mean).unwrap();
            let b = moving_average(&s2, w, GasField::Mean).unwrap();
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!(x.0 + shift, y.0);
                prop_assert_eq!(x.1, y.1);
            }
        }
    }
}
