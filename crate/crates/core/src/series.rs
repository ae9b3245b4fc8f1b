//! Time series model, detection configuration and the fitted-joinpoint record.
//!
//! The time index is always `t = 1..=n` with unit spacing. Calendar labels
//! (for example years) only affect presentation: label `start_label` maps to
//! `t = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest series length that admits interior candidates for every
/// supported trimming fraction.
pub const MIN_DETECTION_LEN: usize = 7;

/// Regularly indexed observations `X_1..X_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    values: Vec<f64>,
    start_label: Option<i64>,
}

impl TimeSeries {
    /// Builds a series from raw values. Rejects empty input and any NaN/inf.
    pub fn from_values(values: Vec<f64>, start_label: Option<i64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySeries);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { position: i + 1 });
        }
        Ok(Self {
            values,
            start_label,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn start_label(&self) -> Option<i64> {
        self.start_label
    }

    /// Value at the 1-based time index `t`.
    pub fn at(&self, t: usize) -> f64 {
        self.values[t - 1]
    }

    /// Calendar label of time index `t`, if the series carries labels.
    pub fn label(&self, t: usize) -> Option<i64> {
        self.start_label.map(|s| s + t as i64 - 1)
    }

    /// Time index of a calendar label, if it falls inside the series.
    pub fn index_of_label(&self, label: i64) -> Option<usize> {
        let start = self.start_label?;
        let t = label - start + 1;
        (t >= 1 && t as usize <= self.len()).then_some(t as usize)
    }

    /// Contiguous sub-series over time indices `from..=to`, re-indexed to
    /// start at `t = 1`. Labels follow the slice.
    pub fn slice(&self, from: usize, to: usize) -> Result<Self> {
        if from == 0 || from > to || to > self.len() {
            return Err(Error::Range(format!(
                "slice {from}..={to} outside 1..={}",
                self.len()
            )));
        }
        Ok(Self {
            values: self.values[from - 1..to].to_vec(),
            start_label: self.label(from),
        })
    }

    /// Series with time reversed (`X'_t = X_{n+1-t}`); labels are dropped.
    pub fn reversed(&self) -> Self {
        let mut values = self.values.clone();
        values.reverse();
        Self {
            values,
            start_label: None,
        }
    }
}

/// Inclusive range `(k_lo, k_hi)` of candidate changepoints with
/// `2 <= k <= n-2` and `delta < k/n < 1 - delta` (strict).
///
/// `delta = 0` gives the untrimmed range `(2, n-2)`.
pub fn admissible_k_range(n: usize, delta: f64) -> Result<(usize, usize)> {
    if !(0.0..0.5).contains(&delta) {
        return Err(Error::Domain(format!("delta must lie in [0, 0.5), got {delta}")));
    }
    if n < MIN_DETECTION_LEN {
        return Err(Error::EmptyRange { n, delta });
    }
    let nf = n as f64;
    let above = |k: usize| k as f64 / nf > delta;
    let below = |k: usize| (k as f64 / nf) < 1.0 - delta;

    let mut lo = (nf * delta).floor() as usize;
    while !above(lo) {
        lo += 1;
    }
    while lo > 0 && above(lo - 1) {
        lo -= 1;
    }
    let mut hi = (nf * (1.0 - delta)).ceil() as usize;
    while !below(hi) {
        hi -= 1;
    }
    while below(hi + 1) {
        hi += 1;
    }

    let lo = lo.max(2);
    let hi = hi.min(n - 2);
    if lo > hi {
        return Err(Error::EmptyRange { n, delta });
    }
    Ok((lo, hi))
}

/// Least-squares joinpoint fit at a fixed changepoint `k`.
///
/// Mean function: `mu + alpha*t` for `t <= k`, `mu + alpha*t + beta*(t-k)`
/// for `t > k`, so both segments meet at `t = k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JoinpointFit {
    pub n: usize,
    pub k: usize,
    pub mu_hat: f64,
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub sse: f64,
    /// `sse / (n - 3)`.
    pub sigma2_hat: f64,
}

impl JoinpointFit {
    pub fn left_slope(&self) -> f64 {
        self.alpha_hat
    }

    pub fn right_slope(&self) -> f64 {
        self.alpha_hat + self.beta_hat
    }

    /// Fitted mean at time index `t` (real-valued so the join can be probed).
    pub fn mean_at(&self, t: f64) -> f64 {
        let hinge = (t - self.k as f64).max(0.0);
        self.mu_hat + self.alpha_hat * t + self.beta_hat * hinge
    }

    /// Left segment as a line in `t`.
    pub fn left_line(&self) -> Line {
        Line {
            intercept: self.mu_hat,
            slope: self.alpha_hat,
        }
    }

    /// Right segment as a line in `t`.
    pub fn right_line(&self) -> Line {
        Line {
            intercept: self.mu_hat - self.beta_hat * self.k as f64,
            slope: self.alpha_hat + self.beta_hat,
        }
    }
}

/// `y = intercept + slope * x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub intercept: f64,
    pub slope: f64,
}

impl Line {
    pub fn at(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }

    /// Re-expresses a line in `t` as a line in calendar labels, where label
    /// `start_label` corresponds to `t = 1`.
    pub fn in_labels(&self, start_label: i64) -> Line {
        Line {
            intercept: self.intercept - self.slope * (start_label - 1) as f64,
            slope: self.slope,
        }
    }
}

/// How replicate-level and candidate-level loops are executed.
///
/// `Parallel` falls back to sequential execution when the crate is built
/// without the `parallel` feature. Both modes produce bit-identical output.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

pub const DEFAULT_DELTA: f64 = 0.05;
pub const DEFAULT_LEVEL: f64 = 0.05;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_GRID_SIZE: usize = 1000;
/// Replicates used for interactive p-values.
pub const DEFAULT_REPLICATES: usize = 20_000;
/// Replicates used when tabulating quantiles.
pub const TABLE_REPLICATES: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    /// Trimming fraction.
    pub delta: f64,
    /// Significance level.
    pub level: f64,
    pub seed: u64,
    pub mc_replicates: usize,
    pub grid_size: usize,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            delta: DEFAULT_DELTA,
            level: DEFAULT_LEVEL,
            seed: DEFAULT_SEED,
            mc_replicates: DEFAULT_REPLICATES,
            grid_size: DEFAULT_GRID_SIZE,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.005..=0.25).contains(&self.delta) {
            return Err(Error::InvalidConfig(format!(
                "delta must lie in [0.005, 0.25], got {}",
                self.delta
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "level must lie in (0, 1), got {}",
                self.level
            )));
        }
        if self.grid_size < 50 {
            return Err(Error::InvalidConfig(format!(
                "grid_size must be at least 50, got {}",
                self.grid_size
            )));
        }
        if self.mc_replicates < 1000 {
            return Err(Error::InvalidConfig(format!(
                "mc_replicates must be at least 1000, got {}",
                self.mc_replicates
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn construction() {
        let s = TimeSeries::from_values(vec![0.1, 0.2, 0.3], None).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.at(1), 0.1);
        assert!(matches!(
            TimeSeries::from_values(vec![1.0, f64::NAN], None),
            Err(Error::NonFiniteValue { position: 2 })
        ));
        assert!(matches!(
            TimeSeries::from_values(vec![], None),
            Err(Error::EmptySeries)
        ));
        assert!(matches!(
            TimeSeries::from_values(vec![1.0, 2.0, f64::INFINITY], None),
            Err(Error::NonFiniteValue { position: 3 })
        ));
    }

    #[test]
    fn labels() {
        let s = TimeSeries::from_values(vec![0.0; 174], Some(1850)).unwrap();
        assert_eq!(s.label(1), Some(1850));
        assert_eq!(s.label(174), Some(2023));
        assert_eq!(s.index_of_label(1972), Some(123));
        assert_eq!(s.index_of_label(2024), None);
        let sub = s.slice(121, 174).unwrap();
        assert_eq!(sub.len(), 54);
        assert_eq!(sub.start_label(), Some(1970));
    }

    #[test]
    fn k_range_examples() {
        assert_eq!(admissible_k_range(100, 0.05).unwrap(), (6, 94));
        assert_eq!(admissible_k_range(100, 0.0).unwrap(), (2, 98));
        assert_eq!(admissible_k_range(8, 0.25).unwrap(), (3, 5));
        assert!(matches!(
            admissible_k_range(6, 0.05),
            Err(Error::EmptyRange { .. })
        ));
        assert!(admissible_k_range(100, 0.6).is_err());
    }

    #[test]
    fn k_range_matches_enumeration() {
        for n in 7..200 {
            for &delta in &[0.0, 0.01, 0.05, 0.1, 0.25] {
                let nf = n as f64;
                let ks: Vec<usize> = (2..=n - 2)
                    .filter(|&k| k as f64 / nf > delta && (k as f64 / nf) < 1.0 - delta)
                    .collect();
                match admissible_k_range(n, delta) {
                    Ok((lo, hi)) => {
                        assert_eq!(ks.first(), Some(&lo), "n={n} delta={delta}");
                        assert_eq!(ks.last(), Some(&hi), "n={n} delta={delta}");
                    }
                    Err(_) => assert!(ks.is_empty()),
                }
            }
        }
    }

    #[test]
    fn fitted_mean_is_continuous() {
        let fit = JoinpointFit {
            n: 20,
            k: 8,
            mu_hat: 0.3,
            alpha_hat: -0.1,
            beta_hat: 2.5,
            sse: 1.0,
            sigma2_hat: 1.0 / 17.0,
        };
        assert_eq!(fit.left_line().at(8.0), fit.mean_at(8.0));
        let right = fit.right_line().at(8.0);
        assert!((right - fit.mean_at(8.0)).abs() < 1e-12);
        let l = fit.left_line().in_labels(1850);
        assert!((l.at(1857.0) - fit.left_line().at(8.0)).abs() < 1e-9);
    }

    #[test]
    fn config_validation() {
        assert!(DetectionConfig::default().validate().is_ok());
        let bad = DetectionConfig {
            delta: 0.6,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
        let bad = DetectionConfig {
            grid_size: 10,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn k_range_symmetric(n in 7usize..5000, delta in 0.005f64..0.25) {
            let frac = (n as f64 * delta).fract();
            prop_assume!(frac > 1e-6 && frac < 1.0 - 1e-6);
            if let Ok((lo, hi)) = admissible_k_range(n, delta) {
                prop_assume!(lo > 2 && hi < n - 2);
                prop_assert_eq!(lo - 1, n - hi - 1);
            }
        }

        #[test]
        fn construction_preserves_values(v in proptest::collection::vec(-1e6f64..1e6, 1..200)) {
            let s = TimeSeries::from_values(v.clone(), Some(1900)).unwrap();
            prop_assert_eq!(s.values(), &v[..]);
        }
    }
}
