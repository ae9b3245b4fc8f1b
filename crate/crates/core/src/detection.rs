//! Studentized slope-change profile `J_k`, its trimmed supremum, and report
//! assembly.
//!
//! The profile is computed in `O(n)` for all candidates at once. Let `r` be
//! the residuals of the straight-line fit. The hinge regressor
//! `z_k = (t-k)⁺` enters only through `W_k = Σ_{t>k} (t-k) r_t`, which obeys
//! `W_{k-1} = W_k + Σ_{t>=k} r_t`. Partialling out `[1, t]` gives
//! `β̂_k = W_k v_k` and `SSE_k = Σ r² - W_k² v_k` with
//! `v_k = [(XᵀX)⁻¹]_33`, hence `J_k = W_k sqrt(v_k) / σ̂_k`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::closed_form::fit_joinpoint;
use crate::error::{Error, Result};
use crate::gp_limit::{NullDistribution, NullMethod, STANDARD_LEVELS};
use crate::moments::{unit_variance, var_beta};
use crate::series::{
    admissible_k_range, DetectionConfig, Execution, JoinpointFit, TimeSeries, MIN_DETECTION_LEN,
};

/// `SSE_k` at or below this fraction of the straight-line residual sum of
/// squares counts as an exact fit.
const DEGENERATE_SSE_RATIO: f64 = 1e-12;

/// Straight-line residual sum of squares at or below this fraction of the
/// total sum of squares counts as an exactly linear series.
const DEGENERATE_LINE_RATIO: f64 = 1e-26;

#[cfg(feature = "parallel")]
const PARALLEL_MIN_CANDIDATES: usize = 1 << 14;

/// Residuals of the least-squares line through `(t, x_t)`, plus the total
/// and residual sums of squares.
struct Detrended {
    r: Vec<f64>,
    rss: f64,
    tss: f64,
}

/// Mean and least-squares slope of `(t, y_t)`, plus `Σ(y - ȳ)²`.
fn line_fit(y: &[f64]) -> (f64, f64, f64) {
    let nf = y.len() as f64;
    let ybar = y.iter().sum::<f64>() / nf;
    let tbar = (nf + 1.0) / 2.0;
    let stt = nf * (nf * nf - 1.0) / 12.0;
    let (mut sty, mut ss) = (0.0, 0.0);
    for (i, &v) in y.iter().enumerate() {
        let dy = v - ybar;
        sty += (i as f64 + 1.0 - tbar) * dy;
        ss += dy * dy;
    }
    (ybar, sty / stt, ss)
}

fn remove_line(y: &mut [f64], mean: f64, slope: f64) {
    let tbar = (y.len() as f64 + 1.0) / 2.0;
    for (i, v) in y.iter_mut().enumerate() {
        *v = (*v - mean) - slope * (i as f64 + 1.0 - tbar);
    }
}

fn detrend(x: &[f64]) -> Detrended {
    let (mean, slope, tss) = line_fit(x);
    let mut r = x.to_vec();
    remove_line(&mut r, mean, slope);
    // The hinge projections amplify any leftover linear component by
    // roughly n³, so project a second time.
    let (mean, slope, _) = line_fit(&r);
    remove_line(&mut r, mean, slope);
    let rss = r.iter().map(|v| v * v).sum();
    Detrended { r, rss, tss }
}

fn is_degenerate(sse: f64, d: &Detrended) -> bool {
    d.rss <= DEGENERATE_LINE_RATIO * d.tss || sse <= DEGENERATE_SSE_RATIO * d.rss
}

/// `J_k` from the direct least-squares fit at `k` (`2 <= k <= n-2`).
pub fn j_statistic(series: &TimeSeries, k: usize) -> Result<f64> {
    let fit = fit_joinpoint(series, k)?;
    let d = detrend(series.values());
    if is_degenerate(fit.sse, &d) {
        return Err(Error::DegenerateSeries { k });
    }
    Ok(fit.beta_hat / var_beta(series.len(), k, fit.sigma2_hat)?.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub k: usize,
    #[serde(rename = "J")]
    pub j: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JProfile {
    pub entries: Vec<ProfileEntry>,
    pub j_max: f64,
    pub tau_hat: usize,
    pub delta: f64,
    pub sigma2_hat_at_tau: f64,
}

impl JProfile {
    pub fn k_range(&self) -> (usize, usize) {
        (self.entries[0].k, self.entries[self.entries.len() - 1].k)
    }

    pub fn get(&self, k: usize) -> Option<f64> {
        let first = self.entries.first()?.k;
        self.entries.get(k.checked_sub(first)?).map(|e| e.j)
    }
}

/// Reusable profile evaluator for a fixed length and trimming.
#[derive(Clone, Debug)]
pub struct Profiler {
    n: usize,
    k_lo: usize,
    k_hi: usize,
    /// `sqrt(v_k)` for `k = k_lo..=k_hi`.
    sqrt_v: Vec<f64>,
}

/// Per-candidate `(J_k, σ̂²_k)`.
type Scratch = Vec<(f64, f64)>;

impl Profiler {
    pub fn new(n: usize, delta: f64) -> Result<Self> {
        let (k_lo, k_hi) = admissible_k_range(n, delta)?;
        crate::closed_form::design_sums(n, k_hi)?;
        let sqrt_v = (k_lo..=k_hi).map(|k| unit_variance(n, k).sqrt()).collect();
        Ok(Self {
            n,
            k_lo,
            k_hi,
            sqrt_v,
        })
    }

    pub fn k_range(&self) -> (usize, usize) {
        (self.k_lo, self.k_hi)
    }

    fn evaluate(&self, x: &[f64], exec: Execution) -> Result<Scratch> {
        assert_eq!(x.len(), self.n, "series length does not match profiler");
        let d = detrend(x);
        let n = self.n;
        let count = self.k_hi - self.k_lo + 1;

        // W_k for k = k_lo..=k_hi, accumulated from the right end.
        let mut w = vec![0.0; count];
        let (mut s, mut acc) = (0.0, 0.0);
        for k in (self.k_lo..n).rev() {
            s += d.r[k];
            acc += s;
            if k <= self.k_hi {
                w[k - self.k_lo] = acc;
            }
        }

        let dof = (n - 3) as f64;
        let one = |i: usize| -> Result<(f64, f64)> {
            let rv = self.sqrt_v[i];
            let proj = w[i] * rv;
            let sse = d.rss - proj * proj;
            if is_degenerate(sse, &d) {
                return Err(Error::DegenerateSeries { k: self.k_lo + i });
            }
            let s2 = sse / dof;
            Ok((proj / s2.sqrt(), s2))
        };

        #[cfg(feature = "parallel")]
        if exec == Execution::Parallel && count >= PARALLEL_MIN_CANDIDATES {
            use rayon::prelude::*;
            return (0..count).into_par_iter().map(one).collect();
        }
        let _ = exec;
        (0..count).map(one).collect()
    }

    /// `J_max` over the admissible range, without building a profile.
    pub fn j_max(&self, x: &[f64]) -> Result<f64> {
        let vals = self.evaluate(x, Execution::Sequential)?;
        Ok(vals.iter().fold(0.0, |m, &(j, _)| f64::max(m, j.abs())))
    }

    pub fn profile(&self, x: &[f64], delta: f64, exec: Execution) -> Result<JProfile> {
        let vals = self.evaluate(x, exec)?;
        let mut best = 0;
        for (i, &(j, _)) in vals.iter().enumerate() {
            if j.abs() > vals[best].0.abs() {
                best = i;
            }
        }
        Ok(JProfile {
            entries: vals
                .iter()
                .enumerate()
                .map(|(i, &(j, _))| ProfileEntry { k: self.k_lo + i, j })
                .collect(),
            j_max: vals[best].0.abs(),
            tau_hat: self.k_lo + best,
            delta,
            sigma2_hat_at_tau: vals[best].1,
        })
    }
}

/// `J_k` at every admissible `k` with `delta < k/n < 1 - delta`.
pub fn j_profile(series: &TimeSeries, delta: f64) -> Result<JProfile> {
    j_profile_with(series, delta, Execution::default())
}

pub fn j_profile_with(series: &TimeSeries, delta: f64, exec: Execution) -> Result<JProfile> {
    Profiler::new(series.len(), delta)?.profile(series.values(), delta, exec)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub slope: f64,
    /// Intercept with time measured as `t = 1..n` (value at `t = 0`).
    pub intercept_t: f64,
    /// Intercept with time measured in labels (value at label 0).
    pub intercept_label: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segments {
    pub left: Segment,
    pub right: Segment,
}

impl Segments {
    pub fn from_fit(fit: &JoinpointFit, start_label: Option<i64>) -> Self {
        let seg = |line: crate::series::Line| Segment {
            slope: line.slope,
            intercept_t: line.intercept,
            intercept_label: start_label.map(|s| line.in_labels(s).intercept),
        };
        Self {
            left: seg(fit.left_line()),
            right: seg(fit.right_line()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NullSummary {
    pub method: NullMethod,
    pub delta: f64,
    pub grid_size: usize,
    pub replicates: usize,
    pub seed: u64,
    pub n_sim: Option<usize>,
}

impl From<&NullDistribution> for NullSummary {
    fn from(d: &NullDistribution) -> Self {
        Self {
            method: d.method,
            delta: d.delta,
            grid_size: d.grid.len(),
            replicates: d.draws.len(),
            seed: d.seed,
            n_sim: d.n_sim,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub config: DetectionConfig,
    pub null: NullSummary,
    pub n: usize,
    pub start_label: Option<i64>,
    pub profile: JProfile,
    pub fit_at_tau: JoinpointFit,
    pub statistic: f64,
    pub p_value: f64,
    /// Quantile level (as text) to critical value.
    pub critical_values: BTreeMap<String, f64>,
    /// Whether the statistic exceeds the `1 - level` critical value.
    pub detected: bool,
    pub segments: Segments,
}

impl AnalysisReport {
    pub fn tau_hat(&self) -> usize {
        self.profile.tau_hat
    }

    pub fn tau_label(&self) -> Option<i64> {
        self.start_label.map(|s| s + self.profile.tau_hat as i64 - 1)
    }

    /// Critical value at quantile level `q` (e.g. 0.95), if tabulated.
    pub fn critical_value(&self, q: f64) -> Option<f64> {
        self.critical_values.get(&level_key(q)).copied()
    }
}

pub fn level_key(q: f64) -> String {
    format!("{q}")
}

/// Full test: profile, fit at `τ̂`, Monte Carlo p-value and critical values.
pub fn analyze(
    series: &TimeSeries,
    config: &DetectionConfig,
    null: &NullDistribution,
) -> Result<AnalysisReport> {
    config.validate()?;
    if (null.delta - config.delta).abs() > 1e-12 {
        return Err(Error::ConfigMismatch(format!(
            "null distribution has delta = {}, analysis uses {}",
            null.delta, config.delta
        )));
    }
    let profile = j_profile(series, config.delta)?;
    let fit_at_tau = fit_joinpoint(series, profile.tau_hat)?;
    let statistic = profile.j_max;

    let confidence = 1.0 - config.level;
    let mut critical_values = BTreeMap::new();
    for q in STANDARD_LEVELS.iter().copied().chain([confidence]) {
        critical_values.insert(level_key(q), null.quantile(q)?);
    }
    let detected = statistic > null.quantile(confidence)?;

    Ok(AnalysisReport {
        config: config.clone(),
        null: null.into(),
        n: series.len(),
        start_label: series.start_label(),
        segments: Segments::from_fit(&fit_at_tau, series.start_label()),
        profile,
        fit_at_tau,
        statistic,
        p_value: null.p_value(statistic),
        critical_values,
        detected,
    })
}

/// [`analyze`] on the labels `from_label..=to_label`, re-indexed to `t = 1`.
pub fn subperiod_analyze(
    series: &TimeSeries,
    from_label: i64,
    to_label: i64,
    config: &DetectionConfig,
    null: &NullDistribution,
) -> Result<AnalysisReport> {
    if series.start_label().is_none() {
        return Err(Error::Range("series has no labels".into()));
    }
    let locate = |label| {
        series
            .index_of_label(label)
            .ok_or_else(|| Error::Range(format!("label {label} outside the series")))
    };
    let (from, to) = (locate(from_label)?, locate(to_label)?);
    if to < from || to - from + 1 < MIN_DETECTION_LEN {
        return Err(Error::Range(format!(
            "subperiod {from_label}..={to_label} has fewer than {MIN_DETECTION_LEN} points"
        )));
    }
    analyze(&series.slice(from, to)?, config, null)
}
