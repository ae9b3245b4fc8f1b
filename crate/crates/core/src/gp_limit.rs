//! Monte Carlo null distribution of `sup |G(t)|` over `[δ, 1-δ]`, and the
//! finite-`n` simulator used to cross-check it.
//!
//! Replicate `r` draws from its own ChaCha stream `(seed, r)`, and each
//! replicate's arithmetic is independent of how replicates are batched or
//! scheduled, so sequential and parallel runs give bit-identical draws.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::detection::Profiler;
use crate::error::{Error, Result};
use crate::moments::cov_g;
use crate::series::Execution;

/// Quantile levels tabulated in reports and tables.
pub const STANDARD_LEVELS: [f64; 5] = [0.90, 0.95, 0.975, 0.99, 0.999];

pub const BOOTSTRAP_RESAMPLES: usize = 200;

const FIRST_JITTER: f64 = 1e-12;
const MAX_JITTER: f64 = 1e-8;

/// Replicates processed together by the sampling kernel.
const BATCH: usize = 16;

/// Stream reserved for bootstrap resampling.
const BOOTSTRAP_STREAM: u64 = 1 << 62;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullMethod {
    GpGrid,
    FiniteN,
}

impl NullMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            NullMethod::GpGrid => "gp_grid",
            NullMethod::FiniteN => "finite_n",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NullDistribution {
    pub delta: f64,
    /// Evaluation points in `[δ, 1-δ]` (for `FiniteN`, the admissible `k/n`).
    pub grid: Vec<f64>,
    /// Sorted ascending.
    pub draws: Vec<f64>,
    pub seed: u64,
    pub method: NullMethod,
    pub n_sim: Option<usize>,
    /// Diagonal regularization used by the factorization (0 for `FiniteN`).
    pub jitter: f64,
}

/// `m` equally spaced points on `[δ, 1-δ]`, endpoints included.
pub fn grid(delta: f64, m: usize) -> Result<Vec<f64>> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::Domain(format!("grid needs 0 < delta < 0.5, got {delta}")));
    }
    if m < 2 {
        return Err(Error::Domain(format!("grid needs at least 2 points, got {m}")));
    }
    let step = (1.0 - 2.0 * delta) / (m - 1) as f64;
    let mut g: Vec<f64> = (0..m).map(|i| delta + i as f64 * step).collect();
    g[m - 1] = 1.0 - delta;
    Ok(g)
}

/// `M[i][j] = cov_G(min(g_i, g_j), max(g_i, g_j))`.
pub fn build_covariance_matrix(grid: &[f64]) -> Result<DMatrix<f64>> {
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("grid must be strictly increasing".into()));
    }
    let m = grid.len();
    let mut cov = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let v = cov_g(grid[j], grid[i])?;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(cov)
}

/// Lower Cholesky factor stored row-major packed (`row i` holds `i + 1`
/// entries).
#[derive(Clone, Debug)]
pub struct PackedFactor {
    m: usize,
    data: Vec<f64>,
    jitter: f64,
}

impl PackedFactor {
    /// Factor `M + jitter·I`, escalating the jitter by decades from
    /// `1e-12` up to `1e-8`.
    pub fn new(cov: &DMatrix<f64>) -> Result<Self> {
        let m = cov.nrows();
        if m == 0 || cov.ncols() != m {
            return Err(Error::Domain("covariance matrix must be square and nonempty".into()));
        }
        let mut jitter = FIRST_JITTER;
        loop {
            let shifted = cov + DMatrix::identity(m, m) * jitter;
            if let Some(ch) = shifted.cholesky() {
                let l = ch.l();
                let mut data = Vec::with_capacity(m * (m + 1) / 2);
                for i in 0..m {
                    data.extend((0..=i).map(|j| l[(i, j)]));
                }
                if jitter > FIRST_JITTER {
                    eprintln!("covariance factorization needed jitter {jitter:e}");
                }
                return Ok(Self { m, data, jitter });
            }
            if jitter >= MAX_JITTER {
                return Err(Error::FactorizationFailure { jitter });
            }
            jitter *= 10.0;
        }
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `max_i |(L z)_i|` for `lanes` replicates whose normals are stored
    /// lane-interleaved in `z` (`z[j * BATCH + b]`).
    fn sup_abs_batch(&self, z: &[f64], lanes: usize, out: &mut [f64]) {
        let mut acc = [0.0f64; BATCH];
        let mut best = [0.0f64; BATCH];
        let mut row = 0;
        for i in 0..self.m {
            acc.fill(0.0);
            let coeffs = &self.data[row..row + i + 1];
            for (j, &c) in coeffs.iter().enumerate() {
                let zj = &z[j * BATCH..(j + 1) * BATCH];
                for b in 0..BATCH {
                    acc[b] += c * zj[b];
                }
            }
            for b in 0..BATCH {
                best[b] = best[b].max(acc[b].abs());
            }
            row += i + 1;
        }
        out[..lanes].copy_from_slice(&best[..lanes]);
    }
}

fn replicate_rng(seed: u64, r: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r);
    rng
}

/// Run `job(first_replicate, out)` over consecutive chunks of `out`.
fn for_chunks<F>(out: &mut [f64], chunk: usize, exec: Execution, job: F) -> Result<()>
where
    F: Fn(usize, &mut [f64]) -> Result<()> + Sync,
{
    #[cfg(feature = "parallel")]
    if exec == Execution::Parallel {
        use rayon::prelude::*;
        return out
            .par_chunks_mut(chunk)
            .enumerate()
            .try_for_each(|(c, o)| job(c * chunk, o));
    }
    let _ = exec;
    out.chunks_mut(chunk)
        .enumerate()
        .try_for_each(|(c, o)| job(c * chunk, o))
}

/// `replicates` draws of `max_i |Z_i|` with `Z = L ε`, in replicate order.
pub fn sample_sup_abs_factored(
    factor: &PackedFactor,
    replicates: usize,
    seed: u64,
    exec: Execution,
) -> Vec<f64> {
    let m = factor.dim();
    let mut out = vec![0.0; replicates];
    let _ = for_chunks(&mut out, BATCH, exec, |first, o| {
        let mut z = vec![0.0; m * BATCH];
        for (b, _) in o.iter().enumerate() {
            let mut rng = replicate_rng(seed, (first + b) as u64);
            for j in 0..m {
                z[j * BATCH + b] = rng.sample(StandardNormal);
            }
        }
        factor.sup_abs_batch(&z, o.len(), o);
        Ok(())
    });
    out
}

/// Factor `cov` and draw `replicates` samples of `max_i |Z_i|`,
/// `Z ~ N(0, cov)`. Returns the draws in replicate order and the jitter used.
pub fn sample_sup_abs(
    cov: &DMatrix<f64>,
    replicates: usize,
    seed: u64,
    exec: Execution,
) -> Result<(Vec<f64>, f64)> {
    let factor = PackedFactor::new(cov)?;
    Ok((sample_sup_abs_factored(&factor, replicates, seed, exec), factor.jitter()))
}

fn sorted(mut draws: Vec<f64>) -> Vec<f64> {
    draws.sort_by(f64::total_cmp);
    draws
}

fn check_replicates(replicates: usize) -> Result<()> {
    if replicates == 0 {
        return Err(Error::Domain("at least one replicate is required".into()));
    }
    Ok(())
}

/// Null distribution from the limiting process on an `m`-point grid.
pub fn simulate_gp(
    delta: f64,
    grid_size: usize,
    replicates: usize,
    seed: u64,
    exec: Execution,
) -> Result<NullDistribution> {
    check_replicates(replicates)?;
    let g = grid(delta, grid_size)?;
    let (draws, jitter) = sample_sup_abs(&build_covariance_matrix(&g)?, replicates, seed, exec)?;
    Ok(NullDistribution {
        delta,
        grid: g,
        draws: sorted(draws),
        seed,
        method: NullMethod::GpGrid,
        n_sim: None,
        jitter,
    })
}

/// Null distribution of `J_max,δ` itself for iid standard-normal series of
/// length `n`. `delta = 0` gives the untrimmed statistic.
pub fn simulate_finite_n(
    n: usize,
    delta: f64,
    replicates: usize,
    seed: u64,
    exec: Execution,
) -> Result<NullDistribution> {
    if n < 50 {
        return Err(Error::Domain(format!("finite-n simulation needs n >= 50, got {n}")));
    }
    check_replicates(replicates)?;
    let profiler = Profiler::new(n, delta)?;
    let mut out = vec![0.0; replicates];
    for_chunks(&mut out, 8, exec, |first, o| {
        let mut x = vec![0.0; n];
        for (b, slot) in o.iter_mut().enumerate() {
            let mut rng = replicate_rng(seed, (first + b) as u64);
            x.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            *slot = profiler.j_max(&x)?;
        }
        Ok(())
    })?;
    let (k_lo, k_hi) = profiler.k_range();
    Ok(NullDistribution {
        delta,
        grid: (k_lo..=k_hi).map(|k| k as f64 / n as f64).collect(),
        draws: sorted(out),
        seed,
        method: NullMethod::FiniteN,
        n_sim: Some(n),
        jitter: 0.0,
    })
}

/// Everything that determines a simulated null distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NullSpec {
    pub method: NullMethod,
    pub delta: f64,
    /// Grid size for `GpGrid`; ignored for `FiniteN`.
    pub grid_size: usize,
    pub replicates: usize,
    pub seed: u64,
    /// Series length for `FiniteN`.
    pub n_sim: Option<usize>,
}

impl NullSpec {
    pub fn gp(delta: f64, grid_size: usize, replicates: usize, seed: u64) -> Self {
        Self {
            method: NullMethod::GpGrid,
            delta,
            grid_size,
            replicates,
            seed,
            n_sim: None,
        }
    }

    pub fn finite_n(n: usize, delta: f64, replicates: usize, seed: u64) -> Self {
        Self {
            method: NullMethod::FiniteN,
            delta,
            grid_size: 0,
            replicates,
            seed,
            n_sim: Some(n),
        }
    }

    pub fn simulate(&self, exec: Execution) -> Result<NullDistribution> {
        match self.method {
            NullMethod::GpGrid => {
                simulate_gp(self.delta, self.grid_size, self.replicates, self.seed, exec)
            }
            NullMethod::FiniteN => {
                let n = self
                    .n_sim
                    .ok_or_else(|| Error::InvalidConfig("finite-n method needs n".into()))?;
                simulate_finite_n(n, self.delta, self.replicates, self.seed, exec)
            }
        }
    }
}

/// Type-7 empirical quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("quantile level must lie in (0, 1), got {q}")));
    }
    if sorted.is_empty() {
        return Err(Error::Domain("no draws".into()));
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

impl NullDistribution {
    pub fn replicates(&self) -> usize {
        self.draws.len()
    }

    pub fn quantile(&self, q: f64) -> Result<f64> {
        quantile_sorted(&self.draws, q)
    }

    /// `(#{draws >= statistic} + 1) / (R + 1)`.
    pub fn p_value(&self, statistic: f64) -> f64 {
        let below = self.draws.partition_point(|&d| d < statistic);
        (self.draws.len() - below + 1) as f64 / (self.draws.len() + 1) as f64
    }

    /// Bootstrap standard errors of the type-7 quantiles at `levels`, from
    /// [`BOOTSTRAP_RESAMPLES`] resamples of the draws.
    pub fn quantile_standard_errors(&self, levels: &[f64]) -> Result<Vec<f64>> {
        for &q in levels {
            self.quantile(q)?;
        }
        let r = self.draws.len();
        let mut rng = replicate_rng(self.seed, BOOTSTRAP_STREAM);
        let mut counts = vec![0u32; r];
        let mut samples = vec![Vec::with_capacity(BOOTSTRAP_RESAMPLES); levels.len()];
        for _ in 0..BOOTSTRAP_RESAMPLES {
            counts.fill(0);
            for _ in 0..r {
                counts[rng.gen_range(0..r)] += 1;
            }
            for (q, s) in levels.iter().zip(samples.iter_mut()) {
                s.push(self.resampled_quantile(&counts, *q));
            }
        }
        Ok(samples
            .iter()
            .map(|s| {
                let mean = s.iter().sum::<f64>() / s.len() as f64;
                let ss = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
                (ss / (s.len() - 1) as f64).sqrt()
            })
            .collect())
    }

    /// Type-7 quantile of the multiset holding `counts[i]` copies of
    /// `draws[i]`.
    fn resampled_quantile(&self, counts: &[u32], q: f64) -> f64 {
        let r = self.draws.len();
        let h = (r - 1) as f64 * q;
        let lo = h.floor() as usize;
        let order_stat = |pos: usize| {
            let mut seen = 0usize;
            for (i, &c) in counts.iter().enumerate() {
                seen += c as usize;
                if seen > pos {
                    return self.draws[i];
                }
            }
            self.draws[r - 1]
        };
        let a = order_stat(lo);
        let b = order_stat((lo + 1).min(r - 1));
        a + (h - lo as f64) * (b - a)
    }

    pub fn table(&self, levels: &[f64]) -> Result<QuantileTable> {
        Ok(QuantileTable {
            delta: self.delta,
            method: self.method,
            levels: levels.to_vec(),
            values: levels.iter().map(|&q| self.quantile(q)).collect::<Result<_>>()?,
            standard_errors: self.quantile_standard_errors(levels)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    pub delta: f64,
    pub method: NullMethod,
    pub levels: Vec<f64>,
    pub values: Vec<f64>,
    pub standard_errors: Vec<f64>,
}
