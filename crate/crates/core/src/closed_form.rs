//! Exact solution of the three normal equations of the joinpoint model at a
//! fixed changepoint `k`.
//!
//! With `V1 = Σ X_t`, `V2 = Σ t X_t`, `V3 = Σ_{t>k} (t-k) X_t` the normal
//! equations read
//!
//! ```text
//! V1 = n μ + a α + b β
//! V2 = a μ + c α + d β
//! V3 = b μ + d α + e β
//! ```
//!
//! where `a..e` are the [`DesignSums`]. The production fit solves this 3×3
//! system directly after diagonal rescaling; the eliminated closed form for
//! `β` and the data-independent [`BetaCoefficients`] are kept as alternates
//! and cross-checked in tests.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;

use crate::error::{Error, Result};
use crate::series::{JoinpointFit, TimeSeries};

/// Largest `n` accepted by [`design_sums`]. All five sums then stay below
/// `2^63`, leaving headroom in `i128` for the products formed downstream.
pub const MAX_DESIGN_N: usize = 1_000_000;

/// `a = Σt`, `b = Σ_{t>k}(t-k)`, `c = Σt²`, `d = Σ_{t>k}(t-k)t`,
/// `e = Σ_{t>k}(t-k)²`, all over `t = 1..=n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DesignSums {
    pub n: i128,
    pub a: i128,
    pub b: i128,
    pub c: i128,
    pub d: i128,
    pub e: i128,
}

pub fn design_sums(n: usize, k: usize) -> Result<DesignSums> {
    if n > MAX_DESIGN_N {
        return Err(Error::Overflow {
            n,
            max: MAX_DESIGN_N,
        });
    }
    if k < 1 || k > n {
        return Err(Error::Domain(format!("k = {k} outside 1..={n}")));
    }
    let nn = n as i128;
    let m = (n - k) as i128;
    let kk = k as i128;
    Ok(DesignSums {
        n: nn,
        a: nn * (nn + 1) / 2,
        b: m * (m + 1) / 2,
        c: nn * (nn + 1) * (2 * nn + 1) / 6,
        d: m * (m + 1) * (2 * nn + kk + 1) / 6,
        e: m * (m + 1) * (2 * m + 1) / 6,
    })
}

impl DesignSums {
    /// The 3×3 normal matrix `XᵀX` for the design `[1, t, (t-k)⁺]`.
    pub fn normal_matrix(&self) -> [[f64; 3]; 3] {
        let (n, a, b, c, d, e) = self.as_f64();
        [[n, a, b], [a, c, d], [b, d, e]]
    }

    fn as_f64(&self) -> (f64, f64, f64, f64, f64, f64) {
        (
            self.n as f64,
            self.a as f64,
            self.b as f64,
            self.c as f64,
            self.d as f64,
            self.e as f64,
        )
    }

    fn big(&self) -> [BigInt; 6] {
        [self.n, self.a, self.b, self.c, self.d, self.e].map(BigInt::from)
    }
}

/// `(V1, V2, V3)` for the series at changepoint `k`.
pub fn moment_statistics(series: &TimeSeries, k: usize) -> Result<(f64, f64, f64)> {
    let n = series.len();
    if k < 1 || k >= n {
        return Err(Error::Domain(format!("k = {k} outside 1..{n}")));
    }
    Ok(moments_of(series.values(), k))
}

fn moments_of(x: &[f64], k: usize) -> (f64, f64, f64) {
    let mut v1 = 0.0;
    let mut v2 = 0.0;
    let mut v3 = 0.0;
    for (i, &xt) in x.iter().enumerate() {
        let t = (i + 1) as f64;
        v1 += xt;
        v2 += t * xt;
        if i + 1 > k {
            v3 += (t - k as f64) * xt;
        }
    }
    (v1, v2, v3)
}

fn check_candidate(n: usize, k: usize) -> Result<()> {
    if n < 4 || k < 2 || k > n - 2 {
        return Err(Error::Domain(format!(
            "changepoint k = {k} outside 2..={}",
            n.saturating_sub(2)
        )));
    }
    Ok(())
}

/// Solves `A x = y` for a symmetric 3×3 system with partial pivoting.
///
/// Rows and columns are rescaled by `1/sqrt(A_ii)` first so that the time
/// columns (entries up to `n³`) do not dominate pivot selection.
pub(crate) fn solve3(a: [[f64; 3]; 3], y: [f64; 3]) -> Option<[f64; 3]> {
    let s: [f64; 3] = std::array::from_fn(|i| {
        let d = a[i][i];
        if d > 0.0 {
            1.0 / d.sqrt()
        } else {
            1.0
        }
    });
    let mut m = [[0.0; 4]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = a[i][j] * s[i] * s[j];
        }
        m[i][3] = y[i] * s[i];
    }
    for col in 0..3 {
        let piv = (col..3)
            .max_by(|&p, &q| m[p][col].abs().total_cmp(&m[q][col].abs()))
            .unwrap();
        if m[piv][col].abs() < 1e-13 {
            return None;
        }
        m.swap(col, piv);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            let (top, bottom) = m.split_at_mut(row);
            for (dst, src) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                *dst -= f * src;
            }
        }
    }
    let mut z = [0.0; 3];
    for i in (0..3).rev() {
        let mut acc = m[i][3];
        for j in i + 1..3 {
            acc -= m[i][j] * z[j];
        }
        z[i] = acc / m[i][i];
    }
    Some([z[0] * s[0], z[1] * s[1], z[2] * s[2]])
}

/// Least-squares joinpoint fit at changepoint `k` (`2 <= k <= n-2`).
///
/// The series is centred before forming the moments; the intercept column
/// absorbs the shift exactly, and centring keeps `V1..V3` free of a large
/// common offset.
pub fn fit_joinpoint(series: &TimeSeries, k: usize) -> Result<JoinpointFit> {
    let n = series.len();
    check_candidate(n, k)?;
    let x = series.values();
    let mean = x.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let (v1, v2, v3) = moments_of(&centred, k);
    let sums = design_sums(n, k)?;
    let a = sums.normal_matrix();
    let mut theta = solve3(a, [v1, v2, v3]).ok_or(Error::SingularSystem { n, k })?;
    // One step of iterative refinement on the residuals.
    let resid: Vec<f64> = centred
        .iter()
        .enumerate()
        .map(|(i, &xt)| {
            let t = (i + 1) as f64;
            xt - theta[0] - theta[1] * t - theta[2] * (t - k as f64).max(0.0)
        })
        .collect();
    let (r1, r2, r3) = moments_of(&resid, k);
    let step = solve3(a, [r1, r2, r3]).ok_or(Error::SingularSystem { n, k })?;
    for (c, s) in theta.iter_mut().zip(step) {
        *c += s;
    }
    let [mu, alpha, beta] = theta;

    let mut fit = JoinpointFit {
        n,
        k,
        mu_hat: mu + mean,
        alpha_hat: alpha,
        beta_hat: beta,
        sse: 0.0,
        sigma2_hat: 0.0,
    };
    fit.sse = x
        .iter()
        .enumerate()
        .map(|(i, &xt)| {
            let r = xt - fit.mean_at((i + 1) as f64);
            r * r
        })
        .sum();
    fit.sigma2_hat = fit.sse / (n - 3) as f64;
    Ok(fit)
}

/// `(μ, α, β)` by successive elimination: `β` from the eliminated closed
/// form, then `α = (nV2 - aV1 - β(nd - ab)) / (nc - a²)` and
/// `μ = (V1 - aα - bβ) / n`.
///
/// Mathematically identical to [`fit_joinpoint`]; it loses more precision for
/// large `n` and is kept as a cross-check.
pub fn fit_by_elimination(series: &TimeSeries, k: usize) -> Result<(f64, f64, f64)> {
    let n = series.len();
    check_candidate(n, k)?;
    let (v1, v2, v3) = moments_of(series.values(), k);
    let (nf, a, b, c, d, e) = design_sums(n, k)?.as_f64();
    let sxx = nf * c - a * a;
    let sxz = nf * d - a * b;
    let szz = nf * e - b * b;
    let den = szz * sxx - sxz * sxz;
    if den == 0.0 {
        return Err(Error::SingularSystem { n, k });
    }
    let beta = ((nf * v3 - b * v1) * sxx - (nf * v2 - a * v1) * sxz) / den;
    let alpha = (nf * v2 - a * v1 - beta * sxz) / sxx;
    let mu = (v1 - a * alpha - b * beta) / nf;
    Ok((mu, alpha, beta))
}

/// Data-independent weights with `β̂_k = p1 V1 + p2 V2 + p3 V3`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetaCoefficients {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    /// `D = (ab - dn)² - (b² - ne)(a² - nc)`.
    pub denominator: f64,
}

impl BetaCoefficients {
    pub fn apply(&self, v: (f64, f64, f64)) -> f64 {
        self.p1 * v.0 + self.p2 * v.1 + self.p3 * v.2
    }
}

/// Exact `(p1, p2, p3, D)` as rationals.
pub(crate) fn beta_coefficients_exact(
    sums: &DesignSums,
) -> Option<([BigRational; 3], BigInt)> {
    let [n, a, b, c, d, e] = sums.big();
    let ab_dn = &a * &b - &d * &n;
    let den = &ab_dn * &ab_dn - (&b * &b - &n * &e) * (&a * &a - &n * &c);
    if den == BigInt::from(0) {
        return None;
    }
    let nums = [
        (&b * &c - &a * &d) * &n,
        (&d * &n - &a * &b) * &n,
        (&a * &a - &c * &n) * &n,
    ];
    let p = nums.map(|num| BigRational::new(num, den.clone()));
    Some((p, den))
}

pub fn beta_coefficients(n: usize, k: usize) -> Result<BetaCoefficients> {
    check_candidate(n, k)?;
    let sums = design_sums(n, k)?;
    let ([p1, p2, p3], den) = beta_coefficients_exact(&sums).ok_or(Error::SingularSystem { n, k })?;
    let f = |r: &BigRational| r.to_f64().unwrap_or(f64::NAN);
    Ok(BetaCoefficients {
        p1: f(&p1),
        p2: f(&p2),
        p3: f(&p3),
        denominator: den.to_f64().unwrap_or(f64::INFINITY),
    })
}
