//! Finite-sample variance and covariance of the slope-change estimator `β̂_k`
//! under iid noise, their limits, and the covariance of the limiting
//! Gaussian process.
//!
//! Three routes are provided:
//!
//! * **factored** (production): the exact closed forms
//!   `Var(β̂_k)/σ² = 6n(n²-1) / [k(k-1)(n-k)(n-k+1) R_k]` and
//!   `Cov(β̂_k, β̂_l)/σ² = 6n(n²-1) G / [l(l-1)(n-k)(n-k+1) R_k R_l]`
//!   with `R_m = 2m(n-m+1) - n + 1` and
//!   `G = 3ln + l + k - n + 1 - 2kl - kn` (`k <= l`). Every factor is a small
//!   integer, so the floating-point value carries only a few ulps of error.
//! * **matrix oracle**: the p-vector / nine-covariance expansion evaluated in
//!   exact rational arithmetic ([`exact`]) and rounded once.
//! * **polynomial**: the closed polynomial `V_num/V_dem` and `C_num/C_dem`
//!   ([`polynomial`]), which only agree with the other two asymptotically.

pub mod exact;
mod polynomial;

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentMethod {
    Factored,
    MatrixOracle,
    Polynomial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentResult {
    pub value: f64,
    pub method: MomentMethod,
    pub n: usize,
    pub k: usize,
    pub l: Option<usize>,
    pub sigma2: f64,
}

pub(crate) fn factored_r(n: &BigInt, m: &BigInt) -> BigInt {
    BigInt::from(2) * m * (n - m + 1) - n + 1
}

pub(crate) fn factored_g(n: &BigInt, k: &BigInt, l: &BigInt) -> BigInt {
    BigInt::from(3) * l * n + l + k - n + 1 - BigInt::from(2) * k * l - k * n
}

fn r_f64(n: usize, m: usize) -> f64 {
    let (n, m) = (n as i128, m as i128);
    (2 * m * (n - m + 1) - n + 1) as f64
}

fn g_f64(n: usize, k: usize, l: usize) -> f64 {
    let (n, k, l) = (n as i128, k as i128, l as i128);
    (3 * l * n + l + k - n + 1 - 2 * k * l - k * n) as f64
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if n < 4 || k < 2 || k > n - 2 {
        return Err(Error::Domain(format!(
            "k = {k} outside 2..={}",
            n.saturating_sub(2)
        )));
    }
    Ok(())
}

fn check_kl(n: usize, k: usize, l: usize) -> Result<()> {
    if k > l {
        return Err(Error::ArgumentOrder { k, l });
    }
    check_k(n, k)?;
    check_k(n, l)
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::Domain(format!("sigma2 must be positive, got {sigma2}")));
    }
    Ok(())
}

/// `[(XᵀX)⁻¹]_33` for the design `[1, t, (t-k)⁺]`, i.e. `Var(β̂_k)/σ²`.
pub(crate) fn unit_variance(n: usize, k: usize) -> f64 {
    let nf = n as f64;
    let kf = k as f64;
    let num = 6.0 * nf * (nf - 1.0) * (nf + 1.0);
    let den = kf * (kf - 1.0) * (nf - kf) * (nf - kf + 1.0) * r_f64(n, k);
    num / den
}

/// Production `Var(β̂_k) = σ² [(XᵀX)⁻¹]_33` (factored closed form).
pub fn var_beta(n: usize, k: usize, sigma2: f64) -> Result<f64> {
    check_k(n, k)?;
    check_sigma2(sigma2)?;
    Ok(sigma2 * unit_variance(n, k))
}

/// Production `Cov(β̂_k, β̂_l)` for `k <= l` (factored closed form).
pub fn cov_beta(n: usize, k: usize, l: usize, sigma2: f64) -> Result<f64> {
    check_kl(n, k, l)?;
    check_sigma2(sigma2)?;
    let nf = n as f64;
    let (kf, lf) = (k as f64, l as f64);
    let num = 6.0 * nf * (nf - 1.0) * (nf + 1.0) * g_f64(n, k, l);
    let den = lf * (lf - 1.0) * (nf - kf) * (nf - kf + 1.0) * r_f64(n, k) * r_f64(n, l);
    Ok(sigma2 * num / den)
}

/// Closed-form polynomial `σ² V_num/V_dem`, evaluated in normalised variables.
pub fn var_beta_polynomial(n: usize, k: usize, sigma2: f64) -> Result<f64> {
    check_k(n, k)?;
    check_sigma2(sigma2)?;
    Ok(sigma2 * polynomial::var_ratio(n, k)?)
}

/// Closed-form polynomial `σ² C_num/C_dem` for `k <= l`.
pub fn cov_beta_polynomial(n: usize, k: usize, l: usize, sigma2: f64) -> Result<f64> {
    check_kl(n, k, l)?;
    check_sigma2(sigma2)?;
    Ok(sigma2 * polynomial::cov_ratio(n, k, l)?)
}

fn rounded(r: num_rational::BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// `σ² (n p1² + c p2² + e p3² + 2a p1p2 + 2b p1p3 + 2d p2p3)`, evaluated
/// exactly and rounded once.
pub fn var_beta_oracle(n: usize, k: usize, sigma2: f64) -> Result<f64> {
    check_sigma2(sigma2)?;
    Ok(sigma2 * rounded(exact::var_beta(n, k)?))
}

/// `σ² [(XᵀX)⁻¹]_33` by exact adjugate inversion, rounded once.
pub fn var_beta_inverse(n: usize, k: usize, sigma2: f64) -> Result<f64> {
    check_k(n, k)?;
    check_sigma2(sigma2)?;
    let s = exact::ExactSums::new(n, k)?;
    exact::var_inverse(&s)
        .map(|v| sigma2 * rounded(v))
        .ok_or(Error::SingularSystem { n, k })
}

/// `σ² Σ_ij p_i(k) q_j(l) Cov(V_i, W_j)`, evaluated exactly and rounded once.
pub fn cov_beta_oracle(n: usize, k: usize, l: usize, sigma2: f64) -> Result<f64> {
    check_sigma2(sigma2)?;
    Ok(sigma2 * rounded(exact::cov_beta(n, k, l)?))
}

pub fn variance(n: usize, k: usize, sigma2: f64, method: MomentMethod) -> Result<MomentResult> {
    let value = match method {
        MomentMethod::Factored => var_beta(n, k, sigma2)?,
        MomentMethod::MatrixOracle => var_beta_oracle(n, k, sigma2)?,
        MomentMethod::Polynomial => var_beta_polynomial(n, k, sigma2)?,
    };
    Ok(MomentResult {
        value,
        method,
        n,
        k,
        l: None,
        sigma2,
    })
}

pub fn covariance(
    n: usize,
    k: usize,
    l: usize,
    sigma2: f64,
    method: MomentMethod,
) -> Result<MomentResult> {
    let value = match method {
        MomentMethod::Factored => cov_beta(n, k, l, sigma2)?,
        MomentMethod::MatrixOracle => cov_beta_oracle(n, k, l, sigma2)?,
        MomentMethod::Polynomial => cov_beta_polynomial(n, k, l, sigma2)?,
    };
    Ok(MomentResult {
        value,
        method,
        n,
        k,
        l: Some(l),
        sigma2,
    })
}

/// `Cov(J_k, J_l) = Cov(β̂_k, β̂_l) / sqrt(Var(β̂_k) Var(β̂_l))`; free of σ².
pub fn cov_j_finite(n: usize, k: usize, l: usize) -> Result<f64> {
    let c = cov_beta(n, k, l, 1.0)?;
    Ok(c / (unit_variance(n, k) * unit_variance(n, l)).sqrt())
}

/// Leading-order variance `3 / (n³ t³ (1-t)³)` with `t = k/n`.
pub fn asymptotic_var_beta(n: usize, k: usize, sigma2: f64) -> f64 {
    let nf = n as f64;
    let t = k as f64 / nf;
    sigma2 * 3.0 / (nf.powi(3) * (t * (1.0 - t)).powi(3))
}

/// Covariance of the limiting process for `0 < t <= s < 1`:
/// `½ (3s - t - 2st) / (s(1-t)) · sqrt(t(1-s) / (s(1-t)))`.
pub fn cov_g(t: f64, s: f64) -> Result<f64> {
    if !(t > 0.0 && t < 1.0 && s > 0.0 && s < 1.0) {
        return Err(Error::Domain(format!("(t, s) = ({t}, {s}) outside (0,1)²")));
    }
    if t > s {
        return Err(Error::Domain(format!("cov_g requires t <= s, got t={t} s={s}")));
    }
    if t == s {
        return Ok(1.0);
    }
    Ok(cov_g_prefactor(t, s) * (t * (1.0 - s) / (s * (1.0 - t))).sqrt())
}

/// [`cov_g`] with arguments in either order.
pub fn cov_g_sym(t: f64, s: f64) -> Result<f64> {
    if t <= s {
        cov_g(t, s)
    } else {
        cov_g(s, t)
    }
}

/// `((3/2)s - t/2 - st) / (s(1-t))`, bounded above by 3 on `0 < t <= s < 1`.
pub fn cov_g_prefactor(t: f64, s: f64) -> f64 {
    (1.5 * s - 0.5 * t - s * t) / (s * (1.0 - t))
}
