//! Exact rational evaluation of the slope-estimator moments (unit noise
//! variance). Intended for validation at moderate `n`; cost grows with the
//! size of the integers involved.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;

use super::polynomial;
use crate::closed_form::{beta_coefficients_exact, design_sums, DesignSums};
use crate::error::{Error, Result};

/// Design sums `(n, a, b, c, d, e)` for one changepoint, as big integers.
///
/// Fields are public so callers can study perturbed designs.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactSums {
    pub n: BigInt,
    pub a: BigInt,
    pub b: BigInt,
    pub c: BigInt,
    pub d: BigInt,
    pub e: BigInt,
}

impl From<DesignSums> for ExactSums {
    fn from(s: DesignSums) -> Self {
        Self {
            n: s.n.into(),
            a: s.a.into(),
            b: s.b.into(),
            c: s.c.into(),
            d: s.d.into(),
            e: s.e.into(),
        }
    }
}

impl ExactSums {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        Ok(design_sums(n, k)?.into())
    }

    /// `(p1, p2, p3)` with `β̂ = p·V`.
    pub fn p_vector(&self) -> Option<[BigRational; 3]> {
        let (n, a, b, c, d, e) = (&self.n, &self.a, &self.b, &self.c, &self.d, &self.e);
        let ab_dn = a * b - d * n;
        let den = &ab_dn * &ab_dn - (b * b - n * e) * (a * a - n * c);
        if den.is_zero() {
            return None;
        }
        Some(
            [
                (b * c - a * d) * n,
                (d * n - a * b) * n,
                (a * a - c * n) * n,
            ]
            .map(|num| BigRational::new(num, den.clone())),
        )
    }
}

fn ratio(x: &BigInt) -> BigRational {
    BigRational::from_integer(x.clone())
}

/// `Var(β̂_k)/σ²` from the p-vector: `n p1² + c p2² + e p3² + 2a p1p2 +
/// 2b p1p3 + 2d p2p3`.
pub fn var_p_vector(s: &ExactSums) -> Option<BigRational> {
    let [p1, p2, p3] = s.p_vector()?;
    let two = BigRational::from_integer(2.into());
    Some(
        ratio(&s.n) * &p1 * &p1
            + ratio(&s.c) * &p2 * &p2
            + ratio(&s.e) * &p3 * &p3
            + &two * ratio(&s.a) * &p1 * &p2
            + &two * ratio(&s.b) * &p1 * &p3
            + &two * ratio(&s.d) * &p2 * &p3,
    )
}

/// `Cov(V3(k), V3(l))/σ² = Σ_{s>l}(s-k)(s-l)` for `k <= l`, in closed form.
pub fn cov_v3(n: usize, k: usize, l: usize) -> BigRational {
    let (n, k, l) = (BigInt::from(n), BigInt::from(k), BigInt::from(l));
    let m = &n - &l;
    let base = &m * (&m + 1);
    BigRational::new(&base * (&m * 2 + 1), 6.into()) + BigRational::new(base * (&l - &k), 2.into())
}

/// `Cov(β̂_k, β̂_l)/σ²` as `Σ_ij p_i(k) q_j(l) Cov(V_i, W_j)` with the nine
/// closed-form covariances. `v3_cov` is `Cov(V3, W3)/σ²`.
pub fn cov_nine_term(
    sk: &ExactSums,
    sl: &ExactSums,
    v3_cov: &BigRational,
) -> Option<BigRational> {
    let p = sk.p_vector()?;
    let q = sl.p_vector()?;
    let cov: [[BigRational; 3]; 3] = [
        [ratio(&sk.n), ratio(&sk.a), ratio(&sl.b)],
        [ratio(&sk.a), ratio(&sk.c), ratio(&sl.d)],
        [ratio(&sk.b), ratio(&sk.d), v3_cov.clone()],
    ];
    let mut total = BigRational::zero();
    for (i, pi) in p.iter().enumerate() {
        for (j, qj) in q.iter().enumerate() {
            total += pi * qj * &cov[i][j];
        }
    }
    Some(total)
}

/// `[(XᵀX)⁻¹]_33 = (nc - a²) / det(XᵀX)`.
pub fn var_inverse(s: &ExactSums) -> Option<BigRational> {
    let (n, a, b, c, d, e) = (&s.n, &s.a, &s.b, &s.c, &s.d, &s.e);
    let det = n * (c * e - d * d) - a * (a * e - b * d) + b * (a * d - b * c);
    if det.is_zero() {
        return None;
    }
    Some(BigRational::new(n * c - a * a, det))
}

fn check(n: usize, k: usize, l: usize) -> Result<()> {
    if k > l {
        return Err(Error::ArgumentOrder { k, l });
    }
    if n < 4 || k < 2 || l > n - 2 {
        return Err(Error::Domain(format!("need 2 <= k <= l <= n-2, got n={n} k={k} l={l}")));
    }
    Ok(())
}

/// Exact `Var(β̂_k)/σ²` via the p-vector.
pub fn var_beta(n: usize, k: usize) -> Result<BigRational> {
    check(n, k, k)?;
    var_p_vector(&ExactSums::new(n, k)?).ok_or(Error::SingularSystem { n, k })
}

/// Exact `Cov(β̂_k, β̂_l)/σ²` via the nine-term expansion.
pub fn cov_beta(n: usize, k: usize, l: usize) -> Result<BigRational> {
    check(n, k, l)?;
    cov_nine_term(&ExactSums::new(n, k)?, &ExactSums::new(n, l)?, &cov_v3(n, k, l))
        .ok_or(Error::SingularSystem { n, k })
}

/// Exact value of the factored closed form used by [`super::var_beta`].
pub fn var_beta_factored(n: usize, k: usize) -> Result<BigRational> {
    check(n, k, k)?;
    let (n, k) = (BigInt::from(n), BigInt::from(k));
    let num = BigInt::from(6) * &n * (&n * &n - 1);
    let den = &k * (&k - 1) * (&n - &k) * (&n - &k + 1) * super::factored_r(&n, &k);
    Ok(BigRational::new(num, den))
}

/// Exact value of the factored closed form used by [`super::cov_beta`].
pub fn cov_beta_factored(n: usize, k: usize, l: usize) -> Result<BigRational> {
    check(n, k, l)?;
    let (n, k, l) = (BigInt::from(n), BigInt::from(k), BigInt::from(l));
    let g = super::factored_g(&n, &k, &l);
    let num = BigInt::from(6) * &n * (&n * &n - 1) * g;
    let den = &l
        * (&l - 1)
        * (&n - &k)
        * (&n - &k + 1)
        * super::factored_r(&n, &k)
        * super::factored_r(&n, &l);
    Ok(BigRational::new(num, den))
}

/// Closed-form variance polynomial ratio, exactly.
pub fn var_beta_polynomial(n: usize, k: usize) -> Result<BigRational> {
    check(n, k, k)?;
    Ok(polynomial::var_ratio_exact(n, k))
}

/// Closed-form covariance polynomial ratio, exactly.
pub fn cov_beta_polynomial(n: usize, k: usize, l: usize) -> Result<BigRational> {
    check(n, k, l)?;
    Ok(polynomial::cov_ratio_exact(n, k, l))
}

/// Exact p-vector through the production closed-form module, for
/// cross-checking [`ExactSums::p_vector`].
pub fn p_vector(n: usize, k: usize) -> Result<[BigRational; 3]> {
    let sums = design_sums(n, k)?;
    beta_coefficients_exact(&sums)
        .map(|(p, _)| p)
        .ok_or(Error::SingularSystem { n, k })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn v3_covariance_matches_summation() {
        for (n, k, l) in [(10, 3, 6), (30, 8, 20), (17, 5, 5), (40, 2, 38)] {
            let direct: i64 = ((l + 1)..=n).map(|s| ((s - k) * (s - l)) as i64).sum();
            assert_eq!(cov_v3(n, k, l), BigRational::from_integer(direct.into()));
        }
    }

    #[test]
    fn p_vector_routes_agree() {
        for k in 2..=18 {
            let a = ExactSums::new(20, k).unwrap().p_vector().unwrap();
            assert_eq!(a, p_vector(20, k).unwrap());
        }
    }

    #[test]
    fn three_exact_variance_routes_agree() {
        for n in 4..=40 {
            for k in 2..=n - 2 {
                let s = ExactSums::new(n, k).unwrap();
                let pv = var_p_vector(&s).unwrap();
                assert_eq!(pv, var_inverse(&s).unwrap(), "n={n} k={k}");
                assert_eq!(pv, var_beta_factored(n, k).unwrap(), "n={n} k={k}");
            }
        }
    }

    #[test]
    fn nine_term_diagonal_is_variance() {
        for k in 2..=28 {
            assert_eq!(cov_beta(30, k, k).unwrap(), var_beta(30, k).unwrap());
        }
    }

    #[test]
    fn factored_covariance_is_exact() {
        for n in [6, 11, 25] {
            for k in 2..=n - 2 {
                for l in k..=n - 2 {
                    assert_eq!(
                        cov_beta(n, k, l).unwrap(),
                        cov_beta_factored(n, k, l).unwrap(),
                        "n={n} k={k} l={l}"
                    );
                }
            }
        }
    }

    #[test]
    fn argument_checks() {
        assert!(matches!(cov_beta(20, 9, 4), Err(Error::ArgumentOrder { .. })));
        assert!(cov_beta(20, 1, 4).is_err());
    }
}
