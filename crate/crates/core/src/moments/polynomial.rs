//! Closed-form variance and covariance polynomials of the slope-change
//! estimator, kept as a reference parameterisation.
//!
//! Coefficients are stored as integers over a common denominator
//! (`V_NUM`, `C_NUM` over 864; `V_DEM`, `C_DEM` over 5184). Each entry is
//! `(coefficient, power of k, [power of l,] power of n)`.
//!
//! These polynomials do NOT equal the exact finite-sample moments of the
//! joinpoint estimator. They coincide exactly with the moments obtained when
//! `d = Σ_{t>k}(t-k)t` is replaced by `(n-k)(n-k+1)(2n+k-1)/6`, and they
//! converge to the true moments as `n → ∞`. The test-suite pins both facts.

use num_bigint::BigInt;
use num_rational::BigRational;

use crate::error::{Error, Result};

pub(crate) type Term2 = (i64, u32, u32);
pub(crate) type Term3 = (i64, u32, u32, u32);

/// Ratio `(5184 / 864)` between the denominators of the numerator and
/// denominator tables.
const DENOMINATOR_RATIO: f64 = 6.0;

/// Relative cancellation threshold for the denominators.
const INSTABILITY_THRESHOLD: f64 = 1e-12;

/// Polynomial value divided by `n^degree`, evaluated in `u = k/n`, `v = l/n`
/// and `h = 1/n` (Horner in `h`). Returns the value and the sum of absolute
/// term magnitudes, both on the same scale.
fn normalized(terms: impl Iterator<Item = (i64, u32, u32, u32)> + Clone, u: f64, v: f64, h: f64) -> (f64, f64, u32) {
    let degree = terms.clone().map(|(_, i, j, p)| i + j + p).max().unwrap_or(0);
    let mut buckets = [0.0f64; 20];
    let mut magnitude = 0.0;
    for (c, i, j, p) in terms {
        let slot = (degree - i - j - p) as usize;
        let term = c as f64 * u.powi(i as i32) * v.powi(j as i32);
        buckets[slot] += term;
        magnitude += (term * h.powi(slot as i32)).abs();
    }
    let value = buckets.iter().rev().fold(0.0, |acc, b| acc * h + b);
    (value, magnitude, degree)
}

fn terms2(t: &'static [Term2]) -> impl Iterator<Item = (i64, u32, u32, u32)> + Clone {
    t.iter().map(|&(c, i, p)| (c, i, 0, p))
}

fn terms3(t: &'static [Term3]) -> impl Iterator<Item = (i64, u32, u32, u32)> + Clone {
    t.iter().copied()
}

/// `σ² V_num(n, k) / V_dem(n, k)` in floating point.
pub(crate) fn var_ratio(n: usize, k: usize) -> Result<f64> {
    let nf = n as f64;
    let (u, h) = (k as f64 / nf, 1.0 / nf);
    let (num, _, dn) = normalized(terms2(V_NUM), u, 0.0, h);
    let (den, mag, dd) = normalized(terms2(V_DEM), u, 0.0, h);
    if den.abs() <= INSTABILITY_THRESHOLD * mag {
        return Err(Error::NumericalInstability { n, k, l: None });
    }
    Ok(DENOMINATOR_RATIO * num / den * nf.powi(dn as i32 - dd as i32))
}

/// `C_num(n, k, l) / C_dem(n, k, l)` in floating point.
pub(crate) fn cov_ratio(n: usize, k: usize, l: usize) -> Result<f64> {
    let nf = n as f64;
    let (u, v, h) = (k as f64 / nf, l as f64 / nf, 1.0 / nf);
    let (num, _, dn) = normalized(terms3(C_NUM), u, v, h);
    let (den, mag, dd) = normalized(terms3(C_DEM), u, v, h);
    if den.abs() <= INSTABILITY_THRESHOLD * mag {
        return Err(Error::NumericalInstability { n, k, l: Some(l) });
    }
    Ok(DENOMINATOR_RATIO * num / den * nf.powi(dn as i32 - dd as i32))
}

fn exact_eval(terms: impl Iterator<Item = (i64, u32, u32, u32)>, k: &BigInt, l: &BigInt, n: &BigInt) -> BigInt {
    terms
        .map(|(c, i, j, p)| BigInt::from(c) * k.pow(i) * l.pow(j) * n.pow(p))
        .sum()
}

/// `V_num / V_dem` as an exact rational.
pub(crate) fn var_ratio_exact(n: usize, k: usize) -> BigRational {
    let (n, k) = (BigInt::from(n), BigInt::from(k));
    let zero = BigInt::from(0);
    let num = exact_eval(terms2(V_NUM), &k, &zero, &n) * BigInt::from(6);
    let den = exact_eval(terms2(V_DEM), &k, &zero, &n);
    BigRational::new(num, den)
}

/// `C_num / C_dem` as an exact rational.
pub(crate) fn cov_ratio_exact(n: usize, k: usize, l: usize) -> BigRational {
    let (n, k, l) = (BigInt::from(n), BigInt::from(k), BigInt::from(l));
    let num = exact_eval(terms3(C_NUM), &k, &l, &n) * BigInt::from(6);
    let den = exact_eval(terms3(C_DEM), &k, &l, &n);
    BigRational::new(num, den)
}

pub(crate) const V_NUM: &[Term2] = &[
    (11, 2, 5),
    (-32, 3, 5),
    (33, 4, 5),
    (-14, 5, 5),
    (2, 6, 5),
    (-23, 1, 6),
    (84, 2, 6),
    (-98, 3, 6),
    (43, 4, 6),
    (-6, 5, 6),
    (12, 0, 7),
    (-72, 1, 7),
    (91, 2, 7),
    (-12, 3, 7),
    (-27, 4, 7),
    (14, 5, 7),
    (-2, 6, 7),
    (20, 0, 8),
    (-18, 1, 8),
    (-73, 2, 8),
    (96, 3, 8),
    (-43, 4, 8),
    (6, 5, 8),
    (-8, 0, 9),
    (80, 1, 9),
    (-102, 2, 9),
    (44, 3, 9),
    (-6, 4, 9),
    (-24, 0, 10),
    (41, 1, 10),
    (-11, 2, 10),
    (2, 3, 10),
    (-4, 0, 11),
    (-8, 1, 11),
    (4, 0, 12),
];

pub(crate) const V_DEM: &[Term2] = &[
    (121, 4, 4),
    (-704, 5, 4),
    (1750, 6, 4),
    (-2420, 7, 4),
    (2029, 8, 4),
    (-1052, 9, 4),
    (328, 10, 4),
    (-56, 11, 4),
    (4, 12, 4),
    (-506, 3, 5),
    (3320, 4, 5),
    (-9050, 5, 5),
    (13406, 6, 5),
    (-11796, 7, 5),
    (6302, 8, 5),
    (-1992, 9, 5),
    (340, 10, 5),
    (-24, 11, 5),
    (793, 2, 6),
    (-6216, 3, 6),
    (19208, 4, 6),
    (-31026, 5, 6),
    (28848, 6, 6),
    (-15868, 7, 6),
    (5061, 8, 6),
    (-860, 9, 6),
    (60, 10, 6),
    (-552, 1, 7),
    (5768, 2, 7),
    (-21322, 3, 7),
    (38490, 4, 7),
    (-38010, 5, 7),
    (21350, 6, 7),
    (-6788, 7, 7),
    (1144, 8, 7),
    (-80, 9, 7),
    (144, 0, 8),
    (-2648, 1, 8),
    (12966, 2, 8),
    (-27138, 3, 8),
    (28332, 4, 8),
    (-15682, 5, 8),
    (4782, 6, 8),
    (-800, 7, 8),
    (60, 8, 8),
    (480, 0, 9),
    (-4048, 1, 9),
    (10464, 2, 9),
    (-10940, 3, 9),
    (4892, 4, 9),
    (-1116, 5, 9),
    (196, 6, 9),
    (-24, 7, 9),
    (496, 0, 10),
    (-1840, 1, 10),
    (1113, 2, 10),
    (1082, 3, 10),
    (-715, 4, 10),
    (100, 5, 10),
    (4, 6, 10),
    (64, 0, 11),
    (568, 1, 11),
    (-1384, 2, 11),
    (512, 3, 11),
    (-80, 4, 11),
    (-144, 0, 12),
    (392, 1, 12),
    (-24, 2, 12),
    (16, 3, 12),
    (-32, 0, 13),
    (-64, 1, 13),
    (16, 0, 14),
];

pub(crate) const C_NUM: &[Term3] = &[
    (11, 1, 1, 5),
    (-16, 1, 2, 5),
    (5, 1, 3, 5),
    (-16, 2, 1, 5),
    (23, 2, 2, 5),
    (-7, 2, 3, 5),
    (5, 3, 1, 5),
    (-7, 3, 2, 5),
    (2, 3, 3, 5),
    (-12, 0, 1, 6),
    (16, 0, 2, 6),
    (-4, 0, 3, 6),
    (-11, 1, 0, 6),
    (52, 1, 1, 6),
    (-46, 1, 2, 6),
    (11, 1, 3, 6),
    (16, 2, 0, 6),
    (-43, 2, 1, 6),
    (21, 2, 2, 6),
    (-3, 2, 3, 6),
    (-5, 3, 0, 6),
    (11, 3, 1, 6),
    (-3, 3, 2, 6),
    (12, 0, 0, 7),
    (-36, 0, 1, 7),
    (20, 0, 2, 7),
    (-4, 0, 3, 7),
    (-36, 1, 0, 7),
    (51, 1, 1, 7),
    (-2, 1, 2, 7),
    (-5, 1, 3, 7),
    (20, 2, 0, 7),
    (-2, 2, 1, 7),
    (-17, 2, 2, 7),
    (7, 2, 3, 7),
    (-4, 3, 0, 7),
    (-5, 3, 1, 7),
    (7, 3, 2, 7),
    (-2, 3, 3, 7),
    (20, 0, 0, 8),
    (-8, 0, 1, 8),
    (-12, 0, 2, 8),
    (4, 0, 3, 8),
    (-10, 1, 0, 8),
    (-49, 1, 1, 8),
    (46, 1, 2, 8),
    (-11, 1, 3, 8),
    (-12, 2, 0, 8),
    (40, 2, 1, 8),
    (-21, 2, 2, 8),
    (3, 2, 3, 8),
    (6, 3, 0, 8),
    (-11, 3, 1, 8),
    (3, 3, 2, 8),
    (-8, 0, 0, 9),
    (40, 0, 1, 9),
    (-20, 0, 2, 9),
    (4, 0, 3, 9),
    (40, 1, 0, 9),
    (-62, 1, 1, 9),
    (18, 1, 2, 9),
    (-20, 2, 0, 9),
    (18, 2, 1, 9),
    (-6, 2, 2, 9),
    (4, 3, 0, 9),
    (-24, 0, 0, 10),
    (20, 0, 1, 10),
    (-4, 0, 2, 10),
    (21, 1, 0, 10),
    (-3, 1, 1, 10),
    (-4, 2, 0, 10),
    (3, 2, 1, 10),
    (-1, 3, 0, 10),
    (-4, 0, 0, 11),
    (-4, 0, 1, 11),
    (-4, 1, 0, 11),
    (4, 0, 0, 12),
];

pub(crate) const C_DEM: &[Term3] = &[
    (121, 2, 2, 4),
    (-352, 2, 3, 4),
    (363, 2, 4, 4),
    (-154, 2, 5, 4),
    (22, 2, 6, 4),
    (-352, 3, 2, 4),
    (1024, 3, 3, 4),
    (-1056, 3, 4, 4),
    (448, 3, 5, 4),
    (-64, 3, 6, 4),
    (363, 4, 2, 4),
    (-1056, 4, 3, 4),
    (1089, 4, 4, 4),
    (-462, 4, 5, 4),
    (66, 4, 6, 4),
    (-154, 5, 2, 4),
    (448, 5, 3, 4),
    (-462, 5, 4, 4),
    (196, 5, 5, 4),
    (-28, 5, 6, 4),
    (22, 6, 2, 4),
    (-64, 6, 3, 4),
    (66, 6, 4, 4),
    (-28, 6, 5, 4),
    (4, 6, 6, 4),
    (-253, 1, 2, 5),
    (736, 1, 3, 5),
    (-759, 1, 4, 5),
    (322, 1, 5, 5),
    (-46, 1, 6, 5),
    (-253, 2, 1, 5),
    (1848, 2, 2, 5),
    (-3766, 2, 3, 5),
    (3245, 2, 4, 5),
    (-1242, 2, 5, 5),
    (168, 2, 6, 5),
    (736, 3, 1, 5),
    (-3766, 3, 2, 5),
    (6272, 3, 3, 5),
    (-4610, 3, 4, 5),
    (1564, 3, 5, 5),
    (-196, 3, 6, 5),
    (-759, 4, 1, 5),
    (3245, 4, 2, 5),
    (-4610, 4, 3, 5),
    (2838, 4, 4, 5),
    (-800, 4, 5, 5),
    (86, 4, 6, 5),
    (322, 5, 1, 5),
    (-1242, 5, 2, 5),
    (1564, 5, 3, 5),
    (-800, 5, 4, 5),
    (168, 5, 5, 5),
    (-12, 5, 6, 5),
    (-46, 6, 1, 5),
    (168, 6, 2, 5),
    (-196, 6, 3, 5),
    (86, 6, 4, 5),
    (-12, 6, 5, 5),
    (132, 0, 2, 6),
    (-384, 0, 3, 6),
    (396, 0, 4, 6),
    (-168, 0, 5, 6),
    (24, 0, 6, 6),
    (529, 1, 1, 6),
    (-2724, 1, 2, 6),
    (4558, 1, 3, 6),
    (-3365, 1, 4, 6),
    (1146, 1, 5, 6),
    (-144, 1, 6, 6),
    (132, 2, 0, 6),
    (-2724, 2, 1, 6),
    (9300, 2, 2, 6),
    (-11980, 2, 3, 6),
    (7044, 2, 4, 6),
    (-1932, 2, 5, 6),
    (204, 2, 6, 6),
    (-384, 3, 0, 6),
    (4558, 3, 1, 6),
    (-11980, 3, 2, 6),
    (12420, 3, 3, 6),
    (-5858, 3, 4, 6),
    (1204, 3, 5, 6),
    (-88, 3, 6, 6),
    (396, 4, 0, 6),
    (-3365, 4, 1, 6),
    (7044, 4, 2, 6),
    (-5858, 4, 3, 6),
    (2245, 4, 4, 6),
    (-342, 4, 5, 6),
    (12, 4, 6, 6),
    (-168, 5, 0, 6),
    (1146, 5, 1, 6),
    (-1932, 5, 2, 6),
    (1204, 5, 3, 6),
    (-342, 5, 4, 6),
    (36, 5, 5, 6),
    (24, 6, 0, 6),
    (-144, 6, 1, 6),
    (204, 6, 2, 6),
    (-88, 6, 3, 6),
    (12, 6, 4, 6),
    (-276, 0, 1, 7),
    (1228, 0, 2, 7),
    (-1816, 0, 3, 7),
    (1176, 0, 4, 7),
    (-352, 0, 5, 7),
    (40, 0, 6, 7),
    (-276, 1, 0, 7),
    (3312, 1, 1, 7),
    (-8845, 1, 2, 7),
    (9380, 1, 3, 7),
    (-4587, 1, 4, 7),
    (1006, 1, 5, 7),
    (-82, 1, 6, 7),
    (1228, 2, 0, 7),
    (-8845, 2, 1, 7),
    (17378, 2, 2, 7),
    (-14066, 2, 3, 7),
    (5253, 2, 4, 7),
    (-766, 2, 5, 7),
    (22, 2, 6, 7),
    (-1816, 3, 0, 7),
    (9380, 3, 1, 7),
    (-14066, 3, 2, 7),
    (8752, 3, 3, 7),
    (-2546, 3, 4, 7),
    (292, 3, 5, 7),
    (-4, 3, 6, 7),
    (1176, 4, 0, 7),
    (-4587, 4, 1, 7),
    (5253, 4, 2, 7),
    (-2546, 4, 3, 7),
    (516, 4, 4, 7),
    (-36, 4, 5, 7),
    (-352, 5, 0, 7),
    (1006, 5, 1, 7),
    (-766, 5, 2, 7),
    (292, 5, 3, 7),
    (-36, 5, 4, 7),
    (40, 6, 0, 7),
    (-82, 6, 1, 7),
    (22, 6, 2, 7),
    (-4, 6, 3, 7),
    (144, 0, 0, 8),
    (-1324, 0, 1, 8),
    (2948, 0, 2, 8),
    (-2616, 0, 3, 8),
    (1064, 0, 4, 8),
    (-176, 0, 5, 8),
    (8, 0, 6, 8),
    (-1324, 1, 0, 8),
    (7070, 1, 1, 8),
    (-10953, 1, 2, 8),
    (6976, 1, 3, 8),
    (-1931, 1, 4, 8),
    (134, 1, 5, 8),
    (16, 1, 6, 8),
    (2948, 2, 0, 8),
    (-10953, 2, 1, 8),
    (12252, 2, 2, 8),
    (-5734, 2, 3, 8),
    (1085, 2, 4, 8),
    (-66, 2, 5, 8),
    (-2616, 3, 0, 8),
    (6976, 3, 1, 8),
    (-5734, 3, 2, 8),
    (2328, 3, 3, 8),
    (-350, 3, 4, 8),
    (12, 3, 5, 8),
    (1064, 4, 0, 8),
    (-1931, 4, 1, 8),
    (1085, 4, 2, 8),
    (-350, 4, 3, 8),
    (36, 4, 4, 8),
    (-176, 5, 0, 8),
    (134, 5, 1, 8),
    (-66, 5, 2, 8),
    (12, 5, 3, 8),
    (8, 6, 0, 8),
    (16, 6, 1, 8),
    (480, 0, 0, 9),
    (-2024, 0, 1, 9),
    (2464, 0, 2, 9),
    (-1168, 0, 3, 9),
    (160, 0, 4, 9),
    (32, 0, 5, 9),
    (-8, 0, 6, 9),
    (-2024, 1, 0, 9),
    (5536, 1, 1, 9),
    (-4302, 1, 2, 9),
    (1164, 1, 3, 9),
    (98, 1, 4, 9),
    (-48, 1, 5, 9),
    (2464, 2, 0, 9),
    (-4302, 2, 1, 9),
    (2244, 2, 2, 9),
    (-688, 2, 3, 9),
    (66, 2, 4, 9),
    (-1168, 3, 0, 9),
    (1164, 3, 1, 9),
    (-688, 3, 2, 9),
    (176, 3, 3, 9),
    (-12, 3, 4, 9),
    (160, 4, 0, 9),
    (98, 4, 1, 9),
    (66, 4, 2, 9),
    (-12, 4, 3, 9),
    (32, 5, 0, 9),
    (-48, 5, 1, 9),
    (-8, 6, 0, 9),
    (496, 0, 0, 10),
    (-920, 0, 1, 10),
    (292, 0, 2, 10),
    (176, 0, 3, 10),
    (-148, 0, 4, 10),
    (24, 0, 5, 10),
    (-920, 1, 0, 10),
    (529, 1, 1, 10),
    (365, 1, 2, 10),
    (-270, 1, 3, 10),
    (48, 1, 4, 10),
    (292, 2, 0, 10),
    (365, 2, 1, 10),
    (121, 2, 2, 10),
    (-22, 2, 3, 10),
    (176, 3, 0, 10),
    (-270, 3, 1, 10),
    (-22, 3, 2, 10),
    (4, 3, 3, 10),
    (-148, 4, 0, 10),
    (48, 4, 1, 10),
    (24, 5, 0, 10),
    (64, 0, 0, 11),
    (284, 0, 1, 11),
    (-364, 0, 2, 11),
    (168, 0, 3, 11),
    (-24, 0, 4, 11),
    (284, 1, 0, 11),
    (-656, 1, 1, 11),
    (88, 1, 2, 11),
    (-16, 1, 3, 11),
    (-364, 2, 0, 11),
    (88, 2, 1, 11),
    (168, 3, 0, 11),
    (-16, 3, 1, 11),
    (-24, 4, 0, 11),
    (-144, 0, 0, 12),
    (196, 0, 1, 12),
    (-44, 0, 2, 12),
    (8, 0, 3, 12),
    (196, 1, 0, 12),
    (64, 1, 1, 12),
    (-44, 2, 0, 12),
    (8, 3, 0, 12),
    (-32, 0, 0, 13),
    (-32, 0, 1, 13),
    (-32, 1, 0, 13),
    (16, 0, 0, 14),
];
