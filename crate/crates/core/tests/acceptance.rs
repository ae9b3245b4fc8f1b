//! Acceptance criteria. Each test writes one `criterion N: PASS|FAIL` line to
//! stderr (bypassing output capture) and fails when the criterion fails.

use std::io::Write;

use joinpoint::closed_form::fit_joinpoint;
use joinpoint::detection::{analyze, j_profile, subperiod_analyze};
use joinpoint::gp_limit::{simulate_finite_n, simulate_gp, NullDistribution, STANDARD_LEVELS};
use joinpoint::io::noaa_fixture;
use joinpoint::moments::{
    cov_beta_oracle, cov_beta_polynomial, cov_g, cov_g_prefactor, cov_j_finite, var_beta,
    var_beta_oracle, var_beta_polynomial, cov_beta,
};
use joinpoint::series::{admissible_k_range, DetectionConfig, Execution, TimeSeries};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn verdict(criterion: &str, pass: bool, detail: &str) {
    let line = format!(
        "criterion {criterion}: {} - {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn gaussian(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// `(μ, α, β, sse)` by Householder QR on the constrained two-segment design
/// `x = μ1 + α1·min(t, k) + α2·(t-k)⁺`, where continuity at `k` is built in.
fn constrained_ls(x: &[f64], k: usize) -> [f64; 4] {
    let n = x.len();
    let design = DMatrix::from_fn(n, 3, |i, j| {
        let t = (i + 1) as f64;
        let k = k as f64;
        match j {
            0 => 1.0,
            1 => t.min(k),
            _ => (t - k).max(0.0),
        }
    });
    let y = DVector::from_column_slice(x);
    let qr = design.clone().qr();
    let coef = qr
        .r()
        .solve_upper_triangular(&(qr.q().transpose() * &y))
        .expect("full rank");
    let sse = (&y - &design * &coef).norm_squared();
    [coef[0], coef[1], coef[2] - coef[1], sse]
}

#[test]
fn criterion_01_closed_form_matches_constrained_least_squares() {
    let start = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = (0.0f64, 0, 0);
    let mut fits = 0;
    for n in [10, 50, 200] {
        for _ in 0..50 {
            let x = gaussian(n, &mut rng);
            let series = TimeSeries::from_values(x.clone(), None).unwrap();
            for k in 2..=n - 2 {
                let fit = fit_joinpoint(&series, k).unwrap();
                let oracle = constrained_ls(&x, k);
                for (got, want) in [fit.mu_hat, fit.alpha_hat, fit.beta_hat, fit.sse]
                    .into_iter()
                    .zip(oracle)
                {
                    let e = rel(got, want);
                    if e > worst.0 {
                        worst = (e, n, k);
                    }
                }
                fits += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        "1",
        worst.0 <= 1e-8 && secs < 30.0,
        &format!(
            "{fits} fits, max componentwise rel. error {:.2e} (n={}, k={}), {secs:.1}s",
            worst.0, worst.1, worst.2
        ),
    );
}

/// Polynomial vs oracle at one coordinate; `None` when within tolerance.
fn moment_discrepancy(n: usize, k: usize, l: usize) -> Option<(f64, String)> {
    const TOL: f64 = 1e-6;
    let check = |label: &str, poly: joinpoint::Result<f64>, oracle: f64| match poly {
        Ok(p) if rel(p, oracle) <= TOL => None,
        Ok(p) => Some((rel(p, oracle), format!("{label}(n={n}, k={k}, l={l}): {p:e} vs {oracle:e}"))),
        Err(e) => Some((f64::INFINITY, format!("{label}(n={n}, k={k}, l={l}): {e}"))),
    };
    if k == l {
        check("var", var_beta_polynomial(n, k, 1.0), var_beta_oracle(n, k, 1.0).unwrap())
    } else {
        check("cov", cov_beta_polynomial(n, k, l, 1.0), cov_beta_oracle(n, k, l, 1.0).unwrap())
    }
}

fn moment_triples() -> Vec<(usize, usize, usize)> {
    let mut triples = Vec::new();
    for n in 4..=60 {
        for k in 2..=n - 2 {
            for l in k..=n - 2 {
                triples.push((n, k, l));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for _ in 0..1000 {
        let n = rng.gen_range(61..=5000);
        let a = rng.gen_range(2..=n - 2);
        let b = rng.gen_range(2..=n - 2);
        triples.push((n, a.min(b), a.max(b)));
    }
    triples
}

#[test]
fn criterion_02_moment_polynomials_match_oracles() {
    let start = std::time::Instant::now();
    let triples = moment_triples();
    let mut failures: Vec<(f64, String)> = triples
        .iter()
        .filter_map(|&(n, k, l)| moment_discrepancy(n, k, l))
        .collect();
    let secs = start.elapsed().as_secs_f64();
    failures.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (_, coord) in failures.iter().take(5) {
        let _ = writeln!(std::io::stderr(), "  discrepancy {coord}");
    }
    let large_n_ok = failures
        .iter()
        .filter(|(e, _)| e.is_finite())
        .count();
    verdict(
        "2",
        failures.is_empty() && secs < 120.0,
        &format!(
            "{} of {} coordinates beyond rel. 1e-6 ({large_n_ok} finite), worst {:.3e}, {secs:.1}s",
            failures.len(),
            triples.len(),
            failures.first().map_or(0.0, |f| f.0)
        ),
    );
}

#[test]
fn criterion_02_supplement_production_moments_match_oracles() {
    let mut worst = 0.0f64;
    for (n, k, l) in moment_triples() {
        let e = if k == l {
            rel(var_beta(n, k, 1.0).unwrap(), var_beta_oracle(n, k, 1.0).unwrap())
        } else {
            rel(cov_beta(n, k, l, 1.0).unwrap(), cov_beta_oracle(n, k, l, 1.0).unwrap())
        };
        worst = worst.max(e);
    }
    verdict(
        "2 (production closed form)",
        worst <= 1e-6,
        &format!("max rel. error {worst:.2e} over the same coordinates"),
    );
}

#[test]
fn criterion_03_asymptotic_variance() {
    let n = 5000usize;
    let mut detail = Vec::new();
    let mut pass = true;
    for t in [0.2, 0.5, 0.8] {
        let k = (t * n as f64).round() as usize;
        let scaled = (n as f64).powi(3) * (t * (1.0 - t)).powi(3) * var_beta(n, k, 1.0).unwrap() / 3.0;
        pass &= (scaled - 1.0).abs() <= 0.02;
        detail.push(format!("t={t}: {:.4}", scaled - 1.0));
    }
    verdict("3", pass, &format!("relative deviation {}", detail.join(", ")));
}

#[test]
fn criterion_04_limit_covariance() {
    let finite = cov_j_finite(10_000, 3000, 6000).unwrap();
    let limit = cov_g(0.3, 0.6).unwrap();
    let mut diag_err = 0.0f64;
    for i in 1..=100 {
        let t = i as f64 / 101.0;
        diag_err = diag_err
            .max((cov_g(t, t).unwrap() - 1.0).abs())
            .max((cov_g_prefactor(t, t) - 1.0).abs());
    }
    verdict(
        "4",
        (finite - limit).abs() <= 0.01 && diag_err <= 1e-12,
        &format!(
            "finite {finite:.5} vs limit {limit:.5} (diff {:.2e}); max |cov(t,t) - 1| = {diag_err:.1e}",
            (finite - limit).abs()
        ),
    );
}

const REFERENCE_QUANTILES: [(f64, [f64; 5]); 3] = [
    (0.01, [2.530, 2.795, 3.038, 3.327, 3.964]),
    (0.05, [2.380, 2.658, 2.908, 3.207, 3.852]),
    (0.10, [2.285, 2.570, 2.827, 3.132, 3.792]),
];

fn gp_null(delta: f64) -> NullDistribution {
    simulate_gp(delta, 1000, 100_000, 42, Execution::Parallel).unwrap()
}

#[test]
fn criterion_05_limit_quantiles_reproduce_reference_table() {
    let start = std::time::Instant::now();
    let mut pass = true;
    let mut cells = Vec::new();
    for (delta, reference) in REFERENCE_QUANTILES {
        let table = gp_null(delta).table(&STANDARD_LEVELS).unwrap();
        for ((&got, &se), (&want, &q)) in table
            .values
            .iter()
            .zip(&table.standard_errors)
            .zip(reference.iter().zip(&STANDARD_LEVELS))
        {
            let tol = f64::max(0.06, 3.0 * se);
            let ok = (got - want).abs() <= tol;
            pass &= ok;
            cells.push(format!(
                "d={delta} q={q}: {got:.3} vs {want:.3} (se {se:.3}){}",
                if ok { "" } else { " OUT" }
            ));
        }
    }
    for c in &cells {
        let _ = writeln!(std::io::stderr(), "  {c}");
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        "5",
        pass && secs <= 1800.0,
        &format!("15 cells with m=1000, R=1e5, tolerance max(0.06, 3 SE); {secs:.0}s"),
    );
}

#[test]
fn criterion_06_finite_n_agrees_with_limit() {
    let gp = gp_null(0.05).quantile(0.95).unwrap();
    let fin = simulate_finite_n(2000, 0.05, 10_000, 42, Execution::Parallel)
        .unwrap()
        .quantile(0.95)
        .unwrap();
    verdict(
        "6",
        (gp - fin).abs() <= 0.08,
        &format!("95% quantile finite-n {fin:.3} vs limit {gp:.3}"),
    );
}

#[test]
fn criterion_07_untrimmed_statistic_grows() {
    let medians: Vec<f64> = [200, 2000, 20_000]
        .iter()
        .map(|&n| {
            simulate_finite_n(n, 0.0, 2000, 7, Execution::Parallel)
                .unwrap()
                .quantile(0.5)
                .unwrap()
        })
        .collect();
    verdict(
        "7",
        medians[0] < medians[1] && medians[1] < medians[2],
        &format!("medians at n = 200, 2000, 20000: {medians:.3?}"),
    );
}

#[test]
fn criterion_08_temperature_application() {
    let series = noaa_fixture();
    let config = DetectionConfig::default();
    let null = simulate_gp(0.05, config.grid_size, config.mc_replicates, config.seed, Execution::Parallel)
        .unwrap();
    let report = analyze(&series, &config, &null).unwrap();
    let sub = subperiod_analyze(&series, 1970, 2023, &config, &null).unwrap();

    let left = report.segments.left.slope;
    let right = report.segments.right.slope;
    let checks = [
        ("tau 1972", report.tau_label() == Some(1972), format!("{:?}", report.tau_label())),
        ("J 17.46±0.2", (report.statistic - 17.46).abs() <= 0.2, format!("{:.3}", report.statistic)),
        ("left 0.0034±0.0010", (left - 0.0034).abs() <= 0.0010, format!("{left:.5}")),
        ("right 0.0201±0.0015", (right - 0.0201).abs() <= 0.0015, format!("{right:.5}")),
        ("p<0.001", report.p_value < 0.001, format!("{:.2e}", report.p_value)),
        (
            "1970-2023 not detected",
            !sub.detected && sub.statistic < sub.critical_value(0.95).unwrap(),
            format!("{:.3} vs {:.3}", sub.statistic, sub.critical_value(0.95).unwrap()),
        ),
    ];
    let detail: Vec<String> = checks
        .iter()
        .map(|(name, ok, got)| format!("{name}: {got} {}", if *ok { "ok" } else { "MISS" }))
        .collect();
    verdict("8", checks.iter().all(|c| c.1), &detail.join("; "));
}

#[test]
fn criterion_09_size_calibration() {
    let config = DetectionConfig::default();
    let null = simulate_gp(0.05, config.grid_size, config.mc_replicates, config.seed, Execution::Parallel)
        .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut rejections = 0;
    for _ in 0..200 {
        let series = TimeSeries::from_values(gaussian(500, &mut rng), None).unwrap();
        if analyze(&series, &config, &null).unwrap().detected {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / 200.0;
    verdict(
        "9",
        (0.02..=0.09).contains(&rate),
        &format!("rejection rate {rate:.3} ({rejections}/200) at level 0.05"),
    );
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
}

#[test]
fn criterion_10_invariance_and_determinism() {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut worst = 0.0f64;
    let mut tau_equal = true;
    for n in [20, 150, 600] {
        for (c, g, h) in [(3.5, -2.0, 0.25), (-0.01, 100.0, -3.0), (1e3, 0.0, 1e-2)] {
            let x: Vec<f64> = gaussian(n, &mut rng)
                .into_iter()
                .enumerate()
                .map(|(i, e)| e + 0.04 * (i as f64 - n as f64 / 3.0).max(0.0))
                .collect();
            let y: Vec<f64> = x
                .iter()
                .enumerate()
                .map(|(i, v)| c * v + g + h * (i + 1) as f64)
                .collect();
            let px = j_profile(&TimeSeries::from_values(x, None).unwrap(), 0.05).unwrap();
            let py = j_profile(&TimeSeries::from_values(y, None).unwrap(), 0.05).unwrap();
            tau_equal &= px.tau_hat == py.tau_hat;
            for (a, b) in px.entries.iter().zip(&py.entries) {
                worst = worst.max(rel(b.j.abs(), a.j.abs()));
            }
        }
    }

    let series = noaa_fixture();
    let config = DetectionConfig {
        mc_replicates: 2000,
        grid_size: 200,
        ..DetectionConfig::default()
    };
    let run = |exec| {
        let null = simulate_gp(0.05, 200, 2000, 42, exec).unwrap();
        let fin = simulate_finite_n(100, 0.05, 500, 42, exec).unwrap();
        (analyze(&series, &config, &null).unwrap(), fin)
    };
    let reference = run(Execution::Sequential);
    let deterministic = [1, 2, 5]
        .iter()
        .all(|&t| pool(t).install(|| run(Execution::Parallel)) == reference)
        && run(Execution::Sequential) == reference;

    verdict(
        "10",
        worst <= 1e-9 && tau_equal && deterministic,
        &format!(
            "max rel. |J| change {worst:.1e}, tau equal: {tau_equal}, thread-count determinism: {deterministic}"
        ),
    );
}

#[test]
fn admissible_range_for_fixture() {
    assert_eq!(admissible_k_range(174, 0.05).unwrap(), (9, 165));
}
