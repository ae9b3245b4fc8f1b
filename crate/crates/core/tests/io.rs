use joinpoint::detection::analyze;
use joinpoint::gp_limit::{simulate_gp, NullSpec};
use joinpoint::io::{
    noaa_fixture, parse_report_json, read_series, write_report, CacheKey, QuantileCache,
    ReportDocument, ReportFormat, SeriesFileSpec, SCHEMA_VERSION,
};
use joinpoint::series::{admissible_k_range, DetectionConfig, Execution};
use joinpoint::Error;

fn small_config() -> DetectionConfig {
    DetectionConfig {
        mc_replicates: 2000,
        grid_size: 200,
        ..DetectionConfig::default()
    }
}

fn noaa_report() -> joinpoint::detection::AnalysisReport {
    let config = small_config();
    let null = simulate_gp(config.delta, config.grid_size, config.mc_replicates, config.seed, Execution::Parallel)
        .unwrap();
    analyze(&noaa_fixture(), &config, &null).unwrap()
}

#[test]
fn json_round_trip_is_exact() {
    let report = noaa_report();
    let bytes = write_report(&report, ReportFormat::Json).unwrap();
    let doc = parse_report_json(&bytes).unwrap();
    assert_eq!(doc, ReportDocument::from(&report));
    assert_eq!(doc.schema_version, SCHEMA_VERSION);
    assert_eq!(doc.tau_label, report.tau_label());
    assert_eq!(doc.profile.len(), report.profile.entries.len());
    for (row, e) in doc.profile.iter().zip(&report.profile.entries) {
        assert_eq!(row.j.to_bits(), e.j.to_bits());
    }
    let value: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
    for key in [
        "schema_version",
        "config",
        "tau_hat",
        "tau_label",
        "statistic",
        "p_value",
        "critical_values",
        "segments",
        "profile",
    ] {
        assert!(value.get(key).is_some(), "missing {key}");
    }
    for side in ["left", "right"] {
        for field in ["slope", "intercept_t", "intercept_label"] {
            assert!(value["segments"][side][field].is_number(), "{side}.{field}");
        }
    }
    assert!(value["profile"][0]["J"].is_number());
    assert_eq!(write_report(&report, ReportFormat::Json).unwrap(), bytes);
}

#[test]
fn csv_profile_has_one_row_per_candidate() {
    let report = noaa_report();
    let text = String::from_utf8(write_report(&report, ReportFormat::Csv).unwrap()).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,label,J"));
    let (lo, hi) = admissible_k_range(174, 0.05).unwrap();
    assert_eq!(lines.clone().count(), hi - lo + 1);
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[0], lo.to_string());
    assert_eq!(first[1], (1849 + lo).to_string());
}

#[test]
fn text_report_shows_location_and_statistic() {
    let report = noaa_report();
    let text = String::from_utf8(write_report(&report, ReportFormat::Text).unwrap()).unwrap();
    let label = report.tau_label().unwrap();
    assert!(text.contains(&format!("tau_hat: {label} (t = {})", report.tau_hat())));
    assert!(text.contains(&format!("statistic: {:.2}", report.statistic)));
    assert!(text.starts_with("changepoint detected at 95% level"));
}

#[test]
fn read_series_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.csv");
    std::fs::write(&good, joinpoint::io::NOAA_FIXTURE_CSV).unwrap();
    let s = read_series(&SeriesFileSpec::sniff(&good).unwrap()).unwrap();
    assert_eq!((s.len(), s.start_label()), (174, Some(1850)));

    let gap = dir.path().join("gap.csv");
    std::fs::write(&gap, "year,v\n1899,0.1\n1900,0.2\n1902,0.3\n").unwrap();
    let err = read_series(&SeriesFileSpec::sniff(&gap).unwrap()).unwrap_err();
    assert!(matches!(err, Error::GapInLabels { expected: 1901, found: 1902, .. }));

    let bare = dir.path().join("bare.csv");
    std::fs::write(&bare, (0..10).map(|i| format!("{i}\n")).collect::<String>()).unwrap();
    let s = read_series(&SeriesFileSpec::sniff(&bare).unwrap()).unwrap();
    assert_eq!((s.len(), s.start_label()), (10, None));

    let missing = dir.path().join("missing.csv");
    assert!(matches!(SeriesFileSpec::sniff(&missing), Err(Error::Io(_))));
}

#[test]
fn cache_hits_equal_recomputation() {
    let dir = tempfile::tempdir().unwrap();
    let cache = QuantileCache::new(dir.path().join("nested"));
    let spec = NullSpec::gp(0.05, 150, 3000, 9);
    let cold = cache.get_or_simulate(&spec, Execution::Parallel).unwrap();
    let key = CacheKey::new(spec.clone());
    assert!(cache.path_for(&key).exists());
    let warm = cache.get_or_simulate(&spec, Execution::Sequential).unwrap();
    assert_eq!(cold, warm);
    assert!(cold.draws.iter().zip(&warm.draws).all(|(a, b)| a.to_bits() == b.to_bits()));

    // A different key misses.
    let other = NullSpec::gp(0.05, 150, 3000, 10);
    assert!(cache.get(&CacheKey::new(other)).is_none());

    // A tampered entry is ignored and rewritten.
    let path = cache.path_for(&key);
    let text = std::fs::read_to_string(&path).unwrap();
    let mut entry: serde_json::Value = serde_json::from_str(&text).unwrap();
    entry["distribution"]["draws"][0] = serde_json::json!(123.0);
    std::fs::write(&path, entry.to_string()).unwrap();
    assert!(cache.get(&key).is_none());
    assert_eq!(cache.get_or_simulate(&spec, Execution::Parallel).unwrap(), cold);
    assert_eq!(cache.get(&key).unwrap(), cold);
}
