//! End-to-end runs of the optimization loop on the small bundled problem.

use presstopo::config::parse_override_value;
use presstopo::export::write_history_csv;
use presstopo::{library, load_config, run, Error, RunOptions};

fn short(iterations: usize) -> RunOptions {
    RunOptions {
        iterations: Some(iterations),
        ..RunOptions::default()
    }
}

#[test]
fn history_covers_every_iteration() {
    let spec = library::load("verification").unwrap();
    let result = run(&spec, &short(30)).unwrap();
    assert_eq!(result.history.len(), 30);
    for (k, r) in result.history.records.iter().enumerate() {
        assert_eq!(r.iter, k + 1);
        assert!(
            r.fx.abs() < 1e-6 && (r.fy - 1000.0).abs() < 1e-6,
            "iter {}: ({}, {})",
            r.iter,
            r.fx,
            r.fy
        );
        assert!(r.delta.is_none());
    }
    // Normalized objective starts at the scale factor.
    assert!((result.history.records[0].objective - 1000.0).abs() < 1e-9);
    assert!(result.objective() < 1000.0);
    assert!(result.final_analysis.volume <= spec.volume_fraction * (1.0 + 1e-3));

    let mut csv = Vec::new();
    write_history_csv(&mut csv, &result.history).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 31);

    let s = result.counters.solves;
    assert_eq!(s.ordering_violations, 0);
    assert_eq!(result.counters.mma_feasibility_violations, 0);
    assert_eq!(result.counters.mma_bracketing_violations, 0);
}

#[test]
fn identical_specs_give_identical_histories() {
    let spec = library::load("verification").unwrap();
    let csv = |_| {
        let mut buf = Vec::new();
        write_history_csv(&mut buf, &run(&spec, &short(15)).unwrap().history).unwrap();
        buf
    };
    assert_eq!(csv(0), csv(1));
}

#[test]
fn failures_carry_the_iteration() {
    // No pressure anywhere: the initial compliance is zero and cannot be
    // normalized.
    let spec = library::load("verification").unwrap();
    let zero = parse_override_value("0");
    let spec = spec.with_overrides([("boundary.pressure.0.value", &zero)]).unwrap();
    let err = run(&spec, &short(5)).unwrap_err();
    assert!(matches!(err, Error::AtIteration { iteration: 1, .. }), "{err}");
    assert!(matches!(err.root(), Error::DegenerateObjective(_)));
    assert!(err.is_numerical());
}

#[test]
fn missing_field_in_a_file_names_the_field() {
    let mut value = library::load("verification").unwrap().to_value();
    value.as_object_mut().unwrap().remove("volume_fraction");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, serde_json::to_string(&value).unwrap()).unwrap();
    match load_config(&path).unwrap_err() {
        Error::Config { path, .. } => assert_eq!(path, "volume_fraction"),
        other => panic!("unexpected {other}"),
    }
}
