//! The verification suite itself: completeness, determinism and failure
//! reporting.

use solman::builtin::{self, Params, IDS};
use solman::harness::{check_names, run_suite, Status, Target};
use solman::{run_builtin, DelaySet, SuiteConfig};

fn small() -> SuiteConfig {
    SuiteConfig {
        seed: 3,
        segments: 16,
        pairs: 8,
    }
}

#[test]
fn every_registered_check_runs_once() {
    let report = run_builtin("eq1", &Params::default(), &small()).unwrap();
    let ran: Vec<&str> = report.checks.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(ran, check_names());
    let mut unique = ran.clone();
    unique.dedup();
    assert_eq!(unique.len(), ran.len());
}

#[test]
fn builtins_pass_with_default_settings() {
    for id in IDS {
        let report = run_builtin(id, &Params::default(), &SuiteConfig::default()).unwrap();
        let failed: Vec<_> = report.failures().map(|c| (&c.name, &c.note)).collect();
        assert!(failed.is_empty(), "{id}: {failed:?}");
        assert!(
            report
                .checks
                .iter()
                .filter(|c| c.status == Status::Pass)
                .count()
                >= 30,
            "{id}"
        );
    }
}

#[test]
fn same_seed_same_report() {
    let a = run_builtin("twodelay", &Params::default(), &small()).unwrap();
    let b = run_builtin("twodelay", &Params::default(), &small()).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    let c = run_builtin(
        "twodelay",
        &Params::default(),
        &SuiteConfig { seed: 4, ..small() },
    )
    .unwrap();
    assert_ne!(a.to_json().unwrap(), c.to_json().unwrap());
}

#[test]
fn wrong_expectation_is_reported() {
    let b = builtin::mvw(&Params::default()).unwrap();
    let target = Target {
        model: b.model,
        expected_strata: Some(vec![DelaySet::from_indices([0])]),
    };
    let report = run_suite(&target, &small());
    assert!(!report.passed());
    let failed: Vec<_> = report.failures().map(|c| c.name.as_str()).collect();
    assert_eq!(failed, ["atlas.strata"]);
}

#[test]
fn models_without_expectations_skip_the_strata_check() {
    let model = builtin::mvw(&Params::default()).unwrap().model;
    let report = run_suite(&Target::from(model), &small());
    assert!(report.passed());
    assert_eq!(
        report.check("atlas.strata").unwrap().status,
        Status::Skipped
    );
}

#[test]
fn report_round_trips_through_json() {
    let report = run_builtin("ode", &Params::default(), &small()).unwrap();
    let back: solman::VerificationReport =
        serde_json::from_str(&report.to_json().unwrap()).unwrap();
    assert_eq!(back, report);
    assert!(report.to_text().lines().count() >= report.checks.len());
}
