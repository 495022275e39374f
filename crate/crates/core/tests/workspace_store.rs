//! Transactional storage: crash consistency, audit replay, status coherence.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use common::stamp;
use proptest::prelude::*;
use riskcore::evaluation::VerdictStatus;
use riskcore::fixture;
use riskcore::hazard::GuideWord;
use riskcore::hazard_log::LogStatus;
use riskcore::quantity::Probability;
use riskcore::workspace::{read_audit, replay, Mutation, Workspace};
use riskcore::Error;
use sha2::{Digest, Sha256};

/// Hash of every file under `root`, keyed by relative path.
fn snapshot(root: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, format!("{:x}", Sha256::digest(fs::read(&p).unwrap())));
            }
        }
    }
    out
}

fn mutations() -> Vec<Mutation> {
    vec![
        Mutation::Run { max_iterations: 8 },
        Mutation::ProposeMeasure {
            proposal: fixture::crossing_intention_proposal(),
            apply: true,
        },
        Mutation::Step,
        Mutation::Step,
        Mutation::Reset,
    ]
}

#[test]
fn crash_consistency_under_fifty_injected_failures() {
    let mut crashes = 0;
    let mut prefix = 0;
    while crashes < 50 {
        // Crash every file operation of the next mutation in turn until it
        // commits, then move on to a longer committed prefix.
        for n in 0.. {
            let dir = tempfile::tempdir().unwrap();
            let mut ws = Workspace::init(dir.path(), Some("t-crossing"), false, &stamp()).unwrap();
            for m in mutations().into_iter().take(prefix) {
                ws.transact(None, m, &stamp()).unwrap();
            }
            let committed = Workspace::open(dir.path()).unwrap();
            let files = snapshot(dir.path());
            ws.inject_crash_after(n);
            match ws.transact(None, mutations()[prefix].clone(), &stamp()) {
                Err(Error::Io { .. }) => {
                    crashes += 1;
                    let seen = Workspace::open(dir.path()).unwrap();
                    assert_eq!(seen.project(), committed.project(), "prefix={prefix} n={n}");
                    assert_eq!(seen.version(), committed.version());
                    assert_eq!(read_audit(dir.path()).unwrap().len(), committed.audit().unwrap().len());
                    // The next writer rolls the journal back first.
                    let mut w = Workspace::open(dir.path()).unwrap();
                    w.transact(Some(committed.version()), Mutation::Reset, &stamp()).unwrap();
                    assert!(!dir.path().join("journal").exists());
                }
                Ok(c) => {
                    assert_eq!(c.version, committed.version() + 1);
                    assert_ne!(snapshot(dir.path()), files);
                    break;
                }
                Err(e) => panic!("prefix={prefix} n={n}: {e}"),
            }
        }
        prefix = (prefix + 1) % mutations().len();
    }
}

#[test]
fn crash_before_commit_leaves_bytes_recoverable() {
    let dir = tempfile::tempdir().unwrap();
    let mut ws = Workspace::init(dir.path(), Some("t-crossing"), false, &stamp()).unwrap();
    let before = snapshot(dir.path());
    ws.inject_crash_after(6);
    assert!(ws.transact(None, Mutation::Run { max_iterations: 8 }, &stamp()).is_err());
    let mut w = Workspace::open(dir.path()).unwrap();
    w.transact(None, Mutation::Reset, &stamp()).unwrap();
    // Recovery restored the old bytes; Reset then only rewrote the manifest
    // and appended one audit line.
    let after = snapshot(dir.path());
    let changed: Vec<&String> = after.keys().filter(|k| before.get(*k) != after.get(*k)).collect();
    assert_eq!(changed, vec!["audit.jsonl", "riskcore.json"]);
}

#[test]
fn full_fixture_run_accepts_hazard() {
    let dir = tempfile::tempdir().unwrap();
    let mut ws = Workspace::init(dir.path(), Some("t-crossing"), false, &stamp()).unwrap();
    for m in mutations().into_iter().take(2) {
        ws.transact(None, m, &stamp()).unwrap();
    }
    ws.transact(None, Mutation::Run { max_iterations: 8 }, &stamp()).unwrap();
    let report = Workspace::open(dir.path()).unwrap().report();
    assert_eq!(report.hazard_log.len(), 1);
    assert_eq!(report.hazard_log[0].status, LogStatus::Accepted);
    let ids: Vec<&str> = report.iteration_reports.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, ["iter-1-target_behavior", "iter-2-target_behavior", "iter-3-deviation"]);
    for id in ids {
        assert!(dir.path().join(format!("reports/{id}.report.json")).exists());
    }
    assert_eq!(report.requirements_coverage.len(), 13);
}

#[test]
fn open_deviation_event_keeps_entry_unaccepted() {
    let dir = tempfile::tempdir().unwrap();
    let mut ws = Workspace::init(dir.path(), Some("t-crossing"), false, &stamp()).unwrap();
    for m in mutations().into_iter().take(2) {
        ws.transact(None, m, &stamp()).unwrap();
    }
    // Certain late stops: iteration 2 leaves a violated deviation event open.
    let mut dm = ws.model().deviation_model.clone();
    dm.default_probability.insert(GuideWord::late(), Probability::one());
    ws.transact(None, Mutation::SetDeviationModel { model: dm }, &stamp()).unwrap();
    let mut hazards = ws.model().hazards.clone();
    let mut h = hazards.remove(0);
    h.id = "H-CROSSWALK-2".into();
    h.applicability = "pedestrian_detected and crosswalk_detected and deviation(stop_at_crosswalk, late)".into();
    ws.transact(None, Mutation::AddHazard { hazard: h }, &stamp()).unwrap();
    ws.transact(None, Mutation::Run { max_iterations: 1 }, &stamp()).unwrap();
    let report = ws.report();
    let last = report.iteration_reports.last().unwrap();
    assert!(last.evaluation.verdicts.iter().any(|v| v.status == VerdictStatus::Violated));
    let row = report.hazard_log.iter().find(|r| r.hazard_id == "H-CROSSWALK-2").unwrap();
    assert!(!row.hazardous_event_ids.is_empty());
    assert_ne!(row.status, LogStatus::Accepted);
}

fn mutation() -> impl Strategy<Value = Mutation> {
    prop_oneof![
        Just(Mutation::Step),
        Just(Mutation::Analyze),
        Just(Mutation::Evaluate),
        Just(Mutation::Treat),
        Just(Mutation::Reset),
        (1u32..4).prop_map(|max_iterations| Mutation::Run { max_iterations }),
        Just(Mutation::ProposeMeasure {
            proposal: fixture::crossing_intention_proposal(),
            apply: false,
        }),
        (0usize..4).prop_map(|i| Mutation::TransitionLog {
            hazard_id: "H-CROSSWALK".into(),
            to: LogStatus::ALL[i],
            note: Some("manual review".into()),
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Replaying the audit trail reproduces the committed state, and no
    /// entry is accepted while a verdict it contributed to is violated.
    #[test]
    fn audit_replay_and_status_coherence(ms in proptest::collection::vec(mutation(), 1..10)) {
        let dir = tempfile::tempdir().unwrap();
        let mut ws = Workspace::init(dir.path(), Some("t-crossing"), false, &stamp()).unwrap();
        let mut committed = 1;
        for m in ms {
            let before = snapshot(dir.path());
            match ws.transact(None, m, &stamp()) {
                Ok(c) => committed = c.version,
                Err(_) => prop_assert_eq!(snapshot(dir.path()), before),
            }
        }
        let disk = Workspace::open(dir.path()).unwrap();
        prop_assert_eq!(disk.version(), committed);
        let audit = read_audit(dir.path()).unwrap();
        prop_assert_eq!(audit.len() as u64, committed);
        let (replayed, version) = replay(&audit).unwrap();
        prop_assert_eq!(version, committed);
        prop_assert_eq!(&replayed, disk.project());
        for row in disk.report().hazard_log {
            if row.status == LogStatus::Accepted {
                prop_assert!(row.latest_verdicts.iter().all(|v| v.status == VerdictStatus::Accepted), "{:?}", row);
            }
        }
    }
}
