//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs with `cargo test -p riskcore --test acceptance`.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::{ratio, reference, residual, saturate, spec_strategy, stamp};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use riskcore::dsl::{parse_spec, serialize_spec};
use riskcore::estimation::{baseline_exposure_hours, fleet_exposure_hours, harm_rate, BaselineExposure, FleetExposure};
use riskcore::evaluation::{aggregate, RiskAscription, VerdictStatus};
use riskcore::fixture;
use riskcore::inference::infer_from;
use riskcore::ontology::{RiskValue, SeverityClass, WeighingPolicy};
use riskcore::quantity::{EventsPerHour, EventsPerYear, Exact, HoursPerYear, KmPerHour, KmPerYear};
use riskcore::requirements::REQUIREMENTS;
use riskcore::rmc::{run_iteration1, run_iteration2, treat, Command, IterationKind, Outcome, Project, RmcState};
use riskcore::workspace::{Mutation, Workspace};
use riskcore::Error;

type Check = Result<String, String>;

fn rel(actual: f64, expected: f64) -> f64 {
    ((actual - expected) / expected).abs()
}

fn within(what: &str, actual: f64, expected: f64, tol: f64) -> Result<(), String> {
    let r = rel(actual, expected);
    if r <= tol {
        Ok(())
    } else {
        Err(format!("{what}: {actual:e} vs {expected:e} (rel {r:.2e} > {tol:.1e})"))
    }
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn exact(s: &str) -> Exact {
    s.parse().unwrap()
}

fn fleet_hours() -> HoursPerYear {
    let f = FleetExposure::new(1000, exact("22"), exact("365")).unwrap();
    fleet_exposure_hours(&f).unwrap()
}

fn baseline_hours() -> HoursPerYear {
    baseline_exposure_hours(&BaselineExposure {
        annual_mileage: KmPerYear::new(exact("8.623e9")).unwrap(),
        average_speed: KmPerHour::new(exact("24")).unwrap(),
    })
    .unwrap()
}

fn criterion_1() -> Check {
    let h = fleet_hours();
    ensure(h.value() == &Exact::from_integer(8_030_000), format!("exposure {} != 8030000", h.value()))?;
    within("vs published 8e6", h.value().to_f64(), 8e6, 0.005)?;
    Ok(format!("fleet_exposure_hours = {} h/yr", h.value()))
}

fn criterion_2() -> Check {
    let r = harm_rate(&EventsPerYear::new(Exact::one()).unwrap(), &fleet_hours()).unwrap();
    let x = r.value().to_f64();
    within("vs 1/(1000*22*365)", x, 1.0 / (1000.0 * 22.0 * 365.0), 1e-12)?;
    within("vs stated 1.2453e-7", x, 1.2453e-7, 5e-5)?;
    within("vs published 1.25e-7", x, 1.25e-7, 0.005)?;
    Ok(format!("harm_rate = {x:.5e} /h"))
}

fn criterion_3() -> Check {
    let h = baseline_hours();
    let x = h.value().to_f64();
    within("vs 8.623e9/24", x, 8.623e9 / 24.0, 1e-12)?;
    within("vs stated 3.593e8", x, 3.593e8, 5e-4)?;
    within("vs published 3.59e8", x, 3.59e8, 0.002)?;
    Ok(format!("baseline_exposure_hours = {x:.4e} h/yr"))
}

fn criterion_4() -> Check {
    let r = harm_rate(&EventsPerYear::new(Exact::ratio(1, 6)).unwrap(), &baseline_hours()).unwrap();
    let x = r.value().to_f64();
    within("vs (1/6)/(8.623e9/24)", x, (1.0 / 6.0) / (8.623e9 / 24.0), 1e-12)?;
    within("vs stated 4.638e-10", x, 4.638e-10, 5e-4)?;
    within("vs published 4.64e-10", x, 4.64e-10, 0.005)?;
    Ok(format!("tolerable rate = {x:.4e} /h"))
}

fn criterion_5() -> Check {
    let start = Instant::now();
    let mut p = Project::new(fixture::t_crossing_model(), &stamp());
    let r1 = run_iteration1(&mut p, &stamp()).map_err(|e| e.to_string())?;
    ensure(r1.events_found.len() == 1, format!("{} events before the measure", r1.events_found.len()))?;
    ensure(
        r1.events_found[0].description.contains("collides with a pedestrian in front of a crosswalk"),
        "event description does not match",
    )?;
    let v = &r1.evaluation.verdicts[0];
    ensure(v.status == VerdictStatus::Violated, "verdict is not violated")?;
    let factor = v.required_reduction_factor().ok_or("no reduction factor")?.to_f64();
    within("reduction factor", factor, 268.5, 0.01)?;

    treat(&mut p, &stamp()).map_err(|e| e.to_string())?;
    p.model.proposals.push(fixture::crossing_intention_proposal());
    let t = treat(&mut p, &stamp()).map_err(|e| e.to_string())?;
    ensure(t.applied == ["M-CROSSING-INTENTION"], "measure not applied")?;

    let r1 = run_iteration1(&mut p, &stamp()).map_err(|e| e.to_string())?;
    ensure(r1.events_found.is_empty(), format!("{} events after the measure", r1.events_found.len()))?;
    ensure(r1.outcome == Outcome::Accepted, "iteration 1 not accepted after the measure")?;
    let r2 = run_iteration2(&mut p, &stamp()).map_err(|e| e.to_string())?;
    ensure(r2.iteration_kind == IterationKind::Deviation, "second report is not a deviation iteration")?;
    let ids: BTreeSet<String> = r2.deviations.values().flatten().map(|d| d.id.to_string()).collect();
    let expected: BTreeSet<String> = ["not", "early", "late"].iter().map(|g| format!("{g}:stop_at_crosswalk")).collect();
    ensure(ids == expected, format!("deviations {ids:?}"))?;
    let not_stop = r2
        .events_found
        .iter()
        .any(|e| e.triggering_behavior.to_string() == "not:stop_at_crosswalk");
    ensure(not_stop, "no `not stop` deviation event")?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(1), format!("took {elapsed:?}"))?;
    Ok(format!("1 event, factor {factor:.2}, 0 events after measure, 3 deviations, `not stop` found, {elapsed:.0?}"))
}

fn run<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn criterion_6() -> Check {
    let start = Instant::now();
    let strategy = spec_strategy(20, 5, 15).prop_flat_map(|(spec, asserted)| {
        let n = spec.rules.len();
        let order = Just((0..n).collect::<Vec<_>>()).prop_shuffle();
        (Just((spec, asserted)), proptest::collection::vec(order, 10))
    });
    run(500, strategy, |((spec, asserted), orders)| {
        let oracle = saturate(&spec, &asserted);
        let s = infer_from(&spec, "s", &asserted).unwrap();
        prop_assert_eq!((&s.derived_facts, &s.actions), (&oracle.0, &oracle.1));
        let rules: Vec<_> = spec.rules.values().cloned().collect();
        for order in orders {
            let mut p = spec.clone();
            p.rules = order.iter().map(|&i| (rules[i].id.clone(), rules[i].clone())).collect();
            let s = infer_from(&p, "s", &asserted).unwrap();
            prop_assert_eq!((&s.derived_facts, &s.actions), (&oracle.0, &oracle.1));
        }
        Ok(())
    })?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30), format!("took {elapsed:?}"))?;
    Ok(format!("500 specs x 10 orderings match saturation, {elapsed:.1?}"))
}

fn criterion_7() -> Check {
    run(100, spec_strategy(20, 5, 15), |(spec, _)| {
        prop_assert_eq!(parse_spec(&serialize_spec(&spec)).unwrap(), spec);
        Ok(())
    })
    .map_err(|e| format!("round trip: {e}"))?;

    let cmd = prop_oneof![
        Just(Command::Analyze),
        any::<bool>().prop_map(|accepted| Command::Evaluate { accepted }),
        Just(Command::Treat),
        Just(Command::Reset),
    ];
    run(1000, proptest::collection::vec(cmd, 0..40), |cmds| {
        let mut s = RmcState::default();
        for c in cmds {
            let want = reference(s.phase, s.iteration, c);
            match s.apply(c) {
                Ok(next) => {
                    prop_assert_eq!(Some((next.phase, next.iteration)), want);
                    s = next;
                }
                Err(_) => prop_assert!(want.is_none()),
            }
        }
        Ok(())
    })
    .map_err(|e| format!("state machine: {e}"))?;

    let tuple = (0u32..1000, 0u32..1000, 0u32..=1000, 0u32..=1000, 0u32..1000, 0usize..5, 1u32..100);
    run(10_000, tuple, |(i, m, e, g, c, which, bump)| {
        let mut v = [ratio(i, 1_000_000), ratio(m, 1_000_000), ratio(e, 1000), ratio(g, 1000), ratio(c, 1_000_000)];
        let base = residual(&v[0], &v[1], &v[2], &v[3], &v[4]);
        let prob = which == 2 || which == 3;
        v[which] = v[which].clone() + if prob { ratio(bump, 1000) } else { ratio(bump, 1_000_000) };
        if prob {
            v[which] = v[which].clone().min(Exact::one());
        }
        let bumped = residual(&v[0], &v[1], &v[2], &v[3], &v[4]);
        let ok = if prob { bumped <= base } else { bumped >= base };
        prop_assert!(ok, "{} -> {}", base, bumped);
        Ok(())
    })
    .map_err(|e| format!("residual monotonicity: {e}"))?;

    let classes = [SeverityClass::S0, SeverityClass::S1, SeverityClass::S2, SeverityClass::S3];
    let item = (0usize..2, 0usize..4, 0u32..1000).prop_map(move |(c, s, r)| RiskAscription {
        event_id: "E".into(),
        hazard_id: "H".into(),
        risk: RiskValue {
            rate: EventsPerHour::new(ratio(r, 1_000_000)).unwrap(),
            severity_class: classes[s],
        },
        criterion_id: ["A", "B"][c].into(),
    });
    let lists = (proptest::collection::vec(item.clone(), 0..10), proptest::collection::vec(item, 0..10));
    run(256, lists, |(a, b)| {
        let p = WeighingPolicy::PerClassNoOffsetting;
        let mut ab = a.clone();
        ab.extend(b.iter().cloned());
        let mut ba = b.clone();
        ba.extend(a.iter().cloned());
        let whole = aggregate(&ab, p);
        prop_assert_eq!(&whole, &aggregate(&ba, p));
        let (x, y) = (aggregate(&a, p), aggregate(&b, p));
        for (k, v) in &whole {
            let sum = x.get(k).cloned().unwrap_or_else(EventsPerHour::zero) + y.get(k).cloned().unwrap_or_else(EventsPerHour::zero);
            prop_assert_eq!(v, &sum);
        }
        Ok(())
    })
    .map_err(|e| format!("aggregate: {e}"))?;

    let crashes = crash_consistency(50)?;
    Ok(format!(
        "round trip 100, state machine 1000, residual 10000, aggregate 256, {crashes} injected crashes"
    ))
}

fn crash_consistency(target: usize) -> Result<usize, String> {
    let sequence = [
        Mutation::Run { max_iterations: 8 },
        Mutation::ProposeMeasure {
            proposal: fixture::crossing_intention_proposal(),
            apply: true,
        },
        Mutation::Step,
        Mutation::Step,
    ];
    let mut crashes = 0;
    let mut prefix = 0;
    while crashes < target {
        for n in 0.. {
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            let mut ws = Workspace::init(dir.path(), Some(fixture::NAME), false, &stamp()).map_err(|e| e.to_string())?;
            for m in &sequence[..prefix] {
                ws.transact(None, m.clone(), &stamp()).map_err(|e| e.to_string())?;
            }
            let committed = Workspace::open(dir.path()).map_err(|e| e.to_string())?;
            ws.inject_crash_after(n);
            match ws.transact(None, sequence[prefix].clone(), &stamp()) {
                Err(Error::Io { .. }) => {
                    crashes += 1;
                    let seen = Workspace::open(dir.path()).map_err(|e| e.to_string())?;
                    ensure(
                        seen.project() == committed.project() && seen.version() == committed.version(),
                        format!("reload after crash {n} of mutation {prefix} differs from committed state"),
                    )?;
                }
                Ok(_) => break,
                Err(e) => return Err(e.to_string()),
            }
        }
        prefix = (prefix + 1) % sequence.len();
    }
    Ok(crashes)
}

fn rust_sources(dir: &Path, out: &mut Vec<PathBuf>) {
    for e in fs::read_dir(dir).into_iter().flatten().flatten() {
        let p = e.path();
        if p.is_dir() {
            rust_sources(&p, out);
        } else if p.extension().is_some_and(|x| x == "rs") {
            out.push(p);
        }
    }
}

fn criterion_8() -> Check {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let mut files = Vec::new();
    rust_sources(&root.join("src"), &mut files);
    rust_sources(&root.join("tests"), &mut files);
    let text: String = files.iter().map(|f| fs::read_to_string(f).unwrap_or_default()).collect();
    let mut missing = Vec::new();
    for r in REQUIREMENTS {
        if r.tests.is_empty() {
            missing.push(format!("{} has no tests", r.id));
        }
        for t in r.tests {
            if !text.contains(&format!("fn {t}(")) {
                missing.push(format!("{} -> {t}", r.id));
            }
        }
    }
    ensure(missing.is_empty(), format!("unmapped: {}", missing.join(", ")))?;

    // The machine-readable report carries the coverage table.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ws = Workspace::init(dir.path(), Some(fixture::NAME), false, &stamp()).map_err(|e| e.to_string())?;
    let json = serde_json::to_value(ws.report()).map_err(|e| e.to_string())?;
    let ids: Vec<&str> = json["requirements_coverage"]
        .as_array()
        .ok_or("no requirements_coverage")?
        .iter()
        .filter_map(|r| r["id"].as_str())
        .collect();
    let want = ["R1", "R2", "R3", "R4", "R5", "R8", "R9", "R10", "R11", "R12", "R13", "R14", "R15"];
    ensure(ids == want, format!("coverage ids {ids:?}"))?;
    let n: usize = REQUIREMENTS.iter().map(|r| r.tests.len()).sum();
    Ok(format!("{} requirements, {n} named tests found, coverage table in report", REQUIREMENTS.len()))
}

fn main() {
    let checks: [(&str, fn() -> Check); 8] = [
        ("fleet exposure", criterion_1),
        ("ADS harm rate", criterion_2),
        ("human-driving exposure", criterion_3),
        ("tolerable rate", criterion_4),
        ("end-to-end fixture", criterion_5),
        ("rule-engine oracle", criterion_6),
        ("property suites", criterion_7),
        ("requirements traceability", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    // No large-scale experiments to reproduce: this criterion holds when the
    // golden values and property suites above hold.
    if failed == 0 {
        println!("criterion 9: PASS  desk-scale scope: criteria 1-7 hold; no large-scale experiments to reproduce");
    } else {
        failed += 1;
        println!("criterion 9: FAIL  desk-scale scope: {failed} criteria above failed");
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
