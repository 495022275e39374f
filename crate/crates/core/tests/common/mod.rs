#![allow(dead_code)]

use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use proptest::prelude::*;
use riskcore::dsl::{Action, BehaviorSpec, Fact, Rule};
use riskcore::hazard_log::Stamp;
use riskcore::ontology::{RiskValue, SeverityClass};
use riskcore::quantity::{EventsPerHour, Exact, Probability};
use riskcore::rmc::{Command, Phase};
use riskcore::treatment::{predicted_residual, ResidualModel};

pub fn stamp() -> Stamp {
    Stamp {
        timestamp: DateTime::parse_from_rfc3339("2024-01-01T00:00:00Z").unwrap().with_timezone(&Utc),
        actor: "test".into(),
    }
}

pub fn rel_close(actual: f64, expected: f64, tol: f64) -> bool {
    ((actual - expected) / expected).abs() <= tol
}

/// A rule as generated: antecedent fact indices and a consequent that is
/// either a fact (`Ok`) or an action (`Err`) index.
pub type RawRule = (Vec<usize>, Result<usize, usize>);

pub fn build_spec(facts: usize, actions: usize, rules: &[RawRule]) -> BehaviorSpec {
    let mut spec = BehaviorSpec::default();
    for i in 0..facts {
        let id = format!("f{i}");
        spec.facts.insert(
            id.clone(),
            Fact {
                id,
                description: format!("fact {i}"),
            },
        );
    }
    for i in 0..actions {
        let id = format!("a{i}");
        spec.actions.insert(
            id.clone(),
            Action {
                id,
                description: format!("action {i}"),
            },
        );
    }
    for (n, (ants, cons)) in rules.iter().enumerate() {
        let id = format!("r{n}");
        let antecedents: Vec<String> = ants.iter().map(|i| format!("f{i}")).collect();
        let consequent = match cons {
            Ok(f) => format!("f{f}"),
            Err(a) => format!("a{a}"),
        };
        spec.rules.insert(
            id.clone(),
            Rule {
                id,
                antecedents,
                consequent,
            },
        );
    }
    spec
}

/// Specs with up to `max_facts` facts, `max_actions` actions and `max_rules`
/// rules, plus a set of asserted fact indices.
pub fn spec_strategy(
    max_facts: usize,
    max_actions: usize,
    max_rules: usize,
) -> impl Strategy<Value = (BehaviorSpec, BTreeSet<String>)> {
    (1..=max_facts, 0..=max_actions).prop_flat_map(move |(nf, na)| {
        let consequent = if na == 0 {
            (0..nf).prop_map(Ok).boxed()
        } else {
            prop_oneof![(0..nf).prop_map(Ok), (0..na).prop_map(Err)].boxed()
        };
        let rule = (proptest::sample::subsequence((0..nf).collect::<Vec<_>>(), 1..=nf.min(3)), consequent);
        (
            proptest::collection::vec(rule, 0..=max_rules),
            proptest::sample::subsequence((0..nf).collect::<Vec<_>>(), 0..=nf),
        )
            .prop_map(move |(rules, asserted)| {
                let spec = build_spec(nf, na, &rules);
                let asserted = asserted.into_iter().map(|i| format!("f{i}")).collect();
                (spec, asserted)
            })
    })
}

/// Naive saturation: apply every rule until nothing changes.
pub fn saturate(spec: &BehaviorSpec, asserted: &BTreeSet<String>) -> (BTreeSet<String>, BTreeSet<String>) {
    let mut facts = asserted.clone();
    let mut actions = BTreeSet::new();
    loop {
        let mut changed = false;
        for r in spec.rules.values() {
            if r.antecedents.iter().all(|a| facts.contains(a)) {
                let target = if spec.actions.contains_key(&r.consequent) {
                    &mut actions
                } else {
                    &mut facts
                };
                changed |= target.insert(r.consequent.clone());
            }
        }
        if !changed {
            return (facts, actions);
        }
    }
}

/// Reference transition table of the loop state machine.
pub fn reference(phase: Phase, iteration: u8, cmd: Command) -> Option<(Phase, u8)> {
    use Command::*;
    use Phase::*;
    Some(match (phase, iteration, cmd) {
        (_, _, Reset) => (Analysis, 1),
        (Analysis, i, Analyze) => (Evaluation, i),
        (Evaluation, i, Evaluate { accepted: false }) => (Treatment, i),
        (Evaluation, 1, Evaluate { accepted: true }) => (Analysis, 2),
        (Evaluation, 2, Evaluate { accepted: true }) => (Done, 2),
        (Treatment, _, Treat) => (Analysis, 1),
        _ => return None,
    })
}

pub fn ratio(n: u32, d: u32) -> Exact {
    Exact::ratio(n as i64, d as i64)
}

pub fn residual(initial: &Exact, min: &Exact, eff: &Exact, integ: &Exact, corrupt: &Exact) -> Exact {
    predicted_residual(&ResidualModel {
        initial: RiskValue {
            rate: EventsPerHour::new(initial.clone()).unwrap(),
            severity_class: SeverityClass::S3,
        },
        minimum_achievable_rate: EventsPerHour::new(min.clone()).unwrap(),
        reduction_effectiveness: Probability::new(eff.clone()).unwrap(),
        integrity: Probability::new(integ.clone()).unwrap(),
        corrupt_risk_rate: EventsPerHour::new(corrupt.clone()).unwrap(),
    })
    .rate
    .value()
    .clone()
}
