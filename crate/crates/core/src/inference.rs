//! Forward-chaining least-fixpoint inference over a [`BehaviorSpec`].
//!
//! Rules fire in rounds: a rule fires in round `k` when its last missing
//! antecedent was produced in round `k - 1` (asserted facts count as round 0).
//! Each rule fires at most once. Because rules are conjunctive and monotone,
//! the resulting sets do not depend on rule order.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::dsl::BehaviorSpec;
use crate::error::{Error, Result};
use crate::ontology::Scenario;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
pub struct FiredRule {
    pub rule_id: String,
    pub iteration: usize,
}

/// Target behavior of one scenario: the closure of its asserted facts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct DerivedState {
    pub scenario_id: String,
    pub asserted_facts: BTreeSet<String>,
    /// Asserted plus derived facts.
    pub derived_facts: BTreeSet<String>,
    pub actions: BTreeSet<String>,
    /// Ordered by (iteration, rule id).
    pub fired_rules: Vec<FiredRule>,
    /// Number of rounds in which at least one rule fired.
    pub iterations: usize,
}

impl DerivedState {
    /// Re-applies `fired_rules` in order starting from the asserted facts.
    ///
    /// Returns `None` if some fired rule was not yet enabled at its position,
    /// i.e. the justification chain is broken.
    pub fn replay(&self, spec: &BehaviorSpec) -> Option<(BTreeSet<String>, BTreeSet<String>)> {
        let mut facts = self.asserted_facts.clone();
        let mut actions = BTreeSet::new();
        let mut last_iteration = 0;
        for fired in &self.fired_rules {
            if fired.iteration < last_iteration {
                return None;
            }
            last_iteration = fired.iteration;
            let rule = spec.rules.get(&fired.rule_id)?;
            if !rule.antecedents.iter().all(|a| facts.contains(a)) {
                return None;
            }
            if spec.is_action(&rule.consequent) {
                actions.insert(rule.consequent.clone());
            } else {
                facts.insert(rule.consequent.clone());
            }
        }
        Some((facts, actions))
    }
}

/// Computes the closure of `asserted` under the rules of `spec`.
pub fn infer_from(spec: &BehaviorSpec, scenario_id: &str, asserted: &BTreeSet<String>) -> Result<DerivedState> {
    if let Some(unknown) = asserted.iter().find(|f| !spec.is_fact(f)) {
        return Err(Error::UnknownAssertedFact {
            scenario: scenario_id.to_string(),
            fact: unknown.clone(),
        });
    }

    let mut known: BTreeSet<String> = asserted.clone();
    let mut actions: BTreeSet<String> = BTreeSet::new();

    let mut waiting_on: HashMap<&str, Vec<&str>> = HashMap::new();
    let mut missing: HashMap<&str, usize> = HashMap::new();
    let mut ready: Vec<&str> = Vec::new();
    for rule in spec.rules.values() {
        let open: BTreeSet<&str> = rule
            .antecedents
            .iter()
            .map(String::as_str)
            .filter(|a| !known.contains(*a))
            .collect();
        for a in &open {
            waiting_on.entry(a).or_default().push(&rule.id);
        }
        missing.insert(&rule.id, open.len());
        if open.is_empty() {
            ready.push(&rule.id);
        }
    }

    let mut fired = Vec::new();
    let mut round = 0;
    while !ready.is_empty() {
        round += 1;
        let mut produced: Vec<&str> = Vec::new();
        for rule_id in ready.drain(..) {
            fired.push(FiredRule {
                rule_id: rule_id.to_string(),
                iteration: round,
            });
            let consequent = spec.rules[rule_id].consequent.as_str();
            if spec.is_action(consequent) {
                actions.insert(consequent.to_string());
            } else if known.insert(consequent.to_string()) {
                produced.push(consequent);
            }
        }
        for fact in produced {
            for &rule_id in waiting_on.get(fact).map(Vec::as_slice).unwrap_or(&[]) {
                let m = missing.get_mut(rule_id).expect("every rule has a counter");
                *m -= 1;
                if *m == 0 {
                    ready.push(rule_id);
                }
            }
        }
    }
    fired.sort_by(|a, b| (a.iteration, &a.rule_id).cmp(&(b.iteration, &b.rule_id)));

    Ok(DerivedState {
        scenario_id: scenario_id.to_string(),
        asserted_facts: asserted.clone(),
        derived_facts: known,
        actions,
        fired_rules: fired,
        iterations: round,
    })
}

pub fn infer(spec: &BehaviorSpec, scenario: &Scenario) -> Result<DerivedState> {
    infer_from(spec, &scenario.id, &scenario.asserted_facts)
}

/// Derived state for every scenario of a catalog, keyed by scenario id.
pub fn derive_catalog(spec: &BehaviorSpec, catalog: &[Scenario]) -> Result<BTreeMap<String, DerivedState>> {
    catalog.iter().map(|s| Ok((s.id.clone(), infer(spec, s)?))).collect()
}

/// The set T: per-scenario target action sets.
pub fn target_behavior_set(spec: &BehaviorSpec, catalog: &[Scenario]) -> Result<BTreeMap<String, BTreeSet<String>>> {
    Ok(derive_catalog(spec, catalog)?
        .into_iter()
        .map(|(id, state)| (id, state.actions))
        .collect())
}
