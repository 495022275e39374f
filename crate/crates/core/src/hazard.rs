//! Identification of hazardous events from target behavior (T ∩ H) and from
//! guide-word deviations of target behavior (H \ T).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::condition::{BehaviorView, Condition};
use crate::dsl::{is_valid_ident, BehaviorSpec};
use crate::error::{ConditionError, Result};
use crate::inference::DerivedState;
use crate::ontology::{Hazard, HazardousEvent, Provenance, Scenario, TriggeringBehavior};
use crate::quantity::Probability;

/// A HAZOP-style deviation operator.
///
/// `not` removes the base action from the behavior; every other guide word
/// keeps the action but performs it wrongly (e.g. too early or too late).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(try_from = "String", into = "String")]
#[schemars(with = "String")]
pub struct GuideWord(String);

impl GuideWord {
    pub fn not() -> Self {
        GuideWord("not".into())
    }

    pub fn early() -> Self {
        GuideWord("early".into())
    }

    pub fn late() -> Self {
        GuideWord("late".into())
    }

    pub fn defaults() -> Vec<GuideWord> {
        vec![GuideWord::not(), GuideWord::early(), GuideWord::late()]
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn omits_action(&self) -> bool {
        self.0 == "not"
    }
}

impl fmt::Display for GuideWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for GuideWord {
    type Err = ConditionError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if is_valid_ident(s) || s == "not" {
            Ok(GuideWord(s.to_string()))
        } else {
            Err(ConditionError::UnknownGuideWord(s.to_string()))
        }
    }
}

impl TryFrom<String> for GuideWord {
    type Error = ConditionError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<GuideWord> for String {
    fn from(g: GuideWord) -> String {
        g.0
    }
}

/// `<guide word>:<action id>`, e.g. `not:stop_at_crosswalk`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DeviationId {
    pub guide_word: GuideWord,
    pub action: String,
}

impl fmt::Display for DeviationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.guide_word, self.action)
    }
}

impl FromStr for DeviationId {
    type Err = ConditionError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (g, a) = s.split_once(':').ok_or_else(|| ConditionError::Malformed {
            text: s.to_string(),
            reason: "expected `<guide word>:<action>`".into(),
        })?;
        if !is_valid_ident(a) {
            return Err(ConditionError::Malformed {
                text: s.to_string(),
                reason: format!("`{a}` is not an identifier"),
            });
        }
        Ok(DeviationId {
            guide_word: g.parse()?,
            action: a.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
pub struct DeviationBehavior {
    pub id: String,
    pub base_action: String,
    pub guide_word: GuideWord,
    pub description: String,
}

/// Per-occurrence probabilities of deviating from target behavior.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct DeviationModel {
    /// Guide words applied in deviation analysis.
    #[serde(default = "GuideWord::defaults")]
    pub guide_words: Vec<GuideWord>,
    /// Probability per scenario occurrence, by guide word. Guide words without
    /// an entry are assumed to deviate with probability 1.
    #[serde(default)]
    pub default_probability: BTreeMap<GuideWord, Probability>,
    #[serde(default)]
    pub overrides: Vec<DeviationOverride>,
}

impl Default for DeviationModel {
    fn default() -> Self {
        DeviationModel {
            guide_words: GuideWord::defaults(),
            default_probability: BTreeMap::new(),
            overrides: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct DeviationOverride {
    pub action: String,
    pub guide_word: GuideWord,
    pub probability: Probability,
    /// Known triggering condition, carried into event notes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triggering_condition: Option<String>,
}

impl DeviationModel {
    fn lookup(&self, action: &str, guide_word: &GuideWord) -> Option<&DeviationOverride> {
        self.overrides
            .iter()
            .find(|o| o.action == action && &o.guide_word == guide_word)
    }

    pub fn probability(&self, action: &str, guide_word: &GuideWord) -> Probability {
        if let Some(o) = self.lookup(action, guide_word) {
            return o.probability.clone();
        }
        self.default_probability
            .get(guide_word)
            .cloned()
            .unwrap_or_else(Probability::one)
    }

    pub fn triggering_condition(&self, action: &str, guide_word: &GuideWord) -> Option<&str> {
        self.lookup(action, guide_word)?.triggering_condition.as_deref()
    }
}

/// A hazardous event together with what made it match.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct HazardMatch {
    pub hazardous_event: HazardousEvent,
    pub matched_condition: String,
    pub behavior_link: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    ConflictingActions,
    UnascribedRisk,
    EmptyCatalog,
    BoundaryAcceptance,
    NonReducingMeasure,
    NoTreatmentAvailable,
}

/// Something the analysis wants a human to look at; not an error.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Finding {
    pub kind: FindingKind,
    pub subject: String,
    pub message: String,
}

fn parse_conditions<'h>(hazards: &'h [Hazard], spec: &BehaviorSpec) -> Result<Vec<(&'h Hazard, Condition)>> {
    hazards
        .iter()
        .map(|h| {
            let c: Condition = h.applicability.parse()?;
            c.check_against(spec)?;
            Ok((h, c))
        })
        .collect()
}

fn event_description(hazard: &Hazard) -> String {
    hazard
        .event_description
        .clone()
        .unwrap_or_else(|| hazard.description.clone())
}

/// Events of provenance `target_behavior`: one per (hazard, scenario) whose
/// applicability holds on the scenario's derived facts and target actions.
/// Sorted by (hazard id, scenario id).
pub fn identify_hazardous_events(
    spec: &BehaviorSpec,
    catalog: &[Scenario],
    hazards: &[Hazard],
    states: &BTreeMap<String, DerivedState>,
) -> Result<Vec<HazardMatch>> {
    let conditions = parse_conditions(hazards, spec)?;
    let mut out = Vec::new();
    for (hazard, cond) in &conditions {
        for scenario in catalog {
            let Some(state) = states.get(&scenario.id) else {
                continue;
            };
            let view = BehaviorView {
                facts: &state.derived_facts,
                actions: &state.actions,
                deviation: None,
            };
            if !cond.evaluate(&view) {
                continue;
            }
            let actions: Vec<String> = state.actions.iter().cloned().collect();
            let triggering = TriggeringBehavior::TargetActions { actions };
            out.push(HazardMatch {
                behavior_link: triggering.to_string(),
                matched_condition: cond.to_string(),
                hazardous_event: HazardousEvent {
                    id: format!("HE-{}-{}", hazard.id, scenario.id),
                    hazard_id: hazard.id.clone(),
                    scenario_id: scenario.id.clone(),
                    provenance: Provenance::TargetBehavior,
                    triggering_behavior: triggering,
                    description: event_description(hazard),
                    note: None,
                },
            });
        }
    }
    out.sort_by(|a, b| {
        (&a.hazardous_event.hazard_id, &a.hazardous_event.scenario_id)
            .cmp(&(&b.hazardous_event.hazard_id, &b.hazardous_event.scenario_id))
    });
    Ok(out)
}

fn deviation_description(guide_word: &GuideWord, action_description: &str) -> String {
    match guide_word.as_str() {
        "not" => format!("not {action_description}"),
        "early" => format!("{action_description} too early"),
        "late" => format!("{action_description} too late"),
        other => format!("{action_description} ({other})"),
    }
}

/// Applies every guide word to every action: `|actions| × |guide_words|`
/// distinct deviations, ordered by action then guide word.
pub fn generate_deviations(
    spec: &BehaviorSpec,
    actions: &BTreeSet<String>,
    guide_words: &[GuideWord],
) -> Vec<DeviationBehavior> {
    let mut seen = BTreeSet::new();
    let words: Vec<&GuideWord> = guide_words.iter().filter(|g| seen.insert(*g)).collect();
    let mut out = Vec::with_capacity(actions.len() * words.len());
    for action in actions {
        let desc = spec
            .actions
            .get(action)
            .map_or(action.as_str(), |a| a.description.as_str());
        for g in &words {
            let id = DeviationId {
                guide_word: (*g).clone(),
                action: action.clone(),
            };
            out.push(DeviationBehavior {
                id: id.to_string(),
                base_action: action.clone(),
                guide_word: (*g).clone(),
                description: deviation_description(g, desc),
            });
        }
    }
    out
}

/// Events of provenance `deviation`: a deviation makes a hazard applicable
/// that the scenario's target behavior alone does not. Sorted by
/// (hazard id, scenario id, deviation id).
pub fn identify_deviation_events(
    spec: &BehaviorSpec,
    deviations: &BTreeMap<String, Vec<DeviationBehavior>>,
    catalog: &[Scenario],
    hazards: &[Hazard],
    states: &BTreeMap<String, DerivedState>,
    model: &DeviationModel,
) -> Result<Vec<HazardMatch>> {
    let conditions = parse_conditions(hazards, spec)?;
    let mut out = Vec::new();
    for (hazard, cond) in &conditions {
        for scenario in catalog {
            let (Some(state), Some(devs)) = (states.get(&scenario.id), deviations.get(&scenario.id)) else {
                continue;
            };
            let nominal = BehaviorView {
                facts: &state.derived_facts,
                actions: &state.actions,
                deviation: None,
            };
            if cond.evaluate(&nominal) {
                // Already part of T ∩ H.
                continue;
            }
            for dev in devs {
                let mut actions = state.actions.clone();
                if dev.guide_word.omits_action() {
                    actions.remove(&dev.base_action);
                }
                let view = BehaviorView {
                    facts: &state.derived_facts,
                    actions: &actions,
                    deviation: Some((&dev.base_action, &dev.guide_word)),
                };
                if !cond.evaluate(&view) {
                    continue;
                }
                let note = model
                    .triggering_condition(&dev.base_action, &dev.guide_word)
                    .map(|c| format!("triggering condition: {c}"));
                out.push(HazardMatch {
                    behavior_link: dev.id.clone(),
                    matched_condition: cond.to_string(),
                    hazardous_event: HazardousEvent {
                        id: format!("HE-{}-{}-{}-{}", hazard.id, scenario.id, dev.guide_word, dev.base_action),
                        hazard_id: hazard.id.clone(),
                        scenario_id: scenario.id.clone(),
                        provenance: Provenance::Deviation,
                        triggering_behavior: TriggeringBehavior::Deviation {
                            deviation_id: dev.id.clone(),
                        },
                        description: format!("{} ({})", event_description(hazard), dev.description),
                        note,
                    },
                });
            }
        }
    }
    out.sort_by(|a, b| {
        let key = |m: &HazardMatch| {
            (
                m.hazardous_event.hazard_id.clone(),
                m.hazardous_event.scenario_id.clone(),
                m.behavior_link.clone(),
            )
        };
        key(a).cmp(&key(b))
    });
    Ok(out)
}

/// Flags scenarios whose target behavior contains both actions of a declared
/// conflicting pair.
pub fn conflicting_actions(states: &BTreeMap<String, DerivedState>, conflicts: &[[String; 2]]) -> Vec<Finding> {
    let mut out = Vec::new();
    for (sid, state) in states {
        for [a, b] in conflicts {
            if state.actions.contains(a) && state.actions.contains(b) {
                out.push(Finding {
                    kind: FindingKind::ConflictingActions,
                    subject: sid.clone(),
                    message: format!("specification insufficiency: `{a}` and `{b}` are both derived"),
                });
            }
        }
    }
    out
}
