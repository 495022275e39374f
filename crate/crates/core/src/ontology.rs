//! Risk-assessment and risk-treatment entities, their relation invariants,
//! and traceability queries across them.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::condition::Condition;
use crate::dsl::{self, BehaviorSpec, FactKind};
use crate::error::{Error, Result};
use crate::estimation::{CollisionDescriptor, FleetExposure};
use crate::hazard::{DeviationId, DeviationModel};
use crate::quantity::{EventsPerHour, EventsPerYear, Exact, Probability};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema)]
pub enum SeverityClass {
    S0,
    S1,
    S2,
    S3,
}

impl SeverityClass {
    pub const ALL: [SeverityClass; 4] = [SeverityClass::S0, SeverityClass::S1, SeverityClass::S2, SeverityClass::S3];
}

impl fmt::Display for SeverityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SeverityClass::S0 => "S0",
            SeverityClass::S1 => "S1",
            SeverityClass::S2 => "S2",
            SeverityClass::S3 => "S3",
        };
        f.write_str(s)
    }
}

impl FromStr for SeverityClass {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "S0" => Ok(SeverityClass::S0),
            "S1" => Ok(SeverityClass::S1),
            "S2" => Ok(SeverityClass::S2),
            "S3" => Ok(SeverityClass::S3),
            other => Err(format!("unknown severity class `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Harm {
    pub id: String,
    pub description: String,
    pub severity_class: SeverityClass,
    /// The collision context the severity class was classified from, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collision: Option<CollisionDescriptor>,
}

/// A potential source of harm, present in scenarios where `applicability` holds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Hazard {
    pub id: String,
    pub description: String,
    pub harm_id: String,
    /// Condition over facts and behavior, see [`crate::condition`].
    pub applicability: String,
    /// Wording used for hazardous events instantiated from this hazard.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_description: Option<String>,
    /// Statement for a safety goal derived from this hazard.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_statement: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    EgoSystem,
    VulnerableRoadUser,
    OtherVehicle,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Agent {
    pub id: String,
    pub kind: AgentKind,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct UseCase {
    pub id: String,
    pub description: String,
    pub scenario_ids: Vec<String>,
}

/// A functional scenario: asserted facts plus how often it occurs and how
/// controllable a hazardous event in it is.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Scenario {
    pub id: String,
    pub use_case: String,
    #[serde(default)]
    pub description: String,
    pub agents: Vec<String>,
    pub asserted_facts: BTreeSet<String>,
    /// Occurrences per operating hour. Takes precedence over
    /// `occurrences_per_year`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency_per_hour: Option<EventsPerHour>,
    /// Fleet-wide occurrences per year; converted with the catalog's fleet
    /// exposure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occurrences_per_year: Option<EventsPerYear>,
    /// Probability that the involved agents avert harm.
    pub controllability: Probability,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    TargetBehavior,
    Deviation,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::TargetBehavior => "target_behavior",
            Provenance::Deviation => "deviation",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TriggeringBehavior {
    /// The scenario's target action set (empty when no rule derives an action).
    TargetActions { actions: Vec<String> },
    Deviation { deviation_id: String },
}

impl fmt::Display for TriggeringBehavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TriggeringBehavior::TargetActions { actions } if actions.is_empty() => f.write_str("no_action"),
            TriggeringBehavior::TargetActions { actions } => f.write_str(&actions.join("+")),
            TriggeringBehavior::Deviation { deviation_id } => f.write_str(deviation_id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct HazardousEvent {
    pub id: String,
    pub hazard_id: String,
    pub scenario_id: String,
    pub provenance: Provenance,
    pub triggering_behavior: TriggeringBehavior,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Risk as a (rate, severity) pair. Never collapsed to one number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct RiskValue {
    pub rate: EventsPerHour,
    pub severity_class: SeverityClass,
}

impl fmt::Display for RiskValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/h @ {}", self.rate.value().display_sci(), self.severity_class)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum WeighingPolicy {
    #[default]
    PerClassNoOffsetting,
}

/// How a criterion's tolerable rate was derived from a human-driving baseline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct CriterionDerivation {
    pub baseline: crate::estimation::BaselineExposure,
    pub harm_events_per_year: EventsPerYear,
    pub severity_class: SeverityClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct RiskAcceptanceCriterion {
    pub id: String,
    pub description: String,
    pub tolerable_rate_per_severity: BTreeMap<SeverityClass, EventsPerHour>,
    #[serde(default)]
    pub weighing_policy: WeighingPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derivation: Option<CriterionDerivation>,
}

/// Maps (use case, severity class) to criteria. `None` matches anything.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct AscriptionRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub use_case: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity_class: Option<SeverityClass>,
    pub criteria: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct SafetyGoal {
    pub id: String,
    pub statement: String,
    pub hazard_ids: Vec<String>,
    pub hazardous_event_ids: Vec<String>,
    /// Ratio of initial to target rate; at least 1.
    pub nominal_risk_reduction: Exact,
    pub required_integrity: Probability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    BehaviorSpecDelta,
    OddRestriction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum MeasureStatus {
    #[default]
    Queued,
    Applied,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct SafetyMeasure {
    pub id: String,
    pub goal_id: String,
    pub kind: MeasureKind,
    /// Spec-delta text or ODD-constraint expression.
    pub payload: String,
    pub claimed_reduction_effectiveness: Probability,
    pub integrity: Probability,
    pub corrupt_behavior_risk: RiskValue,
    #[serde(default)]
    pub status: MeasureStatus,
}

/// A measure drafted against a hazard before any safety goal exists for it.
/// Becomes a [`SafetyMeasure`] once the hazard's goal is derived.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct MeasureProposal {
    pub id: String,
    pub hazard_id: String,
    pub kind: MeasureKind,
    pub payload: String,
    pub claimed_reduction_effectiveness: Probability,
    pub integrity: Probability,
    pub corrupt_behavior_rate: EventsPerHour,
    /// Statement of the behavioral safety requirement to generate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requirement_statement: Option<String>,
}

/// Scenario-scoped requirement produced by a behavior-spec measure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct BehavioralSafetyRequirement {
    pub id: String,
    pub statement: String,
    pub goal_id: String,
    pub measure_id: String,
    pub scenario_scope: BTreeSet<String>,
}

/// Every entity of one workspace, as a single consistent value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Model {
    pub spec: BehaviorSpec,
    pub harms: Vec<Harm>,
    pub hazards: Vec<Hazard>,
    pub agents: Vec<Agent>,
    pub use_cases: Vec<UseCase>,
    pub scenarios: Vec<Scenario>,
    pub fleet_exposure: Option<FleetExposure>,
    pub deviation_model: DeviationModel,
    /// Pairs of actions that must never be derived together.
    pub action_conflicts: Vec<[String; 2]>,
    pub events: Vec<HazardousEvent>,
    pub criteria: Vec<RiskAcceptanceCriterion>,
    pub ascription_rules: Vec<AscriptionRule>,
    pub goals: Vec<SafetyGoal>,
    pub measures: Vec<SafetyMeasure>,
    pub requirements: Vec<BehavioralSafetyRequirement>,
    pub proposals: Vec<MeasureProposal>,
}

impl Model {
    pub fn hazard(&self, id: &str) -> Option<&Hazard> {
        self.hazards.iter().find(|h| h.id == id)
    }

    pub fn harm(&self, id: &str) -> Option<&Harm> {
        self.harms.iter().find(|h| h.id == id)
    }

    pub fn scenario(&self, id: &str) -> Option<&Scenario> {
        self.scenarios.iter().find(|s| s.id == id)
    }

    pub fn event(&self, id: &str) -> Option<&HazardousEvent> {
        self.events.iter().find(|e| e.id == id)
    }

    pub fn criterion(&self, id: &str) -> Option<&RiskAcceptanceCriterion> {
        self.criteria.iter().find(|c| c.id == id)
    }

    pub fn goal(&self, id: &str) -> Option<&SafetyGoal> {
        self.goals.iter().find(|g| g.id == id)
    }

    pub fn measure(&self, id: &str) -> Option<&SafetyMeasure> {
        self.measures.iter().find(|m| m.id == id)
    }

    /// Severity of the harm a hazard references.
    pub fn hazard_severity(&self, hazard_id: &str) -> Option<SeverityClass> {
        let hazard = self.hazard(hazard_id)?;
        Some(self.harm(&hazard.harm_id)?.severity_class)
    }
}

// ------------------------------------------------------------------------------------------------
// Validation
// ------------------------------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Violation {
    pub entity_id: String,
    pub relation: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, entity_id: &str, relation: &str, message: impl Into<String>) {
        self.violations.push(Violation {
            entity_id: entity_id.to_string(),
            relation: relation.to_string(),
            message: message.into(),
        });
    }
}

fn check_unique<'a>(report: &mut ValidationReport, kind: &str, ids: impl Iterator<Item = &'a str>) {
    let mut seen = BTreeSet::new();
    for id in ids {
        if id.trim().is_empty() {
            report.push(id, "id", format!("{kind} with empty id"));
        } else if !seen.insert(id) {
            report.push(id, "id", format!("duplicate {kind} id"));
        }
    }
}

fn check_payload(r: &mut ValidationReport, id: &str, kind: MeasureKind, payload: &str) {
    match kind {
        MeasureKind::BehaviorSpecDelta => match dsl::parse_delta(payload) {
            Ok(d) if d.is_empty() => r.push(id, "payload", "empty behavior-spec delta"),
            Ok(_) => {}
            Err(e) => r.push(id, "payload", e.to_string()),
        },
        MeasureKind::OddRestriction => {
            if payload.trim().is_empty() {
                r.push(id, "payload", "empty ODD restriction");
            }
        }
    }
}

/// Checks every relation invariant of the model. An empty report means the
/// model is consistent.
pub fn validate_model(model: &Model) -> ValidationReport {
    let mut r = ValidationReport::default();
    let spec = &model.spec;

    if let Err(e) = spec.check() {
        r.push("spec", "spec", e.to_string());
    }

    check_unique(&mut r, "harm", model.harms.iter().map(|h| h.id.as_str()));
    check_unique(&mut r, "hazard", model.hazards.iter().map(|h| h.id.as_str()));
    check_unique(&mut r, "agent", model.agents.iter().map(|a| a.id.as_str()));
    check_unique(&mut r, "use case", model.use_cases.iter().map(|u| u.id.as_str()));
    check_unique(&mut r, "scenario", model.scenarios.iter().map(|s| s.id.as_str()));
    check_unique(&mut r, "hazardous event", model.events.iter().map(|e| e.id.as_str()));
    check_unique(&mut r, "criterion", model.criteria.iter().map(|c| c.id.as_str()));
    check_unique(&mut r, "safety goal", model.goals.iter().map(|g| g.id.as_str()));
    check_unique(&mut r, "safety measure", model.measures.iter().map(|m| m.id.as_str()));
    check_unique(
        &mut r,
        "behavioral safety requirement",
        model.requirements.iter().map(|b| b.id.as_str()),
    );
    // Traced entities share one namespace.
    {
        let mut owners: BTreeMap<&str, &str> = BTreeMap::new();
        let traced = model
            .hazards
            .iter()
            .map(|h| (h.id.as_str(), "hazard"))
            .chain(model.scenarios.iter().map(|s| (s.id.as_str(), "scenario")))
            .chain(model.events.iter().map(|e| (e.id.as_str(), "hazardous event")))
            .chain(model.goals.iter().map(|g| (g.id.as_str(), "safety goal")))
            .chain(model.measures.iter().map(|m| (m.id.as_str(), "safety measure")))
            .chain(model.requirements.iter().map(|b| (b.id.as_str(), "behavioral safety requirement")));
        for (id, kind) in traced {
            if let Some(prev) = owners.insert(id, kind) {
                if prev != kind {
                    r.push(id, "id", format!("id shared by a {prev} and a {kind}"));
                }
            }
        }
    }

    for harm in &model.harms {
        if harm.description.trim().is_empty() {
            r.push(&harm.id, "description", "harm description is empty");
        }
    }

    for hazard in &model.hazards {
        if hazard.description.trim().is_empty() {
            r.push(&hazard.id, "description", "hazard description is empty");
        }
        if model.harm(&hazard.harm_id).is_none() {
            r.push(&hazard.id, "harm_id", "unresolved harm_id");
        }
        match hazard.applicability.parse::<Condition>() {
            Ok(cond) => {
                if let Err(e) = cond.check_against(spec) {
                    r.push(&hazard.id, "applicability", e.to_string());
                }
            }
            Err(e) => r.push(&hazard.id, "applicability", e.to_string()),
        }
    }

    for agent in &model.agents {
        if agent.id.trim().is_empty() {
            r.push(&agent.id, "id", "agent id is empty");
        }
    }

    let mut membership: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for uc in &model.use_cases {
        if uc.scenario_ids.is_empty() {
            r.push(&uc.id, "scenario_ids", "use case has no scenarios");
        }
        for sid in &uc.scenario_ids {
            if model.scenario(sid).is_none() {
                r.push(&uc.id, "scenario_ids", format!("unresolved scenario_id `{sid}`"));
            }
            membership.entry(sid.as_str()).or_default().push(uc.id.as_str());
        }
    }

    for sc in &model.scenarios {
        match membership.get(sc.id.as_str()).map(Vec::as_slice) {
            Some([only]) if *only == sc.use_case => {}
            Some([_]) | None => r.push(
                &sc.id,
                "use_case",
                format!("scenario is not listed by its use case `{}`", sc.use_case),
            ),
            Some(many) => r.push(
                &sc.id,
                "use_case",
                format!("scenario belongs to several use cases: {}", many.join(", ")),
            ),
        }
        if !model.use_cases.iter().any(|u| u.id == sc.use_case) {
            r.push(&sc.id, "use_case", "unresolved use_case");
        }
        let mut has_ego = false;
        for aid in &sc.agents {
            match model.agents.iter().find(|a| &a.id == aid) {
                Some(a) => has_ego |= a.kind == AgentKind::EgoSystem,
                None => r.push(&sc.id, "agents", format!("unresolved agent `{aid}`")),
            }
        }
        if !has_ego {
            r.push(&sc.id, "agents", "scenario has no ego_system agent");
        }
        for fact in &sc.asserted_facts {
            match spec.fact_kind(fact) {
                None => r.push(&sc.id, "asserted_facts", format!("unknown fact `{fact}`")),
                Some(FactKind::Derivable) => r.push(
                    &sc.id,
                    "asserted_facts",
                    format!("derivable fact `{fact}` may only be concluded by rules"),
                ),
                Some(FactKind::Base) => {}
            }
        }
        match (&sc.frequency_per_hour, &sc.occurrences_per_year) {
            (None, None) => r.push(&sc.id, "frequency", "scenario has no frequency"),
            (None, Some(_)) if model.fleet_exposure.is_none() => r.push(
                &sc.id,
                "frequency",
                "occurrences_per_year needs a fleet exposure block in the catalog",
            ),
            _ => {}
        }
    }

    for o in &model.deviation_model.overrides {
        if !spec.is_action(&o.action) {
            r.push(&o.action, "deviation_model", format!("unknown action `{}`", o.action));
        }
    }
    for [a, b] in &model.action_conflicts {
        for id in [a, b] {
            if !spec.is_action(id) {
                r.push(id, "action_conflicts", format!("unknown action `{id}`"));
            }
        }
    }

    for ev in &model.events {
        if model.hazard(&ev.hazard_id).is_none() {
            r.push(&ev.id, "hazard_id", "unresolved hazard_id");
        }
        if model.scenario(&ev.scenario_id).is_none() {
            r.push(&ev.id, "scenario_id", "unresolved scenario_id");
        }
        match (&ev.provenance, &ev.triggering_behavior) {
            (Provenance::Deviation, TriggeringBehavior::Deviation { deviation_id }) => {
                if deviation_id.parse::<DeviationId>().is_err() {
                    r.push(&ev.id, "triggering_behavior", format!("malformed deviation id `{deviation_id}`"));
                }
            }
            (Provenance::TargetBehavior, TriggeringBehavior::TargetActions { .. }) => {}
            _ => r.push(
                &ev.id,
                "triggering_behavior",
                "triggering behavior does not match provenance",
            ),
        }
    }

    for c in &model.criteria {
        if c.description.trim().is_empty() {
            r.push(&c.id, "description", "criterion description is empty");
        }
    }
    for (i, rule) in model.ascription_rules.iter().enumerate() {
        let rid = format!("ascription_rules[{i}]");
        if rule.criteria.is_empty() {
            r.push(&rid, "criteria", "ascription rule names no criteria");
        }
        for cid in &rule.criteria {
            if model.criterion(cid).is_none() {
                r.push(&rid, "criteria", format!("unresolved criterion `{cid}`"));
            }
        }
        if let Some(uc) = &rule.use_case {
            if !model.use_cases.iter().any(|u| &u.id == uc) {
                r.push(&rid, "use_case", format!("unresolved use case `{uc}`"));
            }
        }
    }

    for g in &model.goals {
        if g.hazard_ids.is_empty() {
            r.push(&g.id, "hazard_ids", "safety goal references no hazard");
        }
        if g.hazardous_event_ids.is_empty() {
            r.push(&g.id, "hazardous_event_ids", "safety goal references no hazardous event");
        }
        for h in &g.hazard_ids {
            if model.hazard(h).is_none() {
                r.push(&g.id, "hazard_ids", format!("unresolved hazard_id `{h}`"));
            }
        }
        for e in &g.hazardous_event_ids {
            if model.event(e).is_none() {
                r.push(&g.id, "hazardous_event_ids", format!("unresolved hazardous_event_id `{e}`"));
            }
        }
        if g.nominal_risk_reduction < Exact::one() {
            r.push(&g.id, "nominal_risk_reduction", "nominal risk reduction is below 1");
        }
    }

    for m in &model.measures {
        if model.goal(&m.goal_id).is_none() {
            r.push(&m.id, "goal_id", "unresolved goal_id");
        }
        check_payload(&mut r, &m.id, m.kind, &m.payload);
    }

    check_unique(&mut r, "measure proposal", model.proposals.iter().map(|p| p.id.as_str()));
    for p in &model.proposals {
        if model.hazard(&p.hazard_id).is_none() {
            r.push(&p.id, "hazard_id", "unresolved hazard_id");
        }
        check_payload(&mut r, &p.id, p.kind, &p.payload);
    }

    for b in &model.requirements {
        if b.scenario_scope.is_empty() {
            r.push(&b.id, "scenario_scope", "behavioral safety requirement has an empty scenario scope");
        }
        for s in &b.scenario_scope {
            if model.scenario(s).is_none() {
                r.push(&b.id, "scenario_scope", format!("unresolved scenario `{s}`"));
            }
        }
        if model.goal(&b.goal_id).is_none() {
            r.push(&b.id, "goal_id", "unresolved goal_id");
        }
        match model.measure(&b.measure_id) {
            None => r.push(&b.id, "measure_id", "unresolved measure_id"),
            Some(m) if m.goal_id != b.goal_id => {
                r.push(&b.id, "measure_id", "measure belongs to a different goal")
            }
            Some(_) => {}
        }
    }

    r
}

// ------------------------------------------------------------------------------------------------
// Traceability
// ------------------------------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Hazard,
    HazardousEvent,
    SafetyGoal,
    SafetyMeasure,
    BehavioralSafetyRequirement,
    Scenario,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct TraceNode {
    pub kind: EntityKind,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
pub struct TraceEdge {
    pub from: String,
    pub to: String,
    pub relation: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct TraceGraph {
    pub nodes: BTreeMap<String, TraceNode>,
    pub edges: BTreeSet<TraceEdge>,
}

impl TraceGraph {
    pub fn contains(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }
}

/// Every traced entity and every reference edge between them.
pub fn reference_edges(model: &Model) -> (BTreeMap<String, TraceNode>, Vec<TraceEdge>) {
    let mut nodes = BTreeMap::new();
    let mut edges = Vec::new();
    let mut edge = |from: &str, to: &str, relation: &str| {
        edges.push(TraceEdge {
            from: from.to_string(),
            to: to.to_string(),
            relation: relation.to_string(),
        })
    };
    for h in &model.hazards {
        nodes.insert(h.id.clone(), TraceNode { kind: EntityKind::Hazard, label: h.description.clone() });
    }
    for s in &model.scenarios {
        let label = if s.description.is_empty() { s.id.clone() } else { s.description.clone() };
        nodes.insert(s.id.clone(), TraceNode { kind: EntityKind::Scenario, label });
    }
    for e in &model.events {
        nodes.insert(e.id.clone(), TraceNode { kind: EntityKind::HazardousEvent, label: e.description.clone() });
        edge(&e.id, &e.hazard_id, "instance_of");
        edge(&e.id, &e.scenario_id, "occurs_in");
    }
    for g in &model.goals {
        nodes.insert(g.id.clone(), TraceNode { kind: EntityKind::SafetyGoal, label: g.statement.clone() });
        for h in &g.hazard_ids {
            edge(&g.id, h, "addresses_hazard");
        }
        for e in &g.hazardous_event_ids {
            edge(&g.id, e, "addresses_event");
        }
    }
    for m in &model.measures {
        nodes.insert(m.id.clone(), TraceNode { kind: EntityKind::SafetyMeasure, label: m.payload.trim().to_string() });
        edge(&m.id, &m.goal_id, "satisfies");
    }
    for b in &model.requirements {
        nodes.insert(
            b.id.clone(),
            TraceNode { kind: EntityKind::BehavioralSafetyRequirement, label: b.statement.clone() },
        );
        edge(&b.id, &b.goal_id, "refines");
        edge(&b.id, &b.measure_id, "specified_by");
        for s in &b.scenario_scope {
            edge(&b.id, s, "scoped_to");
        }
    }
    edges.retain(|e| nodes.contains_key(&e.from) && nodes.contains_key(&e.to));
    (nodes, edges)
}

/// The connected traceability subgraph containing `entity_id`.
pub fn trace(entity_id: &str, model: &Model) -> Result<TraceGraph> {
    let (nodes, edges) = reference_edges(model);
    if !nodes.contains_key(entity_id) {
        return Err(Error::UnknownEntity(entity_id.to_string()));
    }
    let mut adjacency: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in &edges {
        adjacency.entry(&e.from).or_default().push(&e.to);
        adjacency.entry(&e.to).or_default().push(&e.from);
    }
    let mut seen: BTreeSet<String> = BTreeSet::from([entity_id.to_string()]);
    let mut queue = VecDeque::from([entity_id]);
    while let Some(n) = queue.pop_front() {
        for &m in adjacency.get(n).map(Vec::as_slice).unwrap_or(&[]) {
            if seen.insert(m.to_string()) {
                queue.push_back(m);
            }
        }
    }
    Ok(TraceGraph {
        nodes: nodes
            .iter()
            .filter(|(id, _)| seen.contains(*id))
            .map(|(id, n)| (id.clone(), n.clone()))
            .collect(),
        edges: edges.iter().filter(|e| seen.contains(&e.from)).cloned().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture;

    #[test]
    fn fixture_model_is_consistent() {
        let model = fixture::t_crossing_model();
        let report = validate_model(&model);
        assert!(report.is_empty(), "{report:#?}");
    }

    #[test]
    fn empty_model_is_consistent() {
        assert!(validate_model(&Model::default()).is_empty());
    }

    #[test]
    fn dangling_event_hazard_is_one_violation() {
        let mut model = fixture::t_crossing_model();
        model.events.push(HazardousEvent {
            id: "HE-X".into(),
            hazard_id: "H-MISSING".into(),
            scenario_id: "variant".into(),
            provenance: Provenance::TargetBehavior,
            triggering_behavior: TriggeringBehavior::TargetActions { actions: vec![] },
            description: "x".into(),
            note: None,
        });
        let report = validate_model(&model);
        assert_eq!(report.violations.len(), 1, "{report:#?}");
        assert_eq!(report.violations[0].message, "unresolved hazard_id");
        assert_eq!(report.violations[0].entity_id, "HE-X");
        assert_eq!(report.violations[0].relation, "hazard_id");
    }

    #[test]
    fn validation_is_idempotent() {
        let mut model = fixture::t_crossing_model();
        model.scenarios[0].agents.clear();
        let before = model.clone();
        let a = validate_model(&model);
        let b = validate_model(&model);
        assert_eq!(a, b);
        assert_eq!(model, before);
        assert!(a.violations.iter().any(|v| v.relation == "agents"));
    }

    #[test]
    fn scenario_in_two_use_cases_flagged() {
        let mut model = fixture::t_crossing_model();
        let mut uc = model.use_cases[0].clone();
        uc.id = "UC-OTHER".into();
        model.use_cases.push(uc);
        let report = validate_model(&model);
        assert!(report.violations.iter().any(|v| v.message.contains("several use cases")));
    }

    #[test]
    fn asserting_derivable_fact_flagged() {
        let mut model = fixture::t_crossing_model();
        model.scenarios[0].asserted_facts.insert("crosswalk_detected".into());
        let report = validate_model(&model);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].relation, "asserted_facts");
    }

    #[test]
    fn goal_without_events_flagged() {
        let mut model = fixture::t_crossing_model();
        model.goals.push(SafetyGoal {
            id: "SG-1".into(),
            statement: "x".into(),
            hazard_ids: vec!["H-CROSSWALK".into()],
            hazardous_event_ids: vec![],
            nominal_risk_reduction: Exact::ratio(1, 2),
            required_integrity: Probability::one(),
        });
        let report = validate_model(&model);
        let relations: BTreeSet<_> = report.violations.iter().map(|v| v.relation.as_str()).collect();
        assert!(relations.contains("hazardous_event_ids"));
        assert!(relations.contains("nominal_risk_reduction"));
    }

    #[test]
    fn trace_isolated_hazard_is_single_node() {
        let model = fixture::t_crossing_model();
        let g = trace("H-CROSSWALK", &model).unwrap();
        assert_eq!(g.nodes.len(), 1);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn trace_unknown_entity_errors() {
        let model = fixture::t_crossing_model();
        assert!(matches!(trace("nope", &model), Err(Error::UnknownEntity(_))));
    }
}
