//! Safety goals, safety measures, residual-risk prediction and application
//! of behavior-spec measures.

use std::collections::BTreeSet;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::dsl::{self, BehaviorSpec};
use crate::error::{Error, Result};
use crate::evaluation::{ReductionDemand, Verdict, VerdictStatus};
use crate::hazard::{Finding, FindingKind};
use crate::ontology::{
    BehavioralSafetyRequirement, Hazard, HazardousEvent, MeasureKind, MeasureProposal, MeasureStatus, RiskValue,
    SafetyGoal, SafetyMeasure, SeverityClass,
};
use crate::quantity::{EventsPerHour, Exact, Probability};

pub fn default_safety_margin() -> Exact {
    Exact::from_integer(2)
}

/// `1 - 10^-d` with `d = ceil(log10(initial / tolerable))`: one integrity
/// decade per decade of initial risk above the tolerable rate.
pub fn required_integrity(initial: &EventsPerHour, tolerable: &EventsPerHour) -> Probability {
    let Some(ratio) = initial.value().checked_div(tolerable.value()) else {
        return Probability::one();
    };
    let d = ratio.ceil_log10();
    if d == 0 {
        return Probability::zero();
    }
    Probability::new(Exact::one() - Exact::pow10(-(d as i32))).expect("1 - 10^-d lies in [0, 1)")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum GoalDerivation {
    /// The verdict accepted the risk.
    NotRequired,
    Goal { goal: SafetyGoal },
}

/// A goal addressing `hazard` and all of its `events` that contributed to a
/// violated verdict.
pub fn derive_safety_goal(
    hazard: &Hazard,
    events: &[HazardousEvent],
    verdict: &Verdict,
    safety_margin: &Exact,
) -> Result<GoalDerivation> {
    if verdict.status == VerdictStatus::Accepted {
        return Ok(GoalDerivation::NotRequired);
    }
    let factor = match &verdict.required_reduction {
        ReductionDemand::Factor(f) => f.clone(),
        ReductionDemand::Eliminate => {
            return Err(Error::Precondition(format!(
                "criterion `{}` tolerates no {} risk; hazard `{}` must be eliminated",
                verdict.criterion_id, verdict.severity_class, hazard.id
            )))
        }
        ReductionDemand::None => unreachable!("violated verdicts carry a reduction demand"),
    };
    let event_ids: Vec<String> = events
        .iter()
        .filter(|e| e.hazard_id == hazard.id)
        .map(|e| e.id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if event_ids.is_empty() {
        return Err(Error::Precondition(format!("no hazardous event of `{}` to address", hazard.id)));
    }
    let statement = hazard
        .goal_statement
        .clone()
        .unwrap_or_else(|| format!("Prevent: {}.", hazard.description));
    Ok(GoalDerivation::Goal {
        goal: SafetyGoal {
            id: format!("SG-{}", hazard.id),
            statement,
            hazard_ids: vec![hazard.id.clone()],
            hazardous_event_ids: event_ids,
            nominal_risk_reduction: factor * safety_margin.clone(),
            required_integrity: required_integrity(&verdict.actual_rate, &verdict.tolerable_rate),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct MeasureSpecification {
    pub measure: SafetyMeasure,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requirement: Option<BehavioralSafetyRequirement>,
    pub findings: Vec<Finding>,
}

/// Turns a drafted measure into a [`SafetyMeasure`] of `goal`. Behavior-spec
/// measures also yield a requirement scoped to `scenario_scope`.
pub fn specify_measure(
    goal: &SafetyGoal,
    draft: &MeasureProposal,
    severity_class: SeverityClass,
    scenario_scope: &BTreeSet<String>,
) -> Result<MeasureSpecification> {
    let fail = |message: String| Error::Measure {
        measure: draft.id.clone(),
        message,
    };
    match draft.kind {
        MeasureKind::BehaviorSpecDelta => {
            let delta = dsl::parse_delta(&draft.payload).map_err(|e| fail(e.to_string()))?;
            if delta.is_empty() {
                return Err(fail("empty behavior-spec delta".into()));
            }
        }
        MeasureKind::OddRestriction => {
            if draft.payload.trim().is_empty() {
                return Err(fail("empty ODD restriction".into()));
            }
        }
    }
    let measure = SafetyMeasure {
        id: draft.id.clone(),
        goal_id: goal.id.clone(),
        kind: draft.kind,
        payload: draft.payload.clone(),
        claimed_reduction_effectiveness: draft.claimed_reduction_effectiveness.clone(),
        integrity: draft.integrity.clone(),
        corrupt_behavior_risk: RiskValue {
            rate: draft.corrupt_behavior_rate.clone(),
            severity_class,
        },
        status: MeasureStatus::Queued,
    };
    let mut findings = Vec::new();
    if draft.claimed_reduction_effectiveness.value().is_zero() {
        findings.push(Finding {
            kind: FindingKind::NonReducingMeasure,
            subject: draft.id.clone(),
            message: "non-reducing measure: claimed effectiveness is 0".into(),
        });
    }
    let requirement = match draft.kind {
        MeasureKind::OddRestriction => None,
        MeasureKind::BehaviorSpecDelta => {
            if scenario_scope.is_empty() {
                return Err(fail("behavioral safety requirement needs a non-empty scenario scope".into()));
            }
            Some(BehavioralSafetyRequirement {
                id: format!("BSR-{}", draft.id),
                statement: draft
                    .requirement_statement
                    .clone()
                    .unwrap_or_else(|| format!("Behave as specified by measure {}.", draft.id)),
                goal_id: goal.id.clone(),
                measure_id: draft.id.clone(),
                scenario_scope: scenario_scope.clone(),
            })
        }
    };
    Ok(MeasureSpecification {
        measure,
        requirement,
        findings,
    })
}

/// Inputs to the residual-risk prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct ResidualModel {
    pub initial: RiskValue,
    pub minimum_achievable_rate: EventsPerHour,
    pub reduction_effectiveness: Probability,
    pub integrity: Probability,
    pub corrupt_risk_rate: EventsPerHour,
}

/// `max(min, initial * (1 - effectiveness * integrity)) + corrupt`.
pub fn predicted_residual(m: &ResidualModel) -> RiskValue {
    let kept = Exact::one() - m.reduction_effectiveness.value().clone() * m.integrity.value().clone();
    let reduced = m.initial.rate.value().clone() * kept;
    let floor = m.minimum_achievable_rate.value().clone();
    let rate = reduced.max(floor) + m.corrupt_risk_rate.value().clone();
    RiskValue {
        rate: EventsPerHour::new(rate).expect("sum of non-negative terms"),
        severity_class: m.initial.severity_class,
    }
}

/// Merges the deltas of all behavior-spec measures, in order, into one new
/// spec version. ODD restrictions leave the behavior spec untouched.
pub fn apply_measures(spec: &BehaviorSpec, measures: &[&SafetyMeasure]) -> Result<BehaviorSpec> {
    let mut acc = spec.clone();
    for m in measures.iter().filter(|m| m.kind == MeasureKind::BehaviorSpecDelta) {
        let fail = |e: crate::error::DslError| Error::Measure {
            measure: m.id.clone(),
            message: e.to_string(),
        };
        let delta = dsl::parse_delta(&m.payload).map_err(fail)?;
        acc = dsl::combine(&acc, &delta).map_err(fail)?;
    }
    acc.overrides.clear();
    acc.check().map_err(|e| Error::Measure {
        measure: measures.iter().map(|m| m.id.as_str()).collect::<Vec<_>>().join("+"),
        message: e.to_string(),
    })?;
    acc.version = spec.version + 1;
    Ok(acc)
}
