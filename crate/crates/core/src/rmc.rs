//! The risk management loop: analysis, evaluation and treatment over two
//! iterations (target behavior, then deviations from it), with explicit
//! state and persisted iteration reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::documents::SCHEMA_VERSION;
use crate::dsl::serialize_spec;
use crate::error::{Error, Result};
use crate::estimation::{estimate_events, EventRisk};
use crate::evaluation::{aggregate, ascribe, evaluate, ActualRate, Evaluation, Verdict, VerdictStatus};
use crate::hazard::{
    conflicting_actions, generate_deviations, identify_deviation_events, identify_hazardous_events, DeviationBehavior,
    Finding, FindingKind, HazardMatch,
};
use crate::hazard_log::{HazardLog, LogStatus, LogTransition, Stamp};
use crate::inference::derive_catalog;
use crate::ontology::{validate_model, HazardousEvent, MeasureStatus, Model, RiskValue, SafetyGoal};
use crate::quantity::{EventsPerHour, Exact};
use crate::requirements::{coverage_table, RequirementCoverage};
use crate::treatment::{
    apply_measures, default_safety_margin, derive_safety_goal, predicted_residual, specify_measure, GoalDerivation,
    MeasureSpecification, ResidualModel,
};

pub const DEFAULT_MAX_ITERATIONS: u32 = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Settings {
    /// Multiplier on the required reduction factor when deriving goals.
    #[serde(default = "default_safety_margin")]
    pub safety_margin: Exact,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: u32,
    /// Floor used for residual-risk predictions.
    #[serde(default = "EventsPerHour::zero")]
    pub minimum_achievable_rate: EventsPerHour,
}

fn default_max_iterations() -> u32 {
    DEFAULT_MAX_ITERATIONS
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            safety_margin: default_safety_margin(),
            max_iterations: DEFAULT_MAX_ITERATIONS,
            minimum_achievable_rate: EventsPerHour::zero(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Analysis,
    Evaluation,
    Treatment,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum IterationKind {
    TargetBehavior,
    Deviation,
}

impl IterationKind {
    pub fn number(self) -> u8 {
        match self {
            IterationKind::TargetBehavior => 1,
            IterationKind::Deviation => 2,
        }
    }

    fn slug(self) -> &'static str {
        match self {
            IterationKind::TargetBehavior => "target_behavior",
            IterationKind::Deviation => "deviation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Accepted,
    TreatmentRequired,
}

/// Analysis results waiting for evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct PendingAnalysis {
    pub kind: IterationKind,
    pub event_ids: Vec<String>,
    pub deviations: BTreeMap<String, Vec<DeviationBehavior>>,
    pub findings: Vec<Finding>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct HistoryEntry {
    pub report_id: String,
    pub kind: IterationKind,
    pub spec_version: u64,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Analyze,
    Evaluate { accepted: bool },
    Treat,
    /// The model changed; start over at iteration 1.
    Reset,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct RmcState {
    pub schema_version: u32,
    pub phase: Phase,
    pub iteration: u8,
    #[serde(default)]
    pub history: Vec<HistoryEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pending: Option<PendingAnalysis>,
    #[serde(default)]
    pub reports_written: u64,
}

impl Default for RmcState {
    fn default() -> Self {
        RmcState {
            schema_version: SCHEMA_VERSION,
            phase: Phase::Analysis,
            iteration: 1,
            history: Vec::new(),
            pending: None,
            reports_written: 0,
        }
    }
}

impl RmcState {
    /// The state after `cmd`, or an error if `cmd` is not legal now.
    ///
    /// analysis -> evaluation -> (treatment -> analysis@1 | analysis@2 | done)
    pub fn apply(&self, cmd: Command) -> Result<RmcState> {
        let mut next = self.clone();
        match (self.phase, cmd) {
            (_, Command::Reset) => {
                next.phase = Phase::Analysis;
                next.iteration = 1;
                next.pending = None;
            }
            (Phase::Analysis, Command::Analyze) => next.phase = Phase::Evaluation,
            (Phase::Evaluation, Command::Evaluate { accepted: false }) => {
                next.phase = Phase::Treatment;
                next.pending = None;
            }
            (Phase::Evaluation, Command::Evaluate { accepted: true }) => {
                next.pending = None;
                if self.iteration == 1 {
                    next.phase = Phase::Analysis;
                    next.iteration = 2;
                } else {
                    next.phase = Phase::Done;
                }
            }
            (Phase::Treatment, Command::Treat) => {
                next.phase = Phase::Analysis;
                next.iteration = 1;
            }
            (phase, cmd) => {
                return Err(Error::IllegalTransition(format!(
                    "{cmd:?} in phase {phase:?} of iteration {}",
                    self.iteration
                )))
            }
        }
        Ok(next)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct IterationReport {
    pub schema_version: u32,
    pub id: String,
    pub sequence: u64,
    pub iteration_kind: IterationKind,
    pub spec_version: u64,
    pub events_found: Vec<HazardousEvent>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub deviations: BTreeMap<String, Vec<DeviationBehavior>>,
    /// Risks of `events_found`.
    pub risks: Vec<EventRisk>,
    /// Aggregated target-behavior rates (r_t).
    pub target_behavior_rates: Vec<ActualRate>,
    /// Aggregated deviation rates (r_d); empty in iteration 1.
    #[serde(default)]
    pub deviation_rates: Vec<ActualRate>,
    /// Evaluation of r_t (iteration 1) or r_t + r_d (iteration 2).
    pub evaluation: Evaluation,
    pub findings: Vec<Finding>,
    pub outcome: Outcome,
}

impl IterationReport {
    /// `1 criterion violated (PRB/S3): 1.25e-7 > 4.64e-10`, or an
    /// acceptance line.
    pub fn summary(&self) -> String {
        let violated: Vec<&Verdict> = self.evaluation.violated().collect();
        if violated.is_empty() {
            return format!(
                "iteration {} ({}) accepted: {} event(s), {} verdict(s)",
                self.iteration_kind.number(),
                self.iteration_kind.slug(),
                self.events_found.len(),
                self.evaluation.verdicts.len()
            );
        }
        let noun = if violated.len() == 1 { "criterion" } else { "criteria" };
        let parts: Vec<String> = violated.iter().map(|v| v.summary()).collect();
        format!("{} {noun} violated {}", violated.len(), parts.join("; "))
    }
}

/// Everything the loop reads and writes.
#[derive(Debug, Clone, PartialEq)]
pub struct Project {
    pub model: Model,
    pub state: RmcState,
    pub hazard_log: HazardLog,
    pub reports: Vec<IterationReport>,
    pub settings: Settings,
}

impl Project {
    pub fn new(model: Model, stamp: &Stamp) -> Self {
        let mut hazard_log = HazardLog::default();
        hazard_log.sync(&model, stamp);
        Project {
            model,
            state: RmcState::default(),
            hazard_log,
            reports: Vec::new(),
            settings: Settings::default(),
        }
    }

    /// To be called after any change to the model outside the loop.
    pub fn model_changed(&mut self, stamp: &Stamp) -> Result<()> {
        self.state = self.state.apply(Command::Reset)?;
        self.hazard_log.sync(&self.model, stamp);
        Ok(())
    }

    fn latest_report(&self, kind: IterationKind) -> Option<&IterationReport> {
        self.reports.iter().rev().find(|r| r.iteration_kind == kind)
    }
}

fn missing_inputs(model: &Model) -> Vec<String> {
    let mut missing = Vec::new();
    if model.spec.is_empty() {
        missing.push("behavior specification".to_string());
    }
    if model.hazards.is_empty() {
        missing.push("hazards".to_string());
    }
    if model.criteria.is_empty() {
        missing.push("risk acceptance criteria".to_string());
    }
    missing
}

fn upsert_events(model: &mut Model, events: &[HazardousEvent]) {
    for e in events {
        match model.events.iter_mut().find(|x| x.id == e.id) {
            Some(slot) => *slot = e.clone(),
            None => model.events.push(e.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct AnalysisOutput {
    pub kind: IterationKind,
    pub matches: Vec<HazardMatch>,
    pub deviations: BTreeMap<String, Vec<DeviationBehavior>>,
    pub findings: Vec<Finding>,
}

/// Hazard analysis for the current iteration. Identified events are added
/// to the model's event register.
pub fn analyze(p: &mut Project, stamp: &Stamp) -> Result<AnalysisOutput> {
    let next = p.state.apply(Command::Analyze)?;
    let missing = missing_inputs(&p.model);
    if !missing.is_empty() {
        return Err(Error::MissingInputs(missing));
    }
    let report = validate_model(&p.model);
    if !report.is_empty() {
        return Err(Error::Validation(report));
    }
    let model = &p.model;
    let states = derive_catalog(&model.spec, &model.scenarios)?;
    let mut findings = conflicting_actions(&states, &model.action_conflicts);
    if model.scenarios.is_empty() {
        findings.push(Finding {
            kind: FindingKind::EmptyCatalog,
            subject: "catalog".into(),
            message: "empty scenario catalog".into(),
        });
    }
    let kind = if p.state.iteration == 1 {
        IterationKind::TargetBehavior
    } else {
        IterationKind::Deviation
    };
    let (matches, deviations) = match kind {
        IterationKind::TargetBehavior => (
            identify_hazardous_events(&model.spec, &model.scenarios, &model.hazards, &states)?,
            BTreeMap::new(),
        ),
        IterationKind::Deviation => {
            let deviations: BTreeMap<String, Vec<DeviationBehavior>> = states
                .iter()
                .map(|(sid, s)| {
                    (
                        sid.clone(),
                        generate_deviations(&model.spec, &s.actions, &model.deviation_model.guide_words),
                    )
                })
                .collect();
            let matches = identify_deviation_events(
                &model.spec,
                &deviations,
                &model.scenarios,
                &model.hazards,
                &states,
                &model.deviation_model,
            )?;
            (matches, deviations)
        }
    };
    let events: Vec<HazardousEvent> = matches.iter().map(|m| m.hazardous_event.clone()).collect();
    upsert_events(&mut p.model, &events);
    p.hazard_log.sync(&p.model, stamp);
    p.state = next;
    p.state.pending = Some(PendingAnalysis {
        kind,
        event_ids: events.iter().map(|e| e.id.clone()).collect(),
        deviations: deviations.clone(),
        findings: findings.clone(),
    });
    Ok(AnalysisOutput {
        kind,
        matches,
        deviations,
        findings,
    })
}

fn rates_only(risks: &[EventRisk], model: &Model) -> Vec<ActualRate> {
    let (ascriptions, _) = ascribe(risks, &model.criteria, &model.ascription_rules);
    let mut acc: BTreeMap<(String, crate::ontology::SeverityClass), EventsPerHour> = BTreeMap::new();
    for c in &model.criteria {
        let mine: Vec<_> = ascriptions.iter().filter(|a| a.criterion_id == c.id).cloned().collect();
        acc.extend(aggregate(&mine, c.weighing_policy));
    }
    acc.into_iter()
        .map(|((criterion_id, severity_class), rate)| ActualRate {
            criterion_id,
            severity_class,
            rate,
        })
        .collect()
}

/// Hazards with a risk ascribed to a violated (criterion, class).
fn violating_hazards(evaluation: &Evaluation) -> BTreeMap<String, Vec<(String, &Verdict)>> {
    let mut out: BTreeMap<String, Vec<(String, &Verdict)>> = BTreeMap::new();
    for v in evaluation.violated() {
        for a in &evaluation.ascriptions {
            if a.criterion_id == v.criterion_id && a.risk.severity_class == v.severity_class {
                out.entry(a.hazard_id.clone()).or_default().push((a.event_id.clone(), v));
            }
        }
    }
    out
}

/// Estimates and evaluates the pending analysis and persists the report in
/// the project history.
pub fn evaluate_pending(p: &mut Project, stamp: &Stamp) -> Result<IterationReport> {
    p.state.apply(Command::Evaluate { accepted: true })?;
    let pending = p
        .state
        .pending
        .clone()
        .ok_or_else(|| Error::Precondition("no analysis to evaluate".into()))?;
    let events: Vec<HazardousEvent> = pending
        .event_ids
        .iter()
        .map(|id| p.model.event(id).cloned().ok_or_else(|| Error::UnknownEntity(id.clone())))
        .collect::<Result<_>>()?;
    let risks = estimate_events(&p.model, &events)?;
    let (evaluation, target_behavior_rates, deviation_rates) = match pending.kind {
        IterationKind::TargetBehavior => {
            let e = evaluate(&risks, &p.model.criteria, &p.model.ascription_rules)?;
            let rt = e.actual_rates.clone();
            (e, rt, Vec::new())
        }
        IterationKind::Deviation => {
            let base = p
                .latest_report(IterationKind::TargetBehavior)
                .filter(|r| r.outcome == Outcome::Accepted)
                .ok_or_else(|| Error::Precondition("iteration 1 has not been accepted".into()))?;
            let mut combined = base.risks.clone();
            combined.extend(risks.iter().cloned());
            let e = evaluate(&combined, &p.model.criteria, &p.model.ascription_rules)?;
            (e, base.target_behavior_rates.clone(), rates_only(&risks, &p.model))
        }
    };
    let mut findings = pending.findings.clone();
    findings.extend(evaluation.findings.iter().cloned());
    let outcome = if evaluation.accepted() {
        Outcome::Accepted
    } else {
        Outcome::TreatmentRequired
    };
    let sequence = p.state.reports_written + 1;
    let report = IterationReport {
        schema_version: SCHEMA_VERSION,
        id: format!("iter-{sequence}-{}", pending.kind.slug()),
        sequence,
        iteration_kind: pending.kind,
        spec_version: p.model.spec.version,
        events_found: events,
        deviations: pending.deviations,
        risks,
        target_behavior_rates,
        deviation_rates,
        evaluation,
        findings,
        outcome,
    };

    for (hazard_id, _) in violating_hazards(&report.evaluation) {
        let status = p.hazard_log.entry(&hazard_id).map(|e| e.status);
        if matches!(status, Some(LogStatus::Accepted | LogStatus::MeasuresSpecified)) {
            p.hazard_log.transition(
                &hazard_id,
                LogStatus::GoalAssigned,
                Some(format!("violated verdict in {}", report.id)),
                stamp,
            )?;
        }
    }
    let mut next = p.state.apply(Command::Evaluate {
        accepted: outcome == Outcome::Accepted,
    })?;
    if next.phase == Phase::Done {
        let ids: Vec<String> = p
            .hazard_log
            .entries
            .iter()
            .filter(|e| e.status == LogStatus::MeasuresSpecified)
            .map(|e| e.hazard_id.clone())
            .collect();
        for id in ids {
            p.hazard_log
                .transition(&id, LogStatus::Accepted, Some(format!("accepted in {}", report.id)), stamp)?;
        }
    }
    next.reports_written = sequence;
    next.history.push(HistoryEntry {
        report_id: report.id.clone(),
        kind: report.iteration_kind,
        spec_version: report.spec_version,
        outcome,
    });
    p.state = next;
    p.reports.push(report.clone());
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct ResidualPrediction {
    pub measure_id: String,
    pub goal_id: String,
    pub initial: RiskValue,
    /// Advisory only; acceptance is decided by re-analysis.
    pub predicted: RiskValue,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct TreatmentOutcome {
    pub goals: Vec<SafetyGoal>,
    pub specified: Vec<MeasureSpecification>,
    pub predictions: Vec<ResidualPrediction>,
    pub applied: Vec<String>,
    pub spec_version: u64,
    pub findings: Vec<Finding>,
}

impl TreatmentOutcome {
    pub fn treated(&self) -> bool {
        !self.applied.is_empty()
    }
}

fn scope_of(model: &Model, goal: &SafetyGoal) -> BTreeSet<String> {
    goal.hazardous_event_ids
        .iter()
        .filter_map(|id| model.event(id))
        .map(|e| e.scenario_id.clone())
        .collect()
}

/// Derives goals for the violated verdicts of the latest report, turns
/// proposals into measures and applies every queued measure. Without queued
/// measures the loop stays in treatment.
pub fn treat(p: &mut Project, stamp: &Stamp) -> Result<TreatmentOutcome> {
    let next = p.state.apply(Command::Treat)?;
    let report = p
        .reports
        .last()
        .cloned()
        .ok_or_else(|| Error::Precondition("no evaluation to treat".into()))?;
    let mut findings = Vec::new();
    let mut goals = Vec::new();

    for (hazard_id, hits) in violating_hazards(&report.evaluation) {
        let hazard = p
            .model
            .hazard(&hazard_id)
            .cloned()
            .ok_or_else(|| Error::UnknownEntity(hazard_id.clone()))?;
        // The verdict with the largest demand drives the goal.
        let verdict = hits
            .iter()
            .map(|(_, v)| *v)
            .max_by(|a, b| a.required_reduction_factor().cmp(&b.required_reduction_factor()))
            .expect("at least one hit");
        let events: Vec<HazardousEvent> = hits.iter().filter_map(|(id, _)| p.model.event(id).cloned()).collect();
        let GoalDerivation::Goal { goal } = derive_safety_goal(&hazard, &events, verdict, &p.settings.safety_margin)?
        else {
            continue;
        };
        let goal = match p.model.goals.iter_mut().find(|g| g.id == goal.id) {
            Some(existing) => {
                let ids: BTreeSet<String> = existing
                    .hazardous_event_ids
                    .iter()
                    .chain(goal.hazardous_event_ids.iter())
                    .cloned()
                    .collect();
                existing.hazardous_event_ids = ids.into_iter().collect();
                existing.nominal_risk_reduction = existing.nominal_risk_reduction.clone().max(goal.nominal_risk_reduction);
                existing.required_integrity = existing.required_integrity.clone().max(goal.required_integrity);
                existing.clone()
            }
            None => {
                p.model.goals.push(goal.clone());
                goal
            }
        };
        p.hazard_log
            .advance_to(&hazard_id, LogStatus::GoalAssigned, &format!("safety goal {}", goal.id), stamp)?;
        goals.push(goal);
    }

    let mut specified = Vec::new();
    let proposals = std::mem::take(&mut p.model.proposals);
    for proposal in proposals {
        let goal = p.model.goals.iter().find(|g| g.hazard_ids.contains(&proposal.hazard_id)).cloned();
        let Some(goal) = goal else {
            p.model.proposals.push(proposal);
            continue;
        };
        let severity = p
            .model
            .hazard_severity(&proposal.hazard_id)
            .ok_or_else(|| Error::UnknownEntity(proposal.hazard_id.clone()))?;
        let spec = specify_measure(&goal, &proposal, severity, &scope_of(&p.model, &goal))?;
        p.model.measures.push(spec.measure.clone());
        if let Some(r) = &spec.requirement {
            p.model.requirements.push(r.clone());
        }
        findings.extend(spec.findings.iter().cloned());
        specified.push(spec);
    }

    let queued: Vec<_> = p.model.measures.iter().filter(|m| m.status == MeasureStatus::Queued).cloned().collect();
    for m in &queued {
        if let Some(goal) = p.model.goal(&m.goal_id) {
            for h in goal.hazard_ids.clone() {
                p.hazard_log
                    .advance_to(&h, LogStatus::MeasuresSpecified, &format!("safety measure {}", m.id), stamp)?;
            }
        }
    }

    let mut predictions = Vec::new();
    for m in &queued {
        let Some(goal) = p.model.goal(&m.goal_id) else { continue };
        let initial_rate: EventsPerHour = report
            .risks
            .iter()
            .chain(p.latest_report(IterationKind::TargetBehavior).map(|r| r.risks.as_slice()).unwrap_or(&[]))
            .filter(|r| goal.hazardous_event_ids.contains(&r.event_id))
            .map(|r| (r.event_id.clone(), r.risk.rate.clone()))
            .collect::<BTreeMap<_, _>>()
            .into_values()
            .sum();
        let initial = RiskValue {
            rate: initial_rate,
            severity_class: m.corrupt_behavior_risk.severity_class,
        };
        let predicted = predicted_residual(&ResidualModel {
            initial: initial.clone(),
            minimum_achievable_rate: p.settings.minimum_achievable_rate.clone(),
            reduction_effectiveness: m.claimed_reduction_effectiveness.clone(),
            integrity: m.integrity.clone(),
            corrupt_risk_rate: m.corrupt_behavior_risk.rate.clone(),
        });
        predictions.push(ResidualPrediction {
            measure_id: m.id.clone(),
            goal_id: goal.id.clone(),
            initial,
            predicted,
        });
    }

    let mut applied = Vec::new();
    if queued.is_empty() {
        findings.push(Finding {
            kind: FindingKind::NoTreatmentAvailable,
            subject: report.id.clone(),
            message: "no queued safety measure; specify one for the derived safety goal(s)".into(),
        });
    } else {
        let refs: Vec<_> = queued.iter().collect();
        p.model.spec = apply_measures(&p.model.spec, &refs)?;
        for m in p.model.measures.iter_mut().filter(|m| m.status == MeasureStatus::Queued) {
            m.status = MeasureStatus::Applied;
            applied.push(m.id.clone());
        }
        p.state = next;
    }
    let violations = validate_model(&p.model);
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    Ok(TreatmentOutcome {
        goals,
        specified,
        predictions,
        applied,
        spec_version: p.model.spec.version,
        findings,
    })
}

pub fn run_iteration1(p: &mut Project, stamp: &Stamp) -> Result<IterationReport> {
    if p.state.phase != Phase::Analysis || p.state.iteration != 1 {
        return Err(Error::Precondition(format!(
            "iteration 1 needs phase analysis of iteration 1, not {:?} of iteration {}",
            p.state.phase, p.state.iteration
        )));
    }
    analyze(p, stamp)?;
    evaluate_pending(p, stamp)
}

pub fn run_iteration2(p: &mut Project, stamp: &Stamp) -> Result<IterationReport> {
    if p.state.phase != Phase::Analysis || p.state.iteration != 2 {
        return Err(Error::Precondition("iteration 1 has not been accepted".into()));
    }
    analyze(p, stamp)?;
    evaluate_pending(p, stamp)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Step {
    Report { report: IterationReport },
    Treatment { outcome: TreatmentOutcome },
    AlreadyDone,
}

/// Advances the loop by one unit of work.
pub fn step(p: &mut Project, stamp: &Stamp) -> Result<Step> {
    match p.state.phase {
        Phase::Analysis => {
            analyze(p, stamp)?;
            Ok(Step::Report {
                report: evaluate_pending(p, stamp)?,
            })
        }
        Phase::Evaluation => Ok(Step::Report {
            report: evaluate_pending(p, stamp)?,
        }),
        Phase::Treatment => Ok(Step::Treatment {
            outcome: treat(p, stamp)?,
        }),
        Phase::Done => Ok(Step::AlreadyDone),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum Convergence {
    Accepted,
    NotConverged { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct FinalReport {
    pub convergence: Convergence,
    pub passes: u32,
    pub spec_version: u64,
    pub history: Vec<IterationReport>,
    pub treatments: Vec<TreatmentOutcome>,
    pub summary: String,
}

impl FinalReport {
    pub fn accepted(&self) -> bool {
        self.convergence == Convergence::Accepted
    }
}

/// Alternates analysis and treatment until both iterations accept or
/// `max_iterations` passes are used up. Each pass starts at iteration 1.
pub fn run_until_accepted(p: &mut Project, max_iterations: u32, stamp: &Stamp) -> Result<FinalReport> {
    if max_iterations == 0 {
        return Err(Error::Precondition("max_iterations must be at least 1".into()));
    }
    p.state = p.state.apply(Command::Reset)?;
    let start = p.reports.len();
    let mut treatments = Vec::new();
    let mut passes = 0;
    let mut convergence = None;
    while passes < max_iterations {
        passes += 1;
        let r1 = run_iteration1(p, stamp)?;
        if r1.outcome == Outcome::Accepted {
            let r2 = run_iteration2(p, stamp)?;
            if r2.outcome == Outcome::Accepted {
                convergence = Some(Convergence::Accepted);
                break;
            }
        }
        let t = treat(p, stamp)?;
        let treated = t.treated();
        treatments.push(t);
        if !treated {
            convergence = Some(Convergence::NotConverged {
                reason: "no safety measure available for the violated criteria".into(),
            });
            break;
        }
    }
    let convergence = convergence.unwrap_or_else(|| Convergence::NotConverged {
        reason: format!("iteration budget of {max_iterations} pass(es) exhausted"),
    });
    let history = p.reports[start..].to_vec();
    let summary = match (&convergence, history.last()) {
        (Convergence::Accepted, _) => format!(
            "accepted after {passes} pass(es): {} report(s), spec version {}",
            history.len(),
            p.model.spec.version
        ),
        (Convergence::NotConverged { .. }, Some(last)) if last.outcome == Outcome::TreatmentRequired => last.summary(),
        (Convergence::NotConverged { reason }, _) => format!("not converged: {reason}"),
    };
    Ok(FinalReport {
        convergence,
        passes,
        spec_version: p.model.spec.version,
        history,
        treatments,
        summary,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct TraceRow {
    pub requirement_id: String,
    pub statement: String,
    pub goal_id: String,
    pub measure_id: String,
    pub nominal_risk_reduction: Exact,
    pub required_integrity: crate::quantity::Probability,
    pub scenario_scope: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct RefinedSpecExport {
    pub draft: bool,
    pub spec_version: u64,
    pub text: String,
    pub traceability: Vec<TraceRow>,
    pub requirements_coverage: Vec<RequirementCoverage>,
}

pub const DRAFT_HEADER: &str = "# DRAFT: the risk management loop has not accepted this specification\n";

/// The refined specification with each behavioral safety requirement and
/// its required integrity attached as comments.
pub fn export_refined_spec(p: &Project, draft: bool) -> Result<RefinedSpecExport> {
    if p.state.phase != Phase::Done && !draft {
        return Err(Error::NotAccepted);
    }
    let model = &p.model;
    let mut rows = Vec::new();
    for b in &model.requirements {
        let goal = model.goal(&b.goal_id).ok_or_else(|| Error::UnknownEntity(b.goal_id.clone()))?;
        rows.push(TraceRow {
            requirement_id: b.id.clone(),
            statement: b.statement.clone(),
            goal_id: goal.id.clone(),
            measure_id: b.measure_id.clone(),
            nominal_risk_reduction: goal.nominal_risk_reduction.clone(),
            required_integrity: goal.required_integrity.clone(),
            scenario_scope: b.scenario_scope.iter().cloned().collect(),
        });
    }
    let mut text = String::new();
    if draft {
        text.push_str(DRAFT_HEADER);
    }
    text.push_str(&serialize_spec(&model.spec));
    if !rows.is_empty() {
        text.push_str("\n# Behavioral safety requirements\n");
        for r in &rows {
            let _ = writeln!(text, "# {}: {}", r.requirement_id, r.statement);
            let _ = writeln!(
                text,
                "#   goal {} (nominal risk reduction {}), measure {}, required integrity {}, scenarios: {}",
                r.goal_id,
                r.nominal_risk_reduction.display_sci(),
                r.measure_id,
                r.required_integrity,
                r.scenario_scope.join(", ")
            );
        }
    }
    Ok(RefinedSpecExport {
        draft,
        spec_version: model.spec.version,
        text,
        traceability: rows,
        requirements_coverage: coverage_table(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct HazardLogRow {
    pub hazard_id: String,
    pub description: String,
    pub status: LogStatus,
    pub hazardous_event_ids: Vec<String>,
    pub goal_ids: Vec<String>,
    pub measure_ids: Vec<String>,
    /// Verdicts of the latest report that this hazard's risks contributed to.
    pub latest_verdicts: Vec<Verdict>,
    pub history: Vec<LogTransition>,
}

pub fn hazard_log_report(p: &Project) -> Vec<HazardLogRow> {
    let latest = p.reports.last();
    p.hazard_log
        .entries
        .iter()
        .map(|e| {
            let goal_ids: Vec<String> = p
                .model
                .goals
                .iter()
                .filter(|g| g.hazard_ids.contains(&e.hazard_id))
                .map(|g| g.id.clone())
                .collect();
            let measure_ids = p
                .model
                .measures
                .iter()
                .filter(|m| goal_ids.contains(&m.goal_id))
                .map(|m| m.id.clone())
                .collect();
            let latest_verdicts = latest
                .map(|r| {
                    let keys: BTreeSet<_> = r
                        .evaluation
                        .ascriptions
                        .iter()
                        .filter(|a| a.hazard_id == e.hazard_id)
                        .map(|a| (a.criterion_id.clone(), a.risk.severity_class))
                        .collect();
                    r.evaluation
                        .verdicts
                        .iter()
                        .filter(|v| keys.contains(&(v.criterion_id.clone(), v.severity_class)))
                        .cloned()
                        .collect()
                })
                .unwrap_or_default();
            HazardLogRow {
                hazard_id: e.hazard_id.clone(),
                description: p.model.hazard(&e.hazard_id).map(|h| h.description.clone()).unwrap_or_default(),
                status: e.status,
                hazardous_event_ids: e.hazardous_event_ids.clone(),
                goal_ids,
                measure_ids,
                latest_verdicts,
                history: e.history.clone(),
            }
        })
        .collect()
}

/// The document served by `report` and `GET /api/reports`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct WorkspaceReport {
    pub workspace_version: u64,
    pub phase: Phase,
    pub iteration: u8,
    pub hazard_log: Vec<HazardLogRow>,
    pub iteration_reports: Vec<IterationReport>,
    pub requirements_coverage: Vec<RequirementCoverage>,
}

pub fn workspace_report(p: &Project, workspace_version: u64) -> WorkspaceReport {
    WorkspaceReport {
        workspace_version,
        phase: p.state.phase,
        iteration: p.state.iteration,
        hazard_log: hazard_log_report(p),
        iteration_reports: p.reports.clone(),
        requirements_coverage: coverage_table(),
    }
}

/// Latest verdicts: those of the most recent report.
pub fn latest_verdicts(p: &Project) -> Vec<Verdict> {
    p.reports.last().map(|r| r.evaluation.verdicts.clone()).unwrap_or_default()
}

pub fn is_violated(v: &Verdict) -> bool {
    v.status == VerdictStatus::Violated
}
