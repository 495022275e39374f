//! Ascription of risks to acceptance criteria, per-class aggregation and
//! comparison against tolerable rates.

use std::collections::{BTreeMap, BTreeSet};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::EventRisk;
use crate::hazard::{Finding, FindingKind};
use crate::ontology::{AscriptionRule, RiskAcceptanceCriterion, RiskValue, SeverityClass, WeighingPolicy};
use crate::quantity::{EventsPerHour, Exact};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct RiskAscription {
    pub event_id: String,
    pub hazard_id: String,
    pub risk: RiskValue,
    pub criterion_id: String,
}

/// Applies every matching rule to every risk. Risks no rule covers are
/// reported as findings.
pub fn ascribe(
    risks: &[EventRisk],
    criteria: &[RiskAcceptanceCriterion],
    rules: &[AscriptionRule],
) -> (Vec<RiskAscription>, Vec<Finding>) {
    let known: BTreeSet<&str> = criteria.iter().map(|c| c.id.as_str()).collect();
    let mut out = Vec::new();
    let mut findings = Vec::new();
    for r in risks {
        let mut targets: BTreeSet<&str> = BTreeSet::new();
        for rule in rules {
            let uc_ok = rule.use_case.as_deref().is_none_or(|u| u == r.use_case);
            let sev_ok = rule.severity_class.is_none_or(|s| s == r.risk.severity_class);
            if uc_ok && sev_ok {
                targets.extend(rule.criteria.iter().map(String::as_str).filter(|c| known.contains(c)));
            }
        }
        if targets.is_empty() {
            findings.push(Finding {
                kind: FindingKind::UnascribedRisk,
                subject: r.event_id.clone(),
                message: format!("risk {} of `{}` is not ascribed to any criterion", r.risk, r.event_id),
            });
        }
        for c in targets {
            out.push(RiskAscription {
                event_id: r.event_id.clone(),
                hazard_id: r.hazard_id.clone(),
                risk: r.risk.clone(),
                criterion_id: c.to_string(),
            });
        }
    }
    (out, findings)
}

/// Sum of ascribed rates per (criterion, severity class). Classes are never
/// merged.
pub fn aggregate(
    ascriptions: &[RiskAscription],
    policy: WeighingPolicy,
) -> BTreeMap<(String, SeverityClass), EventsPerHour> {
    match policy {
        WeighingPolicy::PerClassNoOffsetting => {
            let mut acc: BTreeMap<(String, SeverityClass), EventsPerHour> = BTreeMap::new();
            for a in ascriptions {
                let slot = acc
                    .entry((a.criterion_id.clone(), a.risk.severity_class))
                    .or_insert_with(EventsPerHour::zero);
                *slot = slot.clone() + a.risk.rate.clone();
            }
            acc
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStatus {
    Accepted,
    Violated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ReductionDemand {
    None,
    /// `actual / tolerable`, greater than 1.
    Factor(Exact),
    /// The tolerable rate is zero: only elimination is acceptable.
    Eliminate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Verdict {
    pub criterion_id: String,
    pub severity_class: SeverityClass,
    pub actual_rate: EventsPerHour,
    pub tolerable_rate: EventsPerHour,
    pub status: VerdictStatus,
    pub required_reduction: ReductionDemand,
    /// Accepted only because actual equals tolerable.
    #[serde(default)]
    pub at_boundary: bool,
}

impl Verdict {
    pub fn required_reduction_factor(&self) -> Option<&Exact> {
        match &self.required_reduction {
            ReductionDemand::Factor(f) => Some(f),
            _ => None,
        }
    }

    /// `1 criterion violated (PRB/S3): 1.25e-7 > 4.64e-10` style fragment.
    pub fn summary(&self) -> String {
        let op = match self.status {
            VerdictStatus::Violated => ">",
            VerdictStatus::Accepted if self.at_boundary => "=",
            VerdictStatus::Accepted => "<",
        };
        format!(
            "({}/{}): {} {} {}",
            self.criterion_id,
            self.severity_class,
            self.actual_rate.value().display_sci(),
            op,
            self.tolerable_rate.value().display_sci()
        )
    }
}

/// One verdict per (criterion, class), ordered by key. Acceptance is
/// `actual <= tolerable`; equality is flagged `at_boundary`.
pub fn compare(
    actuals: &BTreeMap<(String, SeverityClass), EventsPerHour>,
    criteria: &[RiskAcceptanceCriterion],
) -> Result<Vec<Verdict>> {
    let mut out = Vec::with_capacity(actuals.len());
    for ((cid, class), actual) in actuals {
        let tolerable = criteria
            .iter()
            .find(|c| &c.id == cid)
            .and_then(|c| c.tolerable_rate_per_severity.get(class))
            .ok_or_else(|| Error::MissingTolerableRate {
                criterion: cid.clone(),
                severity: *class,
            })?;
        let violated = actual > tolerable;
        let required_reduction = if !violated {
            ReductionDemand::None
        } else {
            match actual.value().checked_div(tolerable.value()) {
                Some(f) => ReductionDemand::Factor(f),
                None => ReductionDemand::Eliminate,
            }
        };
        out.push(Verdict {
            criterion_id: cid.clone(),
            severity_class: *class,
            actual_rate: actual.clone(),
            tolerable_rate: tolerable.clone(),
            status: if violated { VerdictStatus::Violated } else { VerdictStatus::Accepted },
            required_reduction,
            at_boundary: actual == tolerable,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct ActualRate {
    pub criterion_id: String,
    pub severity_class: SeverityClass,
    pub rate: EventsPerHour,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Evaluation {
    pub ascriptions: Vec<RiskAscription>,
    pub actual_rates: Vec<ActualRate>,
    pub verdicts: Vec<Verdict>,
    pub findings: Vec<Finding>,
}

impl Evaluation {
    /// Every criterion accepts individually.
    pub fn accepted(&self) -> bool {
        self.verdicts.iter().all(|v| v.status == VerdictStatus::Accepted)
    }

    pub fn violated(&self) -> impl Iterator<Item = &Verdict> {
        self.verdicts.iter().filter(|v| v.status == VerdictStatus::Violated)
    }
}

/// Ascribe, aggregate and compare in one step.
pub fn evaluate(
    risks: &[EventRisk],
    criteria: &[RiskAcceptanceCriterion],
    rules: &[AscriptionRule],
) -> Result<Evaluation> {
    let (ascriptions, mut findings) = ascribe(risks, criteria, rules);
    let mut actuals: BTreeMap<(String, SeverityClass), EventsPerHour> = BTreeMap::new();
    for c in criteria {
        let mine: Vec<RiskAscription> = ascriptions.iter().filter(|a| a.criterion_id == c.id).cloned().collect();
        actuals.extend(aggregate(&mine, c.weighing_policy));
    }
    let verdicts = compare(&actuals, criteria)?;
    for v in verdicts.iter().filter(|v| v.at_boundary && !v.actual_rate.value().is_zero()) {
        findings.push(Finding {
            kind: FindingKind::BoundaryAcceptance,
            subject: format!("{}/{}", v.criterion_id, v.severity_class),
            message: format!("accepted at the boundary: actual rate equals tolerable rate {}", v.tolerable_rate),
        });
    }
    Ok(Evaluation {
        ascriptions,
        actual_rates: actuals
            .into_iter()
            .map(|((criterion_id, severity_class), rate)| ActualRate {
                criterion_id,
                severity_class,
                rate,
            })
            .collect(),
        verdicts,
        findings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::Provenance;

    fn rate(s: &str) -> EventsPerHour {
        EventsPerHour::new(s.parse().unwrap()).unwrap()
    }

    fn risk(id: &str, r: &str, class: SeverityClass) -> EventRisk {
        EventRisk {
            event_id: id.into(),
            hazard_id: "H".into(),
            scenario_id: "s".into(),
            use_case: "UC".into(),
            provenance: Provenance::TargetBehavior,
            risk: RiskValue {
                rate: rate(r),
                severity_class: class,
            },
        }
    }

    fn criterion(id: &str, s3: &str) -> RiskAcceptanceCriterion {
        RiskAcceptanceCriterion {
            id: id.into(),
            description: "c".into(),
            tolerable_rate_per_severity: BTreeMap::from([(SeverityClass::S3, rate(s3)), (SeverityClass::S2, rate(s3))]),
            weighing_policy: WeighingPolicy::PerClassNoOffsetting,
            derivation: None,
        }
    }

    fn all_to(c: &str) -> AscriptionRule {
        AscriptionRule {
            use_case: None,
            severity_class: None,
            criteria: vec![c.into()],
        }
    }

    #[test]
    fn single_ascription() {
        let (a, f) = ascribe(&[risk("e", "1.25e-7", SeverityClass::S3)], &[criterion("PRB", "4.64e-10")], &[all_to("PRB")]);
        assert_eq!(a.len(), 1);
        assert!(f.is_empty());
    }

    #[test]
    fn no_criteria_is_a_finding() {
        let (a, f) = ascribe(&[risk("e", "1", SeverityClass::S3)], &[], &[]);
        assert!(a.is_empty());
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].kind, FindingKind::UnascribedRisk);
    }

    #[test]
    fn two_matching_criteria() {
        let (a, _) = ascribe(
            &[risk("e", "1", SeverityClass::S3)],
            &[criterion("A", "1"), criterion("B", "1")],
            &[all_to("A"), all_to("B")],
        );
        assert_eq!(a.len(), 2);
    }

    #[test]
    fn rule_filters_by_use_case_and_class() {
        let rule = AscriptionRule {
            use_case: Some("OTHER".into()),
            severity_class: Some(SeverityClass::S3),
            criteria: vec!["A".into()],
        };
        let (a, f) = ascribe(&[risk("e", "1", SeverityClass::S3)], &[criterion("A", "1")], &[rule]);
        assert!(a.is_empty());
        assert_eq!(f.len(), 1);
    }

    #[test]
    fn aggregate_keeps_classes_apart() {
        let (a, _) = ascribe(
            &[
                risk("a", "1e-8", SeverityClass::S3),
                risk("b", "2e-8", SeverityClass::S3),
                risk("c", "5e-8", SeverityClass::S2),
            ],
            &[criterion("PRB", "1")],
            &[all_to("PRB")],
        );
        let agg = aggregate(&a, WeighingPolicy::PerClassNoOffsetting);
        assert_eq!(agg.len(), 2);
        assert_eq!(agg[&("PRB".to_string(), SeverityClass::S3)], rate("3e-8"));
        assert_eq!(agg[&("PRB".to_string(), SeverityClass::S2)], rate("5e-8"));
    }

    #[test]
    fn compare_violated_factor() {
        let actuals = BTreeMap::from([(("PRB".to_string(), SeverityClass::S3), rate("1.25e-7"))]);
        let v = compare(&actuals, &[criterion("PRB", "4.64e-10")]).unwrap();
        assert_eq!(v[0].status, VerdictStatus::Violated);
        let f = v[0].required_reduction_factor().unwrap().to_f64();
        assert!((f - 269.4).abs() / 269.4 < 1e-3, "{f}");
        assert_eq!(v[0].summary(), "(PRB/S3): 1.25e-7 > 4.64e-10");
    }

    #[test]
    fn compare_boundary_and_zero() {
        let crit = [criterion("PRB", "4.64e-10")];
        let eq = BTreeMap::from([(("PRB".to_string(), SeverityClass::S3), rate("4.64e-10"))]);
        let v = compare(&eq, &crit).unwrap();
        assert_eq!(v[0].status, VerdictStatus::Accepted);
        assert!(v[0].at_boundary);
        let zero = BTreeMap::from([(("PRB".to_string(), SeverityClass::S3), EventsPerHour::zero())]);
        let v = compare(&zero, &crit).unwrap();
        assert_eq!(v[0].status, VerdictStatus::Accepted);
        assert_eq!(v[0].required_reduction, ReductionDemand::None);
    }

    #[test]
    fn compare_missing_tolerable_rate() {
        let actuals = BTreeMap::from([(("PRB".to_string(), SeverityClass::S1), rate("1"))]);
        assert!(matches!(
            compare(&actuals, &[criterion("PRB", "1")]),
            Err(Error::MissingTolerableRate { .. })
        ));
    }

    #[test]
    fn zero_tolerance_demands_elimination() {
        let actuals = BTreeMap::from([(("PRB".to_string(), SeverityClass::S3), rate("1e-9"))]);
        let v = compare(&actuals, &[criterion("PRB", "0")]).unwrap();
        assert_eq!(v[0].required_reduction, ReductionDemand::Eliminate);
    }

    #[test]
    fn evaluate_flags_boundary() {
        let e = evaluate(
            &[risk("e", "1e-9", SeverityClass::S3)],
            &[criterion("PRB", "1e-9")],
            &[all_to("PRB")],
        )
        .unwrap();
        assert!(e.accepted());
        assert!(e.findings.iter().any(|f| f.kind == FindingKind::BoundaryAcceptance));
    }
}
