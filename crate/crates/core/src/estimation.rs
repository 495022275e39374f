//! Exposure arithmetic, harm rates, severity classification and per-event
//! risk values.

use std::fmt;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{EstimationError, Error, Result};
use crate::hazard::DeviationId;
use crate::ontology::{HazardousEvent, Model, Provenance, RiskValue, Scenario, SeverityClass, TriggeringBehavior};
use crate::quantity::{EventsPerHour, EventsPerYear, Exact, HoursPerYear, KmPerHour, KmPerYear, Probability};

/// Operating hours of a vehicle fleet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct FleetExposure {
    pub fleet_size: u64,
    pub hours_per_day: Exact,
    pub days_per_year: Exact,
}

impl FleetExposure {
    pub fn new(fleet_size: u64, hours_per_day: Exact, days_per_year: Exact) -> Result<Self, EstimationError> {
        let e = FleetExposure {
            fleet_size,
            hours_per_day,
            days_per_year,
        };
        e.check()?;
        Ok(e)
    }

    pub fn check(&self) -> Result<(), EstimationError> {
        if self.hours_per_day.is_negative() || self.hours_per_day > Exact::from_integer(24) {
            return Err(EstimationError::HoursPerDay(self.hours_per_day.to_string()));
        }
        if self.days_per_year.is_negative() {
            return Err(crate::error::QuantityError::Negative {
                unit: "day/yr",
                value: self.days_per_year.to_string(),
            }
            .into());
        }
        Ok(())
    }
}

/// Human-driving exposure: distance per year at an average speed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct BaselineExposure {
    pub annual_mileage: KmPerYear,
    pub average_speed: KmPerHour,
}

pub fn fleet_exposure_hours(exposure: &FleetExposure) -> Result<HoursPerYear, EstimationError> {
    exposure.check()?;
    let hours = Exact::from_integer(exposure.fleet_size as i64) * exposure.hours_per_day.clone() * exposure.days_per_year.clone();
    Ok(HoursPerYear::new(hours)?)
}

/// Harm events per operating hour.
pub fn harm_rate(count: &EventsPerYear, exposure: &HoursPerYear) -> Result<EventsPerHour, EstimationError> {
    let rate = count
        .value()
        .checked_div(exposure.value())
        .ok_or(EstimationError::ZeroExposure)?;
    Ok(EventsPerHour::new(rate)?)
}

pub fn baseline_exposure_hours(b: &BaselineExposure) -> Result<HoursPerYear, EstimationError> {
    let hours = b
        .annual_mileage
        .value()
        .checked_div(b.average_speed.value())
        .ok_or(EstimationError::ZeroSpeed)?;
    Ok(HoursPerYear::new(hours)?)
}

/// Tolerable rate implied by a baseline: `harm_events / (mileage / speed)`.
pub fn baseline_harm_rate(b: &BaselineExposure, harm_events: &EventsPerYear) -> Result<EventsPerHour, EstimationError> {
    harm_rate(harm_events, &baseline_exposure_hours(b)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct RiskParameters {
    pub event_frequency_per_hour: EventsPerHour,
    /// `1 - controllability`.
    pub probability_harm_given_event: Probability,
    pub severity_class: SeverityClass,
}

pub fn estimate_event_risk(params: &RiskParameters) -> RiskValue {
    RiskValue {
        rate: params.event_frequency_per_hour.scale(&params.probability_harm_given_event),
        severity_class: params.severity_class,
    }
}

/// Occurrences per operating hour of a scenario.
pub fn scenario_frequency(scenario: &Scenario, fleet: Option<&FleetExposure>) -> Result<EventsPerHour, EstimationError> {
    if let Some(f) = &scenario.frequency_per_hour {
        return Ok(f.clone());
    }
    match (&scenario.occurrences_per_year, fleet) {
        (Some(n), Some(fleet)) => harm_rate(n, &fleet_exposure_hours(fleet)?),
        _ => Err(EstimationError::MissingFrequency(scenario.id.clone())),
    }
}

/// Parameters for one hazardous event of `model`.
///
/// Deviation events occur at the scenario frequency thinned by the
/// probability of the deviation.
pub fn risk_parameters(model: &Model, event: &HazardousEvent) -> Result<RiskParameters> {
    let scenario = model
        .scenario(&event.scenario_id)
        .ok_or_else(|| Error::UnknownEntity(event.scenario_id.clone()))?;
    let severity_class = model
        .hazard_severity(&event.hazard_id)
        .ok_or_else(|| Error::UnknownEntity(event.hazard_id.clone()))?;
    let mut frequency = scenario_frequency(scenario, model.fleet_exposure.as_ref())?;
    if let (Provenance::Deviation, TriggeringBehavior::Deviation { deviation_id }) =
        (event.provenance, &event.triggering_behavior)
    {
        let id: DeviationId = deviation_id.parse()?;
        frequency = frequency.scale(&model.deviation_model.probability(&id.action, &id.guide_word));
    }
    Ok(RiskParameters {
        event_frequency_per_hour: frequency,
        probability_harm_given_event: scenario.controllability.complement(),
        severity_class,
    })
}

/// A hazardous event's estimated risk together with what evaluation needs
/// to ascribe it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct EventRisk {
    pub event_id: String,
    pub hazard_id: String,
    pub scenario_id: String,
    pub use_case: String,
    pub provenance: Provenance,
    pub risk: RiskValue,
}

pub fn estimate_events(model: &Model, events: &[HazardousEvent]) -> Result<Vec<EventRisk>> {
    events
        .iter()
        .map(|e| {
            let params = risk_parameters(model, e)?;
            let use_case = model
                .scenario(&e.scenario_id)
                .map(|s| s.use_case.clone())
                .unwrap_or_default();
            Ok(EventRisk {
                event_id: e.id.clone(),
                hazard_id: e.hazard_id.clone(),
                scenario_id: e.scenario_id.clone(),
                use_case,
                provenance: e.provenance,
                risk: estimate_event_risk(&params),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum CollisionPartner {
    None,
    Pedestrian,
    Cyclist,
    Vehicle,
    Object,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum SpeedBand {
    /// Below 10 km/h.
    WalkingPace,
    /// Built-up area, up to 50 km/h.
    Urban,
    /// Up to 100 km/h.
    Rural,
    Motorway,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum CollisionMechanism {
    NoContact,
    Glancing,
    RunOver,
    Frontal,
    RearEnd,
    SideImpact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
pub struct CollisionDescriptor {
    pub partner: CollisionPartner,
    pub speed_band: SpeedBand,
    pub mechanism: CollisionMechanism,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case", tag = "result", content = "class")]
pub enum SeverityClassification {
    Classified(SeverityClass),
    /// No table row applies; the class must be entered manually.
    Unclassified,
}

impl fmt::Display for SeverityClassification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeverityClassification::Classified(s) => s.fmt(f),
            SeverityClassification::Unclassified => f.write_str("unclassified"),
        }
    }
}

/// Provisional severity table.
///
/// | partner            | speed band   | mechanism                | class |
/// |--------------------|--------------|--------------------------|-------|
/// | none / any         | any          | no contact               | S0    |
/// | pedestrian/cyclist | walking pace | any contact              | S1    |
/// | pedestrian/cyclist | urban        | glancing                 | S2    |
/// | pedestrian/cyclist | urban, rural | run-over, frontal, side  | S3    |
/// | vehicle            | walking pace | any contact              | S0    |
/// | vehicle            | urban        | rear-end                 | S1    |
/// | vehicle            | rural        | rear-end                 | S2    |
/// | vehicle            | rural        | frontal, side impact     | S3    |
///
/// Anything else is unclassified.
pub fn classify_severity(d: &CollisionDescriptor) -> SeverityClassification {
    use CollisionMechanism as M;
    use CollisionPartner as P;
    use SeverityClass::*;
    use SpeedBand as B;

    let class = match (d.partner, d.speed_band, d.mechanism) {
        (P::None, _, _) | (_, _, M::NoContact) => Some(S0),
        (P::Pedestrian | P::Cyclist, B::WalkingPace, _) => Some(S1),
        (P::Pedestrian | P::Cyclist, B::Urban, M::Glancing) => Some(S2),
        (P::Pedestrian | P::Cyclist, B::Urban | B::Rural, M::RunOver | M::Frontal | M::SideImpact) => Some(S3),
        (P::Vehicle, B::WalkingPace, _) => Some(S0),
        (P::Vehicle, B::Urban, M::RearEnd) => Some(S1),
        (P::Vehicle, B::Rural, M::RearEnd) => Some(S2),
        (P::Vehicle, B::Rural, M::Frontal | M::SideImpact) => Some(S3),
        _ => None,
    };
    class.map_or(SeverityClassification::Unclassified, SeverityClassification::Classified)
}
