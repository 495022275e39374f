//! On-disk document shapes. Every document carries `schema_version`.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::dsl::BehaviorSpec;
use crate::estimation::FleetExposure;
use crate::hazard::DeviationModel;
use crate::ontology::{
    Agent, AscriptionRule, BehavioralSafetyRequirement, Harm, Hazard, HazardousEvent, MeasureProposal, Model,
    RiskAcceptanceCriterion, SafetyGoal, SafetyMeasure, Scenario, UseCase,
};

pub const SCHEMA_VERSION: u32 = 1;

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct CatalogDoc {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fleet_exposure: Option<FleetExposure>,
    #[serde(default)]
    pub agents: Vec<Agent>,
    #[serde(default)]
    pub use_cases: Vec<UseCase>,
    #[serde(default)]
    pub scenarios: Vec<Scenario>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct HazardsDoc {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    #[serde(default)]
    pub harms: Vec<Harm>,
    #[serde(default)]
    pub hazards: Vec<Hazard>,
    #[serde(default)]
    pub deviation_model: DeviationModel,
    #[serde(default)]
    pub action_conflicts: Vec<[String; 2]>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct EventsDoc {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    #[serde(default)]
    pub events: Vec<HazardousEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct CriteriaDoc {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    #[serde(default)]
    pub criteria: Vec<RiskAcceptanceCriterion>,
    #[serde(default)]
    pub ascription_rules: Vec<AscriptionRule>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct GoalsDoc {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    #[serde(default)]
    pub goals: Vec<SafetyGoal>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct MeasuresDoc {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    #[serde(default)]
    pub measures: Vec<SafetyMeasure>,
    #[serde(default)]
    pub requirements: Vec<BehavioralSafetyRequirement>,
    #[serde(default)]
    pub proposals: Vec<MeasureProposal>,
}

/// The model split into its documents (the behavior spec is stored as text).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelDocs {
    pub catalog: CatalogDoc,
    pub hazards: HazardsDoc,
    pub events: EventsDoc,
    pub criteria: CriteriaDoc,
    pub goals: GoalsDoc,
    pub measures: MeasuresDoc,
}

impl ModelDocs {
    pub fn from_model(m: &Model) -> Self {
        ModelDocs {
            catalog: CatalogDoc {
                schema_version: SCHEMA_VERSION,
                fleet_exposure: m.fleet_exposure.clone(),
                agents: m.agents.clone(),
                use_cases: m.use_cases.clone(),
                scenarios: m.scenarios.clone(),
            },
            hazards: HazardsDoc {
                schema_version: SCHEMA_VERSION,
                harms: m.harms.clone(),
                hazards: m.hazards.clone(),
                deviation_model: m.deviation_model.clone(),
                action_conflicts: m.action_conflicts.clone(),
            },
            events: EventsDoc {
                schema_version: SCHEMA_VERSION,
                events: m.events.clone(),
            },
            criteria: CriteriaDoc {
                schema_version: SCHEMA_VERSION,
                criteria: m.criteria.clone(),
                ascription_rules: m.ascription_rules.clone(),
            },
            goals: GoalsDoc {
                schema_version: SCHEMA_VERSION,
                goals: m.goals.clone(),
            },
            measures: MeasuresDoc {
                schema_version: SCHEMA_VERSION,
                measures: m.measures.clone(),
                requirements: m.requirements.clone(),
                proposals: m.proposals.clone(),
            },
        }
    }

    pub fn into_model(self, spec: BehaviorSpec) -> Model {
        Model {
            spec,
            harms: self.hazards.harms,
            hazards: self.hazards.hazards,
            agents: self.catalog.agents,
            use_cases: self.catalog.use_cases,
            scenarios: self.catalog.scenarios,
            fleet_exposure: self.catalog.fleet_exposure,
            deviation_model: self.hazards.deviation_model,
            action_conflicts: self.hazards.action_conflicts,
            events: self.events.events,
            criteria: self.criteria.criteria,
            ascription_rules: self.criteria.ascription_rules,
            goals: self.goals.goals,
            measures: self.measures.measures,
            requirements: self.measures.requirements,
            proposals: self.measures.proposals,
        }
    }
}
