//! The urban T-crossing example: a delivery-van fleet approaching a
//! signposted crosswalk.

use crate::documents::{CatalogDoc, CriteriaDoc, EventsDoc, GoalsDoc, HazardsDoc, MeasuresDoc, ModelDocs, SCHEMA_VERSION};
use crate::dsl::parse_spec;
use crate::ontology::{MeasureKind, MeasureProposal, Model};
use crate::quantity::{EventsPerHour, Exact, Probability};

pub const NAME: &str = "t-crossing";

pub const BEHAVIOR: &str = include_str!("../fixtures/t-crossing/behavior.bspec");
pub const CROSSING_INTENTION_DELTA: &str = include_str!("../fixtures/t-crossing/crossing-intention.delta.bspec");
pub const CROSSING_INTENTION_REQUIREMENT: &str =
    "If a crosswalk is detected, detect pedestrians crossing intention at crosswalks reliably.";
const SCENARIOS: &str = include_str!("../fixtures/t-crossing/scenarios.json");
const HAZARDS: &str = include_str!("../fixtures/t-crossing/hazards.json");
const CRITERIA: &str = include_str!("../fixtures/t-crossing/criteria.json");

pub fn t_crossing_docs() -> ModelDocs {
    let catalog: CatalogDoc = serde_json::from_str(SCENARIOS).expect("fixture catalog parses");
    let hazards: HazardsDoc = serde_json::from_str(HAZARDS).expect("fixture hazards parse");
    let criteria: CriteriaDoc = serde_json::from_str(CRITERIA).expect("fixture criteria parse");
    ModelDocs {
        catalog,
        hazards,
        events: EventsDoc {
            schema_version: SCHEMA_VERSION,
            events: Vec::new(),
        },
        criteria,
        goals: GoalsDoc {
            schema_version: SCHEMA_VERSION,
            goals: Vec::new(),
        },
        measures: MeasuresDoc {
            schema_version: SCHEMA_VERSION,
            measures: Vec::new(),
            requirements: Vec::new(),
            proposals: Vec::new(),
        },
    }
}

/// The pre-measure model: spec, catalog, hazard and criterion; no events,
/// goals or measures yet.
pub fn t_crossing_model() -> Model {
    let spec = parse_spec(BEHAVIOR).expect("fixture spec parses");
    t_crossing_docs().into_model(spec)
}

/// The crossing-intention measure as drafted against the crosswalk hazard.
pub fn crossing_intention_proposal() -> MeasureProposal {
    let p = |s: &str| Probability::new(s.parse::<Exact>().unwrap()).unwrap();
    MeasureProposal {
        id: "M-CROSSING-INTENTION".into(),
        hazard_id: "H-CROSSWALK".into(),
        kind: MeasureKind::BehaviorSpecDelta,
        payload: CROSSING_INTENTION_DELTA.to_string(),
        claimed_reduction_effectiveness: p("0.999"),
        integrity: p("0.999"),
        corrupt_behavior_rate: EventsPerHour::new("1e-11".parse().unwrap()).unwrap(),
        requirement_statement: Some(CROSSING_INTENTION_REQUIREMENT.to_string()),
    }
}
