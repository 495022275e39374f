//! Requirements on a risk management framework and the tests that cover them.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

pub struct Requirement {
    pub id: &'static str,
    pub text: &'static str,
    pub tests: &'static [&'static str],
}

/// The identifiers follow the original labels; R6 and R7 are not defined.
pub const REQUIREMENTS: &[Requirement] = &[
    Requirement {
        id: "R1",
        text: "Hazardous events shall be identified.",
        tests: &["req01_hazardous_events_are_identified", "fixture_iteration_one_events"],
    },
    Requirement {
        id: "R2",
        text: "The risk of hazardous events shall be assessed based on the probability of the occurrence of harm and the severity of that harm.",
        tests: &["req02_risk_combines_rate_and_severity", "event_risk_is_product"],
    },
    Requirement {
        id: "R3",
        text: "The harm potentially resulting from a hazardous event shall be identified.",
        tests: &["req03_harm_of_each_event_is_identified"],
    },
    Requirement {
        id: "R4",
        text: "The severity of harm potentially resulting from a hazardous event shall be estimated.",
        tests: &["req04_severity_is_estimated", "severity_table"],
    },
    Requirement {
        id: "R5",
        text: "The probability of occurrence of harm potentially resulting from a hazardous event shall be estimated.",
        tests: &["req05_probability_of_harm_is_estimated", "fixture_variant_rate"],
    },
    Requirement {
        id: "R8",
        text: "Safety measures shall be specified that lead to an acceptable level of risk.",
        tests: &["req08_measures_reach_acceptable_risk", "crossing_intention_measure_yields_requirement"],
    },
    Requirement {
        id: "R9",
        text: "The risk reduction achieved by a specified safety measure shall be assessed.",
        tests: &["req09_measure_reduction_is_assessed", "residual_examples"],
    },
    Requirement {
        id: "R10",
        text: "The probability of satisfactorily performing specified safety relevant functionality (its safety integrity) shall be assessed.",
        tests: &["req10_integrity_is_assessed", "integrity_banding"],
    },
    Requirement {
        id: "R11",
        text: "The required level of safety shall be specified by defining risk acceptance criteria.",
        tests: &["req11_acceptance_criteria_are_specified"],
    },
    Requirement {
        id: "R12",
        text: "Safety goals with their corresponding integrity requirements shall be formulated related to the prevention or mitigation of the hazardous events.",
        tests: &["req12_goals_carry_integrity", "goal_for_fixture_hazard"],
    },
    Requirement {
        id: "R13",
        text: "Potentially relevant hazards shall be identified.",
        tests: &["req13_hazards_are_identified"],
    },
    Requirement {
        id: "R14",
        text: "A hazard log shall be created, which lists identified hazards and their mitigation status.",
        tests: &["req14_hazard_log_lists_status"],
    },
    Requirement {
        id: "R15",
        text: "Risk evaluation shall be conducted, which determines the necessary risk reduction from the initial to the acceptable level of risk.",
        tests: &["req15_evaluation_determines_reduction", "compare_violated_factor"],
    },
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct RequirementCoverage {
    pub id: String,
    pub text: String,
    pub tests: Vec<String>,
}

pub fn coverage_table() -> Vec<RequirementCoverage> {
    REQUIREMENTS
        .iter()
        .map(|r| RequirementCoverage {
            id: r.id.to_string(),
            text: r.text.to_string(),
            tests: r.tests.iter().map(|t| t.to_string()).collect(),
        })
        .collect()
}
