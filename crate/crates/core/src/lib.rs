//! Risk management for automated-driving behavior specifications.
//!
//! The crate turns a fact/rule behavior specification and a scenario catalog
//! into hazardous events, estimates their risk as (rate, severity) pairs,
//! evaluates them against acceptance criteria and drives the treatment loop
//! until the refined specification is acceptable.

pub mod condition;
pub mod documents;
pub mod dsl;
pub mod error;
pub mod estimation;
pub mod evaluation;
pub mod fixture;
pub mod hazard;
pub mod hazard_log;
pub mod inference;
pub mod ontology;
pub mod quantity;
pub mod requirements;
pub mod rmc;
pub mod treatment;
pub mod workspace;

pub use error::{Error, Result};
