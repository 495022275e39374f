//! Hazard log: every identified hazard with its events and mitigation status.

use std::fmt;

use chrono::{DateTime, Utc};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::documents::SCHEMA_VERSION;
use crate::error::{Error, Result};
use crate::ontology::Model;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum LogStatus {
    Open,
    GoalAssigned,
    MeasuresSpecified,
    Accepted,
}

impl LogStatus {
    pub const ALL: [LogStatus; 4] = [
        LogStatus::Open,
        LogStatus::GoalAssigned,
        LogStatus::MeasuresSpecified,
        LogStatus::Accepted,
    ];

    fn rank(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for LogStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LogStatus::Open => "open",
            LogStatus::GoalAssigned => "goal_assigned",
            LogStatus::MeasuresSpecified => "measures_specified",
            LogStatus::Accepted => "accepted",
        })
    }
}

impl std::str::FromStr for LogStatus {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        LogStatus::ALL
            .into_iter()
            .find(|st| st.to_string() == s)
            .ok_or_else(|| format!("unknown hazard-log status `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct LogTransition {
    pub timestamp: DateTime<Utc>,
    pub actor: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<LogStatus>,
    pub to: LogStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct HazardLogEntry {
    pub hazard_id: String,
    pub hazardous_event_ids: Vec<String>,
    pub status: LogStatus,
    pub history: Vec<LogTransition>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct HazardLog {
    pub schema_version: u32,
    pub entries: Vec<HazardLogEntry>,
}

impl Default for HazardLog {
    fn default() -> Self {
        HazardLog {
            schema_version: SCHEMA_VERSION,
            entries: Vec::new(),
        }
    }
}

/// Who and when, for every recorded change.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Stamp {
    pub timestamp: DateTime<Utc>,
    pub actor: String,
}

impl Stamp {
    pub fn now(actor: impl Into<String>) -> Self {
        Stamp {
            timestamp: Utc::now(),
            actor: actor.into(),
        }
    }
}

impl HazardLog {
    pub fn entry(&self, hazard_id: &str) -> Option<&HazardLogEntry> {
        self.entries.iter().find(|e| e.hazard_id == hazard_id)
    }

    /// Adds an `open` entry for every hazard of the model that has none and
    /// refreshes the event lists. Entries are never removed.
    pub fn sync(&mut self, model: &Model, stamp: &Stamp) {
        for h in &model.hazards {
            if self.entry(&h.id).is_none() {
                self.entries.push(HazardLogEntry {
                    hazard_id: h.id.clone(),
                    hazardous_event_ids: Vec::new(),
                    status: LogStatus::Open,
                    history: vec![LogTransition {
                        timestamp: stamp.timestamp,
                        actor: stamp.actor.clone(),
                        from: None,
                        to: LogStatus::Open,
                        note: Some("hazard identified".into()),
                    }],
                });
            }
        }
        for entry in &mut self.entries {
            let mut ids: Vec<String> = model
                .events
                .iter()
                .filter(|e| e.hazard_id == entry.hazard_id)
                .map(|e| e.id.clone())
                .collect();
            ids.sort();
            entry.hazardous_event_ids = ids;
        }
    }

    /// Moves an entry one step forward, or back to any earlier status when a
    /// note explains why.
    pub fn transition(&mut self, hazard_id: &str, to: LogStatus, note: Option<String>, stamp: &Stamp) -> Result<()> {
        let entry = self
            .entries
            .iter_mut()
            .find(|e| e.hazard_id == hazard_id)
            .ok_or_else(|| Error::UnknownEntity(hazard_id.to_string()))?;
        let from = entry.status;
        let legal = if to.rank() == from.rank() + 1 {
            true
        } else if to.rank() < from.rank() {
            if note.as_deref().is_none_or(|n| n.trim().is_empty()) {
                return Err(Error::IllegalTransition(format!(
                    "rolling `{hazard_id}` back from {from} to {to} needs a note"
                )));
            }
            true
        } else {
            false
        };
        if !legal {
            return Err(Error::IllegalTransition(format!("`{hazard_id}`: {from} -> {to}")));
        }
        entry.status = to;
        entry.history.push(LogTransition {
            timestamp: stamp.timestamp,
            actor: stamp.actor.clone(),
            from: Some(from),
            to,
            note,
        });
        Ok(())
    }

    /// Advances an entry through every step up to `to`; a no-op when it is
    /// already there or beyond.
    pub fn advance_to(&mut self, hazard_id: &str, to: LogStatus, note: &str, stamp: &Stamp) -> Result<()> {
        loop {
            let Some(entry) = self.entry(hazard_id) else {
                return Err(Error::UnknownEntity(hazard_id.to_string()));
            };
            if entry.status >= to {
                return Ok(());
            }
            let next = LogStatus::ALL[entry.status.rank() as usize + 1];
            self.transition(hazard_id, next, Some(note.to_string()), stamp)?;
        }
    }
}
