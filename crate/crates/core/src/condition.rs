//! Hazard applicability conditions.
//!
//! A condition is a conjunction of terms:
//!
//! ```text
//! condition := term ("and" term)* ;
//! term      := IDENT                          # fact holds
//!            | "action" "(" IDENT ")"         # action is in the behavior
//!            | "not_action" "(" IDENT ")"     # action is absent
//!            | "deviation" "(" IDENT "," IDENT ")"   # behavior is this deviation
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::dsl::{is_valid_ident, BehaviorSpec};
use crate::error::ConditionError;
use crate::hazard::GuideWord;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Fact(String),
    Action(String),
    NotAction(String),
    Deviation { action: String, guide_word: GuideWord },
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Fact(id) => f.write_str(id),
            Term::Action(a) => write!(f, "action({a})"),
            Term::NotAction(a) => write!(f, "not_action({a})"),
            Term::Deviation { action, guide_word } => write!(f, "deviation({action}, {guide_word})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Condition {
    pub terms: Vec<Term>,
}

/// Behavior of one scenario as seen by a condition: derived facts, the
/// actions actually performed, and the deviation under analysis (if any).
#[derive(Debug, Clone, Copy)]
pub struct BehaviorView<'a> {
    pub facts: &'a BTreeSet<String>,
    pub actions: &'a BTreeSet<String>,
    pub deviation: Option<(&'a str, &'a GuideWord)>,
}

impl Condition {
    pub fn evaluate(&self, view: &BehaviorView<'_>) -> bool {
        self.terms.iter().all(|t| match t {
            Term::Fact(id) => view.facts.contains(id),
            Term::Action(a) => view.actions.contains(a),
            Term::NotAction(a) => !view.actions.contains(a),
            Term::Deviation { action, guide_word } => {
                matches!(view.deviation, Some((a, g)) if a == action && g == guide_word)
            }
        })
    }

    /// Ensures every referenced fact and action exists in `spec`.
    pub fn check_against(&self, spec: &BehaviorSpec) -> Result<(), ConditionError> {
        for t in &self.terms {
            match t {
                Term::Fact(id) if !spec.is_fact(id) => return Err(ConditionError::UnknownFact(id.clone())),
                Term::Action(a) | Term::NotAction(a) | Term::Deviation { action: a, .. } if !spec.is_action(a) => {
                    return Err(ConditionError::UnknownAction(a.clone()))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn mentions_behavior(&self) -> bool {
        self.terms.iter().any(|t| !matches!(t, Term::Fact(_)))
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.terms.iter().map(Term::to_string).collect();
        f.write_str(&parts.join(" and "))
    }
}

impl FromStr for Condition {
    type Err = ConditionError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let malformed = |reason: &str| ConditionError::Malformed {
            text: text.to_string(),
            reason: reason.to_string(),
        };
        // Split on the `and` keyword while respecting parentheses.
        let mut terms = Vec::new();
        let mut depth = 0i32;
        let mut current = String::new();
        let mut parts = Vec::new();
        for word in text.split_whitespace() {
            depth += word.matches('(').count() as i32 - word.matches(')').count() as i32;
            if word == "and" && depth == 0 {
                parts.push(std::mem::take(&mut current));
            } else {
                if !current.is_empty() {
                    current.push(' ');
                }
                current.push_str(word);
            }
        }
        parts.push(current);
        if depth != 0 {
            return Err(malformed("unbalanced parentheses"));
        }
        for part in parts {
            let part = part.trim();
            if part.is_empty() {
                return Err(malformed("empty term"));
            }
            let term = match part.split_once('(') {
                None => {
                    if !is_valid_ident(part) {
                        return Err(malformed(&format!("`{part}` is not an identifier")));
                    }
                    Term::Fact(part.to_string())
                }
                Some((head, rest)) => {
                    let args = rest
                        .strip_suffix(')')
                        .ok_or_else(|| malformed(&format!("`{part}` is missing `)`")))?;
                    let args: Vec<&str> = args.split(',').map(str::trim).collect();
                    if let Some(bad) = args.iter().find(|a| !is_valid_ident(a)) {
                        return Err(malformed(&format!("`{bad}` is not an identifier")));
                    }
                    match (head.trim(), args.as_slice()) {
                        ("action", [a]) => Term::Action(a.to_string()),
                        ("not_action", [a]) => Term::NotAction(a.to_string()),
                        ("deviation", [a, g]) => Term::Deviation {
                            action: a.to_string(),
                            guide_word: g.parse()?,
                        },
                        (head, _) => return Err(malformed(&format!("unknown predicate `{head}` or wrong arity"))),
                    }
                }
            };
            terms.push(term);
        }
        Ok(Condition { terms })
    }
}
