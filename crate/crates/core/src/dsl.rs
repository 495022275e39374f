//! Behavior specification language.
//!
//! ```text
//! spec        := ("version" INT ";")? (fact_decl | action_decl | rule_decl)* ;
//! fact_decl   := "override"? "fact" IDENT STRING ";" ;
//! action_decl := "override"? "action" IDENT STRING ";" ;
//! rule_decl   := "override"? "rule" IDENT ":" "if" IDENT ("and" IDENT)* "then" IDENT ";" ;
//! ```
//!
//! `#` starts a comment that runs to the end of the line. The `override`
//! prefix is only accepted in deltas (see [`parse_delta`]). Facts and actions
//! share one identifier namespace; rules have their own.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use indexmap::IndexMap;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::DslError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Fact {
    pub id: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Action {
    pub id: String,
    pub description: String,
}

/// A conjunctive rule: all antecedent facts imply the consequent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Rule {
    pub id: String,
    pub antecedents: Vec<String>,
    pub consequent: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum FactKind {
    /// May be asserted by a scenario.
    Base,
    /// Concluded by at least one rule.
    Derivable,
}

/// 1-based source position of a declaration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pos {
    pub line: usize,
    pub column: usize,
}

/// Declaration positions, keyed by `"fact:<id>"`, `"action:<id>"`, `"rule:<id>"`.
///
/// Ignored by equality: two specs are structurally equal regardless of where
/// their declarations appeared in the source.
#[derive(Debug, Clone, Default)]
pub struct SourceMap(BTreeMap<String, Pos>);

impl PartialEq for SourceMap {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Eq for SourceMap {}

impl SourceMap {
    pub fn get(&self, key: &str) -> Option<Pos> {
        self.0.get(key).copied()
    }
}

/// A graph of facts, rules and actions constituting target behavior.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehaviorSpec {
    pub version: u64,
    pub facts: IndexMap<String, Fact>,
    pub actions: IndexMap<String, Action>,
    pub rules: IndexMap<String, Rule>,
    /// Ids marked `override` (deltas only).
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub overrides: BTreeSet<String>,
    #[serde(skip)]
    pub source: SourceMap,
}

impl BehaviorSpec {
    pub fn is_empty(&self) -> bool {
        self.facts.is_empty() && self.actions.is_empty() && self.rules.is_empty()
    }

    pub fn fact_kind(&self, id: &str) -> Option<FactKind> {
        self.facts.get(id)?;
        if self.rules.values().any(|r| r.consequent == id) {
            Some(FactKind::Derivable)
        } else {
            Some(FactKind::Base)
        }
    }

    pub fn derivable_facts(&self) -> BTreeSet<&str> {
        self.rules
            .values()
            .map(|r| r.consequent.as_str())
            .filter(|c| self.facts.contains_key(*c))
            .collect()
    }

    pub fn is_fact(&self, id: &str) -> bool {
        self.facts.contains_key(id)
    }

    pub fn is_action(&self, id: &str) -> bool {
        self.actions.contains_key(id)
    }

    /// Structural equality ignoring the version counter.
    pub fn same_content(&self, other: &BehaviorSpec) -> bool {
        self.facts == other.facts
            && self.actions == other.actions
            && self.rules == other.rules
            && self.overrides == other.overrides
    }

    /// Checks every cross-reference. Used by [`parse_spec`] and after merges.
    pub fn check(&self) -> Result<(), DslError> {
        for fact in self.facts.keys() {
            if self.actions.contains_key(fact) {
                return Err(self.semantic(&format!("action:{fact}"), format!("duplicate id `{fact}`")));
            }
        }
        for rule in self.rules.values() {
            let key = format!("rule:{}", rule.id);
            if rule.antecedents.is_empty() {
                return Err(self.semantic(&key, format!("rule `{}` has no antecedents", rule.id)));
            }
            let mut seen = BTreeSet::new();
            for a in &rule.antecedents {
                if self.actions.contains_key(a) {
                    return Err(self.semantic(
                        &key,
                        format!("action `{a}` used in antecedent of rule `{}`", rule.id),
                    ));
                }
                if !self.facts.contains_key(a) {
                    return Err(self.semantic(&key, format!("unknown id {a}")));
                }
                if !seen.insert(a) {
                    return Err(self.semantic(
                        &key,
                        format!("repeated antecedent `{a}` in rule `{}`", rule.id),
                    ));
                }
            }
            if !self.facts.contains_key(&rule.consequent) && !self.actions.contains_key(&rule.consequent) {
                return Err(self.semantic(&key, format!("unknown id {}", rule.consequent)));
            }
        }
        Ok(())
    }

    fn semantic(&self, key: &str, message: String) -> DslError {
        let pos = self.source.get(key).unwrap_or(Pos { line: 0, column: 0 });
        DslError::Semantic {
            line: pos.line,
            column: pos.column,
            message,
        }
    }
}

// ------------------------------------------------------------------------------------------------
// Lexer
// ------------------------------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Str(String),
    Int(u64),
    Colon,
    Semi,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Str(_) => "string literal".to_string(),
            Tok::Int(n) => format!("integer {n}"),
            Tok::Colon => "`:`".to_string(),
            Tok::Semi => "`;`".to_string(),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: Pos,
}

fn lex(text: &str) -> Result<Vec<Token>, DslError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut column) = (1usize, 1usize);

    macro_rules! bump {
        () => {{
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                column = 1;
            } else if c.is_some() {
                column += 1;
            }
            c
        }};
    }

    while let Some(&c) = chars.peek() {
        let pos = Pos { line, column };
        match c {
            c if c.is_whitespace() => {
                bump!();
            }
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    bump!();
                }
            }
            ':' => {
                bump!();
                out.push(Token { tok: Tok::Colon, pos });
            }
            ';' => {
                bump!();
                out.push(Token { tok: Tok::Semi, pos });
            }
            '"' => {
                bump!();
                let mut s = String::new();
                loop {
                    match bump!() {
                        None | Some('\n') => {
                            return Err(DslError::Syntax {
                                line: pos.line,
                                column: pos.column,
                                expected: "closing `\"`".to_string(),
                                found: "end of line".to_string(),
                            })
                        }
                        Some('"') => break,
                        Some('\\') => match bump!() {
                            Some('"') => s.push('"'),
                            Some('\\') => s.push('\\'),
                            Some('n') => s.push('\n'),
                            other => {
                                return Err(DslError::Syntax {
                                    line,
                                    column: column.saturating_sub(1),
                                    expected: "escape sequence `\\\"`, `\\\\` or `\\n`".to_string(),
                                    found: other.map_or("end of input".to_string(), |c| format!("`\\{c}`")),
                                })
                            }
                        },
                        Some(c) => s.push(c),
                    }
                }
                out.push(Token { tok: Tok::Str(s), pos });
            }
            c if c.is_ascii_digit() => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if !c.is_ascii_digit() {
                        break;
                    }
                    s.push(c);
                    bump!();
                }
                let n = s.parse().map_err(|_| DslError::Syntax {
                    line: pos.line,
                    column: pos.column,
                    expected: "integer that fits 64 bits".to_string(),
                    found: s.clone(),
                })?;
                out.push(Token { tok: Tok::Int(n), pos });
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if !(c.is_ascii_alphanumeric() || c == '_') {
                        break;
                    }
                    s.push(c);
                    bump!();
                }
                out.push(Token { tok: Tok::Ident(s), pos });
            }
            other => {
                return Err(DslError::Syntax {
                    line,
                    column,
                    expected: "declaration".to_string(),
                    found: format!("`{other}`"),
                })
            }
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        pos: Pos { line, column },
    });
    Ok(out)
}

// ------------------------------------------------------------------------------------------------
// Parser
// ------------------------------------------------------------------------------------------------

const KEYWORDS: &[&str] = &["fact", "action", "rule", "if", "and", "then", "override", "version"];

pub fn is_valid_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !KEYWORDS.contains(&s)
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
    allow_override: bool,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.at]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.at].clone();
        if self.at + 1 < self.tokens.len() {
            self.at += 1;
        }
        t
    }

    fn error(&self, expected: &str) -> DslError {
        let t = self.peek();
        DslError::Syntax {
            line: t.pos.line,
            column: t.pos.column,
            expected: expected.to_string(),
            found: t.tok.describe(),
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn keyword(&mut self, kw: &str) -> Result<(), DslError> {
        if self.is_keyword(kw) {
            self.next();
            Ok(())
        } else {
            Err(self.error(&format!("`{kw}`")))
        }
    }

    fn ident(&mut self) -> Result<(String, Pos), DslError> {
        match &self.peek().tok {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let t = self.next();
                match t.tok {
                    Tok::Ident(s) => Ok((s, t.pos)),
                    _ => unreachable!(),
                }
            }
            _ => Err(self.error("identifier")),
        }
    }

    fn string(&mut self) -> Result<String, DslError> {
        match &self.peek().tok {
            Tok::Str(_) => match self.next().tok {
                Tok::Str(s) => Ok(s),
                _ => unreachable!(),
            },
            _ => Err(self.error("string literal")),
        }
    }

    fn punct(&mut self, tok: Tok, expected: &str) -> Result<(), DslError> {
        if self.peek().tok == tok {
            self.next();
            Ok(())
        } else {
            Err(self.error(expected))
        }
    }

    fn spec(&mut self) -> Result<BehaviorSpec, DslError> {
        let mut spec = BehaviorSpec::default();
        if self.is_keyword("version") {
            self.next();
            match self.next().tok {
                Tok::Int(n) => spec.version = n,
                _ => {
                    self.at -= 1;
                    return Err(self.error("version number"));
                }
            }
            self.punct(Tok::Semi, "`;`")?;
        }
        loop {
            if self.peek().tok == Tok::Eof {
                return Ok(spec);
            }
            let overriding = if self.is_keyword("override") {
                if !self.allow_override {
                    let pos = self.peek().pos;
                    return Err(DslError::Semantic {
                        line: pos.line,
                        column: pos.column,
                        message: "`override` is only allowed in deltas".to_string(),
                    });
                }
                self.next();
                true
            } else {
                false
            };
            let decl_pos = self.peek().pos;
            let (kind, id) = if self.is_keyword("fact") {
                self.next();
                let (id, _) = self.ident()?;
                let description = self.string()?;
                self.punct(Tok::Semi, "`;`")?;
                if spec.facts.contains_key(&id) || spec.actions.contains_key(&id) {
                    return Err(dup(&id, decl_pos));
                }
                spec.facts.insert(id.clone(), Fact { id: id.clone(), description });
                ("fact", id)
            } else if self.is_keyword("action") {
                self.next();
                let (id, _) = self.ident()?;
                let description = self.string()?;
                self.punct(Tok::Semi, "`;`")?;
                if spec.facts.contains_key(&id) || spec.actions.contains_key(&id) {
                    return Err(dup(&id, decl_pos));
                }
                spec.actions.insert(id.clone(), Action { id: id.clone(), description });
                ("action", id)
            } else if self.is_keyword("rule") {
                self.next();
                let (id, _) = self.ident()?;
                self.punct(Tok::Colon, "`:`")?;
                self.keyword("if")?;
                let mut antecedents = vec![self.ident()?.0];
                while self.is_keyword("and") {
                    self.next();
                    antecedents.push(self.ident()?.0);
                }
                self.keyword("then")?;
                let (consequent, _) = self.ident()?;
                self.punct(Tok::Semi, "`;`")?;
                if spec.rules.contains_key(&id) {
                    return Err(dup(&id, decl_pos));
                }
                spec.rules.insert(
                    id.clone(),
                    Rule {
                        id: id.clone(),
                        antecedents,
                        consequent,
                    },
                );
                ("rule", id)
            } else {
                return Err(self.error("`fact`, `action` or `rule`"));
            };
            spec.source.0.insert(format!("{kind}:{id}"), decl_pos);
            if overriding {
                spec.overrides.insert(id);
            }
        }
    }
}

fn dup(id: &str, pos: Pos) -> DslError {
    DslError::Semantic {
        line: pos.line,
        column: pos.column,
        message: format!("duplicate id `{id}`"),
    }
}

/// Parses a complete specification and resolves every reference.
pub fn parse_spec(text: &str) -> Result<BehaviorSpec, DslError> {
    let mut parser = Parser {
        tokens: lex(text)?,
        at: 0,
        allow_override: false,
    };
    let spec = parser.spec()?;
    spec.check()?;
    Ok(spec)
}

/// Parses a delta: `override` is allowed, and references may point into the
/// spec the delta will later be merged into.
pub fn parse_delta(text: &str) -> Result<BehaviorSpec, DslError> {
    let mut parser = Parser {
        tokens: lex(text)?,
        at: 0,
        allow_override: true,
    };
    parser.spec()
}

// ------------------------------------------------------------------------------------------------
// Serializer
// ------------------------------------------------------------------------------------------------

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

pub const SPEC_HEADER: &str = "# riskcore behavior specification\n";

pub fn serialize_spec(spec: &BehaviorSpec) -> String {
    let mut out = String::from(SPEC_HEADER);
    let prefix = |id: &str| if spec.overrides.contains(id) { "override " } else { "" };
    if spec.version > 0 {
        let _ = writeln!(out, "version {};", spec.version);
    }
    let section = |out: &mut String, lines: Vec<String>| {
        if !lines.is_empty() {
            out.push('\n');
            for l in lines {
                out.push_str(&l);
                out.push('\n');
            }
        }
    };
    section(
        &mut out,
        spec.facts
            .values()
            .map(|f| format!("{}fact {} {};", prefix(&f.id), f.id, quote(&f.description)))
            .collect(),
    );
    section(
        &mut out,
        spec.actions
            .values()
            .map(|a| format!("{}action {} {};", prefix(&a.id), a.id, quote(&a.description)))
            .collect(),
    );
    section(
        &mut out,
        spec.rules
            .values()
            .map(|r| {
                format!(
                    "{}rule {}: if {} then {};",
                    prefix(&r.id),
                    r.id,
                    r.antecedents.join(" and "),
                    r.consequent
                )
            })
            .collect(),
    );
    out
}

// ------------------------------------------------------------------------------------------------
// Merge
// ------------------------------------------------------------------------------------------------

/// Union of `base` and `delta` without validation or version change.
///
/// Redefinitions must carry `override` unless they are identical.
pub fn combine(base: &BehaviorSpec, delta: &BehaviorSpec) -> Result<BehaviorSpec, DslError> {
    let mut out = base.clone();
    for fact in delta.facts.values() {
        if out.actions.contains_key(&fact.id) {
            return Err(DslError::Conflict { id: fact.id.clone() });
        }
        match out.facts.get(&fact.id) {
            Some(existing) if existing != fact && !delta.overrides.contains(&fact.id) => {
                return Err(DslError::Conflict { id: fact.id.clone() })
            }
            _ => {
                out.facts.insert(fact.id.clone(), fact.clone());
            }
        }
    }
    for action in delta.actions.values() {
        if out.facts.contains_key(&action.id) {
            return Err(DslError::Conflict { id: action.id.clone() });
        }
        match out.actions.get(&action.id) {
            Some(existing) if existing != action && !delta.overrides.contains(&action.id) => {
                return Err(DslError::Conflict { id: action.id.clone() })
            }
            _ => {
                out.actions.insert(action.id.clone(), action.clone());
            }
        }
    }
    for rule in delta.rules.values() {
        match out.rules.get(&rule.id) {
            Some(existing) if existing != rule && !delta.overrides.contains(&rule.id) => {
                return Err(DslError::Conflict { id: rule.id.clone() })
            }
            _ => {
                out.rules.insert(rule.id.clone(), rule.clone());
            }
        }
    }
    for (key, pos) in &delta.source.0 {
        out.source.0.insert(key.clone(), *pos);
    }
    Ok(out)
}

/// Merges a delta into a spec, checks the result and bumps the version.
pub fn merge_spec(base: &BehaviorSpec, delta: &BehaviorSpec) -> Result<BehaviorSpec, DslError> {
    let mut merged = combine(base, delta)?;
    merged.overrides.clear();
    merged.check()?;
    merged.version = base.version + 1;
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = include_str!("../fixtures/t-crossing/behavior.bspec");
    const DELTA: &str = include_str!("../fixtures/t-crossing/crossing-intention.delta.bspec");

    #[test]
    fn parses_fixture_counts() {
        let spec = parse_spec(FIXTURE).unwrap();
        assert_eq!(spec.facts.len(), 8);
        assert_eq!(spec.rules.len(), 3);
        assert_eq!(spec.actions.len(), 1);
        assert_eq!(spec.fact_kind("crosswalk_detected"), Some(FactKind::Derivable));
        assert_eq!(spec.fact_kind("crossing_intention_detected"), Some(FactKind::Derivable));
        assert_eq!(spec.fact_kind("pedestrian_detected"), Some(FactKind::Base));
        assert_eq!(spec.fact_kind("stop_at_crosswalk"), None);
    }

    #[test]
    fn empty_input_is_empty_spec() {
        let spec = parse_spec("").unwrap();
        assert!(spec.is_empty());
        assert_eq!(spec.version, 0);
        assert!(parse_spec("# only a comment\n\n").unwrap().is_empty());
    }

    #[test]
    fn unknown_antecedent_is_semantic_error() {
        let err = parse_spec("action a1 \"x\";\nrule r1: if f_missing then a1;").unwrap_err();
        match err {
            DslError::Semantic { line, message, .. } => {
                assert_eq!(line, 2);
                assert_eq!(message, "unknown id f_missing");
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_spec("rule r1: if f_missing then a1;").unwrap_err();
        assert!(err.to_string().contains("unknown id f_missing"), "{err}");
    }

    #[test]
    fn action_in_antecedent_rejected() {
        let err = parse_spec("fact f \"f\"; action a \"a\"; rule r: if a then f;").unwrap_err();
        assert!(err.to_string().contains("action `a` used in antecedent"), "{err}");
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(parse_spec("fact f \"x\"; fact f \"y\";").is_err());
        assert!(parse_spec("fact f \"x\"; action f \"y\";").is_err());
        let err = parse_spec("fact f \"x\";\nrule r: if f then f;\nrule r: if f then f;").unwrap_err();
        assert_eq!(
            err,
            DslError::Semantic {
                line: 3,
                column: 1,
                message: "duplicate id `r`".into()
            }
        );
    }

    #[test]
    fn syntax_error_reports_position_and_expectation() {
        let err = parse_spec("fact f \"x\"\nfact g \"y\";").unwrap_err();
        assert_eq!(
            err,
            DslError::Syntax {
                line: 2,
                column: 1,
                expected: "`;`".into(),
                found: "`fact`".into()
            }
        );
        let err = parse_spec("rule r if a then b;").unwrap_err();
        assert!(matches!(err, DslError::Syntax { ref expected, .. } if expected == "`:`"));
        let err = parse_spec("fact \"x\";").unwrap_err();
        assert!(matches!(err, DslError::Syntax { ref expected, .. } if expected == "identifier"));
        assert!(parse_spec("fact f \"unterminated;").is_err());
        assert!(parse_spec("fact f \"x\"; @").is_err());
    }

    #[test]
    fn override_only_in_deltas() {
        assert!(parse_spec("override fact f \"x\";").is_err());
        let delta = parse_delta("override fact f \"x\";").unwrap();
        assert!(delta.overrides.contains("f"));
    }

    #[test]
    fn serialize_round_trips_fixture() {
        let spec = parse_spec(FIXTURE).unwrap();
        let text = serialize_spec(&spec);
        assert_eq!(parse_spec(&text).unwrap(), spec);
    }

    #[test]
    fn serialize_empty_is_header_only() {
        assert_eq!(serialize_spec(&BehaviorSpec::default()), SPEC_HEADER);
    }

    #[test]
    fn serialize_escapes_descriptions() {
        let spec = parse_spec(r#"fact f "say \"hi\" \\ there";"#).unwrap();
        assert_eq!(spec.facts["f"].description, "say \"hi\" \\ there");
        assert_eq!(parse_spec(&serialize_spec(&spec)).unwrap(), spec);
    }

    #[test]
    fn version_survives_round_trip() {
        let mut spec = parse_spec(FIXTURE).unwrap();
        spec.version = 7;
        let back = parse_spec(&serialize_spec(&spec)).unwrap();
        assert_eq!(back.version, 7);
        assert_eq!(back, spec);
    }

    #[test]
    fn merge_crossing_intention_delta() {
        let base = parse_spec(FIXTURE).unwrap();
        let delta = parse_delta(DELTA).unwrap();
        let merged = merge_spec(&base, &delta).unwrap();
        assert_eq!(merged.version, base.version + 1);
        let rule = &merged.rules["intention_from_context"];
        assert_eq!(rule.consequent, "crossing_intention_detected");
        assert!(rule.antecedents.contains(&"pedestrian_on_roadway".to_string()));
        assert_eq!(merged.rules.len(), 4);
    }

    #[test]
    fn merge_with_empty_delta_bumps_version_only() {
        let base = parse_spec(FIXTURE).unwrap();
        let merged = merge_spec(&base, &BehaviorSpec::default()).unwrap();
        assert!(merged.same_content(&base));
        assert_eq!(merged.version, base.version + 1);
    }

    #[test]
    fn merge_conflicts_need_override() {
        let base = parse_spec(FIXTURE).unwrap();
        let delta = parse_delta("rule valid_crosswalk: if marking_293_detected then crosswalk_detected;").unwrap();
        assert_eq!(
            merge_spec(&base, &delta).unwrap_err(),
            DslError::Conflict {
                id: "valid_crosswalk".into()
            }
        );
        let delta =
            parse_delta("override rule valid_crosswalk: if marking_293_detected then crosswalk_detected;").unwrap();
        let merged = merge_spec(&base, &delta).unwrap();
        assert_eq!(merged.rules["valid_crosswalk"].antecedents, vec!["marking_293_detected"]);
        assert!(merged.overrides.is_empty());
    }

    #[test]
    fn merge_result_is_checked() {
        let base = parse_spec(FIXTURE).unwrap();
        let delta = parse_delta("rule bad: if nowhere then stop_at_crosswalk;").unwrap();
        assert!(matches!(merge_spec(&base, &delta), Err(DslError::Semantic { .. })));
    }

    #[test]
    fn identical_redefinition_is_not_a_conflict() {
        let base = parse_spec(FIXTURE).unwrap();
        let delta = parse_delta("fact pedestrian_detected \"pedestrian is detected\";").unwrap();
        assert!(merge_spec(&base, &delta).is_ok());
    }

    #[test]
    fn cycles_are_allowed() {
        let spec = parse_spec("fact a \"a\"; fact b \"b\"; rule r1: if a then b; rule r2: if b then a;").unwrap();
        assert_eq!(spec.rules.len(), 2);
    }

    #[test]
    fn idents() {
        assert!(is_valid_ident("stop_at_crosswalk"));
        assert!(!is_valid_ident("rule"));
        assert!(!is_valid_ident("1abc"));
        assert!(!is_valid_ident("a-b"));
    }
}
