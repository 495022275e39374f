//! The workspace: plain-text documents in a directory tree, changed only
//! through journaled transactions that append one audit entry each.
//!
//! Layout:
//!
//! ```text
//! riskcore.json            manifest (schema_version, version, settings)
//! spec/behavior.bspec      behavior specification
//! catalog/scenarios.json   agents, use cases, scenarios, fleet exposure
//! hazards/hazards.json     harms, hazards, deviation model
//! hazards/events.json      hazardous-event register
//! criteria/criteria.json   acceptance criteria and ascription rules
//! goals/goals.json
//! measures/measures.json   measures, requirements, proposals
//! reports/*.report.json    one per iteration
//! hazard-log.json
//! state.json               loop state
//! audit.jsonl              append-only mutation log
//! schemas/*.schema.json
//! journal                  present only while a transaction is in flight
//! .lock                    present while a writer holds the workspace
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use schemars::JsonSchema;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::documents::{
    CatalogDoc, CriteriaDoc, EventsDoc, GoalsDoc, HazardsDoc, MeasuresDoc, ModelDocs, SCHEMA_VERSION,
};
use crate::dsl::{parse_spec, serialize_spec};
use crate::error::{Error, Result};
use crate::fixture;
use crate::hazard::DeviationModel;
use crate::hazard_log::{HazardLog, LogStatus, Stamp};
use crate::ontology::{
    validate_model, AscriptionRule, Harm, Hazard, MeasureProposal, Model, RiskAcceptanceCriterion, Scenario,
};
use crate::rmc::{
    self, workspace_report, AnalysisOutput, FinalReport, IterationReport, Project, RmcState, Settings, Step,
    TreatmentOutcome, WorkspaceReport,
};

const MANIFEST: &str = "riskcore.json";
const SPEC: &str = "spec/behavior.bspec";
const CATALOG: &str = "catalog/scenarios.json";
const HAZARDS: &str = "hazards/hazards.json";
const EVENTS: &str = "hazards/events.json";
const CRITERIA: &str = "criteria/criteria.json";
const GOALS: &str = "goals/goals.json";
const MEASURES: &str = "measures/measures.json";
const HAZARD_LOG: &str = "hazard-log.json";
const STATE: &str = "state.json";
const AUDIT: &str = "audit.jsonl";
const JOURNAL: &str = "journal";
const LOCK: &str = ".lock";
const REPORTS: &str = "reports";
const SCHEMAS: &str = "schemas";

const OWNED: &[&str] = &[
    MANIFEST, SPEC, CATALOG, HAZARDS, EVENTS, CRITERIA, GOALS, MEASURES, HAZARD_LOG, STATE, AUDIT, JOURNAL, REPORTS,
    SCHEMAS,
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Manifest {
    pub schema_version: u32,
    pub version: u64,
    #[serde(default)]
    pub settings: Settings,
}

/// Every way a workspace can change. Replaying the audit trail's mutations
/// from `Init` reproduces the workspace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mutation {
    Init { fixture: Option<String> },
    ReplaceSpec { text: String },
    AddHarm { harm: Harm },
    AddHazard { hazard: Hazard },
    AddScenario { scenario: Scenario },
    AddCriterion { criterion: RiskAcceptanceCriterion },
    AddAscriptionRule { rule: AscriptionRule },
    SetDeviationModel { model: DeviationModel },
    /// Queue a measure draft; `apply` also runs treatment.
    ProposeMeasure { proposal: MeasureProposal, apply: bool },
    TransitionLog { hazard_id: String, to: LogStatus, note: Option<String> },
    UpdateSettings { settings: Settings },
    Analyze,
    Evaluate,
    Treat,
    Step,
    Run { max_iterations: u32 },
    Reset,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MutationOutcome {
    Changed,
    Analysis { output: AnalysisOutput },
    Report { report: IterationReport },
    Treatment { outcome: TreatmentOutcome },
    Step { step: Step },
    Run { report: FinalReport },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct AuditEntry {
    pub version: u64,
    pub stamp: Stamp,
    pub mutation: Mutation,
}

fn seed_project(fixture_name: Option<&str>, stamp: &Stamp) -> Result<Project> {
    let model = match fixture_name {
        None => Model::default(),
        Some(fixture::NAME) => fixture::t_crossing_model(),
        Some(other) => return Err(Error::UnknownEntity(format!("fixture {other}"))),
    };
    Ok(Project::new(model, stamp))
}

/// Applies a mutation to an in-memory project. Pure apart from `stamp`.
pub fn apply_mutation(p: &mut Project, m: &Mutation, stamp: &Stamp) -> Result<MutationOutcome> {
    let outcome = match m {
        Mutation::Init { .. } => {
            return Err(Error::Precondition("init is only valid as the first audit entry".into()))
        }
        Mutation::ReplaceSpec { text } => {
            let mut spec = parse_spec(text)?;
            if !spec.same_content(&p.model.spec) || spec.version < p.model.spec.version {
                spec.version = spec.version.max(p.model.spec.version + 1);
            }
            p.model.spec = spec;
            p.model_changed(stamp)?;
            MutationOutcome::Changed
        }
        Mutation::AddHarm { harm } => {
            p.model.harms.push(harm.clone());
            p.model_changed(stamp)?;
            MutationOutcome::Changed
        }
        Mutation::AddHazard { hazard } => {
            p.model.hazards.push(hazard.clone());
            p.model_changed(stamp)?;
            MutationOutcome::Changed
        }
        Mutation::AddScenario { scenario } => {
            p.model.scenarios.push(scenario.clone());
            p.model_changed(stamp)?;
            MutationOutcome::Changed
        }
        Mutation::AddCriterion { criterion } => {
            p.model.criteria.push(criterion.clone());
            p.model_changed(stamp)?;
            MutationOutcome::Changed
        }
        Mutation::AddAscriptionRule { rule } => {
            p.model.ascription_rules.push(rule.clone());
            p.model_changed(stamp)?;
            MutationOutcome::Changed
        }
        Mutation::SetDeviationModel { model } => {
            p.model.deviation_model = model.clone();
            p.model_changed(stamp)?;
            MutationOutcome::Changed
        }
        Mutation::ProposeMeasure { proposal, apply } => {
            p.model.proposals.push(proposal.clone());
            let report = validate_model(&p.model);
            if !report.is_empty() {
                return Err(Error::Validation(report));
            }
            if *apply {
                MutationOutcome::Treatment {
                    outcome: rmc::treat(p, stamp)?,
                }
            } else {
                MutationOutcome::Changed
            }
        }
        Mutation::TransitionLog { hazard_id, to, note } => {
            if *to == LogStatus::Accepted {
                let open = rmc::hazard_log_report(p)
                    .into_iter()
                    .filter(|r| &r.hazard_id == hazard_id)
                    .flat_map(|r| r.latest_verdicts)
                    .any(|v| rmc::is_violated(&v));
                if open {
                    return Err(Error::Precondition(format!(
                        "`{hazard_id}` contributes to a violated verdict and cannot be accepted"
                    )));
                }
            }
            p.hazard_log.transition(hazard_id, *to, note.clone(), stamp)?;
            MutationOutcome::Changed
        }
        Mutation::UpdateSettings { settings } => {
            p.settings = settings.clone();
            MutationOutcome::Changed
        }
        Mutation::Analyze => MutationOutcome::Analysis {
            output: rmc::analyze(p, stamp)?,
        },
        Mutation::Evaluate => MutationOutcome::Report {
            report: rmc::evaluate_pending(p, stamp)?,
        },
        Mutation::Treat => MutationOutcome::Treatment {
            outcome: rmc::treat(p, stamp)?,
        },
        Mutation::Step => MutationOutcome::Step {
            step: rmc::step(p, stamp)?,
        },
        Mutation::Run { max_iterations } => MutationOutcome::Run {
            report: rmc::run_until_accepted(p, *max_iterations, stamp)?,
        },
        Mutation::Reset => {
            p.state = p.state.apply(rmc::Command::Reset)?;
            MutationOutcome::Changed
        }
    };
    let report = validate_model(&p.model);
    if !report.is_empty() {
        return Err(Error::Validation(report));
    }
    Ok(outcome)
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("documents serialize");
    s.push('\n');
    s
}

fn report_path(r: &IterationReport) -> String {
    format!("{REPORTS}/{}.report.json", r.id)
}

/// The documents of a project, keyed by relative path.
fn render(p: &Project, version: u64) -> BTreeMap<String, String> {
    let docs = ModelDocs::from_model(&p.model);
    let mut files = BTreeMap::new();
    files.insert(
        MANIFEST.to_string(),
        to_json(&Manifest {
            schema_version: SCHEMA_VERSION,
            version,
            settings: p.settings.clone(),
        }),
    );
    files.insert(SPEC.to_string(), serialize_spec(&p.model.spec));
    files.insert(CATALOG.to_string(), to_json(&docs.catalog));
    files.insert(HAZARDS.to_string(), to_json(&docs.hazards));
    files.insert(EVENTS.to_string(), to_json(&docs.events));
    files.insert(CRITERIA.to_string(), to_json(&docs.criteria));
    files.insert(GOALS.to_string(), to_json(&docs.goals));
    files.insert(MEASURES.to_string(), to_json(&docs.measures));
    files.insert(HAZARD_LOG.to_string(), to_json(&p.hazard_log));
    files.insert(STATE.to_string(), to_json(&p.state));
    for r in &p.reports {
        files.insert(report_path(r), to_json(r));
    }
    files
}

/// JSON schemas for every document kind.
pub fn schemas() -> Vec<(&'static str, String)> {
    vec![
        ("manifest", to_json(&schemars::schema_for!(Manifest))),
        ("catalog", to_json(&schemars::schema_for!(CatalogDoc))),
        ("hazards", to_json(&schemars::schema_for!(HazardsDoc))),
        ("events", to_json(&schemars::schema_for!(EventsDoc))),
        ("criteria", to_json(&schemars::schema_for!(CriteriaDoc))),
        ("goals", to_json(&schemars::schema_for!(GoalsDoc))),
        ("measures", to_json(&schemars::schema_for!(MeasuresDoc))),
        ("hazard-log", to_json(&schemars::schema_for!(HazardLog))),
        ("state", to_json(&schemars::schema_for!(RmcState))),
        ("report", to_json(&schemars::schema_for!(IterationReport))),
        ("audit-entry", to_json(&schemars::schema_for!(AuditEntry))),
        ("workspace-report", to_json(&schemars::schema_for!(WorkspaceReport))),
    ]
}

/// Old contents of every file a transaction touches; `None` means the file
/// did not exist.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Journal {
    version_before: u64,
    audit_len: u64,
    files: BTreeMap<String, Option<String>>,
}

fn read_opt(path: &Path) -> Result<Option<String>> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(path, e)),
    }
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Held while writing; removes the lock file on drop.
struct LockGuard(PathBuf);

impl LockGuard {
    fn acquire(root: &Path) -> Result<Self> {
        let path = root.join(LOCK);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(LockGuard(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(root.to_path_buf())),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// A committed snapshot of a workspace directory.
#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
    version: u64,
    project: Project,
    crash_after: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Committed {
    pub version: u64,
    pub outcome: MutationOutcome,
}

impl Workspace {
    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn project(&self) -> &Project {
        &self.project
    }

    pub fn model(&self) -> &Model {
        &self.project.model
    }

    pub fn report(&self) -> WorkspaceReport {
        workspace_report(&self.project, self.version)
    }

    /// Test hook: the next transaction fails after `n` file operations,
    /// leaving its journal behind as a crash would.
    #[doc(hidden)]
    pub fn inject_crash_after(&mut self, n: usize) {
        self.crash_after = Some(n);
    }

    /// Creates a workspace in `path`, which must be empty or absent unless
    /// `force` is set.
    pub fn init(path: &Path, fixture_name: Option<&str>, force: bool, stamp: &Stamp) -> Result<Workspace> {
        if path.exists() {
            let mut entries = fs::read_dir(path).map_err(|e| Error::io(path, e))?;
            if entries.next().is_some() {
                if !force {
                    return Err(Error::NotEmpty(path.to_path_buf()));
                }
                for name in OWNED {
                    let p = path.join(name);
                    if p.is_dir() {
                        fs::remove_dir_all(&p).map_err(|e| Error::io(&p, e))?;
                    } else if p.exists() {
                        fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
                    }
                }
            }
        }
        fs::create_dir_all(path).map_err(|e| Error::io(path, e))?;
        let _lock = LockGuard::acquire(path)?;
        let project = seed_project(fixture_name, stamp)?;
        let report = validate_model(&project.model);
        if !report.is_empty() {
            return Err(Error::Validation(report));
        }
        for dir in ["spec", "catalog", "hazards", "criteria", "goals", "measures", REPORTS, SCHEMAS] {
            let d = path.join(dir);
            fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
        for (name, schema) in schemas() {
            write_atomic(&path.join(SCHEMAS).join(format!("{name}.schema.json")), &schema)?;
        }
        let version = 1;
        for (rel, text) in render(&project, version) {
            write_atomic(&path.join(rel), &text)?;
        }
        let entry = AuditEntry {
            version,
            stamp: stamp.clone(),
            mutation: Mutation::Init {
                fixture: fixture_name.map(str::to_string),
            },
        };
        let mut line = serde_json::to_string(&entry).expect("audit serializes");
        line.push('\n');
        write_atomic(&path.join(AUDIT), &line)?;
        Ok(Workspace {
            root: path.to_path_buf(),
            version,
            project,
            crash_after: None,
        })
    }

    /// Loads the last committed snapshot. An in-flight or interrupted
    /// transaction is invisible: journaled files are read from the journal.
    pub fn open(path: &Path) -> Result<Workspace> {
        let manifest_path = path.join(MANIFEST);
        if !manifest_path.exists() && !path.join(JOURNAL).exists() {
            return Err(Error::NotAWorkspace(path.to_path_buf()));
        }
        let journal = match read_opt(&path.join(JOURNAL))? {
            Some(text) => Some(parse_json::<Journal>(&path.join(JOURNAL), &text)?),
            None => None,
        };
        let read = |rel: &str| -> Result<Option<String>> {
            if let Some(j) = &journal {
                if let Some(old) = j.files.get(rel) {
                    return Ok(old.clone());
                }
            }
            read_opt(&path.join(rel))
        };
        let required = |rel: &str| -> Result<String> {
            read(rel)?.ok_or_else(|| Error::NotAWorkspace(path.to_path_buf()))
        };
        let manifest: Manifest = parse_json(&manifest_path, &required(MANIFEST)?)?;
        let spec = parse_spec(&required(SPEC)?)?;
        let doc = |rel: &str| -> Result<String> { required(rel) };
        let docs = ModelDocs {
            catalog: parse_json(&path.join(CATALOG), &doc(CATALOG)?)?,
            hazards: parse_json(&path.join(HAZARDS), &doc(HAZARDS)?)?,
            events: parse_json(&path.join(EVENTS), &doc(EVENTS)?)?,
            criteria: parse_json(&path.join(CRITERIA), &doc(CRITERIA)?)?,
            goals: parse_json(&path.join(GOALS), &doc(GOALS)?)?,
            measures: parse_json(&path.join(MEASURES), &doc(MEASURES)?)?,
        };
        let hazard_log: HazardLog = parse_json(&path.join(HAZARD_LOG), &required(HAZARD_LOG)?)?;
        let state: RmcState = parse_json(&path.join(STATE), &required(STATE)?)?;

        let mut names: Vec<String> = Vec::new();
        let dir = path.join(REPORTS);
        if dir.exists() {
            for e in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
                let e = e.map_err(|e| Error::io(&dir, e))?;
                let name = e.file_name().to_string_lossy().into_owned();
                if name.ends_with(".report.json") {
                    names.push(format!("{REPORTS}/{name}"));
                }
            }
        }
        if let Some(j) = &journal {
            // Reports written by the interrupted transaction did not exist before.
            names.retain(|n| !matches!(j.files.get(n), Some(None)));
        }
        let mut reports = Vec::new();
        for rel in names {
            if let Some(text) = read(&rel)? {
                reports.push(parse_json::<IterationReport>(&path.join(&rel), &text)?);
            }
        }
        reports.sort_by_key(|r| r.sequence);

        let project = Project {
            model: docs.into_model(spec),
            state,
            hazard_log,
            reports,
            settings: manifest.settings,
        };
        Ok(Workspace {
            root: path.to_path_buf(),
            version: manifest.version,
            project,
            crash_after: None,
        })
    }

    /// Restores the pre-transaction state of an interrupted transaction.
    /// Requires the writer lock.
    fn recover(root: &Path) -> Result<bool> {
        let jpath = root.join(JOURNAL);
        let Some(text) = read_opt(&jpath)? else {
            return Ok(false);
        };
        let journal: Journal = parse_json(&jpath, &text)?;
        for (rel, old) in &journal.files {
            let p = root.join(rel);
            match old {
                Some(text) => write_atomic(&p, text)?,
                None => {
                    if p.exists() {
                        fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
                    }
                }
            }
        }
        let audit = root.join(AUDIT);
        let f = fs::OpenOptions::new().write(true).open(&audit).map_err(|e| Error::io(&audit, e))?;
        f.set_len(journal.audit_len).map_err(|e| Error::io(&audit, e))?;
        f.sync_all().map_err(|e| Error::io(&audit, e))?;
        fs::remove_file(&jpath).map_err(|e| Error::io(&jpath, e))?;
        Ok(true)
    }

    /// Applies `mutation` atomically: all documents and one audit entry, or
    /// nothing. `expected_version`, when given, must match the committed
    /// version on disk.
    pub fn transact(&mut self, expected_version: Option<u64>, mutation: Mutation, stamp: &Stamp) -> Result<Committed> {
        let _lock = LockGuard::acquire(&self.root)?;
        Self::recover(&self.root)?;
        let current = Workspace::open(&self.root)?;
        if let Some(expected) = expected_version {
            if expected != current.version {
                return Err(Error::VersionConflict {
                    expected,
                    found: current.version,
                });
            }
        }
        let mut project = current.project.clone();
        let outcome = apply_mutation(&mut project, &mutation, stamp)?;
        let version = current.version + 1;

        let before = render(&current.project, current.version);
        let after = render(&project, version);
        let changed: BTreeMap<String, String> = after
            .into_iter()
            .filter(|(rel, text)| before.get(rel) != Some(text))
            .collect();

        let audit_path = self.root.join(AUDIT);
        let audit_len = fs::metadata(&audit_path).map_err(|e| Error::io(&audit_path, e))?.len();
        let journal = Journal {
            version_before: current.version,
            audit_len,
            files: changed.keys().map(|rel| (rel.clone(), before.get(rel).cloned())).collect(),
        };
        let mut budget = self.crash_after.take();
        let mut tick = |what: &Path| -> Result<()> {
            if let Some(n) = budget.as_mut() {
                if *n == 0 {
                    return Err(Error::io(what, std::io::Error::other("injected crash")));
                }
                *n -= 1;
            }
            Ok(())
        };

        let jpath = self.root.join(JOURNAL);
        tick(&jpath)?;
        write_atomic(&jpath, &serde_json::to_string(&journal).expect("journal serializes"))?;
        for (rel, text) in &changed {
            let p = self.root.join(rel);
            tick(&p)?;
            write_atomic(&p, text)?;
        }
        tick(&audit_path)?;
        let entry = AuditEntry {
            version,
            stamp: stamp.clone(),
            mutation,
        };
        let mut line = serde_json::to_string(&entry).expect("audit serializes");
        line.push('\n');
        let mut f = fs::OpenOptions::new()
            .append(true)
            .open(&audit_path)
            .map_err(|e| Error::io(&audit_path, e))?;
        f.write_all(line.as_bytes()).map_err(|e| Error::io(&audit_path, e))?;
        f.sync_all().map_err(|e| Error::io(&audit_path, e))?;
        tick(&jpath)?;
        // Removing the journal is the commit point.
        fs::remove_file(&jpath).map_err(|e| Error::io(&jpath, e))?;

        self.version = version;
        self.project = project;
        Ok(Committed { version, outcome })
    }

    pub fn audit(&self) -> Result<Vec<AuditEntry>> {
        read_audit(&self.root)
    }
}

pub fn read_audit(root: &Path) -> Result<Vec<AuditEntry>> {
    let path = root.join(AUDIT);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut len = text.len() as u64;
    if let Some(j) = read_opt(&root.join(JOURNAL))? {
        len = parse_json::<Journal>(&root.join(JOURNAL), &j)?.audit_len;
    }
    text[..len as usize]
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| parse_json(&path, l))
        .collect()
}

/// Rebuilds the project by replaying the audit trail from its `Init` entry.
pub fn replay(entries: &[AuditEntry]) -> Result<(Project, u64)> {
    let (first, rest) = entries
        .split_first()
        .ok_or_else(|| Error::Precondition("empty audit trail".into()))?;
    let Mutation::Init { fixture } = &first.mutation else {
        return Err(Error::Precondition("audit trail does not start with init".into()));
    };
    let mut project = seed_project(fixture.as_deref(), &first.stamp)?;
    let mut version = first.version;
    for e in rest {
        apply_mutation(&mut project, &e.mutation, &e.stamp)?;
        version = e.version;
    }
    Ok((project, version))
}
