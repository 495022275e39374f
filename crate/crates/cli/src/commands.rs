use std::fmt::Write as _;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use riskcore::hazard::FindingKind;
use riskcore::hazard_log::Stamp;
use riskcore::inference::{derive_catalog, infer};
use riskcore::ontology::{validate_model, MeasureKind, MeasureProposal};
use riskcore::quantity::{EventsPerHour, Exact, Probability};
use riskcore::rmc::{export_refined_spec, IterationReport, Outcome, Step, TreatmentOutcome, WorkspaceReport};
use riskcore::workspace::{Mutation, MutationOutcome, Workspace};
use riskcore::Error;
use serde::Serialize;
use serde_json::{json, Value};

/// Exit status when the method reports a risk problem rather than a tool failure.
pub const EXIT_FINDING: u8 = 1;
pub const EXIT_FAILURE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "riskcore", version, about = "Risk management for automated-driving behavior specifications")]
pub struct Cli {
    /// Workspace directory.
    #[arg(long, global = true, env = "RISKCORE_WORKSPACE", default_value = ".")]
    pub workspace: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create a workspace, optionally seeded from a bundled fixture.
    Init {
        #[arg(long)]
        fixture: Option<String>,
        /// Overwrite workspace files in a non-empty directory.
        #[arg(long)]
        force: bool,
    },
    /// Check referential integrity of the workspace model.
    Validate,
    /// Derive the target behavior of each scenario.
    Infer {
        #[arg(long)]
        scenario: Option<String>,
    },
    /// Identify hazardous events for the current iteration.
    Analyze,
    /// Evaluate the pending analysis against the acceptance criteria.
    Evaluate,
    /// Derive goals and apply measures, optionally drafting a new measure first.
    Treat(TreatArgs),
    /// Advance the loop by one phase.
    Iterate,
    /// Run the loop until acceptance or until the budget is spent.
    Run {
        #[arg(long, default_value_t = 8)]
        max_iterations: u32,
    },
    /// Print the hazard log, iteration reports and requirement coverage.
    Report,
    /// Export the refined behavior specification.
    Export {
        /// Allow export before the loop has accepted the behavior spec.
        #[arg(long)]
        draft: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Serve the JSON API and dashboard.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
    },
}

#[derive(Debug, Args)]
pub struct TreatArgs {
    /// Hazard the drafted measure addresses.
    #[arg(long, requires = "measure_id")]
    pub hazard: Option<String>,
    /// Measure id.
    #[arg(long = "id", requires = "hazard")]
    pub measure_id: Option<String>,
    /// Behavior-spec delta file.
    #[arg(long, conflicts_with = "odd", requires = "hazard")]
    pub delta: Option<PathBuf>,
    /// ODD restriction expression.
    #[arg(long, requires = "hazard")]
    pub odd: Option<String>,
    /// Statement of the behavioral safety requirement.
    #[arg(long)]
    pub bsr: Option<String>,
    #[arg(long, default_value = "0.999")]
    pub effectiveness: String,
    #[arg(long, default_value = "0.999")]
    pub integrity: String,
    /// Risk rate introduced by a corrupt implementation, per hour.
    #[arg(long, default_value = "0")]
    pub corrupt: String,
    /// Run treatment right after drafting.
    #[arg(long)]
    pub apply: bool,
}

/// What a command produced: exit status, a one-paragraph summary and the
/// machine-readable document.
#[derive(Debug, Clone, Serialize)]
pub struct CommandResult {
    pub exit_code: u8,
    pub summary: String,
    pub document: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub document_path: Option<PathBuf>,
}

impl CommandResult {
    fn new(exit_code: u8, summary: impl Into<String>, document: impl Serialize) -> Result<Self> {
        Ok(CommandResult {
            exit_code,
            summary: summary.into(),
            document: serde_json::to_value(document)?,
            document_path: None,
        })
    }
}

/// Domain refusals are findings; everything else is a tool failure.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Validation(_) | Error::NotAccepted) => EXIT_FINDING,
        _ => EXIT_FAILURE,
    }
}

fn stamp() -> Stamp {
    Stamp::now(std::env::var("USER").unwrap_or_else(|_| "cli".into()))
}

fn commit(root: &Path, mutation: Mutation) -> Result<(u64, MutationOutcome)> {
    let mut ws = Workspace::open(root)?;
    let c = ws.transact(None, mutation, &stamp())?;
    Ok((c.version, c.outcome))
}

pub fn dispatch(cli: &Cli) -> Result<CommandResult> {
    let root = cli.workspace.as_path();
    match &cli.command {
        Command::Init { fixture, force } => {
            let ws = Workspace::init(root, fixture.as_deref(), *force, &stamp())?;
            let what = fixture.as_deref().map(|f| format!(" from fixture {f}")).unwrap_or_default();
            CommandResult::new(
                0,
                format!("initialized workspace {}{what}", root.display()),
                json!({ "workspace": root, "version": ws.version() }),
            )
        }
        Command::Validate => {
            let ws = Workspace::open(root)?;
            let report = validate_model(ws.model());
            if report.is_empty() {
                return CommandResult::new(0, format!("workspace is valid (version {})", ws.version()), report);
            }
            let mut s = format!("{} violation(s)", report.violations.len());
            for v in &report.violations {
                let _ = write!(s, "\n  {}: {} ({})", v.entity_id, v.message, v.relation);
            }
            CommandResult::new(EXIT_FINDING, s, report)
        }
        Command::Infer { scenario } => {
            let ws = Workspace::open(root)?;
            let model = ws.model();
            let states = match scenario {
                Some(id) => {
                    let sc = model.scenario(id).ok_or_else(|| Error::UnknownEntity(format!("scenario {id}")))?;
                    vec![infer(&model.spec, sc)?]
                }
                None => derive_catalog(&model.spec, &model.scenarios)?.into_values().collect(),
            };
            let lines: Vec<String> = states
                .iter()
                .map(|s| {
                    let actions: Vec<&str> = s.actions.iter().map(String::as_str).collect();
                    let actions = if actions.is_empty() { "(no actions)".to_string() } else { actions.join(", ") };
                    format!("{}: {actions}", s.scenario_id)
                })
                .collect();
            CommandResult::new(0, lines.join("\n"), states)
        }
        Command::Analyze => {
            let (version, outcome) = commit(root, Mutation::Analyze)?;
            let MutationOutcome::Analysis { output } = &outcome else {
                bail!("unexpected outcome of analysis");
            };
            let mut s = format!(
                "iteration {}: {} hazardous event(s) identified (workspace version {version})",
                output.kind.number(),
                output.matches.len()
            );
            for f in &output.findings {
                let _ = write!(s, "\n  finding: {}", f.message);
            }
            CommandResult::new(0, s, outcome)
        }
        Command::Evaluate => {
            let (_, outcome) = commit(root, Mutation::Evaluate)?;
            let MutationOutcome::Report { report } = &outcome else {
                bail!("unexpected outcome of evaluation");
            };
            report_result(root, report, &outcome)
        }
        Command::Treat(args) => treat_command(root, args),
        Command::Iterate => {
            let (_, outcome) = commit(root, Mutation::Step)?;
            let MutationOutcome::Step { step } = &outcome else {
                bail!("unexpected outcome of iterate");
            };
            match step {
                Step::Report { report } => report_result(root, report, &outcome),
                Step::Treatment { outcome: t } => treatment_result(t, &outcome),
                Step::AlreadyDone => CommandResult::new(0, "the loop has already accepted the behavior spec", &outcome),
            }
        }
        Command::Run { max_iterations } => {
            let (_, outcome) = commit(
                root,
                Mutation::Run {
                    max_iterations: *max_iterations,
                },
            )?;
            let MutationOutcome::Run { report } = &outcome else {
                bail!("unexpected outcome of run");
            };
            let code = if report.accepted() { 0 } else { EXIT_FINDING };
            CommandResult::new(code, report.summary.clone(), &outcome)
        }
        Command::Report => {
            let report = Workspace::open(root)?.report();
            CommandResult::new(0, render_report(&report), &report)
        }
        Command::Export { draft, output } => {
            let ws = Workspace::open(root)?;
            let export = export_refined_spec(ws.project(), *draft)?;
            let mut result = match output {
                Some(path) => {
                    fs::write(path, &export.text).with_context(|| format!("writing {}", path.display()))?;
                    let mut r = CommandResult::new(
                        0,
                        format!("wrote spec version {} to {}", export.spec_version, path.display()),
                        &export,
                    )?;
                    r.document_path = Some(path.clone());
                    r
                }
                None => CommandResult::new(0, export.text.trim_end().to_string(), &export)?,
            };
            if export.draft {
                result.summary = format!("{}\n(draft export)", result.summary);
            }
            Ok(result)
        }
        Command::Serve { bind } => {
            Workspace::open(root)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(crate::http::serve(root.to_path_buf(), *bind))?;
            CommandResult::new(0, "server stopped", Value::Null)
        }
    }
}

fn probability(flag: &str, text: &str) -> Result<Probability> {
    let x: Exact = text.parse().with_context(|| format!("--{flag}"))?;
    Probability::new(x).with_context(|| format!("--{flag}"))
}

fn treat_command(root: &Path, args: &TreatArgs) -> Result<CommandResult> {
    let Some(hazard_id) = &args.hazard else {
        let (_, outcome) = commit(root, Mutation::Treat)?;
        let MutationOutcome::Treatment { outcome: t } = &outcome else {
            bail!("unexpected outcome of treatment");
        };
        return treatment_result(t, &outcome);
    };
    let (kind, payload) = match (&args.delta, &args.odd) {
        (Some(path), None) => (
            MeasureKind::BehaviorSpecDelta,
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        ),
        (None, Some(expr)) => (MeasureKind::OddRestriction, expr.clone()),
        _ => bail!("a drafted measure needs either --delta or --odd"),
    };
    let corrupt: Exact = args.corrupt.parse().context("--corrupt")?;
    let proposal = MeasureProposal {
        id: args.measure_id.clone().expect("clap requires --id with --hazard"),
        hazard_id: hazard_id.clone(),
        kind,
        payload,
        claimed_reduction_effectiveness: probability("effectiveness", &args.effectiveness)?,
        integrity: probability("integrity", &args.integrity)?,
        corrupt_behavior_rate: EventsPerHour::new(corrupt).context("--corrupt")?,
        requirement_statement: args.bsr.clone(),
    };
    let id = proposal.id.clone();
    let (version, outcome) = commit(
        root,
        Mutation::ProposeMeasure {
            proposal,
            apply: args.apply,
        },
    )?;
    match &outcome {
        MutationOutcome::Treatment { outcome: t } => treatment_result(t, &outcome),
        _ => CommandResult::new(0, format!("queued measure {id} (workspace version {version})"), &outcome),
    }
}

fn report_result(root: &Path, report: &IterationReport, outcome: &MutationOutcome) -> Result<CommandResult> {
    let code = match report.outcome {
        Outcome::Accepted => 0,
        Outcome::TreatmentRequired => EXIT_FINDING,
    };
    let mut r = CommandResult::new(code, report.summary(), outcome)?;
    r.document_path = Some(root.join("reports").join(format!("{}.report.json", report.id)));
    Ok(r)
}

fn treatment_result(t: &TreatmentOutcome, outcome: &MutationOutcome) -> Result<CommandResult> {
    if t.treated() {
        let mut s = format!("applied {}; spec version {}", t.applied.join(", "), t.spec_version);
        for p in &t.predictions {
            let _ = write!(
                s,
                "\n  {} predicted residual {} (was {})",
                p.measure_id,
                p.predicted.rate.value().display_sci(),
                p.initial.rate.value().display_sci()
            );
        }
        return CommandResult::new(0, s, outcome);
    }
    let stuck = t.findings.iter().any(|f| f.kind == FindingKind::NoTreatmentAvailable);
    let goals: Vec<&str> = t.goals.iter().map(|g| g.id.as_str()).collect();
    let mut s = if goals.is_empty() {
        "no measure applied".to_string()
    } else {
        format!("no measure applied; goals: {}", goals.join(", "))
    };
    for f in &t.findings {
        let _ = write!(s, "\n  finding: {}", f.message);
    }
    CommandResult::new(if stuck { EXIT_FINDING } else { 0 }, s, outcome)
}

fn render_report(r: &WorkspaceReport) -> String {
    let mut s = format!(
        "workspace version {}, phase {:?}, iteration {}\n",
        r.workspace_version, r.phase, r.iteration
    );
    s.push_str("hazard log:\n");
    if r.hazard_log.is_empty() {
        s.push_str("  (empty)\n");
    }
    for h in &r.hazard_log {
        let _ = writeln!(
            s,
            "  {} [{}] events: {}, goals: {}, measures: {}",
            h.hazard_id,
            h.status,
            h.hazardous_event_ids.len(),
            h.goal_ids.join(" "),
            h.measure_ids.join(" ")
        );
    }
    s.push_str("iteration reports:\n");
    for i in &r.iteration_reports {
        let _ = writeln!(s, "  {}: {}", i.id, i.summary());
    }
    s.push_str("requirements coverage:\n");
    for c in &r.requirements_coverage {
        let _ = writeln!(s, "  {}: {} test(s)", c.id, c.tests.len());
    }
    s.trim_end().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn findings_and_failures_have_distinct_codes() {
        assert_eq!(exit_code(&Error::NotAccepted.into()), EXIT_FINDING);
        assert_eq!(exit_code(&Error::Validation(Default::default()).into()), EXIT_FINDING);
        assert_eq!(exit_code(&Error::NotAWorkspace("x".into()).into()), EXIT_FAILURE);
        assert_eq!(exit_code(&anyhow::anyhow!("disk on fire")), EXIT_FAILURE);
    }

    #[test]
    fn treat_flags_parse() {
        let cli = Cli::try_parse_from(["riskcore", "treat", "--hazard", "H", "--id", "M", "--odd", "speed < 30"]).unwrap();
        let Command::Treat(args) = cli.command else { panic!() };
        assert_eq!(args.odd.as_deref(), Some("speed < 30"));
        assert!(Cli::try_parse_from(["riskcore", "treat", "--hazard", "H"]).is_err());
    }
}
