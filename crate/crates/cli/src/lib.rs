//! `veritas`: command-line surface over the assessment engine.
//!
//! Exit codes: 0 on success, 1 on validation or user error, 2 when the
//! assessment outcome is a rejection or an automatic fail, so pipelines
//! can gate on approval.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use veritas_core::catalog::{load_catalog_str, save_catalog, Catalog};
use veritas_core::digest::{sha256_hex, sha256_hex_json};
use veritas_core::monitor::{ingest, propose_tests, MonitorReport};
use veritas_core::report::{build_report_from_session, render_machine, render_text};
use veritas_core::results::{
    load_applicant_report_str, load_assessor_report_str, save_applicant_report,
    save_assessor_report,
};
use veritas_core::selection::{
    load_policy_str, select_tests, SelectionOutcome, SelectionPolicy,
};
use veritas_core::session::{persist, restore, Closure, Phase, Role, Session, SessionAction};
use veritas_core::simulator::{gen_profile, simulate_applicant, simulate_assessor, ReportingBias};
use veritas_core::verdict::{load_severity_policy, AdviceOutcome, SeverityPolicy};
use veritas_core::CoverageVerdict;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
/// Assessment outcome gate: advice is Reject or the session auto-failed.
pub const EXIT_GATE: i32 = 2;

#[derive(Parser)]
#[command(name = "veritas", version, about = "Independent safety assessment workflow for AVs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
enum OutputFormat {
    #[default]
    Text,
    Machine,
}

#[derive(Subcommand)]
enum Command {
    /// Create a session from a catalog, or resubmit a revised catalog
    /// after a failed coverage check
    Init {
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        session: PathBuf,
        /// Session identifier; derived from the catalog digest when absent
        #[arg(long)]
        session_id: Option<String>,
    },
    /// Check that the test descriptions cover the test domain
    Coverage {
        #[arg(long)]
        session: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        format: OutputFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Select tests for physical assessment from the applicant's results
    Select {
        #[arg(long)]
        session: PathBuf,
        /// Applicant results file (veritas-results/1)
        #[arg(long)]
        results: PathBuf,
        /// Selection policy file
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        format: OutputFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Import the assessor's physical test results
    ImportResults {
        #[arg(long)]
        session: PathBuf,
        /// Assessor results file (veritas-results/1 with observations)
        #[arg(long)]
        results: PathBuf,
    },
    /// Assess all results, apply demerit points, and synthesize advice
    Assess {
        #[arg(long)]
        session: PathBuf,
        /// Optional severity override file
        #[arg(long)]
        severity_policy: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        starting_points: u32,
    },
    /// Issue the advice and render the results report
    Report {
        #[arg(long)]
        session: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        format: OutputFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate synthetic results files from a seeded capability profile
    Simulate {
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Applicant reporting bias: truthful, worst-case, or
        /// optimistic:<delta>
        #[arg(long, default_value = "truthful")]
        bias: String,
        /// Multiplier on the generated measurement noise (0 silences it)
        #[arg(long, default_value_t = 1.0)]
        noise_scale: f64,
        #[arg(long)]
        out_applicant: PathBuf,
        /// Also emit assessor results for the tests a selection run picks
        #[arg(long, requires = "policy")]
        out_assessor: Option<PathBuf>,
        /// Selection policy, required with --out-assessor
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Ingest monitored-deployment driving data and propose new tests
    Monitor {
        #[arg(long)]
        session: PathBuf,
        /// Drive log file (veritas-drivelog/1, one record per line)
        #[arg(long)]
        log: PathBuf,
        /// Write proposed draft test descriptions to this file
        #[arg(long)]
        propose_out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        format: OutputFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Entry point against real stdio.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = io::stdout();
    let stderr = io::stderr();
    run_with_io(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// Entry point with injectable streams, used by the tests.
pub fn run_with_io<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(error) => {
            return match error.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{error}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{error}");
                    EXIT_ERROR
                }
            };
        }
    };
    match execute(cli.command, stdout) {
        Ok(code) => code,
        Err(error) => {
            let _ = writeln!(stderr, "error: {error:#}");
            EXIT_ERROR
        }
    }
}

fn now_utc_seconds() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_catalog_file(path: &Path) -> Result<Catalog> {
    load_catalog_str(&read_to_string(path)?)
        .with_context(|| format!("invalid catalog {}", path.display()))
}

fn load_session_file(path: &Path) -> Result<Session> {
    let bytes =
        fs::read(path).with_context(|| format!("cannot read session {}", path.display()))?;
    restore(&bytes).with_context(|| format!("invalid session {}", path.display()))
}

fn store_session(path: &Path, session: &Session) -> Result<()> {
    fs::write(path, persist(session))
        .with_context(|| format!("cannot write session {}", path.display()))
}

fn write_output(out: Option<&Path>, stdout: &mut dyn Write, content: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, content)
            .with_context(|| format!("cannot write {}", path.display()))?,
        None => stdout.write_all(content.as_bytes())?,
    }
    Ok(())
}

fn parse_bias(raw: &str) -> Result<ReportingBias> {
    match raw {
        "truthful" => Ok(ReportingBias::Truthful),
        "worst-case" => Ok(ReportingBias::WorstCase),
        other => match other.strip_prefix("optimistic:") {
            Some(delta) => {
                let delta: f64 = delta
                    .parse()
                    .map_err(|_| anyhow!("bias delta '{delta}' is not a number"))?;
                if !(delta.is_finite() && delta >= 0.0) {
                    bail!("bias delta must be a finite non-negative number");
                }
                Ok(ReportingBias::Optimistic { delta })
            }
            None => bail!(
                "unknown bias '{other}' (expected truthful, worst-case, or optimistic:<delta>)"
            ),
        },
    }
}

fn execute(command: Command, stdout: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Init {
            catalog,
            session,
            session_id,
        } => cmd_init(&catalog, &session, session_id, stdout),
        Command::Coverage {
            session,
            format,
            out,
        } => cmd_coverage(&session, format, out.as_deref(), stdout),
        Command::Select {
            session,
            results,
            policy,
            format,
            out,
        } => cmd_select(&session, &results, &policy, format, out.as_deref(), stdout),
        Command::ImportResults { session, results } => {
            cmd_import_results(&session, &results, stdout)
        }
        Command::Assess {
            session,
            severity_policy,
            starting_points,
        } => cmd_assess(&session, severity_policy.as_deref(), starting_points, stdout),
        Command::Report {
            session,
            format,
            out,
        } => cmd_report(&session, format, out.as_deref(), stdout),
        Command::Simulate {
            catalog,
            seed,
            bias,
            noise_scale,
            out_applicant,
            out_assessor,
            policy,
        } => cmd_simulate(
            &catalog,
            seed,
            &bias,
            noise_scale,
            &out_applicant,
            out_assessor.as_deref(),
            policy.as_deref(),
            stdout,
        ),
        Command::Monitor {
            session,
            log,
            propose_out,
            format,
            out,
        } => cmd_monitor(
            &session,
            &log,
            propose_out.as_deref(),
            format,
            out.as_deref(),
            stdout,
        ),
    }
}

fn cmd_init(
    catalog_path: &Path,
    session_path: &Path,
    session_id: Option<String>,
    stdout: &mut dyn Write,
) -> Result<i32> {
    let catalog = load_catalog_file(catalog_path)?;
    let session = if session_path.exists() {
        let existing = load_session_file(session_path)?;
        if existing.phase != Phase::DeriveTests {
            bail!(
                "session {} is in phase {:?}; resubmission is only possible \
                 after a failed coverage check",
                existing.session_id,
                existing.phase
            );
        }
        existing
    } else {
        let id = session_id.unwrap_or_else(|| {
            let seed = format!("{}:{}", catalog.digest(), now_utc_seconds());
            format!("sess-{}", &sha256_hex(seed.as_bytes())[..12])
        });
        Session::new(id)
    };
    let session = session.advance(
        Role::Applicant,
        SessionAction::SubmitCatalog(catalog),
        now_utc_seconds(),
    )?;
    store_session(session_path, &session)?;
    writeln!(
        stdout,
        "session {}: catalog submitted, ready for coverage check",
        session.session_id
    )?;
    Ok(EXIT_OK)
}

fn cmd_coverage(
    session_path: &Path,
    format: OutputFormat,
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<i32> {
    let session = load_session_file(session_path)?;
    let session = session.advance(Role::Assessor, SessionAction::RunCoverage, now_utc_seconds())?;
    store_session(session_path, &session)?;
    let report = session.coverage.as_ref().expect("coverage just ran");
    match format {
        OutputFormat::Machine => {
            let mut text = serde_json::to_string_pretty(report)?;
            text.push('\n');
            write_output(out, stdout, &text)?;
        }
        OutputFormat::Text => {
            let mut text = String::new();
            match report.verdict {
                CoverageVerdict::Ok => text.push_str(&format!(
                    "coverage OK: {} required combinations covered\n",
                    report.covered.len()
                )),
                CoverageVerdict::NotOk => {
                    text.push_str(&format!(
                        "coverage NOT OK: {} of {} required combinations missing; \
                         test derivation restarted\n",
                        report.missing.len(),
                        report.covered.len() + report.missing.len()
                    ));
                    for combo in &report.missing {
                        let rendered: Vec<String> =
                            combo.iter().map(|(d, v)| format!("{d}={v}")).collect();
                        text.push_str(&format!("missing: {}\n", rendered.join(", ")));
                    }
                }
            }
            write_output(out, stdout, &text)?;
        }
    }
    Ok(EXIT_OK)
}

fn cmd_select(
    session_path: &Path,
    results_path: &Path,
    policy_path: &Path,
    format: OutputFormat,
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<i32> {
    let session = load_session_file(session_path)?;
    let report = load_applicant_report_str(&read_to_string(results_path)?)
        .with_context(|| format!("invalid applicant results {}", results_path.display()))?;
    let policy = load_policy_str(&read_to_string(policy_path)?)
        .with_context(|| format!("invalid policy {}", policy_path.display()))?;
    let session = session.advance(
        Role::Assessor,
        SessionAction::RunSelection { report, policy },
        now_utc_seconds(),
    )?;
    store_session(session_path, &session)?;
    let outcome = session.selection.as_ref().expect("selection just ran");
    match format {
        OutputFormat::Machine => {
            let mut text = serde_json::to_string_pretty(outcome)?;
            text.push('\n');
            write_output(out, stdout, &text)?;
        }
        OutputFormat::Text => {
            let mut text = String::new();
            match outcome {
                SelectionOutcome::Decisions { decisions } => {
                    for decision in decisions {
                        text.push_str(&format!(
                            "{}  {}  {:?}\n",
                            decision.test_id,
                            if decision.selected { "select" } else { "skip" },
                            decision.reason
                        ));
                    }
                }
                SelectionOutcome::AutoFail(auto) => {
                    text.push_str(&format!(
                        "AUTO-FAIL: {:.1}% of tests lack applicant results \
                         (threshold {:.1}%)\n",
                        auto.missing_fraction * 100.0,
                        auto.threshold * 100.0
                    ));
                }
            }
            write_output(out, stdout, &text)?;
        }
    }
    match outcome {
        SelectionOutcome::AutoFail(_) => Ok(EXIT_GATE),
        SelectionOutcome::Decisions { .. } => Ok(EXIT_OK),
    }
}

fn cmd_import_results(
    session_path: &Path,
    results_path: &Path,
    stdout: &mut dyn Write,
) -> Result<i32> {
    let session = load_session_file(session_path)?;
    let report = load_assessor_report_str(&read_to_string(results_path)?)
        .with_context(|| format!("invalid assessor results {}", results_path.display()))?;
    let entries = report.entries.len();
    let observations = report.observations.len();
    let session = session.advance(
        Role::Assessor,
        SessionAction::SubmitAssessorResults(report),
        now_utc_seconds(),
    )?;
    store_session(session_path, &session)?;
    writeln!(
        stdout,
        "imported {entries} assessor results and {observations} observations"
    )?;
    Ok(EXIT_OK)
}

fn cmd_assess(
    session_path: &Path,
    severity_policy_path: Option<&Path>,
    starting_points: u32,
    stdout: &mut dyn Write,
) -> Result<i32> {
    let session = load_session_file(session_path)?;
    let severity_policy = match severity_policy_path {
        Some(path) => load_severity_policy(BufReader::new(
            fs::File::open(path).with_context(|| format!("cannot read {}", path.display()))?,
        ))?,
        None => SeverityPolicy::default(),
    };
    let session = session.advance(
        Role::Assessor,
        SessionAction::RunAssessment {
            severity_policy,
            starting_points,
        },
        now_utc_seconds(),
    )?;
    store_session(session_path, &session)?;
    let assessments = session.assessments.as_ref().expect("assessment just ran");
    let advice = session.advice.as_ref().expect("assessment just ran");
    let passed = assessments.iter().filter(|a| a.passed).count();
    let ncs = assessments.iter().filter(|a| a.has_nc()).count();
    let obs = assessments.iter().filter(|a| a.has_ob()).count();
    writeln!(
        stdout,
        "assessed {} tests: {passed} passed, {ncs} with NC, {obs} with OB; \
         demerit {} of {} remaining; advice: {:?}",
        assessments.len(),
        advice.demerit.remaining,
        advice.demerit.starting_points,
        advice.outcome
    )?;
    if advice.outcome == AdviceOutcome::Reject {
        Ok(EXIT_GATE)
    } else {
        Ok(EXIT_OK)
    }
}

fn cmd_report(
    session_path: &Path,
    format: OutputFormat,
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<i32> {
    let session = load_session_file(session_path)?;
    let session = match session.phase {
        Phase::Report => {
            let advanced =
                session.advance(Role::Assessor, SessionAction::IssueAdvice, now_utc_seconds())?;
            store_session(session_path, &advanced)?;
            advanced
        }
        Phase::Closed(Closure::Advised) | Phase::MonitoredDeployment => session,
        Phase::Closed(Closure::AutoFail) => {
            writeln!(
                stdout,
                "session {} closed: automatic fail (missing-results overrun)",
                session.session_id
            )?;
            return Ok(EXIT_GATE);
        }
        other => bail!("no report available in phase {other:?}; run the pipeline first"),
    };
    let document = build_report_from_session(&session)?;
    let rendered = match format {
        OutputFormat::Text => render_text(&document),
        OutputFormat::Machine => render_machine(&document),
    };
    write_output(out, stdout, &rendered)?;
    if document.advice.outcome == AdviceOutcome::Reject {
        Ok(EXIT_GATE)
    } else {
        Ok(EXIT_OK)
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    catalog_path: &Path,
    seed: u64,
    bias: &str,
    noise_scale: f64,
    out_applicant: &Path,
    out_assessor: Option<&Path>,
    policy_path: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<i32> {
    if !(noise_scale.is_finite() && noise_scale >= 0.0) {
        bail!("--noise-scale must be a finite non-negative number");
    }
    let catalog = load_catalog_file(catalog_path)?;
    let bias = parse_bias(bias)?;
    let profile = gen_profile(&catalog, seed).scale_noise(noise_scale);
    let applicant = simulate_applicant(&catalog, &profile, bias, seed);
    fs::write(out_applicant, save_applicant_report(&applicant))
        .with_context(|| format!("cannot write {}", out_applicant.display()))?;
    writeln!(
        stdout,
        "wrote applicant results for {} tests to {}",
        applicant.entries.len(),
        out_applicant.display()
    )?;

    if let Some(assessor_path) = out_assessor {
        let policy_path = policy_path.expect("clap enforces --policy with --out-assessor");
        let policy: SelectionPolicy = load_policy_str(&read_to_string(policy_path)?)?;
        match select_tests(&catalog, &applicant, &policy)? {
            SelectionOutcome::Decisions { decisions } => {
                let assessor = simulate_assessor(&catalog, &profile, &decisions, seed);
                fs::write(assessor_path, save_assessor_report(&assessor))
                    .with_context(|| format!("cannot write {}", assessor_path.display()))?;
                writeln!(
                    stdout,
                    "wrote assessor results for {} selected tests to {}",
                    assessor.entries.len(),
                    assessor_path.display()
                )?;
            }
            SelectionOutcome::AutoFail(_) => {
                writeln!(
                    stdout,
                    "selection auto-failed under the given policy; no assessor results written"
                )?;
                return Ok(EXIT_GATE);
            }
        }
    }
    Ok(EXIT_OK)
}

fn render_monitor_text(report: &MonitorReport) -> String {
    let mut text = format!(
        "ingested {} records; {} novel combinations, {} novel dimension values\n",
        report.records_ingested,
        report.novel_combinations.len(),
        report.novel_dimension_values.len()
    );
    for combo in &report.novel_combinations {
        let rendered: Vec<String> = combo.iter().map(|(d, v)| format!("{d}={v}")).collect();
        text.push_str(&format!("novel: {}\n", rendered.join(", ")));
    }
    for (dimension, value) in &report.novel_dimension_values {
        text.push_str(&format!("unknown value: {dimension}={value}\n"));
    }
    for (combo, counts) in &report.event_counts {
        let rendered: Vec<String> = combo.iter().map(|(d, v)| format!("{d}={v}")).collect();
        text.push_str(&format!(
            "events[{}]: {} nominal, {} disengagement, {} safety\n",
            rendered.join(", "),
            counts.nominal,
            counts.disengagement,
            counts.safety_event
        ));
    }
    text
}

fn cmd_monitor(
    session_path: &Path,
    log_path: &Path,
    propose_out: Option<&Path>,
    format: OutputFormat,
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<i32> {
    let mut session = load_session_file(session_path)?;
    if session.phase == Phase::Closed(Closure::Advised) {
        session = session.advance(
            Role::Applicant,
            SessionAction::BeginMonitoring,
            now_utc_seconds(),
        )?;
    }
    if session.phase != Phase::MonitoredDeployment {
        bail!(
            "monitoring requires a deployed session; phase is {:?}",
            session.phase
        );
    }
    let catalog = session
        .catalog
        .clone()
        .expect("deployed sessions carry a catalog");
    let log_bytes =
        fs::read(log_path).with_context(|| format!("cannot read {}", log_path.display()))?;
    let report = ingest(BufReader::new(&log_bytes[..]), &catalog)?;
    let session = session.record_external_event(
        Role::Applicant,
        "upload-drive-log",
        sha256_hex_json(&(sha256_hex(&log_bytes), &report)),
        now_utc_seconds(),
    )?;
    store_session(session_path, &session)?;

    if let Some(path) = propose_out {
        let drafts = propose_tests(&report, &catalog);
        let mut draft_catalog = catalog.clone();
        draft_catalog.tests.extend(drafts.iter().cloned());
        fs::write(path, save_catalog(&draft_catalog))
            .with_context(|| format!("cannot write {}", path.display()))?;
        writeln!(
            stdout,
            "wrote catalog draft with {} proposed tests to {} \
             (references must be authored before it validates)",
            drafts.len(),
            path.display()
        )?;
    }

    match format {
        OutputFormat::Machine => {
            let mut text = serde_json::to_string_pretty(&report)?;
            text.push('\n');
            write_output(out, stdout, &text)?;
        }
        OutputFormat::Text => {
            write_output(out, stdout, &render_monitor_text(&report))?;
        }
    }
    Ok(EXIT_OK)
}
