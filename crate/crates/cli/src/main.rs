//! `appl`: parse, simulate, check, certify, and exactly evaluate APPL programs.
//!
//! Every command emits one JSON document. Reports never depend on the
//! thread count, so two runs with equal flags produce identical bytes.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use appl::logic::{check_program, AnnotationTable, CheckOptions, EntailConfig};
use appl::oracle::{check_potential_inequality, exact_run, ExactRunReport, PotentialCheck, DEFAULT_NODE_BUDGET};
use appl::ost::OstOptions;
use appl::pipeline::{certify, initial_valuation, to_f64, CertReport, CertifyOptions, CheckSummary, Status};
use appl::runtime::Valuation;
use appl::simulate::{
    default_checkpoints, diagnose, estimate_tail, run_traces, DiagnosticSeries, SimConfig, TailReport, TraceStats,
};
use appl::surface::{parse, pretty, validate, AnnotationSet, Diagnostic, Program};
use appl::{parse_rational, Rational};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

const SCHEMA: &str = "appl-report/1";

const EXIT_OTHER: u8 = 1;
const EXIT_PARSE: u8 = 2;
const EXIT_CHECK: u8 = 3;
const EXIT_OST: u8 = 4;
const EXIT_ORACLE: u8 = 5;

#[derive(Parser)]
#[command(name = "appl", version, about = "Expected-cost analysis for APPL probabilistic programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate, then print the normalised program.
    Parse(Common),
    /// Monte Carlo cost statistics and tail shape.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimArgs,
        /// Also write the empirical tail `n,P[T>n]` as CSV.
        #[arg(long, value_name = "PATH")]
        tail_csv: Option<PathBuf>,
    },
    /// Run the potential-annotation checker.
    Check {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        logic: LogicArgs,
    },
    /// Full pipeline: check, optional-stopping conditions, simulation cross-check.
    Certify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        logic: LogicArgs,
        /// Claimed bound on the number of steps; confirmed with the exact oracle.
        #[arg(long)]
        step_bound: Option<u64>,
    },
    /// Exact finite-horizon expectation (discrete programs only).
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        horizon: u64,
        #[arg(long, default_value_t = DEFAULT_NODE_BUDGET)]
        budget: usize,
        /// Also check the one-step potential inequality to this depth.
        #[arg(long)]
        potential_depth: Option<u64>,
    },
    /// Track `A_n + Φ_n` along simulated traces.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        logic: LogicArgs,
        /// Comma-separated step counts; defaults to 0 and powers of two.
        #[arg(long, value_delimiter = ',')]
        checkpoints: Vec<u64>,
    },
}

#[derive(Args)]
struct Common {
    file: PathBuf,
    /// Initial value of a variable, e.g. `--set d=10`; may repeat.
    #[arg(long = "set", value_name = "VAR=VALUE", value_parser = parse_assignment)]
    sets: Vec<(String, Rational)>,
    /// Write the JSON report here instead of stdout.
    #[arg(long, value_name = "PATH")]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, default_value_t = 100_000)]
    traces: u64,
    #[arg(long, default_value_t = 10_000)]
    horizon: u64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct LogicArgs {
    /// Accept entailments the prover cannot decide; the result is at best
    /// CONDITIONAL-BOUND and lists every assumption.
    #[arg(long)]
    assume_entailments: bool,
}

fn parse_assignment(text: &str) -> Result<(String, Rational), String> {
    let (name, value) = text.split_once('=').ok_or_else(|| format!("expected VAR=VALUE, got `{text}`"))?;
    let value = parse_rational(value).ok_or_else(|| format!("`{value}` is not a rational number"))?;
    Ok((name.trim().to_string(), value))
}

/// Failure that ends the command with a class-specific exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Failure {
        Failure { code, message: message.into() }
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema: &'static str,
    command: &'static str,
    file: String,
    sha256: String,
    result: &'a T,
}

struct Loaded {
    name: String,
    digest: String,
    program: Program,
    ann: AnnotationSet,
}

fn load(path: &Path) -> Result<Loaded, Failure> {
    let source = fs::read_to_string(path).map_err(|e| Failure::new(EXIT_OTHER, format!("{}: {e}", path.display())))?;
    let name = path.display().to_string();
    let (program, ann) = parse(&source).map_err(|e| Failure::new(EXIT_PARSE, e.render(&name)))?;
    let digest = format!("{:x}", Sha256::digest(source.as_bytes()));
    Ok(Loaded { name, digest, program, ann })
}

fn emit<T: Serialize>(command: &'static str, loaded: &Loaded, json: Option<&Path>, result: &T) -> Result<(), Failure> {
    let envelope =
        Envelope { schema: SCHEMA, command, file: loaded.name.clone(), sha256: loaded.digest.clone(), result };
    let mut text = serde_json::to_string_pretty(&envelope).map_err(|e| Failure::new(EXIT_OTHER, e.to_string()))?;
    text.push('\n');
    match json {
        Some(path) => fs::write(path, text).map_err(|e| Failure::new(EXIT_OTHER, format!("{}: {e}", path.display()))),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| Failure::new(EXIT_OTHER, e.to_string())),
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Failure::new(EXIT_OTHER, e.to_string()))?;
    Ok(pool.install(f))
}

fn init(loaded: &Loaded, sets: &[(String, Rational)]) -> Result<Valuation<Rational>, Failure> {
    initial_valuation(&loaded.program, sets).map_err(|e| Failure::new(EXIT_OTHER, e.to_string()))
}

fn sim_config(sim: &SimArgs, max_moment: u32) -> SimConfig {
    SimConfig { n_traces: sim.traces, horizon: sim.horizon, seed: sim.seed, max_moment }
}

fn check_options(logic: &LogicArgs) -> CheckOptions {
    CheckOptions { entail: EntailConfig::default(), assume_entailments: logic.assume_entailments }
}

fn diagnostics_failure(name: &str, diags: &[Diagnostic]) -> Failure {
    let lines: Vec<String> = diags.iter().map(|d| d.render(name)).collect();
    Failure::new(EXIT_CHECK, lines.join("\n"))
}

#[derive(Serialize)]
struct ParseResult {
    program: String,
    diagnostics: Vec<Diagnostic>,
}

#[derive(Serialize)]
struct SimulateResult {
    stats: TraceStats,
    tail: Result<TailReport, String>,
}

#[derive(Serialize)]
struct CheckReport {
    check: CheckSummary,
    diagnostics: Vec<Diagnostic>,
    bound_potential: Option<String>,
}

#[derive(Serialize)]
struct OracleResult {
    initial_valuation: Vec<(String, String)>,
    run: ExactRunReport,
    potential: Option<PotentialCheck>,
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Parse(common) => {
            let loaded = load(&common.file)?;
            let result = ParseResult {
                program: pretty(&loaded.program, &loaded.ann),
                diagnostics: validate(&loaded.program, &loaded.ann, false),
            };
            emit("parse", &loaded, common.json.as_deref(), &result)
        }
        Command::Simulate { common, sim, tail_csv } => {
            let loaded = load(&common.file)?;
            let gamma = to_f64(&init(&loaded, &common.sets)?);
            let cfg = sim_config(&sim, loaded.ann.max_degree().max(2));
            let stats = with_threads(sim.threads, || run_traces(&loaded.program, &gamma, &cfg))?;
            if let Some(path) = tail_csv {
                let mut csv = String::from("n,survival\n");
                for (n, p) in &stats.tail_curve {
                    csv.push_str(&format!("{n},{p}\n"));
                }
                fs::write(&path, csv).map_err(|e| Failure::new(EXIT_OTHER, format!("{}: {e}", path.display())))?;
            }
            let tail = estimate_tail(&stats).map_err(|e| e.to_string());
            emit("simulate", &loaded, common.json.as_deref(), &SimulateResult { stats, tail })
        }
        Command::Check { common, logic } => {
            let loaded = load(&common.file)?;
            let diagnostics = validate(&loaded.program, &loaded.ann, true);
            if !diagnostics.is_empty() {
                return Err(diagnostics_failure(&loaded.name, &diagnostics));
            }
            let result = check_program(&loaded.program, &loaded.ann, &check_options(&logic));
            let report = CheckReport {
                check: CheckSummary::of(&result),
                diagnostics,
                bound_potential: result.pre.as_ref().map(|q| q.display(&loaded.program.vars).to_string()),
            };
            emit("check", &loaded, common.json.as_deref(), &report)?;
            if result.is_accepted() {
                Ok(())
            } else {
                Err(Failure::new(EXIT_CHECK, format!("{}: {}", loaded.name, result.verdict)))
            }
        }
        Command::Certify { common, sim, logic, step_bound } => {
            let loaded = load(&common.file)?;
            let gamma = init(&loaded, &common.sets)?;
            let opts = CertifyOptions {
                sim: sim_config(&sim, 2),
                check: check_options(&logic),
                ost: OstOptions::default(),
                step_bound,
            };
            let report: CertReport =
                with_threads(sim.threads, || certify(&loaded.program, &loaded.ann, &gamma, &opts))?;
            emit("certify", &loaded, common.json.as_deref(), &report)?;
            eprintln!("{}: {}{}", loaded.name, report.status.as_str(), bound_suffix(&report));
            match report.status {
                Status::SoundBound | Status::ConditionalBound => Ok(()),
                Status::CheckFailed => Err(Failure::new(EXIT_CHECK, check_failure_message(&loaded.name, &report))),
                Status::OstFailed => Err(Failure::new(EXIT_OST, ost_failure_message(&loaded.name, &report))),
            }
        }
        Command::Oracle { common, horizon, budget, potential_depth } => {
            let loaded = load(&common.file)?;
            let gamma = init(&loaded, &common.sets)?;
            let oracle_err = |e: appl::oracle::OracleError| Failure::new(EXIT_ORACLE, format!("{}: {e}", loaded.name));
            let run = exact_run(&loaded.program, &gamma, horizon, budget).map_err(oracle_err)?;
            let potential = match potential_depth {
                None => None,
                Some(depth) => {
                    let table = accepted_table(&loaded, &CheckOptions::default())?;
                    Some(
                        check_potential_inequality(&loaded.program, &table, &gamma, depth, budget)
                            .map_err(oracle_err)?,
                    )
                }
            };
            let initial_valuation =
                loaded.program.vars.iter().cloned().zip(gamma.0.iter().map(|v| v.to_string())).collect();
            emit(
                "oracle",
                &loaded,
                common.json.as_deref(),
                &OracleResult { initial_valuation, run: run.report(), potential },
            )
        }
        Command::Diagnose { common, sim, logic, checkpoints } => {
            let loaded = load(&common.file)?;
            let gamma = to_f64(&init(&loaded, &common.sets)?);
            let table = accepted_table(&loaded, &check_options(&logic))?;
            let checkpoints = if checkpoints.is_empty() { default_checkpoints(sim.horizon) } else { checkpoints };
            let cfg = sim_config(&sim, 1);
            let series: DiagnosticSeries =
                with_threads(sim.threads, || diagnose(&loaded.program, &table, &gamma, &checkpoints, &cfg))?;
            emit("diagnose", &loaded, common.json.as_deref(), &series)
        }
    }
}

fn accepted_table(loaded: &Loaded, opts: &CheckOptions) -> Result<AnnotationTable, Failure> {
    let diagnostics = validate(&loaded.program, &loaded.ann, true);
    if !diagnostics.is_empty() {
        return Err(diagnostics_failure(&loaded.name, &diagnostics));
    }
    let result = check_program(&loaded.program, &loaded.ann, opts);
    if !result.is_accepted() {
        return Err(Failure::new(EXIT_CHECK, format!("{}: {}", loaded.name, result.verdict)));
    }
    Ok(AnnotationTable::new(&result.derivation))
}

fn bound_suffix(report: &CertReport) -> String {
    report.bound.as_ref().map(|b| format!(" (bound {b})")).unwrap_or_default()
}

fn check_failure_message(name: &str, report: &CertReport) -> String {
    if report.diagnostics.is_empty() {
        format!("{name}: {}", report.check.verdict)
    } else {
        report.diagnostics.iter().map(|d| d.render(name)).collect::<Vec<_>>().join("\n")
    }
}

fn ost_failure_message(name: &str, report: &CertReport) -> String {
    match report.ost.as_ref().map(|o| &o.level) {
        Some(appl::ost::OstLevel::Rejected { reason }) => format!("{name}: {reason}"),
        _ => format!("{name}: optional-stopping conditions not met"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
