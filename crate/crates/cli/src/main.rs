//! `splitsim`: run, verify, fuzz and explain splitting constructions.
//!
//! Exit codes: 0 when every applicable check passes, 1 when a check fails or
//! a run aborts, 2 for unreadable or invalid input.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
#[cfg(debug_assertions)]
use splitsim::harness::corrupt::corrupt;
use splitsim::harness::{
    load_scenario, run, run_batch, scenario_to_json, verify, CheckId, CheckStatus, Construction,
    FuzzOutcome, FuzzParams, Scenario, VerificationReport,
};
use splitsim::{BlockId, ReqId, Trace, TraceEvent};

#[derive(Parser)]
#[command(
    name = "splitsim",
    version,
    about = "Simulate and verify splitting constructions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario to its horizon and verify the trace.
    Run(RunArgs),
    /// Verify an existing trace against its scenario.
    Verify(VerifyArgs),
    /// Generate, run and verify random scenarios.
    Fuzz(FuzzArgs),
    /// Print the chronology of a trace, optionally filtered.
    Explain(ExplainArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Write the trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Debug builds only: corrupt the trace for this check before verifying.
    #[cfg(debug_assertions)]
    #[arg(long, value_name = "CHECK")]
    corrupt: Option<CheckId>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct FuzzArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    count: u64,
    #[arg(long)]
    construction: Construction,
    #[arg(long, default_value_t = 1024)]
    max_horizon: u64,
    /// Directory for the first failing scenario and its report.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Debug builds only: corrupt every trace for this check.
    #[cfg(debug_assertions)]
    #[arg(long, value_name = "CHECK")]
    corrupt: Option<CheckId>,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    trace: PathBuf,
    /// `L:i`, `U:i`, or a bare `i` for both blocks with index `i`.
    #[arg(long)]
    block: Option<String>,
    /// `P:e` or `Q:e`.
    #[arg(long)]
    requirement: Option<String>,
    #[arg(long)]
    input: Option<u64>,
}

/// Why a command did not succeed.
enum Failure {
    Checks,
    Input(String),
}

impl From<String> for Failure {
    fn from(msg: String) -> Self {
        Failure::Input(msg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Fuzz(a) => cmd_fuzz(a),
        Command::Explain(a) => cmd_explain(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => ExitCode::from(1),
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<(), String> {
    fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn scenario(path: &Path) -> Result<Scenario, String> {
    load_scenario(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))
}

fn print_report(report: &VerificationReport) {
    for (id, status) in &report.checks {
        match status {
            CheckStatus::Pass => println!("{id:<4} pass     {}", id.title()),
            CheckStatus::Skipped { reason } => {
                println!("{id:<4} skipped  {} ({reason})", id.title())
            }
            CheckStatus::Fail {
                stage,
                events,
                detail,
            } => println!(
                "{id:<4} FAIL     {} at stage {stage}, events {events:?}: {detail}",
                id.title()
            ),
        }
    }
    println!("flags: {}", report.flags.join(", "));
}

fn finish(report: &VerificationReport, path: Option<&Path>) -> Result<(), Failure> {
    print_report(report);
    if let Some(p) = path {
        write(p, &report.to_json())?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let sc = scenario(&args.scenario)?;
    let out = match run(&sc) {
        Ok(out) => out,
        Err(failure) => {
            if let Some(p) = &args.trace {
                write(p, &failure.trace.to_text())?;
            }
            eprintln!("run aborted: {failure}");
            if let Some(last) = failure.trace.iter().last() {
                eprintln!("last event: {last}");
            }
            return Err(Failure::Checks);
        }
    };
    #[allow(unused_mut)]
    let mut trace = out.trace;
    #[cfg(debug_assertions)]
    if let Some(check) = args.corrupt {
        trace = corrupt(check, &sc, &trace)
            .ok_or_else(|| format!("no corruption of {check} applies to this scenario"))?;
    }
    if let Some(p) = &args.trace {
        write(p, &trace.to_text())?;
    }
    finish(&verify(&sc, &trace), args.report.as_deref())
}

fn cmd_verify(args: VerifyArgs) -> Result<(), Failure> {
    let sc = scenario(&args.scenario)?;
    let text = read(&args.trace)?;
    let trace = Trace::from_text(&text).map_err(|e| format!("{}: {e}", args.trace.display()))?;
    finish(&verify(&sc, &trace), args.report.as_deref())
}

fn status_of(o: &FuzzOutcome) -> &'static str {
    match &o.result {
        Err(_) => "abort",
        Ok((_, r)) if !r.passed() => "fail",
        Ok((_, r)) if !r.settled() => "unsettled",
        Ok(_) => "pass",
    }
}

fn cmd_fuzz(args: FuzzArgs) -> Result<(), Failure> {
    let mut params = FuzzParams::new(args.construction);
    if args.max_horizon < params.min_horizon {
        return Err(format!("--max-horizon must be at least {}", params.min_horizon).into());
    }
    params.max_horizon = args.max_horizon;
    #[allow(unused_mut)]
    let mut outcomes = run_batch(args.seed, args.count, &params);
    #[cfg(debug_assertions)]
    if let Some(check) = args.corrupt {
        for o in &mut outcomes {
            if let Ok((trace, report)) = &mut o.result {
                if let Some(bad) = corrupt(check, &o.scenario, trace) {
                    *report = verify(&o.scenario, &bad);
                    *trace = bad;
                }
            }
        }
    }

    println!(
        "{:>6}  {:<9}  {:>7}  {:<9}  {:>13}  {:>12}",
        "index", "construct", "horizon", "status", "max-restraint", "max-injuries"
    );
    let (mut pass, mut fail, mut unsettled) = (0, 0, 0);
    let (mut max_restraint, mut max_injuries) = (-1i64, 0u64);
    for o in &outcomes {
        let status = status_of(o);
        match status {
            "pass" => pass += 1,
            "unsettled" => unsettled += 1,
            _ => fail += 1,
        }
        let (restraint, injuries) = match &o.result {
            Ok((_, r)) => (
                r.diagnostics
                    .max_restraint
                    .values()
                    .copied()
                    .max()
                    .unwrap_or(-1),
                r.diagnostics.injuries.values().copied().max().unwrap_or(0),
            ),
            Err(_) => (-1, 0),
        };
        max_restraint = max_restraint.max(restraint);
        max_injuries = max_injuries.max(injuries);
        println!(
            "{:>6}  {:<9}  {:>7}  {:<9}  {:>13}  {:>12}",
            o.index, o.scenario.construction, o.scenario.horizon, status, restraint, injuries
        );
    }
    println!(
        "total {}: {pass} pass, {fail} fail, {unsettled} unsettled; max restraint {max_restraint}, max injuries per block {max_injuries}",
        outcomes.len()
    );

    let Some(first) = outcomes
        .iter()
        .find(|o| matches!(status_of(o), "fail" | "abort"))
    else {
        return Ok(());
    };
    fs::create_dir_all(&args.out_dir)
        .map_err(|e| format!("cannot create {}: {e}", args.out_dir.display()))?;
    let stem = format!("fuzz-{}-{}-{}", args.construction, args.seed, first.index);
    let path = args.out_dir.join(format!("{stem}.json"));
    write(&path, &scenario_to_json(&first.scenario))?;
    match &first.result {
        Ok((_, report)) => write(
            &args.out_dir.join(format!("{stem}.report.json")),
            &report.to_json(),
        )?,
        Err(f) => eprintln!("scenario {} aborted: {f}", first.index),
    }
    eprintln!("first failing scenario written to {}", path.display());
    Err(Failure::Checks)
}

/// Event kinds shown by `explain`.
const CHRONOLOGY: [&str; 11] = [
    "initialize",
    "expansionary",
    "certify",
    "refuse-certify",
    "injury",
    "act",
    "diagonalize",
    "define-local",
    "restraint-set",
    "route",
    "enumerate",
];

enum BlockFilter {
    Exact(BlockId),
    Index(u64),
}

impl BlockFilter {
    fn parse(s: &str) -> Result<Self, String> {
        match s.parse::<u64>() {
            Ok(i) => Ok(BlockFilter::Index(i)),
            Err(_) => s
                .parse::<BlockId>()
                .map(BlockFilter::Exact)
                .map_err(|e| format!("bad --block {s:?}: {e}")),
        }
    }

    fn matches(&self, ev: &TraceEvent) -> bool {
        let Some(b) = ev.get_parsed::<BlockId>("block") else {
            return false;
        };
        match self {
            BlockFilter::Exact(id) => b == *id,
            BlockFilter::Index(i) => b.index == *i,
        }
    }
}

fn cmd_explain(args: ExplainArgs) -> Result<(), Failure> {
    let text = read(&args.trace)?;
    let trace = Trace::from_text(&text).map_err(|e| format!("{}: {e}", args.trace.display()))?;
    let block = args.block.as_deref().map(BlockFilter::parse).transpose()?;
    let req = match args.requirement.as_deref() {
        None => None,
        Some(s) => {
            let id: ReqId = s
                .parse()
                .map_err(|e| format!("bad --requirement {s:?}: {e}"))?;
            let known = trace
                .iter()
                .any(|e| e.get_parsed::<ReqId>("req") == Some(id));
            if !known {
                return Err(format!("requirement {id} does not occur in the trace").into());
            }
            Some(id)
        }
    };
    let filtered = block.is_some() || req.is_some() || args.input.is_some();
    for ev in trace.iter() {
        let kind = ev.kind.as_str();
        if !CHRONOLOGY.contains(&kind) {
            continue;
        }
        // Environment enumerations only appear when nothing is filtered.
        if kind == "enumerate" && (filtered || ev.get("set") == Some("W")) {
            continue;
        }
        if block.as_ref().is_some_and(|b| !b.matches(ev)) {
            continue;
        }
        if req.is_some_and(|r| ev.get_parsed::<ReqId>("req") != Some(r)) {
            continue;
        }
        if args.input.is_some_and(|x| ev.get_u64("input") != Some(x)) {
            continue;
        }
        let detail: Vec<String> = ev.payload.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("stage {:>5}  {kind:<14}  {}", ev.stage, detail.join(" "));
    }
    Ok(())
}
