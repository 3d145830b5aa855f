//! `foilset`: drive a design run from the shell.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error,
//! 3 the run ended with an empty set.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use foilset_core::geometry::{export_coordinates, export_obj, generate_airfoil, Spacing, DEFAULT_SURFACE_POINTS};
use foilset_core::pipeline::run::{EventKind, RunState, RunStatus};
use foilset_core::pipeline::store::RunDir;
use foilset_core::pipeline::{run_report, Directive, ReviewDecision, RunConfig, VerdictKind};
use foilset_core::sampling::{export_batch, DesignId};
use foilset_core::Error;

const ACTOR: &str = "cli";

#[derive(Parser)]
#[command(name = "foilset", version, about = "Risk-aware set-based airfoil design runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (JSON). Used when the run directory is new.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory (store root for `serve`).
    #[arg(long, default_value = "run")]
    run_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Create a run directory.
    Init(Common),
    /// Run the next phase, or all phases up to review with --all.
    Advance {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        all: bool,
    },
    /// Advance through the sensitivity analysis and print its report.
    Sensitivity(Common),
    /// Advance through the first sensitivity-guided refinement.
    Refine(Common),
    /// Advance through the risk filter and print the risk table.
    Risk(Common),
    /// Advance to review, then apply decisions and optionally iterate or converge.
    Review(ReviewArgs),
    /// Print the run report.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        json: bool,
    },
    /// Serve every run under --run-dir over HTTP.
    Serve {
        #[command(flatten)]
        common: Common,
        /// Bind address; defaults to loopback on FOILSET_PORT (or 8080).
        #[arg(long)]
        addr: Option<SocketAddr>,
    },
    /// Export geometry of a current candidate, or the current set as a batch.
    Export(ExportArgs),
}

#[derive(Args)]
struct ReviewArgs {
    #[command(flatten)]
    common: Common,
    /// `ID=valid` or `ID=invalid`; repeatable.
    #[arg(long = "decide", value_name = "ID=VERDICT")]
    decide: Vec<String>,
    /// `ID=increase CST_L3 [fraction]`; attaches a directive to that decision.
    #[arg(long = "directive", value_name = "ID=TEXT")]
    directives: Vec<String>,
    #[arg(long, default_value = "")]
    note: String,
    /// Build the next review set from the decisions.
    #[arg(long)]
    iterate: bool,
    /// Close the loop on the current set.
    #[arg(long)]
    converge: bool,
}

#[derive(Copy, Clone, ValueEnum)]
enum Format {
    Dat,
    Obj,
    Batch,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "dat")]
    format: Format,
    /// Candidate id (not needed for `batch`).
    #[arg(long)]
    candidate: Option<String>,
    /// Extrusion span for OBJ output.
    #[arg(long, default_value_t = 1.0)]
    span: f64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.to_string()),
            e => Failure::Runtime(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn open(common: &Common) -> CliResult<RunDir> {
    let dir = &common.run_dir;
    if dir.join("decisions.jsonl").exists() {
        if common.config.is_some() {
            log::warn!("{} already holds a run; --config ignored", dir.display());
        }
        return Ok(RunDir::open(dir)?);
    }
    let config = match &common.config {
        Some(p) => RunConfig::load(p).map_err(|e| match e {
            Error::Io { .. } => Failure::Config(e.to_string()),
            e => e.into(),
        })?,
        None => RunConfig::default(),
    };
    Ok(RunDir::create(dir, config, ACTOR)?)
}

fn step(run: &mut RunDir) -> CliResult<()> {
    let s = run.commit(EventKind::Advance, ACTOR)?;
    eprintln!(
        "{}: {}{}",
        s.event,
        s.detail,
        s.stage.map(|k| format!(" (stage {k})")).unwrap_or_default()
    );
    Ok(())
}

/// Advances until `done` holds or the run stops being ready.
fn advance_until(run: &mut RunDir, done: impl Fn(&RunState) -> bool) -> CliResult<()> {
    while !done(run.state()) && run.state().status == RunStatus::Ready {
        step(run)?;
    }
    Ok(())
}

fn has_stage(name: &'static str) -> impl Fn(&RunState) -> bool {
    move |s| s.stages.iter().any(|r| r.name == name)
}

fn parse_pair(text: &str) -> CliResult<(String, String)> {
    text.split_once('=')
        .map(|(a, b)| (a.trim().to_string(), b.trim().to_string()))
        .ok_or_else(|| Failure::Config(format!("expected ID=VALUE, got '{text}'")))
}

fn review(args: &ReviewArgs) -> CliResult<RunDir> {
    let mut run = open(&args.common)?;
    advance_until(&mut run, |s| s.status != RunStatus::Ready)?;
    let mut directives: Vec<(String, Directive)> = Vec::new();
    for d in &args.directives {
        let (id, text) = parse_pair(d)?;
        directives.push((id, text.parse()?));
    }
    for d in &args.decide {
        let (id, verdict) = parse_pair(d)?;
        let verdict = match verdict.to_ascii_lowercase().as_str() {
            "valid" | "true" => VerdictKind::Valid,
            "invalid" | "false" => VerdictKind::Invalid,
            v => return Err(Failure::Config(format!("unknown verdict '{v}'"))),
        };
        let decision = ReviewDecision {
            candidate: DesignId(id.clone()),
            verdict,
            note: args.note.clone(),
            directives: directives
                .iter()
                .filter(|(i, _)| *i == id)
                .map(|(_, d)| d.clone())
                .collect(),
            actor: ACTOR.into(),
            timestamp: None,
        };
        let s = run.commit(EventKind::Decision { decision }, ACTOR)?;
        eprintln!("decision: {}", s.detail);
    }
    if args.iterate {
        let s = run.commit(EventKind::Iterate, ACTOR)?;
        eprintln!("iterate: {}", s.detail);
    }
    if args.converge {
        let s = run.commit(EventKind::Converge, ACTOR)?;
        eprintln!("converge: {}", s.detail);
    }
    if let Some(set) = run.state().current_set() {
        for m in &set.members {
            println!(
                "{}\t{:?}\t{}",
                m.id,
                m.status,
                m.evaluations.assessment.as_deref().unwrap_or("").replace('\n', " ")
            );
        }
    }
    Ok(run)
}

fn write_out(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn export(args: &ExportArgs) -> CliResult<RunDir> {
    let run = open(&args.common)?;
    let st = run.state();
    let set = st
        .current_set()
        .ok_or_else(|| Failure::Runtime("run has no candidates yet".into()))?;
    let text = match args.format {
        Format::Batch => export_batch(set),
        f => {
            let id = args
                .candidate
                .as_deref()
                .ok_or_else(|| Failure::Config("--candidate is required for geometry export".into()))?;
            let c = set
                .get(&DesignId(id.to_string()))
                .ok_or_else(|| Failure::Runtime(format!("candidate {id} is not in the current set")))?;
            let g = generate_airfoil(&c.cst(), DEFAULT_SURFACE_POINTS, Spacing::Cosine)?;
            match f {
                Format::Obj => export_obj(&g, args.span)?,
                _ => export_coordinates(&g, id),
            }
        }
    };
    write_out(args.out.as_deref(), &text)?;
    Ok(run)
}

fn serve(common: &Common, addr: Option<SocketAddr>) -> CliResult<()> {
    let addr = match addr {
        Some(a) => a,
        None => foilset_service::default_addr().map_err(Failure::Config)?,
    };
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Runtime(e.to_string()))?;
    eprintln!("serving {} on http://{addr}", common.run_dir.display());
    rt.block_on(foilset_service::serve(common.run_dir.clone(), addr))
        .map_err(|e| Failure::Runtime(format!("server on {addr}: {e}")))
}

fn run(cli: Cli) -> CliResult<Option<RunStatus>> {
    let run = match cli.command {
        Command::Init(c) => {
            let run = open(&c)?;
            println!("{}", run.path().display());
            run
        }
        Command::Advance { common, all } => {
            let mut run = open(&common)?;
            if all {
                advance_until(&mut run, |_| false)?;
            } else {
                step(&mut run)?;
            }
            run
        }
        Command::Sensitivity(c) => {
            let mut run = open(&c)?;
            advance_until(&mut run, |s| s.sensitivity.is_some())?;
            if let Some(r) = &run.state().sensitivity {
                print!("{}", r.to_markdown());
            }
            run
        }
        Command::Refine(c) => {
            let mut run = open(&c)?;
            advance_until(&mut run, has_stage("refine"))?;
            run
        }
        Command::Risk(c) => {
            let mut run = open(&c)?;
            advance_until(&mut run, has_stage("risk-filter"))?;
            if let Ok(csv) = std::fs::read_to_string(run.path().join("risk.csv")) {
                print!("{csv}");
            }
            run
        }
        Command::Review(args) => review(&args)?,
        Command::Report { common, json } => {
            let run = open(&common)?;
            let rep = run_report(run.state());
            if json {
                println!("{}", rep.to_json()?);
            } else {
                print!("{}", rep.to_markdown());
            }
            run
        }
        Command::Serve { common, addr } => {
            serve(&common, addr)?;
            return Ok(None);
        }
        Command::Export(args) => export(&args)?,
    };
    Ok(Some(run.state().status))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(Some(status)) if status.is_exhausted() => {
            eprintln!("run ended with no surviving designs ({status:?})");
            ExitCode::from(3)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("configuration error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
