//! Command-line front end: load an instance, run a solver, print the
//! matching, run cross-checks, sweep seeds, write traces.
//!
//! Exit codes: 0 success, 2 input or configuration error, 3 tick budget
//! exceeded, 4 verification failure.

use crate::graph::{Matching, ProblemGraph};
use crate::oracle::oracle_mwpm;
use crate::serial;
use crate::sim::{Latency, SimConfig};
use crate::snapshot::StateSnapshot;
use crate::solver::{solve_distributed, SolveError};
use crate::trace::{EventTrace, TraceLevel};
use crate::verify::check_certificate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_CHECK: i32 = 4;

#[derive(Parser)]
#[command(name = "blossom", version, about = "Minimum-weight perfect matching solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and print the matched pairs.
    Solve(SolveArgs),
    /// Run the distributed solver across a seed range and summarize.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolverKind {
    Distributed,
    Serial,
    Oracle,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CheckKind {
    None,
    Serial,
    Oracle,
    Certificate,
    All,
}

#[derive(Args)]
struct SolveArgs {
    /// Instance file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = SolverKind::Distributed)]
    solver: SolverKind,
    /// Scheduler seed; only the distributed solver consumes it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = CheckKind::None)]
    check: CheckKind,
    /// Write the run's event trace here as JSON lines. Defaults into
    /// $BLOSSOM_TRACE_DIR when that is set.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Message latency: "fixed:K" or "uniform:LO:HI" ticks.
    #[arg(long, default_value = "fixed:1", value_parser = parse_latency)]
    latency: Latency,
    /// Abort the distributed run past this many ticks.
    #[arg(long, default_value_t = 1_000_000)]
    max_ticks: u64,
}

#[derive(Args)]
struct SweepArgs {
    /// Instance file.
    #[arg(long)]
    input: PathBuf,
    /// Seed range "A..B" (end exclusive) or "A..=B".
    #[arg(long, value_parser = parse_seed_range)]
    seeds: SeedRange,
    /// Per-seed traces are written into this directory. Defaults into
    /// $BLOSSOM_TRACE_DIR when that is set.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Message latency: "fixed:K" or "uniform:LO:HI" ticks.
    #[arg(long, default_value = "fixed:1", value_parser = parse_latency)]
    latency: Latency,
    /// Abort any run past this many ticks.
    #[arg(long, default_value_t = 1_000_000)]
    max_ticks: u64,
}

#[derive(Clone, Copy)]
struct SeedRange {
    start: u64,
    end: u64,
}

fn parse_latency(text: &str) -> Result<Latency, String> {
    let bad = || format!("expected fixed:K or uniform:LO:HI, got '{text}'");
    let mut parts = text.split(':');
    let model = match (parts.next(), parts.next(), parts.next(), parts.next()) {
        (Some("fixed"), Some(k), None, None) => {
            Latency::Fixed(k.parse().map_err(|_| bad())?)
        }
        (Some("uniform"), Some(lo), Some(hi), None) => Latency::Uniform(
            lo.parse().map_err(|_| bad())?,
            hi.parse().map_err(|_| bad())?,
        ),
        _ => return Err(bad()),
    };
    match model {
        Latency::Fixed(k) if k < 1 => Err("fixed latency must be at least 1 tick".into()),
        Latency::Uniform(lo, hi) if lo < 1 || hi < lo => {
            Err("uniform latency needs 1 <= LO <= HI".into())
        }
        ok => Ok(ok),
    }
}

fn parse_seed_range(text: &str) -> Result<SeedRange, String> {
    let bad = || format!("expected a seed range like 0..20, got '{text}'");
    let (a, b, inclusive) = match (text.split_once("..="), text.split_once("..")) {
        (Some((a, b)), _) => (a, b, true),
        (None, Some((a, b))) => (a, b, false),
        _ => return Err(bad()),
    };
    let start: u64 = a.parse().map_err(|_| bad())?;
    let parsed: u64 = b.parse().map_err(|_| bad())?;
    let end = if inclusive { parsed + 1 } else { parsed };
    if end <= start {
        return Err(format!("seed range '{text}' is empty"));
    }
    Ok(SeedRange { start, end })
}

/// Parses and executes the command line, returning the process exit code.
pub fn run(args: impl IntoIterator<Item = OsString>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful one-liners, not errors.
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Solve(args) => cmd_solve(&args),
        Command::Sweep(args) => cmd_sweep(&args),
    };
    match result {
        Ok(stdout) => {
            print!("{stdout}");
            EXIT_OK
        }
        Err(Failure { code, message }) => {
            eprintln!("error: {message}");
            code
        }
    }
}

struct Failure {
    code: i32,
    message: String,
}

fn fail(code: i32, message: impl Into<String>) -> Failure {
    Failure { code, message: message.into() }
}

fn load_instance(path: &Path) -> Result<ProblemGraph, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| fail(EXIT_INPUT, format!("cannot read {}: {e}", path.display())))?;
    ProblemGraph::parse(&text)
        .map_err(|e| fail(EXIT_INPUT, format!("{}: {e}", path.display())))
}

/// What one solver run yields; the forest pieces exist only for solvers
/// that maintain duals.
struct RunArtifacts {
    matching: Matching,
    pre_terminal: Option<StateSnapshot>,
    trace: Option<EventTrace>,
}

fn run_solver(
    g: &ProblemGraph,
    args: &SolveArgs,
    trace_wanted: bool,
) -> Result<RunArtifacts, Failure> {
    match args.solver {
        SolverKind::Distributed => {
            let cfg = SimConfig {
                seed: args.seed,
                latency: args.latency,
                max_ticks: args.max_ticks,
                trace_level: if trace_wanted { TraceLevel::Full } else { TraceLevel::Counters },
            };
            let out = solve_distributed(g, cfg).map_err(|SolveError::Livelock { ticks, .. }| {
                fail(EXIT_BUDGET, format!("run did not quiesce within {ticks} ticks"))
            })?;
            Ok(RunArtifacts {
                matching: out.matching,
                pre_terminal: Some(out.pre_terminal),
                trace: Some(out.trace),
            })
        }
        SolverKind::Serial => {
            let out = serial::solve(g);
            Ok(RunArtifacts {
                matching: out.matching,
                pre_terminal: Some(out.pre_terminal),
                trace: Some(out.trace),
            })
        }
        SolverKind::Oracle => {
            let (_, matching) = oracle_mwpm(g)
                .map_err(|e| fail(EXIT_INPUT, e.to_string()))?;
            Ok(RunArtifacts { matching, pre_terminal: None, trace: None })
        }
    }
}

/// The default trace path under $BLOSSOM_TRACE_DIR for a solve run.
fn env_trace_path(input: &Path, tag: &str) -> Option<PathBuf> {
    let dir = std::env::var_os("BLOSSOM_TRACE_DIR")?;
    let stem = input.file_stem().unwrap_or_default().to_string_lossy().into_owned();
    Some(PathBuf::from(dir).join(format!("{stem}-{tag}.jsonl")))
}

fn write_trace(path: &Path, trace: &EventTrace) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|e| fail(EXIT_INPUT, format!("cannot create {}: {e}", parent.display())))?;
    }
    std::fs::write(path, trace.to_jsonl())
        .map_err(|e| fail(EXIT_INPUT, format!("cannot write {}: {e}", path.display())))
}

fn solver_tag(solver: SolverKind) -> &'static str {
    match solver {
        SolverKind::Distributed => "distributed",
        SolverKind::Serial => "serial",
        SolverKind::Oracle => "oracle",
    }
}

fn cmd_solve(args: &SolveArgs) -> Result<String, Failure> {
    let g = load_instance(&args.input)?;
    // The env directory is a default destination, not a request, so the
    // traceless oracle only rejects an explicit --trace.
    let trace_path = match args.solver {
        SolverKind::Oracle if args.trace.is_some() => {
            return Err(fail(EXIT_INPUT, "the oracle solver records no trace"));
        }
        SolverKind::Oracle => None,
        _ => args.trace.clone().or_else(|| {
            env_trace_path(&args.input, &format!("{}-seed{}", solver_tag(args.solver), args.seed))
        }),
    };
    let wants_certificate =
        matches!(args.check, CheckKind::Certificate | CheckKind::All);
    if wants_certificate && args.solver == SolverKind::Oracle {
        return Err(fail(EXIT_INPUT, "certificate checks need a dual-maintaining solver"));
    }

    let run = run_solver(&g, args, trace_path.is_some())?;
    run.matching
        .validate_perfect(&g)
        .map_err(|e| fail(EXIT_CHECK, format!("output failed matching validation: {e}")))?;
    if let (Some(path), Some(trace)) = (&trace_path, &run.trace) {
        write_trace(path, trace)?;
    }

    let weight = run.matching.total_weight(&g);
    if matches!(args.check, CheckKind::Serial | CheckKind::All) {
        let reference = serial::solve(&g);
        if reference.weight != weight {
            return Err(fail(
                EXIT_CHECK,
                format!("weight {weight} disagrees with the serial solver's {}", reference.weight),
            ));
        }
    }
    if matches!(args.check, CheckKind::Oracle | CheckKind::All) {
        let (best, _) = oracle_mwpm(&g).map_err(|e| fail(EXIT_INPUT, e.to_string()))?;
        if best != weight {
            return Err(fail(
                EXIT_CHECK,
                format!("weight {weight} disagrees with the brute-force optimum {best}"),
            ));
        }
    }
    if wants_certificate {
        let snap = run.pre_terminal.as_ref().expect("checked above");
        check_certificate(&g, snap, &run.matching).map_err(|bad| {
            fail(EXIT_CHECK, format!("certificate rejected: {}", bad.join("; ")))
        })?;
    }

    let mut out = String::new();
    for (a, b) in run.matching.pairs() {
        writeln!(out, "{} {} {}", a.0, b.0, g.edge_weight(a, b)).unwrap();
    }
    writeln!(out, "total {weight}").unwrap();
    Ok(out)
}

fn cmd_sweep(args: &SweepArgs) -> Result<String, Failure> {
    let g = load_instance(&args.input)?;
    let trace_dir = args.trace.clone().or_else(|| {
        std::env::var_os("BLOSSOM_TRACE_DIR").map(PathBuf::from)
    });
    let stem = args.input.file_stem().unwrap_or_default().to_string_lossy().into_owned();

    let mut weight = None;
    let mut ticks = Vec::new();
    let mut messages = Vec::new();
    let (mut rewinds, mut aborts, mut multis) = (0u64, 0u64, 0u64);
    for seed in args.seeds.start..args.seeds.end {
        let cfg = SimConfig {
            seed,
            latency: args.latency,
            max_ticks: args.max_ticks,
            trace_level: if trace_dir.is_some() { TraceLevel::Full } else { TraceLevel::Counters },
        };
        let out = solve_distributed(&g, cfg).map_err(|SolveError::Livelock { ticks, .. }| {
            fail(EXIT_BUDGET, format!("seed {seed} did not quiesce within {ticks} ticks"))
        })?;
        out.matching
            .validate_perfect(&g)
            .map_err(|e| fail(EXIT_CHECK, format!("seed {seed} failed matching validation: {e}")))?;
        let w = out.matching.total_weight(&g);
        match weight {
            None => weight = Some(w),
            Some(first) if first != w => {
                return Err(fail(
                    EXIT_CHECK,
                    format!("seed {seed} produced weight {w}, earlier seeds produced {first}"),
                ));
            }
            Some(_) => {}
        }
        ticks.push(out.ticks);
        messages.push(out.trace.messages_delivered);
        rewinds += out.trace.count("rewind");
        aborts += out.trace.count("abort");
        multis += out.trace.count("multireweight");
        if let Some(dir) = &trace_dir {
            write_trace(&dir.join(format!("{stem}-sweep-seed{seed}.jsonl")), &out.trace)?;
        }
    }

    let stats = |xs: &mut Vec<u64>| {
        xs.sort_unstable();
        (xs[0], xs[xs.len() / 2], xs[xs.len() - 1])
    };
    let (t_min, t_med, t_max) = stats(&mut ticks);
    let (m_min, m_med, m_max) = stats(&mut messages);
    let mut out = String::new();
    writeln!(out, "instance {stem} n {}", g.n()).unwrap();
    writeln!(out, "seeds {}..{} runs {}", args.seeds.start, args.seeds.end, ticks.len()).unwrap();
    writeln!(out, "weight {}", weight.expect("range is nonempty")).unwrap();
    writeln!(out, "ticks min {t_min} median {t_med} max {t_max}").unwrap();
    writeln!(out, "messages min {m_min} median {m_med} max {m_max}").unwrap();
    writeln!(out, "rewinds {rewinds} aborts {aborts} multireweights {multis}").unwrap();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples;
    use std::io::Write as _;

    fn run_args(args: &[&str]) -> i32 {
        run(["blossom"].iter().chain(args).map(OsString::from))
    }

    fn instance_file(dir: &tempfile::TempDir, name: &str, text: &str) -> PathBuf {
        let path = dir.path().join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(text.as_bytes()).unwrap();
        path
    }

    #[test]
    fn latency_strings_parse() {
        assert_eq!(parse_latency("fixed:3").unwrap(), Latency::Fixed(3));
        assert_eq!(parse_latency("uniform:1:4").unwrap(), Latency::Uniform(1, 4));
        assert!(parse_latency("fixed:0").is_err());
        assert!(parse_latency("uniform:3:2").is_err());
        assert!(parse_latency("poisson:2").is_err());
        assert!(parse_latency("fixed").is_err());
    }

    #[test]
    fn seed_ranges_parse() {
        let r = parse_seed_range("0..20").unwrap();
        assert_eq!((r.start, r.end), (0, 20));
        let r = parse_seed_range("5..=9").unwrap();
        assert_eq!((r.start, r.end), (5, 10));
        assert!(parse_seed_range("7..7").is_err());
        assert!(parse_seed_range("x..2").is_err());
    }

    #[test]
    fn solve_prints_pairs_and_checks_pass() {
        let dir = tempfile::tempdir().unwrap();
        let input = instance_file(&dir, "diamond.graph", &samples::diamond().save());
        for solver in ["distributed", "serial", "oracle"] {
            let code = run_args(&[
                "solve",
                "--input",
                input.to_str().unwrap(),
                "--solver",
                solver,
                "--check",
                "all",
            ]);
            // The oracle cannot take a certificate check; drop to its own.
            if solver == "oracle" {
                assert_eq!(code, EXIT_INPUT);
                let code = run_args(&[
                    "solve",
                    "--input",
                    input.to_str().unwrap(),
                    "--solver",
                    "oracle",
                    "--check",
                    "oracle",
                ]);
                assert_eq!(code, EXIT_OK);
            } else {
                assert_eq!(code, EXIT_OK, "solver {solver}");
            }
        }
    }

    #[test]
    fn bad_inputs_exit_two() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(
            run_args(&["solve", "--input", dir.path().join("nope").to_str().unwrap()]),
            EXIT_INPUT
        );
        let odd = instance_file(&dir, "odd.graph", "n 3\nw 0 1 1\nw 0 2 1\nw 1 2 1\n");
        assert_eq!(run_args(&["solve", "--input", odd.to_str().unwrap()]), EXIT_INPUT);
        let ok = instance_file(&dir, "ok.graph", &samples::diamond().save());
        assert_eq!(
            run_args(&["solve", "--input", ok.to_str().unwrap(), "--latency", "fixed:0"]),
            EXIT_INPUT
        );
    }

    #[test]
    fn budget_exhaustion_exits_three() {
        let dir = tempfile::tempdir().unwrap();
        let input = instance_file(&dir, "grid.graph", &samples::grid().save());
        let code = run_args(&[
            "solve",
            "--input",
            input.to_str().unwrap(),
            "--max-ticks",
            "3",
        ]);
        assert_eq!(code, EXIT_BUDGET);
    }

    #[test]
    fn sweep_summarizes_and_stays_single_weight() {
        let dir = tempfile::tempdir().unwrap();
        let input = instance_file(&dir, "line.graph", &samples::line().save());
        let code = run_args(&[
            "sweep",
            "--input",
            input.to_str().unwrap(),
            "--seeds",
            "0..6",
        ]);
        assert_eq!(code, EXIT_OK);
    }

    #[test]
    fn traces_are_written_where_asked() {
        let dir = tempfile::tempdir().unwrap();
        let input = instance_file(&dir, "diamond.graph", &samples::diamond().save());
        let trace = dir.path().join("out").join("run.jsonl");
        let code = run_args(&[
            "solve",
            "--input",
            input.to_str().unwrap(),
            "--trace",
            trace.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_OK);
        let text = std::fs::read_to_string(&trace).unwrap();
        let back = EventTrace::from_jsonl(&text).unwrap();
        assert!(back.messages_delivered > 0);
    }
}
