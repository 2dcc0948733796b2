//! Command-line front end: check models, run single exploration rounds, run
//! the brute-force oracles, and reproduce the benchmark table.

use clap::{Args, Parser, Subcommand};
use gcmc::abstraction::{property_atoms, PredicateSet};
use gcmc::corpus::{self, ExpectedVerdict};
use gcmc::logic;
use gcmc::model::{parse_model, Model};
use gcmc::oracle;
use gcmc::refine::{refinement_search, InitPreds, RefineConfig, UndecidedReason, Verdict};
use gcmc::report::{self, ConfigEcho, ReportInputs};
use gcmc::search::{
    alpha_search, CheckMode, InputStrategy, PredicateMap, SearchConfig, SearchOrder,
};
use gcmc::semantics::InputMode;
use gcmc::solver::{BuiltinBackend, SmtProcessBackend, Solver};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

const EXIT_UNREACHABLE: u8 = 0;
const EXIT_ERROR_FOUND: u8 = 1;
const EXIT_UNDECIDED: u8 = 2;
const EXIT_USAGE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "gcmc",
    about = "Explicit-state model checker for guarded-command programs with \
             predicate-abstracted matching and iterative refinement"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full refinement loop on a model.
    Check {
        model: PathBuf,
        #[command(flatten)]
        run: RunFlags,
        /// Stuck-transition heuristic: `off` or a consecutive-failure count.
        #[arg(long, default_value = "off")]
        heuristic: String,
        /// Keep discovered predicates local to their control valuation.
        #[arg(long)]
        transition_dependent: bool,
        #[arg(long, default_value_t = 50)]
        max_iters: usize,
        /// Initial predicates: `guards` or `ap-only`.
        #[arg(long, default_value = "guards")]
        init_preds: String,
        /// Seed `assume` declarations into the predicates: `on` or `off`.
        #[arg(long, default_value = "on")]
        assume: String,
    },
    /// Run one exploration round with a fixed predicate set.
    Explore {
        model: PathBuf,
        /// Comma-separated predicate list, e.g. "x < 2, x < 1".
        #[arg(long, default_value = "")]
        preds: String,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Brute-force reference engines.
    Oracle {
        #[command(subcommand)]
        op: OracleOp,
    },
    /// Run the bundled benchmark corpus and compare with the reference table.
    Corpus {
        /// Print the comparison table (the default output).
        #[arg(long)]
        table: bool,
        /// Run only rows whose name contains this substring.
        #[arg(long)]
        only: Option<String>,
    },
}

#[derive(Args)]
struct RunFlags {
    /// Exploration order: `bfs` or `dfs`.
    #[arg(long, default_value = "bfs")]
    order: String,
    /// Exactness checking: `prover` or `lightweight`.
    #[arg(long, default_value = "prover")]
    mode: String,
    /// Input enumeration domain, `lo..hi`.
    #[arg(long, default_value = "-8..8")]
    input_domain: String,
    /// Input handling: `brute` or `sat`.
    #[arg(long, default_value = "brute")]
    input_mode: String,
    /// Abstract-state limit for one round.
    #[arg(long)]
    max_states: Option<usize>,
    /// Validity backend: `internal` or `external:<path>[,arg...]`.
    /// The GCMC_SOLVER environment variable overrides this.
    #[arg(long, default_value = "internal")]
    solver: String,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write a DOT graph of the explored structure.
    #[arg(long)]
    dot: Option<PathBuf>,
}

#[derive(Subcommand)]
enum OracleOp {
    /// Reachable labelings of the bounded concrete system.
    Rl {
        model: PathBuf,
        #[command(flatten)]
        bounds: BoundFlags,
    },
    /// Number of bisimulation-quotient blocks of the concrete system.
    Quotient {
        model: PathBuf,
        #[command(flatten)]
        bounds: BoundFlags,
    },
    /// Enumerated may/must abstract transitions over a bounded domain.
    Abstraction {
        model: PathBuf,
        #[arg(long, default_value = "")]
        preds: String,
        #[arg(long, default_value = "-6..6")]
        domain: String,
        #[arg(long, default_value_t = 2)]
        slack: i64,
    },
}

#[derive(Args)]
struct BoundFlags {
    /// Input-value bound: enumerate inputs over [-N, N].
    #[arg(long, default_value_t = 6)]
    bound: i64,
    #[arg(long, default_value_t = 100_000)]
    max_states: usize,
    #[arg(long, default_value_t = 100_000)]
    max_depth: usize,
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("gcmc: {msg}");
    ExitCode::from(EXIT_USAGE)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match cli.command {
        Command::Check {
            model,
            run,
            heuristic,
            transition_dependent,
            max_iters,
            init_preds,
            assume,
        } => cmd_check(
            model,
            run,
            heuristic,
            transition_dependent,
            max_iters,
            init_preds,
            assume,
        ),
        Command::Explore { model, preds, run } => cmd_explore(model, preds, run),
        Command::Oracle { op } => cmd_oracle(op),
        Command::Corpus { table: _, only } => cmd_corpus(only.as_deref()),
    }
}

fn load_model(path: &PathBuf) -> Result<Model, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let m = parse_model(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let diagnostics = gcmc::model::validate_model(&m);
    if !diagnostics.is_empty() {
        let msgs: Vec<String> = diagnostics.iter().map(|d| d.to_string()).collect();
        return Err(format!("{}: {}", path.display(), msgs.join("; ")));
    }
    Ok(m)
}

fn parse_range(text: &str) -> Result<(i64, i64), String> {
    let (lo, hi) = text
        .split_once("..")
        .ok_or_else(|| format!("bad range `{text}`"))?;
    let lo = lo
        .trim()
        .parse()
        .map_err(|_| format!("bad range `{text}`"))?;
    let hi = hi
        .trim()
        .parse()
        .map_err(|_| format!("bad range `{text}`"))?;
    if lo > hi {
        return Err(format!("empty range `{text}`"));
    }
    Ok((lo, hi))
}

fn search_config(run: &RunFlags) -> Result<SearchConfig, String> {
    let order = match run.order.as_str() {
        "bfs" => SearchOrder::BreadthFirst,
        "dfs" => SearchOrder::DepthFirst,
        other => return Err(format!("unknown order `{other}`")),
    };
    let mode = match run.mode.as_str() {
        "prover" => CheckMode::Prover,
        "lightweight" => CheckMode::Lightweight,
        other => return Err(format!("unknown mode `{other}`")),
    };
    let (lo, hi) = parse_range(&run.input_domain)?;
    let input = match run.input_mode.as_str() {
        "brute" => InputStrategy::BruteForce(lo, hi),
        "sat" => InputStrategy::Satisfiability,
        other => return Err(format!("unknown input mode `{other}`")),
    };
    Ok(SearchConfig {
        order,
        mode,
        input,
        max_states: run.max_states,
        max_millis: None,
    })
}

fn make_solver(m: &Model, spec: &str) -> Result<Solver, String> {
    let names: Vec<String> = m.vars.iter().map(|v| v.name.clone()).collect();
    let spec = match std::env::var("GCMC_SOLVER") {
        Ok(v) if !v.is_empty() => v,
        _ => spec.to_string(),
    };
    if spec == "internal" {
        return Ok(Solver::new(Box::new(BuiltinBackend::default()), names));
    }
    let Some(rest) = spec.strip_prefix("external:") else {
        return Err(format!(
            "unknown solver `{spec}` (use internal or external:<path>)"
        ));
    };
    let mut parts = rest.split(',').map(|s| s.to_string());
    let program = parts.next().unwrap();
    let args: Vec<String> = parts.collect();
    let backend = SmtProcessBackend::spawn(&program, &args, Duration::from_secs(5))
        .map_err(|e| e.to_string())?;
    Ok(Solver::new(Box::new(backend), names))
}

#[allow(clippy::too_many_arguments)]
fn cmd_check(
    path: PathBuf,
    run: RunFlags,
    heuristic: String,
    transition_dependent: bool,
    max_iters: usize,
    init_preds: String,
    assume: String,
) -> ExitCode {
    let m = match load_model(&path) {
        Ok(m) => m,
        Err(e) => return fail(e),
    };
    let search = match search_config(&run) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let heuristic = match heuristic.as_str() {
        "off" => None,
        n => match n.parse::<u32>() {
            Ok(v) if v >= 1 => Some(v),
            _ => return fail(format!("bad --heuristic `{n}`")),
        },
    };
    let init = match init_preds.as_str() {
        "guards" => InitPreds::Guards,
        "ap-only" => InitPreds::ApOnly,
        other => return fail(format!("unknown --init-preds `{other}`")),
    };
    let seed_assumes = match assume.as_str() {
        "on" => true,
        "off" => false,
        other => return fail(format!("bad --assume `{other}`")),
    };
    let cfg = RefineConfig {
        init_preds: init,
        seed_assumes,
        heuristic,
        transition_dependent,
        max_iterations: max_iters,
        search,
    };
    let mut solver = match make_solver(&m, &run.solver) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let result = refinement_search(&m, &cfg, &mut solver);
    let echo = ConfigEcho {
        order: run.order.clone(),
        mode: run.mode.clone(),
        init_preds: init_preds.clone(),
        assumes: seed_assumes,
        heuristic,
        transition_dependent,
        max_iterations: max_iters,
        input: format!("{}[{}]", run.input_mode, run.input_domain),
        solver: solver.backend_name().to_string(),
    };
    if let (Some(dot_path), Verdict::Unreachable(structure)) = (&run.dot, &result.verdict) {
        if let Err(e) = std::fs::write(dot_path, report::dot(&m, structure)) {
            return fail(format!("cannot write {}: {e}", dot_path.display()));
        }
    }
    let run_report = report::run_report(ReportInputs {
        model: &m,
        model_name: path.display().to_string(),
        config: echo,
        report: &result,
        solver: solver.stats(),
    });
    let json = serde_json::to_string_pretty(&run_report).expect("report serializes");
    if let Some(out) = &run.out {
        if let Err(e) = std::fs::write(out, json) {
            return fail(format!("cannot write {}: {e}", out.display()));
        }
    } else {
        println!("{json}");
    }
    ExitCode::from(match result.verdict {
        Verdict::Unreachable(_) => EXIT_UNREACHABLE,
        Verdict::ErrorFound(_) => EXIT_ERROR_FOUND,
        Verdict::Undecided(_) => EXIT_UNDECIDED,
    })
}

fn parse_predicates(m: &Model, text: &str) -> Result<PredicateSet, String> {
    let data_props = property_atoms(m)
        .into_iter()
        .filter(|a| gcmc::abstraction::is_data_atom(a, m));
    let mut phi = PredicateSet::from_atoms(data_props);
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let atom = logic::parse_atom_in(m, part).map_err(|e| format!("--preds: {e}"))?;
        phi.insert(atom);
    }
    Ok(phi)
}

fn cmd_explore(path: PathBuf, preds: String, run: RunFlags) -> ExitCode {
    let m = match load_model(&path) {
        Ok(m) => m,
        Err(e) => return fail(e),
    };
    let phi = match parse_predicates(&m, &preds) {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    let cfg = match search_config(&run) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let mut solver = match make_solver(&m, &run.solver) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let outcome = match alpha_search(&m, &PredicateMap::global(phi), &cfg, &mut solver) {
        Ok(o) => o,
        Err(e) => return fail(e),
    };
    if let Some(dot_path) = &run.dot {
        if let Err(e) = std::fs::write(dot_path, report::dot(&m, &outcome.structure)) {
            return fail(format!("cannot write {}: {e}", dot_path.display()));
        }
    }
    let summary = serde_json::json!({
        "schema_version": report::SCHEMA_VERSION,
        "model": path.display().to_string(),
        "abstract_states": outcome.structure.states.len(),
        "abstract_transitions": outcome.structure.transitions.len(),
        "concrete_states": outcome.stats.concrete_states,
        "states": outcome
            .structure
            .states
            .iter()
            .map(|a| a.display(&m))
            .collect::<Vec<_>>(),
        "new_predicates": outcome
            .new_atoms()
            .iter()
            .map(|a| a.display(&m).to_string())
            .collect::<Vec<_>>(),
        "error_hit": outcome.counterexample.is_some(),
    });
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    if let Some(out) = &run.out {
        if let Err(e) = std::fs::write(out, json) {
            return fail(format!("cannot write {}: {e}", out.display()));
        }
    } else {
        println!("{json}");
    }
    ExitCode::from(if outcome.counterexample.is_some() {
        EXIT_ERROR_FOUND
    } else {
        EXIT_UNREACHABLE
    })
}

fn cmd_oracle(op: OracleOp) -> ExitCode {
    match op {
        OracleOp::Rl { model, bounds } => {
            let m = match load_model(&model) {
                Ok(m) => m,
                Err(e) => return fail(e),
            };
            let lts = oracle::concrete_explore(&m, &explore_bounds(&bounds));
            let mut labelings: Vec<String> = oracle::reachable_labelings(&lts)
                .into_iter()
                .map(|l| {
                    let parts: Vec<String> = l.iter().map(|a| a.display(&m).to_string()).collect();
                    format!("{{{}}}", parts.join(", "))
                })
                .collect();
            labelings.sort();
            println!(
                "{}",
                serde_json::json!({
                    "states": lts.states.len(),
                    "truncated": lts.truncated,
                    "reachable_labelings": labelings,
                })
            );
            ExitCode::from(if lts.truncated {
                EXIT_UNDECIDED
            } else {
                EXIT_UNREACHABLE
            })
        }
        OracleOp::Quotient { model, bounds } => {
            let m = match load_model(&model) {
                Ok(m) => m,
                Err(e) => return fail(e),
            };
            let lts = oracle::concrete_explore(&m, &explore_bounds(&bounds));
            match oracle::bisimulation_quotient(&lts) {
                Ok(blocks) => {
                    let count = blocks
                        .iter()
                        .collect::<std::collections::BTreeSet<_>>()
                        .len();
                    println!(
                        "{}",
                        serde_json::json!({ "states": lts.states.len(), "blocks": count })
                    );
                    ExitCode::from(EXIT_UNREACHABLE)
                }
                Err(e) => {
                    eprintln!("gcmc: {e}");
                    ExitCode::from(EXIT_UNDECIDED)
                }
            }
        }
        OracleOp::Abstraction {
            model,
            preds,
            domain,
            slack,
        } => {
            let m = match load_model(&model) {
                Ok(m) => m,
                Err(e) => return fail(e),
            };
            let phi = match parse_predicates(&m, &preds) {
                Ok(p) => p,
                Err(e) => return fail(e),
            };
            let (lo, hi) = match parse_range(&domain) {
                Ok(r) => r,
                Err(e) => return fail(e),
            };
            let rel = oracle::enumerate_abstraction(&m, &phi, lo, hi, slack);
            let edges = |set: &std::collections::BTreeSet<(usize, usize, usize)>| {
                set.iter()
                    .map(|(a, t, b)| {
                        format!(
                            "{} -[{}]-> {}",
                            rel.cubes[*a].display(&m),
                            m.transition(*t).map(|t| t.name.as_str()).unwrap_or("?"),
                            rel.cubes[*b].display(&m)
                        )
                    })
                    .collect::<Vec<_>>()
            };
            println!(
                "{}",
                serde_json::to_string_pretty(&serde_json::json!({
                    "cubes": rel.cubes.iter().map(|c| c.display(&m)).collect::<Vec<_>>(),
                    "may": edges(&rel.may),
                    "must_plus": edges(&rel.must_plus),
                    "must_minus": edges(&rel.must_minus),
                }))
                .unwrap()
            );
            ExitCode::from(EXIT_UNREACHABLE)
        }
    }
}

fn explore_bounds(b: &BoundFlags) -> oracle::ExploreBounds {
    oracle::ExploreBounds {
        max_states: b.max_states,
        max_depth: b.max_depth,
        input: InputMode::BruteForce(-b.bound, b.bound),
    }
}

/// Runs every bundled benchmark and prints a comparison against the
/// reference results: exact iteration counts and verdicts, state counts
/// within ten percent (they are sensitive to exploration order).
fn cmd_corpus(only: Option<&str>) -> ExitCode {
    println!(
        "{:<12} {:>6} {:>12} {:>34} {:>34}  status",
        "example", "iters", "verdict", "concrete/iter", "abstract/iter"
    );
    let mut all_ok = true;
    for row in corpus::BENCH_ROWS {
        if let Some(filter) = only {
            if !row.name.contains(filter) {
                continue;
            }
        }
        let m = parse_model(row.source).expect("bundled model parses");
        let mut solver = Solver::new(
            Box::new(BuiltinBackend::default()),
            m.vars.iter().map(|v| v.name.clone()).collect(),
        );
        let cfg = RefineConfig {
            seed_assumes: row.assumes,
            max_iterations: if row.expect == ExpectedVerdict::Undecided {
                4
            } else {
                50
            },
            ..Default::default()
        };
        let result = refinement_search(&m, &cfg, &mut solver);
        let verdict_ok = matches!(
            (&result.verdict, row.expect),
            (Verdict::ErrorFound(_), ExpectedVerdict::ErrorFound)
                | (Verdict::Unreachable(_), ExpectedVerdict::Unreachable)
                | (
                    Verdict::Undecided(UndecidedReason::IterationLimit),
                    ExpectedVerdict::Undecided,
                )
        );
        let iters_ok = row
            .iterations
            .map(|n| n == result.iterations_run())
            .unwrap_or(true);
        let conc: Vec<u64> = result
            .iterations
            .iter()
            .map(|i| i.concrete_states)
            .collect();
        let abst: Vec<u64> = result
            .iterations
            .iter()
            .map(|i| i.abstract_states)
            .collect();
        let within = |got: &[u64], want: &[u64]| {
            want.is_empty()
                || (got.len() == want.len()
                    && got.iter().zip(want).all(|(g, w)| {
                        let (g, w) = (*g as f64, *w as f64);
                        (g - w).abs() <= 0.10 * w
                    }))
        };
        let counts_ok = within(&conc, row.concrete) && within(&abst, row.abstract_);
        let ok = verdict_ok && iters_ok && counts_ok;
        all_ok &= ok;
        let fmt_counts = |got: &[u64], want: &[u64]| {
            if want.is_empty() {
                format!("{got:?}")
            } else {
                format!("{got:?} ref {want:?}")
            }
        };
        println!(
            "{:<12} {:>6} {:>12} {:>34} {:>34}  {}",
            row.name,
            result.iterations_run(),
            result.verdict.name(),
            fmt_counts(&conc, row.concrete),
            fmt_counts(&abst, row.abstract_),
            if ok { "match" } else { "MISMATCH" }
        );
    }
    ExitCode::from(if all_ok {
        EXIT_UNREACHABLE
    } else {
        EXIT_UNDECIDED
    })
}
