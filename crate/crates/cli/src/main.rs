//! `ddbd`: generate, check, inspect and solve stochastic unsplittable flow
//! instances.
//!
//! Exit codes: 0 success, 1 infeasible, 2 time limit, 64 usage error,
//! 65 unreadable or invalid instance, 70 internal solver failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use ddbd::diagram::build_relaxed;
use ddbd::engine::{self, EngineTolerances, SolverConfig};
use ddbd::genio::{self, GeneratorParams};
use ddbd::model::{validate, Instance, NodeRole};
use ddbd::oracle::{self, OracleConfig};
use ddbd::report::{Phase, SolveReport, Termination};
use ddbd::transform::NsnmIndexing;

const EXIT_INFEASIBLE: u8 = 1;
const EXIT_TIME_LIMIT: u8 = 2;
const EXIT_USAGE: u8 = 64;
const EXIT_DATA: u8 = 65;
const EXIT_SOFTWARE: u8 = 70;

#[derive(Parser)]
#[command(
    name = "ddbd",
    version,
    about = "Decision-diagram Benders solver for stochastic unsplittable flow"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random instance as JSON.
    Generate {
        #[arg(long)]
        nodes: usize,
        #[arg(long)]
        scenarios: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.4)]
        density: f64,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve an instance and print the matching, flows and bound trajectory.
    Solve {
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::DdBd)]
        method: Method,
        /// Maximum diagram width; 0 compiles exact diagrams.
        #[arg(long, default_value_t = 64)]
        width_limit: usize,
        /// Wall-clock limit in seconds.
        #[arg(long)]
        time_limit: Option<f64>,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        parallelism: usize,
        /// Absolute optimality tolerance.
        #[arg(long, default_value_t = EngineTolerances::default().absolute)]
        tolerance: f64,
        #[arg(long, value_enum, default_value_t = LogFormat::Text)]
        log: LogFormat,
        /// Write the full report as JSON.
        #[arg(long)]
        out_report: Option<PathBuf>,
        /// Write the root relaxed diagram in Graphviz format (debugging aid).
        #[arg(long)]
        dump_dot: Option<PathBuf>,
    },
    /// Check an instance file against the model rules.
    Validate { instance: PathBuf },
    /// Print a short summary of an instance.
    Stats { instance: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    DdBd,
    Enum,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum LogFormat {
    Text,
    Csv,
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl ToString) -> Self {
        Failure {
            code,
            message: message.to_string(),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("NSNM_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Generate {
            nodes,
            scenarios,
            seed,
            density,
            out,
        } => {
            let params = GeneratorParams {
                nodes,
                scenarios,
                seed,
                density,
            };
            let instance = genio::generate(&params).map_err(|e| Failure::new(EXIT_USAGE, e))?;
            match out {
                Some(path) => genio::write_instance(&instance, &path)
                    .map_err(|e| Failure::new(EXIT_SOFTWARE, e))?,
                None => print!("{}", genio::to_json(&instance)),
            }
            Ok(0)
        }
        Command::Validate { instance } => {
            let instance = load(&instance)?;
            let violations = validate(&instance);
            if violations.is_empty() {
                println!("ok");
                Ok(0)
            } else {
                for v in &violations {
                    println!("{v}");
                }
                Ok(EXIT_DATA)
            }
        }
        Command::Stats { instance } => {
            let instance = load(&instance)?;
            print_stats(&instance);
            Ok(0)
        }
        Command::Solve {
            instance,
            method,
            width_limit,
            time_limit,
            parallelism,
            tolerance,
            log,
            out_report,
            dump_dot,
        } => {
            let instance = load(&instance)?;
            let violations = validate(&instance);
            if let Some(v) = violations.first() {
                return Err(Failure::new(EXIT_DATA, format!("invalid instance: {v}")));
            }
            if tolerance.is_nan() || tolerance < 0.0 {
                return Err(Failure::new(EXIT_USAGE, "tolerance must be non-negative"));
            }
            let time_limit = match time_limit {
                Some(t) if t.is_nan() || t <= 0.0 || t.is_infinite() => {
                    return Err(Failure::new(
                        EXIT_USAGE,
                        "time limit must be a positive number of seconds",
                    ))
                }
                t => t.map(Duration::from_secs_f64),
            };
            let width = (width_limit > 0).then_some(width_limit);
            if let Some(path) = dump_dot {
                let idx = NsnmIndexing::new(&instance.network);
                let diagram = build_relaxed(&instance, &idx, width.unwrap_or(usize::MAX));
                fs::write(&path, diagram.to_dot())
                    .map_err(|e| Failure::new(EXIT_SOFTWARE, format!("{}: {e}", path.display())))?;
            }
            let report = match method {
                Method::DdBd => {
                    let config = SolverConfig {
                        width_limit: width,
                        tolerances: EngineTolerances {
                            absolute: tolerance,
                            ..EngineTolerances::default()
                        },
                        time_limit,
                        parallelism,
                    };
                    engine::solve_observed(&instance, &config, &mut |e| log::info!("{e:?}"))
                        .map_err(|e| Failure::new(EXIT_SOFTWARE, e))?
                }
                Method::Enum => {
                    let config = OracleConfig {
                        parallelism,
                        ..OracleConfig::default()
                    };
                    oracle::solve_exhaustive(&instance, &config)
                        .map_err(|e| Failure::new(EXIT_SOFTWARE, e))?
                }
            };
            print_report(&report, log);
            if let Some(path) = out_report {
                let text = serde_json::to_string_pretty(&report).expect("reports serialize");
                fs::write(&path, text + "\n")
                    .map_err(|e| Failure::new(EXIT_SOFTWARE, format!("{}: {e}", path.display())))?;
            }
            Ok(match report.termination {
                Termination::Optimal => 0,
                Termination::Infeasible => EXIT_INFEASIBLE,
                Termination::TimeLimit => EXIT_TIME_LIMIT,
            })
        }
    }
}

fn load(path: &Path) -> Result<Instance, Failure> {
    genio::read_instance(path).map_err(|e| Failure::new(EXIT_DATA, e))
}

fn print_stats(instance: &Instance) {
    let net = &instance.network;
    let count = |role| net.nodes_with_role(role).count();
    let idx = NsnmIndexing::new(net);
    println!("nodes: {}", net.node_count());
    println!("  supply: {}", count(NodeRole::Supply));
    println!("  demand: {}", count(NodeRole::Demand));
    println!("  interior: {}", count(NodeRole::Interior));
    println!("arcs: {}", net.arc_count());
    println!("no-split no-merge nodes: {}", net.nsnm_nodes().len());
    println!("matchings: {}", idx.total_matching_count());
    println!("scenarios: {}", instance.scenarios.len());
    println!("gamma: {}", instance.gamma);
}

fn print_report(report: &SolveReport, format: LogFormat) {
    let status = match report.termination {
        Termination::Optimal => "optimal",
        Termination::TimeLimit => "time_limit",
        Termination::Infeasible => "infeasible",
    };
    println!("status: {status}");
    if let Some(v) = report.value {
        println!("value: {v}");
    }
    if let Some(u) = report.upper_bound {
        println!("upper_bound: {u}");
    }
    if let Some(w) = &report.w {
        let text: Vec<String> = w.iter().map(u32::to_string).collect();
        println!("matching: {}", text.join(" "));
    }
    for s in &report.scenarios {
        let total: f64 = s.flows.iter().sum();
        let used = s.flows.iter().filter(|f| f.abs() > 1e-9).count();
        println!(
            "scenario {}: value {} total flow {} arcs used {}",
            s.scenario, s.value, total, used
        );
    }
    let st = &report.stats;
    println!(
        "stats: iterations {} nodes {} optimality_cuts {} feasibility_cuts {} lp_solves {} max_width {} seconds {:.3}",
        st.iterations, st.nodes_explored, st.optimality_cuts, st.feasibility_cuts, st.lp_solves, st.max_width, st.wall_time_secs
    );
    match format {
        LogFormat::Csv => print!("{}", report.trajectory_csv()),
        LogFormat::Text => {
            for e in &report.trajectory {
                let phase = match e.phase {
                    Phase::Restricted => "restricted",
                    Phase::Relaxed => "relaxed",
                };
                let incumbent = e.incumbent.map_or("-".to_string(), |v| v.to_string());
                println!(
                    "iter {} {phase} node {} bound {} incumbent {incumbent} upper {}",
                    e.iteration, e.node, e.bound, e.upper_bound
                );
            }
        }
    }
}
