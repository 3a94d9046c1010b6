//! Argument parsing and dispatch for the `didgraph` binary.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use didgraph::bench::BenchConfig;
use didgraph::datagen::{Layout, Mode};
use didgraph::graph::CausalDiagram;
use didgraph::scm::CoefficientAssignment;
use serde::Serialize;
use thiserror::Error;

use crate::ops::{self, GraphSource};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Analysis(#[from] didgraph::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Analysis(_) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Analysis(_) => "analysis",
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "didgraph", about = "Causal diagrams and estimator benchmarks for difference-in-differences")]
pub struct Cli {
    /// Report errors as JSON on stderr and print trace results as JSON.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    /// Graph JSON file.
    #[arg(short = 'g', long = "graph", conflicts_with = "scenario")]
    pub graph: Option<PathBuf>,
    /// Shipped scenario name.
    #[arg(long)]
    pub scenario: Option<String>,
}

#[derive(Debug, Args)]
pub struct Endpoints {
    #[arg(long)]
    pub treatment: Option<String>,
    #[arg(long)]
    pub outcome: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Gaussian,
    Bernoulli,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LayoutArg {
    Long,
    Wide,
    Differenced,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a diagram; exits 0 only when there are no diagnostics.
    Validate(GraphArgs),
    /// Project a natural diagram to the compact form.
    Compact {
        #[command(flatten)]
        graph: GraphArgs,
        /// Outcome-change node to keep; all of them when absent.
        #[arg(long)]
        delta: Option<String>,
        #[arg(short = 'o', long)]
        output: Option<PathBuf>,
    },
    /// Minimal sufficient adjustment sets.
    Sets {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        endpoints: Endpoints,
        /// Restrict the search to these nodes (comma separated).
        #[arg(long, value_delimiter = ',')]
        candidates: Option<Vec<String>>,
    },
    /// Path-traced covariance, or a partial regression coefficient with `--given`.
    Trace {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
        #[arg(long, value_delimiter = ',')]
        given: Vec<String>,
        /// Coefficient assignment JSON file.
        #[arg(long)]
        assign: Option<PathBuf>,
    },
    /// Backdoor verdict for one adjustment set.
    Identify {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        endpoints: Endpoints,
        #[arg(long, value_delimiter = ',', default_value = "")]
        set: Vec<String>,
    },
    /// Simulate a panel from a shipped scenario.
    Simulate {
        #[arg(long)]
        scenario: String,
        #[arg(short = 'n', long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "bernoulli")]
        mode: ModeArg,
        #[arg(long, value_enum, default_value = "long")]
        layout: LayoutArg,
        #[arg(short = 'o', long)]
        output: Option<PathBuf>,
    },
    /// Run the Monte Carlo benchmark.
    Bench {
        /// Benchmark config JSON; defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// CSV report path (overrides the config).
        #[arg(short = 'o', long)]
        output: Option<PathBuf>,
        #[arg(long)]
        json_out: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(short = 'n', long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8787)]
        port: u16,
        /// Origin allowed by CORS; any origin when absent.
        #[arg(long)]
        allow_origin: Option<String>,
    },
}

fn version() -> String {
    format!("{} (schema {})", env!("CARGO_PKG_VERSION"), didgraph::SCHEMA_VERSION)
}

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    serde_json::from_str(&read(path)?).map_err(|e| CliError::Usage(format!("malformed JSON in {}: {e}", path.display())))
}

impl GraphArgs {
    fn source(&self) -> CliResult<GraphSource> {
        match (&self.graph, &self.scenario) {
            (Some(p), None) => Ok(GraphSource { graph: Some(parse_json::<CausalDiagram>(p)?), scenario: None }),
            (None, Some(s)) => Ok(GraphSource { graph: None, scenario: Some(s.clone()) }),
            _ => Err(CliError::Usage("give a graph with -g FILE or --scenario NAME".into())),
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable output")
}

fn write_or_print(output: Option<&Path>, text: &str, out: &mut dyn Write) -> CliResult<()> {
    match output {
        Some(p) => std::fs::write(p, text).map_err(|e| didgraph::Error::Io(e).into()),
        None => writeln!(out, "{}", text.trim_end()).map_err(|e| didgraph::Error::Io(e).into()),
    }
}

fn execute(cli: Cli, out: &mut dyn Write) -> CliResult<u8> {
    let io = |e: std::io::Error| CliError::Analysis(e.into());
    match cli.command {
        Command::Validate(g) => {
            let diagnostics = ops::validate(&g.source()?.resolve()?);
            writeln!(out, "{}", to_json(&diagnostics)).map_err(io)?;
            return Ok(if diagnostics.is_empty() { 0 } else { 1 });
        }
        Command::Compact { graph, delta, output } => {
            let req = ops::CompactRequest { source: graph.source()?, delta };
            write_or_print(output.as_deref(), &ops::compact_graph(&req)?.to_json(), out)?;
        }
        Command::Sets { graph, endpoints, candidates } => {
            let req = ops::SetsRequest {
                source: graph.source()?,
                treatment: endpoints.treatment,
                outcome: endpoints.outcome,
                candidates,
            };
            writeln!(out, "{}", serde_json::to_string(&ops::sets(&req)?).expect("sets serialize")).map_err(io)?;
        }
        Command::Trace { graph, from, to, given, assign } => {
            let assignment = assign.as_deref().map(parse_json::<CoefficientAssignment>).transpose()?;
            let req = ops::TraceRequest { source: graph.source()?, from, to, given, assignment };
            let result = ops::trace_path(&req)?;
            if cli.json {
                writeln!(out, "{}", to_json(&result)).map_err(io)?;
            } else {
                if let Some(e) = &result.expression {
                    writeln!(out, "{e}").map_err(io)?;
                }
                if let Some(v) = result.value {
                    writeln!(out, "{v}").map_err(io)?;
                }
            }
        }
        Command::Identify { graph, endpoints, set } => {
            let req = ops::IdentifyRequest {
                source: graph.source()?,
                treatment: endpoints.treatment,
                outcome: endpoints.outcome,
                set: set.into_iter().filter(|s| !s.is_empty()).collect(),
            };
            writeln!(out, "{}", to_json(&ops::identify(&req)?)).map_err(io)?;
        }
        Command::Simulate { scenario, n, seed, mode, layout, output } => {
            let req = ops::SimulateRequest {
                scenario,
                n,
                seed,
                mode: match mode {
                    ModeArg::Gaussian => Mode::Gaussian,
                    ModeArg::Bernoulli => Mode::Bernoulli,
                },
                layout: match layout {
                    LayoutArg::Long => Layout::Long,
                    LayoutArg::Wide => Layout::Wide,
                    LayoutArg::Differenced => Layout::Differenced,
                },
            };
            write_or_print(output.as_deref(), &ops::simulate_csv(&req)?, out)?;
        }
        Command::Bench { config, output, json_out, svg, reps, n, seed } => {
            let mut cfg: BenchConfig = match config {
                Some(p) => parse_json(&p)?,
                None => BenchConfig::default(),
            };
            cfg.reps = reps.unwrap_or(cfg.reps);
            cfg.n = n.unwrap_or(cfg.n);
            cfg.seed = seed.unwrap_or(cfg.seed);
            if output.is_some() {
                cfg.outputs.csv = output;
            }
            if json_out.is_some() {
                cfg.outputs.json = json_out;
            }
            if svg.is_some() {
                cfg.outputs.svg = svg;
            }
            let report = ops::bench(&cfg, &AtomicBool::new(false))?;
            report.emit(&cfg.outputs)?;
            if cfg.outputs.csv.is_none() {
                write!(out, "{}", report.to_csv_string()?).map_err(io)?;
            }
        }
        Command::Serve { port, allow_origin } => {
            let runtime = tokio::runtime::Runtime::new().map_err(io)?;
            runtime.block_on(crate::server::serve(port, allow_origin)).map_err(io)?;
        }
    }
    Ok(0)
}

/// Parses `args` and runs the command, writing results to `out` and errors
/// to `err`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let json = args.iter().any(|a| a == "--json");
    let matches = match Cli::command().version(version()).try_get_matches_from(&args) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{}", e.render());
                return 0;
            }
            report(&CliError::Usage(e.render().to_string()), json, err);
            return 2;
        }
    };
    let result = Cli::from_arg_matches(&matches)
        .map_err(|e| CliError::Usage(e.to_string()))
        .and_then(|cli| execute(cli, out));
    match result {
        Ok(code) => code,
        Err(e) => {
            report(&e, json, err);
            e.exit_code()
        }
    }
}

fn report(e: &CliError, json: bool, err: &mut dyn Write) {
    let _ = if json {
        let body = serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string().trim_end() } });
        writeln!(err, "{body}")
    } else {
        writeln!(err, "error: {}", e.to_string().trim_end().trim_start_matches("error: "))
    };
}
