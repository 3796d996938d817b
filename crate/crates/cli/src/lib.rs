//! The `trace` command: precompute, serve, bench, gen-demo and status.

pub mod bench;
mod table;

use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use trace_core::loader::Dataset;
use trace_core::manifest::resolve_manifest_path;
use trace_core::pipeline::{self, PrecomputeConfig};
use trace_core::synth::{write_demo_bundle, write_line4_fixture, DemoSpec};

pub use bench::{run_bench, BenchConfig, BenchReport};

#[derive(Debug, Parser)]
#[command(
    name = "trace",
    version,
    about = "Per-point quality measures for 2-D embeddings"
)]
pub struct Cli {
    /// Worker threads for numeric work (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build every neighbor graph and metric column and record them in the manifest.
    Precompute(PrecomputeArgs),
    /// Serve a precomputed bundle over HTTP.
    Serve(ServeArgs),
    /// Time the full in-memory precompute on synthetic data; prints JSON.
    Bench(BenchArgs),
    /// Write a synthetic dataset bundle.
    GenDemo(GenDemoArgs),
    /// Report which cache entries are present, missing, stale or corrupt.
    Status(StatusArgs),
}

#[derive(Debug, Args)]
pub struct DataArg {
    /// Dataset directory or its trace.json.
    #[arg(long, env = "TRACE_DATA")]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct PrecomputeArgs {
    #[command(flatten)]
    pub data: DataArg,
    /// Neighborhood sizes, comma separated (default: the manifest's list).
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    /// Default: the manifest's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Recompute even when the cache is current.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub data: DataArg,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: IpAddr,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 5000)]
    pub n: usize,
    #[arg(long, default_value_t = 50)]
    pub d: usize,
    #[arg(long, default_value_t = 5)]
    pub embeddings: usize,
    #[arg(long, default_value_t = 50)]
    pub k: usize,
    #[arg(long, default_value_t = 8)]
    pub clusters: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fixture {
    /// HD x = [0,1,2,10]; embeddings `identity` and `scrambled` (y = [0,10,1,2]).
    Line4,
}

#[derive(Debug, Args)]
pub struct GenDemoArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Default 5000.
    #[arg(long)]
    pub n: Option<usize>,
    /// Default 20.
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long, default_value_t = 8)]
    pub clusters: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Emit a fixed hand-checkable fixture instead of random data.
    #[arg(long, value_enum)]
    pub fixture: Option<Fixture>,
}

#[derive(Debug, Args)]
pub struct StatusArgs {
    #[command(flatten)]
    pub data: DataArg,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] trace_core::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
        }
    }

    /// Machine-readable form written to standard error.
    pub fn to_json(&self) -> serde_json::Value {
        json!({"error": self.kind(), "message": self.to_string()})
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Runs one command, writing its normal output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        // fails only if the pool already exists, e.g. a second run in one process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global();
    }
    match cli.command {
        Command::Precompute(a) => cmd_precompute(a, out),
        Command::Serve(a) => cmd_serve(a),
        Command::Bench(a) => cmd_bench(a, out),
        Command::GenDemo(a) => cmd_gen_demo(a, out),
        Command::Status(a) => cmd_status(a, out),
    }
}

fn open(data: &DataArg) -> CliResult<Dataset> {
    Ok(Dataset::open(&resolve_manifest_path(&data.data))?)
}

fn write_out(out: &mut dyn Write, text: &str) -> CliResult<()> {
    out.write_all(text.as_bytes())
        .map_err(|source| CliError::Io {
            context: "writing output".into(),
            source,
        })
}

fn cmd_precompute(a: PrecomputeArgs, out: &mut dyn Write) -> CliResult<()> {
    let ds = open(&a.data)?;
    let mut config = PrecomputeConfig::from_manifest(&ds.manifest);
    if let Some(k) = a.k {
        config.k_list = k;
    }
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    config.force = a.force;
    let report = pipeline::precompute(&ds, &config)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let ds = Dataset::open(&ds.root.join(trace_core::manifest::MANIFEST_FILE))?;
    let status = pipeline::status(&ds)?;
    let mut text = table::status_table(&status);
    text.push_str(&format!(
        "computed {} column(s), reused {}, built {} graph(s) in {:.2}s\n",
        report.computed.len(),
        report.reused.len(),
        report.graphs_built.len(),
        report.times.total()
    ));
    write_out(out, &text)
}

fn cmd_status(a: StatusArgs, out: &mut dyn Write) -> CliResult<()> {
    let ds = open(&a.data)?;
    let status = pipeline::status(&ds)?;
    let text = if a.json {
        let mut s = serde_json::to_string_pretty(&status).expect("status serializes");
        s.push('\n');
        s
    } else {
        table::status_table(&status)
    };
    write_out(out, &text)
}

fn cmd_bench(a: BenchArgs, out: &mut dyn Write) -> CliResult<()> {
    let report = run_bench(&BenchConfig {
        n: a.n,
        d: a.d,
        embeddings: a.embeddings,
        k: a.k,
        clusters: a.clusters,
        seed: a.seed,
    })?;
    let mut s = serde_json::to_string_pretty(&report).expect("report serializes");
    s.push('\n');
    write_out(out, &s)
}

fn cmd_gen_demo(a: GenDemoArgs, out: &mut dyn Write) -> CliResult<()> {
    let manifest = match a.fixture {
        Some(Fixture::Line4) => {
            if a.n.is_some_and(|n| n != 4) || a.d.is_some_and(|d| d != 1) {
                return Err(CliError::Usage(
                    "the line4 fixture has n = 4 and d = 1".into(),
                ));
            }
            write_line4_fixture(&a.out)?
        }
        None => {
            let defaults = DemoSpec::default();
            write_demo_bundle(
                &a.out,
                &DemoSpec {
                    n: a.n.unwrap_or(defaults.n),
                    d: a.d.unwrap_or(defaults.d),
                    clusters: a.clusters,
                    seed: a.seed,
                },
            )?
        }
    };
    write_out(
        out,
        &format!(
            "wrote {} ({} embedding(s)) to {}\n",
            manifest.name,
            manifest.embeddings.len(),
            a.out.display()
        ),
    )
}

fn cmd_serve(a: ServeArgs) -> CliResult<()> {
    let state = trace_service::ServiceState::load(&a.data.data)?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|source| CliError::Io {
            context: "starting runtime".into(),
            source,
        })?;
    let addr = SocketAddr::new(a.bind, a.port);
    runtime.block_on(async move {
        let listener = trace_service::bind(addr)
            .await
            .map_err(|source| CliError::Io {
                context: format!("binding {addr}"),
                source,
            })?;
        let local = listener.local_addr().map_err(|source| CliError::Io {
            context: "reading bound address".into(),
            source,
        })?;
        eprintln!(
            "serving {} metric column(s) on http://{local}",
            state.column_count()
        );
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        trace_service::serve(listener, Arc::new(state), shutdown)
            .await
            .map_err(|source| CliError::Io {
                context: "serving".into(),
                source,
            })
    })
}
