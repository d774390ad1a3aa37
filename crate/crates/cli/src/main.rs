use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hon_core::pipeline::{NetworkSpec, Pipeline, RunConfig};
use hon_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "hon",
    version,
    about = "Higher-order flow networks from particle traces"
)]
struct Cli {
    /// TOML run configuration; protocol defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config's `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Root random seed (overrides `corpus.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Select {
    /// Builder name: fon, fon+, fixed (ref), fixed+, var (semantic), var+, flowhon.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    order: Option<usize>,
}

impl Select {
    fn spec(&self) -> Result<Option<NetworkSpec>> {
        match (&self.kind, self.order) {
            (Some(k), order) => Ok(Some(NetworkSpec::new(k, order))),
            (None, None) => Ok(None),
            (None, Some(_)) => Err(Error::Config("--order needs --kind".into())),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Trace particles and write the train/validation/test block sequences.
    Trace,
    /// Build one network, or every configured one.
    Build(Select),
    /// Multi-step density error of built networks on the test split.
    EvalDensity(Select),
    /// Markov-time community sweep of built networks.
    EvalCommunities(Select),
    /// Write the exploration bundle for one network.
    ExportUi {
        #[command(flatten)]
        select: Select,
        /// Partition JSON used to color nodes.
        #[arg(long)]
        partition: Option<PathBuf>,
    },
    /// Run every stage.
    All,
}

fn pipeline(cli: &Cli) -> Result<Pipeline> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.corpus.seed = seed;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    Pipeline::new(config, out)
}

fn filter(select: &Select) -> Result<Option<Vec<NetworkSpec>>> {
    Ok(select.spec()?.map(|s| vec![s]))
}

fn run(cli: &Cli) -> Result<()> {
    let p = pipeline(cli)?;
    match &cli.command {
        Command::Trace => {
            let m = p.trace()?;
            let c = m.corpus()?;
            println!("corpus {} -> {}", c.hash, p.out.join("corpus").display());
        }
        Command::Build(select) => {
            let slugs = match select.spec()? {
                Some(spec) => vec![p.build(&spec)?],
                None => p.build_all()?,
            };
            for s in slugs {
                println!("built {s}");
            }
        }
        Command::EvalDensity(select) => {
            for r in p.eval_density(filter(select)?.as_deref())? {
                println!(
                    "{:<16} nodes {:>6}  total {:.4}  mean {:.4}",
                    r.network, r.size, r.total, r.mean
                );
            }
        }
        Command::EvalCommunities(select) => {
            for s in p.eval_communities(filter(select)?.as_deref())? {
                let front = s.points.iter().filter(|p| p.pareto).count();
                println!(
                    "{:<16} {} points, {} on the Pareto front",
                    s.network,
                    s.points.len(),
                    front
                );
            }
        }
        Command::ExportUi { select, partition } => {
            let spec = select.spec()?;
            let b = p.export_ui(spec.as_ref(), partition.as_deref())?;
            println!(
                "exported {}: {} nodes, {} edges, {} streamlines",
                b.network,
                b.nodes.len(),
                b.edges.len(),
                b.streamlines.len()
            );
        }
        Command::All => {
            p.run_all()?;
            println!("all stages written to {}", p.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}
