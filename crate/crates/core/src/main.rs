use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fmsurvival::pipeline::{
    cmd_audit, cmd_evaluate, cmd_prepare, cmd_report, cmd_run, DatasetKind, ExperimentConfig,
};
use fmsurvival::ranker::Loss;
use fmsurvival::survival::survival_table;
use fmsurvival::{Error, Result};

#[derive(Parser)]
#[command(name = "fmsurvival", version, about = "FM recommenders with user attributes and list-based attribute audits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load, filter and split the corpus into the cache; print statistics.
    Prepare(Options),
    /// Full protocol: search, train, recommend, evaluate, audit, report.
    Run(Options),
    /// Recompute metrics.tsv from existing lists.
    Evaluate(Options),
    /// Recompute audit.tsv from existing lists.
    Audit(Options),
    /// Rebuild the survival table from metrics.tsv and audit.tsv.
    Report(Options),
}

#[derive(Args)]
struct Options {
    /// Experiment config (TOML).
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<DatasetKind>,
    #[arg(long)]
    data_path: Option<PathBuf>,
    #[arg(long)]
    profile_path: Option<PathBuf>,
    /// Comma-separated attributes, each trained in its own variant.
    #[arg(long, value_delimiter = ',')]
    attributes: Option<Vec<String>>,
    #[arg(long)]
    loss: Option<Loss>,
    /// Recommendation list length.
    #[arg(short, long)]
    n: Option<usize>,
    /// Seed; repeat for several runs.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
    /// Increase log detail (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

impl Options {
    fn resolve(self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, self.dataset, &self.data_path) {
            (Some(path), _, _) => ExperimentConfig::from_path(path)?,
            (None, Some(kind), Some(data)) => ExperimentConfig::new(kind, data),
            _ => {
                return Err(Error::Config(
                    "pass --config, or both --dataset and --data-path".into(),
                ))
            }
        };
        if self.config.is_some() {
            if let Some(kind) = self.dataset {
                cfg.dataset = kind;
            }
            if let Some(p) = self.data_path {
                cfg.data_path = p;
            }
        }
        if let Some(p) = self.profile_path {
            cfg.profile_path = Some(p);
        }
        if let Some(a) = self.attributes {
            cfg.attributes = a.into_iter().filter(|s| !s.is_empty()).collect();
        }
        if let Some(loss) = self.loss {
            cfg.loss = loss;
        }
        if let Some(n) = self.n {
            cfg.n = n;
        }
        if !self.seeds.is_empty() {
            cfg.seeds = self.seeds;
        }
        if let Some(dir) = self.output_dir {
            cfg.output_dir = dir;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Prepare(opts) => {
            init_logging(opts.verbose);
            let cfg = opts.resolve()?;
            let prep = cmd_prepare(&cfg)?;
            print!("{}", prep.stats_table(cfg.dataset));
            println!(
                "corpus {} ({}) at {}",
                prep.key,
                if prep.reused { "cached" } else { "built" },
                prep.dir.display()
            );
        }
        Command::Run(opts) => {
            init_logging(opts.verbose);
            let cfg = opts.resolve()?;
            for out in cmd_run(&cfg)? {
                println!("seed {} -> {}", out.seed, out.dir.display());
                print!("{}", survival_table(&out.survival));
            }
        }
        Command::Evaluate(opts) => {
            init_logging(opts.verbose);
            let cfg = opts.resolve()?;
            let rows: usize = cmd_evaluate(&cfg)?.iter().map(Vec::len).sum();
            println!("{rows} metric rows written");
        }
        Command::Audit(opts) => {
            init_logging(opts.verbose);
            let cfg = opts.resolve()?;
            let rows: usize = cmd_audit(&cfg)?.iter().map(Vec::len).sum();
            println!("{rows} audit rows written");
        }
        Command::Report(opts) => {
            init_logging(opts.verbose);
            let cfg = opts.resolve()?;
            for report in cmd_report(&cfg)? {
                print!("{}", survival_table(&report));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
