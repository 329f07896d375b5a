//! `mechrom` — run reduced-order-model experiments from a TOML config.
//!
//! Exit status: 0 success, 1 usage/config error, 2 data or format error, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mechrom::experiment::{self, ExperimentConfig, Layout, Method, Overrides, StageError};
use mechrom::{Error, Execution};

#[derive(Parser, Debug)]
#[command(name = "mechrom", version, about = "Second-order reduced models: simulate, reduce, infer, evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the full model and write training/test snapshots.
    Simulate(Common),
    /// Compute the POD basis from the training snapshots.
    Basis(Common),
    /// Unconstrained operator inference with λ selection.
    Infer(Common),
    /// Operator inference with symmetric positive definite operators.
    InferConstrained(Common),
    /// Simulate the reduced models on the test horizon and write error series.
    Evaluate(Common),
    /// All of the above in order.
    Run(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Methods to run, comma separated: pod, opinf, copinf.
    #[arg(long, value_delimiter = ',')]
    method: Option<Vec<String>>,
    /// Fixed reduced dimension.
    #[arg(long, conflicts_with = "tol")]
    rank: Option<usize>,
    /// Singular-value tolerance for choosing the reduced dimension.
    #[arg(long)]
    tol: Option<f64>,
    /// Single regularization value instead of the grid.
    #[arg(long)]
    lambda: Option<f64>,
    /// Definiteness margin for constrained inference.
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run all work on the calling thread.
    #[arg(long)]
    sequential: bool,
}

enum Failure {
    Usage(String),
    Stage(StageError),
}

impl From<StageError> for Failure {
    fn from(e: StageError) -> Self {
        Failure::Stage(e)
    }
}

fn load(common: &Common) -> Result<(ExperimentConfig, Layout), Failure> {
    let mut cfg = ExperimentConfig::load(&common.config).map_err(|e| Failure::Usage(e.to_string()))?;
    let methods = match &common.method {
        Some(names) => Some(
            names
                .iter()
                .map(|n| Method::parse(n))
                .collect::<Result<Vec<_>, Error>>()
                .map_err(|e| Failure::Usage(e.to_string()))?,
        ),
        None => None,
    };
    let overrides = Overrides {
        methods,
        rank: common.rank,
        tol: common.tol,
        lambda: common.lambda,
        omega: common.omega,
        seed: common.seed,
        output_dir: common.out.clone(),
    };
    cfg.apply(&overrides).map_err(|e| Failure::Usage(e.to_string()))?;
    let root = cfg
        .output_dir
        .clone()
        .ok_or_else(|| Failure::Usage("no output directory: pass --out or set output_dir".into()))?;
    Ok((cfg, Layout::new(root)))
}

fn execute(command: Command) -> Result<(), Failure> {
    let (common, stage): (&Common, &str) = match &command {
        Command::Simulate(c) => (c, "simulate"),
        Command::Basis(c) => (c, "basis"),
        Command::Infer(c) => (c, "infer"),
        Command::InferConstrained(c) => (c, "infer-constrained"),
        Command::Evaluate(c) => (c, "evaluate"),
        Command::Run(c) => (c, "run"),
    };
    let (cfg, layout) = load(common)?;
    let exec = if common.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    log::debug!("stage {stage} into {}", layout.root.display());
    match stage {
        "simulate" => experiment::stage_simulate(&cfg, &layout)?,
        "basis" => {
            let r = experiment::stage_basis(&cfg, &layout)?;
            println!("rank {r}");
        }
        "infer" => {
            let lambda = experiment::stage_infer(&cfg, &layout, exec)?;
            println!("lambda {lambda:e}");
        }
        "infer-constrained" => {
            experiment::stage_infer_constrained(&cfg, &layout)?;
        }
        "evaluate" => print_summary(&experiment::stage_evaluate(&cfg, &layout, exec)?),
        _ => print_summary(&experiment::run(&cfg, &layout, exec)?),
    }
    Ok(())
}

fn print_summary(rows: &[experiment::SummaryRow]) {
    for row in rows {
        println!(
            "{:<7} r={:<3} max_eps={:.3e} (train {:.3e}, test {:.3e}) stable={}",
            row.method.name(),
            row.rank,
            row.max_eps,
            row.max_eps_train,
            row.max_eps_test,
            row.stable
        );
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Stage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
