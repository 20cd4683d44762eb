use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use deva_core::harness::{self, checks, RunConfig, Summary};
use deva_core::Error;

/// Seed-replicated optimizer benchmarks on trace quadratics.
#[derive(Parser)]
#[command(name = "deva", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one config and write the trace CSV and summary JSON.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run a config over a learning-rate grid and report the best.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        lr_grid: Vec<f64>,
        /// Write outputs of the best learning rate here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the randomized property oracles.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run several configs on the same problem and rank them by median final loss.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        configs: Vec<PathBuf>,
        /// Write each run's outputs to `<out>/<optimizer>_<problem>/`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_INVALID_CONFIG: u8 = 2;
const EXIT_ALL_SEEDS_FAILED: u8 = 3;
const EXIT_IO: u8 = 4;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::NumericalBreakdown { .. } => EXIT_ALL_SEEDS_FAILED,
        _ => EXIT_INVALID_CONFIG,
    }
}

fn load(path: &Path) -> Result<RunConfig, Error> {
    let text = std::fs::read_to_string(path)?;
    RunConfig::from_json(&text)
}

fn fmt_loss(s: &Summary) -> String {
    match s.final_loss() {
        Some(q) => format!("{:.6e} [{:.6e}, {:.6e}]", q.median, q.q25, q.q75),
        None => "all seeds failed".to_string(),
    }
}

fn print_row(s: &Summary) {
    println!(
        "{:<22} lr={:<8} seeds {}/{}  final loss {}",
        s.label,
        s.lr,
        s.seeds_ok,
        s.seeds_total,
        fmt_loss(s)
    );
}

fn run(config: &Path, out: &Path) -> Result<u8, Error> {
    let cfg = load(config)?;
    let summary = harness::run_experiment(&cfg)?;
    for p in harness::emit(&cfg, &summary, out)? {
        log::info!("wrote {}", p.display());
    }
    print_row(&summary);
    Ok(if summary.all_failed() {
        EXIT_ALL_SEEDS_FAILED
    } else {
        0
    })
}

fn sweep(config: &Path, grid: &[f64], out: Option<&Path>) -> Result<u8, Error> {
    let cfg = load(config)?;
    let result = harness::sweep(&cfg, grid)?;
    for (i, s) in result.runs.iter().enumerate() {
        let mark = if i == result.best { "*" } else { " " };
        print!("{mark} ");
        print_row(s);
    }
    let best = result.best();
    if let Some(dir) = out {
        let mut best_cfg = cfg.clone();
        best_cfg.optimizer.lr = Some(best.lr);
        harness::emit(&best_cfg, best, dir)?;
    }
    Ok(if best.all_failed() {
        EXIT_ALL_SEEDS_FAILED
    } else {
        0
    })
}

fn check(seed: u64) -> u8 {
    let outcomes = checks::all(seed);
    for c in &outcomes {
        println!("{c}");
    }
    if outcomes.iter().all(|c| c.passed) {
        0
    } else {
        EXIT_CHECK_FAILED
    }
}

fn compare(paths: &[PathBuf], out: Option<&Path>) -> Result<u8, Error> {
    let cfgs = paths
        .iter()
        .map(|p| load(p))
        .collect::<Result<Vec<_>, _>>()?;
    let table = harness::compare_suite(&cfgs)?;
    for (rank, &i) in table.ordering.iter().enumerate() {
        print!("{:>2}. ", rank + 1);
        print_row(&table.rows[i]);
    }
    if let Some(dir) = out {
        for (cfg, s) in cfgs.iter().zip(&table.rows) {
            harness::emit(cfg, s, &dir.join(&s.label))?;
        }
    }
    Ok(if table.rows.iter().all(Summary::all_failed) {
        EXIT_ALL_SEEDS_FAILED
    } else {
        0
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, out } => run(config, out),
        Command::Sweep {
            config,
            lr_grid,
            out,
        } => sweep(config, lr_grid, out.as_deref()),
        Command::Check { seed } => Ok(check(*seed)),
        Command::Compare { configs, out } => compare(configs, out.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
