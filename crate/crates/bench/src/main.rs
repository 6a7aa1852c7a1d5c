use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{info, warn};
use randla::io::{save_vector, write_matrix_market, write_matrix_market_coordinate};
use randla::RngKey;
use randla_bench::config::{ExperimentConfig, Family, MatrixConfig};
use randla_bench::runner::{leverage_scores, run_trials, summarize, write_reports, write_scores, Problem};
use randla_bench::BenchError;

#[derive(Parser)]
#[command(name = "randla-bench", version, about = "Run randomized linear algebra experiments")]
struct Cli {
    /// Base seed; overrides the config (decimal or 0x hex).
    #[arg(long, global = true, value_parser = parse_seed)]
    seed: Option<RngKey>,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run trials on this many threads.
    #[arg(long, global = true, default_value_t = 1)]
    parallel: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Default, clap::Args)]
struct Inputs {
    /// Matrix Market file to use instead of the generated matrix.
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Right-hand side vector file.
    #[arg(long)]
    rhs: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the config's matrix and right-hand side.
    Gen {
        /// Write sparse coordinate format instead of a dense array.
        #[arg(long)]
        coordinate: bool,
    },
    /// Run any driver.
    Run(Inputs),
    Leverage(Inputs),
    Trace(Inputs),
    Lowrank(Inputs),
    Lstsq(Inputs),
    Qrcp(Inputs),
    Bootstrap(Inputs),
}

fn parse_seed(text: &str) -> Result<RngKey, String> {
    text.parse::<RngKey>().map_err(|e| e.to_string())
}

fn read_config(path: Option<&Path>) -> Result<String, BenchError> {
    let path = path.ok_or_else(|| BenchError::Config("--config is required".into()))?;
    fs::read_to_string(path).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))
}

fn generate(cli: &Cli, coordinate: bool) -> Result<(), BenchError> {
    let text = read_config(cli.config.as_deref())?;
    // Accept either a full experiment or just its matrix section.
    let mut matrix = match ExperimentConfig::from_json(&text) {
        Ok(cfg) => cfg.matrix,
        Err(_) => serde_json::from_str::<MatrixConfig>(&text).map_err(|e| BenchError::Config(e.to_string()))?,
    };
    if let Some(seed) = cli.seed {
        matrix.spec.seed = seed;
    }
    matrix.spec.validate().map_err(|e| BenchError::Config(e.to_string()))?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out).map_err(|e| BenchError::Runtime(e.to_string()))?;
    let problem = Problem::build(&matrix, matrix.spec.seed)?;
    let file = fs::File::create(out.join("matrix.mtx")).map_err(|e| BenchError::Runtime(e.to_string()))?;
    let w = std::io::BufWriter::new(file);
    if coordinate { write_matrix_market_coordinate(w, &problem.a) } else { write_matrix_market(w, &problem.a) }
        .map_err(|e| BenchError::Runtime(e.to_string()))?;
    save_vector(&out.join("rhs.txt"), &problem.b).map_err(|e| BenchError::Runtime(e.to_string()))?;
    info!("wrote {}x{} matrix to {}", problem.a.nrows(), problem.a.ncols(), out.display());
    Ok(())
}

fn run(cli: &Cli, family: Option<Family>, inputs: &Inputs) -> Result<ExitCode, BenchError> {
    let mut cfg = ExperimentConfig::from_json(&read_config(cli.config.as_deref())?)?;
    if let Some(f) = family {
        if cfg.driver.family() != f {
            return Err(BenchError::Config(format!(
                "driver belongs to `{}`, not `{}`",
                cfg.driver.family().name(),
                f.name()
            )));
        }
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if inputs.matrix.is_some() {
        cfg.matrix.path = inputs.matrix.clone();
    }
    if inputs.rhs.is_some() {
        cfg.matrix.rhs_path = inputs.rhs.clone();
    }
    if cli.parallel == 0 {
        return Err(BenchError::Config("--parallel must be at least 1".into()));
    }
    let out = cli.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("bench-out"));
    cfg.output = Some(out.clone());

    let records = run_trials(&cfg, cli.parallel)?;
    let summary = summarize(&cfg, &records);
    write_reports(&out, &records, &summary)?;
    if family == Some(Family::Leverage) && cfg.trials > 0 {
        let problem = Problem::build(&cfg.matrix, cfg.matrix.spec.seed)?;
        match leverage_scores(&cfg.driver, &problem, cfg.seed.derive(0)) {
            Ok(scores) => write_scores(&out.join("scores.csv"), &scores)?,
            Err(e) => warn!("no scores written: {e}"),
        }
    }
    for r in records.iter().filter(|r| r.status != "ok") {
        warn!("trial {} failed: {}", r.trial, r.message);
    }
    info!("{} of {} trials completed; reports in {}", summary.completed, summary.trials, out.display());
    Ok(if summary.failed == 0 {
        ExitCode::SUCCESS
    } else if summary.completed == 0 {
        ExitCode::from(3)
    } else {
        ExitCode::from(1)
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen { coordinate } => generate(&cli, *coordinate).map(|_| ExitCode::SUCCESS),
        Command::Run(i) => run(&cli, None, i),
        Command::Leverage(i) => run(&cli, Some(Family::Leverage), i),
        Command::Trace(i) => run(&cli, Some(Family::Trace), i),
        Command::Lowrank(i) => run(&cli, Some(Family::LowRank), i),
        Command::Lstsq(i) => run(&cli, Some(Family::Lstsq), i),
        Command::Qrcp(i) => run(&cli, Some(Family::Qrcp), i),
        Command::Bootstrap(i) => run(&cli, Some(Family::Bootstrap), i),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("randla-bench: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
