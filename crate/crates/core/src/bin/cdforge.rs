use std::path::PathBuf;
use std::process::ExitCode;

use cdforge::experiment::{ensure_writable, run, summary_table, write_outputs, ExperimentConfig, EXPERIMENTS};
use clap::Parser;

/// Run a counterdiabatic-driving experiment from a JSON config.
#[derive(Parser, Debug)]
#[command(name = "cdforge", version)]
struct Cli {
    /// ising-bench, mps-bench, trotter-cost, scaling, predict-tp or dump-coefficients
    #[arg(value_parser = clap::builder::PossibleValuesParser::new(EXPERIMENTS))]
    experiment: String,
    #[arg(long)]
    config: PathBuf,
    /// output directory (overrides `output_dir` in the config)
    #[arg(long)]
    out: Option<PathBuf>,
    /// worker threads (overrides `workers` in the config)
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let mut cfg = match ExperimentConfig::load(&cli.config, Some(&cli.experiment)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("cdforge: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(k) = cli.workers {
        cfg.workers = k;
    }
    if let Some(out) = cli.out {
        cfg.output_dir = Some(out);
    }
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("results").join(&cli.experiment));
    if let Err(e) = cfg.validate().and_then(|_| ensure_writable(&dir)) {
        eprintln!("cdforge: {e}");
        return ExitCode::from(2);
    }
    let results = match run(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("cdforge: {e}");
            return ExitCode::from(2);
        }
    };
    print!("{}", summary_table(&results));
    match write_outputs(&results, &dir) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Err(e) => {
            eprintln!("cdforge: writing results: {e}");
            return ExitCode::from(1);
        }
    }
    let failed = results.n_failed();
    if failed > 0 {
        eprintln!("cdforge: {failed} grid point(s) failed");
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}
