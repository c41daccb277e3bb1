//! Builds an `ising-bench` config in code, runs it on two workers and writes
//! the result tables to a temporary directory.

use cdforge::dynamics::{CdSpec, Driver};
use cdforge::experiment::{run, summary_table, write_outputs, Experiment, ExperimentConfig, IsingParams, PathFamily, Sweep};
use cdforge::CdResult;

fn main() -> CdResult<()> {
    let mut cfg = ExperimentConfig::new(Experiment::IsingBench(Sweep {
        path: PathFamily::Ising(IsingParams::default()),
        sizes: vec![6],
        total_times: vec![0.5, 1.0, 2.0],
        drivers: vec![Driver::Adiabatic, Driver::Cd(CdSpec::nc(1)), Driver::Cd(CdSpec::wnc(1))],
    }));
    cfg.workers = 2;
    println!("{}", cfg.to_json()?);
    let results = run(&cfg)?;
    print!("{}", summary_table(&results));
    let dir = std::env::temp_dir().join("cdforge-example");
    for f in write_outputs(&results, &dir)? {
        println!("wrote {}", f.display());
    }
    Ok(())
}
