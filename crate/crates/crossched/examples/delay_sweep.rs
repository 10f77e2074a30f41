//! The delay-sensitivity sweep: every schedule family over a grid of latency
//! and bandwidth ratios, normalized to the wave schedule at zero delay.
//!
//!     cargo run --release --example delay_sweep
//!
//! Expect a few minutes: the cross-ud and cross-wave cells run the exact
//! solver with a per-cell budget.

use crossched::analysis::{default_workers, delay_sweep, SweepConfig};
use crossched::io;
use crossched::problem::{PatternTag, ProblemBuilder};

fn main() -> crossched::Result<()> {
    let base = ProblemBuilder::new(PatternTag::Ud, 4, 8).dcs(2).build()?;
    let mut config = SweepConfig::default_grid(base);
    config.solver_budget = 4.0;

    let table = delay_sweep(&config, default_workers())?;
    print!("{}", table.to_csv());
    eprintln!("reference makespan: {}", table.reference_makespan);

    std::fs::create_dir_all("target/demo")?;
    std::fs::write("target/demo/delay_sweep.csv", table.to_csv())?;
    // The same study as a config file for the `sweep` subcommand.
    io::save_config("target/demo/sweep_config.json", &config)?;
    eprintln!("written to target/demo/delay_sweep.csv and sweep_config.json");
    Ok(())
}
