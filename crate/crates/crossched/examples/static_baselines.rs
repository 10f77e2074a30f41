//! Builds the four static baseline schedules for one instance and compares
//! their simulated makespans, bubble ratios and peak memory.
//!
//!     cargo run --release --example static_baselines

use crossched::analysis::{evaluate_family, SweepConfig};
use crossched::plan::Family;
use crossched::problem::{PatternTag, ProblemBuilder};

fn main() -> crossched::Result<()> {
    // Four stages, eight microbatches, two DCs of two stages each.
    let base = ProblemBuilder::new(PatternTag::Ud, 4, 8).dcs(2).build()?;
    let config = SweepConfig::default_grid(base);

    println!("family | makespan | worst bubble | peak memory per stage");
    for family in [Family::OneFOneB, Family::Interleaved, Family::ZbH1, Family::ZbV] {
        // Zero-delay corner of the grid.
        let (_, tl) = evaluate_family(&config.base, family, 0.0, 0.0, 1, 1.0)?;
        let m = &tl.metrics;
        let worst = m.bubble_ratio.iter().cloned().fold(0.0, f64::max);
        println!(
            "{:>7} | {:>8.2} | {:>11.3} | {:?}",
            family.name(),
            m.makespan_stage0,
            worst,
            m.peak_memory
        );
    }
    Ok(())
}
