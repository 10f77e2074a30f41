//! Generates greedy CrossUD / CrossUDSub schedules for a cross-region link
//! and compares them against the static baselines at the same delays.
//!
//!     cargo run --release --example greedy_schedule

use crossched::analysis::{evaluate_family, SweepConfig};
use crossched::greedy::generate_greedy;
use crossched::plan::Family;
use crossched::problem::{preset, PatternTag, ProblemBuilder};

fn main() -> crossched::Result<()> {
    // A 4-stage pipeline split across two cloud regions, 64 MB messages.
    let (alpha, beta) = preset("same-region-cloud")?;
    let msg = 64e6;
    let spec = ProblemBuilder::new(PatternTag::Ud, 4, 8)
        .durations(0.030, 0.030, 0.030)
        .dcs(2)
        .cross_delay(alpha, beta)
        .message_bytes(msg)
        .build()?;
    println!(
        "link: {alpha} s latency, {:.3} s per message ({} bytes)",
        beta * msg,
        msg
    );

    for n_sub in [1usize, 4] {
        let mut s = spec.clone();
        s.n_sub = n_sub;
        let (plan, tl) = generate_greedy(&s)?;
        println!(
            "{:>12} (n_sub={n_sub}): makespan {:.4} s, {} blocks scheduled",
            plan.family,
            tl.metrics.makespan_stage0,
            plan.total_blocks()
        );
    }

    // The same delay point expressed as ratios for the family comparison.
    let t_f = spec.t_f_norm();
    let config = SweepConfig::default_grid(spec.clone());
    let (lat_ratio, bw_ratio) = (alpha / t_f, beta * msg / t_f);
    for family in [Family::OneFOneB, Family::ZbH1, Family::ZbV] {
        let (_, tl) = evaluate_family(&config.base, family, lat_ratio, bw_ratio, 1, 1.0)?;
        println!(
            "{:>12} (static) : makespan {:.4} s",
            family.name(),
            tl.metrics.makespan_stage0
        );
    }
    Ok(())
}
