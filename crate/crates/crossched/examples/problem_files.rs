//! The file formats: write a problem built from an infrastructure preset,
//! generate a schedule, simulate it and save all three documents.
//!
//!     cargo run --release --example problem_files

use crossched::greedy::generate_greedy;
use crossched::io;
use crossched::problem::{message_size, preset, PatternTag, ProblemBuilder};

fn main() -> crossched::Result<()> {
    // Activations of a 4096-hidden model at sequence length 4096, 16 DP
    // replicas sharing the link, BF16.
    let bytes = message_size(1, 4096, 4096, 16, 2);
    let (alpha, beta) = preset("cross-campus")?;
    let spec = ProblemBuilder::new(PatternTag::Ud, 4, 8)
        .durations(0.02, 0.02, 0.02)
        .dcs(2)
        .cross_delay(alpha, beta)
        .message_bytes(bytes as f64)
        .build()?;

    std::fs::create_dir_all("target/demo")?;
    io::save_problem("target/demo/problem.json", &spec)?;
    let (plan, timeline) = generate_greedy(&spec)?;
    io::save_schedule("target/demo/schedule.json", &plan)?;
    io::save_timeline("target/demo/timeline.json", &timeline)?;

    // Round trip.
    let loaded = io::load_problem("target/demo/problem.json")?;
    assert_eq!(loaded, spec);
    println!(
        "wrote problem/schedule/timeline under target/demo; makespan {:.4} s",
        timeline.metrics.makespan_stage0
    );
    Ok(())
}
