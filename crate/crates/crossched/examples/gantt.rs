//! Renders a schedule's timeline as an SVG chart: stage rows with colored
//! compute blocks, link rows with the reserved transfer windows, and the DC
//! boundary marked.
//!
//!     cargo run --release --example gantt

use crossched::analysis::render_gantt;
use crossched::greedy::generate_greedy;
use crossched::problem::{PatternTag, ProblemBuilder};

fn main() -> crossched::Result<()> {
    let spec = ProblemBuilder::new(PatternTag::Ud, 4, 8)
        .sub_blocks(2)
        .dcs(2)
        .cross_delay(0.5, 0.75)
        .build()?;
    let (plan, timeline) = generate_greedy(&spec)?;
    println!(
        "{}: makespan {:.2}, bubbles {:?}",
        plan.family,
        timeline.metrics.makespan_stage0,
        timeline
            .metrics
            .bubble_ratio
            .iter()
            .map(|b| (b * 100.0).round() / 100.0)
            .collect::<Vec<_>>()
    );
    std::fs::create_dir_all("target/demo")?;
    render_gantt(&timeline, &spec, "target/demo/greedy.svg")?;
    println!("wrote target/demo/greedy.svg");
    Ok(())
}
