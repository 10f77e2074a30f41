//! Solves a small instance to proven optimality, shows how a tight memory
//! limit changes the optimum, and writes the model as an LP file.
//!
//!     cargo run --release --example exact_small

use crossched::exact::{build_model, export_lp, solve_exact};
use crossched::patterns::build_true_deps;
use crossched::problem::{PatternTag, ProblemBuilder};

fn main() -> crossched::Result<()> {
    let spec = ProblemBuilder::new(PatternTag::Ud, 2, 2)
        .durations(1.0, 1.0, 1.0)
        .dcs(2)
        .cross_delay(0.25, 0.5)
        .build()?;
    let graph = build_true_deps(&spec)?;
    let model = build_model(&graph, &spec);
    println!(
        "model: {} compute ops, {} transfers, {} order variables, horizon {}",
        model.graph.n_compute(),
        model.graph.comm_ops().count(),
        model.x_pairs.len(),
        model.horizon
    );

    let outcome = solve_exact(&model, 10.0)?;
    println!(
        "unbounded memory: makespan {:.3}, optimal: {}, {} nodes",
        outcome.makespan, outcome.optimal, outcome.nodes_explored
    );

    let mut tight = spec.clone();
    tight.m_limit = vec![2.0; 2]; // one forward block in flight per stage
    let bounded = solve_exact(&build_model(&graph, &tight), 10.0)?;
    println!(
        "one in-flight microbatch: makespan {:.3}, optimal: {}",
        bounded.makespan, bounded.optimal
    );

    std::fs::create_dir_all("target/demo")?;
    export_lp(&model, "target/demo/small.lp")?;
    println!("model written to target/demo/small.lp");
    Ok(())
}
