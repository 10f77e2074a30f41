//! Whether to span datacenters with pipeline parallelism or data
//! parallelism: iteration times for both under a grid of cross-DC links,
//! using the built-in large-model preset, plus a solver spot-check of the
//! greedy engine on a scaled-down replica.
//!
//!     cargo run --release --example pp_vs_dp

use crossched::analysis::{default_workers, pp_vs_dp, PPDPConfig};
use crossched::exact::{build_model, solve_exact};
use crossched::greedy::generate_greedy;
use crossched::patterns::build_true_deps;
use crossched::problem::{PatternTag, ProblemBuilder};
use crossched::static_schedules::one_f_one_b_budget;

fn main() -> crossched::Result<()> {
    let config = PPDPConfig::llama3_405b();
    println!(
        "preset: T_F = {:.4} s per stage, {} microbatches per rank, {:.2} GB per boundary message",
        config.t_f(),
        config.n_mb(),
        config.pp_message_bytes() / 1e9
    );
    let table = pp_vs_dp(&config, default_workers())?;
    print!("{}", table.to_csv());
    eprintln!("ideal single-DC iteration: {:.3} s", table.t_ideal);

    std::fs::create_dir_all("target/demo")?;
    std::fs::write("target/demo/pp_vs_dp.csv", table.to_csv())?;

    // Spot check: at full scale the greedy engine stands in for the exact
    // solver, so compare the two on a 4-stage replica at the same ratios.
    let t_f = config.t_f();
    let beta = 1.0 / 64e9;
    let mut replica = ProblemBuilder::new(PatternTag::Ud, 4, 8)
        .durations(t_f, t_f, t_f)
        .memory(2.0, -1.0)
        .dcs(2)
        .cross_delay(16e-3, beta)
        .message_bytes(config.pp_message_bytes())
        .build()?;
    replica.m_limit = one_f_one_b_budget(&replica);
    let (_, greedy_tl) = generate_greedy(&replica)?;
    let graph = build_true_deps(&replica)?;
    let exact = solve_exact(&build_model(&graph, &replica), 10.0)?;
    eprintln!(
        "spot check at 4 stages, 64 GB/s: greedy {:.4} s vs exact {:.4} s ({:+.2}%)",
        greedy_tl.metrics.makespan_stage0,
        exact.makespan_global,
        (greedy_tl.metrics.makespan_stage0 / exact.makespan_global - 1.0) * 100.0
    );
    Ok(())
}
