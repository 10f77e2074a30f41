//! Generation, simulation and evaluation of pipeline-parallel training
//! schedules under cross-datacenter communication delays.
//!
//! Training pipelines that span datacenters pay for every activation and
//! gradient that crosses the boundary: a latency term, and a bandwidth term
//! that queues when the link is busy. This crate models that cost, builds
//! the classic static schedules, generates delay-aware schedules (a fast
//! greedy pass and an exact branch-and-bound), and reproduces the standard
//! model-level studies: delay-sensitivity sweeps, PP-versus-DP comparisons
//! and bubble-stride demonstrations.
//!
//! ## Start with the examples
//!
//! Each major capability has a runnable example:
//!
//! ```text
//! cargo run --release --example static_baselines  # 1F1B / IV1F1B / ZB-H1 / ZB-V
//! cargo run --release --example greedy_schedule   # CrossUD(Sub) vs the baselines
//! cargo run --release --example exact_small       # proven-optimal tiny instances + LP export
//! cargo run --release --example delay_sweep       # the family-by-delay grid (CSV)
//! cargo run --release --example pp_vs_dp          # span DCs with PP or with DP?
//! cargo run --release --example bubble_strides    # how static orders amplify latency
//! cargo run --release --example gantt             # render a timeline as SVG
//! cargo run --release --example problem_files     # the on-disk formats
//! cargo run --release --example memory_tradeoff   # batch size and memory vs runtime
//! ```
//!
//! ## The pieces
//!
//! - [`problem`]: the instance description ([`problem::ProblemSpec`]),
//!   infrastructure presets and message sizing.
//! - [`patterns`]: traversal patterns (UD, Loop, Wave) materialized as
//!   dependency graphs of compute blocks and transfers.
//! - [`static_schedules`]: the published baseline layouts.
//! - [`sim`]: the performance model list scheduling with first-fit link
//!   reservations, plus plan validation and metrics.
//! - [`greedy`]: near-optimal schedule generation at sub-block granularity
//!   under memory limits.
//! - [`exact`]: the constraint model, a branch-and-bound solver for small
//!   instances and LP-format export for external solvers.
//! - [`analysis`]: the sweep/comparison studies and SVG rendering.
//! - [`cli`]: the `crossched` binary surface (`gen`, `sim`, `validate`,
//!   `gantt`, `sweep`, `ppdp`, `export-lp`, `stride`).
//!
//! ## A minimal round trip
//!
//! ```
//! use crossched::greedy::generate_greedy;
//! use crossched::patterns::{build_true_deps, split_sub_blocks};
//! use crossched::problem::{PatternTag, ProblemBuilder};
//! use crossched::sim::{simulate, validate_schedule};
//!
//! // Two stages in different DCs, one microbatch, unit-time blocks.
//! let spec = ProblemBuilder::new(PatternTag::Ud, 2, 1)
//!     .dcs(2)
//!     .cross_delay(0.5, 0.0)
//!     .build()?;
//! let (plan, timeline) = generate_greedy(&spec)?;
//! assert_eq!(timeline.metrics.makespan_global, 6.0); // 5 blocks + 2 latency hops
//!
//! // Replaying the plan through the simulator reproduces the timeline.
//! let graph = split_sub_blocks(&build_true_deps(&spec)?, spec.n_sub);
//! assert!(validate_schedule(&graph, &plan, &spec).is_empty());
//! let replay = simulate(&graph, &plan, &spec)?;
//! assert_eq!(replay.metrics.makespan_global, 6.0);
//! # Ok::<(), crossched::Error>(())
//! ```

pub mod analysis;
pub mod cli;
pub mod error;
pub mod exact;
pub mod graph;
pub mod greedy;
pub mod io;
pub mod patterns;
pub mod plan;
pub mod problem;
pub mod sim;
pub mod static_schedules;
pub mod timeline;

pub use error::{Error, Result};
