//! Command-line surface: generate, simulate, validate, render, sweep,
//! compare and export. The binary in `src/bin` is a thin wrapper around
//! [`run`].

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::analysis::{
    bubble_stride_demo, default_workers, delay_sweep, pp_vs_dp, render_gantt, PPDPConfig,
    SweepConfig,
};
use crate::error::{Error, Result};
use crate::exact::{build_model, export_lp, solve_exact};
use crate::graph::DependencyGraph;
use crate::greedy::generate_greedy;
use crate::io;
use crate::patterns::{attach_dp_ops, build_true_deps, build_true_deps_combined, split_sub_blocks};
use crate::plan::{Family, SchedulePlan};
use crate::problem::{PatternTag, ProblemSpec};
use crate::sim::{simulate, validate_schedule};
use crate::static_schedules::build_static;

/// Exit code for validation failures.
pub const EXIT_VIOLATIONS: i32 = 1;

#[derive(Parser)]
#[command(
    name = "crossched",
    version,
    about = "Generate, simulate and evaluate pipeline-parallel training schedules \
             under cross-datacenter communication delays"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build or generate a schedule for a problem.
    Gen(GenArgs),
    /// Simulate a schedule and write the resulting timeline.
    Sim(SimArgs),
    /// Check a schedule against a problem; violations exit with status 1.
    Validate(ValidateArgs),
    /// Render a timeline as an SVG chart.
    Gantt(GanttArgs),
    /// Run a delay-sensitivity sweep over schedule families.
    Sweep(SweepArgs),
    /// Compare cross-DC pipeline parallelism against cross-DC data
    /// parallelism.
    Ppdp(PpdpArgs),
    /// Export the scheduling model in LP text format.
    ExportLp(ExportLpArgs),
    /// Simulate a static schedule across latency points and report how the
    /// delay accumulates.
    Stride(StrideArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    problem: PathBuf,
    /// 1f1b, iv1f1b, zbh1, zbv, cross-ud, cross-ud-sub or cross-wave.
    #[arg(long)]
    schedule: String,
    #[arg(long)]
    out: PathBuf,
    /// Sub-blocks per compute block for cross-ud-sub.
    #[arg(long)]
    nsub: Option<usize>,
    /// Solver budget in seconds for the exact engine.
    #[arg(long, default_value_t = 60.0)]
    budget: f64,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long)]
    schedule_file: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long)]
    schedule_file: PathBuf,
}

#[derive(Args)]
struct GanttArgs {
    #[arg(long)]
    timeline: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Problem file for stage and DC annotations; reconstructed from the
    /// timeline when omitted.
    #[arg(long)]
    problem: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct PpdpArgs {
    /// Study configuration; the built-in large-model preset when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct ExportLpArgs {
    #[arg(long)]
    problem: PathBuf,
    /// Override the problem's traversal pattern: ud, loop or wave.
    #[arg(long)]
    pattern: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StrideArgs {
    #[arg(long)]
    problem: PathBuf,
    /// A static schedule family.
    #[arg(long)]
    schedule: String,
    /// Cross-DC latencies to probe, seconds.
    #[arg(long, value_delimiter = ',')]
    latencies: Vec<f64>,
    /// Directory for the rendered SVGs.
    #[arg(long)]
    out_dir: PathBuf,
}

/// The dependency graph matching a plan: combined-backward families hand
/// gradients off after the whole B block, and sub-block plans need the
/// split graph.
fn graph_for_plan(spec: &ProblemSpec, plan: &SchedulePlan) -> Result<DependencyGraph> {
    let combined = matches!(
        Family::parse(&plan.family),
        Some(Family::OneFOneB) | Some(Family::Interleaved)
    );
    let mut graph = if combined {
        build_true_deps_combined(spec)?
    } else {
        build_true_deps(spec)?
    };
    if spec.dp_overlap.is_some() {
        graph = attach_dp_ops(&graph, spec)?;
    }
    Ok(split_sub_blocks(&graph, plan.n_sub))
}

fn generate(spec: &ProblemSpec, family: Family, nsub: Option<usize>, budget: f64) -> Result<SchedulePlan> {
    match family {
        Family::OneFOneB | Family::Interleaved | Family::ZbH1 | Family::ZbV => {
            build_static(spec, family)
        }
        Family::CrossUdSub => {
            let mut spec = spec.clone();
            spec.n_sub = nsub.unwrap_or(if spec.n_sub > 1 { spec.n_sub } else { 4 });
            let (plan, _) = generate_greedy(&spec)?;
            Ok(plan)
        }
        Family::CrossUd => {
            // Small instances go to the exact solver, larger ones to the
            // greedy generator; the plan records which engine produced it.
            let small = spec.n_pp <= 4 && spec.n_mb <= 6 && spec.n_chunks <= 2;
            if small {
                let mut graph = build_true_deps(spec)?;
                if spec.dp_overlap.is_some() {
                    graph = attach_dp_ops(&graph, spec)?;
                }
                let outcome = solve_exact(&build_model(&graph, spec), budget)?;
                Ok(outcome.plan)
            } else {
                let mut spec = spec.clone();
                spec.n_sub = 1;
                let (plan, _) = generate_greedy(&spec)?;
                Ok(plan)
            }
        }
        Family::CrossWave => {
            if spec.pattern != PatternTag::Wave {
                return Err(Error::FamilyMismatch {
                    family: family.name().to_string(),
                    requirement: "the Wave pattern with 2 chunks".to_string(),
                });
            }
            let mut graph = build_true_deps(spec)?;
            if spec.dp_overlap.is_some() {
                graph = attach_dp_ops(&graph, spec)?;
            }
            let outcome = solve_exact(&build_model(&graph, spec), budget)?;
            Ok(outcome.plan)
        }
    }
}

/// Rebuilds the minimal problem context a timeline needs for rendering when
/// no problem file is given: stage count from the op records and the DC map
/// from the transfer links.
fn spec_from_timeline(timeline: &crate::timeline::Timeline) -> ProblemSpec {
    use crate::timeline::OpDesc;
    let n_pp = timeline
        .ops
        .iter()
        .filter_map(|o| match o.desc {
            OpDesc::Compute { stage, .. } => Some(stage + 1),
            _ => None,
        })
        .max()
        .unwrap_or(1);
    let mut dc_of_stage = vec![usize::MAX; n_pp];
    for op in &timeline.ops {
        if let OpDesc::Comm { src_stage, dst_stage, link, .. } = op.desc {
            if src_stage < n_pp {
                dc_of_stage[src_stage] = link.0;
            }
            if dst_stage < n_pp {
                dc_of_stage[dst_stage] = link.1;
            }
        }
    }
    let mut last = 0;
    for dc in dc_of_stage.iter_mut() {
        if *dc == usize::MAX {
            *dc = last;
        }
        last = *dc;
    }
    let n_dc = dc_of_stage.iter().max().map(|d| d + 1).unwrap_or(1);
    ProblemSpec {
        n_pp,
        n_mb: 1,
        n_chunks: 1,
        n_sub: 1,
        pattern: PatternTag::Ud,
        t_f: vec![vec![1.0]; n_pp],
        t_d: vec![vec![1.0]; n_pp],
        t_w: vec![vec![1.0]; n_pp],
        m_f: vec![vec![1.0]; n_pp],
        m_d: vec![vec![-0.5]; n_pp],
        m_w: vec![vec![-0.5]; n_pp],
        m_limit: vec![f64::INFINITY; n_pp],
        dc_of_stage,
        alpha: vec![vec![0.0; n_dc]; n_dc],
        beta: vec![vec![0.0; n_dc]; n_dc],
        msg_fwd: vec![0.0; n_pp.saturating_sub(1)],
        msg_bwd: vec![0.0; n_pp.saturating_sub(1)],
        dp_overlap: None,
    }
}

/// Executes one parsed invocation and returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Gen(args) => {
            let spec = io::load_problem(&args.problem)?;
            let family = Family::parse(&args.schedule).ok_or_else(|| {
                Error::Validation(format!("unknown schedule family `{}`", args.schedule))
            })?;
            let plan = generate(&spec, family, args.nsub, args.budget)?;
            io::save_schedule(&args.out, &plan)?;
            Ok(0)
        }
        Command::Sim(args) => {
            let spec = io::load_problem(&args.problem)?;
            let plan = io::load_schedule(&args.schedule_file)?;
            let graph = graph_for_plan(&spec, &plan)?;
            let timeline = simulate(&graph, &plan, &spec)?;
            io::save_timeline(&args.out, &timeline)?;
            Ok(0)
        }
        Command::Validate(args) => {
            let spec = io::load_problem(&args.problem)?;
            let plan = io::load_schedule(&args.schedule_file)?;
            let graph = graph_for_plan(&spec, &plan)?;
            let violations = validate_schedule(&graph, &plan, &spec);
            for v in &violations {
                println!("{}", serde_json::to_string(v).unwrap());
            }
            if violations.is_empty() {
                Ok(0)
            } else {
                Ok(EXIT_VIOLATIONS)
            }
        }
        Command::Gantt(args) => {
            let timeline = io::load_timeline(&args.timeline)?;
            let spec = match args.problem {
                Some(p) => io::load_problem(p)?,
                None => spec_from_timeline(&timeline),
            };
            render_gantt(&timeline, &spec, &args.out)?;
            Ok(0)
        }
        Command::Sweep(args) => {
            let config: SweepConfig = io::load_config(&args.config, "sweep config")?;
            let table = delay_sweep(&config, args.workers.unwrap_or_else(default_workers))?;
            std::fs::write(&args.out, table.to_csv())?;
            Ok(0)
        }
        Command::Ppdp(args) => {
            let config: PPDPConfig = match args.config {
                Some(p) => io::load_config(&p, "study config")?,
                None => PPDPConfig::llama3_405b(),
            };
            let table = pp_vs_dp(&config, args.workers.unwrap_or_else(default_workers))?;
            std::fs::write(&args.out, table.to_csv())?;
            Ok(0)
        }
        Command::ExportLp(args) => {
            let mut spec = io::load_problem(&args.problem)?;
            if let Some(p) = &args.pattern {
                spec.pattern = match p.as_str() {
                    "ud" => PatternTag::Ud,
                    "loop" => PatternTag::Loop,
                    "wave" => PatternTag::Wave,
                    other => {
                        return Err(Error::Validation(format!("unknown pattern `{other}`")))
                    }
                };
                spec.validate()?;
            }
            let mut graph = build_true_deps(&spec)?;
            if spec.dp_overlap.is_some() {
                graph = attach_dp_ops(&graph, &spec)?;
            }
            export_lp(&build_model(&graph, &spec), &args.out)?;
            Ok(0)
        }
        Command::Stride(args) => {
            let spec = io::load_problem(&args.problem)?;
            let family = Family::parse(&args.schedule)
                .filter(Family::is_static)
                .ok_or_else(|| {
                    Error::Validation(format!("`{}` is not a static family", args.schedule))
                })?;
            let report = bubble_stride_demo(&spec, family, &args.latencies)?;
            std::fs::create_dir_all(&args.out_dir)?;
            for (lat, svg) in &report.gantts {
                let name = format!("{}-lat-{:.6}.svg", family.name(), lat);
                std::fs::write(args.out_dir.join(name), svg)?;
            }
            for (lat, makespan) in &report.points {
                println!("latency {lat}: makespan {makespan}");
            }
            println!(
                "slope {} crossings-on-critical-path {}",
                report.slope, report.critical_crossings
            );
            Ok(0)
        }
    }
}

/// Entry point used by the binary: parse, run, map errors to the diagnostic
/// stream and exit codes.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!(
                "{}",
                serde_json::json!({ "error": e.to_string() })
            );
            1
        }
    }
}
