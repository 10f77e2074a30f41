//! Export of the constraint model to the LP text format, so external MILP
//! solvers can reproduce the optimization without bundling one here.
//!
//! The encoding follows the model one to one: continuous start times,
//! binary order variables with big-M non-overlap rows, binary completion
//! indicators feeding the memory rows, microbatch-order rows, and the
//! stage-0 span objective linearized through two auxiliary variables.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::graph::{CommKind, Op, OpId};

use super::COModel;

/// The LP variable name of an operation's start time.
pub fn var_name(model: &COModel, id: OpId) -> String {
    match model.graph.op(id) {
        Op::Compute(c) => format!(
            "t_s{}_{}_c{}_m{}_u{}",
            c.stage, c.block, c.chunk, c.mb, c.sub_index
        ),
        Op::Comm(c) => {
            let kind = match c.kind {
                CommKind::Activation => "act",
                CommKind::Gradient => "grad",
                CommKind::DpSync => "dpsync",
                CommKind::DpAllgather => "dpag",
            };
            format!("t_comm{}_{}to{}_{}_m{}", c.id, c.src_stage, c.dst_stage, kind, c.mb)
        }
    }
}

/// Serializes the model as LP text.
pub fn render_lp(model: &COModel) -> String {
    let g = &model.graph;
    let h = model.horizon;
    let mut out = String::new();
    let _ = writeln!(out, "\\ pipeline schedule model: {} compute ops, {} transfers, horizon {}",
        g.n_compute(),
        g.comm_ops().count(),
        h
    );
    let _ = writeln!(out, "\\ objective: span of device 0, first start to last completion");
    out.push_str("Minimize\n obj: span\nSubject To\n");

    // Data dependencies: t_o >= t_p + d_p (+ latency when p is a transfer).
    let mut n = 0usize;
    for op in g.ops() {
        let p = op.id();
        let (dur, lat) = match op {
            Op::Compute(c) => (c.duration, 0.0),
            Op::Comm(c) => (c.bw_time, c.latency),
        };
        for &o in g.succs(p) {
            let _ = writeln!(
                out,
                " dep{n}: {} - {} >= {}",
                var_name(model, o),
                var_name(model, p),
                dur + lat
            );
            n += 1;
        }
    }

    // Resource non-overlap: x = 1 means a runs before b.
    for (i, &(a, b)) in model.x_pairs.iter().enumerate() {
        let (ta, tb) = (var_name(model, a), var_name(model, b));
        let (da, db) = (g.op(a).duration(), g.op(b).duration());
        let _ = writeln!(out, " ord{i}a: {ta} - {tb} + {h} x{i} <= {}", h - da);
        let _ = writeln!(out, " ord{i}b: {tb} - {ta} - {h} x{i} <= {}", -db);
    }

    // Completion indicators: u = 1 iff p completes before q starts.
    for (i, &(p, q)) in model.u_pairs.iter().enumerate() {
        let (tp, tq) = (var_name(model, p), var_name(model, q));
        let dp = g.op(p).duration();
        let _ = writeln!(out, " ucmp{i}a: {tq} - {tp} - {h} u{i} <= {dp}");
        let _ = writeln!(out, " ucmp{i}b: {tp} - {tq} + {h} u{i} <= {}", h - dp);
    }

    // On-device memory capacity per (stage, q).
    let mut mem_n = 0usize;
    for stage in 0..g.n_stages() {
        let stage_ops = g.stage_ops(stage);
        for &q in &stage_ops {
            let mut terms = String::new();
            for (i, &(p, q2)) in model.u_pairs.iter().enumerate() {
                if q2 != q {
                    continue;
                }
                let c = g.op(p).as_compute().unwrap();
                if c.stage != stage || c.mem_delta == 0.0 {
                    continue;
                }
                if c.mem_delta >= 0.0 {
                    let _ = write!(terms, " + {} u{i}", c.mem_delta);
                } else {
                    let _ = write!(terms, " - {} u{i}", -c.mem_delta);
                }
            }
            if !terms.is_empty() {
                let _ = writeln!(out, " mem{mem_n}:{terms} <= {}", model.spec.m_limit[stage]);
                mem_n += 1;
            }
        }
    }

    // Microbatch order within (stage, chunk, type).
    for (i, &(a, b)) in model.mb_edges.iter().enumerate() {
        let _ = writeln!(
            out,
            " mb{i}: {} - {} <= {}",
            var_name(model, a),
            var_name(model, b),
            -g.op(a).duration()
        );
    }

    // Stage-0 span: span >= t_o + d_o - t_first0 over stage-0 computes (and
    // DP transfer deliveries when present); t_first0 sits below every
    // stage-0 start.
    let mut span_n = 0usize;
    for op in g.ops() {
        let (on_stage0, tail) = match op {
            Op::Compute(c) => (c.stage == 0, c.duration),
            Op::Comm(c) => (
                matches!(c.kind, CommKind::DpSync | CommKind::DpAllgather),
                c.bw_time + c.latency,
            ),
        };
        if !on_stage0 {
            continue;
        }
        let t = var_name(model, op.id());
        let _ = writeln!(out, " span{span_n}: span - {t} + t_first0 >= {tail}");
        span_n += 1;
    }
    for op in g.compute_ops().filter(|c| c.stage == 0) {
        let t = var_name(model, op.id);
        let _ = writeln!(out, " first{}: t_first0 - {t} <= 0", op.id);
    }

    out.push_str("Bounds\n");
    let _ = writeln!(out, " 0 <= span <= {h}");
    out.push_str("Binary\n");
    for i in 0..model.x_pairs.len() {
        let _ = writeln!(out, " x{i}");
    }
    for i in 0..model.u_pairs.len() {
        let _ = writeln!(out, " u{i}");
    }
    out.push_str("End\n");
    out
}

/// Writes the model to `path` in LP format.
pub fn export_lp(model: &COModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path.as_ref(), render_lp(model))?;
    Ok(())
}
