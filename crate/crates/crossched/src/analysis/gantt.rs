//! Deterministic SVG rendering of timelines: one row per stage, compute
//! blocks colored by type, link rows below with their reserved windows, and
//! DC boundaries drawn between stage rows.

use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::graph::{BlockType, CommKind};
use crate::problem::ProblemSpec;
use crate::timeline::{OpDesc, Timeline};

const ROW_H: f64 = 26.0;
const ROW_GAP: f64 = 6.0;
const LEFT: f64 = 70.0;
const TOP: f64 = 30.0;
const PLOT_W: f64 = 1080.0;

fn fill_for_block(block: BlockType) -> &'static str {
    match block {
        BlockType::F => "#4c78a8",
        BlockType::D => "#59a14f",
        BlockType::W => "#f2a93b",
    }
}

fn fill_for_comm(kind: CommKind) -> &'static str {
    match kind {
        CommKind::Activation => "#7b9fd4",
        CommKind::Gradient => "#8cc29a",
        CommKind::DpSync => "#b07aa1",
        CommKind::DpAllgather => "#d4a6c8",
    }
}

fn f(v: f64) -> String {
    format!("{:.4}", v)
}

/// Renders a timeline as an SVG document. Identical inputs produce identical
/// bytes.
pub fn render_gantt_string(timeline: &Timeline, spec: &ProblemSpec) -> String {
    let n_stages = spec.n_pp;
    let span = timeline.last_end().max(1e-9);
    let scale = PLOT_W / span;
    let links: Vec<_> = timeline.links.iter().map(|(l, _)| *l).collect();
    let n_rows = n_stages + links.len();
    let height = TOP + n_rows as f64 * (ROW_H + ROW_GAP) + 40.0;
    let width = LEFT + PLOT_W + 20.0;

    let row_y = |row: usize| TOP + row as f64 * (ROW_H + ROW_GAP);
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" \
         viewBox=\"0 0 {} {}\" font-family=\"monospace\" font-size=\"11\">\n",
        f(width),
        f(height),
        f(width),
        f(height)
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    // Stage labels and row backgrounds.
    for stage in 0..n_stages {
        let y = row_y(stage);
        out.push_str(&format!(
            "<text x=\"8\" y=\"{}\">stage {} (dc{})</text>\n",
            f(y + ROW_H - 8.0),
            stage,
            spec.dc(stage)
        ));
        out.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"#f4f4f4\"/>\n",
            f(LEFT),
            f(y),
            f(PLOT_W),
            f(ROW_H)
        ));
    }
    for (i, link) in links.iter().enumerate() {
        let y = row_y(n_stages + i);
        out.push_str(&format!(
            "<text x=\"8\" y=\"{}\">dc{}-&gt;dc{}</text>\n",
            f(y + ROW_H - 8.0),
            link.0,
            link.1
        ));
        out.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"#fbf7ef\"/>\n",
            f(LEFT),
            f(y),
            f(PLOT_W),
            f(ROW_H)
        ));
    }

    // DC boundaries between stage rows.
    for stage in 1..n_stages {
        if spec.dc(stage) != spec.dc(stage - 1) {
            let y = row_y(stage) - ROW_GAP / 2.0;
            out.push_str(&format!(
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#c0392b\" \
                 stroke-width=\"2\" stroke-dasharray=\"6,3\"/>\n",
                f(LEFT),
                f(y),
                f(LEFT + PLOT_W),
                f(y)
            ));
        }
    }

    // Compute blocks.
    for op in &timeline.ops {
        if let OpDesc::Compute { stage, block, mb, .. } = op.desc {
            let x = LEFT + op.start * scale;
            let w = ((op.end - op.start) * scale).max(0.4);
            let y = row_y(stage) + 2.0;
            out.push_str(&format!(
                "<rect class=\"op-{}\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" \
                 fill=\"{}\" stroke=\"white\" stroke-width=\"0.4\"><title>{} mb{} \
                 [{} - {}]</title></rect>\n",
                block,
                f(x),
                f(y),
                f(w),
                f(ROW_H - 4.0),
                fill_for_block(block),
                block,
                mb,
                f(op.start),
                f(op.end)
            ));
        }
    }
    // Transfer windows on their link rows.
    for op in &timeline.ops {
        if let OpDesc::Comm { kind, link, mb, .. } = op.desc {
            if op.end <= op.start {
                continue;
            }
            let Some(row) = links.iter().position(|&l| l == link) else { continue };
            let x = LEFT + op.start * scale;
            let w = ((op.end - op.start) * scale).max(0.4);
            let y = row_y(n_stages + row) + 5.0;
            out.push_str(&format!(
                "<rect class=\"comm\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" \
                 fill=\"{}\"><title>{:?} mb{} [{} - {}]</title></rect>\n",
                f(x),
                f(y),
                f(w),
                f(ROW_H - 10.0),
                fill_for_comm(kind),
                kind,
                mb,
                f(op.start),
                f(op.end)
            ));
        }
    }

    // Time axis.
    let axis_y = row_y(n_rows) + 4.0;
    out.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#555\"/>\n",
        f(LEFT),
        f(axis_y),
        f(LEFT + PLOT_W),
        f(axis_y)
    ));
    for i in 0..=8 {
        let t = span * i as f64 / 8.0;
        let x = LEFT + t * scale;
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#555\"/>\n",
            f(x),
            f(axis_y),
            f(x),
            f(axis_y + 4.0)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            f(x),
            f(axis_y + 16.0),
            f(t)
        ));
    }
    out.push_str("</svg>\n");
    out
}

/// Renders a timeline to an SVG file.
pub fn render_gantt(timeline: &Timeline, spec: &ProblemSpec, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path.as_ref(), render_gantt_string(timeline, spec))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patterns::build_true_deps_combined;
    use crate::plan::Family;
    use crate::problem::{PatternTag, ProblemBuilder};
    use crate::sim::simulate;
    use crate::static_schedules::build_static;

    #[test]
    fn one_rectangle_per_compute_block() {
        let spec = ProblemBuilder::new(PatternTag::Ud, 4, 8).dcs(2).build().unwrap();
        let plan = build_static(&spec, Family::OneFOneB).unwrap();
        let graph = build_true_deps_combined(&spec).unwrap();
        let tl = simulate(&graph, &plan, &spec).unwrap();
        let svg = render_gantt_string(&tl, &spec);
        let rects = svg.matches("class=\"op-").count();
        assert_eq!(rects, 96); // 4 stages x 8 microbatches x 3 block types
        assert!(svg.contains("stroke-dasharray")); // the DC boundary
    }

    #[test]
    fn rendering_is_deterministic() {
        let spec = ProblemBuilder::new(PatternTag::Ud, 2, 2)
            .dcs(2)
            .cross_delay(0.3, 0.2)
            .build()
            .unwrap();
        let plan = build_static(&spec, Family::ZbH1).unwrap();
        let graph = crate::patterns::build_true_deps(&spec).unwrap();
        let tl = simulate(&graph, &plan, &spec).unwrap();
        assert_eq!(render_gantt_string(&tl, &spec), render_gantt_string(&tl, &spec));
    }

    #[test]
    fn single_op_renders_single_rect() {
        let spec = ProblemBuilder::new(PatternTag::Ud, 1, 1).build().unwrap();
        let graph = crate::patterns::build_true_deps(&spec).unwrap();
        let mut plan = crate::plan::SchedulePlan::new("one", "test", 1, spec.m_limit.clone());
        plan.stages[0] = vec![
            crate::graph::BlockKey(0, BlockType::F, 0, 0),
            crate::graph::BlockKey(0, BlockType::D, 0, 0),
            crate::graph::BlockKey(0, BlockType::W, 0, 0),
        ];
        let tl = simulate(&graph, &plan, &spec).unwrap();
        let svg = render_gantt_string(&tl, &spec);
        assert_eq!(svg.matches("class=\"op-F\"").count(), 1);
    }
}
