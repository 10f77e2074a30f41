//! Simulated timelines and their derived metrics.

use serde::{Deserialize, Serialize};

use crate::graph::{BlockType, CommKind, LinkId, OpId};

/// What a timeline entry describes; enough to render and report without the
/// originating graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum OpDesc {
    Compute {
        stage: usize,
        chunk: usize,
        block: BlockType,
        mb: usize,
        sub: usize,
    },
    Comm {
        kind: CommKind,
        src_stage: usize,
        dst_stage: usize,
        chunk: usize,
        mb: usize,
        link: LinkId,
        latency: f64,
    },
}

impl OpDesc {
    pub fn stage(&self) -> usize {
        match self {
            OpDesc::Compute { stage, .. } => *stage,
            OpDesc::Comm { src_stage, .. } => *src_stage,
        }
    }

    pub fn is_compute(&self) -> bool {
        matches!(self, OpDesc::Compute { .. })
    }
}

/// Start/end of one op. For transfers this is the bandwidth window; the
/// consumer sees the data `latency` later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineOp {
    pub id: OpId,
    pub start: f64,
    pub end: f64,
    #[serde(flatten)]
    pub desc: OpDesc,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Start of the first forward block on stage 0 to the last completion
    /// anywhere (the conventional iteration runtime).
    pub makespan_stage0: f64,
    /// First start anywhere to last end anywhere.
    pub makespan_global: f64,
    /// Per-stage idle fraction of the stage's active window.
    pub bubble_ratio: Vec<f64>,
    /// Per-stage peak of the running memory sum.
    pub peak_memory: Vec<f64>,
    /// Per-link busy fraction of the global window, links sorted.
    pub link_utilization: Vec<(LinkId, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Timeline {
    /// One record per op, indexed by op id.
    pub ops: Vec<TimelineOp>,
    /// Reserved bandwidth windows per link, sorted by start.
    pub links: Vec<(LinkId, Vec<(f64, f64)>)>,
    /// Order in which transfers reserved each link.
    pub link_sequence: Vec<(LinkId, Vec<OpId>)>,
    pub metrics: MetricsReport,
}

impl Timeline {
    pub fn start(&self, id: OpId) -> f64 {
        self.ops[id].start
    }

    pub fn end(&self, id: OpId) -> f64 {
        self.ops[id].end
    }

    /// Last completion over every op, compute and comm alike.
    pub fn last_end(&self) -> f64 {
        self.ops.iter().map(|o| o.end).fold(0.0, f64::max)
    }
}
