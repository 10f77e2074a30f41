//! Execution plans: per-stage block orders plus an optional per-link
//! communication order.

use serde::{Deserialize, Serialize};

use crate::graph::{BlockKey, CommKey, LinkId};

/// Schedule family names as they appear on the CLI and in plan files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "1f1b")]
    OneFOneB,
    #[serde(rename = "iv1f1b")]
    Interleaved,
    #[serde(rename = "zbh1")]
    ZbH1,
    #[serde(rename = "zbv")]
    ZbV,
    #[serde(rename = "cross-ud")]
    CrossUd,
    #[serde(rename = "cross-ud-sub")]
    CrossUdSub,
    #[serde(rename = "cross-wave")]
    CrossWave,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::OneFOneB => "1f1b",
            Family::Interleaved => "iv1f1b",
            Family::ZbH1 => "zbh1",
            Family::ZbV => "zbv",
            Family::CrossUd => "cross-ud",
            Family::CrossUdSub => "cross-ud-sub",
            Family::CrossWave => "cross-wave",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        match s {
            "1f1b" => Some(Family::OneFOneB),
            "iv1f1b" => Some(Family::Interleaved),
            "zbh1" => Some(Family::ZbH1),
            "zbv" => Some(Family::ZbV),
            "cross-ud" => Some(Family::CrossUd),
            "cross-ud-sub" => Some(Family::CrossUdSub),
            "cross-wave" => Some(Family::CrossWave),
            _ => None,
        }
    }

    pub fn is_static(&self) -> bool {
        matches!(
            self,
            Family::OneFOneB | Family::Interleaved | Family::ZbH1 | Family::ZbV
        )
    }

    /// All families, in the comparison order used by the analysis tables.
    pub const ALL: [Family; 7] = [
        Family::OneFOneB,
        Family::Interleaved,
        Family::ZbH1,
        Family::ZbV,
        Family::CrossUd,
        Family::CrossUdSub,
        Family::CrossWave,
    ];
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A complete plan: for every stage, the execution order of its blocks; and
/// optionally, for every directed DC link, the order in which transfers
/// reserve bandwidth. Plans without a link order leave transfers to be
/// serviced in producer-completion order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulePlan {
    /// Schedule family this plan realizes.
    pub family: String,
    /// Which engine produced it (static layout, greedy, exact search).
    pub generator: String,
    /// Sub-blocks per compute block the plan is expressed in.
    pub n_sub: usize,
    /// Per-stage memory budget the plan was built against, bytes.
    pub mem_budget: Vec<f64>,
    /// Per-stage ordered block sequences.
    pub stages: Vec<Vec<BlockKey>>,
    /// Optional per-link transfer order (reservation order).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link_order: Option<Vec<(LinkId, Vec<CommKey>)>>,
}

impl SchedulePlan {
    pub fn new(family: &str, generator: &str, n_sub: usize, mem_budget: Vec<f64>) -> Self {
        let n = mem_budget.len();
        SchedulePlan {
            family: family.to_string(),
            generator: generator.to_string(),
            n_sub,
            mem_budget,
            stages: vec![Vec::new(); n],
            link_order: None,
        }
    }

    pub fn n_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn total_blocks(&self) -> usize {
        self.stages.iter().map(Vec::len).sum()
    }
}
