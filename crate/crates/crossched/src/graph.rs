//! Dependency graphs: computation blocks, communication transfers and the
//! true-dependency edges connecting them.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type OpId = usize;

/// Directed DC pair; the unary link resource a transfer occupies.
pub type LinkId = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BlockType {
    F,
    D,
    W,
}

impl std::fmt::Display for BlockType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BlockType::F => "F",
            BlockType::D => "D",
            BlockType::W => "W",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommKind {
    /// Forward activation transfer between stages.
    Activation,
    /// Backward input-gradient transfer between stages.
    Gradient,
    /// Data-parallel gradient synchronization for one (stage, chunk).
    DpSync,
    /// ZeRO-1 parameter allgather preceding a chunk's first forward block.
    DpAllgather,
}

/// One computation block (or sub-block) on a pipeline stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputeOp {
    pub id: OpId,
    pub stage: usize,
    pub chunk: usize,
    pub block: BlockType,
    pub mb: usize,
    pub sub_index: usize,
    pub duration: f64,
    pub mem_delta: f64,
}

/// One transfer. `bw_time` is the link occupancy (beta x bytes) and `latency`
/// is added after the occupancy window ends; the consumer becomes available
/// at `window_end + latency`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommOp {
    pub id: OpId,
    pub kind: CommKind,
    /// Producing compute op; absent for initial transfers (ZeRO-1 allgather).
    pub producer: Option<OpId>,
    /// Consuming compute op; absent for terminal transfers (DP sync).
    pub consumer: Option<OpId>,
    pub src_stage: usize,
    pub dst_stage: usize,
    pub chunk: usize,
    pub mb: usize,
    pub bytes: f64,
    pub latency: f64,
    pub bw_time: f64,
    pub link: LinkId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Op {
    Compute(ComputeOp),
    Comm(CommOp),
}

impl Op {
    pub fn id(&self) -> OpId {
        match self {
            Op::Compute(c) => c.id,
            Op::Comm(c) => c.id,
        }
    }

    pub fn duration(&self) -> f64 {
        match self {
            Op::Compute(c) => c.duration,
            Op::Comm(c) => c.bw_time,
        }
    }

    pub fn as_compute(&self) -> Option<&ComputeOp> {
        match self {
            Op::Compute(c) => Some(c),
            Op::Comm(_) => None,
        }
    }

    pub fn as_comm(&self) -> Option<&CommOp> {
        match self {
            Op::Comm(c) => Some(c),
            Op::Compute(_) => None,
        }
    }
}

/// Identity of a compute op inside a plan or file:
/// (chunk, type, microbatch, sub_index). The stage is carried by position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BlockKey(pub usize, pub BlockType, pub usize, pub usize);

impl BlockKey {
    pub fn chunk(&self) -> usize {
        self.0
    }
    pub fn block(&self) -> BlockType {
        self.1
    }
    pub fn mb(&self) -> usize {
        self.2
    }
    pub fn sub(&self) -> usize {
        self.3
    }
}

impl std::fmt::Display for BlockKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}(c{},mb{},s{})", self.1, self.0, self.2, self.3)
    }
}

/// Identity of a comm op inside a plan or file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CommKey {
    pub kind: CommKind,
    pub src_stage: usize,
    pub dst_stage: usize,
    pub chunk: usize,
    pub mb: usize,
}

/// Acyclic graph of compute and comm ops connected by true dependencies.
#[derive(Debug, Clone, Default)]
pub struct DependencyGraph {
    ops: Vec<Op>,
    preds: Vec<Vec<OpId>>,
    succs: Vec<Vec<OpId>>,
    n_stages: usize,
}

impl DependencyGraph {
    pub fn new(n_stages: usize) -> Self {
        DependencyGraph {
            ops: Vec::new(),
            preds: Vec::new(),
            succs: Vec::new(),
            n_stages,
        }
    }

    pub fn n_stages(&self) -> usize {
        self.n_stages
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn op(&self, id: OpId) -> &Op {
        &self.ops[id]
    }

    pub fn ops(&self) -> &[Op] {
        &self.ops
    }

    pub fn preds(&self, id: OpId) -> &[OpId] {
        &self.preds[id]
    }

    pub fn succs(&self, id: OpId) -> &[OpId] {
        &self.succs[id]
    }

    #[allow(clippy::too_many_arguments)]
    pub fn add_compute(
        &mut self,
        stage: usize,
        chunk: usize,
        block: BlockType,
        mb: usize,
        sub_index: usize,
        duration: f64,
        mem_delta: f64,
    ) -> OpId {
        let id = self.ops.len();
        self.ops.push(Op::Compute(ComputeOp {
            id,
            stage,
            chunk,
            block,
            mb,
            sub_index,
            duration,
            mem_delta,
        }));
        self.preds.push(Vec::new());
        self.succs.push(Vec::new());
        id
    }

    #[allow(clippy::too_many_arguments)]
    pub fn add_comm(&mut self, mut comm: CommOp) -> OpId {
        let id = self.ops.len();
        comm.id = id;
        let (producer, consumer) = (comm.producer, comm.consumer);
        self.ops.push(Op::Comm(comm));
        self.preds.push(Vec::new());
        self.succs.push(Vec::new());
        if let Some(p) = producer {
            self.add_edge(p, id);
        }
        if let Some(c) = consumer {
            self.add_edge(id, c);
        }
        id
    }

    pub fn add_edge(&mut self, from: OpId, to: OpId) {
        if !self.succs[from].contains(&to) {
            self.succs[from].push(to);
            self.preds[to].push(from);
        }
    }

    pub fn compute_ops(&self) -> impl Iterator<Item = &ComputeOp> {
        self.ops.iter().filter_map(Op::as_compute)
    }

    pub fn comm_ops(&self) -> impl Iterator<Item = &CommOp> {
        self.ops.iter().filter_map(Op::as_comm)
    }

    pub fn n_compute(&self) -> usize {
        self.compute_ops().count()
    }

    /// Compute ops of one stage, in id order.
    pub fn stage_ops(&self, stage: usize) -> Vec<OpId> {
        self.compute_ops()
            .filter(|c| c.stage == stage)
            .map(|c| c.id)
            .collect()
    }

    pub fn block_key(&self, id: OpId) -> Option<(usize, BlockKey)> {
        self.ops[id]
            .as_compute()
            .map(|c| (c.stage, BlockKey(c.chunk, c.block, c.mb, c.sub_index)))
    }

    pub fn comm_key(&self, id: OpId) -> Option<CommKey> {
        self.ops[id].as_comm().map(|c| CommKey {
            kind: c.kind,
            src_stage: c.src_stage,
            dst_stage: c.dst_stage,
            chunk: c.chunk,
            mb: c.mb,
        })
    }

    /// Map from (stage, block key) to op id for every compute op.
    pub fn compute_index(&self) -> HashMap<(usize, BlockKey), OpId> {
        self.compute_ops()
            .map(|c| ((c.stage, BlockKey(c.chunk, c.block, c.mb, c.sub_index)), c.id))
            .collect()
    }

    /// Map from comm key to op id for every comm op.
    pub fn comm_index(&self) -> HashMap<CommKey, OpId> {
        self.comm_ops()
            .map(|c| {
                (
                    CommKey {
                        kind: c.kind,
                        src_stage: c.src_stage,
                        dst_stage: c.dst_stage,
                        chunk: c.chunk,
                        mb: c.mb,
                    },
                    c.id,
                )
            })
            .collect()
    }

    /// Topological order over true dependencies, or a cycle error.
    pub fn topo_order(&self) -> Result<Vec<OpId>> {
        topo_order_with(self.len(), |id| self.succs[id].iter().copied())
            .ok_or_else(|| Error::Validation("dependency graph contains a cycle".into()))
    }

    /// Reachability over true dependencies as one bitset row per op:
    /// `row[i]` has bit `j` set iff `j` is reachable from `i`.
    pub fn reachability(&self) -> Reachability {
        let n = self.len();
        let words = n.div_ceil(64);
        let mut rows = vec![0u64; n * words];
        let order = self.topo_order().expect("true-dependency graph must be acyclic");
        for &id in order.iter().rev() {
            let mut row = vec![0u64; words];
            for &s in &self.succs[id] {
                row[s / 64] |= 1 << (s % 64);
                let (a, b) = (s * words, (s + 1) * words);
                let succ_row = rows[a..b].to_vec();
                for (w, sw) in row.iter_mut().zip(succ_row) {
                    *w |= sw;
                }
            }
            rows[id * words..(id + 1) * words].copy_from_slice(&row);
        }
        Reachability { words, rows }
    }
}

/// Generic Kahn topological sort; `None` on a cycle.
pub fn topo_order_with<I>(n: usize, succs: impl Fn(usize) -> I) -> Option<Vec<usize>>
where
    I: Iterator<Item = usize>,
{
    let mut indeg = vec![0usize; n];
    for u in 0..n {
        for v in succs(u) {
            indeg[v] += 1;
        }
    }
    let mut stack: Vec<usize> = (0..n).filter(|&u| indeg[u] == 0).collect();
    stack.reverse();
    let mut order = Vec::with_capacity(n);
    while let Some(u) = stack.pop() {
        order.push(u);
        for v in succs(u) {
            indeg[v] -= 1;
            if indeg[v] == 0 {
                stack.push(v);
            }
        }
    }
    (order.len() == n).then_some(order)
}

pub struct Reachability {
    words: usize,
    rows: Vec<u64>,
}

impl Reachability {
    pub fn reaches(&self, from: OpId, to: OpId) -> bool {
        self.rows[from * self.words + to / 64] & (1 << (to % 64)) != 0
    }
}
