//! The pipeline performance model: list-scheduling simulation of a plan over
//! a dependency graph under the alpha-beta-with-queuing communication model.
//!
//! A compute op starts at the later of (a) the end of the previous op on its
//! stage in plan order and (b) the delivery of every true predecessor, where
//! a transfer delivers at its bandwidth window's end plus its latency.
//! Transfers reserve link windows first-fit; plans may pin the per-link
//! reservation order, otherwise transfers are serviced in producer-completion
//! order with ties broken by producer op id.

mod link;

pub use link::LinkOccupancy;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{BlockKey, BlockType, CommKey, DependencyGraph, LinkId, Op, OpId};
use crate::plan::SchedulePlan;
use crate::problem::{ProblemSpec, TIME_EPS};
use crate::timeline::{MetricsReport, OpDesc, Timeline, TimelineOp};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Event {
    /// Bit pattern of the event time, for a total order.
    time_bits: u64,
    /// Completions before deliveries at equal times.
    class: u8,
    id: OpId,
}

impl Event {
    fn new(time: f64, class: u8, id: OpId) -> Self {
        Event {
            time_bits: time.to_bits(),
            class,
            id,
        }
    }

    fn time(&self) -> f64 {
        f64::from_bits(self.time_bits)
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        f64::from_bits(self.time_bits)
            .total_cmp(&f64::from_bits(other.time_bits))
            .then(self.class.cmp(&other.class))
            .then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct LinkState {
    occupancy: LinkOccupancy,
    /// Pinned reservation order, when the plan provides one.
    queue: Option<Vec<OpId>>,
    queue_pos: usize,
    /// Reservation order actually realized.
    sequence: Vec<OpId>,
}

/// Resolves the plan's per-stage block keys against the graph.
fn stage_sequences(graph: &DependencyGraph, plan: &SchedulePlan) -> Result<Vec<Vec<OpId>>> {
    if plan.n_stages() != graph.n_stages() {
        return Err(Error::PlanMismatch(format!(
            "plan has {} stages, graph has {}",
            plan.n_stages(),
            graph.n_stages()
        )));
    }
    let index = graph.compute_index();
    let mut seen = vec![false; graph.len()];
    let mut sequences = Vec::with_capacity(plan.n_stages());
    for (stage, keys) in plan.stages.iter().enumerate() {
        let mut seq = Vec::with_capacity(keys.len());
        for key in keys {
            let id = *index.get(&(stage, *key)).ok_or_else(|| {
                Error::PlanMismatch(format!("plan names unknown op {key} on stage {stage}"))
            })?;
            if seen[id] {
                return Err(Error::PlanMismatch(format!(
                    "plan repeats op {key} on stage {stage}"
                )));
            }
            seen[id] = true;
            seq.push(id);
        }
        sequences.push(seq);
    }
    for op in graph.compute_ops() {
        if !seen[op.id] {
            return Err(Error::PlanMismatch(format!(
                "plan misses op {}(c{},mb{},s{}) on stage {}",
                op.block, op.chunk, op.mb, op.sub_index, op.stage
            )));
        }
    }
    Ok(sequences)
}

/// Simulates `plan` over `graph` and returns the full timeline with metrics.
pub fn simulate(
    graph: &DependencyGraph,
    plan: &SchedulePlan,
    spec: &ProblemSpec,
) -> Result<Timeline> {
    let sequences = stage_sequences(graph, plan)?;
    let n = graph.len();

    // Position of each compute op in its stage sequence.
    let mut stage_of = vec![usize::MAX; n];
    for (stage, seq) in sequences.iter().enumerate() {
        for &id in seq {
            stage_of[id] = stage;
        }
    }

    let mut links: BTreeMap<LinkId, LinkState> = BTreeMap::new();
    for comm in graph.comm_ops() {
        links.entry(comm.link).or_insert_with(|| LinkState {
            occupancy: LinkOccupancy::new(),
            queue: None,
            queue_pos: 0,
            sequence: Vec::new(),
        });
    }
    if let Some(order) = &plan.link_order {
        let comm_index = graph.comm_index();
        let mut listed: HashMap<LinkId, Vec<OpId>> = HashMap::new();
        for (link, keys) in order {
            let ids = keys
                .iter()
                .map(|k| {
                    comm_index.get(k).copied().ok_or_else(|| {
                        Error::PlanMismatch(format!("link order names unknown transfer {k:?}"))
                    })
                })
                .collect::<Result<Vec<OpId>>>()?;
            listed.insert(*link, ids);
        }
        for (link, state) in links.iter_mut() {
            if let Some(ids) = listed.remove(link) {
                // Zero-width transfers occupy nothing; the pinned order only
                // governs transfers that actually contend for bandwidth.
                let ids: Vec<OpId> = ids
                    .into_iter()
                    .filter(|&id| graph.op(id).as_comm().unwrap().bw_time > 0.0)
                    .collect();
                let expected = graph
                    .comm_ops()
                    .filter(|c| c.link == *link && c.bw_time > 0.0)
                    .count();
                if ids.len() != expected {
                    return Err(Error::PlanMismatch(format!(
                        "link order for {link:?} lists {} contending transfers, graph has \
                         {expected}",
                        ids.len()
                    )));
                }
                state.queue = Some(ids);
            }
        }
    }

    let mut starts = vec![f64::NAN; n];
    let mut ends = vec![f64::NAN; n];
    let mut ready = vec![0.0f64; n];
    let mut preds_left = vec![0usize; n];
    let mut comm_ready: Vec<Option<f64>> = vec![None; n];
    for op in graph.ops() {
        if let Op::Compute(c) = op {
            preds_left[c.id] = graph.preds(c.id).len();
        }
    }

    let mut cursor = vec![0usize; sequences.len()];
    let mut stage_end = vec![0.0f64; sequences.len()];
    let mut heap: BinaryHeap<std::cmp::Reverse<Event>> = BinaryHeap::new();
    let mut committed = 0usize;
    let total_compute = graph.n_compute();

    // Commits every startable op at the head of a stage's sequence.
    macro_rules! try_start {
        ($stage:expr) => {{
            let s = $stage;
            while cursor[s] < sequences[s].len() {
                let id = sequences[s][cursor[s]];
                if preds_left[id] > 0 {
                    break;
                }
                let start = stage_end[s].max(ready[id]);
                let end = start + graph.op(id).duration();
                starts[id] = start;
                ends[id] = end;
                stage_end[s] = end;
                cursor[s] += 1;
                committed += 1;
                heap.push(std::cmp::Reverse(Event::new(end, 0, id)));
            }
        }};
    }

    // Reserves a transfer's bandwidth window and schedules its delivery.
    macro_rules! reserve {
        ($comm_id:expr, $t_ready:expr) => {{
            let id: OpId = $comm_id;
            let comm = graph.op(id).as_comm().unwrap();
            let state = links.get_mut(&comm.link).unwrap();
            let (ws, we) = state.occupancy.reserve_window($t_ready, comm.bw_time);
            state.sequence.push(id);
            starts[id] = ws;
            ends[id] = we;
            if comm.consumer.is_some() {
                heap.push(std::cmp::Reverse(Event::new(we + comm.latency, 1, id)));
            }
        }};
    }

    // A transfer is serviced once its producer completed and, under a pinned
    // link order, once every earlier-listed transfer reserved its window.
    macro_rules! comm_available {
        ($comm_id:expr, $t_ready:expr) => {{
            let id: OpId = $comm_id;
            let comm = graph.op(id).as_comm().unwrap();
            let link = comm.link;
            if comm.bw_time <= 0.0 || links.get(&link).unwrap().queue.is_none() {
                reserve!(id, $t_ready);
            } else {
                comm_ready[id] = Some($t_ready);
                loop {
                    // Scope the borrow: reserving needs `links` again.
                    let front = {
                        let state = links.get_mut(&link).unwrap();
                        let queue = state.queue.as_ref().unwrap();
                        if state.queue_pos >= queue.len() {
                            None
                        } else {
                            let front = queue[state.queue_pos];
                            comm_ready[front].map(|t| {
                                state.queue_pos += 1;
                                (front, t)
                            })
                        }
                    };
                    match front {
                        Some((front, t)) => reserve!(front, t),
                        None => break,
                    }
                }
            }
        }};
    }

    // Initial transfers (no producing block) are ready at time zero.
    let initial: Vec<OpId> = graph
        .comm_ops()
        .filter(|c| c.producer.is_none())
        .map(|c| c.id)
        .collect();
    for id in initial {
        comm_available!(id, 0.0);
    }
    for s in 0..sequences.len() {
        try_start!(s);
    }

    while let Some(std::cmp::Reverse(event)) = heap.pop() {
        let t = event.time();
        if event.class == 0 {
            // A compute op completed: hand off to its successors.
            for &succ in graph.succs(event.id) {
                match graph.op(succ) {
                    Op::Comm(_) => comm_available!(succ, t),
                    Op::Compute(c) => {
                        preds_left[succ] -= 1;
                        ready[succ] = ready[succ].max(t);
                        try_start!(c.stage);
                    }
                }
            }
        } else {
            // A transfer delivered its payload.
            let comm = graph.op(event.id).as_comm().unwrap();
            let consumer = comm.consumer.unwrap();
            preds_left[consumer] -= 1;
            ready[consumer] = ready[consumer].max(t);
            try_start!(stage_of[consumer]);
        }
    }

    if committed < total_compute {
        return Err(deadlock_report(graph, &sequences, &starts));
    }

    let mut ops = Vec::with_capacity(n);
    for op in graph.ops() {
        let (id, desc) = match op {
            Op::Compute(c) => (
                c.id,
                OpDesc::Compute {
                    stage: c.stage,
                    chunk: c.chunk,
                    block: c.block,
                    mb: c.mb,
                    sub: c.sub_index,
                },
            ),
            Op::Comm(c) => (
                c.id,
                OpDesc::Comm {
                    kind: c.kind,
                    src_stage: c.src_stage,
                    dst_stage: c.dst_stage,
                    chunk: c.chunk,
                    mb: c.mb,
                    link: c.link,
                    latency: c.latency,
                },
            ),
        };
        ops.push(TimelineOp {
            id,
            start: starts[id],
            end: ends[id],
            desc,
        });
    }
    let mut timeline = Timeline {
        ops,
        links: links
            .iter()
            .map(|(l, s)| (*l, s.occupancy.windows().to_vec()))
            .collect(),
        link_sequence: links
            .iter()
            .map(|(l, s)| (*l, s.sequence.clone()))
            .collect(),
        metrics: MetricsReport::default(),
    };
    timeline.metrics = metrics(&timeline, spec);
    Ok(timeline)
}

fn deadlock_report(
    graph: &DependencyGraph,
    sequences: &[Vec<OpId>],
    starts: &[f64],
) -> Error {
    // Combined graph: true dependencies plus the plan's stage chains.
    let n = graph.len();
    let mut adj: Vec<Vec<OpId>> = (0..n).map(|i| graph.succs(i).to_vec()).collect();
    for seq in sequences {
        for w in seq.windows(2) {
            adj[w[0]].push(w[1]);
        }
    }
    // Find a cycle with an iterative DFS.
    let mut color = vec![0u8; n];
    let mut parent = vec![usize::MAX; n];
    for root in 0..n {
        if color[root] != 0 {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        color[root] = 1;
        while let Some(&mut (u, ref mut next)) = stack.last_mut() {
            if *next < adj[u].len() {
                let v = adj[u][*next];
                *next += 1;
                match color[v] {
                    0 => {
                        color[v] = 1;
                        parent[v] = u;
                        stack.push((v, 0));
                    }
                    1 => {
                        // Back edge: reconstruct u -> ... -> v -> u.
                        let mut cycle = vec![u];
                        let mut cur = u;
                        while cur != v {
                            cur = parent[cur];
                            cycle.push(cur);
                        }
                        cycle.reverse();
                        let names: Vec<String> = cycle
                            .iter()
                            .map(|&id| describe_op(graph, id))
                            .collect();
                        return Error::Deadlock(format!(
                            "plan order opposes a true dependency: cycle {}",
                            names.join(" -> ")
                        ));
                    }
                    _ => {}
                }
            } else {
                color[u] = 2;
                stack.pop();
            }
        }
    }
    let stuck = starts.iter().filter(|s| s.is_nan()).count();
    Error::Deadlock(format!("{stuck} ops never became startable"))
}

fn describe_op(graph: &DependencyGraph, id: OpId) -> String {
    match graph.op(id) {
        Op::Compute(c) => format!(
            "stage{} {}(c{},mb{},s{})",
            c.stage, c.block, c.chunk, c.mb, c.sub_index
        ),
        Op::Comm(c) => format!("comm {:?} {}->{}", c.kind, c.src_stage, c.dst_stage),
    }
}

/// Derives the report from a timeline alone; `simulate` uses this same
/// function to fill in its result.
pub fn metrics(timeline: &Timeline, spec: &ProblemSpec) -> MetricsReport {
    let n_stages = spec.n_pp;
    let computes: Vec<&TimelineOp> = timeline
        .ops
        .iter()
        .filter(|o| o.desc.is_compute())
        .collect();

    let global_start = timeline
        .ops
        .iter()
        .map(|o| o.start)
        .fold(f64::INFINITY, f64::min);
    let global_end = timeline.last_end();
    let makespan_global = if timeline.ops.is_empty() {
        0.0
    } else {
        global_end - global_start
    };

    let first_f0 = computes
        .iter()
        .filter(|o| matches!(o.desc, OpDesc::Compute { stage: 0, block: BlockType::F, .. }))
        .map(|o| o.start)
        .fold(f64::INFINITY, f64::min);
    let makespan_stage0 = if first_f0.is_finite() {
        global_end - first_f0
    } else {
        makespan_global
    };

    let n_sub = computes
        .iter()
        .map(|o| match o.desc {
            OpDesc::Compute { sub, .. } => sub + 1,
            _ => 1,
        })
        .max()
        .unwrap_or(1);

    let mut bubble_ratio = vec![0.0; n_stages];
    let mut peak_memory = vec![0.0; n_stages];
    for stage in 0..n_stages {
        let mut ops: Vec<&&TimelineOp> = computes
            .iter()
            .filter(|o| o.desc.stage() == stage)
            .collect();
        if ops.is_empty() {
            continue;
        }
        let w_start = ops.iter().map(|o| o.start).fold(f64::INFINITY, f64::min);
        let w_end = ops.iter().map(|o| o.end).fold(f64::NEG_INFINITY, f64::max);
        let busy: f64 = ops.iter().map(|o| o.end - o.start).sum();
        let window = w_end - w_start;
        if window > TIME_EPS {
            bubble_ratio[stage] = ((window - busy) / window).max(0.0);
        }

        // Peak of the completion-ordered running memory sum. Deltas land on a
        // block's final sub-block, mirroring the attribution rule.
        ops.sort_by(|a, b| a.end.total_cmp(&b.end).then(a.id.cmp(&b.id)));
        let mut run = 0.0f64;
        let mut peak = 0.0f64;
        for o in ops {
            if let OpDesc::Compute { chunk, block, sub, .. } = o.desc {
                if sub + 1 == n_sub {
                    run += match block {
                        BlockType::F => spec.m_f[stage][chunk],
                        BlockType::D => spec.m_d[stage][chunk],
                        BlockType::W => spec.m_w[stage][chunk],
                    };
                }
                peak = peak.max(run);
            }
        }
        peak_memory[stage] = peak;
    }

    let window = (global_end - global_start).max(TIME_EPS);
    let link_utilization = timeline
        .links
        .iter()
        .map(|(l, ws)| (*l, ws.iter().map(|(s, e)| e - s).sum::<f64>() / window))
        .collect();

    MetricsReport {
        makespan_stage0,
        makespan_global,
        bubble_ratio,
        peak_memory,
        link_utilization,
    }
}

/// A machine-readable description of one way a plan is invalid.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    StageCountMismatch {
        plan: usize,
        graph: usize,
    },
    UnknownOp {
        stage: usize,
        key: BlockKey,
    },
    DuplicateOp {
        stage: usize,
        key: BlockKey,
    },
    MissingOp {
        stage: usize,
        key: BlockKey,
    },
    /// The plan orders `earlier` before `later` although `later` must run
    /// first along true dependencies.
    OrderContradiction {
        stage: usize,
        earlier: BlockKey,
        later: BlockKey,
    },
    MicrobatchOrder {
        stage: usize,
        before: BlockKey,
        after: BlockKey,
    },
    MemoryExceeded {
        stage: usize,
        at: BlockKey,
        required: f64,
        limit: f64,
    },
    LinkOrderContradiction {
        link: LinkId,
        earlier: CommKey,
        later: CommKey,
    },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::StageCountMismatch { plan, graph } => {
                write!(f, "plan has {plan} stages, graph has {graph}")
            }
            Violation::UnknownOp { stage, key } => {
                write!(f, "stage {stage}: plan names unknown op {key}")
            }
            Violation::DuplicateOp { stage, key } => {
                write!(f, "stage {stage}: plan repeats op {key}")
            }
            Violation::MissingOp { stage, key } => {
                write!(f, "stage {stage}: plan misses op {key}")
            }
            Violation::OrderContradiction { stage, earlier, later } => write!(
                f,
                "stage {stage}: {earlier} is planned before {later} but depends on it"
            ),
            Violation::MicrobatchOrder { stage, before, after } => write!(
                f,
                "stage {stage}: {before} planned before {after} breaks microbatch order"
            ),
            Violation::MemoryExceeded { stage, at, required, limit } => write!(
                f,
                "stage {stage}: starting {at} needs {required} bytes, budget is {limit}"
            ),
            Violation::LinkOrderContradiction { link, earlier, later } => write!(
                f,
                "link {link:?}: {earlier:?} listed before {later:?} but depends on it"
            ),
        }
    }
}

/// Checks a plan for completeness, dependency consistency, microbatch order
/// and memory feasibility. An empty result means the plan is valid.
pub fn validate_schedule(
    graph: &DependencyGraph,
    plan: &SchedulePlan,
    spec: &ProblemSpec,
) -> Vec<Violation> {
    let mut out = Vec::new();
    if plan.n_stages() != graph.n_stages() {
        out.push(Violation::StageCountMismatch {
            plan: plan.n_stages(),
            graph: graph.n_stages(),
        });
        return out;
    }

    let index = graph.compute_index();
    let mut seen = vec![false; graph.len()];
    let mut sequences: Vec<Vec<Option<OpId>>> = Vec::with_capacity(plan.n_stages());
    for (stage, keys) in plan.stages.iter().enumerate() {
        let mut seq = Vec::with_capacity(keys.len());
        for key in keys {
            match index.get(&(stage, *key)) {
                None => {
                    out.push(Violation::UnknownOp { stage, key: *key });
                    seq.push(None);
                }
                Some(&id) => {
                    if seen[id] {
                        out.push(Violation::DuplicateOp { stage, key: *key });
                        seq.push(None);
                    } else {
                        seen[id] = true;
                        seq.push(Some(id));
                    }
                }
            }
        }
        sequences.push(seq);
    }
    for op in graph.compute_ops() {
        if !seen[op.id] {
            out.push(Violation::MissingOp {
                stage: op.stage,
                key: BlockKey(op.chunk, op.block, op.mb, op.sub_index),
            });
        }
    }

    let reach = graph.reachability();
    for (stage, seq) in sequences.iter().enumerate() {
        let ids: Vec<OpId> = seq.iter().flatten().copied().collect();
        for i in 0..ids.len() {
            for j in i + 1..ids.len() {
                if reach.reaches(ids[j], ids[i]) {
                    let (_, earlier) = graph.block_key(ids[i]).unwrap();
                    let (_, later) = graph.block_key(ids[j]).unwrap();
                    out.push(Violation::OrderContradiction { stage, earlier, later });
                }
            }
        }

        // Microbatch order: within (chunk, type), (mb, sub) must increase.
        let mut last: HashMap<(usize, BlockType), (usize, usize)> = HashMap::new();
        for &id in &ids {
            let (_, key) = graph.block_key(id).unwrap();
            if let Some(&prev) = last.get(&(key.chunk(), key.block())) {
                if (key.mb(), key.sub()) <= prev {
                    let before = BlockKey(key.chunk(), key.block(), prev.0, prev.1);
                    out.push(Violation::MicrobatchOrder { stage, before, after: key });
                }
            }
            last.insert((key.chunk(), key.block()), (key.mb(), key.sub()));
        }

        // Memory feasibility: running sum of deltas at completion, plus the
        // headroom rule before starting an F block.
        let limit = spec.m_limit[stage];
        let tol = 1e-9 * limit.abs().max(1.0);
        let mut run = 0.0f64;
        for &id in &ids {
            let c = graph.op(id).as_compute().unwrap();
            if c.block == BlockType::F && c.sub_index == 0 {
                let block_alloc = spec.m_f[stage][c.chunk];
                if run + block_alloc > limit + tol {
                    out.push(Violation::MemoryExceeded {
                        stage,
                        at: BlockKey(c.chunk, c.block, c.mb, c.sub_index),
                        required: run + block_alloc,
                        limit,
                    });
                }
            }
            run += c.mem_delta;
        }
    }

    // A pinned link order must not oppose true-dependency reachability.
    if let Some(order) = &plan.link_order {
        let comm_index = graph.comm_index();
        for (link, keys) in order {
            let ids: Vec<Option<OpId>> =
                keys.iter().map(|k| comm_index.get(k).copied()).collect();
            for i in 0..ids.len() {
                for j in i + 1..ids.len() {
                    if let (Some(a), Some(b)) = (ids[i], ids[j]) {
                        if reach.reaches(b, a) {
                            out.push(Violation::LinkOrderContradiction {
                                link: *link,
                                earlier: keys[i],
                                later: keys[j],
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

/// Extracts a binding-constraint chain from the op finishing last back to
/// time zero, following whichever predecessor pinned each start time.
/// Returns the ops on the path in execution order.
pub fn critical_path(
    graph: &DependencyGraph,
    plan: &SchedulePlan,
    timeline: &Timeline,
) -> Vec<OpId> {
    let tol = 1e-9;
    let sequences = match stage_sequences(graph, plan) {
        Ok(s) => s,
        Err(_) => return Vec::new(),
    };
    let mut stage_prev: HashMap<OpId, OpId> = HashMap::new();
    for seq in &sequences {
        for w in seq.windows(2) {
            stage_prev.insert(w[1], w[0]);
        }
    }
    // Transfers keyed by (link, window end) resolve link-queue edges.
    let mut by_link_end: HashMap<LinkId, Vec<OpId>> = HashMap::new();
    for c in graph.comm_ops() {
        by_link_end.entry(c.link).or_default().push(c.id);
    }

    let mut cur = match timeline
        .ops
        .iter()
        .max_by(|a, b| a.end.total_cmp(&b.end).then(b.id.cmp(&a.id)))
    {
        Some(o) => o.id,
        None => return Vec::new(),
    };
    let mut path = vec![cur];
    let mut guard = 0;
    while timeline.start(cur) > tol && guard < timeline.ops.len() * 2 {
        guard += 1;
        let start = timeline.start(cur);
        let mut next = None;
        match graph.op(cur) {
            Op::Compute(_) => {
                for &p in graph.preds(cur) {
                    let delivery = match graph.op(p) {
                        Op::Comm(c) => timeline.end(p) + c.latency,
                        Op::Compute(_) => timeline.end(p),
                    };
                    if (delivery - start).abs() <= tol {
                        next = Some(p);
                        break;
                    }
                }
                if next.is_none() {
                    if let Some(&prev) = stage_prev.get(&cur) {
                        if (timeline.end(prev) - start).abs() <= tol {
                            next = Some(prev);
                        }
                    }
                }
            }
            Op::Comm(c) => {
                if let Some(p) = c.producer {
                    if (timeline.end(p) - start).abs() <= tol {
                        next = Some(p);
                    }
                }
                if next.is_none() {
                    // Queued behind another transfer on the same link.
                    if let Some(cands) = by_link_end.get(&c.link) {
                        next = cands
                            .iter()
                            .find(|&&o| o != cur && (timeline.end(o) - start).abs() <= tol)
                            .copied();
                    }
                }
                if next.is_none() {
                    next = c.producer;
                }
            }
        }
        match next {
            Some(p) if !path.contains(&p) => {
                path.push(p);
                cur = p;
            }
            _ => break,
        }
    }
    path.reverse();
    path
}

/// Number of cross-DC transfers on a path.
pub fn count_dc_crossings(graph: &DependencyGraph, path: &[OpId]) -> usize {
    path.iter()
        .filter(|&&id| matches!(graph.op(id), Op::Comm(c) if c.link.0 != c.link.1))
        .count()
}
