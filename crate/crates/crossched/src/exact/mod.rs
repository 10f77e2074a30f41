//! Exact schedule optimization: the constraint model over start times and
//! pairwise ordering decisions, solved by branch and bound for small
//! instances, plus export to the LP text format for external solvers.
//!
//! The search branches on the orientation of one overlapping same-resource
//! pair at a time. At every node a capacity-relaxed earliest-start schedule
//! bounds the objective from below; when no two operations sharing a device
//! or link overlap, the relaxed schedule is feasible and the node is a leaf.
//! Leaves are evaluated through the same timing semantics the simulator
//! uses, so the returned makespan is exactly what re-simulating the returned
//! plan yields.

mod lp;

pub use lp::{export_lp, render_lp};

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::graph::{BlockType, CommKey, DependencyGraph, LinkId, Op, OpId};
use crate::greedy::generate_greedy;
use crate::plan::{Family, SchedulePlan};
use crate::problem::{PatternTag, ProblemSpec};
use crate::sim::simulate;
use crate::static_schedules::build_static;
use crate::timeline::{OpDesc, Timeline};

/// Deterministic node budget per wall-clock second of solver budget, so runs
/// are reproducible across machines.
pub const NODES_PER_SECOND: u64 = 25_000;

const LOCAL_SEARCH_SIMS: usize = 600;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResourceKind {
    Stage(usize),
    Link(LinkId),
}

#[derive(Debug, Clone)]
pub struct Resource {
    pub kind: ResourceKind,
    pub ops: Vec<OpId>,
}

/// The constraint model: operations with durations and latencies, resource
/// membership, ordering variables for operations sharing a device or link,
/// completion-order indicators for the memory constraint and a horizon
/// constant bounding any schedule.
pub struct COModel {
    pub graph: DependencyGraph,
    pub spec: ProblemSpec,
    pub horizon: f64,
    pub resources: Vec<Resource>,
    /// One binary order variable per unordered pair sharing a resource.
    pub x_pairs: Vec<(OpId, OpId)>,
    /// One binary completion indicator per ordered same-stage compute pair.
    pub u_pairs: Vec<(OpId, OpId)>,
    /// Forced microbatch-order edges within (stage, chunk, type).
    pub mb_edges: Vec<(OpId, OpId)>,
}

/// Assembles the constraint model for a graph.
pub fn build_model(graph: &DependencyGraph, spec: &ProblemSpec) -> COModel {
    let mut horizon = 0.0;
    for op in graph.ops() {
        horizon += op.duration();
        if let Op::Comm(c) = op {
            horizon += c.latency;
        }
    }

    let mut resources = Vec::new();
    for stage in 0..graph.n_stages() {
        let ops = graph.stage_ops(stage);
        resources.push(Resource {
            kind: ResourceKind::Stage(stage),
            ops,
        });
    }
    let mut link_members: HashMap<LinkId, Vec<OpId>> = HashMap::new();
    for c in graph.comm_ops() {
        link_members.entry(c.link).or_default().push(c.id);
    }
    let mut links: Vec<(LinkId, Vec<OpId>)> = link_members.into_iter().collect();
    links.sort_by_key(|(l, _)| *l);
    for (link, ops) in links {
        resources.push(Resource {
            kind: ResourceKind::Link(link),
            ops,
        });
    }

    let mut x_pairs = Vec::new();
    for r in &resources {
        for i in 0..r.ops.len() {
            for j in i + 1..r.ops.len() {
                x_pairs.push((r.ops[i], r.ops[j]));
            }
        }
    }
    let mut u_pairs = Vec::new();
    for r in resources.iter().filter(|r| matches!(r.kind, ResourceKind::Stage(_))) {
        for &p in &r.ops {
            for &q in &r.ops {
                if p != q {
                    u_pairs.push((p, q));
                }
            }
        }
    }

    let mut groups: HashMap<(usize, usize, BlockType), Vec<OpId>> = HashMap::new();
    for c in graph.compute_ops() {
        groups.entry((c.stage, c.chunk, c.block)).or_default().push(c.id);
    }
    let mut mb_edges = Vec::new();
    let mut keys: Vec<_> = groups.keys().copied().collect();
    keys.sort();
    for key in keys {
        let mut ids = groups.remove(&key).unwrap();
        ids.sort_by_key(|&id| {
            let c = graph.op(id).as_compute().unwrap();
            (c.mb, c.sub_index)
        });
        for w in ids.windows(2) {
            mb_edges.push((w[0], w[1]));
        }
    }

    COModel {
        graph: graph.clone(),
        spec: spec.clone(),
        horizon,
        resources,
        x_pairs,
        u_pairs,
        mb_edges,
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub plan: SchedulePlan,
    pub timeline: Timeline,
    /// Stage-0 span: first start on stage 0 to the last completion on
    /// stage 0 (extended over DP transfers when present).
    pub makespan: f64,
    /// Last completion anywhere minus first start anywhere.
    pub makespan_global: f64,
    /// Whether the search proved the result within the 1% gap rule.
    pub optimal: bool,
    pub nodes_explored: u64,
}

/// The objective the solver minimizes, measured on a timeline.
pub fn stage0_span(timeline: &Timeline) -> f64 {
    let mut first = f64::INFINITY;
    let mut last = f64::NEG_INFINITY;
    for op in &timeline.ops {
        match &op.desc {
            OpDesc::Compute { stage: 0, .. } => {
                first = first.min(op.start);
                last = last.max(op.end);
            }
            OpDesc::Comm {
                kind: crate::graph::CommKind::DpSync | crate::graph::CommKind::DpAllgather,
                latency,
                ..
            } => {
                last = last.max(op.end + latency);
            }
            _ => {}
        }
    }
    if first.is_finite() && last.is_finite() {
        last - first
    } else {
        0.0
    }
}

struct Search<'a> {
    model: &'a COModel,
    n: usize,
    /// Dependency edges (true + microbatch), weight = producer duration plus
    /// its latency on delivery edges.
    dep_succ: Vec<Vec<(OpId, f64)>>,
    /// Orientation decisions, as a stack for backtracking.
    decided: Vec<(OpId, OpId)>,
    /// Branchable members per resource: computes, and transfers that occupy
    /// bandwidth.
    contenders: Vec<Vec<OpId>>,
    durations: Vec<f64>,
    stage0_work: f64,
    f0_upper: f64,
    span_targets: Vec<(OpId, f64)>,
    incumbent: f64,
    best: Option<LeafOrders>,
    nodes: u64,
    node_budget: u64,
    root_lb: f64,
}

const EPS: f64 = 1e-9;

/// Per-stage and per-link execution orders of a leaf.
type LeafOrders = (Vec<Vec<OpId>>, Vec<(LinkId, Vec<OpId>)>);

impl<'a> Search<'a> {
    fn new(model: &'a COModel, node_budget: u64) -> Self {
        let n = model.graph.len();
        let mut dep_succ: Vec<Vec<(OpId, f64)>> = vec![Vec::new(); n];
        for op in model.graph.ops() {
            let (dur, lat) = match op {
                Op::Compute(c) => (c.duration, 0.0),
                Op::Comm(c) => (c.bw_time, c.latency),
            };
            for &s in model.graph.succs(op.id()) {
                dep_succ[op.id()].push((s, dur + lat));
            }
        }
        for &(a, b) in &model.mb_edges {
            dep_succ[a].push((b, model.graph.op(a).duration()));
        }

        let contenders = model
            .resources
            .iter()
            .map(|r| match r.kind {
                ResourceKind::Stage(_) => r.ops.clone(),
                ResourceKind::Link(_) => r
                    .ops
                    .iter()
                    .copied()
                    .filter(|&id| model.graph.op(id).duration() > 0.0)
                    .collect(),
            })
            .collect();

        let durations: Vec<f64> = (0..n).map(|i| model.graph.op(i).duration()).collect();
        let stage0_work: f64 = model
            .graph
            .compute_ops()
            .filter(|c| c.stage == 0)
            .map(|c| c.duration)
            .sum();
        // Objective targets: stage-0 computes, plus every DP transfer
        // (delivery included) when the model carries DP overlap.
        let mut span_targets: Vec<(OpId, f64)> = model
            .graph
            .compute_ops()
            .filter(|c| c.stage == 0)
            .map(|c| (c.id, c.duration))
            .collect();
        for c in model.graph.comm_ops() {
            if matches!(
                c.kind,
                crate::graph::CommKind::DpSync | crate::graph::CommKind::DpAllgather
            ) {
                span_targets.push((c.id, c.bw_time + c.latency));
            }
        }
        // The stage-0 clock starts at zero unless an initial transfer gates
        // the first forward block, in which case the bound stays loose.
        let f0_upper = if model.graph.comm_ops().any(|c| c.producer.is_none()) {
            model.horizon
        } else {
            0.0
        };

        Search {
            model,
            n,
            dep_succ,
            decided: Vec::new(),
            contenders,
            durations,
            stage0_work,
            f0_upper,
            span_targets,
            incumbent: f64::INFINITY,
            best: None,
            nodes: 0,
            node_budget,
            root_lb: 0.0,
        }
    }

    /// Capacity-relaxed earliest start times under the current decisions, or
    /// `None` when the decisions form a cycle.
    fn relaxed(&self) -> Option<Vec<f64>> {
        let mut indeg = vec![0usize; self.n];
        for u in 0..self.n {
            for &(v, _) in &self.dep_succ[u] {
                indeg[v] += 1;
            }
        }
        let mut extra_succ: Vec<Vec<OpId>> = vec![Vec::new(); self.n];
        for &(a, b) in &self.decided {
            extra_succ[a].push(b);
            indeg[b] += 1;
        }
        let mut start = vec![0.0f64; self.n];
        let mut stack: Vec<OpId> = (0..self.n).filter(|&u| indeg[u] == 0).collect();
        stack.reverse();
        let mut seen = 0;
        while let Some(u) = stack.pop() {
            seen += 1;
            for &(v, w) in &self.dep_succ[u] {
                start[v] = start[v].max(start[u] + w);
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    stack.push(v);
                }
            }
            for &v in &extra_succ[u] {
                start[v] = start[v].max(start[u] + self.durations[u]);
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    stack.push(v);
                }
            }
        }
        (seen == self.n).then_some(start)
    }

    fn lower_bound(&self, start: &[f64]) -> f64 {
        let last = self
            .span_targets
            .iter()
            .map(|&(id, tail)| start[id] + tail)
            .fold(0.0, f64::max);
        (last - self.f0_upper).max(self.stage0_work)
    }

    /// The most-overlapping undecided same-resource pair, if any.
    fn conflict(&self, start: &[f64]) -> Option<(OpId, OpId)> {
        let mut best: Option<(f64, OpId, OpId)> = None;
        for members in &self.contenders {
            for i in 0..members.len() {
                for j in i + 1..members.len() {
                    let (a, b) = (members[i], members[j]);
                    let (sa, ea) = (start[a], start[a] + self.durations[a]);
                    let (sb, eb) = (start[b], start[b] + self.durations[b]);
                    let overlap = ea.min(eb) - sa.max(sb);
                    if overlap > EPS {
                        match best {
                            Some((o, _, _)) if o >= overlap => {}
                            _ => best = Some((overlap, a, b)),
                        }
                    }
                }
            }
        }
        best.map(|(_, a, b)| (a, b))
    }

    /// Per-resource execution orders implied by a conflict-free relaxed
    /// schedule.
    fn leaf_orders(&self, start: &[f64]) -> LeafOrders {
        let mut stages = Vec::new();
        let mut links = Vec::new();
        for (r, members) in self.model.resources.iter().zip(&self.contenders) {
            let mut ids = members.clone();
            ids.sort_by(|&a, &b| start[a].total_cmp(&start[b]).then(a.cmp(&b)));
            match r.kind {
                ResourceKind::Stage(_) => stages.push(ids),
                ResourceKind::Link(l) => links.push((l, ids)),
            }
        }
        (stages, links)
    }

    /// Checks the memory rule along a stage order; on failure returns the
    /// blocking F op and the repair alternatives.
    fn memory_conflict(&self, stages: &[Vec<OpId>]) -> Option<Vec<(OpId, OpId)>> {
        let spec = &self.model.spec;
        for (stage, order) in stages.iter().enumerate() {
            let limit = spec.m_limit[stage];
            let tol = 1e-9 * limit.abs().max(1.0);
            let mut run = 0.0f64;
            for (pos, &id) in order.iter().enumerate() {
                let c = self.model.graph.op(id).as_compute().unwrap();
                if c.block == BlockType::F && c.sub_index == 0 {
                    let alloc = spec.m_f[stage][c.chunk];
                    if run + alloc > limit + tol {
                        // Feasible extensions either pull a release before
                        // this F or push an earlier allocation after it.
                        let mut alts = Vec::new();
                        for &r in &order[pos..] {
                            if self.model.graph.op(r).as_compute().unwrap().mem_delta < 0.0 {
                                alts.push((r, id));
                            }
                        }
                        for &p in &order[..pos] {
                            if self.model.graph.op(p).as_compute().unwrap().mem_delta > 0.0 {
                                alts.push((id, p));
                            }
                        }
                        return Some(alts);
                    }
                }
                run += c.mem_delta;
            }
        }
        None
    }

    fn explore(&mut self) {
        if self.nodes >= self.node_budget {
            return;
        }
        self.nodes += 1;
        let Some(start) = self.relaxed() else { return };
        let lb = self.lower_bound(&start);
        if self.nodes == 1 {
            self.root_lb = lb;
        }
        if lb >= self.incumbent - EPS {
            return;
        }
        if let Some((a, b)) = self.conflict(&start) {
            let first_a = start[a] <= start[b];
            let trials = if first_a { [(a, b), (b, a)] } else { [(b, a), (a, b)] };
            for (x, y) in trials {
                self.decided.push((x, y));
                self.explore();
                self.decided.pop();
                if self.nodes >= self.node_budget {
                    return;
                }
            }
            return;
        }
        let (stages, links) = self.leaf_orders(&start);
        if let Some(alts) = self.memory_conflict(&stages) {
            for (x, y) in alts {
                self.decided.push((x, y));
                self.explore();
                self.decided.pop();
                if self.nodes >= self.node_budget {
                    return;
                }
            }
            return;
        }
        let value = self.lower_bound(&start);
        if value < self.incumbent - EPS {
            self.incumbent = value;
            self.best = Some((stages, links));
        }
    }
}

/// Converts per-resource op orders into a plan.
fn orders_to_plan(
    model: &COModel,
    family: &str,
    generator: &str,
    stages: &[Vec<OpId>],
    links: &[(LinkId, Vec<OpId>)],
) -> SchedulePlan {
    let graph = &model.graph;
    let n_sub = graph
        .compute_ops()
        .map(|c| c.sub_index + 1)
        .max()
        .unwrap_or(1);
    let mut plan = SchedulePlan::new(family, generator, n_sub, model.spec.m_limit.clone());
    for (stage, ids) in stages.iter().enumerate() {
        plan.stages[stage] = ids
            .iter()
            .map(|&id| graph.block_key(id).unwrap().1)
            .collect();
    }
    let link_order: Vec<(LinkId, Vec<CommKey>)> = links
        .iter()
        .map(|(l, ids)| {
            (
                *l,
                ids.iter().map(|&id| graph.comm_key(id).unwrap()).collect(),
            )
        })
        .collect();
    if !link_order.is_empty() {
        plan.link_order = Some(link_order);
    }
    plan
}

fn family_for(spec: &ProblemSpec, n_sub: usize) -> &'static str {
    match spec.pattern {
        PatternTag::Ud if n_sub > 1 => "cross-ud-sub",
        PatternTag::Ud => "cross-ud",
        PatternTag::Wave => "cross-wave",
        PatternTag::Loop => "cross-loop",
        PatternTag::Bd => "cross-bd",
    }
}

/// Pins the realized reservation order of a timeline into the plan so the
/// returned schedule replays identically.
fn pin_link_order(graph: &DependencyGraph, plan: &mut SchedulePlan, timeline: &Timeline) {
    let order: Vec<(LinkId, Vec<CommKey>)> = timeline
        .link_sequence
        .iter()
        .map(|(l, ids)| {
            (
                *l,
                ids.iter()
                    .filter(|&&id| graph.op(id).duration() > 0.0)
                    .map(|&id| graph.comm_key(id).unwrap())
                    .collect(),
            )
        })
        .collect();
    if !order.is_empty() {
        plan.link_order = Some(order);
    }
}

/// First-improvement hill climb over adjacent transpositions of the stage
/// orders, evaluated by full simulation.
fn local_search(
    model: &COModel,
    mut plan: SchedulePlan,
    mut best_value: f64,
    max_sims: usize,
) -> (SchedulePlan, f64) {
    let mut sims = 0;
    let mut improved = true;
    while improved && sims < max_sims {
        improved = false;
        'stages: for stage in 0..plan.n_stages() {
            for i in 0..plan.stages[stage].len().saturating_sub(1) {
                if plan.stages[stage][i] == plan.stages[stage][i + 1] {
                    continue;
                }
                plan.stages[stage].swap(i, i + 1);
                sims += 1;
                let candidate = simulate(&model.graph, &plan, &model.spec)
                    .ok()
                    .filter(|tl| {
                        crate::sim::validate_schedule(&model.graph, &plan, &model.spec).is_empty()
                            && stage0_span(tl) < best_value - EPS
                    });
                match candidate {
                    Some(tl) => {
                        best_value = stage0_span(&tl);
                        improved = true;
                    }
                    None => plan.stages[stage].swap(i, i + 1),
                }
                if sims >= max_sims {
                    break 'stages;
                }
            }
        }
    }
    (plan, best_value)
}

/// Branch-and-bound search for the minimum stage-0 span. Seeds the incumbent
/// with the greedy generator (UD) or the wave layout (Wave) plus local
/// search, then explores orientation decisions until the node budget derived
/// from `budget_secs` runs out or the 1% gap rule proves optimality.
pub fn solve_exact(model: &COModel, budget_secs: f64) -> Result<SolveOutcome> {
    if budget_secs <= 0.0 {
        return Err(Error::Validation("solver budget must be positive".into()));
    }
    let node_budget = ((budget_secs * NODES_PER_SECOND as f64) as u64).max(1);
    let spec = &model.spec;
    let n_sub = model
        .graph
        .compute_ops()
        .map(|c| c.sub_index + 1)
        .max()
        .unwrap_or(1);
    let family = family_for(spec, n_sub);

    // Seed the incumbent.
    let mut seed: Option<(SchedulePlan, f64)> = None;
    match spec.pattern {
        PatternTag::Ud if spec.dp_overlap.is_none() => {
            let mut greedy_spec = spec.clone();
            greedy_spec.n_sub = n_sub;
            if let Ok((plan, tl)) = generate_greedy(&greedy_spec) {
                seed = Some((plan, stage0_span(&tl)));
            }
        }
        PatternTag::Wave if n_sub == 1 && spec.n_mb >= spec.n_pp => {
            if let Ok(plan) = build_static(spec, Family::ZbV) {
                if let Ok(tl) = simulate(&model.graph, &plan, spec) {
                    seed = Some((plan, stage0_span(&tl)));
                }
            }
        }
        _ => {}
    }
    if let Some((plan, value)) = seed.take() {
        let polished = local_search(model, plan, value, LOCAL_SEARCH_SIMS);
        seed = Some(polished);
    }

    let mut search = Search::new(model, node_budget);
    if let Some((_, value)) = &seed {
        search.incumbent = *value;
    }
    search.explore();
    let exhausted = search.nodes < search.node_budget;

    let (mut plan, from_search) = match (&search.best, seed) {
        (Some((stages, links)), _) => (
            orders_to_plan(model, family, "exact", stages, links),
            true,
        ),
        (None, Some((plan, _))) => (plan, false),
        (None, None) => {
            return Err(if exhausted {
                Error::MemoryInfeasible(
                    "no ordering satisfies the memory limits".into(),
                )
            } else {
                Error::Infeasible(
                    "node budget exhausted before any feasible schedule was found".into(),
                )
            })
        }
    };
    plan.family = family.to_string();
    plan.generator = if from_search { "exact" } else { "exact(seed)" }.to_string();

    let timeline = simulate(&model.graph, &plan, spec)?;
    pin_link_order(&model.graph, &mut plan, &timeline);
    let makespan = stage0_span(&timeline);
    let gap_ok = makespan > 0.0 && (makespan - search.root_lb) / makespan <= 0.01;
    Ok(SolveOutcome {
        makespan,
        makespan_global: timeline.metrics.makespan_global,
        plan,
        timeline,
        optimal: exhausted || gap_ok,
        nodes_explored: search.nodes,
    })
}
