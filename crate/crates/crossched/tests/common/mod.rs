//! Shared test oracles, all independent of the library's event-driven
//! simulator: a fixed-point timing evaluator, an exhaustive schedule
//! enumerator, a brute-force interpreter for exported LP files and a
//! deterministic RNG for randomized instances.

#![allow(dead_code)]

use std::collections::HashMap;

use crossched::graph::{BlockType, DependencyGraph, LinkId, Op, OpId};
use crossched::problem::{PatternTag, ProblemBuilder, ProblemSpec};

/// A small random instance with at most 14 compute ops. Durations, delays
/// and memory quantities are dyadic so oracle arithmetic is exact.
pub fn random_tiny_instance(rng: &mut Rng) -> ProblemSpec {
    let shape = rng.below(4);
    let (pattern, n_pp, n_mb, chunks) = match shape {
        0 => (PatternTag::Ud, 2, 2, 1),
        1 => (PatternTag::Ud, 2, 1, 1),
        2 => (PatternTag::Wave, 2, 1, 2),
        _ => (PatternTag::Ud, 4, 1, 1),
    };
    let m_f = 2.0;
    let m_d = -(rng.below(2) as f64 * 0.5 + 0.5); // -0.5 or -1.0
    let tight = rng.below(3) == 0;
    let limit = if tight {
        m_f * (1 + rng.below(2)) as f64
    } else {
        m_f * n_pp as f64 * 2.0
    };
    ProblemBuilder::new(pattern, n_pp, n_mb)
        .chunks(chunks)
        .durations(rng.dyadic() + 0.25, rng.dyadic() + 0.25, rng.dyadic() + 0.25)
        .memory(m_f, m_d)
        .mem_limit_uniform(limit)
        .dcs(2)
        .cross_delay(rng.dyadic() * 0.5, rng.dyadic() * 0.5)
        .message_bytes(1.0)
        .build()
        .unwrap()
}

/// xorshift64*, deterministic across platforms.
pub struct Rng(u64);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(seed.max(1))
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x.wrapping_mul(0x2545F4914F6CDD1D)
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    /// A dyadic rational in (0, 1]: k/64 for k in 1..=64. Dyadic inputs keep
    /// every simulated time exact in f64, so oracles can compare exactly.
    pub fn dyadic(&mut self) -> f64 {
        (self.below(64) + 1) as f64 / 64.0
    }
}

/// Fixed-point evaluation of a complete schedule: per-stage compute orders
/// plus per-link reservation orders over bandwidth-occupying transfers.
/// Sweeps the dependency equations until times stop changing. Returns
/// `(start, end)` per op, or `None` when the orders deadlock.
pub fn fixed_point_times(
    graph: &DependencyGraph,
    stage_orders: &[Vec<OpId>],
    link_orders: &[(LinkId, Vec<OpId>)],
    _spec: &ProblemSpec,
) -> Option<Vec<(f64, f64)>> {
    let n = graph.len();
    let mut start = vec![0.0f64; n];
    let mut end = vec![0.0f64; n];
    let link_of: HashMap<LinkId, &Vec<OpId>> =
        link_orders.iter().map(|(l, ids)| (*l, ids)).collect();

    let max_passes = 2 * n + 4;
    for pass in 0..max_passes {
        let mut changed = false;
        let set = |idx: usize, s: f64, e: f64, start: &mut Vec<f64>, end: &mut Vec<f64>| {
            if (start[idx] - s).abs() > 0.0 || (end[idx] - e).abs() > 0.0 {
                start[idx] = s;
                end[idx] = e;
                true
            } else {
                false
            }
        };

        // Compute ops: after the previous op on the stage and all deliveries.
        for order in stage_orders {
            let mut prev_end = 0.0f64;
            for &id in order {
                let op = graph.op(id).as_compute().unwrap();
                let mut ready = prev_end;
                for &p in graph.preds(id) {
                    let delivery = match graph.op(p) {
                        Op::Comm(c) => end[p] + c.latency,
                        Op::Compute(_) => end[p],
                    };
                    ready = ready.max(delivery);
                }
                changed |= set(id, ready, ready + op.duration, &mut start, &mut end);
                prev_end = ready + op.duration;
            }
        }

        // Transfers: first-fit windows in the listed reservation order;
        // zero-width transfers transmit at readiness.
        let mut placed: HashMap<LinkId, Vec<(f64, f64)>> = HashMap::new();
        for comm in graph.comm_ops() {
            if comm.bw_time > 0.0 {
                continue;
            }
            let ready = comm.producer.map(|p| end[p]).unwrap_or(0.0);
            changed |= set(comm.id, ready, ready, &mut start, &mut end);
        }
        for (link, ids) in &link_of {
            let windows = placed.entry(*link).or_default();
            for &id in ids.iter() {
                let comm = graph.op(id).as_comm().unwrap();
                let ready = comm.producer.map(|p| end[p]).unwrap_or(0.0);
                let ws = first_fit(windows, ready, comm.bw_time);
                windows.push((ws, ws + comm.bw_time));
                windows.sort_by(|a, b| a.0.total_cmp(&b.0));
                changed |= set(id, ws, ws + comm.bw_time, &mut start, &mut end);
            }
        }

        if !changed {
            return Some(start.into_iter().zip(end).collect());
        }
        if pass + 1 == max_passes {
            return None; // beyond any DAG's propagation depth: a cycle
        }
    }
    None
}

fn first_fit(windows: &[(f64, f64)], ready: f64, width: f64) -> f64 {
    if width <= 0.0 {
        return ready;
    }
    let mut candidate = ready;
    for &(s, e) in windows {
        if e <= candidate + 1e-12 {
            continue;
        }
        if s >= candidate + width - 1e-12 {
            return candidate;
        }
        candidate = candidate.max(e);
    }
    candidate
}

/// Stage-0 span of a times vector: first stage-0 compute start to last
/// stage-0 compute end.
pub fn span_of(graph: &DependencyGraph, times: &[(f64, f64)]) -> f64 {
    let mut first = f64::INFINITY;
    let mut last = 0.0f64;
    for c in graph.compute_ops().filter(|c| c.stage == 0) {
        first = first.min(times[c.id].0);
        last = last.max(times[c.id].1);
    }
    last - first
}

/// All valid execution orders of one stage: every interleaving respecting
/// true-dependency reachability and microbatch order.
fn stage_orders(graph: &DependencyGraph, reach: &crossched::graph::Reachability, stage: usize) -> Vec<Vec<OpId>> {
    let ops = graph.stage_ops(stage);
    // Same-stage precedence: reachability plus microbatch order.
    let mut pred_mask: HashMap<OpId, Vec<OpId>> = HashMap::new();
    for &a in &ops {
        for &b in &ops {
            if a == b {
                continue;
            }
            let ca = graph.op(a).as_compute().unwrap();
            let cb = graph.op(b).as_compute().unwrap();
            let mb_order = ca.chunk == cb.chunk
                && ca.block == cb.block
                && (ca.mb, ca.sub_index) < (cb.mb, cb.sub_index);
            if reach.reaches(a, b) || mb_order {
                pred_mask.entry(b).or_default().push(a);
            }
        }
    }
    let mut out = Vec::new();
    let mut current = Vec::new();
    let mut used = vec![false; ops.len()];
    fn rec(
        ops: &[OpId],
        pred_mask: &HashMap<OpId, Vec<OpId>>,
        used: &mut Vec<bool>,
        current: &mut Vec<OpId>,
        out: &mut Vec<Vec<OpId>>,
    ) {
        if current.len() == ops.len() {
            out.push(current.clone());
            return;
        }
        for (i, &op) in ops.iter().enumerate() {
            if used[i] {
                continue;
            }
            let ready = pred_mask
                .get(&op)
                .map(|ps| ps.iter().all(|p| current.contains(p)))
                .unwrap_or(true);
            if ready {
                used[i] = true;
                current.push(op);
                rec(ops, pred_mask, used, current, out);
                current.pop();
                used[i] = false;
            }
        }
    }
    rec(&ops, &pred_mask, &mut used, &mut current, &mut out);
    out
}

fn permutations(ids: &[OpId]) -> Vec<Vec<OpId>> {
    if ids.is_empty() {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for (i, &x) in ids.iter().enumerate() {
        let mut rest = ids.to_vec();
        rest.remove(i);
        for mut tail in permutations(&rest) {
            let mut v = vec![x];
            v.append(&mut tail);
            out.push(v);
        }
    }
    out
}

/// Memory feasibility of per-stage orders under the completion-sum rule with
/// the forward headroom check.
pub fn memory_ok(graph: &DependencyGraph, spec: &ProblemSpec, stage_orders: &[Vec<OpId>]) -> bool {
    for (stage, order) in stage_orders.iter().enumerate() {
        let limit = spec.m_limit[stage];
        let tol = 1e-9 * limit.abs().max(1.0);
        let mut run = 0.0f64;
        for &id in order {
            let c = graph.op(id).as_compute().unwrap();
            if c.block == BlockType::F && c.sub_index == 0 && run + spec.m_f[stage][c.chunk] > limit + tol
            {
                return false;
            }
            run += c.mem_delta;
        }
    }
    true
}

/// Exhaustive minimum stage-0 span over every valid combination of stage
/// orders and link reservation orders. Only practical for tiny instances.
pub fn enumerate_min_span(graph: &DependencyGraph, spec: &ProblemSpec) -> Option<f64> {
    let reach = graph.reachability();
    let per_stage: Vec<Vec<Vec<OpId>>> = (0..graph.n_stages())
        .map(|s| stage_orders(graph, &reach, s))
        .collect();

    let mut link_groups: Vec<(LinkId, Vec<OpId>)> = Vec::new();
    for c in graph.comm_ops().filter(|c| c.bw_time > 0.0) {
        match link_groups.iter_mut().find(|(l, _)| *l == c.link) {
            Some((_, ids)) => ids.push(c.id),
            None => link_groups.push((c.link, vec![c.id])),
        }
    }
    let per_link: Vec<(LinkId, Vec<Vec<OpId>>)> = link_groups
        .into_iter()
        .map(|(l, ids)| (l, permutations(&ids)))
        .collect();

    let mut best: Option<f64> = None;
    let mut stage_combo = vec![0usize; per_stage.len()];
    loop {
        let orders: Vec<Vec<OpId>> = stage_combo
            .iter()
            .zip(&per_stage)
            .map(|(&i, opts)| opts[i].clone())
            .collect();
        if memory_ok(graph, spec, &orders) {
            let mut link_combo = vec![0usize; per_link.len()];
            loop {
                let links: Vec<(LinkId, Vec<OpId>)> = link_combo
                    .iter()
                    .zip(&per_link)
                    .map(|(&i, (l, opts))| (*l, opts[i].clone()))
                    .collect();
                if let Some(times) = fixed_point_times(graph, &orders, &links, spec) {
                    let span = span_of(graph, &times);
                    best = Some(best.map_or(span, |b: f64| b.min(span)));
                }
                if !advance(&mut link_combo, &per_link.iter().map(|(_, o)| o.len()).collect::<Vec<_>>()) {
                    break;
                }
            }
        }
        if !advance(&mut stage_combo, &per_stage.iter().map(Vec::len).collect::<Vec<_>>()) {
            break;
        }
    }
    best
}

fn advance(combo: &mut [usize], sizes: &[usize]) -> bool {
    for i in (0..combo.len()).rev() {
        combo[i] += 1;
        if combo[i] < sizes[i] {
            return true;
        }
        combo[i] = 0;
    }
    false
}

// ---------------------------------------------------------------------------
// A minimal LP-file interpreter: parses the exported text, enumerates binary
// assignments, and solves each remaining difference system by longest-path
// relaxation. Small enough to trust, independent enough to count.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sense {
    Le,
    Ge,
}

#[derive(Debug, Clone)]
pub struct LpRow {
    pub name: String,
    pub terms: Vec<(f64, String)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct LpFile {
    pub rows: Vec<LpRow>,
    pub binaries: Vec<String>,
}

pub fn parse_lp(text: &str) -> LpFile {
    let mut rows = Vec::new();
    let mut binaries = Vec::new();
    let mut section = "";
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('\\') {
            continue;
        }
        match line {
            "Minimize" | "Maximize" => {
                section = "obj";
                continue;
            }
            "Subject To" => {
                section = "st";
                continue;
            }
            "Bounds" => {
                section = "bounds";
                continue;
            }
            "Binary" | "General" => {
                section = "binary";
                continue;
            }
            "End" => break,
            _ => {}
        }
        match section {
            "st" => rows.push(parse_row(line)),
            "binary" => binaries.push(line.to_string()),
            _ => {}
        }
    }
    LpFile { rows, binaries }
}

fn parse_row(line: &str) -> LpRow {
    let (name, rest) = line.split_once(':').expect("row must be named");
    let (sense, parts) = if rest.contains("<=") {
        (Sense::Le, rest.split_once("<=").unwrap())
    } else if rest.contains(">=") {
        (Sense::Ge, rest.split_once(">=").unwrap())
    } else {
        panic!("unsupported row: {line}");
    };
    let rhs: f64 = parts.1.trim().parse().expect("rhs must be numeric");
    let mut terms = Vec::new();
    let mut sign = 1.0;
    let mut coef: Option<f64> = None;
    for tok in parts.0.split_whitespace() {
        match tok {
            "+" => sign = 1.0,
            "-" => sign = -1.0,
            _ => {
                if let Ok(v) = tok.parse::<f64>() {
                    coef = Some(v);
                } else {
                    terms.push((sign * coef.take().unwrap_or(1.0), tok.to_string()));
                    sign = 1.0;
                }
            }
        }
    }
    LpRow {
        name: name.trim().to_string(),
        terms,
        sense,
        rhs,
    }
}

/// Minimizes `span` over the parsed LP by brute force over binaries and
/// longest-path propagation over the continuous difference system.
pub fn lp_min_span(lp: &LpFile) -> Option<f64> {
    assert!(lp.binaries.len() <= 26, "too many binaries to enumerate");
    let is_binary: std::collections::HashSet<&str> =
        lp.binaries.iter().map(String::as_str).collect();

    // Continuous variables, excluding the objective itself.
    let mut vars: Vec<String> = Vec::new();
    for row in &lp.rows {
        for (_, v) in &row.terms {
            if v != "span" && !is_binary.contains(v.as_str()) && !vars.contains(v) {
                vars.push(v.clone());
            }
        }
    }
    let index: HashMap<&str, usize> = vars.iter().map(String::as_str).zip(0..).collect();

    let mut best: Option<f64> = None;
    for mask in 0u64..(1u64 << lp.binaries.len()) {
        let bin_val = |name: &str| -> f64 {
            let i = lp.binaries.iter().position(|b| b == name).unwrap();
            ((mask >> i) & 1) as f64
        };

        // Difference constraints t_u >= t_v + w, plus pure bound checks.
        let mut edges: Vec<(usize, usize, f64)> = Vec::new(); // (u, v, w)
        let mut feasible = true;
        let mut span_rows: Vec<(Vec<(f64, usize)>, f64)> = Vec::new();
        for row in &lp.rows {
            let mut cont: Vec<(f64, usize)> = Vec::new();
            let mut constant = 0.0;
            let mut has_span = false;
            for (c, v) in &row.terms {
                if v == "span" {
                    has_span = true;
                } else if is_binary.contains(v.as_str()) {
                    constant += c * bin_val(v);
                } else {
                    cont.push((*c, index[v.as_str()]));
                }
            }
            let rhs = row.rhs - constant;
            if has_span {
                // span >= sum(-cont) + rhs under Ge rows.
                assert_eq!(row.sense, Sense::Ge);
                span_rows.push((cont, rhs));
                continue;
            }
            match (cont.len(), row.sense) {
                (0, Sense::Le) => feasible &= 0.0 <= rhs + 1e-9,
                (0, Sense::Ge) => feasible &= 0.0 >= rhs - 1e-9,
                (2, sense) => {
                    let (c0, v0) = cont[0];
                    let (c1, v1) = cont[1];
                    assert!(c0 * c1 < 0.0, "expected a difference row: {}", row.name);
                    // Normalize to t_pos - t_neg {sense} rhs.
                    let (pos, neg) = if c0 > 0.0 { (v0, v1) } else { (v1, v0) };
                    match sense {
                        // t_pos - t_neg >= rhs  =>  t_pos >= t_neg + rhs
                        Sense::Ge => edges.push((pos, neg, rhs)),
                        // t_pos - t_neg <= rhs  =>  t_neg >= t_pos - rhs
                        Sense::Le => edges.push((neg, pos, -rhs)),
                    }
                }
                other => panic!("unsupported row shape {other:?} in {}", row.name),
            }
        }
        if !feasible {
            continue;
        }

        // Least non-negative solution by longest-path relaxation.
        let mut t = vec![0.0f64; vars.len()];
        let mut ok = false;
        for _ in 0..vars.len() + 2 {
            let mut changed = false;
            for &(u, v, w) in &edges {
                let cand = t[v] + w;
                if cand > t[u] + 1e-12 {
                    t[u] = cand;
                    changed = true;
                }
            }
            if !changed {
                ok = true;
                break;
            }
        }
        if !ok {
            continue; // positive cycle: infeasible orientation
        }

        // t_first0 rises to the smallest stage-0 start it bounds: edges
        // (u, f, w) encode t_u >= t_first0 + w, i.e. t_first0 <= t_u - w.
        if let Some(&f_idx) = index.get("t_first0") {
            let mut cap = f64::INFINITY;
            for &(u, v, w) in &edges {
                if v == f_idx && u != f_idx {
                    cap = cap.min(t[u] - w);
                }
            }
            if cap.is_finite() && cap > t[f_idx] {
                t[f_idx] = cap;
            }
        }

        let mut span = 0.0f64;
        for (cont, rhs) in &span_rows {
            // span - t_o + t_first0 >= tail  =>  span >= tail + t_o - t_first0.
            let mut v = *rhs;
            for &(c, idx) in cont {
                v -= c * t[idx];
            }
            span = span.max(v);
        }
        best = Some(best.map_or(span, |b: f64| b.min(span)));
    }
    best
}
