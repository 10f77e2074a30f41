//! The four static baseline schedules: 1F1B, interleaved 1F1B, ZB-H1 and
//! ZB-V. Layouts follow the published constructions; they are fixed per-stage
//! block orders that do not look at communication delays.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::graph::{BlockKey, BlockType, OpId};
use crate::patterns::build_true_deps;
use crate::plan::{Family, SchedulePlan};
use crate::problem::{PatternTag, ProblemSpec};

/// Natural per-stage peak of a 1F1B-style schedule: `n_pp - stage` forward
/// blocks in flight.
pub fn one_f_one_b_budget(spec: &ProblemSpec) -> Vec<f64> {
    (0..spec.n_pp)
        .map(|s| (spec.n_pp - s) as f64 * spec.m_f[s][0])
        .collect()
}

/// Natural per-stage peak of the wave schedules: `n_pp` full microbatches in
/// flight, both chunks each.
pub fn wave_budget(spec: &ProblemSpec) -> Vec<f64> {
    (0..spec.n_pp)
        .map(|s| spec.n_pp as f64 * spec.m_f[s].iter().sum::<f64>())
        .collect()
}

/// Builds the requested static schedule for `spec`.
pub fn build_static(spec: &ProblemSpec, family: Family) -> Result<SchedulePlan> {
    let require = |ok: bool, requirement: &str| -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(Error::FamilyMismatch {
                family: family.name().to_string(),
                requirement: requirement.to_string(),
            })
        }
    };
    require(spec.n_mb >= spec.n_pp, "n_mb >= n_pp")?;
    match family {
        Family::OneFOneB | Family::ZbH1 => {
            require(
                spec.pattern == PatternTag::Ud && spec.n_chunks == 1,
                "the UD pattern with a single chunk",
            )?;
        }
        Family::Interleaved => {
            require(
                spec.pattern == PatternTag::Loop && spec.n_chunks >= 2,
                "the Loop pattern with n_chunks >= 2",
            )?;
            require(
                spec.n_mb.is_multiple_of(spec.n_pp),
                "n_mb divisible by n_pp",
            )?;
        }
        Family::ZbV => {
            require(
                spec.pattern == PatternTag::Wave && spec.n_chunks == 2,
                "the Wave pattern with 2 chunks",
            )?;
        }
        _ => {
            return Err(Error::FamilyMismatch {
                family: family.name().to_string(),
                requirement: "a static schedule family".to_string(),
            })
        }
    }
    match family {
        Family::OneFOneB => Ok(build_1f1b(spec)),
        Family::ZbH1 => Ok(build_zbh1(spec)),
        Family::Interleaved => Ok(build_interleaved(spec)),
        Family::ZbV => build_zbv(spec),
        _ => unreachable!(),
    }
}

/// PipeDream-flush 1F1B with the backward kept whole: D immediately followed
/// by W. Stage `i` warms up with `n_pp - i - 1` forwards.
fn build_1f1b(spec: &ProblemSpec) -> SchedulePlan {
    let mut plan = SchedulePlan::new("1f1b", "static", 1, one_f_one_b_budget(spec));
    for stage in 0..spec.n_pp {
        let warm = spec.n_pp - stage - 1;
        let seq = &mut plan.stages[stage];
        for mb in 0..warm {
            seq.push(BlockKey(0, BlockType::F, mb, 0));
        }
        for mb in warm..spec.n_mb {
            seq.push(BlockKey(0, BlockType::F, mb, 0));
            seq.push(BlockKey(0, BlockType::D, mb - warm, 0));
            seq.push(BlockKey(0, BlockType::W, mb - warm, 0));
        }
        for mb in spec.n_mb - warm..spec.n_mb {
            seq.push(BlockKey(0, BlockType::D, mb, 0));
            seq.push(BlockKey(0, BlockType::W, mb, 0));
        }
    }
    plan
}

/// ZB-H1: the 1F1B layout with the backward split and W blocks deferred as
/// far as the 1F1B memory envelope allows, so they fill warm-up and tear-down
/// bubbles without raising peak activation memory.
fn build_zbh1(spec: &ProblemSpec) -> SchedulePlan {
    let budget = one_f_one_b_budget(spec);
    let mut plan = SchedulePlan::new("zbh1", "static", 1, budget.clone());
    for (stage, &cap) in budget.iter().enumerate() {
        let warm = spec.n_pp - stage - 1;
        let m_f = spec.m_f[stage][0];
        let m_d = spec.m_d[stage][0];
        let m_w = spec.m_w[stage][0];
        let tol = 1e-9 * cap.abs().max(1.0);
        let seq = &mut plan.stages[stage];
        let mut pending: VecDeque<usize> = VecDeque::new();
        let mut run = 0.0f64;

        for mb in 0..warm {
            seq.push(BlockKey(0, BlockType::F, mb, 0));
            run += m_f;
        }
        for mb in warm..spec.n_mb {
            while run + m_f > cap + tol {
                let w = pending.pop_front().expect("1F1B envelope always frees enough");
                seq.push(BlockKey(0, BlockType::W, w, 0));
                run += m_w;
            }
            seq.push(BlockKey(0, BlockType::F, mb, 0));
            run += m_f;
            seq.push(BlockKey(0, BlockType::D, mb - warm, 0));
            run += m_d;
            pending.push_back(mb - warm);
        }
        // No forward blocks remain past this point, so the memory envelope no
        // longer constrains the order.
        for mb in spec.n_mb - warm..spec.n_mb {
            seq.push(BlockKey(0, BlockType::D, mb, 0));
            pending.push_back(mb);
            // Tear-down bubbles are wide enough for the whole backlog: the
            // next D only arrives after the downstream stage finishes its own
            // D and W.
            while let Some(w) = pending.pop_front() {
                seq.push(BlockKey(0, BlockType::W, w, 0));
            }
        }
        while let Some(w) = pending.pop_front() {
            seq.push(BlockKey(0, BlockType::W, w, 0));
        }
    }
    plan
}

/// Interleaved 1F1B over `v` model chunks. Forward units run in groups of
/// `n_pp` microbatches per chunk; stage `i` warms up with
/// `2 (n_pp - i - 1) + (v - 1) n_pp` units and then alternates one forward
/// and one backward unit. The backward is kept whole (D then W).
fn build_interleaved(spec: &ProblemSpec) -> SchedulePlan {
    let (p, v) = (spec.n_pp, spec.n_chunks);
    let total = spec.n_mb * v;
    let fwd_unit = |j: usize| -> (usize, usize) {
        let group = j / (v * p);
        let within = j % (v * p);
        (within / p, group * p + within % p) // (chunk, mb)
    };
    let bwd_unit = |j: usize| -> (usize, usize) {
        let (chunk, mb) = fwd_unit(j);
        (v - 1 - chunk, mb)
    };

    let mut plan = SchedulePlan::new("iv1f1b", "static", 1, vec![0.0; p]);
    for stage in 0..p {
        let warm = (2 * (p - stage - 1) + (v - 1) * p).min(total);
        let seq = &mut plan.stages[stage];
        for j in 0..warm {
            let (k, mb) = fwd_unit(j);
            seq.push(BlockKey(k, BlockType::F, mb, 0));
        }
        for j in warm..total {
            let (k, mb) = fwd_unit(j);
            seq.push(BlockKey(k, BlockType::F, mb, 0));
            let (k, mb) = bwd_unit(j - warm);
            seq.push(BlockKey(k, BlockType::D, mb, 0));
            seq.push(BlockKey(k, BlockType::W, mb, 0));
        }
        for j in total - warm..total {
            let (k, mb) = bwd_unit(j);
            seq.push(BlockKey(k, BlockType::D, mb, 0));
            seq.push(BlockKey(k, BlockType::W, mb, 0));
        }
    }
    // The interleaved layout's peak is instance-dependent; report what the
    // plan actually holds.
    plan.mem_budget = plan_peaks(spec, &plan);
    plan
}

/// Completion-ordered peak memory per stage of a whole-block plan.
fn plan_peaks(spec: &ProblemSpec, plan: &SchedulePlan) -> Vec<f64> {
    plan.stages
        .iter()
        .enumerate()
        .map(|(s, seq)| {
            let mut run = 0.0f64;
            let mut peak = 0.0f64;
            for key in seq {
                run += match key.block() {
                    BlockType::F => spec.m_f[s][key.chunk()],
                    BlockType::D => spec.m_d[s][key.chunk()],
                    BlockType::W => spec.m_w[s][key.chunk()],
                };
                peak = peak.max(run);
            }
            peak
        })
        .collect()
}

/// ZB-V: the wave layout with split W. The order is derived by running a
/// zero-delay list scheduler over the wave dependency graph with D blocks
/// first, F blocks next under the wave memory envelope, and W blocks filling
/// the remaining slots.
fn build_zbv(spec: &ProblemSpec) -> Result<SchedulePlan> {
    let budget = wave_budget(spec);
    let mut zero_delay = spec.clone();
    for row in zero_delay.alpha.iter_mut().chain(zero_delay.beta.iter_mut()) {
        row.fill(0.0);
    }
    let graph = build_true_deps(&zero_delay)?;
    let seq = guided_order(&zero_delay, &graph, &budget)?;
    let mut plan = SchedulePlan::new("zbv", "static", 1, budget);
    for (stage, ids) in seq.into_iter().enumerate() {
        plan.stages[stage] = ids
            .into_iter()
            .map(|id| graph.block_key(id).unwrap().1)
            .collect();
    }
    Ok(plan)
}

/// Delay-aware list scheduling over a whole-block dependency graph: D blocks
/// first, F blocks next under the per-stage memory envelope, W blocks fill.
/// Transfers reserve first-fit windows on their links and deliver after
/// their latency. Returns the per-stage execution orders.
pub(crate) fn guided_order(
    spec: &ProblemSpec,
    graph: &crate::graph::DependencyGraph,
    budget: &[f64],
) -> Result<Vec<Vec<OpId>>> {
    use crate::sim::LinkOccupancy;
    use std::collections::BTreeMap;

    let n = graph.len();
    let mut ready: Vec<Option<f64>> = vec![None; n];
    // A transfer predecessor counts as one edge, satisfied when the payload
    // is delivered.
    let mut preds_left: Vec<usize> = (0..n).map(|i| graph.preds(i).len()).collect();
    for op in graph.compute_ops() {
        if preds_left[op.id] == 0 {
            ready[op.id] = Some(0.0);
        }
    }

    let mut arrive = vec![0.0f64; n];
    let mut busy = vec![0.0f64; spec.n_pp];
    let mut run = vec![0.0f64; spec.n_pp];
    let mut links: BTreeMap<crate::graph::LinkId, LinkOccupancy> = BTreeMap::new();
    let mut seq: Vec<Vec<OpId>> = vec![Vec::new(); spec.n_pp];
    let total = graph.n_compute();
    let mut done = 0usize;

    while done < total {
        // Stage with the earliest feasible schedulable time.
        let mut best: Option<(f64, usize, OpId)> = None;
        for stage in 0..spec.n_pp {
            let cands: Vec<&crate::graph::ComputeOp> = graph
                .compute_ops()
                .filter(|c| c.stage == stage)
                .filter(|c| ready[c.id].is_some())
                .filter(|c| {
                    // A forward block must leave headroom for one forward of
                    // each later-visiting chunk, or the outbound wave can
                    // starve the returning one into a deadlock.
                    c.block != BlockType::F || {
                        let reserve: f64 = spec.m_f[stage][c.chunk + 1..].iter().sum();
                        run[stage] + spec.m_f[stage][c.chunk]
                            <= budget[stage] - reserve + 1e-9 * budget[stage].max(1.0)
                    }
                })
                .collect();
            let t = cands
                .iter()
                .map(|c| ready[c.id].unwrap())
                .fold(f64::INFINITY, f64::min);
            if !t.is_finite() {
                continue;
            }
            let sched_t = busy[stage].max(t);
            // Among candidates available by sched_t: D, then F, then W.
            // Within a class, earliest microbatch first with chunks in visit
            // order (forward visits ascend, backward visits descend), so the
            // returning wave is never starved by fresh forwards.
            let pick = cands
                .into_iter()
                .filter(|c| ready[c.id].unwrap() <= sched_t + 1e-12)
                .min_by(|a, b| {
                    let rank = |t: BlockType| match t {
                        BlockType::D => 0,
                        BlockType::F => 1,
                        BlockType::W => 2,
                    };
                    let visit_chunk = |c: &crate::graph::ComputeOp| match c.block {
                        BlockType::F => c.chunk,
                        _ => spec.n_chunks - 1 - c.chunk,
                    };
                    rank(a.block)
                        .cmp(&rank(b.block))
                        .then(a.mb.cmp(&b.mb))
                        .then(visit_chunk(a).cmp(&visit_chunk(b)))
                        .then(ready[a.id].unwrap().total_cmp(&ready[b.id].unwrap()))
                })
                .map(|c| c.id);
            if let Some(id) = pick {
                match best {
                    Some((bt, bs, _)) if (bt, bs) <= (sched_t, stage) => {}
                    _ => best = Some((sched_t, stage, id)),
                }
            }
        }
        let (sched_t, stage, id) = best.ok_or_else(|| {
            Error::MemoryInfeasible(
                "wave layout stalled under its memory envelope".into(),
            )
        })?;
        let op = graph.op(id).as_compute().unwrap().clone();
        let end = sched_t.max(ready[id].unwrap()) + op.duration;
        busy[stage] = end;
        run[stage] += op.mem_delta;
        ready[id] = None;
        seq[stage].push(id);
        done += 1;
        // Hand successors their payloads, through transfers where needed.
        let hand_off = |succ: OpId, t: f64, arrive: &mut Vec<f64>, preds_left: &mut Vec<usize>, ready: &mut Vec<Option<f64>>| {
            arrive[succ] = arrive[succ].max(t);
            preds_left[succ] -= 1;
            if preds_left[succ] == 0 {
                ready[succ] = Some(arrive[succ]);
            }
        };
        for &succ in graph.succs(id) {
            match graph.op(succ) {
                crate::graph::Op::Comm(c) => {
                    if let Some(q) = c.consumer {
                        let occ = links.entry(c.link).or_default();
                        let (_, we) = occ.reserve_window(end, c.bw_time);
                        hand_off(q, we + c.latency, &mut arrive, &mut preds_left, &mut ready);
                    }
                }
                crate::graph::Op::Compute(_) => {
                    hand_off(succ, end, &mut arrive, &mut preds_left, &mut ready)
                }
            }
        }
    }
    Ok(seq)
}
