//! Greedy generation of CrossUD (n_sub = 1) and CrossUDSub (n_sub > 1)
//! schedules under memory limits and the bandwidth occupancy model.
//!
//! The scheduler works at sub-block granularity over the UD chain. It seeds
//! stage 0 with every forward block, then loops: pick the stage with the
//! earliest schedulable time, pick the highest-priority operation available
//! there, and schedule one sub-block of it. Finishing a D block makes its W
//! schedulable; finishing a block with a cross-stage dependent reserves a
//! transmission window and hands the dependent to the receiving stage. The
//! run doubles as a simulation: the returned timeline is exactly what
//! re-simulating the returned plan produces.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::graph::{BlockKey, BlockType, CommKey, CommKind, LinkId};
use crate::patterns::{build_true_deps, split_sub_blocks};
use crate::plan::SchedulePlan;
use crate::problem::{PatternTag, ProblemSpec, TIME_EPS};
use crate::sim::{metrics, LinkOccupancy};
use crate::timeline::{MetricsReport, Timeline};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Warmup,
    Steady,
    Teardown,
}

#[derive(Debug, Clone)]
pub(crate) struct Block {
    pub stage: usize,
    pub block: BlockType,
    pub mb: usize,
    pub sub_duration: f64,
    pub n_sub: usize,
    pub subs_done: usize,
    /// When the block's input data is available on its stage.
    pub t_avail: f64,
    pub end: f64,
}

impl Block {
    fn done(&self) -> bool {
        self.subs_done == self.n_sub
    }
}

#[derive(Debug, Clone)]
pub(crate) struct StageState {
    /// End time of the last scheduled sub-block.
    pub last_end: f64,
    /// Blocks whose data has been handed to this stage, not yet finished.
    pub schedulable: Vec<usize>,
    /// Running sum of completed memory deltas.
    pub mem: f64,
    /// Block currently between sub-blocks, if any.
    pub in_progress: Option<usize>,
    /// Type of the last fully completed F or D block, for the steady-phase
    /// alternation.
    pub last_full: Option<BlockType>,
    /// Whether a D block has ever become schedulable here.
    pub had_d: bool,
    /// Forward blocks not yet started, to tell steady from tear-down.
    pub f_unstarted: usize,
}

/// Scheduler state over one UD instance.
pub struct SchedulerState<'a> {
    spec: &'a ProblemSpec,
    pub(crate) blocks: Vec<Block>,
    pub(crate) stages: Vec<StageState>,
    links: BTreeMap<LinkId, LinkOccupancy>,
}

impl<'a> SchedulerState<'a> {
    fn new(spec: &'a ProblemSpec) -> Self {
        let mut blocks = Vec::with_capacity(3 * spec.n_pp * spec.n_mb);
        for stage in 0..spec.n_pp {
            for block in [BlockType::F, BlockType::D, BlockType::W] {
                let dur = match block {
                    BlockType::F => spec.t_f[stage][0],
                    BlockType::D => spec.t_d[stage][0],
                    BlockType::W => spec.t_w[stage][0],
                };
                for mb in 0..spec.n_mb {
                    blocks.push(Block {
                        stage,
                        block,
                        mb,
                        sub_duration: dur / spec.n_sub as f64,
                        n_sub: spec.n_sub,
                        subs_done: 0,
                        t_avail: f64::INFINITY,
                        end: 0.0,
                    });
                }
            }
        }
        let stages = (0..spec.n_pp)
            .map(|_| StageState {
                last_end: 0.0,
                schedulable: Vec::new(),
                mem: 0.0,
                in_progress: None,
                last_full: None,
                had_d: false,
                f_unstarted: spec.n_mb,
            })
            .collect();
        SchedulerState {
            spec,
            blocks,
            stages,
            links: BTreeMap::new(),
        }
    }

    fn block_id(&self, stage: usize, block: BlockType, mb: usize) -> usize {
        let t = match block {
            BlockType::F => 0,
            BlockType::D => 1,
            BlockType::W => 2,
        };
        (stage * 3 + t) * self.spec.n_mb + mb
    }

    fn make_schedulable(&mut self, id: usize, t_avail: f64) {
        let stage = self.blocks[id].stage;
        self.blocks[id].t_avail = t_avail;
        self.stages[stage].schedulable.push(id);
        if self.blocks[id].block == BlockType::D {
            self.stages[stage].had_d = true;
        }
    }

    /// The stage's schedulable time: the later of its last scheduled end and
    /// the earliest availability among its schedulable operations.
    pub(crate) fn schedulable_time(&self, stage: usize) -> Option<f64> {
        let st = &self.stages[stage];
        let earliest = st
            .schedulable
            .iter()
            .map(|&b| self.blocks[b].t_avail)
            .fold(f64::INFINITY, f64::min);
        if earliest.is_finite() {
            Some(st.last_end.max(earliest))
        } else {
            None
        }
    }

    /// Like [`Self::schedulable_time`] but ignoring forward blocks the memory
    /// budget cannot admit, so a blocked F never hides the W or D that would
    /// free space for it.
    pub(crate) fn feasible_time(&self, stage: usize) -> Option<f64> {
        let st = &self.stages[stage];
        let earliest = st
            .schedulable
            .iter()
            .filter(|&&b| self.fits_memory(stage, &self.blocks[b]))
            .map(|&b| self.blocks[b].t_avail)
            .fold(f64::INFINITY, f64::min);
        if earliest.is_finite() {
            Some(st.last_end.max(earliest))
        } else {
            None
        }
    }

    /// Stage with the earliest schedulable time; ties go to the lower index.
    pub fn next_stage_to_schedule(&self) -> Option<usize> {
        (0..self.stages.len())
            .filter_map(|s| self.schedulable_time(s).map(|t| (t, s)))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, s)| s)
    }

    pub(crate) fn phase(&self, stage: usize) -> Phase {
        let st = &self.stages[stage];
        if !st.had_d {
            Phase::Warmup
        } else if st.f_unstarted > 0 {
            Phase::Steady
        } else {
            Phase::Teardown
        }
    }

    fn fits_memory(&self, stage: usize, block: &Block) -> bool {
        if block.block != BlockType::F || block.subs_done > 0 {
            return true;
        }
        let limit = self.spec.m_limit[stage];
        self.stages[stage].mem + self.spec.m_f[stage][0] <= limit + 1e-9 * limit.abs().max(1.0)
    }

    /// Picks the highest-priority operation schedulable on `stage`, or `None`
    /// when every candidate is blocked by memory or still in flight.
    ///
    /// Rules: a partially scheduled F or D block always continues; in
    /// warm-up F blocks come first; in steady state F and D full blocks
    /// alternate; in tear-down D precedes W; whenever memory blocks the
    /// preferred F, a W sub-block fills in. A partially scheduled W may be
    /// preempted by newly available F or D work.
    pub fn select_op(&self, stage: usize) -> Option<usize> {
        let sched_t = self.feasible_time(stage)?;
        let st = &self.stages[stage];
        if let Some(b) = st.in_progress {
            if self.blocks[b].block != BlockType::W {
                return Some(b);
            }
        }
        let available: Vec<usize> = st
            .schedulable
            .iter()
            .copied()
            .filter(|&b| self.fits_memory(stage, &self.blocks[b]))
            .filter(|&b| self.blocks[b].t_avail <= sched_t + TIME_EPS)
            .collect();
        let lowest = |t: BlockType| -> Option<usize> {
            available
                .iter()
                .copied()
                .filter(|&b| self.blocks[b].block == t)
                .min_by(|&a, &b| {
                    self.blocks[a]
                        .mb
                        .cmp(&self.blocks[b].mb)
                        .then(self.blocks[a].t_avail.total_cmp(&self.blocks[b].t_avail))
                })
        };
        let f_ok = lowest(BlockType::F);
        let pick_w = || -> Option<usize> {
            // Resume a preempted W before starting the next one.
            if let Some(b) = st.in_progress {
                if self.blocks[b].block == BlockType::W {
                    return Some(b);
                }
            }
            lowest(BlockType::W)
        };
        match self.phase(stage) {
            Phase::Warmup => f_ok.or_else(|| lowest(BlockType::D)).or_else(pick_w),
            Phase::Steady => {
                let want_d = st.last_full == Some(BlockType::F);
                let (first, second) = if want_d {
                    (lowest(BlockType::D), f_ok)
                } else {
                    (f_ok, lowest(BlockType::D))
                };
                first.or(second).or_else(pick_w)
            }
            Phase::Teardown => lowest(BlockType::D).or_else(pick_w),
        }
    }
}

/// One scheduled sub-block, in stage order.
struct SubEvent {
    stage: usize,
    key: BlockKey,
    start: f64,
    end: f64,
}

struct CommRecord {
    key: CommKey,
    link: LinkId,
    window: (f64, f64),
}

/// Runs the greedy generator and returns the plan together with the timeline
/// realized during generation.
pub fn generate_greedy(spec: &ProblemSpec) -> Result<(SchedulePlan, Timeline)> {
    if spec.pattern != PatternTag::Ud {
        return Err(Error::UnsupportedPattern(format!(
            "greedy generation covers the UD pattern only, got {}; wave schedules \
             come from the exact solver",
            spec.pattern
        )));
    }
    for s in 0..spec.n_pp {
        if spec.m_limit[s] < spec.m_f[s][0] {
            return Err(Error::MemoryInfeasible(format!(
                "stage {s}: m_limit {} cannot hold one forward block of {}",
                spec.m_limit[s], spec.m_f[s][0]
            )));
        }
    }

    let mut state = SchedulerState::new(spec);
    for mb in 0..spec.n_mb {
        let f0 = state.block_id(0, BlockType::F, mb);
        state.make_schedulable(f0, 0.0);
    }

    let total_events = 3 * spec.n_mb * spec.n_sub * spec.n_pp;
    let mut events = Vec::with_capacity(total_events);
    let mut comms: Vec<CommRecord> = Vec::new();
    let mut link_orders: BTreeMap<LinkId, Vec<CommKey>> = BTreeMap::new();

    for _ in 0..total_events {
        // Stages in schedulable-time order; the first one with a feasible
        // operation wins. A stage whose only candidates are memory-blocked
        // forwards is skipped until a W frees space.
        let mut order: Vec<(f64, usize)> = (0..spec.n_pp)
            .filter_map(|s| state.feasible_time(s).map(|t| (t, s)))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut picked = None;
        for (_, stage) in order {
            if let Some(block_id) = state.select_op(stage) {
                picked = Some((stage, block_id));
                break;
            }
        }
        let (stage, block_id) = picked.ok_or_else(|| {
            Error::Infeasible("greedy scheduler stalled with work remaining".into())
        })?;

        // Schedule one sub-block.
        let (start, end, finished, key) = {
            let st = &state.stages[stage];
            let b = &state.blocks[block_id];
            let start = st.last_end.max(b.t_avail);
            let end = start + b.sub_duration;
            let key = BlockKey(0, b.block, b.mb, b.subs_done);
            (start, end, b.subs_done + 1 == b.n_sub, key)
        };
        events.push(SubEvent { stage, key, start, end });
        {
            let b = &mut state.blocks[block_id];
            if b.subs_done == 0 && b.block == BlockType::F {
                state.stages[stage].f_unstarted -= 1;
            }
            b.subs_done += 1;
            b.end = end;
        }
        let st = &mut state.stages[stage];
        st.last_end = end;
        st.in_progress = (!finished).then_some(block_id);
        if finished {
            st.schedulable.retain(|&b| b != block_id);
            let b = state.blocks[block_id].clone();
            st.mem += match b.block {
                BlockType::F => spec.m_f[stage][0],
                BlockType::D => spec.m_d[stage][0],
                BlockType::W => spec.m_w[stage][0],
            };
            if b.block != BlockType::W {
                st.last_full = Some(b.block);
            }
            // A finished D makes its W schedulable here.
            if b.block == BlockType::D {
                let w = state.block_id(stage, BlockType::W, b.mb);
                state.make_schedulable(w, end);
            }
            // Hand the chain dependent to the next stage.
            if let Some((next_stage, next_block, forward)) = chain_dependent(spec, &b) {
                let dep = state.block_id(next_stage, next_block, b.mb);
                if next_stage == stage {
                    state.make_schedulable(dep, end);
                } else {
                    let t_lat = spec.link_alpha(stage, next_stage);
                    let bytes = spec.hop_bytes(stage, next_stage, forward);
                    let t_bw = spec.link_beta(stage, next_stage) * bytes;
                    let link = (spec.dc(stage), spec.dc(next_stage));
                    let occ = state.links.entry(link).or_default();
                    let window = occ.reserve_window(end, t_bw);
                    let kind = if forward {
                        CommKind::Activation
                    } else {
                        CommKind::Gradient
                    };
                    let ckey = CommKey {
                        kind,
                        src_stage: stage,
                        dst_stage: next_stage,
                        chunk: 0,
                        mb: b.mb,
                    };
                    comms.push(CommRecord { key: ckey, link, window });
                    link_orders.entry(link).or_default().push(ckey);
                    state.make_schedulable(dep, window.1 + t_lat);
                }
            }
        }
    }
    debug_assert!(state.blocks.iter().all(|b| b.done()));

    let family = if spec.n_sub == 1 { "cross-ud" } else { "cross-ud-sub" };
    let mut plan = SchedulePlan::new(family, "greedy", spec.n_sub, spec.m_limit.clone());
    for ev in &events {
        plan.stages[ev.stage].push(ev.key);
    }
    if !link_orders.is_empty() {
        plan.link_order = Some(link_orders.into_iter().collect());
    }

    let timeline = assemble_timeline(spec, &events, &comms)?;
    Ok((plan, timeline))
}

/// The single cross- or same-stage dependent of a finished block on the UD
/// chain, with the transfer direction.
fn chain_dependent(spec: &ProblemSpec, b: &Block) -> Option<(usize, BlockType, bool)> {
    match b.block {
        BlockType::F => {
            if b.stage + 1 < spec.n_pp {
                Some((b.stage + 1, BlockType::F, true))
            } else {
                Some((b.stage, BlockType::D, true))
            }
        }
        BlockType::D => (b.stage > 0).then(|| (b.stage - 1, BlockType::D, false)),
        BlockType::W => None,
    }
}

fn assemble_timeline(
    spec: &ProblemSpec,
    events: &[SubEvent],
    comms: &[CommRecord],
) -> Result<Timeline> {
    let graph = split_sub_blocks(&build_true_deps(spec)?, spec.n_sub);
    let index = graph.compute_index();
    let comm_index = graph.comm_index();
    let mut starts = vec![0.0f64; graph.len()];
    let mut ends = vec![0.0f64; graph.len()];
    for ev in events {
        let id = *index.get(&(ev.stage, ev.key)).ok_or_else(|| {
            Error::PlanMismatch(format!("generated op {} missing from graph", ev.key))
        })?;
        starts[id] = ev.start;
        ends[id] = ev.end;
    }
    let mut links: BTreeMap<LinkId, Vec<(f64, f64)>> = BTreeMap::new();
    let mut sequence: BTreeMap<LinkId, Vec<usize>> = BTreeMap::new();
    for rec in comms {
        let id = *comm_index.get(&rec.key).ok_or_else(|| {
            Error::PlanMismatch(format!("generated transfer {:?} missing from graph", rec.key))
        })?;
        starts[id] = rec.window.0;
        ends[id] = rec.window.1;
        if rec.window.1 > rec.window.0 {
            links.entry(rec.link).or_default().push(rec.window);
        } else {
            links.entry(rec.link).or_default();
        }
        sequence.entry(rec.link).or_default().push(id);
    }
    for ws in links.values_mut() {
        ws.sort_by(|a, b| a.0.total_cmp(&b.0));
    }

    let mut ops = Vec::with_capacity(graph.len());
    for op in graph.ops() {
        let id = op.id();
        let desc = match op {
            crate::graph::Op::Compute(c) => crate::timeline::OpDesc::Compute {
                stage: c.stage,
                chunk: c.chunk,
                block: c.block,
                mb: c.mb,
                sub: c.sub_index,
            },
            crate::graph::Op::Comm(c) => crate::timeline::OpDesc::Comm {
                kind: c.kind,
                src_stage: c.src_stage,
                dst_stage: c.dst_stage,
                chunk: c.chunk,
                mb: c.mb,
                link: c.link,
                latency: c.latency,
            },
        };
        ops.push(crate::timeline::TimelineOp {
            id,
            start: starts[id],
            end: ends[id],
            desc,
        });
    }
    let mut timeline = Timeline {
        ops,
        links: links.into_iter().collect(),
        link_sequence: sequence.into_iter().collect(),
        metrics: MetricsReport::default(),
    };
    timeline.metrics = metrics(&timeline, spec);
    Ok(timeline)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::ProblemBuilder;
    use crate::sim::{simulate, validate_schedule};

    #[test]
    fn tiny_chain_matches_hand_oracle() {
        let spec = ProblemBuilder::new(PatternTag::Ud, 2, 1).dcs(2).build().unwrap();
        let (plan, tl) = generate_greedy(&spec).unwrap();
        assert_eq!(tl.metrics.makespan_global, 5.0);
        assert_eq!(plan.total_blocks(), 6);
    }

    #[test]
    fn event_count_is_three_nmb_nsub_npp() {
        for (n_pp, n_mb, n_sub) in [(2, 3, 1), (3, 4, 2), (4, 8, 4)] {
            let spec = ProblemBuilder::new(PatternTag::Ud, n_pp, n_mb)
                .sub_blocks(n_sub)
                .build()
                .unwrap();
            let (plan, _) = generate_greedy(&spec).unwrap();
            assert_eq!(plan.total_blocks(), 3 * n_mb * n_sub * n_pp);
        }
    }

    #[test]
    fn regenerating_is_deterministic() {
        let spec = ProblemBuilder::new(PatternTag::Ud, 4, 6)
            .sub_blocks(2)
            .dcs(2)
            .cross_delay(0.3, 0.7)
            .build()
            .unwrap();
        let (p1, t1) = generate_greedy(&spec).unwrap();
        let (p2, t2) = generate_greedy(&spec).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(t1, t2);
    }

    #[test]
    fn simulating_the_plan_reproduces_the_timeline() {
        for (alpha, beta, n_sub) in [(0.0, 0.0, 1), (0.5, 0.25, 1), (0.7, 1.3, 4)] {
            let spec = ProblemBuilder::new(PatternTag::Ud, 4, 8)
                .sub_blocks(n_sub)
                .dcs(2)
                .cross_delay(alpha, beta)
                .mem_limit(vec![8.0, 6.0, 4.0, 2.0])
                .build()
                .unwrap();
            let (plan, generated) = generate_greedy(&spec).unwrap();
            let graph = split_sub_blocks(&build_true_deps(&spec).unwrap(), spec.n_sub);
            assert!(validate_schedule(&graph, &plan, &spec).is_empty());
            let replay = simulate(&graph, &plan, &spec).unwrap();
            for (a, b) in generated.ops.iter().zip(&replay.ops) {
                assert_eq!(a.start, b.start, "op {:?}", a.desc);
                assert_eq!(a.end, b.end, "op {:?}", a.desc);
            }
            assert_eq!(generated.metrics.makespan_global, replay.metrics.makespan_global);
        }
    }

    #[test]
    fn memory_limit_is_respected() {
        let spec = ProblemBuilder::new(PatternTag::Ud, 4, 8)
            .mem_limit(vec![8.0, 6.0, 4.0, 2.0])
            .build()
            .unwrap();
        let (plan, tl) = generate_greedy(&spec).unwrap();
        for (s, &peak) in tl.metrics.peak_memory.iter().enumerate() {
            assert!(peak <= spec.m_limit[s] + 1e-9, "stage {s} peak {peak}");
        }
        let graph = build_true_deps(&spec).unwrap();
        assert!(validate_schedule(&graph, &plan, &spec).is_empty());
    }

    #[test]
    fn infeasible_memory_is_an_error() {
        let mut spec = ProblemBuilder::new(PatternTag::Ud, 2, 2).build().unwrap();
        spec.m_limit = vec![1.0, 4.0];
        assert!(matches!(generate_greedy(&spec), Err(Error::MemoryInfeasible(_))));
    }

    #[test]
    fn non_ud_pattern_is_rejected() {
        let spec = ProblemBuilder::new(PatternTag::Wave, 2, 2)
            .mem_limit_uniform(100.0)
            .build()
            .unwrap();
        assert!(matches!(generate_greedy(&spec), Err(Error::UnsupportedPattern(_))));
    }

    #[test]
    fn stage_selection_follows_earliest_schedulable_time() {
        let spec = ProblemBuilder::new(PatternTag::Ud, 2, 1).build().unwrap();
        let mut state = SchedulerState::new(&spec);
        // Stage 0: last end 5, earliest availability 3 -> schedulable at 5.
        // Stage 1: last end 2, earliest availability 4 -> schedulable at 4.
        let f0 = state.block_id(0, BlockType::F, 0);
        let f1 = state.block_id(1, BlockType::F, 0);
        state.make_schedulable(f0, 3.0);
        state.make_schedulable(f1, 4.0);
        state.stages[0].last_end = 5.0;
        state.stages[1].last_end = 2.0;
        assert_eq!(state.schedulable_time(0), Some(5.0));
        assert_eq!(state.schedulable_time(1), Some(4.0));
        assert_eq!(state.next_stage_to_schedule(), Some(1));
    }

    #[test]
    fn empty_schedulable_set_selects_nothing() {
        let spec = ProblemBuilder::new(PatternTag::Ud, 1, 1).build().unwrap();
        let state = SchedulerState::new(&spec);
        assert_eq!(state.next_stage_to_schedule(), None);
    }

    #[test]
    fn stage_selection_tie_goes_to_lower_index() {
        let spec = ProblemBuilder::new(PatternTag::Ud, 2, 1).build().unwrap();
        let mut state = SchedulerState::new(&spec);
        let f0 = state.block_id(0, BlockType::F, 0);
        let f1 = state.block_id(1, BlockType::F, 0);
        state.make_schedulable(f0, 2.0);
        state.make_schedulable(f1, 2.0);
        assert_eq!(state.next_stage_to_schedule(), Some(0));
    }

    #[test]
    fn warmup_prefers_forward_blocks() {
        let spec = ProblemBuilder::new(PatternTag::Ud, 1, 4).build().unwrap();
        let mut state = SchedulerState::new(&spec);
        let f3 = state.block_id(0, BlockType::F, 3);
        let w0 = state.block_id(0, BlockType::W, 0);
        state.make_schedulable(f3, 0.0);
        state.stages[0].schedulable.push(w0);
        state.blocks[w0].t_avail = 0.0;
        assert_eq!(state.phase(0), Phase::Warmup);
        assert_eq!(state.select_op(0), Some(f3));
    }

    #[test]
    fn steady_alternates_f_and_d() {
        let spec = ProblemBuilder::new(PatternTag::Ud, 1, 4)
            .mem_limit_uniform(100.0)
            .build()
            .unwrap();
        let mut state = SchedulerState::new(&spec);
        let f1 = state.block_id(0, BlockType::F, 1);
        let d0 = state.block_id(0, BlockType::D, 0);
        state.make_schedulable(f1, 0.0);
        state.make_schedulable(d0, 0.0);
        state.stages[0].last_full = Some(BlockType::F);
        state.stages[0].f_unstarted = 3;
        assert_eq!(state.phase(0), Phase::Steady);
        assert_eq!(state.select_op(0), Some(d0), "after an F the scheduler wants a D");
        state.stages[0].last_full = Some(BlockType::D);
        assert_eq!(state.select_op(0), Some(f1), "after a D the scheduler wants an F");
    }

    #[test]
    fn memory_pressure_schedules_a_w_sub_block() {
        let spec = ProblemBuilder::new(PatternTag::Ud, 1, 4)
            .memory(2.0, -1.0)
            .mem_limit_uniform(4.0)
            .build()
            .unwrap();
        let mut state = SchedulerState::new(&spec);
        let f2 = state.block_id(0, BlockType::F, 2);
        let w0 = state.block_id(0, BlockType::W, 0);
        state.make_schedulable(f2, 0.0);
        state.make_schedulable(w0, 0.0);
        state.stages[0].had_d = true;
        state.stages[0].f_unstarted = 2;
        state.stages[0].mem = 3.0; // two F in flight, one D done
        state.stages[0].last_full = Some(BlockType::D);
        assert_eq!(state.select_op(0), Some(w0));
    }
}
