//! Model-level experiments: delay-sensitivity sweeps across schedule
//! families, the cross-DC PP versus cross-DC DP comparison, and bubble-stride
//! demonstrations, plus SVG rendering of timelines.

mod gantt;

pub use gantt::{render_gantt, render_gantt_string};

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{build_model, solve_exact};
use crate::graph::DependencyGraph;
use crate::greedy::generate_greedy;
use crate::patterns::{build_true_deps, build_true_deps_combined, split_sub_blocks};
use crate::plan::{Family, SchedulePlan};
use crate::problem::{PatternTag, ProblemSpec};
use crate::sim::{count_dc_crossings, critical_path, simulate};
use crate::static_schedules::{build_static, one_f_one_b_budget, wave_budget};
use crate::timeline::Timeline;

/// Runs `f` over `items` on `workers` threads; results keep item order.
pub fn parallel_map<T, R, F>(workers: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = workers.max(1).min(items.len().max(1));
    let next = AtomicUsize::new(0);
    let out: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                out.lock().unwrap()[i] = Some(r);
            });
        }
    });
    out.into_inner().unwrap().into_iter().map(Option::unwrap).collect()
}

/// Number of workers from the environment, defaulting to the machine.
pub fn default_workers() -> usize {
    std::env::var("CROSSCHED_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        })
}

/// Configuration of a delay-sensitivity sweep. Delay ratios are relative to
/// the base problem's max per-microbatch forward time per stage; the
/// inverse-bandwidth entries are chosen so one boundary message occupies the
/// link for `bw_ratio` forward times.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Uniform UD description every family is derived from.
    pub base: ProblemSpec,
    pub lat_ratios: Vec<f64>,
    pub bw_ratios: Vec<f64>,
    pub families: Vec<Family>,
    /// (family, lat_ratio, bw_ratio) whose makespan normalizes the table.
    pub reference: (Family, f64, f64),
    /// Sub-blocks for the greedy sub-block family.
    #[serde(default = "default_nsub")]
    pub n_sub: usize,
    /// Wall-clock budget per exact solve, seconds.
    #[serde(default = "default_budget")]
    pub solver_budget: f64,
    /// Microbatch factor n_mb / n_pp, recorded for trade-off studies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// DP size; with epsilon this pins the global batch size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_dp: Option<usize>,
}

fn default_nsub() -> usize {
    4
}

fn default_budget() -> f64 {
    10.0
}

impl SweepConfig {
    /// The Fig-style default: 4 stages, 8 microbatches, 2 DCs of 2 stages.
    pub fn default_grid(base: ProblemSpec) -> Self {
        SweepConfig {
            base,
            lat_ratios: vec![0.0, 0.5, 1.0, 2.0],
            bw_ratios: vec![0.0, 0.5, 1.0, 2.0],
            families: Family::ALL.to_vec(),
            reference: (Family::ZbV, 0.0, 0.0),
            n_sub: default_nsub(),
            solver_budget: default_budget(),
            epsilon: None,
            n_dp: None,
        }
    }

    /// Global batch size implied by epsilon and the DP size.
    pub fn global_batch_size(&self) -> Option<f64> {
        match (self.epsilon, self.n_dp) {
            (Some(e), Some(dp)) => Some(e * self.base.n_pp as f64 * dp as f64),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.base.pattern != PatternTag::Ud || self.base.n_chunks != 1 {
            return Err(Error::Validation(
                "sweep base must be a single-chunk UD description".into(),
            ));
        }
        if !self.families.contains(&self.reference.0) {
            return Err(Error::Validation(
                "reference family must be in the family list".into(),
            ));
        }
        if self.lat_ratios.iter().chain(&self.bw_ratios).any(|&r| r < 0.0) {
            return Err(Error::Validation("delay ratios must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub family: String,
    pub lat_ratio: f64,
    pub bw_ratio: f64,
    pub makespan: Option<f64>,
    pub slowdown: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub reference_makespan: f64,
}

impl SweepTable {
    /// CSV with one row per (family, lat, bw) cell; failed cells leave the
    /// value columns empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("family,lat_ratio,bw_ratio,makespan,slowdown\n");
        for r in &self.rows {
            let ms = r.makespan.map(|v| v.to_string()).unwrap_or_default();
            let sd = r.slowdown.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.family, r.lat_ratio, r.bw_ratio, ms, sd
            ));
        }
        out
    }

    pub fn get(&self, family: Family, lat: f64, bw: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| {
            r.family == family.name() && r.lat_ratio == lat && r.bw_ratio == bw
        })
    }
}

/// Derives the per-family problem at one delay point: the right pattern and
/// chunking, the family's natural memory budget, and cross-DC alpha/beta set
/// from the delay ratios.
pub fn derive_for_family(
    base: &ProblemSpec,
    family: Family,
    lat_ratio: f64,
    bw_ratio: f64,
    n_sub: usize,
) -> Result<ProblemSpec> {
    let t_f = base.t_f_norm();
    let mut spec = base.clone();
    spec.n_sub = 1;

    // Chunked patterns split each block's duration and memory evenly.
    let rechunk = |spec: &mut ProblemSpec, pattern: PatternTag, chunks: usize| {
        spec.pattern = pattern;
        spec.n_chunks = chunks;
        let k = chunks as f64;
        for table in [
            &mut spec.t_f,
            &mut spec.t_d,
            &mut spec.t_w,
            &mut spec.m_f,
            &mut spec.m_d,
            &mut spec.m_w,
        ] {
            for row in table.iter_mut() {
                let whole: f64 = row.iter().sum();
                *row = vec![whole / k; chunks];
            }
        }
    };
    match family {
        Family::OneFOneB | Family::ZbH1 | Family::CrossUd | Family::CrossUdSub => {}
        Family::Interleaved => rechunk(&mut spec, PatternTag::Loop, 2),
        Family::ZbV | Family::CrossWave => rechunk(&mut spec, PatternTag::Wave, 2),
    }

    // Delay ratios: one boundary message takes lat_ratio * T_F of latency and
    // bw_ratio * T_F of link occupancy.
    let msg = spec.msg_fwd.first().copied().unwrap_or(1.0).max(f64::MIN_POSITIVE);
    let n_dc = spec.n_dc();
    for i in 0..n_dc {
        for j in 0..n_dc {
            if i != j {
                spec.alpha[i][j] = lat_ratio * t_f;
                spec.beta[i][j] = bw_ratio * t_f / msg;
            }
        }
    }

    spec.m_limit = match family {
        Family::OneFOneB | Family::ZbH1 | Family::CrossUd | Family::CrossUdSub => {
            one_f_one_b_budget(&spec)
        }
        Family::ZbV | Family::CrossWave => wave_budget(&spec),
        Family::Interleaved => {
            // Instance-dependent: take the peak the layout actually holds.
            let mut relaxed = spec.clone();
            relaxed.m_limit = vec![f64::INFINITY; spec.n_pp];
            build_static(&relaxed, Family::Interleaved)?.mem_budget
        }
    };
    if family == Family::CrossUdSub {
        spec.n_sub = n_sub;
    }
    spec.validate()?;
    Ok(spec)
}

/// The dependency graph matching a family's backward semantics: families
/// with an un-split backward hand gradients off after the whole B block.
pub fn graph_for_family(spec: &ProblemSpec, family: Family) -> Result<DependencyGraph> {
    let graph = match family {
        Family::OneFOneB | Family::Interleaved => build_true_deps_combined(spec)?,
        _ => build_true_deps(spec)?,
    };
    Ok(if family == Family::CrossUdSub {
        split_sub_blocks(&graph, spec.n_sub)
    } else {
        graph
    })
}

/// Builds or generates a family's schedule and simulates it; the measured
/// makespan is the conventional one (first forward on stage 0 to last
/// completion anywhere).
pub fn evaluate_family(
    base: &ProblemSpec,
    family: Family,
    lat_ratio: f64,
    bw_ratio: f64,
    n_sub: usize,
    solver_budget: f64,
) -> Result<(SchedulePlan, Timeline)> {
    let spec = derive_for_family(base, family, lat_ratio, bw_ratio, n_sub)?;
    let graph = graph_for_family(&spec, family)?;
    match family {
        f if f.is_static() => {
            let plan = build_static(&spec, family)?;
            let tl = simulate(&graph, &plan, &spec)?;
            Ok((plan, tl))
        }
        Family::CrossUdSub => {
            let (plan, tl) = generate_greedy(&spec)?;
            Ok((plan, tl))
        }
        _ => {
            let model = build_model(&graph, &spec);
            let outcome = solve_exact(&model, solver_budget)?;
            Ok((outcome.plan, outcome.timeline))
        }
    }
}

/// Sweeps every family over the delay grid and normalizes against the
/// reference cell.
pub fn delay_sweep(config: &SweepConfig, workers: usize) -> Result<SweepTable> {
    config.validate()?;
    let (rf, rl, rb) = config.reference;
    let reference =
        evaluate_family(&config.base, rf, rl, rb, config.n_sub, config.solver_budget)?
            .1
            .metrics
            .makespan_stage0;

    let mut cells = Vec::new();
    for &family in &config.families {
        for &lat in &config.lat_ratios {
            for &bw in &config.bw_ratios {
                cells.push((family, lat, bw));
            }
        }
    }
    let rows = parallel_map(workers, &cells, |&(family, lat, bw)| {
        match evaluate_family(&config.base, family, lat, bw, config.n_sub, config.solver_budget)
        {
            Ok((_, tl)) => SweepRow {
                family: family.name().to_string(),
                lat_ratio: lat,
                bw_ratio: bw,
                makespan: Some(tl.metrics.makespan_stage0),
                slowdown: Some(tl.metrics.makespan_stage0 / reference),
                error: None,
            },
            Err(e) => SweepRow {
                family: family.name().to_string(),
                lat_ratio: lat,
                bw_ratio: bw,
                makespan: None,
                slowdown: None,
                error: Some(e.to_string()),
            },
        }
    });
    Ok(SweepTable {
        rows,
        reference_makespan: reference,
    })
}

/// Cross-DC PP versus cross-DC DP study configuration. Computation times
/// derive from a per-layer FLOP count: `t_layer = c_layer / (p_gpu * n_tp)`,
/// and a stage's forward time is its layer share times `t_layer`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PPDPConfig {
    /// Total parameter count, for the DP synchronization volume.
    pub n_params: f64,
    pub hidden_dim: u64,
    pub seq_len: u64,
    pub micro_batch: u64,
    pub n_tp: usize,
    pub n_pp: usize,
    pub n_dp: usize,
    /// Transformer layers plus embedding and output layers, which count as
    /// layers for stage balance.
    pub n_layers: usize,
    /// Sustained per-GPU throughput, FLOP/s.
    pub p_gpu: f64,
    /// FLOPs of one layer for one microbatch; an input, calibrated so the
    /// reference preset lands on its published forward time.
    pub c_layer: f64,
    /// Bytes per element of the PP boundary messages.
    pub bytes_per_elem: f64,
    pub gbs: usize,
    /// Cross-DC bandwidths to sweep, bytes/s.
    pub bandwidths: Vec<f64>,
    /// Cross-DC latencies to sweep, seconds.
    pub latencies: Vec<f64>,
    #[serde(default = "default_nsub")]
    pub n_sub: usize,
}

impl PPDPConfig {
    /// The Llama-3-405B training configuration across two DCs; `c_layer` is
    /// calibrated to a 109 ms per-stage forward time.
    pub fn llama3_405b() -> Self {
        let n_tp = 8;
        let n_pp = 16;
        let n_dp = 64;
        let p_gpu = 500e12;
        let n_layers = 126 + 2;
        let layers_per_stage = n_layers / n_pp;
        let t_f_target = 0.109;
        let c_layer = t_f_target * p_gpu * n_tp as f64 / layers_per_stage as f64;
        PPDPConfig {
            n_params: 406e9,
            hidden_dim: 16384,
            seq_len: 8192,
            micro_batch: 1,
            n_tp,
            n_pp,
            n_dp,
            n_layers,
            p_gpu,
            c_layer,
            bytes_per_elem: 1.0,
            gbs: 2 * n_pp * n_dp,
            bandwidths: [4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0, 1024.0, 2048.0]
                .iter()
                .map(|g| g * 1e9)
                .collect(),
            latencies: vec![4e-3, 16e-3, 64e-3, 128e-3],
            n_sub: default_nsub(),
        }
    }

    /// Max per-microbatch forward time per stage.
    pub fn t_f(&self) -> f64 {
        let t_layer = self.c_layer / (self.p_gpu * self.n_tp as f64);
        (self.n_layers as f64 / self.n_pp as f64) * t_layer
    }

    /// Bytes of one PP boundary message, aggregated over the DP replicas
    /// sharing the cross-DC pipe.
    pub fn pp_message_bytes(&self) -> f64 {
        (self.micro_batch * self.seq_len * self.hidden_dim * self.n_dp as u64) as f64
            * self.bytes_per_elem
    }

    pub fn n_mb(&self) -> usize {
        self.gbs / self.n_dp
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_pp < 2 || self.n_dp < 1 || self.n_tp < 1 {
            return Err(Error::Validation("parallelism sizes must be positive".into()));
        }
        if !self.gbs.is_multiple_of(self.n_dp) || self.n_mb() < self.n_pp {
            return Err(Error::Validation(
                "gbs must give each DP rank at least n_pp microbatches".into(),
            ));
        }
        if self.bandwidths.iter().any(|&b| b <= 0.0) || self.latencies.iter().any(|&l| l < 0.0) {
            return Err(Error::Validation("bandwidths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PpDpRow {
    pub bandwidth: f64,
    pub latency: f64,
    pub t_pp: f64,
    pub t_dp: f64,
    /// t_dp / t_pp.
    pub speedup: f64,
    /// t_pp over the ideal single-DC iteration.
    pub slowdown_vs_single_dc: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PpDpTable {
    pub rows: Vec<PpDpRow>,
    /// Zero-delay single-DC wave iteration time.
    pub t_ideal: f64,
}

impl PpDpTable {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("bandwidth,latency,t_pp,t_dp,speedup,slowdown_vs_single_dc\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.bandwidth, r.latency, r.t_pp, r.t_dp, r.speedup, r.slowdown_vs_single_dc
            ));
        }
        out
    }
}

fn ppdp_base_spec(config: &PPDPConfig, alpha: f64, beta: f64) -> Result<ProblemSpec> {
    let t_f = config.t_f();
    let mut spec =
        crate::problem::ProblemBuilder::new(PatternTag::Ud, config.n_pp, config.n_mb())
            .durations(t_f, t_f, t_f)
            .memory(2.0, -1.0)
            .dcs(2)
            .cross_delay(alpha, beta)
            .message_bytes(config.pp_message_bytes())
            .build()?;
    // The 1F1B envelope plus two in-flight microbatches: one per cross-DC
    // latency hit in the activation/gradient round trip, so WAN latency sits
    // outside the admission loop instead of throttling it.
    spec.m_limit = one_f_one_b_budget(&spec)
        .iter()
        .map(|b| b + 2.0 * spec.m_f[0][0])
        .collect();
    Ok(spec)
}

/// A dynamic wave schedule for instances beyond the exact solver: the same
/// delay-aware list scheduling that derives the wave layout, run against the
/// actual link delays. Returns the plan and its simulated timeline.
pub fn wave_list_schedule(spec: &ProblemSpec) -> Result<(SchedulePlan, Timeline)> {
    if spec.pattern != PatternTag::Wave {
        return Err(Error::Validation("wave scheduling needs the Wave pattern".into()));
    }
    let graph = build_true_deps(spec)?;
    let budget = spec.m_limit.clone();
    let orders = crate::static_schedules::guided_order(spec, &graph, &budget)?;
    let mut plan = SchedulePlan::new("cross-wave", "wave-greedy", 1, budget);
    for (stage, ids) in orders.into_iter().enumerate() {
        plan.stages[stage] = ids
            .into_iter()
            .map(|id| graph.block_key(id).unwrap().1)
            .collect();
    }
    let tl = simulate(&graph, &plan, spec)?;
    Ok((plan, tl))
}

/// Iteration time of cross-DC PP: the best of the whole-block greedy, the
/// sub-block greedy variants and the dynamic wave schedule under the given
/// link. The wave side gets half again its natural memory envelope, the
/// headroom it needs to absorb latency rather than stall on it.
fn t_pp(config: &PPDPConfig, alpha: f64, beta: f64) -> Result<f64> {
    let mut best = f64::INFINITY;
    let mut subs = vec![1];
    for s in [2, config.n_sub] {
        if s > 1 && !subs.contains(&s) {
            subs.push(s);
        }
    }
    for n_sub in subs {
        let mut spec = ppdp_base_spec(config, alpha, beta)?;
        spec.n_sub = n_sub;
        let (_, tl) = generate_greedy(&spec)?;
        best = best.min(tl.metrics.makespan_stage0);
    }
    let t_f = config.t_f();
    let mut wave =
        crate::problem::ProblemBuilder::new(PatternTag::Wave, config.n_pp, config.n_mb())
            .durations(t_f, t_f, t_f)
            .memory(2.0, -1.0)
            .dcs(2)
            .cross_delay(alpha, beta)
            .message_bytes(config.pp_message_bytes())
            .build()?;
    wave.m_limit = wave_budget(&wave).iter().map(|b| b * 1.5).collect();
    let (_, tl) = wave_list_schedule(&wave)?;
    best = best.min(tl.metrics.makespan_stage0);
    Ok(best)
}

/// Zero-delay single-DC wave iteration time, the DP side's pipeline cost and
/// the ideal reference.
fn t_ideal(config: &PPDPConfig) -> Result<f64> {
    let t_f = config.t_f();
    let spec = crate::problem::ProblemBuilder::new(PatternTag::Wave, config.n_pp, config.n_mb())
        .durations(t_f, t_f, t_f)
        .memory(2.0, -1.0)
        .mem_limit_uniform(2.0 * config.n_pp as f64)
        .build()?;
    let plan = build_static(&spec, Family::ZbV)?;
    let graph = build_true_deps(&spec)?;
    let tl = simulate(&graph, &plan, &spec)?;
    Ok(tl.metrics.makespan_stage0)
}

/// Compares cross-DC PP against cross-DC DP over the bandwidth/latency grid.
/// The DP side runs the zero-delay wave schedule plus the un-overlapped
/// cross-DC synchronization cost `2 alpha + 2 N beta` (ring schedule, BF16).
pub fn pp_vs_dp(config: &PPDPConfig, workers: usize) -> Result<PpDpTable> {
    config.validate()?;
    let ideal = t_ideal(config)?;
    let mut cells = Vec::new();
    for &bw in &config.bandwidths {
        for &lat in &config.latencies {
            cells.push((bw, lat));
        }
    }
    let rows: Vec<Result<PpDpRow>> = parallel_map(workers, &cells, |&(bw, lat)| {
        let beta = 1.0 / bw;
        let pp = t_pp(config, lat, beta)?;
        let dp = ideal + 2.0 * lat + 2.0 * config.n_params * beta;
        Ok(PpDpRow {
            bandwidth: bw,
            latency: lat,
            t_pp: pp,
            t_dp: dp,
            speedup: dp / pp,
            slowdown_vs_single_dc: pp / ideal,
        })
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(PpDpTable {
        rows,
        t_ideal: ideal,
    })
}

#[derive(Debug, Clone)]
pub struct StrideReport {
    /// (latency, makespan) per requested point.
    pub points: Vec<(f64, f64)>,
    /// Overall makespan change per unit of latency.
    pub slope: f64,
    /// Cross-DC transfers on the critical path at the largest latency.
    pub critical_crossings: usize,
    /// One rendered timeline per latency point.
    pub gantts: Vec<(f64, String)>,
}

/// Simulates a static family across latency points, reporting how the delay
/// accumulates and rendering a timeline per point.
pub fn bubble_stride_demo(
    spec: &ProblemSpec,
    family: Family,
    latency_points: &[f64],
) -> Result<StrideReport> {
    if !family.is_static() {
        return Err(Error::Validation(
            "bubble strides are a property of static schedules".into(),
        ));
    }
    let plan = build_static(spec, family)?;
    let mut points = Vec::new();
    let mut gantts = Vec::new();
    let mut last: Option<(DependencyGraph, Timeline, ProblemSpec)> = None;
    for &lat in latency_points {
        let mut at = spec.clone();
        let n_dc = at.n_dc();
        for i in 0..n_dc {
            for j in 0..n_dc {
                if i != j {
                    at.alpha[i][j] = lat;
                }
            }
        }
        let graph = graph_for_family(&at, family)?;
        let tl = simulate(&graph, &plan, &at)?;
        points.push((lat, tl.metrics.makespan_stage0));
        gantts.push((lat, render_gantt_string(&tl, &at)));
        last = Some((graph, tl, at));
    }
    let slope = match (points.first(), points.last()) {
        (Some(&(l0, m0)), Some(&(l1, m1))) if l1 > l0 => (m1 - m0) / (l1 - l0),
        _ => 0.0,
    };
    let critical_crossings = match &last {
        Some((graph, tl, _)) => count_dc_crossings(graph, &critical_path(graph, &plan, tl)),
        None => 0,
    };
    Ok(StrideReport {
        points,
        slope,
        critical_crossings,
        gantts,
    })
}
