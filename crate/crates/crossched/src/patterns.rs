//! Traversal patterns and true-dependency graph construction.
//!
//! A traversal pattern describes the stage sequence one microbatch's data
//! visits in the forward direction; the backward pass retraces it in reverse.
//! From a pattern and a problem this module materializes every compute block,
//! every cross-stage transfer and the data-flow edges between them.

use crate::error::{Error, Result};
use crate::graph::{BlockType, CommKind, CommOp, DependencyGraph, OpId};
use crate::problem::{PatternTag, ProblemSpec};

/// A pattern instantiated for a concrete stage count.
#[derive(Debug, Clone)]
pub struct TraversalPattern {
    pub tag: PatternTag,
    /// For each chunk, the stages its layers occupy in forward order.
    pub chunk_paths: Vec<Vec<usize>>,
}

impl TraversalPattern {
    pub fn for_spec(spec: &ProblemSpec) -> Result<TraversalPattern> {
        let n = spec.n_pp;
        let fwd: Vec<usize> = (0..n).collect();
        let paths = match spec.pattern {
            PatternTag::Ud => vec![fwd],
            PatternTag::Loop => vec![fwd; spec.n_chunks],
            PatternTag::Wave => {
                let mut rev = fwd.clone();
                rev.reverse();
                vec![fwd, rev]
            }
            PatternTag::Bd => {
                return Err(Error::UnsupportedPattern(
                    "bidirectional (BD) traversal is out of scope: it mixes PP and DP \
                     cross-DC communication and is excluded from the analysis"
                        .into(),
                ))
            }
        };
        Ok(TraversalPattern {
            tag: spec.pattern,
            chunk_paths: paths,
        })
    }

    /// The flattened (stage, chunk) visit list of one microbatch's forward
    /// pass, chunk by chunk.
    pub fn forward_visits(&self) -> Vec<(usize, usize)> {
        self.chunk_paths
            .iter()
            .enumerate()
            .flat_map(|(k, path)| path.iter().map(move |&s| (s, k)))
            .collect()
    }
}

/// Builds the true-dependency graph: per microbatch an F chain along the
/// forward path, a D chain along the reversed path, F -> D at each
/// (stage, chunk) and D -> W locally. Cross-stage adjacency goes through a
/// transfer op carrying the boundary message size and the alpha/beta delays;
/// same-stage adjacency (the Wave turnaround, the Loop wrap at n_pp = 1) is a
/// direct edge.
///
/// Gradient transfers depart when D completes, the split-backward semantics
/// every W-split schedule relies on.
pub fn build_true_deps(spec: &ProblemSpec) -> Result<DependencyGraph> {
    build_graph(spec, false)
}

/// Like [`build_true_deps`] but with a combined backward: the gradient
/// transfer to the previous stage departs only once the whole B block
/// (D immediately followed by W) has finished. This is how 1F1B and
/// interleaved 1F1B execute their un-split backward kernels.
pub fn build_true_deps_combined(spec: &ProblemSpec) -> Result<DependencyGraph> {
    build_graph(spec, true)
}

fn build_graph(spec: &ProblemSpec, combined_backward: bool) -> Result<DependencyGraph> {
    let pattern = TraversalPattern::for_spec(spec)?;
    let visits = pattern.forward_visits();
    let mut graph = DependencyGraph::new(spec.n_pp);

    for mb in 0..spec.n_mb {
        let f_ops: Vec<OpId> = visits
            .iter()
            .map(|&(s, k)| {
                graph.add_compute(s, k, BlockType::F, mb, 0, spec.t_f[s][k], spec.m_f[s][k])
            })
            .collect();
        let d_ops: Vec<OpId> = visits
            .iter()
            .rev()
            .map(|&(s, k)| {
                graph.add_compute(s, k, BlockType::D, mb, 0, spec.t_d[s][k], spec.m_d[s][k])
            })
            .collect();
        let w_ops: Vec<OpId> = visits
            .iter()
            .rev()
            .map(|&(s, k)| {
                graph.add_compute(s, k, BlockType::W, mb, 0, spec.t_w[s][k], spec.m_w[s][k])
            })
            .collect();

        // Forward chain.
        for i in 0..visits.len() - 1 {
            connect(&mut graph, spec, f_ops[i], f_ops[i + 1], visits[i], visits[i + 1], true, mb);
        }
        // Loss boundary: the backward pass starts where the forward ended.
        // visits.rev()[0] is the same (stage, chunk) as visits.last(), so this
        // is the local F -> D edge there.
        graph.add_edge(*f_ops.last().unwrap(), d_ops[0]);
        // Backward chain. With a combined backward the hand-off happens at
        // the end of the whole B block, so the transfer's producer is the W.
        let back: Vec<(usize, usize)> = visits.iter().rev().copied().collect();
        for i in 0..back.len() - 1 {
            let producer = if combined_backward { w_ops[i] } else { d_ops[i] };
            connect(&mut graph, spec, producer, d_ops[i + 1], back[i], back[i + 1], false, mb);
        }
        // Local edges at each (stage, chunk): activation into D, D before W.
        for (i, &(_s, _k)) in back.iter().enumerate() {
            let f = f_ops[visits.len() - 1 - i];
            graph.add_edge(f, d_ops[i]);
            graph.add_edge(d_ops[i], w_ops[i]);
        }
    }
    Ok(graph)
}

#[allow(clippy::too_many_arguments)]
fn connect(
    graph: &mut DependencyGraph,
    spec: &ProblemSpec,
    from: OpId,
    to: OpId,
    from_at: (usize, usize),
    to_at: (usize, usize),
    forward: bool,
    mb: usize,
) {
    let (src, chunk) = from_at;
    let (dst, _) = to_at;
    if src == dst {
        graph.add_edge(from, to);
        return;
    }
    let bytes = spec.hop_bytes(src, dst, forward);
    let kind = if forward {
        CommKind::Activation
    } else {
        CommKind::Gradient
    };
    graph.add_comm(CommOp {
        id: 0,
        kind,
        producer: Some(from),
        consumer: Some(to),
        src_stage: src,
        dst_stage: dst,
        chunk,
        mb,
        bytes,
        latency: spec.link_alpha(src, dst),
        bw_time: spec.link_beta(src, dst) * bytes,
        link: (spec.dc(src), spec.dc(dst)),
    });
}

/// Appends DP communication to an existing graph. Per (stage, chunk) one sync
/// op depends on the W block of the last microbatch; with ZeRO stage 1 an
/// allgather op additionally precedes the F block of the first microbatch.
pub fn attach_dp_ops(graph: &DependencyGraph, spec: &ProblemSpec) -> Result<DependencyGraph> {
    let dp = spec
        .dp_overlap
        .as_ref()
        .ok_or_else(|| Error::Validation("attach_dp_ops requires spec.dp_overlap".into()))?;
    let mut out = graph.clone();
    let index = graph.compute_index();
    let last_mb = spec.n_mb - 1;

    for stage in 0..spec.n_pp {
        let link = dp.dc_pair.unwrap_or((spec.dc(stage), spec.dc(stage)));
        let latency = spec.alpha[link.0][link.1];
        let bw_time = spec.beta[link.0][link.1] * dp.volume;
        for chunk in 0..spec.n_chunks {
            let last_w = index
                .get(&(stage, crate::graph::BlockKey(chunk, BlockType::W, last_mb, 0)))
                .copied()
                .ok_or_else(|| {
                    Error::Validation(format!(
                        "graph lacks W block for stage {stage}, chunk {chunk}, mb {last_mb}"
                    ))
                })?;
            out.add_comm(CommOp {
                id: 0,
                kind: CommKind::DpSync,
                producer: Some(last_w),
                consumer: None,
                src_stage: stage,
                dst_stage: stage,
                chunk,
                mb: last_mb,
                bytes: dp.volume,
                latency,
                bw_time,
                link,
            });
            if dp.zero_stage == 1 {
                let first_f = index
                    .get(&(stage, crate::graph::BlockKey(chunk, BlockType::F, 0, 0)))
                    .copied()
                    .ok_or_else(|| {
                        Error::Validation(format!(
                            "graph lacks F block for stage {stage}, chunk {chunk}, mb 0"
                        ))
                    })?;
                out.add_comm(CommOp {
                    id: 0,
                    kind: CommKind::DpAllgather,
                    producer: None,
                    consumer: Some(first_f),
                    src_stage: stage,
                    dst_stage: stage,
                    chunk,
                    mb: 0,
                    bytes: dp.volume,
                    latency,
                    bw_time,
                    link,
                });
            }
        }
    }
    Ok(out)
}

/// Splits every compute block into `n_sub` chained sub-blocks of equal
/// duration. Incoming edges attach to the first sub-block, outgoing edges
/// leave the last, so a consumer becomes available only once the producer's
/// final sub-block completes. The block's memory delta is attributed to the
/// last sub-block.
pub fn split_sub_blocks(graph: &DependencyGraph, n_sub: usize) -> DependencyGraph {
    if n_sub <= 1 {
        return graph.clone();
    }
    let mut out = DependencyGraph::new(graph.n_stages());
    let mut first = vec![0 as OpId; graph.len()];
    let mut last = vec![0 as OpId; graph.len()];

    for op in graph.ops() {
        if let Some(c) = op.as_compute() {
            let sub_dur = c.duration / n_sub as f64;
            let mut prev = None;
            for sub in 0..n_sub {
                let delta = if sub + 1 == n_sub { c.mem_delta } else { 0.0 };
                let id = out.add_compute(c.stage, c.chunk, c.block, c.mb, sub, sub_dur, delta);
                if let Some(p) = prev {
                    out.add_edge(p, id);
                } else {
                    first[c.id] = id;
                }
                prev = Some(id);
            }
            last[c.id] = prev.unwrap();
        }
    }
    // Comm ops and the remaining compute-to-compute edges.
    for op in graph.ops() {
        match op {
            Op::Comm(c) => {
                let mut comm = c.clone();
                comm.producer = c.producer.map(|p| last[p]);
                comm.consumer = c.consumer.map(|q| first[q]);
                out.add_comm(comm);
            }
            Op::Compute(c) => {
                for &succ in graph.succs(c.id) {
                    if graph.op(succ).as_compute().is_some() {
                        out.add_edge(last[c.id], first[succ]);
                    }
                }
            }
        }
    }
    out
}

use crate::graph::Op;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::ProblemBuilder;

    fn count_blocks(g: &DependencyGraph, t: BlockType) -> usize {
        g.compute_ops().filter(|c| c.block == t).count()
    }

    fn cross_dc_comms(g: &DependencyGraph, spec: &ProblemSpec) -> usize {
        g.comm_ops()
            .filter(|c| spec.dc(c.src_stage) != spec.dc(c.dst_stage))
            .count()
    }

    #[test]
    fn ud_two_stage_single_microbatch() {
        let spec = ProblemBuilder::new(PatternTag::Ud, 2, 1).dcs(2).build().unwrap();
        let g = build_true_deps(&spec).unwrap();
        assert_eq!(count_blocks(&g, BlockType::F), 2);
        assert_eq!(count_blocks(&g, BlockType::D), 2);
        assert_eq!(count_blocks(&g, BlockType::W), 2);
        assert_eq!(g.comm_ops().count(), 2);
        let kinds: Vec<CommKind> = g.comm_ops().map(|c| c.kind).collect();
        assert_eq!(kinds, vec![CommKind::Activation, CommKind::Gradient]);
        g.topo_order().unwrap();
    }

    #[test]
    fn wave_two_stage_boundary_crossings() {
        let spec = ProblemBuilder::new(PatternTag::Wave, 2, 1).dcs(2).build().unwrap();
        let g = build_true_deps(&spec).unwrap();
        assert_eq!(count_blocks(&g, BlockType::F), 4);
        assert_eq!(count_blocks(&g, BlockType::D), 4);
        assert_eq!(count_blocks(&g, BlockType::W), 4);
        assert_eq!(cross_dc_comms(&g, &spec), 4);
    }

    #[test]
    fn loop_crossings_per_microbatch() {
        // Two chunks over four stages in two DCs: each chunk crosses the DC
        // boundary once per direction and each wrap crosses once per
        // direction, six cross-DC transfers per microbatch in total.
        let spec = ProblemBuilder::new(PatternTag::Loop, 4, 1).chunks(2).dcs(2).build().unwrap();
        let g = build_true_deps(&spec).unwrap();
        assert_eq!(cross_dc_comms(&g, &spec), 6);

        let spec = ProblemBuilder::new(PatternTag::Loop, 4, 2).chunks(2).dcs(2).build().unwrap();
        let g = build_true_deps(&spec).unwrap();
        assert_eq!(cross_dc_comms(&g, &spec), 12);
    }

    #[test]
    fn op_counts_scale_with_instance() {
        for (pat, n_pp, n_mb, chunks) in [
            (PatternTag::Ud, 3, 4, 1),
            (PatternTag::Wave, 4, 2, 2),
            (PatternTag::Loop, 2, 3, 3),
        ] {
            let spec = ProblemBuilder::new(pat, n_pp, n_mb).chunks(chunks).build().unwrap();
            let g = build_true_deps(&spec).unwrap();
            let expect = n_mb * n_pp * chunks;
            assert_eq!(count_blocks(&g, BlockType::F), expect);
            assert_eq!(count_blocks(&g, BlockType::D), expect);
            assert_eq!(count_blocks(&g, BlockType::W), expect);
            g.topo_order().unwrap();
        }
    }

    #[test]
    fn generated_graphs_are_acyclic_across_the_range() {
        for n_pp in 1..=5 {
            for n_mb in 1..=3 {
                for (pattern, chunks) in [
                    (PatternTag::Ud, 1),
                    (PatternTag::Loop, 2),
                    (PatternTag::Loop, 3),
                    (PatternTag::Wave, 2),
                ] {
                    let spec = ProblemBuilder::new(pattern, n_pp, n_mb)
                        .chunks(chunks)
                        .dcs(n_pp.min(2))
                        .build()
                        .unwrap();
                    let g = build_true_deps(&spec).unwrap();
                    g.topo_order().unwrap();
                    let c = crate::patterns::build_true_deps_combined(&spec).unwrap();
                    c.topo_order().unwrap();
                    let split = split_sub_blocks(&g, 2);
                    split.topo_order().unwrap();
                }
            }
        }
    }

    #[test]
    fn bd_pattern_rejected() {
        let mut spec = ProblemBuilder::new(PatternTag::Ud, 2, 1).build().unwrap();
        spec.pattern = PatternTag::Bd;
        let err = build_true_deps(&spec).unwrap_err();
        assert!(err.to_string().contains("out of scope"), "{err}");
    }

    #[test]
    fn dp_ops_attach_per_chunk() {
        let mut spec = ProblemBuilder::new(PatternTag::Wave, 2, 3).dcs(2).build().unwrap();
        spec.dp_overlap = Some(crate::problem::DpOverlap {
            volume: 100.0,
            zero_stage: 0,
            dc_pair: None,
        });
        let base = build_true_deps(&spec).unwrap();
        let g = attach_dp_ops(&base, &spec).unwrap();
        let syncs: Vec<&CommOp> = g.comm_ops().filter(|c| c.kind == CommKind::DpSync).collect();
        assert_eq!(syncs.len(), 4); // 2 stages x 2 chunks
        for s in &syncs {
            let w = g.op(s.producer.unwrap()).as_compute().unwrap();
            assert_eq!(w.block, BlockType::W);
            assert_eq!(w.mb, spec.n_mb - 1);
        }
        assert_eq!(g.comm_ops().filter(|c| c.kind == CommKind::DpAllgather).count(), 0);

        spec.dp_overlap.as_mut().unwrap().zero_stage = 1;
        let g = attach_dp_ops(&base, &spec).unwrap();
        let gathers: Vec<&CommOp> =
            g.comm_ops().filter(|c| c.kind == CommKind::DpAllgather).collect();
        assert_eq!(gathers.len(), 4);
        for a in &gathers {
            let f = g.op(a.consumer.unwrap()).as_compute().unwrap();
            assert_eq!(f.block, BlockType::F);
            assert_eq!(f.mb, 0);
        }
    }

    #[test]
    fn sub_block_split_preserves_structure() {
        let spec = ProblemBuilder::new(PatternTag::Ud, 2, 2).dcs(2).build().unwrap();
        let g = build_true_deps(&spec).unwrap();
        let split = split_sub_blocks(&g, 4);
        assert_eq!(split.n_compute(), g.n_compute() * 4);
        assert_eq!(split.comm_ops().count(), g.comm_ops().count());
        split.topo_order().unwrap();
        // Memory lands on the final sub-block only.
        for c in split.compute_ops() {
            if c.sub_index < 3 {
                assert_eq!(c.mem_delta, 0.0);
            }
        }
        // A transfer leaves the last sub-block and feeds a first sub-block.
        for c in split.comm_ops() {
            assert_eq!(split.op(c.producer.unwrap()).as_compute().unwrap().sub_index, 3);
            assert_eq!(split.op(c.consumer.unwrap()).as_compute().unwrap().sub_index, 0);
        }
    }
}
