//! Problem instances: the full description of one scheduling problem.
//!
//! A [`ProblemSpec`] carries everything needed to build dependency graphs,
//! construct schedules and simulate them: pipeline shape, per-block durations,
//! memory behaviour, the datacenter topology and the communication cost
//! matrices. Instances are immutable after [`ProblemSpec::validate`] passes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for time comparisons, in seconds.
pub const TIME_EPS: f64 = 1e-12;

/// Traversal pattern tag. `Bd` parses but is rejected by graph construction;
/// bidirectional schedules mix PP and DP cross-DC traffic and are not modeled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PatternTag {
    #[serde(rename = "UD")]
    Ud,
    #[serde(rename = "Loop")]
    Loop,
    #[serde(rename = "Wave")]
    Wave,
    #[serde(rename = "BD")]
    Bd,
}

impl std::fmt::Display for PatternTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PatternTag::Ud => "UD",
            PatternTag::Loop => "Loop",
            PatternTag::Wave => "Wave",
            PatternTag::Bd => "BD",
        };
        f.write_str(s)
    }
}

/// Optional modeling of data-parallel gradient synchronization overlapping
/// with the pipeline.
///
/// One sync operation is appended per (stage, chunk) after the W block of the
/// last microbatch; with ZeRO stage 1 a parameter allgather of the same volume
/// precedes the first F block of each chunk. `dc_pair` names the directed DC
/// link the traffic occupies; when absent the stage's own DC self-link is
/// used, so the cost comes from the diagonal of `alpha`/`beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpOverlap {
    /// Bytes moved per (stage, chunk) sync operation.
    pub volume: f64,
    /// ZeRO stage, 0 or 1.
    pub zero_stage: u8,
    /// Directed DC pair carrying the DP traffic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dc_pair: Option<(usize, usize)>,
}

/// A complete scheduling instance.
///
/// Durations are seconds, memory quantities are bytes and may be fractional.
/// All per-(stage, chunk) tables are indexed `[stage][chunk]`. `alpha` is the
/// latency matrix and `beta` the inverse-bandwidth matrix (seconds per byte),
/// both indexed by directed DC pair. `msg_fwd[i]`/`msg_bwd[i]` are the
/// activation/gradient message sizes crossing the boundary between stages
/// `i` and `i + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub n_pp: usize,
    pub n_mb: usize,
    pub n_chunks: usize,
    #[serde(default = "default_one")]
    pub n_sub: usize,
    pub pattern: PatternTag,
    pub t_f: Vec<Vec<f64>>,
    pub t_d: Vec<Vec<f64>>,
    pub t_w: Vec<Vec<f64>>,
    pub m_f: Vec<Vec<f64>>,
    pub m_d: Vec<Vec<f64>>,
    pub m_w: Vec<Vec<f64>>,
    pub m_limit: Vec<f64>,
    pub dc_of_stage: Vec<usize>,
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    pub msg_fwd: Vec<f64>,
    pub msg_bwd: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dp_overlap: Option<DpOverlap>,
}

fn default_one() -> usize {
    1
}

impl ProblemSpec {
    /// Number of datacenters described by the cost matrices.
    pub fn n_dc(&self) -> usize {
        self.alpha.len()
    }

    /// DC index hosting `stage`.
    pub fn dc(&self, stage: usize) -> usize {
        self.dc_of_stage[stage]
    }

    /// Checks every structural invariant; returns the first violation found.
    pub fn validate(&self) -> Result<()> {
        if self.n_pp < 1 || self.n_mb < 1 || self.n_chunks < 1 || self.n_sub < 1 {
            return Err(Error::Validation(
                "n_pp, n_mb, n_chunks and n_sub must all be at least 1".into(),
            ));
        }
        match self.pattern {
            PatternTag::Ud if self.n_chunks != 1 => {
                return Err(Error::Validation(format!(
                    "UD pattern requires n_chunks = 1, got {}",
                    self.n_chunks
                )))
            }
            PatternTag::Loop if self.n_chunks < 2 => {
                return Err(Error::Validation(format!(
                    "Loop pattern requires n_chunks >= 2, got {}",
                    self.n_chunks
                )))
            }
            PatternTag::Wave if self.n_chunks != 2 => {
                return Err(Error::Validation(format!(
                    "Wave pattern requires n_chunks = 2, got {}",
                    self.n_chunks
                )))
            }
            _ => {}
        }

        for (name, table) in [
            ("t_f", &self.t_f),
            ("t_d", &self.t_d),
            ("t_w", &self.t_w),
            ("m_f", &self.m_f),
            ("m_d", &self.m_d),
            ("m_w", &self.m_w),
        ] {
            if table.len() != self.n_pp || table.iter().any(|row| row.len() != self.n_chunks) {
                return Err(Error::Validation(format!(
                    "{name} must be an n_pp x n_chunks table ({} x {})",
                    self.n_pp, self.n_chunks
                )));
            }
        }
        for (name, table) in [("t_f", &self.t_f), ("t_d", &self.t_d), ("t_w", &self.t_w)] {
            if table.iter().flatten().any(|&v| !v.is_finite() || v <= 0.0) {
                return Err(Error::Validation(format!(
                    "{name} durations must be positive and finite"
                )));
            }
        }
        for s in 0..self.n_pp {
            for k in 0..self.n_chunks {
                let (mf, md, mw) = (self.m_f[s][k], self.m_d[s][k], self.m_w[s][k]);
                if !mf.is_finite() || mf <= 0.0 {
                    return Err(Error::Validation(format!(
                        "m_f must be positive (stage {s}, chunk {k})"
                    )));
                }
                if md > 0.0 || mw > 0.0 {
                    return Err(Error::Validation(format!(
                        "m_d and m_w must be non-positive (stage {s}, chunk {k})"
                    )));
                }
                let sum = mf + md + mw;
                if sum.abs() > 1e-9 * mf.max(1.0) {
                    return Err(Error::Validation(format!(
                        "memory deltas do not sum to zero (stage {s}, chunk {k}: \
                         {mf} + {md} + {mw} = {sum})"
                    )));
                }
            }
        }

        if self.m_limit.len() != self.n_pp {
            return Err(Error::Validation("m_limit must have one entry per stage".into()));
        }
        for s in 0..self.n_pp {
            let need = self.m_f[s].iter().cloned().fold(f64::MIN, f64::max);
            if self.m_limit[s] < need {
                return Err(Error::Validation(format!(
                    "m_limit[{s}] = {} is below the largest forward allocation {need}; \
                     at least one microbatch must fit",
                    self.m_limit[s]
                )));
            }
        }

        if self.dc_of_stage.len() != self.n_pp {
            return Err(Error::Validation("dc_of_stage must have one entry per stage".into()));
        }
        if self.dc_of_stage[0] != 0 {
            return Err(Error::Validation(
                "non-contiguous DC assignment: dc_of_stage must start at 0".into(),
            ));
        }
        for w in self.dc_of_stage.windows(2) {
            if w[1] != w[0] && w[1] != w[0] + 1 {
                return Err(Error::Validation(
                    "non-contiguous DC assignment: stages must be partitioned \
                     contiguously among DCs"
                        .into(),
                ));
            }
        }
        let n_dc = self.dc_of_stage[self.n_pp - 1] + 1;
        for (name, m) in [("alpha", &self.alpha), ("beta", &self.beta)] {
            if m.len() != n_dc || m.iter().any(|row| row.len() != n_dc) {
                return Err(Error::Validation(format!(
                    "{name} must be an n_dc x n_dc matrix ({n_dc} x {n_dc})"
                )));
            }
            if m.iter().flatten().any(|&v| v < 0.0 || !v.is_finite()) {
                return Err(Error::Validation(format!("{name} entries must be >= 0 and finite")));
            }
        }

        let n_bounds = self.n_pp.saturating_sub(1);
        if self.msg_fwd.len() != n_bounds || self.msg_bwd.len() != n_bounds {
            return Err(Error::Validation(format!(
                "msg_fwd and msg_bwd must have one entry per stage boundary ({n_bounds})"
            )));
        }
        if self.msg_fwd.iter().chain(&self.msg_bwd).any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::Validation("message sizes must be >= 0 and finite".into()));
        }

        if let Some(dp) = &self.dp_overlap {
            if dp.volume < 0.0 || !dp.volume.is_finite() {
                return Err(Error::Validation("dp_overlap.volume must be >= 0 and finite".into()));
            }
            if dp.zero_stage > 1 {
                return Err(Error::Validation(format!(
                    "dp_overlap.zero_stage must be 0 or 1, got {}",
                    dp.zero_stage
                )));
            }
            if let Some((a, b)) = dp.dc_pair {
                if a >= n_dc || b >= n_dc {
                    return Err(Error::Validation(format!(
                        "dp_overlap.dc_pair ({a}, {b}) out of range for {n_dc} DCs"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Latency of the directed link between the DCs of two stages.
    pub fn link_alpha(&self, src_stage: usize, dst_stage: usize) -> f64 {
        self.alpha[self.dc(src_stage)][self.dc(dst_stage)]
    }

    /// Inverse bandwidth of the directed link between the DCs of two stages.
    pub fn link_beta(&self, src_stage: usize, dst_stage: usize) -> f64 {
        self.beta[self.dc(src_stage)][self.dc(dst_stage)]
    }

    /// Message bytes for a hop between stages. Adjacent stages use the
    /// boundary between them; the Loop wrap (a non-adjacent hop) uses the
    /// interface the message departs from.
    pub fn hop_bytes(&self, src_stage: usize, dst_stage: usize, forward: bool) -> f64 {
        debug_assert_ne!(src_stage, dst_stage);
        let table = if forward { &self.msg_fwd } else { &self.msg_bwd };
        if src_stage.abs_diff(dst_stage) == 1 {
            table[src_stage.min(dst_stage)]
        } else if forward {
            table[self.n_pp - 2]
        } else {
            table[0]
        }
    }

    /// Max per-microbatch forward computation time over stages, the
    /// normalization constant for delay ratios.
    pub fn t_f_norm(&self) -> f64 {
        (0..self.n_pp)
            .map(|s| self.t_f[s].iter().sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Representative (latency seconds, inverse bandwidth seconds/byte) pairs for
/// the four cross-DC infrastructure classes. Bandwidths are given in the
/// literature as Gb/s and converted here; ranges are represented by a single
/// point (cross-campus 100 us; cross-region 65 ms and 3 Gb/s).
pub fn preset(name: &str) -> Result<(f64, f64)> {
    let gbps = |g: f64| 8.0 / (g * 1e9);
    match name {
        "same-campus" => Ok((10e-6, gbps(800.0))),
        "cross-campus" => Ok((100e-6, gbps(200.0))),
        "same-region-cloud" => Ok((1e-3, gbps(11.3))),
        "cross-region-cloud" => Ok((65e-3, gbps(3.0))),
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}

/// Names accepted by [`preset`], ordered from closest to farthest.
pub const PRESET_NAMES: [&str; 4] = [
    "same-campus",
    "cross-campus",
    "same-region-cloud",
    "cross-region-cloud",
];

/// Bytes of one pipeline boundary message: microbatch size x sequence length
/// x hidden dimension, aggregated over DP replicas sharing the link.
pub fn message_size(b: u64, s: u64, d: u64, n_dp: u64, bytes_per_elem: u64) -> u64 {
    debug_assert!(b >= 1 && s >= 1 && d >= 1 && n_dp >= 1 && bytes_per_elem >= 1);
    b * s * d * n_dp * bytes_per_elem
}

/// Convenience constructor for uniform instances, used heavily by the
/// analysis module and tests.
#[derive(Debug, Clone)]
pub struct ProblemBuilder {
    pattern: PatternTag,
    n_pp: usize,
    n_mb: usize,
    n_chunks: usize,
    n_sub: usize,
    t_f: f64,
    t_d: f64,
    t_w: f64,
    m_f: f64,
    m_d: f64,
    m_limit: Option<Vec<f64>>,
    n_dc: usize,
    alpha_cross: f64,
    beta_cross: f64,
    msg_bytes: f64,
    dp_overlap: Option<DpOverlap>,
}

impl ProblemBuilder {
    pub fn new(pattern: PatternTag, n_pp: usize, n_mb: usize) -> Self {
        let n_chunks = match pattern {
            PatternTag::Ud => 1,
            _ => 2,
        };
        ProblemBuilder {
            pattern,
            n_pp,
            n_mb,
            n_chunks,
            n_sub: 1,
            t_f: 1.0,
            t_d: 1.0,
            t_w: 1.0,
            m_f: 2.0,
            m_d: -1.0,
            m_limit: None,
            n_dc: 1,
            alpha_cross: 0.0,
            beta_cross: 0.0,
            msg_bytes: 1.0,
            dp_overlap: None,
        }
    }

    pub fn chunks(mut self, n: usize) -> Self {
        self.n_chunks = n;
        self
    }

    pub fn sub_blocks(mut self, n: usize) -> Self {
        self.n_sub = n;
        self
    }

    /// Whole-block durations; chunked patterns divide them evenly per chunk.
    pub fn durations(mut self, t_f: f64, t_d: f64, t_w: f64) -> Self {
        self.t_f = t_f;
        self.t_d = t_d;
        self.t_w = t_w;
        self
    }

    /// Whole-block forward allocation and the share released by D; W releases
    /// the remainder. Chunked patterns divide evenly per chunk.
    pub fn memory(mut self, m_f: f64, m_d: f64) -> Self {
        self.m_f = m_f;
        self.m_d = m_d;
        self
    }

    pub fn mem_limit(mut self, per_stage: Vec<f64>) -> Self {
        self.m_limit = Some(per_stage);
        self
    }

    pub fn mem_limit_uniform(mut self, limit: f64) -> Self {
        self.m_limit = Some(vec![limit; self.n_pp]);
        self
    }

    /// Partition stages contiguously and evenly among `n_dc` datacenters.
    pub fn dcs(mut self, n_dc: usize) -> Self {
        self.n_dc = n_dc;
        self
    }

    /// Latency and inverse bandwidth applied to every cross-DC link.
    pub fn cross_delay(mut self, alpha: f64, beta: f64) -> Self {
        self.alpha_cross = alpha;
        self.beta_cross = beta;
        self
    }

    /// Uniform boundary message size in bytes, both directions.
    pub fn message_bytes(mut self, bytes: f64) -> Self {
        self.msg_bytes = bytes;
        self
    }

    pub fn dp_overlap(mut self, dp: DpOverlap) -> Self {
        self.dp_overlap = Some(dp);
        self
    }

    pub fn build(self) -> Result<ProblemSpec> {
        let k = self.n_chunks as f64;
        let per = |v: f64| vec![vec![v / k; self.n_chunks]; self.n_pp];
        let m_f = self.m_f;
        let m_d = self.m_d;
        let m_w = -(m_f + m_d);
        let m_limit = self
            .m_limit
            .unwrap_or_else(|| vec![self.n_pp as f64 * m_f; self.n_pp]);
        let dc_of_stage: Vec<usize> = (0..self.n_pp)
            .map(|s| s * self.n_dc / self.n_pp)
            .collect();
        let mut alpha = vec![vec![0.0; self.n_dc]; self.n_dc];
        let mut beta = vec![vec![0.0; self.n_dc]; self.n_dc];
        for i in 0..self.n_dc {
            for j in 0..self.n_dc {
                if i != j {
                    alpha[i][j] = self.alpha_cross;
                    beta[i][j] = self.beta_cross;
                }
            }
        }
        let n_bounds = self.n_pp.saturating_sub(1);
        let spec = ProblemSpec {
            n_pp: self.n_pp,
            n_mb: self.n_mb,
            n_chunks: self.n_chunks,
            n_sub: self.n_sub,
            pattern: self.pattern,
            t_f: per(self.t_f),
            t_d: per(self.t_d),
            t_w: per(self.t_w),
            m_f: per(m_f),
            m_d: per(m_d),
            m_w: per(m_w),
            m_limit,
            dc_of_stage,
            alpha,
            beta,
            msg_fwd: vec![self.msg_bytes; n_bounds],
            msg_bwd: vec![self.msg_bytes; n_bounds],
            dp_overlap: self.dp_overlap,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_values_match_documented_defaults() {
        let (a, b) = preset("same-region-cloud").unwrap();
        assert_eq!(a, 1e-3);
        assert_eq!(b, 1.0 / (11.3 / 8.0 * 1e9));

        let (a, b) = preset("same-campus").unwrap();
        assert_eq!(a, 10e-6);
        assert_eq!(b, 1.0 / (800.0 / 8.0 * 1e9));

        let (a, b) = preset("cross-region-cloud").unwrap();
        assert_eq!(a, 65e-3);
        assert_eq!(b, 1.0 / (3.0 / 8.0 * 1e9));

        assert!(preset("underwater").is_err());
    }

    #[test]
    fn presets_are_monotone_in_distance() {
        let pairs: Vec<(f64, f64)> = PRESET_NAMES.iter().map(|n| preset(n).unwrap()).collect();
        for w in pairs.windows(2) {
            assert!(w[0].0 < w[1].0, "latency must increase with distance");
            assert!(w[0].1 < w[1].1, "inverse bandwidth must increase with distance");
        }
    }

    #[test]
    fn message_size_examples() {
        assert_eq!(message_size(1, 4096, 8192, 16, 2), 1_073_741_824);
        assert_eq!(message_size(1, 4096, 4096, 1, 2), 33_554_432);
        assert_eq!(message_size(1, 1, 1, 1, 1), 1);
    }

    #[test]
    fn builder_produces_valid_specs() {
        let spec = ProblemBuilder::new(PatternTag::Ud, 4, 8)
            .dcs(2)
            .cross_delay(1e-3, 1e-9)
            .build()
            .unwrap();
        assert_eq!(spec.n_dc(), 2);
        assert_eq!(spec.dc_of_stage, vec![0, 0, 1, 1]);
        assert_eq!(spec.msg_fwd.len(), 3);
        assert_eq!(spec.t_f_norm(), 1.0);
    }

    #[test]
    fn non_contiguous_dc_assignment_rejected() {
        let mut spec = ProblemBuilder::new(PatternTag::Ud, 3, 2).dcs(2).build().unwrap();
        spec.dc_of_stage = vec![0, 1, 0];
        let err = spec.validate().unwrap_err();
        assert!(err.to_string().contains("non-contiguous DC assignment"), "{err}");
    }

    #[test]
    fn memory_deltas_must_sum_to_zero() {
        let mut spec = ProblemBuilder::new(PatternTag::Ud, 2, 2).build().unwrap();
        spec.m_f = vec![vec![2.0]; 2];
        spec.m_d = vec![vec![-1.0]; 2];
        spec.m_w = vec![vec![-2.0]; 2];
        let err = spec.validate().unwrap_err();
        assert!(err.to_string().contains("memory deltas do not sum to zero"), "{err}");
    }

    #[test]
    fn wave_requires_two_chunks() {
        assert!(ProblemBuilder::new(PatternTag::Wave, 2, 2).chunks(3).build().is_err());
        assert!(ProblemBuilder::new(PatternTag::Loop, 2, 2).chunks(1).build().is_err());
        assert!(ProblemBuilder::new(PatternTag::Ud, 2, 2).chunks(2).build().is_err());
    }

    #[test]
    fn m_limit_must_fit_one_microbatch() {
        let r = ProblemBuilder::new(PatternTag::Ud, 2, 2).mem_limit_uniform(1.0).build();
        assert!(r.is_err());
    }
}
