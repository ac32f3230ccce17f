//! Divergence measures over aligned PMF sets and the composite stability scores.
//!
//! Two families are provided. The Jensen-Shannon family averages pairwise
//! base-2 JSD over all solution pairs. The variance family computes the
//! normalized total variance `tau = tr(Cov X) / (1 - |E X|^2)` for `X` drawn
//! uniformly from the rows; the denominator is the largest trace any
//! PMF-valued variable with that mean can reach, so `tau` lies in `[0, 1]`.
//!
//! Static scores (SCTD) mix the structural set `P` and the cost-weighted set
//! `Q` with weight `alpha`; dynamic scores (DCTD) do the same per test and
//! average over tests that have at least two successful traces.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pmf::{AlignedPmfSet, DynamicTensor, PmfVector};

/// Below this, `1 - |mu|^2` is treated as zero and `tau` is 0.
pub const TAU_DENOMINATOR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("undefined: {0}")]
    Undefined(&'static str),
    #[error("PMFs do not share a vocabulary")]
    VocabularyMismatch,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type MetricResult<T = f64> = Result<T, MetricError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceConfig {
    alpha: f64,
    epsilon: f64,
}

impl Default for DivergenceConfig {
    fn default() -> Self {
        DivergenceConfig {
            alpha: 0.5,
            epsilon: 1e-9,
        }
    }
}

impl DivergenceConfig {
    pub fn new(alpha: f64, epsilon: f64) -> MetricResult<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(MetricError::InvalidConfig(format!("alpha {alpha} outside [0, 1]")));
        }
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(MetricError::InvalidConfig(format!("epsilon {epsilon} must be > 0")));
        }
        Ok(DivergenceConfig { alpha, epsilon })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    fn mix(&self, structural: f64, weighted: f64) -> f64 {
        self.alpha * structural + (1.0 - self.alpha) * weighted
    }
}

/// Base-2 Jensen-Shannon divergence of two equal-length probability slices.
pub fn jsd_slices(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let mut kl_x = 0.0;
    let mut kl_y = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let mid = 0.5 * (a + b);
        if a > 0.0 {
            kl_x += a * (a / mid).log2();
        }
        if b > 0.0 {
            kl_y += b * (b / mid).log2();
        }
    }
    (0.5 * (kl_x + kl_y)).clamp(0.0, 1.0)
}

pub fn jsd(x: &PmfVector, y: &PmfVector) -> MetricResult {
    if x.vocabulary() != y.vocabulary() {
        return Err(MetricError::VocabularyMismatch);
    }
    Ok(jsd_slices(x.probs(), y.probs()))
}

/// Mean JSD over all unordered row pairs.
pub fn mean_pairwise_jsd(rows: &AlignedPmfSet) -> MetricResult {
    let m = rows.len();
    if m < 2 {
        return Err(MetricError::Undefined("fewer than two solutions"));
    }
    let r = rows.rows();
    let mut sum = 0.0;
    for s in 0..m {
        for t in s + 1..m {
            sum += jsd_slices(r[s].probs(), r[t].probs());
        }
    }
    Ok(sum * 2.0 / (m * (m - 1)) as f64)
}

/// Trace of the population covariance of the rows and its bound `1 - |mu|^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dispersion {
    pub trace: f64,
    pub bound: f64,
}

pub fn dispersion(rows: &AlignedPmfSet) -> Dispersion {
    let r = rows.rows();
    let m = r.len();
    let d = rows.vocabulary().len();
    let mut mean = vec![0.0; d];
    for row in r {
        for (acc, p) in mean.iter_mut().zip(row.probs()) {
            *acc += p;
        }
    }
    let mf = m as f64;
    let mean_sq: f64 = mean.iter().map(|s| (s / mf) * (s / mf)).sum();

    // tr Cov = (1 / m^2) * sum_{s<t} |x_s - x_t|^2, which is exactly zero
    // for identical rows.
    let mut pair_sq = 0.0;
    for s in 0..m {
        for t in s + 1..m {
            pair_sq += r[s]
                .probs()
                .iter()
                .zip(r[t].probs())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
    }
    Dispersion {
        trace: pair_sq / (mf * mf),
        bound: 1.0 - mean_sq,
    }
}

/// Normalized total variance of the rows.
pub fn tau(rows: &AlignedPmfSet) -> MetricResult {
    if rows.len() < 2 {
        return Err(MetricError::Undefined("fewer than two solutions"));
    }
    let Dispersion { trace, bound } = dispersion(rows);
    if bound <= TAU_DENOMINATOR_FLOOR {
        return Ok(0.0);
    }
    Ok(trace / bound)
}

fn check_pair(p: &AlignedPmfSet, q: &AlignedPmfSet) -> MetricResult<()> {
    if p.len() != q.len() {
        return Err(MetricError::ShapeMismatch(format!(
            "structural set has {} rows, weighted set has {}",
            p.len(),
            q.len()
        )));
    }
    Ok(())
}

fn static_score(
    p: &AlignedPmfSet,
    q: &AlignedPmfSet,
    cfg: &DivergenceConfig,
    measure: fn(&AlignedPmfSet) -> MetricResult,
) -> MetricResult {
    check_pair(p, q)?;
    Ok(cfg.mix(measure(p)?, measure(q)?))
}

pub fn sctd_jsd(p: &AlignedPmfSet, q: &AlignedPmfSet, cfg: &DivergenceConfig) -> MetricResult {
    static_score(p, q, cfg, mean_pairwise_jsd)
}

pub fn sctd_tau(p: &AlignedPmfSet, q: &AlignedPmfSet, cfg: &DivergenceConfig) -> MetricResult {
    static_score(p, q, cfg, tau)
}

/// Per-test values of one measure over the tests with at least two traces.
#[derive(Debug, Clone, PartialEq)]
pub struct PerTest {
    pub test_id: String,
    pub structural: f64,
    pub weighted: f64,
}

/// Evaluates `measure` on every qualifying test slice of `d` and `c`, in test order.
pub fn per_test_scores(
    d: &DynamicTensor,
    c: &DynamicTensor,
    measure: fn(&AlignedPmfSet) -> MetricResult,
) -> MetricResult<Vec<PerTest>> {
    if d.tests() != c.tests() || d.availability() != c.availability() {
        return Err(MetricError::ShapeMismatch(
            "structural and weighted tensors cover different tests or traces".into(),
        ));
    }
    let scored: Vec<Option<PerTest>> = (0..d.tests().len())
        .into_par_iter()
        .map(|j| match (d.slice(j), c.slice(j)) {
            (Some(ds), Some(cs)) if ds.len() >= 2 => Some(
                measure(ds)
                    .and_then(|s| measure(cs).map(|w| (s, w)))
                    .map(|(structural, weighted)| PerTest {
                        test_id: d.tests()[j].clone(),
                        structural,
                        weighted,
                    }),
            )
            .transpose(),
            _ => Ok(None),
        })
        .collect::<MetricResult<Vec<_>>>()?;
    Ok(scored.into_iter().flatten().collect())
}

fn dynamic_score(
    d: &DynamicTensor,
    c: &DynamicTensor,
    cfg: &DivergenceConfig,
    measure: fn(&AlignedPmfSet) -> MetricResult,
) -> MetricResult<(f64, usize)> {
    let per_test = per_test_scores(d, c, measure)?;
    if per_test.is_empty() {
        return Err(MetricError::Undefined("no test has two or more successful traces"));
    }
    let r = per_test.len() as f64;
    // Sequential sums in test order keep the result bit-reproducible.
    let structural = per_test.iter().map(|t| t.structural).sum::<f64>() / r;
    let weighted = per_test.iter().map(|t| t.weighted).sum::<f64>() / r;
    Ok((cfg.mix(structural, weighted), per_test.len()))
}

pub fn dctd_jsd(d: &DynamicTensor, c: &DynamicTensor, cfg: &DivergenceConfig) -> MetricResult {
    dynamic_score(d, c, cfg, mean_pairwise_jsd).map(|(v, _)| v)
}

pub fn dctd_tau(d: &DynamicTensor, c: &DynamicTensor, cfg: &DivergenceConfig) -> MetricResult {
    dynamic_score(d, c, cfg, tau).map(|(v, _)| v)
}

/// Number of tests that contribute to the dynamic scores.
pub fn qualifying_tests(d: &DynamicTensor) -> usize {
    d.slices().filter(|s| s.is_some_and(|s| s.len() >= 2)).count()
}

/// Behavioral expression factor `sctd / (dctd + epsilon)`.
pub fn bef(sctd: Option<f64>, dctd: Option<f64>, cfg: &DivergenceConfig) -> Option<f64> {
    Some(sctd? / (dctd? + cfg.epsilon))
}

/// Static and dynamic scores for one problem of one run; `None` marks undefined.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StabilityScores {
    pub sctd_jsd: Option<f64>,
    pub sctd_tau: Option<f64>,
    pub dctd_jsd: Option<f64>,
    pub dctd_tau: Option<f64>,
    pub bef_jsd: Option<f64>,
    pub bef_tau: Option<f64>,
    pub m_used: usize,
    pub r_used: usize,
}

impl StabilityScores {
    pub fn undefined(m_used: usize) -> Self {
        StabilityScores {
            m_used,
            ..Default::default()
        }
    }
}

/// Computes every score from whichever tensors are available.
pub fn stability_scores(
    static_sets: Option<(&AlignedPmfSet, &AlignedPmfSet)>,
    dynamic: Option<(&DynamicTensor, &DynamicTensor)>,
    cfg: &DivergenceConfig,
) -> MetricResult<StabilityScores> {
    let defined = |r: MetricResult| match r {
        Ok(v) => Ok(Some(v)),
        Err(MetricError::Undefined(_)) => Ok(None),
        Err(e) => Err(e),
    };
    let mut scores = StabilityScores::default();
    if let Some((p, q)) = static_sets {
        scores.m_used = p.len();
        scores.sctd_jsd = defined(sctd_jsd(p, q, cfg))?;
        scores.sctd_tau = defined(sctd_tau(p, q, cfg))?;
    }
    if let Some((d, c)) = dynamic {
        scores.dctd_jsd = defined(dctd_jsd(d, c, cfg))?;
        scores.dctd_tau = defined(dctd_tau(d, c, cfg))?;
        scores.r_used = qualifying_tests(d);
    }
    scores.bef_jsd = bef(scores.sctd_jsd, scores.dctd_jsd, cfg);
    scores.bef_tau = bef(scores.sctd_tau, scores.dctd_tau, cfg);
    Ok(scores)
}
