//! Per-problem stability scores computed from persisted trace artifacts.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{self, CohortLabel, PromptVariant};
use crate::divergence::{self, DivergenceConfig, MetricError, StabilityScores};
use crate::pmf::{self, PmfError, WeightTable};
use crate::sandbox::{self, TraceArtifact};

pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_CSV: &str = "metrics.csv";

/// Slack allowed above 1 for floating-point rounding in a bounded score.
pub const BOUND_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("traces mix interpreter versions {0:?}; opcode vocabularies are not comparable")]
    InterpreterMismatch(BTreeSet<String>),
    #[error(transparent)]
    Pmf(#[from] PmfError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("{metric} = {value} lies outside [0, 1]")]
    OutOfBounds { metric: &'static str, value: f64 },
    #[error("{path}: {reason}")]
    File { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemMetrics {
    pub problem_id: String,
    pub cohort: CohortLabel,
    pub n: usize,
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interpreter_version: Option<String>,
    pub scores: StabilityScores,
}

/// Scores for every evaluated problem of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run_id: String,
    pub model_name: String,
    pub temperature: f64,
    pub prompt_variant: PromptVariant,
    pub problems: Vec<ProblemMetrics>,
}

impl RunMetrics {
    pub fn path(root: &Path, run_id: &str) -> PathBuf {
        corpus::run_dir(root, run_id).join(METRICS_JSON)
    }

    pub fn load(path: &Path) -> Result<Self, MetricsError> {
        let text = std::fs::read_to_string(path).map_err(|e| MetricsError::File {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| MetricsError::File {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn store(&self, path: &Path) -> Result<(), MetricsError> {
        corpus::write_atomic(path, &corpus::to_pretty_json(self)).map_err(|e| MetricsError::File {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }
}

fn check_bounds(scores: &StabilityScores) -> Result<(), MetricsError> {
    let named = [
        ("sctd_jsd", scores.sctd_jsd),
        ("sctd_tau", scores.sctd_tau),
        ("dctd_jsd", scores.dctd_jsd),
        ("dctd_tau", scores.dctd_tau),
    ];
    for (metric, value) in named {
        if let Some(value) = value {
            if !(0.0..=1.0 + BOUND_TOLERANCE).contains(&value) {
                return Err(MetricsError::OutOfBounds { metric, value });
            }
        }
    }
    Ok(())
}

/// Scores one problem from the artifacts of its public-passing solutions.
///
/// Returns the scores and the single interpreter version seen in the traces.
pub fn score_problem(
    artifacts: &[TraceArtifact],
    traced_tests: &[String],
    weights: &WeightTable,
    cfg: &DivergenceConfig,
) -> Result<(StabilityScores, Option<String>), MetricsError> {
    let versions: BTreeSet<String> = artifacts
        .iter()
        .flat_map(|a| a.interpreter_versions())
        .map(str::to_string)
        .collect();
    if versions.len() > 1 {
        return Err(MetricsError::InterpreterMismatch(versions));
    }

    let statics: Vec<_> = sandbox::static_histograms(artifacts)
        .into_iter()
        .map(|(_, h)| h)
        .collect();
    let static_sets = match pmf::build_static_tensors(&statics, weights) {
        Ok(sets) => Some(sets),
        Err(PmfError::NeedTwoSolutions(_)) => None,
        Err(e) => return Err(e.into()),
    };

    let solutions: Vec<String> = artifacts.iter().map(|a| a.solution_id.clone()).collect();
    let dynamic = if traced_tests.is_empty() {
        None
    } else {
        let histograms = sandbox::dynamic_histograms(artifacts);
        match pmf::build_dynamic_tensors(traced_tests, &solutions, &histograms, weights) {
            Ok(tensors) => Some(tensors),
            Err(PmfError::DynamicUndefined) => None,
            Err(e) => return Err(e.into()),
        }
    };

    let mut scores = divergence::stability_scores(
        static_sets.as_ref().map(|(p, q)| (p, q)),
        dynamic.as_ref().map(|(d, c)| (d, c)),
        cfg,
    )?;
    if static_sets.is_none() {
        scores.m_used = statics.len();
    }
    check_bounds(&scores)?;
    Ok((scores, versions.into_iter().next()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sandbox::{
        DynamicRecord, ExecutionStatus, ExecutionVerdict, StaticRecord, TraceDocument, TraceMode, TraceStatus,
        SCHEMA_VERSION,
    };
    use std::collections::BTreeMap;

    fn doc(id: &str, version: &str, mode: TraceMode, counts: &[(&str, u64)]) -> TraceDocument {
        let counts: BTreeMap<String, u64> = counts.iter().map(|&(k, v)| (k.to_string(), v)).collect();
        TraceDocument {
            schema_version: SCHEMA_VERSION.into(),
            solution_id: id.into(),
            interpreter_version: version.into(),
            mode,
            status: TraceStatus::Ok,
            static_counts: (mode == TraceMode::Static).then(|| counts.clone()),
            dynamic_counts: (mode == TraceMode::Dynamic).then_some(counts),
            wall_time_s: None,
        }
    }

    type Counts<'a> = &'a [(&'a str, u64)];

    fn artifact(id: &str, version: &str, stat: Counts, dynamic: &[(&str, Option<Counts>)]) -> TraceArtifact {
        TraceArtifact {
            solution_id: id.into(),
            static_trace: StaticRecord {
                status: ExecutionStatus::Ok,
                stderr_excerpt: String::new(),
                document: Some(doc(id, version, TraceMode::Static, stat)),
            },
            dynamic: dynamic
                .iter()
                .map(|(t, counts)| DynamicRecord {
                    verdict: ExecutionVerdict {
                        test_id: t.to_string(),
                        status: if counts.is_some() { ExecutionStatus::Ok } else { ExecutionStatus::Timeout },
                        wall_time_s: 0.0,
                        stderr_excerpt: String::new(),
                    },
                    document: counts.map(|c| doc(id, version, TraceMode::Dynamic, c)),
                })
                .collect(),
        }
    }

    #[test]
    fn identical_solutions_score_zero() {
        let a = artifact("sol_0", "3.10.12", &[("A", 2), ("B", 1)], &[("t1", Some(&[("A", 5)]))]);
        let mut b = a.clone();
        b.solution_id = "sol_1".into();
        let tests = vec!["t1".to_string()];
        let (s, version) = score_problem(&[a, b], &tests, &WeightTable::builtin(), &DivergenceConfig::default()).unwrap();
        assert_eq!(s.sctd_jsd, Some(0.0));
        assert_eq!(s.dctd_tau, Some(0.0));
        assert_eq!(s.bef_jsd, Some(0.0));
        assert_eq!((s.m_used, s.r_used), (2, 1));
        assert_eq!(version.as_deref(), Some("3.10.12"));
    }

    #[test]
    fn mixed_interpreters_are_refused() {
        let a = artifact("sol_0", "3.10.12", &[("A", 1)], &[]);
        let b = artifact("sol_1", "3.12.1", &[("A", 1)], &[]);
        assert!(matches!(
            score_problem(&[a, b], &[], &WeightTable::builtin(), &DivergenceConfig::default()),
            Err(MetricsError::InterpreterMismatch(_))
        ));
    }

    #[test]
    fn failed_traces_leave_dynamic_undefined() {
        let a = artifact("sol_0", "3.10.12", &[("A", 1)], &[("t1", Some(&[("A", 1)]))]);
        let b = artifact("sol_1", "3.10.12", &[("B", 1)], &[("t1", None)]);
        let tests = vec!["t1".to_string()];
        let (s, _) = score_problem(&[a, b], &tests, &WeightTable::builtin(), &DivergenceConfig::default()).unwrap();
        assert_eq!(s.sctd_jsd, Some(1.0));
        assert_eq!(s.dctd_jsd, None);
        assert_eq!(s.bef_jsd, None);
        assert_eq!(s.r_used, 0);
    }

    #[test]
    fn single_solution_is_undefined() {
        let a = artifact("sol_0", "3.10.12", &[("A", 1)], &[]);
        let (s, _) = score_problem(&[a], &[], &WeightTable::builtin(), &DivergenceConfig::default()).unwrap();
        assert_eq!(s, StabilityScores { m_used: 1, ..Default::default() });
    }
}
