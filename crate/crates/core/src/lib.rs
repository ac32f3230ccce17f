//! Opcode-distribution stability metrics for sets of candidate programs.
//!
//! The crate measures how much a set of functionally correct solutions to the
//! same problem differ, statically (opcode frequencies of the compiled code)
//! and dynamically (opcode frequencies observed while running private tests).
//!
//! Pipeline stages map onto modules:
//!
//! - [`corpus`]: problems, tests, generated candidates and cohorts.
//! - [`genclient`]: candidate generation against a completion endpoint.
//! - [`sandbox`]: public-test verdicts and traced private runs.
//! - [`pmf`]: histograms to aligned PMF sets and tensors.
//! - [`divergence`]: JSD, normalized total variance, SCTD, DCTD and BEF.
//! - [`metrics`]: per-problem scoring from persisted traces.
//! - [`report`]: aggregation, BEF regimes, correlation and CSV/JSON output.

pub mod corpus;
pub mod divergence;
pub mod genclient;
pub mod metrics;
pub mod pmf;
pub mod report;
pub mod sandbox;

pub use corpus::{classify_cohort, correctness_gate, load_corpus, CohortLabel, Corpus};
pub use divergence::{DivergenceConfig, StabilityScores};
pub use pmf::{OpcodeHistogram, WeightTable};
