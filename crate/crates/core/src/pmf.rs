//! Opcode histograms and the probability mass functions built from them.
//!
//! Static histograms of `m` solutions become the structural and cost-weighted
//! sets `P` and `Q`; per-test dynamic histograms become the tensors `D` and `C`.
//! Every set shares one [`Vocabulary`]: the sorted union of opcodes observed
//! in the compared histograms.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on `|sum(probs) - 1|` for a valid PMF.
pub const PMF_SUM_TOLERANCE: f64 = 1e-12;

const BUILTIN_WEIGHTS: &str = include_str!("../assets/weights.json");

#[derive(Debug, Error, PartialEq)]
pub enum PmfError {
    #[error("empty vocabulary: no opcode has a positive count")]
    EmptyVocabulary,
    #[error("empty histogram: total count is zero")]
    EmptyHistogram,
    #[error("weighted total is zero")]
    ZeroWeightedTotal,
    #[error("opcode {0:?} is not in the vocabulary")]
    UnknownOpcode(String),
    #[error("need at least two solutions, got {0}")]
    NeedTwoSolutions(usize),
    #[error("dynamic metrics undefined: no test has two or more successful traces")]
    DynamicUndefined,
    #[error("weight {weight} for {opcode:?} is not one of 1, 10, 100")]
    InvalidWeight { opcode: String, weight: u32 },
    #[error("invalid PMF: {0}")]
    InvalidPmf(String),
    #[error("rows do not share one vocabulary")]
    VocabularyMismatch,
    #[error("weight table {path}: {reason}")]
    WeightFile { path: String, reason: String },
}

pub type Result<T, E = PmfError> = std::result::Result<T, E>;

/// Raw opcode counts for one static compilation or one traced execution.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OpcodeHistogram {
    counts: BTreeMap<String, u64>,
}

impl OpcodeHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, opcode: impl Into<String>, count: u64) {
        *self.counts.entry(opcode.into()).or_insert(0) += count;
    }

    pub fn get(&self, opcode: &str) -> u64 {
        self.counts.get(opcode).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u128 {
        self.counts.values().map(|&c| u128::from(c)).sum()
    }

    /// True when no opcode has a positive count.
    pub fn is_empty(&self) -> bool {
        self.counts.values().all(|&c| c == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(k, &v)| (k.as_str(), v))
    }

    fn nonzero(&self) -> impl Iterator<Item = (&str, u64)> {
        self.iter().filter(|&(_, c)| c > 0)
    }
}

impl<S: Into<String>> FromIterator<(S, u64)> for OpcodeHistogram {
    fn from_iter<I: IntoIterator<Item = (S, u64)>>(iter: I) -> Self {
        let mut h = OpcodeHistogram::new();
        for (k, v) in iter {
            h.add(k, v);
        }
        h
    }
}

impl From<BTreeMap<String, u64>> for OpcodeHistogram {
    fn from(counts: BTreeMap<String, u64>) -> Self {
        OpcodeHistogram { counts }
    }
}

fn check_weight(opcode: &str, weight: u32) -> Result<u32> {
    match weight {
        1 | 10 | 100 => Ok(weight),
        _ => Err(PmfError::InvalidWeight {
            opcode: opcode.to_string(),
            weight,
        }),
    }
}

/// Cost tier per opcode; unlisted opcodes get the default weight.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightTable {
    weights: BTreeMap<String, u32>,
    default_weight: u32,
}

#[derive(Serialize, Deserialize)]
struct WeightFile {
    default: u32,
    weights: BTreeMap<String, u32>,
}

impl Default for WeightTable {
    fn default() -> Self {
        WeightTable {
            weights: BTreeMap::new(),
            default_weight: 1,
        }
    }
}

impl WeightTable {
    pub fn new(weights: BTreeMap<String, u32>, default_weight: u32) -> Result<Self> {
        check_weight("<default>", default_weight)?;
        for (op, &w) in &weights {
            check_weight(op, w)?;
        }
        Ok(WeightTable {
            weights,
            default_weight,
        })
    }

    /// The table shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_WEIGHTS, "<builtin>").expect("builtin weight table is valid")
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let file: WeightFile = serde_json::from_str(text).map_err(|e| PmfError::WeightFile {
            path: origin.to_string(),
            reason: e.to_string(),
        })?;
        Self::new(file.weights, file.default)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let origin = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| PmfError::WeightFile {
            path: origin.clone(),
            reason: e.to_string(),
        })?;
        Self::from_json(&text, &origin)
    }

    pub fn to_json(&self) -> String {
        let file = WeightFile {
            default: self.default_weight,
            weights: self.weights.clone(),
        };
        serde_json::to_string_pretty(&file).expect("serializable")
    }

    pub fn weight(&self, opcode: &str) -> u32 {
        self.weights.get(opcode).copied().unwrap_or(self.default_weight)
    }

    pub fn default_weight(&self) -> u32 {
        self.default_weight
    }
}

/// Sorted, duplicate-free opcode names spanning a compared set.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Vocabulary {
    names: Vec<String>,
}

impl Vocabulary {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = names.into_iter().map(Into::into).collect();
        if set.is_empty() {
            return Err(PmfError::EmptyVocabulary);
        }
        Ok(Vocabulary {
            names: set.into_iter().collect(),
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, opcode: &str) -> Option<usize> {
        self.names.binary_search_by(|n| n.as_str().cmp(opcode)).ok()
    }
}

/// Sorted union of every opcode with a positive count in any histogram.
pub fn align_vocabulary<'a, I>(histograms: I) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a OpcodeHistogram>,
{
    let names: BTreeSet<&str> = histograms
        .into_iter()
        .flat_map(|h| h.nonzero().map(|(k, _)| k))
        .collect();
    Vocabulary::new(names)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PmfVector {
    vocabulary: Arc<Vocabulary>,
    probs: Vec<f64>,
}

impl PmfVector {
    /// Validates length, range and normalization of `probs`.
    pub fn new(vocabulary: Arc<Vocabulary>, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != vocabulary.len() {
            return Err(PmfError::InvalidPmf(format!(
                "{} probabilities for {} opcodes",
                probs.len(),
                vocabulary.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(PmfError::InvalidPmf(format!("entry {p} outside [0, 1]")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PMF_SUM_TOLERANCE {
            return Err(PmfError::InvalidPmf(format!("entries sum to {sum}")));
        }
        Ok(PmfVector { vocabulary, probs })
    }

    pub fn vocabulary(&self) -> &Arc<Vocabulary> {
        &self.vocabulary
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, opcode: &str) -> f64 {
        self.vocabulary.index_of(opcode).map_or(0.0, |i| self.probs[i])
    }
}

fn normalize(
    h: &OpcodeHistogram,
    vocabulary: &Arc<Vocabulary>,
    weight: impl Fn(&str) -> u128,
) -> Result<Vec<f64>> {
    let mut mass = vec![0u128; vocabulary.len()];
    for (op, c) in h.nonzero() {
        let i = vocabulary
            .index_of(op)
            .ok_or_else(|| PmfError::UnknownOpcode(op.to_string()))?;
        mass[i] = weight(op) * u128::from(c);
    }
    let total: u128 = mass.iter().sum();
    if total == 0 {
        return Err(PmfError::EmptyHistogram);
    }
    // Integer masses keep uniform weights and count scaling bit-exact.
    let total = total as f64;
    Ok(mass.into_iter().map(|c| c as f64 / total).collect())
}

/// `p_i = c_i / sum_j c_j` over `vocabulary`.
pub fn to_structural_pmf(h: &OpcodeHistogram, vocabulary: &Arc<Vocabulary>) -> Result<PmfVector> {
    let probs = normalize(h, vocabulary, |_| 1)?;
    Ok(PmfVector {
        vocabulary: Arc::clone(vocabulary),
        probs,
    })
}

/// `q_i = w_i c_i / sum_j w_j c_j` over `vocabulary`.
pub fn to_weighted_pmf(
    h: &OpcodeHistogram,
    weights: &WeightTable,
    vocabulary: &Arc<Vocabulary>,
) -> Result<PmfVector> {
    let probs = normalize(h, vocabulary, |op| u128::from(weights.weight(op))).map_err(|e| match e {
        PmfError::EmptyHistogram => PmfError::ZeroWeightedTotal,
        other => other,
    })?;
    Ok(PmfVector {
        vocabulary: Arc::clone(vocabulary),
        probs,
    })
}

/// Rows of PMFs over one shared vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPmfSet {
    vocabulary: Arc<Vocabulary>,
    rows: Vec<PmfVector>,
}

impl AlignedPmfSet {
    pub fn new(vocabulary: Arc<Vocabulary>, rows: Vec<PmfVector>) -> Result<Self> {
        if rows.is_empty() {
            return Err(PmfError::InvalidPmf("a PMF set needs at least one row".into()));
        }
        if rows.iter().any(|r| *r.vocabulary != *vocabulary) {
            return Err(PmfError::VocabularyMismatch);
        }
        Ok(AlignedPmfSet { vocabulary, rows })
    }

    /// Builds a set from raw probability rows, validating each.
    pub fn from_rows(vocabulary: Arc<Vocabulary>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let rows = rows
            .into_iter()
            .map(|r| PmfVector::new(Arc::clone(&vocabulary), r))
            .collect::<Result<Vec<_>>>()?;
        Self::new(vocabulary, rows)
    }

    pub fn vocabulary(&self) -> &Arc<Vocabulary> {
        &self.vocabulary
    }

    pub fn rows(&self) -> &[PmfVector] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Structural `P` and cost-weighted `Q` over the static histograms of `m >= 2` solutions.
pub fn build_static_tensors(
    histograms: &[OpcodeHistogram],
    weights: &WeightTable,
) -> Result<(AlignedPmfSet, AlignedPmfSet)> {
    if histograms.len() < 2 {
        return Err(PmfError::NeedTwoSolutions(histograms.len()));
    }
    let vocabulary = Arc::new(align_vocabulary(histograms)?);
    let structural = histograms
        .iter()
        .map(|h| to_structural_pmf(h, &vocabulary))
        .collect::<Result<Vec<_>>>()?;
    let weighted = histograms
        .iter()
        .map(|h| to_weighted_pmf(h, weights, &vocabulary))
        .collect::<Result<Vec<_>>>()?;
    Ok((
        AlignedPmfSet::new(Arc::clone(&vocabulary), structural)?,
        AlignedPmfSet::new(vocabulary, weighted)?,
    ))
}

/// Per-test PMF slices over `r` tests and `m` solutions.
///
/// `availability[j][s]` is false where solution `s` has no usable trace on
/// test `j`; such cells are left out of slice `j` rather than zero-filled.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicTensor {
    vocabulary: Arc<Vocabulary>,
    tests: Vec<String>,
    solutions: Vec<String>,
    availability: Vec<Vec<bool>>,
    slices: Vec<Option<AlignedPmfSet>>,
}

impl DynamicTensor {
    pub fn vocabulary(&self) -> &Arc<Vocabulary> {
        &self.vocabulary
    }

    pub fn tests(&self) -> &[String] {
        &self.tests
    }

    pub fn solutions(&self) -> &[String] {
        &self.solutions
    }

    pub fn availability(&self) -> &[Vec<bool>] {
        &self.availability
    }

    /// Available rows of test `j`, in solution order.
    pub fn slice(&self, j: usize) -> Option<&AlignedPmfSet> {
        self.slices.get(j).and_then(Option::as_ref)
    }

    pub fn slices(&self) -> impl Iterator<Item = Option<&AlignedPmfSet>> {
        self.slices.iter().map(Option::as_ref)
    }

    /// Assembles a tensor from already-aligned slices; used for synthetic inputs.
    pub fn from_slices(
        vocabulary: Arc<Vocabulary>,
        tests: Vec<String>,
        solutions: Vec<String>,
        slices: Vec<Vec<Option<Vec<f64>>>>,
    ) -> Result<Self> {
        if tests.is_empty() || tests.len() != slices.len() {
            return Err(PmfError::InvalidPmf("one slice per test, at least one test".into()));
        }
        let mut availability = Vec::with_capacity(slices.len());
        let mut built = Vec::with_capacity(slices.len());
        for cells in slices {
            if cells.len() != solutions.len() {
                return Err(PmfError::InvalidPmf("one cell per solution in every slice".into()));
            }
            availability.push(cells.iter().map(Option::is_some).collect());
            let rows: Vec<Vec<f64>> = cells.into_iter().flatten().collect();
            built.push(if rows.is_empty() {
                None
            } else {
                Some(AlignedPmfSet::from_rows(Arc::clone(&vocabulary), rows)?)
            });
        }
        Ok(DynamicTensor {
            vocabulary,
            tests,
            solutions,
            availability,
            slices: built,
        })
    }
}

/// Dynamic histograms keyed by `(test_id, solution_id)`; absent keys are failed traces.
pub type DynamicHistograms = BTreeMap<(String, String), OpcodeHistogram>;

/// Structural `D` and cost-weighted `C` tensors from per-test histograms.
pub fn build_dynamic_tensors(
    tests: &[String],
    solutions: &[String],
    histograms: &DynamicHistograms,
    weights: &WeightTable,
) -> Result<(DynamicTensor, DynamicTensor)> {
    let lookup = |t: &String, s: &String| {
        histograms
            .get(&(t.clone(), s.clone()))
            .filter(|h| !h.is_empty())
    };
    let availability: Vec<Vec<bool>> = tests
        .iter()
        .map(|t| solutions.iter().map(|s| lookup(t, s).is_some()).collect())
        .collect();
    if !availability.iter().any(|row| row.iter().filter(|&&a| a).count() >= 2) {
        return Err(PmfError::DynamicUndefined);
    }
    let vocabulary = Arc::new(align_vocabulary(
        tests.iter().flat_map(|t| solutions.iter().filter_map(move |s| lookup(t, s))),
    )?);

    let mut structural = Vec::with_capacity(tests.len());
    let mut weighted = Vec::with_capacity(tests.len());
    for t in tests {
        let present: Vec<&OpcodeHistogram> = solutions.iter().filter_map(|s| lookup(t, s)).collect();
        if present.is_empty() {
            structural.push(None);
            weighted.push(None);
            continue;
        }
        let p = present
            .iter()
            .map(|h| to_structural_pmf(h, &vocabulary))
            .collect::<Result<Vec<_>>>()?;
        let q = present
            .iter()
            .map(|h| to_weighted_pmf(h, weights, &vocabulary))
            .collect::<Result<Vec<_>>>()?;
        structural.push(Some(AlignedPmfSet::new(Arc::clone(&vocabulary), p)?));
        weighted.push(Some(AlignedPmfSet::new(Arc::clone(&vocabulary), q)?));
    }
    let make = |slices| DynamicTensor {
        vocabulary: Arc::clone(&vocabulary),
        tests: tests.to_vec(),
        solutions: solutions.to_vec(),
        availability: availability.clone(),
        slices,
    };
    Ok((make(structural), make(weighted)))
}
