//! On-disk corpus of problems, tests and generated candidate solutions.
//!
//! Layout, relative to the corpus root:
//!
//! ```text
//! problems/<pid>/statement.md
//! problems/<pid>/tests/public/<tid>.in , <tid>.out
//! problems/<pid>/tests/private/<tid>.in , <tid>.out
//! runs/<run_id>/manifest.json
//! runs/<run_id>/<pid>/sol_<k>.py
//! runs/<run_id>/<pid>/verdicts.json
//! ```
//!
//! A loaded [`Corpus`] is immutable and can be shared freely between readers.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sandbox::ExecutionVerdict;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const VERDICTS_FILE: &str = "verdicts.json";
pub const STATEMENT_FILE: &str = "statement.md";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("empty corpus: no problems under {0}")]
    EmptyCorpus(PathBuf),
    #[error("missing manifest: {0}")]
    MissingManifest(PathBuf),
    #[error("malformed {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("duplicate problem_id {0:?}")]
    DuplicateProblem(String),
    #[error("unknown problem {problem_id:?} referenced by {path}")]
    UnknownProblem { problem_id: String, path: PathBuf },
    #[error("{path}: manifest declares {expected} candidates, found {found}")]
    CandidateCount {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn malformed(path: &Path, reason: impl fmt::Display) -> CorpusError {
    CorpusError::Malformed {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestCase {
    pub test_id: String,
    pub input: Vec<u8>,
    pub expected_output: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Problem {
    pub problem_id: String,
    pub statement: String,
    pub public_tests: Vec<TestCase>,
    pub private_tests: Vec<TestCase>,
}

impl Problem {
    /// Problems without private tests are kept, but their dynamic metrics are undefined.
    pub fn has_private_tests(&self) -> bool {
        !self.private_tests.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptVariant {
    WithExamples,
    WithoutExamples,
}

impl PromptVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptVariant::WithExamples => "with_examples",
            PromptVariant::WithoutExamples => "without_examples",
        }
    }
}

impl fmt::Display for PromptVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "with_examples" => Ok(PromptVariant::WithExamples),
            "without_examples" => Ok(PromptVariant::WithoutExamples),
            other => Err(format!(
                "unknown prompt variant {other:?} (expected with_examples or without_examples)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationManifest {
    pub run_id: String,
    pub model_name: String,
    pub temperature: f64,
    pub prompt_variant: PromptVariant,
    pub n_candidates: usize,
}

impl GenerationManifest {
    fn validate(&self, path: &Path) -> Result<()> {
        if self.run_id.is_empty() {
            return Err(malformed(path, "run_id is empty"));
        }
        if !(self.temperature >= 0.0) {
            return Err(malformed(path, "temperature must be >= 0"));
        }
        if self.n_candidates == 0 {
            return Err(malformed(path, "n_candidates must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CohortLabel {
    AllSuccess,
    SomeSuccess,
    AllFail,
}

impl CohortLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            CohortLabel::AllSuccess => "all_success",
            CohortLabel::SomeSuccess => "some_success",
            CohortLabel::AllFail => "all_fail",
        }
    }
}

impl fmt::Display for CohortLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CohortLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "all_success" => Ok(CohortLabel::AllSuccess),
            "some_success" => Ok(CohortLabel::SomeSuccess),
            "all_fail" => Ok(CohortLabel::AllFail),
            other => Err(format!("unknown cohort {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ContractViolation {
    #[error("cohort needs n >= 1")]
    NoCandidates,
    #[error("passing count {m} exceeds candidate count {n}")]
    TooManyPassing { m: usize, n: usize },
    #[error("solution set has no verdicts yet")]
    MissingVerdicts,
    #[error("{verdicts} verdicts for {candidates} candidates")]
    VerdictCount { verdicts: usize, candidates: usize },
}

/// Cohort of a generation set with `m` of `n` candidates passing.
pub fn classify_cohort(m: usize, n: usize) -> std::result::Result<CohortLabel, ContractViolation> {
    if n == 0 {
        return Err(ContractViolation::NoCandidates);
    }
    if m > n {
        return Err(ContractViolation::TooManyPassing { m, n });
    }
    Ok(if m == n {
        CohortLabel::AllSuccess
    } else if m == 0 {
        CohortLabel::AllFail
    } else {
        CohortLabel::SomeSuccess
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PublicVerdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub solution_id: String,
    pub source: String,
}

/// One problem under one generation configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionSet {
    pub run_id: String,
    pub problem_id: String,
    pub candidates: Vec<Candidate>,
    verdicts: Option<Vec<PublicVerdict>>,
}

impl SolutionSet {
    pub fn new(run_id: impl Into<String>, problem_id: impl Into<String>, candidates: Vec<Candidate>) -> Self {
        SolutionSet {
            run_id: run_id.into(),
            problem_id: problem_id.into(),
            candidates,
            verdicts: None,
        }
    }

    pub fn with_verdicts(mut self, verdicts: Vec<PublicVerdict>) -> std::result::Result<Self, ContractViolation> {
        self.set_verdicts(verdicts)?;
        Ok(self)
    }

    pub fn set_verdicts(&mut self, verdicts: Vec<PublicVerdict>) -> std::result::Result<(), ContractViolation> {
        if verdicts.len() != self.candidates.len() {
            return Err(ContractViolation::VerdictCount {
                verdicts: verdicts.len(),
                candidates: self.candidates.len(),
            });
        }
        self.verdicts = Some(verdicts);
        Ok(())
    }

    pub fn verdicts(&self) -> Option<&[PublicVerdict]> {
        self.verdicts.as_deref()
    }

    pub fn n(&self) -> usize {
        self.candidates.len()
    }

    /// Number of candidates passing every public test.
    pub fn m(&self) -> Option<usize> {
        self.verdicts
            .as_ref()
            .map(|v| v.iter().filter(|&&x| x == PublicVerdict::Pass).count())
    }

    pub fn cohort(&self) -> std::result::Result<CohortLabel, ContractViolation> {
        let m = self.m().ok_or(ContractViolation::MissingVerdicts)?;
        classify_cohort(m, self.n())
    }

    pub fn candidate(&self, solution_id: &str) -> Option<&Candidate> {
        self.candidates.iter().find(|c| c.solution_id == solution_id)
    }
}

/// Ids of candidates that passed all public tests, in generation order.
pub fn correctness_gate(set: &SolutionSet) -> std::result::Result<Vec<String>, ContractViolation> {
    let verdicts = set.verdicts().ok_or(ContractViolation::MissingVerdicts)?;
    Ok(set
        .candidates
        .iter()
        .zip(verdicts)
        .filter(|(_, v)| **v == PublicVerdict::Pass)
        .map(|(c, _)| c.solution_id.clone())
        .collect())
}

/// Persisted result of public-test evaluation for one problem of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictsFile {
    pub run_id: String,
    pub problem_id: String,
    pub n: usize,
    pub m: usize,
    pub cohort: CohortLabel,
    pub candidates: Vec<CandidateVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateVerdict {
    pub solution_id: String,
    pub verdict: PublicVerdict,
    pub tests: Vec<ExecutionVerdict>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub manifest: GenerationManifest,
    pub solution_sets: BTreeMap<String, SolutionSet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub root: PathBuf,
    pub problems: BTreeMap<String, Problem>,
    pub runs: BTreeMap<String, Run>,
}

impl Corpus {
    pub fn problem(&self, problem_id: &str) -> Option<&Problem> {
        self.problems.get(problem_id)
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        run_dir(&self.root, run_id)
    }
}

pub fn run_dir(root: &Path, run_id: &str) -> PathBuf {
    root.join("runs").join(run_id)
}

pub fn problem_run_dir(root: &Path, run_id: &str, problem_id: &str) -> PathBuf {
    run_dir(root, run_id).join(problem_id)
}

pub fn solution_file_name(k: usize) -> String {
    format!("sol_{k}.py")
}

/// Compares ids so that embedded numbers sort numerically (`t2` < `t10`).
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    let (mut a, mut b) = (a.as_bytes(), b.as_bytes());
    loop {
        match (a.first(), b.first()) {
            (None, None) => return Ordering::Equal,
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some(x), Some(y)) if x.is_ascii_digit() && y.is_ascii_digit() => {
                let da = a.iter().take_while(|c| c.is_ascii_digit()).count();
                let db = b.iter().take_while(|c| c.is_ascii_digit()).count();
                let na = trim_zeros(&a[..da]);
                let nb = trim_zeros(&b[..db]);
                let ord = na.len().cmp(&nb.len()).then_with(|| na.cmp(nb)).then(da.cmp(&db));
                if ord != Ordering::Equal {
                    return ord;
                }
                a = &a[da..];
                b = &b[db..];
            }
            (Some(x), Some(y)) => {
                if x != y {
                    return x.cmp(y);
                }
                a = &a[1..];
                b = &b[1..];
            }
        }
    }
}

fn trim_zeros(digits: &[u8]) -> &[u8] {
    let start = digits.iter().position(|&d| d != b'0').unwrap_or(digits.len());
    &digits[start..]
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        out.push(entry.map_err(io_err(dir))?.path());
    }
    out.sort();
    Ok(out)
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn read_utf8(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    String::from_utf8(bytes).map_err(|e| malformed(path, e))
}

fn load_tests(dir: &Path) -> Result<Vec<TestCase>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut tests = Vec::new();
    for path in sorted_entries(dir)? {
        match path.extension().and_then(|e| e.to_str()) {
            Some("in") => {}
            Some("out") => {
                if !path.with_extension("in").is_file() {
                    return Err(malformed(&path, "expected output without matching .in file"));
                }
                continue;
            }
            _ => return Err(malformed(&path, "test files must end in .in or .out")),
        }
        let test_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| malformed(&path, "unnamed test"))?;
        let out_path = path.with_extension("out");
        if !out_path.is_file() {
            return Err(malformed(&path, "missing matching .out file"));
        }
        tests.push(TestCase {
            test_id,
            input: fs::read(&path).map_err(io_err(&path))?,
            expected_output: fs::read(&out_path).map_err(io_err(&out_path))?,
        });
    }
    tests.sort_by(|a, b| natural_cmp(&a.test_id, &b.test_id));
    Ok(tests)
}

fn load_problem(dir: &Path) -> Result<Problem> {
    let problem_id = file_name(dir);
    let statement_path = dir.join(STATEMENT_FILE);
    let statement = read_utf8(&statement_path)?;
    let public_tests = load_tests(&dir.join("tests").join("public"))?;
    if public_tests.is_empty() {
        return Err(malformed(dir, "problem has no public tests"));
    }
    let private_tests = load_tests(&dir.join("tests").join("private"))?;
    Ok(Problem {
        problem_id,
        statement,
        public_tests,
        private_tests,
    })
}

pub fn load_manifest(run_dir: &Path) -> Result<GenerationManifest> {
    let path = run_dir.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(CorpusError::MissingManifest(path));
    }
    let text = read_utf8(&path)?;
    let manifest: GenerationManifest = serde_json::from_str(&text).map_err(|e| malformed(&path, e))?;
    manifest.validate(&path)?;
    if manifest.run_id != file_name(run_dir) {
        return Err(malformed(
            &path,
            format!("run_id {:?} does not match directory name", manifest.run_id),
        ));
    }
    Ok(manifest)
}

pub fn load_verdicts(dir: &Path) -> Result<Option<VerdictsFile>> {
    let path = dir.join(VERDICTS_FILE);
    if !path.is_file() {
        return Ok(None);
    }
    let text = read_utf8(&path)?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| malformed(&path, e))
}

fn load_solution_set(run: &GenerationManifest, dir: &Path) -> Result<SolutionSet> {
    let problem_id = file_name(dir);
    let found = sorted_entries(dir)?
        .iter()
        .filter(|p| {
            let name = file_name(p);
            name.starts_with("sol_") && name.ends_with(".py")
        })
        .count();
    if found != run.n_candidates {
        return Err(CorpusError::CandidateCount {
            path: dir.to_path_buf(),
            expected: run.n_candidates,
            found,
        });
    }
    let mut candidates = Vec::with_capacity(found);
    for k in 0..run.n_candidates {
        let path = dir.join(solution_file_name(k));
        if !path.is_file() {
            return Err(malformed(dir, format!("missing {}", solution_file_name(k))));
        }
        candidates.push(Candidate {
            solution_id: format!("sol_{k}"),
            source: read_utf8(&path)?,
        });
    }
    let mut set = SolutionSet::new(run.run_id.clone(), problem_id, candidates);
    if let Some(file) = load_verdicts(dir)? {
        let path = dir.join(VERDICTS_FILE);
        let ids_match = file.candidates.len() == set.candidates.len()
            && file
                .candidates
                .iter()
                .zip(&set.candidates)
                .all(|(v, c)| v.solution_id == c.solution_id);
        if !ids_match {
            return Err(malformed(&path, "verdicts do not match candidate list"));
        }
        set.set_verdicts(file.candidates.iter().map(|c| c.verdict).collect())
            .map_err(|e| malformed(&path, e))?;
    }
    Ok(set)
}

fn load_run(dir: &Path, problems: &BTreeMap<String, Problem>) -> Result<Run> {
    let manifest = load_manifest(dir)?;
    let mut solution_sets = BTreeMap::new();
    for path in sorted_entries(dir)? {
        // Hidden entries are generation scratch space.
        if !path.is_dir() || file_name(&path).starts_with('.') {
            continue;
        }
        let problem_id = file_name(&path);
        if !problems.contains_key(&problem_id) {
            return Err(CorpusError::UnknownProblem { problem_id, path });
        }
        let set = load_solution_set(&manifest, &path)?;
        solution_sets.insert(problem_id, set);
    }
    Ok(Run {
        manifest,
        solution_sets,
    })
}

/// Loads only the problems of a corpus.
pub fn load_problems(root: &Path) -> Result<BTreeMap<String, Problem>> {
    let problems_dir = root.join("problems");
    if !problems_dir.is_dir() {
        return Err(CorpusError::EmptyCorpus(root.to_path_buf()));
    }
    let mut problems = BTreeMap::new();
    for path in sorted_entries(&problems_dir)? {
        if !path.is_dir() {
            continue;
        }
        let problem = load_problem(&path)?;
        insert_problem(&mut problems, problem)?;
    }
    if problems.is_empty() {
        return Err(CorpusError::EmptyCorpus(root.to_path_buf()));
    }
    Ok(problems)
}

pub fn insert_problem(problems: &mut BTreeMap<String, Problem>, problem: Problem) -> Result<()> {
    if problems.contains_key(&problem.problem_id) {
        return Err(CorpusError::DuplicateProblem(problem.problem_id));
    }
    problems.insert(problem.problem_id.clone(), problem);
    Ok(())
}

pub fn load_corpus(root: &Path) -> Result<Corpus> {
    let problems = load_problems(root)?;
    let mut runs = BTreeMap::new();
    let runs_dir = root.join("runs");
    if runs_dir.is_dir() {
        for path in sorted_entries(&runs_dir)? {
            if !path.is_dir() {
                continue;
            }
            let run = load_run(&path, &problems)?;
            runs.insert(run.manifest.run_id.clone(), run);
        }
    }
    Ok(Corpus {
        root: root.to_path_buf(),
        problems,
        runs,
    })
}

/// Writes `bytes` to `path` through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_file_name(format!(".{}.tmp", file_name(path)));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

pub fn to_pretty_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable value");
    out.push(b'\n');
    out
}

pub fn store_problem(root: &Path, problem: &Problem) -> Result<()> {
    let dir = root.join("problems").join(&problem.problem_id);
    let statement = dir.join(STATEMENT_FILE);
    write_atomic(&statement, problem.statement.as_bytes()).map_err(io_err(&statement))?;
    for (kind, tests) in [("public", &problem.public_tests), ("private", &problem.private_tests)] {
        let tdir = dir.join("tests").join(kind);
        fs::create_dir_all(&tdir).map_err(io_err(&tdir))?;
        for t in tests {
            let input = tdir.join(format!("{}.in", t.test_id));
            write_atomic(&input, &t.input).map_err(io_err(&input))?;
            let output = tdir.join(format!("{}.out", t.test_id));
            write_atomic(&output, &t.expected_output).map_err(io_err(&output))?;
        }
    }
    Ok(())
}

pub fn store_manifest(root: &Path, manifest: &GenerationManifest) -> Result<()> {
    let path = run_dir(root, &manifest.run_id).join(MANIFEST_FILE);
    write_atomic(&path, &to_pretty_json(manifest)).map_err(io_err(&path))
}

/// Writes the candidate sources of a solution set verbatim as `sol_<k>.py`.
pub fn store_solution_set(root: &Path, set: &SolutionSet) -> Result<()> {
    let dir = problem_run_dir(root, &set.run_id, &set.problem_id);
    for (k, c) in set.candidates.iter().enumerate() {
        let path = dir.join(solution_file_name(k));
        write_atomic(&path, c.source.as_bytes()).map_err(io_err(&path))?;
    }
    Ok(())
}

pub fn store_verdicts(root: &Path, file: &VerdictsFile) -> Result<()> {
    let path = problem_run_dir(root, &file.run_id, &file.problem_id).join(VERDICTS_FILE);
    write_atomic(&path, &to_pretty_json(file)).map_err(io_err(&path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn test_case(id: &str, input: &str, output: &str) -> TestCase {
        TestCase {
            test_id: id.into(),
            input: input.as_bytes().to_vec(),
            expected_output: output.as_bytes().to_vec(),
        }
    }

    fn sample_problem(id: &str) -> Problem {
        Problem {
            problem_id: id.into(),
            statement: "Echo the input.\n".into(),
            public_tests: vec![test_case("p1", "a\n", "a\n")],
            private_tests: vec![test_case("q1", "b\n", "b\n"), test_case("q2", "c\n", "c\n")],
        }
    }

    fn sample_manifest(run_id: &str, n: usize) -> GenerationManifest {
        GenerationManifest {
            run_id: run_id.into(),
            model_name: "mock".into(),
            temperature: 0.7,
            prompt_variant: PromptVariant::WithExamples,
            n_candidates: n,
        }
    }

    fn candidates(n: usize) -> Vec<Candidate> {
        (0..n)
            .map(|k| Candidate {
                solution_id: format!("sol_{k}"),
                source: format!("print(input())  # {k}\n"),
            })
            .collect()
    }

    #[test]
    fn cohort_examples() {
        assert_eq!(classify_cohort(5, 5), Ok(CohortLabel::AllSuccess));
        assert_eq!(classify_cohort(0, 5), Ok(CohortLabel::AllFail));
        assert_eq!(classify_cohort(3, 5), Ok(CohortLabel::SomeSuccess));
        assert_eq!(classify_cohort(6, 5), Err(ContractViolation::TooManyPassing { m: 6, n: 5 }));
        assert_eq!(classify_cohort(0, 0), Err(ContractViolation::NoCandidates));
    }

    proptest! {
        #[test]
        fn cohort_partitions_domain(n in 1usize..50, m_frac in 0.0f64..=1.0) {
            let m = ((n as f64) * m_frac).round() as usize;
            let label = classify_cohort(m, n).unwrap();
            let expected = [m == n, m > 0 && m < n, m == 0];
            let got = [
                label == CohortLabel::AllSuccess,
                label == CohortLabel::SomeSuccess,
                label == CohortLabel::AllFail,
            ];
            prop_assert_eq!(got, expected);
        }
    }

    #[test]
    fn gate_filters_in_generation_order() {
        use PublicVerdict::*;
        let set = SolutionSet::new("r", "p", candidates(3))
            .with_verdicts(vec![Pass, Fail, Pass])
            .unwrap();
        assert_eq!(correctness_gate(&set).unwrap(), vec!["sol_0", "sol_2"]);
        assert_eq!(set.m(), Some(2));

        let all = SolutionSet::new("r", "p", candidates(3))
            .with_verdicts(vec![Pass; 3])
            .unwrap();
        assert_eq!(correctness_gate(&all).unwrap(), vec!["sol_0", "sol_1", "sol_2"]);

        let none = SolutionSet::new("r", "p", candidates(3))
            .with_verdicts(vec![Fail; 3])
            .unwrap();
        assert!(correctness_gate(&none).unwrap().is_empty());
        assert_eq!(none.cohort(), Ok(CohortLabel::AllFail));
    }

    #[test]
    fn gate_requires_verdicts() {
        let set = SolutionSet::new("r", "p", candidates(2));
        assert_eq!(correctness_gate(&set), Err(ContractViolation::MissingVerdicts));
        assert_eq!(
            SolutionSet::new("r", "p", candidates(2))
                .with_verdicts(vec![PublicVerdict::Pass])
                .unwrap_err(),
            ContractViolation::VerdictCount { verdicts: 1, candidates: 2 }
        );
    }

    fn write_sample(root: &Path, n: usize) -> (Problem, GenerationManifest, SolutionSet) {
        let problem = sample_problem("p0");
        let manifest = sample_manifest("run1", n);
        let set = SolutionSet::new("run1", "p0", candidates(n));
        store_problem(root, &problem).unwrap();
        store_manifest(root, &manifest).unwrap();
        store_solution_set(root, &set).unwrap();
        (problem, manifest, set)
    }

    #[test]
    fn loads_single_problem_single_run() {
        let dir = tempfile::tempdir().unwrap();
        let (problem, manifest, set) = write_sample(dir.path(), 5);
        let corpus = load_corpus(dir.path()).unwrap();
        assert_eq!(corpus.problems.len(), 1);
        assert_eq!(corpus.problems["p0"], problem);
        let run = &corpus.runs["run1"];
        assert_eq!(run.manifest, manifest);
        assert_eq!(run.solution_sets["p0"], set);
        assert_eq!(run.solution_sets["p0"].n(), 5);
    }

    #[test]
    fn unknown_problem_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_sample(dir.path(), 2);
        let stray = SolutionSet::new("run1", "ghost", candidates(2));
        store_solution_set(dir.path(), &stray).unwrap();
        let err = load_corpus(dir.path()).unwrap_err();
        assert!(matches!(err, CorpusError::UnknownProblem { ref problem_id, .. } if problem_id == "ghost"));
        assert!(err.to_string().contains("unknown problem"));
    }

    #[test]
    fn empty_problems_directory_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("problems")).unwrap();
        let err = load_corpus(dir.path()).unwrap_err();
        assert!(err.to_string().contains("empty corpus"));
    }

    #[test]
    fn missing_manifest_names_path() {
        let dir = tempfile::tempdir().unwrap();
        store_problem(dir.path(), &sample_problem("p0")).unwrap();
        fs::create_dir_all(dir.path().join("runs/r9")).unwrap();
        match load_corpus(dir.path()).unwrap_err() {
            CorpusError::MissingManifest(p) => assert!(p.ends_with("runs/r9/manifest.json")),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn malformed_test_file_names_path() {
        let dir = tempfile::tempdir().unwrap();
        store_problem(dir.path(), &sample_problem("p0")).unwrap();
        let orphan = dir.path().join("problems/p0/tests/public/p2.in");
        fs::write(&orphan, "x").unwrap();
        match load_corpus(dir.path()).unwrap_err() {
            CorpusError::Malformed { path, .. } => assert_eq!(path, orphan),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn candidate_count_must_match_manifest() {
        let dir = tempfile::tempdir().unwrap();
        write_sample(dir.path(), 3);
        fs::remove_file(dir.path().join("runs/run1/p0/sol_2.py")).unwrap();
        assert!(matches!(
            load_corpus(dir.path()).unwrap_err(),
            CorpusError::CandidateCount { expected: 3, found: 2, .. }
        ));
    }

    #[test]
    fn duplicate_problem_rejected() {
        let mut map = BTreeMap::new();
        insert_problem(&mut map, sample_problem("p0")).unwrap();
        assert!(matches!(
            insert_problem(&mut map, sample_problem("p0")),
            Err(CorpusError::DuplicateProblem(id)) if id == "p0"
        ));
    }

    #[test]
    fn problem_without_private_tests_is_flagged() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = sample_problem("p0");
        p.private_tests.clear();
        store_problem(dir.path(), &p).unwrap();
        let corpus = load_corpus(dir.path()).unwrap();
        assert!(!corpus.problems["p0"].has_private_tests());
    }

    #[test]
    fn natural_order_for_test_ids() {
        let mut ids = vec!["t10", "t2", "t1", "a", "t02"];
        ids.sort_by(|a, b| natural_cmp(a, b));
        assert_eq!(ids, vec!["a", "t1", "t2", "t02", "t10"]);
    }

    fn arb_bytes() -> impl Strategy<Value = Vec<u8>> {
        proptest::collection::vec(any::<u8>(), 0..40)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn store_then_load_round_trips(
            statement in "\\PC{0,60}",
            inputs in proptest::collection::vec((arb_bytes(), arb_bytes()), 1..4),
            sources in proptest::collection::vec("\\PC{0,80}", 1..5),
            temperature in 0.0f64..2.0,
        ) {
            let dir = tempfile::tempdir().unwrap();
            let tests: Vec<TestCase> = inputs
                .iter()
                .enumerate()
                .map(|(i, (a, b))| TestCase { test_id: format!("t{i}"), input: a.clone(), expected_output: b.clone() })
                .collect();
            let problem = Problem {
                problem_id: "p".into(),
                statement,
                public_tests: tests.clone(),
                private_tests: tests,
            };
            let manifest = GenerationManifest {
                run_id: "r".into(),
                model_name: "m".into(),
                temperature,
                prompt_variant: PromptVariant::WithoutExamples,
                n_candidates: sources.len(),
            };
            let set = SolutionSet::new(
                "r",
                "p",
                sources
                    .iter()
                    .enumerate()
                    .map(|(k, s)| Candidate { solution_id: format!("sol_{k}"), source: s.clone() })
                    .collect(),
            );
            store_problem(dir.path(), &problem).unwrap();
            store_manifest(dir.path(), &manifest).unwrap();
            store_solution_set(dir.path(), &set).unwrap();
            let corpus = load_corpus(dir.path()).unwrap();
            prop_assert_eq!(&corpus.problems["p"], &problem);
            prop_assert_eq!(&corpus.runs["r"].manifest, &manifest);
            prop_assert_eq!(&corpus.runs["r"].solution_sets["p"], &set);
        }
    }
}
