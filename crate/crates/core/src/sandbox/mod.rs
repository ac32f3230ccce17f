//! Runs candidate solutions against tests in child processes.
//!
//! Public tests are run untraced with the configured interpreter and decide
//! the pass/fail verdict of each candidate. Private tests are run through the
//! tracer shim, which reports opcode counts as a [`TraceDocument`] on its
//! standard output and writes the program's own output to a sidecar file.
//!
//! Every execution gets a fresh directory under the configured workdir, a
//! scrubbed environment and its own process group, which is killed when the
//! per-test timeout expires. There is no syscall filtering: solutions are
//! treated as untrusted but not adversarial.

pub mod process;
pub mod protocol;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{self, PublicVerdict, SolutionSet, TestCase};
use crate::pmf::{DynamicHistograms, OpcodeHistogram};

pub use protocol::{TraceDocument, TraceMode, TraceStatus, SCHEMA_VERSION};

const STDERR_EXCERPT_BYTES: usize = 2048;

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("cannot start {program}: {source}")]
    Spawn {
        program: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid sandbox configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Contract(#[from] corpus::ContractViolation),
    #[error("malformed trace artifact {path}: {reason}")]
    Artifact { path: PathBuf, reason: String },
}

pub type Result<T, E = SandboxError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandboxConfig {
    #[serde(with = "secs")]
    pub per_test_timeout: Duration,
    pub max_private_tests: usize,
    pub workdir: PathBuf,
    /// Tracer executable followed by fixed leading arguments.
    pub tracer_command: Vec<String>,
    /// Interpreter used for untraced public-test runs.
    pub interpreter: Vec<String>,
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

impl Default for SandboxConfig {
    fn default() -> Self {
        SandboxConfig {
            per_test_timeout: Duration::from_secs(20),
            max_private_tests: 10,
            workdir: std::env::temp_dir().join("opstab-work"),
            tracer_command: vec!["opstab-trace".into()],
            interpreter: vec!["python3".into()],
        }
    }
}

impl SandboxConfig {
    pub fn validate(&self) -> Result<()> {
        if self.per_test_timeout.is_zero() {
            return Err(SandboxError::Config("per_test_timeout must be > 0".into()));
        }
        if self.max_private_tests == 0 {
            return Err(SandboxError::Config("max_private_tests must be >= 1".into()));
        }
        if self.tracer_command.is_empty() || self.interpreter.is_empty() {
            return Err(SandboxError::Config("tracer_command and interpreter must be non-empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionStatus {
    Ok,
    WrongOutput,
    RuntimeError,
    Timeout,
    TraceError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionVerdict {
    pub test_id: String,
    pub status: ExecutionStatus,
    pub wall_time_s: f64,
    pub stderr_excerpt: String,
}

/// Judge comparison: trailing whitespace on each line and trailing blank
/// lines are ignored, everything else must match byte for byte.
pub fn outputs_match(actual: &[u8], expected: &[u8]) -> bool {
    fn normalized(bytes: &[u8]) -> Vec<&[u8]> {
        let mut lines: Vec<&[u8]> = bytes
            .split(|&b| b == b'\n')
            .map(|l| l.trim_ascii_end())
            .collect();
        while lines.last().is_some_and(|l| l.is_empty()) {
            lines.pop();
        }
        lines
    }
    normalized(actual) == normalized(expected)
}

fn excerpt(stderr: &[u8]) -> String {
    let start = stderr.len().saturating_sub(STDERR_EXCERPT_BYTES);
    String::from_utf8_lossy(&stderr[start..]).into_owned()
}

static EXEC_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Scratch directory for one execution, removed on drop.
struct ExecDir(PathBuf);

impl ExecDir {
    fn create(workdir: &Path) -> Result<Self> {
        let n = EXEC_COUNTER.fetch_add(1, Ordering::Relaxed);
        let path = workdir.join(format!("exec-{}-{n}", std::process::id()));
        fs::create_dir_all(&path).map_err(|source| SandboxError::Io {
            path: path.clone(),
            source,
        })?;
        // Children run with the directory as cwd, so paths handed to them must be absolute.
        let path = fs::canonicalize(&path).map_err(|source| SandboxError::Io { path, source })?;
        Ok(ExecDir(path))
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.0.join(name);
        fs::write(&path, bytes).map_err(|source| SandboxError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }
}

impl Drop for ExecDir {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.0);
    }
}

fn launch(cmd: &[String], extra: Vec<String>, cwd: &Path, stdin: &[u8], timeout: Duration) -> Result<process::ProcessOutcome> {
    let (program, fixed) = cmd.split_first().ok_or_else(|| SandboxError::Config("empty command".into()))?;
    let mut args = fixed.to_vec();
    args.extend(extra);
    process::run(&process::ProcessSpec {
        program,
        args,
        cwd,
        stdin,
        timeout,
    })
    .map_err(|source| SandboxError::Spawn {
        program: program.clone(),
        source,
    })
}

const SOLUTION_FILE: &str = "solution.py";

/// Extra time a tracer gets beyond the per-test limit to report its own timeout.
const TRACER_GRACE: Duration = Duration::from_millis(500);

fn run_one_public(source: &str, test: &TestCase, cfg: &SandboxConfig) -> Result<ExecutionVerdict> {
    let dir = ExecDir::create(&cfg.workdir)?;
    let solution = dir.write(SOLUTION_FILE, source.as_bytes())?;
    let out = launch(
        &cfg.interpreter,
        vec![solution.display().to_string()],
        &dir.0,
        &test.input,
        cfg.per_test_timeout,
    )?;
    let status = if out.timed_out() {
        ExecutionStatus::Timeout
    } else if !out.success() {
        ExecutionStatus::RuntimeError
    } else if outputs_match(&out.stdout, &test.expected_output) {
        ExecutionStatus::Ok
    } else {
        ExecutionStatus::WrongOutput
    };
    Ok(ExecutionVerdict {
        test_id: test.test_id.clone(),
        status,
        wall_time_s: out.wall_time.as_secs_f64(),
        stderr_excerpt: excerpt(&out.stderr),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PublicRun {
    pub verdict: PublicVerdict,
    pub details: Vec<ExecutionVerdict>,
}

/// Runs every public test untraced; the candidate passes iff all are `ok`.
pub fn run_public_tests(source: &str, tests: &[TestCase], cfg: &SandboxConfig) -> Result<PublicRun> {
    let details = tests
        .iter()
        .map(|t| run_one_public(source, t, cfg))
        .collect::<Result<Vec<_>>>()?;
    let verdict = if details.iter().all(|d| d.status == ExecutionStatus::Ok) {
        PublicVerdict::Pass
    } else {
        PublicVerdict::Fail
    };
    Ok(PublicRun { verdict, details })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticRecord {
    pub status: ExecutionStatus,
    pub stderr_excerpt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub document: Option<TraceDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicRecord {
    pub verdict: ExecutionVerdict,
    /// Present iff `verdict.status` is `ok`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub document: Option<TraceDocument>,
}

/// Static and per-test dynamic traces of one solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceArtifact {
    pub solution_id: String,
    #[serde(rename = "static")]
    pub static_trace: StaticRecord,
    pub dynamic: Vec<DynamicRecord>,
}

impl TraceArtifact {
    pub fn static_histogram(&self) -> Option<OpcodeHistogram> {
        self.static_trace.document.as_ref().and_then(TraceDocument::histogram)
    }

    pub fn dynamic_histogram(&self, test_id: &str) -> Option<OpcodeHistogram> {
        self.dynamic
            .iter()
            .find(|d| d.verdict.test_id == test_id)
            .and_then(|d| d.document.as_ref())
            .and_then(TraceDocument::histogram)
    }

    pub fn interpreter_versions(&self) -> BTreeSet<&str> {
        self.static_trace
            .document
            .iter()
            .chain(self.dynamic.iter().filter_map(|d| d.document.as_ref()))
            .map(|d| d.interpreter_version.as_str())
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|source| SandboxError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let artifact: TraceArtifact = serde_json::from_slice(&bytes).map_err(|e| SandboxError::Artifact {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        artifact.validate().map_err(|reason| SandboxError::Artifact {
            path: path.to_path_buf(),
            reason,
        })?;
        Ok(artifact)
    }

    pub fn store(&self, path: &Path) -> Result<()> {
        corpus::write_atomic(path, &corpus::to_pretty_json(self)).map_err(|source| SandboxError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let docs = self.static_trace.document.iter().chain(self.dynamic.iter().filter_map(|d| d.document.as_ref()));
        for doc in docs {
            doc.validate().map_err(|e| e.to_string())?;
        }
        if let Some(doc) = &self.static_trace.document {
            if doc.mode != TraceMode::Static {
                return Err("static record holds a dynamic document".into());
            }
        }
        for d in &self.dynamic {
            let ok = d.verdict.status == ExecutionStatus::Ok;
            if ok != d.document.is_some() {
                return Err(format!("test {}: document present iff status ok", d.verdict.test_id));
            }
            if d.document.as_ref().is_some_and(|doc| doc.mode != TraceMode::Dynamic) {
                return Err(format!("test {}: static document in dynamic record", d.verdict.test_id));
            }
        }
        Ok(())
    }
}

pub fn trace_file_path(root: &Path, run_id: &str, problem_id: &str, solution_id: &str) -> PathBuf {
    corpus::problem_run_dir(root, run_id, problem_id)
        .join("traces")
        .join(format!("{solution_id}.trace.json"))
}

enum TracerReply {
    Document(TraceDocument),
    Failed(ExecutionStatus, String),
}

struct TracerCall<'a> {
    solution_id: &'a str,
    mode: TraceMode,
    input: &'a [u8],
}

fn invoke_tracer(source: &str, call: TracerCall<'_>, cfg: &SandboxConfig) -> Result<(TracerReply, Vec<u8>, Duration)> {
    let dir = ExecDir::create(&cfg.workdir)?;
    let solution = dir.write(SOLUTION_FILE, source.as_bytes())?;
    let input = dir.write("input.txt", call.input)?;
    let stdout_file = dir.0.join("stdout.txt");
    let args = vec![
        "--solution".into(),
        solution.display().to_string(),
        "--mode".into(),
        call.mode.as_str().into(),
        "--input".into(),
        input.display().to_string(),
        "--timeout-s".into(),
        cfg.per_test_timeout.as_secs_f64().to_string(),
        "--stdout-file".into(),
        stdout_file.display().to_string(),
        "--solution-id".into(),
        call.solution_id.into(),
    ];
    let out = launch(&cfg.tracer_command, args, &dir.0, b"", cfg.per_test_timeout + TRACER_GRACE)?;
    let stderr = excerpt(&out.stderr);
    let reply = if out.timed_out() {
        TracerReply::Failed(ExecutionStatus::Timeout, stderr)
    } else if !out.success() {
        TracerReply::Failed(ExecutionStatus::TraceError, stderr)
    } else {
        match TraceDocument::parse(&out.stdout) {
            Ok(doc) if doc.mode != call.mode || doc.solution_id != call.solution_id => TracerReply::Failed(
                ExecutionStatus::TraceError,
                format!("tracer answered for {} ({}) instead", doc.solution_id, doc.mode),
            ),
            Ok(doc) => TracerReply::Document(doc),
            Err(e) => TracerReply::Failed(ExecutionStatus::TraceError, format!("{e}\n{stderr}")),
        }
    };
    let program_output = fs::read(&stdout_file).unwrap_or_default();
    Ok((reply, program_output, out.wall_time))
}

fn status_of(doc_status: TraceStatus) -> ExecutionStatus {
    match doc_status {
        TraceStatus::Ok => ExecutionStatus::Ok,
        TraceStatus::CompileError | TraceStatus::RuntimeError => ExecutionStatus::RuntimeError,
        TraceStatus::Timeout => ExecutionStatus::Timeout,
        TraceStatus::TraceError => ExecutionStatus::TraceError,
    }
}

fn trace_static(solution_id: &str, source: &str, cfg: &SandboxConfig) -> Result<StaticRecord> {
    let call = TracerCall {
        solution_id,
        mode: TraceMode::Static,
        input: b"",
    };
    let (reply, _, _) = invoke_tracer(source, call, cfg)?;
    Ok(match reply {
        TracerReply::Document(doc) => StaticRecord {
            status: status_of(doc.status),
            stderr_excerpt: String::new(),
            document: (doc.status == TraceStatus::Ok).then_some(doc),
        },
        TracerReply::Failed(status, stderr_excerpt) => StaticRecord {
            status,
            stderr_excerpt,
            document: None,
        },
    })
}

fn trace_dynamic(solution_id: &str, source: &str, test: &TestCase, cfg: &SandboxConfig) -> Result<DynamicRecord> {
    let call = TracerCall {
        solution_id,
        mode: TraceMode::Dynamic,
        input: &test.input,
    };
    let (reply, program_output, wall) = invoke_tracer(source, call, cfg)?;
    let (status, stderr_excerpt, document) = match reply {
        TracerReply::Failed(status, stderr) => (status, stderr, None),
        TracerReply::Document(doc) => match status_of(doc.status) {
            ExecutionStatus::Ok if outputs_match(&program_output, &test.expected_output) => {
                (ExecutionStatus::Ok, String::new(), Some(doc))
            }
            ExecutionStatus::Ok => (ExecutionStatus::WrongOutput, String::new(), None),
            other => (other, String::new(), None),
        },
    };
    Ok(DynamicRecord {
        verdict: ExecutionVerdict {
            test_id: test.test_id.clone(),
            status,
            wall_time_s: wall.as_secs_f64(),
            stderr_excerpt,
        },
        document,
    })
}

/// Static trace plus one dynamic trace per private test, at most
/// `max_private_tests` of them, in test order.
pub fn run_traced_private_tests(
    solution_id: &str,
    source: &str,
    private_tests: &[TestCase],
    cfg: &SandboxConfig,
) -> Result<TraceArtifact> {
    let static_trace = trace_static(solution_id, source, cfg)?;
    let dynamic = private_tests
        .iter()
        .take(cfg.max_private_tests)
        .map(|t| trace_dynamic(solution_id, source, t, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(TraceArtifact {
        solution_id: solution_id.to_string(),
        static_trace,
        dynamic,
    })
}

/// Traces every public-passing candidate of `set`; failing candidates are skipped.
pub fn collect_problem_run(
    set: &SolutionSet,
    problem: &corpus::Problem,
    cfg: &SandboxConfig,
) -> Result<Vec<TraceArtifact>> {
    let passing = corpus::correctness_gate(set)?;
    passing
        .par_iter()
        .map(|id| {
            let candidate = set.candidate(id).expect("gate returns known ids");
            run_traced_private_tests(id, &candidate.source, &problem.private_tests, cfg)
        })
        .collect()
}

/// The private tests a traced run covers.
pub fn traced_test_ids(problem: &corpus::Problem, cfg: &SandboxConfig) -> Vec<String> {
    problem
        .private_tests
        .iter()
        .take(cfg.max_private_tests)
        .map(|t| t.test_id.clone())
        .collect()
}

/// Static histograms of artifacts whose static trace succeeded, with their ids.
pub fn static_histograms(artifacts: &[TraceArtifact]) -> Vec<(String, OpcodeHistogram)> {
    artifacts
        .iter()
        .filter_map(|a| a.static_histogram().map(|h| (a.solution_id.clone(), h)))
        .collect()
}

pub fn dynamic_histograms(artifacts: &[TraceArtifact]) -> DynamicHistograms {
    let mut out = DynamicHistograms::new();
    for a in artifacts {
        for d in &a.dynamic {
            if let Some(h) = d.document.as_ref().and_then(TraceDocument::histogram) {
                out.insert((d.verdict.test_id.clone(), a.solution_id.clone()), h);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_normalization() {
        assert!(outputs_match(b"1 2 3\n", b"1 2 3"));
        assert!(outputs_match(b"a  \nb\t\n\n\n", b"a\nb\n"));
        assert!(!outputs_match(b" a\n", b"a\n"));
        assert!(!outputs_match(b"a\n\nb\n", b"a\nb\n"));
        assert!(!outputs_match(b"1 2\n", b"1  2\n"));
        assert!(outputs_match(b"", b"\n\n"));
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg = SandboxConfig::default();
        assert_eq!(cfg.per_test_timeout, Duration::from_secs(20));
        assert_eq!(cfg.max_private_tests, 10);
        assert!(cfg.validate().is_ok());
        let bad = SandboxConfig {
            max_private_tests: 0,
            ..cfg.clone()
        };
        assert!(bad.validate().is_err());
        let bad = SandboxConfig {
            per_test_timeout: Duration::ZERO,
            ..cfg
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn artifact_rejects_histogram_on_failed_test() {
        let doc = TraceDocument {
            schema_version: SCHEMA_VERSION.into(),
            solution_id: "sol_0".into(),
            interpreter_version: "3.10.12".into(),
            mode: TraceMode::Dynamic,
            status: TraceStatus::Ok,
            static_counts: None,
            dynamic_counts: Some([("A".to_string(), 1)].into()),
            wall_time_s: None,
        };
        let artifact = TraceArtifact {
            solution_id: "sol_0".into(),
            static_trace: StaticRecord {
                status: ExecutionStatus::TraceError,
                stderr_excerpt: String::new(),
                document: None,
            },
            dynamic: vec![DynamicRecord {
                verdict: ExecutionVerdict {
                    test_id: "t1".into(),
                    status: ExecutionStatus::Timeout,
                    wall_time_s: 20.0,
                    stderr_excerpt: String::new(),
                },
                document: Some(doc),
            }],
        };
        assert!(artifact.validate().is_err());
    }
}
