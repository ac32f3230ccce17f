//! Candidate generation: prompts, completion endpoints, run materialization
//! and temperature sweeps.

mod prompt;
mod provider;

pub use prompt::{build_prompt, extract_code};
pub use provider::{CompletionProvider, CompletionRequest, HttpProvider, MockProvider, ProviderConfig};

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{self, CorpusError, GenerationManifest, Problem, PromptVariant, MANIFEST_FILE};

/// Per-run record of problems whose generation failed.
pub const ERRORS_FILE: &str = "generation_errors.json";

/// Consecutive empty responses tolerated before a problem is abandoned.
const MAX_EMPTY_RESPONSES: usize = 3;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("endpoint failed after {attempts} attempt(s): {message}")]
    Endpoint { attempts: u32, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GenError + '_ {
    move |source| GenError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub temperatures: Vec<f64>,
    pub n_candidates: usize,
    pub prompt_variant: PromptVariant,
}

pub const DEFAULT_TEMPERATURES: [f64; 3] = [0.0, 0.7, 0.95];

impl SweepPlan {
    pub fn new(temperatures: Vec<f64>, n_candidates: usize, prompt_variant: PromptVariant) -> Result<Self, GenError> {
        let plan = SweepPlan {
            temperatures,
            n_candidates,
            prompt_variant,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// The three-temperature protocol.
    pub fn standard(n_candidates: usize, prompt_variant: PromptVariant) -> Self {
        SweepPlan {
            temperatures: DEFAULT_TEMPERATURES.to_vec(),
            n_candidates,
            prompt_variant,
        }
    }

    /// 0.0 to 2.0 in steps of 0.2.
    pub fn scan(n_candidates: usize, prompt_variant: PromptVariant) -> Self {
        SweepPlan {
            temperatures: (0..=10).map(|i| f64::from(i * 2) / 10.0).collect(),
            n_candidates,
            prompt_variant,
        }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        if self.temperatures.is_empty() {
            return Err(GenError::Config("sweep has no temperatures".into()));
        }
        if let Some(t) = self.temperatures.iter().find(|t| !t.is_finite() || **t < 0.0) {
            return Err(GenError::Config(format!("invalid temperature {t}")));
        }
        if self.n_candidates == 0 {
            return Err(GenError::Config("n_candidates must be at least 1".into()));
        }
        Ok(())
    }
}

/// Temperature as it appears in run ids: `0.0`, `0.7`, `0.95`, `2.0`.
pub fn format_temperature(t: f64) -> String {
    if t.fract() == 0.0 {
        format!("{t:.1}")
    } else {
        t.to_string()
    }
}

/// `<model>_T<temperature>_<variant>`, with path-hostile characters in the
/// model name replaced by `-`.
pub fn run_id(model_name: &str, temperature: f64, variant: PromptVariant) -> String {
    let model: String = model_name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '.' | '_') { c } else { '-' })
        .collect();
    format!("{model}_T{}_{}", format_temperature(temperature), variant.as_str())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationSettings {
    pub temperature: f64,
    pub n: usize,
    pub variant: PromptVariant,
    pub max_tokens: u32,
}

/// Exactly `settings.n` extracted sources for one problem.
///
/// Endpoints may return fewer choices than asked for; the remainder is
/// requested again until the count is reached.
pub fn generate_candidates(
    provider: &dyn CompletionProvider,
    problem: &Problem,
    settings: &GenerationSettings,
) -> Result<Vec<String>, GenError> {
    let prompt = build_prompt(problem, settings.variant);
    let mut sources = Vec::with_capacity(settings.n);
    let mut empty = 0;
    while sources.len() < settings.n {
        let request = CompletionRequest {
            model: provider.model_name().to_string(),
            prompt: prompt.clone(),
            temperature: settings.temperature,
            n: settings.n - sources.len(),
            max_tokens: settings.max_tokens,
        };
        let texts = provider.complete(&problem.problem_id, &request)?;
        if texts.is_empty() {
            empty += 1;
            if empty >= MAX_EMPTY_RESPONSES {
                return Err(GenError::Endpoint {
                    attempts: empty as u32,
                    message: "endpoint returned no choices".into(),
                });
            }
            continue;
        }
        empty = 0;
        let room = settings.n - sources.len();
        sources.extend(texts.iter().take(room).map(|t| extract_code(t)));
    }
    Ok(sources)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationOutcome {
    pub run_id: String,
    pub generated: Vec<String>,
    pub skipped: Vec<String>,
    pub failed: BTreeMap<String, String>,
}

impl GenerationOutcome {
    pub fn is_complete(&self) -> bool {
        self.failed.is_empty()
    }
}

fn problem_is_complete(dir: &Path, n: usize) -> bool {
    (0..n).all(|k| dir.join(corpus::solution_file_name(k)).is_file())
        && !dir.join(corpus::solution_file_name(n)).exists()
}

fn materialize(root: &Path, run_id: &str, problem_id: &str, sources: &[String]) -> Result<(), GenError> {
    let run_dir = corpus::run_dir(root, run_id);
    let tmp = run_dir.join(format!(".{problem_id}.tmp"));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(io_err(&tmp))?;
    }
    fs::create_dir_all(&tmp).map_err(io_err(&tmp))?;
    for (k, source) in sources.iter().enumerate() {
        let path = tmp.join(corpus::solution_file_name(k));
        fs::write(&path, source).map_err(io_err(&path))?;
    }
    let dest = corpus::problem_run_dir(root, run_id, problem_id);
    if dest.exists() {
        fs::remove_dir_all(&dest).map_err(io_err(&dest))?;
    }
    fs::rename(&tmp, &dest).map_err(io_err(&dest))
}

fn ensure_manifest(root: &Path, manifest: &GenerationManifest) -> Result<(), GenError> {
    let dir = corpus::run_dir(root, &manifest.run_id);
    if dir.join(MANIFEST_FILE).is_file() {
        let existing = corpus::load_manifest(&dir)?;
        if existing != *manifest {
            return Err(GenError::Config(format!(
                "run {} already exists with a different manifest",
                manifest.run_id
            )));
        }
        return Ok(());
    }
    corpus::store_manifest(root, manifest)?;
    Ok(())
}

/// Generates one run into the corpus at `root`.
///
/// Problems that already hold a complete candidate set are skipped without
/// contacting the endpoint. A failing problem is recorded in
/// [`ERRORS_FILE`] and does not stop the others.
pub fn generate_run(
    root: &Path,
    problems: &BTreeMap<String, Problem>,
    provider: &dyn CompletionProvider,
    settings: &GenerationSettings,
) -> Result<GenerationOutcome, GenError> {
    if settings.n == 0 {
        return Err(GenError::Config("n must be at least 1".into()));
    }
    let manifest = GenerationManifest {
        run_id: run_id(provider.model_name(), settings.temperature, settings.variant),
        model_name: provider.model_name().to_string(),
        temperature: settings.temperature,
        prompt_variant: settings.variant,
        n_candidates: settings.n,
    };
    ensure_manifest(root, &manifest)?;
    let run = manifest.run_id.as_str();

    let results: Vec<(String, Result<bool, GenError>)> = problems
        .par_iter()
        .map(|(pid, problem)| {
            let dir = corpus::problem_run_dir(root, run, pid);
            if problem_is_complete(&dir, settings.n) {
                return (pid.clone(), Ok(false));
            }
            let result = generate_candidates(provider, problem, settings)
                .and_then(|sources| materialize(root, run, pid, &sources))
                .map(|()| true);
            (pid.clone(), result)
        })
        .collect();

    let mut outcome = GenerationOutcome {
        run_id: run.to_string(),
        ..Default::default()
    };
    for (pid, result) in results {
        match result {
            Ok(true) => outcome.generated.push(pid),
            Ok(false) => outcome.skipped.push(pid),
            Err(GenError::Endpoint { attempts, message }) => {
                outcome
                    .failed
                    .insert(pid, format!("endpoint failed after {attempts} attempt(s): {message}"));
            }
            Err(e) => return Err(e),
        }
    }

    let errors_path = corpus::run_dir(root, run).join(ERRORS_FILE);
    if outcome.failed.is_empty() {
        if errors_path.exists() {
            fs::remove_file(&errors_path).map_err(io_err(&errors_path))?;
        }
    } else {
        corpus::write_atomic(&errors_path, &corpus::to_pretty_json(&outcome.failed)).map_err(io_err(&errors_path))?;
    }

    // The run must load cleanly as part of the corpus.
    corpus::load_corpus(root)?;
    Ok(outcome)
}

/// One run per temperature of `plan`, in plan order.
pub fn run_sweep(
    root: &Path,
    problems: &BTreeMap<String, Problem>,
    provider: &dyn CompletionProvider,
    plan: &SweepPlan,
    max_tokens: u32,
) -> Result<Vec<GenerationOutcome>, GenError> {
    plan.validate()?;
    plan.temperatures
        .iter()
        .map(|&temperature| {
            let settings = GenerationSettings {
                temperature,
                n: plan.n_candidates,
                variant: plan.prompt_variant,
                max_tokens,
            };
            generate_run(root, problems, provider, &settings)
        })
        .collect()
}
