//! One function per subcommand. Stages communicate only through files in
//! the corpus, so each can be rerun on its own.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use opstab_core::corpus::{
    self, CandidateVerdict, CohortLabel, Corpus, Problem, PublicVerdict, Run, SolutionSet, VerdictsFile, VERDICTS_FILE,
};
use opstab_core::genclient::{
    self, CompletionProvider, GenerationOutcome, GenerationSettings, HttpProvider, MockProvider, SweepPlan,
};
use opstab_core::metrics::{self, ProblemMetrics, RunMetrics, METRICS_CSV};
use opstab_core::pmf::WeightTable;
use opstab_core::report::{self, CohortFilter, ReportFormat};
use opstab_core::sandbox::{self, TraceArtifact};
use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::CliError;

/// Which runs a stage touches; empty means all.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunSelection(pub Vec<String>);

impl RunSelection {
    fn pick<'a>(&self, corpus: &'a Corpus) -> Result<Vec<&'a Run>, CliError> {
        if self.0.is_empty() {
            return Ok(corpus.runs.values().collect());
        }
        self.0
            .iter()
            .map(|id| {
                corpus
                    .runs
                    .get(id)
                    .ok_or_else(|| CliError::Usage(format!("unknown run {id:?}")))
            })
            .collect()
    }
}

pub fn weights(cfg: &PipelineConfig) -> Result<WeightTable, CliError> {
    match &cfg.weights {
        Some(path) => Ok(WeightTable::load(path)?),
        None => Ok(WeightTable::builtin()),
    }
}

fn load(cfg: &PipelineConfig) -> Result<Corpus, CliError> {
    Ok(corpus::load_corpus(&cfg.corpus)?)
}

fn provider(cfg: &PipelineConfig, model: Option<&str>) -> Result<Box<dyn CompletionProvider>, CliError> {
    match &cfg.provider.mock {
        Some(path) => {
            let mut mock = MockProvider::load(path)?;
            if let Some(m) = model {
                mock.model = m.to_string();
            }
            Ok(Box::new(mock))
        }
        None => {
            let mut http = cfg.provider.http.clone();
            if let Some(m) = model {
                http.model_name = m.to_string();
            }
            Ok(Box::new(HttpProvider::new(http)?))
        }
    }
}

fn report_outcome(outcome: &GenerationOutcome) {
    println!(
        "generate {}: {} generated, {} already present, {} failed",
        outcome.run_id,
        outcome.generated.len(),
        outcome.skipped.len(),
        outcome.failed.len()
    );
    for (pid, err) in &outcome.failed {
        eprintln!("  {pid}: {err}");
    }
}

fn check_outcomes(outcomes: &[GenerationOutcome]) -> Result<(), CliError> {
    let failed: usize = outcomes.iter().map(|o| o.failed.len()).sum();
    if failed > 0 {
        return Err(CliError::Infrastructure(format!(
            "generation failed for {failed} problem(s); rerun to retry them"
        )));
    }
    Ok(())
}

pub fn generate(cfg: &PipelineConfig, temperature: f64, model: Option<&str>) -> Result<GenerationOutcome, CliError> {
    let problems = corpus::load_problems(&cfg.corpus)?;
    let provider = provider(cfg, model)?;
    let settings = GenerationSettings {
        temperature,
        n: cfg.generation.n,
        variant: cfg.generation.variant,
        max_tokens: cfg.provider.http.max_tokens,
    };
    if !(temperature >= 0.0) || !temperature.is_finite() {
        return Err(CliError::Usage(format!("invalid temperature {temperature}")));
    }
    let outcome = genclient::generate_run(&cfg.corpus, &problems, provider.as_ref(), &settings)?;
    report_outcome(&outcome);
    check_outcomes(std::slice::from_ref(&outcome))?;
    Ok(outcome)
}

pub fn sweep(cfg: &PipelineConfig, plan: &SweepPlan, model: Option<&str>) -> Result<Vec<GenerationOutcome>, CliError> {
    let problems = corpus::load_problems(&cfg.corpus)?;
    let provider = provider(cfg, model)?;
    let outcomes = genclient::run_sweep(&cfg.corpus, &problems, provider.as_ref(), plan, cfg.provider.http.max_tokens)?;
    for o in &outcomes {
        report_outcome(o);
    }
    check_outcomes(&outcomes)?;
    Ok(outcomes)
}

fn evaluate_set(set: &SolutionSet, problem: &Problem, cfg: &PipelineConfig) -> Result<VerdictsFile, CliError> {
    let mut candidates = Vec::with_capacity(set.n());
    for c in &set.candidates {
        let run = sandbox::run_public_tests(&c.source, &problem.public_tests, &cfg.sandbox)?;
        candidates.push(CandidateVerdict {
            solution_id: c.solution_id.clone(),
            verdict: run.verdict,
            tests: run.details,
        });
    }
    let m = candidates.iter().filter(|c| c.verdict == PublicVerdict::Pass).count();
    let cohort = corpus::classify_cohort(m, set.n()).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(VerdictsFile {
        run_id: set.run_id.clone(),
        problem_id: set.problem_id.clone(),
        n: set.n(),
        m,
        cohort,
        candidates,
    })
}

/// Public-test verdicts and cohorts. Problems that already have verdicts are
/// kept unless `force`.
pub fn evaluate(cfg: &PipelineConfig, runs: &RunSelection, force: bool) -> Result<(), CliError> {
    let corpus = load(cfg)?;
    for run in runs.pick(&corpus)? {
        let todo: Vec<&SolutionSet> = run
            .solution_sets
            .values()
            .filter(|s| force || s.verdicts().is_none())
            .collect();
        let files = todo
            .par_iter()
            .map(|set| {
                let problem = &corpus.problems[&set.problem_id];
                let file = evaluate_set(set, problem, cfg)?;
                corpus::store_verdicts(&cfg.corpus, &file)?;
                Ok(file)
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let mut counts = [0usize; 3];
        for f in &files {
            let slot = match f.cohort {
                CohortLabel::AllSuccess => 0,
                CohortLabel::SomeSuccess => 1,
                CohortLabel::AllFail => 2,
            };
            counts[slot] += 1;
        }
        println!(
            "evaluate {}: {} evaluated ({} all_success, {} some_success, {} all_fail), {} already present",
            run.manifest.run_id,
            files.len(),
            counts[0],
            counts[1],
            counts[2],
            run.solution_sets.len() - files.len()
        );
    }
    Ok(())
}

fn missing_verdicts(set: &SolutionSet) -> CliError {
    CliError::Usage(format!(
        "missing {VERDICTS_FILE} for {}/{}; run `opstab evaluate` first",
        set.run_id, set.problem_id
    ))
}

fn artifact_paths(cfg: &PipelineConfig, set: &SolutionSet) -> Result<Vec<PathBuf>, CliError> {
    let passing = corpus::correctness_gate(set).map_err(|_| missing_verdicts(set))?;
    Ok(passing
        .iter()
        .map(|sid| sandbox::trace_file_path(&cfg.corpus, &set.run_id, &set.problem_id, sid))
        .collect())
}

/// Static and dynamic traces of every public-passing candidate.
pub fn trace(cfg: &PipelineConfig, runs: &RunSelection, force: bool) -> Result<(), CliError> {
    let corpus = load(cfg)?;
    for run in runs.pick(&corpus)? {
        let (mut todo, mut done, mut nothing_passed) = (Vec::new(), 0, 0);
        for set in run.solution_sets.values() {
            let paths = artifact_paths(cfg, set)?;
            if paths.is_empty() {
                nothing_passed += 1;
            } else if force || !paths.iter().all(|p| p.is_file()) {
                todo.push(set);
            } else {
                done += 1;
            }
        }
        let traced = todo
            .par_iter()
            .map(|set| {
                let problem = &corpus.problems[&set.problem_id];
                let artifacts = sandbox::collect_problem_run(set, problem, &cfg.sandbox)?;
                for a in &artifacts {
                    a.store(&sandbox::trace_file_path(&cfg.corpus, &set.run_id, &set.problem_id, &a.solution_id))?;
                }
                Ok(artifacts.len())
            })
            .collect::<Result<Vec<usize>, CliError>>()?;
        println!(
            "trace {}: {} solutions traced in {} problems, {} already traced, {} with no passing candidate",
            run.manifest.run_id,
            traced.iter().sum::<usize>(),
            traced.len(),
            done,
            nothing_passed
        );
    }
    Ok(())
}

fn score_set(
    cfg: &PipelineConfig,
    weights: &WeightTable,
    problem: &Problem,
    set: &SolutionSet,
) -> Result<ProblemMetrics, CliError> {
    let cohort = set.cohort().map_err(|_| {
        CliError::Usage(format!(
            "missing trace artifacts for {}/{} (no verdicts yet); run `opstab evaluate` and `opstab trace` first",
            set.run_id, set.problem_id
        ))
    })?;
    let mut artifacts = Vec::new();
    for path in artifact_paths(cfg, set)? {
        if !path.is_file() {
            return Err(CliError::Usage(format!(
                "missing trace artifacts ({}); run `opstab trace` first",
                path.display()
            )));
        }
        artifacts.push(TraceArtifact::load(&path)?);
    }
    let seen: BTreeSet<&str> = artifacts
        .iter()
        .flat_map(|a| a.dynamic.iter().map(|d| d.verdict.test_id.as_str()))
        .collect();
    let traced: Vec<String> = problem
        .private_tests
        .iter()
        .filter(|t| seen.contains(t.test_id.as_str()))
        .map(|t| t.test_id.clone())
        .collect();
    let (scores, interpreter_version) = metrics::score_problem(&artifacts, &traced, weights, &cfg.divergence)
        .map_err(|e| CliError::from(e).context(&format!("{}/{}", set.run_id, set.problem_id)))?;
    Ok(ProblemMetrics {
        problem_id: set.problem_id.clone(),
        cohort,
        n: set.n(),
        m: set.m().unwrap_or(0),
        interpreter_version,
        scores,
    })
}

/// Per-problem SCTD, DCTD and BEF, written as `metrics.json` and `metrics.csv`.
pub fn metrics(cfg: &PipelineConfig, runs: &RunSelection) -> Result<Vec<RunMetrics>, CliError> {
    let corpus = load(cfg)?;
    let weights = weights(cfg)?;
    let mut all = Vec::new();
    for run in runs.pick(&corpus)? {
        let problems = run
            .solution_sets
            .values()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|set| score_set(cfg, &weights, &corpus.problems[&set.problem_id], set))
            .collect::<Result<Vec<_>, CliError>>()?;
        let m = &run.manifest;
        let result = RunMetrics {
            run_id: m.run_id.clone(),
            model_name: m.model_name.clone(),
            temperature: m.temperature,
            prompt_variant: m.prompt_variant,
            problems,
        };
        result.store(&RunMetrics::path(&cfg.corpus, &m.run_id))?;
        report::write_metrics_csv(&result, &corpus::run_dir(&cfg.corpus, &m.run_id).join(METRICS_CSV))?;
        println!("metrics {}: {} problems scored", m.run_id, result.problems.len());
        all.push(result);
    }
    Ok(all)
}

fn load_metrics(cfg: &PipelineConfig, runs: &RunSelection) -> Result<Vec<RunMetrics>, CliError> {
    let corpus = load(cfg)?;
    runs.pick(&corpus)?
        .iter()
        .map(|run| {
            let path = RunMetrics::path(&cfg.corpus, &run.manifest.run_id);
            if !path.is_file() {
                return Err(CliError::Usage(format!(
                    "missing {}; run `opstab metrics` first",
                    path.display()
                )));
            }
            Ok(RunMetrics::load(&path)?)
        })
        .collect()
}

/// Summary, per-column statistics and per-problem details for the selected runs.
pub fn report(
    cfg: &PipelineConfig,
    runs: &RunSelection,
    filter: CohortFilter,
    format: ReportFormat,
) -> Result<Vec<PathBuf>, CliError> {
    let all = load_metrics(cfg, runs)?;
    if all.is_empty() {
        return Err(CliError::Domain("no runs to report".into()));
    }
    let rows: Vec<_> = all.iter().map(|r| report::aggregate(r, filter)).collect();
    let out = cfg.report_dir();
    let written = report::emit_report(&rows, &all, filter, format, &out)?;
    println!("report: {} run(s), cohort {filter}, written to {}", rows.len(), out.display());
    if rows.iter().all(|r| r.is_empty()) {
        return Err(CliError::Domain(format!("no problems in cohort {filter}")));
    }
    Ok(written)
}

/// Pearson matrix of our scores against an external per-problem metrics CSV.
pub fn correlate(
    cfg: &PipelineConfig,
    runs: &RunSelection,
    external: &Path,
    filter: CohortFilter,
    format: ReportFormat,
) -> Result<PathBuf, CliError> {
    let all = load_metrics(cfg, runs)?;
    let [run] = all.as_slice() else {
        return Err(CliError::Usage(format!(
            "correlate needs exactly one run (selected {}); pass --runs <run_id>",
            all.len()
        )));
    };
    let text = std::fs::read_to_string(external)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", external.display())))?;
    let ext = report::parse_external(external, &text)?;
    let problems: Vec<ProblemMetrics> = run.problems.iter().filter(|p| filter.admits(p.cohort)).cloned().collect();
    let matrix = report::correlate_external(&problems, &ext);
    let path = report::emit_correlation(&matrix, format, &cfg.report_dir())?;
    println!(
        "correlate {}: {} joined rows, {} missing from external file, {} dropped for undefined cells; written to {}",
        run.run_id,
        matrix.n_rows,
        matrix.missing_external,
        matrix.incomplete,
        path.display()
    );
    if matrix.n_rows < 2 {
        return Err(CliError::Domain("fewer than two joined rows; correlation undefined".into()));
    }
    Ok(path)
}

/// Evaluate, trace, metrics and report in order.
pub fn pipeline(
    cfg: &PipelineConfig,
    runs: &RunSelection,
    filter: CohortFilter,
    format: ReportFormat,
    force: bool,
) -> Result<(), CliError> {
    evaluate(cfg, runs, force)?;
    trace(cfg, runs, force)?;
    metrics(cfg, runs)?;
    report(cfg, runs, filter, format)?;
    Ok(())
}
