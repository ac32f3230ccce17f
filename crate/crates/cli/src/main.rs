use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use opstab::config::{FileConfig, PipelineConfig};
use opstab::stages::{self, RunSelection};
use opstab::CliError;
use opstab_core::corpus::PromptVariant;
use opstab_core::divergence::DivergenceConfig;
use opstab_core::genclient::SweepPlan;
use opstab_core::report::{CohortFilter, ReportFormat};

#[derive(Parser)]
#[command(name = "opstab", version, about = "Opcode-level stability metrics for generated code")]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Corpus root directory.
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    /// Worker threads for per-problem work.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Opcode weight table (JSON).
    #[arg(long, global = true)]
    weights: Option<PathBuf>,
    /// Structural/weighted mixing coefficient.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Comma-separated run ids; all runs when omitted.
    #[arg(long, global = true, value_delimiter = ',')]
    runs: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ProviderArgs {
    /// Completion endpoint URL.
    #[arg(long)]
    base_url: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long)]
    api_key_env: Option<String>,
    /// Candidates per problem.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    variant: Option<PromptVariant>,
    /// Serve canned completions from this JSON file instead of an endpoint.
    #[arg(long)]
    mock: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// all_success, some_success, all_fail or all.
    #[arg(long, default_value = "all_success")]
    cohort: CohortFilter,
    #[arg(long, default_value = "csv")]
    format: ReportFormat,
    /// Output directory (default: <corpus>/report).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one run of candidates at a single temperature.
    Generate {
        #[command(flatten)]
        provider: ProviderArgs,
        #[arg(long, default_value_t = 0.0)]
        temperature: f64,
    },
    /// Generate one run per temperature.
    Sweep {
        #[command(flatten)]
        provider: ProviderArgs,
        /// Comma-separated temperatures (default from config: 0.0,0.7,0.95).
        #[arg(long, value_delimiter = ',', conflicts_with = "scan")]
        temps: Vec<f64>,
        /// 0.0 to 2.0 in steps of 0.2.
        #[arg(long)]
        scan: bool,
    },
    /// Run public tests and assign cohorts.
    Evaluate {
        /// Re-evaluate problems that already have verdicts.
        #[arg(long)]
        force: bool,
    },
    /// Trace public-passing candidates statically and on private tests.
    Trace {
        #[arg(long)]
        force: bool,
    },
    /// Compute SCTD, DCTD and BEF per problem.
    Metrics,
    /// Aggregate metrics into summary and detail files.
    Report(ReportArgs),
    /// Correlate one run's scores with an external per-problem metrics CSV.
    Correlate {
        #[arg(long)]
        external: PathBuf,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// evaluate, trace, metrics and report in order.
    Pipeline {
        #[command(flatten)]
        report: ReportArgs,
        #[arg(long)]
        force: bool,
    },
    /// Inspect configuration.
    Config {
        /// Print the built-in defaults as TOML.
        #[arg(long)]
        show_defaults: bool,
    },
}

fn resolve(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &cli.config {
        FileConfig::load(path)?.apply(&mut cfg)?;
    }
    if let Some(v) = &cli.corpus {
        cfg.corpus = v.clone();
    }
    if let Some(v) = cli.jobs {
        cfg.jobs = Some(v);
    }
    if let Some(v) = &cli.weights {
        cfg.weights = Some(v.clone());
    }
    if let Some(alpha) = cli.alpha {
        cfg.divergence =
            DivergenceConfig::new(alpha, cfg.divergence.epsilon()).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match &cli.command {
        Command::Generate { provider, .. } | Command::Sweep { provider, .. } => apply_provider(&mut cfg, provider),
        Command::Report(r) | Command::Correlate { report: r, .. } | Command::Pipeline { report: r, .. } => {
            if let Some(out) = &r.out {
                cfg.report_dir = Some(out.clone());
            }
        }
        _ => {}
    }
    cfg.sandbox.validate()?;
    cfg.validate_paths()?;
    Ok(cfg)
}

fn apply_provider(cfg: &mut PipelineConfig, p: &ProviderArgs) {
    if let Some(v) = &p.base_url {
        cfg.provider.http.base_url = v.clone();
    }
    if let Some(v) = &p.model {
        cfg.provider.http.model_name = v.clone();
    }
    if let Some(v) = &p.api_key_env {
        cfg.provider.http.api_key_env = Some(v.clone());
    }
    if let Some(v) = p.n {
        cfg.generation.n = v;
    }
    if let Some(v) = p.variant {
        cfg.generation.variant = v;
    }
    if let Some(v) = &p.mock {
        cfg.provider.mock = Some(v.clone());
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Command::Config { show_defaults } = &cli.command {
        if !show_defaults {
            return Err(CliError::Usage("nothing to do; try `opstab config --show-defaults`".into()));
        }
        print!("{}", PipelineConfig::show_defaults());
        return Ok(());
    }
    let cfg = resolve(&cli)?;
    if let Some(jobs) = cfg.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Infrastructure(e.to_string()))?;
    }
    let runs = RunSelection(cli.runs.clone());
    // A model given on the command line overrides the mock fixture's own name.
    let model = |p: &ProviderArgs| p.model.clone();
    match &cli.command {
        Command::Generate { provider, temperature } => {
            stages::generate(&cfg, *temperature, model(provider).as_deref()).map(drop)
        }
        Command::Sweep { provider, temps, scan } => {
            let (n, variant) = (cfg.generation.n, cfg.generation.variant);
            let plan = if *scan {
                SweepPlan::scan(n, variant)
            } else if temps.is_empty() {
                SweepPlan::new(cfg.generation.temperatures.clone(), n, variant)?
            } else {
                SweepPlan::new(temps.clone(), n, variant)?
            };
            stages::sweep(&cfg, &plan, model(provider).as_deref()).map(drop)
        }
        Command::Evaluate { force } => stages::evaluate(&cfg, &runs, *force),
        Command::Trace { force } => stages::trace(&cfg, &runs, *force),
        Command::Metrics => stages::metrics(&cfg, &runs).map(drop),
        Command::Report(r) => stages::report(&cfg, &runs, r.cohort, r.format).map(drop),
        Command::Correlate { external, report: r } => {
            stages::correlate(&cfg, &runs, external, r.cohort, r.format).map(drop)
        }
        Command::Pipeline { report: r, force } => stages::pipeline(&cfg, &runs, r.cohort, r.format, *force),
        Command::Config { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("opstab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
