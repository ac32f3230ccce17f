//! Pipeline configuration: built-in defaults, overlaid by a TOML file,
//! overlaid by command-line flags.

use std::path::{Path, PathBuf};
use std::time::Duration;

use opstab_core::corpus::PromptVariant;
use opstab_core::divergence::DivergenceConfig;
use opstab_core::genclient::{ProviderConfig, DEFAULT_TEMPERATURES};
use opstab_core::sandbox::SandboxConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_N: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderSettings {
    pub http: ProviderConfig,
    /// Fixture of canned completions used instead of an HTTP endpoint.
    pub mock: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationDefaults {
    pub n: usize,
    pub variant: PromptVariant,
    pub temperatures: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub corpus: PathBuf,
    /// `None` selects the built-in weight table.
    pub weights: Option<PathBuf>,
    pub report_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub sandbox: SandboxConfig,
    pub divergence: DivergenceConfig,
    pub provider: ProviderSettings,
    pub generation: GenerationDefaults,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus: PathBuf::from("corpus"),
            weights: None,
            report_dir: None,
            jobs: None,
            sandbox: SandboxConfig::default(),
            divergence: DivergenceConfig::default(),
            provider: ProviderSettings {
                http: ProviderConfig::default(),
                mock: None,
            },
            generation: GenerationDefaults {
                n: DEFAULT_N,
                variant: PromptVariant::WithExamples,
                temperatures: DEFAULT_TEMPERATURES.to_vec(),
            },
        }
    }
}

impl PipelineConfig {
    /// Report output directory, `<corpus>/report` unless configured.
    pub fn report_dir(&self) -> PathBuf {
        self.report_dir.clone().unwrap_or_else(|| self.corpus.join("report"))
    }

    /// Checks that every referenced path exists.
    pub fn validate_paths(&self) -> Result<(), CliError> {
        if !self.corpus.is_dir() {
            return Err(CliError::Usage(format!("corpus directory {} does not exist", self.corpus.display())));
        }
        let files = [("weights", &self.weights), ("mock completions", &self.provider.mock)];
        for (what, path) in files {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(CliError::Usage(format!("{what} file {} does not exist", p.display())));
                }
            }
        }
        if let Some(tracer) = self.sandbox.tracer_command.first() {
            if tracer.contains('/') && !Path::new(tracer).is_file() {
                return Err(CliError::Usage(format!("tracer {tracer} does not exist")));
            }
        }
        Ok(())
    }

    pub fn show_defaults() -> String {
        let file = FileConfig::from(&PipelineConfig::default());
        toml::to_string_pretty(&file).expect("defaults serialize")
    }
}

/// On-disk shape; every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub sandbox: SandboxSection,
    #[serde(default)]
    pub divergence: DivergenceSection,
    #[serde(default)]
    pub provider: ProviderSection,
    #[serde(default)]
    pub generation: GenerationSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SandboxSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timeout_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_private_tests: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workdir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tracer_command: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interpreter: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DivergenceSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub request_timeout_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_retries: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retry_backoff_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mock: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<PromptVariant>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperatures: Option<Vec<f64>>,
}

impl From<&PipelineConfig> for FileConfig {
    fn from(c: &PipelineConfig) -> Self {
        let http = &c.provider.http;
        FileConfig {
            corpus: Some(c.corpus.clone()),
            weights: c.weights.clone(),
            report_dir: c.report_dir.clone(),
            jobs: c.jobs,
            sandbox: SandboxSection {
                timeout_s: Some(c.sandbox.per_test_timeout.as_secs_f64()),
                max_private_tests: Some(c.sandbox.max_private_tests),
                workdir: Some(c.sandbox.workdir.clone()),
                tracer_command: Some(c.sandbox.tracer_command.clone()),
                interpreter: Some(c.sandbox.interpreter.clone()),
            },
            divergence: DivergenceSection {
                alpha: Some(c.divergence.alpha()),
                epsilon: Some(c.divergence.epsilon()),
            },
            provider: ProviderSection {
                base_url: Some(http.base_url.clone()),
                api_key_env: http.api_key_env.clone(),
                model: Some(http.model_name.clone()),
                request_timeout_s: Some(http.request_timeout.as_secs_f64()),
                max_retries: Some(http.max_retries),
                retry_backoff_s: Some(http.retry_backoff.as_secs_f64()),
                max_tokens: Some(http.max_tokens),
                mock: c.provider.mock.clone(),
            },
            generation: GenerationSection {
                n: Some(c.generation.n),
                variant: Some(c.generation.variant),
                temperatures: Some(c.generation.temperatures.clone()),
            },
        }
    }
}

fn seconds(v: f64, key: &str) -> Result<Duration, CliError> {
    Duration::try_from_secs_f64(v).map_err(|_| CliError::Usage(format!("{key} must be a non-negative number of seconds")))
}

/// Resolves `p` against the directory of the config file.
fn anchored(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut file: FileConfig =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        file.anchor(base);
        Ok(file)
    }

    fn anchor(&mut self, base: &Path) {
        for p in [&mut self.corpus, &mut self.weights, &mut self.report_dir, &mut self.sandbox.workdir, &mut self.provider.mock] {
            if let Some(path) = p.take() {
                *p = Some(anchored(base, path));
            }
        }
        if let Some(cmd) = &mut self.sandbox.tracer_command {
            if let Some(first) = cmd.first_mut() {
                if first.contains('/') {
                    *first = anchored(base, PathBuf::from(&*first)).display().to_string();
                }
            }
        }
    }

    /// Overlays the keys present in `self` onto `cfg`.
    pub fn apply(self, cfg: &mut PipelineConfig) -> Result<(), CliError> {
        if let Some(v) = self.corpus {
            cfg.corpus = v;
        }
        if let Some(v) = self.weights {
            cfg.weights = Some(v);
        }
        if let Some(v) = self.report_dir {
            cfg.report_dir = Some(v);
        }
        if let Some(v) = self.jobs {
            cfg.jobs = Some(v);
        }
        let s = self.sandbox;
        if let Some(v) = s.timeout_s {
            cfg.sandbox.per_test_timeout = seconds(v, "sandbox.timeout_s")?;
        }
        if let Some(v) = s.max_private_tests {
            cfg.sandbox.max_private_tests = v;
        }
        if let Some(v) = s.workdir {
            cfg.sandbox.workdir = v;
        }
        if let Some(v) = s.tracer_command {
            cfg.sandbox.tracer_command = v;
        }
        if let Some(v) = s.interpreter {
            cfg.sandbox.interpreter = v;
        }
        let d = self.divergence;
        if d.alpha.is_some() || d.epsilon.is_some() {
            cfg.divergence = DivergenceConfig::new(
                d.alpha.unwrap_or(cfg.divergence.alpha()),
                d.epsilon.unwrap_or(cfg.divergence.epsilon()),
            )
            .map_err(|e| CliError::Usage(e.to_string()))?;
        }
        let p = self.provider;
        let http = &mut cfg.provider.http;
        if let Some(v) = p.base_url {
            http.base_url = v;
        }
        if let Some(v) = p.api_key_env {
            http.api_key_env = Some(v);
        }
        if let Some(v) = p.model {
            http.model_name = v;
        }
        if let Some(v) = p.request_timeout_s {
            http.request_timeout = seconds(v, "provider.request_timeout_s")?;
        }
        if let Some(v) = p.max_retries {
            http.max_retries = v;
        }
        if let Some(v) = p.retry_backoff_s {
            http.retry_backoff = seconds(v, "provider.retry_backoff_s")?;
        }
        if let Some(v) = p.max_tokens {
            http.max_tokens = v;
        }
        if let Some(v) = p.mock {
            cfg.provider.mock = Some(v);
        }
        let g = self.generation;
        if let Some(v) = g.n {
            cfg.generation.n = v;
        }
        if let Some(v) = g.variant {
            cfg.generation.variant = v;
        }
        if let Some(v) = g.temperatures {
            cfg.generation.temperatures = v;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_protocol() {
        let c = PipelineConfig::default();
        assert_eq!(c.divergence.alpha(), 0.5);
        assert_eq!(c.divergence.epsilon(), 1e-9);
        assert_eq!(c.sandbox.per_test_timeout, Duration::from_secs(20));
        assert_eq!(c.sandbox.max_private_tests, 10);
        assert_eq!(c.generation.n, 5);
        assert_eq!(c.generation.temperatures, [0.0, 0.7, 0.95]);
    }

    #[test]
    fn printed_defaults_parse_back() {
        let text = PipelineConfig::show_defaults();
        let file: FileConfig = toml::from_str(&text).unwrap();
        let mut c = PipelineConfig::default();
        file.apply(&mut c).unwrap();
        assert_eq!(c, PipelineConfig::default());
        assert!(text.contains("alpha = 0.5"));
        assert!(text.contains("epsilon = "));
    }

    #[test]
    fn file_overrides_defaults_and_paths_are_anchored() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(
            &path,
            "corpus = \"data\"\n[divergence]\nalpha = 0.25\n[sandbox]\ntimeout_s = 2.5\ntracer_command = [\"bin/tr\", \"--x\"]\n",
        )
        .unwrap();
        let mut c = PipelineConfig::default();
        FileConfig::load(&path).unwrap().apply(&mut c).unwrap();
        assert_eq!(c.corpus, dir.path().join("data"));
        assert_eq!(c.divergence.alpha(), 0.25);
        assert_eq!(c.divergence.epsilon(), 1e-9);
        assert_eq!(c.sandbox.per_test_timeout, Duration::from_millis(2500));
        assert_eq!(c.sandbox.tracer_command[0], dir.path().join("bin/tr").display().to_string());
        assert_eq!(c.sandbox.tracer_command[1], "--x");
    }

    #[test]
    fn bad_files_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "colour = 1\n").unwrap();
        assert!(matches!(FileConfig::load(&path), Err(CliError::Usage(_))));
        std::fs::write(&path, "[divergence]\nalpha = 2.0\n").unwrap();
        let file = FileConfig::load(&path).unwrap();
        assert!(matches!(file.apply(&mut PipelineConfig::default()), Err(CliError::Usage(_))));
    }
}
