//! TOML experiment configuration: the full evaluation grid in one file,
//! validated before anything runs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{full_set_plan, Corpus, SamplePlan};
use crate::domain::{DatasetFamily, DatasetVariant, StrategyKind, StrategySpec};
use crate::money::PriceSheet;
use crate::prompt::{builtin_gsm_exemplars, TemplateSet};
use crate::provider::{DecodingParams, ProviderConfig};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse {path}: {detail}")]
    Parse { path: PathBuf, detail: String },
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

fn default_parallelism() -> usize {
    1
}

fn default_template_version() -> String {
    TemplateSet::DEFAULT_VERSION.to_string()
}

/// Whole experiment definition. Relative paths are resolved against the
/// directory containing the config file at load time.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Directory receiving the run log, manifest, and reports.
    pub output_dir: PathBuf,
    /// Master seed; per-run sample seeds are derived from it.
    pub seed: u64,
    /// Worker threads for attempt execution.
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Pinned prompt-template version.
    #[serde(default = "default_template_version")]
    pub template_version: String,
    /// JSON price sheet: model id -> per-million-token rates.
    pub price_sheet: PathBuf,
    #[serde(default)]
    pub decoding: DecodingParams,
    /// Optional sampling plan; absent means one pass over each full corpus.
    #[serde(default)]
    pub sample: Option<SampleSection>,
    #[serde(rename = "corpora")]
    pub corpora: Vec<CorpusSection>,
    #[serde(rename = "models")]
    pub models: Vec<ModelSection>,
    #[serde(rename = "strategies")]
    pub strategies: Vec<StrategySection>,
    /// Token averages for the live-run projected-cost gate.
    #[serde(default)]
    pub preflight: Option<PreflightSection>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSection {
    /// Independent repetitions of the whole grid cell.
    pub runs: u32,
    /// Questions drawn per run.
    pub size: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    /// Name used in log records and reports; unique per config.
    pub dataset: String,
    pub variant: DatasetVariant,
    /// JSONL benchmark file.
    pub path: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    /// Deterministic replay from a script file; used for tests and dry runs.
    Scripted,
    /// Live chat-completions endpoint; requires `--live`.
    Http,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Model id: log key, price-sheet key, and wire model name.
    pub id: String,
    pub provider: ProviderKind,
    /// Scripted only: JSON file of per-question canned completions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
    /// Scripted only: keep serving a script's final entry after it runs
    /// out, so repeat visits to a question stay order-independent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeat_last: Option<bool>,
    /// Http only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_secs: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_retries: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backoff_base_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jitter: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_in_flight: Option<usize>,
}

impl ModelSection {
    /// Field-shape violations for this entry, if any.
    fn shape_issues(&self) -> Vec<String> {
        let mut issues = Vec::new();
        let id = &self.id;
        if id.trim().is_empty() {
            issues.push("model id must be non-empty".to_string());
        }
        match self.provider {
            ProviderKind::Scripted => {
                if self.script.is_none() {
                    issues.push(format!("scripted model {id:?} requires script"));
                }
                let http_only: [(&str, bool); 7] = [
                    ("base_url", self.base_url.is_some()),
                    ("api_key_env", self.api_key_env.is_some()),
                    ("timeout_secs", self.timeout_secs.is_some()),
                    ("max_retries", self.max_retries.is_some()),
                    ("backoff_base_ms", self.backoff_base_ms.is_some()),
                    ("jitter", self.jitter.is_some()),
                    ("max_in_flight", self.max_in_flight.is_some()),
                ];
                for (field, present) in http_only {
                    if present {
                        issues.push(format!(
                            "scripted model {id:?} must not set http field {field}"
                        ));
                    }
                }
            }
            ProviderKind::Http => {
                if self.base_url.is_none() {
                    issues.push(format!("http model {id:?} requires base_url"));
                }
                if self.api_key_env.is_none() {
                    issues.push(format!("http model {id:?} requires api_key_env"));
                }
                if self.script.is_some() {
                    issues.push(format!("http model {id:?} must not set script"));
                }
                if self.repeat_last.is_some() {
                    issues.push(format!("http model {id:?} must not set repeat_last"));
                }
            }
        }
        issues
    }

    /// Connection settings for an http model; `None` for scripted ones.
    pub fn provider_config(&self) -> Option<ProviderConfig> {
        if self.provider != ProviderKind::Http {
            return None;
        }
        let mut config = ProviderConfig::new(
            self.base_url.clone()?,
            self.api_key_env.clone()?,
            self.id.clone(),
        );
        if let Some(v) = self.timeout_secs {
            config.timeout_secs = v;
        }
        if let Some(v) = self.max_retries {
            config.max_retries = v;
        }
        if let Some(v) = self.backoff_base_ms {
            config.backoff_base_ms = v;
        }
        if let Some(v) = self.jitter {
            config.jitter = v;
        }
        if let Some(v) = self.max_in_flight {
            config.max_in_flight = v;
        }
        Some(config)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySection {
    pub kind: StrategyKind,
    /// Required for maps (1..=3); fixed implicitly for the other kinds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_layers: Option<u32>,
}

impl StrategySection {
    /// Grouping label matching [`StrategySpec::label`].
    pub fn label(&self) -> String {
        match self.kind {
            StrategyKind::Maps => format!("maps_{}l", self.max_layers.unwrap_or(0)),
            kind => kind.as_str().to_string(),
        }
    }

    /// Builds the concrete per-variant spec: reasoning strategies carry
    /// the eight standard exemplars on GSM-family datasets, and
    /// competition datasets switch to zero-shot boxed output.
    pub fn resolve(&self, variant: DatasetVariant) -> Result<StrategySpec, String> {
        let fixed = |expected: u32, kind: &str| -> Result<(), String> {
            match self.max_layers {
                None => Ok(()),
                Some(n) if n == expected => Ok(()),
                Some(n) => Err(format!(
                    "{kind} has a fixed max_layers of {expected}, got {n}"
                )),
            }
        };
        let exemplars = || match variant.family() {
            DatasetFamily::Gsm => builtin_gsm_exemplars(),
            DatasetFamily::Aime | DatasetFamily::Math => Vec::new(),
        };
        let mut spec = match self.kind {
            StrategyKind::Baseline => {
                fixed(0, "baseline")?;
                StrategySpec::baseline()
            }
            StrategyKind::Cot => {
                fixed(0, "cot")?;
                StrategySpec::cot(exemplars())
            }
            StrategyKind::Sr => {
                fixed(1, "sr")?;
                StrategySpec::sr(exemplars())
            }
            StrategyKind::Maps => {
                let layers = self
                    .max_layers
                    .ok_or_else(|| "maps strategy requires max_layers (1..=3)".to_string())?;
                StrategySpec::maps(layers, exemplars())
            }
        };
        if variant.family() != DatasetFamily::Gsm {
            spec.boxed_output = true;
        }
        let violations = spec.validate(variant);
        if !violations.is_empty() {
            return Err(violations.join("; "));
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreflightSection {
    /// Expected prompt tokens per provider call, for cost projection.
    pub avg_prompt_tokens: u64,
    /// Expected completion tokens per provider call.
    pub avg_completion_tokens: u64,
}

impl ExperimentConfig {
    /// Parses TOML; relative paths are rebased onto `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<ExperimentConfig, ConfigError> {
        let mut config: ExperimentConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse {
                path: base_dir.join("<inline>"),
                detail: e.to_string(),
            })?;
        config.rebase(base_dir);
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut config: ExperimentConfig =
            toml::from_str(&text).map_err(|e| ConfigError::Parse {
                path: path.to_path_buf(),
                detail: e.to_string(),
            })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.rebase(base);
        Ok(config)
    }

    fn rebase(&mut self, base: &Path) {
        let rebase_one = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase_one(&mut self.output_dir);
        rebase_one(&mut self.price_sheet);
        for corpus in &mut self.corpora {
            rebase_one(&mut corpus.path);
        }
        for model in &mut self.models {
            if let Some(script) = &mut model.script {
                rebase_one(script);
            }
        }
    }

    /// Structural validation plus the price-sheet cross-check. Returns the
    /// loaded sheet so callers don't read it twice. Corpus files are NOT
    /// touched here; their problems are data errors, not config errors.
    pub fn validate(&self) -> Result<PriceSheet, ConfigError> {
        let mut issues = Vec::new();
        if self.parallelism == 0 {
            issues.push("parallelism must be >= 1".to_string());
        }
        if let Err(e) = self.decoding.validate() {
            issues.push(format!("decoding: {e}"));
        }
        if let Err(e) = TemplateSet::builtin(&self.template_version) {
            issues.push(e.to_string());
        }
        if let Some(sample) = &self.sample {
            if sample.runs == 0 {
                issues.push("sample.runs must be >= 1".to_string());
            }
            if sample.size == 0 {
                issues.push("sample.size must be >= 1".to_string());
            }
        }

        if self.corpora.is_empty() {
            issues.push("at least one [[corpora]] entry is required".to_string());
        }
        for (i, corpus) in self.corpora.iter().enumerate() {
            if corpus.dataset.trim().is_empty() {
                issues.push(format!("corpora[{i}]: dataset name must be non-empty"));
            }
            if self.corpora[..i]
                .iter()
                .any(|c| c.dataset == corpus.dataset)
            {
                issues.push(format!("duplicate dataset name {:?}", corpus.dataset));
            }
        }

        if self.models.is_empty() {
            issues.push("at least one [[models]] entry is required".to_string());
        }
        for (i, model) in self.models.iter().enumerate() {
            issues.extend(model.shape_issues());
            if self.models[..i].iter().any(|m| m.id == model.id) {
                issues.push(format!("duplicate model id {:?}", model.id));
            }
            if let Some(provider_config) = model.provider_config() {
                if let Err(e) = provider_config.validate() {
                    issues.push(format!("model {:?}: {e}", model.id));
                }
            }
            if let Some(script) = &model.script {
                if !script.is_file() {
                    issues.push(format!(
                        "model {:?}: script file {} does not exist",
                        model.id,
                        script.display()
                    ));
                }
            }
        }

        if self.strategies.is_empty() {
            issues.push("at least one [[strategies]] entry is required".to_string());
        }
        for (i, strategy) in self.strategies.iter().enumerate() {
            if self.strategies[..i]
                .iter()
                .any(|s| s.label() == strategy.label())
            {
                issues.push(format!("duplicate strategy {:?}", strategy.label()));
            }
            for corpus in &self.corpora {
                if let Err(e) = strategy.resolve(corpus.variant) {
                    issues.push(format!(
                        "strategy {:?} on {}: {e}",
                        strategy.label(),
                        corpus.variant
                    ));
                }
            }
        }

        let sheet = match PriceSheet::from_json_file(&self.price_sheet) {
            Ok(sheet) => Some(sheet),
            Err(e) => {
                issues.push(format!("price sheet: {e}"));
                None
            }
        };
        if let Some(sheet) = &sheet {
            for model in &self.models {
                if !sheet.contains(&model.id) {
                    issues.push(format!(
                        "model {:?} has no price entry in {}",
                        model.id,
                        self.price_sheet.display()
                    ));
                }
            }
        }

        match (issues.is_empty(), sheet) {
            (true, Some(sheet)) => Ok(sheet),
            (_, _) => Err(ConfigError::Invalid(issues)),
        }
    }

    /// Sampling plan for one corpus: the `[sample]` section when present,
    /// otherwise a single full pass (with a warning on GSM-family sets,
    /// which are normally sampled).
    pub fn plan_for(&self, corpus: &Corpus) -> (SamplePlan, Option<String>) {
        match &self.sample {
            Some(sample) => (
                SamplePlan {
                    runs: sample.runs,
                    sample_size: sample.size,
                    seed: self.seed,
                },
                None,
            ),
            None => full_set_plan(corpus, self.seed),
        }
    }
}
