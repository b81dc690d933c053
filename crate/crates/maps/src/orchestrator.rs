//! Experiment execution: grid enumeration over corpora, models,
//! strategies, and runs; resumable parallel execution; deterministic
//! run-log output; and the live-spend gate.

use std::collections::VecDeque;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Mutex};

use serde::Serialize;

use crate::config::{ConfigError, ExperimentConfig, ProviderKind};
use crate::corpus::{self, Corpus, CorpusError, CorpusManifest, SamplePlan};
use crate::domain::{DatasetVariant, Question};
use crate::engine::{provider_call_count, Engine, EngineConfig, EngineError};
use crate::money::{Money, PriceSheet};
use crate::prompt::{PromptForge, TemplateSet};
use crate::provider::{
    parse_script_file, DecodingParams, HttpProvider, Provider, ProviderError, ScriptedProvider,
};
use crate::runlog::{self, LogWriter, OrderedWriter, RunKey, RunLogError, RunRecord};

/// File names inside the output directory.
pub const LOG_FILE: &str = "runs.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum OrchestratorError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] CorpusError),
    #[error(transparent)]
    Log(#[from] RunLogError),
    #[error("provider for model {model_id}: {source}")]
    Provider {
        model_id: String,
        #[source]
        source: ProviderError,
    },
    #[error("write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl OrchestratorError {
    /// Process exit code for this failure class: 2 configuration,
    /// 3 provider, 4 data.
    pub fn exit_code(&self) -> i32 {
        match self {
            OrchestratorError::Config(_) => 2,
            OrchestratorError::Provider { .. } => 3,
            OrchestratorError::Data(_)
            | OrchestratorError::Log(_)
            | OrchestratorError::Io { .. } => 4,
        }
    }
}

fn config_issue(message: impl Into<String>) -> OrchestratorError {
    OrchestratorError::Config(ConfigError::Invalid(vec![message.into()]))
}

fn classify_engine_error(model_id: &str, error: EngineError) -> OrchestratorError {
    match error {
        EngineError::Provider(source) => OrchestratorError::Provider {
            model_id: model_id.to_string(),
            source,
        },
        EngineError::InvalidConfig(message) => config_issue(message),
        EngineError::Prompt(e) => config_issue(e.to_string()),
    }
}

/// Per-invocation switches from the command line.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Permit live http providers (and their spend).
    pub live: bool,
    /// Override the configured worker count.
    pub parallel: Option<usize>,
    /// Execute at most this many pending attempts, then stop cleanly;
    /// a later run resumes the remainder.
    pub limit: Option<usize>,
}

/// What one `run` invocation did.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    /// Grid size: every (corpus, model, strategy, run, question) cell.
    pub total_attempts: usize,
    /// Cells already in the log and skipped by resume.
    pub already_logged: usize,
    /// Records written by this invocation.
    pub executed: usize,
    pub log_path: PathBuf,
    pub manifest_path: PathBuf,
    /// Worst-case projected spend for live providers, when applicable.
    pub projected_cost_usd: Option<Money>,
    pub warnings: Vec<String>,
}

/// Corpus loaded and sampled, ready for enumeration.
pub struct PreparedCorpus {
    pub corpus: Corpus,
    pub plan: SamplePlan,
    /// Per-run question-id draws, `samples[run][i]`.
    pub samples: Vec<Vec<String>>,
}

/// Everything validated and loaded, before any provider is constructed.
pub struct PreparedExperiment {
    pub sheet: PriceSheet,
    pub corpora: Vec<PreparedCorpus>,
    pub warnings: Vec<String>,
}

/// Validates the config, loads every corpus, and draws every sample.
pub fn prepare(config: &ExperimentConfig) -> Result<PreparedExperiment, OrchestratorError> {
    let sheet = config.validate()?;
    let mut corpora = Vec::new();
    let mut warnings = Vec::new();
    for section in &config.corpora {
        let corpus = corpus::load_corpus(&section.path, &section.dataset, section.variant)?;
        let (plan, warning) = config.plan_for(&corpus);
        warnings.extend(warning);
        let samples = corpus::draw_samples(&corpus, &plan)?;
        corpora.push(PreparedCorpus {
            corpus,
            plan,
            samples,
        });
    }
    Ok(PreparedExperiment {
        sheet,
        corpora,
        warnings,
    })
}

/// Audit output of `sample`: the exact seeded draws, reproducible from
/// config alone.
#[derive(Debug, Clone, Serialize)]
pub struct SampleManifest {
    pub seed: u64,
    pub corpora: Vec<CorpusSamples>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorpusSamples {
    pub dataset: String,
    pub variant: DatasetVariant,
    pub sha256: String,
    pub runs: u32,
    pub sample_size: usize,
    pub samples: Vec<Vec<String>>,
}

pub fn sample_manifest(config: &ExperimentConfig) -> Result<SampleManifest, OrchestratorError> {
    let prepared = prepare(config)?;
    Ok(SampleManifest {
        seed: config.seed,
        corpora: prepared
            .corpora
            .into_iter()
            .map(|pc| CorpusSamples {
                dataset: pc.corpus.dataset().to_string(),
                variant: pc.corpus.variant(),
                sha256: pc.corpus.manifest().sha256.clone(),
                runs: pc.plan.runs,
                sample_size: pc.plan.sample_size,
                samples: pc.samples,
            })
            .collect(),
    })
}

/// Output of `validate`: proof the run would be well-formed, including
/// corpus digests, without touching providers or credentials.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub corpora: Vec<CorpusManifest>,
    pub models: Vec<String>,
    pub strategies: Vec<String>,
    pub total_attempts: usize,
    pub warnings: Vec<String>,
}

pub fn validate_experiment(
    config: &ExperimentConfig,
) -> Result<ValidationReport, OrchestratorError> {
    let prepared = prepare(config)?;
    for model in &config.models {
        if let Some(script) = &model.script {
            let text = std::fs::read_to_string(script).map_err(|e| {
                config_issue(format!(
                    "model {:?}: script {}: {e}",
                    model.id,
                    script.display()
                ))
            })?;
            parse_script_file(&text)
                .map_err(|e| config_issue(format!("model {:?}: {e}", model.id)))?;
        }
    }
    let per_cell: usize = prepared
        .corpora
        .iter()
        .map(|pc| pc.samples.iter().map(Vec::len).sum::<usize>())
        .sum();
    Ok(ValidationReport {
        corpora: prepared
            .corpora
            .iter()
            .map(|pc| pc.corpus.manifest().clone())
            .collect(),
        models: config.models.iter().map(|m| m.id.clone()).collect(),
        strategies: config.strategies.iter().map(|s| s.label()).collect(),
        total_attempts: per_cell * config.models.len() * config.strategies.len(),
        warnings: prepared.warnings,
    })
}

/// Grid snapshot persisted alongside the log so a log is interpretable
/// without the original config.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub schema_version: String,
    pub seed: u64,
    pub template_version: String,
    pub decoding: DecodingParams,
    pub corpora: Vec<ManifestCorpus>,
    pub models: Vec<String>,
    pub strategies: Vec<String>,
    pub total_attempts: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestCorpus {
    #[serde(flatten)]
    pub source: CorpusManifest,
    pub runs: u32,
    pub sample_size: usize,
}

struct Work {
    seq: u64,
    dataset: String,
    variant: DatasetVariant,
    model_idx: usize,
    engine_idx: usize,
    run_index: u32,
    question: Question,
}

fn build_engines(
    config: &ExperimentConfig,
    forge: &PromptForge,
) -> Result<Vec<Engine>, OrchestratorError> {
    let mut engines = Vec::with_capacity(config.corpora.len() * config.strategies.len());
    for corpus_section in &config.corpora {
        for strategy in &config.strategies {
            let spec = strategy
                .resolve(corpus_section.variant)
                .map_err(config_issue)?;
            let mut engine_config = EngineConfig::new(spec);
            engine_config.decoding = config.decoding;
            engines.push(Engine::new(forge.clone(), engine_config));
        }
    }
    Ok(engines)
}

fn build_providers(
    config: &ExperimentConfig,
    live: bool,
) -> Result<Vec<Box<dyn Provider>>, OrchestratorError> {
    let mut providers: Vec<Box<dyn Provider>> = Vec::new();
    for model in &config.models {
        match model.provider {
            ProviderKind::Scripted => {
                let path = model.script.as_ref().expect("validated: script present");
                let text = std::fs::read_to_string(path).map_err(|e| {
                    config_issue(format!(
                        "model {:?}: script {}: {e}",
                        model.id,
                        path.display()
                    ))
                })?;
                let scripts = parse_script_file(&text)
                    .map_err(|e| config_issue(format!("model {:?}: {e}", model.id)))?;
                providers.push(Box::new(
                    ScriptedProvider::from_scripts(&model.id, scripts)
                        .with_repeat_last(model.repeat_last.unwrap_or(false)),
                ));
            }
            ProviderKind::Http => {
                debug_assert!(live, "live gate checked before provider construction");
                let provider_config = model.provider_config().expect("validated: http fields");
                let provider = HttpProvider::new(provider_config).map_err(|e| {
                    OrchestratorError::Provider {
                        model_id: model.id.clone(),
                        source: e,
                    }
                })?;
                providers.push(Box::new(provider));
            }
        }
    }
    Ok(providers)
}

/// Worst-case spend of the pending work on live models, from the price
/// sheet and the configured average token counts.
fn projected_live_cost(
    config: &ExperimentConfig,
    sheet: &PriceSheet,
    engines: &[Engine],
    pending: &[Work],
) -> Result<Option<Money>, OrchestratorError> {
    let live_models: Vec<bool> = config
        .models
        .iter()
        .map(|m| m.provider == ProviderKind::Http)
        .collect();
    if !live_models.iter().any(|&is_live| is_live) {
        return Ok(None);
    }
    let preflight = config.preflight.ok_or_else(|| {
        config_issue(
            "live run requires a [preflight] section (avg_prompt_tokens, \
             avg_completion_tokens) for the projected-cost gate",
        )
    })?;
    let mut total = Money::ZERO;
    for work in pending {
        if !live_models[work.model_idx] {
            continue;
        }
        let spec = &engines[work.engine_idx].config().spec;
        let calls = provider_call_count(spec, spec.max_layers) as u64;
        let entry = sheet
            .get(&config.models[work.model_idx].id)
            .expect("validated: model priced");
        let per_call = entry.usd_per_1m_input.cost(preflight.avg_prompt_tokens)
            + entry
                .usd_per_1m_output
                .cost(preflight.avg_completion_tokens);
        total += per_call.scale(calls, 1);
    }
    Ok(Some(total))
}

/// Executes the experiment grid, resuming from whatever the output log
/// already holds. Record order in the log is the enumeration order
/// (corpora, then models, then strategies, then runs, then sampled
/// questions), independent of worker scheduling, so a clean rerun of the
/// same config is byte-identical. On the first provider failure the run
/// aborts with the partial log intact; rerunning resumes it.
pub fn run_experiment(
    config: &ExperimentConfig,
    options: &RunOptions,
) -> Result<RunSummary, OrchestratorError> {
    let prepared = prepare(config)?;
    let mut warnings = prepared.warnings;
    let sheet = prepared.sheet;
    let forge = PromptForge::new(
        TemplateSet::builtin(&config.template_version).map_err(|e| config_issue(e.to_string()))?,
    );
    let engines = build_engines(config, &forge)?;

    if config
        .models
        .iter()
        .any(|m| m.provider == ProviderKind::Http)
        && !options.live
    {
        return Err(config_issue(
            "config references live http providers; pass --live to allow spending",
        ));
    }

    // Resume state: everything already logged is skipped; a partial final
    // line (killed writer) is truncated away before appending.
    let log_path = config.output_dir.join(LOG_FILE);
    let manifest_path = config.output_dir.join(MANIFEST_FILE);
    let (existing, lenient) = runlog::load_existing_keys(&log_path)?;
    if let Some(tail) = &lenient.dropped_tail {
        warnings.push(format!("log tail discarded on resume: {tail}"));
    }
    if !existing.is_empty() {
        warnings.push(format!(
            "resuming: {} attempts already logged",
            existing.len()
        ));
    }

    let mut pending: Vec<Work> = Vec::new();
    let mut total_attempts = 0usize;
    for (corpus_idx, (prepared_corpus, corpus_section)) in
        prepared.corpora.iter().zip(&config.corpora).enumerate()
    {
        for (model_idx, model) in config.models.iter().enumerate() {
            for (strategy_idx, strategy) in config.strategies.iter().enumerate() {
                let label = strategy.label();
                for (run_index, sample) in prepared_corpus.samples.iter().enumerate() {
                    for question_id in sample {
                        total_attempts += 1;
                        let key = RunKey {
                            dataset: corpus_section.dataset.clone(),
                            variant: corpus_section.variant.as_str().to_string(),
                            model_id: model.id.clone(),
                            strategy: label.clone(),
                            run_index: run_index as u32,
                            question_id: question_id.clone(),
                        };
                        if existing.contains(&key) {
                            continue;
                        }
                        let question = prepared_corpus
                            .corpus
                            .get(question_id)
                            .expect("sample ids come from the corpus")
                            .clone();
                        pending.push(Work {
                            seq: pending.len() as u64,
                            dataset: corpus_section.dataset.clone(),
                            variant: corpus_section.variant,
                            model_idx,
                            engine_idx: corpus_idx * config.strategies.len() + strategy_idx,
                            run_index: run_index as u32,
                            question,
                        });
                    }
                }
            }
        }
    }
    let already_logged = total_attempts - pending.len();
    if let Some(limit) = options.limit {
        pending.truncate(limit);
    }

    let projected_cost_usd = projected_live_cost(config, &sheet, &engines, &pending)?;
    let providers = build_providers(config, options.live)?;

    std::fs::create_dir_all(&config.output_dir).map_err(|e| OrchestratorError::Io {
        path: config.output_dir.clone(),
        source: e,
    })?;
    let manifest = RunManifest {
        schema_version: runlog::SCHEMA_VERSION.to_string(),
        seed: config.seed,
        template_version: config.template_version.clone(),
        decoding: config.decoding,
        corpora: prepared
            .corpora
            .iter()
            .map(|pc| ManifestCorpus {
                source: pc.corpus.manifest().clone(),
                runs: pc.plan.runs,
                sample_size: pc.plan.sample_size,
            })
            .collect(),
        models: config.models.iter().map(|m| m.id.clone()).collect(),
        strategies: config.strategies.iter().map(|s| s.label()).collect(),
        total_attempts,
    };
    let manifest_json =
        serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    std::fs::write(&manifest_path, manifest_json).map_err(|e| OrchestratorError::Io {
        path: manifest_path.clone(),
        source: e,
    })?;

    let writer = LogWriter::append_truncating(&log_path, lenient.clean_len)?;
    let mut ordered = OrderedWriter::new(writer);
    let parallelism = options.parallel.unwrap_or(config.parallelism).max(1);

    let queue: Mutex<VecDeque<Work>> = Mutex::new(pending.into_iter().collect());
    let abort = AtomicBool::new(false);
    let (sender, receiver) = mpsc::channel::<(u64, String, Result<RunRecord, EngineError>)>();

    let mut executed = 0usize;
    let mut first_error: Option<OrchestratorError> = None;

    std::thread::scope(|scope| {
        let queue = &queue;
        let abort = &abort;
        let engines = &engines;
        let providers = &providers;
        let sheet = &sheet;
        let models = &config.models;
        for _ in 0..parallelism {
            let sender = sender.clone();
            scope.spawn(move || loop {
                if abort.load(Ordering::Relaxed) {
                    break;
                }
                let work = queue.lock().expect("work queue").pop_front();
                let Some(work) = work else { break };
                let model_id = models[work.model_idx].id.clone();
                let outcome = engines[work.engine_idx]
                    .run_attempt(
                        &work.question,
                        providers[work.model_idx].as_ref(),
                        work.run_index,
                    )
                    .map(|mut trace| {
                        let entry = sheet.get(&model_id).expect("validated: model priced");
                        trace.total_cost_usd = entry.cost(trace.total_usage);
                        RunRecord::new(work.dataset, work.variant, model_id.clone(), trace)
                    });
                let failed = outcome.is_err();
                if failed {
                    abort.store(true, Ordering::Relaxed);
                }
                if sender.send((work.seq, model_id, outcome)).is_err() || failed {
                    break;
                }
            });
        }
        drop(sender);

        for (seq, model_id, outcome) in receiver {
            match outcome {
                Ok(record) => match ordered.push(seq, record) {
                    Ok(()) => executed += 1,
                    Err(e) => {
                        abort.store(true, Ordering::Relaxed);
                        first_error.get_or_insert(e.into());
                    }
                },
                Err(e) => {
                    first_error.get_or_insert(classify_engine_error(&model_id, e));
                }
            }
        }
    });

    ordered.finish()?;
    if let Some(error) = first_error {
        return Err(error);
    }

    Ok(RunSummary {
        total_attempts,
        already_logged,
        executed,
        log_path,
        manifest_path,
        projected_cost_usd,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    use crate::runlog::{duplicate_keys, read_records};

    fn write(dir: &Path, name: &str, contents: &str) -> PathBuf {
        let path = dir.join(name);
        std::fs::write(&path, contents).unwrap();
        path
    }

    /// Six-question grade-school corpus; q3 and q6 are answered wrong by
    /// the scripted model below.
    fn corpus_jsonl() -> String {
        (1..=6)
            .map(|i| {
                format!(
                    r#"{{"id": "q{i}", "question": "Worker {i} packs {i} crates of 10 jars each. How many jars?", "answer": "{i} crates of 10 jars is {n}. #### {n}"}}"#,
                    n = i * 10
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Single-entry repeat-last scripts: q3/q6 always wrong, others right.
    /// The `empty` question gets an empty script, so its first call fails.
    fn script_json_except(empty: Option<&str>) -> String {
        let mut entries = Vec::new();
        for i in 1..=6 {
            let id = format!("q{i}");
            if Some(id.as_str()) == empty {
                entries.push(format!(r#""{id}": []"#));
                continue;
            }
            let n = i * 10;
            let text = if i % 3 == 0 {
                format!("It must be {}. #### {}", n + 1, n + 1)
            } else {
                format!("{i} times 10 is {n}. #### {n}")
            };
            entries.push(format!(
                r#""{id}": [{{"text": "{text}", "usage": {{"prompt_tokens": 100, "completion_tokens": 20}}}}]"#
            ));
        }
        format!("{{{}}}", entries.join(", "))
    }

    fn script_json() -> String {
        script_json_except(None)
    }

    const PRICES: &str = r#"{
        "scripted-model": {"usd_per_1m_input": "0.15", "usd_per_1m_output": "0.60"}
    }"#;

    fn config_toml(parallelism: usize) -> String {
        format!(
            r#"
output_dir = "out"
seed = 7
parallelism = {parallelism}
price_sheet = "prices.json"

[sample]
runs = 2
size = 3

[[corpora]]
dataset = "gsm8k"
variant = "gsm8k"
path = "corpus.jsonl"

[[models]]
id = "scripted-model"
provider = "scripted"
script = "script.json"
repeat_last = true

[[strategies]]
kind = "cot"

[[strategies]]
kind = "maps"
max_layers = 2
"#
        )
    }

    fn setup(dir: &Path, parallelism: usize) -> ExperimentConfig {
        write(dir, "corpus.jsonl", &corpus_jsonl());
        write(dir, "script.json", &script_json());
        write(dir, "prices.json", PRICES);
        ExperimentConfig::from_toml_str(&config_toml(parallelism), dir).unwrap()
    }

    #[test]
    fn grid_runs_and_reruns_byte_identically() {
        let dir = tempfile::tempdir().unwrap();
        let config = setup(dir.path(), 1);
        let summary = run_experiment(&config, &RunOptions::default()).unwrap();
        // 1 corpus x 1 model x 2 strategies x 2 runs x 3 questions
        assert_eq!(summary.total_attempts, 12);
        assert_eq!(summary.executed, 12);
        assert_eq!(summary.already_logged, 0);

        let records = read_records(&summary.log_path).unwrap();
        assert_eq!(records.len(), 12);
        assert!(duplicate_keys(&records).is_empty());
        // strategy blocks arrive in enumeration order
        assert!(records[..6]
            .iter()
            .all(|r| r.trace.strategy.label() == "cot"));
        assert!(records[6..]
            .iter()
            .all(|r| r.trace.strategy.label() == "maps_2l"));
        // every trace is priced
        assert!(records.iter().all(|r| r.trace.total_cost_usd > Money::ZERO));
        assert!(summary.manifest_path.is_file());

        let first_bytes = std::fs::read(&summary.log_path).unwrap();
        let again = run_experiment(&config, &RunOptions::default()).unwrap();
        assert_eq!(again.executed, 0);
        assert_eq!(again.already_logged, 12);
        assert_eq!(std::fs::read(&summary.log_path).unwrap(), first_bytes);
    }

    #[test]
    fn limit_then_resume_matches_a_clean_run() {
        let clean_dir = tempfile::tempdir().unwrap();
        let clean = setup(clean_dir.path(), 1);
        let clean_summary = run_experiment(&clean, &RunOptions::default()).unwrap();
        let clean_bytes = std::fs::read(&clean_summary.log_path).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let config = setup(dir.path(), 1);
        let partial = run_experiment(
            &config,
            &RunOptions {
                limit: Some(5),
                ..RunOptions::default()
            },
        )
        .unwrap();
        assert_eq!(partial.executed, 5);

        // simulate a kill mid-write: append half a record
        std::fs::OpenOptions::new()
            .append(true)
            .open(&partial.log_path)
            .unwrap()
            .write_all(b"{\"schema_version\":\"1\",\"dat")
            .unwrap();

        let resumed = run_experiment(&config, &RunOptions::default()).unwrap();
        assert_eq!(resumed.already_logged, 5);
        assert_eq!(resumed.executed, 7);
        assert!(resumed
            .warnings
            .iter()
            .any(|w| w.contains("log tail discarded")));

        let records = read_records(&resumed.log_path).unwrap();
        assert_eq!(records.len(), 12);
        assert!(duplicate_keys(&records).is_empty());
        assert_eq!(std::fs::read(&resumed.log_path).unwrap(), clean_bytes);
    }

    #[test]
    fn parallel_run_is_deterministic() {
        let dir_a = tempfile::tempdir().unwrap();
        let config_a = setup(dir_a.path(), 4);
        let summary_a = run_experiment(&config_a, &RunOptions::default()).unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let config_b = setup(dir_b.path(), 4);
        let summary_b = run_experiment(&config_b, &RunOptions::default()).unwrap();
        assert_eq!(
            std::fs::read(&summary_a.log_path).unwrap(),
            std::fs::read(&summary_b.log_path).unwrap()
        );
    }

    #[test]
    fn provider_failure_leaves_a_resumable_partial_log() {
        let dir = tempfile::tempdir().unwrap();
        let config = setup(dir.path(), 1);
        // break the second sampled question's script: present but empty,
        // so its first call fails after one attempt has already logged
        let manifest = sample_manifest(&config).unwrap();
        let victim = manifest.corpora[0].samples[0][1].clone();
        write(
            dir.path(),
            "script.json",
            &script_json_except(Some(&victim)),
        );

        let error = run_experiment(&config, &RunOptions::default()).unwrap_err();
        assert_eq!(error.exit_code(), 3);
        let log_path = config.output_dir.join(LOG_FILE);
        let partial = read_records(&log_path).unwrap();
        assert!(!partial.is_empty(), "prefix before the failure is kept");
        assert!(partial.len() < 12);

        // repair the script; rerun resumes and completes without duplicates
        write(dir.path(), "script.json", &script_json());
        let resumed = run_experiment(&config, &RunOptions::default()).unwrap();
        assert_eq!(resumed.already_logged, partial.len());
        let records = read_records(&log_path).unwrap();
        assert_eq!(records.len(), 12);
        assert!(duplicate_keys(&records).is_empty());
    }

    #[test]
    fn live_gate_and_preflight() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "corpus.jsonl", &corpus_jsonl());
        write(
            dir.path(),
            "prices.json",
            r#"{"live-model": {"usd_per_1m_input": "1", "usd_per_1m_output": "2"}}"#,
        );
        let toml_text = r#"
output_dir = "out"
seed = 7
price_sheet = "prices.json"

[sample]
runs = 1
size = 2

[[corpora]]
dataset = "gsm8k"
variant = "gsm8k"
path = "corpus.jsonl"

[[models]]
id = "live-model"
provider = "http"
base_url = "https://api.example.test/v1"
api_key_env = "MAPS_TEST_ABSENT_KEY"

[[strategies]]
kind = "maps"
max_layers = 3
"#;
        let config = ExperimentConfig::from_toml_str(toml_text, dir.path()).unwrap();

        // without --live: refused as a config error
        let refused = run_experiment(&config, &RunOptions::default()).unwrap_err();
        assert_eq!(refused.exit_code(), 2);
        assert!(refused.to_string().contains("--live"));

        // with --live but no [preflight]: refused, the gate needs estimates
        let live = RunOptions {
            live: true,
            ..RunOptions::default()
        };
        let no_preflight = run_experiment(&config, &live).unwrap_err();
        assert_eq!(no_preflight.exit_code(), 2);
        assert!(no_preflight.to_string().contains("preflight"));

        // with estimates: the gate passes, then the missing key stops the
        // run before any request (provider failure class)
        let with_preflight = format!(
            "{toml_text}\n[preflight]\navg_prompt_tokens = 1000\navg_completion_tokens = 500\n"
        );
        let config = ExperimentConfig::from_toml_str(&with_preflight, dir.path()).unwrap();
        let missing_key = run_experiment(&config, &live).unwrap_err();
        assert_eq!(missing_key.exit_code(), 3);
    }

    #[test]
    fn sample_manifest_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let config = setup(dir.path(), 1);
        let a = sample_manifest(&config).unwrap();
        let b = sample_manifest(&config).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert_eq!(a.corpora[0].samples.len(), 2);
        assert_eq!(a.corpora[0].samples[0].len(), 3);
    }

    #[test]
    fn validation_report_counts_the_grid() {
        let dir = tempfile::tempdir().unwrap();
        let config = setup(dir.path(), 1);
        let report = validate_experiment(&config).unwrap();
        assert_eq!(report.total_attempts, 12);
        assert_eq!(report.strategies, vec!["cot", "maps_2l"]);
        assert_eq!(report.corpora[0].record_count, 6);

        // corrupt script is a config error
        write(dir.path(), "script.json", "not json");
        let err = validate_experiment(&config).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    use std::io::Write as _;
}
