//! The strategy state machine: one initial pass, gold-answer verification,
//! and reflection cycles until correct or the layer cap is reached.

use crate::codec;
use crate::domain::{AttemptTrace, LayerRecord, Question, StrategyKind, StrategySpec};
use crate::money::Money;
use crate::prompt::{PromptError, PromptForge};
use crate::provider::{DecodingParams, Provider, ProviderError};

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("invalid engine config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// How layer outputs are verified. Only gold-answer verification ships;
/// the enum leaves room for proxy verifiers without a gold signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VerifierMode {
    #[default]
    GoldAnswer,
}

/// Everything needed to execute one strategy.
#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub spec: StrategySpec,
    pub decoding: DecodingParams,
    pub verifier: VerifierMode,
}

impl EngineConfig {
    pub fn new(spec: StrategySpec) -> EngineConfig {
        EngineConfig {
            spec,
            decoding: DecodingParams::default(),
            verifier: VerifierMode::GoldAnswer,
        }
    }
}

/// Exact number of provider calls a strategy makes when it executes
/// `reflections` reflection layers: baseline and cot make the initial call
/// only; sr adds one call per reflection; maps adds two (the meta-prompt
/// call plus the re-answer call).
pub fn provider_call_count(spec: &StrategySpec, reflections: u32) -> u32 {
    match spec.kind {
        StrategyKind::Baseline | StrategyKind::Cot => 1,
        StrategyKind::Sr => 1 + reflections,
        StrategyKind::Maps => 1 + 2 * reflections,
    }
}

/// Executes attempts for one strategy configuration. One attempt is
/// strictly sequential; distinct attempts may run concurrently against a
/// shared provider handle.
#[derive(Clone)]
pub struct Engine {
    forge: PromptForge,
    config: EngineConfig,
}

impl Engine {
    pub fn new(forge: PromptForge, config: EngineConfig) -> Engine {
        Engine { forge, config }
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    /// Runs the full loop for one question: layer 0 answers, then (for sr
    /// and maps) reflection layers until a correct verdict or the cap.
    /// The returned trace satisfies every trace invariant; its cost field
    /// is zero until priced against a price sheet.
    pub fn run_attempt(
        &self,
        question: &Question,
        provider: &dyn Provider,
        run_index: u32,
    ) -> Result<AttemptTrace, EngineError> {
        self.config
            .decoding
            .validate()
            .map_err(EngineError::InvalidConfig)?;
        let spec = &self.config.spec;
        let violations = spec.validate(question.variant);
        if !violations.is_empty() {
            return Err(EngineError::InvalidConfig(violations.join("; ")));
        }

        let mut layers: Vec<LayerRecord> = Vec::new();

        let bundle = self.forge.initial(question, spec)?;
        let result = provider.complete(&question.id, &bundle, &self.config.decoding)?;
        let (candidate, verdict) = codec::judge(&result.text, &question.gold, question.variant);
        layers.push(LayerRecord {
            layer_index: 0,
            reflection_prompt: None,
            model_output: result.text,
            extracted: candidate.map(|c| c.canonical().to_string()),
            verdict,
            usage: result.usage,
            meta_prompt_fallback: false,
        });

        if !verdict.is_correct() {
            match spec.kind {
                StrategyKind::Baseline | StrategyKind::Cot => {}
                StrategyKind::Sr => self.run_static_reflection(question, provider, &mut layers)?,
                StrategyKind::Maps => self.run_reflection_loop(question, provider, &mut layers)?,
            }
        }

        let last = layers.last().expect("layer 0 always present");
        let final_verdict = last.verdict;
        let total_usage = layers.iter().map(|l| l.usage).sum();
        Ok(AttemptTrace {
            question_id: question.id.clone(),
            strategy: spec.clone(),
            run_index,
            layers,
            final_verdict,
            total_usage,
            total_cost_usd: Money::ZERO,
        })
    }

    fn run_static_reflection(
        &self,
        question: &Question,
        provider: &dyn Provider,
        layers: &mut Vec<LayerRecord>,
    ) -> Result<(), EngineError> {
        let prior = layers.last().expect("layer 0").model_output.clone();
        let bundle = self.forge.static_reflection(question, &prior);
        let prompt_text = bundle.user.clone();
        let result = provider.complete(&question.id, &bundle, &self.config.decoding)?;
        let (candidate, verdict) = codec::judge(&result.text, &question.gold, question.variant);
        layers.push(LayerRecord {
            layer_index: 1,
            reflection_prompt: Some(prompt_text),
            model_output: result.text,
            extracted: candidate.map(|c| c.canonical().to_string()),
            verdict,
            usage: result.usage,
            meta_prompt_fallback: false,
        });
        Ok(())
    }

    fn run_reflection_loop(
        &self,
        question: &Question,
        provider: &dyn Provider,
        layers: &mut Vec<LayerRecord>,
    ) -> Result<(), EngineError> {
        for layer_index in 1..=self.config.spec.max_layers {
            let meta_bundle = self.forge.meta_prompt(question, layers)?;
            let meta_result =
                provider.complete(&question.id, &meta_bundle, &self.config.decoding)?;
            let generated = meta_result.text.trim().to_string();
            let prior = layers.last().expect("prior layer").model_output.clone();
            // Degenerate meta output falls back to the static template so
            // an engine-side hiccup is not scored as a reasoning failure.
            let (reflection_bundle, prompt_text, fallback) = if generated.is_empty() {
                let bundle = self.forge.static_reflection(question, &prior);
                let text = bundle.user.clone();
                (bundle, text, true)
            } else {
                let bundle = self
                    .forge
                    .reflection_from_generated(question, &generated, &prior)?;
                (bundle, generated, false)
            };
            let result =
                provider.complete(&question.id, &reflection_bundle, &self.config.decoding)?;
            let (candidate, verdict) = codec::judge(&result.text, &question.gold, question.variant);
            layers.push(LayerRecord {
                layer_index,
                reflection_prompt: Some(prompt_text),
                model_output: result.text,
                extracted: candidate.map(|c| c.canonical().to_string()),
                verdict,
                usage: meta_result.usage + result.usage,
                meta_prompt_fallback: fallback,
            });
            if verdict.is_correct() {
                break;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::normalize;
    use crate::domain::{validate_trace, DatasetVariant, TokenUsage, Verdict};
    use crate::prompt::{builtin_gsm_exemplars, PromptPurpose};
    use crate::provider::{ScriptedCall, ScriptedProvider};

    fn question() -> Question {
        Question {
            id: "q1".to_string(),
            body: "A caterer needs 56 bowls. The pantry holds 24 bowls but 6 are chipped. \
                   A supplier delivers 24 more. How many bowls are still missing?"
                .to_string(),
            gold: normalize("14").unwrap(),
            dataset: "test".to_string(),
            variant: DatasetVariant::Gsm8k,
        }
    }

    /// Script for the canonical two-cycle recovery: wrong at layer 0,
    /// wrong after the first reflection, right after the second.
    fn recovery_script() -> Vec<ScriptedCall> {
        vec![
            ScriptedCall::new(
                "24 - 6 = 18, 24 + 18 = 42 minus... the answer is 7. #### 7",
                500,
                120,
            ),
            ScriptedCall::new("Check whether the chipped bowls were subtracted.", 700, 60),
            ScriptedCall::new("Re-checking: still 7. #### 7", 800, 110),
            ScriptedCall::new(
                "List each bowl source separately before subtracting.",
                900,
                70,
            ),
            ScriptedCall::new("56 - (24 - 6 + 24) = 56 - 42 = 14. #### 14", 1000, 130),
        ]
    }

    fn maps_engine(max_layers: u32) -> Engine {
        Engine::new(
            PromptForge::with_builtin(),
            EngineConfig::new(StrategySpec::maps(max_layers, builtin_gsm_exemplars())),
        )
    }

    #[test]
    fn two_cycle_recovery_trajectory() {
        let provider = ScriptedProvider::new("m").script("q1", recovery_script());
        let trace = maps_engine(3)
            .run_attempt(&question(), &provider, 0)
            .unwrap();
        assert_eq!(trace.layers.len(), 3);
        let verdicts: Vec<Verdict> = trace.layers.iter().map(|l| l.verdict).collect();
        assert_eq!(
            verdicts,
            vec![Verdict::Incorrect, Verdict::Incorrect, Verdict::Correct]
        );
        assert_eq!(trace.final_verdict, Verdict::Correct);
        assert_eq!(trace.reflections_executed(), 2);
        assert_eq!(provider.total_calls(), 5);
        assert_eq!(
            provider_call_count(&trace.strategy, trace.reflections_executed() as u32),
            5
        );
        let purposes: Vec<PromptPurpose> =
            provider.invocations().iter().map(|i| i.purpose).collect();
        assert_eq!(
            purposes,
            vec![
                PromptPurpose::Initial,
                PromptPurpose::MetaPromptRequest,
                PromptPurpose::Reflection,
                PromptPurpose::MetaPromptRequest,
                PromptPurpose::Reflection,
            ]
        );
        assert!(validate_trace(&trace).is_empty());
        // layer 1 usage folds the meta call (700, 60) into the answer call
        assert_eq!(trace.layers[1].usage, TokenUsage::new(1500, 170));
        assert_eq!(trace.total_usage, TokenUsage::new(3900, 490));
        // generated prompts, not the static template, drive each layer
        assert_eq!(
            trace.layers[1].reflection_prompt.as_deref(),
            Some("Check whether the chipped bowls were subtracted.")
        );
        assert!(!trace.layers[1].meta_prompt_fallback);
    }

    #[test]
    fn cot_never_reflects() {
        let provider = ScriptedProvider::new("m").script("q1", recovery_script());
        let engine = Engine::new(
            PromptForge::with_builtin(),
            EngineConfig::new(StrategySpec::cot(builtin_gsm_exemplars())),
        );
        let trace = engine.run_attempt(&question(), &provider, 0).unwrap();
        assert_eq!(trace.layers.len(), 1);
        assert_eq!(trace.final_verdict, Verdict::Incorrect);
        assert_eq!(provider.total_calls(), 1);
        assert!(validate_trace(&trace).is_empty());
    }

    #[test]
    fn early_exit_skips_all_reflection() {
        let provider = ScriptedProvider::new("m").script(
            "q1",
            vec![ScriptedCall::new("56 - 42 = 14. #### 14", 500, 100)],
        );
        let trace = maps_engine(3)
            .run_attempt(&question(), &provider, 0)
            .unwrap();
        assert_eq!(trace.layers.len(), 1);
        assert_eq!(trace.final_verdict, Verdict::Correct);
        assert_eq!(provider.total_calls(), 1);
    }

    #[test]
    fn exhausted_layer_cap_ends_incorrect() {
        let wrong = ScriptedCall::new("the answer is 7. #### 7", 100, 40);
        let meta = ScriptedCall::new("Reconsider the subtraction.", 100, 20);
        let provider = ScriptedProvider::new("m").script(
            "q1",
            vec![
                wrong.clone(),
                meta.clone(),
                wrong.clone(),
                meta.clone(),
                wrong.clone(),
                meta.clone(),
                wrong.clone(),
            ],
        );
        let trace = maps_engine(3)
            .run_attempt(&question(), &provider, 0)
            .unwrap();
        assert_eq!(trace.layers.len(), 4);
        assert_eq!(trace.final_verdict, Verdict::Incorrect);
        assert_eq!(provider.total_calls(), 7);
        assert_eq!(provider_call_count(&trace.strategy, 3), 7);
        assert!(validate_trace(&trace).is_empty());
    }

    #[test]
    fn single_layer_cap_stops_even_when_wrong() {
        let provider = ScriptedProvider::new("m").script(
            "q1",
            vec![
                ScriptedCall::new("the answer is 7. #### 7", 100, 40),
                ScriptedCall::new("Reconsider the subtraction.", 100, 20),
                ScriptedCall::new("still 7. #### 7", 100, 40),
            ],
        );
        let trace = maps_engine(1)
            .run_attempt(&question(), &provider, 0)
            .unwrap();
        assert_eq!(trace.layers.len(), 2);
        assert_eq!(trace.final_verdict, Verdict::Incorrect);
        assert_eq!(provider.total_calls(), 3);
    }

    #[test]
    fn sr_runs_exactly_one_static_reflection() {
        let provider = ScriptedProvider::new("m").script(
            "q1",
            vec![
                ScriptedCall::new("the answer is 7. #### 7", 100, 40),
                ScriptedCall::new("corrected: 56 - 42 = 14. #### 14", 150, 50),
            ],
        );
        let engine = Engine::new(
            PromptForge::with_builtin(),
            EngineConfig::new(StrategySpec::sr(builtin_gsm_exemplars())),
        );
        let trace = engine.run_attempt(&question(), &provider, 0).unwrap();
        assert_eq!(trace.layers.len(), 2);
        assert_eq!(trace.final_verdict, Verdict::Correct);
        assert_eq!(provider.total_calls(), 2);
        assert_eq!(provider_call_count(&trace.strategy, 1), 2);
        // sr records the instantiated static template as its prompt
        let prompt = trace.layers[1].reflection_prompt.as_deref().unwrap();
        assert!(prompt.contains("Review your previous solution"));
        assert!(validate_trace(&trace).is_empty());
    }

    #[test]
    fn empty_meta_output_falls_back_to_static_template() {
        let provider = ScriptedProvider::new("m").script(
            "q1",
            vec![
                ScriptedCall::new("the answer is 7. #### 7", 100, 40),
                ScriptedCall::new("   ", 100, 0),
                ScriptedCall::new("56 - 42 = 14. #### 14", 150, 50),
            ],
        );
        let trace = maps_engine(3)
            .run_attempt(&question(), &provider, 0)
            .unwrap();
        assert_eq!(trace.layers.len(), 2);
        assert_eq!(trace.final_verdict, Verdict::Correct);
        assert!(trace.layers[1].meta_prompt_fallback);
        let prompt = trace.layers[1].reflection_prompt.as_deref().unwrap();
        assert!(prompt.contains("Review your previous solution"));
        // meta usage still counted even though its text was discarded
        assert_eq!(trace.layers[1].usage, TokenUsage::new(250, 50));
        assert!(validate_trace(&trace).is_empty());
    }

    #[test]
    fn unparseable_output_continues_like_incorrect() {
        let provider = ScriptedProvider::new("m").script(
            "q1",
            vec![
                ScriptedCall::new("no idea", 100, 10),
                ScriptedCall::new("Try extracting the quantities first.", 100, 20),
                ScriptedCall::new("56 - 42 = 14. #### 14", 150, 50),
            ],
        );
        let trace = maps_engine(3)
            .run_attempt(&question(), &provider, 0)
            .unwrap();
        assert_eq!(trace.layers[0].verdict, Verdict::Unparseable);
        assert!(trace.layers[0].extracted.is_none());
        assert_eq!(trace.final_verdict, Verdict::Correct);
        assert!(validate_trace(&trace).is_empty());
    }

    #[test]
    fn identical_scripts_yield_identical_traces() {
        let run = || {
            let provider = ScriptedProvider::new("m").script("q1", recovery_script());
            maps_engine(3)
                .run_attempt(&question(), &provider, 0)
                .unwrap()
        };
        let a = serde_json::to_string(&run()).unwrap();
        let b = serde_json::to_string(&run()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn provider_failure_aborts_the_attempt() {
        let provider = ScriptedProvider::new("m"); // no scripts at all
        let err = maps_engine(3)
            .run_attempt(&question(), &provider, 0)
            .unwrap_err();
        assert!(matches!(err, EngineError::Provider(_)));
    }

    #[test]
    fn call_count_formula() {
        assert_eq!(provider_call_count(&StrategySpec::cot(Vec::new()), 0), 1);
        assert_eq!(provider_call_count(&StrategySpec::baseline(), 0), 1);
        assert_eq!(provider_call_count(&StrategySpec::sr(Vec::new()), 1), 2);
        assert_eq!(
            provider_call_count(&StrategySpec::maps(3, Vec::new()), 2),
            5
        );
        assert_eq!(
            provider_call_count(&StrategySpec::maps(3, Vec::new()), 3),
            7
        );
    }
}
