//! Prompt construction: initial passes, static reflection, meta-prompt
//! requests, and reflection passes built from generated prompts.
//!
//! Templates are versioned data files embedded at build time. Placeholder
//! substitution happens in a single pass over the template, so placeholder
//! syntax inside substituted values is never expanded.

use once_cell::sync::Lazy;
use regex::{Captures, Regex};

use crate::domain::{DatasetFamily, DatasetVariant, Exemplar, LayerRecord, Question, StrategySpec};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("strategy spec invalid for this dataset: {0}")]
    BadSpec(String),
    #[error("meta-prompt requires a non-empty attempt history")]
    EmptyHistory,
    #[error("generated reflection text is empty")]
    EmptyReflection,
    #[error("unknown template version {0:?} (available: v1)")]
    UnknownTemplateVersion(String),
    #[error("bad exemplar file: {0}")]
    BadExemplars(String),
}

/// Which stage of the strategy loop a prompt serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptPurpose {
    Initial,
    MetaPromptRequest,
    Reflection,
}

/// One ready-to-send prompt. Messages are user-only by default; the system
/// slot exists for wire fidelity but stays empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub system: Option<String>,
    pub user: String,
    pub purpose: PromptPurpose,
}

const STEP_BY_STEP: &str = "Let's think step by step.";
const FORMAT_GSM: &str =
    "End your reply with the final answer on its own line in the form: #### <answer>";
const FORMAT_BOXED: &str =
    "End your reply with the final answer in boxed notation: \\boxed{<answer>}";

/// Answer-format directive for reflection prompts on this dataset.
pub fn format_instruction(variant: DatasetVariant) -> &'static str {
    match variant.family() {
        DatasetFamily::Gsm => FORMAT_GSM,
        DatasetFamily::Aime | DatasetFamily::Math => FORMAT_BOXED,
    }
}

/// A pinned set of prompt templates. Experiments record the version so a
/// run can be reproduced against the exact prompt text that produced it.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    version: String,
    meta_prompt: String,
    static_reflection: String,
}

impl TemplateSet {
    pub const DEFAULT_VERSION: &'static str = "v1";

    /// Loads an embedded template version. Only `v1` ships.
    pub fn builtin(version: &str) -> Result<TemplateSet, PromptError> {
        match version {
            "v1" => Ok(TemplateSet {
                version: "v1".to_string(),
                meta_prompt: include_str!("templates/meta_prompt_v1.txt").to_string(),
                static_reflection: include_str!("templates/static_reflection_v1.txt").to_string(),
            }),
            other => Err(PromptError::UnknownTemplateVersion(other.to_string())),
        }
    }

    pub fn version(&self) -> &str {
        &self.version
    }
}

static EXEMPLARS_GSM8K_V1: &str = include_str!("templates/exemplars_gsm8k_v1.jsonl");

static BUILTIN_EXEMPLARS: Lazy<Vec<Exemplar>> = Lazy::new(|| {
    parse_exemplar_lines(EXEMPLARS_GSM8K_V1).expect("embedded exemplar file is well-formed")
});

/// The eight standard grade-school worked examples used for few-shot
/// prompting on GSM-family datasets.
pub fn builtin_gsm_exemplars() -> Vec<Exemplar> {
    BUILTIN_EXEMPLARS.clone()
}

/// Parses a line-delimited exemplar file: one `{"problem", "solution"}`
/// record per non-empty line.
pub fn parse_exemplar_lines(text: &str) -> Result<Vec<Exemplar>, PromptError> {
    let mut exemplars = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let exemplar: Exemplar = serde_json::from_str(line)
            .map_err(|e| PromptError::BadExemplars(format!("line {}: {e}", idx + 1)))?;
        exemplars.push(exemplar);
    }
    if exemplars.is_empty() {
        return Err(PromptError::BadExemplars("no records".to_string()));
    }
    Ok(exemplars)
}

static PLACEHOLDER: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"\{(question|history|prior_output|format_instruction)\}").unwrap());

/// Single-pass placeholder fill: scans only the original template, so a
/// `{placeholder}` occurring inside a substituted value stays literal.
fn fill(template: &str, bindings: &[(&str, &str)]) -> String {
    PLACEHOLDER
        .replace_all(template, |caps: &Captures<'_>| {
            let name = caps.get(1).expect("group 1").as_str();
            bindings
                .iter()
                .find(|(key, _)| *key == name)
                .map(|(_, value)| (*value).to_string())
                .unwrap_or_else(|| caps.get(0).expect("whole match").as_str().to_string())
        })
        .into_owned()
}

/// Builds every prompt shape from one pinned template set. All builders
/// are pure: identical inputs produce byte-identical bundles.
#[derive(Debug, Clone)]
pub struct PromptForge {
    templates: TemplateSet,
}

impl PromptForge {
    pub fn new(templates: TemplateSet) -> PromptForge {
        PromptForge { templates }
    }

    pub fn with_builtin() -> PromptForge {
        PromptForge::new(TemplateSet::builtin(TemplateSet::DEFAULT_VERSION).expect("v1 ships"))
    }

    pub fn template_version(&self) -> &str {
        self.templates.version()
    }

    /// First-pass prompt. Baseline sends the bare problem (plus the boxed
    /// directive when requested); reasoning strategies send the eight
    /// exemplars on GSM-family datasets or a step-by-step directive with
    /// boxed output elsewhere.
    pub fn initial(
        &self,
        question: &Question,
        spec: &StrategySpec,
    ) -> Result<PromptBundle, PromptError> {
        let violations = spec.validate(question.variant);
        if !violations.is_empty() {
            return Err(PromptError::BadSpec(violations.join("; ")));
        }
        let user = match spec.kind {
            crate::domain::StrategyKind::Baseline => {
                if spec.boxed_output {
                    format!("{}\n\n{FORMAT_BOXED}", question.body)
                } else {
                    question.body.clone()
                }
            }
            _ => match question.variant.family() {
                DatasetFamily::Gsm => {
                    let mut user = String::new();
                    for exemplar in &spec.exemplars {
                        user.push_str("Problem: ");
                        user.push_str(&exemplar.problem);
                        user.push_str("\nSolution: ");
                        user.push_str(&exemplar.solution);
                        user.push_str("\n\n");
                    }
                    user.push_str("Problem: ");
                    user.push_str(&question.body);
                    user.push_str("\nSolution: ");
                    user.push_str(STEP_BY_STEP);
                    user
                }
                DatasetFamily::Aime | DatasetFamily::Math => format!(
                    "Solve the following problem. Think step by step and explain your \
                     reasoning. {FORMAT_BOXED}\n\nProblem:\n{}",
                    question.body
                ),
            },
        };
        Ok(PromptBundle {
            system: None,
            user,
            purpose: PromptPurpose::Initial,
        })
    }

    /// Fixed-template reflection pass: review the prior solution and
    /// re-solve. Also serves as the fallback when a meta-prompt call
    /// returns empty text.
    pub fn static_reflection(&self, question: &Question, prior_output: &str) -> PromptBundle {
        let user = fill(
            &self.templates.static_reflection,
            &[
                ("question", question.body.as_str()),
                ("prior_output", prior_output),
                ("format_instruction", format_instruction(question.variant)),
            ],
        );
        PromptBundle {
            system: None,
            user,
            purpose: PromptPurpose::Reflection,
        }
    }

    /// Asks the model to write a reflection prompt tailored to the failed
    /// attempts so far. The bundle embeds the question, every prior
    /// attempt, and each attempt's extracted answer.
    pub fn meta_prompt(
        &self,
        question: &Question,
        history: &[LayerRecord],
    ) -> Result<PromptBundle, PromptError> {
        if history.is_empty() {
            return Err(PromptError::EmptyHistory);
        }
        let mut rendered = String::new();
        for (idx, layer) in history.iter().enumerate() {
            rendered.push_str(&format!("Attempt {}:\n", idx + 1));
            rendered.push_str(&layer.model_output);
            rendered.push_str("\nExtracted answer: ");
            rendered.push_str(layer.extracted.as_deref().unwrap_or("(none)"));
            rendered.push_str("\n\n");
        }
        let user = fill(
            &self.templates.meta_prompt,
            &[
                ("question", question.body.as_str()),
                ("history", rendered.trim_end()),
            ],
        );
        Ok(PromptBundle {
            system: None,
            user,
            purpose: PromptPurpose::MetaPromptRequest,
        })
    }

    /// Wraps a model-generated reflection prompt into the actual
    /// re-answer request: generated text, then the problem, then the
    /// prior output, then the dataset's answer-format directive.
    pub fn reflection_from_generated(
        &self,
        question: &Question,
        generated_reflection: &str,
        prior_output: &str,
    ) -> Result<PromptBundle, PromptError> {
        if generated_reflection.trim().is_empty() {
            return Err(PromptError::EmptyReflection);
        }
        let user = format!(
            "{generated_reflection}\n\nProblem:\n{}\n\nYour previous attempt:\n{prior_output}\n\n{}",
            question.body,
            format_instruction(question.variant),
        );
        Ok(PromptBundle {
            system: None,
            user,
            purpose: PromptPurpose::Reflection,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::normalize;
    use crate::domain::{TokenUsage, Verdict};

    fn question(variant: DatasetVariant) -> Question {
        Question {
            id: "q1".to_string(),
            body: "A caterer needs 56 bowls. The pantry holds 24 bowls but 6 are chipped. \
                   A supplier delivers 24 more. How many bowls are still missing?"
                .to_string(),
            gold: normalize("14").unwrap(),
            dataset: "test".to_string(),
            variant,
        }
    }

    fn wrong_layer(index: u32, output: &str, extracted: &str) -> LayerRecord {
        LayerRecord {
            layer_index: index,
            reflection_prompt: (index > 0).then(|| "prior reflection".to_string()),
            model_output: output.to_string(),
            extracted: Some(extracted.to_string()),
            verdict: Verdict::Incorrect,
            usage: TokenUsage::new(10, 10),
            meta_prompt_fallback: false,
        }
    }

    #[test]
    fn baseline_is_the_bare_problem() {
        let forge = PromptForge::with_builtin();
        let q = question(DatasetVariant::Gsm8k);
        let bundle = forge.initial(&q, &StrategySpec::baseline()).unwrap();
        assert_eq!(bundle.user, q.body);
        assert_eq!(bundle.purpose, PromptPurpose::Initial);
        assert!(bundle.system.is_none());
    }

    #[test]
    fn baseline_boxed_appends_only_the_format_directive() {
        let forge = PromptForge::with_builtin();
        let q = question(DatasetVariant::Math500);
        let mut spec = StrategySpec::baseline();
        spec.boxed_output = true;
        let bundle = forge.initial(&q, &spec).unwrap();
        assert!(bundle.user.starts_with(&q.body));
        assert!(bundle.user.contains("\\boxed{<answer>}"));
    }

    #[test]
    fn cot_prompt_carries_all_exemplars_in_order() {
        let forge = PromptForge::with_builtin();
        let q = question(DatasetVariant::Gsm8k);
        let exemplars = builtin_gsm_exemplars();
        let spec = StrategySpec::cot(exemplars.clone());
        let bundle = forge.initial(&q, &spec).unwrap();
        let mut cursor = 0;
        for exemplar in &exemplars {
            let pos = bundle.user[cursor..]
                .find(&exemplar.problem)
                .expect("exemplar present in order");
            cursor += pos;
        }
        assert!(bundle.user[cursor..].contains(&q.body));
        assert!(bundle.user.ends_with(STEP_BY_STEP));
    }

    #[test]
    fn cot_on_boxed_datasets_uses_no_exemplars() {
        let forge = PromptForge::with_builtin();
        let q = question(DatasetVariant::Aime2025);
        let mut spec = StrategySpec::cot(Vec::new());
        spec.boxed_output = true;
        let bundle = forge.initial(&q, &spec).unwrap();
        assert!(bundle.user.contains("step by step"));
        assert!(bundle.user.contains("\\boxed{<answer>}"));
        assert!(bundle.user.contains(&q.body));
    }

    #[test]
    fn exemplar_count_mismatch_is_rejected() {
        let forge = PromptForge::with_builtin();
        let q = question(DatasetVariant::Gsm8k);
        let err = forge
            .initial(&q, &StrategySpec::cot(Vec::new()))
            .unwrap_err();
        assert!(matches!(err, PromptError::BadSpec(_)));
    }

    #[test]
    fn static_reflection_embeds_prior_output_verbatim() {
        let forge = PromptForge::with_builtin();
        let q = question(DatasetVariant::Gsm8k);
        let long_output = "step ".repeat(2000);
        let bundle = forge.static_reflection(&q, &long_output);
        assert!(bundle.user.contains(&q.body));
        assert!(bundle.user.contains(&long_output));
        assert!(bundle.user.contains(FORMAT_GSM));
        let again = forge.static_reflection(&q, &long_output);
        assert_eq!(bundle, again);
    }

    #[test]
    fn meta_prompt_embeds_every_prior_answer() {
        let forge = PromptForge::with_builtin();
        let q = question(DatasetVariant::Gsm8k);
        let history = vec![
            wrong_layer(0, "the total is 7. #### 7", "7"),
            wrong_layer(1, "still 7 after review. #### 7", "7"),
        ];
        let bundle = forge.meta_prompt(&q, &history[..1]).unwrap();
        assert_eq!(bundle.purpose, PromptPurpose::MetaPromptRequest);
        assert!(bundle.user.contains("Extracted answer: 7"));
        let bundle2 = forge.meta_prompt(&q, &history).unwrap();
        assert!(bundle2.user.contains("Attempt 1:"));
        assert!(bundle2.user.contains("Attempt 2:"));
        assert_ne!(bundle.user, bundle2.user);
        assert!(forge.meta_prompt(&q, &[]).is_err());
    }

    #[test]
    fn reflection_from_generated_orders_its_parts() {
        let forge = PromptForge::with_builtin();
        let q = question(DatasetVariant::Gsm8k);
        let generated = "Check the chipped bowls before adding deliveries.";
        let prior = "the total is 7. #### 7";
        let bundle = forge
            .reflection_from_generated(&q, generated, prior)
            .unwrap();
        let g = bundle.user.find(generated).unwrap();
        let b = bundle.user.find(&q.body).unwrap();
        let p = bundle.user.find(prior).unwrap();
        let f = bundle.user.find(FORMAT_GSM).unwrap();
        assert!(g < b && b < p && p < f);
        assert!(forge.reflection_from_generated(&q, "  ", prior).is_err());
    }

    #[test]
    fn substituted_values_are_not_rescanned_for_placeholders() {
        let forge = PromptForge::with_builtin();
        let mut q = question(DatasetVariant::Gsm8k);
        q.body = "tricky {history} inside the question".to_string();
        let history = vec![wrong_layer(0, "answer 3. #### 3", "3")];
        let bundle = forge.meta_prompt(&q, &history).unwrap();
        assert!(bundle.user.contains("tricky {history} inside the question"));
        assert!(bundle.user.contains("Extracted answer: 3"));
    }

    #[test]
    fn builtin_exemplars_are_the_standard_eight() {
        let exemplars = builtin_gsm_exemplars();
        assert_eq!(exemplars.len(), 8);
        assert!(exemplars[0].problem.contains("15 trees"));
        assert!(exemplars[7].solution.ends_with("#### 8"));
    }

    #[test]
    fn unknown_template_version_is_rejected() {
        assert!(matches!(
            TemplateSet::builtin("v999"),
            Err(PromptError::UnknownTemplateVersion(_))
        ));
    }
}
