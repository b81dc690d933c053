//! Shared vocabulary: questions, answers, strategies, traces, and usage.

use num::BigRational;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::money::Money;

/// Benchmark variant a question belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetVariant {
    Gsm8k,
    SymbolicMain,
    SymbolicP1,
    SymbolicP2,
    #[serde(rename = "aime_2025")]
    Aime2025,
    #[serde(rename = "math_500")]
    Math500,
}

/// Answer-format family: drives extraction rules and prompt shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFamily {
    /// GSM8K and its symbolic variants: integer word problems, `#### n` golds.
    Gsm,
    /// AIME: integer answers in 0..=999, boxed output.
    Aime,
    /// MATH-500: free-form expressions, boxed output.
    Math,
}

impl DatasetVariant {
    pub const ALL: [DatasetVariant; 6] = [
        DatasetVariant::Gsm8k,
        DatasetVariant::SymbolicMain,
        DatasetVariant::SymbolicP1,
        DatasetVariant::SymbolicP2,
        DatasetVariant::Aime2025,
        DatasetVariant::Math500,
    ];

    pub fn family(self) -> DatasetFamily {
        match self {
            DatasetVariant::Gsm8k
            | DatasetVariant::SymbolicMain
            | DatasetVariant::SymbolicP1
            | DatasetVariant::SymbolicP2 => DatasetFamily::Gsm,
            DatasetVariant::Aime2025 => DatasetFamily::Aime,
            DatasetVariant::Math500 => DatasetFamily::Math,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetVariant::Gsm8k => "gsm8k",
            DatasetVariant::SymbolicMain => "symbolic_main",
            DatasetVariant::SymbolicP1 => "symbolic_p1",
            DatasetVariant::SymbolicP2 => "symbolic_p2",
            DatasetVariant::Aime2025 => "aime_2025",
            DatasetVariant::Math500 => "math_500",
        }
    }

    pub fn parse(s: &str) -> Option<DatasetVariant> {
        DatasetVariant::ALL.into_iter().find(|v| v.as_str() == s)
    }
}

impl std::fmt::Display for DatasetVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A normalized reference answer: canonical display string plus, when the
/// answer is numeric, its exact rational value. Construction goes through
/// [`crate::codec::normalize`], which guarantees the canonical string
/// renders the rational in reduced form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldAnswer {
    canonical: String,
    numeric: Option<BigRational>,
}

impl GoldAnswer {
    /// Directly assembles a gold answer. Callers outside the codec should
    /// prefer [`crate::codec::normalize`], which enforces canonical form.
    pub(crate) fn from_parts(canonical: String, numeric: Option<BigRational>) -> GoldAnswer {
        GoldAnswer { canonical, numeric }
    }

    pub fn canonical(&self) -> &str {
        &self.canonical
    }

    pub fn numeric(&self) -> Option<&BigRational> {
        self.numeric.as_ref()
    }
}

impl Serialize for GoldAnswer {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.canonical)
    }
}

impl<'de> Deserialize<'de> for GoldAnswer {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<GoldAnswer, D::Error> {
        // normalize is idempotent on canonical strings, so round-tripping
        // our own output is lossless; foreign strings get canonicalized.
        let s = String::deserialize(deserializer)?;
        crate::codec::normalize(&s).map_err(serde::de::Error::custom)
    }
}

/// One benchmark item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub body: String,
    pub gold: GoldAnswer,
    pub dataset: String,
    pub variant: DatasetVariant,
}

/// Prompting method under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Bare question, no reasoning elicitation, no reflection.
    Baseline,
    /// Few-shot chain-of-thought, no reflection.
    Cot,
    /// Chain-of-thought plus one fixed-template reflection pass.
    Sr,
    /// Chain-of-thought plus up to `max_layers` auto-prompted reflection
    /// cycles, each preceded by a meta-prompt call that generates the
    /// reflection prompt.
    Maps,
}

impl StrategyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Baseline => "baseline",
            StrategyKind::Cot => "cot",
            StrategyKind::Sr => "sr",
            StrategyKind::Maps => "maps",
        }
    }
}

/// One few-shot exemplar: a worked problem/solution pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub problem: String,
    pub solution: String,
}

/// A strategy plus its parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    /// Reflection-layer cap: 0 for baseline/cot, 1 for sr, 1..=3 for maps.
    pub max_layers: u32,
    pub exemplars: Vec<Exemplar>,
    /// Ask for `\boxed{}` output instead of few-shot `#### n` style.
    pub boxed_output: bool,
}

impl StrategySpec {
    pub fn baseline() -> StrategySpec {
        StrategySpec {
            kind: StrategyKind::Baseline,
            max_layers: 0,
            exemplars: Vec::new(),
            boxed_output: false,
        }
    }

    pub fn cot(exemplars: Vec<Exemplar>) -> StrategySpec {
        StrategySpec {
            kind: StrategyKind::Cot,
            max_layers: 0,
            exemplars,
            boxed_output: false,
        }
    }

    pub fn sr(exemplars: Vec<Exemplar>) -> StrategySpec {
        StrategySpec {
            kind: StrategyKind::Sr,
            max_layers: 1,
            exemplars,
            boxed_output: false,
        }
    }

    pub fn maps(max_layers: u32, exemplars: Vec<Exemplar>) -> StrategySpec {
        StrategySpec {
            kind: StrategyKind::Maps,
            max_layers,
            exemplars,
            boxed_output: false,
        }
    }

    /// Stable short label for reports and log grouping, e.g. `maps_3l`.
    pub fn label(&self) -> String {
        match self.kind {
            StrategyKind::Maps => format!("maps_{}l", self.max_layers),
            other => other.as_str().to_string(),
        }
    }

    /// Checks this strategy's own shape: layer caps per kind, and the
    /// exemplar/boxed discipline for the given dataset variant
    /// (8 exemplars on GSM-family reasoning strategies, none elsewhere).
    pub fn validate(&self, variant: DatasetVariant) -> Vec<String> {
        let mut violations = Vec::new();
        match self.kind {
            StrategyKind::Baseline | StrategyKind::Cot => {
                if self.max_layers != 0 {
                    violations.push(format!(
                        "{} requires max_layers = 0, got {}",
                        self.kind.as_str(),
                        self.max_layers
                    ));
                }
            }
            StrategyKind::Sr => {
                if self.max_layers != 1 {
                    violations.push(format!(
                        "sr requires max_layers = 1, got {}",
                        self.max_layers
                    ));
                }
            }
            StrategyKind::Maps => {
                if !(1..=3).contains(&self.max_layers) {
                    violations.push(format!(
                        "maps requires 1 <= max_layers <= 3, got {}",
                        self.max_layers
                    ));
                }
            }
        }
        let reasoning = self.kind != StrategyKind::Baseline;
        match variant.family() {
            DatasetFamily::Gsm => {
                if reasoning && self.exemplars.len() != 8 {
                    violations.push(format!(
                        "{} on {} requires exactly 8 exemplars, got {}",
                        self.kind.as_str(),
                        variant,
                        self.exemplars.len()
                    ));
                }
            }
            DatasetFamily::Aime | DatasetFamily::Math => {
                if !self.exemplars.is_empty() {
                    violations.push(format!(
                        "{} requires 0 exemplars, got {}",
                        variant,
                        self.exemplars.len()
                    ));
                }
                if !self.boxed_output {
                    violations.push(format!("{variant} requires boxed_output = true"));
                }
            }
        }
        violations
    }

    /// Upper bound on trace length (initial pass + reflection layers).
    pub fn layer_cap(&self) -> usize {
        1 + self.max_layers as usize
    }
}

/// Outcome of scoring one layer's output against gold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Correct,
    Incorrect,
    /// No answer could be extracted. Counts as incorrect for accuracy but
    /// stays distinguishable in logs and reports.
    Unparseable,
}

impl Verdict {
    pub fn is_correct(self) -> bool {
        self == Verdict::Correct
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Correct => "correct",
            Verdict::Incorrect => "incorrect",
            Verdict::Unparseable => "unparseable",
        }
    }
}

/// Provider-reported token counts for one or more calls.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl TokenUsage {
    pub const ZERO: TokenUsage = TokenUsage {
        prompt_tokens: 0,
        completion_tokens: 0,
    };

    pub fn new(prompt_tokens: u64, completion_tokens: u64) -> TokenUsage {
        TokenUsage {
            prompt_tokens,
            completion_tokens,
        }
    }

    pub fn total(self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

impl std::ops::Add for TokenUsage {
    type Output = TokenUsage;
    fn add(self, rhs: TokenUsage) -> TokenUsage {
        TokenUsage {
            prompt_tokens: self.prompt_tokens + rhs.prompt_tokens,
            completion_tokens: self.completion_tokens + rhs.completion_tokens,
        }
    }
}

impl std::ops::AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: TokenUsage) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for TokenUsage {
    fn sum<I: Iterator<Item = TokenUsage>>(iter: I) -> TokenUsage {
        iter.fold(TokenUsage::ZERO, std::ops::Add::add)
    }
}

/// One pass of the strategy loop: the initial answer (layer 0) or one
/// reflection cycle. Meta-prompt-call usage is folded into the usage of the
/// layer it serves.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub layer_index: u32,
    /// Absent at layer 0; the static template's text for sr; the generated
    /// reflection prompt for maps.
    pub reflection_prompt: Option<String>,
    pub model_output: String,
    /// Canonical form of the extracted answer, when one was found.
    pub extracted: Option<String>,
    pub verdict: Verdict,
    pub usage: TokenUsage,
    /// True when a maps layer fell back to the static reflection template
    /// because the meta-prompt call returned empty text.
    #[serde(default)]
    pub meta_prompt_fallback: bool,
}

/// Full record of one strategy execution on one question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptTrace {
    pub question_id: String,
    pub strategy: StrategySpec,
    pub run_index: u32,
    pub layers: Vec<LayerRecord>,
    pub final_verdict: Verdict,
    pub total_usage: TokenUsage,
    pub total_cost_usd: Money,
}

impl AttemptTrace {
    /// Number of reflection layers actually executed (layers beyond 0).
    pub fn reflections_executed(&self) -> usize {
        self.layers.len().saturating_sub(1)
    }
}

/// Checks every trace invariant and reports violations as data.
/// Empty result means the trace is well-formed.
pub fn validate_trace(trace: &AttemptTrace) -> Vec<String> {
    let mut violations = Vec::new();
    if trace.layers.is_empty() {
        violations.push("empty layers".to_string());
        return violations;
    }
    for (position, layer) in trace.layers.iter().enumerate() {
        if layer.layer_index != position as u32 {
            violations.push(format!(
                "layer index {} at position {position}",
                layer.layer_index
            ));
        }
    }
    if trace.layers[0].reflection_prompt.is_some() {
        violations.push("reflection prompt at layer 0".to_string());
    }
    for layer in &trace.layers[1..] {
        if layer.reflection_prompt.is_none() {
            violations.push(format!(
                "missing reflection prompt at layer {}",
                layer.layer_index
            ));
        }
    }
    for layer in &trace.layers[..trace.layers.len() - 1] {
        if layer.verdict.is_correct() {
            violations.push("layer after correct verdict".to_string());
        }
    }
    let last = trace.layers.last().expect("non-empty");
    if trace.final_verdict != last.verdict {
        violations.push("final verdict mismatch".to_string());
    }
    for layer in &trace.layers {
        if layer.verdict.is_correct() && layer.extracted.is_none() {
            violations.push(format!(
                "correct verdict without extracted answer at layer {}",
                layer.layer_index
            ));
        }
    }
    let usage_sum: TokenUsage = trace.layers.iter().map(|l| l.usage).sum();
    if usage_sum != trace.total_usage {
        violations.push("usage sum mismatch".to_string());
    }
    let cap = match trace.strategy.kind {
        StrategyKind::Baseline | StrategyKind::Cot => 1,
        StrategyKind::Sr => 2,
        StrategyKind::Maps => trace.strategy.layer_cap(),
    };
    if trace.layers.len() > cap {
        violations.push(format!(
            "layer count {} exceeds strategy cap {cap}",
            trace.layers.len()
        ));
    }
    violations
}
