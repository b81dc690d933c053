//! The three prompt shapes behind a reflection layer: the initial
//! chain-of-thought prompt, the meta-prompt that asks the model to write a
//! reflection prompt, and the reflection prompt assembled from its output.

use maps::codec::normalize;
use maps::domain::{DatasetVariant, LayerRecord, Question, StrategySpec, TokenUsage, Verdict};
use maps::prompt::{builtin_gsm_exemplars, PromptForge};

fn main() {
    let forge = PromptForge::with_builtin();
    let question = Question {
        id: "q1".to_string(),
        body: "A loaf needs 3 cups of flour. How many cups do 5 loaves need?".to_string(),
        gold: normalize("15").expect("gold"),
        dataset: "gsm8k".to_string(),
        variant: DatasetVariant::Gsm8k,
    };

    let spec = StrategySpec::maps(2, builtin_gsm_exemplars());
    let initial = forge.initial(&question, &spec).expect("initial prompt");
    println!(
        "== initial prompt (template {}) ==",
        forge.template_version()
    );
    println!("{}\n", initial.user);

    // pretend layer 0 went wrong; the meta-prompt feeds that history back
    let failed = LayerRecord {
        layer_index: 0,
        reflection_prompt: None,
        model_output: "5 loaves plus 3 cups is 8. #### 8".to_string(),
        extracted: Some("8".to_string()),
        verdict: Verdict::Incorrect,
        usage: TokenUsage::new(100, 20),
        meta_prompt_fallback: false,
    };
    let meta = forge
        .meta_prompt(&question, std::slice::from_ref(&failed))
        .expect("meta prompt");
    println!("== meta-prompt (model is asked to write a reflection prompt) ==");
    println!("{}\n", meta.user);

    // whatever the model writes becomes the next layer's instruction
    let generated = "Check whether the problem repeats a quantity per item. \
                     If so, multiply instead of adding, then re-verify.";
    let reflection = forge
        .reflection_from_generated(&question, generated, &failed.model_output)
        .expect("reflection prompt");
    println!("== reflection prompt (generated instruction + problem + prior attempt) ==");
    println!("{}", reflection.user);
}
