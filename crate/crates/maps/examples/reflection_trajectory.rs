//! One multi-layer reflection attempt, step by step: wrong answer, model-
//! written reflection prompt, wrong again, second reflection, correct, stop.

use maps::codec::normalize;
use maps::domain::{DatasetVariant, Question, StrategySpec};
use maps::engine::{provider_call_count, Engine, EngineConfig};
use maps::prompt::{builtin_gsm_exemplars, PromptForge};
use maps::provider::{ScriptedCall, ScriptedProvider};

fn main() {
    let question = Question {
        id: "q1".to_string(),
        body: "A pot holds 2 liters. How many liters do 7 pots hold?".to_string(),
        gold: normalize("14").expect("gold"),
        dataset: "gsm8k".to_string(),
        variant: DatasetVariant::Gsm8k,
    };

    // Call order for a layered attempt: solve, then for each reflection
    // layer a meta-prompt call (the model writes its own reflection prompt)
    // followed by a re-solve call under that prompt.
    let provider = ScriptedProvider::new("demo-model").script(
        "q1",
        vec![
            ScriptedCall::new("7 pots of 2 liters... 7 + 2 = 9? No, 7. #### 7", 120, 40),
            ScriptedCall::new(
                "You confused addition with multiplication. Re-read which \
                 quantity repeats, multiply capacity by count, and verify \
                 the units of the result.",
                200,
                60,
            ),
            ScriptedCall::new(
                "Capacity repeats per pot, but I still get 7. #### 7",
                260,
                50,
            ),
            ScriptedCall::new(
                "List the quantity per container and the number of \
                 containers separately before combining them.",
                320,
                55,
            ),
            ScriptedCall::new("2 liters per pot, 7 pots: 2 * 7 = 14. #### 14", 380, 45),
        ],
    );

    let spec = StrategySpec::maps(3, builtin_gsm_exemplars());
    let engine = Engine::new(PromptForge::with_builtin(), EngineConfig::new(spec.clone()));
    let trace = engine
        .run_attempt(&question, &provider, 0)
        .expect("scripted attempt");

    println!(
        "strategy {}: worst case {} provider calls, early exit on correct\n",
        spec.label(),
        provider_call_count(&spec, spec.max_layers),
    );
    for layer in &trace.layers {
        println!("layer {} ({}):", layer.layer_index, layer.verdict.as_str());
        if let Some(prompt) = &layer.reflection_prompt {
            println!("  reflection prompt: {prompt}");
        }
        println!("  output:    {}", layer.model_output);
        println!(
            "  extracted: {:?}, tokens {}+{}",
            layer.extracted, layer.usage.prompt_tokens, layer.usage.completion_tokens
        );
    }
    println!(
        "\nfinal verdict {} after {} layers, {} provider calls, {} tokens total",
        trace.final_verdict.as_str(),
        trace.layers.len(),
        provider.total_calls(),
        trace.total_usage.total(),
    );
}
