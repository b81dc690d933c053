//! Four strategies attempt the same failing question: direct prompting and
//! chain-of-thought stop at the wrong answer, static reflection retries
//! once with a fixed prompt, and layered auto-prompted reflection keeps
//! going until the answer checks out or the layer cap is hit.

use maps::analytics::accuracy;
use maps::codec::normalize;
use maps::domain::{DatasetVariant, Question, StrategySpec};
use maps::engine::{Engine, EngineConfig};
use maps::prompt::{builtin_gsm_exemplars, PromptForge};
use maps::provider::{ScriptedCall, ScriptedProvider};

fn question() -> Question {
    Question {
        id: "q1".to_string(),
        body: "A tray holds 6 eggs. How many eggs do 4 trays hold?".to_string(),
        gold: normalize("24").expect("gold"),
        dataset: "gsm8k".to_string(),
        variant: DatasetVariant::Gsm8k,
    }
}

/// Fresh provider per attempt, scripted for exactly the calls that
/// strategy makes. The model starts from the same wrong answer everywhere;
/// only the deepest reflection chain digs its way out.
fn provider_for(spec: &StrategySpec) -> ScriptedProvider {
    let wrong = || ScriptedCall::new("6 eggs and 4 trays make 10. #### 10", 100, 30);
    let meta_1 = || {
        ScriptedCall::new(
            "You added count and capacity. Multiply eggs per tray by trays.",
            150,
            40,
        )
    };
    let calls = match spec.label().as_str() {
        // one call, no second chance
        "baseline" | "cot" => vec![wrong()],
        // fixed retry prompt, same mistake again
        "sr" => vec![
            wrong(),
            ScriptedCall::new("Rethinking... still 10. #### 10", 150, 30),
        ],
        // meta-prompt call plus one reflection, not enough here
        "maps_1l" => vec![
            wrong(),
            meta_1(),
            ScriptedCall::new("Even multiplying, I land on 10. #### 10", 180, 30),
        ],
        // two reflection layers: wrong, coached, wrong, coached, right
        _ => vec![
            wrong(),
            meta_1(),
            ScriptedCall::new("Even multiplying, I land on 10. #### 10", 180, 30),
            ScriptedCall::new(
                "Write the repeated quantity as a product before answering.",
                210,
                40,
            ),
            ScriptedCall::new("6 per tray times 4 trays: \\boxed{24}... #### 24", 240, 35),
        ],
    };
    ScriptedProvider::new("demo-model").script("q1", calls)
}

fn main() {
    let exemplars = builtin_gsm_exemplars();
    let strategies = [
        StrategySpec::baseline(),
        StrategySpec::cot(exemplars.clone()),
        StrategySpec::sr(exemplars.clone()),
        StrategySpec::maps(1, exemplars.clone()),
        StrategySpec::maps(3, exemplars.clone()),
    ];

    println!(
        "{:<10} {:>6} {:>6} {:>7}  verdicts",
        "strategy", "layers", "calls", "tokens"
    );
    for spec in strategies {
        let engine = Engine::new(PromptForge::with_builtin(), EngineConfig::new(spec.clone()));
        let provider = provider_for(&spec);
        let trace = engine
            .run_attempt(&question(), &provider, 0)
            .expect("attempt");
        let verdicts: Vec<&str> = trace.layers.iter().map(|l| l.verdict.as_str()).collect();
        println!(
            "{:<10} {:>6} {:>6} {:>7}  [{}]",
            spec.label(),
            trace.layers.len(),
            provider.total_calls(),
            trace.total_usage.total(),
            verdicts.join(", ")
        );
    }

    // over a batch, the verdict lists roll up into accuracy numbers
    use maps::domain::Verdict::{Correct, Incorrect, Unparseable};
    let batch = [Correct, Correct, Incorrect, Correct, Unparseable];
    println!(
        "\naccuracy over {:?}: {:.3} (unparseable counts against the total)",
        batch.map(|v| v.as_str()),
        accuracy(&batch).expect("accuracy")
    );
}
