//! A complete offline experiment: declarative config, scripted provider,
//! resumable run log, and the audit manifest: no network, no spend.

use maps::config::ExperimentConfig;
use maps::orchestrator::{run_experiment, sample_manifest, RunOptions, LOG_FILE};
use maps::runlog::read_records;

const CONFIG: &str = r#"
output_dir = "out"
seed = 7
parallelism = 2
price_sheet = "prices.json"

[sample]
runs = 2
size = 3

[[corpora]]
dataset = "gsm8k"
variant = "gsm8k"
path = "corpus.jsonl"

[[models]]
id = "demo-model"
provider = "scripted"
script = "script.json"
repeat_last = true

[[strategies]]
kind = "cot"

[[strategies]]
kind = "maps"
max_layers = 2
"#;

fn main() {
    let dir = tempfile::tempdir().expect("tempdir");
    let base = dir.path();

    // corpus: six questions; the scripted model gets q3 and q6 wrong forever
    let corpus: String = (1..=6)
        .map(|i| {
            let n = i * 10;
            format!(
                "{{\"id\": \"q{i}\", \"question\": \"Shelf {i} holds {i} stacks of 10 plates. How many plates?\", \"answer\": \"{i} stacks of 10 is {n}. #### {n}\"}}\n"
            )
        })
        .collect();
    let script: String = {
        let entries: Vec<String> = (1..=6)
            .map(|i| {
                let n = i * 10;
                let answer = if i % 3 == 0 { n + 1 } else { n };
                format!(
                    "\"q{i}\": [{{\"text\": \"I count {answer}. #### {answer}\", \"usage\": {{\"prompt_tokens\": 100, \"completion_tokens\": 20}}}}]"
                )
            })
            .collect();
        format!("{{{}}}", entries.join(", "))
    };
    std::fs::write(base.join("corpus.jsonl"), corpus).unwrap();
    std::fs::write(base.join("script.json"), script).unwrap();
    std::fs::write(
        base.join("prices.json"),
        r#"{"demo-model": {"usd_per_1m_input": "0.15", "usd_per_1m_output": "0.60"}}"#,
    )
    .unwrap();

    let config = ExperimentConfig::from_toml_str(CONFIG, base).expect("config");

    // the audit manifest lists exactly which questions each run will use
    let manifest = sample_manifest(&config).expect("manifest");
    let gsm = &manifest.corpora[0];
    println!("seed {}: run 0 samples {:?}", manifest.seed, gsm.samples[0]);

    let summary = run_experiment(&config, &RunOptions::default()).expect("run");
    println!(
        "first pass: {} attempts executed ({} strategies x {} runs x {} questions)",
        summary.executed, 2, 2, 3
    );

    let records = read_records(&config.output_dir.join(LOG_FILE)).expect("log");
    for record in records.iter().take(3) {
        println!(
            "  {} {} run {} -> {} (cost {} usd)",
            record.trace.strategy.label(),
            record.trace.question_id,
            record.trace.run_index,
            record.trace.final_verdict.as_str(),
            record.trace.total_cost_usd
        );
    }
    println!("  ... {} records total", records.len());

    // a second invocation finds every key already logged and does nothing
    let resume = run_experiment(&config, &RunOptions::default()).expect("resume");
    println!(
        "second pass: {} already logged, {} executed (resume is idempotent)",
        resume.already_logged, resume.executed
    );
}
