//! Seeded, reproducible question sampling: the same seed always draws the
//! same per-run subsets, and the corpus digest pins what was sampled from.

use maps::codec::normalize;
use maps::corpus::{draw_samples, Corpus, SamplePlan};
use maps::domain::{DatasetVariant, Question};

fn synthetic_corpus(len: usize) -> Corpus {
    let questions = (0..len)
        .map(|i| Question {
            id: format!("q{i:04}"),
            body: format!("Box {i} holds {i} pairs of socks. How many socks?"),
            gold: normalize(&(i * 2).to_string()).expect("gold"),
            dataset: "gsm8k".to_string(),
            variant: DatasetVariant::Gsm8k,
        })
        .collect();
    Corpus::from_questions("gsm8k", DatasetVariant::Gsm8k, questions).expect("corpus")
}

fn main() {
    let corpus = synthetic_corpus(1319);
    let manifest = corpus.manifest();
    println!(
        "corpus {} ({}): {} questions, sha256 {}...",
        manifest.dataset,
        manifest.variant,
        manifest.record_count,
        &manifest.sha256[..16]
    );

    // five independent runs, each a fresh 100-question draw
    let plan = SamplePlan {
        runs: 5,
        sample_size: 100,
        seed: 42,
    };
    let samples = draw_samples(&corpus, &plan).expect("samples");
    for (run, ids) in samples.iter().enumerate() {
        println!("run {run}: {} ids, first five {:?}", ids.len(), &ids[..5]);
    }

    // reproducibility: same corpus + same plan => identical draws
    let again = draw_samples(&corpus, &plan).expect("samples");
    assert_eq!(samples, again);
    println!("\nsame seed, same draws: verified");

    // a different seed or run index gives an independent sample
    let other = draw_samples(&corpus, &SamplePlan { seed: 43, ..plan }).expect("samples");
    assert_ne!(samples[0], other[0]);
    println!("seed 43 diverges from seed 42: verified");
}
