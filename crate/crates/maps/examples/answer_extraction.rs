//! Extracting, normalizing, and comparing final answers across formats.

use maps::codec::{compare, extract_final_answer, judge, normalize};
use maps::domain::DatasetVariant;

fn main() {
    // extraction tries \boxed{...} first, then the last `#### ...` marker,
    // then (outside free-form expression datasets) the last number token
    let samples = [
        (
            DatasetVariant::Gsm8k,
            "Each crate holds 9 jars, so 8 crates hold 72 jars.\n#### 72",
        ),
        (
            DatasetVariant::Gsm8k,
            "The register shows $1,234.50 at close. #### 1,234.50",
        ),
        (
            DatasetVariant::Math500,
            "The simplified form is \\boxed{\\frac{3}{4}}.",
        ),
        (
            DatasetVariant::Aime2025,
            "Therefore the answer is \\boxed{204}.",
        ),
        (DatasetVariant::Gsm8k, "They need 14 more bowls."),
        (DatasetVariant::Math500, "I am not sure."),
    ];
    println!("extraction:");
    for (variant, output) in samples {
        match extract_final_answer(output, variant) {
            Some(raw) => {
                let canonical = normalize(&raw).expect("extracted answer normalizes");
                println!(
                    "  {:<12} {:?} -> canonical {:?}",
                    variant.as_str(),
                    raw,
                    canonical.canonical()
                );
            }
            None => println!("  {:<12} (unparseable)", variant.as_str()),
        }
    }

    // comparison is exact rational equality, never float rounding
    println!("\ncomparison against gold 3/4:");
    let gold = normalize("3/4").unwrap();
    for candidate in ["0.75", "6/8", "0.750000", "0.7499999999"] {
        let c = normalize(candidate).unwrap();
        println!("  {:>14} -> {}", candidate, compare(&c, &gold).as_str());
    }

    // judge = extract + normalize + answer-domain check + compare
    println!("\njudge pipeline (gold 204):");
    let gold = normalize("204").unwrap();
    for output in [
        "so it is \\boxed{204}",
        "so it is \\boxed{1204}", // out of the 0..=999 integer domain
        "no final answer given",
    ] {
        let (extracted, verdict) = judge(output, &gold, DatasetVariant::Aime2025);
        let shown = extracted.map(|g| g.canonical().to_string());
        println!(
            "  {:<28} extracted {:<12} verdict {}",
            output,
            format!("{shown:?}"),
            verdict.as_str()
        );
    }
}
