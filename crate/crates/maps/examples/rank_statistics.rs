//! Friedman test, Nemenyi critical difference, and rank cliques over a
//! reference accuracy matrix: eight models compared on the hardest symbolic
//! variant, with the five prompting strategies serving as blocks.

use maps::analytics::{friedman, mean_ranks, nemenyi_cd, rank_summary, AccuracyMatrix};
use maps::report::render_rank_summary;

const MATRIX_CSV: &str = "\
block,llama-3.1-8b,gemma-2-9b,gemma-2-27b,mistral-24b,llama-3.1-70b,deepseek-v3,gpt-4o-mini,gpt-4o
baseline,0.376,0.476,0.660,0.716,0.716,0.852,0.776,0.830
cot,0.376,0.516,0.784,0.768,0.792,0.852,0.708,0.915
sr,0.600,0.632,0.860,0.840,0.870,0.924,0.840,0.956
maps_1l,0.540,0.684,0.872,0.884,0.876,0.936,0.844,0.976
maps_2_3l,0.680,0.792,0.936,0.948,0.928,0.944,0.876,0.984
";

fn main() {
    let matrix = AccuracyMatrix::from_csv_reader(MATRIX_CSV.as_bytes()).expect("matrix");

    let result = friedman(&matrix).expect("friedman");
    println!(
        "friedman over {} blocks x {} treatments: statistic {:.4}, p {:.6e}",
        result.blocks, result.treatments, result.statistic, result.p_value
    );

    // rank 1 = best; ties get averaged ranks
    println!("\nmean ranks:");
    for (model, rank) in mean_ranks(&matrix).expect("ranks") {
        println!("  {rank:>6.2}  {model}");
    }

    // the critical difference shrinks as the block count grows
    for (k, n) in [(8, 5), (5, 4), (5, 48)] {
        println!(
            "\nnemenyi_cd(k = {k}, n = {n}) = {:.4}",
            nemenyi_cd(k, n, 0.05).expect("cd")
        );
    }

    println!("\nfull summary:");
    let summary = rank_summary(&matrix, 0.05).expect("summary");
    print!("{}", render_rank_summary(&summary));
}
