//! Deterministic report generation: accuracy tables with symbolic-loss
//! annotations, exact cost tables normalized per 100 questions, and the
//! rank-statistics section. Identical logs and prices yield byte-identical
//! reports; no timestamps or absolute paths appear in the output.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use crate::analytics::{self, AccuracyMatrix, AnalyticsError};
use crate::domain::{validate_trace, DatasetVariant, TokenUsage, Verdict};
use crate::money::{Money, MoneyError, PriceSheet};
use crate::runlog::{duplicate_keys, RunRecord};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("empty run log")]
    EmptyLog,
    #[error("duplicate run key: {0}")]
    DuplicateKey(String),
    #[error("invalid trace for {key}: {issues}")]
    InvalidTrace { key: String, issues: String },
    #[error("dataset {dataset:?} appears with conflicting variants")]
    VariantConflict { dataset: String },
    #[error(transparent)]
    Price(#[from] MoneyError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
}

/// File names written next to the run log.
pub const REPORT_TEXT_FILE: &str = "report.txt";
pub const ACCURACY_CSV_FILE: &str = "accuracy.csv";
pub const COST_CSV_FILE: &str = "cost.csv";
pub const RANK_MATRIX_CSV_FILE: &str = "rank_matrix.csv";

/// Finished report: human-readable text plus machine-readable tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub text: String,
    pub accuracy_csv: String,
    pub cost_csv: String,
    /// The strategy-by-(model, dataset) matrix behind the rank section;
    /// absent when the log has no complete blocks.
    pub rank_matrix_csv: Option<String>,
}

impl Report {
    /// Writes the report files into `dir`, returning what was written.
    pub fn write_files(&self, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut emit = |name: &str, contents: &str| -> std::io::Result<()> {
            let path = dir.join(name);
            std::fs::write(&path, contents)?;
            written.push(path);
            Ok(())
        };
        emit(REPORT_TEXT_FILE, &self.text)?;
        emit(ACCURACY_CSV_FILE, &self.accuracy_csv)?;
        emit(COST_CSV_FILE, &self.cost_csv)?;
        if let Some(matrix) = &self.rank_matrix_csv {
            emit(RANK_MATRIX_CSV_FILE, matrix)?;
        }
        Ok(written)
    }
}

/// One (model, dataset, strategy) aggregation cell.
#[derive(Default)]
struct Cell {
    per_run: BTreeMap<u32, (usize, usize)>, // run -> (correct, attempts)
    unparseable: usize,
    usage: TokenUsage,
    attempts: usize,
}

impl Cell {
    fn mean_accuracy(&self) -> f64 {
        let per_run: Vec<f64> = self
            .per_run
            .values()
            .map(|&(correct, attempts)| correct as f64 / attempts as f64)
            .collect();
        analytics::mean_accuracy(&per_run).expect("cells are non-empty")
    }
}

type CellKey = (String, String, String); // (model, dataset, strategy label)

/// Builds the full report from a strict-read log and a price sheet.
/// Traces are re-validated and re-priced here, so a report never trusts
/// stale cost fields and a malformed log fails loudly.
pub fn build_report(records: &[RunRecord], prices: &PriceSheet) -> Result<Report, ReportError> {
    if records.is_empty() {
        return Err(ReportError::EmptyLog);
    }
    if let Some(key) = duplicate_keys(records).first() {
        return Err(ReportError::DuplicateKey(format!("{key:?}")));
    }

    let mut cells: BTreeMap<CellKey, Cell> = BTreeMap::new();
    let mut dataset_variants: BTreeMap<String, DatasetVariant> = BTreeMap::new();
    let mut models: BTreeSet<String> = BTreeSet::new();
    for record in records {
        let issues = validate_trace(&record.trace);
        if !issues.is_empty() {
            return Err(ReportError::InvalidTrace {
                key: format!("{:?}", record.key()),
                issues: issues.join("; "),
            });
        }
        // unknown models fail even if the cost tables were never read
        prices.get(&record.model_id)?;
        match dataset_variants.get(&record.dataset) {
            Some(&variant) if variant != record.variant => {
                return Err(ReportError::VariantConflict {
                    dataset: record.dataset.clone(),
                });
            }
            Some(_) => {}
            None => {
                dataset_variants.insert(record.dataset.clone(), record.variant);
            }
        }
        models.insert(record.model_id.clone());
        let key = (
            record.model_id.clone(),
            record.dataset.clone(),
            record.trace.strategy.label(),
        );
        let cell = cells.entry(key).or_default();
        let run = cell.per_run.entry(record.trace.run_index).or_insert((0, 0));
        if record.trace.final_verdict.is_correct() {
            run.0 += 1;
        }
        run.1 += 1;
        if record.trace.final_verdict == Verdict::Unparseable {
            cell.unparseable += 1;
        }
        cell.usage += record.trace.total_usage;
        cell.attempts += 1;
    }

    // Base-benchmark accuracy per (model, strategy): usable for the
    // symbolic-loss parentheses only when exactly one base dataset exists.
    let mut base_accuracy: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for ((model, dataset, strategy), cell) in &cells {
        if dataset_variants[dataset] == DatasetVariant::Gsm8k {
            base_accuracy
                .entry((model.clone(), strategy.clone()))
                .or_default()
                .push(cell.mean_accuracy());
        }
    }

    let strategies: BTreeSet<String> = cells.keys().map(|(_, _, s)| s.clone()).collect();

    // --- accuracy section ---
    let mut accuracy_rows: Vec<Vec<String>> = Vec::new();
    let mut accuracy_csv =
        String::from("model,dataset,strategy,runs,accuracy,loss_rel_pct,loss_abs_pp,unparseable\n");
    for ((model, dataset, strategy), cell) in &cells {
        let accuracy = cell.mean_accuracy();
        let variant = dataset_variants[dataset];
        let is_symbolic = matches!(
            variant,
            DatasetVariant::SymbolicMain | DatasetVariant::SymbolicP1 | DatasetVariant::SymbolicP2
        );
        let base = base_accuracy
            .get(&(model.clone(), strategy.clone()))
            .filter(|v| v.len() == 1)
            .map(|v| v[0]);
        let (loss_text, loss_rel, loss_abs) = match (is_symbolic, base) {
            (true, Some(base)) if base > 0.0 => {
                let rel = analytics::symbolic_loss(base, accuracy).expect("base > 0");
                let abs = analytics::symbolic_loss_points(base, accuracy);
                (
                    format!("({rel:+.2}% / {abs:+.2}pp)"),
                    format!("{rel:.4}"),
                    format!("{abs:.4}"),
                )
            }
            _ => ("-".to_string(), String::new(), String::new()),
        };
        accuracy_rows.push(vec![
            model.clone(),
            dataset.clone(),
            strategy.clone(),
            cell.per_run.len().to_string(),
            format!("{accuracy:.3}"),
            loss_text,
            cell.unparseable.to_string(),
        ]);
        accuracy_csv.push_str(&format!(
            "{model},{dataset},{strategy},{runs},{accuracy:.6},{loss_rel},{loss_abs},{unparseable}\n",
            runs = cell.per_run.len(),
            unparseable = cell.unparseable,
        ));
    }

    // --- cost section ---
    let mut cost_rows: Vec<Vec<String>> = Vec::new();
    let mut cost_csv = String::from(
        "model,dataset,strategy,attempts,prompt_tokens,completion_tokens,cost_usd,cost_per_100_usd\n",
    );
    let mut group_totals: BTreeMap<(String, String), (usize, TokenUsage, Money)> = BTreeMap::new();
    for ((model, dataset, strategy), cell) in &cells {
        let cost = prices.get(model)?.cost(cell.usage);
        let per_100 = cost.scale(100, cell.attempts as u64);
        cost_rows.push(vec![
            model.clone(),
            dataset.clone(),
            strategy.clone(),
            cell.attempts.to_string(),
            cell.usage.prompt_tokens.to_string(),
            cell.usage.completion_tokens.to_string(),
            cost.format_usd(6),
            per_100.format_usd(6),
        ]);
        cost_csv.push_str(&format!(
            "{model},{dataset},{strategy},{attempts},{pt},{ct},{cost},{per_100}\n",
            attempts = cell.attempts,
            pt = cell.usage.prompt_tokens,
            ct = cell.usage.completion_tokens,
            cost = cost.format_usd(6),
            per_100 = per_100.format_usd(6),
        ));
        let total = group_totals
            .entry((model.clone(), dataset.clone()))
            .or_insert((0, TokenUsage::ZERO, Money::ZERO));
        total.0 += cell.attempts;
        total.1 += cell.usage;
        total.2 += cost;
    }
    for ((model, dataset), (attempts, usage, cost)) in &group_totals {
        let per_100 = cost.scale(100, *attempts as u64);
        cost_rows.push(vec![
            model.clone(),
            dataset.clone(),
            "all".to_string(),
            attempts.to_string(),
            usage.prompt_tokens.to_string(),
            usage.completion_tokens.to_string(),
            cost.format_usd(6),
            per_100.format_usd(6),
        ]);
        cost_csv.push_str(&format!(
            "{model},{dataset},all,{attempts},{pt},{ct},{cost},{per_100}\n",
            pt = usage.prompt_tokens,
            ct = usage.completion_tokens,
            cost = cost.format_usd(6),
            per_100 = per_100.format_usd(6),
        ));
    }

    // --- rank statistics: treatments = strategies, blocks = complete
    // (model, dataset) pairs ---
    let mut block_values: BTreeMap<(String, String), BTreeMap<String, f64>> = BTreeMap::new();
    for ((model, dataset, strategy), cell) in &cells {
        block_values
            .entry((model.clone(), dataset.clone()))
            .or_default()
            .insert(strategy.clone(), cell.mean_accuracy());
    }
    let treatments: Vec<String> = strategies.iter().cloned().collect();
    let mut block_labels = Vec::new();
    let mut matrix_rows = Vec::new();
    for ((model, dataset), values) in &block_values {
        if values.len() == treatments.len() {
            block_labels.push(format!("{model}::{dataset}"));
            matrix_rows.push(treatments.iter().map(|t| values[t]).collect::<Vec<f64>>());
        }
    }
    let matrix = if block_labels.is_empty() {
        None
    } else {
        Some(AccuracyMatrix::new(
            treatments.clone(),
            block_labels,
            matrix_rows,
        )?)
    };
    let rank_matrix_csv = matrix.as_ref().map(AccuracyMatrix::to_csv_string);
    let rank_section = match &matrix {
        None => "rank statistics: no (model, dataset) block covers every strategy\n".to_string(),
        Some(matrix) => render_rank_section(matrix),
    };

    // --- assemble text ---
    let datasets_line = dataset_variants
        .iter()
        .map(|(name, variant)| format!("{name} ({variant})"))
        .collect::<Vec<_>>()
        .join(", ");
    let mut text = String::new();
    text.push_str("evaluation report\n=================\n\n");
    text.push_str(&format!("records: {}\n", records.len()));
    text.push_str(&format!(
        "models: {}\n",
        models.iter().cloned().collect::<Vec<_>>().join(", ")
    ));
    text.push_str(&format!("datasets: {datasets_line}\n"));
    text.push_str(&format!("strategies: {}\n\n", treatments.join(", ")));

    text.push_str("accuracy (mean over runs)\n-------------------------\n");
    text.push_str(&render_table(
        &[
            "model",
            "dataset",
            "strategy",
            "runs",
            "accuracy",
            "vs_base",
            "unparseable",
        ],
        &accuracy_rows,
    ));
    text.push_str(
        "\nvs_base: change against the same model and strategy on the base benchmark,\n\
         as (relative percent / absolute percentage points); the relative form is primary.\n\n",
    );

    text.push_str("cost (usd, exact decimal)\n-------------------------\n");
    text.push_str(&render_table(
        &[
            "model",
            "dataset",
            "strategy",
            "attempts",
            "prompt_tokens",
            "completion_tokens",
            "cost_usd",
            "cost_per_100_usd",
        ],
        &cost_rows,
    ));
    text.push_str(
        "\ncost_per_100_usd normalizes each row's exact total to a 100-question workload.\n\n",
    );

    text.push_str(
        "rank statistics (treatments = strategies, blocks = model x dataset)\n\
         --------------------------------------------------------------------\n",
    );
    text.push_str(&rank_section);

    Ok(Report {
        text,
        accuracy_csv,
        cost_csv,
        rank_matrix_csv,
    })
}

fn render_rank_section(matrix: &AccuracyMatrix) -> String {
    match analytics::rank_summary(matrix, 0.05) {
        Err(e) => format!("rank statistics unavailable: {e}\n"),
        Ok(summary) => render_rank_summary(&summary),
    }
}

/// Renders a rank summary as fixed-precision text. Shared by reports and
/// the `stats` command so both present statistics identically.
pub fn render_rank_summary(summary: &analytics::RankSummary) -> String {
    let mut out = String::new();
    let f = &summary.friedman;
    out.push_str(&format!(
        "friedman: statistic {:.4}, p {:.6e} (df {})\n",
        f.statistic,
        f.p_value,
        f.treatments - 1
    ));
    match (f.corrected_statistic, f.corrected_p_value) {
        (Some(statistic), Some(p)) => {
            out.push_str(&format!(
                "tie-corrected: statistic {statistic:.4}, p {p:.6e}\n"
            ));
        }
        _ => out.push_str("tie-corrected: undefined (every block fully tied)\n"),
    }
    out.push_str(&format!(
        "blocks: {}, treatments: {}\n",
        f.blocks, f.treatments
    ));
    out.push_str(&format!(
        "nemenyi critical difference (alpha {:.2}): {:.4}\n",
        summary.alpha, summary.critical_difference
    ));
    out.push_str("mean ranks (rank 1 = best):\n");
    for (treatment, rank) in &summary.mean_ranks {
        out.push_str(&format!("  {rank:>7.4}  {treatment}\n"));
    }
    if summary.significant_pairs.is_empty() {
        out.push_str("no pair is separated by the critical difference\n");
    } else {
        out.push_str("pairs separated by at least the critical difference (better first):\n");
        for (better, worse) in &summary.significant_pairs {
            out.push_str(&format!("  {better} > {worse}\n"));
        }
    }
    out.push_str("cliques (groups not separated by the critical difference):\n");
    for clique in &summary.cliques {
        out.push_str(&format!("  {{{}}}\n", clique.join(", ")));
    }
    out
}

/// Space-aligned fixed-width table; purely a function of its inputs.
fn render_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let render_row = |cells: &[String]| -> String {
        let mut line = cells
            .iter()
            .zip(&widths)
            .map(|(cell, width)| format!("{cell:<width$}"))
            .collect::<Vec<_>>()
            .join("  ");
        while line.ends_with(' ') {
            line.pop();
        }
        line.push('\n');
        line
    };
    let mut out = render_row(&headers.iter().map(|h| h.to_string()).collect::<Vec<_>>());
    out.push_str(
        &widths
            .iter()
            .map(|w| "-".repeat(*w))
            .collect::<Vec<_>>()
            .join("  "),
    );
    out.push('\n');
    for row in rows {
        out.push_str(&render_row(row));
    }
    out
}
