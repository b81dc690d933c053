//! Metrics and nonparametric rank statistics: accuracy, symbolic loss,
//! cost totals, the Friedman test (plain and tie-corrected), and the
//! Nemenyi critical difference.

use std::io::Read;
use std::path::Path;

use serde::Serialize;

use crate::domain::{TokenUsage, Verdict};
use crate::money::{Money, MoneyError, PriceSheet};
use crate::provider::UsageLedger;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalyticsError {
    #[error("empty input")]
    Empty,
    #[error("need at least 2 treatments and 2 blocks, got {treatments}x{blocks}")]
    TooSmall { treatments: usize, blocks: usize },
    #[error("matrix is not rectangular")]
    NonRectangular,
    #[error("duplicate treatment label {0:?}")]
    DuplicateTreatment(String),
    #[error("value {value} for block {block:?}, treatment {treatment:?} is outside [0, 1]")]
    OutOfRange {
        block: String,
        treatment: String,
        value: f64,
    },
    #[error("baseline accuracy must be > 0")]
    ZeroBaseline,
    #[error("only alpha = 0.05 is supported, got {0}")]
    UnsupportedAlpha(f64),
    #[error("treatment count {0} is outside the constants table range 2..=20")]
    KOutOfRange(usize),
    #[error("block count must be >= 1")]
    NoBlocks,
    #[error("csv: {0}")]
    Csv(String),
}

/// Fraction of correct final verdicts. Unparseable verdicts count in the
/// denominator only, so extraction failures depress accuracy rather than
/// disappearing.
pub fn accuracy(verdicts: &[Verdict]) -> Result<f64, AnalyticsError> {
    if verdicts.is_empty() {
        return Err(AnalyticsError::Empty);
    }
    let correct = verdicts.iter().filter(|v| v.is_correct()).count();
    Ok(correct as f64 / verdicts.len() as f64)
}

/// Arithmetic mean of per-run accuracies, the reported per-cell value.
pub fn mean_accuracy(per_run: &[f64]) -> Result<f64, AnalyticsError> {
    if per_run.is_empty() {
        return Err(AnalyticsError::Empty);
    }
    Ok(per_run.iter().sum::<f64>() / per_run.len() as f64)
}

/// Relative accuracy change from the base benchmark to its perturbed
/// variant, as a signed percentage: 100 x (variant - base) / base.
/// Negative values are losses. This is the primary reported form.
pub fn symbolic_loss(acc_base: f64, acc_variant: f64) -> Result<f64, AnalyticsError> {
    if acc_base <= 0.0 {
        return Err(AnalyticsError::ZeroBaseline);
    }
    Ok(100.0 * (acc_variant - acc_base) / acc_base)
}

/// Absolute accuracy change in percentage points, emitted alongside the
/// relative form.
pub fn symbolic_loss_points(acc_base: f64, acc_variant: f64) -> f64 {
    100.0 * (acc_variant - acc_base)
}

/// Exact total cost of a usage ledger against a price sheet. Unknown
/// models fail loudly.
pub fn cost_of(ledger: &UsageLedger, prices: &PriceSheet) -> Result<Money, MoneyError> {
    let mut total = Money::ZERO;
    for (model_id, usage) in ledger.iter() {
        total += prices.get(model_id)?.cost(usage);
    }
    Ok(total)
}

/// Cost of one usage block for one model.
pub fn cost_of_usage(
    model_id: &str,
    usage: TokenUsage,
    prices: &PriceSheet,
) -> Result<Money, MoneyError> {
    Ok(prices.get(model_id)?.cost(usage))
}

/// Rectangular accuracy table: one row per block, one column per ranked
/// treatment. Values are fractions in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyMatrix {
    treatments: Vec<String>,
    blocks: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl AccuracyMatrix {
    pub fn new(
        treatments: Vec<String>,
        blocks: Vec<String>,
        rows: Vec<Vec<f64>>,
    ) -> Result<AccuracyMatrix, AnalyticsError> {
        if treatments.is_empty() || blocks.is_empty() || rows.is_empty() {
            return Err(AnalyticsError::Empty);
        }
        for (i, t) in treatments.iter().enumerate() {
            if treatments[..i].contains(t) {
                return Err(AnalyticsError::DuplicateTreatment(t.clone()));
            }
        }
        if rows.len() != blocks.len() {
            return Err(AnalyticsError::NonRectangular);
        }
        for (block, row) in blocks.iter().zip(&rows) {
            if row.len() != treatments.len() {
                return Err(AnalyticsError::NonRectangular);
            }
            for (treatment, &value) in treatments.iter().zip(row) {
                if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                    return Err(AnalyticsError::OutOfRange {
                        block: block.clone(),
                        treatment: treatment.clone(),
                        value,
                    });
                }
            }
        }
        Ok(AccuracyMatrix {
            treatments,
            blocks,
            rows,
        })
    }

    pub fn treatments(&self) -> &[String] {
        &self.treatments
    }

    pub fn blocks(&self) -> &[String] {
        &self.blocks
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Reads `block,<treatment>,...` CSV: header names the treatments,
    /// each row is a block label followed by its values.
    pub fn from_csv_reader(reader: impl Read) -> Result<AccuracyMatrix, AnalyticsError> {
        let mut csv = csv::Reader::from_reader(reader);
        let headers = csv
            .headers()
            .map_err(|e| AnalyticsError::Csv(e.to_string()))?
            .clone();
        if headers.len() < 2 {
            return Err(AnalyticsError::Csv(
                "header needs a block column plus at least one treatment".to_string(),
            ));
        }
        let treatments: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut blocks = Vec::new();
        let mut rows = Vec::new();
        for record in csv.records() {
            let record = record.map_err(|e| AnalyticsError::Csv(e.to_string()))?;
            if record.len() != headers.len() {
                return Err(AnalyticsError::NonRectangular);
            }
            blocks.push(record[0].to_string());
            let row: Result<Vec<f64>, _> = record
                .iter()
                .skip(1)
                .map(|cell| {
                    cell.trim()
                        .parse::<f64>()
                        .map_err(|e| AnalyticsError::Csv(format!("bad value {cell:?}: {e}")))
                })
                .collect();
            rows.push(row?);
        }
        AccuracyMatrix::new(treatments, blocks, rows)
    }

    pub fn from_csv_path(path: &Path) -> Result<AccuracyMatrix, AnalyticsError> {
        let file = std::fs::File::open(path)
            .map_err(|e| AnalyticsError::Csv(format!("open {}: {e}", path.display())))?;
        AccuracyMatrix::from_csv_reader(file)
    }

    /// Copy without the blocks whose values are all equal (complete
    /// ties, e.g. all-zero rows), plus the labels of what was dropped.
    /// Such blocks contribute no rank information; both inclusion modes
    /// are legitimate, so the choice is the caller's.
    pub fn without_fully_tied_blocks(&self) -> (AccuracyMatrix, Vec<String>) {
        let mut blocks = Vec::new();
        let mut rows = Vec::new();
        let mut dropped = Vec::new();
        for (block, row) in self.blocks.iter().zip(&self.rows) {
            if row.windows(2).all(|pair| pair[0] == pair[1]) {
                dropped.push(block.clone());
            } else {
                blocks.push(block.clone());
                rows.push(row.clone());
            }
        }
        if rows.is_empty() {
            // nothing left: keep the original rather than produce an
            // unconstructible empty matrix
            return (self.clone(), Vec::new());
        }
        let filtered = AccuracyMatrix {
            treatments: self.treatments.clone(),
            blocks,
            rows,
        };
        (filtered, dropped)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("block");
        for t in &self.treatments {
            out.push(',');
            out.push_str(t);
        }
        out.push('\n');
        for (block, row) in self.blocks.iter().zip(&self.rows) {
            out.push_str(block);
            for v in row {
                out.push(',');
                out.push_str(&format!("{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Average ranks of one block's values, rank 1 for the largest value and
/// tied values sharing the mean of their positions.
fn rank_block(values: &[f64]) -> Vec<f64> {
    let k = values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .expect("finite values")
            .then(a.cmp(&b))
    });
    let mut ranks = vec![0.0; k];
    let mut i = 0;
    while i < k {
        let mut j = i;
        while j + 1 < k && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let average = (i + j + 2) as f64 / 2.0;
        for t in i..=j {
            ranks[order[t]] = average;
        }
        i = j + 1;
    }
    ranks
}

/// Tie weight of one block: the sum of t^3 - t over its tie groups.
fn tie_weight(values: &[f64]) -> f64 {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let mut weight = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        weight += t * t * t - t;
        i = j + 1;
    }
    weight
}

/// Friedman test output. The plain statistic is the classical rank form;
/// the corrected one divides by the tie-correction factor and is absent
/// only when every block is fully tied (correction factor zero).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FriedmanResult {
    pub statistic: f64,
    pub p_value: f64,
    pub corrected_statistic: Option<f64>,
    pub corrected_p_value: Option<f64>,
    pub treatments: usize,
    pub blocks: usize,
}

/// Friedman rank test over blocks: ranks each block's values, then tests
/// whether treatments share a common rank distribution. The p-values use
/// the chi-square approximation with k - 1 degrees of freedom.
pub fn friedman(matrix: &AccuracyMatrix) -> Result<FriedmanResult, AnalyticsError> {
    let k = matrix.treatments().len();
    let n = matrix.blocks().len();
    if k < 2 || n < 2 {
        return Err(AnalyticsError::TooSmall {
            treatments: k,
            blocks: n,
        });
    }
    let mut rank_sums = vec![0.0; k];
    let mut tie_sum = 0.0;
    for row in matrix.rows() {
        for (sum, rank) in rank_sums.iter_mut().zip(rank_block(row)) {
            *sum += rank;
        }
        tie_sum += tie_weight(row);
    }
    let (kf, nf) = (k as f64, n as f64);
    let sum_of_squares: f64 = rank_sums.iter().map(|r| r * r).sum();
    let statistic =
        (12.0 / (nf * kf * (kf + 1.0)) * sum_of_squares - 3.0 * nf * (kf + 1.0)).max(0.0);
    let correction = 1.0 - tie_sum / (nf * kf * (kf * kf - 1.0));
    let (corrected_statistic, corrected_p_value) = if correction > 0.0 {
        let corrected = statistic / correction;
        (Some(corrected), Some(chi2_sf(corrected, k - 1)))
    } else {
        (None, None)
    };
    Ok(FriedmanResult {
        statistic,
        p_value: chi2_sf(statistic, k - 1),
        corrected_statistic,
        corrected_p_value,
        treatments: k,
        blocks: n,
    })
}

/// Per-treatment mean ranks, best (lowest) first; equal means order
/// lexicographically by label so the output is deterministic.
pub fn mean_ranks(matrix: &AccuracyMatrix) -> Result<Vec<(String, f64)>, AnalyticsError> {
    let k = matrix.treatments().len();
    let n = matrix.blocks().len();
    if k < 2 || n < 1 {
        return Err(AnalyticsError::TooSmall {
            treatments: k,
            blocks: n,
        });
    }
    let mut sums = vec![0.0; k];
    for row in matrix.rows() {
        for (sum, rank) in sums.iter_mut().zip(rank_block(row)) {
            *sum += rank;
        }
    }
    let mut means: Vec<(String, f64)> = matrix
        .treatments()
        .iter()
        .cloned()
        .zip(sums.into_iter().map(|s| s / n as f64))
        .collect();
    means.sort_by(|a, b| {
        a.1.partial_cmp(&b.1)
            .expect("finite ranks")
            .then_with(|| a.0.cmp(&b.0))
    });
    Ok(means)
}

/// Two-tailed studentized-range constants q_0.05(k) at infinite degrees of
/// freedom, already divided by sqrt(2), for k = 2..=20. Standard post-hoc
/// table values; monotone increasing in k.
pub const Q_ALPHA_005: [f64; 19] = [
    1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164, 3.219, 3.268, 3.313, 3.354,
    3.391, 3.426, 3.458, 3.489, 3.517, 3.544,
];

/// Nemenyi critical difference: the minimum mean-rank gap that is
/// significant at `alpha` for `k` treatments over `n` blocks,
/// q_alpha(k) * sqrt(k (k + 1) / (6 n)). Only alpha = 0.05 ships.
pub fn nemenyi_cd(k: usize, n: usize, alpha: f64) -> Result<f64, AnalyticsError> {
    if (alpha - 0.05).abs() > 1e-12 {
        return Err(AnalyticsError::UnsupportedAlpha(alpha));
    }
    if !(2..=20).contains(&k) {
        return Err(AnalyticsError::KOutOfRange(k));
    }
    if n == 0 {
        return Err(AnalyticsError::NoBlocks);
    }
    let q = Q_ALPHA_005[k - 2];
    let kf = k as f64;
    Ok(q * (kf * (kf + 1.0) / (6.0 * n as f64)).sqrt())
}

/// Complete rank analysis of one matrix: Friedman test, mean ranks, the
/// critical difference, pairwise significance, and the maximal groups of
/// statistically indistinguishable treatments (the bars of a CD diagram).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankSummary {
    pub friedman: FriedmanResult,
    /// (treatment, mean rank), best first.
    pub mean_ranks: Vec<(String, f64)>,
    pub alpha: f64,
    pub critical_difference: f64,
    /// Pairs whose mean-rank gap reaches the critical difference; the
    /// better-ranked treatment comes first.
    pub significant_pairs: Vec<(String, String)>,
    /// Maximal runs of rank-adjacent treatments whose spread stays below
    /// the critical difference.
    pub cliques: Vec<Vec<String>>,
}

pub fn rank_summary(matrix: &AccuracyMatrix, alpha: f64) -> Result<RankSummary, AnalyticsError> {
    let friedman = friedman(matrix)?;
    let ranks = mean_ranks(matrix)?;
    let cd = nemenyi_cd(matrix.treatments().len(), matrix.blocks().len(), alpha)?;
    let mut significant_pairs = Vec::new();
    for i in 0..ranks.len() {
        for j in (i + 1)..ranks.len() {
            if ranks[j].1 - ranks[i].1 >= cd {
                significant_pairs.push((ranks[i].0.clone(), ranks[j].0.clone()));
            }
        }
    }
    let mut cliques: Vec<Vec<String>> = Vec::new();
    let mut widest_end = 0;
    for i in 0..ranks.len() {
        let mut j = i;
        while j + 1 < ranks.len() && ranks[j + 1].1 - ranks[i].1 < cd {
            j += 1;
        }
        if j + 1 > widest_end {
            widest_end = j + 1;
            cliques.push(
                ranks[i..=j]
                    .iter()
                    .map(|(label, _)| label.clone())
                    .collect(),
            );
        }
    }
    Ok(RankSummary {
        friedman,
        mean_ranks: ranks,
        alpha,
        critical_difference: cd,
        significant_pairs,
        cliques,
    })
}

/// Survival function of the chi-square distribution: P(X >= x) for df
/// degrees of freedom, computed through the regularized incomplete gamma
/// function (series expansion below the a + 1 crossover, Lentz continued
/// fraction above).
pub fn chi2_sf(x: f64, df: usize) -> f64 {
    assert!(df >= 1, "degrees of freedom must be >= 1");
    if x <= 0.0 {
        return 1.0;
    }
    let a = df as f64 / 2.0;
    let half_x = x / 2.0;
    if half_x < a + 1.0 {
        (1.0 - gamma_p_series(a, half_x)).clamp(0.0, 1.0)
    } else {
        gamma_q_continued_fraction(a, half_x).clamp(0.0, 1.0)
    }
}

/// ln Gamma via the Lanczos approximation (g = 7, 9 coefficients).
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    debug_assert!(x > 0.0);
    let z = x - 1.0;
    let mut sum = COEFFS[0];
    for (i, &c) in COEFFS.iter().enumerate().skip(1) {
        sum += c / (z + i as f64);
    }
    let t = z + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + sum.ln()
}

/// Regularized lower incomplete gamma P(a, x) by series, valid for
/// x < a + 1.
fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut denom = a;
    for _ in 0..500 {
        denom += 1.0;
        term *= x / denom;
        sum += term;
        if term.abs() < sum.abs() * 1e-17 {
            break;
        }
    }
    sum * (a * x.ln() - x - ln_gamma(a)).exp()
}

/// Regularized upper incomplete gamma Q(a, x) by modified Lentz continued
/// fraction, valid for x >= a + 1.
fn gamma_q_continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-17 {
            break;
        }
    }
    h * (a * x.ln() - x - ln_gamma(a)).exp()
}
