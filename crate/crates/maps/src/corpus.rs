//! Benchmark ingestion, content digests, and the seeded sampling protocol.

use std::collections::HashMap;
use std::path::Path;

use rand_chacha::rand_core::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codec;
use crate::domain::{DatasetFamily, DatasetVariant, Question};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("read {path}: {detail}")]
    Io { path: String, detail: String },
    #[error("{path}: {} bad record(s): {}", issues.len(), issues.join("; "))]
    BadRecords { path: String, issues: Vec<String> },
    #[error("sample size {requested} exceeds corpus size {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("sample plan needs at least one run")]
    ZeroRuns,
}

/// Identity of one ingested data file. The digest binds run logs to the
/// exact bytes that produced them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub dataset: String,
    pub variant: DatasetVariant,
    pub source_path: String,
    pub record_count: usize,
    pub sha256: String,
}

/// A loaded benchmark: questions plus their manifest. Read-only after
/// construction.
#[derive(Debug, Clone)]
pub struct Corpus {
    manifest: CorpusManifest,
    questions: Vec<Question>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    fn build(manifest: CorpusManifest, questions: Vec<Question>) -> Result<Corpus, CorpusError> {
        let mut by_id = HashMap::with_capacity(questions.len());
        let mut duplicates = Vec::new();
        for (idx, q) in questions.iter().enumerate() {
            if by_id.insert(q.id.clone(), idx).is_some() {
                duplicates.push(format!("{}: duplicate id", q.id));
            }
        }
        if !duplicates.is_empty() {
            return Err(CorpusError::BadRecords {
                path: manifest.source_path.clone(),
                issues: duplicates,
            });
        }
        Ok(Corpus {
            manifest,
            questions,
            by_id,
        })
    }

    /// Wraps already-built questions (tests, examples, generated data).
    /// The digest covers the questions' serialized form.
    pub fn from_questions(
        dataset: &str,
        variant: DatasetVariant,
        questions: Vec<Question>,
    ) -> Result<Corpus, CorpusError> {
        let serialized = serde_json::to_string(&questions).expect("questions serialize");
        let manifest = CorpusManifest {
            dataset: dataset.to_string(),
            variant,
            source_path: "<memory>".to_string(),
            record_count: questions.len(),
            sha256: hex_digest(serialized.as_bytes()),
        };
        Corpus::build(manifest, questions)
    }

    pub fn manifest(&self) -> &CorpusManifest {
        &self.manifest
    }

    pub fn variant(&self) -> DatasetVariant {
        self.manifest.variant
    }

    pub fn dataset(&self) -> &str {
        &self.manifest.dataset
    }

    pub fn questions(&self) -> &[Question] {
        &self.questions
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Question> {
        self.by_id.get(id).map(|&idx| &self.questions[idx])
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Raw record shape covering all supported input files. GSM-family files
/// carry (question, answer with a `#### n` tail); MATH files carry
/// (problem, answer, subject, level); AIME files carry (id, problem,
/// answer). An explicit id is honored everywhere; otherwise ids are
/// generated as `<dataset>-<line number>` zero-padded so lexicographic
/// order matches file order.
#[derive(Deserialize)]
struct RawRecord {
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    question: Option<String>,
    #[serde(default)]
    problem: Option<String>,
    #[serde(default)]
    answer: Option<serde_json::Value>,
}

fn answer_text(value: &serde_json::Value) -> Option<String> {
    match value {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Loads a line-delimited benchmark file into normalized questions.
/// Records with missing bodies or missing/ambiguous golds fail the whole
/// load, with every offending id listed.
pub fn load_corpus(
    path: &Path,
    dataset: &str,
    variant: DatasetVariant,
) -> Result<Corpus, CorpusError> {
    let display = path.display().to_string();
    let raw = std::fs::read(path).map_err(|e| CorpusError::Io {
        path: display.clone(),
        detail: e.to_string(),
    })?;
    let sha256 = hex_digest(&raw);
    let text = String::from_utf8(raw).map_err(|e| CorpusError::Io {
        path: display.clone(),
        detail: format!("not UTF-8: {e}"),
    })?;

    let mut questions = Vec::new();
    let mut issues = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: RawRecord = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                issues.push(format!("line {}: invalid record: {e}", line_no + 1));
                continue;
            }
        };
        let id = record
            .id
            .clone()
            .unwrap_or_else(|| format!("{dataset}-{:05}", line_no + 1));
        let body = match variant.family() {
            DatasetFamily::Gsm => record.question,
            DatasetFamily::Aime | DatasetFamily::Math => record.problem,
        };
        let Some(body) = body else {
            issues.push(format!("{id}: missing problem text"));
            continue;
        };
        let answer = record.answer.as_ref().and_then(answer_text);
        let Some(answer) = answer else {
            issues.push(format!("{id}: missing gold answer"));
            continue;
        };
        let gold_raw = match variant.family() {
            DatasetFamily::Gsm => match answer.rfind("####") {
                Some(pos) => answer[pos + 4..]
                    .lines()
                    .next()
                    .unwrap_or("")
                    .trim()
                    .to_string(),
                None => {
                    issues.push(format!("{id}: answer has no #### marker"));
                    continue;
                }
            },
            DatasetFamily::Aime | DatasetFamily::Math => answer,
        };
        let gold = match codec::normalize(&gold_raw) {
            Ok(gold) => gold,
            Err(e) => {
                issues.push(format!("{id}: gold answer: {e}"));
                continue;
            }
        };
        if !codec::admissible(&gold, variant) {
            issues.push(format!(
                "{id}: gold answer {:?} outside the dataset's answer domain",
                gold.canonical()
            ));
            continue;
        }
        questions.push(Question {
            id,
            body,
            gold,
            dataset: dataset.to_string(),
            variant,
        });
    }
    if !issues.is_empty() {
        return Err(CorpusError::BadRecords {
            path: display,
            issues,
        });
    }
    let manifest = CorpusManifest {
        dataset: dataset.to_string(),
        variant,
        source_path: display,
        record_count: questions.len(),
        sha256,
    };
    Corpus::build(manifest, questions)
}

/// How many runs to draw and how large each run's sample is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub runs: u32,
    #[serde(alias = "size")]
    pub sample_size: usize,
    pub seed: u64,
}

/// Single full-pass plan used for whole-test-set evaluation. Returns a
/// warning when applied to a GSM-family corpus, where the standard
/// protocol samples instead.
pub fn full_set_plan(corpus: &Corpus, seed: u64) -> (SamplePlan, Option<String>) {
    let warning = (corpus.variant().family() == DatasetFamily::Gsm).then(|| {
        format!(
            "full-set plan on {}: GSM-family datasets are normally sampled, not run whole",
            corpus.dataset()
        )
    });
    (
        SamplePlan {
            runs: 1,
            sample_size: corpus.len(),
            seed,
        },
        warning,
    )
}

/// Derives run r's generator from the master seed: the 32-byte child seed
/// is SHA-256("maps.sample.v1" || seed_le || r_le), fed to ChaCha12.
/// The construction is documented so other implementations can reproduce
/// the samples bit-for-bit.
fn child_rng(seed: u64, run: u32) -> ChaCha12Rng {
    let mut hasher = Sha256::new();
    hasher.update(b"maps.sample.v1");
    hasher.update(seed.to_le_bytes());
    hasher.update((run as u64).to_le_bytes());
    let digest = hasher.finalize();
    let mut child = [0u8; 32];
    child.copy_from_slice(&digest);
    ChaCha12Rng::from_seed(child)
}

/// Unbiased draw from 0..n via rejection sampling on the top band.
fn uniform_below(rng: &mut ChaCha12Rng, n: u64) -> u64 {
    debug_assert!(n > 0);
    let threshold = n.wrapping_neg() % n;
    loop {
        let x = rng.next_u64();
        if x >= threshold {
            return x % n;
        }
    }
}

/// Draws one id sample per run: without replacement within a run, runs
/// drawn independently of each other. Ids are sorted before shuffling, so
/// the output depends only on the id set, the seed, and the plan, never on
/// file record order.
pub fn draw_samples(corpus: &Corpus, plan: &SamplePlan) -> Result<Vec<Vec<String>>, CorpusError> {
    if plan.runs < 1 {
        return Err(CorpusError::ZeroRuns);
    }
    if plan.sample_size > corpus.len() {
        return Err(CorpusError::SampleTooLarge {
            requested: plan.sample_size,
            available: corpus.len(),
        });
    }
    let mut ids: Vec<&str> = corpus.questions().iter().map(|q| q.id.as_str()).collect();
    ids.sort_unstable();
    let mut samples = Vec::with_capacity(plan.runs as usize);
    for run in 0..plan.runs {
        let mut rng = child_rng(plan.seed, run);
        let mut pool = ids.clone();
        let mut sample = Vec::with_capacity(plan.sample_size);
        // partial Fisher-Yates: position i swaps with a uniform pick from
        // the untouched tail, so the prefix is a without-replacement draw
        for i in 0..plan.sample_size {
            let j = i + uniform_below(&mut rng, (pool.len() - i) as u64) as usize;
            pool.swap(i, j);
            sample.push(pool[i].to_string());
        }
        samples.push(sample);
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut file = tempfile::NamedTempFile::new().expect("temp file");
        file.write_all(content.as_bytes()).expect("write");
        file
    }

    fn synthetic_corpus(n: usize) -> Corpus {
        let questions = (0..n)
            .map(|i| Question {
                id: format!("q{i:05}"),
                body: format!("body {i}"),
                gold: codec::normalize(&i.to_string()).unwrap(),
                dataset: "synthetic".to_string(),
                variant: DatasetVariant::Gsm8k,
            })
            .collect();
        Corpus::from_questions("synthetic", DatasetVariant::Gsm8k, questions).unwrap()
    }

    #[test]
    fn loads_gsm_records() {
        let file = write_temp(concat!(
            r#"{"question": "2 + 2?", "answer": "2 + 2 = 4. #### 4"}"#,
            "\n",
            r#"{"question": "total?", "answer": "adding gives 1,000\n#### 1,000"}"#,
            "\n",
        ));
        let corpus = load_corpus(file.path(), "gsm8k", DatasetVariant::Gsm8k).unwrap();
        assert_eq!(corpus.len(), 2);
        assert_eq!(corpus.questions()[0].id, "gsm8k-00001");
        assert_eq!(corpus.questions()[0].gold.canonical(), "4");
        assert_eq!(corpus.questions()[1].gold.canonical(), "1000");
        assert_eq!(corpus.manifest().sha256.len(), 64);
        assert_eq!(corpus.manifest().record_count, 2);
    }

    #[test]
    fn gold_less_record_fails_with_its_id() {
        let file = write_temp(concat!(
            r#"{"question": "fine", "answer": "the sum. #### 7"}"#,
            "\n",
            r#"{"question": "broken", "answer": "no marker here"}"#,
            "\n",
        ));
        let err = load_corpus(file.path(), "gsm8k", DatasetVariant::Gsm8k).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("gsm8k-00002"), "got: {text}");
        assert!(text.contains("####"), "got: {text}");
    }

    #[test]
    fn loads_aime_records_with_numeric_answers() {
        let file = write_temp(concat!(
            r#"{"id": "aime-i-1", "problem": "Find n.", "answer": 70}"#,
            "\n",
            r#"{"id": "aime-i-2", "problem": "Find m.", "answer": "004"}"#,
            "\n",
        ));
        let corpus = load_corpus(file.path(), "aime_2025", DatasetVariant::Aime2025).unwrap();
        assert_eq!(corpus.questions()[0].gold.canonical(), "70");
        assert_eq!(corpus.questions()[1].gold.canonical(), "4");
        assert!(corpus.get("aime-i-2").is_some());
    }

    #[test]
    fn aime_gold_outside_domain_is_rejected() {
        let file = write_temp(r#"{"id": "a1", "problem": "p", "answer": 1234}"#);
        let err = load_corpus(file.path(), "aime_2025", DatasetVariant::Aime2025).unwrap_err();
        assert!(err.to_string().contains("a1"));
    }

    #[test]
    fn loads_math_expression_answers() {
        let file = write_temp(
            r#"{"problem": "Simplify.", "answer": "\\frac{1}{2}", "subject": "algebra", "level": 3}"#,
        );
        let corpus = load_corpus(file.path(), "math_500", DatasetVariant::Math500).unwrap();
        assert_eq!(corpus.questions()[0].gold.canonical(), "\\frac{1}{2}");
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let file = write_temp(concat!(
            r#####"{"id": "x", "question": "a", "answer": "#### 1"}"#####,
            "\n",
            r#####"{"id": "x", "question": "b", "answer": "#### 2"}"#####,
            "\n",
        ));
        let err = load_corpus(file.path(), "gsm8k", DatasetVariant::Gsm8k).unwrap_err();
        assert!(err.to_string().contains("duplicate id"));
    }

    #[test]
    fn samples_are_deterministic_and_duplicate_free() {
        let corpus = synthetic_corpus(1319);
        let plan = SamplePlan {
            runs: 5,
            sample_size: 100,
            seed: 42,
        };
        let first = draw_samples(&corpus, &plan).unwrap();
        let second = draw_samples(&corpus, &plan).unwrap();
        assert_eq!(first, second);
        assert_eq!(first.len(), 5);
        for sample in &first {
            assert_eq!(sample.len(), 100);
            let unique: HashSet<&String> = sample.iter().collect();
            assert_eq!(unique.len(), 100, "ids repeat within a run");
        }
        // independent runs almost surely differ
        assert!(first.windows(2).any(|w| w[0] != w[1]));
        let other_seed = draw_samples(&corpus, &SamplePlan { seed: 43, ..plan }).unwrap();
        assert_ne!(first, other_seed);
    }

    #[test]
    fn sampling_ignores_record_order() {
        let corpus = synthetic_corpus(50);
        let mut reversed: Vec<Question> = corpus.questions().to_vec();
        reversed.reverse();
        let shuffled =
            Corpus::from_questions("synthetic", DatasetVariant::Gsm8k, reversed).unwrap();
        let plan = SamplePlan {
            runs: 3,
            sample_size: 10,
            seed: 7,
        };
        assert_eq!(
            draw_samples(&corpus, &plan).unwrap(),
            draw_samples(&shuffled, &plan).unwrap()
        );
    }

    #[test]
    fn exhaustive_sample_is_a_permutation() {
        let corpus = synthetic_corpus(100);
        let plan = SamplePlan {
            runs: 1,
            sample_size: 100,
            seed: 1,
        };
        let sample = &draw_samples(&corpus, &plan).unwrap()[0];
        let mut sorted = sample.clone();
        sorted.sort();
        let mut expected: Vec<String> = corpus.questions().iter().map(|q| q.id.clone()).collect();
        expected.sort();
        assert_eq!(sorted, expected);
        // and it is shuffled, not the identity order
        assert_ne!(sample, &sorted);
    }

    #[test]
    fn oversized_sample_is_rejected() {
        let corpus = synthetic_corpus(10);
        let plan = SamplePlan {
            runs: 1,
            sample_size: 11,
            seed: 0,
        };
        assert!(matches!(
            draw_samples(&corpus, &plan),
            Err(CorpusError::SampleTooLarge { .. })
        ));
    }

    #[test]
    fn full_set_plan_warns_on_gsm_family() {
        let corpus = synthetic_corpus(30);
        let (plan, warning) = full_set_plan(&corpus, 42);
        assert_eq!(plan.runs, 1);
        assert_eq!(plan.sample_size, 30);
        assert!(warning.is_some());
        let aime = Corpus::from_questions(
            "aime_2025",
            DatasetVariant::Aime2025,
            (0..30)
                .map(|i| Question {
                    id: format!("a{i:02}"),
                    body: "p".to_string(),
                    gold: codec::normalize("7").unwrap(),
                    dataset: "aime_2025".to_string(),
                    variant: DatasetVariant::Aime2025,
                })
                .collect(),
        )
        .unwrap();
        let (plan, warning) = full_set_plan(&aime, 42);
        assert_eq!(plan.sample_size, 30);
        assert!(warning.is_none());
    }
}
