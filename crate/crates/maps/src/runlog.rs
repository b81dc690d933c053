//! Append-only JSONL run log with resume support and deterministic
//! write ordering.

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::{AttemptTrace, DatasetVariant};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, thiserror::Error)]
pub enum RunLogError {
    #[error("io at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt record at {path}:{line}: {detail}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        detail: String,
    },
    #[error("unsupported log schema version {found:?} at {path}:{line}, expected {expected:?}")]
    SchemaVersion {
        found: String,
        expected: String,
        path: PathBuf,
        line: usize,
    },
}

impl RunLogError {
    fn io(path: &Path, source: std::io::Error) -> RunLogError {
        RunLogError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// One logged attempt: the full trace plus the experiment coordinates
/// that are not part of the trace itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: String,
    pub dataset: String,
    pub variant: DatasetVariant,
    pub model_id: String,
    pub trace: AttemptTrace,
}

impl RunRecord {
    pub fn new(
        dataset: impl Into<String>,
        variant: DatasetVariant,
        model_id: impl Into<String>,
        trace: AttemptTrace,
    ) -> RunRecord {
        RunRecord {
            schema_version: SCHEMA_VERSION.to_string(),
            dataset: dataset.into(),
            variant,
            model_id: model_id.into(),
            trace,
        }
    }

    pub fn key(&self) -> RunKey {
        RunKey {
            dataset: self.dataset.clone(),
            variant: self.variant.as_str().to_string(),
            model_id: self.model_id.clone(),
            strategy: self.trace.strategy.label(),
            run_index: self.trace.run_index,
            question_id: self.trace.question_id.clone(),
        }
    }
}

/// Identity of one attempt inside an experiment grid; the resume unit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RunKey {
    pub dataset: String,
    pub variant: String,
    pub model_id: String,
    pub strategy: String,
    pub run_index: u32,
    pub question_id: String,
}

/// Result of a lenient read: every intact record, the byte length of the
/// intact prefix, and a description of a dropped trailing fragment if the
/// file ends mid-record (the signature of a killed writer).
#[derive(Debug)]
pub struct LenientRead {
    pub records: Vec<RunRecord>,
    pub clean_len: u64,
    pub dropped_tail: Option<String>,
}

fn parse_line(path: &Path, line_no: usize, line: &str) -> Result<RunRecord, RunLogError> {
    let record: RunRecord = serde_json::from_str(line).map_err(|e| RunLogError::Corrupt {
        path: path.to_path_buf(),
        line: line_no,
        detail: e.to_string(),
    })?;
    if record.schema_version != SCHEMA_VERSION {
        return Err(RunLogError::SchemaVersion {
            found: record.schema_version,
            expected: SCHEMA_VERSION.to_string(),
            path: path.to_path_buf(),
            line: line_no,
        });
    }
    Ok(record)
}

/// Strict read: every line must parse. Use for reporting, where a corrupt
/// log should fail loudly rather than silently undercount.
pub fn read_records(path: &Path) -> Result<Vec<RunRecord>, RunLogError> {
    let lenient = read_records_lenient(path)?;
    if let Some(detail) = lenient.dropped_tail {
        return Err(RunLogError::Corrupt {
            path: path.to_path_buf(),
            line: lenient.records.len() + 1,
            detail,
        });
    }
    Ok(lenient.records)
}

/// Lenient read: tolerates a corrupt or unterminated final line (a write
/// cut short by a crash) and reports the clean prefix length so a resume
/// can truncate before appending. Corruption anywhere else is an error.
pub fn read_records_lenient(path: &Path) -> Result<LenientRead, RunLogError> {
    let text = match std::fs::read_to_string(path) {
        Ok(text) => text,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Ok(LenientRead {
                records: Vec::new(),
                clean_len: 0,
                dropped_tail: None,
            })
        }
        Err(e) => return Err(RunLogError::io(path, e)),
    };
    let mut records = Vec::new();
    let mut clean_len = 0u64;
    let mut offset = 0usize;
    let mut line_no = 0usize;
    while offset < text.len() {
        line_no += 1;
        let rest = &text[offset..];
        let (line, consumed, terminated) = match rest.find('\n') {
            Some(i) => (&rest[..i], i + 1, true),
            None => (rest, rest.len(), false),
        };
        let is_last = offset + consumed >= text.len();
        match parse_line(path, line_no, line) {
            Ok(record) if terminated => {
                records.push(record);
                clean_len = (offset + consumed) as u64;
            }
            Ok(_) => {
                // complete JSON but no trailing newline: the flush was cut
                // off; drop it so the rewrite is not concatenated onto it
                return Ok(LenientRead {
                    records,
                    clean_len,
                    dropped_tail: Some(format!(
                        "line {line_no} has no trailing newline; dropped for rewrite"
                    )),
                });
            }
            Err(e) if is_last => {
                return Ok(LenientRead {
                    records,
                    clean_len,
                    dropped_tail: Some(e.to_string()),
                });
            }
            Err(e) => return Err(e),
        }
        offset += consumed;
    }
    Ok(LenientRead {
        records,
        clean_len,
        dropped_tail: None,
    })
}

/// Keys already present in a log, for resume skip-lists. Tolerates a
/// corrupt tail.
pub fn load_existing_keys(path: &Path) -> Result<(HashSet<RunKey>, LenientRead), RunLogError> {
    let lenient = read_records_lenient(path)?;
    let keys = lenient.records.iter().map(RunRecord::key).collect();
    Ok((keys, lenient))
}

/// Keys that appear more than once, in first-appearance order.
pub fn duplicate_keys(records: &[RunRecord]) -> Vec<RunKey> {
    let mut seen = HashSet::new();
    let mut reported = HashSet::new();
    let mut duplicates = Vec::new();
    for record in records {
        let key = record.key();
        if !seen.insert(key.clone()) && reported.insert(key.clone()) {
            duplicates.push(key);
        }
    }
    duplicates
}

/// Line-buffered JSONL writer; flushes after every record so a kill loses
/// at most the record in flight.
pub struct LogWriter {
    writer: BufWriter<File>,
    path: PathBuf,
}

impl LogWriter {
    /// Creates or truncates the log.
    pub fn create(path: &Path) -> Result<LogWriter, RunLogError> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| RunLogError::io(path, e))?;
            }
        }
        let file = File::create(path).map_err(|e| RunLogError::io(path, e))?;
        Ok(LogWriter {
            writer: BufWriter::new(file),
            path: path.to_path_buf(),
        })
    }

    /// Opens for appending after truncating to `clean_len`, discarding a
    /// partial final line left by a crash.
    pub fn append_truncating(path: &Path, clean_len: u64) -> Result<LogWriter, RunLogError> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| RunLogError::io(path, e))?;
            }
        }
        let mut file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(false)
            .open(path)
            .map_err(|e| RunLogError::io(path, e))?;
        file.set_len(clean_len)
            .map_err(|e| RunLogError::io(path, e))?;
        file.seek(SeekFrom::End(0))
            .map_err(|e| RunLogError::io(path, e))?;
        Ok(LogWriter {
            writer: BufWriter::new(file),
            path: path.to_path_buf(),
        })
    }

    pub fn write(&mut self, record: &RunRecord) -> Result<(), RunLogError> {
        let line = serde_json::to_string(record).expect("run records serialize");
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.write_all(b"\n"))
            .and_then(|_| self.writer.flush())
            .map_err(|e| RunLogError::io(&self.path, e))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Reorders concurrently produced records back into their assigned
/// sequence before writing, so the log bytes depend only on the work
/// grid, never on thread scheduling.
pub struct OrderedWriter {
    inner: LogWriter,
    next: u64,
    pending: BTreeMap<u64, RunRecord>,
}

impl OrderedWriter {
    pub fn new(inner: LogWriter) -> OrderedWriter {
        OrderedWriter {
            inner,
            next: 0,
            pending: BTreeMap::new(),
        }
    }

    /// Accepts a record produced for sequence slot `seq`; writes it and
    /// any now-contiguous successors.
    pub fn push(&mut self, seq: u64, record: RunRecord) -> Result<(), RunLogError> {
        self.pending.insert(seq, record);
        while let Some(record) = self.pending.remove(&self.next) {
            self.inner.write(&record)?;
            self.next += 1;
        }
        Ok(())
    }

    pub fn buffered(&self) -> usize {
        self.pending.len()
    }

    /// Finishes the writer. Records still buffered behind a gap (their
    /// predecessor failed and never arrived) are dropped, keeping the log
    /// a clean prefix of the grid order; the count is returned so the
    /// caller can report the rework a resume will redo.
    pub fn finish(self) -> Result<usize, RunLogError> {
        Ok(self.pending.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{AttemptTrace, LayerRecord, StrategySpec, TokenUsage, Verdict};
    use crate::money::Money;

    fn trace(question_id: &str, run_index: u32) -> AttemptTrace {
        let layer = LayerRecord {
            layer_index: 0,
            reflection_prompt: None,
            model_output: "the answer is 3. #### 3".to_string(),
            extracted: Some("3".to_string()),
            verdict: Verdict::Correct,
            usage: TokenUsage::new(10, 5),
            meta_prompt_fallback: false,
        };
        AttemptTrace {
            question_id: question_id.to_string(),
            strategy: StrategySpec::baseline(),
            run_index,
            layers: vec![layer],
            final_verdict: Verdict::Correct,
            total_usage: TokenUsage::new(10, 5),
            total_cost_usd: Money::ZERO,
        }
    }

    fn record(question_id: &str, run_index: u32) -> RunRecord {
        RunRecord::new(
            "gsm8k",
            DatasetVariant::Gsm8k,
            "scripted-model",
            trace(question_id, run_index),
        )
    }

    #[test]
    fn write_then_read_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.jsonl");
        let mut writer = LogWriter::create(&path).unwrap();
        let records: Vec<RunRecord> = (0..5).map(|i| record(&format!("q{i}"), 0)).collect();
        for r in &records {
            writer.write(r).unwrap();
        }
        drop(writer);
        assert_eq!(read_records(&path).unwrap(), records);
    }

    #[test]
    fn missing_file_reads_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("absent.jsonl");
        let lenient = read_records_lenient(&path).unwrap();
        assert!(lenient.records.is_empty());
        assert_eq!(lenient.clean_len, 0);
    }

    #[test]
    fn lenient_read_tolerates_only_a_trailing_fragment() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.jsonl");
        let mut writer = LogWriter::create(&path).unwrap();
        writer.write(&record("q0", 0)).unwrap();
        writer.write(&record("q1", 0)).unwrap();
        drop(writer);
        let clean = std::fs::metadata(&path).unwrap().len();
        let mut file = OpenOptions::new().append(true).open(&path).unwrap();
        file.write_all(b"{\"schema_version\":\"1\",\"dataset")
            .unwrap();
        drop(file);

        let lenient = read_records_lenient(&path).unwrap();
        assert_eq!(lenient.records.len(), 2);
        assert_eq!(lenient.clean_len, clean);
        assert!(lenient.dropped_tail.is_some());
        // strict read refuses the same file
        assert!(matches!(
            read_records(&path),
            Err(RunLogError::Corrupt { .. })
        ));

        // resume: truncate and append, then the file is clean again
        let mut writer = LogWriter::append_truncating(&path, lenient.clean_len).unwrap();
        writer.write(&record("q2", 0)).unwrap();
        drop(writer);
        let records = read_records(&path).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(records[2].trace.question_id, "q2");
    }

    #[test]
    fn interior_corruption_is_fatal_even_leniently() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.jsonl");
        let good = serde_json::to_string(&record("q0", 0)).unwrap();
        std::fs::write(&path, format!("{good}\nnot json\n{good}\n")).unwrap();
        assert!(matches!(
            read_records_lenient(&path),
            Err(RunLogError::Corrupt { line: 2, .. })
        ));
    }

    #[test]
    fn schema_version_is_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.jsonl");
        let mut value = serde_json::to_value(record("q0", 0)).unwrap();
        value["schema_version"] = "99".into();
        std::fs::write(&path, format!("{value}\n{value}\n")).unwrap();
        assert!(matches!(
            read_records_lenient(&path),
            Err(RunLogError::SchemaVersion { line: 1, .. })
        ));
    }

    #[test]
    fn ordered_writer_restores_sequence_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.jsonl");
        let mut writer = OrderedWriter::new(LogWriter::create(&path).unwrap());
        for seq in [3u64, 0, 2, 1, 4] {
            writer.push(seq, record(&format!("q{seq}"), 0)).unwrap();
        }
        assert_eq!(writer.buffered(), 0);
        assert_eq!(writer.finish().unwrap(), 0);
        let ids: Vec<String> = read_records(&path)
            .unwrap()
            .into_iter()
            .map(|r| r.trace.question_id)
            .collect();
        assert_eq!(ids, ["q0", "q1", "q2", "q3", "q4"]);
    }

    #[test]
    fn ordered_writer_drops_records_stranded_behind_a_gap() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.jsonl");
        let mut writer = OrderedWriter::new(LogWriter::create(&path).unwrap());
        writer.push(0, record("q0", 0)).unwrap();
        writer.push(2, record("q2", 0)).unwrap(); // seq 1 never arrives
        assert_eq!(writer.buffered(), 1);
        assert_eq!(writer.finish().unwrap(), 1);
        let records = read_records(&path).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].trace.question_id, "q0");
    }

    #[test]
    fn duplicate_keys_are_detected() {
        let records = vec![record("q0", 0), record("q1", 0), record("q0", 0)];
        let dups = duplicate_keys(&records);
        assert_eq!(dups.len(), 1);
        assert_eq!(dups[0].question_id, "q0");
        assert!(duplicate_keys(&records[..2]).is_empty());
        // same question under a different run index is not a duplicate
        let distinct = vec![record("q0", 0), record("q0", 1)];
        assert!(duplicate_keys(&distinct).is_empty());
    }
}
