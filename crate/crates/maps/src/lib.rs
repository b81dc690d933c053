//! Evaluation harness for multi-layer auto-prompted self-reflection on math
//! word problems.
//!
//! A solver first answers a question with chain-of-thought prompting. When
//! the answer is wrong, a meta-prompt call asks the same model to write a
//! reflection prompt tailored to that question and failed attempt; a second
//! call then re-solves under that reflection prompt. The loop repeats up to a
//! configured depth and stops early on a correct answer. The harness runs
//! that procedure (and its baselines: direct prompting, chain-of-thought,
//! and single-pass static reflection) over question corpora, records every
//! attempt in a resumable line-delimited log, prices token usage exactly in
//! integer pico-dollars, and compares strategies with Friedman rank tests
//! and Nemenyi critical differences.
//!
//! Modules, bottom up:
//! - [`money`]: exact-decimal USD amounts and per-million-token rates.
//! - [`domain`]: questions, strategies, verdicts, attempt traces.
//! - [`codec`]: answer normalization, extraction, and exact comparison.
//! - [`prompt`]: versioned prompt templates and fill-in logic.
//! - [`provider`]: model back ends (scripted for tests, http for live runs).
//! - [`engine`]: the layered reflection loop for a single attempt.
//! - [`corpus`]: corpus loading, digests, and seeded reproducible sampling.
//! - [`analytics`]: accuracy, symbolic-loss, and rank statistics.
//! - [`runlog`]: append-only run log with resume and ordered writes.
//! - [`config`]: declarative experiment configuration.
//! - [`orchestrator`]: the (corpus x model x strategy x run) grid executor.
//! - [`report`]: deterministic accuracy/cost/rank reports.

pub mod analytics;
pub mod codec;
pub mod config;
pub mod corpus;
pub mod domain;
pub mod engine;
pub mod money;
pub mod orchestrator;
pub mod prompt;
pub mod provider;
pub mod report;
pub mod runlog;
