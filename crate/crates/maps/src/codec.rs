//! Answer extraction from model output and correctness decisions.

use num::bigint::BigInt;
use num::{BigRational, Signed, Zero};
use once_cell::sync::Lazy;
use regex::Regex;

use crate::domain::{DatasetFamily, DatasetVariant, GoldAnswer, Verdict};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("answer is empty after normalization")]
    Empty,
}

/// A number token: optional sign, digits with thousands commas, optional
/// decimal tail. Used only as the last-resort extraction rule.
static NUMBER_TOKEN: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"-?\d[\d,]*(?:\.\d+)?").expect("static regex"));

/// Pulls the final answer out of free-form model output.
///
/// Rules are tried in priority order and the first hit wins:
/// 1. the last balanced `\boxed{...}` group,
/// 2. the last `#### <rest of line>` marker,
/// 3. the last number token (GSM-family and AIME only; on MATH-500 a bare
///    number inside an expression answer would be a false positive).
///
/// Returns the raw captured string; `None` means no rule matched and the
/// output is unparseable.
pub fn extract_final_answer(output: &str, variant: DatasetVariant) -> Option<String> {
    if let Some(inner) = last_boxed(output) {
        return Some(inner);
    }
    if let Some(tail) = last_hash_marker(output) {
        return Some(tail);
    }
    match variant.family() {
        DatasetFamily::Gsm | DatasetFamily::Aime => NUMBER_TOKEN
            .find_iter(output)
            .last()
            .map(|m| m.as_str().to_string()),
        DatasetFamily::Math => None,
    }
}

/// Last `\boxed{...}` with balanced braces; nested groups stay intact.
fn last_boxed(text: &str) -> Option<String> {
    const MARKER: &str = "\\boxed{";
    let mut found = None;
    let mut from = 0;
    while let Some(rel) = text[from..].find(MARKER) {
        let open = from + rel + MARKER.len();
        let mut depth = 1usize;
        for (i, c) in text[open..].char_indices() {
            match c {
                '{' => depth += 1,
                '}' => {
                    depth -= 1;
                    if depth == 0 {
                        let inner = text[open..open + i].trim();
                        if !inner.is_empty() {
                            found = Some(inner.to_string());
                        }
                        break;
                    }
                }
                _ => {}
            }
        }
        from += rel + MARKER.len();
    }
    found
}

/// Rest of the line after the last `####` marker.
fn last_hash_marker(text: &str) -> Option<String> {
    let pos = text.rfind("####")?;
    let tail = &text[pos + 4..];
    let line = tail.lines().next().unwrap_or("").trim();
    if line.is_empty() {
        None
    } else {
        Some(line.to_string())
    }
}

/// Normalizes a raw answer string to a [`GoldAnswer`].
///
/// Cleanup: trims whitespace, strips one layer of wrapping braces at a
/// time, drops trailing periods and leading currency markers. If the
/// remainder (commas removed) parses as an integer, decimal, or fraction,
/// the canonical form is the reduced rational, so `"3/6"` and `"0.5"` both
/// canonicalize to `"1/2"`. Otherwise the canonical form is the cleaned
/// string with whitespace runs collapsed. Idempotent: normalizing a
/// canonical string reproduces it.
pub fn normalize(raw: &str) -> Result<GoldAnswer, CodecError> {
    let mut s = raw.trim();
    while let Some(inner) = strip_wrapping_braces(s) {
        s = inner.trim();
    }
    let s = s.trim_end_matches('.').trim_end();
    let numeric_candidate = strip_currency(s).replace(',', "");
    if let Some(value) = parse_rational(&numeric_candidate) {
        let canonical = render_rational(&value);
        return Ok(GoldAnswer::from_parts(canonical, Some(value)));
    }
    let collapsed = s.split_whitespace().collect::<Vec<_>>().join(" ");
    if collapsed.is_empty() {
        return Err(CodecError::Empty);
    }
    Ok(GoldAnswer::from_parts(collapsed, None))
}

/// Decides correctness: exact rational equality when both sides are
/// numeric, canonical string equality otherwise. Reflexive and symmetric;
/// never returns `Unparseable` (that verdict belongs to extraction).
pub fn compare(candidate: &GoldAnswer, gold: &GoldAnswer) -> Verdict {
    let equal = match (candidate.numeric(), gold.numeric()) {
        (Some(a), Some(b)) => a == b,
        _ => candidate.canonical() == gold.canonical(),
    };
    if equal {
        Verdict::Correct
    } else {
        Verdict::Incorrect
    }
}

/// Variant-specific answer-domain check. AIME answers must be integers in
/// 0..=999; candidates outside that domain are scored incorrect without
/// comparing to gold. Other variants accept any normalized answer.
pub fn admissible(candidate: &GoldAnswer, variant: DatasetVariant) -> bool {
    match variant.family() {
        DatasetFamily::Aime => match candidate.numeric() {
            Some(value) if value.is_integer() => {
                let n = value.to_integer();
                !n.is_negative() && n <= BigInt::from(999)
            }
            _ => false,
        },
        DatasetFamily::Gsm | DatasetFamily::Math => true,
    }
}

/// Full scoring pipeline for one model output: extract, normalize, check
/// the answer domain, compare. Returns the normalized candidate (when one
/// exists) and the verdict.
pub fn judge(
    output: &str,
    gold: &GoldAnswer,
    variant: DatasetVariant,
) -> (Option<GoldAnswer>, Verdict) {
    let Some(raw) = extract_final_answer(output, variant) else {
        return (None, Verdict::Unparseable);
    };
    let Ok(candidate) = normalize(&raw) else {
        return (None, Verdict::Unparseable);
    };
    if !admissible(&candidate, variant) {
        return (Some(candidate), Verdict::Incorrect);
    }
    let verdict = compare(&candidate, gold);
    (Some(candidate), verdict)
}

/// Returns the content inside `{...}` when the braces wrap the whole
/// string, i.e. the opening brace closes exactly at the final character.
fn strip_wrapping_braces(s: &str) -> Option<&str> {
    let rest = s.strip_prefix('{')?;
    let mut depth = 1usize;
    for (i, c) in rest.char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return if i == rest.len() - 1 {
                        Some(&rest[..i])
                    } else {
                        None
                    };
                }
            }
            _ => {}
        }
    }
    None
}

/// Drops leading currency markers (`$`, `\$`, `€`, `£`), keeping the sign.
fn strip_currency(s: &str) -> String {
    let (negative, rest) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let rest = rest.trim_start();
    let rest = rest.strip_prefix("\\$").unwrap_or(rest);
    let rest = rest.trim_start_matches(['$', '€', '£']).trim_start();
    if negative {
        format!("-{rest}")
    } else {
        rest.to_string()
    }
}

/// Parses `"14"`, `"-3.5"`, `".5"`, or `"3/6"` into an exact rational.
/// The input must already be comma- and currency-free.
fn parse_rational(s: &str) -> Option<BigRational> {
    if let Some((numer, denom)) = s.split_once('/') {
        let numer: BigInt = numer.trim().parse().ok()?;
        let denom: BigInt = denom.trim().parse().ok()?;
        if denom.is_zero() {
            return None;
        }
        return Some(BigRational::new(numer, denom));
    }
    let (negative, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (whole, frac) = match body.split_once('.') {
        Some((w, f)) => (w, f),
        None => (body, ""),
    };
    if whole.is_empty() && frac.is_empty() {
        return None;
    }
    let all_digits =
        whole.bytes().all(|b| b.is_ascii_digit()) && frac.bytes().all(|b| b.is_ascii_digit());
    if !all_digits {
        return None;
    }
    let mut numer: BigInt = format!("{whole}{frac}").parse().ok()?;
    if negative {
        numer = -numer;
    }
    let denom = BigInt::from(10u32).pow(frac.len() as u32);
    Some(BigRational::new(numer, denom))
}

/// Canonical rendering: bare integer, or `numer/denom` in lowest terms
/// with the sign on the numerator.
fn render_rational(value: &BigRational) -> String {
    if value.is_integer() {
        value.to_integer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}
