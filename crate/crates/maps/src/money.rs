//! Exact-decimal money and per-token pricing.
//!
//! Costs are priced as `tokens × usd_per_1m_tokens / 1e6`. To keep that
//! product exact in integer arithmetic, amounts are stored in pico-dollars
//! (1e-12 USD) and rates in micro-dollars per million tokens: the product of
//! a token count and a micro-USD rate lands exactly on the pico-dollar grid.
//! No binary floating point is involved anywhere, so totals are bit-stable.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign};
use std::path::Path;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::domain::TokenUsage;

const PICOS_PER_USD: i128 = 1_000_000_000_000;

/// Maximum fractional digits accepted when parsing a USD amount.
const MAX_AMOUNT_DECIMALS: usize = 12;
/// Maximum fractional digits accepted when parsing a per-million-token rate.
const MAX_RATE_DECIMALS: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MoneyError {
    #[error("invalid decimal amount {0:?}: {1}")]
    BadDecimal(String, String),
    #[error("unknown model {0:?} in price sheet")]
    UnknownModel(String),
    #[error("negative rate {0:?}")]
    NegativeRate(String),
}

/// An exact USD amount held as integer pico-dollars (1e-12 USD).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Money(i128);

impl Money {
    pub const ZERO: Money = Money(0);

    pub fn from_picos(picos: i128) -> Money {
        Money(picos)
    }

    pub fn picos(self) -> i128 {
        self.0
    }

    /// Parses a plain decimal USD string such as `"0.025040"` or `"-1.5"`.
    /// Accepts at most 12 fractional digits.
    pub fn parse_usd(s: &str) -> Result<Money, MoneyError> {
        let picos = parse_scaled_decimal(s, MAX_AMOUNT_DECIMALS as u32)?;
        Ok(Money(picos))
    }

    /// Exact decimal rendering, trailing fractional zeros trimmed.
    /// `Money::parse_usd(&m.to_decimal_string())` round-trips losslessly.
    pub fn to_decimal_string(self) -> String {
        let neg = self.0 < 0;
        let abs = self.0.unsigned_abs();
        let whole = abs / PICOS_PER_USD as u128;
        let frac = abs % PICOS_PER_USD as u128;
        let sign = if neg { "-" } else { "" };
        if frac == 0 {
            return format!("{sign}{whole}");
        }
        let frac = format!("{frac:012}");
        format!("{sign}{whole}.{}", frac.trim_end_matches('0'))
    }

    /// Fixed-point rendering with `decimals` fractional digits, rounding
    /// half away from zero. `m.format_usd(6)` gives the ledger's canonical
    /// six-decimal presentation, e.g. `"0.025040"`.
    pub fn format_usd(self, decimals: u32) -> String {
        assert!(decimals <= 12, "at most 12 decimals are representable");
        let neg = self.0 < 0;
        let abs = self.0.unsigned_abs();
        let unit = 10u128.pow(12 - decimals);
        let rounded = (abs + unit / 2) / unit;
        let scale = 10u128.pow(decimals);
        let whole = rounded / scale;
        let frac = rounded % scale;
        let sign = if neg { "-" } else { "" };
        if decimals == 0 {
            format!("{sign}{whole}")
        } else {
            format!("{sign}{whole}.{frac:0width$}", width = decimals as usize)
        }
    }

    /// Scales by `numer / denom`, rounding half away from zero.
    /// Used for per-100-question normalization in reports.
    pub fn scale(self, numer: u64, denom: u64) -> Money {
        assert!(denom > 0, "zero denominator");
        let neg = self.0 < 0;
        let abs = self.0.unsigned_abs() * numer as u128;
        let rounded = (abs + denom as u128 / 2) / denom as u128;
        let v = rounded as i128;
        Money(if neg { -v } else { v })
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl std::iter::Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, Add::add)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_decimal_string())
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_decimal_string())
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Money, D::Error> {
        let s = String::deserialize(deserializer)?;
        Money::parse_usd(&s).map_err(D::Error::custom)
    }
}

/// A price in USD per million tokens, held as integer micro-USD per million
/// tokens so that `rate.cost(tokens)` is exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Rate {
    micro_usd_per_1m: i64,
}

impl Rate {
    /// Parses a decimal rate such as `"0.15"` (USD per million tokens).
    /// At most 6 fractional digits; must be non-negative.
    pub fn parse(s: &str) -> Result<Rate, MoneyError> {
        let micros = parse_scaled_decimal(s, MAX_RATE_DECIMALS as u32)?;
        if micros < 0 {
            return Err(MoneyError::NegativeRate(s.to_string()));
        }
        Ok(Rate {
            micro_usd_per_1m: micros as i64,
        })
    }

    /// Exact cost of `tokens` tokens at this per-million rate.
    ///
    /// tokens × (micro-USD / 1M tokens) = tokens × micro-USD × 1e-6
    /// = tokens × rate-in-pico-USD-per-token, hence the direct product.
    pub fn cost(self, tokens: u64) -> Money {
        Money(tokens as i128 * self.micro_usd_per_1m as i128)
    }

    pub fn to_decimal_string(self) -> String {
        Money(self.micro_usd_per_1m as i128 * 1_000_000).to_decimal_string()
    }
}

impl Serialize for Rate {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_decimal_string())
    }
}

impl<'de> Deserialize<'de> for Rate {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Rate, D::Error> {
        // Accept "0.15" (exact) or a bare JSON/TOML number, which is
        // re-rendered through its shortest round-trip form before parsing.
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Number(f64),
        }
        let raw = Raw::deserialize(deserializer)?;
        let s = match raw {
            Raw::Text(s) => s,
            Raw::Number(n) => n.to_string(),
        };
        Rate::parse(&s).map_err(D::Error::custom)
    }
}

fn parse_scaled_decimal(s: &str, max_decimals: u32) -> Result<i128, MoneyError> {
    let err = |msg: &str| MoneyError::BadDecimal(s.to_string(), msg.to_string());
    let t = s.trim();
    if t.is_empty() {
        return Err(err("empty"));
    }
    let (neg, t) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let (whole, frac) = match t.split_once('.') {
        Some((w, f)) => (w, f),
        None => (t, ""),
    };
    if whole.is_empty() && frac.is_empty() {
        return Err(err("no digits"));
    }
    if !whole.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
        return Err(err("non-digit character"));
    }
    if frac.len() > max_decimals as usize {
        return Err(err("too many fractional digits"));
    }
    let mut value: i128 = 0;
    for c in whole.chars() {
        value = value
            .checked_mul(10)
            .and_then(|v| v.checked_add((c as u8 - b'0') as i128))
            .ok_or_else(|| err("overflow"))?;
    }
    for c in frac.chars() {
        value = value
            .checked_mul(10)
            .and_then(|v| v.checked_add((c as u8 - b'0') as i128))
            .ok_or_else(|| err("overflow"))?;
    }
    let shift = max_decimals - frac.len() as u32;
    value = value
        .checked_mul(10i128.pow(shift))
        .ok_or_else(|| err("overflow"))?;
    Ok(if neg { -value } else { value })
}

/// Per-model input/output rates in USD per million tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriceEntry {
    pub usd_per_1m_input: Rate,
    pub usd_per_1m_output: Rate,
}

impl PriceEntry {
    pub fn cost(&self, usage: TokenUsage) -> Money {
        self.usd_per_1m_input.cost(usage.prompt_tokens)
            + self.usd_per_1m_output.cost(usage.completion_tokens)
    }
}

/// Model id → rates. Lookups for unknown models are an error, never a
/// silent zero.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriceSheet {
    entries: BTreeMap<String, PriceEntry>,
}

impl PriceSheet {
    pub fn new() -> PriceSheet {
        PriceSheet::default()
    }

    pub fn insert(&mut self, model_id: impl Into<String>, entry: PriceEntry) {
        self.entries.insert(model_id.into(), entry);
    }

    pub fn get(&self, model_id: &str) -> Result<&PriceEntry, MoneyError> {
        self.entries
            .get(model_id)
            .ok_or_else(|| MoneyError::UnknownModel(model_id.to_string()))
    }

    pub fn contains(&self, model_id: &str) -> bool {
        self.entries.contains_key(model_id)
    }

    pub fn models(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Loads a JSON price sheet:
    /// `{"model-id": {"usd_per_1m_input": "0.15", "usd_per_1m_output": "0.60"}}`
    pub fn from_json_file(path: &Path) -> Result<PriceSheet, String> {
        let text =
            std::fs::read_to_string(path).map_err(|e| format!("read {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("parse {}: {e}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_cost_is_exact() {
        let rate = Rate::parse("0.15").unwrap();
        assert_eq!(rate.cost(1_000_000), Money::parse_usd("0.15").unwrap());
        assert_eq!(rate.cost(0), Money::ZERO);
        // one token at $0.15/1M is 0.15 micro-USD, exactly representable
        assert_eq!(rate.cost(1).to_decimal_string(), "0.00000015");
    }

    #[test]
    fn money_formatting() {
        let m = Money::parse_usd("0.02504").unwrap();
        assert_eq!(m.format_usd(6), "0.025040");
        assert_eq!(m.to_decimal_string(), "0.02504");
        assert_eq!(Money::ZERO.format_usd(6), "0.000000");
        let m = Money::parse_usd("1.0000005").unwrap();
        assert_eq!(m.format_usd(6), "1.000001"); // half away from zero
    }

    #[test]
    fn money_roundtrip() {
        for s in ["0", "0.15", "12.345678901234", "-3.5", "1000"] {
            let m = Money::parse_usd(s).unwrap();
            assert_eq!(Money::parse_usd(&m.to_decimal_string()).unwrap(), m);
        }
    }

    #[test]
    fn rate_rejects_bad_input() {
        assert!(Rate::parse("-0.1").is_err());
        assert!(Rate::parse("0.1234567").is_err());
        assert!(Rate::parse("abc").is_err());
        assert!(Rate::parse("").is_err());
    }

    #[test]
    fn unknown_model_is_an_error() {
        let sheet = PriceSheet::new();
        assert!(matches!(
            sheet.get("nope"),
            Err(MoneyError::UnknownModel(_))
        ));
    }

    #[test]
    fn cost_is_linear() {
        let entry = PriceEntry {
            usd_per_1m_input: Rate::parse("0.15").unwrap(),
            usd_per_1m_output: Rate::parse("0.60").unwrap(),
        };
        let a = TokenUsage::new(123, 456);
        let b = TokenUsage::new(789, 12);
        assert_eq!(entry.cost(a) + entry.cost(b), entry.cost(a + b));
    }
}
