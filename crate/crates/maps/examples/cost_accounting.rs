//! Exact token-cost accounting: integer pico-dollar arithmetic, per-model
//! price sheets, usage ledgers, and report-grade formatting.

use maps::analytics::cost_of;
use maps::domain::TokenUsage;
use maps::money::{Money, PriceEntry, PriceSheet, Rate};
use maps::provider::UsageLedger;

fn main() {
    // rates are USD per million tokens, parsed from exact decimal strings
    let mut prices = PriceSheet::new();
    prices.insert(
        "small-model",
        PriceEntry {
            usd_per_1m_input: Rate::parse("0.15").unwrap(),
            usd_per_1m_output: Rate::parse("0.60").unwrap(),
        },
    );
    prices.insert(
        "large-model",
        PriceEntry {
            usd_per_1m_input: Rate::parse("2.50").unwrap(),
            usd_per_1m_output: Rate::parse("10").unwrap(),
        },
    );

    // token x rate products land exactly on the pico-dollar grid: no floats
    let entry = prices.get("small-model").unwrap();
    println!("one input token:  {} usd", entry.usd_per_1m_input.cost(1));
    println!(
        "1M input tokens:  {} usd",
        entry.usd_per_1m_input.cost(1_000_000)
    );
    println!(
        "1M in + 1M out:   {} usd",
        entry.cost(TokenUsage::new(1_000_000, 1_000_000))
    );

    // a ledger accumulates usage per model across an experiment
    let mut ledger = UsageLedger::new();
    ledger.add("small-model", TokenUsage::new(125_000, 40_000));
    ledger.add("small-model", TokenUsage::new(75_000, 12_000));
    ledger.add("large-model", TokenUsage::new(9_000, 3_000));
    let total = cost_of(&ledger, &prices).unwrap();
    println!("\nledger total:     {} usd", total);

    // reports print six decimals, rounding half away from zero
    println!("formatted:        {} usd", total.format_usd(6));
    println!(
        "per 100 questions when the ledger covered 260 attempts: {} usd",
        total.scale(100, 260).format_usd(6)
    );

    // equality is exact: a sum of parts always matches the whole
    let whole = entry.cost(TokenUsage::new(123_456, 654_321));
    let parts =
        entry.cost(TokenUsage::new(123_000, 654_000)) + entry.cost(TokenUsage::new(456, 321));
    assert_eq!(whole, parts);
    println!("\nsplit-vs-whole check: {} == {}", whole, parts);
    assert_eq!(
        Money::parse_usd("0.02504").unwrap().format_usd(6),
        "0.025040"
    );
}
