//! Span-level precision, recall and F1 for flat and nested predictions.
//!
//! ```text
//! cargo run -p nerforge --example evaluate
//! ```

use nerforge::corpus::EntitySpan;
use nerforge::eval::{score_flat, score_nested};

fn main() -> nerforge::Result<()> {
    let gold = vec![
        vec![EntitySpan::new(0, 2, "PER"), EntitySpan::new(4, 5, "LOC")],
        vec![EntitySpan::new(1, 3, "ORG")],
    ];
    // One exact match, one wrong type and one boundary error.
    let pred = vec![
        vec![EntitySpan::new(0, 2, "PER"), EntitySpan::new(4, 5, "ORG")],
        vec![EntitySpan::new(1, 2, "ORG")],
    ];
    let report = score_flat(&gold, &pred)?;
    print!("{}", report.table("flat"));

    let gold = vec![vec![
        EntitySpan::new(0, 4, "ORG"),
        EntitySpan::new(2, 4, "PER"),
        EntitySpan::new(3, 4, "PER"),
    ]];
    let pred = vec![vec![EntitySpan::new(0, 4, "ORG"), EntitySpan::new(2, 4, "PER")]];
    let report = score_nested(&gold, &pred)?;
    println!();
    print!("{}", report.table("nested"));
    println!("\n{}", report.to_jsonl("nested").lines().next().unwrap_or_default());
    Ok(())
}
