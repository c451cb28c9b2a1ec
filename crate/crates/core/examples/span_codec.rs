//! BIO encoding with repair of malformed sequences, and the nested label
//! linearization used by the seq2seq head.
//!
//! ```text
//! cargo run -p nerforge --example span_codec
//! ```

use nerforge::codec::{bio_to_spans, delinearize, linearize, spans_to_bio, LinearizedLabels, Tag};
use nerforge::corpus::EntitySpan;

fn main() -> nerforge::Result<()> {
    let tokens = ["Anna", "Smith", "visited", "New", "York", "City", "."];
    let spans = vec![EntitySpan::new(0, 2, "PER"), EntitySpan::new(3, 6, "LOC")];
    let labels = spans_to_bio(tokens.len(), &spans)?;
    for (t, l) in tokens.iter().zip(&labels) {
        println!("{t:<8} {l}");
    }

    // A stray I- opens a span, and a type switch inside a span splits it.
    let malformed = [
        Tag::Inside("PER"),
        Tag::Inside("PER"),
        Tag::Outside,
        Tag::Begin("LOC"),
        Tag::Inside("ORG"),
        Tag::Inside("ORG"),
    ];
    let repaired: Vec<String> = bio_to_spans(&malformed).iter().map(ToString::to_string).collect();
    println!("\nrepaired: {}", repaired.join(" "));

    let tokens = ["Bank", "of", "Charles", "Brown", "Street"];
    let nested = vec![
        EntitySpan::new(0, 5, "ORG"),
        EntitySpan::new(2, 5, "LOC"),
        EntitySpan::new(2, 4, "PER"),
    ];
    let ll = linearize(tokens.len(), &nested, 8)?;
    println!();
    for (t, stack) in tokens.iter().zip(&ll.per_token) {
        println!("{t:<8} {}", LinearizedLabels::render_token(stack));
    }
    let back: Vec<String> = delinearize(&ll).iter().map(ToString::to_string).collect();
    println!("decoded: {}", back.join(" "));
    Ok(())
}
