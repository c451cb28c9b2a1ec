//! Conversions between span annotations and per-token label sequences.
//!
//! Flat annotation uses BIO labels decoded with a single repair rule: an
//! `I-X` that does not continue an open `X` span opens a new one. Nested
//! annotation is linearized per token into the labels of every span covering
//! that token, outermost first, which is exactly the target sequence the
//! nested decoder is trained to emit.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::EntitySpan;
use crate::error::{Error, Result};

/// Default cap on labels emitted for one token.
pub const DEFAULT_MAX_DEPTH: usize = 16;

/// Terminates every per-token nested label sequence.
pub const END_OF_WORD: &str = "<eow>";

/// A BIO tag with an arbitrary entity-type payload.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag<T> {
    Outside,
    Begin(T),
    Inside(T),
}

pub type Label = Tag<String>;

impl<T> Tag<T> {
    pub fn etype(&self) -> Option<&T> {
        match self {
            Tag::Outside => None,
            Tag::Begin(t) | Tag::Inside(t) => Some(t),
        }
    }

    pub fn as_ref(&self) -> Tag<&T> {
        match self {
            Tag::Outside => Tag::Outside,
            Tag::Begin(t) => Tag::Begin(t),
            Tag::Inside(t) => Tag::Inside(t),
        }
    }
}

impl<T: AsRef<str>> Tag<T> {
    pub fn to_owned_label(&self) -> Label {
        match self {
            Tag::Outside => Tag::Outside,
            Tag::Begin(t) => Tag::Begin(t.as_ref().to_string()),
            Tag::Inside(t) => Tag::Inside(t.as_ref().to_string()),
        }
    }
}

impl<T: fmt::Display> fmt::Display for Tag<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Outside => f.write_str("O"),
            Tag::Begin(t) => write!(f, "B-{t}"),
            Tag::Inside(t) => write!(f, "I-{t}"),
        }
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "O" {
            return Ok(Tag::Outside);
        }
        let invalid = || Error::UnknownLabel {
            label: s.to_string(),
            inventory: "the BIO scheme".to_string(),
        };
        let (prefix, etype) = s.split_once('-').ok_or_else(invalid)?;
        if !is_valid_etype(etype) {
            return Err(invalid());
        }
        match prefix {
            "B" => Ok(Tag::Begin(etype.to_string())),
            "I" => Ok(Tag::Inside(etype.to_string())),
            _ => Err(invalid()),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Entity types are non-empty and free of whitespace and the `|` separator.
pub fn is_valid_etype(etype: &str) -> bool {
    !etype.is_empty() && !etype.chars().any(|c| c.is_whitespace() || c == '|')
}

/// Canonical order of nested spans: ascending start, then descending length,
/// then ascending entity type.
pub fn canonical_cmp(a: &EntitySpan, b: &EntitySpan) -> Ordering {
    a.start
        .cmp(&b.start)
        .then_with(|| b.end.cmp(&a.end))
        .then_with(|| a.etype.cmp(&b.etype))
}

fn check_bounds(n_tokens: usize, span: &EntitySpan) -> Result<()> {
    if span.start >= span.end || span.end > n_tokens || !is_valid_etype(&span.etype) {
        return Err(Error::InvalidSpan(format!(
            "{span} in a sentence of {n_tokens} tokens"
        )));
    }
    Ok(())
}

/// Encodes disjoint spans as a BIO label sequence.
pub fn spans_to_bio(n_tokens: usize, spans: &[EntitySpan]) -> Result<Vec<Label>> {
    let mut sorted: Vec<&EntitySpan> = spans.iter().collect();
    sorted.sort();
    for span in &sorted {
        check_bounds(n_tokens, span)?;
    }
    for pair in sorted.windows(2) {
        if pair[1].start < pair[0].end {
            return Err(Error::Overlap {
                first: pair[0].clone(),
                second: pair[1].clone(),
            });
        }
    }
    let mut labels = vec![Tag::Outside; n_tokens];
    for span in sorted {
        labels[span.start] = Tag::Begin(span.etype.clone());
        for label in &mut labels[span.start + 1..span.end] {
            *label = Tag::Inside(span.etype.clone());
        }
    }
    Ok(labels)
}

/// Decodes a BIO (or IOB1) label sequence into spans. Total: invalid
/// sequences are repaired by letting a stray `I-X` open a new span.
pub fn bio_to_spans<T: AsRef<str>>(labels: &[Tag<T>]) -> Vec<EntitySpan> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, &str)> = None;
    for (i, label) in labels.iter().enumerate() {
        let next = match label {
            Tag::Outside => None,
            Tag::Begin(t) => Some((i, t.as_ref())),
            Tag::Inside(t) => match open {
                Some((start, etype)) if etype == t.as_ref() => Some((start, etype)),
                _ => Some((i, t.as_ref())),
            },
        };
        if let Some((start, etype)) = open {
            if next.map(|(s, _)| s) != Some(start) {
                spans.push(EntitySpan::new(start, i, etype));
            }
        }
        open = next;
    }
    if let Some((start, etype)) = open {
        spans.push(EntitySpan::new(start, labels.len(), etype));
    }
    spans
}

/// Per-token nested label sequences. Each token's list holds one `B-X`/`I-X`
/// label per span covering it, outermost first; the `<eow>` terminator is
/// implicit.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LinearizedLabels {
    pub per_token: Vec<Vec<Label>>,
}

impl LinearizedLabels {
    pub fn len(&self) -> usize {
        self.per_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_token.is_empty()
    }

    /// Renders one token's labels as the nested file annotation column.
    pub fn render_token(labels: &[Label]) -> String {
        if labels.is_empty() {
            return "O".to_string();
        }
        labels
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("|")
    }

    pub fn parse_token(ann: &str) -> Result<Vec<Label>> {
        if ann == "O" {
            return Ok(Vec::new());
        }
        ann.split('|')
            .map(|part| match part.parse::<Label>()? {
                Tag::Outside => Err(Error::UnknownLabel {
                    label: ann.to_string(),
                    inventory: "nested annotations (`O` cannot be combined)".to_string(),
                }),
                label => Ok(label),
            })
            .collect()
    }
}

/// Checks that spans are in bounds, unique and pairwise non-crossing.
/// Returns them in canonical order.
pub fn check_non_crossing(n_tokens: usize, spans: &[EntitySpan]) -> Result<Vec<EntitySpan>> {
    let mut sorted = spans.to_vec();
    sorted.sort_by(canonical_cmp);
    for span in &sorted {
        check_bounds(n_tokens, span)?;
    }
    for pair in sorted.windows(2) {
        if pair[0] == pair[1] {
            return Err(Error::InvalidSpan(format!("duplicate span {}", pair[0])));
        }
    }
    let mut stack: Vec<&EntitySpan> = Vec::new();
    for span in &sorted {
        while stack.last().is_some_and(|top| top.end <= span.start) {
            stack.pop();
        }
        if let Some(top) = stack.last() {
            if span.end > top.end {
                return Err(Error::Crossing {
                    first: (*top).clone(),
                    second: span.clone(),
                });
            }
        }
        stack.push(span);
    }
    Ok(sorted)
}

/// Linearizes a non-crossing span set into per-token label sequences.
pub fn linearize(
    n_tokens: usize,
    spans: &[EntitySpan],
    max_depth: usize,
) -> Result<LinearizedLabels> {
    let sorted = check_non_crossing(n_tokens, spans)?;
    let mut per_token: Vec<Vec<Label>> = vec![Vec::new(); n_tokens];
    for span in &sorted {
        per_token[span.start].push(Tag::Begin(span.etype.clone()));
        for labels in &mut per_token[span.start + 1..span.end] {
            labels.push(Tag::Inside(span.etype.clone()));
        }
    }
    for (token, labels) in per_token.iter().enumerate() {
        if labels.len() > max_depth {
            return Err(Error::DepthOverflow {
                token,
                depth: labels.len(),
                max_depth,
            });
        }
    }
    Ok(LinearizedLabels { per_token })
}

/// Reconstructs spans from per-token label sequences. Total: any sequence is
/// accepted and the result is non-crossing by construction.
///
/// Slot `k` of a token's list refers to the `k`-th open span. `B-X` at slot
/// `k` closes slots `k..` and opens `X`; `I-X` continues slot `k` when it
/// holds `X` and otherwise behaves like `B-X`. Slots beyond the token's label
/// count are closed before the token.
pub fn delinearize(ll: &LinearizedLabels) -> Vec<EntitySpan> {
    fn close_from(open: &mut Vec<(usize, String)>, slot: usize, at: usize, out: &mut Vec<EntitySpan>) {
        while open.len() > slot {
            let (start, etype) = open.pop().expect("non-empty");
            out.push(EntitySpan {
                start,
                end: at,
                etype,
            });
        }
    }

    let mut out = Vec::new();
    let mut open: Vec<(usize, String)> = Vec::new();
    for (t, labels) in ll.per_token.iter().enumerate() {
        let mut slot = 0;
        for label in labels {
            match label {
                Tag::Outside => continue,
                Tag::Inside(x) if open.get(slot).is_some_and(|(_, e)| e == x) => {}
                Tag::Begin(x) | Tag::Inside(x) => {
                    close_from(&mut open, slot, t, &mut out);
                    open.push((t, x.clone()));
                }
            }
            slot += 1;
        }
        close_from(&mut open, slot, t, &mut out);
    }
    close_from(&mut open, 0, ll.per_token.len(), &mut out);
    out.sort_by(canonical_cmp);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn span(start: usize, end: usize, etype: &str) -> EntitySpan {
        EntitySpan::new(start, end, etype)
    }

    fn labels(s: &[&str]) -> Vec<Label> {
        s.iter().map(|l| l.parse().unwrap()).collect()
    }

    #[test]
    fn spans_to_bio_examples() {
        let got = spans_to_bio(5, &[span(0, 2, "PER"), span(3, 4, "LOC")]).unwrap();
        assert_eq!(got, labels(&["B-PER", "I-PER", "O", "B-LOC", "O"]));
        assert_eq!(spans_to_bio(3, &[]).unwrap(), labels(&["O", "O", "O"]));
    }

    #[test]
    fn spans_to_bio_rejects_overlap() {
        let err = spans_to_bio(4, &[span(0, 3, "ORG"), span(1, 2, "PER")]).unwrap_err();
        match err {
            Error::Overlap { first, second } => {
                assert_eq!(first, span(0, 3, "ORG"));
                assert_eq!(second, span(1, 2, "PER"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(spans_to_bio(2, &[span(1, 3, "X")]).is_err());
    }

    #[test]
    fn bio_decoding_with_repair() {
        assert_eq!(
            bio_to_spans(&labels(&["B-PER", "I-PER", "O"])),
            vec![span(0, 2, "PER")]
        );
        assert_eq!(
            bio_to_spans(&labels(&["O", "I-PER", "I-PER"])),
            vec![span(1, 3, "PER")]
        );
        assert_eq!(
            bio_to_spans(&labels(&["B-PER", "I-LOC"])),
            vec![span(0, 1, "PER"), span(1, 2, "LOC")]
        );
        assert_eq!(
            bio_to_spans(&labels(&["B-PER", "B-PER", "I-PER"])),
            vec![span(0, 1, "PER"), span(1, 3, "PER")]
        );
        assert!(bio_to_spans::<String>(&[]).is_empty());
    }

    #[test]
    fn label_parsing() {
        assert_eq!("O".parse::<Label>().unwrap(), Tag::Outside);
        assert_eq!("B-PER".parse::<Label>().unwrap(), Tag::Begin("PER".into()));
        assert_eq!(
            "I-WORK_OF_ART".parse::<Label>().unwrap(),
            Tag::Inside("WORK_OF_ART".into())
        );
        assert!("E-PER".parse::<Label>().is_err());
        assert!("B-".parse::<Label>().is_err());
        assert!("PER".parse::<Label>().is_err());
    }

    #[test]
    fn linearize_examples() {
        let ll = linearize(3, &[span(0, 3, "ORG"), span(0, 2, "PER")], 16).unwrap();
        assert_eq!(
            ll.per_token,
            vec![
                labels(&["B-ORG", "B-PER"]),
                labels(&["I-ORG", "I-PER"]),
                labels(&["I-ORG"]),
            ]
        );
        assert_eq!(linearize(2, &[], 16).unwrap().per_token, vec![vec![], vec![]]);
    }

    #[test]
    fn linearize_errors() {
        assert!(matches!(
            linearize(4, &[span(0, 2, "A"), span(1, 3, "B")], 16),
            Err(Error::Crossing { .. })
        ));
        assert!(matches!(
            linearize(2, &[span(0, 2, "A"), span(0, 1, "B"), span(0, 1, "C")], 2),
            Err(Error::DepthOverflow { token: 0, depth: 3, max_depth: 2 })
        ));
        assert!(linearize(2, &[span(0, 1, "A"), span(0, 1, "A")], 16).is_err());
    }

    #[test]
    fn delinearize_examples() {
        let ll = LinearizedLabels {
            per_token: vec![
                labels(&["B-ORG", "B-PER"]),
                labels(&["I-ORG", "I-PER"]),
                labels(&["I-ORG"]),
            ],
        };
        assert_eq!(delinearize(&ll), vec![span(0, 3, "ORG"), span(0, 2, "PER")]);
        let ll = LinearizedLabels {
            per_token: vec![labels(&["I-PER"])],
        };
        assert_eq!(delinearize(&ll), vec![span(0, 1, "PER")]);
    }

    #[test]
    fn delinearize_repairs_slot_mismatch() {
        // Slot 0 switches type mid-way: the ORG span closes and a LOC span opens.
        let ll = LinearizedLabels {
            per_token: vec![labels(&["B-ORG", "B-PER"]), labels(&["I-LOC", "I-PER"])],
        };
        assert_eq!(
            delinearize(&ll),
            vec![span(0, 1, "ORG"), span(0, 1, "PER"), span(1, 2, "LOC"), span(1, 2, "PER")]
        );
    }

    #[test]
    fn nested_annotation_column() {
        let toks = labels(&["B-ORG", "I-PER"]);
        assert_eq!(LinearizedLabels::render_token(&toks), "B-ORG|I-PER");
        assert_eq!(LinearizedLabels::render_token(&[]), "O");
        assert_eq!(LinearizedLabels::parse_token("B-ORG|I-PER").unwrap(), toks);
        assert!(LinearizedLabels::parse_token("O|B-PER").is_err());
    }
}
