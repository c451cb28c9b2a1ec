//! Corpus data model plus readers and writers for the flat columnar format
//! and the nested `token<TAB>labels` format.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::codec::{
    self, bio_to_spans, canonical_cmp, linearize, spans_to_bio, Label, LinearizedLabels,
    DEFAULT_MAX_DEPTH,
};
use crate::error::{Error, Result};

const DOCSTART: &str = "-DOCSTART-";

/// Half-open token interval `[start, end)` with an entity type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub etype: String,
}

impl EntitySpan {
    pub fn new(start: usize, end: usize, etype: impl Into<String>) -> Self {
        EntitySpan {
            start,
            end,
            etype: etype.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, other: &EntitySpan) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn overlaps(&self, other: &EntitySpan) -> bool {
        self.start < other.end && other.start < self.end
    }
}

impl fmt::Display for EntitySpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.start, self.end, self.etype)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<Token>,
    pub flat_spans: Vec<EntitySpan>,
    pub nested_spans: Vec<EntitySpan>,
}

impl Sentence {
    pub fn from_words<S: AsRef<str>>(words: &[S]) -> Self {
        Sentence {
            tokens: words
                .iter()
                .enumerate()
                .map(|(index, w)| Token {
                    text: w.as_ref().to_string(),
                    index,
                })
                .collect(),
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn words(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }

    /// Text covered by a span, tokens joined by single spaces.
    pub fn span_text(&self, span: &EntitySpan) -> String {
        self.tokens[span.start..span.end]
            .iter()
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub corpus_id: String,
    pub language: String,
    pub sentences: Vec<Sentence>,
}

impl Document {
    pub fn new(id: impl Into<String>, sentences: Vec<Sentence>) -> Self {
        Document {
            id: id.into(),
            sentences,
            ..Default::default()
        }
    }
}

/// Column layout for the flat writer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ColumnOrder {
    #[default]
    TokenLabel,
    LabelToken,
}

impl ColumnOrder {
    /// `(token_column, label_column)` for reading the written output back.
    pub fn columns(self) -> (usize, usize) {
        match self {
            ColumnOrder::TokenLabel => (0, 1),
            ColumnOrder::LabelToken => (1, 0),
        }
    }
}

/// Splits text into documents of sentences of `(line_number, fields)`.
struct Blocks<'a> {
    docs: Vec<Vec<Vec<(usize, Vec<&'a str>)>>>,
}

fn split_blocks<'a>(text: &'a str, split: impl Fn(&'a str) -> Vec<&'a str>) -> Blocks<'a> {
    let mut docs: Vec<Vec<Vec<(usize, Vec<&str>)>>> = vec![Vec::new()];
    let mut sentence: Vec<(usize, Vec<&str>)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !sentence.is_empty() {
                docs.last_mut().unwrap().push(std::mem::take(&mut sentence));
            }
            continue;
        }
        let fields = split(line);
        if fields.first() == Some(&DOCSTART) {
            if !sentence.is_empty() {
                docs.last_mut().unwrap().push(std::mem::take(&mut sentence));
            }
            if !docs.last().unwrap().is_empty() {
                docs.push(Vec::new());
            }
            continue;
        }
        sentence.push((i + 1, fields));
    }
    if !sentence.is_empty() {
        docs.last_mut().unwrap().push(sentence);
    }
    docs.retain(|d| !d.is_empty());
    Blocks { docs }
}

fn tokens_of(words: impl Iterator<Item = String>) -> Vec<Token> {
    words
        .enumerate()
        .map(|(index, text)| Token { text, index })
        .collect()
}

/// Parses a CoNLL-style columnar file. Labels may be IOB1 or BIO; `-DOCSTART-`
/// lines separate documents. Without `-DOCSTART-` the whole text is one
/// document.
pub fn parse_flat_conll(
    text: &str,
    token_column: usize,
    label_column: usize,
) -> Result<Vec<Document>> {
    let blocks = split_blocks(text, |l| l.split_whitespace().collect());
    let needed = token_column.max(label_column) + 1;
    let mut expected: Option<usize> = None;
    let mut docs = Vec::new();
    for (d, block) in blocks.docs.into_iter().enumerate() {
        let mut sentences = Vec::new();
        for lines in block {
            let mut words = Vec::with_capacity(lines.len());
            let mut labels: Vec<Label> = Vec::with_capacity(lines.len());
            for (line, fields) in lines {
                let width = *expected.get_or_insert(fields.len());
                if fields.len() != width || fields.len() < needed {
                    return Err(Error::Parse {
                        line,
                        message: format!(
                            "expected {} columns, found {}",
                            width.max(needed),
                            fields.len()
                        ),
                    });
                }
                let label = fields[label_column].parse().map_err(|e: Error| Error::Parse {
                    line,
                    message: e.to_string(),
                })?;
                words.push(fields[token_column].to_string());
                labels.push(label);
            }
            sentences.push(Sentence {
                tokens: tokens_of(words.into_iter()),
                flat_spans: bio_to_spans(&labels),
                nested_spans: Vec::new(),
            });
        }
        docs.push(Document::new(d.to_string(), sentences));
    }
    Ok(docs)
}

/// Writes one document in the flat columnar format, tab-separated.
pub fn write_flat_conll(doc: &Document, order: ColumnOrder) -> Result<String> {
    let mut out = String::new();
    for sentence in &doc.sentences {
        let labels = spans_to_bio(sentence.len(), &sentence.flat_spans)?;
        for (token, label) in sentence.tokens.iter().zip(&labels) {
            match order {
                ColumnOrder::TokenLabel => out.push_str(&format!("{}\t{}\n", token.text, label)),
                ColumnOrder::LabelToken => out.push_str(&format!("{}\t{}\n", label, token.text)),
            }
        }
        out.push('\n');
    }
    Ok(out)
}

/// Writes several documents separated by `-DOCSTART-` lines.
pub fn write_flat_corpus(docs: &[Document], order: ColumnOrder) -> Result<String> {
    let mut out = String::new();
    for doc in docs {
        match order {
            ColumnOrder::TokenLabel => out.push_str("-DOCSTART-\tO\n\n"),
            ColumnOrder::LabelToken => out.push_str("O\t-DOCSTART-\n\n"),
        }
        out.push_str(&write_flat_conll(doc, order)?);
    }
    Ok(out)
}

/// Parses the nested format. Each token's annotation must be the canonical
/// linearization of the sentence's spans; anything else (crossing or
/// misordered spans) is rejected with the sentence number.
pub fn parse_nested(text: &str) -> Result<Vec<Document>> {
    let blocks = split_blocks(text, |l| l.split('\t').collect());
    let mut docs = Vec::new();
    let mut sentence_no = 0;
    for (d, block) in blocks.docs.into_iter().enumerate() {
        let mut sentences = Vec::new();
        for lines in block {
            sentence_no += 1;
            let mut words = Vec::with_capacity(lines.len());
            let mut per_token = Vec::with_capacity(lines.len());
            for (line, fields) in lines {
                if fields.len() != 2 || fields[0].is_empty() {
                    return Err(Error::Parse {
                        line,
                        message: format!("expected `token<TAB>annotation`, found {} fields", fields.len()),
                    });
                }
                let labels = LinearizedLabels::parse_token(fields[1]).map_err(|e| Error::Parse {
                    line,
                    message: e.to_string(),
                })?;
                words.push(fields[0].to_string());
                per_token.push(labels);
            }
            let ll = LinearizedLabels { per_token };
            let spans = codec::delinearize(&ll);
            let canonical = linearize(words.len(), &spans, usize::MAX).map_err(|e| Error::Structure {
                sentence: sentence_no,
                message: e.to_string(),
            })?;
            if canonical != ll {
                return Err(Error::Structure {
                    sentence: sentence_no,
                    message: "annotations imply crossing or misordered spans".to_string(),
                });
            }
            sentences.push(Sentence {
                tokens: tokens_of(words.into_iter()),
                flat_spans: Vec::new(),
                nested_spans: spans,
            });
        }
        docs.push(Document::new(d.to_string(), sentences));
    }
    Ok(docs)
}

/// Writes one document in the nested format.
pub fn write_nested(doc: &Document) -> Result<String> {
    let mut out = String::new();
    for sentence in &doc.sentences {
        let ll = linearize(sentence.len(), &sentence.nested_spans, DEFAULT_MAX_DEPTH)?;
        for (token, labels) in sentence.tokens.iter().zip(&ll.per_token) {
            out.push_str(&token.text);
            out.push('\t');
            out.push_str(&LinearizedLabels::render_token(labels));
            out.push('\n');
        }
        out.push('\n');
    }
    Ok(out)
}

/// Derives flat spans from nested ones by keeping the outermost spans. Among
/// outermost spans with identical extents the canonically first one wins, so
/// the result stays disjoint.
pub fn flatten_to_outermost(sentence: &Sentence) -> Sentence {
    let mut nested = sentence.nested_spans.clone();
    nested.sort_by(canonical_cmp);
    let mut flat: Vec<EntitySpan> = Vec::new();
    for span in &nested {
        if flat.last().is_some_and(|outer| span.start < outer.end) {
            continue;
        }
        flat.push(span.clone());
    }
    Sentence {
        tokens: sentence.tokens.clone(),
        flat_spans: flat,
        nested_spans: sentence.nested_spans.clone(),
    }
}

/// Entity-type relabeling; `None` drops the span. Types absent from the map
/// pass through unchanged.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMapping {
    pub rules: BTreeMap<String, Option<String>>,
}

impl LabelMapping {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rename(mut self, from: impl Into<String>, to: impl Into<String>) -> Self {
        self.rules.insert(from.into(), Some(to.into()));
        self
    }

    pub fn drop_type(mut self, etype: impl Into<String>) -> Self {
        self.rules.insert(etype.into(), None);
        self
    }

    pub fn apply(&self, etype: &str) -> Option<String> {
        match self.rules.get(etype) {
            Some(target) => target.clone(),
            None => Some(etype.to_string()),
        }
    }
}

fn relabel(spans: &[EntitySpan], mapping: &LabelMapping) -> Vec<EntitySpan> {
    let mut out: Vec<EntitySpan> = spans
        .iter()
        .filter_map(|s| {
            mapping.apply(&s.etype).map(|etype| EntitySpan {
                start: s.start,
                end: s.end,
                etype,
            })
        })
        .collect();
    // Two types merged onto one label on the same extent collapse to a single span.
    let mut seen = std::collections::HashSet::new();
    out.retain(|s| seen.insert(s.clone()));
    out
}

/// Applies a label mapping to every flat and nested span of a document.
pub fn map_labels(doc: &Document, mapping: &LabelMapping) -> Document {
    Document {
        id: doc.id.clone(),
        corpus_id: doc.corpus_id.clone(),
        language: doc.language.clone(),
        sentences: doc
            .sentences
            .iter()
            .map(|s| Sentence {
                tokens: s.tokens.clone(),
                flat_spans: relabel(&s.flat_spans, mapping),
                nested_spans: relabel(&s.nested_spans, mapping),
            })
            .collect(),
    }
}
