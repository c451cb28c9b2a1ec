//! Request and response types for `/recognize`, and the annotation routine
//! shared by the HTTP handler and the `predict` command.

use std::fmt::Write as _;

use nerforge::corpus::{write_flat_conll, write_nested, ColumnOrder, Document, EntitySpan, Sentence};
use nerforge::model::{ModelBundle, ModelKind};
use nerforge::tokenize::tokenize_plain;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    #[default]
    Plain,
    Conll,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Conll,
    Vertical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognizeRequest {
    pub data: String,
    pub model: String,
    /// Required for flat models, ignored by nested ones.
    #[serde(default)]
    pub tagset: Option<String>,
    #[serde(default)]
    pub input: InputFormat,
    #[serde(default)]
    pub output: OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanOut {
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub etype: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceOut {
    pub tokens: Vec<String>,
    pub spans: Vec<SpanOut>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecognizeResponse {
    pub sentences: Vec<SentenceOut>,
    pub model: String,
    /// Empty for nested models.
    pub tagset: String,
}

impl RecognizeResponse {
    pub fn spans(&self) -> Vec<Vec<EntitySpan>> {
        self.sentences
            .iter()
            .map(|s| {
                s.spans
                    .iter()
                    .map(|x| EntitySpan::new(x.start, x.end, x.etype.clone()))
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: ModelKind,
    pub tagsets: Vec<String>,
    pub languages: Vec<String>,
}

impl From<&ModelBundle> for ModelInfo {
    fn from(model: &ModelBundle) -> Self {
        ModelInfo {
            name: model.name.clone(),
            kind: model.kind,
            tagsets: model.tagset_names().into_iter().map(str::to_string).collect(),
            languages: model.languages.clone(),
        }
    }
}

/// Reads tokens from a columnar payload: the first whitespace-separated field
/// of each line is the token, blank lines end sentences and `-DOCSTART-` lines
/// are skipped.
pub fn read_conll_tokens(data: &str) -> Vec<Sentence> {
    let mut sentences = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in data.lines() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !current.is_empty() {
                sentences.push(Sentence::from_words(&current));
                current.clear();
            }
            continue;
        }
        let token = line.split_whitespace().next().unwrap_or(line);
        if token == "-DOCSTART-" {
            continue;
        }
        current.push(token);
    }
    if !current.is_empty() {
        sentences.push(Sentence::from_words(&current));
    }
    sentences
}

pub fn read_input(data: &str, format: InputFormat) -> Vec<Sentence> {
    match format {
        InputFormat::Plain => tokenize_plain(data),
        InputFormat::Conll => read_conll_tokens(data),
    }
}

/// Resolves the tagset a request runs under. Flat models need a registered
/// tagset; nested models have none.
pub fn resolve_tagset(model: &ModelBundle, tagset: Option<&str>) -> Result<Option<String>, ApiError> {
    match model.kind {
        ModelKind::Nested => Ok(None),
        ModelKind::Flat => {
            let name = tagset
                .filter(|t| !t.is_empty())
                .ok_or_else(|| ApiError::BadRequest(format!("model `{}` requires a tagset", model.name)))?;
            model
                .registry
                .get(name)
                .map_err(|_| ApiError::UnknownTagset(name.to_string()))?;
            Ok(Some(name.to_string()))
        }
    }
}

/// Annotates sentences in place, storing predictions as flat or nested spans
/// according to the model kind.
pub fn annotate(model: &ModelBundle, tagset: Option<&str>, sentences: &mut [Sentence]) -> Result<(), ApiError> {
    let tagset = resolve_tagset(model, tagset)?;
    for sentence in sentences.iter_mut() {
        let words = sentence.words();
        let spans = model
            .predict(&words, tagset.as_deref())
            .map_err(|e| ApiError::Internal(e.to_string()))?;
        match model.kind {
            ModelKind::Flat => sentence.flat_spans = spans,
            ModelKind::Nested => sentence.nested_spans = spans,
        }
    }
    Ok(())
}

fn predicted(kind: ModelKind, sentence: &Sentence) -> &[EntitySpan] {
    match kind {
        ModelKind::Flat => &sentence.flat_spans,
        ModelKind::Nested => &sentence.nested_spans,
    }
}

pub fn to_response(model: &ModelBundle, tagset: Option<&str>, sentences: &[Sentence]) -> RecognizeResponse {
    RecognizeResponse {
        sentences: sentences
            .iter()
            .map(|s| SentenceOut {
                tokens: s.words().into_iter().map(str::to_string).collect(),
                spans: predicted(model.kind, s)
                    .iter()
                    .map(|x| SpanOut {
                        start: x.start,
                        end: x.end,
                        etype: x.etype.clone(),
                        text: s.span_text(x),
                    })
                    .collect(),
            })
            .collect(),
        model: model.name.clone(),
        tagset: tagset.unwrap_or_default().to_string(),
    }
}

/// One line per entity: `first,last<TAB>type<TAB>text` with 1-based token
/// ordinals counted continuously across sentences.
pub fn render_vertical(kind: ModelKind, sentences: &[Sentence]) -> String {
    let mut out = String::new();
    let mut offset = 0;
    for s in sentences {
        for span in predicted(kind, s) {
            let _ = writeln!(
                out,
                "{},{}\t{}\t{}",
                offset + span.start + 1,
                offset + span.end,
                span.etype,
                s.span_text(span)
            );
        }
        offset += s.len();
    }
    out
}

/// Flat models render as token/label columns, nested models in the nested
/// column format.
pub fn render_conll(kind: ModelKind, sentences: &[Sentence]) -> Result<String, ApiError> {
    let doc = Document::new("request", sentences.to_vec());
    match kind {
        ModelKind::Flat => write_flat_conll(&doc, ColumnOrder::TokenLabel),
        ModelKind::Nested => write_nested(&doc),
    }
    .map_err(|e| ApiError::Internal(e.to_string()))
}

/// Output of a recognize call, before HTTP framing.
#[derive(Debug, Clone, PartialEq)]
pub enum Recognized {
    Json(RecognizeResponse),
    Text(String),
}

pub fn recognize(model: &ModelBundle, request: &RecognizeRequest) -> Result<Recognized, ApiError> {
    let tagset = resolve_tagset(model, request.tagset.as_deref())?;
    let mut sentences = read_input(&request.data, request.input);
    annotate(model, tagset.as_deref(), &mut sentences)?;
    Ok(match request.output {
        OutputFormat::Json => Recognized::Json(to_response(model, tagset.as_deref(), &sentences)),
        OutputFormat::Conll => Recognized::Text(render_conll(model.kind, &sentences)?),
        OutputFormat::Vertical => Recognized::Text(render_vertical(model.kind, &sentences)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vertical_ordinals_run_across_sentences() {
        let mut a = Sentence::from_words(&["John", "Smith", "runs", "."]);
        a.flat_spans = vec![EntitySpan::new(0, 2, "PER")];
        let mut b = Sentence::from_words(&["In", "Prague", "."]);
        b.flat_spans = vec![EntitySpan::new(1, 2, "LOC")];
        assert_eq!(
            render_vertical(ModelKind::Flat, &[a, b]),
            "1,2\tPER\tJohn Smith\n6,6\tLOC\tPrague\n"
        );
    }

    #[test]
    fn conll_payload_tokens() {
        let s = read_conll_tokens("-DOCSTART-\tO\n\nJohn\tB-PER\nruns\tO\n\n\nHi\n");
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].words(), ["John", "runs"]);
        assert_eq!(s[1].words(), ["Hi"]);
        assert!(read_conll_tokens("").is_empty());
    }

    #[test]
    fn request_defaults() {
        let r: RecognizeRequest = serde_json::from_str(r#"{"data":"x","model":"m"}"#).unwrap();
        assert_eq!((r.input, r.output, r.tagset), (InputFormat::Plain, OutputFormat::Json, None));
        assert!(serde_json::from_str::<RecognizeRequest>(r#"{"data":"x","model":"m","output":"xml"}"#).is_err());
    }
}
