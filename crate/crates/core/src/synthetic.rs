//! Generated corpora whose entity types are deterministic functions of token
//! surface patterns. Used by the end-to-end tests and examples.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Document, EntitySpan, Sentence};

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];

/// Entity suffixes, one per type slot.
pub const SUFFIXES: &[&str] = &["son", "corp", "ville", "ium", "ex", "ada", "burg", "ix"];

/// Words that turn a preceding person name into an organization.
pub const ORG_MARKERS: &[&str] = &["Foundation", "Institute", "Brothers", "Group"];

/// Sentences per generated document.
pub const SENTENCES_PER_DOCUMENT: usize = 20;

fn stem<R: Rng>(rng: &mut R, syllables: usize) -> String {
    (0..syllables)
        .map(|_| format!("{}{}", ONSETS.choose(rng).unwrap(), VOWELS.choose(rng).unwrap()))
        .collect()
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Fixed vocabularies shared by every generated sentence, so that dev
/// sentences reuse words seen in training.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    pub stems: Vec<String>,
    pub fillers: Vec<String>,
}

impl Lexicon {
    pub fn new(n_stems: usize, n_fillers: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize, syllables: std::ops::RangeInclusive<usize>| {
            let mut words = std::collections::BTreeSet::new();
            while words.len() < n {
                let k = rng.random_range(syllables.clone());
                words.insert(stem(&mut rng, k));
            }
            words.into_iter().collect::<Vec<_>>()
        };
        let stems = draw(n_stems, 1..=2);
        let fillers = draw(n_fillers, 1..=3);
        Lexicon { stems, fillers }
    }

    fn filler<R: Rng>(&self, rng: &mut R) -> String {
        self.fillers.choose(rng).unwrap().clone()
    }

    fn entity_word<R: Rng>(&self, rng: &mut R, suffix: &str) -> String {
        capitalize(&(self.stems.choose(rng).unwrap().clone() + suffix))
    }
}

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon::new(60, 200, 0)
    }
}

fn into_documents(sentences: Vec<Sentence>, corpus_id: &str) -> Vec<Document> {
    sentences
        .chunks(SENTENCES_PER_DOCUMENT)
        .enumerate()
        .map(|(i, chunk)| {
            let mut doc = Document::new(format!("{corpus_id}-{i}"), chunk.to_vec());
            doc.corpus_id = corpus_id.to_string();
            doc.language = "synthetic".to_string();
            doc
        })
        .collect()
}

/// Flat corpus generator. Each entity type owns a suffix; entity tokens are
/// capitalized words carrying it, fillers are lowercase. Entities span one to
/// three tokens and are always separated by at least one filler.
#[derive(Debug, Clone)]
pub struct FlatGenerator {
    pub patterns: Vec<(String, String)>,
    pub lexicon: Lexicon,
    pub min_len: usize,
    pub max_len: usize,
    pub entity_rate: f64,
}

impl FlatGenerator {
    /// Assigns `SUFFIXES[offset + i]` to the i-th etype.
    pub fn new<S: AsRef<str>>(etypes: &[S], offset: usize) -> Self {
        assert!(offset + etypes.len() <= SUFFIXES.len(), "not enough suffixes");
        FlatGenerator {
            patterns: etypes
                .iter()
                .enumerate()
                .map(|(i, e)| (e.as_ref().to_string(), SUFFIXES[offset + i].to_string()))
                .collect(),
            lexicon: Lexicon::default(),
            min_len: 6,
            max_len: 14,
            entity_rate: 0.3,
        }
    }

    pub fn sentence<R: Rng>(&self, rng: &mut R) -> Sentence {
        let target = rng.random_range(self.min_len..=self.max_len);
        let mut words = Vec::new();
        let mut spans = Vec::new();
        let mut after_entity = true;
        while words.len() < target {
            if !after_entity && rng.random_bool(self.entity_rate) {
                let (etype, suffix) = self.patterns.choose(rng).unwrap();
                let len = rng.random_range(1..=3);
                let start = words.len();
                for _ in 0..len {
                    words.push(self.lexicon.entity_word(rng, suffix));
                }
                spans.push(EntitySpan::new(start, words.len(), etype.clone()));
                after_entity = true;
            } else {
                words.push(self.lexicon.filler(rng));
                after_entity = false;
            }
        }
        let mut sentence = Sentence::from_words(&words);
        sentence.flat_spans = spans.clone();
        sentence.nested_spans = spans;
        sentence
    }

    pub fn generate(&self, n_sentences: usize, seed: u64, corpus_id: &str) -> Vec<Document> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sentences = (0..n_sentences).map(|_| self.sentence(&mut rng)).collect();
        into_documents(sentences, corpus_id)
    }
}

/// Nested corpus generator over PER, ORG and LOC:
///
/// - a person is one or two `-son` words;
/// - a person followed by an [`ORG_MARKERS`] word is an ORG containing the PER;
/// - plain organizations are one or two `-corp` words;
/// - locations are one or two `-ville` words.
#[derive(Debug, Clone)]
pub struct NestedGenerator {
    pub lexicon: Lexicon,
    pub min_len: usize,
    pub max_len: usize,
    pub entity_rate: f64,
}

impl Default for NestedGenerator {
    fn default() -> Self {
        NestedGenerator {
            lexicon: Lexicon::default(),
            min_len: 6,
            max_len: 14,
            entity_rate: 0.35,
        }
    }
}

impl NestedGenerator {
    pub const ETYPES: [&'static str; 3] = ["LOC", "ORG", "PER"];

    pub fn sentence<R: Rng>(&self, rng: &mut R) -> Sentence {
        let target = rng.random_range(self.min_len..=self.max_len);
        let mut words: Vec<String> = Vec::new();
        let mut spans = Vec::new();
        let mut after_entity = true;
        while words.len() < target {
            if after_entity || !rng.random_bool(self.entity_rate) {
                words.push(self.lexicon.filler(rng));
                after_entity = false;
                continue;
            }
            let start = words.len();
            let len = rng.random_range(1..=2);
            match rng.random_range(0..4) {
                0 | 1 => {
                    for _ in 0..len {
                        words.push(self.lexicon.entity_word(rng, "son"));
                    }
                    spans.push(EntitySpan::new(start, words.len(), "PER"));
                    if rng.random_bool(0.5) {
                        words.push(ORG_MARKERS.choose(rng).unwrap().to_string());
                        spans.push(EntitySpan::new(start, words.len(), "ORG"));
                    }
                }
                2 => {
                    for _ in 0..len {
                        words.push(self.lexicon.entity_word(rng, "corp"));
                    }
                    spans.push(EntitySpan::new(start, words.len(), "ORG"));
                }
                _ => {
                    for _ in 0..len {
                        words.push(self.lexicon.entity_word(rng, "ville"));
                    }
                    spans.push(EntitySpan::new(start, words.len(), "LOC"));
                }
            }
            after_entity = true;
        }
        spans.sort_by(crate::codec::canonical_cmp);
        let mut sentence = Sentence::from_words(&words);
        sentence.nested_spans = spans;
        crate::corpus::flatten_to_outermost(&sentence)
    }

    pub fn generate(&self, n_sentences: usize, seed: u64, corpus_id: &str) -> Vec<Document> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sentences = (0..n_sentences).map(|_| self.sentence(&mut rng)).collect();
        into_documents(sentences, corpus_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{check_non_crossing, spans_to_bio};

    #[test]
    fn flat_entities_follow_patterns() {
        let generator = FlatGenerator::new(&["PER", "ORG"], 0);
        let docs = generator.generate(200, 7, "syn");
        assert_eq!(docs.len(), 10);
        let mut seen = 0;
        for s in docs.iter().flat_map(|d| &d.sentences) {
            spans_to_bio(s.len(), &s.flat_spans).unwrap();
            for span in &s.flat_spans {
                let suffix = if span.etype == "PER" { "son" } else { "corp" };
                for t in &s.tokens[span.start..span.end] {
                    assert!(t.text.ends_with(suffix));
                }
                seen += 1;
            }
            for w in s.flat_spans.windows(2) {
                assert!(w[0].end < w[1].start);
            }
        }
        assert!(seen > 100);
        assert_eq!(generator.generate(20, 7, "syn"), generator.generate(20, 7, "syn"));
    }

    #[test]
    fn nested_has_depth_two() {
        let docs = NestedGenerator::default().generate(200, 3, "nest");
        let mut nested = 0;
        for s in docs.iter().flat_map(|d| &d.sentences) {
            check_non_crossing(s.len(), &s.nested_spans).unwrap();
            for outer in s.nested_spans.iter().filter(|x| x.etype == "ORG") {
                if s.nested_spans.iter().any(|x| x != outer && outer.contains(x)) {
                    nested += 1;
                }
            }
        }
        assert!(nested > 20);
    }
}
