//! Multi-corpus training.
//!
//! Batches mix corpora: every slot draws a corpus with probability
//! proportional to the square root of its sentence count, then a sentence
//! uniformly within it. An optional first phase trains only the heads on a
//! frozen encoder at a constant rate; the fine-tuning phase uses linear warmup
//! followed by cosine decay. After every epoch each dev corpus is scored with
//! span micro F1, and the epoch with the best unweighted mean over dev corpora
//! is returned.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{delinearize, linearize, spans_to_bio, LinearizedLabels, DEFAULT_MAX_DEPTH};
use crate::corpus::{Document, EntitySpan};
use crate::encoder::DEFAULT_MAX_LEN;
use crate::error::{Error, Result};
use crate::eval::{macro_f1, score_flat, score_nested, Prf};
use crate::model::{ModelBundle, ModelKind};
use crate::optim::{clip_global_norm, Adam, AdamConfig};
use crate::precomputed::{EmbeddingSource, PrecomputedEmbeddings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decay {
    #[default]
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Fine-tuning epochs, run after the frozen epochs.
    pub epochs: usize,
    pub frozen_epochs: usize,
    pub frozen_learning_rate: f64,
    pub batch_size: usize,
    pub peak_learning_rate: f64,
    pub warmup_epochs: usize,
    pub learning_rate_decay: Decay,
    pub seed: u64,
    pub max_depth: usize,
    pub max_len: usize,
    pub optimizer: AdamConfig,
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::flat()
    }
}

impl TrainConfig {
    /// Flat multilingual defaults.
    pub fn flat() -> Self {
        TrainConfig {
            epochs: 30,
            frozen_epochs: 0,
            frozen_learning_rate: 1e-3,
            batch_size: 8,
            peak_learning_rate: 2e-5,
            warmup_epochs: 1,
            learning_rate_decay: Decay::Cosine,
            seed: 42,
            max_depth: DEFAULT_MAX_DEPTH,
            max_len: DEFAULT_MAX_LEN,
            optimizer: AdamConfig::default(),
            clip_norm: 1.0,
        }
    }

    /// Nested defaults for a base-sized monolingual encoder.
    pub fn nested() -> Self {
        TrainConfig {
            epochs: 20,
            frozen_epochs: 20,
            frozen_learning_rate: 1e-3,
            batch_size: 4,
            ..Self::flat()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.peak_learning_rate > 0.0 && self.frozen_learning_rate > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        Ok(())
    }

    pub fn total_epochs(&self) -> usize {
        self.frozen_epochs + self.epochs
    }
}

/// Learning rate for a global step. Frozen steps use the constant frozen
/// rate; fine-tuning warms up linearly from 0 to the peak and then follows a
/// cosine down to 0 at the end of the last epoch.
pub fn lr_at(config: &TrainConfig, step: usize, steps_per_epoch: usize) -> f64 {
    let frozen_steps = config.frozen_epochs * steps_per_epoch;
    if step < frozen_steps {
        return config.frozen_learning_rate;
    }
    let s = (step - frozen_steps) as f64;
    let warmup = (config.warmup_epochs * steps_per_epoch) as f64;
    let total = (config.epochs * steps_per_epoch) as f64;
    let peak = config.peak_learning_rate;
    if s >= total {
        return 0.0;
    }
    if s < warmup {
        return peak * s / warmup;
    }
    match config.learning_rate_decay {
        Decay::Cosine => {
            let progress = (s - warmup) / (total - warmup);
            peak * 0.5 * (1.0 + (PI * progress).cos())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusWeight {
    pub corpus_id: String,
    pub n_sentences: usize,
    pub probability: f64,
}

/// `p(c) = sqrt(size(c)) / sum over corpora of sqrt(size)`.
pub fn sqrt_temperature_weights(sizes: &[(String, usize)]) -> Result<Vec<CorpusWeight>> {
    if sizes.is_empty() {
        return Err(Error::Config("no corpora to sample from".into()));
    }
    if let Some((id, _)) = sizes.iter().find(|(_, n)| *n == 0) {
        return Err(Error::Config(format!("corpus `{id}` has no sentences")));
    }
    let total: f64 = sizes.iter().map(|(_, n)| (*n as f64).sqrt()).sum();
    Ok(sizes
        .iter()
        .map(|(id, n)| CorpusWeight {
            corpus_id: id.clone(),
            n_sentences: *n,
            probability: (*n as f64).sqrt() / total,
        })
        .collect())
}

/// One batch slot: a corpus index and a sentence index within that corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchSlot {
    pub corpus: usize,
    pub sentence: usize,
}

/// Draws batch slots by corpus weight, then uniformly within the corpus.
/// Sampling is per slot, with replacement.
#[derive(Debug, Clone)]
pub struct Sampler {
    weights: Vec<CorpusWeight>,
    index: WeightedIndex<f64>,
}

impl Sampler {
    pub fn new(weights: Vec<CorpusWeight>) -> Result<Self> {
        let index = WeightedIndex::new(weights.iter().map(|w| w.probability))
            .map_err(|e| Error::Config(format!("corpus weights: {e}")))?;
        Ok(Sampler { weights, index })
    }

    pub fn weights(&self) -> &[CorpusWeight] {
        &self.weights
    }

    pub fn sample_batch<R: Rng>(&self, rng: &mut R, batch_size: usize) -> Vec<BatchSlot> {
        (0..batch_size)
            .map(|_| {
                let corpus = self.index.sample(rng);
                let sentence = rng.random_range(0..self.weights[corpus].n_sentences);
                BatchSlot { corpus, sentence }
            })
            .collect()
    }
}

/// A training or dev corpus. Flat models require a tagset per corpus.
#[derive(Debug, Clone, Default)]
pub struct TrainCorpus {
    pub id: String,
    pub tagset: Option<String>,
    pub documents: Vec<Document>,
    /// Replaces the model's encoder for this corpus when present.
    pub embeddings: Option<Arc<PrecomputedEmbeddings>>,
}

impl TrainCorpus {
    pub fn new(id: impl Into<String>, tagset: Option<&str>, documents: Vec<Document>) -> Self {
        TrainCorpus {
            id: id.into(),
            tagset: tagset.map(str::to_string),
            documents,
            embeddings: None,
        }
    }

    pub fn with_embeddings(mut self, embeddings: Arc<PrecomputedEmbeddings>) -> Self {
        self.embeddings = Some(embeddings);
        self
    }

    pub fn n_sentences(&self) -> usize {
        self.documents.iter().map(|d| d.sentences.len()).sum()
    }
}

#[derive(Debug, Clone)]
enum Gold {
    Flat(Vec<usize>),
    Nested(LinearizedLabels),
}

#[derive(Debug, Clone)]
struct Example {
    doc_id: String,
    sentence_index: usize,
    tokens: Vec<String>,
    gold: Gold,
    spans: Vec<EntitySpan>,
}

impl Example {
    fn words(&self) -> Vec<&str> {
        self.tokens.iter().map(String::as_str).collect()
    }
}

struct Prepared {
    id: String,
    tagset: Option<String>,
    embeddings: Option<Arc<PrecomputedEmbeddings>>,
    examples: Vec<Example>,
}

impl Prepared {
    fn source<'a>(&'a self, model: &'a ModelBundle) -> EmbeddingSource<'a> {
        match &self.embeddings {
            Some(store) => EmbeddingSource::Precomputed(store),
            None => EmbeddingSource::Toy(&model.encoder),
        }
    }
}

fn prepare(model: &ModelBundle, config: &TrainConfig, corpus: &TrainCorpus) -> Result<Prepared> {
    let tagset = match model.kind {
        ModelKind::Flat => {
            let name = corpus.tagset.as_deref().ok_or_else(|| {
                Error::Config(format!("corpus `{}` is not mapped to a tagset", corpus.id))
            })?;
            Some(model.registry.get(name).map_err(|_| {
                Error::Config(format!("corpus `{}` maps to unknown tagset `{name}`", corpus.id))
            })?)
        }
        ModelKind::Nested => None,
    };
    if let Some(store) = &corpus.embeddings {
        if store.width() != model.encoder.dim() {
            return Err(Error::Config(format!(
                "corpus `{}`: precomputed width {} differs from model width {}",
                corpus.id,
                store.width(),
                model.encoder.dim()
            )));
        }
    }
    let mut examples = Vec::with_capacity(corpus.n_sentences());
    for doc in &corpus.documents {
        for (i, sentence) in doc.sentences.iter().enumerate() {
            let context = |e: Error| Error::Config(format!("corpus `{}`, document `{}`, sentence {i}: {e}", corpus.id, doc.id));
            let (gold, spans) = match tagset {
                Some(t) => {
                    let labels = spans_to_bio(sentence.len(), &sentence.flat_spans).map_err(context)?;
                    let ids = labels.iter().map(|l| t.encode(l)).collect::<Result<Vec<_>>>().map_err(context)?;
                    (Gold::Flat(ids), sentence.flat_spans.clone())
                }
                None => {
                    let head = model.nested()?;
                    let ll = linearize(sentence.len(), &sentence.nested_spans, config.max_depth).map_err(context)?;
                    for label in ll.per_token.iter().flatten() {
                        head.label_id(label).map_err(context)?;
                    }
                    (Gold::Nested(ll), sentence.nested_spans.clone())
                }
            };
            examples.push(Example {
                doc_id: doc.id.clone(),
                sentence_index: i,
                tokens: sentence.tokens.iter().map(|t| t.text.clone()).collect(),
                gold,
                spans,
            });
        }
    }
    Ok(Prepared {
        id: corpus.id.clone(),
        tagset: corpus.tagset.clone(),
        embeddings: corpus.embeddings.clone(),
        examples,
    })
}

/// One corpus row of an epoch: training loss (for train corpora) and dev
/// scores (for dev corpora).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEpoch {
    pub corpus: String,
    pub loss: Option<f64>,
    pub dev: Option<Prf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based, counting frozen epochs.
    pub epoch: usize,
    pub frozen: bool,
    pub loss: f64,
    pub macro_f1: f64,
    pub corpora: Vec<CorpusEpoch>,
}

/// Flat history line: `(epoch, corpus, loss, P, R, F1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryLine {
    pub epoch: usize,
    pub corpus: String,
    pub loss: Option<f64>,
    #[serde(rename = "P")]
    pub precision: Option<f64>,
    #[serde(rename = "R")]
    pub recall: Option<f64>,
    #[serde(rename = "F1")]
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn lines(&self) -> Vec<HistoryLine> {
        self.epochs
            .iter()
            .flat_map(|e| {
                e.corpora.iter().map(move |c| HistoryLine {
                    epoch: e.epoch,
                    corpus: c.corpus.clone(),
                    loss: c.loss,
                    precision: c.dev.map(|p| p.precision),
                    recall: c.dev.map(|p| p.recall),
                    f1: c.dev.map(|p| p.f1),
                })
            })
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        self.lines()
            .iter()
            .map(|l| serde_json::to_string(l).expect("history serializes") + "\n")
            .collect()
    }

    pub fn macro_scores(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.macro_f1).collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: ModelBundle,
    /// 1-based epoch of `best`.
    pub best_epoch: usize,
    pub history: History,
}

/// Index of the best score, earliest on ties. `None` for an empty slice.
pub fn select_best(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

pub fn steps_per_epoch(total_sentences: usize, batch_size: usize) -> usize {
    total_sentences.div_ceil(batch_size).max(1)
}

/// Predicts spans for every example of a prepared corpus.
fn predict_corpus(model: &ModelBundle, corpus: &Prepared) -> Result<Vec<Vec<EntitySpan>>> {
    let source = corpus.source(model);
    corpus
        .examples
        .par_iter()
        .map(|ex| {
            let enc = source.embed(&ex.doc_id, ex.sentence_index, &ex.words())?;
            match model.kind {
                ModelKind::Flat => {
                    let tagset = model.registry.get(corpus.tagset.as_deref().unwrap_or_default())?;
                    model.flat_heads.predict(&enc, tagset)
                }
                ModelKind::Nested => Ok(delinearize(&model.nested()?.decode(&enc)?)),
            }
        })
        .collect()
}

fn evaluate(model: &ModelBundle, corpus: &Prepared) -> Result<Prf> {
    let pred = predict_corpus(model, corpus)?;
    let gold: Vec<Vec<EntitySpan>> = corpus.examples.iter().map(|e| e.spans.clone()).collect();
    let report = match model.kind {
        ModelKind::Flat => score_flat(&gold, &pred)?,
        ModelKind::Nested => score_nested(&gold, &pred)?,
    };
    Ok(report.micro)
}

/// Loss of one example with gradients accumulated into `grads`.
fn accumulate(
    model: &ModelBundle,
    corpus: &Prepared,
    ex: &Example,
    grads: &mut crate::model::ModelGrads,
) -> Result<f64> {
    let source = corpus.source(model);
    let words = ex.words();
    let enc = source.embed(&ex.doc_id, ex.sentence_index, &words)?;
    let (loss, input_grad) = match &ex.gold {
        Gold::Flat(ids) => {
            let tagset = model.registry.get(corpus.tagset.as_deref().unwrap_or_default())?;
            model.flat_heads.loss_into(&enc, tagset, ids, &mut grads.flat)?
        }
        Gold::Nested(ll) => {
            let head = model.nested()?;
            let g = grads.nested.as_mut().expect("nested model has nested grads");
            head.loss_into(&enc, ll, g)?
        }
    };
    if matches!(source, EmbeddingSource::Toy(_)) {
        model.encoder.accumulate_backward(&words, &input_grad, &mut grads.encoder)?;
    }
    Ok(loss)
}

/// Gradient of the mean loss over `batch`, as used for one update.
pub fn batch_gradients(
    model: &ModelBundle,
    corpora: &[TrainCorpus],
    batch: &[BatchSlot],
    config: &TrainConfig,
) -> Result<(f64, crate::model::ModelGrads)> {
    let prepared = corpora
        .iter()
        .map(|c| prepare(model, config, c))
        .collect::<Result<Vec<_>>>()?;
    let mut grads = model.zero_grads();
    let mut loss = 0.0;
    for slot in batch {
        let corpus = &prepared[slot.corpus];
        loss += accumulate(model, corpus, &corpus.examples[slot.sentence], &mut grads)?;
    }
    let inv = 1.0 / batch.len().max(1) as f64;
    for (_, g) in grads.tensors_mut() {
        g.iter_mut().for_each(|v| *v *= inv);
    }
    Ok((loss * inv, grads))
}

/// Trains `model` and returns the best epoch's bundle together with the full
/// history.
pub fn train(
    config: &TrainConfig,
    model: ModelBundle,
    train_corpora: &[TrainCorpus],
    dev_corpora: &[TrainCorpus],
) -> Result<TrainOutcome> {
    train_with(config, model, train_corpora, dev_corpora, |_| {})
}

/// [`train`] with a callback invoked after every epoch.
pub fn train_with<F>(
    config: &TrainConfig,
    mut model: ModelBundle,
    train_corpora: &[TrainCorpus],
    dev_corpora: &[TrainCorpus],
    mut on_epoch: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&EpochRecord),
{
    config.validate()?;
    if dev_corpora.is_empty() {
        return Err(Error::Config("at least one dev corpus is required for model selection".into()));
    }
    if config.total_epochs() == 0 {
        return Err(Error::Config("no training epochs configured".into()));
    }
    model.config.max_len = config.max_len;
    if let Some(head) = &mut model.nested_head {
        head.config.max_depth = config.max_depth;
    }
    model.train_config = Some(config.clone());

    let train = train_corpora
        .iter()
        .map(|c| prepare(&model, config, c))
        .collect::<Result<Vec<_>>>()?;
    let dev = dev_corpora
        .iter()
        .map(|c| prepare(&model, config, c))
        .collect::<Result<Vec<_>>>()?;
    let sizes: Vec<(String, usize)> = train.iter().map(|c| (c.id.clone(), c.examples.len())).collect();
    let sampler = Sampler::new(sqrt_temperature_weights(&sizes)?)?;
    let spe = steps_per_epoch(sizes.iter().map(|(_, n)| n).sum(), config.batch_size);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(config.optimizer);
    let mut history = History::default();
    let mut best: Option<(usize, f64, ModelBundle)> = None;
    let mut step = 0usize;

    for epoch in 1..=config.total_epochs() {
        let frozen = epoch <= config.frozen_epochs;
        model.encoder.frozen = frozen;
        let mut loss_sum = vec![0.0; train.len()];
        let mut loss_count = vec![0usize; train.len()];
        for _ in 0..spe {
            let batch = sampler.sample_batch(&mut rng, config.batch_size);
            let mut grads = model.zero_grads();
            for slot in &batch {
                let corpus = &train[slot.corpus];
                let loss = accumulate(&model, corpus, &corpus.examples[slot.sentence], &mut grads)?;
                loss_sum[slot.corpus] += loss;
                loss_count[slot.corpus] += 1;
            }
            let inv = 1.0 / batch.len() as f64;
            let lr = lr_at(config, step, spe);
            let trainable = |name: &str| !(frozen && name.starts_with("encoder."));
            let mut g: Vec<(String, &mut [f64])> =
                grads.tensors_mut().into_iter().filter(|(n, _)| trainable(n)).collect();
            for (_, t) in g.iter_mut() {
                t.iter_mut().for_each(|v| *v *= inv);
            }
            clip_global_norm(g, config.clip_norm);
            let grads_view: Vec<(String, &[f64])> =
                grads.tensors().into_iter().filter(|(n, _)| trainable(n)).collect();
            let params: Vec<(String, &mut [f64])> =
                model.tensors_mut().into_iter().filter(|(n, _)| trainable(n)).collect();
            adam.step(params, grads_view, lr);
            step += 1;
        }
        model.encoder.frozen = false;

        let dev_scores = dev.iter().map(|c| evaluate(&model, c)).collect::<Result<Vec<_>>>()?;
        let macro_score = macro_f1(&dev_scores.iter().map(|p| p.f1).collect::<Vec<_>>())?;

        let mut rows: BTreeMap<String, CorpusEpoch> = BTreeMap::new();
        for (i, c) in train.iter().enumerate() {
            rows.entry(c.id.clone())
                .or_insert_with(|| CorpusEpoch { corpus: c.id.clone(), loss: None, dev: None })
                .loss = (loss_count[i] > 0).then(|| loss_sum[i] / loss_count[i] as f64);
        }
        for (c, prf) in dev.iter().zip(&dev_scores) {
            rows.entry(c.id.clone())
                .or_insert_with(|| CorpusEpoch { corpus: c.id.clone(), loss: None, dev: None })
                .dev = Some(*prf);
        }
        let total_count: usize = loss_count.iter().sum();
        let record = EpochRecord {
            epoch,
            frozen,
            loss: loss_sum.iter().sum::<f64>() / total_count.max(1) as f64,
            macro_f1: macro_score,
            corpora: rows.into_values().collect(),
        };
        on_epoch(&record);
        history.epochs.push(record);

        if best.as_ref().is_none_or(|(_, score, _)| macro_score > *score) {
            best = Some((epoch, macro_score, model.clone()));
        }
    }

    let (best_epoch, _, best) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        best,
        best_epoch,
        history,
    })
}
