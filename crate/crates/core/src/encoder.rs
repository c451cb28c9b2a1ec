//! Contextual token encoder.
//!
//! A word-level stand-in for a pretrained transformer: each token is the mean
//! of hashed character n-gram embeddings, followed by one single-head
//! self-attention layer (with a learned relative-position bias) and a residual
//! connection. Gradients are computed analytically.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamSet;

/// Longest sentence the library encodes in one piece; callers window longer input.
pub const DEFAULT_MAX_LEN: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub dim: usize,
    pub buckets: usize,
    pub min_ngram: usize,
    pub max_ngram: usize,
    /// Relative offsets beyond this share one position-bias entry.
    pub position_window: usize,
    pub init_scale: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            dim: 64,
            buckets: 4096,
            min_ngram: 1,
            max_ngram: 4,
            position_window: 8,
            init_scale: 0.1,
        }
    }
}

/// FNV-1a, stable across platforms and releases.
fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for &b in *part {
            hash ^= u64::from(b);
            hash = hash.wrapping_mul(0x0100_0000_01b3);
        }
    }
    hash
}

/// Hash buckets of a token's features: the whole word plus every character
/// n-gram of `<token>` in the configured length range.
pub fn token_features(token: &str, config: &EncoderConfig) -> Vec<usize> {
    let buckets = config.buckets as u64;
    let mut out = vec![(fnv1a(&[b"w:", token.as_bytes()]) % buckets) as usize];
    let marked: Vec<char> = std::iter::once('<')
        .chain(token.chars())
        .chain(std::iter::once('>'))
        .collect();
    let mut buf = String::new();
    for n in config.min_ngram.max(1)..=config.max_ngram {
        for window in marked.windows(n) {
            buf.clear();
            buf.extend(window);
            out.push((fnv1a(&[b"g:", buf.as_bytes()]) % buckets) as usize);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub table: Array2<f64>,
    pub query: Array2<f64>,
    pub key: Array2<f64>,
    pub value: Array2<f64>,
    pub output: Array2<f64>,
    pub position_bias: Array1<f64>,
    /// When set, gradients with respect to these parameters are zero.
    pub frozen: bool,
}

/// Contextual vectors, one row per token.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub vectors: Array2<f64>,
}

impl EncoderOutput {
    pub fn n_tokens(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }
}

struct Forward {
    features: Vec<Vec<usize>>,
    base: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: Array2<f64>,
    context: Array2<f64>,
    out: Array2<f64>,
}

pub(crate) fn uniform(rng: &mut ChaCha8Rng, shape: (usize, usize), scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || rng.random_range(-scale..=scale))
}

impl EncoderParams {
    pub fn new(config: EncoderConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = config.init_scale;
        let d = config.dim;
        let table = uniform(&mut rng, (config.buckets, d), s);
        let query = uniform(&mut rng, (d, d), s);
        let key = uniform(&mut rng, (d, d), s);
        let value = uniform(&mut rng, (d, d), s);
        let output = uniform(&mut rng, (d, d), s);
        let position_bias =
            Array1::from_shape_simple_fn(2 * config.position_window + 1, || rng.random_range(-s..=s));
        EncoderParams {
            config,
            table,
            query,
            key,
            value,
            output,
            position_bias,
            frozen: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    fn bias_index(&self, i: usize, j: usize) -> usize {
        let w = self.config.position_window as isize;
        ((j as isize - i as isize).clamp(-w, w) + w) as usize
    }

    /// Pre-mixing embedding of each token.
    pub fn token_embeddings(&self, tokens: &[&str]) -> Array2<f64> {
        self.base(&self.features(tokens))
    }

    fn features(&self, tokens: &[&str]) -> Vec<Vec<usize>> {
        tokens.iter().map(|t| token_features(t, &self.config)).collect()
    }

    fn base(&self, features: &[Vec<usize>]) -> Array2<f64> {
        let mut base = Array2::zeros((features.len(), self.dim()));
        for (mut row, feats) in base.rows_mut().into_iter().zip(features) {
            for &f in feats {
                row += &self.table.row(f);
            }
            row /= feats.len() as f64;
        }
        base
    }

    fn forward(&self, tokens: &[&str]) -> Forward {
        let features = self.features(tokens);
        let base = self.base(&features);
        let q = base.dot(&self.query);
        let k = base.dot(&self.key);
        let v = base.dot(&self.value);
        let scale = (self.dim() as f64).sqrt();
        let mut attn = q.dot(&k.t()) / scale;
        for ((i, j), s) in attn.indexed_iter_mut() {
            *s += self.position_bias[self.bias_index(i, j)];
        }
        for mut row in attn.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            row.mapv_inplace(|x| (x - max).exp());
            let sum = row.sum();
            row /= sum;
        }
        let context = attn.dot(&v);
        let out = &base + &context.dot(&self.output);
        Forward {
            features,
            base,
            q,
            k,
            v,
            attn,
            context,
            out,
        }
    }

    /// Encodes a sentence. Deterministic in parameters and tokens.
    pub fn embed(&self, tokens: &[&str]) -> EncoderOutput {
        EncoderOutput {
            vectors: self.forward(tokens).out,
        }
    }

    /// Parameter gradients for an upstream gradient on the output vectors.
    /// All-zero when the encoder is frozen.
    pub fn embed_backward(&self, tokens: &[&str], upstream: &Array2<f64>) -> Result<EncoderParams> {
        let mut grads = self.zeros_like();
        self.accumulate_backward(tokens, upstream, &mut grads)?;
        Ok(grads)
    }

    /// Adds this sentence's parameter gradients into `grads`.
    pub fn accumulate_backward(
        &self,
        tokens: &[&str],
        upstream: &Array2<f64>,
        grads: &mut EncoderParams,
    ) -> Result<()> {
        if upstream.dim() != (tokens.len(), self.dim()) {
            return Err(Error::Shape(format!(
                "upstream gradient is {:?}, encoder output is ({}, {})",
                upstream.dim(),
                tokens.len(),
                self.dim()
            )));
        }
        if self.frozen || tokens.is_empty() {
            return Ok(());
        }
        let fw = self.forward(tokens);
        let scale = (self.dim() as f64).sqrt();

        let mut d_base = upstream.clone();
        grads.output += &fw.context.t().dot(upstream);
        let d_context = upstream.dot(&self.output.t());
        let d_attn = d_context.dot(&fw.v.t());
        let d_v = fw.attn.t().dot(&d_context);

        let mut d_scores = Array2::zeros(fw.attn.dim());
        for (i, (a_row, da_row)) in fw.attn.rows().into_iter().zip(d_attn.rows()).enumerate() {
            let dot = a_row.dot(&da_row);
            for j in 0..a_row.len() {
                let ds = a_row[j] * (da_row[j] - dot);
                d_scores[[i, j]] = ds;
                grads.position_bias[self.bias_index(i, j)] += ds;
            }
        }
        let d_q = d_scores.dot(&fw.k) / scale;
        let d_k = d_scores.t().dot(&fw.q) / scale;

        grads.query += &fw.base.t().dot(&d_q);
        grads.key += &fw.base.t().dot(&d_k);
        grads.value += &fw.base.t().dot(&d_v);
        d_base += &d_q.dot(&self.query.t());
        d_base += &d_k.dot(&self.key.t());
        d_base += &d_v.dot(&self.value.t());

        for (row, feats) in d_base.axis_iter(Axis(0)).zip(&fw.features) {
            let share = 1.0 / feats.len() as f64;
            for &f in feats {
                grads.table.row_mut(f).scaled_add(share, &row);
            }
        }
        Ok(())
    }

    pub fn zeros_like(&self) -> EncoderParams {
        EncoderParams {
            config: self.config.clone(),
            table: Array2::zeros(self.table.dim()),
            query: Array2::zeros(self.query.dim()),
            key: Array2::zeros(self.key.dim()),
            value: Array2::zeros(self.value.dim()),
            output: Array2::zeros(self.output.dim()),
            position_bias: Array1::zeros(self.position_bias.dim()),
            frozen: self.frozen,
        }
    }

    pub(crate) fn check_shapes(&self) -> Result<()> {
        let d = self.config.dim;
        let ok = self.table.dim() == (self.config.buckets, d)
            && [&self.query, &self.key, &self.value, &self.output]
                .iter()
                .all(|m| m.dim() == (d, d))
            && self.position_bias.len() == 2 * self.config.position_window + 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Shape("encoder parameters disagree with encoder config".into()))
        }
    }
}

impl ParamSet for EncoderParams {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        vec![
            ("encoder.table".into(), self.table.as_slice().expect("standard layout")),
            ("encoder.query".into(), self.query.as_slice().expect("standard layout")),
            ("encoder.key".into(), self.key.as_slice().expect("standard layout")),
            ("encoder.value".into(), self.value.as_slice().expect("standard layout")),
            ("encoder.output".into(), self.output.as_slice().expect("standard layout")),
            ("encoder.position_bias".into(), self.position_bias.as_slice().expect("standard layout")),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        vec![
            ("encoder.table".into(), self.table.as_slice_mut().expect("standard layout")),
            ("encoder.query".into(), self.query.as_slice_mut().expect("standard layout")),
            ("encoder.key".into(), self.key.as_slice_mut().expect("standard layout")),
            ("encoder.value".into(), self.value.as_slice_mut().expect("standard layout")),
            ("encoder.output".into(), self.output.as_slice_mut().expect("standard layout")),
            ("encoder.position_bias".into(), self.position_bias.as_slice_mut().expect("standard layout")),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> EncoderParams {
        EncoderParams::new(
            EncoderConfig {
                dim: 8,
                buckets: 64,
                ..Default::default()
            },
            7,
        )
    }

    #[test]
    fn deterministic() {
        let p = small();
        assert_eq!(p.embed(&["a", "b", "c"]), p.embed(&["a", "b", "c"]));
        assert_eq!(EncoderParams::new(p.config.clone(), 7), p);
    }

    #[test]
    fn features_are_stable() {
        let cfg = EncoderConfig::default();
        let f = token_features("Prague", &cfg);
        // whole word + n-grams of "<Prague>" (8 chars) for n = 1..=4
        assert_eq!(f.len(), 1 + 8 + 7 + 6 + 5);
        assert_eq!(f, token_features("Prague", &cfg));
        assert!(f.iter().all(|&b| b < cfg.buckets));
    }

    #[test]
    fn single_token_reduces_to_residual_map() {
        let p = small();
        let e = p.token_embeddings(&["solo"]);
        let expected = &e + &e.dot(&p.value).dot(&p.output);
        let got = p.embed(&["solo"]).vectors;
        for (a, b) in got.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn frozen_and_zero_upstream_give_zero_gradients() {
        let mut p = small();
        let tokens = ["x", "y", "z"];
        let zero = Array2::zeros((3, 8));
        let g = p.embed_backward(&tokens, &zero).unwrap();
        assert!(g.tensors().iter().all(|(_, t)| t.iter().all(|&v| v == 0.0)));

        p.frozen = true;
        let ones = Array2::ones((3, 8));
        let g = p.embed_backward(&tokens, &ones).unwrap();
        assert!(g.tensors().iter().all(|(_, t)| t.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn upstream_shape_is_checked() {
        let p = small();
        assert!(matches!(
            p.embed_backward(&["a", "b"], &Array2::zeros((3, 8))),
            Err(Error::Shape(_))
        ));
    }
}
