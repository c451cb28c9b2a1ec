//! One softmax classification head per tagset over shared encoder output.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, softmax_inplace};
use crate::codec::bio_to_spans;
use crate::corpus::EntitySpan;
use crate::encoder::{uniform, EncoderOutput};
use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::tagset::{Tagset, TagsetRegistry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatHead {
    /// `dim x num_labels`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl FlatHead {
    fn zeros(dim: usize, labels: usize) -> Self {
        FlatHead {
            weight: Array2::zeros((dim, labels)),
            bias: Array1::zeros(labels),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatHeads {
    heads: BTreeMap<String, FlatHead>,
}

/// Loss of one sentence under one head.
#[derive(Debug, Clone)]
pub struct FlatLoss {
    pub loss: f64,
    /// Same layout as the heads; zero for every head but the requested one.
    pub grads: FlatHeads,
    /// Gradient with respect to the encoder output.
    pub input_grad: Array2<f64>,
}

impl FlatHeads {
    pub fn new(registry: &TagsetRegistry, dim: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let heads = registry
            .iter()
            .map(|t| {
                let head = FlatHead {
                    weight: uniform(&mut rng, (dim, t.num_labels()), scale),
                    bias: Array1::zeros(t.num_labels()),
                };
                (t.name().to_string(), head)
            })
            .collect();
        FlatHeads { heads }
    }

    pub fn head(&self, tagset: &str) -> Result<&FlatHead> {
        self.heads
            .get(tagset)
            .ok_or_else(|| Error::UnknownTagset(tagset.to_string()))
    }

    pub fn head_mut(&mut self, tagset: &str) -> Result<&mut FlatHead> {
        self.heads
            .get_mut(tagset)
            .ok_or_else(|| Error::UnknownTagset(tagset.to_string()))
    }

    pub fn tagset_names(&self) -> impl Iterator<Item = &str> {
        self.heads.keys().map(String::as_str)
    }

    fn routed(&self, enc: &EncoderOutput, tagset: &Tagset) -> Result<&FlatHead> {
        let head = self.head(tagset.name())?;
        if head.weight.dim() != (enc.dim(), tagset.num_labels()) {
            return Err(Error::Shape(format!(
                "head `{}` is {:?}, expected ({}, {})",
                tagset.name(),
                head.weight.dim(),
                enc.dim(),
                tagset.num_labels()
            )));
        }
        Ok(head)
    }

    /// Logits of the requested head only, `n_tokens x num_labels(tagset)`.
    pub fn forward(&self, enc: &EncoderOutput, tagset: &Tagset) -> Result<Array2<f64>> {
        let head = self.routed(enc, tagset)?;
        Ok(enc.vectors.dot(&head.weight) + &head.bias)
    }

    /// Per-token argmax label ids.
    pub fn predict_ids(&self, enc: &EncoderOutput, tagset: &Tagset) -> Result<Vec<usize>> {
        let logits = self.forward(enc, tagset)?;
        Ok(logits.rows().into_iter().map(argmax).collect())
    }

    /// Argmax labels decoded to spans with BIO repair.
    pub fn predict(&self, enc: &EncoderOutput, tagset: &Tagset) -> Result<Vec<EntitySpan>> {
        let ids = self.predict_ids(enc, tagset)?;
        let tags: Vec<_> = ids
            .iter()
            .map(|&id| tagset.tag(id).expect("argmax within head width"))
            .collect();
        Ok(bio_to_spans(&tags))
    }

    /// Mean token cross-entropy against gold label ids. Gradients are added to
    /// the requested head in `grads`; the encoder-output gradient is returned.
    pub fn loss_into(
        &self,
        enc: &EncoderOutput,
        tagset: &Tagset,
        gold: &[usize],
        grads: &mut FlatHeads,
    ) -> Result<(f64, Array2<f64>)> {
        let head = self.routed(enc, tagset)?;
        if gold.len() != enc.n_tokens() {
            return Err(Error::Shape(format!(
                "{} gold labels for {} tokens",
                gold.len(),
                enc.n_tokens()
            )));
        }
        if let Some(&id) = gold.iter().find(|&&id| id >= tagset.num_labels()) {
            return Err(Error::LabelId {
                id,
                inventory: format!("tagset `{}`", tagset.name()),
                size: tagset.num_labels(),
            });
        }
        let n = gold.len();
        if n == 0 {
            return Ok((0.0, Array2::zeros((0, enc.dim()))));
        }
        let mut probs = enc.vectors.dot(&head.weight) + &head.bias;
        let mut loss = 0.0;
        for (row, &g) in probs.rows_mut().into_iter().zip(gold) {
            let logit = row[g];
            let log_z = softmax_inplace(row);
            loss += log_z - logit;
        }
        let inv = 1.0 / n as f64;
        for (mut row, &g) in probs.rows_mut().into_iter().zip(gold) {
            row[g] -= 1.0;
            row *= inv;
        }
        let d_logits = probs;
        let g = grads.head_mut(tagset.name())?;
        g.weight += &enc.vectors.t().dot(&d_logits);
        g.bias += &d_logits.sum_axis(Axis(0));
        let input_grad = d_logits.dot(&head.weight.t());
        Ok((loss * inv, input_grad))
    }

    pub fn loss(&self, enc: &EncoderOutput, tagset: &Tagset, gold: &[usize]) -> Result<FlatLoss> {
        let mut grads = self.zeros_like();
        let (loss, input_grad) = self.loss_into(enc, tagset, gold, &mut grads)?;
        Ok(FlatLoss {
            loss,
            grads,
            input_grad,
        })
    }

    pub fn zeros_like(&self) -> FlatHeads {
        FlatHeads {
            heads: self
                .heads
                .iter()
                .map(|(k, h)| (k.clone(), FlatHead::zeros(h.weight.nrows(), h.weight.ncols())))
                .collect(),
        }
    }

    pub(crate) fn check_shapes(&self, registry: &TagsetRegistry, dim: usize) -> Result<()> {
        if self.heads.len() != registry.len() {
            return Err(Error::Shape("one flat head per tagset required".into()));
        }
        for t in registry.iter() {
            let h = self.head(t.name())?;
            if h.weight.dim() != (dim, t.num_labels()) || h.bias.len() != t.num_labels() {
                return Err(Error::Shape(format!("flat head `{}` has wrong shape", t.name())));
            }
        }
        Ok(())
    }
}

impl ParamSet for FlatHeads {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        self.heads
            .iter()
            .flat_map(|(name, h)| {
                [
                    (format!("flat.{name}.weight"), h.weight.as_slice().expect("standard layout")),
                    (format!("flat.{name}.bias"), h.bias.as_slice().expect("standard layout")),
                ]
            })
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        self.heads
            .iter_mut()
            .flat_map(|(name, h)| {
                [
                    (format!("flat.{name}.weight"), h.weight.as_slice_mut().expect("standard layout")),
                    (format!("flat.{name}.bias"), h.bias.as_slice_mut().expect("standard layout")),
                ]
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::spans_to_bio;

    fn registry() -> TagsetRegistry {
        TagsetRegistry::new(vec![
            Tagset::new("four", vec!["PER".into(), "ORG".into(), "LOC".into(), "MISC".into()]).unwrap(),
            Tagset::new("two", vec!["A".into(), "B".into()]).unwrap(),
        ])
        .unwrap()
    }

    fn enc(n: usize, d: usize) -> EncoderOutput {
        EncoderOutput {
            vectors: Array2::from_shape_fn((n, d), |(i, j)| ((i * 7 + j * 3) % 5) as f64 / 5.0 - 0.4),
        }
    }

    #[test]
    fn zero_head_gives_zero_logits_and_ln_k_loss() {
        let reg = registry();
        let mut heads = FlatHeads::new(&reg, 4, 0.1, 1);
        heads.head_mut("four").unwrap().weight.fill(0.0);
        let four = reg.get("four").unwrap();
        let logits = heads.forward(&enc(3, 4), four).unwrap();
        assert_eq!(logits.dim(), (3, 9));
        assert!(logits.iter().all(|&v| v == 0.0));
        let loss = heads.loss(&enc(3, 4), four, &[0, 1, 2]).unwrap().loss;
        assert!((loss - 9f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn width_follows_requested_tagset() {
        let reg = registry();
        let heads = FlatHeads::new(&reg, 4, 0.1, 1);
        assert_eq!(heads.forward(&enc(2, 4), reg.get("two").unwrap()).unwrap().ncols(), 5);
        assert_eq!(heads.forward(&enc(2, 4), reg.get("four").unwrap()).unwrap().ncols(), 9);
        let stranger = Tagset::new("other", vec!["X".into()]).unwrap();
        assert!(matches!(heads.forward(&enc(2, 4), &stranger), Err(Error::UnknownTagset(_))));
    }

    #[test]
    fn forced_logits_decode() {
        let reg = registry();
        let four = reg.get("four").unwrap();
        let mut heads = FlatHeads::new(&reg, 3, 0.1, 1);
        // identity-like head: token vector one-hot selects a label
        let h = heads.head_mut("four").unwrap();
        h.weight.fill(0.0);
        h.weight[[0, 1]] = 10.0; // B-PER
        h.weight[[1, 2]] = 10.0; // I-PER
        h.weight[[2, 0]] = 10.0; // O
        let vectors = ndarray::arr2(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let spans = heads.predict(&EncoderOutput { vectors }, four).unwrap();
        assert_eq!(spans, vec![EntitySpan::new(0, 2, "PER")]);
        let vectors = ndarray::arr2(&[[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]]);
        assert!(heads.predict(&EncoderOutput { vectors }, four).unwrap().is_empty());
    }

    #[test]
    fn large_margin_loss_vanishes() {
        let reg = registry();
        let two = reg.get("two").unwrap();
        let mut heads = FlatHeads::new(&reg, 2, 0.1, 1);
        let h = heads.head_mut("two").unwrap();
        h.weight.fill(0.0);
        h.bias.fill(0.0);
        h.bias[3] = 100.0;
        let gold = spans_to_bio(2, &[EntitySpan::new(0, 1, "B")]).unwrap();
        assert_eq!(two.encode(&gold[0]).unwrap(), 3);
        let loss = heads.loss(&enc(2, 2), two, &[3, 3]).unwrap().loss;
        assert!(loss < 1e-30);
    }

    #[test]
    fn gradient_isolated_to_requested_head() {
        let reg = registry();
        let heads = FlatHeads::new(&reg, 4, 0.1, 3);
        let out = heads.loss(&enc(4, 4), reg.get("two").unwrap(), &[0, 1, 2, 4]).unwrap();
        for (name, t) in out.grads.tensors() {
            let zero = t.iter().all(|&v| v == 0.0);
            assert_eq!(zero, name.starts_with("flat.four"), "{name}");
        }
    }

    #[test]
    fn invalid_gold_rejected() {
        let reg = registry();
        let heads = FlatHeads::new(&reg, 4, 0.1, 3);
        assert!(matches!(
            heads.loss(&enc(2, 4), reg.get("two").unwrap(), &[0, 5]),
            Err(Error::LabelId { id: 5, .. })
        ));
    }
}
