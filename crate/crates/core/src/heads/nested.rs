//! Sequence-to-sequence head for nested entities.
//!
//! For every token the decoder runs a short recurrence that sees only that
//! token's encoder vector (hard attention on the current token) and emits its
//! linearized labels, outermost first, until `<eow>`. The recurrence is a
//! single gated recurrent unit over label embeddings, its state seeded from the
//! token vector.

use ndarray::{s, Array1, Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, softmax_inplace};
use crate::codec::{Label, LinearizedLabels, Tag, DEFAULT_MAX_DEPTH, END_OF_WORD};
use crate::encoder::{uniform, EncoderOutput};
use crate::error::{Error, Result};
use crate::params::ParamSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NestedConfig {
    pub label_dim: usize,
    pub hidden: usize,
    pub max_depth: usize,
    pub init_scale: f64,
}

impl Default for NestedConfig {
    fn default() -> Self {
        NestedConfig {
            label_dim: 16,
            hidden: 64,
            max_depth: DEFAULT_MAX_DEPTH,
            init_scale: 0.1,
        }
    }
}

/// Output vocabulary: id 0 is `<eow>`, `B-X` is 2i+1 and `I-X` is 2i+2 for the
/// i-th entity type. The embedding table has one extra row for `<bos>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedHead {
    pub config: NestedConfig,
    pub etypes: Vec<String>,
    pub label_embedding: Array2<f64>,
    pub init_weight: Array2<f64>,
    pub init_bias: Array1<f64>,
    pub update_input: Array2<f64>,
    pub update_hidden: Array2<f64>,
    pub update_bias: Array1<f64>,
    pub reset_input: Array2<f64>,
    pub reset_hidden: Array2<f64>,
    pub reset_bias: Array1<f64>,
    pub cand_input: Array2<f64>,
    pub cand_hidden: Array2<f64>,
    pub cand_bias: Array1<f64>,
    pub cand_hidden_bias: Array1<f64>,
    pub out_weight: Array2<f64>,
    pub out_bias: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct NestedLoss {
    pub loss: f64,
    pub grads: NestedHead,
    pub input_grad: Array2<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn outer_add(target: &mut Array2<f64>, left: ArrayView1<f64>, right: ArrayView1<f64>) {
    for (mut row, &l) in target.rows_mut().into_iter().zip(left.iter()) {
        if l != 0.0 {
            row.scaled_add(l, &right);
        }
    }
}

/// Activations of one decoder step, kept for backpropagation.
struct Step {
    input: Array1<f64>,
    prev: Array1<f64>,
    update: Array1<f64>,
    reset: Array1<f64>,
    hidden_proj: Array1<f64>,
    cand: Array1<f64>,
    state: Array1<f64>,
}

impl NestedHead {
    pub fn new(etypes: Vec<String>, input_dim: usize, config: NestedConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sc = config.init_scale;
        let v = 1 + 2 * etypes.len();
        let (e, h) = (config.label_dim, config.hidden);
        let u = e + input_dim;
        NestedHead {
            label_embedding: uniform(&mut rng, (v + 1, e), sc),
            init_weight: uniform(&mut rng, (input_dim, h), sc),
            init_bias: Array1::zeros(h),
            update_input: uniform(&mut rng, (u, h), sc),
            update_hidden: uniform(&mut rng, (h, h), sc),
            update_bias: Array1::zeros(h),
            reset_input: uniform(&mut rng, (u, h), sc),
            reset_hidden: uniform(&mut rng, (h, h), sc),
            reset_bias: Array1::zeros(h),
            cand_input: uniform(&mut rng, (u, h), sc),
            cand_hidden: uniform(&mut rng, (h, h), sc),
            cand_bias: Array1::zeros(h),
            cand_hidden_bias: Array1::zeros(h),
            out_weight: uniform(&mut rng, (h, v), sc),
            out_bias: Array1::zeros(v),
            config,
            etypes,
        }
    }

    pub fn vocab_size(&self) -> usize {
        1 + 2 * self.etypes.len()
    }

    fn bos(&self) -> usize {
        self.vocab_size()
    }

    pub fn input_dim(&self) -> usize {
        self.init_weight.nrows()
    }

    pub fn label_id(&self, label: &Label) -> Result<usize> {
        let unknown = || Error::UnknownLabel {
            label: label.to_string(),
            inventory: "the nested vocabulary".to_string(),
        };
        match label {
            Tag::Outside => Err(unknown()),
            Tag::Begin(x) | Tag::Inside(x) => {
                let i = self.etypes.iter().position(|e| e == x).ok_or_else(unknown)?;
                Ok(if matches!(label, Tag::Begin(_)) { 2 * i + 1 } else { 2 * i + 2 })
            }
        }
    }

    /// `None` stands for `<eow>`.
    pub fn label(&self, id: usize) -> Option<Label> {
        if id == 0 || id >= self.vocab_size() {
            return None;
        }
        let etype = self.etypes[(id - 1) / 2].clone();
        Some(if id % 2 == 1 { Tag::Begin(etype) } else { Tag::Inside(etype) })
    }

    pub fn label_name(&self, id: usize) -> String {
        self.label(id).map_or_else(|| END_OF_WORD.to_string(), |l| l.to_string())
    }

    fn initial_state(&self, x: ArrayView1<f64>) -> Array1<f64> {
        (x.dot(&self.init_weight) + &self.init_bias).mapv(f64::tanh)
    }

    fn step(&self, prev_label: usize, x: ArrayView1<f64>, prev: &Array1<f64>) -> Step {
        let e = self.config.label_dim;
        let mut input = Array1::zeros(e + x.len());
        input.slice_mut(s![..e]).assign(&self.label_embedding.row(prev_label));
        input.slice_mut(s![e..]).assign(&x);
        let update = (input.dot(&self.update_input) + prev.dot(&self.update_hidden) + &self.update_bias)
            .mapv(sigmoid);
        let reset = (input.dot(&self.reset_input) + prev.dot(&self.reset_hidden) + &self.reset_bias)
            .mapv(sigmoid);
        let hidden_proj = prev.dot(&self.cand_hidden) + &self.cand_hidden_bias;
        let cand = (input.dot(&self.cand_input) + &self.cand_bias + &reset * &hidden_proj).mapv(f64::tanh);
        let state = &cand + &(&update * &(prev - &cand));
        Step {
            input,
            prev: prev.clone(),
            update,
            reset,
            hidden_proj,
            cand,
            state,
        }
    }

    fn logits(&self, state: &Array1<f64>) -> Array1<f64> {
        state.dot(&self.out_weight) + &self.out_bias
    }

    fn check_input(&self, enc: &EncoderOutput) -> Result<()> {
        if enc.dim() != self.input_dim() {
            return Err(Error::Shape(format!(
                "nested head expects width {}, encoder output has {}",
                self.input_dim(),
                enc.dim()
            )));
        }
        Ok(())
    }

    /// Greedy decoding, token by token, capped at `max_depth` labels per token.
    pub fn decode(&self, enc: &EncoderOutput) -> Result<LinearizedLabels> {
        self.check_input(enc)?;
        let mut per_token = Vec::with_capacity(enc.n_tokens());
        for x in enc.vectors.rows() {
            let mut labels = Vec::new();
            let mut state = self.initial_state(x);
            let mut prev = self.bos();
            while labels.len() < self.config.max_depth {
                state = self.step(prev, x, &state).state;
                let id = argmax(self.logits(&state).view());
                match self.label(id) {
                    None => break,
                    Some(label) => labels.push(label),
                }
                prev = id;
            }
            per_token.push(labels);
        }
        Ok(LinearizedLabels { per_token })
    }

    /// Teacher-forced cross-entropy over every token's labels plus its
    /// terminating `<eow>`, averaged over all emitted symbols.
    pub fn loss_into(
        &self,
        enc: &EncoderOutput,
        gold: &LinearizedLabels,
        grads: &mut NestedHead,
    ) -> Result<(f64, Array2<f64>)> {
        self.check_input(enc)?;
        if gold.len() != enc.n_tokens() {
            return Err(Error::Shape(format!(
                "{} gold label lists for {} tokens",
                gold.len(),
                enc.n_tokens()
            )));
        }
        let targets: Vec<Vec<usize>> = gold
            .per_token
            .iter()
            .map(|labels| {
                let mut ids = labels.iter().map(|l| self.label_id(l)).collect::<Result<Vec<_>>>()?;
                ids.push(0);
                Ok(ids)
            })
            .collect::<Result<_>>()?;
        let total: usize = targets.iter().map(Vec::len).sum();
        let mut input_grad = Array2::zeros(enc.vectors.dim());
        if total == 0 {
            return Ok((0.0, input_grad));
        }
        let inv = 1.0 / total as f64;
        let e = self.config.label_dim;
        let mut loss = 0.0;

        for ((x, ids), mut dx) in enc
            .vectors
            .rows()
            .into_iter()
            .zip(&targets)
            .zip(input_grad.rows_mut())
        {
            let init = self.initial_state(x);
            let mut steps: Vec<Step> = Vec::with_capacity(ids.len());
            let mut probs: Vec<Array1<f64>> = Vec::with_capacity(ids.len());
            let mut state = init.clone();
            let mut prev = self.bos();
            for &target in ids {
                let step = self.step(prev, x, &state);
                let mut p = self.logits(&step.state);
                let logit = p[target];
                let log_z = softmax_inplace(p.view_mut());
                loss += log_z - logit;
                state = step.state.clone();
                steps.push(step);
                probs.push(p);
                prev = target;
            }

            let mut d_state: Array1<f64> = Array1::zeros(self.config.hidden);
            for (k, step) in steps.iter().enumerate().rev() {
                let mut d_logits = probs[k].clone();
                d_logits[ids[k]] -= 1.0;
                d_logits *= inv;
                outer_add(&mut grads.out_weight, step.state.view(), d_logits.view());
                grads.out_bias += &d_logits;
                d_state += &self.out_weight.dot(&d_logits);

                let d_cand = &d_state * &step.update.mapv(|z| 1.0 - z);
                let d_update = &d_state * &(&step.prev - &step.cand);
                let mut d_prev = &d_state * &step.update;

                let d_cand_pre = &d_cand * &step.cand.mapv(|c| 1.0 - c * c);
                outer_add(&mut grads.cand_input, step.input.view(), d_cand_pre.view());
                grads.cand_bias += &d_cand_pre;
                let mut d_input = self.cand_input.dot(&d_cand_pre);
                let d_reset = &d_cand_pre * &step.hidden_proj;
                let d_hidden_proj = &d_cand_pre * &step.reset;
                outer_add(&mut grads.cand_hidden, step.prev.view(), d_hidden_proj.view());
                grads.cand_hidden_bias += &d_hidden_proj;
                d_prev += &self.cand_hidden.dot(&d_hidden_proj);

                let d_update_pre = &d_update * &step.update.mapv(|z| z * (1.0 - z));
                outer_add(&mut grads.update_input, step.input.view(), d_update_pre.view());
                outer_add(&mut grads.update_hidden, step.prev.view(), d_update_pre.view());
                grads.update_bias += &d_update_pre;
                d_input += &self.update_input.dot(&d_update_pre);
                d_prev += &self.update_hidden.dot(&d_update_pre);

                let d_reset_pre = &d_reset * &step.reset.mapv(|r| r * (1.0 - r));
                outer_add(&mut grads.reset_input, step.input.view(), d_reset_pre.view());
                outer_add(&mut grads.reset_hidden, step.prev.view(), d_reset_pre.view());
                grads.reset_bias += &d_reset_pre;
                d_input += &self.reset_input.dot(&d_reset_pre);
                d_prev += &self.reset_hidden.dot(&d_reset_pre);

                let prev_label = if k == 0 { self.bos() } else { ids[k - 1] };
                let mut emb_row = grads.label_embedding.row_mut(prev_label);
                emb_row += &d_input.slice(s![..e]);
                dx += &d_input.slice(s![e..]);
                d_state = d_prev;
            }
            let d_init_pre = &d_state * &init.mapv(|h| 1.0 - h * h);
            outer_add(&mut grads.init_weight, x, d_init_pre.view());
            grads.init_bias += &d_init_pre;
            dx += &self.init_weight.dot(&d_init_pre);
        }
        Ok((loss * inv, input_grad))
    }

    pub fn loss(&self, enc: &EncoderOutput, gold: &LinearizedLabels) -> Result<NestedLoss> {
        let mut grads = self.zeros_like();
        let (loss, input_grad) = self.loss_into(enc, gold, &mut grads)?;
        Ok(NestedLoss {
            loss,
            grads,
            input_grad,
        })
    }

    pub fn zeros_like(&self) -> NestedHead {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    pub(crate) fn check_shapes(&self) -> Result<()> {
        let (v, e, h, d) = (
            self.vocab_size(),
            self.config.label_dim,
            self.config.hidden,
            self.input_dim(),
        );
        let u = e + d;
        let ok = self.label_embedding.dim() == (v + 1, e)
            && self.init_bias.len() == h
            && self.init_weight.ncols() == h
            && [&self.update_input, &self.reset_input, &self.cand_input]
                .iter()
                .all(|m| m.dim() == (u, h))
            && [&self.update_hidden, &self.reset_hidden, &self.cand_hidden]
                .iter()
                .all(|m| m.dim() == (h, h))
            && [&self.update_bias, &self.reset_bias, &self.cand_bias, &self.cand_hidden_bias]
                .iter()
                .all(|b| b.len() == h)
            && self.out_weight.dim() == (h, v)
            && self.out_bias.len() == v;
        if ok {
            Ok(())
        } else {
            Err(Error::Shape("nested head parameters disagree with its config".into()))
        }
    }
}

macro_rules! nested_tensors {
    ($self:ident, $as:ident) => {
        vec![
            ("nested.label_embedding".to_string(), $self.label_embedding.$as()),
            ("nested.init_weight".to_string(), $self.init_weight.$as()),
            ("nested.init_bias".to_string(), $self.init_bias.$as()),
            ("nested.update_input".to_string(), $self.update_input.$as()),
            ("nested.update_hidden".to_string(), $self.update_hidden.$as()),
            ("nested.update_bias".to_string(), $self.update_bias.$as()),
            ("nested.reset_input".to_string(), $self.reset_input.$as()),
            ("nested.reset_hidden".to_string(), $self.reset_hidden.$as()),
            ("nested.reset_bias".to_string(), $self.reset_bias.$as()),
            ("nested.cand_input".to_string(), $self.cand_input.$as()),
            ("nested.cand_hidden".to_string(), $self.cand_hidden.$as()),
            ("nested.cand_bias".to_string(), $self.cand_bias.$as()),
            ("nested.cand_hidden_bias".to_string(), $self.cand_hidden_bias.$as()),
            ("nested.out_weight".to_string(), $self.out_weight.$as()),
            ("nested.out_bias".to_string(), $self.out_bias.$as()),
        ]
        .into_iter()
        .map(|(name, t)| (name, t.expect("standard layout")))
        .collect()
    };
}

impl ParamSet for NestedHead {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        nested_tensors!(self, as_slice)
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        nested_tensors!(self, as_slice_mut)
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{delinearize, linearize};
    use crate::corpus::EntitySpan;

    fn head() -> NestedHead {
        NestedHead::new(
            vec!["ORG".into(), "PER".into()],
            6,
            NestedConfig {
                label_dim: 4,
                hidden: 5,
                ..Default::default()
            },
            11,
        )
    }

    fn enc(n: usize) -> EncoderOutput {
        EncoderOutput {
            vectors: Array2::from_shape_fn((n, 6), |(i, j)| ((i * 5 + j * 3) % 7) as f64 / 7.0 - 0.5),
        }
    }

    #[test]
    fn vocabulary_ids() {
        let h = head();
        assert_eq!(h.vocab_size(), 5);
        assert_eq!(h.label_id(&"B-ORG".parse().unwrap()).unwrap(), 1);
        assert_eq!(h.label_id(&"I-PER".parse().unwrap()).unwrap(), 4);
        assert!(h.label_id(&"B-LOC".parse().unwrap()).is_err());
        assert_eq!(h.label_name(0), "<eow>");
        assert_eq!(h.label_name(3), "B-PER");
    }

    #[test]
    fn eow_dominant_head_predicts_nothing() {
        let mut h = head();
        h.out_bias[0] = 1e3;
        let ll = h.decode(&enc(4)).unwrap();
        assert_eq!(ll.per_token, vec![Vec::<Label>::new(); 4]);
    }

    #[test]
    fn generation_is_capped() {
        let mut h = head();
        h.config.max_depth = 3;
        h.out_bias[1] = 1e3; // always B-ORG, never <eow>
        let ll = h.decode(&enc(2)).unwrap();
        assert!(ll.per_token.iter().all(|l| l.len() == 3));
        h.config.max_depth = 16;
        assert!(h.decode(&enc(2)).unwrap().per_token.iter().all(|l| l.len() == 16));
    }

    #[test]
    fn all_empty_gold_is_eow_cross_entropy() {
        let h = head();
        let e = enc(3);
        let gold = LinearizedLabels {
            per_token: vec![vec![]; 3],
        };
        let got = h.loss(&e, &gold).unwrap().loss;
        let mut expected = 0.0;
        for x in e.vectors.rows() {
            let state = h.step(h.bos(), x, &h.initial_state(x)).state;
            let mut p = h.logits(&state);
            softmax_inplace(p.view_mut());
            expected -= p[0].ln();
        }
        assert!((got - expected / 3.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_margin_loss_vanishes() {
        let mut h = head();
        h.out_weight.fill(0.0);
        h.out_bias[0] = 100.0;
        let gold = LinearizedLabels {
            per_token: vec![vec![]; 2],
        };
        assert!(h.loss(&enc(2), &gold).unwrap().loss < 1e-30);
    }

    #[test]
    fn unknown_gold_label_rejected() {
        let h = head();
        let gold = LinearizedLabels {
            per_token: vec![vec!["B-LOC".parse().unwrap()]],
        };
        assert!(h.loss(&enc(1), &gold).is_err());
    }

    #[test]
    fn decode_output_delinearizes() {
        let h = head();
        let ll = h.decode(&enc(5)).unwrap();
        let spans: Vec<EntitySpan> = delinearize(&ll);
        // whatever was decoded, its spans are non-crossing
        let mut uniq = spans.clone();
        uniq.dedup();
        assert!(linearize(5, &uniq, usize::MAX).is_ok());
    }
}
