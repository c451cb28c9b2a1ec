//! Model bundles: encoder plus heads, checkpoint I/O and inference.
//!
//! Checkpoint layout:
//!
//! ```text
//! NERFORGE-CHECKPOINT 1
//! sha256 <hex digest of the payload>
//! <JSON payload>
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codec::delinearize;
use crate::corpus::EntitySpan;
use crate::encoder::{EncoderConfig, EncoderOutput, EncoderParams, DEFAULT_MAX_LEN};
use crate::error::{Error, Result};
use crate::heads::{FlatHeads, NestedConfig, NestedHead};
use crate::params::ParamSet;
use crate::tagset::TagsetRegistry;
use crate::trainer::TrainConfig;

pub const CHECKPOINT_MAGIC: &str = "NERFORGE-CHECKPOINT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Overlap between consecutive windows when a sentence exceeds `max_len`.
pub const WINDOW_OVERLAP: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Flat,
    Nested,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Flat => "flat",
            ModelKind::Nested => "nested",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub nested: NestedConfig,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder: EncoderConfig::default(),
            nested: NestedConfig::default(),
            max_len: DEFAULT_MAX_LEN,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub name: String,
    pub kind: ModelKind,
    pub languages: Vec<String>,
    pub config: ModelConfig,
    /// Echo of the configuration the bundle was trained with.
    pub train_config: Option<TrainConfig>,
    pub registry: TagsetRegistry,
    pub encoder: EncoderParams,
    pub flat_heads: FlatHeads,
    pub nested_head: Option<NestedHead>,
}

/// Gradients laid out like the trainable part of a bundle.
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub encoder: EncoderParams,
    pub flat: FlatHeads,
    pub nested: Option<NestedHead>,
}

impl ModelGrads {
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = self.encoder.tensors();
        out.extend(self.flat.tensors());
        if let Some(n) = &self.nested {
            out.extend(n.tensors());
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = self.encoder.tensors_mut();
        out.extend(self.flat.tensors_mut());
        if let Some(n) = &mut self.nested {
            out.extend(n.tensors_mut());
        }
        out
    }
}

fn mix_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(stream)
}

impl ModelBundle {
    /// A flat model with one head per registered tagset.
    pub fn new_flat(name: impl Into<String>, registry: TagsetRegistry, config: ModelConfig) -> Result<Self> {
        if registry.is_empty() {
            return Err(Error::Config("a flat model needs at least one tagset".into()));
        }
        let encoder = EncoderParams::new(config.encoder.clone(), mix_seed(config.seed, 1));
        let flat_heads = FlatHeads::new(
            &registry,
            config.encoder.dim,
            config.encoder.init_scale,
            mix_seed(config.seed, 2),
        );
        Ok(ModelBundle {
            name: name.into(),
            kind: ModelKind::Flat,
            languages: Vec::new(),
            config,
            train_config: None,
            registry,
            encoder,
            flat_heads,
            nested_head: None,
        })
    }

    /// A nested model over the given entity types.
    pub fn new_nested(name: impl Into<String>, etypes: Vec<String>, config: ModelConfig) -> Result<Self> {
        if etypes.is_empty() {
            return Err(Error::Config("a nested model needs at least one entity type".into()));
        }
        // Validates entity type names and uniqueness.
        crate::tagset::Tagset::new("nested", etypes.clone())?;
        let registry = TagsetRegistry::new(Vec::new())?;
        let encoder = EncoderParams::new(config.encoder.clone(), mix_seed(config.seed, 1));
        let nested = NestedHead::new(
            etypes,
            config.encoder.dim,
            config.nested.clone(),
            mix_seed(config.seed, 3),
        );
        Ok(ModelBundle {
            name: name.into(),
            kind: ModelKind::Nested,
            languages: Vec::new(),
            flat_heads: FlatHeads::new(&registry, config.encoder.dim, 0.0, 0),
            config,
            train_config: None,
            registry,
            encoder,
            nested_head: Some(nested),
        })
    }

    pub fn with_languages(mut self, languages: Vec<String>) -> Self {
        self.languages = languages;
        self
    }

    pub fn tagset_names(&self) -> Vec<&str> {
        self.registry.names()
    }

    pub fn nested(&self) -> Result<&NestedHead> {
        self.nested_head
            .as_ref()
            .ok_or_else(|| Error::Config(format!("model `{}` has no nested head", self.name)))
    }

    pub fn embed(&self, tokens: &[&str]) -> EncoderOutput {
        self.encoder.embed(tokens)
    }

    /// Flat spans for one sentence under the requested tagset's head.
    pub fn predict_flat(&self, tokens: &[&str], tagset: &str) -> Result<Vec<EntitySpan>> {
        let tagset = self.registry.get(tagset)?;
        self.windowed(tokens, false, |window| {
            self.flat_heads.predict(&self.embed(window), tagset)
        })
    }

    /// Nested spans for one sentence.
    pub fn predict_nested(&self, tokens: &[&str]) -> Result<Vec<EntitySpan>> {
        let head = self.nested()?;
        self.windowed(tokens, true, |window| {
            Ok(delinearize(&head.decode(&self.embed(window))?))
        })
    }

    /// Dispatches on the model kind; flat models need a tagset.
    pub fn predict(&self, tokens: &[&str], tagset: Option<&str>) -> Result<Vec<EntitySpan>> {
        match (self.kind, tagset) {
            (ModelKind::Flat, Some(t)) => self.predict_flat(tokens, t),
            (ModelKind::Flat, None) => Err(Error::UnknownTagset(String::new())),
            (ModelKind::Nested, _) => self.predict_nested(tokens),
        }
    }

    /// Runs `predict` over windows of at most `max_len` tokens overlapping by
    /// [`WINDOW_OVERLAP`]. Candidates are merged greedily, preferring spans
    /// farther from their window's edges; spans conflicting with an accepted
    /// span (overlapping for flat output, crossing or duplicate for nested
    /// output) are dropped.
    fn windowed<F>(&self, tokens: &[&str], nested: bool, predict: F) -> Result<Vec<EntitySpan>>
    where
        F: Fn(&[&str]) -> Result<Vec<EntitySpan>>,
    {
        let max_len = self.config.max_len.max(1);
        if tokens.len() <= max_len {
            return predict(tokens);
        }
        let stride = if max_len > WINDOW_OVERLAP { max_len - WINDOW_OVERLAP } else { max_len };
        let mut candidates: Vec<(usize, EntitySpan)> = Vec::new();
        let mut start = 0;
        loop {
            let end = (start + max_len).min(tokens.len());
            for s in predict(&tokens[start..end])? {
                let span = EntitySpan::new(s.start + start, s.end + start, s.etype);
                let left = if start == 0 { usize::MAX } else { span.start - start };
                let right = if end == tokens.len() { usize::MAX } else { end - span.end };
                candidates.push((left.min(right), span));
            }
            if end == tokens.len() {
                break;
            }
            start += stride;
        }
        candidates.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        let mut accepted: Vec<EntitySpan> = Vec::new();
        for (_, span) in candidates {
            let conflicts = accepted.iter().any(|a| {
                if nested {
                    a == &span || (a.overlaps(&span) && !a.contains(&span) && !span.contains(a))
                } else {
                    a.overlaps(&span)
                }
            });
            if !conflicts {
                accepted.push(span);
            }
        }
        if nested {
            accepted.sort_by(crate::codec::canonical_cmp);
        } else {
            accepted.sort();
        }
        Ok(accepted)
    }

    pub fn zero_grads(&self) -> ModelGrads {
        ModelGrads {
            encoder: self.encoder.zeros_like(),
            flat: self.flat_heads.zeros_like(),
            nested: self.nested_head.as_ref().map(NestedHead::zeros_like),
        }
    }

    /// Trainable tensors in the same order as [`ModelGrads::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = self.encoder.tensors_mut();
        out.extend(self.flat_heads.tensors_mut());
        if let Some(n) = &mut self.nested_head {
            out.extend(n.tensors_mut());
        }
        out
    }

    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = self.encoder.tensors();
        out.extend(self.flat_heads.tensors());
        if let Some(n) = &self.nested_head {
            out.extend(n.tensors());
        }
        out
    }

    fn validate(&self) -> Result<()> {
        self.encoder.check_shapes()?;
        self.flat_heads.check_shapes(&self.registry, self.encoder.dim())?;
        match (&self.kind, &self.nested_head) {
            (ModelKind::Nested, Some(head)) => {
                head.check_shapes()?;
                if head.input_dim() != self.encoder.dim() {
                    return Err(Error::Shape("nested head width differs from encoder width".into()));
                }
            }
            (ModelKind::Flat, None) => {}
            _ => return Err(Error::Checkpoint("model kind disagrees with its heads".into())),
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let payload = serde_json::to_vec(self)?;
        let digest = hex::encode(Sha256::digest(&payload));
        let mut out = format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\nsha256 {digest}\n").into_bytes();
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        let mut parts = bytes.splitn(3, |&b| b == b'\n');
        let header = parts.next().ok_or_else(|| bad("empty file"))?;
        let sum = parts.next().ok_or_else(|| bad("missing checksum line"))?;
        let payload = parts.next().ok_or_else(|| bad("missing payload"))?;
        let header = std::str::from_utf8(header).map_err(|_| bad("header is not UTF-8"))?;
        match header.split_once(' ') {
            Some((CHECKPOINT_MAGIC, v)) if v == CHECKPOINT_VERSION.to_string() => {}
            Some((CHECKPOINT_MAGIC, v)) => return Err(bad(&format!("unsupported version {v}"))),
            _ => return Err(bad("not a checkpoint file")),
        }
        let sum = std::str::from_utf8(sum).map_err(|_| bad("checksum line is not UTF-8"))?;
        let expected = sum.strip_prefix("sha256 ").ok_or_else(|| bad("malformed checksum line"))?;
        if hex::encode(Sha256::digest(payload)) != expected {
            return Err(bad("checksum mismatch"));
        }
        let model: ModelBundle = serde_json::from_slice(payload)?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
