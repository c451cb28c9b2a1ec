//! TOML configuration for the `train` and `serve` commands. Relative paths
//! resolve against the directory of the configuration file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use nerforge::corpus::{map_labels, parse_flat_conll, parse_nested, ColumnOrder, Document, LabelMapping};
use nerforge::model::{ModelBundle, ModelConfig, ModelKind};
use nerforge::precomputed::load_precomputed;
use nerforge::tagset::{load_registry, TagsetRegistry};
use nerforge::trainer::{TrainConfig, TrainCorpus};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    #[default]
    Conll,
    Nested,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Columns {
    #[default]
    TokenLabel,
    LabelToken,
}

impl From<Columns> for ColumnOrder {
    fn from(c: Columns) -> Self {
        match c {
            Columns::TokenLabel => ColumnOrder::TokenLabel,
            Columns::LabelToken => ColumnOrder::LabelToken,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub id: String,
    /// Flat models only.
    pub tagset: Option<String>,
    #[serde(default)]
    pub format: CorpusFormat,
    #[serde(default)]
    pub columns: Columns,
    pub train: PathBuf,
    pub dev: PathBuf,
    pub train_embeddings: Option<PathBuf>,
    pub dev_embeddings: Option<PathBuf>,
    #[serde(default)]
    pub rename: BTreeMap<String, String>,
    #[serde(default)]
    pub drop: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFile {
    pub name: String,
    pub kind: ModelKind,
    #[serde(default)]
    pub languages: Vec<String>,
    /// Tagset registry file for flat models; the built-in registry otherwise.
    pub tagsets: Option<PathBuf>,
    /// Entity types of a nested model.
    #[serde(default)]
    pub etypes: Vec<String>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(rename = "corpus")]
    pub corpora: Vec<CorpusSpec>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

impl TrainFile {
    pub fn load(path: &Path) -> anyhow::Result<(Self, PathBuf)> {
        let text = read(path)?;
        let file: TrainFile = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        file.train.validate()?;
        if file.corpora.is_empty() {
            bail!("{}: no [[corpus]] entries", path.display());
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((file, base))
    }

    pub fn registry(&self, base: &Path) -> anyhow::Result<TagsetRegistry> {
        Ok(match &self.tagsets {
            Some(p) => load_registry(&read(&resolve(base, p))?)?,
            None => TagsetRegistry::default_registry(),
        })
    }

    pub fn build_model(&self, base: &Path, seed: Option<u64>) -> anyhow::Result<ModelBundle> {
        let mut config = self.model.clone();
        if let Some(seed) = seed {
            config.seed = seed;
        }
        let model = match self.kind {
            ModelKind::Flat => ModelBundle::new_flat(&self.name, self.registry(base)?, config)?,
            ModelKind::Nested => {
                if self.etypes.is_empty() {
                    bail!("a nested model needs `etypes`");
                }
                ModelBundle::new_nested(&self.name, self.etypes.clone(), config)?
            }
        };
        Ok(model.with_languages(self.languages.clone()))
    }

    /// `(train, dev)` corpora with label mappings applied.
    pub fn corpora(&self, base: &Path) -> anyhow::Result<(Vec<TrainCorpus>, Vec<TrainCorpus>)> {
        let mut train = Vec::new();
        let mut dev = Vec::new();
        for spec in &self.corpora {
            let load = |p: &Path, emb: &Option<PathBuf>| -> anyhow::Result<TrainCorpus> {
                let docs = read_documents(&resolve(base, p), spec.format, spec.columns)?;
                let mut mapping = LabelMapping::default();
                for (from, to) in &spec.rename {
                    mapping = mapping.rename(from, to);
                }
                for etype in &spec.drop {
                    mapping = mapping.drop_type(etype);
                }
                let docs = docs.iter().map(|d| map_labels(d, &mapping)).collect();
                let mut corpus = TrainCorpus::new(spec.id.clone(), spec.tagset.as_deref(), docs);
                if let Some(e) = emb {
                    corpus = corpus.with_embeddings(Arc::new(load_precomputed(resolve(base, e))?));
                }
                Ok(corpus)
            };
            train.push(load(&spec.train, &spec.train_embeddings)?);
            dev.push(load(&spec.dev, &spec.dev_embeddings)?);
        }
        Ok((train, dev))
    }
}

pub fn read_documents(path: &Path, format: CorpusFormat, columns: Columns) -> anyhow::Result<Vec<Document>> {
    let text = read(path)?;
    let docs = match format {
        CorpusFormat::Conll => {
            let (t, l) = ColumnOrder::from(columns).columns();
            parse_flat_conll(&text, t, l)
        }
        CorpusFormat::Nested => parse_nested(&text),
    };
    docs.with_context(|| format!("parsing {}", path.display()))
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeFile {
    pub models: Vec<PathBuf>,
    pub host: Option<String>,
    pub port: Option<u16>,
    pub max_body_bytes: Option<usize>,
    pub static_dir: Option<PathBuf>,
}

impl ServeFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let mut file: ServeFile =
            toml::from_str(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        file.models = file.models.iter().map(|p| resolve(&base, p)).collect();
        file.static_dir = file.static_dir.map(|p| resolve(&base, &p));
        Ok(file)
    }
}
