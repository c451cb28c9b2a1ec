//! Named label inventories and the registry that routes predictions to them.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::codec::{is_valid_etype, Label, Tag};
use crate::error::{Error, Result};

pub const REGISTRY_FORMAT_VERSION: u32 = 1;

/// Default registry shipped with the crate (`conll`, `uner`, `onto`).
pub const DEFAULT_TAGSETS: &str = include_str!("../configs/tagsets.toml");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct TagsetSpec {
    name: String,
    etypes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct RegistryFile {
    format_version: u32,
    tagsets: Vec<TagsetSpec>,
}

/// A label inventory with dense ids: `O` = 0, `B-X` = 2i+1, `I-X` = 2i+2 for
/// the i-th entity type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tagset {
    name: String,
    etypes: Vec<String>,
    etype_index: HashMap<String, usize>,
}

impl Tagset {
    pub fn new(name: impl Into<String>, etypes: Vec<String>) -> Result<Self> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(Error::TagsetConfig("tagset name must be non-empty".into()));
        }
        let mut etype_index = HashMap::new();
        for (i, etype) in etypes.iter().enumerate() {
            if !is_valid_etype(etype) {
                return Err(Error::TagsetConfig(format!(
                    "tagset `{name}`: invalid entity type `{etype}`"
                )));
            }
            if etype_index.insert(etype.clone(), i).is_some() {
                return Err(Error::TagsetConfig(format!(
                    "tagset `{name}`: duplicate entity type `{etype}`"
                )));
            }
        }
        Ok(Tagset {
            name,
            etypes,
            etype_index,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn etypes(&self) -> &[String] {
        &self.etypes
    }

    pub fn num_labels(&self) -> usize {
        1 + 2 * self.etypes.len()
    }

    pub fn has_etype(&self, etype: &str) -> bool {
        self.etype_index.contains_key(etype)
    }

    pub fn encode(&self, label: &Label) -> Result<usize> {
        let lookup = |etype: &String| {
            self.etype_index.get(etype).copied().ok_or_else(|| Error::UnknownLabel {
                label: label.to_string(),
                inventory: format!("tagset `{}`", self.name),
            })
        };
        match label {
            Tag::Outside => Ok(0),
            Tag::Begin(e) => Ok(2 * lookup(e)? + 1),
            Tag::Inside(e) => Ok(2 * lookup(e)? + 2),
        }
    }

    /// Borrowing decode used on hot paths.
    pub fn tag(&self, id: usize) -> Option<Tag<&str>> {
        if id == 0 {
            return Some(Tag::Outside);
        }
        let etype = self.etypes.get((id - 1) / 2)?.as_str();
        Some(if id % 2 == 1 {
            Tag::Begin(etype)
        } else {
            Tag::Inside(etype)
        })
    }

    pub fn decode(&self, id: usize) -> Result<Label> {
        self.tag(id)
            .map(|t| t.to_owned_label())
            .ok_or(Error::LabelId {
                id,
                inventory: format!("tagset `{}`", self.name),
                size: self.num_labels(),
            })
    }

    /// All labels in id order.
    pub fn labels(&self) -> Vec<Label> {
        (0..self.num_labels()).map(|id| self.decode(id).expect("in range")).collect()
    }

    /// True iff every id belongs to this tagset.
    pub fn validate_labels(&self, ids: &[usize]) -> bool {
        ids.iter().all(|&id| id < self.num_labels())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RegistryFile", into = "RegistryFile")]
pub struct TagsetRegistry {
    tagsets: Vec<Tagset>,
}

impl TryFrom<RegistryFile> for TagsetRegistry {
    type Error = Error;

    fn try_from(file: RegistryFile) -> Result<Self> {
        if file.format_version != REGISTRY_FORMAT_VERSION {
            return Err(Error::TagsetConfig(format!(
                "unsupported format_version {}",
                file.format_version
            )));
        }
        let mut names = BTreeSet::new();
        let mut tagsets = Vec::with_capacity(file.tagsets.len());
        for spec in file.tagsets {
            if !names.insert(spec.name.clone()) {
                return Err(Error::TagsetConfig(format!(
                    "duplicate tagset name `{}`",
                    spec.name
                )));
            }
            tagsets.push(Tagset::new(spec.name, spec.etypes)?);
        }
        Ok(TagsetRegistry { tagsets })
    }
}

impl From<TagsetRegistry> for RegistryFile {
    fn from(registry: TagsetRegistry) -> Self {
        RegistryFile {
            format_version: REGISTRY_FORMAT_VERSION,
            tagsets: registry
                .tagsets
                .into_iter()
                .map(|t| TagsetSpec {
                    name: t.name,
                    etypes: t.etypes,
                })
                .collect(),
        }
    }
}

impl TagsetRegistry {
    pub fn new(tagsets: Vec<Tagset>) -> Result<Self> {
        let file = RegistryFile {
            format_version: REGISTRY_FORMAT_VERSION,
            tagsets: tagsets
                .into_iter()
                .map(|t| TagsetSpec {
                    name: t.name,
                    etypes: t.etypes,
                })
                .collect(),
        };
        file.try_into()
    }

    pub fn default_registry() -> Self {
        load_registry(DEFAULT_TAGSETS).expect("bundled tagset config is valid")
    }

    pub fn get(&self, name: &str) -> Result<&Tagset> {
        self.tagsets
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::UnknownTagset(name.to_string()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.tagsets.iter().map(|t| t.name.as_str()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tagset> {
        self.tagsets.iter()
    }

    pub fn len(&self) -> usize {
        self.tagsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tagsets.is_empty()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&RegistryFile::from(self.clone())).expect("registry serializes")
    }
}

/// Loads a registry from its TOML config.
pub fn load_registry(config: &str) -> Result<TagsetRegistry> {
    toml::from_str::<TagsetRegistry>(config).map_err(|e| Error::TagsetConfig(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(body: &str) -> String {
        format!("format_version = 1\n{body}")
    }

    #[test]
    fn conll_tagset_has_nine_labels() {
        let reg = load_registry(&config(
            "[[tagsets]]\nname = \"conll\"\netypes = [\"PER\", \"ORG\", \"LOC\", \"MISC\"]\n",
        ))
        .unwrap();
        let conll = reg.get("conll").unwrap();
        assert_eq!(conll.num_labels(), 9);
        let rendered: Vec<String> = conll.labels().iter().map(ToString::to_string).collect();
        assert_eq!(
            rendered,
            ["O", "B-PER", "I-PER", "B-ORG", "I-ORG", "B-LOC", "I-LOC", "B-MISC", "I-MISC"]
        );
    }

    #[test]
    fn single_etype_has_three_labels() {
        let reg = load_registry(&config("[[tagsets]]\nname = \"x\"\netypes = [\"X\"]\n")).unwrap();
        assert_eq!(reg.get("x").unwrap().num_labels(), 3);
    }

    #[test]
    fn duplicates_rejected() {
        let dup_name = config(
            "[[tagsets]]\nname = \"a\"\netypes = [\"X\"]\n[[tagsets]]\nname = \"a\"\netypes = [\"Y\"]\n",
        );
        assert!(load_registry(&dup_name).is_err());
        let dup_etype = config("[[tagsets]]\nname = \"a\"\netypes = [\"X\", \"X\"]\n");
        assert!(load_registry(&dup_etype).is_err());
        assert!(load_registry("format_version = 2\ntagsets = []\n").is_err());
        assert!(load_registry(&config("[[tagsets]]\nname = \"a\"\netypes = [\"A B\"]\n")).is_err());
    }

    #[test]
    fn validate_label_ids() {
        let t = Tagset::new("t", vec!["PER".into(), "LOC".into()]).unwrap();
        assert!(t.validate_labels(&[0, 1, 2, 3, 4]));
        assert!(!t.validate_labels(&[0, 5]));
        assert!(t.validate_labels(&[]));
    }

    #[test]
    fn encode_decode_roundtrip() {
        let reg = TagsetRegistry::default_registry();
        assert_eq!(reg.names(), vec!["conll", "uner", "onto"]);
        for tagset in reg.iter() {
            for label in tagset.labels() {
                let id = tagset.encode(&label).unwrap();
                assert_eq!(tagset.decode(id).unwrap(), label);
            }
            assert!(tagset.decode(tagset.num_labels()).is_err());
        }
        let conll = reg.get("conll").unwrap();
        assert!(conll.encode(&"B-GPE".parse().unwrap()).is_err());
        assert!(reg.get("nope").is_err());
    }

    #[test]
    fn registry_toml_roundtrip_is_stable() {
        let reg = TagsetRegistry::default_registry();
        let again = load_registry(&reg.to_toml()).unwrap();
        assert_eq!(reg, again);
        assert_eq!(reg.to_toml(), again.to_toml());
    }
}
