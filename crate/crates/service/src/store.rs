//! Loaded models as immutable snapshots. Readers clone the current `Arc` once
//! per request; a reload builds a complete new snapshot before swapping it in.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use nerforge::model::ModelBundle;

use crate::api::ModelInfo;

#[derive(Debug, Default)]
pub struct Snapshot {
    pub generation: u64,
    models: BTreeMap<String, Arc<ModelBundle>>,
}

impl Snapshot {
    fn new(generation: u64, models: Vec<ModelBundle>) -> nerforge::Result<Self> {
        let mut map = BTreeMap::new();
        for model in models {
            let name = model.name.clone();
            if map.insert(name.clone(), Arc::new(model)).is_some() {
                return Err(nerforge::Error::Config(format!("duplicate model name `{name}`")));
            }
        }
        Ok(Snapshot { generation, models: map })
    }

    pub fn get(&self, name: &str) -> Option<Arc<ModelBundle>> {
        self.models.get(name).cloned()
    }

    pub fn listing(&self) -> Vec<ModelInfo> {
        self.models.values().map(|m| ModelInfo::from(m.as_ref())).collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.models.keys().cloned().collect()
    }
}

#[derive(Debug, Default)]
pub struct ModelStore {
    paths: Vec<PathBuf>,
    current: RwLock<Arc<Snapshot>>,
}

impl ModelStore {
    /// Loads every checkpoint; any failure aborts.
    pub fn open(paths: Vec<PathBuf>) -> nerforge::Result<Self> {
        let snapshot = Snapshot::new(0, load_all(&paths)?)?;
        Ok(ModelStore {
            paths,
            current: RwLock::new(Arc::new(snapshot)),
        })
    }

    /// A store over in-memory models; [`ModelStore::reload`] has nothing to
    /// read, so only [`ModelStore::replace`] changes it.
    pub fn from_models(models: Vec<ModelBundle>) -> nerforge::Result<Self> {
        Ok(ModelStore {
            paths: Vec::new(),
            current: RwLock::new(Arc::new(Snapshot::new(0, models)?)),
        })
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.current.read().expect("model store lock poisoned").clone()
    }

    /// Swaps in a new set of models and returns the new generation.
    pub fn replace(&self, models: Vec<ModelBundle>) -> nerforge::Result<u64> {
        let mut guard = self.current.write().expect("model store lock poisoned");
        let generation = guard.generation + 1;
        *guard = Arc::new(Snapshot::new(generation, models)?);
        Ok(generation)
    }

    /// Re-reads the checkpoints the store was opened with. On failure the
    /// current snapshot stays in place.
    pub fn reload(&self) -> nerforge::Result<u64> {
        if self.paths.is_empty() {
            return Err(nerforge::Error::Config("no model files to reload".into()));
        }
        let models = load_all(&self.paths)?;
        self.replace(models)
    }
}

fn load_all(paths: &[PathBuf]) -> nerforge::Result<Vec<ModelBundle>> {
    paths.iter().map(ModelBundle::load).collect()
}
