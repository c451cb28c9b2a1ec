//! Externally computed sentence embeddings.
//!
//! File layout (little endian), version 1:
//!
//! ```text
//! magic   b"NFEMB\0"
//! u32     version (1)
//! u32     width
//! u32     block count
//! blocks: u32 doc-id byte length, doc-id UTF-8 bytes,
//!         u32 sentence index, u32 token count,
//!         f64 x (token count * width), row major
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use crate::encoder::{EncoderOutput, EncoderParams};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"NFEMB\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PrecomputedEmbeddings {
    width: usize,
    blocks: BTreeMap<(String, usize), Array2<f64>>,
}

impl PrecomputedEmbeddings {
    pub fn new(width: usize) -> Self {
        PrecomputedEmbeddings {
            width,
            blocks: BTreeMap::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn insert(&mut self, doc: impl Into<String>, sentence: usize, vectors: Array2<f64>) -> Result<()> {
        if vectors.ncols() != self.width {
            return Err(Error::Shape(format!(
                "embedding width {} does not match store width {}",
                vectors.ncols(),
                self.width
            )));
        }
        self.blocks.insert((doc.into(), sentence), vectors);
        Ok(())
    }

    /// Stored vectors for a sentence, checked against its token count.
    pub fn get(&self, doc: &str, sentence: usize, n_tokens: usize) -> Result<EncoderOutput> {
        let vectors = self
            .blocks
            .get(&(doc.to_string(), sentence))
            .ok_or_else(|| Error::MissingEmbedding {
                doc: doc.to_string(),
                sentence,
            })?;
        if vectors.nrows() != n_tokens {
            return Err(Error::Shape(format!(
                "document `{doc}` sentence {sentence}: stored {} rows for {n_tokens} tokens",
                vectors.nrows()
            )));
        }
        Ok(EncoderOutput {
            vectors: vectors.clone(),
        })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
        w.write_u32::<LittleEndian>(self.width as u32)?;
        w.write_u32::<LittleEndian>(self.blocks.len() as u32)?;
        for ((doc, sentence), vectors) in &self.blocks {
            w.write_u32::<LittleEndian>(doc.len() as u32)?;
            w.write_all(doc.as_bytes())?;
            w.write_u32::<LittleEndian>(*sentence as u32)?;
            w.write_u32::<LittleEndian>(vectors.nrows() as u32)?;
            for &v in vectors.iter() {
                w.write_f64::<LittleEndian>(v)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let bad = |msg: &str| Error::Checkpoint(format!("precomputed embeddings: {msg}"));
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let width = r.read_u32::<LittleEndian>()? as usize;
        let count = r.read_u32::<LittleEndian>()? as usize;
        let mut store = PrecomputedEmbeddings::new(width);
        for _ in 0..count {
            let len = r.read_u32::<LittleEndian>()? as usize;
            let mut id = vec![0u8; len];
            r.read_exact(&mut id)?;
            let doc = String::from_utf8(id).map_err(|_| bad("document id is not UTF-8"))?;
            let sentence = r.read_u32::<LittleEndian>()? as usize;
            let rows = r.read_u32::<LittleEndian>()? as usize;
            let mut values = vec![0.0; rows * width];
            r.read_f64_into::<LittleEndian>(&mut values)?;
            let vectors = Array2::from_shape_vec((rows, width), values).expect("sized above");
            store.insert(doc, sentence, vectors)?;
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(file))
    }
}

/// Loads a precomputed embedding file.
pub fn load_precomputed(path: impl AsRef<Path>) -> Result<PrecomputedEmbeddings> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    PrecomputedEmbeddings::read_from(BufReader::new(file))
}

/// Where a sentence's contextual vectors come from.
#[derive(Debug, Clone, Copy)]
pub enum EmbeddingSource<'a> {
    Toy(&'a EncoderParams),
    Precomputed(&'a PrecomputedEmbeddings),
}

impl EmbeddingSource<'_> {
    pub fn width(&self) -> usize {
        match self {
            EmbeddingSource::Toy(p) => p.dim(),
            EmbeddingSource::Precomputed(s) => s.width(),
        }
    }

    pub fn embed(&self, doc: &str, sentence: usize, tokens: &[&str]) -> Result<EncoderOutput> {
        match self {
            EmbeddingSource::Toy(p) => Ok(p.embed(tokens)),
            EmbeddingSource::Precomputed(s) => s.get(doc, sentence, tokens.len()),
        }
    }
}
