//! Binary embedding store (`DEMB`, little-endian).
//!
//! ```text
//! magic "DEMB" | version u16 = 1 | flags u16 (bit0: text present)
//! count u32 | dim_img u32 | dim_txt u32
//! per record: id_len u16 | id bytes | image f32 x dim_img | [text f32 x dim_txt]
//! ```

use std::collections::HashMap;
use std::path::Path;

use crate::io::{read_bytes, write_atomic, ByteCursor};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"DEMB";
const VERSION: u16 = 1;
const FLAG_TEXT: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub sample_id: String,
    pub image_vec: Vec<f32>,
    pub text_vec: Option<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    pub image_dim: usize,
    /// Zero when the store carries no text vectors.
    pub text_dim: usize,
    records: Vec<EmbeddingRecord>,
    index: HashMap<String, usize>,
}

impl EmbeddingStore {
    pub fn new(image_dim: usize, text_dim: usize, records: Vec<EmbeddingRecord>) -> Result<Self> {
        let has_text = text_dim > 0;
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.image_vec.len() != image_dim {
                return Err(Error::DimensionMismatch {
                    context: format!("image vector of {:?}", r.sample_id),
                    expected: image_dim,
                    actual: r.image_vec.len(),
                });
            }
            match (&r.text_vec, has_text) {
                (Some(t), true) if t.len() != text_dim => {
                    return Err(Error::DimensionMismatch {
                        context: format!("text vector of {:?}", r.sample_id),
                        expected: text_dim,
                        actual: t.len(),
                    })
                }
                (None, true) | (Some(_), false) => {
                    return Err(Error::InvalidInput(format!(
                        "record {:?}: text vector presence disagrees with store",
                        r.sample_id
                    )))
                }
                _ => {}
            }
            let finite = r
                .image_vec
                .iter()
                .chain(r.text_vec.iter().flatten())
                .all(|x| x.is_finite());
            if !finite {
                return Err(Error::InvalidInput(format!(
                    "record {:?}: non-finite component",
                    r.sample_id
                )));
            }
            if r.sample_id.len() > usize::from(u16::MAX) {
                return Err(Error::InvalidInput(
                    "sample id longer than 65535 bytes".into(),
                ));
            }
            if index.insert(r.sample_id.clone(), i).is_some() {
                return Err(Error::DuplicateId(r.sample_id.clone()));
            }
        }
        Ok(EmbeddingStore {
            image_dim,
            text_dim,
            records,
            index,
        })
    }

    pub fn has_text(&self) -> bool {
        self.text_dim > 0
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingRecord> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let per_record = 4 * (self.image_dim + self.text_dim) + 2;
        let mut out = Vec::with_capacity(20 + self.records.len() * (per_record + 16));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let flags = if self.has_text() { FLAG_TEXT } else { 0 };
        out.extend_from_slice(&flags.to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.image_dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.text_dim as u32).to_le_bytes());
        for r in &self.records {
            out.extend_from_slice(&(r.sample_id.len() as u16).to_le_bytes());
            out.extend_from_slice(r.sample_id.as_bytes());
            for x in r.image_vec.iter().chain(r.text_vec.iter().flatten()) {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = ByteCursor::new(bytes);
        if cur.take(4)? != MAGIC {
            return Err(Error::Format("not an embedding store (bad magic)".into()));
        }
        let version = cur.u16()?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported store version {version}"
            )));
        }
        let flags = cur.u16()?;
        let count = cur.u32()? as usize;
        let image_dim = cur.u32()? as usize;
        let stored_text_dim = cur.u32()? as usize;
        let has_text = flags & FLAG_TEXT != 0;
        if has_text != (stored_text_dim > 0) {
            return Err(Error::Format("text flag disagrees with dim_txt".into()));
        }
        let mut records = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let id_len = usize::from(cur.u16()?);
            let sample_id = std::str::from_utf8(cur.take(id_len)?)
                .map_err(|_| Error::Format("sample id is not UTF-8".into()))?
                .to_string();
            let image_vec = cur.f32s(image_dim)?;
            let text_vec = if has_text {
                Some(cur.f32s(stored_text_dim)?)
            } else {
                None
            };
            records.push(EmbeddingRecord {
                sample_id,
                image_vec,
                text_vec,
            });
        }
        if !cur.is_at_end() {
            return Err(Error::Format("trailing bytes after last record".into()));
        }
        EmbeddingStore::new(image_dim, stored_text_dim, records)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_bytes(path)?)
    }
}
