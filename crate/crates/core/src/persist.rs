//! Binary embedding container and TSV export.
//!
//! Layout (all integers and floats little-endian):
//!
//! | bytes | field                                        |
//! |-------|----------------------------------------------|
//! | 4     | magic `KGEB`                                 |
//! | 4     | format version, `u32`                        |
//! | 1     | kind tag: 0 full, 1 diagonal, 2 translational |
//! | 8     | entity count `u64`                           |
//! | 8     | relation count `u64`                         |
//! | 8     | dimension `N` `u64`                          |
//!
//! followed by entity vectors row-major, then relations row-major (`N×N`
//! values per full relation, `N` per diagonal or translational relation),
//! each value an `f64`.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::graph::{Triple, Vocabulary};
use crate::model::{EmbeddingSpace, RelationKind, TransEParams};

pub const MAGIC: &[u8; 4] = b"KGEB";
pub const FORMAT_VERSION: u32 = 1;

const TAG_FULL: u8 = 0;
const TAG_DIAGONAL: u8 = 1;
const TAG_TRANSE: u8 = 2;

/// Parameters of any trainable model, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredModel {
    Bilinear(EmbeddingSpace),
    TransE(TransEParams),
}

impl StoredModel {
    pub fn num_entities(&self) -> usize {
        match self {
            StoredModel::Bilinear(s) => s.num_entities(),
            StoredModel::TransE(p) => p.num_entities(),
        }
    }

    pub fn num_relations(&self) -> usize {
        match self {
            StoredModel::Bilinear(s) => s.num_relations(),
            StoredModel::TransE(p) => p.num_relations(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            StoredModel::Bilinear(s) => s.dim(),
            StoredModel::TransE(p) => p.dim(),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            StoredModel::Bilinear(s) => s.is_finite(),
            StoredModel::TransE(p) => p.is_finite(),
        }
    }

    pub fn contains(&self, t: Triple) -> bool {
        match self {
            StoredModel::Bilinear(s) => s.contains(t),
            StoredModel::TransE(p) => p.contains(t),
        }
    }

    fn parts(&self) -> (u8, &[f64], &[f64]) {
        match self {
            StoredModel::Bilinear(s) => {
                let tag = match s.kind() {
                    RelationKind::Full => TAG_FULL,
                    RelationKind::Diagonal => TAG_DIAGONAL,
                };
                (tag, s.entities(), s.relations())
            }
            StoredModel::TransE(p) => (TAG_TRANSE, p.entities(), p.relations()),
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let (tag, entities, relations) = self.parts();
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&[tag])?;
        for n in [self.num_entities(), self.num_relations(), self.dim()] {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        for x in entities.iter().chain(relations) {
            w.write_all(&x.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic bytes".into()));
        }
        let version = u32::from_le_bytes(read_array(&mut r)?);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {version}")));
        }
        let [tag] = read_array::<1>(&mut r)?;
        let mut dims = [0usize; 3];
        for d in &mut dims {
            let v = u64::from_le_bytes(read_array(&mut r)?);
            *d = usize::try_from(v).map_err(|_| Error::Format(format!("size {v} too large")))?;
        }
        let [num_entities, num_relations, dim] = dims;
        let rel_len = match tag {
            TAG_FULL => dim.checked_mul(dim),
            TAG_DIAGONAL | TAG_TRANSE => Some(dim),
            other => return Err(Error::Format(format!("unknown kind tag {other}"))),
        }
        .ok_or_else(|| Error::Format("dimension overflow".into()))?;
        let entities = read_floats(&mut r, num_entities.checked_mul(dim))?;
        let relations = read_floats(&mut r, num_relations.checked_mul(rel_len))?;
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after parameters".into()));
        }
        match tag {
            TAG_FULL => EmbeddingSpace::from_parts(RelationKind::Full, dim, entities, relations).map(Self::Bilinear),
            TAG_DIAGONAL => {
                EmbeddingSpace::from_parts(RelationKind::Diagonal, dim, entities, relations).map(Self::Bilinear)
            }
            _ => TransEParams::from_parts(dim, entities, relations).map(Self::TransE),
        }
    }
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("file truncated".into())
    } else {
        Error::Io(e)
    }
}

fn read_array<const K: usize>(r: &mut impl Read) -> Result<[u8; K]> {
    let mut buf = [0u8; K];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(buf)
}

fn read_floats(r: &mut impl Read, count: Option<usize>) -> Result<Vec<f64>> {
    let count = count.ok_or_else(|| Error::Format("parameter count overflow".into()))?;
    let mut out = Vec::with_capacity(count.min(1 << 24));
    for _ in 0..count {
        out.push(f64::from_le_bytes(read_array(r)?));
    }
    Ok(out)
}

/// Entity table as `name<TAB>v1<TAB>…<TAB>vN` lines.
pub fn entities_tsv(vocab: &Vocabulary, model: &StoredModel) -> Result<String> {
    check_vocab(vocab, model)?;
    let dim = model.dim();
    let values = match model {
        StoredModel::Bilinear(s) => s.entities(),
        StoredModel::TransE(p) => p.entities(),
    };
    Ok(rows_tsv(vocab.entity_names(), values, dim))
}

/// Relation table; full matrices are flattened row-major.
pub fn relations_tsv(vocab: &Vocabulary, model: &StoredModel) -> Result<String> {
    check_vocab(vocab, model)?;
    let (values, width) = match model {
        StoredModel::Bilinear(s) => (s.relations(), s.relation_len()),
        StoredModel::TransE(p) => (p.relations(), p.dim()),
    };
    Ok(rows_tsv(vocab.relation_names(), values, width))
}

fn rows_tsv(names: &[String], values: &[f64], width: usize) -> String {
    let mut out = String::new();
    for (name, row) in names.iter().zip(values.chunks_exact(width)) {
        out.push_str(name);
        for v in row {
            out.push('\t');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn check_vocab(vocab: &Vocabulary, model: &StoredModel) -> Result<()> {
    if vocab.num_entities() != model.num_entities() || vocab.num_relations() != model.num_relations() {
        return Err(Error::Shape(format!(
            "vocabulary has {} entities / {} relations but the model has {} / {}",
            vocab.num_entities(),
            vocab.num_relations(),
            model.num_entities(),
            model.num_relations()
        )));
    }
    Ok(())
}
