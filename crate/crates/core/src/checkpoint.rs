//! Binary model container shared by the generator and the classifier.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "MAUG"            magic
//! u32               format version
//! u8                model kind (1 = generator, 2 = classifier)
//! u64               vocabulary min_freq
//! u32               vocabulary size, then per token: u32 byte length + UTF-8
//! u32               hyperparameter count, then per entry: u32 length + name, u64 value
//! u32               tensor count, then per tensor: u32 length + name, u32 rank, u64 dims…
//! f64…              tensor values in directory order, row-major
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"MAUG";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum ModelKind {
    Generator = 1,
    Classifier = 2,
}

impl ModelKind {
    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            1 => Ok(Self::Generator),
            2 => Ok(Self::Classifier),
            t => Err(Error::Checkpoint(format!("unknown model kind {t}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub vocab: Vocabulary,
    pub hyper: Vec<(String, u64)>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn hyper(&self, name: &str) -> Result<u64> {
        self.hyper
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::Checkpoint(format!("missing hyperparameter {name}")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(self.kind as u8);
        out.extend_from_slice(&(self.vocab.min_freq() as u64).to_le_bytes());
        put_u32(&mut out, self.vocab.len());
        for t in self.vocab.tokens() {
            put_str(&mut out, t);
        }
        put_u32(&mut out, self.hyper.len());
        for (name, v) in &self.hyper {
            put_str(&mut out, name);
            out.extend_from_slice(&v.to_le_bytes());
        }
        put_u32(&mut out, self.tensors.len());
        for (name, t) in &self.tensors {
            put_str(&mut out, name);
            put_u32(&mut out, t.shape().len());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
        }
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION as usize {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let kind = ModelKind::from_tag(r.take(1)?[0])?;
        let min_freq = r.u64()? as usize;
        let n_tokens = r.u32()?;
        let tokens = (0..n_tokens).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
        if tokens.len() < Vocabulary::RESERVED.len()
            || tokens.iter().zip(Vocabulary::RESERVED).any(|(a, b)| a != b)
        {
            return Err(Error::Checkpoint("vocabulary lacks the reserved tokens".into()));
        }
        let vocab = Vocabulary::from_tokens(tokens, min_freq);
        let n_hyper = r.u32()?;
        let hyper = (0..n_hyper)
            .map(|_| Ok((r.string()?, r.u64()?)))
            .collect::<Result<Vec<_>>>()?;
        let n_tensors = r.u32()?;
        let mut dir = Vec::with_capacity(n_tensors);
        for _ in 0..n_tensors {
            let name = r.string()?;
            let rank = r.u32()?;
            let shape = (0..rank).map(|_| Ok(r.u64()? as usize)).collect::<Result<Vec<_>>>()?;
            dir.push((name, shape));
        }
        let mut tensors = Vec::with_capacity(dir.len());
        for (name, shape) in dir {
            let n: usize = shape.iter().product();
            let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let t = Tensor::new(&shape, data).map_err(|e| Error::Checkpoint(format!("tensor {name}: {e}")))?;
            tensors.push((name, t));
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self {
            kind,
            vocab,
            hyper,
            tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_bytes_atomic(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn expect_kind(self, kind: ModelKind) -> Result<Self> {
        if self.kind != kind {
            return Err(Error::Checkpoint(format!("expected a {kind:?} checkpoint, found {:?}", self.kind)));
        }
        Ok(self)
    }
}

/// Hex SHA-256 of a parameter list's raw bits.
pub fn params_hash(params: &[Tensor]) -> String {
    let mut h = Sha256::new();
    for p in params {
        for d in p.shape() {
            h.update((*d as u64).to_le_bytes());
        }
        for v in p.data() {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

fn put_u32(out: &mut Vec<u8>, n: usize) {
    out.extend_from_slice(&u32::try_from(n).expect("count fits in u32").to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("invalid UTF-8".into()))
    }
}
