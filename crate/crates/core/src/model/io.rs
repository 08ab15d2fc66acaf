//! Binary model container.
//!
//! Layout (all integers little-endian u32, floats little-endian f64):
//! `HIEXPL1`, kind byte (1 classifier, 2 language model), vocabulary
//! (count, then length-prefixed UTF-8 tokens for the non-reserved ids),
//! tensor count, `(rows, cols)` per tensor, then every tensor's values in
//! row-major order.

use std::path::Path;

use super::{Dims, LmParams, LstmParams};
use crate::corpus::Vocab;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 7] = b"HIEXPL1";

const KIND_CLASSIFIER: u8 = 1;
const KIND_LM: u8 = 2;
const TENSORS_PER_LSTM: usize = 11;

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

fn encode(kind: u8, vocab: &Vocab, parts: &[&LstmParams]) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.push(kind);
    let tokens = vocab.content_tokens();
    put_u32(&mut buf, tokens.len());
    for t in tokens {
        put_u32(&mut buf, t.len());
        buf.extend_from_slice(t.as_bytes());
    }
    let shapes: Vec<(usize, usize)> = parts.iter().flat_map(|p| p.shapes()).collect();
    put_u32(&mut buf, shapes.len());
    for (r, c) in shapes {
        put_u32(&mut buf, r);
        put_u32(&mut buf, c);
    }
    for p in parts {
        for t in p.tensors() {
            for v in t {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::ModelTruncated(format!("{what} at byte {}", self.pos)));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

fn decode(bytes: &[u8], want_kind: u8) -> Result<(Vocab, Vec<LstmParams>)> {
    if bytes.len() < MAGIC.len() + 1 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::ModelVersion("missing HIEXPL1 header".into()));
    }
    let kind = bytes[MAGIC.len()];
    if kind != want_kind {
        return Err(Error::ModelVersion(format!("model kind {kind}, expected {want_kind}")));
    }
    let mut r = Reader {
        bytes,
        pos: MAGIC.len() + 1,
    };

    let n_tokens = r.u32("vocabulary size")?;
    let mut tokens = Vec::with_capacity(n_tokens.min(1 << 20));
    for _ in 0..n_tokens {
        let len = r.u32("token length")?;
        let raw = r.take(len, "token bytes")?;
        let tok = std::str::from_utf8(raw).map_err(|_| Error::ModelShape("token is not UTF-8".into()))?;
        tokens.push(tok.to_string());
    }
    let vocab = Vocab::from_tokens(&tokens)?;

    let n_parts = if want_kind == KIND_LM { 2 } else { 1 };
    let n_tensors = r.u32("tensor count")?;
    if n_tensors != n_parts * TENSORS_PER_LSTM {
        return Err(Error::ModelShape(format!(
            "{n_tensors} tensors, expected {}",
            n_parts * TENSORS_PER_LSTM
        )));
    }
    let mut shapes = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        shapes.push((r.u32("shape rows")?, r.u32("shape cols")?));
    }

    let mut parts = Vec::with_capacity(n_parts);
    for chunk in shapes.chunks(TENSORS_PER_LSTM) {
        let (vocab_rows, embed) = chunk[0];
        let hidden = chunk[5].1;
        let classes = chunk[9].0;
        let dims = Dims {
            vocab: vocab_rows,
            embed,
            hidden,
            classes,
        };
        if chunk != LstmParams::expected_shapes(dims).as_slice() {
            return Err(Error::ModelShape(format!("inconsistent tensor shapes {chunk:?}")));
        }
        if vocab_rows != vocab.len() {
            return Err(Error::ModelShape(format!(
                "embedding has {vocab_rows} rows but the vocabulary has {} entries",
                vocab.len()
            )));
        }
        if want_kind == KIND_LM && classes != vocab.len() {
            return Err(Error::ModelShape("language-model head is not vocabulary-sized".into()));
        }
        if want_kind == KIND_CLASSIFIER && classes < 2 {
            return Err(Error::ModelShape("classifier needs at least two classes".into()));
        }
        let mut p = LstmParams::zeros(dims);
        for t in p.tensors_mut() {
            let raw = r.take(t.len() * 8, "tensor payload")?;
            for (v, b) in t.iter_mut().zip(raw.chunks_exact(8)) {
                *v = f64::from_le_bytes(b.try_into().expect("8-byte chunk"));
            }
        }
        parts.push(p);
    }
    if r.pos != bytes.len() {
        return Err(Error::ModelShape(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok((vocab, parts))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn save_classifier(path: impl AsRef<Path>, params: &LstmParams, vocab: &Vocab) -> Result<()> {
    write(path.as_ref(), &classifier_bytes(params, vocab))
}

pub fn load_classifier(path: impl AsRef<Path>) -> Result<(LstmParams, Vocab)> {
    classifier_from_bytes(&read(path.as_ref())?)
}

pub fn save_lm(path: impl AsRef<Path>, lm: &LmParams, vocab: &Vocab) -> Result<()> {
    write(path.as_ref(), &lm_bytes(lm, vocab))
}

pub fn load_lm(path: impl AsRef<Path>) -> Result<(LmParams, Vocab)> {
    lm_from_bytes(&read(path.as_ref())?)
}

pub fn classifier_bytes(params: &LstmParams, vocab: &Vocab) -> Vec<u8> {
    encode(KIND_CLASSIFIER, vocab, &[params])
}

pub fn classifier_from_bytes(bytes: &[u8]) -> Result<(LstmParams, Vocab)> {
    let (vocab, mut parts) = decode(bytes, KIND_CLASSIFIER)?;
    Ok((parts.remove(0), vocab))
}

pub fn lm_bytes(lm: &LmParams, vocab: &Vocab) -> Vec<u8> {
    encode(KIND_LM, vocab, &[&lm.forward, &lm.backward])
}

pub fn lm_from_bytes(bytes: &[u8]) -> Result<(LmParams, Vocab)> {
    let (vocab, mut parts) = decode(bytes, KIND_LM)?;
    let backward = parts.pop().expect("two parts");
    let forward = parts.pop().expect("two parts");
    if forward.dims() != backward.dims() {
        return Err(Error::ModelShape("language-model directions disagree".into()));
    }
    Ok((LmParams { forward, backward }, vocab))
}
