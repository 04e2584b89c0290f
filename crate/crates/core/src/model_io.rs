//! Single-file model format.
//!
//! ```text
//! magic        8 bytes  "QTAGMODL"
//! version      u32
//! dims         5 x u32  word_emb, char_emb, char_hidden, word_hidden, labels
//! flags        u8       bit 0: char encoder, bit 1: CRF
//! fingerprint  32 bytes catalog hash
//! words        u32 count, then u32 byte length + UTF-8 per word
//! chars        u32 count, then u32 byte length + UTF-8 per char
//! mask         35 x u8  start, trans (row-major), end; only with a CRF
//! tensors      u32 count, then per block: u32 length + UTF-8 name,
//!              u64 value count, f64 values
//! ```
//!
//! All integers and floats are little-endian.

use std::path::Path;
use std::sync::Arc;

use crate::crf::TransitionMask;
use crate::error::{Error, Result};
use crate::label::NUM_LABELS;
use crate::net::{init_params, ModelDims, ModelFlags, ModelParams, Vocab};

pub const MAGIC: &[u8; 8] = b"QTAGMODL";
pub const FORMAT_VERSION: u32 = 1;

/// A loaded model together with the fingerprint of its catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub params: ModelParams,
    pub fingerprint: [u8; 32],
}

impl ModelArtifact {
    pub fn fingerprint_hex(&self) -> String {
        self.fingerprint.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("length fits in u32").to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

pub fn encode_model(params: &ModelParams, fingerprint: &[u8; 32]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let d = &params.dims;
    for v in [d.word_emb, d.char_emb, d.char_hidden, d.word_hidden, d.labels] {
        put_u32(&mut out, v);
    }
    let flags = params.flags();
    out.push(u8::from(flags.use_char_embedding) | (u8::from(flags.use_crf) << 1));
    out.extend_from_slice(fingerprint);
    put_u32(&mut out, params.vocab.num_words());
    for w in params.vocab.words() {
        put_str(&mut out, w);
    }
    put_u32(&mut out, params.vocab.num_chars());
    for c in params.vocab.chars() {
        put_str(&mut out, c.encode_utf8(&mut [0; 4]));
    }
    if let Some(t) = &params.crf {
        let m = &t.mask;
        out.extend(
            m.start
                .iter()
                .chain(m.trans.as_flattened())
                .chain(&m.end)
                .map(|&b| u8::from(b)),
        );
    }
    let blocks = params.blocks();
    put_u32(&mut out, blocks.len());
    for (name, data) in blocks {
        put_str(&mut out, name);
        out.extend_from_slice(&(data.len() as u64).to_le_bytes());
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_model(params: &ModelParams, fingerprint: &[u8; 32], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_model(params, fingerprint))?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::CorruptModel("unexpected end of file".into()));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.len()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::CorruptModel("invalid UTF-8".into()))
    }

    fn flag_array<const N: usize>(&mut self) -> Result<[bool; N]> {
        let bytes = self.take(N)?;
        let mut out = [false; N];
        for (o, &b) in out.iter_mut().zip(bytes) {
            *o = match b {
                0 => false,
                1 => true,
                _ => return Err(Error::CorruptModel("bad mask byte".into())),
            };
        }
        Ok(out)
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<ModelArtifact> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::NotAModel);
    }
    let mut r = Reader {
        buf: &bytes[MAGIC.len()..],
    };
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let dims = ModelDims {
        word_emb: r.len()?,
        char_emb: r.len()?,
        char_hidden: r.len()?,
        word_hidden: r.len()?,
        labels: r.len()?,
    };
    dims.validate().map_err(|e| Error::CorruptModel(e.to_string()))?;
    let flag_byte = r.take(1)?[0];
    if flag_byte > 3 {
        return Err(Error::CorruptModel("unknown flag bits".into()));
    }
    let flags = ModelFlags {
        use_char_embedding: flag_byte & 1 != 0,
        use_crf: flag_byte & 2 != 0,
    };
    let fingerprint: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
    let n_words = r.len()?;
    let words = (0..n_words).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
    let n_chars = r.len()?;
    let chars = (0..n_chars)
        .map(|_| {
            let s = r.string()?;
            let mut it = s.chars();
            match (it.next(), it.next()) {
                (Some(c), None) => Ok(c),
                _ => Err(Error::CorruptModel("char entry is not one character".into())),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let vocab = Arc::new(Vocab::from_id_lists(words, chars)?);
    let mask = if flags.use_crf {
        let start = r.flag_array::<NUM_LABELS>()?;
        let flat = r.flag_array::<{ NUM_LABELS * NUM_LABELS }>()?;
        let end = r.flag_array::<NUM_LABELS>()?;
        let mut trans = [[false; NUM_LABELS]; NUM_LABELS];
        for (i, row) in trans.iter_mut().enumerate() {
            row.copy_from_slice(&flat[i * NUM_LABELS..(i + 1) * NUM_LABELS]);
        }
        Some(TransitionMask { start, trans, end })
    } else {
        None
    };

    let mut params = init_params(&dims, flags, vocab, None, 0)?.zeros_like();
    if let (Some(t), Some(m)) = (params.crf.as_mut(), mask) {
        t.mask = m;
    }
    let n_blocks = r.len()?;
    let mut blocks = params.blocks_mut();
    if n_blocks != blocks.len() {
        return Err(Error::CorruptModel(format!(
            "expected {} tensors, found {n_blocks}",
            blocks.len()
        )));
    }
    for (name, dst) in blocks.iter_mut() {
        let found = r.string()?;
        if found != *name {
            return Err(Error::CorruptModel(format!("expected tensor {name}, found {found}")));
        }
        let n = r.u64()? as usize;
        if n != dst.len() {
            return Err(Error::CorruptModel(format!(
                "tensor {name} has {n} values, expected {}",
                dst.len()
            )));
        }
        for v in dst.iter_mut() {
            *v = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        }
    }
    drop(blocks);
    if !r.buf.is_empty() {
        return Err(Error::CorruptModel("trailing bytes".into()));
    }
    Ok(ModelArtifact { params, fingerprint })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelArtifact> {
    decode_model(&std::fs::read(path)?)
}
