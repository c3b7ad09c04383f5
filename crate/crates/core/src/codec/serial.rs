//! Flat binary encodings of codec parameters and knowledge bases.
//!
//! Model blob: `b"SKB1"`, then `V, Q, P, d` as little-endian `u32`, then every
//! tensor row-major as little-endian `f64` in the order
//! `E, W_s, b_s, W_ce, W_cd, b_cd, W_o, kb`.
//!
//! Knowledge blob: `b"SKK1"`, then `P, Q` as little-endian `u32`, then the
//! knowledge rows as little-endian `f64`.

use super::matrix::Matrix;
use super::params::{CodecDims, CodecParams, KnowledgeBase};
use super::CodecError;
use crate::scalar::Scalar;

pub const MODEL_MAGIC: [u8; 4] = *b"SKB1";
pub const KNOWLEDGE_MAGIC: [u8; 4] = *b"SKK1";

const MODEL_HEADER: usize = 4 + 4 * 4;
const KNOWLEDGE_HEADER: usize = 4 + 2 * 4;

/// Exact byte length of a model blob with these dimensions.
pub fn model_blob_len(dims: &CodecDims) -> usize {
    MODEL_HEADER + 8 * dims.parameter_count()
}

/// Exact byte length of a knowledge blob with `P` rows of width `Q`.
pub fn knowledge_blob_len(kb_size: usize, width: usize) -> usize {
    KNOWLEDGE_HEADER + 8 * kb_size * width
}

fn put_matrix<T: Scalar>(out: &mut Vec<u8>, m: &Matrix<T>) {
    for v in m.as_slice() {
        out.extend_from_slice(&v.as_f64().to_le_bytes());
    }
}

pub fn encode_model<T: Scalar>(params: &CodecParams<T>) -> Vec<u8> {
    let dims = params.dims();
    let mut out = Vec::with_capacity(model_blob_len(&dims));
    out.extend_from_slice(&MODEL_MAGIC);
    for n in [dims.vocab, dims.width, dims.kb_size, dims.channel_width] {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for t in params.tensors() {
        put_matrix(&mut out, t);
    }
    out
}

pub fn encode_knowledge<T: Scalar>(kb: &KnowledgeBase<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(knowledge_blob_len(kb.len(), kb.width()));
    out.extend_from_slice(&KNOWLEDGE_MAGIC);
    out.extend_from_slice(&(kb.len() as u32).to_le_bytes());
    out.extend_from_slice(&(kb.width() as u32).to_le_bytes());
    put_matrix(&mut out, kb.vectors());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let end = self
            .pos
            .checked_add(n)
            .ok_or(CodecError::Malformed("length overflow"))?;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or(CodecError::Malformed("truncated blob"))?;
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<usize, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn matrix<T: Scalar>(&mut self, rows: usize, cols: usize) -> Result<Matrix<T>, CodecError> {
        let n = rows
            .checked_mul(cols)
            .ok_or(CodecError::Malformed("shape overflow"))?;
        let raw = self.take(
            n.checked_mul(8)
                .ok_or(CodecError::Malformed("shape overflow"))?,
        )?;
        let data = raw
            .chunks_exact(8)
            .map(|c| {
                let v = f64::from_le_bytes(c.try_into().unwrap());
                if v.is_finite() {
                    Ok(T::of(v))
                } else {
                    Err(CodecError::NonFinite)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Matrix::from_vec(rows, cols, data))
    }

    fn finish(&self) -> Result<(), CodecError> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(CodecError::Malformed("trailing bytes"))
        }
    }
}

pub fn decode_model<T: Scalar>(bytes: &[u8]) -> Result<CodecParams<T>, CodecError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MODEL_MAGIC {
        return Err(CodecError::Malformed("bad model magic"));
    }
    let dims = CodecDims {
        vocab: r.u32()?,
        width: r.u32()?,
        kb_size: r.u32()?,
        channel_width: r.u32()?,
    };
    dims.validate()?;
    if bytes.len() != model_blob_len(&dims) {
        return Err(CodecError::Malformed(
            "model blob length does not match header",
        ));
    }
    let mut params = CodecParams::zeros(dims);
    for t in params.tensors_mut() {
        let (rows, cols) = t.shape();
        *t = r.matrix(rows, cols)?;
    }
    r.finish()?;
    Ok(params)
}

pub fn decode_knowledge<T: Scalar>(bytes: &[u8]) -> Result<KnowledgeBase<T>, CodecError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != KNOWLEDGE_MAGIC {
        return Err(CodecError::Malformed("bad knowledge magic"));
    }
    let rows = r.u32()?;
    let cols = r.u32()?;
    if bytes.len() != knowledge_blob_len(rows, cols) {
        return Err(CodecError::Malformed(
            "knowledge blob length does not match header",
        ));
    }
    let vectors = r.matrix(rows, cols)?;
    r.finish()?;
    KnowledgeBase::new(vectors)
}

/// A parsed blob of either kind.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Blob {
    Model(CodecParams<f64>),
    Knowledge(KnowledgeBase<f64>),
}

impl Blob {
    pub fn parse(bytes: &[u8]) -> Result<Self, CodecError> {
        match bytes.get(..4) {
            Some(m) if m == MODEL_MAGIC => decode_model(bytes).map(Blob::Model),
            Some(m) if m == KNOWLEDGE_MAGIC => decode_knowledge(bytes).map(Blob::Knowledge),
            _ => Err(CodecError::Malformed("unknown blob magic")),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        match self {
            Blob::Model(p) => encode_model(p),
            Blob::Knowledge(kb) => encode_knowledge(kb),
        }
    }

    /// Flattened scalars in serialization order.
    pub fn values(&self) -> Vec<f64> {
        match self {
            Blob::Model(p) => p
                .tensors()
                .iter()
                .flat_map(|t| t.as_slice().iter().copied())
                .collect(),
            Blob::Knowledge(kb) => kb.vectors().as_slice().to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const DIMS: CodecDims = CodecDims {
        vocab: 8,
        width: 4,
        kb_size: 2,
        channel_width: 4,
    };

    #[test]
    fn model_layout() {
        let p = CodecParams::<f64>::random(DIMS, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let bytes = encode_model(&p);
        assert_eq!(&bytes[..4], b"SKB1");
        assert_eq!(&bytes[4..8], &8u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &4u32.to_le_bytes());
        assert_eq!(bytes.len(), model_blob_len(&DIMS));
        let first = f64::from_le_bytes(bytes[20..28].try_into().unwrap());
        assert_eq!(first, p.embedding[(0, 0)]);
        let last = f64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
        assert_eq!(last, p.knowledge.vectors()[(1, 3)]);
        assert_eq!(decode_model::<f64>(&bytes).unwrap(), p);
    }

    #[test]
    fn knowledge_layout() {
        let p = CodecParams::<f64>::random(DIMS, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let bytes = encode_knowledge(&p.knowledge);
        assert_eq!(bytes.len(), knowledge_blob_len(2, 4));
        assert_eq!(
            Blob::parse(&bytes).unwrap(),
            Blob::Knowledge(p.knowledge.clone())
        );
    }

    #[test]
    fn malformed_blobs_are_rejected() {
        let p = CodecParams::<f64>::random(DIMS, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let bytes = encode_model(&p);
        assert!(decode_model::<f64>(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_model::<f64>(&extra).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(Blob::parse(&magic).is_err());
        let mut nan = bytes;
        nan[20..28].copy_from_slice(&f64::NAN.to_le_bytes());
        assert_eq!(decode_model::<f64>(&nan), Err(CodecError::NonFinite));
    }

    #[test]
    fn default_shapes_make_knowledge_blobs_small() {
        let dims = CodecDims {
            vocab: 200,
            width: 128,
            kb_size: 8,
            channel_width: 16,
        };
        let ratio = knowledge_blob_len(8, 128) as f64 / model_blob_len(&dims) as f64;
        assert!(ratio < 0.1, "{ratio}");
    }
}
