//! Forward operations of the reference codec:
//! embed -> semantic encode (with knowledge prefix) -> channel encode ->
//! channel -> channel decode -> semantic decode.

use super::matrix::Matrix;
use super::params::{CodecParams, KnowledgeBase};
use super::vocab::Sentence;
use super::CodecError;
use crate::scalar::Scalar;
use crate::signal::{power_normalize, ComplexSignal};

/// Smallest knowledge prefix the encoder accepts.
pub const MIN_KB_PREFIX: usize = 2;

/// Looks up one embedding row per token: `L x Q`.
pub fn embed<T: Scalar>(
    sentence: &Sentence,
    params: &CodecParams<T>,
) -> Result<Matrix<T>, CodecError> {
    let vocab = params.embedding.rows();
    let width = params.embedding.cols();
    let mut out = Matrix::zeros(sentence.len(), width);
    for (l, &id) in sentence.ids().iter().enumerate() {
        if id as usize >= vocab {
            return Err(CodecError::UnknownToken { id, vocab });
        }
        out.row_mut(l)
            .copy_from_slice(params.embedding.row(id as usize));
    }
    Ok(out)
}

/// `tanh([embedded; kb_prefix] * W_s + b_s)`, one output row per input row.
pub fn semantic_encode<T: Scalar>(
    embedded: &Matrix<T>,
    kb_prefix: &KnowledgeBase<T>,
    params: &CodecParams<T>,
) -> Result<Matrix<T>, CodecError> {
    if kb_prefix.len() < MIN_KB_PREFIX {
        return Err(CodecError::PrefixTooSmall(kb_prefix.len()));
    }
    let z = embedded.vstack(kb_prefix.vectors());
    let mut pre = z.matmul(&params.encoder_weight);
    pre.add_row_vector(params.encoder_bias.as_slice());
    Ok(pre.map(|v| v.tanh()))
}

/// Rowwise channel encoder before normalization: `rows x d`.
pub(crate) fn channel_project<T: Scalar>(
    features: &Matrix<T>,
    params: &CodecParams<T>,
) -> Matrix<T> {
    features.matmul(&params.channel_encoder)
}

/// Projects features to `d` reals per row, pairs consecutive reals (row-major)
/// into complex symbols and normalizes to unit power: `K = rows * d / 2`.
pub fn channel_encode<T: Scalar>(
    features: &Matrix<T>,
    params: &CodecParams<T>,
) -> Result<ComplexSignal<T>, CodecError> {
    let projected = channel_project(features, params);
    let raw = ComplexSignal::from_interleaved(projected.as_slice())?;
    Ok(power_normalize(&raw)?)
}

/// Rowwise channel decoder on an interleaved real view of `rows * d` values.
pub(crate) fn channel_decode_reals<T: Scalar>(
    reals: &[T],
    rows: usize,
    params: &CodecParams<T>,
) -> Result<Matrix<T>, CodecError> {
    let d = params.channel_decoder.rows();
    if reals.len() != rows * d {
        return Err(CodecError::ShapeMismatch {
            expected: rows * d / 2,
            actual: reals.len() / 2,
        });
    }
    let received = Matrix::from_vec(rows, d, reals.to_vec());
    let mut out = received.matmul(&params.channel_decoder);
    out.add_row_vector(params.channel_decoder_bias.as_slice());
    Ok(out)
}

/// Inverse of [`channel_encode`]'s layout followed by `W_cd` and bias: `rows x Q`.
pub fn channel_decode<T: Scalar>(
    received: &ComplexSignal<T>,
    rows: usize,
    params: &CodecParams<T>,
) -> Result<Matrix<T>, CodecError> {
    channel_decode_reals(&received.to_interleaved(), rows, params)
}

/// Per-position token distributions and the argmax sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded<T> {
    pub probabilities: Matrix<T>,
    pub sentence: Sentence,
}

pub(crate) fn softmax_rows<T: Scalar>(logits: &Matrix<T>) -> Matrix<T> {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

pub(crate) fn argmax_rows<T: Scalar>(probs: &Matrix<T>) -> Vec<u32> {
    (0..probs.rows())
        .map(|r| {
            let mut best = 0;
            for (k, &p) in probs.row(r).iter().enumerate() {
                if p > probs.row(r)[best] {
                    best = k;
                }
            }
            best as u32
        })
        .collect()
}

/// Token logits for the first `token_count` rows: `(f_hat_l + mean(kb)) * W_o`.
pub(crate) fn decoder_inputs<T: Scalar>(
    features_hat: &Matrix<T>,
    token_count: usize,
    kb_prefix: &KnowledgeBase<T>,
) -> Matrix<T> {
    let mean = kb_prefix.mean_row();
    let mut u = features_hat.head_rows(token_count);
    u.add_row_vector(&mean);
    u
}

/// Reconstructs the sentence from the first `token_count` recovered feature rows.
pub fn semantic_decode<T: Scalar>(
    features_hat: &Matrix<T>,
    token_count: usize,
    kb_prefix: &KnowledgeBase<T>,
    params: &CodecParams<T>,
) -> Result<Decoded<T>, CodecError> {
    if kb_prefix.is_empty() {
        return Err(CodecError::EmptyKnowledgeBase);
    }
    if token_count == 0 || features_hat.rows() < token_count {
        return Err(CodecError::ShapeMismatch {
            expected: token_count,
            actual: features_hat.rows(),
        });
    }
    let u = decoder_inputs(features_hat, token_count, kb_prefix);
    let probabilities = softmax_rows(&u.matmul(&params.output));
    let sentence = Sentence::new(argmax_rows(&probabilities))?;
    Ok(Decoded {
        probabilities,
        sentence,
    })
}

/// The first `i` knowledge vectors, `2 <= i <= P`.
pub fn prune_kb<T: Scalar>(
    kb: &KnowledgeBase<T>,
    i: usize,
) -> Result<KnowledgeBase<T>, CodecError> {
    if i < MIN_KB_PREFIX || i > kb.len() {
        return Err(CodecError::OutOfRange {
            value: i,
            min: MIN_KB_PREFIX,
            max: kb.len(),
        });
    }
    KnowledgeBase::new(kb.vectors().head_rows(i))
}

/// The first `j` feature rows, `0 <= j <= rows`.
pub fn prune_features<T: Scalar>(features: &Matrix<T>, j: usize) -> Result<Matrix<T>, CodecError> {
    if j > features.rows() {
        return Err(CodecError::OutOfRange {
            value: j,
            min: 0,
            max: features.rows(),
        });
    }
    Ok(features.head_rows(j))
}

/// Transmitter-side result for one sentence at prefix sizes `(i, j)`.
#[derive(Debug, Clone)]
pub struct Encoded<T> {
    /// Full semantic feature block, `(L + i) x Q`.
    pub features: Matrix<T>,
    pub kb_prefix: KnowledgeBase<T>,
    pub token_count: usize,
    /// Number of feature rows actually sent.
    pub sent_rows: usize,
    /// Normalized channel symbols for the sent rows; `None` when `j = 0`.
    pub signal: Option<ComplexSignal<T>>,
}

/// Runs the transmitter for one sentence.
pub fn encode_sentence<T: Scalar>(
    sentence: &Sentence,
    params: &CodecParams<T>,
    kb_prefix_size: usize,
    feature_prefix_size: usize,
) -> Result<Encoded<T>, CodecError> {
    let kb_prefix = prune_kb(&params.knowledge, kb_prefix_size)?;
    let features = semantic_encode(&embed(sentence, params)?, &kb_prefix, params)?;
    let sent = prune_features(&features, feature_prefix_size)?;
    let signal = if sent.rows() == 0 {
        None
    } else {
        Some(channel_encode(&sent, params)?)
    };
    Ok(Encoded {
        features,
        kb_prefix,
        token_count: sentence.len(),
        sent_rows: feature_prefix_size,
        signal,
    })
}

/// Receiver side: decodes the `sent_rows` received rows (already equalized) and
/// fills every missing row with the decoder's response to silence (its bias).
pub fn decode_received<T: Scalar>(
    received: Option<&ComplexSignal<T>>,
    sent_rows: usize,
    token_count: usize,
    kb_prefix: &KnowledgeBase<T>,
    params: &CodecParams<T>,
) -> Result<(Matrix<T>, Decoded<T>), CodecError> {
    let total_rows = token_count + kb_prefix.len();
    let reals = match received {
        Some(signal) => signal.to_interleaved(),
        None => Vec::new(),
    };
    let decoded = channel_decode_reals(&reals, sent_rows, params)?;
    let mut full = Matrix::zeros(total_rows.max(sent_rows), params.channel_decoder.cols());
    for r in 0..full.rows() {
        if r < sent_rows {
            full.row_mut(r).copy_from_slice(decoded.row(r));
        } else {
            full.row_mut(r)
                .copy_from_slice(params.channel_decoder_bias.as_slice());
        }
    }
    let out = semantic_decode(&full, token_count, kb_prefix, params)?;
    Ok((decoded, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::params::CodecDims;
    use crate::codec::vocab::Vocabulary;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const DIMS: CodecDims = CodecDims {
        vocab: 8,
        width: 4,
        kb_size: 3,
        channel_width: 2,
    };

    fn params(seed: u64) -> CodecParams<f64> {
        CodecParams::random(DIMS, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn embed_looks_up_rows() {
        let p = params(1);
        let s = Sentence::new(vec![5]).unwrap();
        assert_eq!(embed(&s, &p).unwrap().row(0), p.embedding.row(5));
        let rep = Sentence::new(vec![4, 4, 6]).unwrap();
        let e = embed(&rep, &p).unwrap();
        assert_eq!(e.row(0), e.row(1));
        assert_eq!(
            embed(&Sentence::new(vec![8]).unwrap(), &p),
            Err(CodecError::UnknownToken { id: 8, vocab: 8 })
        );
    }

    #[test]
    fn embed_shape_over_corpus() {
        let vocab = Vocabulary::toy();
        let dims = CodecDims {
            vocab: vocab.len(),
            ..DIMS
        };
        let p = CodecParams::<f64>::random(dims, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        for s in vocab.toy_sentences() {
            assert_eq!(embed(&s, &p).unwrap().shape(), (s.len(), dims.width));
        }
    }

    #[test]
    fn semantic_encode_examples() {
        let mut p = params(3);
        let s = Sentence::new(vec![4, 5]).unwrap();
        let e = embed(&s, &p).unwrap();
        let full = semantic_encode(&e, &p.knowledge, &p).unwrap();
        assert_eq!(full.shape(), (2 + 3, 4));
        let again = semantic_encode(&e, &p.knowledge, &p).unwrap();
        assert_eq!(full.as_slice(), again.as_slice());

        let one = prune_kb(&p.knowledge, 3).unwrap();
        let tiny = KnowledgeBase::new(one.vectors().head_rows(1)).unwrap();
        assert_eq!(
            semantic_encode(&e, &tiny, &p),
            Err(CodecError::PrefixTooSmall(1))
        );

        p.encoder_weight = Matrix::zeros(4, 4);
        p.encoder_bias = Matrix::zeros(1, 4);
        let zero = semantic_encode(&e, &p.knowledge, &p).unwrap();
        assert!(zero.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn channel_encode_shapes_and_power() {
        let p = params(4);
        let f = Matrix::from_vec(1, 4, vec![0.1, -0.2, 0.3, 0.4]);
        let x = channel_encode(&f, &p).unwrap();
        assert_eq!(x.len(), 1);
        assert!((x.mean_power() - 1.0).abs() < 1e-9);

        let f5 = Matrix::from_fn(5, 4, |r, c| ((r * 4 + c) as f64).sin());
        let x5 = channel_encode(&f5, &p).unwrap();
        assert_eq!(x5.len(), 5 * 2 / 2);
        assert!((x5.mean_power() - 1.0).abs() < 1e-9);

        assert!(matches!(
            channel_encode(&Matrix::zeros(2, 4), &p),
            Err(CodecError::Signal(crate::signal::SignalError::ZeroPower))
        ));
    }

    #[test]
    fn channel_decode_contracts() {
        let p = params(5);
        let zero = ComplexSignal::new(vec![num_complex::Complex::new(0.0, 0.0); 3]).unwrap();
        let out = channel_decode(&zero, 3, &p).unwrap();
        assert_eq!(out.shape(), (3, 4));
        for r in 0..3 {
            assert_eq!(out.row(r), p.channel_decoder_bias.as_slice());
        }
        assert!(matches!(
            channel_decode(&zero, 2, &p),
            Err(CodecError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn semantic_decode_contracts() {
        let mut p = params(6);
        let f = Matrix::from_fn(5, 4, |r, c| (r as f64 - c as f64) * 0.3);
        let out = semantic_decode(&f, 2, &p.knowledge, &p).unwrap();
        for r in 0..2 {
            let total: f64 = out.probabilities.row(r).iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
        p.output = Matrix::zeros(4, 8);
        let uniform = semantic_decode(&f, 2, &p.knowledge, &p).unwrap();
        assert!(uniform
            .probabilities
            .as_slice()
            .iter()
            .all(|&v| (v - 0.125).abs() < 1e-15));

        let empty = KnowledgeBase::new(Matrix::zeros(0, 4)).unwrap();
        assert_eq!(
            semantic_decode(&f, 2, &empty, &p),
            Err(CodecError::EmptyKnowledgeBase)
        );
    }

    #[test]
    fn pruning_examples() {
        let p = params(7);
        assert_eq!(prune_kb(&p.knowledge, 3).unwrap(), p.knowledge);
        assert_eq!(prune_kb(&p.knowledge, 2).unwrap().len(), 2);
        assert!(matches!(
            prune_kb(&p.knowledge, 1),
            Err(CodecError::OutOfRange { .. })
        ));
        assert!(matches!(
            prune_kb(&p.knowledge, 4),
            Err(CodecError::OutOfRange { .. })
        ));
        let nested = prune_kb(&prune_kb(&p.knowledge, 3).unwrap(), 2).unwrap();
        assert_eq!(nested, prune_kb(&p.knowledge, 2).unwrap());

        let f = Matrix::from_fn(4, 4, |r, c| (r + c) as f64);
        assert_eq!(prune_features(&f, 4).unwrap(), f);
        assert_eq!(prune_features(&f, 0).unwrap().shape(), (0, 4));
        assert_eq!(prune_features(&f, 2).unwrap().shape(), (2, 4));
        assert!(prune_features(&f, 5).is_err());
    }

    #[test]
    fn empty_transmission_decodes_from_bias_and_knowledge() {
        let p = params(8);
        let s = Sentence::new(vec![4, 5, 6]).unwrap();
        let enc = encode_sentence(&s, &p, 2, 0).unwrap();
        assert!(enc.signal.is_none());
        let (rows, dec) = decode_received(None, 0, 3, &enc.kb_prefix, &p).unwrap();
        assert_eq!(rows.rows(), 0);
        assert_eq!(dec.sentence.len(), 3);
        // every position sees the same input, so the same distribution
        assert_eq!(dec.probabilities.row(0), dec.probabilities.row(2));
    }
}
