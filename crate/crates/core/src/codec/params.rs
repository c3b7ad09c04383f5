use rand::Rng;

use super::matrix::Matrix;
use super::CodecError;
use crate::scalar::Scalar;

/// Shape of a reference codec: vocabulary `V`, feature width `Q`,
/// knowledge-base size `P` and channel width `d` (even).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodecDims {
    pub vocab: usize,
    pub width: usize,
    pub kb_size: usize,
    pub channel_width: usize,
}

impl CodecDims {
    pub fn validate(&self) -> Result<(), CodecError> {
        if self.vocab == 0 || self.width == 0 || self.channel_width == 0 {
            return Err(CodecError::InvalidDims("all dimensions must be positive"));
        }
        if !self.channel_width.is_multiple_of(2) {
            return Err(CodecError::InvalidDims("channel width must be even"));
        }
        if self.kb_size < 2 {
            return Err(CodecError::InvalidDims(
                "knowledge base needs at least two vectors",
            ));
        }
        Ok(())
    }

    /// Number of scalars in a full parameter set.
    pub fn parameter_count(&self) -> usize {
        let (v, q, p, d) = (self.vocab, self.width, self.kb_size, self.channel_width);
        v * q + q * q + q + q * d + d * q + q + q * v + p * q
    }
}

/// Ordered list of `P` knowledge vectors of width `Q`, most important first.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase<T> {
    vectors: Matrix<T>,
}

impl<T: Scalar> KnowledgeBase<T> {
    pub fn new(vectors: Matrix<T>) -> Result<Self, CodecError> {
        if !vectors.is_finite() {
            return Err(CodecError::NonFinite);
        }
        Ok(Self { vectors })
    }

    pub fn vectors(&self) -> &Matrix<T> {
        &self.vectors
    }

    pub fn vectors_mut(&mut self) -> &mut Matrix<T> {
        &mut self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.rows() == 0
    }

    pub fn width(&self) -> usize {
        self.vectors.cols()
    }

    /// Mean of the knowledge rows, length `Q`.
    pub fn mean_row(&self) -> Vec<T> {
        let n = T::of(self.len() as f64);
        self.vectors
            .column_sums()
            .into_iter()
            .map(|s| s / n)
            .collect()
    }
}

/// Parameter groups that staged training freezes and unfreezes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamGroup {
    /// Embedding, encoder weight and bias, output projection.
    Semantic,
    /// Channel encoder and decoder (with bias).
    Channel,
    Knowledge,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 3] = [
        ParamGroup::Semantic,
        ParamGroup::Channel,
        ParamGroup::Knowledge,
    ];
}

/// Every trainable tensor of the reference codec.
#[derive(Debug, Clone, PartialEq)]
pub struct CodecParams<T> {
    /// `V x Q` token embedding.
    pub embedding: Matrix<T>,
    /// `Q x Q` semantic encoder weight.
    pub encoder_weight: Matrix<T>,
    /// `1 x Q` semantic encoder bias.
    pub encoder_bias: Matrix<T>,
    /// `Q x d` channel encoder.
    pub channel_encoder: Matrix<T>,
    /// `d x Q` channel decoder.
    pub channel_decoder: Matrix<T>,
    /// `1 x Q` channel decoder bias.
    pub channel_decoder_bias: Matrix<T>,
    /// `Q x V` output projection.
    pub output: Matrix<T>,
    pub knowledge: KnowledgeBase<T>,
}

/// Serialization and averaging order of the tensors.
pub const TENSOR_ORDER: [(&str, ParamGroup); 8] = [
    ("embedding", ParamGroup::Semantic),
    ("encoder_weight", ParamGroup::Semantic),
    ("encoder_bias", ParamGroup::Semantic),
    ("channel_encoder", ParamGroup::Channel),
    ("channel_decoder", ParamGroup::Channel),
    ("channel_decoder_bias", ParamGroup::Channel),
    ("output", ParamGroup::Semantic),
    ("knowledge", ParamGroup::Knowledge),
];

impl<T: Scalar> CodecParams<T> {
    pub fn zeros(dims: CodecDims) -> Self {
        let CodecDims {
            vocab: v,
            width: q,
            kb_size: p,
            channel_width: d,
        } = dims;
        Self {
            embedding: Matrix::zeros(v, q),
            encoder_weight: Matrix::zeros(q, q),
            encoder_bias: Matrix::zeros(1, q),
            channel_encoder: Matrix::zeros(q, d),
            channel_decoder: Matrix::zeros(d, q),
            channel_decoder_bias: Matrix::zeros(1, q),
            output: Matrix::zeros(q, v),
            knowledge: KnowledgeBase {
                vectors: Matrix::zeros(p, q),
            },
        }
    }

    /// Uniform fan-in scaled initialization; biases start at zero.
    pub fn random<R: Rng + ?Sized>(dims: CodecDims, rng: &mut R) -> Result<Self, CodecError> {
        dims.validate()?;
        let CodecDims {
            vocab: v,
            width: q,
            kb_size: p,
            channel_width: d,
        } = dims;
        let fan = |n: usize| (3.0 / n as f64).sqrt();
        Ok(Self {
            embedding: Matrix::random_uniform(v, q, 1.0, rng),
            encoder_weight: Matrix::random_uniform(q, q, fan(q), rng),
            encoder_bias: Matrix::zeros(1, q),
            channel_encoder: Matrix::random_uniform(q, d, fan(q), rng),
            channel_decoder: Matrix::random_uniform(d, q, fan(d), rng),
            channel_decoder_bias: Matrix::zeros(1, q),
            output: Matrix::random_uniform(q, v, fan(q), rng),
            knowledge: KnowledgeBase {
                vectors: Matrix::random_uniform(p, q, 0.5, rng),
            },
        })
    }

    pub fn dims(&self) -> CodecDims {
        CodecDims {
            vocab: self.embedding.rows(),
            width: self.embedding.cols(),
            kb_size: self.knowledge.len(),
            channel_width: self.channel_encoder.cols(),
        }
    }

    /// Checks the internal shape consistency and finiteness.
    pub fn validate(&self) -> Result<(), CodecError> {
        let dims = self.dims();
        dims.validate()?;
        let expected = Self::zeros(dims);
        for (a, b) in self.tensors().iter().zip(expected.tensors().iter()) {
            if a.shape() != b.shape() {
                return Err(CodecError::InvalidDims("tensor shapes are inconsistent"));
            }
            if !a.is_finite() {
                return Err(CodecError::NonFinite);
            }
        }
        Ok(())
    }

    pub fn tensors(&self) -> [&Matrix<T>; 8] {
        [
            &self.embedding,
            &self.encoder_weight,
            &self.encoder_bias,
            &self.channel_encoder,
            &self.channel_decoder,
            &self.channel_decoder_bias,
            &self.output,
            &self.knowledge.vectors,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Matrix<T>; 8] {
        [
            &mut self.embedding,
            &mut self.encoder_weight,
            &mut self.encoder_bias,
            &mut self.channel_encoder,
            &mut self.channel_decoder,
            &mut self.channel_decoder_bias,
            &mut self.output,
            &mut self.knowledge.vectors,
        ]
    }

    /// `self += alpha * other`, restricted to the given groups.
    pub fn axpy_groups(&mut self, alpha: T, other: &Self, groups: &[ParamGroup]) {
        for ((dst, src), (_, group)) in self
            .tensors_mut()
            .into_iter()
            .zip(other.tensors())
            .zip(TENSOR_ORDER)
        {
            if groups.contains(&group) {
                dst.axpy(alpha, src);
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    pub fn convert<U: Scalar>(&self) -> CodecParams<U> {
        let conv = |m: &Matrix<T>| {
            Matrix::from_vec(
                m.rows(),
                m.cols(),
                m.as_slice().iter().map(|v| U::of(v.as_f64())).collect(),
            )
        };
        CodecParams {
            embedding: conv(&self.embedding),
            encoder_weight: conv(&self.encoder_weight),
            encoder_bias: conv(&self.encoder_bias),
            channel_encoder: conv(&self.channel_encoder),
            channel_decoder: conv(&self.channel_decoder),
            channel_decoder_bias: conv(&self.channel_decoder_bias),
            output: conv(&self.output),
            knowledge: KnowledgeBase {
                vectors: conv(&self.knowledge.vectors),
            },
        }
    }
}
