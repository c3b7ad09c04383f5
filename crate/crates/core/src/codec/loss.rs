//! Training losses of the reference codec.

use super::matrix::Matrix;
use super::params::KnowledgeBase;
use super::vocab::Sentence;
use super::CodecError;
use crate::scalar::Scalar;

/// Probabilities are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]` before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Form of the reconstruction cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CrossEntropyMode {
    /// `-sum_l sum_v [q log p + (1 - q) log(1 - p)]` with one-hot `q`.
    #[default]
    BinaryPerVocab,
    /// `-sum_l log p(w_l)`.
    Categorical,
}

fn clamp<T: Scalar>(p: T) -> T {
    let lo = T::of(PROB_FLOOR);
    p.max(lo).min(T::one() - lo)
}

fn check_shape<T: Scalar>(original: &Sentence, probs: &Matrix<T>) -> Result<(), CodecError> {
    if probs.rows() != original.len() {
        return Err(CodecError::ShapeMismatch {
            expected: original.len(),
            actual: probs.rows(),
        });
    }
    if let Some(&id) = original
        .ids()
        .iter()
        .find(|&&id| id as usize >= probs.cols())
    {
        return Err(CodecError::UnknownToken {
            id,
            vocab: probs.cols(),
        });
    }
    Ok(())
}

/// Reconstruction cross-entropy summed over positions (and vocabulary in binary mode).
pub fn ce_loss<T: Scalar>(
    original: &Sentence,
    probs: &Matrix<T>,
    mode: CrossEntropyMode,
) -> Result<T, CodecError> {
    check_shape(original, probs)?;
    let mut total = T::zero();
    for (l, &target) in original.ids().iter().enumerate() {
        let row = probs.row(l);
        match mode {
            CrossEntropyMode::BinaryPerVocab => {
                for (v, &p) in row.iter().enumerate() {
                    let p = clamp(p);
                    total -= if v == target as usize {
                        p.ln()
                    } else {
                        (T::one() - p).ln()
                    };
                }
            }
            CrossEntropyMode::Categorical => total -= clamp(row[target as usize]).ln(),
        }
    }
    Ok(total)
}

/// `||f - f_hat||_2` over the whole block (Frobenius norm, not squared).
pub fn mse_loss<T: Scalar>(f: &Matrix<T>, f_hat: &Matrix<T>) -> Result<T, CodecError> {
    if f.shape() != f_hat.shape() {
        return Err(CodecError::ShapeMismatch {
            expected: f.rows(),
            actual: f_hat.rows(),
        });
    }
    Ok(f.as_slice()
        .iter()
        .zip(f_hat.as_slice())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<T>()
        .sqrt())
}

/// Frobenius norm of the Gram matrix `kb^T kb`.
pub fn kb_regularizer<T: Scalar>(kb: &KnowledgeBase<T>) -> T {
    kb.vectors().t_matmul(kb.vectors()).frobenius_norm()
}

/// Cross-entropy plus the knowledge-base Gram regularizer.
pub fn kb_loss<T: Scalar>(
    original: &Sentence,
    probs: &Matrix<T>,
    kb: &KnowledgeBase<T>,
    mode: CrossEntropyMode,
) -> Result<T, CodecError> {
    Ok(ce_loss(original, probs, mode)? + kb_regularizer(kb))
}

/// The three loss components and their sum.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown<T> {
    pub ce: T,
    pub mse: T,
    pub kb: T,
}

impl<T: Scalar> LossBreakdown<T> {
    pub fn total(&self) -> T {
        self.ce + self.mse + self.kb
    }
}

/// `L_CE + L_MSE + L_kb` for one transmission.
#[allow(clippy::too_many_arguments)]
pub fn total_loss<T: Scalar>(
    original: &Sentence,
    probs: &Matrix<T>,
    f: &Matrix<T>,
    f_hat: &Matrix<T>,
    kb: &KnowledgeBase<T>,
    mode: CrossEntropyMode,
) -> Result<LossBreakdown<T>, CodecError> {
    Ok(LossBreakdown {
        ce: ce_loss(original, probs, mode)?,
        mse: mse_loss(f, f_hat)?,
        kb: kb_loss(original, probs, kb, mode)?,
    })
}
