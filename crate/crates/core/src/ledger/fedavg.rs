//! Sample-count weighted parameter averaging.

use thiserror::Error;

use crate::codec::{Blob, CodecParams, KnowledgeBase, Matrix};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FedAvgError {
    #[error("no models to average")]
    EmptyInput,
    #[error("model {index} does not match the shape of model 0")]
    ShapeMismatch { index: usize },
    #[error("{models} models but {weights} weights")]
    WeightCount { models: usize, weights: usize },
    #[error("weight {index} is not finite and positive")]
    InvalidWeight { index: usize },
}

fn check_weights<T: Scalar>(models: usize, weights: &[T]) -> Result<T, FedAvgError> {
    if models == 0 {
        return Err(FedAvgError::EmptyInput);
    }
    if weights.len() != models {
        return Err(FedAvgError::WeightCount {
            models,
            weights: weights.len(),
        });
    }
    if let Some(index) = weights
        .iter()
        .position(|w| !(w.is_finite() && *w > T::zero()))
    {
        return Err(FedAvgError::InvalidWeight { index });
    }
    Ok(weights.iter().copied().sum())
}

fn average_matrices<T: Scalar>(mats: &[&Matrix<T>], weights: &[T], total: T) -> Matrix<T> {
    let mut out = Matrix::zeros(mats[0].rows(), mats[0].cols());
    for (m, &w) in mats.iter().zip(weights) {
        out.axpy(w / total, m);
    }
    out
}

/// `sum_i (n_i / sum n) * theta_i` over every tensor, knowledge base included.
pub fn fedavg<T: Scalar>(
    models: &[CodecParams<T>],
    weights: &[T],
) -> Result<CodecParams<T>, FedAvgError> {
    let total = check_weights(models.len(), weights)?;
    if let Some(index) = models.iter().position(|m| m.dims() != models[0].dims()) {
        return Err(FedAvgError::ShapeMismatch { index });
    }
    let mut out = CodecParams::zeros(models[0].dims());
    for (m, &w) in models.iter().zip(weights) {
        out.axpy_groups(w / total, m, &crate::codec::ParamGroup::ALL);
    }
    Ok(out)
}

pub fn fedavg_knowledge<T: Scalar>(
    kbs: &[KnowledgeBase<T>],
    weights: &[T],
) -> Result<KnowledgeBase<T>, FedAvgError> {
    let total = check_weights(kbs.len(), weights)?;
    if let Some(index) = kbs
        .iter()
        .position(|k| k.vectors().shape() != kbs[0].vectors().shape())
    {
        return Err(FedAvgError::ShapeMismatch { index });
    }
    let mats: Vec<&Matrix<T>> = kbs.iter().map(|k| k.vectors()).collect();
    Ok(KnowledgeBase::new(average_matrices(&mats, weights, total))
        .expect("convex combination of finite values"))
}

/// Averages parsed blobs; all must be of one kind and shape.
pub fn fedavg_blobs(blobs: &[Blob], weights: &[f64]) -> Result<Blob, FedAvgError> {
    check_weights(blobs.len(), weights)?;
    match &blobs[0] {
        Blob::Model(_) => {
            let models = blobs
                .iter()
                .enumerate()
                .map(|(index, b)| match b {
                    Blob::Model(p) => Ok(p.clone()),
                    Blob::Knowledge(_) => Err(FedAvgError::ShapeMismatch { index }),
                })
                .collect::<Result<Vec<_>, _>>()?;
            fedavg(&models, weights).map(Blob::Model)
        }
        Blob::Knowledge(_) => {
            let kbs = blobs
                .iter()
                .enumerate()
                .map(|(index, b)| match b {
                    Blob::Knowledge(k) => Ok(k.clone()),
                    Blob::Model(_) => Err(FedAvgError::ShapeMismatch { index }),
                })
                .collect::<Result<Vec<_>, _>>()?;
            fedavg_knowledge(&kbs, weights).map(Blob::Knowledge)
        }
    }
}
