//! Random-prefix forward pass, hand-derived backpropagation and the four
//! training steps (semantic codec, channel codec, knowledge base, whole system).
//!
//! The channel sits between the channel encoder and decoder as
//! `y_hat = (h * x + n) / h = x + n / h` with known `h`; its Jacobian with
//! respect to `x` is the identity and the noise draw is a constant.

use rand::seq::SliceRandom;
use rand::Rng;

use super::bleu::bleu;
use super::loss::{ce_loss, kb_regularizer, mse_loss, CrossEntropyMode, LossBreakdown, PROB_FLOOR};
use super::matrix::Matrix;
use super::params::{CodecParams, ParamGroup};
use super::pipeline::{
    channel_decode_reals, channel_project, decoder_inputs, embed, prune_kb, semantic_decode,
    semantic_encode, Decoded, MIN_KB_PREFIX,
};
use super::vocab::Sentence;
use super::CodecError;
use crate::scalar::Scalar;
use crate::signal::{apply_channel, equalize, ChannelModel, ComplexSignal};

/// Channel used during a forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSpec<T> {
    pub model: ChannelModel<T>,
    pub snr_db: T,
}

impl<T: Scalar> ChannelSpec<T> {
    pub fn noiseless() -> Self {
        Self {
            model: ChannelModel::Awgn,
            snr_db: T::infinity(),
        }
    }

    pub fn awgn(snr_db: T) -> Self {
        Self {
            model: ChannelModel::Awgn,
            snr_db,
        }
    }
}

/// Intermediates of one sentence's pass through the pipeline.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    pub sentence: Sentence,
    /// Knowledge prefix size `i`.
    pub kb_prefix: usize,
    /// Transmitted feature rows `j`.
    pub sent_rows: usize,
    /// Semantic features `f`, `(L + i) x Q`.
    pub features: Matrix<T>,
    /// Recovered features `f_hat_j`, `j x Q`.
    pub recovered: Matrix<T>,
    pub decoded: Decoded<T>,
    // backprop caches
    stacked_input: Matrix<T>,
    projected: Matrix<T>,
    inv_scale: T,
    transmitted: Vec<T>,
    received: Vec<T>,
    decoder_input: Matrix<T>,
}

impl<T: Scalar> ForwardTrace<T> {
    /// `f_j`, the rows that were sent.
    pub fn sent_features(&self) -> Matrix<T> {
        self.features.head_rows(self.sent_rows)
    }

    /// Normalized channel symbols (interleaved reals) of the sent rows.
    pub fn transmitted(&self) -> &[T] {
        &self.transmitted
    }

    /// Equalized received reals of the sent rows.
    pub fn received(&self) -> &[T] {
        &self.received
    }
}

/// Forward pass for one sentence with fixed prefix sizes.
pub fn forward_sentence<T: Scalar, R: Rng + ?Sized>(
    sentence: &Sentence,
    params: &CodecParams<T>,
    kb_prefix: usize,
    sent_rows: usize,
    channel: &ChannelSpec<T>,
    rng: &mut R,
) -> Result<ForwardTrace<T>, CodecError> {
    let kb = prune_kb(&params.knowledge, kb_prefix)?;
    let embedded = embed(sentence, params)?;
    let stacked_input = embedded.vstack(kb.vectors());
    let features = semantic_encode(&embedded, &kb, params)?;
    if sent_rows > features.rows() {
        return Err(CodecError::OutOfRange {
            value: sent_rows,
            min: 0,
            max: features.rows(),
        });
    }
    let sent = features.head_rows(sent_rows);
    let projected = channel_project(&sent, params);

    let (inv_scale, transmitted, received) = if sent_rows == 0 {
        (T::zero(), Vec::new(), Vec::new())
    } else {
        let raw = projected.as_slice();
        let symbols = (raw.len() / 2) as f64;
        let power = raw.iter().map(|&v| v * v).sum::<T>() / T::of(symbols);
        if !(power > T::zero()) {
            return Err(CodecError::Signal(crate::signal::SignalError::ZeroPower));
        }
        let inv_scale = power.sqrt().recip();
        let transmitted: Vec<T> = raw.iter().map(|&v| v * inv_scale).collect();
        let x = ComplexSignal::from_interleaved(&transmitted)?;
        let (y, realization) = apply_channel(&x, &channel.model, channel.snr_db, rng)?;
        let received = equalize(&y, &realization)?.to_interleaved();
        (inv_scale, transmitted, received)
    };

    let recovered = channel_decode_reals(&received, sent_rows, params)?;
    let token_count = sentence.len();
    let mut full = Matrix::zeros(features.rows(), params.channel_decoder.cols());
    for r in 0..full.rows() {
        let src = if r < sent_rows {
            recovered.row(r)
        } else {
            params.channel_decoder_bias.as_slice()
        };
        full.row_mut(r).copy_from_slice(src);
    }
    let decoder_input = decoder_inputs(&full, token_count, &kb);
    let decoded = semantic_decode(&full, token_count, &kb, params)?;
    Ok(ForwardTrace {
        sentence: sentence.clone(),
        kb_prefix,
        sent_rows,
        features,
        recovered,
        decoded,
        stacked_input,
        projected,
        inv_scale,
        transmitted,
        received,
        decoder_input,
    })
}

/// One random-pruning forward pass over a batch.
#[derive(Debug, Clone)]
pub struct ForwardBatch<T> {
    pub kb_prefix: usize,
    pub traces: Vec<ForwardTrace<T>>,
}

/// Draws the knowledge prefix `i` uniformly in `[2, P]` once for the batch, then
/// for each sentence a feature prefix `j` uniformly in `[0, L + i]`, and runs the
/// pipeline. Draw order: `i`, all `j`, then channel draws sentence by sentence.
pub fn forward_random_prune<T: Scalar, R: Rng + ?Sized>(
    batch: &[Sentence],
    params: &CodecParams<T>,
    channel: &ChannelSpec<T>,
    rng: &mut R,
) -> Result<ForwardBatch<T>, CodecError> {
    let p = params.knowledge.len();
    let i = rng.random_range(MIN_KB_PREFIX..=p);
    let js: Vec<usize> = batch
        .iter()
        .map(|s| rng.random_range(0..=s.len() + i))
        .collect();
    forward_pruned(batch, params, i, &js, channel, rng)
}

/// Forward pass over a batch with explicit prefix sizes.
pub fn forward_pruned<T: Scalar, R: Rng + ?Sized>(
    batch: &[Sentence],
    params: &CodecParams<T>,
    kb_prefix: usize,
    sent_rows: &[usize],
    channel: &ChannelSpec<T>,
    rng: &mut R,
) -> Result<ForwardBatch<T>, CodecError> {
    if batch.is_empty() {
        return Err(CodecError::EmptyBatch);
    }
    assert_eq!(
        batch.len(),
        sent_rows.len(),
        "one feature prefix per sentence"
    );
    let traces = batch
        .iter()
        .zip(sent_rows)
        .map(|(s, &j)| forward_sentence(s, params, kb_prefix, j, channel, rng))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ForwardBatch { kb_prefix, traces })
}

/// Which parameter group a training step updates, and against which loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StepKind {
    /// Freeze channel codec and knowledge base; descend on `L_CE`.
    Semantic,
    /// Freeze semantic codec and knowledge base; descend on `L_MSE`.
    Channel,
    /// Freeze both codecs; descend the knowledge base on `L_kb`.
    Knowledge,
    /// Descend every group on `L_CE + L_MSE + L_kb`.
    Whole,
}

impl StepKind {
    pub const ALL: [StepKind; 4] = [
        StepKind::Semantic,
        StepKind::Channel,
        StepKind::Knowledge,
        StepKind::Whole,
    ];

    pub fn trainable(self) -> &'static [ParamGroup] {
        match self {
            StepKind::Semantic => &[ParamGroup::Semantic],
            StepKind::Channel => &[ParamGroup::Channel],
            StepKind::Knowledge => &[ParamGroup::Knowledge],
            StepKind::Whole => &[
                ParamGroup::Semantic,
                ParamGroup::Channel,
                ParamGroup::Knowledge,
            ],
        }
    }
}

/// Options shared by all training steps.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrainOptions {
    pub ce_mode: CrossEntropyMode,
    /// Descend the knowledge base on `L_CE` alone instead of `L_kb`.
    pub kb_step_ce_only: bool,
}

#[derive(Debug, Clone, Copy)]
struct LossWeights<T> {
    ce: T,
    mse: T,
    reg: T,
}

fn loss_weights<T: Scalar>(kind: StepKind, options: &TrainOptions) -> LossWeights<T> {
    let (ce, mse, reg) = match kind {
        StepKind::Semantic => (1.0, 0.0, 0.0),
        StepKind::Channel => (0.0, 1.0, 0.0),
        StepKind::Knowledge if options.kb_step_ce_only => (1.0, 0.0, 0.0),
        StepKind::Knowledge => (1.0, 0.0, 1.0),
        // L_CE + L_MSE + (L_CE + reg)
        StepKind::Whole => (2.0, 1.0, 1.0),
    };
    LossWeights {
        ce: T::of(ce),
        mse: T::of(mse),
        reg: T::of(reg),
    }
}

/// Batch-mean loss components of a forward pass.
pub fn batch_losses<T: Scalar>(
    forward: &ForwardBatch<T>,
    params: &CodecParams<T>,
    mode: CrossEntropyMode,
) -> Result<LossBreakdown<T>, CodecError> {
    let n = T::of(forward.traces.len() as f64);
    let mut ce = T::zero();
    let mut mse = T::zero();
    for t in &forward.traces {
        ce += ce_loss(&t.sentence, &t.decoded.probabilities, mode)?;
        mse += mse_loss(&t.sent_features(), &t.recovered)?;
    }
    let reg = kb_regularizer(&params.knowledge);
    Ok(LossBreakdown {
        ce: ce / n,
        mse: mse / n,
        kb: ce / n + reg,
    })
}

fn objective_from<T: Scalar>(b: &LossBreakdown<T>, w: &LossWeights<T>) -> T {
    // kb = ce + reg, so reg = kb - ce
    w.ce * b.ce + w.mse * b.mse + w.reg * (b.kb - b.ce)
}

/// Gradient of the batch objective of `kind` with respect to every parameter.
fn backward<T: Scalar>(
    forward: &ForwardBatch<T>,
    params: &CodecParams<T>,
    w: &LossWeights<T>,
    mode: CrossEntropyMode,
) -> CodecParams<T> {
    let mut grad = CodecParams::zeros(params.dims());
    let batch = T::of(forward.traces.len() as f64);
    let floor = T::of(PROB_FLOOR);
    let two = T::of(2.0);

    for t in &forward.traces {
        let len = t.sentence.len();
        let i = t.kb_prefix;
        let j = t.sent_rows;
        let probs = &t.decoded.probabilities;
        let vocab = probs.cols();

        // cross-entropy -> logits
        let mut dlogits = Matrix::zeros(len, vocab);
        if w.ce != T::zero() {
            let scale = w.ce / batch;
            for (l, &target) in t.sentence.ids().iter().enumerate() {
                let row = probs.row(l);
                let dp: Vec<T> = row
                    .iter()
                    .enumerate()
                    .map(|(v, &p)| {
                        let clamped = p < floor || p > T::one() - floor;
                        let hit = v == target as usize;
                        match mode {
                            _ if clamped => T::zero(),
                            CrossEntropyMode::BinaryPerVocab if hit => -p.recip(),
                            CrossEntropyMode::BinaryPerVocab => (T::one() - p).recip(),
                            CrossEntropyMode::Categorical if hit => -p.recip(),
                            CrossEntropyMode::Categorical => T::zero(),
                        }
                    })
                    .collect();
                let inner: T = dp.iter().zip(row).map(|(&g, &p)| g * p).sum();
                for (k, out) in dlogits.row_mut(l).iter_mut().enumerate() {
                    *out = scale * row[k] * (dp[k] - inner);
                }
            }
        }

        // output projection and pooled knowledge
        grad.output
            .axpy(T::one(), &t.decoder_input.t_matmul(&dlogits));
        let d_input = dlogits.matmul_t(&params.output);
        let d_mean = d_input.column_sums();
        let inv_i = T::of(i as f64).recip();
        for r in 0..i {
            for (g, &dm) in grad
                .knowledge
                .vectors_mut()
                .row_mut(r)
                .iter_mut()
                .zip(&d_mean)
            {
                *g += dm * inv_i;
            }
        }

        // recovered rows vs. silent rows (decoder bias)
        let width = params.channel_decoder.cols();
        let mut d_recovered = Matrix::zeros(j, width);
        for l in 0..len {
            let src = d_input.row(l);
            if l < j {
                for (g, &v) in d_recovered.row_mut(l).iter_mut().zip(src) {
                    *g += v;
                }
            } else {
                for (g, &v) in grad.channel_decoder_bias.as_mut_slice().iter_mut().zip(src) {
                    *g += v;
                }
            }
        }

        let mut d_sent = Matrix::zeros(j, width);
        if j > 0 && w.mse != T::zero() {
            let sent = t.sent_features();
            let norm = mse_loss(&sent, &t.recovered).unwrap_or_else(|_| T::zero());
            if norm > T::zero() {
                let scale = w.mse / (batch * norm);
                for (k, (&a, &b)) in sent
                    .as_slice()
                    .iter()
                    .zip(t.recovered.as_slice())
                    .enumerate()
                {
                    let g = scale * (a - b);
                    d_sent.as_mut_slice()[k] += g;
                    d_recovered.as_mut_slice()[k] -= g;
                }
            }
        }

        if j > 0 {
            let d = params.channel_decoder.rows();
            let received = Matrix::from_vec(j, d, t.received.clone());
            grad.channel_decoder
                .axpy(T::one(), &received.t_matmul(&d_recovered));
            for (g, v) in grad
                .channel_decoder_bias
                .as_mut_slice()
                .iter_mut()
                .zip(d_recovered.column_sums())
            {
                *g += v;
            }
            // identity through the equalized channel
            let d_tx = d_recovered.matmul_t(&params.channel_decoder);
            let symbols = T::of((j * d / 2) as f64);
            let dot: T = t
                .transmitted
                .iter()
                .zip(d_tx.as_slice())
                .map(|(&x, &g)| x * g)
                .sum();
            let d_proj = Matrix::from_vec(
                j,
                d,
                t.transmitted
                    .iter()
                    .zip(d_tx.as_slice())
                    .map(|(&x, &g)| t.inv_scale * (g - x * dot / symbols))
                    .collect(),
            );
            let sent = t.sent_features();
            grad.channel_encoder.axpy(T::one(), &sent.t_matmul(&d_proj));
            d_sent.axpy(T::one(), &d_proj.matmul_t(&params.channel_encoder));
        }
        debug_assert_eq!(t.projected.rows(), j);

        // tanh encoder
        let rows = t.features.rows();
        let mut d_pre = Matrix::zeros(rows, width);
        for r in 0..j {
            for ((g, &ds), &f) in d_pre
                .row_mut(r)
                .iter_mut()
                .zip(d_sent.row(r))
                .zip(t.features.row(r))
            {
                *g = ds * (T::one() - f * f);
            }
        }
        grad.encoder_weight
            .axpy(T::one(), &t.stacked_input.t_matmul(&d_pre));
        for (g, v) in grad
            .encoder_bias
            .as_mut_slice()
            .iter_mut()
            .zip(d_pre.column_sums())
        {
            *g += v;
        }
        let d_stacked = d_pre.matmul_t(&params.encoder_weight);
        for (l, &id) in t.sentence.ids().iter().enumerate() {
            for (g, &v) in grad
                .embedding
                .row_mut(id as usize)
                .iter_mut()
                .zip(d_stacked.row(l))
            {
                *g += v;
            }
        }
        for r in 0..i {
            for (g, &v) in grad
                .knowledge
                .vectors_mut()
                .row_mut(r)
                .iter_mut()
                .zip(d_stacked.row(len + r))
            {
                *g += v;
            }
        }
    }

    if w.reg != T::zero() {
        let kb = params.knowledge.vectors();
        let gram = kb.t_matmul(kb);
        let norm = gram.frobenius_norm();
        if norm > T::zero() {
            grad.knowledge
                .vectors_mut()
                .axpy(w.reg * two / norm, &kb.matmul(&gram));
        }
    }
    grad
}

/// Objective value of `kind` for one random-pruning pass.
pub fn objective<T: Scalar, R: Rng + ?Sized>(
    kind: StepKind,
    batch: &[Sentence],
    params: &CodecParams<T>,
    channel: &ChannelSpec<T>,
    rng: &mut R,
    options: &TrainOptions,
) -> Result<T, CodecError> {
    let forward = forward_random_prune(batch, params, channel, rng)?;
    let b = batch_losses(&forward, params, options.ce_mode)?;
    Ok(objective_from(&b, &loss_weights(kind, options)))
}

/// Objective value and full gradient (all groups) for one random-pruning pass.
pub fn objective_and_gradient<T: Scalar, R: Rng + ?Sized>(
    kind: StepKind,
    batch: &[Sentence],
    params: &CodecParams<T>,
    channel: &ChannelSpec<T>,
    rng: &mut R,
    options: &TrainOptions,
) -> Result<(T, CodecParams<T>), CodecError> {
    let forward = forward_random_prune(batch, params, channel, rng)?;
    let w = loss_weights(kind, options);
    let b = batch_losses(&forward, params, options.ce_mode)?;
    let value = objective_from(&b, &w);
    if !value.is_finite() {
        return Err(CodecError::NonFiniteLoss);
    }
    Ok((value, backward(&forward, params, &w, options.ce_mode)))
}

/// Outcome of one gradient step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport<T> {
    pub kind: StepKind,
    /// Objective before the update.
    pub loss: T,
    pub breakdown: LossBreakdown<T>,
    pub kb_prefix: usize,
}

/// One plain gradient-descent step that updates only the groups `kind` trains.
pub fn train_step<T: Scalar, R: Rng + ?Sized>(
    kind: StepKind,
    batch: &[Sentence],
    params: &mut CodecParams<T>,
    learning_rate: T,
    channel: &ChannelSpec<T>,
    rng: &mut R,
    options: &TrainOptions,
) -> Result<StepReport<T>, CodecError> {
    if !(learning_rate >= T::zero()) || !learning_rate.is_finite() {
        return Err(CodecError::InvalidLearningRate(learning_rate.as_f64()));
    }
    let forward = forward_random_prune(batch, params, channel, rng)?;
    let w = loss_weights(kind, options);
    let breakdown = batch_losses(&forward, params, options.ce_mode)?;
    let loss = objective_from(&breakdown, &w);
    if !loss.is_finite() {
        return Err(CodecError::NonFiniteLoss);
    }
    let grad = backward(&forward, params, &w, options.ce_mode);
    params.axpy_groups(-learning_rate, &grad, kind.trainable());
    Ok(StepReport {
        kind,
        loss,
        breakdown,
        kb_prefix: forward.kb_prefix,
    })
}

/// Epoch counts per training step kind, run in the order semantic, channel,
/// knowledge, whole.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingSchedule {
    pub semantic_epochs: usize,
    pub channel_epochs: usize,
    pub knowledge_epochs: usize,
    pub whole_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for TrainingSchedule {
    fn default() -> Self {
        Self {
            semantic_epochs: 0,
            channel_epochs: 0,
            knowledge_epochs: 0,
            whole_epochs: 10,
            batch_size: 10,
            learning_rate: 1e-2,
        }
    }
}

impl TrainingSchedule {
    /// Only the knowledge-base step, for lightweight update rounds.
    pub fn knowledge_only(epochs: usize, batch_size: usize, learning_rate: f64) -> Self {
        Self {
            semantic_epochs: 0,
            channel_epochs: 0,
            knowledge_epochs: epochs,
            whole_epochs: 0,
            batch_size,
            learning_rate,
        }
    }
}

/// Runs a schedule over `corpus`, reshuffling mini-batches every epoch.
pub fn train<T: Scalar, R: Rng + ?Sized>(
    params: &mut CodecParams<T>,
    corpus: &[Sentence],
    schedule: &TrainingSchedule,
    channel: &ChannelSpec<T>,
    rng: &mut R,
    options: &TrainOptions,
) -> Result<Vec<StepReport<T>>, CodecError> {
    if corpus.is_empty() {
        return Err(CodecError::EmptyBatch);
    }
    let batch_size = schedule.batch_size.max(1);
    let lr = T::of(schedule.learning_rate);
    let phases = [
        (StepKind::Semantic, schedule.semantic_epochs),
        (StepKind::Channel, schedule.channel_epochs),
        (StepKind::Knowledge, schedule.knowledge_epochs),
        (StepKind::Whole, schedule.whole_epochs),
    ];
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut reports = Vec::new();
    for (kind, epochs) in phases {
        for _ in 0..epochs {
            order.shuffle(rng);
            for chunk in order.chunks(batch_size) {
                let batch: Vec<Sentence> = chunk.iter().map(|&k| corpus[k].clone()).collect();
                reports.push(train_step(kind, &batch, params, lr, channel, rng, options)?);
            }
        }
    }
    Ok(reports)
}

/// Mean metrics of a fixed-prefix evaluation pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub mean_ce: f64,
    pub token_accuracy: f64,
    pub mean_bleu: f64,
}

/// Evaluates every sentence at knowledge prefix `kb_prefix` and feature prefix
/// `min(feature_prefix, L + kb_prefix)`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate<T: Scalar, R: Rng + ?Sized>(
    params: &CodecParams<T>,
    corpus: &[Sentence],
    kb_prefix: usize,
    feature_prefix: usize,
    channel: &ChannelSpec<T>,
    bleu_order: usize,
    mode: CrossEntropyMode,
    rng: &mut R,
) -> Result<Evaluation, CodecError> {
    if corpus.is_empty() {
        return Err(CodecError::EmptyBatch);
    }
    let (mut ce, mut hits, mut tokens, mut bleu_sum) = (0.0, 0usize, 0usize, 0.0);
    for s in corpus {
        let j = feature_prefix.min(s.len() + kb_prefix);
        let t = forward_sentence(s, params, kb_prefix, j, channel, rng)?;
        ce += ce_loss(s, &t.decoded.probabilities, mode)?.as_f64();
        hits += s
            .ids()
            .iter()
            .zip(t.decoded.sentence.ids())
            .filter(|(a, b)| a == b)
            .count();
        tokens += s.len();
        bleu_sum += bleu(&t.decoded.sentence, s, bleu_order)?;
    }
    let n = corpus.len() as f64;
    Ok(Evaluation {
        mean_ce: ce / n,
        token_accuracy: hits as f64 / tokens as f64,
        mean_bleu: bleu_sum / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::params::CodecDims;
    use crate::codec::pipeline::{decode_received, encode_sentence};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const DIMS: CodecDims = CodecDims {
        vocab: 8,
        width: 4,
        kb_size: 3,
        channel_width: 4,
    };

    fn batch() -> Vec<Sentence> {
        vec![
            Sentence::new(vec![4, 5, 6]).unwrap(),
            Sentence::new(vec![7, 4]).unwrap(),
        ]
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = CodecParams::<f64>::random(DIMS, &mut rng).unwrap();
        let before = p.clone();
        for kind in StepKind::ALL {
            train_step(
                kind,
                &batch(),
                &mut p,
                0.0,
                &ChannelSpec::noiseless(),
                &mut rng,
                &TrainOptions::default(),
            )
            .unwrap();
        }
        assert_eq!(p, before);
        assert!(matches!(
            train_step(
                StepKind::Whole,
                &batch(),
                &mut p,
                -1.0,
                &ChannelSpec::noiseless(),
                &mut rng,
                &TrainOptions::default()
            ),
            Err(CodecError::InvalidLearningRate(_))
        ));
    }

    #[test]
    fn steps_only_touch_their_groups() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let base = CodecParams::<f64>::random(DIMS, &mut rng).unwrap();
        for kind in StepKind::ALL {
            let mut p = base.clone();
            // force full transmission so every group receives gradient
            let opts = TrainOptions::default();
            train_step(
                kind,
                &batch(),
                &mut p,
                0.1,
                &ChannelSpec::noiseless(),
                &mut ChaCha8Rng::seed_from_u64(5),
                &opts,
            )
            .unwrap();
            for ((a, b), (name, group)) in p
                .tensors()
                .iter()
                .zip(base.tensors())
                .zip(crate::codec::params::TENSOR_ORDER)
            {
                if !kind.trainable().contains(&group) {
                    assert_eq!(*a, b, "{kind:?} changed frozen tensor {name}");
                }
            }
        }
    }

    #[test]
    fn forward_random_prune_is_seeded() {
        let p = CodecParams::<f64>::random(DIMS, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let ch = ChannelSpec::awgn(5.0);
        let a = forward_random_prune(&batch(), &p, &ch, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = forward_random_prune(&batch(), &p, &ch, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.kb_prefix, b.kb_prefix);
        for (x, y) in a.traces.iter().zip(&b.traces) {
            assert_eq!(x.decoded, y.decoded);
            assert_eq!(x.recovered, y.recovered);
        }
    }

    #[test]
    fn knowledge_prefix_draws_cover_range() {
        let p = CodecParams::<f64>::random(DIMS, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let one = vec![Sentence::new(vec![4]).unwrap()];
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut seen = [0usize; 4];
        for _ in 0..10_000 {
            let f = forward_random_prune(&one, &p, &ChannelSpec::noiseless(), &mut rng).unwrap();
            assert!((2..=3).contains(&f.kb_prefix));
            seen[f.kb_prefix] += 1;
            let j = f.traces[0].sent_rows;
            assert!(j <= 1 + f.kb_prefix);
        }
        assert!(seen[2] > 0 && seen[3] > 0);
    }

    #[test]
    fn full_prefix_matches_unpruned_pipeline() {
        let p = CodecParams::<f64>::random(DIMS, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let s = Sentence::new(vec![4, 5, 6]).unwrap();
        let t = forward_sentence(
            &s,
            &p,
            3,
            6,
            &ChannelSpec::noiseless(),
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        let enc = encode_sentence(&s, &p, 3, 6).unwrap();
        let (rec, dec) = decode_received(enc.signal.as_ref(), 6, 3, &enc.kb_prefix, &p).unwrap();
        assert_eq!(dec.sentence, t.decoded.sentence);
        for (a, b) in rec.as_slice().iter().zip(t.recovered.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn f32_forward_pass_runs() {
        let p = CodecParams::<f32>::random(DIMS, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let f = forward_random_prune(
            &batch(),
            &p,
            &ChannelSpec::awgn(10.0),
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        for t in &f.traces {
            let total: f32 = t.decoded.probabilities.row(0).iter().sum();
            assert!((total - 1.0).abs() < 1e-5);
        }
    }
}
