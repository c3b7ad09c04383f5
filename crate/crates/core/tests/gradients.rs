//! Central finite-difference checks of the hand-derived gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use semcom_core::codec::{
    objective, objective_and_gradient, ChannelSpec, CodecDims, CodecParams, CrossEntropyMode,
    Sentence, StepKind, TrainOptions, TENSOR_ORDER,
};

const DIMS: CodecDims = CodecDims {
    vocab: 8,
    width: 4,
    kb_size: 2,
    channel_width: 4,
};
const STEP: f64 = 1e-5;

/// Largest relative error between analytic and numeric gradients over every
/// coordinate of the groups `kind` trains. Coordinates whose magnitude is
/// below `floor` are compared relative to `floor`.
fn worst_relative_error(
    kind: StepKind,
    seed: u64,
    channel: ChannelSpec<f64>,
    options: TrainOptions,
) -> f64 {
    let params =
        CodecParams::<f64>::random(DIMS, &mut ChaCha8Rng::seed_from_u64(100 + seed)).unwrap();
    let batch = vec![Sentence::new(vec![4, 5, 6]).unwrap()];
    let rng = ChaCha8Rng::seed_from_u64(seed);
    let (_, grad) =
        objective_and_gradient(kind, &batch, &params, &channel, &mut rng.clone(), &options)
            .unwrap();
    let floor = 1e-6;
    let mut worst: f64 = 0.0;
    for (t, (_, group)) in TENSOR_ORDER.iter().enumerate() {
        if !kind.trainable().contains(group) {
            continue;
        }
        let n = grad.tensors()[t].as_slice().len();
        for k in 0..n {
            let mut plus = params.clone();
            plus.tensors_mut()[t].as_mut_slice()[k] += STEP;
            let mut minus = params.clone();
            minus.tensors_mut()[t].as_mut_slice()[k] -= STEP;
            let fp = objective(kind, &batch, &plus, &channel, &mut rng.clone(), &options).unwrap();
            let fm = objective(kind, &batch, &minus, &channel, &mut rng.clone(), &options).unwrap();
            let numeric = (fp - fm) / (2.0 * STEP);
            let analytic = grad.tensors()[t].as_slice()[k];
            let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(floor);
            worst = worst.max(rel);
        }
    }
    worst
}

#[test]
fn all_step_kinds_match_finite_differences() {
    for kind in StepKind::ALL {
        for seed in 0..12 {
            for channel in [ChannelSpec::noiseless(), ChannelSpec::awgn(10.0)] {
                let err = worst_relative_error(kind, seed, channel, TrainOptions::default());
                assert!(err < 1e-4, "{kind:?} seed {seed}: relative error {err}");
            }
        }
    }
}

#[test]
fn alternative_loss_forms_match_finite_differences() {
    let categorical = TrainOptions {
        ce_mode: CrossEntropyMode::Categorical,
        kb_step_ce_only: false,
    };
    let literal = TrainOptions {
        ce_mode: CrossEntropyMode::BinaryPerVocab,
        kb_step_ce_only: true,
    };
    for seed in 0..6 {
        for kind in StepKind::ALL {
            assert!(worst_relative_error(kind, seed, ChannelSpec::awgn(5.0), categorical) < 1e-4);
        }
        assert!(
            worst_relative_error(StepKind::Knowledge, seed, ChannelSpec::noiseless(), literal)
                < 1e-4
        );
    }
}
