use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use semcom_core::auth::{
    canonical_parse, canonical_serialize, detection_probability, diff_metric, IndexSet,
};
use semcom_core::codec::{CodecDims, CodecParams};
use semcom_core::dp::{analytic_gaussian_sigma, PrivacyBudget};
use semcom_core::ledger::fedavg;
use semcom_core::signal::{apply_channel, equalize, power_normalize, ChannelModel};
use semcom_core::ComplexSignal;

fn reals(len: impl Into<prop::collection::SizeRange>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, len)
}

fn signal() -> impl Strategy<Value = ComplexSignal> {
    (1usize..24)
        .prop_flat_map(|k| reals(2 * k))
        .prop_filter("non-zero power", |v| v.iter().any(|x| x.abs() > 1e-3))
        .prop_map(|v| ComplexSignal::from_interleaved(&v).unwrap())
}

fn close(a: &ComplexSignal, b: &ComplexSignal, tol: f64) -> bool {
    a.symbols()
        .iter()
        .zip(b.symbols())
        .all(|(x, y)| (x - y).norm() <= tol)
}

proptest! {
    #[test]
    fn normalization_is_idempotent(x in signal()) {
        let once = power_normalize(&x).unwrap();
        prop_assert!((once.mean_power() - 1.0).abs() < 1e-12);
        let twice = power_normalize(&once).unwrap();
        prop_assert!(close(&once, &twice, 1e-12));
    }

    #[test]
    fn noiseless_equalization_inverts_fading(x in signal(), seed in any::<u64>(), rician in any::<bool>()) {
        let model = if rician { ChannelModel::Rician { factor: 2.0 } } else { ChannelModel::Rayleigh };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (y, real) = apply_channel(&x, &model, f64::INFINITY, &mut rng).unwrap();
        prop_assume!(real.min_gain() > 1e-6);
        let back = equalize(&y, &real).unwrap();
        prop_assert!(close(&back, &x, 1e-9 * (1.0 + 1.0 / real.min_gain())));
    }

    #[test]
    fn detection_probability_is_monotone(n in 1usize..80, x in 0usize..80, i in 1usize..80) {
        let (x, i) = (x.min(n), i.min(n));
        let p = detection_probability(n, x, i).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        if x < n {
            prop_assert!(detection_probability(n, x + 1, i).unwrap() >= p);
        }
        if i < n {
            prop_assert!(detection_probability(n, x, i + 1).unwrap() >= p);
        }
    }

    #[test]
    fn diff_is_a_symmetric_norm_distance(
        (a, b, c) in (1usize..16).prop_flat_map(|n| (reals(n), reals(n), reals(n)))
    ) {
        let ab = diff_metric(&a, &b).unwrap();
        prop_assert_eq!(ab, diff_metric(&b, &a).unwrap());
        prop_assert!(ab >= 0.0);
        let ac = diff_metric(&a, &c).unwrap();
        let bc = diff_metric(&b, &c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn canonical_bytes_round_trip_and_are_injective(
        idx in prop::collection::btree_set(0usize..1000, 1..12),
        seed in any::<u64>(),
        flip in any::<prop::sample::Index>(),
    ) {
        let idx: Vec<usize> = idx.into_iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals: Vec<f64> = idx.iter().map(|_| rand::Rng::random_range(&mut rng, -5.0..5.0)).collect();
        let set = IndexSet::new(idx.clone(), 1000).unwrap();
        let bytes = canonical_serialize(&vals, &set).unwrap();
        prop_assert_eq!(canonical_parse(&bytes).unwrap(), (vals.clone(), set.clone()));

        let mut other = vals.clone();
        let k = flip.index(other.len());
        other[k] = -other[k] + 1.0;
        prop_assert_ne!(canonical_serialize(&other, &set).unwrap(), bytes);
    }

    #[test]
    fn fedavg_ignores_input_order(seed in any::<u64>(), perm_seed in any::<u64>()) {
        let dims = CodecDims { vocab: 5, width: 4, kb_size: 2, channel_width: 2 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let models: Vec<CodecParams<f64>> = (0..4).map(|_| CodecParams::random(dims, &mut rng).unwrap()).collect();
        let weights: Vec<f64> = (0..4).map(|_| rand::Rng::random_range(&mut rng, 1..100) as f64).collect();
        let mut order: Vec<usize> = (0..4).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut ChaCha8Rng::seed_from_u64(perm_seed));
        let pm: Vec<_> = order.iter().map(|&k| models[k].clone()).collect();
        let pw: Vec<f64> = order.iter().map(|&k| weights[k]).collect();
        let a = fedavg(&models, &weights).unwrap();
        let b = fedavg(&pm, &pw).unwrap();
        for (x, y) in a.tensors().iter().zip(b.tensors()) {
            for (u, v) in x.as_slice().iter().zip(y.as_slice()) {
                prop_assert!((u - v).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn analytic_sigma_is_monotone(e in 0.05f64..5.0, d in 1e-9f64..1e-2, s in 0.1f64..10.0) {
        let base = analytic_gaussian_sigma(PrivacyBudget::new(e, d).unwrap(), s).unwrap();
        let more_eps = analytic_gaussian_sigma(PrivacyBudget::new(e * 1.1, d).unwrap(), s).unwrap();
        let more_delta = analytic_gaussian_sigma(PrivacyBudget::new(e, (d * 2.0).min(0.5)).unwrap(), s).unwrap();
        let more_sens = analytic_gaussian_sigma(PrivacyBudget::new(e, d).unwrap(), s * 1.5).unwrap();
        prop_assert!(more_eps < base);
        prop_assert!(more_delta < base);
        prop_assert!(more_sens > base);
    }
}
