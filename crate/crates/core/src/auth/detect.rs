//! Detection analysis: closed-form spot-check probability, tampering and an
//! adversary simulator that exercises the full sign/verify path.

use ed25519_dalek::SigningKey;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use rand::Rng;

use super::{
    sample_indices, sign_bundle, verify_bundle, AuthError, IndexSet, ReleaseTranscript,
    VerificationPolicy,
};
use crate::scalar::standard_normal;

/// Smallest threshold [`calibrate_threshold`] returns.
pub const MIN_THRESHOLD: f64 = 1e-9;

fn binomial(n: usize, k: usize) -> BigInt {
    if k > n {
        return BigInt::from(0);
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for j in 0..k {
        acc = acc * BigInt::from(n - j) / BigInt::from(j + 1);
    }
    acc
}

/// `1 - C(N-x, I) / C(N, I)`, evaluated exactly.
pub fn detection_probability(n: usize, x: usize, index_size: usize) -> Result<f64, AuthError> {
    if x > n {
        return Err(AuthError::OutOfRange {
            what: "modified count",
            value: x,
            min: 0,
            max: n,
        });
    }
    if index_size == 0 || index_size > n {
        return Err(AuthError::OutOfRange {
            what: "index set size",
            value: index_size,
            min: 1,
            max: n,
        });
    }
    let miss = BigRational::new(binomial(n - x, index_size), binomial(n, index_size));
    Ok((BigRational::one() - miss).to_f64().unwrap_or(f64::NAN))
}

/// Size class of an attacker's modifications relative to the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Magnitude {
    /// Each touched element moves by twice the threshold.
    AboveThreshold,
    /// Total deviation `L1 + L_inf` stays at half the threshold.
    BelowThreshold,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tampered {
    pub payload: Vec<f64>,
    /// Sorted modified positions.
    pub positions: Vec<usize>,
}

fn perturb<R: Rng + ?Sized>(
    payload: &[f64],
    mut positions: Vec<usize>,
    magnitude: Magnitude,
    threshold: f64,
    rng: &mut R,
) -> Tampered {
    positions.sort_unstable();
    let step = match magnitude {
        Magnitude::AboveThreshold => 2.0 * threshold,
        Magnitude::BelowThreshold => 0.5 * threshold / (positions.len() + 1) as f64,
    };
    let mut out = payload.to_vec();
    for &p in &positions {
        out[p] += if rng.random::<bool>() { step } else { -step };
    }
    Tampered {
        payload: out,
        positions,
    }
}

/// Modifies `x` uniformly chosen distinct positions of `payload`.
pub fn tamper<R: Rng + ?Sized>(
    payload: &[f64],
    x: usize,
    magnitude: Magnitude,
    threshold: f64,
    rng: &mut R,
) -> Result<Tampered, AuthError> {
    if x == 0 || x > payload.len() {
        return Err(AuthError::OutOfRange {
            what: "modified count",
            value: x,
            min: 1,
            max: payload.len(),
        });
    }
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(AuthError::InvalidThreshold(threshold));
    }
    let positions = rand::seq::index::sample(rng, payload.len(), x).into_vec();
    Ok(perturb(payload, positions, magnitude, threshold, rng))
}

/// Picks `x` positions, avoiding `avoid` where possible.
fn evasive_positions<R: Rng + ?Sized>(
    n: usize,
    x: usize,
    avoid: &IndexSet,
    rng: &mut R,
) -> Vec<usize> {
    let (mut outside, mut inside): (Vec<usize>, Vec<usize>) =
        (0..n).partition(|&i| !avoid.contains(i));
    let mut chosen = Vec::with_capacity(x);
    for pool in [&mut outside, &mut inside] {
        let take = (x - chosen.len()).min(pool.len());
        for k in rand::seq::index::sample(rng, pool.len(), take) {
            chosen.push(pool[k]);
        }
    }
    chosen
}

/// Interleaved real coordinates of a random unit-power complex signal.
fn unit_power_payload<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| standard_normal::<f64, _>(rng)).collect();
    let scale = ((n as f64 / 2.0) / w.iter().map(|v| v * v).sum::<f64>()).sqrt();
    w.iter_mut().for_each(|v| *v *= scale);
    w
}

/// When the attacker learns the index set relative to the tampering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexExposure {
    /// Release follows the ordering rules: the attacker sees `I` only after
    /// the payload was acknowledged, too late to steer modifications.
    AfterAck,
    /// `I` leaks before the payload is sent; the attacker avoids sampled positions.
    BeforeTamper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdversaryConfig {
    pub n: usize,
    pub modified: usize,
    pub index_size: usize,
    pub magnitude: Magnitude,
    pub policy: VerificationPolicy,
    /// Honest per-coordinate AWGN standard deviation added after tampering.
    pub noise_sigma: f64,
    pub exposure: IndexExposure,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdversaryOutcome {
    pub trials: usize,
    pub detected: usize,
    /// Closed-form detection probability for the configured `(N, x, I)`.
    pub predicted: f64,
}

impl AdversaryOutcome {
    pub fn rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.detected as f64 / self.trials as f64
        }
    }
}

/// Runs `trials` signed transmissions through an in-path attacker and counts rejections.
pub fn simulate_adversary<R: Rng + ?Sized>(
    config: &AdversaryConfig,
    trials: usize,
    rng: &mut R,
) -> Result<AdversaryOutcome, AuthError> {
    let predicted = detection_probability(config.n, config.modified, config.index_size)?;
    let key = SigningKey::from_bytes(&rng.random());
    let public = key.verifying_key();
    let threshold = config.policy.diff_threshold();
    let mut detected = 0;
    for _ in 0..trials {
        let w = unit_power_payload(config.n, rng);
        let set = sample_indices(config.n, config.index_size, rng)?;
        let bundle = sign_bundle(&w, &set, &key, "sender")?;

        let mut transcript = ReleaseTranscript::default();
        transcript.send_payload();
        let tampered = match config.exposure {
            IndexExposure::AfterAck => {
                tamper(&w, config.modified, config.magnitude, threshold, rng)?
            }
            IndexExposure::BeforeTamper => {
                let pos = evasive_positions(config.n, config.modified, &set, rng);
                perturb(&w, pos, config.magnitude, threshold, rng)
            }
        };
        let mut received = tampered.payload;
        if config.noise_sigma > 0.0 {
            for v in &mut received {
                *v += config.noise_sigma * standard_normal::<f64, _>(rng);
            }
        }
        transcript.acknowledge();
        transcript.release(config.policy.release)?;

        if !verify_bundle(&received, &bundle, &public, &config.policy)?.accepted {
            detected += 1;
        }
    }
    Ok(AdversaryOutcome {
        trials,
        detected,
        predicted,
    })
}

/// Diff values of untampered payloads of length `n` after AWGN of the given std.
pub fn honest_awgn_diffs<R: Rng + ?Sized>(
    n: usize,
    index_size: usize,
    noise_sigma: f64,
    trials: usize,
    rng: &mut R,
) -> Result<Vec<f64>, AuthError> {
    (0..trials)
        .map(|_| {
            let w = unit_power_payload(n, rng);
            let set = sample_indices(n, index_size, rng)?;
            let sent = set.gather(&w)?;
            let got: Vec<f64> = sent
                .iter()
                .map(|v| v + noise_sigma * standard_normal::<f64, _>(rng))
                .collect();
            super::diff_metric(&sent, &got)
        })
        .collect()
}

/// `mean + 3 std` of honest Diff samples, floored at [`MIN_THRESHOLD`].
pub fn calibrate_threshold(honest: &[f64]) -> Result<f64, AuthError> {
    if honest.is_empty() {
        return Err(AuthError::Empty);
    }
    let n = honest.len() as f64;
    let mean = honest.iter().sum::<f64>() / n;
    let var = honest.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    Ok((mean + 3.0 * var.sqrt()).max(MIN_THRESHOLD))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auth::ReleaseMode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct ratio of binomials in floating point.
    fn float_oracle(n: usize, x: usize, i: usize) -> f64 {
        fn c(n: usize, k: usize) -> f64 {
            if k > n {
                return 0.0;
            }
            (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
        }
        1.0 - c(n - x, i) / c(n, i)
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(detection_probability(50, 0, 5).unwrap(), 0.0);
        assert_eq!(detection_probability(20, 1, 20).unwrap(), 1.0);
        assert_eq!(detection_probability(20, 15, 6).unwrap(), 1.0);
        let p = detection_probability(10, 2, 3).unwrap();
        assert!((p - (1.0 - 56.0 / 120.0)).abs() < 1e-15);
        for (n, x, i) in [(128, 1, 8), (128, 4, 8), (128, 16, 4), (1000, 7, 33)] {
            let p = detection_probability(n, x, i).unwrap();
            assert!((p - float_oracle(n, x, i)).abs() < 1e-12);
        }
        assert!(detection_probability(10, 11, 3).is_err());
        assert!(detection_probability(10, 2, 0).is_err());
        assert!(detection_probability(10, 2, 11).is_err());
    }

    #[test]
    fn closed_form_matches_index_overlap_monte_carlo() {
        let (n, x, i, trials) = (10, 2, 3, 100_000);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut hits = 0;
        for _ in 0..trials {
            let set = sample_indices(n, i, &mut rng).unwrap();
            let modified = rand::seq::index::sample(&mut rng, n, x);
            if modified.iter().any(|m| set.contains(m)) {
                hits += 1;
            }
        }
        let rate = hits as f64 / trials as f64;
        assert!((rate - detection_probability(n, x, i).unwrap()).abs() < 0.01);
    }

    #[test]
    fn tamper_touches_exactly_x_positions() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let w = vec![0.0; 40];
        for x in [1, 5, 40] {
            let t = tamper(&w, x, Magnitude::AboveThreshold, 0.3, &mut rng).unwrap();
            assert_eq!(t.positions.len(), x);
            let changed: Vec<usize> = (0..40).filter(|&k| t.payload[k] != 0.0).collect();
            assert_eq!(changed, t.positions);
            assert!(t
                .positions
                .iter()
                .all(|&p| (t.payload[p].abs() - 0.6).abs() < 1e-15));
        }
        let t = tamper(&w, 40, Magnitude::BelowThreshold, 0.3, &mut rng).unwrap();
        assert!(super::super::diff_metric(&w, &t.payload).unwrap() < 0.3);
        assert!(tamper(&w, 0, Magnitude::AboveThreshold, 0.3, &mut rng).is_err());
        assert!(tamper(&w, 41, Magnitude::AboveThreshold, 0.3, &mut rng).is_err());
    }

    fn config(
        n: usize,
        x: usize,
        i: usize,
        magnitude: Magnitude,
        exposure: IndexExposure,
    ) -> AdversaryConfig {
        AdversaryConfig {
            n,
            modified: x,
            index_size: i,
            magnitude,
            policy: VerificationPolicy::new(0.05, ReleaseMode::Delayed).unwrap(),
            noise_sigma: 0.0,
            exposure,
        }
    }

    #[test]
    fn full_modification_is_always_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let c = config(
            16,
            16,
            2,
            Magnitude::AboveThreshold,
            IndexExposure::AfterAck,
        );
        let out = simulate_adversary(&c, 200, &mut rng).unwrap();
        assert_eq!(out.detected, 200);
    }

    #[test]
    fn below_threshold_tampering_is_accepted() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let c = config(32, 8, 8, Magnitude::BelowThreshold, IndexExposure::AfterAck);
        assert_eq!(simulate_adversary(&c, 200, &mut rng).unwrap().detected, 0);
    }

    #[test]
    fn empirical_rate_tracks_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let c = config(
            128,
            16,
            8,
            Magnitude::AboveThreshold,
            IndexExposure::AfterAck,
        );
        let out = simulate_adversary(&c, 10_000, &mut rng).unwrap();
        assert!(
            (out.rate() - out.predicted).abs() < 0.02,
            "{} vs {}",
            out.rate(),
            out.predicted
        );
    }

    #[test]
    fn leaked_indices_let_the_attacker_evade() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let c = config(
            64,
            8,
            8,
            Magnitude::AboveThreshold,
            IndexExposure::BeforeTamper,
        );
        assert_eq!(simulate_adversary(&c, 300, &mut rng).unwrap().detected, 0);
        let c = config(64, 8, 8, Magnitude::AboveThreshold, IndexExposure::AfterAck);
        let out = simulate_adversary(&c, 3000, &mut rng).unwrap();
        assert!((out.rate() - out.predicted).abs() < 0.03);
    }

    #[test]
    fn calibrated_threshold_accepts_honest_traffic() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let sigma = (crate::signal::snr_db_to_noise_power(12.0f64, 1.0) / 2.0).sqrt();
        let honest = honest_awgn_diffs(256, 16, sigma, 1000, &mut rng).unwrap();
        let tau = calibrate_threshold(&honest).unwrap();
        let fresh = honest_awgn_diffs(256, 16, sigma, 1000, &mut rng).unwrap();
        let accepted = fresh.iter().filter(|&&d| d < tau).count();
        assert!(accepted >= 990, "{accepted}");
        assert_eq!(calibrate_threshold(&[0.0, 0.0]).unwrap(), MIN_THRESHOLD);
        assert!(calibrate_threshold(&[]).is_err());
    }
}
