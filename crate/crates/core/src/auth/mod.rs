//! Probabilistic authentication of lossy payloads.
//!
//! The sender signs a random sample `W_I` of the real-valued payload together
//! with the index set `I`. The receiver checks the signature, samples its own
//! noisy copy at the same indices and accepts when the deviation stays under a
//! threshold.

mod detect;
mod release;

use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};
use rand::Rng;
use thiserror::Error;

use crate::scalar::Scalar;

pub use detect::{
    calibrate_threshold, detection_probability, honest_awgn_diffs, simulate_adversary, tamper,
    AdversaryConfig, AdversaryOutcome, IndexExposure, Magnitude, Tampered, MIN_THRESHOLD,
};
pub use release::{schedule_index_release, ReleaseAction, ReleaseMode, ReleaseTranscript};

pub const PUBLIC_KEY_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AuthError {
    #[error("{what} = {value} outside [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: usize,
        min: usize,
        max: usize,
    },
    #[error("index set must be strictly increasing")]
    Unsorted,
    #[error("empty sample")]
    Empty,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid key material")]
    InvalidKey,
    #[error("signature does not verify")]
    SignatureInvalid,
    #[error("malformed bundle: {0}")]
    Malformed(&'static str),
    #[error("threshold must be finite and positive, got {0}")]
    InvalidThreshold(f64),
    #[error("index set released before the payload was acknowledged")]
    PrematureRelease,
    #[error("index set already released")]
    AlreadyReleased,
}

/// Sorted, distinct positions into a payload of known length.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IndexSet {
    indices: Vec<usize>,
}

impl IndexSet {
    /// Validates `indices` against a payload of length `n`.
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self, AuthError> {
        let set = Self::from_sorted(indices)?;
        if let Some(&last) = set.indices.last() {
            if last >= n {
                return Err(AuthError::OutOfRange {
                    what: "index",
                    value: last,
                    min: 0,
                    max: n.saturating_sub(1),
                });
            }
        }
        Ok(set)
    }

    fn from_sorted(indices: Vec<usize>) -> Result<Self, AuthError> {
        if indices.is_empty() {
            return Err(AuthError::Empty);
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(AuthError::Unsorted);
        }
        Ok(Self { indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    /// Values of `payload` at these positions, in index order.
    pub fn gather<T: Copy>(&self, payload: &[T]) -> Result<Vec<T>, AuthError> {
        match self.indices.last() {
            Some(&last) if last >= payload.len() => Err(AuthError::OutOfRange {
                what: "index",
                value: last,
                min: 0,
                max: payload.len().saturating_sub(1),
            }),
            _ => Ok(self.indices.iter().map(|&i| payload[i]).collect()),
        }
    }
}

/// Uniform sample without replacement of `size` positions out of `n`.
pub fn sample_indices<R: Rng + ?Sized>(
    n: usize,
    size: usize,
    rng: &mut R,
) -> Result<IndexSet, AuthError> {
    if size == 0 || size > n {
        return Err(AuthError::OutOfRange {
            what: "index set size",
            value: size,
            min: 1,
            max: n,
        });
    }
    let mut picked = rand::seq::index::sample(rng, n, size).into_vec();
    picked.sort_unstable();
    Ok(IndexSet { indices: picked })
}

/// `u32 count | count x u32 index | count x f64 value`, all little-endian.
pub fn canonical_serialize(values: &[f64], indices: &IndexSet) -> Result<Vec<u8>, AuthError> {
    if values.is_empty() {
        return Err(AuthError::Empty);
    }
    if values.len() != indices.len() {
        return Err(AuthError::LengthMismatch {
            left: values.len(),
            right: indices.len(),
        });
    }
    let mut out = Vec::with_capacity(4 + 12 * values.len());
    out.extend_from_slice(&(values.len() as u32).to_le_bytes());
    for &i in indices.indices() {
        let i = u32::try_from(i).map_err(|_| AuthError::Malformed("index exceeds u32"))?;
        out.extend_from_slice(&i.to_le_bytes());
    }
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], AuthError> {
        let end = self
            .pos
            .checked_add(n)
            .ok_or(AuthError::Malformed("length overflow"))?;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or(AuthError::Malformed("truncated"))?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, AuthError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, AuthError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn parse_sample(r: &mut Reader<'_>) -> Result<(Vec<f64>, IndexSet), AuthError> {
    let count = r.u32()? as usize;
    if count == 0 {
        return Err(AuthError::Empty);
    }
    if count > r.bytes.len() / 12 {
        return Err(AuthError::Malformed("count exceeds input"));
    }
    let indices = (0..count)
        .map(|_| r.u32().map(|i| i as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let values = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
    Ok((values, IndexSet::from_sorted(indices)?))
}

/// Inverse of [`canonical_serialize`]; rejects trailing bytes.
pub fn canonical_parse(bytes: &[u8]) -> Result<(Vec<f64>, IndexSet), AuthError> {
    let mut r = Reader { bytes, pos: 0 };
    let out = parse_sample(&mut r)?;
    if r.pos != bytes.len() {
        return Err(AuthError::Malformed("trailing bytes"));
    }
    Ok(out)
}

pub fn signing_key_from_bytes(bytes: &[u8]) -> Result<SigningKey, AuthError> {
    let arr: [u8; 32] = bytes.try_into().map_err(|_| AuthError::InvalidKey)?;
    Ok(SigningKey::from_bytes(&arr))
}

pub fn verifying_key_from_bytes(bytes: &[u8]) -> Result<VerifyingKey, AuthError> {
    let arr: [u8; PUBLIC_KEY_LEN] = bytes.try_into().map_err(|_| AuthError::InvalidKey)?;
    VerifyingKey::from_bytes(&arr).map_err(|_| AuthError::InvalidKey)
}

/// Signed sample of a payload.
#[derive(Debug, Clone, PartialEq)]
pub struct AuthBundle {
    values: Vec<f64>,
    indices: IndexSet,
    signature: Vec<u8>,
    signer: String,
}

impl AuthBundle {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn indices(&self) -> &IndexSet {
        &self.indices
    }

    pub fn signature(&self) -> &[u8] {
        &self.signature
    }

    pub fn signer(&self) -> &str {
        &self.signer
    }

    /// Bytes covered by the signature.
    pub fn message(&self) -> Vec<u8> {
        canonical_serialize(&self.values, &self.indices).expect("bundle invariants hold")
    }

    pub fn verify_signature(&self, key: &VerifyingKey) -> Result<(), AuthError> {
        let sig =
            Signature::from_slice(&self.signature).map_err(|_| AuthError::SignatureInvalid)?;
        key.verify_strict(&self.message(), &sig)
            .map_err(|_| AuthError::SignatureInvalid)
    }

    /// `message | u32 sig len | sig | u32 signer len | signer`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.message();
        out.extend_from_slice(&(self.signature.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.signature);
        out.extend_from_slice(&(self.signer.len() as u32).to_le_bytes());
        out.extend_from_slice(self.signer.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AuthError> {
        let mut r = Reader { bytes, pos: 0 };
        let (values, indices) = parse_sample(&mut r)?;
        let sig_len = r.u32()? as usize;
        let signature = r.take(sig_len)?.to_vec();
        let id_len = r.u32()? as usize;
        let signer = std::str::from_utf8(r.take(id_len)?)
            .map_err(|_| AuthError::Malformed("signer id is not utf-8"))?
            .to_owned();
        if r.pos != bytes.len() {
            return Err(AuthError::Malformed("trailing bytes"));
        }
        Ok(Self {
            values,
            indices,
            signature,
            signer,
        })
    }

    pub fn wire_len(&self) -> usize {
        4 + 12 * self.values.len() + 4 + self.signature.len() + 4 + self.signer.len()
    }
}

/// Signs `{W_I || I}` for the given payload.
pub fn sign_bundle(
    payload: &[f64],
    indices: &IndexSet,
    key: &SigningKey,
    signer: &str,
) -> Result<AuthBundle, AuthError> {
    let values = indices.gather(payload)?;
    let message = canonical_serialize(&values, indices)?;
    let signature = key.sign(&message).to_bytes().to_vec();
    Ok(AuthBundle {
        values,
        indices: indices.clone(),
        signature,
        signer: signer.to_owned(),
    })
}

/// How the L1 part of the deviation is aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum L1Mode {
    #[default]
    Sum,
    Mean,
}

/// `||a - b||_1 + ||a - b||_inf`.
pub fn diff_metric<T: Scalar>(a: &[T], b: &[T]) -> Result<T, AuthError> {
    diff_metric_with(a, b, L1Mode::Sum)
}

pub fn diff_metric_with<T: Scalar>(a: &[T], b: &[T], mode: L1Mode) -> Result<T, AuthError> {
    if a.len() != b.len() {
        return Err(AuthError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(AuthError::Empty);
    }
    let (mut l1, mut linf) = (T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        let d = (x - y).abs();
        l1 += d;
        linf = linf.max(d);
    }
    if mode == L1Mode::Mean {
        l1 /= T::of(a.len() as f64);
    }
    Ok(l1 + linf)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerificationPolicy {
    diff_threshold: f64,
    pub release: ReleaseMode,
    pub l1: L1Mode,
}

impl VerificationPolicy {
    pub fn new(diff_threshold: f64, release: ReleaseMode) -> Result<Self, AuthError> {
        if !(diff_threshold.is_finite() && diff_threshold > 0.0) {
            return Err(AuthError::InvalidThreshold(diff_threshold));
        }
        Ok(Self {
            diff_threshold,
            release,
            l1: L1Mode::Sum,
        })
    }

    pub fn diff_threshold(&self) -> f64 {
        self.diff_threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    DiffAboveThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verification {
    pub accepted: bool,
    pub diff: f64,
    pub reason: Option<Rejection>,
}

/// Checks the signature, then compares the signed sample with the received payload.
pub fn verify_bundle(
    received: &[f64],
    bundle: &AuthBundle,
    key: &VerifyingKey,
    policy: &VerificationPolicy,
) -> Result<Verification, AuthError> {
    bundle.verify_signature(key)?;
    let sampled = bundle
        .indices
        .gather(received)
        .map_err(|_| AuthError::LengthMismatch {
            left: received.len(),
            right: bundle.indices.indices().last().map_or(0, |&i| i + 1),
        })?;
    let diff = diff_metric_with(&bundle.values, &sampled, policy.l1)?;
    let accepted = diff < policy.diff_threshold;
    Ok(Verification {
        accepted,
        diff,
        reason: (!accepted).then_some(Rejection::DiffAboveThreshold),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn key(seed: u8) -> SigningKey {
        SigningKey::from_bytes(&[seed; 32])
    }

    fn payload(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn index_set_validation() {
        assert!(IndexSet::new(vec![0, 2, 5], 6).is_ok());
        assert_eq!(IndexSet::new(vec![2, 2], 6), Err(AuthError::Unsorted));
        assert_eq!(IndexSet::new(vec![3, 1], 6), Err(AuthError::Unsorted));
        assert!(matches!(
            IndexSet::new(vec![6], 6),
            Err(AuthError::OutOfRange { .. })
        ));
        assert_eq!(IndexSet::new(vec![], 6), Err(AuthError::Empty));
    }

    #[test]
    fn full_sample_is_every_index() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let set = sample_indices(12, 12, &mut rng).unwrap();
        assert_eq!(set.indices(), (0..12).collect::<Vec<_>>().as_slice());
        assert!(sample_indices(12, 0, &mut rng).is_err());
        assert!(sample_indices(12, 13, &mut rng).is_err());
    }

    #[test]
    fn single_index_draws_are_uniform() {
        let (n, draws) = (10usize, 10_000usize);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut counts = vec![0usize; n];
        for _ in 0..draws {
            counts[sample_indices(n, 1, &mut rng).unwrap().indices()[0]] += 1;
        }
        let p = 1.0 / n as f64;
        let mean = draws as f64 * p;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() <= 3.0 * sd, "count {c}");
        }
    }

    #[test]
    fn sampling_is_seeded() {
        let a = sample_indices(100, 7, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = sample_indices(100, 7, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn canonical_layout() {
        let set = IndexSet::new(vec![1, 4], 5).unwrap();
        let bytes = canonical_serialize(&[0.5, -2.0], &set).unwrap();
        assert_eq!(bytes.len(), 4 + 8 + 16);
        assert_eq!(&bytes[..4], &2u32.to_le_bytes());
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &4u32.to_le_bytes());
        assert_eq!(&bytes[12..20], &0.5f64.to_le_bytes());
        assert_eq!(
            canonical_parse(&bytes).unwrap(),
            (vec![0.5, -2.0], set.clone())
        );
        assert_eq!(canonical_serialize(&[], &set), Err(AuthError::Empty));
        assert!(canonical_serialize(&[1.0], &set).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(canonical_parse(&long).is_err());
        assert!(canonical_parse(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn sign_and_verify_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = payload(32, &mut rng);
        let set = sample_indices(32, 6, &mut rng).unwrap();
        let sk = key(7);
        let bundle = sign_bundle(&w, &set, &sk, "alice").unwrap();
        assert_eq!(bundle.values(), set.gather(&w).unwrap().as_slice());
        let policy = VerificationPolicy::new(0.1, ReleaseMode::Delayed).unwrap();
        let v = verify_bundle(&w, &bundle, &sk.verifying_key(), &policy).unwrap();
        assert!(v.accepted);
        assert_eq!(v.diff, 0.0);
        assert_eq!(v.reason, None);

        let other = key(8).verifying_key();
        assert_eq!(
            verify_bundle(&w, &bundle, &other, &policy),
            Err(AuthError::SignatureInvalid)
        );
        let zeros = vec![0.0; 32];
        assert_eq!(
            verify_bundle(&zeros, &bundle, &other, &policy),
            Err(AuthError::SignatureInvalid)
        );
        assert!(matches!(
            verify_bundle(&w[..4], &bundle, &sk.verifying_key(), &policy),
            Err(AuthError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn different_index_sets_change_the_message() {
        let w = [1.0, 1.0, 1.0];
        let a = sign_bundle(&w, &IndexSet::new(vec![0], 3).unwrap(), &key(1), "a").unwrap();
        let b = sign_bundle(&w, &IndexSet::new(vec![1], 3).unwrap(), &key(1), "a").unwrap();
        assert_ne!(a.message(), b.message());
        assert_ne!(a.signature(), b.signature());
    }

    #[test]
    fn wire_round_trip_and_every_byte_flip_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = payload(16, &mut rng);
        let set = sample_indices(16, 4, &mut rng).unwrap();
        let sk = key(9);
        let bundle = sign_bundle(&w, &set, &sk, "dev-0").unwrap();
        let wire = bundle.to_bytes();
        assert_eq!(wire.len(), bundle.wire_len());
        assert_eq!(AuthBundle::from_bytes(&wire).unwrap(), bundle);
        let message_len = bundle.message().len();
        for pos in 0..message_len {
            let mut m = bundle.message();
            m[pos] ^= 0x01;
            let sig = Signature::from_slice(bundle.signature()).unwrap();
            assert!(
                sk.verifying_key().verify_strict(&m, &sig).is_err(),
                "byte {pos}"
            );
        }
    }

    #[test]
    fn diff_examples() {
        assert_eq!(diff_metric(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        let d = diff_metric(&[0.1f64, -0.2], &[0.0, 0.0]).unwrap();
        assert!((d - 0.5).abs() < 1e-15);
        assert_eq!(diff_metric(&[0.25f64], &[0.0]).unwrap(), 0.5);
        let mean = diff_metric_with(&[0.1f64, -0.2], &[0.0, 0.0], L1Mode::Mean).unwrap();
        assert!((mean - 0.35).abs() < 1e-15);
        assert!(matches!(
            diff_metric(&[1.0f64], &[1.0, 2.0]),
            Err(AuthError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn policy_validation() {
        for bad in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(VerificationPolicy::new(bad, ReleaseMode::Encrypted).is_err());
        }
    }

    #[test]
    fn tampered_sample_is_rejected() {
        let w = vec![0.0; 8];
        let set = IndexSet::new(vec![2, 5], 8).unwrap();
        let sk = key(2);
        let b = sign_bundle(&w, &set, &sk, "x").unwrap();
        let mut hat = w.clone();
        hat[5] = 1.0;
        let policy = VerificationPolicy::new(0.5, ReleaseMode::Delayed).unwrap();
        let v = verify_bundle(&hat, &b, &sk.verifying_key(), &policy).unwrap();
        assert!(!v.accepted);
        assert_eq!(v.diff, 2.0);
        assert_eq!(v.reason, Some(Rejection::DiffAboveThreshold));
    }
}
