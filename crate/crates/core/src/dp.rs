//! Differential-privacy accounting for noisy semantic transmission.
//!
//! Gaussian noise from three sources reaches an observer of the channel
//! output: model noise, channel noise and deliberately injected noise. This
//! module converts between noise levels and `(epsilon, delta)` budgets with the
//! analytic Gaussian mechanism, composes heterogeneous budgets, and finds the
//! least injected noise that meets a target.

use rand::Rng;
use thiserror::Error;

use crate::scalar::{standard_normal, Scalar};
use crate::signal::ComplexSignal;

/// Upper end of the epsilon search in [`sigma_to_budget`].
pub const MAX_EPSILON: f64 = 1e3;
/// Injected noise is searched on `(0, SIGMA_SEARCH_FACTOR * sensitivity]`.
pub const SIGMA_SEARCH_FACTOR: f64 = 1e3;
const MAX_ITERATIONS: usize = 200;
const RELATIVE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DpError {
    #[error("epsilon must be finite and positive, got {0}")]
    InvalidEpsilon(f64),
    #[error("delta must lie in (0, 1), got {0}")]
    InvalidDelta(f64),
    #[error("sensitivity must be finite and positive, got {0}")]
    InvalidSensitivity(f64),
    #[error("noise std must be finite and non-negative, got {0}")]
    InvalidSigma(f64),
    #[error("minimum channel gain must be positive, got {0}")]
    InvalidGain(f64),
    #[error("bisection did not converge")]
    NonConvergence,
    #[error("no epsilon up to {MAX_EPSILON} meets delta for this noise level")]
    BudgetOutOfRange,
    #[error("nothing to compose")]
    EmptyList,
    #[error("target unreachable with injected noise up to {max_sigma}")]
    Unachievable { max_sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self, DpError> {
        let b = Self { epsilon, delta };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), DpError> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(DpError::InvalidEpsilon(self.epsilon));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(DpError::InvalidDelta(self.delta));
        }
        Ok(())
    }
}

fn check_sensitivity(s: f64) -> Result<(), DpError> {
    if s.is_finite() && s > 0.0 {
        Ok(())
    } else {
        Err(DpError::InvalidSensitivity(s))
    }
}

fn check_sigma(s: f64) -> Result<(), DpError> {
    if s.is_finite() && s >= 0.0 {
        Ok(())
    } else {
        Err(DpError::InvalidSigma(s))
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `ln Phi(x)`, accurate far into the lower tail.
fn ln_normal_cdf(x: f64) -> f64 {
    if x > -30.0 {
        return normal_cdf(x).ln();
    }
    let z = -x;
    let z2 = z * z;
    let series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
    -0.5 * z2 - z.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + series.ln()
}

/// Smallest delta for which Gaussian noise of std `sigma` gives `(epsilon, delta)`-DP:
/// `Phi(D/(2s) - e s/D) - e^e Phi(-D/(2s) - e s/D)`.
pub fn gaussian_delta(sigma: f64, sensitivity: f64, epsilon: f64) -> f64 {
    if sigma == 0.0 {
        return 1.0;
    }
    let a = sensitivity / (2.0 * sigma);
    let b = epsilon * sigma / sensitivity;
    let second = (epsilon + ln_normal_cdf(-a - b)).exp();
    (normal_cdf(a - b) - second).max(0.0)
}

/// Bisects a monotone predicate on `[lo, hi]` where `ok(hi)` holds and `ok(lo)` does not.
fn bisect(mut lo: f64, mut hi: f64, ok: impl Fn(f64) -> bool) -> Result<f64, DpError> {
    for _ in 0..MAX_ITERATIONS {
        if hi - lo <= RELATIVE_TOLERANCE * hi {
            return Ok(hi);
        }
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Err(DpError::NonConvergence)
}

/// Least Gaussian std meeting `budget` for L2 sensitivity `sensitivity`.
pub fn analytic_gaussian_sigma(budget: PrivacyBudget, sensitivity: f64) -> Result<f64, DpError> {
    budget.validate()?;
    check_sensitivity(sensitivity)?;
    let ok = |s: f64| gaussian_delta(s, sensitivity, budget.epsilon) <= budget.delta;
    let (mut lo, mut hi) = (sensitivity, sensitivity);
    let mut steps = 0;
    while !ok(hi) {
        lo = hi;
        hi *= 2.0;
        steps += 1;
        if steps > MAX_ITERATIONS {
            return Err(DpError::NonConvergence);
        }
    }
    while ok(lo) {
        hi = lo;
        lo *= 0.5;
        steps += 1;
        if steps > MAX_ITERATIONS {
            return Err(DpError::NonConvergence);
        }
    }
    bisect(lo, hi, ok)
}

/// Least epsilon that Gaussian noise of std `sigma` provides at `delta`.
pub fn sigma_to_budget(sigma: f64, sensitivity: f64, delta: f64) -> Result<f64, DpError> {
    check_sigma(sigma)?;
    check_sensitivity(sensitivity)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(DpError::InvalidDelta(delta));
    }
    let ok = |e: f64| gaussian_delta(sigma, sensitivity, e) <= delta;
    if !ok(MAX_EPSILON) {
        return Err(DpError::BudgetOutOfRange);
    }
    if ok(0.0) {
        return Ok(0.0);
    }
    bisect(0.0, MAX_EPSILON, ok)
}

/// Combined guarantee of heterogeneous mechanisms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositionResult {
    pub epsilon_hat: f64,
    pub delta_total: f64,
    /// Basic sum, the `log(e + sqrt(sum e^2)/delta_hat)` bound, the `log(1/delta_hat)` bound.
    pub terms: [f64; 3],
}

/// Heterogeneous composition of `(epsilon_i, delta_i)` mechanisms with slack `delta_hat`.
pub fn compose(budgets: &[(f64, f64)], delta_hat: f64) -> Result<CompositionResult, DpError> {
    if budgets.is_empty() {
        return Err(DpError::EmptyList);
    }
    if !(delta_hat > 0.0 && delta_hat < 1.0) {
        return Err(DpError::InvalidDelta(delta_hat));
    }
    for &(e, d) in budgets {
        if !(e.is_finite() && e >= 0.0) {
            return Err(DpError::InvalidEpsilon(e));
        }
        if !(0.0..=1.0).contains(&d) {
            return Err(DpError::InvalidDelta(d));
        }
    }
    let sum: f64 = budgets.iter().map(|b| b.0).sum();
    let sum_sq: f64 = budgets.iter().map(|b| b.0 * b.0).sum();
    let drift: f64 = budgets
        .iter()
        .map(|&(e, _)| (e.exp_m1() * e) / (e.exp() + 1.0))
        .sum();
    let middle =
        drift + (2.0 * sum_sq * (std::f64::consts::E + sum_sq.sqrt() / delta_hat).ln()).sqrt();
    let last = drift + (2.0 * sum_sq * (1.0 / delta_hat).ln()).sqrt();
    let keep = budgets
        .iter()
        .fold(1.0 - delta_hat, |acc, b| acc * (1.0 - b.1));
    let terms = [sum, middle, last];
    Ok(CompositionResult {
        epsilon_hat: terms.iter().copied().fold(f64::INFINITY, f64::min),
        delta_total: 1.0 - keep,
        terms,
    })
}

/// How channel noise counts towards privacy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelHandling {
    AwgnExact,
    /// Noise is divided by the weakest gain of the block before accounting.
    FadingWorstCase {
        min_gain: f64,
    },
}

/// Noise already present before deliberate injection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseProfile {
    pub sigma_model: f64,
    pub sigma_channel: f64,
    pub channel: ChannelHandling,
}

impl NoiseProfile {
    pub fn new(
        sigma_model: f64,
        sigma_channel: f64,
        channel: ChannelHandling,
    ) -> Result<Self, DpError> {
        check_sigma(sigma_model)?;
        check_sigma(sigma_channel)?;
        if let ChannelHandling::FadingWorstCase { min_gain } = channel {
            if !(min_gain.is_finite() && min_gain > 0.0) {
                return Err(DpError::InvalidGain(min_gain));
            }
        }
        Ok(Self {
            sigma_model,
            sigma_channel,
            channel,
        })
    }

    pub fn noiseless() -> Self {
        Self {
            sigma_model: 0.0,
            sigma_channel: 0.0,
            channel: ChannelHandling::AwgnExact,
        }
    }

    /// Channel noise std referred back to the transmitted signal.
    pub fn effective_channel_sigma(&self) -> f64 {
        match self.channel {
            ChannelHandling::AwgnExact => self.sigma_channel,
            ChannelHandling::FadingWorstCase { min_gain } => self.sigma_channel / min_gain,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AccountingMode {
    /// Each noise source is a separate mechanism; budgets compose.
    #[default]
    Composition,
    /// All noise is one Gaussian mechanism with the summed variance.
    Aggregate,
}

/// Outcome of a calibration with every intermediate budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub mode: AccountingMode,
    pub sigma_dp: f64,
    pub sensitivity: f64,
    /// `None` when the source contributes no noise.
    pub epsilon_model: Option<f64>,
    pub epsilon_channel: Option<f64>,
    pub epsilon_dp: Option<f64>,
    pub delta_per_source: f64,
    pub delta_hat: f64,
    pub epsilon_hat: f64,
    pub delta_total: f64,
}

/// `2 sqrt(K)`: the L2 diameter of unit-power signals of `K` complex symbols.
pub fn sensitivity_bound(symbols: usize) -> f64 {
    2.0 * (symbols as f64).sqrt()
}

struct Split {
    per_source: f64,
    delta_hat: f64,
}

fn split(target: f64, sources: usize) -> Split {
    Split {
        per_source: target / (2 * sources) as f64,
        delta_hat: target / 2.0,
    }
}

/// Budget of each present source at `delta`; a source without a finite budget fails the split.
fn source_budgets(
    sigmas: &[f64],
    sensitivity: f64,
    delta: f64,
) -> Result<Vec<Option<f64>>, DpError> {
    sigmas
        .iter()
        .map(|&s| {
            (s > 0.0)
                .then(|| sigma_to_budget(s, sensitivity, delta))
                .transpose()
        })
        .collect()
}

fn composed(eps: &[Option<f64>], sp: &Split) -> Result<CompositionResult, DpError> {
    let budgets: Vec<(f64, f64)> = eps.iter().flatten().map(|&e| (e, sp.per_source)).collect();
    compose(&budgets, sp.delta_hat)
}

fn meets(result: &CompositionResult, target: &PrivacyBudget) -> bool {
    result.epsilon_hat <= target.epsilon && result.delta_total <= target.delta
}

/// Least injected noise meeting `target`, accounting per `mode`.
///
/// `sensitivity` defaults to [`sensitivity_bound`] of `symbols`.
pub fn calibrate(
    target: PrivacyBudget,
    profile: &NoiseProfile,
    sensitivity: Option<f64>,
    symbols: usize,
    mode: AccountingMode,
) -> Result<Calibration, DpError> {
    target.validate()?;
    let sens = sensitivity.unwrap_or_else(|| sensitivity_bound(symbols));
    check_sensitivity(sens)?;
    match mode {
        AccountingMode::Composition => calibrate_composition(target, profile, sens),
        AccountingMode::Aggregate => calibrate_aggregate(target, profile, sens),
    }
}

fn calibrate_composition(
    target: PrivacyBudget,
    profile: &NoiseProfile,
    sens: f64,
) -> Result<Calibration, DpError> {
    let fixed = [profile.sigma_model, profile.effective_channel_sigma()];
    let max_sigma = SIGMA_SEARCH_FACTOR * sens;
    let present = fixed.iter().filter(|&&s| s > 0.0).count();

    let report =
        |sigma_dp: f64, eps: &[Option<f64>], sp: &Split, c: &CompositionResult| Calibration {
            mode: AccountingMode::Composition,
            sigma_dp,
            sensitivity: sens,
            epsilon_model: eps[0],
            epsilon_channel: eps[1],
            epsilon_dp: eps.get(2).copied().flatten(),
            delta_per_source: sp.per_source,
            delta_hat: sp.delta_hat,
            epsilon_hat: c.epsilon_hat,
            delta_total: c.delta_total,
        };

    if present > 0 {
        let sp = split(target.delta, present);
        if let Ok(eps) = source_budgets(&fixed, sens, sp.per_source) {
            let c = composed(&eps, &sp)?;
            if meets(&c, &target) {
                return Ok(report(0.0, &eps, &sp, &c));
            }
        }
    }

    let sp = split(target.delta, present + 1);
    let unachievable = DpError::Unachievable { max_sigma };
    let eps_fixed =
        source_budgets(&fixed, sens, sp.per_source).map_err(|_| unachievable.clone())?;
    let evaluate = |sigma_dp: f64| -> Option<(Vec<Option<f64>>, CompositionResult)> {
        let e_dp = sigma_to_budget(sigma_dp, sens, sp.per_source).ok()?;
        let mut eps = eps_fixed.clone();
        eps.push(Some(e_dp));
        let c = composed(&eps, &sp).ok()?;
        meets(&c, &target).then_some((eps, c))
    };
    if evaluate(max_sigma).is_none() {
        return Err(unachievable);
    }
    let sigma_dp = bisect(0.0, max_sigma, |s| s > 0.0 && evaluate(s).is_some())?;
    let (eps, c) = evaluate(sigma_dp).ok_or(DpError::NonConvergence)?;
    Ok(report(sigma_dp, &eps, &sp, &c))
}

fn total_sigma(profile: &NoiseProfile, sigma_dp: f64) -> f64 {
    let ch = profile.effective_channel_sigma();
    (sigma_dp * sigma_dp + profile.sigma_model * profile.sigma_model + ch * ch).sqrt()
}

fn calibrate_aggregate(
    target: PrivacyBudget,
    profile: &NoiseProfile,
    sens: f64,
) -> Result<Calibration, DpError> {
    let needed = analytic_gaussian_sigma(target, sens)?;
    let existing = total_sigma(profile, 0.0);
    let sigma_dp = if existing >= needed {
        0.0
    } else {
        (needed * needed - existing * existing).sqrt()
    };
    let eps = aggregate_variance_budget(profile, sigma_dp, sens, target.delta)?;
    let part = |s: f64| {
        (s > 0.0)
            .then(|| sigma_to_budget(s, sens, target.delta).ok())
            .flatten()
    };
    Ok(Calibration {
        mode: AccountingMode::Aggregate,
        sigma_dp,
        sensitivity: sens,
        epsilon_model: part(profile.sigma_model),
        epsilon_channel: part(profile.effective_channel_sigma()),
        epsilon_dp: part(sigma_dp),
        delta_per_source: target.delta,
        delta_hat: 0.0,
        epsilon_hat: eps,
        delta_total: target.delta,
    })
}

/// Epsilon of the single mechanism whose std is the root-sum-square of all sources.
pub fn aggregate_variance_budget(
    profile: &NoiseProfile,
    sigma_dp: f64,
    sensitivity: f64,
    delta: f64,
) -> Result<f64, DpError> {
    check_sigma(sigma_dp)?;
    let total = total_sigma(profile, sigma_dp);
    if total == 0.0 {
        return Err(DpError::InvalidSigma(total));
    }
    sigma_to_budget(total, sensitivity, delta)
}

/// Adds `N(0, sigma^2)` to every real coordinate; the result is not renormalized.
pub fn apply_dp_noise<T: Scalar, R: Rng + ?Sized>(
    x: &ComplexSignal<T>,
    sigma: T,
    rng: &mut R,
) -> ComplexSignal<T> {
    if sigma == T::zero() {
        return x.clone();
    }
    let symbols = x
        .symbols()
        .iter()
        .map(|s| {
            let re = s.re + sigma * standard_normal::<T, _>(rng);
            let im = s.im + sigma * standard_normal::<T, _>(rng);
            num_complex::Complex::new(re, im)
        })
        .collect();
    ComplexSignal::new(symbols).expect("same length as a valid signal")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// `sqrt(2 ln(1.25 / delta)) / epsilon` at `epsilon = 1`, `delta = 1e-5`.
    const CLASSICAL: f64 = 4.844_805_262_605_389;
    /// `sqrt(2 ln(1 / delta))`, the commonly quoted 4.7985.
    const CLASSICAL_NO_CONSTANT: f64 = 4.798_525_912_188_081;

    fn budget(e: f64, d: f64) -> PrivacyBudget {
        PrivacyBudget::new(e, d).unwrap()
    }

    #[test]
    fn cdf_reference_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((normal_cdf(1.96) - 0.975_002_104_851_780).abs() < 1e-14);
        assert!((normal_cdf(-5.0) - 2.866_515_718_791_939e-7).abs() < 1e-20);
        for x in [-29.0, -31.0, -36.0] {
            let direct = (0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)).ln();
            assert!(
                (ln_normal_cdf(x) - direct).abs() < 1e-8 * direct.abs(),
                "{x}"
            );
        }
    }

    #[test]
    fn classical_bound_is_loose() {
        assert!(((2.0 * (1.25f64 / 1e-5).ln()).sqrt() - CLASSICAL).abs() < 1e-9);
        assert!(((2.0 * (1.0f64 / 1e-5).ln()).sqrt() - CLASSICAL_NO_CONSTANT).abs() < 1e-9);
        let s = analytic_gaussian_sigma(budget(1.0, 1e-5), 1.0).unwrap();
        assert!(s < CLASSICAL_NO_CONSTANT, "{s}");
        let slack = 1e-5 - gaussian_delta(s, 1.0, 1.0);
        assert!((0.0..1e-8).contains(&slack), "{slack}");
        assert!(gaussian_delta(s * (1.0 - 1e-6), 1.0, 1.0) > 1e-5);
    }

    #[test]
    fn sigma_scales_with_sensitivity() {
        let b = budget(0.7, 1e-6);
        let base = analytic_gaussian_sigma(b, 1.0).unwrap();
        for c in [2.0, 10.0] {
            let s = analytic_gaussian_sigma(b, c).unwrap();
            assert!((s / (c * base) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sigma_is_monotone() {
        let mut prev_e = f64::INFINITY;
        for e in [0.1, 0.5, 1.0, 2.0, 8.0] {
            let s = analytic_gaussian_sigma(budget(e, 1e-5), 1.0).unwrap();
            assert!(s < prev_e);
            prev_e = s;
        }
        let mut prev_d = f64::INFINITY;
        for d in [1e-9, 1e-6, 1e-3, 0.1] {
            let s = analytic_gaussian_sigma(budget(1.0, d), 1.0).unwrap();
            assert!(s < prev_d);
            prev_d = s;
        }
    }

    #[test]
    fn inversion_round_trips() {
        for (e, d, s) in [(1.0, 1e-5, 1.0), (0.2, 1e-3, 3.0), (4.0, 1e-8, 0.5)] {
            let sigma = analytic_gaussian_sigma(budget(e, d), s).unwrap();
            let back = sigma_to_budget(sigma, s, d).unwrap();
            assert!((back - e).abs() < 1e-6, "{back} vs {e}");
        }
        let mut prev = f64::INFINITY;
        for sigma in [0.5, 1.0, 2.0, 10.0, 100.0] {
            let e = sigma_to_budget(sigma, 1.0, 1e-5).unwrap();
            assert!(e < prev);
            prev = e;
        }
        assert!(sigma_to_budget(1e6, 1.0, 1e-5).unwrap() < 1e-5);
        assert_eq!(
            sigma_to_budget(1e-4, 1.0, 1e-5),
            Err(DpError::BudgetOutOfRange)
        );
        assert!(sigma_to_budget(1.0, 1.0, 0.0).is_err());
    }

    /// Each term written out separately from the shared sums.
    fn composition_oracle(eps: &[f64], delta_hat: f64) -> [f64; 3] {
        let mut basic = 0.0;
        let mut drift = 0.0;
        let mut squares = 0.0;
        for &e in eps {
            basic += e;
            drift += (e.exp() - 1.0) * e / (e.exp() + 1.0);
            squares += 2.0 * e * e;
        }
        let norm = (squares / 2.0).sqrt();
        let t2 = drift + (squares * (1f64.exp() + norm / delta_hat).ln()).sqrt();
        let t3 = drift + (squares * (1.0 / delta_hat).ln()).sqrt();
        [basic, t2, t3]
    }

    #[test]
    fn composition_examples() {
        let zero = compose(&[(0.0, 0.0), (0.0, 0.0)], 1e-6).unwrap();
        assert_eq!(zero.epsilon_hat, 0.0);
        let single = compose(&[(0.8, 1e-6)], 1e-6).unwrap();
        assert_eq!(single.terms[0], 0.8);
        assert!(single.epsilon_hat <= 0.8);
        let two = compose(&[(0.5, 0.0), (0.5, 0.0)], 1e-6).unwrap();
        let oracle = composition_oracle(&[0.5, 0.5], 1e-6);
        for (t, o) in two.terms.iter().zip(&oracle) {
            assert!((t - o).abs() < 1e-12);
        }
        assert_eq!(
            two.epsilon_hat,
            oracle.iter().copied().fold(f64::INFINITY, f64::min)
        );
        assert!((two.delta_total - 1e-6).abs() < 1e-15);
        let d = compose(&[(1.0, 0.1), (1.0, 0.2)], 0.5).unwrap().delta_total;
        assert!((d - (1.0 - 0.5 * 0.9 * 0.8)).abs() < 1e-15);
        assert_eq!(compose(&[], 0.1), Err(DpError::EmptyList));
        assert!(compose(&[(1.0, 0.0)], 0.0).is_err());
    }

    #[test]
    fn many_small_mechanisms_beat_the_sum() {
        let eps = vec![(0.01, 0.0); 2000];
        let c = compose(&eps, 1e-5).unwrap();
        assert!(c.epsilon_hat < c.terms[0]);
    }

    #[test]
    fn huge_channel_noise_needs_no_injection() {
        let p = NoiseProfile::new(0.0, 1e6, ChannelHandling::AwgnExact).unwrap();
        let c = calibrate(
            budget(5.0, 1e-3),
            &p,
            Some(1.0),
            1,
            AccountingMode::Composition,
        )
        .unwrap();
        assert_eq!(c.sigma_dp, 0.0);
        assert!(c.epsilon_hat <= 5.0);
    }

    #[test]
    fn degenerate_profile_reduces_to_single_mechanism() {
        let target = budget(1.0, 1e-5);
        let c = calibrate(
            target,
            &NoiseProfile::noiseless(),
            Some(2.0),
            1,
            AccountingMode::Composition,
        )
        .unwrap();
        let single = analytic_gaussian_sigma(budget(1.0, 0.5e-5), 2.0).unwrap();
        assert!((c.sigma_dp - single).abs() < 1e-6);
        let a = calibrate(
            target,
            &NoiseProfile::noiseless(),
            Some(2.0),
            1,
            AccountingMode::Aggregate,
        )
        .unwrap();
        let full = analytic_gaussian_sigma(target, 2.0).unwrap();
        assert!((a.sigma_dp - full).abs() < 1e-9);
    }

    fn recomposed(c: &Calibration, p: &NoiseProfile, sigma_dp: f64) -> Option<CompositionResult> {
        let sigmas = [p.sigma_model, p.effective_channel_sigma(), sigma_dp];
        let budgets: Option<Vec<(f64, f64)>> = sigmas
            .iter()
            .filter(|&&s| s > 0.0)
            .map(|&s| {
                sigma_to_budget(s, c.sensitivity, c.delta_per_source)
                    .ok()
                    .map(|e| (e, c.delta_per_source))
            })
            .collect();
        compose(&budgets?, c.delta_hat).ok()
    }

    #[test]
    fn calibration_is_minimal_and_sound() {
        for (e, d, sens) in [(2.0, 1e-5, 1.0), (0.3, 1e-3, 4.0), (6.0, 1e-8, 0.2)] {
            let target = budget(e, d);
            let p = NoiseProfile::noiseless();
            let c = calibrate(target, &p, Some(sens), 1, AccountingMode::Composition).unwrap();
            assert!(c.sigma_dp > 0.0);
            let ok = recomposed(&c, &p, c.sigma_dp).unwrap();
            assert!(ok.epsilon_hat <= target.epsilon && ok.delta_total <= target.delta);
            let short = recomposed(&c, &p, 0.99 * c.sigma_dp).unwrap();
            assert!(short.epsilon_hat > target.epsilon);
        }
    }

    #[test]
    fn sufficient_fixed_noise_needs_no_injection() {
        let target = budget(3.0, 1e-5);
        let p = NoiseProfile::new(4.0, 2.0, ChannelHandling::FadingWorstCase { min_gain: 0.5 })
            .unwrap();
        let c = calibrate(target, &p, Some(1.0), 1, AccountingMode::Composition).unwrap();
        assert_eq!(c.sigma_dp, 0.0);
        assert_eq!(c.epsilon_dp, None);
        let ok = recomposed(&c, &p, 0.0).unwrap();
        assert!(ok.epsilon_hat <= target.epsilon && ok.delta_total <= target.delta);
    }

    #[test]
    fn composition_mode_can_be_unachievable() {
        let p = NoiseProfile::new(0.0, 0.5, ChannelHandling::AwgnExact).unwrap();
        let r = calibrate(
            budget(0.5, 1e-5),
            &p,
            Some(1.0),
            1,
            AccountingMode::Composition,
        );
        assert!(matches!(r, Err(DpError::Unachievable { .. })));
        let a = calibrate(
            budget(0.5, 1e-5),
            &p,
            Some(1.0),
            1,
            AccountingMode::Aggregate,
        )
        .unwrap();
        assert!(a.sigma_dp > 0.0 && a.epsilon_hat <= 0.5 + 1e-9);
    }

    #[test]
    fn aggregate_accounting() {
        let none = NoiseProfile::noiseless();
        let e = aggregate_variance_budget(&none, 2.0, 1.0, 1e-5).unwrap();
        assert_eq!(e, sigma_to_budget(2.0, 1.0, 1e-5).unwrap());
        let noisy = NoiseProfile::new(1.0, 1.0, ChannelHandling::AwgnExact).unwrap();
        assert!(aggregate_variance_budget(&noisy, 2.0, 1.0, 1e-5).unwrap() < e);
        assert!(aggregate_variance_budget(&none, 0.0, 1.0, 1e-5).is_err());
    }

    #[test]
    fn fading_uses_weakest_gain() {
        let p = NoiseProfile::new(
            0.0,
            1.0,
            ChannelHandling::FadingWorstCase { min_gain: 0.25 },
        )
        .unwrap();
        assert_eq!(p.effective_channel_sigma(), 4.0);
        assert!(
            NoiseProfile::new(0.0, 1.0, ChannelHandling::FadingWorstCase { min_gain: 0.0 })
                .is_err()
        );
        assert!(NoiseProfile::new(-1.0, 1.0, ChannelHandling::AwgnExact).is_err());
    }

    #[test]
    fn sensitivity_examples() {
        assert_eq!(sensitivity_bound(1), 2.0);
        assert_eq!(sensitivity_bound(4), 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = 6;
        for _ in 0..10_000 {
            let draw = |rng: &mut ChaCha8Rng| {
                let v: Vec<f64> = (0..2 * k).map(|_| rng.random_range(-1.0..1.0)).collect();
                let s =
                    crate::signal::power_normalize(&ComplexSignal::from_interleaved(&v).unwrap())
                        .unwrap();
                s.to_interleaved()
            };
            let (a, b) = (draw(&mut rng), draw(&mut rng));
            let dist = a
                .iter()
                .zip(&b)
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(dist <= sensitivity_bound(k) + 1e-12);
        }
    }

    #[test]
    fn dp_noise_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = ComplexSignal::from_interleaved(&vec![0.0f64; 1_000_000]).unwrap();
        assert_eq!(apply_dp_noise(&x, 0.0, &mut rng), x);
        let y = apply_dp_noise(&x, 0.3, &mut rng);
        let v = y.to_interleaved();
        let std = (v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64).sqrt();
        assert!((std / 0.3 - 1.0).abs() < 0.02);
        let a = apply_dp_noise(&x, 0.3, &mut ChaCha8Rng::seed_from_u64(5));
        let b = apply_dp_noise(&x, 0.3, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }
}
