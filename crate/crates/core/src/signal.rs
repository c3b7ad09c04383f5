//! Complex baseband signals and the AWGN / Rayleigh / Rician channel models.
//!
//! Noise convention: a complex noise sample `n ~ CN(0, N0)` is realized as two
//! independent real Gaussians, each with variance `N0 / 2`. The channel gain is
//! drawn once per transmitted block (block fading).

use num_complex::Complex;
use rand::Rng;
use thiserror::Error;

use crate::scalar::{standard_normal, Scalar};

/// Rician K-factor used when a scenario does not set one.
pub const DEFAULT_RICIAN_FACTOR: f64 = 2.0;

/// Gains below this magnitude are treated as a deep fade that cannot be inverted.
pub const MIN_INVERTIBLE_GAIN: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("signal must contain at least one symbol")]
    Empty,
    #[error("signal has zero power and cannot be normalized")]
    ZeroPower,
    #[error("interleaved real view has odd length {0}")]
    OddLength(usize),
    #[error("Rician factor must be positive, got {0}")]
    InvalidRicianFactor(f64),
    #[error("channel gain at symbol {index} is too small to invert")]
    SingularGain { index: usize },
    #[error("length mismatch: signal has {signal} symbols, realization has {realization}")]
    LengthMismatch { signal: usize, realization: usize },
}

/// Complex baseband symbol vector, `K >= 1` symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSignal<T> {
    symbols: Vec<Complex<T>>,
}

impl<T: Scalar> ComplexSignal<T> {
    pub fn new(symbols: Vec<Complex<T>>) -> Result<Self, SignalError> {
        if symbols.is_empty() {
            return Err(SignalError::Empty);
        }
        Ok(Self { symbols })
    }

    /// Builds a signal from interleaved `[re0, im0, re1, im1, ...]` coordinates.
    pub fn from_interleaved(reals: &[T]) -> Result<Self, SignalError> {
        if !reals.len().is_multiple_of(2) {
            return Err(SignalError::OddLength(reals.len()));
        }
        let symbols = reals
            .chunks_exact(2)
            .map(|pair| Complex::new(pair[0], pair[1]))
            .collect();
        Self::new(symbols)
    }

    /// The interleaved real view of the symbols.
    pub fn to_interleaved(&self) -> Vec<T> {
        self.symbols.iter().flat_map(|s| [s.re, s.im]).collect()
    }

    pub fn symbols(&self) -> &[Complex<T>] {
        &self.symbols
    }

    pub fn into_symbols(self) -> Vec<Complex<T>> {
        self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Mean per-symbol power `(1/K) * sum |x_k|^2`.
    pub fn mean_power(&self) -> T {
        let total: T = self.symbols.iter().map(|s| s.norm_sqr()).sum();
        total / T::of(self.symbols.len() as f64)
    }
}

/// Scales a signal to unit mean per-symbol power, preserving each symbol's direction.
pub fn power_normalize<T: Scalar>(
    signal: &ComplexSignal<T>,
) -> Result<ComplexSignal<T>, SignalError> {
    let power = signal.mean_power();
    if power <= T::zero() || !power.is_finite() {
        return Err(SignalError::ZeroPower);
    }
    let scale = power.sqrt().recip();
    Ok(ComplexSignal {
        symbols: signal.symbols.iter().map(|s| s.scale(scale)).collect(),
    })
}

/// Converts an SNR in dB into the complex noise power `N0 = P / 10^(snr/10)`.
///
/// `+inf` dB maps to zero noise power.
pub fn snr_db_to_noise_power<T: Scalar>(snr_db: T, signal_power: T) -> T {
    if snr_db == T::infinity() {
        return T::zero();
    }
    signal_power / T::of(10.0).powf(snr_db / T::of(10.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelModel<T> {
    Awgn,
    Rayleigh,
    Rician { factor: T },
}

impl<T: Scalar> ChannelModel<T> {
    pub fn rician_default() -> Self {
        ChannelModel::Rician {
            factor: T::of(DEFAULT_RICIAN_FACTOR),
        }
    }
}

/// Mean and per-coordinate-scale of a Rician gain: `mu = sqrt(r/(r+1))`, `sigma = sqrt(1/(r+1))`.
pub fn rician_coefficients<T: Scalar>(factor: T) -> Result<(T, T), SignalError> {
    if !(factor > T::zero()) || !factor.is_finite() {
        return Err(SignalError::InvalidRicianFactor(factor.as_f64()));
    }
    let denom = factor + T::one();
    Ok(((factor / denom).sqrt(), denom.recip().sqrt()))
}

/// Channel state for one transmitted block.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization<T> {
    /// Gain per symbol. Under block fading every entry is the same draw.
    pub gains: Vec<Complex<T>>,
    /// Standard deviation of the noise on each real coordinate, `sqrt(N0 / 2)`.
    pub noise_sigma: T,
}

impl<T: Scalar> ChannelRealization<T> {
    /// Smallest gain magnitude in the block.
    pub fn min_gain(&self) -> T {
        self.gains
            .iter()
            .map(|h| h.norm())
            .fold(T::infinity(), |a, b| a.min(b))
    }

    pub fn max_gain(&self) -> T {
        self.gains
            .iter()
            .map(|h| h.norm())
            .fold(T::zero(), |a, b| a.max(b))
    }
}

fn draw_cn<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> Complex<T> {
    let half = T::of(0.5).sqrt();
    let re: T = standard_normal(rng);
    let im: T = standard_normal(rng);
    Complex::new(re * half, im * half)
}

/// Draws one block gain for the model.
pub fn draw_gain<T: Scalar, R: Rng + ?Sized>(
    model: &ChannelModel<T>,
    rng: &mut R,
) -> Result<Complex<T>, SignalError> {
    match *model {
        ChannelModel::Awgn => Ok(Complex::new(T::one(), T::zero())),
        ChannelModel::Rayleigh => Ok(draw_cn(rng)),
        ChannelModel::Rician { factor } => {
            let (mu, sigma) = rician_coefficients(factor)?;
            let scattered: Complex<T> = draw_cn(rng);
            Ok(Complex::new(mu, T::zero()) + scattered.scale(sigma))
        }
    }
}

/// Passes `x` through the channel: `y = h * x + n`.
///
/// Random draws happen in a fixed order (gain, then noise per symbol) and noise
/// is drawn even at infinite SNR, so the generator advances identically for
/// every SNR.
pub fn apply_channel<T: Scalar, R: Rng + ?Sized>(
    x: &ComplexSignal<T>,
    model: &ChannelModel<T>,
    snr_db: T,
    rng: &mut R,
) -> Result<(ComplexSignal<T>, ChannelRealization<T>), SignalError> {
    let gain = draw_gain(model, rng)?;
    let n0 = snr_db_to_noise_power(snr_db, T::one());
    let noise_sigma = (n0 / T::of(2.0)).sqrt();
    let symbols = x
        .symbols
        .iter()
        .map(|&s| {
            let re: T = standard_normal(rng);
            let im: T = standard_normal(rng);
            gain * s + Complex::new(re * noise_sigma, im * noise_sigma)
        })
        .collect();
    let realization = ChannelRealization {
        gains: vec![gain; x.len()],
        noise_sigma,
    };
    Ok((ComplexSignal { symbols }, realization))
}

/// Zero-forcing equalization with known channel state: `y_k / h_k`.
pub fn equalize<T: Scalar>(
    y: &ComplexSignal<T>,
    realization: &ChannelRealization<T>,
) -> Result<ComplexSignal<T>, SignalError> {
    if y.len() != realization.gains.len() {
        return Err(SignalError::LengthMismatch {
            signal: y.len(),
            realization: realization.gains.len(),
        });
    }
    let floor = T::of(MIN_INVERTIBLE_GAIN);
    let symbols = y
        .symbols
        .iter()
        .zip(&realization.gains)
        .enumerate()
        .map(|(index, (&s, &h))| {
            if h.norm() < floor {
                Err(SignalError::SingularGain { index })
            } else {
                Ok(s / h)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ComplexSignal { symbols })
}
