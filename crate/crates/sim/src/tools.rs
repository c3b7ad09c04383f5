//! Stand-alone computations behind the `detect-curve` and `dp-calibrate`
//! subcommands, plus table formatting for the CLI.

use std::fmt::Write;
use std::ops::RangeInclusive;

use semcom_core::auth::{
    detection_probability, simulate_adversary, AdversaryConfig, AuthError, IndexExposure,
    Magnitude, ReleaseMode, VerificationPolicy,
};
use semcom_core::dp::{
    calibrate, AccountingMode, Calibration, ChannelHandling, DpError, NoiseProfile, PrivacyBudget,
};

use crate::phases::SweepPoint;
use crate::state::stream;

/// Threshold for noiseless detection experiments; any positive value works
/// because above-threshold tampering moves each touched value by twice it.
const CURVE_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub index_size: usize,
    pub analytic: f64,
    pub empirical: f64,
    pub trials: usize,
}

/// Analytic and Monte-Carlo detection probability for each index-set size.
pub fn detect_curve(
    n: usize,
    modified: usize,
    sizes: RangeInclusive<usize>,
    trials: usize,
    seed: u64,
) -> Result<Vec<CurvePoint>, AuthError> {
    let policy = VerificationPolicy::new(CURVE_THRESHOLD, ReleaseMode::Delayed)?;
    sizes
        .map(|index_size| {
            let config = AdversaryConfig {
                n,
                modified,
                index_size,
                magnitude: Magnitude::AboveThreshold,
                policy,
                noise_sigma: 0.0,
                exposure: IndexExposure::AfterAck,
            };
            let mut rng = stream(seed, &format!("detect/{n}/{modified}/{index_size}"));
            let out = simulate_adversary(&config, trials, &mut rng)?;
            Ok(CurvePoint {
                index_size,
                analytic: detection_probability(n, modified, index_size)?,
                empirical: out.rate(),
                trials,
            })
        })
        .collect()
}

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut s = String::from("index_size,analytic,empirical,abs_error,trials\n");
    for p in points {
        let err = (p.analytic - p.empirical).abs();
        writeln!(
            s,
            "{},{:.6},{:.6},{:.6},{}",
            p.index_size, p.analytic, p.empirical, err, p.trials
        )
        .unwrap();
    }
    s
}

/// Inputs of a one-off calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationRequest {
    pub epsilon: f64,
    pub delta: f64,
    pub sigma_model: f64,
    pub sigma_channel: f64,
    /// Weakest fading gain; `None` treats the channel as AWGN.
    pub min_gain: Option<f64>,
    pub sensitivity: Option<f64>,
    pub symbols: usize,
    pub mode: AccountingMode,
}

pub fn run_calibration(req: &CalibrationRequest) -> Result<Calibration, DpError> {
    let handling = match req.min_gain {
        Some(min_gain) => ChannelHandling::FadingWorstCase { min_gain },
        None => ChannelHandling::AwgnExact,
    };
    let profile = NoiseProfile::new(req.sigma_model, req.sigma_channel, handling)?;
    let target = PrivacyBudget::new(req.epsilon, req.delta)?;
    calibrate(target, &profile, req.sensitivity, req.symbols, req.mode)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.9}")).unwrap_or_default()
}

pub fn calibration_csv(c: &Calibration) -> String {
    let mode = match c.mode {
        AccountingMode::Composition => "composition",
        AccountingMode::Aggregate => "aggregate",
    };
    format!(
        "mode,sensitivity,epsilon_model,epsilon_channel,sigma_dp,epsilon_dp,epsilon_hat,delta_total\n\
         {mode},{:.9},{},{},{:.9},{},{:.9},{:.6e}\n",
        c.sensitivity,
        opt(c.epsilon_model),
        opt(c.epsilon_channel),
        c.sigma_dp,
        opt(c.epsilon_dp),
        c.epsilon_hat,
        c.delta_total,
    )
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut s = String::from("snr_db,kb_prefix,feature_prefix,bleu,samples\n");
    for p in points {
        writeln!(
            s,
            "{},{},{},{:.6},{}",
            p.snr_db, p.kb_prefix, p.feature_prefix, p.bleu, p.samples
        )
        .unwrap();
    }
    s
}
