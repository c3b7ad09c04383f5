//! Communication phase: signed semantic transmissions swept over SNR and
//! pruning points.

use std::collections::BTreeMap;

use rand::Rng;
use semcom_core::auth::{
    calibrate_threshold, detection_probability, diff_metric_with, sample_indices, sign_bundle,
    tamper, verify_bundle, L1Mode, Magnitude, ReleaseMode, ReleaseTranscript, VerificationPolicy,
};
use semcom_core::codec::{
    bleu, decode_received, encode_sentence, evaluate, ChannelSpec, CrossEntropyMode,
};
use semcom_core::dp::{
    aggregate_variance_budget, apply_dp_noise, calibrate, compose, sensitivity_bound,
    sigma_to_budget, AccountingMode, ChannelHandling, DpError, NoiseProfile, PrivacyBudget,
};
use semcom_core::signal::{apply_channel, equalize, power_normalize, snr_db_to_noise_power};
use semcom_core::{ChannelModel, ComplexSignal};

use crate::config::{
    ChannelKind, DpMode, L1Setting, MagnitudeSetting, ReleaseSetting, ScenarioConfig,
    ThresholdSetting,
};
use crate::report::{conventional_bytes, semantic_bytes, Phase};
use crate::state::{stream, SimState};
use crate::SimError;

/// Per-coordinate std of the channel noise at `snr_db` for unit signal power.
pub fn channel_sigma(snr_db: f64) -> f64 {
    (snr_db_to_noise_power(snr_db, 1.0) / 2.0).sqrt()
}

/// Diffs of honest transmissions of `n` reals through `model` at `snr_db`.
pub fn honest_diffs<R: Rng + ?Sized>(
    model: &ChannelModel,
    snr_db: f64,
    n: usize,
    index_size: usize,
    l1: L1Mode,
    trials: usize,
    rng: &mut R,
) -> Result<Vec<f64>, SimError> {
    let symbols = n.div_ceil(2).max(1);
    (0..trials)
        .map(|_| {
            let raw: Vec<f64> = (0..2 * symbols)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let x = power_normalize(&ComplexSignal::from_interleaved(&raw)?)?;
            let (y, h) = apply_channel(&x, model, snr_db, rng)?;
            let got = equalize(&y, &h)?.to_interleaved();
            let sent = x.to_interleaved();
            let set = sample_indices(sent.len(), index_size.min(sent.len()), rng)?;
            Ok(diff_metric_with(
                &set.gather(&sent)?,
                &set.gather(&got)?,
                l1,
            )?)
        })
        .collect()
}

/// Noise plan for transmissions of `symbols` complex symbols.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpPlan {
    pub sigma_dp: f64,
    pub sensitivity: f64,
    /// Three-way composed epsilon at `sigma_dp` (NaN when a source has no finite budget).
    pub epsilon_composition: f64,
    /// Epsilon of the summed-variance mechanism at `sigma_dp`.
    pub epsilon_aggregate: f64,
}

fn noise_profile(config: &ScenarioConfig, snr_db: f64) -> Result<NoiseProfile, DpError> {
    let handling = match config.channel.model {
        ChannelKind::Awgn => ChannelHandling::AwgnExact,
        ChannelKind::Rayleigh | ChannelKind::Rician => ChannelHandling::FadingWorstCase {
            min_gain: config.dp.min_gain,
        },
    };
    NoiseProfile::new(config.dp.sigma_model, channel_sigma(snr_db), handling)
}

/// Composed epsilon of every present noise source, with the same delta split
/// as calibration.
pub fn composition_epsilon(
    profile: &NoiseProfile,
    sigma_dp: f64,
    sensitivity: f64,
    delta: f64,
) -> f64 {
    let sigmas: Vec<f64> = [
        profile.sigma_model,
        profile.effective_channel_sigma(),
        sigma_dp,
    ]
    .into_iter()
    .filter(|&s| s > 0.0)
    .collect();
    if sigmas.is_empty() {
        return f64::INFINITY;
    }
    let per = delta / (2 * sigmas.len()) as f64;
    let budgets: Result<Vec<(f64, f64)>, DpError> = sigmas
        .iter()
        .map(|&s| sigma_to_budget(s, sensitivity, per).map(|e| (e, per)))
        .collect();
    budgets
        .and_then(|b| compose(&b, delta / 2.0))
        .map_or(f64::NAN, |c| c.epsilon_hat)
}

pub fn dp_plan(config: &ScenarioConfig, snr_db: f64, symbols: usize) -> Result<DpPlan, DpError> {
    let dp = &config.dp;
    let target = PrivacyBudget::new(dp.epsilon, dp.delta)?;
    let sensitivity = dp.sensitivity.unwrap_or_else(|| sensitivity_bound(symbols));
    let profile = noise_profile(config, snr_db)?;
    let mode = match dp.mode {
        DpMode::Composition => AccountingMode::Composition,
        DpMode::Aggregate => AccountingMode::Aggregate,
    };
    let cal = calibrate(target, &profile, Some(sensitivity), symbols, mode)?;
    Ok(DpPlan {
        sigma_dp: cal.sigma_dp,
        sensitivity,
        epsilon_composition: composition_epsilon(&profile, cal.sigma_dp, sensitivity, dp.delta),
        epsilon_aggregate: aggregate_variance_budget(&profile, cal.sigma_dp, sensitivity, dp.delta)
            .unwrap_or(f64::INFINITY),
    })
}

#[derive(Debug, Default, Clone, Copy)]
struct Tally {
    sent: usize,
    bleu: f64,
    accepted: usize,
    tampered: usize,
    detected: usize,
    predicted: f64,
    max_symbols: usize,
    bytes_semantic: usize,
    bytes_conventional: usize,
    sigma_dp: f64,
    eps_comp: f64,
    eps_agg: f64,
    power_increase: f64,
    blocked: usize,
}

impl Tally {
    fn merge(&mut self, o: &Tally) {
        self.sent += o.sent;
        self.accepted += o.accepted;
        self.tampered += o.tampered;
        self.detected += o.detected;
        self.predicted += o.predicted;
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        f64::NAN
    } else {
        a as f64 / b as f64
    }
}

/// Verification threshold for one SNR of the sweep.
fn threshold(state: &SimState, snr_db: f64, n: usize) -> Result<f64, SimError> {
    let v = &state.config.verification;
    match v.threshold {
        ThresholdSetting::Fixed(t) => Ok(t),
        ThresholdSetting::Policy(_) => {
            let mut rng = stream(state.config.run.seed, &format!("calibrate/{snr_db}"));
            let diffs = honest_diffs(
                &state.channel_model(),
                snr_db,
                n,
                v.index_size,
                l1_mode(v.l1),
                v.calibration_trials,
                &mut rng,
            )?;
            Ok(calibrate_threshold(&diffs)?)
        }
    }
}

fn l1_mode(s: L1Setting) -> L1Mode {
    match s {
        L1Setting::Sum => L1Mode::Sum,
        L1Setting::Mean => L1Mode::Mean,
    }
}

/// Runs the sweep and appends its rows. Requires a prior successful sync.
pub fn run_communication_phase(state: &mut SimState) -> Result<(), SimError> {
    if !state.synced {
        return Err(SimError::NotSynced);
    }
    let cfg = state.config.clone();
    let seed = cfg.run.seed;
    let sentences = state.eval_sentences();
    let half = cfg.codec.channel_width / 2;
    let longest = sentences.iter().map(|s| s.len()).max().unwrap_or(1);
    let calib_reals = 2 * (longest + cfg.codec.kb_size) * half;
    let release = match cfg.verification.release {
        ReleaseSetting::Delayed => ReleaseMode::Delayed,
        ReleaseSetting::Encrypted => ReleaseMode::Encrypted,
    };
    let magnitude = match cfg.adversary.magnitude {
        MagnitudeSetting::Above => Magnitude::AboveThreshold,
        MagnitudeSetting::Below => Magnitude::BelowThreshold,
    };
    let model = state.channel_model();
    let mut overall = Tally::default();

    for &snr in &cfg.channel.snr_db {
        let tau = threshold(state, snr, calib_reals)?;
        let mut policy = VerificationPolicy::new(tau, release)?;
        policy.l1 = l1_mode(cfg.verification.l1);
        let row = state
            .rows
            .row(Phase::Communication, "auth_threshold", tau)
            .snr(snr);
        state.push(row);
        let mut plans: BTreeMap<usize, Result<DpPlan, DpError>> = BTreeMap::new();
        let mut at_snr = Tally::default();

        for d in 0..state.devices.len() {
            let dev = state.devices[d].clone();
            let id = dev.identity.id().to_owned();
            let params = dev.params.clone().ok_or(SimError::NotSynced)?;
            let key = *state
                .authority
                .directory()
                .get(&id)
                .expect("joined devices have issued keys");
            let max_rows = dev.profile.max_symbols / half;
            for &i in cfg
                .communication
                .kb_prefixes
                .iter()
                .filter(|&&i| i <= dev.profile.kb_use)
            {
                for &j in cfg
                    .communication
                    .feature_prefixes
                    .iter()
                    .filter(|&&j| j <= max_rows)
                {
                    let mut rng = stream(seed, &format!("tx/{snr}/{id}/{i}/{j}"));
                    let mut t = Tally::default();
                    for s in &sentences {
                        let rows = j.min(s.len() + i);
                        let enc = encode_sentence(s, &params, i, rows)?;
                        let clean = enc.signal.clone().expect("at least one row is sent");
                        let k = clean.len();
                        if k > dev.profile.max_symbols || enc.kb_prefix.len() > dev.profile.kb_use {
                            return Err(SimError::Capability {
                                device: id.clone(),
                                symbols: k,
                                kb: enc.kb_prefix.len(),
                            });
                        }

                        let mut x = apply_dp_noise(&clean, cfg.dp.sigma_model, &mut rng);
                        if cfg.dp.enabled {
                            let plan = plans.entry(k).or_insert_with(|| dp_plan(&cfg, snr, k));
                            match plan {
                                Ok(p) => {
                                    x = apply_dp_noise(&x, p.sigma_dp, &mut rng);
                                    t.sigma_dp += p.sigma_dp;
                                    t.eps_comp += p.epsilon_composition;
                                    t.eps_agg += p.epsilon_aggregate;
                                }
                                Err(_) => {
                                    t.blocked += 1;
                                    continue;
                                }
                            }
                        }
                        t.power_increase += x.mean_power() - 1.0;

                        let payload = x.to_interleaved();
                        let n = payload.len();
                        let index_size = cfg.verification.index_size.min(n);
                        let set = sample_indices(n, index_size, &mut rng)?;
                        let bundle = sign_bundle(&payload, &set, dev.identity.signing_key(), &id)?;
                        let mut transcript = ReleaseTranscript::default();
                        transcript.send_payload();
                        let (y, h) = apply_channel(&x, &model, snr, &mut rng)?;
                        let x_hat = equalize(&y, &h)?;
                        transcript.acknowledge();
                        transcript.release(release)?;
                        let received = x_hat.to_interleaved();
                        if verify_bundle(&received, &bundle, &key, &policy)?.accepted {
                            t.accepted += 1;
                        }
                        if cfg.adversary.enabled {
                            let modified = cfg.adversary.modified.min(n);
                            let forged = tamper(&received, modified, magnitude, tau, &mut rng)?;
                            if !verify_bundle(&forged.payload, &bundle, &key, &policy)?.accepted {
                                t.detected += 1;
                            }
                            t.tampered += 1;
                            t.predicted += detection_probability(n, modified, index_size)?;
                        }

                        let (_, out) = decode_received(
                            Some(&x_hat),
                            enc.sent_rows,
                            enc.token_count,
                            &enc.kb_prefix,
                            &params,
                        )?;
                        t.bleu += bleu(&out.sentence, s, cfg.codec.bleu_order)?;
                        t.sent += 1;
                        t.max_symbols = t.max_symbols.max(k);
                        t.bytes_semantic += semantic_bytes(k, bundle.wire_len());
                        t.bytes_conventional += conventional_bytes(state.vocab.decode(s).len());
                    }
                    push_point(state, &id, snr, i, j, &t, dev.profile.max_symbols);
                    at_snr.merge(&t);
                }
            }
        }
        push_summary(state, Some(snr), &at_snr);
        overall.merge(&at_snr);
    }
    push_summary(state, None, &overall);
    state.log(
        Phase::Communication,
        None,
        format!("{} transmissions", overall.sent),
    );
    Ok(())
}

fn push_point(
    state: &mut SimState,
    id: &str,
    snr: f64,
    i: usize,
    j: usize,
    t: &Tally,
    limit: usize,
) {
    let r = &state.rows;
    let at = |metric: &str, value: f64| {
        r.row(Phase::Communication, metric, value)
            .device(id)
            .point(snr, i, j)
    };
    let mut rows = Vec::new();
    if t.sent > 0 {
        let n = t.sent as f64;
        rows.push(at("bleu", t.bleu / n).samples(t.sent));
        rows.push(at("auth_accept_rate", ratio(t.accepted, t.sent)).samples(t.sent));
        rows.push(at("symbols_used", t.max_symbols as f64).detail(format!("limit {limit}")));
        rows.push(at("bytes_semantic", t.bytes_semantic as f64).samples(t.sent));
        rows.push(at("bytes_conventional", t.bytes_conventional as f64).samples(t.sent));
        rows.push(at("power_increase", t.power_increase / n).samples(t.sent));
        if state.config.adversary.enabled {
            rows.push(
                at("detection_rate", ratio(t.detected, t.tampered))
                    .samples(t.tampered)
                    .predicted(t.predicted / t.tampered as f64),
            );
        }
        if state.config.dp.enabled {
            rows.push(at("dp_sigma", t.sigma_dp / n).samples(t.sent));
            rows.push(at("epsilon_composition", t.eps_comp / n).samples(t.sent));
            rows.push(at("epsilon_aggregate", t.eps_agg / n).samples(t.sent));
        }
    }
    if t.blocked > 0 {
        rows.push(at("dp_unachievable", t.blocked as f64).detail("transmissions withheld"));
    }
    rows.into_iter().for_each(|row| state.push(row));
}

fn push_summary(state: &mut SimState, snr: Option<f64>, t: &Tally) {
    let r = &state.rows;
    let at = |metric: &str, value: f64| {
        let row = r.row(Phase::Communication, metric, value).detail("summary");
        match snr {
            Some(s) => row.snr(s),
            None => row,
        }
    };
    let mut rows = vec![at("auth_accept_rate", ratio(t.accepted, t.sent)).samples(t.sent)];
    if state.config.adversary.enabled {
        rows.push(
            at("detection_rate", ratio(t.detected, t.tampered))
                .samples(t.tampered)
                .predicted(t.predicted / t.tampered.max(1) as f64),
        );
    }
    rows.into_iter().for_each(|row| state.push(row));
}

/// One point of a codec-only BLEU sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub snr_db: f64,
    pub kb_prefix: usize,
    pub feature_prefix: usize,
    pub bleu: f64,
    pub samples: usize,
}

/// BLEU of the synchronized model at every configured SNR and pruning point,
/// without authentication or DP noise.
pub fn bleu_sweep(state: &SimState) -> Result<Vec<SweepPoint>, SimError> {
    if !state.synced {
        return Err(SimError::NotSynced);
    }
    let cfg = &state.config;
    let sentences = state.eval_sentences();
    let mut out = Vec::new();
    for &snr in &cfg.channel.snr_db {
        let spec = ChannelSpec {
            model: state.channel_model(),
            snr_db: snr,
        };
        for &i in &cfg.communication.kb_prefixes {
            for &j in &cfg.communication.feature_prefixes {
                let mut rng = stream(cfg.run.seed, &format!("sweep/{snr}/{i}/{j}"));
                let e = evaluate(
                    &state.global,
                    &sentences,
                    i,
                    j,
                    &spec,
                    cfg.codec.bleu_order,
                    CrossEntropyMode::default(),
                    &mut rng,
                )?;
                out.push(SweepPoint {
                    snr_db: snr,
                    kb_prefix: i,
                    feature_prefix: j,
                    bleu: e.mean_bleu,
                    samples: sentences.len(),
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_sigma_matches_snr() {
        assert_eq!(channel_sigma(f64::INFINITY), 0.0);
        assert!((channel_sigma(0.0) - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((channel_sigma(10.0) - 0.05f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn composition_epsilon_single_source_is_its_budget() {
        let p = NoiseProfile::noiseless();
        let direct = sigma_to_budget(3.0, 2.0, 1e-5 / 2.0).unwrap();
        assert!((composition_epsilon(&p, 3.0, 2.0, 1e-5) - direct).abs() < 1e-12);
        assert!(composition_epsilon(&p, 0.0, 2.0, 1e-5).is_infinite());
    }

    #[test]
    fn aggregate_plan_meets_target() {
        let mut c = ScenarioConfig::default();
        c.dp.enabled = true;
        let plan = dp_plan(&c, 12.0, 16).unwrap();
        assert_eq!(plan.sensitivity, 8.0);
        assert!(plan.epsilon_aggregate <= 1.0 + 1e-9);
        assert!(plan.sigma_dp > 0.0);
    }

    #[test]
    fn honest_diffs_vanish_without_noise() {
        let mut rng = stream(1, "t");
        let d = honest_diffs(
            &ChannelModel::Rayleigh,
            f64::INFINITY,
            32,
            8,
            L1Mode::Sum,
            20,
            &mut rng,
        )
        .unwrap();
        assert!(d.iter().all(|&v| v < 1e-9), "{d:?}");
        let d = honest_diffs(&ChannelModel::Awgn, 0.0, 32, 8, L1Mode::Sum, 20, &mut rng).unwrap();
        assert!(d.iter().all(|&v| v > 0.0));
    }
}
