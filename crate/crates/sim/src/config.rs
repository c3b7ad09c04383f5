//! Scenario configuration.
//!
//! A scenario is a TOML document with one table per module plus a
//! `[[devices]]` array; a `.json` file with the same shape is accepted too.
//! Every key is optional and unknown keys are rejected. Defaults:
//!
//! | key | default |
//! |-----|---------|
//! | `run.seed` | 7 |
//! | `run.eval_sentences` | 20 |
//! | `codec.width` / `kb_size` / `channel_width` | 128 / 8 / 16 |
//! | `codec.bleu_order` | 1 |
//! | `channel.model` | `"awgn"` (`"rayleigh"`, `"rician"`) |
//! | `channel.rician_factor` | 2.0 |
//! | `channel.snr_db` | `[0, 6, 12, 18, inf]` |
//! | `training.whole_epochs` | 100 (other step kinds 0) |
//! | `training.kb_round_epochs` | 20 |
//! | `training.batch_size` / `learning_rate` | 10 / 0.01 |
//! | `training.snr_db` | `inf` |
//! | `federation.rounds` | `["full", "knowledge"]` |
//! | `federation.sharding` | `"replicated"` (`"disjoint"`) |
//! | `federation.participants` | every device that is not `late` |
//! | `ledger.validators` | 4 |
//! | `ledger.offline` | `[]` |
//! | `ledger.channel` | `"task-0"` |
//! | `communication.kb_prefixes` | `[8, 6, 4, 2]` |
//! | `communication.feature_prefixes` | `[16, 12, 8, 4]` |
//! | `verification.index_size` | 16 |
//! | `verification.threshold` | `"calibrated"` or a positive number |
//! | `verification.calibration_trials` | 2000 |
//! | `verification.l1` | `"sum"` (`"mean"`) |
//! | `verification.release` | `"delayed"` (`"encrypted"`) |
//! | `adversary.enabled` / `modified` / `magnitude` | false / 4 / `"above"` |
//! | `dp.enabled` | false |
//! | `dp.epsilon` / `delta` | 1.0 / 1e-5 |
//! | `dp.mode` | `"aggregate"` (`"composition"`) |
//! | `dp.sigma_model` | 0.0 |
//! | `dp.sensitivity` | unset: `2 sqrt(K)` per transmission |
//! | `dp.min_gain` | 0.1, used for fading channels |
//! | `output.csv` / `json` | `out/report.csv` / `out/report.json` |
//! | `devices` | three semantic devices `dev-0..dev-2` |
//!
//! Device fields: `id` (required), `max_symbols` (128), `kb_use` (8),
//! `compute` (`"mid"`), `transport` (`"semantic"`), `late` (false).

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use semcom_core::codec::{CodecDims, Vocabulary, MIN_KB_PREFIX};
use semcom_core::dp::PrivacyBudget;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Where a configuration problem was found.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    /// One-based line in the source, when known.
    pub line: Option<usize>,
    /// Dotted key path, when known.
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.line, &self.key) {
            (Some(l), Some(k)) => write!(f, "line {l}, key `{k}`: {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            (None, Some(k)) => write!(f, "key `{k}`: {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Parse(#[from] ParseError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    /// Sentences of the toy corpus transmitted at every sweep point.
    pub eval_sentences: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 7,
            eval_sentences: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodecSection {
    pub width: usize,
    pub kb_size: usize,
    pub channel_width: usize,
    pub bleu_order: usize,
}

impl Default for CodecSection {
    fn default() -> Self {
        Self {
            width: 128,
            kb_size: 8,
            channel_width: 16,
            bleu_order: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Awgn,
    Rayleigh,
    Rician,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub model: ChannelKind,
    pub rician_factor: f64,
    pub snr_db: Vec<f64>,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            model: ChannelKind::Awgn,
            rician_factor: semcom_core::signal::DEFAULT_RICIAN_FACTOR,
            snr_db: vec![0.0, 6.0, 12.0, 18.0, f64::INFINITY],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub semantic_epochs: usize,
    pub channel_epochs: usize,
    pub knowledge_epochs: usize,
    pub whole_epochs: usize,
    /// Knowledge-base epochs of a knowledge-only round.
    pub kb_round_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub snr_db: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            semantic_epochs: 0,
            channel_epochs: 0,
            knowledge_epochs: 0,
            whole_epochs: 100,
            kb_round_epochs: 20,
            batch_size: 10,
            learning_rate: 1e-2,
            snr_db: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoundKind {
    /// Whole models are trained, uploaded and averaged.
    Full,
    /// Only knowledge bases are trained and exchanged.
    Knowledge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sharding {
    /// Every device holds the whole corpus.
    Replicated,
    /// Sentence `k` belongs to participant `k mod n`.
    Disjoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FederationSection {
    pub rounds: Vec<RoundKind>,
    pub sharding: Sharding,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub participants: Option<Vec<String>>,
}

impl Default for FederationSection {
    fn default() -> Self {
        Self {
            rounds: vec![RoundKind::Full, RoundKind::Knowledge],
            sharding: Sharding::Replicated,
            participants: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LedgerSection {
    pub validators: usize,
    /// Indices of validators that never endorse.
    pub offline: Vec<usize>,
    pub channel: String,
}

impl Default for LedgerSection {
    fn default() -> Self {
        Self {
            validators: 4,
            offline: Vec::new(),
            channel: "task-0".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommunicationSection {
    pub kb_prefixes: Vec<usize>,
    /// Feature rows sent, before capping at `L + i`.
    pub feature_prefixes: Vec<usize>,
}

impl Default for CommunicationSection {
    fn default() -> Self {
        Self {
            kb_prefixes: vec![8, 6, 4, 2],
            feature_prefixes: vec![16, 12, 8, 4],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdPolicy {
    /// `mean + 3 std` of simulated honest diffs at each SNR.
    Calibrated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThresholdSetting {
    Fixed(f64),
    Policy(ThresholdPolicy),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum L1Setting {
    Sum,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReleaseSetting {
    Delayed,
    Encrypted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerificationSection {
    pub index_size: usize,
    pub threshold: ThresholdSetting,
    pub calibration_trials: usize,
    pub l1: L1Setting,
    pub release: ReleaseSetting,
}

impl Default for VerificationSection {
    fn default() -> Self {
        Self {
            index_size: 16,
            threshold: ThresholdSetting::Policy(ThresholdPolicy::Calibrated),
            calibration_trials: 2000,
            l1: L1Setting::Sum,
            release: ReleaseSetting::Delayed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MagnitudeSetting {
    Above,
    Below,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdversarySection {
    pub enabled: bool,
    /// Payload coordinates modified per transmission.
    pub modified: usize,
    pub magnitude: MagnitudeSetting,
}

impl Default for AdversarySection {
    fn default() -> Self {
        Self {
            enabled: false,
            modified: 4,
            magnitude: MagnitudeSetting::Above,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DpMode {
    Composition,
    Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpSection {
    pub enabled: bool,
    pub epsilon: f64,
    pub delta: f64,
    pub mode: DpMode,
    /// Std of the codec's own output noise, added to every transmission.
    pub sigma_model: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<f64>,
    /// Design-time worst-case fading gain for accounting.
    pub min_gain: f64,
}

impl Default for DpSection {
    fn default() -> Self {
        Self {
            enabled: false,
            epsilon: 1.0,
            delta: 1e-5,
            mode: DpMode::Aggregate,
            sigma_model: 0.0,
            sensitivity: None,
            min_gain: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub csv: PathBuf,
    pub json: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            csv: "out/report.csv".into(),
            json: "out/report.json".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComputeClass {
    Low,
    Mid,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    Conventional,
    Semantic,
}

/// Capabilities of one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceProfile {
    pub id: String,
    /// Most complex symbols the device sends in one transmission.
    #[serde(default = "default_max_symbols")]
    pub max_symbols: usize,
    /// Most knowledge vectors the device uses.
    #[serde(default = "default_kb_use")]
    pub kb_use: usize,
    #[serde(default = "default_compute")]
    pub compute: ComputeClass,
    /// Transport used for model and knowledge-base uploads.
    #[serde(default = "default_transport")]
    pub transport: Transport,
    /// Joins at synchronization, after the update rounds.
    #[serde(default)]
    pub late: bool,
}

fn default_max_symbols() -> usize {
    128
}

fn default_kb_use() -> usize {
    8
}

fn default_compute() -> ComputeClass {
    ComputeClass::Mid
}

fn default_transport() -> Transport {
    Transport::Semantic
}

impl DeviceProfile {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            max_symbols: default_max_symbols(),
            kb_use: default_kb_use(),
            compute: default_compute(),
            transport: default_transport(),
            late: false,
        }
    }
}

fn default_devices() -> Vec<DeviceProfile> {
    (0..3)
        .map(|k| DeviceProfile::new(format!("dev-{k}")))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub codec: CodecSection,
    #[serde(default)]
    pub channel: ChannelSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub federation: FederationSection,
    #[serde(default)]
    pub ledger: LedgerSection,
    #[serde(default)]
    pub communication: CommunicationSection,
    #[serde(default)]
    pub verification: VerificationSection,
    #[serde(default)]
    pub adversary: AdversarySection,
    #[serde(default)]
    pub dp: DpSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default = "default_devices")]
    pub devices: Vec<DeviceProfile>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            run: RunSection::default(),
            codec: CodecSection::default(),
            channel: ChannelSection::default(),
            training: TrainingSection::default(),
            federation: FederationSection::default(),
            ledger: LedgerSection::default(),
            communication: CommunicationSection::default(),
            verification: VerificationSection::default(),
            adversary: AdversarySection::default(),
            dp: DpSection::default(),
            output: OutputSection::default(),
            devices: default_devices(),
        }
    }
}

/// Prefix given to generated validator identities.
pub const VALIDATOR_PREFIX: &str = "validator-";

impl ScenarioConfig {
    /// Parses and validates a TOML document.
    pub fn from_toml(source: &str) -> Result<Self, ParseError> {
        let config: Self = toml::from_str(source).map_err(|e| {
            let line = e.span().map(|s| line_of(source, s.start));
            parse_error(line, e.message())
        })?;
        config.validate().map_err(|e| e.locate(source))?;
        Ok(config)
    }

    /// Parses and validates a JSON document of the same shape.
    pub fn from_json(source: &str) -> Result<Self, ParseError> {
        let config: Self = serde_json::from_str(source).map_err(|e| {
            let line = (e.line() > 0).then_some(e.line());
            parse_error(line, &e.to_string())
        })?;
        config.validate().map_err(|e| e.locate_json(source))?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable")
    }

    /// First 16 hex digits of the SHA-256 of the normalized TOML form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn codec_dims(&self) -> CodecDims {
        CodecDims {
            vocab: Vocabulary::toy().len(),
            width: self.codec.width,
            kb_size: self.codec.kb_size,
            channel_width: self.codec.channel_width,
        }
    }

    /// Devices taking part in the update rounds.
    pub fn participants(&self) -> Vec<&DeviceProfile> {
        match &self.federation.participants {
            Some(ids) => self
                .devices
                .iter()
                .filter(|d| ids.contains(&d.id))
                .collect(),
            None => self.devices.iter().filter(|d| !d.late).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), ParseError> {
        let fail = |key: &str, message: String| Err(invalid(key, message));

        if self.run.eval_sentences == 0 {
            return fail("run.eval_sentences", "must be at least 1".into());
        }
        let dims = self.codec_dims();
        if let Err(e) = dims.validate() {
            return fail("codec", e.to_string());
        }
        if !self.codec.channel_width.is_multiple_of(2) {
            return fail(
                "codec.channel_width",
                "must be even (pairs of reals form symbols)".into(),
            );
        }
        if self.codec.bleu_order == 0 {
            return fail("codec.bleu_order", "must be at least 1".into());
        }
        if self.channel.snr_db.is_empty() {
            return fail("channel.snr_db", "needs at least one value".into());
        }
        if self
            .channel
            .snr_db
            .iter()
            .any(|s| s.is_nan() || *s == f64::NEG_INFINITY)
        {
            return fail("channel.snr_db", "values must be numbers or inf".into());
        }
        if !(self.channel.rician_factor.is_finite() && self.channel.rician_factor >= 0.0) {
            return fail(
                "channel.rician_factor",
                "must be finite and non-negative".into(),
            );
        }

        let t = &self.training;
        if t.batch_size == 0 {
            return fail("training.batch_size", "must be at least 1".into());
        }
        if !(t.learning_rate.is_finite() && t.learning_rate >= 0.0) {
            return fail(
                "training.learning_rate",
                "must be finite and non-negative".into(),
            );
        }
        if t.snr_db.is_nan() || t.snr_db == f64::NEG_INFINITY {
            return fail("training.snr_db", "must be a number or inf".into());
        }

        if self.ledger.validators == 0 {
            return fail("ledger.validators", "must be at least 1".into());
        }
        if let Some(&k) = self
            .ledger
            .offline
            .iter()
            .find(|&&k| k >= self.ledger.validators)
        {
            return fail("ledger.offline", format!("validator {k} does not exist"));
        }
        if self.ledger.channel.is_empty() {
            return fail("ledger.channel", "must not be empty".into());
        }

        let p = self.codec.kb_size;
        if let Some(&i) = self
            .communication
            .kb_prefixes
            .iter()
            .find(|&&i| i < MIN_KB_PREFIX || i > p)
        {
            return fail(
                "communication.kb_prefixes",
                format!("{i} is outside [{MIN_KB_PREFIX}, {p}]"),
            );
        }
        if self.communication.feature_prefixes.contains(&0) {
            return fail(
                "communication.feature_prefixes",
                "values must be at least 1".into(),
            );
        }

        let v = &self.verification;
        if v.index_size == 0 {
            return fail("verification.index_size", "must be at least 1".into());
        }
        if v.calibration_trials < 2 {
            return fail(
                "verification.calibration_trials",
                "must be at least 2".into(),
            );
        }
        if let ThresholdSetting::Fixed(x) = v.threshold {
            if !(x.is_finite() && x > 0.0) {
                return fail(
                    "verification.threshold",
                    "must be positive or \"calibrated\"".into(),
                );
            }
        }
        if self.adversary.modified == 0 {
            return fail("adversary.modified", "must be at least 1".into());
        }

        let dp = &self.dp;
        if let Err(e) = PrivacyBudget::new(dp.epsilon, dp.delta) {
            return fail("dp", e.to_string());
        }
        if !(dp.sigma_model.is_finite() && dp.sigma_model >= 0.0) {
            return fail("dp.sigma_model", "must be finite and non-negative".into());
        }
        if let Some(s) = dp.sensitivity {
            if !(s.is_finite() && s > 0.0) {
                return fail("dp.sensitivity", "must be finite and positive".into());
            }
        }
        if !(dp.min_gain.is_finite() && dp.min_gain > 0.0) {
            return fail("dp.min_gain", "must be finite and positive".into());
        }

        let mut ids = BTreeSet::new();
        for (k, d) in self.devices.iter().enumerate() {
            if d.id.is_empty() || d.id.starts_with(VALIDATOR_PREFIX) {
                return fail(
                    &format!("devices[{k}].id"),
                    format!("`{}` is not a usable device id", d.id),
                );
            }
            if !ids.insert(d.id.as_str()) {
                return fail(
                    &format!("devices[{k}].id"),
                    format!("duplicate id `{}`", d.id),
                );
            }
            if d.max_symbols == 0 {
                return fail(
                    &format!("devices[{k}].max_symbols"),
                    "must be at least 1".into(),
                );
            }
            if d.kb_use < MIN_KB_PREFIX || d.kb_use > p {
                return fail(
                    &format!("devices[{k}].kb_use"),
                    format!("{} is outside [{MIN_KB_PREFIX}, {p}]", d.kb_use),
                );
            }
        }
        if let Some(list) = &self.federation.participants {
            for id in list {
                match self.devices.iter().find(|d| &d.id == id) {
                    None => {
                        return fail("federation.participants", format!("unknown device `{id}`"))
                    }
                    Some(d) if d.late => {
                        return fail("federation.participants", format!("`{id}` joins late"));
                    }
                    Some(_) => {}
                }
            }
        }
        Ok(())
    }
}

/// Reads a scenario, choosing the format from the file extension.
pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let source = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_owned(),
        source,
    })?;
    let json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let parsed = if json {
        ScenarioConfig::from_json(&source)
    } else {
        ScenarioConfig::from_toml(&source)
    };
    Ok(parsed?)
}

fn invalid(key: &str, message: String) -> ParseError {
    ParseError {
        line: None,
        key: Some(key.to_owned()),
        message,
    }
}

fn parse_error(line: Option<usize>, message: &str) -> ParseError {
    ParseError {
        line,
        key: backticked(message),
        message: message.trim().to_owned(),
    }
}

/// The name inside the first pair of backticks, as serde quotes field names.
fn backticked(message: &str) -> Option<String> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(message[start..start + len].to_owned())
}

fn line_of(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

/// Last path component with any `[k]` index removed.
fn leaf(key: &str) -> &str {
    let last = key.rsplit('.').next().unwrap_or(key);
    last.split('[').next().unwrap_or(last)
}

impl ParseError {
    fn locate(mut self, source: &str) -> Self {
        if let Some(key) = &self.key {
            let name = leaf(key);
            self.line = source.lines().position(|l| {
                l.trim_start()
                    .strip_prefix(name)
                    .is_some_and(|rest| rest.trim_start().starts_with('='))
            });
            self.line = self.line.map(|l| l + 1);
        }
        self
    }

    fn locate_json(mut self, source: &str) -> Self {
        if let Some(key) = &self.key {
            let quoted = format!("\"{}\"", leaf(key));
            self.line = source
                .lines()
                .position(|l| l.contains(&quoted))
                .map(|l| l + 1);
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_takes_defaults() {
        let c = ScenarioConfig::from_toml("").unwrap();
        assert_eq!(c, ScenarioConfig::default());
        assert_eq!(c.devices.len(), 3);
        assert_eq!(c.codec.kb_size, 8);
        assert!(c.channel.snr_db.last().unwrap().is_infinite());
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let c =
            ScenarioConfig::from_toml("[run]\nseed = 99\n[[devices]]\nid = \"a\"\nkb_use = 4\n")
                .unwrap();
        assert_eq!(c.run.seed, 99);
        assert_eq!(c.run.eval_sentences, 20);
        assert_eq!(
            c.devices,
            vec![DeviceProfile {
                kb_use: 4,
                ..DeviceProfile::new("a")
            }]
        );
    }

    #[test]
    fn unknown_key_reports_line_and_key() {
        let src = "[run]\nseed = 1\n\n[codec]\nwidht = 4\n";
        let e = ScenarioConfig::from_toml(src).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("widht"));
        assert_eq!(e.line, Some(5));

        let e = ScenarioConfig::from_toml("colour = 1\n").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("colour"));
    }

    #[test]
    fn semantic_errors_name_the_key() {
        let src = "[[devices]]\nid = \"a\"\n\n[[devices]]\nid = \"b\"\nkb_use = 1\n";
        let e = ScenarioConfig::from_toml(src).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("devices[1].kb_use"));
        assert_eq!(e.line, Some(6));

        for bad in [
            "[[devices]]\nid = \"a\"\n[[devices]]\nid = \"a\"\n",
            "[ledger]\noffline = [4]\n",
            "[dp]\ndelta = 1.5\n",
            "[verification]\nthreshold = -1.0\n",
            "[communication]\nkb_prefixes = [9]\n",
            "[codec]\nchannel_width = 3\n",
            "[federation]\nparticipants = [\"nobody\"]\n",
            "[[devices]]\nid = \"validator-0\"\n",
        ] {
            assert!(ScenarioConfig::from_toml(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn threshold_accepts_number_or_policy() {
        let c = ScenarioConfig::from_toml("[verification]\nthreshold = 0.25\n").unwrap();
        assert_eq!(c.verification.threshold, ThresholdSetting::Fixed(0.25));
        let c = ScenarioConfig::from_toml("[verification]\nthreshold = \"calibrated\"\n").unwrap();
        assert_eq!(
            c.verification.threshold,
            ThresholdSetting::Policy(ThresholdPolicy::Calibrated)
        );
        assert!(ScenarioConfig::from_toml("[verification]\nthreshold = \"loose\"\n").is_err());
    }

    #[test]
    fn toml_round_trip_is_stable() {
        let mut c = ScenarioConfig::default();
        c.dp.sensitivity = Some(3.0);
        c.federation.participants = Some(vec!["dev-1".into()]);
        c.devices[2].late = true;
        c.devices[0].transport = Transport::Conventional;
        c.verification.threshold = ThresholdSetting::Fixed(0.5);
        let text = c.to_toml();
        let back = ScenarioConfig::from_toml(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_toml(), text);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn json_is_an_alternative_syntax() {
        let c =
            ScenarioConfig::from_json(r#"{"run": {"seed": 3}, "channel": {"snr_db": [0, 10]}}"#)
                .unwrap();
        assert_eq!(c.run.seed, 3);
        assert_eq!(c.channel.snr_db, vec![0.0, 10.0]);
        let toml_twin =
            ScenarioConfig::from_toml("[run]\nseed = 3\n[channel]\nsnr_db = [0.0, 10.0]\n")
                .unwrap();
        assert_eq!(c.hash(), toml_twin.hash());

        let e = ScenarioConfig::from_json("{\n  \"run\": {\n    \"sede\": 3\n  }\n}").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("sede"));
        assert_eq!(e.line, Some(3));
    }

    #[test]
    fn hash_tracks_content() {
        let a = ScenarioConfig::default();
        let mut b = a.clone();
        b.run.seed += 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn participants_default_excludes_late_joiners() {
        let mut c = ScenarioConfig::default();
        c.devices[1].late = true;
        let ids: Vec<&str> = c.participants().iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, ["dev-0", "dev-2"]);
        c.federation.participants = Some(vec![]);
        assert!(c.participants().is_empty());
    }
}
