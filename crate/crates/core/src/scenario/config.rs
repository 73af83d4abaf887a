//! Scenario configuration: a TOML document with the sections
//! `[environment]`, `[traffic]`, `[mac]`, `[lre]` and `[run]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::GeParams;
use crate::engine::Micros;
use crate::lre::{DaMode, RxPolicy, SelectionRule};
use crate::mac::MacTimings;
use crate::traffic::{ArrivalLaw, InterfererProfile, SourceProfile};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid override `{0}`: expected section.key=value")]
    OverrideSyntax(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Uplink,
    Downlink,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    Benign,
    Hostile,
}

/// Redundancy scheme of the monitored link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Plain single-channel DCF.
    Dcf,
    Basic,
    RdaQ,
    RdaR,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Dcf, Scheme::Basic, Scheme::RdaQ, Scheme::RdaR];

    pub fn channels(self) -> usize {
        match self {
            Scheme::Dcf => 1,
            _ => 2,
        }
    }

    pub fn da_mode(self) -> DaMode {
        match self {
            Scheme::Dcf | Scheme::Basic => DaMode::Basic,
            Scheme::RdaQ => DaMode::RdaQ,
            Scheme::RdaR => DaMode::RdaR,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Dcf => "dcf",
            Scheme::Basic => "basic",
            Scheme::RdaQ => "rda-q",
            Scheme::RdaR => "rda-r",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown scheme `{s}` (dcf, basic, rda-q, rda-r)"))
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnvKind::Benign => "benign",
            EnvKind::Hostile => "hostile",
        })
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Uplink => "uplink",
            Direction::Downlink => "downlink",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvironmentConfig {
    pub kind: EnvKind,
    /// Interferers per channel; defaults to 2 (benign) or 4 (hostile).
    pub interferers: Option<u32>,
    /// Disables the disturbance process entirely.
    pub jammer: bool,
    pub p_gb: Option<f64>,
    pub p_bg: Option<f64>,
    pub p_g: Option<f64>,
    pub p_b: Option<f64>,
    pub bits_per_step: u32,
    pub burst_frames: u32,
    pub burst_period: Micros,
    pub burst_gap: Micros,
    pub interferer_payload: u32,
    pub interferer_airtime: Micros,
    pub interferer_queue: usize,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        let p = InterfererProfile::default();
        Self {
            kind: EnvKind::Benign,
            interferers: None,
            jammer: true,
            p_gb: None,
            p_bg: None,
            p_g: None,
            p_b: None,
            bits_per_step: 54,
            burst_frames: p.frames_per_burst,
            burst_period: p.intra_burst_period,
            burst_gap: p.mean_gap,
            interferer_payload: p.payload,
            interferer_airtime: 254,
            interferer_queue: p.queue_capacity,
        }
    }
}

impl EnvironmentConfig {
    pub fn ge_params(&self) -> GeParams {
        if !self.jammer {
            return GeParams::CLEAN;
        }
        let base = match self.kind {
            EnvKind::Benign => GeParams::BENIGN,
            EnvKind::Hostile => GeParams::HOSTILE,
        };
        GeParams {
            p_gb: self.p_gb.unwrap_or(base.p_gb),
            p_bg: self.p_bg.unwrap_or(base.p_bg),
            p_g: self.p_g.unwrap_or(base.p_g),
            p_b: self.p_b.unwrap_or(base.p_b),
        }
    }

    pub fn interferer_count(&self) -> u32 {
        self.interferers.unwrap_or(match self.kind {
            EnvKind::Benign => 2,
            EnvKind::Hostile => 4,
        })
    }

    pub fn interferer_profile(&self) -> InterfererProfile {
        InterfererProfile {
            frames_per_burst: self.burst_frames,
            payload: self.interferer_payload,
            intra_burst_period: self.burst_period,
            mean_gap: self.burst_gap,
            queue_capacity: self.interferer_queue,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficConfig {
    pub direction: Direction,
    pub law: ArrivalLaw,
    pub mean_period: Micros,
    pub payload: u32,
    /// Airtime of one data frame of `payload` bytes.
    pub airtime: Micros,
    /// Logical receivers behind the downlink peer.
    pub destinations: u16,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        let p = SourceProfile::C1;
        Self {
            direction: Direction::Uplink,
            law: p.law,
            mean_period: p.mean_period,
            payload: p.payload,
            airtime: 38,
            destinations: 16,
        }
    }
}

impl TrafficConfig {
    pub fn profile(&self) -> SourceProfile {
        SourceProfile {
            law: self.law,
            mean_period: self.mean_period,
            payload: self.payload,
        }
    }

    pub fn set_profile(&mut self, p: SourceProfile) {
        self.law = p.law;
        self.mean_period = p.mean_period;
        self.payload = p.payload;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LreConfig {
    pub scheme: Scheme,
    pub d_th: u32,
    /// Receive policy; defaults to ordered on the uplink and unordered on
    /// the downlink.
    pub rx_policy: Option<RxPolicy>,
    /// Outstanding copies per channel in the transmission buffer
    /// (256 kbit of 50 B payloads).
    pub capacity: usize,
    pub reorder_timeout: Micros,
    pub selection: SelectionRule,
}

impl Default for LreConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::RdaR,
            d_th: 0,
            rx_policy: None,
            capacity: 640,
            reorder_timeout: 10_000,
            selection: SelectionRule::Flags,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Packets generated by the monitored source.
    pub packets: u64,
    /// Generation horizon; when set it replaces the packet count.
    pub duration: Option<Micros>,
    /// Leading fraction of the generation horizon left out of statistics.
    pub warmup_fraction: f64,
    /// Extra time after the last generation for in-flight packets to settle.
    pub drain: Micros,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            packets: 1_000_000,
            duration: None,
            warmup_fraction: 0.05,
            drain: 5_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub environment: EnvironmentConfig,
    pub traffic: TrafficConfig,
    pub mac: MacTimings,
    pub lre: LreConfig,
    pub run: RunConfig,
}

impl ScenarioConfig {
    /// A ready-made configuration for one cell of the evaluation grid.
    pub fn preset(
        direction: Direction,
        profile: SourceProfile,
        env: EnvKind,
        scheme: Scheme,
    ) -> Self {
        let mut cfg = Self::default();
        cfg.traffic.direction = direction;
        cfg.traffic.set_profile(profile);
        cfg.environment.kind = env;
        cfg.lre.scheme = scheme;
        cfg
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Applies `section.key=value`; the value uses TOML syntax, bare words
    /// are taken as strings.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (path, value) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError::OverrideSyntax(assignment.to_string()))?;
        let (section, key) = path
            .trim()
            .split_once('.')
            .ok_or_else(|| ConfigError::OverrideSyntax(assignment.to_string()))?;
        let value = value.trim();
        let parsed: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {value}")) {
            Ok(mut t) => t.remove("v").expect("key present"),
            Err(_) => toml::Value::String(value.to_string()),
        };
        let mut doc = toml::Table::try_from(&*self).expect("configuration serializes");
        let sec = doc
            .entry(section.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
        let Some(sec) = sec.as_table_mut() else {
            return Err(ConfigError::OverrideSyntax(assignment.to_string()));
        };
        sec.insert(key.to_string(), parsed);
        *self = toml::Value::Table(doc).try_into()?;
        Ok(())
    }

    /// Receive policy actually used by the peer.
    pub fn effective_rx_policy(&self) -> RxPolicy {
        if self.lre.scheme == Scheme::Dcf || self.traffic.direction == Direction::Downlink {
            return RxPolicy::Unordered;
        }
        self.lre.rx_policy.unwrap_or(RxPolicy::Ordered)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        self.mac.validate().map_err(ConfigError::Invalid)?;
        self.environment
            .ge_params()
            .validate()
            .map_err(ConfigError::Invalid)?;
        let lre = &self.lre;
        if lre.scheme == Scheme::Dcf && lre.d_th > 0 {
            return bad("plain DCF has no duplicates to defer: d_th must be 0".into());
        }
        if lre.d_th > self.mac.retry_limit {
            return bad(format!(
                "d_th = {} exceeds the retry limit {}",
                lre.d_th, self.mac.retry_limit
            ));
        }
        if lre.selection == SelectionRule::HeadOfQueue && lre.d_th > 0 {
            return bad("head-of-queue selection requires d_th = 0".into());
        }
        if self.traffic.direction == Direction::Downlink && lre.rx_policy == Some(RxPolicy::Ordered) {
            return bad("the downlink has no reordering: rx_policy must be unordered".into());
        }
        if lre.capacity == 0 {
            return bad("lre.capacity must be positive".into());
        }
        if self.traffic.mean_period == 0 {
            return bad("traffic.mean_period must be positive".into());
        }
        if self.traffic.airtime == 0 || self.environment.interferer_airtime == 0 {
            return bad("airtimes must be positive".into());
        }
        if self.traffic.destinations == 0 {
            return bad("traffic.destinations must be positive".into());
        }
        if self.environment.burst_period == 0 && self.environment.interferer_count() > 0 {
            return bad("environment.burst_period must be positive".into());
        }
        if !(0.0..1.0).contains(&self.run.warmup_fraction) {
            return bad("run.warmup_fraction must lie in [0, 1)".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        ScenarioConfig::default().validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = ScenarioConfig::preset(
            Direction::Downlink,
            SourceProfile::E05,
            EnvKind::Hostile,
            Scheme::RdaQ,
        );
        cfg.lre.d_th = 3;
        let back = ScenarioConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = ScenarioConfig::from_toml("[lre]\nscheme = \"basic\"\n").unwrap();
        assert_eq!(cfg.lre.scheme, Scheme::Basic);
        assert_eq!(cfg.run, RunConfig::default());
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = ScenarioConfig::from_toml("[run]\nseed = 1\nsede = 2\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("sede"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn overrides() {
        let mut cfg = ScenarioConfig::default();
        cfg.apply_override("lre.scheme=rda-q").unwrap();
        cfg.apply_override("lre.d_th=3").unwrap();
        cfg.apply_override("environment.p_bg=0.001").unwrap();
        cfg.apply_override("traffic.law=exponential").unwrap();
        assert_eq!(cfg.lre.scheme, Scheme::RdaQ);
        assert_eq!(cfg.lre.d_th, 3);
        assert_eq!(cfg.environment.p_bg, Some(0.001));
        assert_eq!(cfg.traffic.law, ArrivalLaw::Exponential);
        assert!(cfg.apply_override("lre.nope=1").is_err());
        assert!(cfg.apply_override("scheme").is_err());
    }

    #[test]
    fn rejects_bad_combinations() {
        let mut cfg = ScenarioConfig::default();
        cfg.lre.scheme = Scheme::Dcf;
        cfg.lre.d_th = 1;
        assert!(cfg.validate().is_err());

        let mut cfg = ScenarioConfig::default();
        cfg.lre.d_th = 8;
        assert!(cfg.validate().is_err());

        let mut cfg = ScenarioConfig::default();
        cfg.traffic.direction = Direction::Downlink;
        cfg.lre.rx_policy = Some(RxPolicy::Ordered);
        assert!(cfg.validate().is_err());

        let mut cfg = ScenarioConfig::default();
        cfg.environment.p_b = Some(1.5);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn environments_differ_only_in_interferers_and_recovery() {
        let b = EnvironmentConfig::default();
        let h = EnvironmentConfig {
            kind: EnvKind::Hostile,
            ..Default::default()
        };
        let (gb, gh) = (b.ge_params(), h.ge_params());
        assert_eq!((gb.p_gb, gb.p_g, gb.p_b), (gh.p_gb, gh.p_g, gh.p_b));
        assert_ne!(gb.p_bg, gh.p_bg);
        assert_eq!((b.interferer_count(), h.interferer_count()), (2, 4));
        assert_eq!(b.interferer_profile(), h.interferer_profile());
    }

    #[test]
    fn receive_policy_defaults() {
        let mut cfg = ScenarioConfig::default();
        assert_eq!(cfg.effective_rx_policy(), RxPolicy::Ordered);
        cfg.traffic.direction = Direction::Downlink;
        assert_eq!(cfg.effective_rx_policy(), RxPolicy::Unordered);
        cfg.traffic.direction = Direction::Uplink;
        cfg.lre.scheme = Scheme::Dcf;
        assert_eq!(cfg.effective_rx_policy(), RxPolicy::Unordered);
    }
}
