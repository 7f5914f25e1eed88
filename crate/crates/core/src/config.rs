//! Run configuration. Every tunable has a default; `validate` names the
//! offending key on failure.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::laa::{DrsConfig, LbtConfig};
use crate::link::{DecodeModel, LaaMcsTable, WifiRateTable};
use crate::traffic::{RlcMode, TcpParams};
use crate::time::SimTime;
use crate::wifi::{CcaConfig, EdcaParams};

/// Expected number of FTP arrivals per operator targeted by the default
/// duration policy.
pub const TARGET_FLOWS: f64 = 960.0;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{key}: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

fn err(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { key: key.into(), message: message.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Step {
    /// Both operators deploy Wi-Fi.
    One,
    /// Operator A deploys LAA.
    Two,
}

impl TryFrom<u8> for Step {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1 => Ok(Step::One),
            2 => Ok(Step::Two),
            _ => Err(format!("step must be 1 or 2, got {v}")),
        }
    }
}

impl From<Step> for u8 {
    fn from(s: Step) -> u8 {
        match s {
            Step::One => 1,
            Step::Two => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    Udp,
    Tcp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    Indoor,
    Corner,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrafficModel {
    #[serde(rename = "ftp1")]
    Ftp1,
    #[serde(rename = "cbr")]
    Cbr,
    #[serde(rename = "ftp1+voice")]
    Ftp1Voice,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioConfig {
    pub bs_tx_power_dbm: f64,
    pub terminal_tx_power_dbm: f64,
    pub bs_antenna_gain_dbi: f64,
    pub terminal_antenna_gain_dbi: f64,
    pub noise_figure_db: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            bs_tx_power_dbm: 18.0,
            terminal_tx_power_dbm: 18.0,
            bs_antenna_gain_dbi: 5.0,
            terminal_antenna_gain_dbi: 0.0,
            noise_figure_db: 9.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WifiConfig {
    pub ed_threshold_dbm: f64,
    pub pd_threshold_dbm: f64,
    pub rts_cts: bool,
    pub max_ampdu_bytes: u32,
    pub beacon_interval_ms: f64,
    pub beacon_duration_us: f64,
    pub preamble_us: f64,
    pub aifsn: u32,
    pub cw_min: u32,
    pub cw_max: u32,
    pub retry_limit: u32,
    pub tcp_ack_bytes: u32,
    /// Highest usable MCS index (7 restricts to one spatial stream).
    pub max_mcs: u8,
}

impl Default for WifiConfig {
    fn default() -> Self {
        let cca = CcaConfig::default();
        let be = EdcaParams::BEST_EFFORT;
        WifiConfig {
            ed_threshold_dbm: cca.ed_threshold_dbm,
            pd_threshold_dbm: cca.pd_threshold_dbm,
            rts_cts: false,
            max_ampdu_bytes: 65_535,
            beacon_interval_ms: 100.0,
            beacon_duration_us: 176.0,
            preamble_us: 36.0,
            aifsn: be.aifsn,
            cw_min: be.cw_min,
            cw_max: be.cw_max,
            retry_limit: be.retry_limit,
            tcp_ack_bytes: 72,
            max_mcs: 15,
        }
    }
}

impl WifiConfig {
    pub fn cca(&self) -> CcaConfig {
        CcaConfig { ed_threshold_dbm: self.ed_threshold_dbm, pd_threshold_dbm: self.pd_threshold_dbm }
    }

    pub fn edca(&self) -> EdcaParams {
        EdcaParams { aifsn: self.aifsn, cw_min: self.cw_min, cw_max: self.cw_max, retry_limit: self.retry_limit }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LaaConfig {
    pub ed_threshold_dbm: f64,
    pub txop_ms: f64,
    pub cws_set: Vec<u32>,
    pub z_threshold: f64,
    pub defer_us: f64,
    pub slot_us: f64,
    pub drs_enabled: bool,
    pub drs_period_ms: f64,
    pub dmtc_window_ms: f64,
    pub drs_duration_ms: f64,
    /// Clear check before a standalone discovery signal, in microseconds.
    pub drs_defer_us: f64,
    pub harq_delay_ms: f64,
    pub pdcch_symbols: u32,
    pub max_harq_attempts: u32,
    pub rank: u32,
}

impl Default for LaaConfig {
    fn default() -> Self {
        LaaConfig {
            ed_threshold_dbm: -72.0,
            txop_ms: 8.0,
            cws_set: vec![15, 31, 63],
            z_threshold: 0.8,
            defer_us: 43.0,
            slot_us: 9.0,
            drs_enabled: true,
            drs_period_ms: 80.0,
            dmtc_window_ms: 6.0,
            drs_duration_ms: 1.0,
            drs_defer_us: 25.0,
            harq_delay_ms: 7.0,
            pdcch_symbols: 2,
            max_harq_attempts: 4,
            rank: 2,
        }
    }
}

impl LaaConfig {
    pub fn lbt(&self) -> LbtConfig {
        LbtConfig {
            defer: SimTime::from_micros_f64(self.defer_us),
            slot: SimTime::from_micros_f64(self.slot_us),
            ed_threshold_dbm: self.ed_threshold_dbm,
            cws_set: self.cws_set.clone(),
            z_threshold: self.z_threshold,
            txop_limit: SimTime::from_millis_f64(self.txop_ms),
        }
    }

    pub fn drs(&self) -> DrsConfig {
        DrsConfig {
            period: SimTime::from_millis_f64(self.drs_period_ms),
            dmtc_window: SimTime::from_millis_f64(self.dmtc_window_ms),
            duration: SimTime::from_millis_f64(self.drs_duration_ms),
            check: SimTime::from_micros_f64(self.drs_defer_us),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficConfig {
    pub model: TrafficModel,
    pub lambda: f64,
    pub file_bytes: u64,
    /// Size of the packets a file is cut into (UDP) and of TCP segments.
    pub packet_bytes: u32,
    pub voice_terminals: usize,
    pub voice_packet_bytes: u32,
    pub voice_interval_ms: f64,
    pub voice_outage_ms: f64,
    /// Per-terminal offered rate of the CBR model.
    pub cbr_rate_bps: f64,
    pub cbr_packet_bytes: u32,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig {
            model: TrafficModel::Ftp1,
            lambda: 2.5,
            file_bytes: 500_000,
            packet_bytes: 1440,
            voice_terminals: 2,
            voice_packet_bytes: 100,
            voice_interval_ms: 20.0,
            voice_outage_ms: 50.0,
            cbr_rate_bps: 1e6,
            cbr_packet_bytes: 1000,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RlcConfig {
    /// Unset: unacknowledged mode under UDP, acknowledged mode under TCP.
    pub mode: Option<RlcMode>,
    pub status_interval_ms: Option<f64>,
}

impl RlcConfig {
    pub fn status_interval(&self) -> SimTime {
        SimTime::from_millis_f64(self.status_interval_ms.unwrap_or(20.0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TcpConfig {
    pub initial_cwnd: u32,
    pub mss: u32,
    pub min_rto_ms: f64,
    pub initial_rto_ms: f64,
}

impl Default for TcpConfig {
    fn default() -> Self {
        let p = TcpParams::default();
        TcpConfig {
            initial_cwnd: p.initial_cwnd,
            mss: p.mss,
            min_rto_ms: p.min_rto.as_millis_f64(),
            initial_rto_ms: p.initial_rto.as_millis_f64(),
        }
    }
}

impl TcpConfig {
    pub fn params(&self) -> TcpParams {
        TcpParams {
            initial_cwnd: self.initial_cwnd,
            mss: self.mss,
            min_rto: SimTime::from_millis_f64(self.min_rto_ms),
            initial_rto: SimTime::from_millis_f64(self.initial_rto_ms),
            ..TcpParams::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DelayConfig {
    /// One way, server to base station.
    pub server_ms: f64,
    /// One way, terminal to eNB over the licensed carrier.
    pub licensed_uplink_ms: f64,
}

impl Default for DelayConfig {
    fn default() -> Self {
        DelayConfig { server_ms: 5.0, licensed_uplink_ms: 3.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub layout: Layout,
    /// Width (x) and depth (y) of the floor.
    pub bounds_m: [f64; 2],
    pub bs_spacing_m: f64,
    pub operator_b_offset_m: f64,
    pub bs_per_operator: usize,
    pub ues_per_operator: usize,
    pub bs_height_m: f64,
    pub terminal_height_m: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            layout: Layout::Indoor,
            bounds_m: [120.0, 50.0],
            bs_spacing_m: 30.0,
            operator_b_offset_m: 10.0,
            bs_per_operator: 4,
            ues_per_operator: 20,
            bs_height_m: 6.0,
            terminal_height_m: 1.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkConfig {
    pub margin_db: f64,
    pub wifi_table: WifiRateTable,
    pub laa_table: LaaMcsTable,
}

impl Default for LinkConfig {
    fn default() -> Self {
        let d = DecodeModel::default();
        LinkConfig { margin_db: d.margin_db, wifi_table: d.wifi, laa_table: d.laa }
    }
}

impl LinkConfig {
    pub fn decode_model(&self) -> DecodeModel {
        DecodeModel { wifi: self.wifi_table.clone(), laa: self.laa_table.clone(), margin_db: self.margin_db }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub seed: u64,
    pub step: Step,
    pub transport: Transport,
    /// Unset: `ceil(960 / lambda)` seconds.
    pub duration_s: Option<f64>,
    pub warmup_s: f64,
    pub radio: RadioConfig,
    pub wifi: WifiConfig,
    pub laa: LaaConfig,
    pub traffic: TrafficConfig,
    pub rlc: RlcConfig,
    pub tcp: TcpConfig,
    pub delays: DelayConfig,
    pub scenario: ScenarioConfig,
    pub link: LinkConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 1,
            step: Step::One,
            transport: Transport::Udp,
            duration_s: None,
            warmup_s: 2.0,
            radio: RadioConfig::default(),
            wifi: WifiConfig::default(),
            laa: LaaConfig::default(),
            traffic: TrafficConfig::default(),
            rlc: RlcConfig::default(),
            tcp: TcpConfig::default(),
            delays: DelayConfig::default(),
            scenario: ScenarioConfig::default(),
            link: LinkConfig::default(),
        }
    }
}

/// Run length that keeps the expected number of arrivals per operator at
/// [`TARGET_FLOWS`].
pub fn policy_duration_s(lambda: f64) -> f64 {
    libm::ceil(TARGET_FLOWS / lambda)
}

fn finite(key: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(err(key, "must be finite"))
    }
}

fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(err(key, format!("must be > 0, got {v}")))
    }
}

impl SimConfig {
    pub fn duration_s(&self) -> f64 {
        self.duration_s.unwrap_or_else(|| policy_duration_s(self.traffic.lambda))
    }

    pub fn duration(&self) -> SimTime {
        SimTime::from_secs_f64(self.duration_s())
    }

    pub fn warmup(&self) -> SimTime {
        SimTime::from_secs_f64(self.warmup_s)
    }

    pub fn rlc_mode(&self) -> RlcMode {
        self.rlc.mode.unwrap_or(match self.transport {
            Transport::Udp => RlcMode::Um,
            Transport::Tcp => RlcMode::Am,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(d) = self.duration_s {
            positive("duration_s", d)?;
        }
        finite("warmup_s", self.warmup_s)?;
        if self.warmup_s < 0.0 || self.warmup_s >= self.duration_s() {
            return Err(err("warmup_s", "must lie in [0, duration)"));
        }

        let r = &self.radio;
        for (k, v) in [
            ("radio.bs_tx_power_dbm", r.bs_tx_power_dbm),
            ("radio.terminal_tx_power_dbm", r.terminal_tx_power_dbm),
            ("radio.bs_antenna_gain_dbi", r.bs_antenna_gain_dbi),
            ("radio.terminal_antenna_gain_dbi", r.terminal_antenna_gain_dbi),
            ("radio.noise_figure_db", r.noise_figure_db),
        ] {
            finite(k, v)?;
        }

        let w = &self.wifi;
        finite("wifi.ed_threshold_dbm", w.ed_threshold_dbm)?;
        finite("wifi.pd_threshold_dbm", w.pd_threshold_dbm)?;
        if w.pd_threshold_dbm > w.ed_threshold_dbm {
            return Err(err("wifi.pd_threshold_dbm", "must not exceed wifi.ed_threshold_dbm"));
        }
        if w.rts_cts {
            return Err(err("wifi.rts_cts", "RTS/CTS exchange is not supported"));
        }
        if w.max_ampdu_bytes < self.traffic.packet_bytes.max(w.tcp_ack_bytes) {
            return Err(err("wifi.max_ampdu_bytes", "must hold at least one packet"));
        }
        positive("wifi.beacon_interval_ms", w.beacon_interval_ms)?;
        positive("wifi.beacon_duration_us", w.beacon_duration_us)?;
        if w.beacon_duration_us >= w.beacon_interval_ms * 1000.0 {
            return Err(err("wifi.beacon_duration_us", "must be shorter than the beacon interval"));
        }
        finite("wifi.preamble_us", w.preamble_us)?;
        if w.preamble_us < 0.0 {
            return Err(err("wifi.preamble_us", "must be >= 0"));
        }
        if !w.edca().is_valid() {
            return Err(err("wifi.cw_min", "cw_min and cw_max must be 2^k - 1 with cw_min <= cw_max"));
        }
        if w.tcp_ack_bytes == 0 {
            return Err(err("wifi.tcp_ack_bytes", "must be > 0"));
        }
        if w.max_mcs > self.link.wifi_table.max_index() {
            return Err(err("wifi.max_mcs", "exceeds the rate table"));
        }

        let l = &self.laa;
        finite("laa.ed_threshold_dbm", l.ed_threshold_dbm)?;
        if !(l.txop_ms > 0.0 && l.txop_ms <= 10.0) {
            return Err(err("laa.txop_ms", format!("must lie in (0, 10], got {}", l.txop_ms)));
        }
        if l.cws_set.is_empty() || l.cws_set.windows(2).any(|p| p[0] >= p[1]) || l.cws_set[0] == 0 {
            return Err(err("laa.cws_set", "must be non-empty, positive and strictly increasing"));
        }
        if !(l.z_threshold > 0.0 && l.z_threshold <= 1.0) {
            return Err(err("laa.z_threshold", "must lie in (0, 1]"));
        }
        positive("laa.defer_us", l.defer_us)?;
        positive("laa.slot_us", l.slot_us)?;
        positive("laa.drs_period_ms", l.drs_period_ms)?;
        if l.drs_enabled {
            let p = l.drs_period_ms / 40.0;
            if libm::fabs(p - libm::round(p)) > 1e-9 {
                return Err(err("laa.drs_period_ms", "must be a multiple of 40"));
            }
        }
        positive("laa.dmtc_window_ms", l.dmtc_window_ms)?;
        if l.dmtc_window_ms > l.drs_period_ms {
            return Err(err("laa.dmtc_window_ms", "must not exceed the DRS period"));
        }
        positive("laa.drs_duration_ms", l.drs_duration_ms)?;
        positive("laa.drs_defer_us", l.drs_defer_us)?;
        positive("laa.harq_delay_ms", l.harq_delay_ms)?;
        if !(1..=3).contains(&l.pdcch_symbols) {
            return Err(err("laa.pdcch_symbols", "must lie in [1, 3]"));
        }
        if l.max_harq_attempts == 0 {
            return Err(err("laa.max_harq_attempts", "must be >= 1"));
        }
        if !(1..=2).contains(&l.rank) {
            return Err(err("laa.rank", "must be 1 or 2"));
        }

        let t = &self.traffic;
        positive("traffic.lambda", t.lambda)?;
        if t.file_bytes == 0 {
            return Err(err("traffic.file_bytes", "must be > 0"));
        }
        if t.packet_bytes == 0 {
            return Err(err("traffic.packet_bytes", "must be > 0"));
        }
        if t.model == TrafficModel::Ftp1Voice {
            if t.voice_terminals >= self.scenario.ues_per_operator {
                return Err(err("traffic.voice_terminals", "must leave FTP destinations"));
            }
            if t.voice_packet_bytes == 0 {
                return Err(err("traffic.voice_packet_bytes", "must be > 0"));
            }
            positive("traffic.voice_interval_ms", t.voice_interval_ms)?;
            positive("traffic.voice_outage_ms", t.voice_outage_ms)?;
        }
        if t.model == TrafficModel::Cbr {
            finite("traffic.cbr_rate_bps", t.cbr_rate_bps)?;
            if t.cbr_rate_bps < 0.0 {
                return Err(err("traffic.cbr_rate_bps", "must be >= 0"));
            }
            if t.cbr_packet_bytes == 0 {
                return Err(err("traffic.cbr_packet_bytes", "must be > 0"));
            }
        }

        if let Some(s) = self.rlc.status_interval_ms {
            positive("rlc.status_interval_ms", s)?;
        }

        let c = &self.tcp;
        if c.initial_cwnd == 0 {
            return Err(err("tcp.initial_cwnd", "must be >= 1"));
        }
        if c.mss == 0 {
            return Err(err("tcp.mss", "must be > 0"));
        }
        positive("tcp.min_rto_ms", c.min_rto_ms)?;
        positive("tcp.initial_rto_ms", c.initial_rto_ms)?;

        let d = &self.delays;
        for (k, v) in [("delays.server_ms", d.server_ms), ("delays.licensed_uplink_ms", d.licensed_uplink_ms)] {
            finite(k, v)?;
            if v < 0.0 {
                return Err(err(k, "must be >= 0"));
            }
        }

        let s = &self.scenario;
        positive("scenario.bounds_m", s.bounds_m[0])?;
        positive("scenario.bounds_m", s.bounds_m[1])?;
        finite("scenario.bs_spacing_m", s.bs_spacing_m)?;
        finite("scenario.operator_b_offset_m", s.operator_b_offset_m)?;
        if s.bs_per_operator == 0 {
            return Err(err("scenario.bs_per_operator", "must be >= 1"));
        }
        if s.ues_per_operator == 0 {
            return Err(err("scenario.ues_per_operator", "must be >= 1"));
        }
        finite("scenario.bs_height_m", s.bs_height_m)?;
        finite("scenario.terminal_height_m", s.terminal_height_m)?;
        if 2 * (s.bs_per_operator + s.ues_per_operator) > u16::MAX as usize {
            return Err(err("scenario.ues_per_operator", "too many nodes"));
        }
        crate::scenario::bs_positions(s).map_err(|m| err("scenario.bounds_m", m))?;

        finite("link.margin_db", self.link.margin_db)?;
        if self.link.margin_db < 0.0 {
            return Err(err("link.margin_db", "must be >= 0"));
        }
        WifiRateTable::new(self.link.wifi_table.entries.clone()).map_err(|e| err("link.wifi_table", format!("{e}")))?;
        LaaMcsTable::new(self.link.laa_table.entries.clone()).map_err(|e| err("link.laa_table", format!("{e}")))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = SimConfig::default();
        c.validate().unwrap();
        assert_eq!(c.duration_s(), 384.0);
        assert_eq!(c.radio.bs_tx_power_dbm, 18.0);
        assert_eq!(c.wifi.ed_threshold_dbm, -62.0);
        assert_eq!(c.laa.ed_threshold_dbm, -72.0);
        assert_eq!(c.laa.txop_ms, 8.0);
        assert_eq!(c.rlc_mode(), RlcMode::Um);
    }

    #[test]
    fn txop_range() {
        let mut c = SimConfig::default();
        c.laa.txop_ms = 20.0;
        assert_eq!(c.validate().unwrap_err().key, "laa.txop_ms");
        c.laa.txop_ms = 10.0;
        c.validate().unwrap();
        c.laa.txop_ms = 0.0;
        assert_eq!(c.validate().unwrap_err().key, "laa.txop_ms");
    }

    #[test]
    fn rejects_rts_cts() {
        let mut c = SimConfig::default();
        c.wifi.rts_cts = true;
        assert_eq!(c.validate().unwrap_err().key, "wifi.rts_cts");
    }

    #[test]
    fn duration_policy() {
        assert_eq!(policy_duration_s(2.5), 384.0);
        assert_eq!(policy_duration_s(0.5), 1920.0);
        assert_eq!(policy_duration_s(0.7), 1372.0);
    }
}
