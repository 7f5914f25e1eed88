//! Rate tables, airtime and capacity arithmetic, and threshold decoding.
//!
//! Both technologies use an AWGN threshold abstraction: a transmission at a
//! given MCS decodes iff its worst-segment SINR is at least that MCS's
//! threshold. The default tables are shipped here and may be replaced at run
//! time; every run records the tables it used.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math::floor;
use crate::radio::Technology;
use crate::time::SimTime;

/// 802.11n HT OFDM symbol with the 800 ns guard interval.
pub const WIFI_SYMBOL: SimTime = SimTime::from_micros(4);
pub const LTE_SUBFRAME: SimTime = SimTime::from_millis(1);
pub const LTE_SYMBOLS_PER_SUBFRAME: u32 = 14;
/// 100 resource blocks x 12 subcarriers at 20 MHz.
pub const LTE_SUBCARRIERS: u32 = 1200;
pub const LTE_RESOURCE_BLOCKS: u32 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WifiMcsEntry {
    pub index: u8,
    pub data_rate_bps: u64,
    pub min_sinr_db: f64,
}

impl WifiMcsEntry {
    pub fn spatial_streams(&self) -> u8 {
        if self.index >= 8 {
            2
        } else {
            1
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaaMcsEntry {
    pub index: u8,
    pub modulation_bits: u8,
    pub code_rate: f64,
    pub min_sinr_db: f64,
}

impl LaaMcsEntry {
    pub fn spectral_efficiency(&self) -> f64 {
        self.modulation_bits as f64 * self.code_rate
    }
}

const WIFI_DEFAULT: [(u64, f64); 16] = [
    (6_500_000, 2.0),
    (13_000_000, 5.0),
    (19_500_000, 8.0),
    (26_000_000, 10.5),
    (39_000_000, 14.0),
    (52_000_000, 17.5),
    (58_500_000, 19.0),
    (65_000_000, 20.5),
    (13_000_000, 5.0),
    (26_000_000, 10.5),
    (39_000_000, 14.0),
    (52_000_000, 17.5),
    (78_000_000, 22.0),
    (104_000_000, 25.5),
    (117_000_000, 27.0),
    (130_000_000, 28.5),
];

// (bits per symbol, code rate, threshold dB); thresholds follow a
// gap-to-capacity curve over spectral efficiency.
const LAA_DEFAULT: [(u8, f64, f64); 29] = [
    (2, 0.12, -6.0),
    (2, 0.16, -4.6),
    (2, 0.19, -3.8),
    (2, 0.25, -2.3),
    (2, 0.31, -1.1),
    (2, 0.37, -0.1),
    (2, 0.44, 1.0),
    (2, 0.51, 2.0),
    (2, 0.59, 3.0),
    (2, 0.64, 3.5),
    (4, 0.33, 3.8),
    (4, 0.37, 4.7),
    (4, 0.42, 5.7),
    (4, 0.48, 6.9),
    (4, 0.54, 8.0),
    (4, 0.60, 9.1),
    (4, 0.64, 9.8),
    (6, 0.43, 9.9),
    (6, 0.46, 10.7),
    (6, 0.50, 11.8),
    (6, 0.55, 13.0),
    (6, 0.60, 14.3),
    (6, 0.65, 15.5),
    (6, 0.70, 16.8),
    (6, 0.75, 18.0),
    (6, 0.80, 19.2),
    (6, 0.85, 20.4),
    (6, 0.89, 21.4),
    (6, 0.926, 22.3),
];

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum LinkError {
    #[error("MCS index {index} out of range 0..={max}")]
    McsOutOfRange { index: u32, max: u32 },
    #[error("PDCCH symbols {0} out of range 1..=3")]
    PdcchOutOfRange(u32),
    #[error("rank {0} not in {{1, 2}}")]
    RankOutOfRange(u32),
    #[error("invalid MCS table: {0}")]
    InvalidTable(&'static str),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WifiRateTable {
    pub entries: Vec<WifiMcsEntry>,
}

impl Default for WifiRateTable {
    fn default() -> Self {
        WifiRateTable {
            entries: WIFI_DEFAULT
                .iter()
                .enumerate()
                .map(|(i, &(rate, thr))| WifiMcsEntry { index: i as u8, data_rate_bps: rate, min_sinr_db: thr })
                .collect(),
        }
    }
}

impl WifiRateTable {
    /// Validates index density, rate ordering within each stream group, and
    /// thresholds increasing with rate.
    pub fn new(entries: Vec<WifiMcsEntry>) -> Result<Self, LinkError> {
        if entries.len() != 16 {
            return Err(LinkError::InvalidTable("wifi table must have 16 rows (MCS 0..15)"));
        }
        for (i, e) in entries.iter().enumerate() {
            if e.index as usize != i {
                return Err(LinkError::InvalidTable("wifi MCS indices must be 0..15 in order"));
            }
            // 4 us symbols must carry a whole number of bits.
            if e.data_rate_bps == 0 || (e.data_rate_bps * 4) % 1_000_000 != 0 {
                return Err(LinkError::InvalidTable("wifi rates must give whole bits per 4 us symbol"));
            }
        }
        for group in [&entries[0..8], &entries[8..16]] {
            if group.windows(2).any(|w| w[1].data_rate_bps <= w[0].data_rate_bps || w[1].min_sinr_db <= w[0].min_sinr_db) {
                return Err(LinkError::InvalidTable("wifi rates and thresholds must increase within a stream group"));
            }
        }
        for a in &entries {
            for b in &entries {
                if a.data_rate_bps < b.data_rate_bps && a.min_sinr_db >= b.min_sinr_db {
                    return Err(LinkError::InvalidTable("wifi thresholds must increase with rate"));
                }
            }
        }
        Ok(WifiRateTable { entries })
    }

    pub fn max_index(&self) -> u8 {
        (self.entries.len() - 1) as u8
    }

    pub fn entry(&self, mcs: u8) -> Result<&WifiMcsEntry, LinkError> {
        self.entries
            .get(mcs as usize)
            .ok_or(LinkError::McsOutOfRange { index: mcs as u32, max: self.max_index() as u32 })
    }

    /// Data bits per 4 µs OFDM symbol.
    pub fn bits_per_symbol(&self, mcs: u8) -> Result<u64, LinkError> {
        Ok(self.entry(mcs)?.data_rate_bps * 4 / 1_000_000)
    }

    /// Preamble plus payload airtime rounded up to whole 4 µs symbols.
    pub fn ppdu_duration(&self, mcs: u8, ampdu_bytes: u64, preamble: SimTime) -> Result<SimTime, LinkError> {
        let bps = self.bits_per_symbol(mcs)?;
        let symbols = (8 * ampdu_bytes).div_ceil(bps);
        Ok(preamble + WIFI_SYMBOL * symbols)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaaMcsTable {
    pub entries: Vec<LaaMcsEntry>,
}

impl Default for LaaMcsTable {
    fn default() -> Self {
        LaaMcsTable {
            entries: LAA_DEFAULT
                .iter()
                .enumerate()
                .map(|(i, &(bits, rate, thr))| LaaMcsEntry {
                    index: i as u8,
                    modulation_bits: bits,
                    code_rate: rate,
                    min_sinr_db: thr,
                })
                .collect(),
        }
    }
}

impl LaaMcsTable {
    pub fn new(entries: Vec<LaaMcsEntry>) -> Result<Self, LinkError> {
        if entries.len() != 29 {
            return Err(LinkError::InvalidTable("LAA table must have 29 rows (MCS 0..28)"));
        }
        for (i, e) in entries.iter().enumerate() {
            if e.index as usize != i {
                return Err(LinkError::InvalidTable("LAA MCS indices must be 0..28 in order"));
            }
            if ![2, 4, 6].contains(&e.modulation_bits) || !(e.code_rate > 0.0 && e.code_rate < 1.0) {
                return Err(LinkError::InvalidTable("LAA rows need modulation bits in {2,4,6} and code rate in (0,1)"));
            }
        }
        if entries.windows(2).any(|w| {
            w[1].spectral_efficiency() < w[0].spectral_efficiency()
                || (w[1].spectral_efficiency() > w[0].spectral_efficiency() && w[1].min_sinr_db <= w[0].min_sinr_db)
        }) {
            return Err(LinkError::InvalidTable("LAA efficiency and thresholds must increase with index"));
        }
        Ok(LaaMcsTable { entries })
    }

    pub fn max_index(&self) -> u8 {
        (self.entries.len() - 1) as u8
    }

    pub fn entry(&self, mcs: u8) -> Result<&LaaMcsEntry, LinkError> {
        self.entries
            .get(mcs as usize)
            .ok_or(LinkError::McsOutOfRange { index: mcs as u32, max: self.max_index() as u32 })
    }

    /// Data bits carried by one OFDM symbol on one layer, floored.
    pub fn bits_per_symbol_per_layer(&self, mcs: u8) -> Result<u64, LinkError> {
        let e = self.entry(mcs)?;
        Ok(floor(LTE_SUBCARRIERS as f64 * e.modulation_bits as f64 * e.code_rate) as u64)
    }

    /// Bits one subframe carries: `(14 - pdcch) * bits_per_symbol * rank`.
    /// Flooring happens per symbol so capacity is exactly linear in the data
    /// symbol count and in rank.
    pub fn subframe_capacity_bits(&self, mcs: u8, pdcch_symbols: u32, rank: u32) -> Result<u64, LinkError> {
        if !(1..=3).contains(&pdcch_symbols) {
            return Err(LinkError::PdcchOutOfRange(pdcch_symbols));
        }
        if !(1..=2).contains(&rank) {
            return Err(LinkError::RankOutOfRange(rank));
        }
        let data_symbols = (LTE_SYMBOLS_PER_SUBFRAME - pdcch_symbols) as u64;
        Ok(data_symbols * self.bits_per_symbol_per_layer(mcs)? * rank as u64)
    }

    /// Bits carried by `rbs` of the 100 resource blocks.
    pub fn tb_bits(&self, mcs: u8, pdcch_symbols: u32, rank: u32, rbs: u32) -> Result<u64, LinkError> {
        Ok(self.subframe_capacity_bits(mcs, pdcch_symbols, rank)? * rbs as u64 / LTE_RESOURCE_BLOCKS as u64)
    }
}

/// Per-technology threshold tables plus the rate-selection margin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeModel {
    pub wifi: WifiRateTable,
    pub laa: LaaMcsTable,
    pub margin_db: f64,
}

impl Default for DecodeModel {
    fn default() -> Self {
        DecodeModel { wifi: WifiRateTable::default(), laa: LaaMcsTable::default(), margin_db: 1.0 }
    }
}

impl DecodeModel {
    pub fn threshold_db(&self, technology: Technology, mcs: u8) -> Result<f64, LinkError> {
        match technology {
            Technology::Wifi => Ok(self.wifi.entry(mcs)?.min_sinr_db),
            Technology::Laa => Ok(self.laa.entry(mcs)?.min_sinr_db),
        }
    }

    /// Highest index whose threshold plus margin does not exceed `sinr_db`;
    /// index 0 when none qualifies.
    pub fn select_mcs(&self, sinr_db: f64, technology: Technology) -> u8 {
        let thresholds: Vec<f64> = match technology {
            Technology::Wifi => self.wifi.entries.iter().map(|e| e.min_sinr_db).collect(),
            Technology::Laa => self.laa.entries.iter().map(|e| e.min_sinr_db).collect(),
        };
        thresholds
            .iter()
            .rposition(|&t| t + self.margin_db <= sinr_db)
            .map_or(0, |i| i as u8)
    }

    /// Deterministic decode decision for a worst-segment SINR.
    pub fn decodes(&self, sinr_db: f64, technology: Technology, mcs: u8) -> bool {
        match self.threshold_db(technology, mcs) {
            Ok(t) => sinr_db >= t,
            Err(_) => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const PREAMBLE: SimTime = SimTime::from_micros(36);

    #[test]
    fn wifi_table_is_valid_and_tops_at_130() {
        let t = WifiRateTable::default();
        assert!(WifiRateTable::new(t.entries.clone()).is_ok());
        assert_eq!(t.entry(15).unwrap().data_rate_bps, 130_000_000);
        assert!(t.entry(16).is_err());
    }

    #[test]
    fn ppdu_duration_examples() {
        let t = WifiRateTable::default();
        // 12000 bits over 520 bits/symbol = 23.08 -> 24 symbols = 96 us.
        assert_eq!(t.ppdu_duration(15, 1500, PREAMBLE).unwrap(), SimTime::from_micros(132));
        assert_eq!(t.ppdu_duration(15, 0, PREAMBLE).unwrap(), PREAMBLE);
        assert!(t.ppdu_duration(16, 10, PREAMBLE).is_err());
        // Half the rate doubles the payload airtime (whole-symbol payloads).
        let bytes = 520 * 10 / 8;
        let fast = t.ppdu_duration(15, bytes, PREAMBLE).unwrap() - PREAMBLE;
        let slow = t.ppdu_duration(7, bytes, PREAMBLE).unwrap() - PREAMBLE;
        assert_eq!(slow, fast * 2);
    }

    #[test]
    fn laa_capacity_examples() {
        let t = LaaMcsTable::default();
        assert!(LaaMcsTable::new(t.entries.clone()).is_ok());
        let r1 = t.subframe_capacity_bits(28, 2, 1).unwrap();
        // 12 symbols x 1200 x 6 x 0.926 = 80006.4; per-symbol flooring gives 80004.
        assert!((r1 as i64 - 80_006).abs() <= 12, "{r1}");
        assert_eq!(t.subframe_capacity_bits(28, 2, 2).unwrap(), 2 * r1);
        assert!(t.subframe_capacity_bits(10, 3, 1).unwrap() < t.subframe_capacity_bits(10, 1, 1).unwrap());
        assert_eq!(t.subframe_capacity_bits(28, 0, 1), Err(LinkError::PdcchOutOfRange(0)));
        assert_eq!(t.subframe_capacity_bits(28, 2, 3), Err(LinkError::RankOutOfRange(3)));
        assert!(t.subframe_capacity_bits(29, 2, 1).is_err());
    }

    #[test]
    fn select_mcs_floor_ceiling_and_boundaries() {
        let m = DecodeModel::default();
        assert_eq!(m.select_mcs(-50.0, Technology::Wifi), 0);
        assert_eq!(m.select_mcs(-50.0, Technology::Laa), 0);
        assert_eq!(m.select_mcs(200.0, Technology::Wifi), 15);
        assert_eq!(m.select_mcs(200.0, Technology::Laa), 28);
        // Exactly at threshold + margin selects that index: brute-force scan.
        for tech in [Technology::Wifi, Technology::Laa] {
            let max = match tech {
                Technology::Wifi => 15,
                Technology::Laa => 28,
            };
            for k in 0..=max {
                let s = m.threshold_db(tech, k).unwrap() + m.margin_db;
                let expected = (0..=max).rev().find(|&j| m.threshold_db(tech, j).unwrap() + m.margin_db <= s).unwrap();
                assert_eq!(m.select_mcs(s, tech), expected);
                assert!(m.select_mcs(s, tech) >= k);
            }
        }
    }

    #[test]
    fn decode_examples() {
        let m = DecodeModel::default();
        assert!(m.decodes(48.6, Technology::Wifi, 15));
        assert!(m.decodes(48.6, Technology::Laa, 28));
        assert!(!m.decodes(0.0, Technology::Wifi, 15));
        assert!(!m.decodes(0.0, Technology::Laa, 28));
    }

    #[test]
    fn table_validation_rejects_disorder() {
        let mut e = WifiRateTable::default().entries;
        e.swap(3, 4);
        assert!(WifiRateTable::new(e).is_err());
        let mut l = LaaMcsTable::default().entries;
        l[5].min_sinr_db = 30.0;
        assert!(LaaMcsTable::new(l).is_err());
    }

    proptest! {
        #[test]
        fn duration_non_increasing_in_mcs(bytes in 0u64..65_536, mcs in 0u8..7) {
            let t = WifiRateTable::default();
            for base in [0u8, 8] {
                let a = t.ppdu_duration(base + mcs, bytes, PREAMBLE).unwrap();
                let b = t.ppdu_duration(base + mcs + 1, bytes, PREAMBLE).unwrap();
                prop_assert!(b <= a);
            }
        }

        #[test]
        fn select_then_decode_succeeds(sinr in -20.0..60.0f64) {
            let m = DecodeModel::default();
            for tech in [Technology::Wifi, Technology::Laa] {
                let k = m.select_mcs(sinr, tech);
                if m.threshold_db(tech, k).unwrap() + m.margin_db <= sinr {
                    prop_assert!(m.decodes(sinr, tech, k));
                }
            }
        }

        #[test]
        fn capacity_linear(mcs in 0u8..=28, pdcch in 1u32..=3) {
            let t = LaaMcsTable::default();
            let per_symbol = t.bits_per_symbol_per_layer(mcs).unwrap();
            let c1 = t.subframe_capacity_bits(mcs, pdcch, 1).unwrap();
            prop_assert_eq!(c1, per_symbol * (14 - pdcch) as u64);
            prop_assert_eq!(t.subframe_capacity_bits(mcs, pdcch, 2).unwrap(), 2 * c1);
        }
    }
}
