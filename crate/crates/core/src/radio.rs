//! Node geometry, propagation and the registry of on-air transmissions.

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::math::{db_to_linear, linear_to_db, log10, sqrt};
use crate::time::SimTime;

pub const CARRIER_GHZ: f64 = 5.0;
pub const BANDWIDTH_HZ: f64 = 20e6;
/// Distances below this are clamped before evaluating path loss.
pub const MIN_DISTANCE_M: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Position { x, y, z }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        sqrt(dx * dx + dy * dy + dz * dz)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Operator {
    A,
    B,
}

impl Operator {
    pub const ALL: [Operator; 2] = [Operator::A, Operator::B];

    pub fn index(self) -> usize {
        match self {
            Operator::A => 0,
            Operator::B => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Operator::A => "A",
            Operator::B => "B",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Bs,
    Terminal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Technology {
    Wifi,
    Laa,
}

impl Technology {
    pub fn label(self) -> &'static str {
        match self {
            Technology::Wifi => "wifi",
            Technology::Laa => "laa",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u16);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadioNode {
    pub id: NodeId,
    pub operator: Operator,
    pub role: Role,
    pub technology: Technology,
    pub position: Position,
    pub tx_power_dbm: f64,
    pub antenna_gain_dbi: f64,
    pub noise_figure_db: f64,
}

impl RadioNode {
    pub fn noise_floor_dbm(&self) -> f64 {
        noise_floor_dbm(self.noise_figure_db)
    }
}

/// Thermal noise over the 20 MHz channel plus the receiver noise figure.
pub fn noise_floor_dbm(noise_figure_db: f64) -> f64 {
    -174.0 + 10.0 * log10(BANDWIDTH_HZ) + noise_figure_db
}

/// 802.11ax indoor path loss at 5 GHz on a single open floor (no wall or
/// floor penetration terms): free space up to the 10 m breakpoint, slope 3.5
/// beyond it.
pub fn path_loss_db(a: &Position, b: &Position) -> f64 {
    path_loss_at_distance_db(a.distance(b))
}

pub fn path_loss_at_distance_db(d: f64) -> f64 {
    let d = if d < MIN_DISTANCE_M { MIN_DISTANCE_M } else { d };
    let near = if d < 10.0 { d } else { 10.0 };
    let mut pl = 40.05 + 20.0 * log10(CARRIER_GHZ / 2.4) + 20.0 * log10(near);
    if d > 10.0 {
        pl += 35.0 * log10(d / 10.0);
    }
    pl
}

/// Link budget: transmit power plus both antenna gains minus path loss.
pub fn rx_power_dbm(tx_power_dbm: f64, source: &RadioNode, receiver: &RadioNode) -> f64 {
    tx_power_dbm + source.antenna_gain_dbi + receiver.antenna_gain_dbi
        - path_loss_db(&source.position, &receiver.position)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxKind {
    WifiPpdu,
    WifiAck,
    WifiBeacon,
    LaaDataSubframe,
    LaaReservation,
    LaaDrs,
}

impl TxKind {
    /// Frames carrying an 802.11 preamble, detectable by Wi-Fi preamble detection.
    pub fn is_wifi(self) -> bool {
        matches!(self, TxKind::WifiPpdu | TxKind::WifiAck | TxKind::WifiBeacon)
    }

    pub fn technology(self) -> Technology {
        if self.is_wifi() {
            Technology::Wifi
        } else {
            Technology::Laa
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TxKind::WifiPpdu => "wifi_ppdu",
            TxKind::WifiAck => "wifi_ack",
            TxKind::WifiBeacon => "wifi_beacon",
            TxKind::LaaDataSubframe => "laa_data_subframe",
            TxKind::LaaReservation => "laa_reservation",
            TxKind::LaaDrs => "laa_drs",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TxId(pub u64);

/// A time-bounded emission on the shared channel. `receivers` lists the
/// addressed nodes whose decode SINR is tracked.
#[derive(Clone, Debug, PartialEq)]
pub struct Transmission {
    pub id: TxId,
    pub source: NodeId,
    pub kind: TxKind,
    pub start: SimTime,
    pub duration: SimTime,
    pub tx_power_dbm: f64,
    pub receivers: Vec<NodeId>,
}

impl Transmission {
    pub fn end(&self) -> SimTime {
        self.start + self.duration
    }
}

/// Precomputed per-pair linear path gains (antenna gains included) and noise.
#[derive(Clone, Debug)]
pub struct RadioEnvironment {
    nodes: Vec<RadioNode>,
    gain_lin: Vec<f64>,
    noise_mw: Vec<f64>,
}

impl RadioEnvironment {
    pub fn new(nodes: Vec<RadioNode>) -> Self {
        let n = nodes.len();
        for (i, node) in nodes.iter().enumerate() {
            assert_eq!(node.id.index(), i, "node ids must be dense and ordered");
        }
        let mut gain_lin = Vec::with_capacity(n * n);
        for src in &nodes {
            for dst in &nodes {
                let g = src.antenna_gain_dbi + dst.antenna_gain_dbi
                    - path_loss_db(&src.position, &dst.position);
                gain_lin.push(db_to_linear(g));
            }
        }
        let noise_mw = nodes.iter().map(|n| db_to_linear(n.noise_floor_dbm())).collect();
        RadioEnvironment { nodes, gain_lin, noise_mw }
    }

    pub fn nodes(&self) -> &[RadioNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &RadioNode {
        &self.nodes[id.index()]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    pub fn rx_mw(&self, tx_mw: f64, source: NodeId, receiver: NodeId) -> f64 {
        tx_mw * self.gain_lin[source.index() * self.nodes.len() + receiver.index()]
    }

    pub fn rx_dbm(&self, tx_power_dbm: f64, source: NodeId, receiver: NodeId) -> f64 {
        linear_to_db(self.rx_mw(db_to_linear(tx_power_dbm), source, receiver))
    }

    pub fn noise_mw(&self, node: NodeId) -> f64 {
        self.noise_mw[node.index()]
    }
}

/// Worst-segment SINR of `target` at `receiver` given every transmission that
/// may overlap it. Each maximal sub-interval of the target with a constant
/// interferer set is evaluated; the minimum governs decoding.
pub fn worst_segment_sinr_db(
    env: &RadioEnvironment,
    target: &Transmission,
    receiver: NodeId,
    others: &[Transmission],
) -> f64 {
    let (t0, t1) = (target.start, target.end());
    let overlapping: Vec<&Transmission> = others
        .iter()
        .filter(|o| o.id != target.id && o.start < t1 && o.end() > t0)
        .collect();
    let mut cuts: Vec<SimTime> = alloc::vec![t0];
    for o in &overlapping {
        if o.start > t0 {
            cuts.push(o.start);
        }
        if o.end() < t1 {
            cuts.push(o.end());
        }
    }
    cuts.sort();
    cuts.dedup();
    let signal = env.rx_mw(db_to_linear(target.tx_power_dbm), target.source, receiver);
    let noise = env.noise_mw(receiver);
    let mut worst = f64::INFINITY;
    for &s in &cuts {
        let interference: f64 = overlapping
            .iter()
            .filter(|o| o.start <= s && o.end() > s && o.source != receiver)
            .map(|o| env.rx_mw(db_to_linear(o.tx_power_dbm), o.source, receiver))
            .sum();
        let sinr = signal / (noise + interference);
        if sinr < worst {
            worst = sinr;
        }
    }
    linear_to_db(worst)
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ChannelError {
    #[error("node {0:?} already has an active transmission")]
    SourceBusy(NodeId),
    #[error("transmission {0:?} is not active")]
    NotActive(TxId),
    #[error("transmission duration must be positive")]
    ZeroDuration,
}

/// Per-receiver decode tracking of an active transmission.
#[derive(Clone, Debug)]
pub struct RxTrack {
    pub node: NodeId,
    pub signal_mw: f64,
    pub min_sinr_lin: f64,
    pub noise_only_lin: f64,
    /// The receiver itself transmitted during part of the frame.
    pub half_duplex: bool,
}

impl RxTrack {
    pub fn sinr_db(&self) -> f64 {
        if self.half_duplex {
            f64::NEG_INFINITY
        } else {
            linear_to_db(self.min_sinr_lin)
        }
    }

    pub fn noise_only_sinr_db(&self) -> f64 {
        linear_to_db(self.noise_only_lin)
    }
}

#[derive(Clone, Debug)]
pub struct ActiveTx {
    pub tx: Transmission,
    pub tx_mw: f64,
    pub rx: Vec<RxTrack>,
}

/// Transmissions currently on air. A transmission is active exactly on
/// `[start, start + duration)`; the caller ends it at `start + duration`.
#[derive(Clone, Debug, Default)]
pub struct ChannelRegistry {
    active: Vec<ActiveTx>,
    begins: u64,
    ends: u64,
}

impl ChannelRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn active(&self) -> &[ActiveTx] {
        &self.active
    }

    pub fn begins(&self) -> u64 {
        self.begins
    }

    pub fn ends(&self) -> u64 {
        self.ends
    }

    pub fn is_transmitting(&self, node: NodeId) -> bool {
        self.active.iter().any(|a| a.tx.source == node)
    }

    fn interference_mw(&self, env: &RadioEnvironment, exclude: TxId, receiver: NodeId) -> f64 {
        self.active
            .iter()
            .filter(|a| a.tx.id != exclude && a.tx.source != receiver)
            .map(|a| env.rx_mw(a.tx_mw, a.tx.source, receiver))
            .sum()
    }

    pub fn begin(&mut self, env: &RadioEnvironment, tx: Transmission) -> Result<(), ChannelError> {
        if tx.duration == SimTime::ZERO {
            return Err(ChannelError::ZeroDuration);
        }
        if self.is_transmitting(tx.source) {
            return Err(ChannelError::SourceBusy(tx.source));
        }
        let tx_mw = db_to_linear(tx.tx_power_dbm);
        let source = tx.source;
        let mut rx = Vec::with_capacity(tx.receivers.len());
        for &r in &tx.receivers {
            let signal = env.rx_mw(tx_mw, source, r);
            let noise = env.noise_mw(r);
            rx.push(RxTrack {
                node: r,
                signal_mw: signal,
                min_sinr_lin: f64::INFINITY,
                noise_only_lin: signal / noise,
                half_duplex: self.is_transmitting(r),
            });
        }
        let new_id = tx.id;
        self.active.push(ActiveTx { tx, tx_mw, rx });
        self.begins += 1;
        // A new segment starts for every active transmission.
        for i in 0..self.active.len() {
            let id = self.active[i].tx.id;
            for j in 0..self.active[i].rx.len() {
                let node = self.active[i].rx[j].node;
                let interference = self.interference_mw(env, id, node);
                let track = &mut self.active[i].rx[j];
                let sinr = track.signal_mw / (env.noise_mw(node) + interference);
                if sinr < track.min_sinr_lin {
                    track.min_sinr_lin = sinr;
                }
                if node == source && id != new_id {
                    track.half_duplex = true;
                }
            }
        }
        Ok(())
    }

    pub fn end(&mut self, id: TxId) -> Result<ActiveTx, ChannelError> {
        let pos = self
            .active
            .iter()
            .position(|a| a.tx.id == id)
            .ok_or(ChannelError::NotActive(id))?;
        self.ends += 1;
        Ok(self.active.swap_remove(pos))
    }

    pub fn get(&self, id: TxId) -> Option<&ActiveTx> {
        self.active.iter().find(|a| a.tx.id == id)
    }

    /// Total received power at `receiver` from every active transmission other
    /// than its own, in mW (noise excluded).
    pub fn signal_mw_at(&self, env: &RadioEnvironment, receiver: NodeId) -> f64 {
        self.active
            .iter()
            .filter(|a| a.tx.source != receiver)
            .map(|a| env.rx_mw(a.tx_mw, a.tx.source, receiver))
            .sum()
    }

    /// Sensed energy including the receiver noise floor.
    pub fn sensed_energy_dbm(&self, env: &RadioEnvironment, receiver: NodeId) -> f64 {
        linear_to_db(self.signal_mw_at(env, receiver) + env.noise_mw(receiver))
    }

    /// Strongest active Wi-Fi frame at `receiver` (other than its own), in dBm.
    pub fn strongest_wifi_dbm(&self, env: &RadioEnvironment, receiver: NodeId) -> Option<f64> {
        self.active
            .iter()
            .filter(|a| a.tx.kind.is_wifi() && a.tx.source != receiver)
            .map(|a| env.rx_mw(a.tx_mw, a.tx.source, receiver))
            .fold(None, |acc: Option<f64>, p| Some(acc.map_or(p, |m| if p > m { p } else { m })))
            .map(linear_to_db)
    }
}
