//! The run engine: owns the scheduler, the channel registry and every node's
//! MAC state, and turns a [`SimConfig`] into a [`RunResult`].
//!
//! Transmission ends are kept in their own queue and are processed before
//! any other event at the same instant, so an interval `[start, end)` never
//! overlaps one that begins at `end`.

mod flows;
mod laa_node;
mod wifi_node;

use alloc::collections::{BTreeMap, BinaryHeap};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, SimConfig, TrafficModel, Transport};
use crate::kernel::{EventHandle, RngStream, Scheduler};
use crate::link::{DecodeModel, LTE_SUBFRAME};
use crate::log::{LogRecord, RxOutcome, TxRecord};
use crate::metrics::{latency_stats, CollisionStats, LatencyStats, NetworkKey, OccupancyLedger};
use crate::radio::{
    ChannelRegistry, NodeId, Operator, RadioEnvironment, Role, Technology, Transmission, TxId, TxKind,
};
use crate::scenario::Topology;
use crate::time::SimTime;
use crate::traffic::RlcMode;

use flows::{Flow, Packet};
use laa_node::{LaaEnb, TbStore};
use wifi_node::WifiNode;

pub use flows::{FlowClass, FlowRecord, StreamRecord};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Keep backoff, CWS, HARQ and transmission records.
    pub record_events: bool,
    /// Keep one record per transmission even without the full event log.
    pub record_tx_log: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Ev {
    Grant { node: NodeId, ac: u8 },
    AckSend { from: NodeId, to: NodeId, ac: u8 },
    AckTimeout { node: NodeId, ac: u8 },
    Beacon { node: NodeId },
    FtpArrival { flow: u32 },
    AtBs { packet: u32 },
    AckAtServer { flow: u32, ack: u32 },
    Rto { flow: u32, generation: u32 },
    StreamPacket { flow: u32 },
    LaaGrant { node: NodeId },
    HarqFeedback { node: NodeId, tb: u64, ack: bool },
    RlcStatus { node: NodeId, ue: u16, tick: SimTime },
    DrsWindow { node: NodeId, k: u64 },
    DrsCheck { node: NodeId },
    DrsWindowEnd { node: NodeId, k: u64 },
}

#[derive(Clone, Debug)]
enum TxMeta {
    WifiData { ac: u8, dest: NodeId, mcs: u8 },
    WifiAck { to: NodeId, ac: u8 },
    Beacon,
    LaaData { tbs: Vec<u64> },
    Reservation,
    Drs,
}

#[derive(Clone, Debug)]
struct ActiveMeta {
    id: TxId,
    meta: TxMeta,
    overlapped: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TxopRecord {
    pub node: NodeId,
    pub grant: SimTime,
    pub reservation: SimTime,
    pub data_subframes: u32,
    pub end: SimTime,
}

impl TxopRecord {
    pub fn duration(&self) -> SimTime {
        self.end - self.grant
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrsStats {
    pub windows: u64,
    pub standalone: u64,
    pub embedded: u64,
    pub missed: u64,
    pub airtime: SimTime,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounters {
    pub events: u64,
    pub transmissions: u64,
    pub wifi_drops: u64,
    pub harq_exhausted: u64,
    pub rlc_retransmitted_bytes: u64,
    pub tcp_retransmissions: u64,
    pub tcp_timeouts: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: SimConfig,
    pub topology: Topology,
    pub window: (SimTime, SimTime),
    pub flows: Vec<FlowRecord>,
    pub streams: Vec<StreamRecord>,
    /// Per-network occupancy fraction over `window`.
    pub occupancy: BTreeMap<NetworkKey, f64>,
    /// Union occupancy of all Wi-Fi networks.
    pub wifi_combined_occupancy: f64,
    /// Union occupancy of every network.
    pub total_occupancy: f64,
    pub collisions: BTreeMap<NetworkKey, CollisionStats>,
    pub drs: DrsStats,
    pub txops: Vec<TxopRecord>,
    pub data_latency: Option<LatencyStats>,
    pub voice_latency: Option<LatencyStats>,
    pub tx_log: Vec<TxRecord>,
    pub events: Vec<LogRecord>,
    pub counters: RunCounters,
    pub audit: AuditReport,
}

impl RunResult {
    pub fn network(&self, operator: Operator) -> NetworkKey {
        NetworkKey { operator, technology: crate::scenario::technology(self.config.step, operator) }
    }

    pub fn occupancy_of(&self, operator: Operator) -> f64 {
        self.occupancy.get(&self.network(operator)).copied().unwrap_or(0.0)
    }

    pub fn collision_total(&self) -> CollisionStats {
        let mut c = CollisionStats::default();
        for s in self.collisions.values() {
            c.merge(s);
        }
        c
    }

    /// Throughputs (bit/s) of completed post-warmup FTP flows of `operator`.
    pub fn throughputs(&self, operator: Operator) -> Vec<f64> {
        self.flows
            .iter()
            .filter(|f| f.operator == operator && f.counted)
            .filter_map(|f| f.throughput_bps)
            .collect()
    }
}

pub struct Simulation {
    world: World,
}

impl Simulation {
    pub fn new(cfg: SimConfig, opts: RunOptions) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(Simulation { world: World::new(cfg, opts)? })
    }

    pub fn now(&self) -> SimTime {
        self.world.sched.now()
    }

    pub fn end_time(&self) -> SimTime {
        self.world.t_end
    }

    pub fn topology(&self) -> &Topology {
        &self.world.topo
    }

    /// Advances to `t` (capped at the run end), dispatching every event due.
    pub fn run_until(&mut self, t: SimTime) {
        let t = t.min(self.world.t_end);
        self.world.run_until(t);
    }

    /// Checks byte conservation and registry bookkeeping at the current
    /// instant.
    pub fn audit(&self) -> AuditReport {
        self.world.audit()
    }

    pub fn finish(mut self) -> RunResult {
        let end = self.world.t_end;
        self.world.run_until(end);
        self.world.into_result()
    }

    pub fn run(self) -> RunResult {
        self.finish()
    }
}

/// Convenience wrapper: validate, build and run.
pub fn run(cfg: SimConfig, opts: RunOptions) -> Result<RunResult, ConfigError> {
    Ok(Simulation::new(cfg, opts)?.run())
}

struct World {
    cfg: SimConfig,
    opts: RunOptions,
    topo: Topology,
    env: RadioEnvironment,
    reg: ChannelRegistry,
    sched: Scheduler<Ev>,
    ends: BinaryHeap<Reverse<(SimTime, TxId)>>,
    active_meta: Vec<ActiveMeta>,
    next_tx: u64,
    decode: DecodeModel,
    t_end: SimTime,
    warmup: SimTime,
    rlc_mode: RlcMode,

    /// Whether each node currently senses the medium busy.
    busy: Vec<bool>,
    wifi: Vec<Option<WifiNode>>,
    laa: Vec<Option<LaaEnb>>,
    tbs: TbStore,
    backoff_rng: Vec<RngStream>,

    packets: Vec<Packet>,
    flows: Vec<Flow>,
    /// Per terminal: next RLC sequence number and in-order release state.
    links: Vec<flows::LinkRx>,

    ledger: OccupancyLedger,
    collisions: BTreeMap<NetworkKey, CollisionStats>,
    txops: Vec<TxopRecord>,
    drs: DrsStats,
    events: Vec<LogRecord>,
    tx_log: Vec<TxRecord>,
    counters: RunCounters,
    violations: Vec<String>,
}

impl World {
    fn new(cfg: SimConfig, opts: RunOptions) -> Result<Self, ConfigError> {
        let topo = Topology::build(&cfg).map_err(|m| ConfigError { key: "scenario".into(), message: m })?;
        let env = RadioEnvironment::new(topo.nodes.clone());
        let n = topo.nodes.len();
        let t_end = cfg.duration();
        let warmup = cfg.warmup();
        let decode = cfg.link.decode_model();
        let rlc_mode = cfg.rlc_mode();
        let backoff_rng = (0..n).map(|i| RngStream::new(cfg.seed, &format!("mac/{i}/backoff"))).collect();
        let mut w = World {
            opts,
            env,
            reg: ChannelRegistry::new(),
            sched: Scheduler::new(),
            ends: BinaryHeap::new(),
            active_meta: Vec::new(),
            next_tx: 0,
            decode,
            t_end,
            warmup,
            rlc_mode,
            busy: vec![false; n],
            wifi: (0..n).map(|_| None).collect(),
            laa: (0..n).map(|_| None).collect(),
            tbs: TbStore::default(),
            backoff_rng,
            packets: Vec::new(),
            flows: Vec::new(),
            links: (0..n).map(|_| flows::LinkRx::default()).collect(),
            ledger: OccupancyLedger::new(warmup, t_end),
            collisions: BTreeMap::new(),
            txops: Vec::new(),
            drs: DrsStats::default(),
            events: Vec::new(),
            tx_log: Vec::new(),
            counters: RunCounters::default(),
            violations: Vec::new(),
            topo,
            cfg,
        };
        for op in Operator::ALL {
            let key = NetworkKey { operator: op, technology: crate::scenario::technology(w.cfg.step, op) };
            w.collisions.insert(key, CollisionStats::default());
        }
        w.init_nodes();
        w.init_traffic();
        Ok(w)
    }

    fn init_nodes(&mut self) {
        let voice_terminals = self.voice_terminals();
        for i in 0..self.topo.nodes.len() {
            let node = self.topo.nodes[i].clone();
            match node.technology {
                Technology::Wifi => {
                    let ap = if node.role == Role::Bs { None } else { self.topo.serving[i] };
                    let voice = node.role == Role::Bs
                        && self.topo.served_by(node.id).iter().any(|t| voice_terminals.contains(t));
                    self.wifi[i] = Some(WifiNode::new(&self.cfg, node.id, ap, voice));
                }
                Technology::Laa if node.role == Role::Bs => {
                    let ues = self.topo.served_by(node.id);
                    let cqi = ues.iter().map(|&u| self.noise_only_snr_db(node.id, u)).collect();
                    self.laa[i] = Some(LaaEnb::new(&self.cfg, node.id, ues, cqi));
                }
                Technology::Laa => {}
            }
        }
        self.init_beacons();
        self.init_drs();
    }

    fn noise_only_snr_db(&self, from: NodeId, to: NodeId) -> f64 {
        let src = self.env.node(from);
        let p = self.env.rx_mw(crate::math::db_to_linear(src.tx_power_dbm), from, to);
        crate::math::linear_to_db(p / self.env.noise_mw(to))
    }

    fn technology_of(&self, node: NodeId) -> Technology {
        self.topo.nodes[node.index()].technology
    }

    fn network_of(&self, node: NodeId) -> NetworkKey {
        let n = &self.topo.nodes[node.index()];
        NetworkKey { operator: n.operator, technology: n.technology }
    }

    fn voice_terminals(&self) -> Vec<NodeId> {
        if self.cfg.traffic.model != TrafficModel::Ftp1Voice {
            return Vec::new();
        }
        self.topo.terminals(Operator::B).take(self.cfg.traffic.voice_terminals).map(|n| n.id).collect()
    }

    fn log(&mut self, rec: LogRecord) {
        if self.opts.record_events {
            self.events.push(rec);
        }
    }

    fn log_backoff(&mut self, node: NodeId, value: u32, window: u32) {
        let t = self.sched.now();
        self.log(LogRecord::BackoffDraw { t, node, value, window });
    }

    // ---- event loop ----

    fn run_until(&mut self, limit: SimTime) {
        loop {
            let next_end = self.ends.peek().map(|Reverse((t, _))| *t);
            let next_ev = self.sched.peek_time();
            let take_end = match (next_end, next_ev) {
                (Some(e), Some(v)) => e <= v,
                (Some(_), None) => true,
                (None, _) => false,
            };
            if take_end {
                let t = next_end.expect("checked");
                if t > limit {
                    break;
                }
                let Reverse((_, id)) = self.ends.pop().expect("peeked");
                self.sched.advance_to(t);
                self.counters.events += 1;
                self.on_tx_end(id);
            } else {
                match self.sched.pop_until(limit) {
                    Some((_, ev)) => {
                        self.counters.events += 1;
                        self.dispatch(ev);
                    }
                    None => break,
                }
            }
        }
        if self.sched.now() < limit {
            self.sched.advance_to(limit);
        }
    }

    fn dispatch(&mut self, ev: Ev) {
        match ev {
            Ev::Grant { node, ac } => self.wifi_grant(node, ac as usize),
            Ev::AckSend { from, to, ac } => self.wifi_send_ack(from, to, ac),
            Ev::AckTimeout { node, ac } => self.wifi_ack_timeout(node, ac as usize),
            Ev::Beacon { node } => self.wifi_beacon(node),
            Ev::FtpArrival { flow } => self.ftp_arrival(flow),
            Ev::AtBs { packet } => self.enqueue_downlink(packet),
            Ev::AckAtServer { flow, ack } => self.tcp_ack_at_server(flow, ack),
            Ev::Rto { flow, generation } => self.tcp_rto(flow, generation),
            Ev::StreamPacket { flow } => self.stream_packet(flow),
            Ev::LaaGrant { node } => self.laa_grant(node),
            Ev::HarqFeedback { node, tb, ack } => self.harq_feedback(node, tb, ack),
            Ev::RlcStatus { node, ue, tick } => self.rlc_status(node, ue as usize, tick),
            Ev::DrsWindow { node, k } => self.drs_window(node, k),
            Ev::DrsCheck { node } => self.drs_check(node),
            Ev::DrsWindowEnd { node, k } => self.drs_window_end(node, k),
        }
    }

    fn schedule_at(&mut self, t: SimTime, ev: Ev) -> Option<EventHandle> {
        if t > self.t_end {
            return None;
        }
        Some(self.sched.schedule_at(t, ev))
    }

    // ---- channel plumbing ----

    fn begin_tx(
        &mut self,
        source: NodeId,
        kind: TxKind,
        duration: SimTime,
        receivers: Vec<NodeId>,
        meta: TxMeta,
    ) -> TxId {
        let id = TxId(self.next_tx);
        self.next_tx += 1;
        let now = self.sched.now();
        let tx = Transmission {
            id,
            source,
            kind,
            start: now,
            duration,
            tx_power_dbm: self.topo.nodes[source.index()].tx_power_dbm,
            receivers,
        };
        if let Err(e) = self.reg.begin(&self.env, tx) {
            panic!("channel contract violated at {now:?}: {e}");
        }
        let overlapped = !self.active_meta.is_empty();
        for m in &mut self.active_meta {
            m.overlapped = true;
        }
        self.active_meta.push(ActiveMeta { id, meta, overlapped });
        self.ends.push(Reverse((now + duration, id)));
        self.counters.transmissions += 1;
        self.refresh_sensing();
        id
    }

    fn on_tx_end(&mut self, id: TxId) {
        let active = match self.reg.end(id) {
            Ok(a) => a,
            Err(e) => panic!("channel contract violated: {e}"),
        };
        let pos = self.active_meta.iter().position(|m| m.id == id).expect("meta for active tx");
        let meta = self.active_meta.swap_remove(pos);
        let key = self.network_of(active.tx.source);
        self.ledger.record(key, active.tx.start, active.tx.end());
        let outcomes = match meta.meta.clone() {
            TxMeta::WifiData { ac, dest, mcs } => self.wifi_data_end(&active, ac as usize, dest, mcs),
            TxMeta::WifiAck { to, ac } => self.wifi_ack_end(&active, to, ac as usize),
            TxMeta::Beacon => self.wifi_beacon_end(active.tx.source),
            TxMeta::LaaData { tbs } => self.laa_subframe_end(&active, &tbs),
            TxMeta::Reservation => self.laa_reservation_end(active.tx.source),
            TxMeta::Drs => {
                self.drs.airtime += active.tx.duration;
                self.refresh_sensing();
                Vec::new()
            }
        };
        if self.opts.record_events || self.opts.record_tx_log {
            let mcs = match meta.meta {
                TxMeta::WifiData { mcs, .. } => Some(mcs),
                _ => None,
            };
            let rec = TxRecord {
                id: id.0,
                node: active.tx.source,
                kind: active.tx.kind,
                start: active.tx.start,
                duration: active.tx.duration,
                power_dbm: active.tx.tx_power_dbm,
                mcs,
                outcomes,
                overlapped: meta.overlapped,
            };
            if self.opts.record_tx_log {
                self.tx_log.push(rec.clone());
            }
            self.log(LogRecord::Tx(rec));
        }
    }

    /// Re-evaluates every contending node's view of the medium after the set
    /// of active transmissions changed.
    fn refresh_sensing(&mut self) {
        let now = self.sched.now();
        for i in 0..self.busy.len() {
            let id = NodeId(i as u16);
            let busy = if let Some(w) = &self.wifi[i] {
                self.reg.is_transmitting(id)
                    || w.cca.busy(self.reg.strongest_wifi_dbm(&self.env, id), self.reg.sensed_energy_dbm(&self.env, id))
            } else if let Some(e) = &self.laa[i] {
                self.reg.is_transmitting(id) || e.lbt.busy(self.reg.sensed_energy_dbm(&self.env, id))
            } else {
                continue;
            };
            if busy == self.busy[i] {
                continue;
            }
            self.busy[i] = busy;
            if self.wifi[i].is_some() {
                self.wifi_medium_change(id, busy, now);
            } else {
                self.laa_medium_change(id, busy, now);
            }
        }
    }

    fn record_decode(&mut self, source: NodeId, start: SimTime, success: bool, noise_only_success: bool) {
        if start < self.warmup {
            return;
        }
        let key = self.network_of(source);
        self.collisions.entry(key).or_default().record(success, noise_only_success);
    }

    fn outcome(node: NodeId, sinr_db: f64, success: bool) -> RxOutcome {
        RxOutcome { node, sinr_db: if sinr_db.is_finite() { sinr_db } else { -999.0 }, success }
    }

    // ---- audit and results ----

    fn audit(&self) -> AuditReport {
        let mut v = self.violations.clone();
        let active = self.reg.active().len() as u64;
        if self.reg.begins() - self.reg.ends() != active {
            v.push(format!("registry: {} begins, {} ends, {} active", self.reg.begins(), self.reg.ends(), active));
        }
        v.extend(self.audit_flows());
        let limit = SimTime::from_millis_f64(self.cfg.laa.txop_ms);
        for t in &self.txops {
            if t.duration() > limit {
                v.push(format!("txop at {:?} on {:?} lasts {:?}", t.grant, t.node, t.duration()));
            }
        }
        let total = self.ledger.fraction(&self.ledger.networks().copied().collect::<Vec<_>>());
        if total > 1.0 + 1e-12 {
            v.push(format!("occupancy union {total} exceeds 1"));
        }
        AuditReport { violations: v }
    }

    fn into_result(mut self) -> RunResult {
        let audit = self.audit();
        let keys: Vec<NetworkKey> = self.collisions.keys().copied().collect();
        let occupancy = keys.iter().map(|k| (*k, self.ledger.fraction(&[*k]))).collect();
        let wifi_keys: Vec<NetworkKey> = keys.iter().copied().filter(|k| k.technology == Technology::Wifi).collect();
        let wifi_combined_occupancy = self.ledger.fraction(&wifi_keys);
        let total_occupancy = self.ledger.fraction(&keys);
        let (flows, streams) = self.flow_records();
        let mut data = Vec::new();
        let mut voice = Vec::new();
        for f in &self.flows {
            match f.class {
                FlowClass::Ftp if f.arrival >= self.warmup => data.extend_from_slice(&f.latencies),
                FlowClass::Ftp => {}
                FlowClass::Voice => voice.extend_from_slice(&f.latencies),
                FlowClass::Cbr => {}
            }
        }
        for f in &self.flows {
            if let Some(tcp) = &f.tcp {
                self.counters.tcp_retransmissions += tcp.sender.retransmits() as u64;
                self.counters.tcp_timeouts += tcp.sender.timeouts() as u64;
            }
        }
        RunResult {
            window: (self.warmup, self.t_end),
            flows,
            streams,
            occupancy,
            wifi_combined_occupancy,
            total_occupancy,
            collisions: self.collisions,
            drs: self.drs,
            txops: self.txops,
            data_latency: latency_stats(&data),
            voice_latency: latency_stats(&voice),
            tx_log: self.tx_log,
            events: self.events,
            counters: self.counters,
            audit,
            topology: self.topo,
            config: self.cfg,
        }
    }

    fn check_subframe_grid(&mut self, node: NodeId) {
        let now = self.sched.now();
        if !now.is_multiple_of(LTE_SUBFRAME) {
            self.violations.push(format!("data subframe of {node:?} starts off-grid at {now:?}"));
        }
    }

    fn transport(&self) -> Transport {
        self.cfg.transport
    }
}
