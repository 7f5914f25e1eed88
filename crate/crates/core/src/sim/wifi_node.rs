//! Wi-Fi AP and STA behaviour: per-AC queues, A-MPDU aggregation, the
//! data/ACK exchange with retries, and beacons.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::config::SimConfig;
use crate::contention::ChannelAccess;
use crate::kernel::{EventHandle, RngStream};
use crate::log::RxOutcome;
use crate::radio::{ActiveTx, NodeId, Technology, TxKind};
use crate::time::SimTime;
use crate::wifi::{ack_timeout, AccessPhase, CcaConfig, EdcaParams, TxCompletion, WifiAccess, ACK_DURATION, SIFS};

use super::{Ev, TxMeta, World};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(super) enum Item {
    Packet(u32),
    TcpAck { flow: u32, ack: u32 },
}

#[derive(Clone, Debug)]
pub(super) struct Aggregate {
    pub dest: NodeId,
    pub items: Vec<Item>,
    pub bytes: u64,
    /// The receiver already decoded a copy; retransmissions carry nothing new.
    pub delivered: bool,
}

#[derive(Clone, Debug)]
pub(super) struct Ac {
    pub access: WifiAccess,
    pub queues: BTreeMap<NodeId, VecDeque<Item>>,
    pub last_dest: Option<NodeId>,
    pub inflight: Option<Aggregate>,
    pub grant: Option<(EventHandle, SimTime)>,
    /// Between winning access and resolving the ACK (or the beacon end).
    pub in_exchange: bool,
    pub ack_ok: bool,
}

impl Ac {
    fn new(params: EdcaParams) -> Self {
        Ac {
            access: WifiAccess::new(params, Some(SimTime::ZERO)),
            queues: BTreeMap::new(),
            last_dest: None,
            inflight: None,
            grant: None,
            in_exchange: false,
            ack_ok: false,
        }
    }

    fn has_queued(&self) -> bool {
        !self.queues.is_empty()
    }

    /// Next destination with queued items after the last one served.
    fn next_dest(&self) -> Option<NodeId> {
        let after = self.last_dest.and_then(|l| self.queues.range(NodeId(l.0 + 1)..).next().map(|(k, _)| *k));
        after.or_else(|| self.queues.keys().next().copied())
    }
}

#[derive(Clone, Debug)]
pub(super) struct WifiNode {
    pub cca: CcaConfig,
    /// Best effort, then voice when the node carries voice traffic.
    pub acs: Vec<Ac>,
    pub ap: Option<NodeId>,
    /// Latest SINR the peer decoded us at, for rate selection.
    pub peer_sinr: BTreeMap<NodeId, f64>,
    pub beacon_pending: bool,
    pub max_ampdu_bytes: u64,
}

impl WifiNode {
    pub fn new(cfg: &SimConfig, _id: NodeId, ap: Option<NodeId>, voice: bool) -> Self {
        let mut acs = vec![Ac::new(cfg.wifi.edca())];
        if voice {
            acs.push(Ac::new(EdcaParams::VOICE));
        }
        WifiNode {
            cca: cfg.wifi.cca(),
            acs,
            ap,
            peer_sinr: BTreeMap::new(),
            beacon_pending: false,
            max_ampdu_bytes: cfg.wifi.max_ampdu_bytes as u64,
        }
    }

    fn has_work(&self, ac: usize) -> bool {
        let a = &self.acs[ac];
        (ac == 0 && self.beacon_pending) || a.inflight.is_some() || a.has_queued()
    }
}

impl World {
    fn wifi_mut(&mut self, node: NodeId) -> &mut WifiNode {
        self.wifi[node.index()].as_mut().expect("wifi node")
    }

    fn item_bytes(&self, item: Item) -> u64 {
        match item {
            Item::Packet(pid) => self.packets[pid as usize].bytes as u64,
            Item::TcpAck { .. } => self.cfg.wifi.tcp_ack_bytes as u64,
        }
    }

    pub(super) fn init_beacons(&mut self) {
        let interval = SimTime::from_millis_f64(self.cfg.wifi.beacon_interval_ms);
        if interval == SimTime::ZERO {
            return;
        }
        for i in 0..self.wifi.len() {
            let is_ap = self.wifi[i].as_ref().is_some_and(|w| w.ap.is_none());
            if !is_ap {
                continue;
            }
            let mut rng = RngStream::new(self.cfg.seed, &format!("wifi/{i}/beacon"));
            let phase = SimTime::from_micros(rng.uniform_int(0, (interval.as_nanos() / 1000) as i64 - 1) as u64);
            self.schedule_at(phase, Ev::Beacon { node: NodeId(i as u16) });
        }
    }

    /// Queues an item for `dest` on access category `ac` (falling back to
    /// best effort if the node has no voice queue).
    pub(super) fn wifi_enqueue(&mut self, node: NodeId, dest: NodeId, item: Item, ac: usize) {
        let w = self.wifi_mut(node);
        let ac = if ac < w.acs.len() { ac } else { 0 };
        w.acs[ac].queues.entry(dest).or_default().push_back(item);
        self.wifi_kick(node, ac);
    }

    /// Starts channel access for `ac` if it has work and is not already
    /// contending or in an exchange.
    fn wifi_kick(&mut self, node: NodeId, ac: usize) {
        let now = self.sched.now();
        let i = node.index();
        let w = self.wifi[i].as_mut().expect("wifi node");
        if !w.has_work(ac) {
            return;
        }
        let a = &mut w.acs[ac];
        if a.in_exchange || a.access.phase() != AccessPhase::Idle {
            return;
        }
        let cw = a.access.cw();
        let drawn = a.access.request(now, &mut self.backoff_rng[i]);
        if let Some(n) = drawn {
            self.log_backoff(node, n, cw);
        }
        self.wifi_sync_grant(node, ac);
    }

    /// Keeps the pending grant event aligned with the access function.
    fn wifi_sync_grant(&mut self, node: NodeId, ac: usize) {
        let now = self.sched.now();
        let a = &mut self.wifi[node.index()].as_mut().expect("wifi node").acs[ac];
        let mut due = a.access.grant_time();
        if due.is_some_and(|g| g < now) {
            a.access.restart_defer_at(now);
            due = a.access.grant_time();
        }
        match a.grant {
            Some((_, t)) if Some(t) == due => return,
            Some((h, _)) => {
                self.sched.cancel(h);
                a.grant = None;
            }
            None => {}
        }
        if let Some(g) = due {
            let h = self.sched.schedule_at(g, Ev::Grant { node, ac: ac as u8 });
            a.grant = Some((h, g));
        }
    }

    pub(super) fn wifi_medium_change(&mut self, node: NodeId, busy: bool, now: SimTime) {
        let i = node.index();
        let n_acs = self.wifi[i].as_ref().expect("wifi node").acs.len();
        for ac in 0..n_acs {
            let a = &mut self.wifi[i].as_mut().expect("wifi node").acs[ac];
            if busy {
                let cw = a.access.cw();
                let out = a.access.on_busy(now, &mut self.backoff_rng[i]);
                if !out.grant_due_now {
                    if let Some((h, _)) = a.grant.take() {
                        self.sched.cancel(h);
                    }
                }
                if let Some(n) = out.drawn {
                    self.log_backoff(node, n, cw);
                }
            } else {
                a.access.on_idle(now);
                self.wifi_sync_grant(node, ac);
            }
        }
    }

    pub(super) fn wifi_grant(&mut self, node: NodeId, ac: usize) {
        let i = node.index();
        self.wifi_mut(node).acs[ac].grant = None;
        if self.reg.is_transmitting(node) {
            // Another queue of this station owns the air: internal collision.
            let a = &mut self.wifi[i].as_mut().expect("wifi node").acs[ac];
            let cw = a.access.cw();
            let n = a.access.start_backoff(&mut self.backoff_rng[i]);
            self.log_backoff(node, n, cw);
            self.wifi_sync_grant(node, ac);
            return;
        }
        let w = self.wifi_mut(node);
        w.acs[ac].access.granted();
        if !w.has_work(ac) {
            return;
        }
        w.acs[ac].in_exchange = true;
        if ac == 0 && w.beacon_pending {
            w.beacon_pending = false;
            let d = SimTime::from_micros_f64(self.cfg.wifi.beacon_duration_us);
            self.begin_tx(node, TxKind::WifiBeacon, d, Vec::new(), TxMeta::Beacon);
            return;
        }
        if w.acs[ac].inflight.is_none() {
            self.wifi_build_aggregate(node, ac);
        }
        let (dest, bytes) = {
            let agg = self.wifi_mut(node).acs[ac].inflight.as_ref().expect("aggregate");
            (agg.dest, agg.bytes)
        };
        let sinr = match self.wifi_mut(node).peer_sinr.get(&dest) {
            Some(&s) => s,
            None => self.noise_only_snr_db(node, dest),
        };
        let mcs = self.decode.select_mcs(sinr, Technology::Wifi).min(self.cfg.wifi.max_mcs);
        let preamble = SimTime::from_micros_f64(self.cfg.wifi.preamble_us);
        let d = self.decode.wifi.ppdu_duration(mcs, bytes, preamble).expect("valid wifi mcs");
        self.begin_tx(node, TxKind::WifiPpdu, d, vec![dest], TxMeta::WifiData { ac: ac as u8, dest, mcs });
    }

    fn wifi_build_aggregate(&mut self, node: NodeId, ac: usize) {
        let w = self.wifi[node.index()].as_ref().expect("wifi node");
        let Some(dest) = w.acs[ac].next_dest() else { return };
        let cap = w.max_ampdu_bytes;
        let mut items = Vec::new();
        let mut bytes = 0u64;
        let queue = &w.acs[ac].queues[&dest];
        for &item in queue {
            let b = self.item_bytes(item);
            if !items.is_empty() && bytes + b > cap {
                break;
            }
            items.push(item);
            bytes += b;
        }
        let a = &mut self.wifi_mut(node).acs[ac];
        let q = a.queues.get_mut(&dest).expect("queue");
        q.drain(..items.len());
        if q.is_empty() {
            a.queues.remove(&dest);
        }
        a.last_dest = Some(dest);
        a.inflight = Some(Aggregate { dest, items, bytes, delivered: false });
    }

    pub(super) fn wifi_data_end(&mut self, active: &ActiveTx, ac: usize, dest: NodeId, mcs: u8) -> Vec<RxOutcome> {
        let src = active.tx.source;
        let now = self.sched.now();
        let track = active.rx.iter().find(|r| r.node == dest).expect("addressed receiver");
        let sinr = track.sinr_db();
        let success = !track.half_duplex && self.decode.decodes(sinr, Technology::Wifi, mcs);
        let clean = self.decode.decodes(track.noise_only_sinr_db(), Technology::Wifi, mcs);
        self.record_decode(src, active.tx.start, success, clean);
        if success {
            self.wifi_mut(src).peer_sinr.insert(dest, sinr);
            let agg = self.wifi_mut(src).acs[ac].inflight.as_mut().expect("inflight aggregate");
            let first = !agg.delivered;
            agg.delivered = true;
            if first {
                for item in agg.items.clone() {
                    match item {
                        Item::Packet(pid) => self.deliver_packet(pid),
                        Item::TcpAck { flow, ack } => self.tcp_ack_uplinked(flow, ack),
                    }
                }
            }
            self.schedule_at(now + SIFS, Ev::AckSend { from: dest, to: src, ac: ac as u8 });
        }
        self.wifi_mut(src).acs[ac].ack_ok = false;
        self.schedule_at(ack_timeout(now), Ev::AckTimeout { node: src, ac: ac as u8 });
        self.refresh_sensing();
        vec![Self::outcome(dest, sinr, success)]
    }

    pub(super) fn wifi_send_ack(&mut self, from: NodeId, to: NodeId, ac: u8) {
        if self.reg.is_transmitting(from) {
            return;
        }
        self.begin_tx(from, TxKind::WifiAck, ACK_DURATION, vec![to], TxMeta::WifiAck { to, ac });
    }

    pub(super) fn wifi_ack_end(&mut self, active: &ActiveTx, to: NodeId, ac: usize) -> Vec<RxOutcome> {
        let track = active.rx.iter().find(|r| r.node == to).expect("addressed receiver");
        let sinr = track.sinr_db();
        let success = !track.half_duplex && self.decode.decodes(sinr, Technology::Wifi, 0);
        if success {
            let a = &mut self.wifi_mut(to).acs[ac];
            if a.in_exchange {
                a.ack_ok = true;
            }
        }
        self.refresh_sensing();
        vec![Self::outcome(to, sinr, success)]
    }

    pub(super) fn wifi_ack_timeout(&mut self, node: NodeId, ac: usize) {
        let now = self.sched.now();
        let a = &mut self.wifi_mut(node).acs[ac];
        a.in_exchange = false;
        let ok = a.ack_ok;
        a.ack_ok = false;
        match a.access.on_tx_complete(ok) {
            TxCompletion::Success => a.inflight = None,
            TxCompletion::Retry => {}
            TxCompletion::Drop => {
                let agg = a.inflight.take().expect("inflight aggregate");
                self.counters.wifi_drops += 1;
                if !agg.delivered {
                    for item in agg.items {
                        if let Item::Packet(pid) = item {
                            self.drop_packet(pid);
                        }
                    }
                }
            }
        }
        let a = &mut self.wifi_mut(node).acs[ac];
        if !ok {
            a.access.restart_defer_at(now);
        }
        self.wifi_post_tx(node, ac);
    }

    /// Post-transmission backoff when more work is queued.
    fn wifi_post_tx(&mut self, node: NodeId, ac: usize) {
        let i = node.index();
        let w = self.wifi[i].as_mut().expect("wifi node");
        if w.has_work(ac) {
            let a = &mut w.acs[ac];
            let cw = a.access.cw();
            let n = a.access.start_backoff(&mut self.backoff_rng[i]);
            self.log_backoff(node, n, cw);
        }
        self.wifi_sync_grant(node, ac);
    }

    pub(super) fn wifi_beacon(&mut self, node: NodeId) {
        let now = self.sched.now();
        let interval = SimTime::from_millis_f64(self.cfg.wifi.beacon_interval_ms);
        self.schedule_at(now + interval, Ev::Beacon { node });
        let w = self.wifi_mut(node);
        if w.beacon_pending {
            return;
        }
        w.beacon_pending = true;
        self.wifi_kick(node, 0);
    }

    pub(super) fn wifi_beacon_end(&mut self, node: NodeId) -> Vec<RxOutcome> {
        self.wifi_mut(node).acs[0].in_exchange = false;
        self.refresh_sensing();
        self.wifi_post_tx(node, 0);
        Vec::new()
    }
}
