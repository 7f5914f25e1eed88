//! LAA eNB behaviour: LBT, TxOP scheduling, HARQ, RLC recovery and DRS.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec::Vec;

use crate::config::SimConfig;
use crate::contention::ChannelAccess;
use crate::kernel::EventHandle;
use crate::laa::{cws_update, pack_round_robin, DrsConfig, LbtAccess, LbtConfig, LbtPhase, TxopPlan, UeDemand};
use crate::link::LTE_SUBFRAME;
use crate::log::{LogRecord, RxOutcome};
use crate::radio::{ActiveTx, NodeId, Technology, TxKind};
use crate::time::SimTime;
use crate::traffic::{Piece, RlcMode, RlcTxBuffer};

use super::{Ev, TxMeta, TxopRecord, World};

#[derive(Clone, Debug)]
pub(super) struct Tb {
    pub ue: NodeId,
    pub ue_index: usize,
    pub mcs: u8,
    pub rbs: u32,
    pub pieces: Vec<Piece>,
    pub attempts: u32,
    /// Burst whose first subframe carried this block, for CWS feedback.
    pub burst: Option<u64>,
}

#[derive(Clone, Debug, Default)]
pub(super) struct TbStore {
    next: u64,
    map: BTreeMap<u64, Tb>,
}

impl TbStore {
    fn insert(&mut self, tb: Tb) -> u64 {
        let id = self.next;
        self.next += 1;
        self.map.insert(id, tb);
        id
    }
}

#[derive(Clone, Copy, Debug)]
pub(super) struct TxopRun {
    pub plan: TxopPlan,
    pub sent: u32,
    pub burst: u64,
}

#[derive(Clone, Copy, Debug, Default)]
struct BurstFeedback {
    expected: usize,
    received: usize,
    nacks: usize,
}

#[derive(Clone, Debug, Default)]
struct DrsRun {
    pending: Option<u64>,
    check: Option<(EventHandle, SimTime)>,
}

#[derive(Clone, Debug)]
pub(super) struct LaaEnb {
    pub lbt: LbtConfig,
    access: LbtAccess,
    grant: Option<(EventHandle, SimTime)>,
    /// Every access after the first TxOP uses an extended CCA.
    needs_ecca: bool,
    ues: Vec<NodeId>,
    cqi: Vec<f64>,
    rlc: Vec<RlcTxBuffer>,
    rr: usize,
    retx: VecDeque<u64>,
    txop: Option<TxopRun>,
    next_burst: u64,
    bursts: BTreeMap<u64, BurstFeedback>,
    last_judged: Option<u64>,
    lost: Vec<Vec<(SimTime, Piece)>>,
    status_pending: Vec<bool>,
    drs_cfg: DrsConfig,
    drs: DrsRun,
}

impl LaaEnb {
    pub fn new(cfg: &SimConfig, _id: NodeId, ues: Vec<NodeId>, cqi: Vec<f64>) -> Self {
        let lbt = cfg.laa.lbt();
        let n = ues.len();
        LaaEnb {
            access: LbtAccess::new(&lbt, Some(SimTime::ZERO)),
            lbt,
            grant: None,
            needs_ecca: false,
            ues,
            cqi,
            rlc: (0..n).map(|_| RlcTxBuffer::new()).collect(),
            rr: 0,
            retx: VecDeque::new(),
            txop: None,
            next_burst: 0,
            bursts: BTreeMap::new(),
            last_judged: None,
            lost: (0..n).map(|_| Vec::new()).collect(),
            status_pending: alloc::vec![false; n],
            drs_cfg: cfg.laa.drs(),
            drs: DrsRun::default(),
        }
    }

    fn has_work(&self) -> bool {
        !self.retx.is_empty() || self.rlc.iter().any(|b| !b.is_empty())
    }

    fn ue_index(&self, ue: NodeId) -> usize {
        self.ues.iter().position(|&u| u == ue).expect("UE served by this eNB")
    }
}

impl World {
    fn enb_mut(&mut self, node: NodeId) -> &mut LaaEnb {
        self.laa[node.index()].as_mut().expect("laa enb")
    }

    fn enb(&self, node: NodeId) -> &LaaEnb {
        self.laa[node.index()].as_ref().expect("laa enb")
    }

    pub(super) fn laa_enqueue(&mut self, node: NodeId, ue: NodeId, piece: Piece) {
        let e = self.enb_mut(node);
        let k = e.ue_index(ue);
        e.rlc[k].push_back(piece);
        self.laa_kick(node);
    }

    fn laa_kick(&mut self, node: NodeId) {
        let i = node.index();
        let e = self.laa[i].as_mut().expect("laa enb");
        if e.txop.is_some() || e.access.phase() != LbtPhase::Idle || !e.has_work() {
            return;
        }
        let now = self.sched.now();
        let q = e.access.q();
        let drawn = if e.needs_ecca {
            Some(e.access.start_ecca(&mut self.backoff_rng[i]))
        } else {
            e.access.request(now, &mut self.backoff_rng[i])
        };
        if let Some(n) = drawn {
            self.log_backoff(node, n, q);
        }
        self.laa_sync_grant(node);
    }

    fn laa_sync_grant(&mut self, node: NodeId) {
        let now = self.sched.now();
        let e = self.laa[node.index()].as_mut().expect("laa enb");
        let mut due = e.access.grant_time();
        if due.is_some_and(|g| g < now) {
            e.access.restart_defer_at(now);
            due = e.access.grant_time();
        }
        match e.grant {
            Some((_, t)) if Some(t) == due => return,
            Some((h, _)) => {
                self.sched.cancel(h);
                e.grant = None;
            }
            None => {}
        }
        if let Some(g) = due {
            let h = self.sched.schedule_at(g, Ev::LaaGrant { node });
            e.grant = Some((h, g));
        }
    }

    pub(super) fn laa_medium_change(&mut self, node: NodeId, busy: bool, now: SimTime) {
        let i = node.index();
        let e = self.laa[i].as_mut().expect("laa enb");
        if busy {
            let q = e.access.q();
            let out = e.access.on_busy(now, &mut self.backoff_rng[i]);
            if !out.grant_due_now {
                if let Some((h, _)) = e.grant.take() {
                    self.sched.cancel(h);
                }
            }
            // A check completing at this very instant has already seen the
            // medium idle for its full duration.
            if let Some((h, due)) = e.drs.check {
                if due != now {
                    self.sched.cancel(h);
                    e.drs.check = None;
                }
            }
            if let Some(n) = out.drawn {
                self.log_backoff(node, n, q);
            }
        } else {
            e.access.on_idle(now);
            self.laa_sync_grant(node);
            self.drs_try(node);
        }
    }

    pub(super) fn laa_grant(&mut self, node: NodeId) {
        let i = node.index();
        let now = self.sched.now();
        self.enb_mut(node).grant = None;
        if self.reg.is_transmitting(node) {
            let e = self.laa[i].as_mut().expect("laa enb");
            let q = e.access.q();
            let n = e.access.start_ecca(&mut self.backoff_rng[i]);
            self.log_backoff(node, n, q);
            self.laa_sync_grant(node);
            return;
        }
        let e = self.enb_mut(node);
        e.access.granted();
        e.needs_ecca = true;
        if !e.has_work() {
            return;
        }
        let plan = TxopPlan::new(now, e.lbt.txop_limit);
        if plan.max_subframes == 0 {
            self.laa_kick(node);
            return;
        }
        if let Some(k) = e.drs.pending {
            if plan.data_start < e.drs_cfg.window_end(k) {
                e.drs.pending = None;
                if let Some((h, _)) = e.drs.check.take() {
                    self.sched.cancel(h);
                }
                self.drs.embedded += 1;
            }
        }
        let e = self.enb_mut(node);
        let burst = e.next_burst;
        e.next_burst += 1;
        e.txop = Some(TxopRun { plan, sent: 0, burst });
        let reservation = plan.reservation();
        if reservation > SimTime::ZERO {
            self.begin_tx(node, TxKind::LaaReservation, reservation, Vec::new(), TxMeta::Reservation);
        } else {
            self.laa_next_subframe(node);
        }
    }

    pub(super) fn laa_reservation_end(&mut self, node: NodeId) -> Vec<RxOutcome> {
        self.laa_next_subframe(node);
        Vec::new()
    }

    /// Starts the next data subframe of the running TxOP, or closes the TxOP
    /// when the limit is reached or nothing is left to send.
    pub(super) fn laa_next_subframe(&mut self, node: NodeId) {
        let Some(run) = self.enb(node).txop else {
            self.refresh_sensing();
            return;
        };
        if run.sent >= run.plan.max_subframes {
            self.laa_end_txop(node);
            return;
        }
        let tbs = self.laa_allocate(node, run.sent == 0, run.burst);
        if tbs.is_empty() {
            self.laa_end_txop(node);
            return;
        }
        let mut receivers: Vec<NodeId> = tbs.iter().map(|id| self.tbs.map[id].ue).collect();
        receivers.sort();
        receivers.dedup();
        self.enb_mut(node).txop.as_mut().expect("txop").sent += 1;
        self.check_subframe_grid(node);
        self.begin_tx(node, TxKind::LaaDataSubframe, LTE_SUBFRAME, receivers, TxMeta::LaaData { tbs });
    }

    /// Fills one subframe: pending HARQ retransmissions first, then new data
    /// packed round-robin over the UEs.
    fn laa_allocate(&mut self, node: NodeId, first: bool, burst: u64) -> Vec<u64> {
        let pdcch = self.cfg.laa.pdcch_symbols;
        let rank = self.cfg.laa.rank;
        let mut out = Vec::new();
        let mut free = crate::link::LTE_RESOURCE_BLOCKS;
        let e = self.laa[node.index()].as_mut().expect("laa enb");
        let mut keep = VecDeque::new();
        while let Some(id) = e.retx.pop_front() {
            let tb = self.tbs.map.get_mut(&id).expect("retx tb");
            if tb.rbs <= free {
                free -= tb.rbs;
                tb.attempts += 1;
                tb.burst = None;
                out.push(id);
            } else {
                keep.push_back(id);
            }
        }
        e.retx = keep;
        if free > 0 {
            let demands: Vec<UeDemand> = (0..e.ues.len())
                .map(|k| {
                    let mcs = self.decode.select_mcs(e.cqi[k], Technology::Laa);
                    let full = self.decode.laa.subframe_capacity_bits(mcs, pdcch, rank).unwrap_or(0);
                    UeDemand { ue: e.ues[k], bits: e.rlc[k].queued_bytes() * 8, full_tb_bits: full }
                })
                .collect();
            let (grants, next) = pack_round_robin(free, &demands, e.rr);
            e.rr = next;
            for g in grants {
                let k = e.ue_index(g.ue);
                let pieces = e.rlc[k].take(g.tb_bits / 8);
                if pieces.is_empty() {
                    continue;
                }
                let mcs = self.decode.select_mcs(e.cqi[k], Technology::Laa);
                let id = self.tbs.insert(Tb { ue: g.ue, ue_index: k, mcs, rbs: g.rbs, pieces, attempts: 1, burst: None });
                out.push(id);
            }
        }
        if first && !out.is_empty() {
            for id in &out {
                self.tbs.map.get_mut(id).expect("tb").burst = Some(burst);
            }
            e.bursts.insert(burst, BurstFeedback { expected: out.len(), received: 0, nacks: 0 });
        }
        out
    }

    fn laa_end_txop(&mut self, node: NodeId) {
        let now = self.sched.now();
        let e = self.enb_mut(node);
        let run = e.txop.take().expect("txop");
        self.txops.push(TxopRecord {
            node,
            grant: run.plan.grant,
            reservation: run.plan.reservation(),
            data_subframes: run.sent,
            end: now,
        });
        self.refresh_sensing();
        self.laa_kick(node);
        self.drs_try(node);
    }

    pub(super) fn laa_subframe_end(&mut self, active: &ActiveTx, tbs: &[u64]) -> Vec<RxOutcome> {
        let src = active.tx.source;
        let now = self.sched.now();
        let delay = SimTime::from_millis_f64(self.cfg.laa.harq_delay_ms);
        let mut outcomes = Vec::with_capacity(tbs.len());
        for &id in tbs {
            let (ue, k, mcs) = {
                let tb = &self.tbs.map[&id];
                (tb.ue, tb.ue_index, tb.mcs)
            };
            let track = active.rx.iter().find(|r| r.node == ue).expect("addressed UE");
            let sinr = track.sinr_db();
            let success = !track.half_duplex && self.decode.decodes(sinr, Technology::Laa, mcs);
            let clean = self.decode.decodes(track.noise_only_sinr_db(), Technology::Laa, mcs);
            self.record_decode(src, active.tx.start, success, clean);
            if success {
                self.enb_mut(src).cqi[k] = sinr;
                let pieces = self.tbs.map[&id].pieces.clone();
                self.rlc_receive(ue, &pieces);
            }
            self.schedule_at(now + delay, Ev::HarqFeedback { node: src, tb: id, ack: success });
            outcomes.push(Self::outcome(ue, sinr, success));
        }
        self.laa_next_subframe(src);
        outcomes
    }

    pub(super) fn harq_feedback(&mut self, node: NodeId, id: u64, ack: bool) {
        let now = self.sched.now();
        let Some(tb) = self.tbs.map.get(&id) else { return };
        let (ue, k, attempts, burst) = (tb.ue, tb.ue_index, tb.attempts, tb.burst);
        self.log(LogRecord::HarqFeedback { t: now, node, ue, tb: id, ack, attempt: attempts });
        if let Some(b) = burst {
            self.cws_feedback(node, b, ack);
        }
        if ack {
            self.tbs.map.remove(&id);
            return;
        }
        if attempts < self.cfg.laa.max_harq_attempts {
            self.enb_mut(node).retx.push_back(id);
            self.laa_kick(node);
            return;
        }
        let tb = self.tbs.map.remove(&id).expect("tb");
        self.counters.harq_exhausted += 1;
        match self.rlc_mode {
            RlcMode::Um => {
                for p in &tb.pieces {
                    self.drop_packet(p.packet);
                }
            }
            RlcMode::Am => {
                let e = self.enb_mut(node);
                e.lost[k].extend(tb.pieces.iter().map(|&p| (now, p)));
                self.schedule_status(node, k);
            }
        }
    }

    /// Adds one first-subframe feedback to its burst and, once the burst is
    /// fully reported, adapts the contention window if it is the newest.
    fn cws_feedback(&mut self, node: NodeId, burst: u64, ack: bool) {
        let now = self.sched.now();
        let e = self.enb_mut(node);
        let Some(fb) = e.bursts.get_mut(&burst) else { return };
        fb.received += 1;
        if !ack {
            fb.nacks += 1;
        }
        if fb.received < fb.expected {
            return;
        }
        let fb = e.bursts.remove(&burst).expect("burst");
        if e.last_judged.is_some_and(|l| l >= burst) {
            return;
        }
        e.last_judged = Some(burst);
        let from = e.access.q();
        let to = cws_update(from, &e.lbt.cws_set, fb.nacks, fb.expected, e.lbt.z_threshold);
        e.access.set_q(to);
        self.log(LogRecord::CwsChange { t: now, node, from, to, nacks: fb.nacks, feedbacks: fb.expected });
    }

    fn schedule_status(&mut self, node: NodeId, k: usize) {
        let now = self.sched.now();
        let interval = self.cfg.rlc.status_interval();
        let e = self.enb_mut(node);
        if e.status_pending[k] {
            return;
        }
        e.status_pending[k] = true;
        let tick = if now.is_multiple_of(interval) { now } else { now.ceil_to(interval) };
        let at = tick + SimTime::from_millis_f64(self.cfg.delays.licensed_uplink_ms);
        self.schedule_at(at, Ev::RlcStatus { node, ue: k as u16, tick });
    }

    /// A STATUS report generated at `tick` reached the eNB: every piece lost
    /// by then is re-queued ahead of new data.
    pub(super) fn rlc_status(&mut self, node: NodeId, k: usize, tick: SimTime) {
        let e = self.enb_mut(node);
        e.status_pending[k] = false;
        let (now_lost, later): (Vec<_>, Vec<_>) = e.lost[k].drain(..).partition(|(t, _)| *t <= tick);
        e.lost[k] = later;
        let pieces: Vec<Piece> = now_lost.into_iter().map(|(_, p)| p).collect();
        e.rlc[k].push_front_all(&pieces);
        let more = !e.lost[k].is_empty();
        self.counters.rlc_retransmitted_bytes += pieces.iter().map(|p| p.bytes as u64).sum::<u64>();
        if more {
            self.schedule_status(node, k);
        }
        self.laa_kick(node);
    }

    // ---- discovery signals ----

    pub(super) fn init_drs(&mut self) {
        if !self.cfg.laa.drs_enabled {
            return;
        }
        for i in 0..self.laa.len() {
            if self.laa[i].is_some() {
                self.schedule_at(SimTime::ZERO, Ev::DrsWindow { node: NodeId(i as u16), k: 0 });
            }
        }
    }

    pub(super) fn drs_window(&mut self, node: NodeId, k: u64) {
        let cfg = self.enb(node).drs_cfg;
        self.drs.windows += 1;
        if cfg.window_start(k + 1) < self.t_end {
            self.schedule_at(cfg.window_start(k + 1), Ev::DrsWindow { node, k: k + 1 });
        }
        self.schedule_at(cfg.window_end(k), Ev::DrsWindowEnd { node, k });
        if self.enb(node).txop.is_some() {
            self.drs.embedded += 1;
            return;
        }
        self.enb_mut(node).drs.pending = Some(k);
        self.drs_try(node);
    }

    /// Arms the one-shot clear check when a DRS is due and the medium is idle.
    fn drs_try(&mut self, node: NodeId) {
        let now = self.sched.now();
        let i = node.index();
        let busy = self.busy[i];
        let e = self.laa[i].as_mut().expect("laa enb");
        if e.drs.pending.is_none() || e.drs.check.is_some() || busy || e.txop.is_some() {
            return;
        }
        let due = now + e.drs_cfg.check;
        let h = self.sched.schedule_at(due, Ev::DrsCheck { node });
        e.drs.check = Some((h, due));
    }

    pub(super) fn drs_check(&mut self, node: NodeId) {
        let now = self.sched.now();
        let e = self.enb_mut(node);
        e.drs.check = None;
        let Some(k) = e.drs.pending else { return };
        if now + e.drs_cfg.duration > e.drs_cfg.window_end(k) || e.txop.is_some() {
            return;
        }
        e.drs.pending = None;
        let d = e.drs_cfg.duration;
        self.drs.standalone += 1;
        self.begin_tx(node, TxKind::LaaDrs, d, Vec::new(), TxMeta::Drs);
    }

    pub(super) fn drs_window_end(&mut self, node: NodeId, k: u64) {
        let e = self.enb_mut(node);
        if e.drs.pending == Some(k) {
            e.drs.pending = None;
            if let Some((h, _)) = e.drs.check.take() {
                self.sched.cancel(h);
            }
            self.drs.missed += 1;
        }
    }
}
