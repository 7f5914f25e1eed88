//! LAA eNB channel access and downlink framing: Category-4 listen-before-talk,
//! contention window adaptation from HARQ feedback, TxOP layout, per-subframe
//! resource allocation and discovery signal timing.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::contention::{BusyOutcome, ChannelAccess, SlottedCountdown};
use crate::kernel::SlotDraw;
use crate::link::{LTE_RESOURCE_BLOCKS, LTE_SUBFRAME};
use crate::radio::NodeId;
use crate::time::SimTime;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LbtConfig {
    pub defer: SimTime,
    pub slot: SimTime,
    pub ed_threshold_dbm: f64,
    pub cws_set: Vec<u32>,
    pub z_threshold: f64,
    pub txop_limit: SimTime,
}

impl Default for LbtConfig {
    fn default() -> Self {
        LbtConfig {
            defer: SimTime::from_micros(43),
            slot: SimTime::from_micros(9),
            ed_threshold_dbm: -72.0,
            cws_set: alloc::vec![15, 31, 63],
            z_threshold: 0.8,
            txop_limit: SimTime::from_millis(8),
        }
    }
}

impl LbtConfig {
    pub fn cws_min(&self) -> u32 {
        self.cws_set[0]
    }

    /// Energy at or above the threshold counts as busy.
    pub fn busy(&self, sensed_energy_dbm: f64) -> bool {
        sensed_energy_dbm >= self.ed_threshold_dbm
    }
}

/// Contention window after judging the first-subframe feedback of the latest
/// burst: grow to the next member of `cws_set` when at least `z` of the
/// feedbacks are NACKs, otherwise reset. No feedback leaves `q` unchanged.
pub fn cws_update(q: u32, cws_set: &[u32], nacks: usize, total: usize, z: f64) -> u32 {
    if total == 0 || cws_set.is_empty() {
        return q;
    }
    if nacks as f64 / total as f64 >= z {
        cws_set.iter().copied().find(|&c| c > q).unwrap_or(cws_set[cws_set.len() - 1])
    } else {
        cws_set[0]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LbtPhase {
    Idle,
    /// Single defer from the request instant, no backoff.
    InitialCca,
    /// Defer then `N` idle slots.
    Ecca,
}

#[derive(Clone, Debug)]
pub struct LbtAccess {
    countdown: SlottedCountdown,
    phase: LbtPhase,
    q: u32,
}

impl LbtAccess {
    pub fn new(cfg: &LbtConfig, idle_since: Option<SimTime>) -> Self {
        let mut countdown = SlottedCountdown::new(cfg.defer, cfg.slot);
        if let Some(t) = idle_since {
            countdown.on_idle(t);
        }
        LbtAccess { countdown, phase: LbtPhase::Idle, q: cfg.cws_min() }
    }

    pub fn phase(&self) -> LbtPhase {
        self.phase
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn set_q(&mut self, q: u32) {
        self.q = q;
    }

    pub fn remaining(&self) -> Option<u32> {
        self.countdown.counter()
    }

    pub fn medium_idle(&self) -> bool {
        self.countdown.is_idle()
    }

    /// Data became pending at `t`. Idle medium: initial CCA. Busy medium:
    /// ECCA with a fresh draw, which is returned.
    pub fn request(&mut self, t: SimTime, draw: &mut dyn SlotDraw) -> Option<u32> {
        if self.phase != LbtPhase::Idle {
            return None;
        }
        if self.countdown.is_idle() {
            self.phase = LbtPhase::InitialCca;
            self.countdown.set_counter(Some(0));
            self.countdown.restart_defer_at(t);
            None
        } else {
            Some(self.start_ecca(draw))
        }
    }

    /// Draws `N` uniformly in `[1, q]` and starts the extended CCA.
    pub fn start_ecca(&mut self, draw: &mut dyn SlotDraw) -> u32 {
        let n = draw.draw(1, self.q);
        self.countdown.set_counter(Some(n));
        self.phase = LbtPhase::Ecca;
        n
    }

    pub fn restart_defer_at(&mut self, t: SimTime) {
        self.countdown.restart_defer_at(t);
    }

    pub fn granted(&mut self) {
        self.phase = LbtPhase::Idle;
        self.countdown.set_counter(None);
    }
}

impl ChannelAccess for LbtAccess {
    fn on_busy(&mut self, t: SimTime, draw: &mut dyn SlotDraw) -> BusyOutcome {
        let due = self.countdown.grant_time() == Some(t);
        self.countdown.on_busy(t);
        let mut out = BusyOutcome { drawn: None, grant_due_now: due };
        if self.phase == LbtPhase::InitialCca && !due {
            out.drawn = Some(self.start_ecca(draw));
        }
        out
    }

    fn on_idle(&mut self, t: SimTime) {
        self.countdown.on_idle(t);
    }

    fn grant_time(&self) -> Option<SimTime> {
        self.countdown.grant_time()
    }
}

/// Layout of a TxOP obtained at `grant`: a reservation signal up to the next
/// subframe boundary, then up to `max_subframes` data subframes, the whole
/// bounded by the TxOP limit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TxopPlan {
    pub grant: SimTime,
    pub data_start: SimTime,
    pub max_subframes: u32,
}

impl TxopPlan {
    pub fn new(grant: SimTime, txop_limit: SimTime) -> Self {
        let data_start = grant.ceil_to(LTE_SUBFRAME);
        let reservation = data_start - grant;
        let max_subframes = txop_limit
            .checked_sub(reservation)
            .map_or(0, |rest| (rest.as_nanos() / LTE_SUBFRAME.as_nanos()) as u32);
        TxopPlan { grant, data_start, max_subframes }
    }

    pub fn reservation(&self) -> SimTime {
        self.data_start - self.grant
    }

    pub fn subframe_start(&self, k: u32) -> SimTime {
        self.data_start + LTE_SUBFRAME * k as u64
    }
}

/// Queued downlink demand of one UE for a subframe.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UeDemand {
    pub ue: NodeId,
    pub bits: u64,
    /// Transport block size of a full-bandwidth allocation at the UE's MCS.
    pub full_tb_bits: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RbGrant {
    pub ue: NodeId,
    pub rbs: u32,
    pub tb_bits: u64,
}

/// Transport block size of `rbs` resource blocks out of a full allocation.
pub fn tb_bits_for(full_tb_bits: u64, rbs: u32) -> u64 {
    full_tb_bits * rbs as u64 / LTE_RESOURCE_BLOCKS as u64
}

/// Round-robin allocation over `demands` starting at position `start`: each
/// UE in turn takes all free resource blocks, or only as many as its queue
/// needs, until blocks or demand run out. Returns the grants and the position
/// to start from in the next subframe.
pub fn pack_round_robin(free_rbs: u32, demands: &[UeDemand], start: usize) -> (Vec<RbGrant>, usize) {
    let mut grants = Vec::new();
    let n = demands.len();
    if n == 0 {
        return (grants, 0);
    }
    let mut free = free_rbs;
    let mut next = start % n;
    for k in 0..n {
        if free == 0 {
            break;
        }
        let i = (start + k) % n;
        let d = demands[i];
        if d.bits == 0 || d.full_tb_bits == 0 {
            continue;
        }
        let all = tb_bits_for(d.full_tb_bits, free);
        let rbs = if d.bits >= all {
            free
        } else {
            let need = (d.bits * LTE_RESOURCE_BLOCKS as u64).div_ceil(d.full_tb_bits) as u32;
            need.clamp(1, free)
        };
        grants.push(RbGrant { ue: d.ue, rbs, tb_bits: tb_bits_for(d.full_tb_bits, rbs) });
        free -= rbs;
        next = (i + 1) % n;
    }
    (grants, next)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrsConfig {
    pub period: SimTime,
    pub dmtc_window: SimTime,
    pub duration: SimTime,
    /// One-shot clear check before a standalone transmission.
    pub check: SimTime,
}

impl Default for DrsConfig {
    fn default() -> Self {
        DrsConfig {
            period: SimTime::from_millis(80),
            dmtc_window: SimTime::from_millis(6),
            duration: SimTime::from_millis(1),
            check: SimTime::from_micros(25),
        }
    }
}

impl DrsConfig {
    pub fn window_start(&self, k: u64) -> SimTime {
        self.period * k
    }

    pub fn window_end(&self, k: u64) -> SimTime {
        self.window_start(k) + self.dmtc_window
    }

    /// Index of the window containing `t`, if any.
    pub fn window_at(&self, t: SimTime) -> Option<u64> {
        let k = t.as_nanos() / self.period.as_nanos();
        (t < self.window_end(k)).then_some(k)
    }

    /// Standalone DRS airtime per second on an idle channel.
    pub fn idle_airtime_fraction(&self) -> f64 {
        self.duration.as_secs_f64() / self.period.as_secs_f64()
    }
}
