//! 802.11 EDCA/DCF channel access: dual-threshold CCA, slotted backoff with
//! binary exponential contention window, retry accounting and control timing.

use serde::{Deserialize, Serialize};

use crate::contention::{BusyOutcome, ChannelAccess, SlottedCountdown};
use crate::kernel::SlotDraw;
use crate::time::SimTime;

pub const SLOT: SimTime = SimTime::from_micros(9);
pub const SIFS: SimTime = SimTime::from_micros(16);
pub const ACK_DURATION: SimTime = SimTime::from_micros(44);
/// Slack after the expected ACK end before the sender declares a timeout.
pub const ACK_GRACE: SimTime = SimTime::from_micros(9);
pub const BEACON_DURATION: SimTime = SimTime::from_micros(176);

/// Instant at which a sender gives up on the ACK for data ending at `data_end`.
pub fn ack_timeout(data_end: SimTime) -> SimTime {
    data_end + SIFS + ACK_DURATION + ACK_GRACE
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdcaParams {
    pub aifsn: u32,
    pub cw_min: u32,
    pub cw_max: u32,
    pub retry_limit: u32,
}

impl EdcaParams {
    pub const BEST_EFFORT: EdcaParams = EdcaParams { aifsn: 3, cw_min: 15, cw_max: 1023, retry_limit: 7 };
    pub const VOICE: EdcaParams = EdcaParams { aifsn: 2, cw_min: 7, cw_max: 15, retry_limit: 7 };

    pub fn aifs(&self) -> SimTime {
        SIFS + SLOT * self.aifsn as u64
    }

    /// Next window after a failure, saturating at `cw_max`.
    pub fn grow(&self, cw: u32) -> u32 {
        (2 * (cw + 1) - 1).min(self.cw_max)
    }

    pub fn is_valid(&self) -> bool {
        let pow2m1 = |v: u32| (v + 1).is_power_of_two();
        pow2m1(self.cw_min) && pow2m1(self.cw_max) && self.cw_min <= self.cw_max
    }
}

impl Default for EdcaParams {
    fn default() -> Self {
        EdcaParams::BEST_EFFORT
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CcaConfig {
    pub ed_threshold_dbm: f64,
    pub pd_threshold_dbm: f64,
}

impl Default for CcaConfig {
    fn default() -> Self {
        CcaConfig { ed_threshold_dbm: -62.0, pd_threshold_dbm: -88.0 }
    }
}

impl CcaConfig {
    /// Busy if any Wi-Fi frame arrives at or above the preamble-detection
    /// threshold, or if total sensed energy reaches the ED threshold.
    pub fn busy(&self, strongest_wifi_dbm: Option<f64>, sensed_energy_dbm: f64) -> bool {
        strongest_wifi_dbm.is_some_and(|p| p >= self.pd_threshold_dbm) || sensed_energy_dbm >= self.ed_threshold_dbm
    }
}

/// Uniform backoff over `[0, cw]`.
pub fn backoff_draw(cw: u32, draw: &mut dyn SlotDraw) -> u32 {
    draw.draw(0, cw)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AccessPhase {
    /// No access attempt pending.
    Idle,
    /// Waiting out AIFS with no backoff (immediate access).
    WaitAifs,
    Backoff,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TxCompletion {
    Success,
    Retry,
    /// Retry limit exceeded; the frame is discarded.
    Drop,
}

/// One EDCA queue's access function.
#[derive(Clone, Debug)]
pub struct WifiAccess {
    params: EdcaParams,
    countdown: SlottedCountdown,
    phase: AccessPhase,
    cw: u32,
    retries: u32,
}

impl WifiAccess {
    /// `idle_since` is the start of the current idle period, `None` if the
    /// medium is busy when the function is created.
    pub fn new(params: EdcaParams, idle_since: Option<SimTime>) -> Self {
        let mut countdown = SlottedCountdown::new(params.aifs(), SLOT);
        if let Some(t) = idle_since {
            countdown.on_idle(t);
        }
        WifiAccess { params, countdown, phase: AccessPhase::Idle, cw: params.cw_min, retries: 0 }
    }

    pub fn params(&self) -> &EdcaParams {
        &self.params
    }

    pub fn phase(&self) -> AccessPhase {
        self.phase
    }

    pub fn cw(&self) -> u32 {
        self.cw
    }

    pub fn retries(&self) -> u32 {
        self.retries
    }

    pub fn backoff_remaining(&self) -> Option<u32> {
        self.countdown.counter()
    }

    pub fn medium_idle(&self) -> bool {
        self.countdown.is_idle()
    }

    /// A frame became ready at `t`. Returns the drawn backoff if one was
    /// needed because the medium is busy.
    pub fn request(&mut self, t: SimTime, draw: &mut dyn SlotDraw) -> Option<u32> {
        if self.phase != AccessPhase::Idle {
            return None;
        }
        if self.countdown.is_idle() {
            self.phase = AccessPhase::WaitAifs;
            self.countdown.set_counter(Some(0));
            self.countdown.restart_defer_at(t);
            None
        } else {
            Some(self.start_backoff(draw))
        }
    }

    /// Draws from the current window and counts down (post-transmission
    /// backoff and busy-medium access).
    pub fn start_backoff(&mut self, draw: &mut dyn SlotDraw) -> u32 {
        let n = backoff_draw(self.cw, draw);
        self.countdown.set_counter(Some(n));
        self.phase = AccessPhase::Backoff;
        n
    }

    /// Measures the defer from `t` (after an ACK timeout).
    pub fn restart_defer_at(&mut self, t: SimTime) {
        self.countdown.restart_defer_at(t);
    }

    /// The grant fired and the frame goes on air.
    pub fn granted(&mut self) {
        self.phase = AccessPhase::Idle;
        self.countdown.set_counter(None);
    }

    /// Updates window and retry count after the ACK outcome of a data frame.
    pub fn on_tx_complete(&mut self, ack_received: bool) -> TxCompletion {
        if ack_received {
            self.cw = self.params.cw_min;
            self.retries = 0;
            return TxCompletion::Success;
        }
        self.retries += 1;
        if self.retries > self.params.retry_limit {
            self.cw = self.params.cw_min;
            self.retries = 0;
            TxCompletion::Drop
        } else {
            self.cw = self.params.grow(self.cw);
            TxCompletion::Retry
        }
    }

    /// Resets window and retries without a transmission (frame abandoned).
    pub fn reset_window(&mut self) {
        self.cw = self.params.cw_min;
        self.retries = 0;
    }
}

impl ChannelAccess for WifiAccess {
    fn on_busy(&mut self, t: SimTime, draw: &mut dyn SlotDraw) -> BusyOutcome {
        let due = self.countdown.grant_time() == Some(t);
        self.countdown.on_busy(t);
        let mut out = BusyOutcome { drawn: None, grant_due_now: due };
        if self.phase == AccessPhase::WaitAifs && !due {
            out.drawn = Some(self.start_backoff(draw));
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contention::{BusyTrace, ScriptedDraws};
    use crate::kernel::RngStream;
    use alloc::vec;

    fn us(v: u64) -> SimTime {
        SimTime::from_micros(v)
    }

    #[test]
    fn aifs_values() {
        assert_eq!(EdcaParams::BEST_EFFORT.aifs(), us(43));
        assert_eq!(EdcaParams::VOICE.aifs(), us(34));
        assert!(EdcaParams::BEST_EFFORT.is_valid());
        assert!(!EdcaParams { cw_min: 10, ..EdcaParams::BEST_EFFORT }.is_valid());
    }

    #[test]
    fn cca_thresholds() {
        let c = CcaConfig::default();
        assert!(c.busy(Some(-85.0), -85.0));
        assert!(!c.busy(None, -70.0));
        assert!(c.busy(None, -60.0));
        assert!(c.busy(None, -62.0));
        assert!(!c.busy(Some(-89.0), -89.0));
    }

    #[test]
    fn immediate_access_on_idle_medium() {
        let mut a = WifiAccess::new(EdcaParams::BEST_EFFORT, Some(us(0)));
        let mut d = ScriptedDraws::new(vec![]);
        assert_eq!(a.request(us(500), &mut d), None);
        assert_eq!(a.grant_time(), Some(us(543)));
    }

    #[test]
    fn busy_end_then_backoff() {
        let mut a = WifiAccess::new(EdcaParams::BEST_EFFORT, None);
        let mut d = ScriptedDraws::new(vec![4]);
        assert_eq!(a.request(us(10), &mut d), Some(4));
        let trace = BusyTrace::new(vec![(us(0), us(1000))]);
        assert_eq!(trace.drive(&mut a, us(10), &mut d), Some(us(1079)));
    }

    #[test]
    fn busy_during_aifs_draws_backoff() {
        let mut a = WifiAccess::new(EdcaParams::BEST_EFFORT, Some(us(0)));
        let mut d = ScriptedDraws::new(vec![2]);
        a.request(us(100), &mut d);
        let trace = BusyTrace::new(vec![(us(120), us(300))]);
        assert_eq!(trace.drive(&mut a, us(100), &mut d), Some(us(300 + 43 + 18)));
        assert_eq!(d.used(), 1);
    }

    #[test]
    fn busy_at_grant_instant_does_not_preempt() {
        let mut a = WifiAccess::new(EdcaParams::BEST_EFFORT, Some(us(0)));
        let mut d = ScriptedDraws::new(vec![]);
        a.request(us(0), &mut d);
        let trace = BusyTrace::new(vec![(us(43), us(300))]);
        assert_eq!(trace.drive(&mut a, us(0), &mut d), Some(us(43)));
    }

    #[test]
    fn cw_doubling_and_drop() {
        let mut a = WifiAccess::new(EdcaParams::BEST_EFFORT, None);
        let expected = [31, 63, 127, 255, 511, 1023, 1023];
        for cw in expected {
            assert_eq!(a.on_tx_complete(false), TxCompletion::Retry);
            assert_eq!(a.cw(), cw);
        }
        assert_eq!(a.on_tx_complete(false), TxCompletion::Drop);
        assert_eq!(a.cw(), 15);
        assert_eq!(a.retries(), 0);
        for _ in 0..4 {
            a.on_tx_complete(false);
        }
        assert_eq!(a.cw(), 255);
        assert_eq!(a.on_tx_complete(true), TxCompletion::Success);
        assert_eq!(a.cw(), 15);
    }

    #[test]
    fn ack_window() {
        let t1 = us(1000);
        assert_eq!(t1 + SIFS, us(1016));
        assert_eq!(t1 + SIFS + ACK_DURATION, us(1060));
        assert_eq!(ack_timeout(t1), us(1069));
    }

    #[test]
    fn backoff_draw_range() {
        let mut r = RngStream::new(3, "wifi/test");
        assert_eq!(backoff_draw(0, &mut r), 0);
        for _ in 0..1000 {
            assert!(backoff_draw(15, &mut r) <= 15);
        }
    }
}
