//! Slotted deferral-and-countdown shared by DCF/EDCA and Category-4 LBT.
//!
//! After the medium becomes idle a node must observe `defer` of continuous
//! idle time, then one idle `slot` per counter decrement. A busy period
//! freezes the counter (only fully idle slots count) and the defer restarts
//! at the next idle instant. The grant is due at
//! `idle_since + defer + counter * slot`.
//!
//! Sensing is left-continuous: a transmission that starts at instant `t` is
//! not yet sensed by a node whose grant is due at `t`, so simultaneous grants
//! collide rather than defer.

use alloc::vec::Vec;

use crate::kernel::SlotDraw;
use crate::time::SimTime;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlottedCountdown {
    defer: SimTime,
    slot: SimTime,
    counter: Option<u32>,
    idle_since: Option<SimTime>,
}

impl SlottedCountdown {
    pub fn new(defer: SimTime, slot: SimTime) -> Self {
        SlottedCountdown { defer, slot, counter: None, idle_since: None }
    }

    pub fn defer(&self) -> SimTime {
        self.defer
    }

    pub fn slot(&self) -> SimTime {
        self.slot
    }

    pub fn counter(&self) -> Option<u32> {
        self.counter
    }

    pub fn set_counter(&mut self, n: Option<u32>) {
        self.counter = n;
    }

    pub fn is_idle(&self) -> bool {
        self.idle_since.is_some()
    }

    pub fn idle_since(&self) -> Option<SimTime> {
        self.idle_since
    }

    /// Freezes the countdown, keeping only slots that fully elapsed.
    pub fn on_busy(&mut self, t: SimTime) {
        if let (Some(n), Some(idle)) = (self.counter, self.idle_since) {
            let start = idle + self.defer;
            if t > start {
                let elapsed = (t - start).as_nanos() / self.slot.as_nanos();
                self.counter = Some(n - (elapsed.min(n as u64) as u32));
            }
        }
        self.idle_since = None;
    }

    pub fn on_idle(&mut self, t: SimTime) {
        if self.idle_since.is_none() {
            self.idle_since = Some(t);
        }
    }

    /// Measures the defer from `t` instead of from the start of the current
    /// idle period (a fresh access request on an idle medium).
    pub fn restart_defer_at(&mut self, t: SimTime) {
        if self.idle_since.is_some() {
            self.idle_since = Some(t);
        }
    }

    pub fn grant_time(&self) -> Option<SimTime> {
        Some(self.idle_since? + self.defer + self.slot * self.counter? as u64)
    }
}

/// What a busy transition did to an access procedure.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BusyOutcome {
    /// A backoff value drawn because the transition interrupted a
    /// no-backoff access attempt.
    pub drawn: Option<u32>,
    /// The countdown completed exactly at the busy instant; the grant stands.
    pub grant_due_now: bool,
}

/// The channel-sensing surface of an access procedure.
pub trait ChannelAccess {
    fn on_busy(&mut self, t: SimTime, draw: &mut dyn SlotDraw) -> BusyOutcome;
    fn on_idle(&mut self, t: SimTime);
    fn grant_time(&self) -> Option<SimTime>;
}

/// Sorted, disjoint busy intervals `[start, end)` as seen by one node.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BusyTrace {
    intervals: Vec<(SimTime, SimTime)>,
}

impl BusyTrace {
    /// Sorts and merges overlapping or touching intervals; drops empty ones.
    pub fn new(mut intervals: Vec<(SimTime, SimTime)>) -> Self {
        intervals.retain(|(s, e)| e > s);
        intervals.sort();
        let mut merged: Vec<(SimTime, SimTime)> = Vec::with_capacity(intervals.len());
        for (s, e) in intervals {
            match merged.last_mut() {
                Some(last) if s <= last.1 => {
                    if e > last.1 {
                        last.1 = e;
                    }
                }
                _ => merged.push((s, e)),
            }
        }
        BusyTrace { intervals: merged }
    }

    pub fn intervals(&self) -> &[(SimTime, SimTime)] {
        &self.intervals
    }

    pub fn is_busy_at(&self, t: SimTime) -> bool {
        self.intervals.iter().any(|&(s, e)| s <= t && t < e)
    }

    /// Feeds the trace's transitions after `now` into `access` until a grant
    /// falls due, and returns the grant instant. The caller has already
    /// informed `access` of the medium state at `now`. Returns `None` if the
    /// procedure has no pending grant once the trace is exhausted.
    pub fn drive<A: ChannelAccess + ?Sized>(
        &self,
        access: &mut A,
        mut now: SimTime,
        draw: &mut dyn SlotDraw,
    ) -> Option<SimTime> {
        for &(s, e) in &self.intervals {
            if e <= now {
                continue;
            }
            if s > now {
                if let Some(g) = access.grant_time() {
                    if g <= s {
                        return Some(g);
                    }
                }
                let out = access.on_busy(s, draw);
                if out.grant_due_now {
                    return Some(s);
                }
            }
            access.on_idle(e);
            now = e;
        }
        access.grant_time()
    }
}

/// Replays a fixed sequence of draws; panics when exhausted.
#[derive(Clone, Debug, Default)]
pub struct ScriptedDraws {
    values: Vec<u32>,
    next: usize,
}

impl ScriptedDraws {
    pub fn new(values: Vec<u32>) -> Self {
        ScriptedDraws { values, next: 0 }
    }

    pub fn used(&self) -> usize {
        self.next
    }
}

impl SlotDraw for ScriptedDraws {
    fn draw(&mut self, lo: u32, hi: u32) -> u32 {
        let v = *self.values.get(self.next).expect("scripted draws exhausted");
        self.next += 1;
        assert!(lo <= v && v <= hi, "scripted draw {v} outside [{lo}, {hi}]");
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn us(v: u64) -> SimTime {
        SimTime::from_micros(v)
    }

    #[test]
    fn idle_countdown() {
        let mut c = SlottedCountdown::new(us(43), us(9));
        c.on_idle(us(100));
        c.set_counter(Some(4));
        assert_eq!(c.grant_time(), Some(us(100 + 43 + 36)));
    }

    #[test]
    fn freeze_keeps_whole_slots_only() {
        let mut c = SlottedCountdown::new(us(43), us(9));
        c.on_idle(us(0));
        c.set_counter(Some(5));
        // 43 us defer, then 2 full slots and a partial one.
        c.on_busy(us(43 + 18 + 4));
        assert_eq!(c.counter(), Some(3));
        assert_eq!(c.grant_time(), None);
        c.on_idle(us(200));
        assert_eq!(c.grant_time(), Some(us(200 + 43 + 27)));
    }

    #[test]
    fn busy_during_defer_loses_nothing() {
        let mut c = SlottedCountdown::new(us(43), us(9));
        c.on_idle(us(0));
        c.set_counter(Some(2));
        c.on_busy(us(40));
        assert_eq!(c.counter(), Some(2));
    }

    #[test]
    fn trace_merging() {
        let t = BusyTrace::new(vec![(us(5), us(10)), (us(0), us(3)), (us(3), us(4)), (us(8), us(12)), (us(20), us(20))]);
        assert_eq!(t.intervals(), &[(us(0), us(4)), (us(5), us(12))]);
        assert!(t.is_busy_at(us(11)));
        assert!(!t.is_busy_at(us(12)));
    }
}
