//! Reference models written independently of the engine: a slot-by-slot
//! channel walker and closed-form contention window sequences.

#![allow(dead_code)]

/// Busy intervals `[start, end)` in ns, sorted and disjoint.
pub struct Medium {
    pub busy: Vec<(u64, u64)>,
}

impl Medium {
    pub fn busy_at(&self, t: u64) -> bool {
        self.busy.iter().any(|&(s, e)| s <= t && t < e)
    }

    fn idle_from(&self, t: u64) -> u64 {
        let mut t = t;
        while let Some(&(_, e)) = self.busy.iter().find(|&&(s, e)| s <= t && t < e) {
            t = e;
        }
        t
    }

    fn next_busy(&self, t: u64) -> u64 {
        self.busy.iter().map(|&(s, _)| s).filter(|&s| s >= t).min().unwrap_or(u64::MAX)
    }

    /// Walks the medium from `t0`: wait for idle, sit out `defer`, then count
    /// `n` fully idle slots one at a time. Any busy period restarts the defer
    /// and keeps the slots already counted. A countdown that ends exactly when
    /// the medium turns busy still wins.
    pub fn countdown(&self, t0: u64, defer: u64, slot: u64, n: u32) -> u64 {
        let mut t = t0;
        let mut left = n;
        loop {
            t = self.idle_from(t);
            let nb = self.next_busy(t);
            if t + defer <= nb {
                let mut ts = t + defer;
                while left > 0 && ts + slot <= nb {
                    ts += slot;
                    left -= 1;
                }
                if left == 0 {
                    return ts;
                }
            }
            t = nb;
        }
    }

    /// Access that first tries a single `defer` from `t0` and, if the medium
    /// is busy at `t0` or turns busy during it, falls back to a countdown of
    /// `n` slots measured from the next idle instant.
    pub fn immediate_or_countdown(&self, t0: u64, defer: u64, slot: u64, n: u32) -> u64 {
        if !self.busy_at(t0) && t0 + defer <= self.next_busy(t0) {
            return t0 + defer;
        }
        self.countdown(t0, defer, slot, n)
    }
}

/// Wi-Fi contention window after `retries` consecutive failures.
pub fn dcf_window(cw_min: u32, cw_max: u32, retries: u32) -> u32 {
    let grown = (cw_min as u64 + 1).checked_shl(retries).map(|v| v - 1).unwrap_or(u64::MAX);
    grown.min(cw_max as u64) as u32
}

/// Three-state LAA window machine over {15, 31, 63} with an 80 % NACK rule,
/// in exact integer arithmetic.
pub fn cws_reference(state: u32, nacks: usize, total: usize) -> u32 {
    if total == 0 {
        return state;
    }
    if 5 * nacks >= 4 * total {
        match state {
            15 => 31,
            _ => 63,
        }
    } else {
        15
    }
}
