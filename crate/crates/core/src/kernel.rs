//! Event queue and named random streams.
//!
//! Dispatch order is the lexicographic order of `(fire_time, sequence)`, where
//! `sequence` is the insertion counter, so events scheduled for the same
//! instant fire in the order they were scheduled.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math;
use crate::time::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventHandle(u64);

impl EventHandle {
    pub fn sequence(self) -> u64 {
        self.0
    }
}

struct Entry<E> {
    time: SimTime,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    // BinaryHeap is a max-heap; invert so the earliest (time, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

/// Virtual-time event queue with cancellation.
pub struct Scheduler<E> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Entry<E>>,
    // One bit per sequence number: set while the event is queued and live.
    pending: Vec<u64>,
    dispatched: u64,
    cancelled: u64,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Scheduler {
            now: SimTime::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
            pending: Vec::new(),
            dispatched: 0,
            cancelled: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of live (scheduled, not yet fired, not cancelled) events.
    pub fn len(&self) -> usize {
        (self.next_seq - self.dispatched - self.cancelled) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    pub fn schedule(&mut self, delay: SimTime, event: E) -> EventHandle {
        self.schedule_at(self.now + delay, event)
    }

    /// Panics if `at` lies in the past: events never fire before the time at
    /// which they were scheduled.
    pub fn schedule_at(&mut self, at: SimTime, event: E) -> EventHandle {
        assert!(at >= self.now, "event scheduled in the past: {at:?} < {:?}", self.now);
        let seq = self.next_seq;
        self.next_seq += 1;
        self.set_pending(seq, true);
        self.heap.push(Entry { time: at, seq, event });
        EventHandle(seq)
    }

    /// Returns `true` if the event was pending and will now never fire.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        if self.is_pending(handle) {
            self.set_pending(handle.0, false);
            self.cancelled += 1;
            true
        } else {
            false
        }
    }

    pub fn is_pending(&self, handle: EventHandle) -> bool {
        let (word, bit) = ((handle.0 / 64) as usize, handle.0 % 64);
        self.pending.get(word).is_some_and(|w| w & (1 << bit) != 0)
    }

    fn set_pending(&mut self, seq: u64, on: bool) {
        let (word, bit) = ((seq / 64) as usize, seq % 64);
        if word >= self.pending.len() {
            self.pending.resize(word + 1, 0);
        }
        if on {
            self.pending[word] |= 1 << bit;
        } else {
            self.pending[word] &= !(1 << bit);
        }
    }

    /// Time of the next live event, if any.
    pub fn peek_time(&mut self) -> Option<SimTime> {
        while let Some(top) = self.heap.peek() {
            if self.is_pending(EventHandle(top.seq)) {
                return Some(top.time);
            }
            self.heap.pop();
        }
        None
    }

    /// Pops the next live event with `fire_time <= t_end`, advancing `now`.
    pub fn pop_until(&mut self, t_end: SimTime) -> Option<(SimTime, E)> {
        loop {
            let top = self.heap.peek()?;
            if top.time > t_end {
                return None;
            }
            let entry = self.heap.pop().expect("peeked");
            if !self.is_pending(EventHandle(entry.seq)) {
                continue;
            }
            self.set_pending(entry.seq, false);
            self.dispatched += 1;
            self.now = entry.time;
            return Some((entry.time, entry.event));
        }
    }

    /// Dispatches every event with `fire_time <= t_end` in order and leaves
    /// `now() == t_end`. Returns the number of events dispatched.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> u64
    where
        F: FnMut(&mut Self, SimTime, E),
    {
        assert!(t_end >= self.now, "run_until into the past");
        let mut count = 0;
        while let Some((t, ev)) = self.pop_until(t_end) {
            handler(self, t, ev);
            count += 1;
        }
        self.now = t_end;
        count
    }

    /// Moves the clock forward without dispatching; used after a loop over
    /// [`Scheduler::pop_until`].
    pub fn advance_to(&mut self, t: SimTime) {
        assert!(t >= self.now);
        self.now = t;
    }
}

/// FNV-1a over the label bytes; selects the ChaCha stream for a label.
fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A reproducible random stream identified by `(root_seed, label)`.
///
/// Streams with distinct labels use distinct ChaCha stream ids under the same
/// key, so adding a consumer never perturbs another consumer's draws.
#[derive(Clone, Debug)]
pub struct RngStream {
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(root_seed: u64, label: &str) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(root_seed);
        rng.set_stream(label_hash(label));
        RngStream { rng }
    }

    /// Uniform over `[lo, hi]` inclusive. Panics if `lo > hi`.
    pub fn uniform_int(&mut self, lo: i64, hi: i64) -> i64 {
        assert!(lo <= hi, "uniform_int: lo {lo} > hi {hi}");
        self.rng.gen_range(lo..=hi)
    }

    /// Uniform over `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Exponential variate with the given rate, via inverse transform of a
    /// uniform draw.
    pub fn exponential(&mut self, rate: f64) -> f64 {
        assert!(rate > 0.0);
        -math::ln(1.0 - self.uniform()) / rate
    }
}

/// Source of integer slot draws for backoff procedures.
pub trait SlotDraw {
    /// Uniform integer in `[lo, hi]` inclusive.
    fn draw(&mut self, lo: u32, hi: u32) -> u32;
}

impl SlotDraw for RngStream {
    fn draw(&mut self, lo: u32, hi: u32) -> u32 {
        self.uniform_int(lo as i64, hi as i64) as u32
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn fifo_tie_break() {
        let mut s: Scheduler<char> = Scheduler::new();
        s.run_until(SimTime::from_nanos(5), |_, _, _| {});
        s.schedule(SimTime::ZERO, 'a');
        s.schedule(SimTime::ZERO, 'b');
        let mut out = vec![];
        s.run_until(SimTime::from_nanos(5), |_, t, e| out.push((t, e)));
        assert_eq!(out, vec![(SimTime::from_nanos(5), 'a'), (SimTime::from_nanos(5), 'b')]);
    }

    #[test]
    fn delay_fires_at_now_plus_delay() {
        let mut s = Scheduler::new();
        s.schedule(SimTime::from_nanos(9_000), ());
        let mut at = None;
        s.run_until(SimTime::from_secs(1), |_, t, _| at = Some(t));
        assert_eq!(at, Some(SimTime::from_nanos(9_000)));
    }

    #[test]
    fn cancel_semantics() {
        let mut s = Scheduler::new();
        let pending = s.schedule(SimTime::from_nanos(10), 1);
        let fired = s.schedule(SimTime::from_nanos(1), 2);
        s.run_until(SimTime::from_nanos(5), |_, _, _| {});
        assert!(!s.cancel(fired));
        assert!(s.cancel(pending));
        assert!(!s.cancel(pending));
        let n = s.run_until(SimTime::from_nanos(100), |_, _, _| panic!("cancelled event fired"));
        assert_eq!(n, 0);
    }

    #[test]
    fn empty_run_advances_clock() {
        let mut s: Scheduler<()> = Scheduler::new();
        let n = s.run_until(SimTime::from_secs(10), |_, _, _| {});
        assert_eq!(n, 0);
        assert_eq!(s.now(), SimTime::from_secs(10));
    }

    #[test]
    fn run_until_is_inclusive() {
        let mut s = Scheduler::new();
        for k in 1..=3 {
            s.schedule(SimTime::from_secs(k), k);
        }
        assert_eq!(s.run_until(SimTime::from_secs(2), |_, _, _| {}), 2);
        assert_eq!(s.now(), SimTime::from_secs(2));
    }

    #[test]
    fn handlers_can_schedule() {
        let mut s = Scheduler::new();
        s.schedule(SimTime::from_nanos(1), 3u32);
        let mut seen = vec![];
        s.run_until(SimTime::from_nanos(100), |s, t, n| {
            seen.push(t.as_nanos());
            if n > 0 {
                s.schedule(SimTime::from_nanos(10), n - 1);
            }
        });
        assert_eq!(seen, vec![1, 11, 21, 31]);
    }

    fn trace(seed: u64) -> vec::Vec<(u64, u32)> {
        let mut rng = RngStream::new(seed, "kernel-test");
        let mut s = Scheduler::new();
        for i in 0..50u32 {
            s.schedule(SimTime::from_nanos(rng.uniform_int(0, 100) as u64), i);
        }
        let mut out = vec![];
        s.run_until(SimTime::from_nanos(1000), |s, t, i| {
            out.push((t.as_nanos(), i));
            if i % 3 == 0 && i < 1000 {
                s.schedule(SimTime::from_nanos(7), i + 1000);
            }
        });
        out
    }

    #[test]
    fn replay_is_identical() {
        assert_eq!(trace(42), trace(42));
        assert_ne!(trace(42), trace(43));
    }

    #[test]
    fn rng_determinism_and_independence() {
        let mut a = RngStream::new(7, "laa-mac/eNB-2/backoff");
        let mut b = RngStream::new(7, "laa-mac/eNB-2/backoff");
        let mut c = RngStream::new(7, "laa-mac/eNB-3/backoff");
        let xa: vec::Vec<i64> = (0..20).map(|_| a.uniform_int(1, 15)).collect();
        let xb: vec::Vec<i64> = (0..20).map(|_| b.uniform_int(1, 15)).collect();
        let xc: vec::Vec<i64> = (0..20).map(|_| c.uniform_int(1, 15)).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
        assert_eq!(a.uniform_int(7, 7), 7);
    }

    #[test]
    #[should_panic]
    fn uniform_int_rejects_inverted_range() {
        RngStream::new(1, "x").uniform_int(3, 2);
    }

    #[test]
    fn uniform_int_frequencies_within_five_sigma() {
        let mut r = RngStream::new(2024, "chi");
        let n = 100_000;
        let mut counts = [0u32; 15];
        for _ in 0..n {
            counts[(r.uniform_int(1, 15) - 1) as usize] += 1;
        }
        let p = 1.0 / 15.0;
        let sigma = libm::sqrt(n as f64 * p * (1.0 - p));
        let mut chi2 = 0.0;
        for c in counts {
            let e = n as f64 * p;
            assert!((c as f64 - e).abs() < 5.0 * sigma, "bin {c} vs {e}");
            chi2 += (c as f64 - e) * (c as f64 - e) / e;
        }
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let crit = ChiSquared::new(14.0).unwrap().inverse_cdf(0.999);
        assert!(chi2 < crit, "chi2 {chi2} >= {crit}");
    }

    proptest! {
        #[test]
        fn dispatch_count_is_insertions_minus_cancellations(
            times in proptest::collection::vec(0u64..1_000, 1..200),
            cancel_mask in proptest::collection::vec(any::<bool>(), 200),
            t_end in 0u64..1_200,
        ) {
            let mut s = Scheduler::new();
            let handles: vec::Vec<_> = times.iter().map(|&t| s.schedule(SimTime::from_nanos(t), t)).collect();
            let mut expected = 0;
            for (i, h) in handles.iter().enumerate() {
                if cancel_mask[i] {
                    prop_assert!(s.cancel(*h));
                } else if times[i] <= t_end {
                    expected += 1;
                }
            }
            let mut last = (0u64, 0u64);
            let mut order_ok = true;
            let n = s.run_until(SimTime::from_nanos(t_end), |s, t, _| {
                let key = (t.as_nanos(), s.dispatched());
                order_ok &= key >= last;
                last = key;
            });
            prop_assert!(order_ok);
            prop_assert_eq!(n, expected);
        }

        #[test]
        fn labels_hash_apart(a in "[a-z/0-9-]{1,24}", b in "[a-z/0-9-]{1,24}") {
            prop_assume!(a != b);
            let mut x = RngStream::new(1, &a);
            let mut y = RngStream::new(1, &b);
            let sx: String = (0..8).map(|_| char::from(b'a' + x.uniform_int(0, 25) as u8)).collect();
            let sy: String = (0..8).map(|_| char::from(b'a' + y.uniform_int(0, 25) as u8)).collect();
            prop_assert_ne!(sx, sy);
        }
    }
}
