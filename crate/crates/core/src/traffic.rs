//! Workload generators and transport endpoints: FTP Model 1 arrivals, voice
//! and CBR packet sources, a segment-granular TCP NewReno sender/receiver pair
//! and RLC transmit-side queueing.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::kernel::RngStream;
use crate::time::SimTime;

/// Poisson file arrivals over `[0, duration)` with destinations drawn
/// uniformly from `0..n_destinations`.
pub fn ftp_arrivals(
    lambda: f64,
    duration: SimTime,
    n_destinations: usize,
    arrivals: &mut RngStream,
    destinations: &mut RngStream,
) -> Vec<(SimTime, usize)> {
    let mut out = Vec::new();
    if lambda <= 0.0 || n_destinations == 0 {
        return out;
    }
    let mut t = 0.0;
    let end = duration.as_secs_f64();
    loop {
        t += arrivals.exponential(lambda);
        if t >= end {
            break;
        }
        let d = destinations.uniform_int(0, n_destinations as i64 - 1) as usize;
        out.push((SimTime::from_secs_f64(t), d));
    }
    out
}

/// Fixed-interval packet instants `start, start + interval, ...` before `end`.
pub fn periodic_instants(start: SimTime, interval: SimTime, end: SimTime) -> impl Iterator<Item = SimTime> {
    let mut next = start;
    core::iter::from_fn(move || {
        if interval == SimTime::ZERO || next >= end {
            return None;
        }
        let t = next;
        next += interval;
        Some(t)
    })
}

/// Packet interval that yields `rate_bps` with `packet_bytes` packets;
/// `None` when the source is disabled.
pub fn cbr_interval(rate_bps: f64, packet_bytes: u32) -> Option<SimTime> {
    if rate_bps <= 0.0 || packet_bytes == 0 {
        return None;
    }
    Some(SimTime::from_secs_f64(8.0 * packet_bytes as f64 / rate_bps))
}

/// Fraction of latency samples strictly above `threshold`.
pub fn outage_fraction(latencies: &[SimTime], threshold: SimTime) -> f64 {
    if latencies.is_empty() {
        return 0.0;
    }
    latencies.iter().filter(|&&l| l > threshold).count() as f64 / latencies.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TcpParams {
    pub initial_cwnd: u32,
    pub mss: u32,
    pub min_rto: SimTime,
    pub initial_rto: SimTime,
    pub max_rto: SimTime,
}

impl Default for TcpParams {
    fn default() -> Self {
        TcpParams {
            initial_cwnd: 10,
            mss: 1440,
            min_rto: SimTime::from_millis(200),
            initial_rto: SimTime::from_secs(1),
            max_rto: SimTime::from_secs(60),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TcpPhase {
    SlowStart,
    CongestionAvoidance,
    FastRecovery,
}

/// A segment released by the sender.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TcpSegment {
    pub seq: u32,
    pub bytes: u32,
    pub retransmission: bool,
}

/// NewReno sender over whole segments. Sequence numbers count segments and
/// ACKs carry the next expected segment.
#[derive(Clone, Debug)]
pub struct TcpSender {
    params: TcpParams,
    total_bytes: u64,
    total_segments: u32,
    snd_una: u32,
    snd_nxt: u32,
    high_tx: u32,
    cwnd: f64,
    ssthresh: f64,
    dupacks: u32,
    recover: Option<u32>,
    fast_recovery: bool,
    srtt: Option<SimTime>,
    rttvar: SimTime,
    rto: SimTime,
    timing: Option<(u32, SimTime)>,
    rto_deadline: Option<SimTime>,
    retransmits: u32,
    timeouts: u32,
}

impl TcpSender {
    pub fn new(total_bytes: u64, params: TcpParams) -> Self {
        let total_segments = total_bytes.div_ceil(params.mss as u64) as u32;
        TcpSender {
            params,
            total_bytes,
            total_segments,
            snd_una: 0,
            snd_nxt: 0,
            high_tx: 0,
            cwnd: params.initial_cwnd as f64,
            ssthresh: f64::INFINITY,
            dupacks: 0,
            recover: None,
            fast_recovery: false,
            srtt: None,
            rttvar: SimTime::ZERO,
            rto: params.initial_rto,
            timing: None,
            rto_deadline: None,
            retransmits: 0,
            timeouts: 0,
        }
    }

    pub fn total_segments(&self) -> u32 {
        self.total_segments
    }

    pub fn segment_bytes(&self, seq: u32) -> u32 {
        let start = seq as u64 * self.params.mss as u64;
        (self.total_bytes - start).min(self.params.mss as u64) as u32
    }

    pub fn cwnd(&self) -> f64 {
        self.cwnd
    }

    pub fn ssthresh(&self) -> f64 {
        self.ssthresh
    }

    pub fn phase(&self) -> TcpPhase {
        if self.fast_recovery {
            TcpPhase::FastRecovery
        } else if self.cwnd < self.ssthresh {
            TcpPhase::SlowStart
        } else {
            TcpPhase::CongestionAvoidance
        }
    }

    pub fn rto(&self) -> SimTime {
        self.rto
    }

    pub fn srtt(&self) -> Option<SimTime> {
        self.srtt
    }

    pub fn rto_deadline(&self) -> Option<SimTime> {
        self.rto_deadline
    }

    pub fn snd_una(&self) -> u32 {
        self.snd_una
    }

    pub fn retransmits(&self) -> u32 {
        self.retransmits
    }

    pub fn timeouts(&self) -> u32 {
        self.timeouts
    }

    pub fn is_done(&self) -> bool {
        self.snd_una >= self.total_segments
    }

    fn flight(&self) -> u32 {
        self.snd_nxt - self.snd_una
    }

    fn emit(&mut self, seq: u32, now: SimTime, out: &mut Vec<TcpSegment>) {
        let retransmission = seq < self.high_tx;
        if retransmission {
            self.retransmits += 1;
            // Karn: never time a segment that has been sent twice.
            if self.timing.is_some_and(|(s, _)| s >= seq) {
                self.timing = None;
            }
        } else if self.timing.is_none() {
            self.timing = Some((seq, now));
        }
        self.high_tx = self.high_tx.max(seq + 1);
        if self.rto_deadline.is_none() {
            self.rto_deadline = Some(now + self.rto);
        }
        out.push(TcpSegment { seq, bytes: self.segment_bytes(seq), retransmission });
    }

    /// Releases every segment the window currently allows.
    pub fn poll(&mut self, now: SimTime) -> Vec<TcpSegment> {
        let mut out = Vec::new();
        let window = libm::floor(self.cwnd).max(1.0) as u32;
        while self.snd_nxt < self.total_segments && self.flight() < window {
            let seq = self.snd_nxt;
            self.snd_nxt += 1;
            self.emit(seq, now, &mut out);
        }
        out
    }

    fn sample_rtt(&mut self, r: SimTime) {
        match self.srtt {
            None => {
                self.srtt = Some(r);
                self.rttvar = SimTime::from_nanos(r.as_nanos() / 2);
            }
            Some(srtt) => {
                let diff = srtt.as_nanos().abs_diff(r.as_nanos());
                self.rttvar = SimTime::from_nanos((3 * self.rttvar.as_nanos() + diff) / 4);
                self.srtt = Some(SimTime::from_nanos((7 * srtt.as_nanos() + r.as_nanos()) / 8));
            }
        }
        let rto = self.srtt.expect("set") + self.rttvar * 4;
        self.rto = rto.max(self.params.min_rto).min(self.params.max_rto);
    }

    /// Processes a cumulative ACK and returns the segments to send next.
    pub fn on_ack(&mut self, now: SimTime, ack: u32) -> Vec<TcpSegment> {
        let mut out = Vec::new();
        let ack = ack.min(self.total_segments);
        if ack > self.snd_una {
            if let Some((seq, sent)) = self.timing {
                if ack > seq {
                    self.sample_rtt(now - sent);
                    self.timing = None;
                }
            }
            let acked = ack - self.snd_una;
            self.snd_una = ack;
            if self.snd_nxt < ack {
                self.snd_nxt = ack;
            }
            self.dupacks = 0;
            if self.fast_recovery {
                if self.recover.is_none_or(|r| ack > r) {
                    self.cwnd = self.ssthresh;
                    self.fast_recovery = false;
                } else {
                    // Partial ACK: resend the next hole and deflate.
                    self.cwnd = (self.cwnd - acked as f64 + 1.0).max(1.0);
                    self.emit(ack, now, &mut out);
                }
            } else if self.cwnd < self.ssthresh {
                self.cwnd += 1.0;
            } else {
                self.cwnd += 1.0 / self.cwnd;
            }
            self.rto_deadline = if self.snd_una < self.snd_nxt { Some(now + self.rto) } else { None };
        } else if ack == self.snd_una && self.snd_una < self.snd_nxt {
            self.dupacks += 1;
            if self.fast_recovery {
                self.cwnd += 1.0;
            } else if self.dupacks == 3 && self.recover.is_none_or(|r| ack > r) {
                self.ssthresh = (self.flight() as f64 / 2.0).max(2.0);
                self.recover = Some(self.high_tx - 1);
                self.fast_recovery = true;
                self.cwnd = self.ssthresh + 3.0;
                self.emit(ack, now, &mut out);
            }
        }
        out.extend(self.poll(now));
        out
    }

    /// Retransmission timeout: collapse the window and go back to `snd_una`.
    pub fn on_rto(&mut self, now: SimTime) -> Vec<TcpSegment> {
        self.timeouts += 1;
        self.ssthresh = (self.flight() as f64 / 2.0).max(2.0);
        self.cwnd = 1.0;
        self.fast_recovery = false;
        self.dupacks = 0;
        self.recover = self.high_tx.checked_sub(1);
        self.snd_nxt = self.snd_una;
        self.timing = None;
        self.rto = (self.rto * 2).min(self.params.max_rto);
        self.rto_deadline = None;
        self.poll(now)
    }
}

/// Receiver side: tracks received segments and produces cumulative ACKs.
#[derive(Clone, Debug, Default)]
pub struct TcpReceiver {
    total_segments: u32,
    next_expected: u32,
    out_of_order: BTreeMap<u32, ()>,
}

impl TcpReceiver {
    pub fn new(total_segments: u32) -> Self {
        TcpReceiver { total_segments, next_expected: 0, out_of_order: BTreeMap::new() }
    }

    pub fn next_expected(&self) -> u32 {
        self.next_expected
    }

    pub fn is_complete(&self) -> bool {
        self.next_expected >= self.total_segments
    }

    /// Accepts segment `seq`; returns the ACK to send and the range of
    /// segments that became deliverable in order.
    pub fn on_segment(&mut self, seq: u32) -> (u32, core::ops::Range<u32>) {
        let before = self.next_expected;
        if seq == self.next_expected {
            self.next_expected += 1;
            while self.out_of_order.remove(&self.next_expected).is_some() {
                self.next_expected += 1;
            }
        } else if seq > self.next_expected {
            self.out_of_order.insert(seq, ());
        }
        (self.next_expected, before..self.next_expected)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RlcMode {
    Um,
    Am,
}

/// Part of an upper-layer packet carried by the RLC.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Piece {
    pub packet: u32,
    pub bytes: u32,
}

/// RLC transmit buffer: retransmissions ahead of new data, segmentation to
/// fit transport blocks.
#[derive(Clone, Debug, Default)]
pub struct RlcTxBuffer {
    queue: VecDeque<Piece>,
    bytes: u64,
}

impl RlcTxBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn queued_bytes(&self) -> u64 {
        self.bytes
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn pieces(&self) -> impl Iterator<Item = &Piece> {
        self.queue.iter()
    }

    pub fn push_back(&mut self, piece: Piece) {
        self.bytes += piece.bytes as u64;
        self.queue.push_back(piece);
    }

    /// Re-enqueues pieces at the head, preserving their relative order.
    pub fn push_front_all(&mut self, pieces: &[Piece]) {
        for p in pieces.iter().rev() {
            self.bytes += p.bytes as u64;
            self.queue.push_front(*p);
        }
    }

    /// Removes up to `max_bytes` from the head, splitting the last piece if
    /// needed.
    pub fn take(&mut self, max_bytes: u64) -> Vec<Piece> {
        let mut out = Vec::new();
        let mut room = max_bytes;
        while room > 0 {
            let Some(head) = self.queue.front_mut() else { break };
            if head.bytes as u64 <= room {
                room -= head.bytes as u64;
                self.bytes -= head.bytes as u64;
                out.push(*head);
                self.queue.pop_front();
            } else {
                let part = room as u32;
                head.bytes -= part;
                self.bytes -= part as u64;
                out.push(Piece { packet: head.packet, bytes: part });
                room = 0;
            }
        }
        out
    }

    /// Drops every piece of the given packet; returns the bytes removed.
    pub fn purge_packet(&mut self, packet: u32) -> u64 {
        let mut removed = 0;
        self.queue.retain(|p| {
            if p.packet == packet {
                removed += p.bytes as u64;
                false
            } else {
                true
            }
        });
        self.bytes -= removed;
        removed
    }
}

/// In-order delivery for acknowledged mode: packets complete out of order
/// but are released by ascending sequence number.
#[derive(Clone, Debug, Default)]
pub struct InOrderRelease {
    next: u32,
    ready: BTreeMap<u32, u32>,
}

impl InOrderRelease {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records completion of the packet with RLC sequence `sn`; returns the
    /// packets released in order.
    pub fn complete(&mut self, sn: u32, packet: u32) -> Vec<u32> {
        let mut out = Vec::new();
        if sn < self.next {
            return out;
        }
        self.ready.insert(sn, packet);
        while let Some(p) = self.ready.remove(&self.next) {
            out.push(p);
            self.next += 1;
        }
        out
    }

    /// Skips a sequence number that will never complete.
    pub fn skip(&mut self, sn: u32) -> Vec<u32> {
        let mut out = Vec::new();
        if sn == self.next {
            self.next += 1;
            while let Some(p) = self.ready.remove(&self.next) {
                out.push(p);
                self.next += 1;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn arrivals_zero_rate() {
        let mut a = RngStream::new(1, "a");
        let mut d = RngStream::new(1, "d");
        assert!(ftp_arrivals(0.0, SimTime::from_secs(100), 20, &mut a, &mut d).is_empty());
    }

    #[test]
    fn periodic_counts() {
        let v: Vec<_> = periodic_instants(SimTime::ZERO, SimTime::from_millis(20), SimTime::from_secs(10)).collect();
        assert_eq!(v.len(), 500);
        assert_eq!(cbr_interval(1e6, 1000), Some(SimTime::from_millis(8)));
        assert_eq!(cbr_interval(0.0, 1000), None);
    }

    #[test]
    fn outage() {
        let l = vec![SimTime::from_millis(60); 10];
        assert_eq!(outage_fraction(&l, SimTime::from_millis(50)), 1.0);
        assert_eq!(outage_fraction(&[SimTime::from_millis(5)], SimTime::from_millis(50)), 0.0);
    }

    #[test]
    fn first_flight_is_ten_segments() {
        let mut s = TcpSender::new(500_000, TcpParams::default());
        let f = s.poll(SimTime::ZERO);
        assert_eq!(f.len(), 10);
        assert_eq!(f.iter().map(|x| x.bytes).sum::<u32>(), 14_400);
        assert_eq!(s.total_segments(), 348);
        assert_eq!(s.segment_bytes(347), 500_000 - 347 * 1440);
    }

    #[test]
    fn fast_retransmit_after_three_dupacks() {
        let mut s = TcpSender::new(100 * 1440, TcpParams::default());
        let t = SimTime::from_millis(1);
        s.poll(SimTime::ZERO);
        // Segment 0 lost; 1, 2, 3 arrive.
        assert!(s.on_ack(t, 0).is_empty());
        assert!(s.on_ack(t, 0).is_empty());
        let r = s.on_ack(t, 0);
        assert_eq!(r[0], TcpSegment { seq: 0, bytes: 1440, retransmission: true });
        assert_eq!(s.phase(), TcpPhase::FastRecovery);
        assert_eq!(s.ssthresh(), 5.0);
        s.on_ack(t, 10);
        assert_eq!(s.phase(), TcpPhase::CongestionAvoidance);
        assert_eq!(s.cwnd(), 5.0);
    }

    #[test]
    fn rto_collapses_window() {
        let mut s = TcpSender::new(100 * 1440, TcpParams::default());
        s.poll(SimTime::ZERO);
        assert_eq!(s.rto_deadline(), Some(SimTime::from_secs(1)));
        let r = s.on_rto(SimTime::from_secs(1));
        assert_eq!(r.len(), 1);
        assert!(r[0].retransmission);
        assert_eq!(s.cwnd(), 1.0);
        assert_eq!(s.rto(), SimTime::from_secs(2));
    }

    #[test]
    fn receiver_reorders() {
        let mut r = TcpReceiver::new(5);
        assert_eq!(r.on_segment(1), (0, 0..0));
        assert_eq!(r.on_segment(0), (2, 0..2));
        assert_eq!(r.on_segment(0), (2, 2..2));
        r.on_segment(2);
        r.on_segment(3);
        r.on_segment(4);
        assert!(r.is_complete());
    }

    #[test]
    fn rlc_segmentation() {
        let mut b = RlcTxBuffer::new();
        b.push_back(Piece { packet: 1, bytes: 1000 });
        b.push_back(Piece { packet: 2, bytes: 1000 });
        let t = b.take(1500);
        assert_eq!(t, vec![Piece { packet: 1, bytes: 1000 }, Piece { packet: 2, bytes: 500 }]);
        assert_eq!(b.queued_bytes(), 500);
        b.push_front_all(&[Piece { packet: 1, bytes: 1000 }]);
        assert_eq!(b.queued_bytes(), 1500);
        assert_eq!(b.take(10_000).len(), 2);
        assert!(b.is_empty());
    }

    #[test]
    fn in_order_release() {
        let mut r = InOrderRelease::new();
        assert!(r.complete(1, 11).is_empty());
        assert_eq!(r.complete(0, 10), vec![10, 11]);
        assert!(r.complete(3, 13).is_empty());
        assert_eq!(r.skip(2), vec![13]);
    }
}
