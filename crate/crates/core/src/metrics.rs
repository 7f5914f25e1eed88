//! Flow throughput, channel occupancy, collision attribution, latency
//! quantiles and empirical CDFs.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::radio::{Operator, Technology};
use crate::time::SimTime;

/// `8 * bytes / (completion - arrival)` in bit/s; `None` unless the flow
/// took positive time.
pub fn flow_throughput_bps(bytes: u64, arrival: SimTime, completion: SimTime) -> Option<f64> {
    let d = completion.checked_sub(arrival)?;
    if d == SimTime::ZERO {
        return None;
    }
    Some(8.0 * bytes as f64 / d.as_secs_f64())
}

/// Total length covered by a set of half-open intervals.
pub fn union_length(intervals: &[(SimTime, SimTime)]) -> SimTime {
    let mut v: Vec<(SimTime, SimTime)> = intervals.iter().copied().filter(|(s, e)| e > s).collect();
    v.sort();
    let mut total = 0u64;
    let mut cur: Option<(SimTime, SimTime)> = None;
    for (s, e) in v {
        match cur {
            Some((cs, ce)) if s <= ce => cur = Some((cs, ce.max(e))),
            Some((cs, ce)) => {
                total += (ce - cs).as_nanos();
                cur = Some((s, e));
            }
            None => cur = Some((s, e)),
        }
    }
    if let Some((cs, ce)) = cur {
        total += (ce - cs).as_nanos();
    }
    SimTime::from_nanos(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NetworkKey {
    pub operator: Operator,
    pub technology: Technology,
}

impl NetworkKey {
    pub fn label(&self) -> alloc::string::String {
        alloc::format!("{}-{}", self.operator.label(), self.technology.label())
    }
}

/// On-air intervals per network, clipped to a measurement window.
#[derive(Clone, Debug)]
pub struct OccupancyLedger {
    window: (SimTime, SimTime),
    intervals: BTreeMap<NetworkKey, Vec<(SimTime, SimTime)>>,
}

impl OccupancyLedger {
    pub fn new(start: SimTime, end: SimTime) -> Self {
        OccupancyLedger { window: (start, end), intervals: BTreeMap::new() }
    }

    pub fn window(&self) -> (SimTime, SimTime) {
        self.window
    }

    pub fn record(&mut self, key: NetworkKey, start: SimTime, end: SimTime) {
        let s = start.max(self.window.0);
        let e = end.min(self.window.1);
        let list = self.intervals.entry(key).or_default();
        if e > s {
            list.push((s, e));
        }
    }

    pub fn networks(&self) -> impl Iterator<Item = &NetworkKey> {
        self.intervals.keys()
    }

    pub fn airtime(&self, keys: &[NetworkKey]) -> SimTime {
        let all: Vec<(SimTime, SimTime)> = keys
            .iter()
            .filter_map(|k| self.intervals.get(k))
            .flat_map(|v| v.iter().copied())
            .collect();
        union_length(&all)
    }

    /// Fraction of the window during which any of `keys` is on air.
    pub fn fraction(&self, keys: &[NetworkKey]) -> f64 {
        let w = self.window.1.saturating_sub(self.window.0);
        if w == SimTime::ZERO {
            return 0.0;
        }
        self.airtime(keys).as_secs_f64() / w.as_secs_f64()
    }
}

/// Decode outcomes of data transmissions. A collision is a failed decode that
/// would have succeeded against noise alone.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollisionStats {
    pub decodes: u64,
    pub failures: u64,
    pub collisions: u64,
}

impl CollisionStats {
    pub fn record(&mut self, success: bool, noise_only_success: bool) {
        self.decodes += 1;
        if !success {
            self.failures += 1;
            if noise_only_success {
                self.collisions += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &CollisionStats) {
        self.decodes += other.decodes;
        self.failures += other.failures;
        self.collisions += other.collisions;
    }

    pub fn fraction(&self) -> f64 {
        if self.decodes == 0 {
            0.0
        } else {
            self.collisions as f64 / self.decodes as f64
        }
    }
}

/// Nearest-rank quantile of sorted data, `q` in `(0, 1]`.
pub fn nearest_rank<T: Copy>(sorted: &[T], q: f64) -> Option<T> {
    if sorted.is_empty() {
        return None;
    }
    let rank = libm::ceil(q * sorted.len() as f64) as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: usize,
    pub p50: SimTime,
    pub p95: SimTime,
    pub p99: SimTime,
    pub max: SimTime,
}

/// Per-class latency quantiles; `None` for an empty class.
pub fn latency_stats(samples: &[SimTime]) -> Option<LatencyStats> {
    let mut v = samples.to_vec();
    v.sort_unstable();
    Some(LatencyStats {
        count: v.len(),
        p50: nearest_rank(&v, 0.50)?,
        p95: nearest_rank(&v, 0.95)?,
        p99: nearest_rank(&v, 0.99)?,
        max: *v.last()?,
    })
}

/// Exact empirical CDF: sorted distinct values with `F(x) = #{v <= x} / n`.
pub fn cdf_points(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, x) in v.iter().enumerate() {
        let f = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *x => last.1 = f,
            _ => out.push((*x, f)),
        }
    }
    out
}

/// Median of unsorted values (mean of the two central values for even n).
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}
