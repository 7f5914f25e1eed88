use coexsim_core::config::{Step, Transport};
use coexsim_core::metrics::{cdf_points, latency_stats, union_length};
use coexsim_core::radio::TxKind;
use coexsim_core::sim::{run, RunOptions};
use coexsim_core::{SimConfig, SimTime};
use proptest::prelude::*;

fn intervals() -> impl Strategy<Value = Vec<(u64, u64)>> {
    prop::collection::vec((0u64..10_000, 0u64..2_000), 0..40)
        .prop_map(|v| v.into_iter().map(|(s, l)| (s, s + l)).collect())
}

fn to_time(v: &[(u64, u64)]) -> Vec<(SimTime, SimTime)> {
    v.iter().map(|&(s, e)| (SimTime::from_nanos(s), SimTime::from_nanos(e))).collect()
}

/// Covered length by marking every nanosecond.
fn brute_union(v: &[(u64, u64)]) -> u64 {
    let mut covered = vec![false; 12_000];
    for &(s, e) in v {
        for c in &mut covered[s as usize..e as usize] {
            *c = true;
        }
    }
    covered.iter().filter(|&&c| c).count() as u64
}

proptest! {
    #[test]
    fn union_matches_brute_force(v in intervals()) {
        prop_assert_eq!(union_length(&to_time(&v)).as_nanos(), brute_union(&v));
    }

    #[test]
    fn union_subadditive(a in intervals(), b in intervals()) {
        let mut both = a.clone();
        both.extend_from_slice(&b);
        let u = union_length(&to_time(&both));
        prop_assert!(u <= union_length(&to_time(&a)) + union_length(&to_time(&b)));
        prop_assert!(u >= union_length(&to_time(&a)).max(union_length(&to_time(&b))));
    }

    #[test]
    fn cdf_is_exact_and_monotone(v in prop::collection::vec(0u32..50, 1..200)) {
        let xs: Vec<f64> = v.iter().map(|&x| x as f64).collect();
        let pts = cdf_points(&xs);
        prop_assert_eq!(pts.last().unwrap().1, 1.0);
        for w in pts.windows(2) {
            prop_assert!(w[0].0 < w[1].0 && w[0].1 < w[1].1);
        }
        for &(x, f) in &pts {
            let below = xs.iter().filter(|&&y| y <= x).count();
            prop_assert_eq!(f, below as f64 / xs.len() as f64);
        }
    }

    #[test]
    fn latency_quantiles_ordered(v in prop::collection::vec(0u64..1_000_000_000, 1..300)) {
        let s: Vec<SimTime> = v.iter().map(|&x| SimTime::from_nanos(x)).collect();
        let q = latency_stats(&s).unwrap();
        prop_assert!(q.p50 <= q.p95 && q.p95 <= q.p99 && q.p99 <= q.max);
        prop_assert_eq!(q.count, v.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Short runs at random seeds, loads and modes keep every run-level
    /// invariant.
    #[test]
    fn run_invariants(seed in 1u64..10_000, two in any::<bool>(), tcp in any::<bool>(), lambda in 0.5f64..4.0) {
        let mut c = SimConfig {
            seed,
            step: if two { Step::Two } else { Step::One },
            transport: if tcp { Transport::Tcp } else { Transport::Udp },
            duration_s: Some(8.0),
            warmup_s: 1.0,
            ..SimConfig::default()
        };
        c.traffic.lambda = lambda;
        let r = run(c, RunOptions { record_events: false, record_tx_log: true }).unwrap();
        prop_assert!(r.audit.is_clean(), "{:?}", r.audit.violations.first());
        prop_assert!(r.total_occupancy <= 1.0);
        prop_assert!(r.wifi_combined_occupancy <= r.total_occupancy + 1e-12);
        for x in &r.txops {
            prop_assert!(x.duration() <= SimTime::from_millis(8));
        }
        for t in r.tx_log.iter().filter(|t| t.kind == TxKind::LaaDataSubframe) {
            prop_assert_eq!(t.start.as_nanos() % 1_000_000, 0);
        }
        for f in &r.flows {
            prop_assert!(f.delivered_bytes <= f.bytes);
            if f.completion.is_some() && tcp {
                prop_assert_eq!(f.delivered_bytes, f.bytes);
            }
        }
        let c = r.collision_total();
        prop_assert!(c.collisions <= c.failures && c.failures <= c.decodes);
    }
}
