mod common;

use coexsim_core::contention::{BusyTrace, ScriptedDraws};
use coexsim_core::laa::{cws_update, LbtAccess, LbtConfig};
use coexsim_core::wifi::{EdcaParams, TxCompletion, WifiAccess};
use coexsim_core::SimTime;
use common::{cws_reference, dcf_window, Medium};
use proptest::prelude::*;

const DEFER: u64 = 43_000;
const SLOT: u64 = 9_000;

/// Busy intervals built from alternating idle gaps and busy lengths. Units of
/// 1 us make exact slot-boundary coincidences common; 1 ns units exercise
/// off-grid transitions.
fn trace() -> impl Strategy<Value = Vec<(u64, u64)>> {
    (prop_oneof![Just(1u64), Just(1_000u64)], prop::collection::vec((0u64..400, 1u64..400), 0..12)).prop_map(
        |(unit, parts)| {
            let mut t = 0;
            let mut out = Vec::new();
            for (gap, len) in parts {
                let s = t + gap * unit;
                let e = s + len * unit;
                out.push((s, e));
                t = e;
            }
            out
        },
    )
}

fn busy_trace(v: &[(u64, u64)]) -> BusyTrace {
    BusyTrace::new(v.iter().map(|&(s, e)| (SimTime::from_nanos(s), SimTime::from_nanos(e))).collect())
}

fn idle_at(m: &Medium, t: u64) -> Option<SimTime> {
    (!m.busy_at(t)).then_some(SimTime::from_nanos(t))
}

fn merged(v: Vec<(u64, u64)>) -> Medium {
    let busy = busy_trace(&v).intervals().iter().map(|&(s, e)| (s.as_nanos(), e.as_nanos())).collect();
    Medium { busy }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn ecca_grant_matches_walker(raw in trace(), t0 in 0u64..300_000, qi in 0usize..3, frac in 0.0f64..1.0) {
        let cfg = LbtConfig::default();
        let q = cfg.cws_set[qi];
        let n = 1 + ((q as f64 * frac) as u32).min(q - 1);
        let m = merged(raw.clone());
        let mut a = LbtAccess::new(&cfg, idle_at(&m, t0));
        a.set_q(q);
        a.start_ecca(&mut ScriptedDraws::new(vec![n]));
        let got = busy_trace(&raw).drive(&mut a, SimTime::from_nanos(t0), &mut ScriptedDraws::new(vec![]));
        prop_assert_eq!(got.map(|g| g.as_nanos()), Some(m.countdown(t0, DEFER, SLOT, n)));
    }

    #[test]
    fn initial_cca_then_ecca_matches_walker(raw in trace(), t0 in 0u64..300_000, n in 1u32..=15) {
        let cfg = LbtConfig::default();
        let m = merged(raw.clone());
        let mut a = LbtAccess::new(&cfg, idle_at(&m, t0));
        let mut d = ScriptedDraws::new(vec![n]);
        a.request(SimTime::from_nanos(t0), &mut d);
        let got = busy_trace(&raw).drive(&mut a, SimTime::from_nanos(t0), &mut d);
        prop_assert_eq!(got.map(|g| g.as_nanos()), Some(m.immediate_or_countdown(t0, DEFER, SLOT, n)));
    }

    #[test]
    fn dcf_grant_matches_walker(raw in trace(), t0 in 0u64..300_000, n in 0u32..=15, voice in any::<bool>()) {
        let params = if voice { EdcaParams::VOICE } else { EdcaParams::BEST_EFFORT };
        let n = n.min(params.cw_min);
        let defer = params.aifs().as_nanos();
        let m = merged(raw.clone());
        let mut a = WifiAccess::new(params, idle_at(&m, t0));
        let mut d = ScriptedDraws::new(vec![n]);
        a.request(SimTime::from_nanos(t0), &mut d);
        let got = busy_trace(&raw).drive(&mut a, SimTime::from_nanos(t0), &mut d);
        prop_assert_eq!(got.map(|g| g.as_nanos()), Some(m.immediate_or_countdown(t0, defer, SLOT, n)));
    }

    #[test]
    fn dcf_backoff_freeze_and_resume(raw in trace(), t0 in 0u64..300_000, n in 0u32..=15) {
        let m = merged(raw.clone());
        let mut a = WifiAccess::new(EdcaParams::BEST_EFFORT, idle_at(&m, t0));
        a.start_backoff(&mut ScriptedDraws::new(vec![n]));
        let got = busy_trace(&raw).drive(&mut a, SimTime::from_nanos(t0), &mut ScriptedDraws::new(vec![]));
        prop_assert_eq!(got.map(|g| g.as_nanos()), Some(m.countdown(t0, DEFER, SLOT, n)));
    }

    #[test]
    fn dcf_window_sequence(outcomes in prop::collection::vec(any::<bool>(), 0..60), voice in any::<bool>()) {
        let p = if voice { EdcaParams::VOICE } else { EdcaParams::BEST_EFFORT };
        let mut a = WifiAccess::new(p, None);
        let mut failures = 0u32;
        for ok in outcomes {
            let c = a.on_tx_complete(ok);
            if ok {
                failures = 0;
                prop_assert_eq!(c, TxCompletion::Success);
            } else if failures == p.retry_limit {
                failures = 0;
                prop_assert_eq!(c, TxCompletion::Drop);
            } else {
                failures += 1;
                prop_assert_eq!(c, TxCompletion::Retry);
            }
            prop_assert_eq!(a.cw(), dcf_window(p.cw_min, p.cw_max, failures));
        }
    }

    #[test]
    fn cws_trajectory_matches_reference(batches in prop::collection::vec((0usize..12, 0usize..12), 1..40)) {
        let cfg = LbtConfig::default();
        let (mut q, mut r) = (15, 15);
        for (total, nacks) in batches {
            let nacks = nacks.min(total);
            q = cws_update(q, &cfg.cws_set, nacks, total, cfg.z_threshold);
            r = cws_reference(r, nacks, total);
            prop_assert_eq!(q, r);
        }
    }
}

#[test]
fn eighty_percent_nack_grows() {
    assert_eq!(cws_update(15, &[15, 31, 63], 4, 5, 0.8), 31);
    assert_eq!(cws_update(15, &[15, 31, 63], 3, 5, 0.8), 15);
    assert_eq!(cws_update(63, &[15, 31, 63], 8, 10, 0.8), 63);
    assert_eq!(cws_update(31, &[15, 31, 63], 0, 0, 0.8), 31);
}

#[test]
fn walker_sanity() {
    let m = Medium { busy: vec![(0, 100_000)] };
    assert_eq!(m.countdown(0, DEFER, SLOT, 3), 100_000 + 43_000 + 27_000);
    let m = Medium { busy: vec![(50_000, 60_000)] };
    // The first slot would end at 52 us, so nothing is counted before 50 us.
    assert_eq!(m.countdown(0, DEFER, SLOT, 3), 60_000 + 43_000 + 27_000);
    let m = Medium { busy: vec![(61_000, 70_000)] };
    assert_eq!(m.countdown(0, DEFER, SLOT, 3), 70_000 + 43_000 + 9_000);
    assert_eq!(dcf_window(15, 1023, 0), 15);
    assert_eq!(dcf_window(15, 1023, 6), 1023);
    assert_eq!(dcf_window(7, 15, 3), 15);
}
