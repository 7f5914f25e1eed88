use coexsim_core::config::{Layout, Step, TrafficModel, Transport};
use coexsim_core::radio::{Operator, Role, TxKind};
use coexsim_core::sim::{run, RunOptions, RunResult, Simulation};
use coexsim_core::{SimConfig, SimTime};

fn short(step: Step, transport: Transport, seed: u64) -> SimConfig {
    SimConfig { seed, step, transport, duration_s: Some(20.0), warmup_s: 2.0, ..SimConfig::default() }
}

fn full_log() -> RunOptions {
    RunOptions { record_events: true, record_tx_log: true }
}

fn clean(r: &RunResult) {
    let v = &r.audit.violations;
    assert!(v.is_empty(), "{:?}", &v[..v.len().min(5)]);
}

#[test]
fn audit_clean_across_steps_and_transports() {
    for step in [Step::One, Step::Two] {
        for tr in [Transport::Udp, Transport::Tcp] {
            for seed in [1, 7] {
                let r = run(short(step, tr, seed), RunOptions::default()).unwrap();
                clean(&r);
                assert!(r.flows.iter().any(|f| f.completion.is_some()), "{step:?} {tr:?}: nothing completed");
            }
        }
    }
}

#[test]
fn audit_clean_with_voice_and_cbr() {
    for step in [Step::One, Step::Two] {
        let mut c = short(step, Transport::Udp, 3);
        c.traffic.model = TrafficModel::Ftp1Voice;
        let r = run(c, RunOptions::default()).unwrap();
        clean(&r);
        assert_eq!(r.streams.len(), 2);
        assert!(r.voice_latency.is_some());

        let mut c = short(step, Transport::Udp, 3);
        c.traffic.model = TrafficModel::Cbr;
        c.duration_s = Some(5.0);
        let r = run(c, RunOptions::default()).unwrap();
        clean(&r);
        assert_eq!(r.streams.len(), 40);
        assert!(r.flows.is_empty());
        assert!(r.voice_latency.is_none());
    }
}

#[test]
fn identical_inputs_identical_results() {
    for step in [Step::One, Step::Two] {
        let a = run(short(step, Transport::Tcp, 11), full_log()).unwrap();
        let b = run(short(step, Transport::Tcp, 11), full_log()).unwrap();
        assert_eq!(a, b);
        let c = run(short(step, Transport::Tcp, 12), full_log()).unwrap();
        assert_ne!(a.flows, c.flows);
    }
}

#[test]
fn stepping_in_chunks_matches_one_shot() {
    let cfg = short(Step::Two, Transport::Udp, 5);
    let whole = run(cfg.clone(), full_log()).unwrap();
    let mut sim = Simulation::new(cfg, full_log()).unwrap();
    let mut t = SimTime::ZERO;
    while t < sim.end_time() {
        t += SimTime::from_millis(1_337);
        sim.run_until(t);
        assert!(sim.audit().is_clean());
    }
    assert_eq!(sim.finish(), whole);
}

#[test]
fn step_paired_geometry() {
    for seed in 1..=3 {
        let one = run(short(Step::One, Transport::Udp, seed), RunOptions::default()).unwrap();
        let two = run(short(Step::Two, Transport::Udp, seed), RunOptions::default()).unwrap();
        assert_eq!(one.topology.nodes.len(), two.topology.nodes.len());
        for (a, b) in one.topology.nodes.iter().zip(&two.topology.nodes) {
            assert_eq!((a.id, a.operator, a.role, a.position), (b.id, b.operator, b.role, b.position));
        }
        assert_eq!(one.topology.serving, two.topology.serving);
    }
}

#[test]
fn beacons_once_per_interval() {
    let r = run(short(Step::One, Transport::Udp, 2), full_log()).unwrap();
    let aps: Vec<_> = r.topology.nodes.iter().filter(|n| n.role == Role::Bs).map(|n| n.id).collect();
    assert_eq!(aps.len(), 8);
    for ap in aps {
        let n = r.tx_log.iter().filter(|t| t.node == ap && t.kind == TxKind::WifiBeacon).count();
        assert!((199..=200).contains(&n), "AP {ap:?} sent {n} beacons in 20 s");
    }
    for t in r.tx_log.iter().filter(|t| t.kind == TxKind::WifiBeacon) {
        assert_eq!(t.duration, SimTime::from_micros(176));
    }
}

#[test]
fn txops_bounded_and_subframes_on_grid() {
    for tr in [Transport::Udp, Transport::Tcp] {
        let r = run(short(Step::Two, tr, 4), full_log()).unwrap();
        assert!(!r.txops.is_empty());
        for x in &r.txops {
            assert!(x.duration() <= SimTime::from_millis(8), "{x:?}");
            assert_eq!((x.grant + x.reservation).as_nanos() % 1_000_000, 0, "{x:?}");
            assert!(x.reservation < SimTime::from_millis(1), "{x:?}");
        }
        let mut data = 0;
        for t in &r.tx_log {
            match t.kind {
                TxKind::LaaDataSubframe => {
                    data += 1;
                    assert_eq!(t.start.as_nanos() % 1_000_000, 0);
                    assert_eq!(t.duration, SimTime::from_millis(1));
                }
                TxKind::LaaReservation => assert!(t.duration < SimTime::from_millis(1)),
                TxKind::WifiAck => assert_eq!(t.duration, SimTime::from_micros(44)),
                _ => {}
            }
        }
        assert!(data > 0);
    }
}

#[test]
fn drs_every_window_accounted() {
    for period in [40.0, 80.0, 160.0] {
        let mut c = short(Step::Two, Transport::Udp, 6);
        c.laa.drs_period_ms = period;
        let r = run(c, full_log()).unwrap();
        clean(&r);
        let windows = 4 * (20_000.0 / period) as u64;
        assert_eq!(r.drs.windows, windows, "period {period}");
        assert_eq!(r.drs.standalone + r.drs.embedded + r.drs.missed, windows);
        let logged = r.tx_log.iter().filter(|t| t.kind == TxKind::LaaDrs).count() as u64;
        assert_eq!(logged, r.drs.standalone);
        assert_eq!(r.drs.airtime, SimTime::from_millis(r.drs.standalone));
    }
    let mut c = short(Step::Two, Transport::Udp, 6);
    c.laa.drs_enabled = false;
    let r = run(c, full_log()).unwrap();
    assert!(r.tx_log.iter().all(|t| t.kind != TxKind::LaaDrs));
}

#[test]
fn warmup_flows_are_excluded() {
    let r = run(short(Step::One, Transport::Udp, 9), RunOptions::default()).unwrap();
    let w = SimTime::from_secs(2);
    assert!(r.flows.iter().any(|f| !f.counted));
    for f in &r.flows {
        assert_eq!(f.counted, f.arrival >= w, "{f:?}");
    }
    let counted: usize = Operator::ALL.iter().map(|&op| r.throughputs(op).len()).sum();
    let completed = r.flows.iter().filter(|f| f.counted && f.completion.is_some()).count();
    assert_eq!(counted, completed);
}

#[test]
fn occupancy_is_a_fraction_and_subadditive() {
    for step in [Step::One, Step::Two] {
        let r = run(short(step, Transport::Tcp, 2), RunOptions::default()).unwrap();
        let sum: f64 = r.occupancy.values().sum();
        assert!(r.total_occupancy <= 1.0);
        assert!(r.total_occupancy <= sum + 1e-12);
        assert!(r.occupancy.values().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(r.total_occupancy >= r.occupancy.values().cloned().fold(0.0, f64::max));
    }
}

#[test]
fn corner_layout_runs() {
    let mut c = short(Step::Two, Transport::Udp, 1);
    c.scenario.layout = Layout::Corner;
    let r = run(c, RunOptions::default()).unwrap();
    clean(&r);
    assert!(r.topology.hidden_pairs(-62.0, -88.0, -72.0) >= r.topology.hidden_pairs(-82.0, -88.0, -72.0));
}

#[test]
fn invalid_config_is_rejected_by_key() {
    let mut c = SimConfig::default();
    c.laa.txop_ms = 20.0;
    let e = run(c, RunOptions::default()).unwrap_err();
    assert_eq!(e.key, "laa.txop_ms");
}
