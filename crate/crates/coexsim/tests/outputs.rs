use std::fs;
use std::path::{Path, PathBuf};

use coexsim::campaign::execute;
use coexsim::config::{parse_config, parse_override};
use coexsim::run_campaign;
use coexsim_core::config::{Layout, Step, Transport};

fn ov(v: &[&str]) -> Vec<(String, toml::Value)> {
    v.iter().map(|s| parse_override(s).unwrap()).collect()
}

fn header(p: &Path) -> String {
    fs::read_to_string(p).unwrap().lines().next().unwrap().to_owned()
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn empty_config_gives_defaults() {
    let c = parse_config("", &[]).unwrap();
    let b = &c.base;
    assert_eq!(b.radio.bs_tx_power_dbm, 18.0);
    assert_eq!(b.radio.terminal_tx_power_dbm, 18.0);
    assert_eq!(b.wifi.ed_threshold_dbm, -62.0);
    assert_eq!(b.laa.ed_threshold_dbm, -72.0);
    assert_eq!(b.laa.txop_ms, 8.0);
    assert_eq!(b.traffic.lambda, 2.5);
    assert_eq!(b.duration_s(), 384.0);
    assert_eq!(b.transport, Transport::Udp);
    assert_eq!(b.scenario.layout, Layout::Indoor);
    assert_eq!(c.runs().len(), 2);
}

#[test]
fn campaign_enumeration() {
    let c = parse_config("[campaign]\nseeds = [1, 2, 3, 4, 5]\nlambdas = [2.5]\nsteps = [1, 2]\n", &[]).unwrap();
    assert_eq!(c.runs().len(), 10);
}

#[test]
fn overrides_win_and_are_validated() {
    let c = parse_config("[traffic]\nlambda = 1.0\n", &ov(&["traffic.lambda=0.5"])).unwrap();
    assert_eq!(c.base.traffic.lambda, 0.5);
    assert_eq!(c.base.duration_s(), 1920.0);
    let e = parse_config("", &ov(&["laa.txop_ms=20"])).unwrap_err();
    assert!(e.to_string().contains("laa.txop_ms"), "{e}");
    let e = parse_config("", &ov(&["campaign.lambdas=[0.0]"])).unwrap_err();
    assert!(e.to_string().contains("lambda"), "{e}");
    let e = parse_config("", &ov(&["transport=quic"])).unwrap_err();
    assert!(e.to_string().contains("transport"), "{e}");
}

#[test]
fn csv_headers_are_pinned() {
    let dir = tempfile::tempdir().unwrap();
    let c = parse_config("duration_s = 5.0\n", &ov(&["traffic.model=\"ftp1+voice\""])).unwrap();
    let rep = run_campaign(&c, dir.path()).unwrap();
    assert_eq!(rep.failures().count(), 0);
    let run = dir.path().join("lambda-2.5/seed-1/step-2");
    assert_eq!(
        header(&run.join("flows.csv")),
        "flow_id,operator,technology,arrival_s,completion_s,bytes,throughput_mbps,mean_latency_ms"
    );
    assert_eq!(header(&run.join("occupancy.csv")), "network,window_s,fraction");
    assert_eq!(header(&run.join("cdf_throughput.csv")), "value_mbps,cum_fraction,step,operator");
    assert_eq!(header(&run.join("collisions.csv")), "network,decodes,failures,collisions,fraction");
    assert!(header(&run.join("streams.csv")).starts_with("stream_id,class"));
    let lat = fs::read_to_string(run.join("latency.csv")).unwrap();
    assert!(lat.lines().any(|l| l.starts_with("voice,")));
    let occ = fs::read_to_string(run.join("occupancy.csv")).unwrap();
    let nets: Vec<&str> = occ.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(nets, ["A-laa", "B-wifi", "wifi-combined", "all"]);
    for f in files(&run) {
        let text = fs::read_to_string(&f).unwrap();
        assert!(!text.contains("e-") && !text.contains("NaN") && !text.contains("inf"), "{}", f.display());
    }
}

#[test]
fn run_meta_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let c = parse_config("duration_s = 6.0\ntransport = \"tcp\"\n[laa]\ncws_set = [7, 15, 31]\n", &[]).unwrap();
    let key = c.runs()[1];
    assert_eq!(key.step, Step::Two);
    let first = execute(&c, key, &dir.path().join("a"));
    assert!(first.result.is_ok());
    let meta = fs::read_to_string(first.dir.join("run_meta.toml")).unwrap();
    let again = parse_config(&meta, &[]).unwrap();
    assert_eq!(again.runs(), vec![key]);
    assert_eq!(again.run_config(&key), c.run_config(&key));
    let second = execute(&again, key, &dir.path().join("b"));
    for f in ["flows.csv", "occupancy.csv", "collisions.csv", "cdf_throughput.csv", "nodes.csv"] {
        assert_eq!(fs::read(first.dir.join(f)).unwrap(), fs::read(second.dir.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn parallel_campaign_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let c = parse_config("duration_s = 5.0\n[campaign]\nseeds = [1, 2, 3]\nevents = true\n", &[]).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_campaign(&c, &a).unwrap();
    run_campaign(&c, &b).unwrap();
    for key in c.runs() {
        let (da, db) = (a.join(key.dir_name()), b.join(key.dir_name()));
        for f in files(&da) {
            let name = f.file_name().unwrap();
            if name == "run_meta.toml" {
                continue;
            }
            assert_eq!(fs::read(&f).unwrap(), fs::read(db.join(name)).unwrap(), "{}", f.display());
        }
    }
    for f in files(&a.join("aggregate")) {
        assert_eq!(fs::read(&f).unwrap(), fs::read(b.join("aggregate").join(f.file_name().unwrap())).unwrap());
    }
}

#[test]
fn step_pairs_share_node_positions() {
    let dir = tempfile::tempdir().unwrap();
    let c = parse_config("duration_s = 3.0\n[campaign]\nseeds = [4]\n", &[]).unwrap();
    run_campaign(&c, dir.path()).unwrap();
    let pos = |step: u8| -> Vec<String> {
        let t = fs::read_to_string(dir.path().join(format!("lambda-2.5/seed-4/step-{step}/nodes.csv"))).unwrap();
        t.lines().map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            [f[0], f[1], f[2], f[4], f[5], f[6]].join(",")
        }).collect()
    };
    assert_eq!(pos(1), pos(2));
}

#[test]
fn failed_run_is_recorded_and_campaign_continues() {
    let dir = tempfile::tempdir().unwrap();
    let c = parse_config("duration_s = 3.0\n[campaign]\nseeds = [1, 2]\n", &[]).unwrap();
    // A plain file where one run's directory should go.
    let blocked = dir.path().join("lambda-2.5/seed-1");
    fs::create_dir_all(&blocked).unwrap();
    fs::write(blocked.join("step-2"), "").unwrap();
    let rep = run_campaign(&c, dir.path()).unwrap();
    assert_eq!(rep.runs.len(), 4);
    let failed: Vec<_> = rep.failures().map(|r| (r.key.seed, u8::from(r.key.step))).collect();
    assert_eq!(failed, vec![(1, 2)]);
    let s = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let status: Vec<&str> = s.lines().skip(1).map(|l| l.split(',').nth(3).unwrap()).collect();
    assert_eq!(status, ["ok", "failed", "ok", "ok"]);
    assert!(dir.path().join("lambda-2.5/seed-2/step-2/flows.csv").is_file());
}
