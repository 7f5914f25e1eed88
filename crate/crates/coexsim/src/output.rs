//! Per-run result files. Every number goes through Rust's `Display`, which
//! always uses a dot decimal and never an exponent.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use coexsim_core::config::Step;
use coexsim_core::metrics::{cdf_points, LatencyStats};
use coexsim_core::radio::{Operator, Role};
use coexsim_core::RunResult;
use toml::{Table, Value};

use crate::config::run_document;

pub const FLOWS_HEADER: [&str; 8] =
    ["flow_id", "operator", "technology", "arrival_s", "completion_s", "bytes", "throughput_mbps", "mean_latency_ms"];
pub const OCCUPANCY_HEADER: [&str; 3] = ["network", "window_s", "fraction"];
pub const COLLISIONS_HEADER: [&str; 5] = ["network", "decodes", "failures", "collisions", "fraction"];
pub const CDF_HEADER: [&str; 4] = ["value_mbps", "cum_fraction", "step", "operator"];
pub const STREAMS_HEADER: [&str; 10] = [
    "stream_id",
    "class",
    "operator",
    "technology",
    "destination",
    "packets_sent",
    "packets_delivered",
    "packets_dropped",
    "mean_latency_ms",
    "outage_fraction",
];
pub const NODES_HEADER: [&str; 8] = ["node_id", "operator", "role", "technology", "x_m", "y_m", "z_m", "serving"];
pub const LATENCY_HEADER: [&str; 6] = ["class", "samples", "p50_ms", "p95_ms", "p99_ms", "max_ms"];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_file(path: &Path, header: &[&str]) -> Result<csv::Writer<File>> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(header)?;
    Ok(w)
}

/// Rows of one operator's throughput CDF.
pub fn cdf_rows(step: Step, operator: Operator, throughputs_bps: &[f64]) -> Vec<[String; 4]> {
    let mbps: Vec<f64> = throughputs_bps.iter().map(|v| v / 1e6).collect();
    cdf_points(&mbps)
        .into_iter()
        .map(|(x, f)| [x.to_string(), f.to_string(), u8::from(step).to_string(), operator.label().to_owned()])
        .collect()
}

pub fn write_cdf(path: &Path, rows: &[[String; 4]]) -> Result<()> {
    let mut w = csv_file(path, &CDF_HEADER)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Post-warmup flows, complete or not. Incomplete flows have empty
/// `completion_s` and `throughput_mbps`.
pub fn write_flows(path: &Path, r: &RunResult) -> Result<()> {
    let mut w = csv_file(path, &FLOWS_HEADER)?;
    for f in r.flows.iter().filter(|f| f.counted) {
        w.write_record([
            f.id.to_string(),
            f.operator.label().to_owned(),
            f.technology.label().to_owned(),
            f.arrival.as_secs_f64().to_string(),
            opt(f.completion.map(|t| t.as_secs_f64())),
            f.bytes.to_string(),
            opt(f.throughput_bps.map(|v| v / 1e6)),
            opt(f.mean_latency_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_streams(path: &Path, r: &RunResult) -> Result<()> {
    let mut w = csv_file(path, &STREAMS_HEADER)?;
    for s in &r.streams {
        let class = match s.class {
            coexsim_core::sim::FlowClass::Ftp => "ftp",
            coexsim_core::sim::FlowClass::Voice => "voice",
            coexsim_core::sim::FlowClass::Cbr => "cbr",
        };
        w.write_record([
            s.id.to_string(),
            class.to_owned(),
            s.operator.label().to_owned(),
            s.technology.label().to_owned(),
            s.destination.0.to_string(),
            s.packets_sent.to_string(),
            s.packets_delivered.to_string(),
            s.packets_dropped.to_string(),
            opt(s.mean_latency_ms),
            opt(s.outage),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per network, then `wifi-combined` (union of Wi-Fi networks) and
/// `all` (union of every network).
pub fn write_occupancy(path: &Path, r: &RunResult) -> Result<()> {
    let mut w = csv_file(path, &OCCUPANCY_HEADER)?;
    let window = (r.window.1 - r.window.0).as_secs_f64().to_string();
    for (k, v) in &r.occupancy {
        w.write_record([k.label(), window.clone(), v.to_string()])?;
    }
    w.write_record(["wifi-combined".to_owned(), window.clone(), r.wifi_combined_occupancy.to_string()])?;
    w.write_record(["all".to_owned(), window, r.total_occupancy.to_string()])?;
    w.flush()?;
    Ok(())
}

pub fn write_collisions(path: &Path, r: &RunResult) -> Result<()> {
    let mut w = csv_file(path, &COLLISIONS_HEADER)?;
    let total = r.collision_total();
    let rows = r.collisions.iter().map(|(k, c)| (k.label(), *c)).chain([("all".to_owned(), total)]);
    for (label, c) in rows {
        w.write_record([
            label,
            c.decodes.to_string(),
            c.failures.to_string(),
            c.collisions.to_string(),
            c.fraction().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_nodes(path: &Path, r: &RunResult) -> Result<()> {
    let mut w = csv_file(path, &NODES_HEADER)?;
    for (n, serving) in r.topology.nodes.iter().zip(&r.topology.serving) {
        let role = match n.role {
            Role::Bs => "bs",
            Role::Terminal => "terminal",
        };
        w.write_record([
            n.id.0.to_string(),
            n.operator.label().to_owned(),
            role.to_owned(),
            n.technology.label().to_owned(),
            n.position.x.to_string(),
            n.position.y.to_string(),
            n.position.z.to_string(),
            opt(serving.map(|s| s.0)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_latency(path: &Path, r: &RunResult) -> Result<()> {
    let mut w = csv_file(path, &LATENCY_HEADER)?;
    let row = |class: &str, s: &Option<LatencyStats>| -> [String; 6] {
        match s {
            Some(s) => [
                class.to_owned(),
                s.count.to_string(),
                s.p50.as_millis_f64().to_string(),
                s.p95.as_millis_f64().to_string(),
                s.p99.as_millis_f64().to_string(),
                s.max.as_millis_f64().to_string(),
            ],
            None => [class.to_owned(), "0".into(), String::new(), String::new(), String::new(), String::new()],
        }
    };
    w.write_record(row("data", &r.data_latency))?;
    if r.voice_latency.is_some() || !r.streams.is_empty() {
        w.write_record(row("voice", &r.voice_latency))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_events(path: &Path, r: &RunResult) -> Result<()> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(f);
    for e in &r.events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Counts of post-warmup FTP flows by outcome.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FlowCensus {
    pub counted: u64,
    pub completed: u64,
    pub incomplete: u64,
    /// Flows that arrived during warm-up and were excluded.
    pub warmup: u64,
}

pub fn census(r: &RunResult) -> FlowCensus {
    let mut c = FlowCensus::default();
    for f in &r.flows {
        if !f.counted {
            c.warmup += 1;
        } else {
            c.counted += 1;
            if f.completion.is_some() {
                c.completed += 1;
            } else {
                c.incomplete += 1;
            }
        }
    }
    c
}

fn int(v: u64) -> Value {
    Value::Integer(v as i64)
}

/// The `[meta]` table of `run_meta.toml`.
pub fn meta_table(r: &RunResult, wall_time_s: f64) -> Table {
    let mut m = Table::new();
    m.insert("version".into(), Value::String(format!("coexsim {}", env!("CARGO_PKG_VERSION"))));
    m.insert("wall_time_s".into(), Value::Float(wall_time_s));
    m.insert("duration_s".into(), Value::Float(r.config.duration_s()));
    m.insert("window_start_s".into(), Value::Float(r.window.0.as_secs_f64()));
    m.insert("window_end_s".into(), Value::Float(r.window.1.as_secs_f64()));

    let c = census(r);
    let mut t = Table::new();
    t.insert("counted".into(), int(c.counted));
    t.insert("completed".into(), int(c.completed));
    t.insert("incomplete".into(), int(c.incomplete));
    t.insert("warmup_excluded".into(), int(c.warmup));
    for op in Operator::ALL {
        let n = r.flows.iter().filter(|f| f.counted && f.operator == op && f.completion.is_none()).count();
        t.insert(format!("incomplete_{}", op.label()), int(n as u64));
    }
    m.insert("flows".into(), Value::Table(t));

    let k = &r.counters;
    let mut t = Table::new();
    for (name, v) in [
        ("events", k.events),
        ("transmissions", k.transmissions),
        ("wifi_drops", k.wifi_drops),
        ("harq_exhausted", k.harq_exhausted),
        ("rlc_retransmitted_bytes", k.rlc_retransmitted_bytes),
        ("tcp_retransmissions", k.tcp_retransmissions),
        ("tcp_timeouts", k.tcp_timeouts),
    ] {
        t.insert(name.into(), int(v));
    }
    m.insert("counters".into(), Value::Table(t));

    let d = &r.drs;
    let mut t = Table::new();
    t.insert("windows".into(), int(d.windows));
    t.insert("standalone".into(), int(d.standalone));
    t.insert("embedded".into(), int(d.embedded));
    t.insert("missed".into(), int(d.missed));
    t.insert("airtime_s".into(), Value::Float(d.airtime.as_secs_f64()));
    m.insert("drs".into(), Value::Table(t));

    m.insert(
        "audit_violations".into(),
        Value::Array(r.audit.violations.iter().map(|s| Value::String(s.clone())).collect()),
    );
    m
}

/// Writes every per-run file into `dir`, creating it if needed.
pub fn write_run(dir: &Path, r: &RunResult, events: bool, wall_time_s: f64) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    write_flows(&dir.join("flows.csv"), r)?;
    write_occupancy(&dir.join("occupancy.csv"), r)?;
    write_collisions(&dir.join("collisions.csv"), r)?;
    let mut rows = Vec::new();
    for op in Operator::ALL {
        rows.extend(cdf_rows(r.config.step, op, &r.throughputs(op)));
    }
    write_cdf(&dir.join("cdf_throughput.csv"), &rows)?;
    write_nodes(&dir.join("nodes.csv"), r)?;
    write_latency(&dir.join("latency.csv"), r)?;
    if !r.streams.is_empty() {
        write_streams(&dir.join("streams.csv"), r)?;
    }
    if events {
        write_events(&dir.join("events.ndjson"), r)?;
    }
    let doc = run_document(&r.config, meta_table(r, wall_time_s))?;
    let path = dir.join("run_meta.toml");
    fs::write(&path, doc).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}
