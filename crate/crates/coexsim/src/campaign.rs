//! Fans a campaign's runs out over a thread pool and writes the cross-seed
//! aggregates once every run has finished.

use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use coexsim_core::config::Step;
use coexsim_core::metrics::median;
use coexsim_core::radio::Operator;
use coexsim_core::sim::{self, RunOptions};
use rayon::prelude::*;

use crate::config::{CampaignConfig, RunKey};
use crate::output::{cdf_rows, census, write_cdf, write_run};

pub const SUMMARY_HEADER: [&str; 14] = [
    "lambda",
    "seed",
    "step",
    "status",
    "flows_counted",
    "flows_incomplete",
    "occupancy_a",
    "occupancy_b",
    "wifi_combined_occupancy",
    "collision_fraction",
    "median_mbps_a",
    "median_mbps_b",
    "audit_violations",
    "error",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    pub flows_counted: u64,
    pub flows_incomplete: u64,
    pub occupancy: [f64; 2],
    pub wifi_combined_occupancy: f64,
    pub collision_fraction: f64,
    /// Completed post-warmup flow throughputs per operator, bit/s.
    pub throughputs: [Vec<f64>; 2],
    pub audit_violations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub key: RunKey,
    pub dir: PathBuf,
    pub result: Result<RunMetrics, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CampaignReport {
    pub out: PathBuf,
    pub runs: Vec<RunOutcome>,
}

impl CampaignReport {
    pub fn failures(&self) -> impl Iterator<Item = &RunOutcome> {
        self.runs.iter().filter(|r| r.result.is_err())
    }
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        (*s).to_owned()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic".to_owned()
    }
}

/// Runs one tuple and writes its files. Panics inside the engine are caught
/// and reported as a failure of this tuple only.
pub fn execute(cfg: &CampaignConfig, key: RunKey, out: &Path) -> RunOutcome {
    let dir = out.join(key.dir_name());
    let sim_cfg = cfg.run_config(&key);
    let events = cfg.campaign.events;
    let result = panic::catch_unwind(AssertUnwindSafe(|| -> Result<RunMetrics, String> {
        let start = Instant::now();
        let opts = RunOptions { record_events: events, record_tx_log: false };
        let r = sim::run(sim_cfg, opts).map_err(|e| e.to_string())?;
        let wall = start.elapsed().as_secs_f64();
        write_run(&dir, &r, events, wall).map_err(|e| format!("{e:#}"))?;
        let c = census(&r);
        Ok(RunMetrics {
            flows_counted: c.counted,
            flows_incomplete: c.incomplete,
            occupancy: [r.occupancy_of(Operator::A), r.occupancy_of(Operator::B)],
            wifi_combined_occupancy: r.wifi_combined_occupancy,
            collision_fraction: r.collision_total().fraction(),
            throughputs: [r.throughputs(Operator::A), r.throughputs(Operator::B)],
            audit_violations: r.audit.violations.len(),
        })
    }))
    .unwrap_or_else(|p| Err(format!("run panicked: {}", panic_message(p))));
    RunOutcome { key, dir, result }
}

/// Pooled per-(lambda, step) CDFs into `out/aggregate`, one file per pair,
/// in sorted key order.
pub fn write_aggregates(out: &Path, runs: &[RunOutcome]) -> Result<Vec<PathBuf>> {
    let mut groups: Vec<(f64, Step, [Vec<f64>; 2])> = Vec::new();
    for r in runs {
        let i = match groups.iter().position(|g| g.0 == r.key.lambda && g.1 == r.key.step) {
            Some(i) => i,
            None => {
                groups.push((r.key.lambda, r.key.step, Default::default()));
                groups.len() - 1
            }
        };
        if let Ok(m) = &r.result {
            for op in Operator::ALL {
                groups[i].2[op.index()].extend_from_slice(&m.throughputs[op.index()]);
            }
        }
    }
    groups.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let dir = out.join("aggregate");
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut paths = Vec::new();
    for (lambda, step, tp) in groups {
        let mut rows = Vec::new();
        for op in Operator::ALL {
            rows.extend(cdf_rows(step, op, &tp[op.index()]));
        }
        let path = dir.join(format!("cdf_throughput_lambda-{lambda}_step-{}.csv", u8::from(step)));
        write_cdf(&path, &rows)?;
        paths.push(path);
    }
    Ok(paths)
}

pub fn write_summary(path: &Path, runs: &[RunOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(SUMMARY_HEADER)?;
    let med = |v: &[f64]| median(v).map(|m| (m / 1e6).to_string()).unwrap_or_default();
    for r in runs {
        let k = &r.key;
        let head = [k.lambda.to_string(), k.seed.to_string(), u8::from(k.step).to_string()];
        let rest: [String; 11] = match &r.result {
            Ok(m) => [
                "ok".into(),
                m.flows_counted.to_string(),
                m.flows_incomplete.to_string(),
                m.occupancy[0].to_string(),
                m.occupancy[1].to_string(),
                m.wifi_combined_occupancy.to_string(),
                m.collision_fraction.to_string(),
                med(&m.throughputs[0]),
                med(&m.throughputs[1]),
                m.audit_violations.to_string(),
                String::new(),
            ],
            Err(e) => {
                let mut row: [String; 11] = Default::default();
                row[0] = "failed".into();
                row[10] = e.clone();
                row
            }
        };
        w.write_record(head.iter().chain(rest.iter()))?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every tuple, then writes `summary.csv` and the aggregate CDFs.
/// Individual run failures are recorded, not propagated; an error here means
/// the output tree itself could not be written.
pub fn run_campaign(cfg: &CampaignConfig, out: &Path) -> Result<CampaignReport> {
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let keys = cfg.runs();
    let runs: Vec<RunOutcome> = keys.into_par_iter().map(|k| execute(cfg, k, out)).collect();
    write_summary(&out.join("summary.csv"), &runs)?;
    write_aggregates(out, &runs)?;
    Ok(CampaignReport { out: out.to_owned(), runs })
}
