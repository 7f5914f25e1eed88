use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use coexsim::config::{load_config, parse_override};
use coexsim::run_campaign;
use toml::Value;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StepArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Both,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TransportArg {
    Udp,
    Tcp,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LayoutArg {
    Indoor,
    Corner,
}

/// Run an LAA / Wi-Fi coexistence campaign.
///
/// Precedence, lowest first: built-in defaults, --config, --set, dedicated
/// flags.
#[derive(Debug, Parser)]
#[command(name = "coexsim", version)]
struct Cli {
    /// TOML file with any config key and an optional [campaign] table.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    step: Option<StepArg>,
    /// Comma-separated arrival rates (files/s per operator).
    #[arg(long)]
    lambda: Option<String>,
    /// Comma-separated seeds; `a..b` is an inclusive range.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long, value_enum)]
    transport: Option<TransportArg>,
    #[arg(long, value_enum)]
    layout: Option<LayoutArg>,
    /// Run length in seconds, replacing the ceil(960/lambda) policy.
    #[arg(long)]
    duration_s: Option<f64>,
    /// Also write events.ndjson for every run.
    #[arg(long)]
    events: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dotted override, e.g. `--set laa.ed_threshold_dbm=-82`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn parse_list<T: std::str::FromStr>(flag: &str, s: &str) -> Result<Vec<T>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().map_err(|_| format!("--{flag}: cannot parse `{p}`")))
        .collect()
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || format!("--seeds: cannot parse `{part}`");
        match part.split_once("..") {
            Some((a, b)) => {
                let a: u64 = a.trim().parse().map_err(|_| bad())?;
                let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    Ok(out)
}

fn overrides(cli: &Cli) -> Result<Vec<(String, Value)>, String> {
    let mut v = Vec::new();
    for s in &cli.set {
        v.push(parse_override(s).map_err(|e| e.to_string())?);
    }
    let array = |items: Vec<Value>| Value::Array(items);
    if let Some(s) = cli.step {
        let steps = match s {
            StepArg::One => vec![1],
            StepArg::Two => vec![2],
            StepArg::Both => vec![1, 2],
        };
        v.push(("campaign.steps".into(), array(steps.into_iter().map(Value::Integer).collect())));
    }
    if let Some(l) = &cli.lambda {
        let ls: Vec<f64> = parse_list("lambda", l)?;
        v.push(("campaign.lambdas".into(), array(ls.into_iter().map(Value::Float).collect())));
    }
    if let Some(s) = &cli.seeds {
        let seeds = parse_seeds(s)?;
        let ints = seeds
            .into_iter()
            .map(|x| i64::try_from(x).map(Value::Integer).map_err(|_| format!("--seeds: {x} is too large")))
            .collect::<Result<Vec<_>, _>>()?;
        v.push(("campaign.seeds".into(), array(ints)));
    }
    if let Some(t) = cli.transport {
        let name = match t {
            TransportArg::Udp => "udp",
            TransportArg::Tcp => "tcp",
        };
        v.push(("transport".into(), Value::String(name.into())));
    }
    if let Some(l) = cli.layout {
        let name = match l {
            LayoutArg::Indoor => "indoor",
            LayoutArg::Corner => "corner",
        };
        v.push(("scenario.layout".into(), Value::String(name.into())));
    }
    if let Some(d) = cli.duration_s {
        v.push(("duration_s".into(), Value::Float(d)));
    }
    if cli.events {
        v.push(("campaign.events".into(), Value::Boolean(true)));
    }
    Ok(v)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ov = match overrides(&cli) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let cfg = match load_config(cli.config.as_deref(), &ov) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let out = cli.out.clone().or_else(|| cfg.campaign.out.clone()).unwrap_or_else(|| PathBuf::from("results"));
    let report = match run_campaign(&cfg, &out) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let mut failed = 0;
    for r in report.failures() {
        failed += 1;
        if let Err(e) = &r.result {
            eprintln!("run {} failed: {e}", r.dir.display());
        }
    }
    println!("{} runs, {} failed, results in {}", report.runs.len(), failed, out.display());
    if failed > 0 {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}
