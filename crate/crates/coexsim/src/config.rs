//! Campaign configuration: a TOML document holding every [`SimConfig`] key,
//! an optional `[campaign]` table and dotted `key=value` overrides.

use std::path::{Path, PathBuf};

use coexsim_core::config::{ConfigError, Step};
use coexsim_core::SimConfig;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Syntax(String),
    #[error(transparent)]
    Invalid(#[from] ConfigError),
}

fn invalid(key: impl Into<String>, message: impl Into<String>) -> LoadError {
    LoadError::Invalid(ConfigError { key: key.into(), message: message.into() })
}

/// Enumeration of the runs making up a campaign.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignSection {
    /// Empty: the top-level `seed`.
    pub seeds: Vec<u64>,
    /// Empty: `traffic.lambda`.
    pub lambdas: Vec<f64>,
    /// Empty: both steps.
    pub steps: Vec<Step>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub events: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CampaignConfig {
    pub base: SimConfig,
    pub campaign: CampaignSection,
}

/// One `(lambda, seed, step)` tuple. Orders by lambda, then seed, then step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunKey {
    pub lambda: f64,
    pub seed: u64,
    pub step: Step,
}

impl RunKey {
    pub fn dir_name(&self) -> PathBuf {
        PathBuf::from(format!("lambda-{}", self.lambda))
            .join(format!("seed-{}", self.seed))
            .join(format!("step-{}", u8::from(self.step)))
    }
}

impl CampaignConfig {
    pub fn seeds(&self) -> Vec<u64> {
        sorted_dedup(if self.campaign.seeds.is_empty() { vec![self.base.seed] } else { self.campaign.seeds.clone() })
    }

    pub fn lambdas(&self) -> Vec<f64> {
        let mut v =
            if self.campaign.lambdas.is_empty() { vec![self.base.traffic.lambda] } else { self.campaign.lambdas.clone() };
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    pub fn steps(&self) -> Vec<Step> {
        sorted_dedup(if self.campaign.steps.is_empty() { vec![Step::One, Step::Two] } else { self.campaign.steps.clone() })
    }

    pub fn runs(&self) -> Vec<RunKey> {
        let mut out = Vec::new();
        for lambda in self.lambdas() {
            for seed in self.seeds() {
                for step in self.steps() {
                    out.push(RunKey { lambda, seed, step });
                }
            }
        }
        out
    }

    /// Effective configuration of one run.
    pub fn run_config(&self, key: &RunKey) -> SimConfig {
        let mut c = self.base.clone();
        c.seed = key.seed;
        c.step = key.step;
        c.traffic.lambda = key.lambda;
        c
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for key in self.runs() {
            self.run_config(&key).validate()?;
        }
        Ok(())
    }
}

fn sorted_dedup<T: Ord>(mut v: Vec<T>) -> Vec<T> {
    v.sort();
    v.dedup();
    v
}

/// Parses `key=value`. The value is read as a TOML literal and falls back to
/// a bare string, so `--set scenario.layout=corner` works unquoted.
pub fn parse_override(s: &str) -> Result<(String, Value), LoadError> {
    let (k, v) = s.split_once('=').ok_or_else(|| invalid(s, "override must have the form key=value"))?;
    let key = k.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(invalid(s, "empty key in override"));
    }
    let raw = v.trim();
    let value = match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.to_owned())),
        Err(_) => Value::String(raw.to_owned()),
    };
    Ok((key.to_owned(), value))
}

fn set_path(root: &mut Table, key: &str, value: Value) -> Result<(), LoadError> {
    let parts: Vec<&str> = key.split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut table = root;
    for (i, p) in parents.iter().enumerate() {
        let entry = table.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        table = match entry {
            Value::Table(t) => t,
            _ => return Err(invalid(parts[..=i].join("."), "is not a table")),
        };
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn deserialize<T: for<'de> Deserialize<'de>>(table: Table, prefix: &str) -> Result<T, LoadError> {
    serde_path_to_error::deserialize(Value::Table(table)).map_err(|e| {
        let path = e.path().to_string();
        let key = match (prefix.is_empty(), path.as_str()) {
            (true, ".") => "<root>".to_owned(),
            (true, p) => p.to_owned(),
            (false, ".") => prefix.to_owned(),
            (false, p) => format!("{prefix}.{p}"),
        };
        let message = e.into_inner().message().trim().to_owned();
        invalid(key, message)
    })
}

/// Builds a campaign from config text (possibly empty) and overrides applied
/// in order. A `[meta]` table, as written into `run_meta.toml`, is ignored.
pub fn parse_config(text: &str, overrides: &[(String, Value)]) -> Result<CampaignConfig, LoadError> {
    let mut root: Table = text.parse().map_err(|e: toml::de::Error| LoadError::Syntax(e.to_string()))?;
    root.remove("meta");
    for (k, v) in overrides {
        set_path(&mut root, k, v.clone())?;
    }
    let campaign = match root.remove("campaign") {
        None => CampaignSection::default(),
        Some(Value::Table(t)) => deserialize(t, "campaign")?,
        Some(_) => return Err(invalid("campaign", "must be a table")),
    };
    let base: SimConfig = deserialize(root, "")?;
    let cfg = CampaignConfig { base, campaign };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: Option<&Path>, overrides: &[(String, Value)]) -> Result<CampaignConfig, LoadError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|source| LoadError::Io { path: p.to_owned(), source })?,
        None => String::new(),
    };
    parse_config(&text, overrides)
}

/// TOML document for one run: the effective config, a `[campaign]` table
/// naming exactly this run, and the supplied `[meta]` table.
pub fn run_document(cfg: &SimConfig, meta: Table) -> Result<String, toml::ser::Error> {
    let Value::Table(mut root) = Value::try_from(cfg)? else {
        unreachable!("a struct serializes to a table")
    };
    let campaign = CampaignSection {
        seeds: vec![cfg.seed],
        lambdas: vec![cfg.traffic.lambda],
        steps: vec![cfg.step],
        out: None,
        events: false,
    };
    root.insert("campaign".into(), Value::try_from(&campaign)?);
    root.insert("meta".into(), Value::Table(meta));
    toml::to_string(&root)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ov(s: &str) -> (String, Value) {
        parse_override(s).unwrap()
    }

    #[test]
    fn override_literals() {
        assert_eq!(ov("laa.txop_ms=4").1, Value::Integer(4));
        assert_eq!(ov("scenario.layout=corner").1, Value::String("corner".into()));
        assert_eq!(ov("laa.cws_set=[7, 15]").1, Value::Array(vec![Value::Integer(7), Value::Integer(15)]));
        assert!(parse_override("novalue").is_err());
        assert!(parse_override("a..b=1").is_err());
    }

    #[test]
    fn integer_for_float_key() {
        let c = parse_config("", &[ov("laa.txop_ms=4")]).unwrap();
        assert_eq!(c.base.laa.txop_ms, 4.0);
    }

    #[test]
    fn nested_unknown_key_is_named() {
        let e = parse_config("[laa]\nbogus = 1\n", &[]).unwrap_err();
        match e {
            LoadError::Invalid(ce) => assert!(ce.key.starts_with("laa"), "{ce}"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn override_through_scalar_fails() {
        let e = parse_config("seed = 3\n", &[ov("seed.x=1")]).unwrap_err();
        assert!(matches!(e, LoadError::Invalid(ref ce) if ce.key == "seed"), "{e}");
    }

    #[test]
    fn runs_sorted_and_deduplicated() {
        let c = parse_config("[campaign]\nseeds = [3, 1, 3]\nlambdas = [2.5, 0.5]\nsteps = [2, 1]\n", &[]).unwrap();
        let keys: Vec<(f64, u64, u8)> = c.runs().iter().map(|k| (k.lambda, k.seed, k.step.into())).collect();
        assert_eq!(
            keys,
            vec![
                (0.5, 1, 1),
                (0.5, 1, 2),
                (0.5, 3, 1),
                (0.5, 3, 2),
                (2.5, 1, 1),
                (2.5, 1, 2),
                (2.5, 3, 1),
                (2.5, 3, 2)
            ]
        );
    }
}
