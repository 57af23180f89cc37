//! The construction cache: versioned JSON keyed by spec and schedule
//! digests, with elements in their text form.

use std::path::Path;

use lockwalk_core::construction::{Construction, ConstructionLevel};
use lockwalk_core::{ElementSet, GroupElement};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const CACHE_VERSION: u32 = 1;
pub const CACHE_FILE: &str = "cache.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CachedLevel {
    pub index: u32,
    #[serde(rename = "A")]
    pub a: Vec<String>,
    #[serde(rename = "F")]
    pub f: Vec<String>,
    #[serde(rename = "D")]
    pub d: Vec<String>,
    pub b: String,
    pub c: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheFile {
    pub version: u32,
    pub config_digest: String,
    pub spec_digest: String,
    pub schedule_digest: String,
    pub levels: Vec<CachedLevel>,
}

fn strings(s: &ElementSet) -> Vec<String> {
    s.iter().map(ToString::to_string).collect()
}

fn parse_element(s: &str) -> Result<GroupElement> {
    s.parse().map_err(|e| CliError::Config(format!("cache: {e}")))
}

fn parse_set(v: &[String]) -> Result<ElementSet> {
    let set: ElementSet = v.iter().map(|s| parse_element(s)).collect::<Result<_>>()?;
    if set.len() != v.len() {
        return Err(CliError::Config("cache: repeated element in a set".into()));
    }
    Ok(set)
}

impl CacheFile {
    pub fn new(cons: &Construction, cfg: &RunConfig) -> Result<Self> {
        let levels = cons
            .levels
            .iter()
            .map(|l| CachedLevel {
                index: l.index,
                a: strings(&l.a),
                f: strings(&l.f),
                d: strings(&l.d),
                b: l.b.to_string(),
                c: l.c.to_string(),
            })
            .collect();
        Ok(Self {
            version: CACHE_VERSION,
            config_digest: cfg.digest(),
            spec_digest: cfg.spec_digest()?,
            schedule_digest: cfg.schedule_digest()?,
            levels,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("cache serializes");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("cache: {e}")))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::parse(&text)
    }

    /// Rebuilds the construction, refusing caches made for another group,
    /// schedule, cap or level count.
    pub fn construction(&self, cfg: &RunConfig) -> Result<Construction> {
        if self.version != CACHE_VERSION {
            return Err(CliError::Config(format!("cache version {} (expected {CACHE_VERSION})", self.version)));
        }
        if self.spec_digest != cfg.spec_digest()? || self.schedule_digest != cfg.schedule_digest()? {
            return Err(CliError::Config(
                "cache was built for a different group, schedule, caps or level count; run `build`".into(),
            ));
        }
        let levels = self
            .levels
            .iter()
            .map(|l| {
                Ok(ConstructionLevel {
                    index: l.index,
                    a: parse_set(&l.a)?,
                    f: parse_set(&l.f)?,
                    d: parse_set(&l.d)?,
                    b: parse_element(&l.b)?,
                    c: parse_element(&l.c)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Construction { spec: cfg.group_spec()?, schedule: cfg.schedule()?, limits: cfg.limits(), levels })
    }
}
