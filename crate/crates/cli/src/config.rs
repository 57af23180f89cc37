//! Run configuration: TOML on disk, overridable from the command line.

use std::path::{Path, PathBuf};

use lockwalk_core::construction::{Exponent, GrowthSchedule, Limits, Tolerance, ToleranceRule};
use lockwalk_core::{FactorMap, GroupFamily, GroupSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Paper,
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Lamplighter,
    FreeAbelian,
    FreeTimesLamplighter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Factor {
    Identity,
    ProjectLamplighter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroupConfig {
    pub family: Family,
    pub rank: u32,
    pub factor_map: Factor,
}

impl Default for GroupConfig {
    fn default() -> Self {
        Self { family: Family::Lamplighter, rank: 1, factor_map: Factor::Identity }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentConfig {
    pub slope: u32,
    pub offset: u32,
}

/// An inline schedule replacing the preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub folner_power: ExponentConfig,
    pub lock_power: ExponentConfig,
    pub w_power: ExponentConfig,
    /// `delta(i) = 1 / (i + delta_offset)`.
    pub delta_offset: u32,
    /// Optional `[numer, denom]` overriding `delta(1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_first: Option<[u64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub trajectories: u64,
    pub horizon: usize,
    /// Number of trajectories written out by `sample`.
    pub dump: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { trajectories: 50_000, horizon: 64, dump: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TvConfig {
    pub k_max: u32,
    pub max_power: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

impl Default for TvConfig {
    fn default() -> Self {
        Self { k_max: 2, max_power: 6, epsilon: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TauConfig {
    /// Designated level of the histogram and perturbation experiment.
    pub level: u32,
    /// Stabilization deadline `i1` for the perturbation experiment.
    pub record_time: usize,
    pub min_freq: f64,
}

impl Default for TauConfig {
    fn default() -> Self {
        Self { level: 2, record_time: 1, min_freq: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimitsConfig {
    pub set_cap: usize,
    pub lock_search: usize,
}

impl Default for LimitsConfig {
    fn default() -> Self {
        let l = Limits::default();
        Self { set_cap: l.set_cap, lock_search: l.lock_search }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub preset: Preset,
    pub seed: u64,
    pub levels: u32,
    pub out: PathBuf,
    pub jobs: usize,
    pub group: GroupConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleConfig>,
    pub sampling: SamplingConfig,
    pub tv: TvConfig,
    pub tau: TauConfig,
    pub limits: LimitsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: Preset::Desk,
            seed: 2024,
            levels: 2,
            out: PathBuf::from("lockwalk-out"),
            jobs: 1,
            group: GroupConfig::default(),
            schedule: None,
            sampling: SamplingConfig::default(),
            tv: TvConfig::default(),
            tau: TauConfig::default(),
            limits: LimitsConfig::default(),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.levels == 0 {
            return bad("levels must be at least 1");
        }
        if self.jobs == 0 {
            return bad("jobs must be at least 1");
        }
        if self.sampling.horizon == 0 {
            return bad("sampling.horizon must be at least 1");
        }
        if self.tv.k_max > self.levels {
            return bad("tv.k_max cannot exceed levels");
        }
        if self.tv.max_power == 0 {
            return bad("tv.max_power must be at least 1");
        }
        if !(self.tau.min_freq > 0.0 && self.tau.min_freq <= 1.0) {
            return bad("tau.min_freq must lie in (0, 1]");
        }
        if self.tau.record_time == 0 || self.tau.level == 0 {
            return bad("tau.level and tau.record_time must be at least 1");
        }
        self.group_spec()?;
        self.schedule()?.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn group_spec(&self) -> Result<GroupSpec> {
        let g = &self.group;
        let family = match g.family {
            Family::Lamplighter => GroupFamily::Lamplighter { base_rank: 1, lamp_modulus: 2 },
            Family::FreeAbelian => GroupFamily::FreeAbelian { rank: g.rank },
            Family::FreeTimesLamplighter => GroupFamily::FreeTimesLamplighter { rank: g.rank },
        };
        let factor = match g.factor_map {
            Factor::Identity => FactorMap::Identity,
            Factor::ProjectLamplighter => FactorMap::ProjectLamplighter,
        };
        GroupSpec::new(family, factor).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn schedule(&self) -> Result<GrowthSchedule> {
        let Some(s) = &self.schedule else {
            return Ok(match self.preset {
                Preset::Paper => GrowthSchedule::paper(),
                Preset::Desk => GrowthSchedule::desk(),
            });
        };
        let exp = |e: ExponentConfig| Exponent::affine(e.slope, e.offset);
        let first_level = match s.delta_first {
            None => None,
            Some([n, d]) => Some(
                Tolerance::new(n, d).ok_or_else(|| CliError::Config(format!("delta_first {n}/{d} not in (0, 1]")))?,
            ),
        };
        Ok(GrowthSchedule {
            folner_power: exp(s.folner_power),
            folner_delta: ToleranceRule { offset: s.delta_offset, first_level },
            lock_power: exp(s.lock_power),
            w_power: exp(s.w_power),
        })
    }

    pub fn limits(&self) -> Limits {
        Limits { set_cap: self.limits.set_cap, lock_search: self.limits.lock_search }
    }

    /// SHA-256 of the canonical JSON form, ignoring where outputs go and how
    /// many workers produce them.
    pub fn digest(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = PathBuf::new();
        canonical.jobs = 1;
        sha256_hex(serde_json::to_string(&canonical).expect("config serializes").as_bytes())
    }

    pub fn spec_digest(&self) -> Result<String> {
        let spec = self.group_spec()?;
        Ok(sha256_hex(format!("{:?}|{:?}", spec.family(), spec.factor()).as_bytes()))
    }

    /// Covers the schedule, the caps and the number of levels: everything
    /// besides the group that the cached construction depends on.
    pub fn schedule_digest(&self) -> Result<String> {
        let s = self.schedule()?;
        Ok(sha256_hex(format!("{s:?}|{:?}|levels={}", self.limits(), self.levels).as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = RunConfig::default();
        let back = RunConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.digest(), cfg.digest());
    }

    #[test]
    fn digest_ignores_output_location() {
        let a = RunConfig::default();
        let b = RunConfig { out: "elsewhere".into(), jobs: 4, ..a.clone() };
        assert_eq!(a.digest(), b.digest());
        let c = RunConfig { seed: 7, ..a.clone() };
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn inline_schedule_matches_desk() {
        let text = r#"
            [schedule]
            folner_power = { slope = 0, offset = 1 }
            lock_power = { slope = 0, offset = 2 }
            w_power = { slope = 0, offset = 1 }
            delta_offset = 1
        "#;
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.schedule().unwrap(), GrowthSchedule::desk());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::parse("levels = 0").is_err());
        assert!(RunConfig::parse("unknown = 1").is_err());
        assert!(RunConfig::parse("[group]\nfamily = \"free-abelian\"\nfactor_map = \"project-lamplighter\"").is_err());
        assert!(RunConfig::parse("[tau]\nmin_freq = 0.0").is_err());
        assert_eq!(RunConfig::parse("levels = 0").unwrap_err().exit_code(), 2);
    }
}
