//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Values keep inner
//! whitespace; lists are comma separated. Relative paths in a file resolve
//! against that file's directory, relative paths given as overrides against
//! the working directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};

use crate::error::{Error, Result};
use crate::ingest::{SampleMode, Window, DEFAULT_THRESHOLD};
use crate::regions::SchemeId;

/// One setting and the directory its relative paths resolve against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Setting {
    pub value: String,
    pub base: PathBuf,
}

/// Raw settings keyed by name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlatConfig {
    pub entries: BTreeMap<String, Setting>,
}

impl FlatConfig {
    pub fn parse(text: &str, base: &Path, origin: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::BadRecord {
                    path: origin.to_path_buf(),
                    line: i as u64 + 1,
                    message: format!("expected `key = value`, got {line:?}"),
                });
            };
            let key = k.trim().to_string();
            let setting = Setting {
                value: v.trim().to_string(),
                base: base.to_path_buf(),
            };
            if entries.insert(key.clone(), setting).is_some() {
                return Err(Error::BadRecord {
                    path: origin.to_path_buf(),
                    line: i as u64 + 1,
                    message: format!("key `{key}` set twice"),
                });
            }
        }
        Ok(FlatConfig { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::validation(format!("config file {} does not exist", path.display())));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base, path)
    }

    /// Overrides (later wins) resolved against `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) {
        self.entries.insert(
            key.to_string(),
            Setting {
                value: value.trim().to_string(),
                base: base.to_path_buf(),
            },
        );
    }

    pub fn check_keys(&self, known: &[&str], what: &str) -> Result<()> {
        for key in self.entries.keys() {
            let prefix = key.split_once('.').map(|(p, _)| p);
            let ok = known.contains(&key.as_str())
                || prefix.is_some_and(|p| known.contains(&format!("{p}.*").as_str()));
            if !ok {
                return Err(Error::validation(format!("unknown {what} key `{key}`")));
            }
        }
        Ok(())
    }

    fn raw(&self, key: &str) -> Option<&Setting> {
        self.entries.get(key).filter(|s| !s.value.is_empty())
    }

    pub fn string(&self, key: &str) -> Option<&str> {
        self.raw(key).map(|s| s.value.as_str())
    }

    pub fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.string(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::validation(format!("key `{key}`: cannot parse {v:?}: {e}")))
            })
            .transpose()
    }

    pub fn boolean(&self, key: &str) -> Result<Option<bool>> {
        match self.string(key) {
            None => Ok(None),
            Some("true" | "yes" | "1") => Ok(Some(true)),
            Some("false" | "no" | "0") => Ok(Some(false)),
            Some(v) => Err(Error::validation(format!("key `{key}`: expected true or false, got {v:?}"))),
        }
    }

    pub fn list(&self, key: &str) -> Vec<String> {
        self.string(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            })
            .unwrap_or_default()
    }

    /// A path that must exist.
    pub fn input_path(&self, key: &str) -> Result<Option<PathBuf>> {
        self.raw(key).map(|s| existing(&s.base.join(&s.value), key)).transpose()
    }

    pub fn input_paths(&self, key: &str) -> Result<Vec<PathBuf>> {
        let Some(s) = self.raw(key) else { return Ok(Vec::new()) };
        self.list(key)
            .iter()
            .map(|p| existing(&s.base.join(p), key))
            .collect()
    }

    pub fn output_path(&self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(|s| s.base.join(&s.value))
    }

    /// `id:path` pairs, for example `nuts2:schemes/nuts2.csv`.
    pub fn keyed_paths(&self, key: &str) -> Result<Vec<(SchemeId, PathBuf)>> {
        let Some(s) = self.raw(key) else { return Ok(Vec::new()) };
        self.list(key)
            .iter()
            .map(|item| {
                let (id, path) = item
                    .rsplit_once(':')
                    .ok_or_else(|| Error::validation(format!("key `{key}`: expected `scheme:path`, got {item:?}")))?;
                Ok((id.parse()?, existing(&s.base.join(path.trim()), key)?))
            })
            .collect()
    }

    /// Every setting under `prefix.`, keyed by the rest of the name.
    pub fn section(&self, prefix: &str) -> BTreeMap<String, &Setting> {
        self.entries
            .iter()
            .filter_map(|(k, v)| {
                k.strip_prefix(prefix)
                    .and_then(|rest| rest.strip_prefix('.'))
                    .map(|rest| (rest.to_string(), v))
            })
            .collect()
    }
}

fn existing(path: &Path, key: &str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path.to_path_buf())
    } else {
        Err(Error::validation(format!(
            "key `{key}`: {} does not exist",
            path.display()
        )))
    }
}

fn parse_instant(key: &str, v: &str) -> Result<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(v) {
        return Ok(t.with_timezone(&Utc));
    }
    NaiveDate::parse_from_str(v, "%Y-%m-%d")
        .map(|d| d.and_hms_opt(0, 0, 0).unwrap().and_utc())
        .map_err(|_| Error::validation(format!("key `{key}`: {v:?} is neither a date nor an RFC 3339 instant")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProviderKind {
    /// Offline tables for the resolver, profile and microblog lookups.
    Fixture,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemeSpec {
    pub id: SchemeId,
    pub path: PathBuf,
    pub merges: Option<PathBuf>,
    pub boundaries: Option<PathBuf>,
}

impl SchemeSpec {
    /// File-name tag: `admin1:US` becomes `admin1_US`.
    pub fn tag(&self) -> String {
        scheme_tag(&self.id)
    }
}

pub fn scheme_tag(id: &SchemeId) -> String {
    id.to_string().replace(':', "_")
}

pub const RUN_KEYS: &[&str] = &[
    "events",
    "provider",
    "resolver_fixture",
    "resolution_cache",
    "profiles",
    "microblog",
    "gazetteer",
    "cctld",
    "universities",
    "schemes",
    "merge_rules",
    "boundaries",
    "window_start",
    "window_end",
    "threshold",
    "max_attempts",
    "in_flight",
    "suffix_blocklist",
    "login_blocklist",
    "include_unreliable",
    "k_floor",
    "out_dir",
    "seed",
    "jobs",
];

/// Validated run settings. Input paths are checked for existence here;
/// whether a stage needs a given input is checked by that stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    /// Directory relative paths in reports are shown against.
    pub base_dir: PathBuf,
    pub events: Vec<PathBuf>,
    pub provider: ProviderKind,
    pub resolver_fixture: Option<PathBuf>,
    pub resolution_cache: Option<PathBuf>,
    pub profiles: Option<PathBuf>,
    pub microblog: Option<PathBuf>,
    pub gazetteer: Option<PathBuf>,
    pub cctld: Option<PathBuf>,
    pub universities: Option<PathBuf>,
    pub schemes: Vec<SchemeSpec>,
    pub window: Window,
    pub threshold: u64,
    pub max_attempts: u32,
    pub in_flight: usize,
    pub suffix_blocklist: Vec<String>,
    pub login_blocklist: Vec<String>,
    pub include_unreliable: bool,
    pub k_floor: u64,
    pub out_dir: PathBuf,
    /// `None`: deterministic first-seen sampling.
    pub seed: Option<u64>,
    /// 0: one worker per core.
    pub jobs: usize,
}

impl RunConfig {
    pub fn from_flat(flat: &FlatConfig, base_dir: &Path) -> Result<Self> {
        flat.check_keys(RUN_KEYS, "config")?;
        let provider = match flat.string("provider").unwrap_or("fixture") {
            "fixture" => ProviderKind::Fixture,
            other => {
                return Err(Error::validation(format!(
                    "provider `{other}` is not available; only `fixture` is built in"
                )))
            }
        };

        let scheme_paths = flat.keyed_paths("schemes")?;
        let mut schemes: Vec<SchemeSpec> = Vec::new();
        for (id, path) in scheme_paths {
            if schemes.iter().any(|s| s.id == id) {
                return Err(Error::validation(format!("scheme {id} listed twice")));
            }
            schemes.push(SchemeSpec { id, path, merges: None, boundaries: None });
        }
        for (key, is_merge) in [("merge_rules", true), ("boundaries", false)] {
            for (id, path) in flat.keyed_paths(key)? {
                let spec = schemes
                    .iter_mut()
                    .find(|s| s.id == id)
                    .ok_or_else(|| Error::validation(format!("key `{key}` names scheme {id}, which is not in `schemes`")))?;
                let slot = if is_merge { &mut spec.merges } else { &mut spec.boundaries };
                if slot.replace(path).is_some() {
                    return Err(Error::validation(format!("key `{key}`: scheme {id} listed twice")));
                }
            }
        }

        let default = Window::study_period();
        let start = flat
            .string("window_start")
            .map(|v| parse_instant("window_start", v))
            .transpose()?
            .unwrap_or(default.start());
        let end = flat
            .string("window_end")
            .map(|v| parse_instant("window_end", v))
            .transpose()?
            .unwrap_or(default.end());

        let max_attempts = flat.parsed("max_attempts")?.unwrap_or(crate::identity::MAX_ATTEMPTS);
        if max_attempts == 0 {
            return Err(Error::validation("key `max_attempts` must be at least 1"));
        }
        let in_flight = flat.parsed("in_flight")?.unwrap_or(8);
        if in_flight == 0 {
            return Err(Error::validation("key `in_flight` must be at least 1"));
        }
        let suffix_blocklist = if flat.entries.contains_key("suffix_blocklist") {
            flat.list("suffix_blocklist")
        } else {
            crate::geocode::DEFAULT_BLOCKLIST.iter().map(|s| s.to_string()).collect()
        };

        Ok(RunConfig {
            base_dir: base_dir.to_path_buf(),
            events: flat.input_paths("events")?,
            provider,
            resolver_fixture: flat.input_path("resolver_fixture")?,
            resolution_cache: flat.output_path("resolution_cache"),
            profiles: flat.input_path("profiles")?,
            microblog: flat.input_path("microblog")?,
            gazetteer: flat.input_path("gazetteer")?,
            cctld: flat.input_path("cctld")?,
            universities: flat.input_path("universities")?,
            schemes,
            window: Window::new(start, end)?,
            threshold: flat.parsed("threshold")?.unwrap_or(DEFAULT_THRESHOLD),
            max_attempts,
            in_flight,
            suffix_blocklist,
            login_blocklist: flat.list("login_blocklist"),
            include_unreliable: flat.boolean("include_unreliable")?.unwrap_or(false),
            k_floor: flat.parsed("k_floor")?.unwrap_or(0),
            out_dir: flat.output_path("out_dir").unwrap_or_else(|| base_dir.join("out")),
            seed: flat.parsed("seed")?,
            jobs: flat.parsed("jobs")?.unwrap_or(0),
        })
    }

    /// Reads `path` (if any) and applies `overrides` on top.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)], cwd: &Path) -> Result<Self> {
        let (mut flat, base) = match path {
            Some(p) => {
                let flat = FlatConfig::load(p)?;
                (flat, p.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (FlatConfig::default(), cwd.to_path_buf()),
        };
        for (k, v) in overrides {
            flat.set(k, v, cwd);
        }
        Self::from_flat(&flat, &base)
    }

    pub fn sample_mode(&self) -> SampleMode {
        match self.seed {
            Some(s) => SampleMode::Seeded(s),
            None => SampleMode::FirstSeen,
        }
    }

    pub fn require<'a>(&self, value: Option<&'a PathBuf>, key: &str, stage: &str) -> Result<&'a PathBuf> {
        value.ok_or_else(|| Error::validation(format!("config key `{key}` is required by the {stage} stage")))
    }

    /// `path` relative to the config directory when it lies below it.
    pub fn display_path(&self, path: &Path) -> String {
        path.strip_prefix(&self.base_dir)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }
}
