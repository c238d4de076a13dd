//! Account geolocation.
//!
//! Each account is tried against its profile location string, then the
//! location string of its linked microblog account, then the suffixes of
//! its commit email domains. The first stage that yields a place wins.

mod gazetteer;
mod providers;
mod suffix;

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::identity::AccountResolution;
use crate::table::{write_csv, CsvTable};

pub use gazetteer::{normalize_place, GazetteerHit, GazetteerProvider, OfflineGazetteer};
pub use providers::{
    FixtureMicroblog, FixtureProfiles, MicroblogProvider, ProfileFields, ProfileProvider,
};
pub use suffix::{infer_from_suffix, SuffixTables, University, DEFAULT_BLOCKLIST, GENERIC_SUFFIXES};

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Coords {
    lat: f64,
    lon: f64,
}

impl Coords {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::validation(format!(
                "coordinates ({lat}, {lon}) out of range"
            )));
        }
        Ok(Coords { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    Country,
    Subnational,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeoSource {
    Profile,
    Microblog,
    EmailSuffix,
}

impl GeoSource {
    pub const ALL: [GeoSource; 3] = [GeoSource::Profile, GeoSource::Microblog, GeoSource::EmailSuffix];

    pub fn as_str(self) -> &'static str {
        match self {
            GeoSource::Profile => "profile",
            GeoSource::Microblog => "microblog",
            GeoSource::EmailSuffix => "email_suffix",
        }
    }
}

impl fmt::Display for GeoSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GeoSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "profile" => Ok(GeoSource::Profile),
            "microblog" => Ok(GeoSource::Microblog),
            "email_suffix" => Ok(GeoSource::EmailSuffix),
            other => Err(Error::validation(format!("unknown source `{other}`"))),
        }
    }
}

impl Precision {
    pub fn as_str(self) -> &'static str {
        match self {
            Precision::Country => "country",
            Precision::Subnational => "subnational",
        }
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "country" => Ok(Precision::Country),
            "subnational" => Ok(Precision::Subnational),
            other => Err(Error::validation(format!("unknown precision `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeoResult {
    /// ISO 3166-1 alpha-2.
    pub country: String,
    pub subdivision: Option<String>,
    pub coords: Option<Coords>,
    pub precision: Precision,
    pub source: GeoSource,
    /// Set when the only evidence is a blocklisted email suffix.
    pub unreliable: bool,
}

impl GeoResult {
    fn from_hit(hit: GazetteerHit, source: GeoSource) -> Self {
        let precision = if hit.subdivision.is_some() || hit.coords.is_some() {
            Precision::Subnational
        } else {
            Precision::Country
        };
        GeoResult {
            country: hit.country,
            subdivision: hit.subdivision,
            coords: hit.coords,
            precision,
            source,
            unreliable: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AccountProfile {
    pub login: String,
    pub location_string: Option<String>,
    pub microblog_handle: Option<String>,
    pub emails: BTreeSet<String>,
}

impl AccountProfile {
    /// Combines a merged account with whatever the profile provider knows.
    /// A provider failure leaves the profile fields empty.
    pub fn fetch(account: &AccountResolution, provider: &dyn ProfileProvider) -> Self {
        let fields = match provider.profile(&account.login) {
            Ok(f) => f.unwrap_or_default(),
            Err(e) => {
                log::warn!("profile lookup for {}: {e}", account.login);
                ProfileFields::default()
            }
        };
        AccountProfile {
            login: account.login.clone(),
            location_string: fields.location_string,
            microblog_handle: fields.microblog_handle,
            emails: account.emails.clone(),
        }
    }
}

/// Looks up free text. The result's source is `Profile`; callers using the
/// text from another stage overwrite it.
pub fn geocode_string(text: &str, provider: &dyn GazetteerProvider) -> Option<GeoResult> {
    if text.trim().is_empty() {
        return None;
    }
    match provider.lookup(text) {
        Ok(hit) => hit.map(|h| GeoResult::from_hit(h, GeoSource::Profile)),
        Err(e) => {
            log::warn!("gazetteer lookup for {text:?}: {e}");
            None
        }
    }
}

pub struct Geocoder<'a> {
    pub gazetteer: &'a dyn GazetteerProvider,
    pub microblog: &'a dyn MicroblogProvider,
    pub tables: &'a SuffixTables,
}

/// Runs the cascade for one account. Later stages are not consulted once an
/// earlier one succeeds.
pub fn locate_account(profile: &AccountProfile, geo: &Geocoder<'_>) -> Option<GeoResult> {
    if let Some(r) = profile
        .location_string
        .as_deref()
        .and_then(|s| geocode_string(s, geo.gazetteer))
    {
        return Some(r);
    }
    if let Some(handle) = profile.microblog_handle.as_deref().filter(|h| !h.trim().is_empty()) {
        let text = geo.microblog.location(handle).unwrap_or_else(|e| {
            log::warn!("microblog lookup for {handle}: {e}");
            None
        });
        if let Some(mut r) = text.as_deref().and_then(|s| geocode_string(s, geo.gazetteer)) {
            r.source = GeoSource::Microblog;
            return Some(r);
        }
    }
    infer_from_suffix(profile.emails.iter().map(String::as_str), geo.tables)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccountLocation {
    pub login: String,
    pub result: Option<GeoResult>,
}

impl AccountLocation {
    /// The result if it counts toward aggregation: present and not flagged
    /// unreliable (unless `include_unreliable`).
    pub fn usable(&self, include_unreliable: bool) -> Option<&GeoResult> {
        self.result
            .as_ref()
            .filter(|r| include_unreliable || !r.unreliable)
    }
}

/// Locates every account on the current rayon pool. Output order follows the
/// input order.
pub fn locate_all(profiles: &[AccountProfile], geo: &Geocoder<'_>) -> Vec<AccountLocation> {
    profiles
        .par_iter()
        .map(|p| AccountLocation {
            login: p.login.clone(),
            result: locate_account(p, geo),
        })
        .collect()
}

pub const LOCATIONS_HEADER: [&str; 8] = [
    "login",
    "country",
    "subdivision",
    "lat",
    "lon",
    "precision",
    "source",
    "unreliable",
];

/// Unlocated accounts are written with an empty country.
pub fn write_locations_csv<'a, W: Write>(
    out: W,
    path: &Path,
    locations: impl IntoIterator<Item = &'a AccountLocation>,
) -> Result<()> {
    let rows = locations.into_iter().map(|l| match &l.result {
        None => vec![l.login.clone(), String::new(), String::new(), String::new(), String::new(), String::new(), String::new(), String::new()],
        Some(r) => vec![
            l.login.clone(),
            r.country.clone(),
            r.subdivision.clone().unwrap_or_default(),
            r.coords.map(|c| c.lat.to_string()).unwrap_or_default(),
            r.coords.map(|c| c.lon.to_string()).unwrap_or_default(),
            r.precision.as_str().to_string(),
            r.source.as_str().to_string(),
            r.unreliable.to_string(),
        ],
    });
    write_csv(out, path, &LOCATIONS_HEADER, rows)
}

pub fn read_locations_csv(path: &Path) -> Result<Vec<AccountLocation>> {
    let table = CsvTable::read(path)?;
    let cols: Vec<usize> = LOCATIONS_HEADER
        .iter()
        .map(|c| table.column(c))
        .collect::<Result<_>>()?;
    let [login, country, subdivision, lat, lon, precision, source, unreliable] = cols[..] else {
        unreachable!()
    };
    let mut out = Vec::with_capacity(table.records.len());
    for (i, rec) in table.records.iter().enumerate() {
        let result = if rec[country].is_empty() {
            None
        } else {
            let coords = match (rec[lat].is_empty(), rec[lon].is_empty()) {
                (true, true) => None,
                (false, false) => Some(
                    Coords::new(table.parse(i, lat)?, table.parse(i, lon)?)
                        .map_err(|e| table.bad(i, e.to_string()))?,
                ),
                _ => return Err(table.bad(i, "lat and lon must both be set or both empty")),
            };
            let r = GeoResult {
                country: rec[country].to_string(),
                subdivision: Some(rec[subdivision].to_string()).filter(|s| !s.is_empty()),
                coords,
                precision: table.parse(i, precision)?,
                source: table.parse(i, source)?,
                unreliable: table.parse(i, unreliable)?,
            };
            if r.precision == Precision::Subnational && r.subdivision.is_none() && r.coords.is_none() {
                return Err(table.bad(i, "subnational precision without subdivision or coordinates"));
            }
            if r.source == GeoSource::EmailSuffix && r.precision != Precision::Country {
                return Err(table.bad(i, "email-suffix results must be country precision"));
            }
            Some(r)
        };
        out.push(AccountLocation {
            login: rec[login].to_string(),
            result,
        });
    }
    Ok(out)
}
