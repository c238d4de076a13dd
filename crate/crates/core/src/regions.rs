//! Region schemes, account-to-region assignment and per-region counts.
//!
//! A scheme is a table of regions, each owning a set of subdivision codes,
//! plus optional merge rules that fold several regions into one reporting
//! unit (the five inner/outer London units into a single London, say).

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geocode::{Coords, GeoResult, GeoSource, Precision};
use crate::table::{split_list, write_csv, CsvTable};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeId {
    Country,
    Nuts2,
    /// First-level subdivisions of one country.
    Admin1(String),
}

impl SchemeId {
    pub fn is_subnational(&self) -> bool {
        !matches!(self, SchemeId::Country)
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemeId::Country => f.write_str("country"),
            SchemeId::Nuts2 => f.write_str("nuts2"),
            SchemeId::Admin1(c) => write!(f, "admin1:{c}"),
        }
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "country" => Ok(SchemeId::Country),
            "nuts2" => Ok(SchemeId::Nuts2),
            other => match other.strip_prefix("admin1:") {
                Some(cc) if cc.len() == 2 && cc.bytes().all(|b| b.is_ascii_alphabetic()) => {
                    Ok(SchemeId::Admin1(cc.to_ascii_uppercase()))
                }
                _ => Err(Error::validation(format!(
                    "unknown scheme `{other}` (expected country, nuts2 or admin1:<CC>)"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionRecord {
    pub region_id: String,
    pub name: String,
    pub country: String,
    pub population: u64,
    pub subdivision_codes: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeRule {
    pub merged_id: String,
    pub member_ids: Vec<String>,
    pub label: String,
}

/// Point-in-region lookup used when a result has coordinates but no
/// subdivision code the scheme knows. Returns a pre-merge region id.
pub trait BoundaryAdapter: Sync {
    fn region_at(&self, coords: Coords) -> Option<String>;
}

/// Polygon boundaries given as `region_id,vertices` with vertices written as
/// `lat lon` pairs joined by `;`. Point-in-polygon by ray casting; the first
/// polygon containing the point wins.
#[derive(Debug, Clone, Default)]
pub struct PolygonBoundaries {
    polygons: Vec<(String, Vec<(f64, f64)>)>,
}

impl PolygonBoundaries {
    pub fn new(polygons: Vec<(String, Vec<(f64, f64)>)>) -> Self {
        PolygonBoundaries { polygons }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let table = CsvTable::read(path)?;
        let id = table.column("region_id")?;
        let vertices = table.column("vertices")?;
        let mut polygons = Vec::new();
        for (i, rec) in table.records.iter().enumerate() {
            let mut poly = Vec::new();
            for v in split_list(&rec[vertices]) {
                let mut it = v.split_whitespace().map(str::parse::<f64>);
                match (it.next(), it.next(), it.next()) {
                    (Some(Ok(lat)), Some(Ok(lon)), None) => poly.push((lat, lon)),
                    _ => return Err(table.bad(i, format!("bad vertex {v:?}"))),
                }
            }
            if poly.len() < 3 {
                return Err(table.bad(i, "polygon needs at least 3 vertices"));
            }
            polygons.push((rec[id].to_string(), poly));
        }
        Ok(PolygonBoundaries { polygons })
    }
}

fn point_in_polygon(lat: f64, lon: f64, poly: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (yi, xi) = poly[i];
        let (yj, xj) = poly[j];
        if (yi > lat) != (yj > lat) && lon < (xj - xi) * (lat - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

impl BoundaryAdapter for PolygonBoundaries {
    fn region_at(&self, coords: Coords) -> Option<String> {
        self.polygons
            .iter()
            .find(|(_, poly)| point_in_polygon(coords.lat(), coords.lon(), poly))
            .map(|(id, _)| id.clone())
    }
}

/// A validated scheme. `regions` holds the reporting units after merges.
#[derive(Debug, Clone)]
pub struct RegionScheme {
    pub id: SchemeId,
    pub regions: Vec<RegionRecord>,
    pub merge_rules: Vec<MergeRule>,
    /// Pre-merge region id → reporting id.
    merged_into: HashMap<String, String>,
    by_subdivision: HashMap<String, String>,
    by_country: HashMap<String, Vec<usize>>,
    index: HashMap<String, usize>,
}

pub const SCHEME_HEADER: [&str; 5] = ["region_id", "name", "country", "population", "subdivision_codes"];
pub const MERGE_HEADER: [&str; 3] = ["merged_id", "member_ids", "label"];

impl RegionScheme {
    /// Validates `regions` and applies `merge_rules`.
    pub fn new(id: SchemeId, regions: Vec<RegionRecord>, merge_rules: Vec<MergeRule>) -> Result<Self> {
        let mut raw: BTreeMap<String, RegionRecord> = BTreeMap::new();
        let mut by_subdivision: HashMap<String, String> = HashMap::new();
        for r in regions {
            if r.region_id.is_empty() {
                return Err(Error::validation(format!("scheme {id}: empty region id")));
            }
            if r.population == 0 {
                return Err(Error::validation(format!(
                    "scheme {id}: region {} has zero population",
                    r.region_id
                )));
            }
            if let SchemeId::Admin1(cc) = &id {
                if &r.country != cc {
                    return Err(Error::validation(format!(
                        "scheme {id}: region {} belongs to {}",
                        r.region_id, r.country
                    )));
                }
            }
            for code in &r.subdivision_codes {
                if let Some(other) = by_subdivision.insert(code.clone(), r.region_id.clone()) {
                    return Err(Error::validation(format!(
                        "scheme {id}: subdivision {code} claimed by both {other} and {}",
                        r.region_id
                    )));
                }
            }
            if raw.contains_key(&r.region_id) {
                return Err(Error::validation(format!(
                    "scheme {id}: duplicate region id {}",
                    r.region_id
                )));
            }
            raw.insert(r.region_id.clone(), r);
        }

        let mut merged_into = HashMap::new();
        let mut merged_regions = Vec::new();
        for rule in &merge_rules {
            if rule.member_ids.is_empty() {
                return Err(Error::validation(format!(
                    "scheme {id}: merge {} has no members",
                    rule.merged_id
                )));
            }
            let mut members = Vec::new();
            for m in &rule.member_ids {
                let Some(r) = raw.get(m) else {
                    return Err(Error::validation(format!(
                        "scheme {id}: merge {} names unknown region {m}",
                        rule.merged_id
                    )));
                };
                if merged_into.insert(m.clone(), rule.merged_id.clone()).is_some() {
                    return Err(Error::validation(format!(
                        "scheme {id}: region {m} appears in more than one merge"
                    )));
                }
                members.push(r);
            }
            let country = &members[0].country;
            if members.iter().any(|r| &r.country != country) {
                return Err(Error::validation(format!(
                    "scheme {id}: merge {} spans several countries",
                    rule.merged_id
                )));
            }
            merged_regions.push(RegionRecord {
                region_id: rule.merged_id.clone(),
                name: rule.label.clone(),
                country: country.clone(),
                population: members.iter().map(|r| r.population).sum(),
                subdivision_codes: members
                    .iter()
                    .flat_map(|r| r.subdivision_codes.iter().cloned())
                    .collect(),
            });
        }

        let mut out: Vec<RegionRecord> = raw
            .into_values()
            .filter(|r| !merged_into.contains_key(&r.region_id))
            .collect();
        let kept: HashSet<String> = out.iter().map(|r| r.region_id.clone()).collect();
        for m in merged_regions {
            if kept.contains(&m.region_id) {
                return Err(Error::validation(format!(
                    "scheme {id}: merged id {} collides with an existing region",
                    m.region_id
                )));
            }
            out.push(m);
        }
        out.sort_by(|a, b| a.region_id.cmp(&b.region_id));
        if out.windows(2).any(|w| w[0].region_id == w[1].region_id) {
            return Err(Error::validation(format!("scheme {id}: duplicate merged id")));
        }

        let mut by_country: HashMap<String, Vec<usize>> = HashMap::new();
        let mut index = HashMap::new();
        for (i, r) in out.iter().enumerate() {
            by_country.entry(r.country.clone()).or_default().push(i);
            index.insert(r.region_id.clone(), i);
        }
        if id == SchemeId::Country {
            if let Some((cc, _)) = by_country.iter().find(|(_, v)| v.len() > 1) {
                return Err(Error::validation(format!(
                    "scheme country: {cc} has more than one region"
                )));
            }
        }
        for target in by_subdivision.values_mut() {
            if let Some(m) = merged_into.get(target) {
                *target = m.clone();
            }
        }
        Ok(RegionScheme {
            id,
            regions: out,
            merge_rules,
            merged_into,
            by_subdivision,
            by_country,
            index,
        })
    }

    /// Reads a scheme CSV and an optional merge-rule CSV.
    pub fn load(id: SchemeId, scheme: &Path, merges: Option<&Path>) -> Result<Self> {
        let table = CsvTable::read(scheme)?;
        let cols: Vec<usize> = SCHEME_HEADER
            .iter()
            .map(|c| table.column(c))
            .collect::<Result<_>>()?;
        let mut regions = Vec::with_capacity(table.records.len());
        for (i, rec) in table.records.iter().enumerate() {
            let population: u64 = table.parse(i, cols[3])?;
            if population == 0 {
                return Err(table.bad(i, "population must be positive"));
            }
            let country = rec[cols[2]].to_ascii_uppercase();
            if country.len() != 2 {
                return Err(table.bad(i, format!("`{country}` is not an ISO alpha-2 code")));
            }
            regions.push(RegionRecord {
                region_id: rec[cols[0]].to_string(),
                name: rec[cols[1]].to_string(),
                country,
                population,
                subdivision_codes: split_list(&rec[cols[4]]).map(String::from).collect(),
            });
        }
        let rules = match merges {
            Some(p) => read_merge_rules(p)?,
            None => Vec::new(),
        };
        RegionScheme::new(id, regions, rules)
    }

    pub fn region(&self, id: &str) -> Option<&RegionRecord> {
        self.index.get(id).map(|&i| &self.regions[i])
    }

    pub fn contains_country(&self, country: &str) -> bool {
        self.by_country.contains_key(country)
    }

    /// Reporting id for a pre-merge region id.
    pub fn reporting_id<'a>(&'a self, raw_id: &'a str) -> Option<&'a str> {
        if let Some(m) = self.merged_into.get(raw_id) {
            return Some(m);
        }
        self.index.contains_key(raw_id).then_some(raw_id)
    }
}

pub fn read_merge_rules(path: &Path) -> Result<Vec<MergeRule>> {
    let table = CsvTable::read(path)?;
    let merged = table.column("merged_id")?;
    let members = table.column("member_ids")?;
    let label = table.column("label")?;
    Ok(table
        .records
        .iter()
        .map(|rec| MergeRule {
            merged_id: rec[merged].to_string(),
            member_ids: split_list(&rec[members]).map(String::from).collect(),
            label: rec[label].to_string(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AssignOutcome {
    Region(String),
    /// Located, but not precisely enough for this scheme.
    CountryOnly,
    /// The country is not covered by the scheme.
    Unassigned,
}

/// Places one result in `scheme`: subdivision code first, then coordinates
/// through `boundaries`, with merges applied to whatever matched.
pub fn assign_region(
    geo: &GeoResult,
    scheme: &RegionScheme,
    boundaries: Option<&dyn BoundaryAdapter>,
) -> AssignOutcome {
    let Some(candidates) = scheme.by_country.get(&geo.country) else {
        return AssignOutcome::Unassigned;
    };
    if !scheme.id.is_subnational() {
        return AssignOutcome::Region(scheme.regions[candidates[0]].region_id.clone());
    }
    if geo.precision == Precision::Country {
        return AssignOutcome::CountryOnly;
    }
    if let Some(code) = &geo.subdivision {
        if let Some(id) = scheme.by_subdivision.get(code) {
            return AssignOutcome::Region(id.clone());
        }
    }
    if let (Some(c), Some(b)) = (geo.coords, boundaries) {
        if let Some(id) = b.region_at(c).as_deref().and_then(|raw| scheme.reporting_id(raw)) {
            if scheme.region(id).is_some_and(|r| r.country == geo.country) {
                return AssignOutcome::Region(id.to_string());
            }
        }
    }
    AssignOutcome::CountryOnly
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateCount {
    pub region_id: String,
    pub n_profile: u64,
    pub n_microblog: u64,
    pub n_suffix: u64,
    pub n_total: u64,
}

impl AggregateCount {
    pub fn zero(region_id: &str) -> Self {
        AggregateCount {
            region_id: region_id.to_string(),
            n_profile: 0,
            n_microblog: 0,
            n_suffix: 0,
            n_total: 0,
        }
    }

    pub fn add(&mut self, source: GeoSource) {
        match source {
            GeoSource::Profile => self.n_profile += 1,
            GeoSource::Microblog => self.n_microblog += 1,
            GeoSource::EmailSuffix => self.n_suffix += 1,
        }
        self.n_total += 1;
    }

    pub fn by_source(&self, source: GeoSource) -> u64 {
        match source {
            GeoSource::Profile => self.n_profile,
            GeoSource::Microblog => self.n_microblog,
            GeoSource::EmailSuffix => self.n_suffix,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Aggregation {
    /// One row per reporting region in id order, minus suppressed rows.
    pub counts: Vec<AggregateCount>,
    pub country_only: u64,
    pub unassigned: u64,
    /// Regions dropped by the k-floor, and the accounts they held.
    pub suppressed_regions: Vec<String>,
    pub suppressed_accounts: u64,
}

impl Aggregation {
    pub fn in_regions(&self) -> u64 {
        self.counts.iter().map(|c| c.n_total).sum::<u64>() + self.suppressed_accounts
    }

    pub fn located(&self) -> u64 {
        self.in_regions() + self.country_only + self.unassigned
    }
}

/// Counts assignments by region and source. Every scheme region gets a row,
/// including empty ones, unless `k_floor > 0` suppresses rows whose total is
/// below it.
pub fn aggregate<'a, I>(assignments: I, scheme: &RegionScheme, k_floor: u64) -> Result<Aggregation>
where
    I: IntoIterator<Item = (&'a str, &'a AssignOutcome, GeoSource)>,
{
    let mut rows: Vec<AggregateCount> = scheme
        .regions
        .iter()
        .map(|r| AggregateCount::zero(&r.region_id))
        .collect();
    let mut seen = HashSet::new();
    let mut agg = Aggregation::default();
    for (login, outcome, source) in assignments {
        if !seen.insert(login) {
            return Err(Error::validation(format!(
                "login {login} assigned twice in scheme {}",
                scheme.id
            )));
        }
        match outcome {
            AssignOutcome::Region(id) => {
                let Some(&i) = scheme.index.get(id) else {
                    return Err(Error::validation(format!(
                        "region {id} is not part of scheme {}",
                        scheme.id
                    )));
                };
                rows[i].add(source);
            }
            AssignOutcome::CountryOnly => agg.country_only += 1,
            AssignOutcome::Unassigned => agg.unassigned += 1,
        }
    }
    for row in rows {
        if k_floor > 0 && row.n_total < k_floor {
            agg.suppressed_accounts += row.n_total;
            agg.suppressed_regions.push(row.region_id);
        } else {
            agg.counts.push(row);
        }
    }
    Ok(agg)
}

pub const AGGREGATE_HEADER: [&str; 5] = ["region_id", "n_profile", "n_microblog", "n_suffix", "n_total"];

pub fn write_aggregate_csv<W: Write>(out: W, path: &Path, counts: &[AggregateCount]) -> Result<()> {
    let rows = counts.iter().map(|c| {
        vec![
            c.region_id.clone(),
            c.n_profile.to_string(),
            c.n_microblog.to_string(),
            c.n_suffix.to_string(),
            c.n_total.to_string(),
        ]
    });
    write_csv(out, path, &AGGREGATE_HEADER, rows)
}

/// Reads an aggregate table, checking that the per-source columns add up.
pub fn read_aggregate_csv(path: &Path) -> Result<Vec<AggregateCount>> {
    let table = CsvTable::read(path)?;
    let cols: Vec<usize> = AGGREGATE_HEADER
        .iter()
        .map(|c| table.column(c))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(table.records.len());
    let mut ids = HashSet::new();
    for (i, rec) in table.records.iter().enumerate() {
        let c = AggregateCount {
            region_id: rec[cols[0]].to_string(),
            n_profile: table.parse(i, cols[1])?,
            n_microblog: table.parse(i, cols[2])?,
            n_suffix: table.parse(i, cols[3])?,
            n_total: table.parse(i, cols[4])?,
        };
        if c.n_profile + c.n_microblog + c.n_suffix != c.n_total {
            return Err(table.bad(i, "n_total differs from the sum of the source columns"));
        }
        if !ids.insert(c.region_id.clone()) {
            return Err(table.bad(i, format!("duplicate region {}", c.region_id)));
        }
        out.push(c);
    }
    Ok(out)
}
