use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{RunConfig, SchemeSpec};
use crate::error::{Error, Result};
use crate::geocode::{
    locate_all, read_locations_csv, write_locations_csv, AccountLocation, AccountProfile,
    FixtureMicroblog, FixtureProfiles, GeoSource, Geocoder, OfflineGazetteer, Precision,
    SuffixTables,
};
use crate::identity::{
    merge_identities, read_accounts_csv, resolve_all, write_accounts_csv, AccountResolution,
    FixtureResolver, IdentityMerge, LoginBlocklist, ResolutionCache, ResolveOptions,
    ResolvedEmail, CACHE_HEADER,
};
use crate::ingest::{
    filter_active, ingest_files, read_activity_csv, write_activity_csv, EmailActivity,
    IngestOutput,
};
use crate::regions::{
    aggregate, assign_region, write_aggregate_csv, Aggregation, BoundaryAdapter,
    PolygonBoundaries, RegionScheme,
};
use crate::table::write_csv;

pub const ACTIVITY_FILE: &str = "activity.csv";
pub const RESOLUTIONS_FILE: &str = "resolutions.csv";
pub const ACCOUNTS_FILE: &str = "accounts.csv";
pub const LOCATIONS_FILE: &str = "locations.csv";
pub const RUN_REPORT_FILE: &str = "run_report.json";

pub fn aggregate_file(spec: &SchemeSpec) -> String {
    format!("aggregate_{}.csv", spec.tag())
}

/// Output files are written to a hidden directory next to the output
/// directory and moved into place only by [`Staging::commit`]. Dropping an
/// uncommitted staging area removes everything written so far.
pub struct Staging {
    tmp: tempfile::TempDir,
    out_dir: PathBuf,
    files: Vec<String>,
}

impl Staging {
    pub fn new(out_dir: &Path) -> Result<Self> {
        let parent = match out_dir.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
        let tmp = tempfile::Builder::new()
            .prefix(".devgeo-staging-")
            .tempdir_in(&parent)
            .map_err(|e| Error::io(&parent, e))?;
        Ok(Staging {
            tmp,
            out_dir: out_dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    /// Writes `name` through `f`, which gets a buffered writer and the final
    /// path (for error messages).
    pub fn write<F>(&mut self, name: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>, &Path) -> Result<()>,
    {
        let staged = self.tmp.path().join(name);
        let target = self.out_dir.join(name);
        let file = File::create(&staged).map_err(|e| Error::io(&staged, e))?;
        let mut w = BufWriter::new(file);
        f(&mut w, &target)?;
        w.flush().map_err(|e| Error::io(&target, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, |w, path| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))
        })
    }

    /// Moves every staged file into the output directory.
    pub fn commit(self) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(&self.out_dir).map_err(|e| Error::io(&self.out_dir, e))?;
        let mut moved = Vec::with_capacity(self.files.len());
        for name in &self.files {
            let target = self.out_dir.join(name);
            fs::rename(self.tmp.path().join(name), &target).map_err(|e| Error::io(&target, e))?;
            moved.push(target);
        }
        Ok(moved)
    }
}

/// Runs `f` on a rayon pool with `jobs` workers (0: one per core).
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::validation(format!("cannot build a pool of {jobs} workers: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub files: Vec<String>,
    pub window_start: String,
    pub window_end: String,
    pub total_lines: u64,
    pub parsed_lines: u64,
    pub skipped_lines: u64,
    pub non_push_events: u64,
    pub commits: u64,
    pub invalid_commits: u64,
    /// `file:line` of the first skipped lines.
    pub offending_lines: Vec<String>,
    pub distinct_shas: u64,
    pub emails_in_window: u64,
    pub threshold: u64,
    pub emails_at_threshold: u64,
    pub commits_at_threshold: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentitySummary {
    pub emails: u64,
    pub resolved_emails: u64,
    pub unresolved_emails: u64,
    /// Resolved emails by the attempt that succeeded.
    pub resolved_by_attempt: BTreeMap<u32, u64>,
    pub accounts: u64,
    pub blocked_accounts: u64,
    pub resolved_commits: u64,
    pub unresolved_commits: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeocodeSummary {
    pub accounts: u64,
    pub located: u64,
    pub unlocated: u64,
    /// Results flagged unreliable; counted as unlocated unless included.
    pub unreliable: u64,
    pub include_unreliable: bool,
    pub located_by_source: BTreeMap<String, u64>,
    pub subnational_located: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeSummary {
    pub scheme: String,
    pub file: String,
    pub regions: u64,
    pub in_regions: u64,
    pub country_only: u64,
    pub unassigned: u64,
    pub suppressed_regions: Vec<String>,
    pub suppressed_accounts: u64,
}

/// Totals per stage, from accounts at threshold down to located accounts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Funnel {
    /// Resolved accounts, blocked accounts and unresolved emails.
    pub accounts_at_threshold: u64,
    pub unresolved: u64,
    pub blocked: u64,
    pub resolved_accounts: u64,
    pub located: u64,
    pub unlocated: u64,
    pub located_by_source: BTreeMap<String, u64>,
    pub subnational_located: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub ingest: IngestSummary,
    pub identity: IdentitySummary,
    pub geocode: GeocodeSummary,
    pub schemes: Vec<SchemeSummary>,
    pub funnel: Funnel,
}

pub struct IngestStage {
    pub output: IngestOutput,
    pub active: Vec<EmailActivity>,
    pub summary: IngestSummary,
}

pub fn ingest_stage(cfg: &RunConfig) -> Result<IngestStage> {
    if cfg.events.is_empty() {
        return Err(Error::validation("config key `events` is required by the ingest stage"));
    }
    let output = ingest_files(&cfg.events, cfg.window, cfg.sample_mode())?;
    let active: Vec<EmailActivity> = filter_active(output.activity.clone(), cfg.threshold)
        .into_values()
        .collect();
    let r = &output.report;
    let summary = IngestSummary {
        files: cfg.events.iter().map(|p| cfg.display_path(p)).collect(),
        window_start: cfg.window.start().to_rfc3339(),
        window_end: cfg.window.end().to_rfc3339(),
        total_lines: r.total_lines,
        parsed_lines: r.parsed_lines,
        skipped_lines: r.skipped_lines,
        non_push_events: r.non_push_events,
        commits: r.commits,
        invalid_commits: r.invalid_commits,
        offending_lines: r
            .offending
            .iter()
            .map(|l| format!("{}:{}", cfg.display_path(&l.source_file), l.line_number))
            .collect(),
        distinct_shas: output.distinct_shas as u64,
        emails_in_window: output.activity.len() as u64,
        threshold: cfg.threshold,
        emails_at_threshold: active.len() as u64,
        commits_at_threshold: active.iter().map(|a| a.commit_count).sum(),
    };
    Ok(IngestStage { output, active, summary })
}

pub struct ResolveStage {
    pub resolved: Vec<ResolvedEmail>,
    pub merge: IdentityMerge,
    pub cache: Option<ResolutionCache>,
    pub summary: IdentitySummary,
}

pub fn resolve_stage(cfg: &RunConfig, active: &[EmailActivity]) -> Result<ResolveStage> {
    let fixture = cfg.require(cfg.resolver_fixture.as_ref(), "resolver_fixture", "resolve")?;
    let provider = FixtureResolver::load(fixture)?;
    let mut cache = match &cfg.resolution_cache {
        Some(p) if p.exists() => Some(ResolutionCache::load(p)?),
        Some(_) => Some(ResolutionCache::default()),
        None => None,
    };
    let opts = ResolveOptions {
        max_attempts: cfg.max_attempts,
        in_flight: cfg.in_flight,
    };
    let resolved = resolve_all(active, &provider, cache.as_ref(), opts)?;
    if let Some(c) = cache.as_mut() {
        for r in &resolved {
            c.record(r);
        }
    }
    let merge = merge_identities(&resolved, &LoginBlocklist::new(&cfg.login_blocklist));

    let mut by_attempt = BTreeMap::new();
    for r in &resolved {
        if r.resolution.login().is_some() {
            *by_attempt.entry(r.resolution.attempts()).or_insert(0) += 1;
        }
    }
    let resolved_emails = by_attempt.values().sum();
    let summary = IdentitySummary {
        emails: resolved.len() as u64,
        resolved_emails,
        unresolved_emails: merge.unresolved.len() as u64,
        resolved_by_attempt: by_attempt,
        accounts: merge.accounts.len() as u64,
        blocked_accounts: merge.blocked.len() as u64,
        resolved_commits: merge.resolved_commits(),
        unresolved_commits: merge.unresolved_commits(),
    };
    Ok(ResolveStage { resolved, merge, cache, summary })
}

fn suffix_tables(cfg: &RunConfig) -> Result<SuffixTables> {
    let mut tables = if cfg.cctld.is_none() && cfg.universities.is_none() {
        SuffixTables::bundled()
    } else {
        SuffixTables::load(cfg.cctld.as_deref(), cfg.universities.as_deref())?
    };
    tables.set_blocklist(&cfg.suffix_blocklist);
    Ok(tables)
}

pub struct GeocodeStage {
    pub locations: Vec<AccountLocation>,
    pub summary: GeocodeSummary,
}

/// Locates `accounts` in the given order.
pub fn geocode_stage<'a>(
    cfg: &RunConfig,
    accounts: impl IntoIterator<Item = &'a AccountResolution>,
) -> Result<GeocodeStage> {
    let profiles_path = cfg.require(cfg.profiles.as_ref(), "profiles", "geocode")?;
    let profiles = FixtureProfiles::load(profiles_path)?;
    let microblog = match &cfg.microblog {
        Some(p) => FixtureMicroblog::load(p)?,
        None => FixtureMicroblog::default(),
    };
    let gazetteer = match &cfg.gazetteer {
        Some(p) => OfflineGazetteer::load(p)?,
        None => OfflineGazetteer::bundled(),
    };
    let tables = suffix_tables(cfg)?;
    let geocoder = Geocoder {
        gazetteer: &gazetteer,
        microblog: &microblog,
        tables: &tables,
    };
    let fetched: Vec<AccountProfile> = accounts
        .into_iter()
        .map(|a| AccountProfile::fetch(a, &profiles))
        .collect();
    let locations = locate_all(&fetched, &geocoder);
    let summary = summarize_locations(&locations, cfg.include_unreliable);
    Ok(GeocodeStage { locations, summary })
}

pub fn summarize_locations(locations: &[AccountLocation], include_unreliable: bool) -> GeocodeSummary {
    let mut s = GeocodeSummary {
        accounts: locations.len() as u64,
        include_unreliable,
        located_by_source: GeoSource::ALL.iter().map(|g| (g.as_str().to_string(), 0)).collect(),
        ..Default::default()
    };
    for l in locations {
        if l.result.as_ref().is_some_and(|r| r.unreliable) {
            s.unreliable += 1;
        }
        match l.usable(include_unreliable) {
            Some(r) => {
                s.located += 1;
                *s.located_by_source.get_mut(r.source.as_str()).unwrap() += 1;
                if r.precision == Precision::Subnational {
                    s.subnational_located += 1;
                }
            }
            None => s.unlocated += 1,
        }
    }
    s
}

pub struct SchemeOutput {
    pub spec: SchemeSpec,
    pub scheme: RegionScheme,
    pub aggregation: Aggregation,
    pub summary: SchemeSummary,
}

pub fn load_scheme(spec: &SchemeSpec) -> Result<RegionScheme> {
    RegionScheme::load(spec.id.clone(), &spec.path, spec.merges.as_deref())
}

pub fn aggregate_stage(cfg: &RunConfig, locations: &[AccountLocation]) -> Result<Vec<SchemeOutput>> {
    if cfg.schemes.is_empty() {
        return Err(Error::validation("config key `schemes` is required by the aggregate stage"));
    }
    let mut out = Vec::with_capacity(cfg.schemes.len());
    for spec in &cfg.schemes {
        let scheme = load_scheme(spec)?;
        let boundaries = spec.boundaries.as_deref().map(PolygonBoundaries::load).transpose()?;
        let adapter = boundaries.as_ref().map(|b| b as &dyn BoundaryAdapter);
        let assigned: Vec<_> = locations
            .iter()
            .filter_map(|l| l.usable(cfg.include_unreliable).map(|r| (l, r)))
            .map(|(l, r)| (l.login.as_str(), assign_region(r, &scheme, adapter), r.source))
            .collect();
        let aggregation = aggregate(assigned.iter().map(|(l, o, s)| (*l, o, *s)), &scheme, cfg.k_floor)?;
        let summary = SchemeSummary {
            scheme: spec.id.to_string(),
            file: aggregate_file(spec),
            regions: scheme.regions.len() as u64,
            in_regions: aggregation.in_regions(),
            country_only: aggregation.country_only,
            unassigned: aggregation.unassigned,
            suppressed_regions: aggregation.suppressed_regions.clone(),
            suppressed_accounts: aggregation.suppressed_accounts,
        };
        out.push(SchemeOutput {
            spec: spec.clone(),
            scheme,
            aggregation,
            summary,
        });
    }
    Ok(out)
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

fn write_resolutions(staging: &mut Staging, resolved: &[ResolvedEmail]) -> Result<()> {
    staging.write(RESOLUTIONS_FILE, |w, path| {
        let rows = resolved.iter().map(|r| {
            vec![
                r.activity.email.clone(),
                r.resolution.login().unwrap_or("").to_string(),
                r.resolution.attempts().to_string(),
            ]
        });
        write_csv(w, path, &CACHE_HEADER, rows)
    })
}

fn write_cache(cfg: &RunConfig, cache: Option<&ResolutionCache>) -> Result<()> {
    let (Some(path), Some(cache)) = (&cfg.resolution_cache, cache) else {
        return Ok(());
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| Error::io(&dir, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        cache.write(&mut w, path)?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn write_aggregates(staging: &mut Staging, schemes: &[SchemeOutput]) -> Result<()> {
    for s in schemes {
        staging.write(&aggregate_file(&s.spec), |w, path| {
            write_aggregate_csv(w, path, &s.aggregation.counts)
        })?;
    }
    Ok(())
}

/// Runs every stage and writes all outputs plus the run report. Nothing is
/// left in the output directory if any stage fails.
pub fn cmd_pipeline(cfg: &RunConfig) -> Result<RunReport> {
    let mut staging = Staging::new(&cfg.out_dir)?;
    with_jobs(cfg.jobs, || {
        let ingest = stage("ingest", ingest_stage(cfg))?;
        stage("ingest", staging.write(ACTIVITY_FILE, |w, path| write_activity_csv(w, path, &ingest.active)))?;

        let resolve = stage("resolve", resolve_stage(cfg, &ingest.active))?;
        stage("resolve", write_resolutions(&mut staging, &resolve.resolved))?;
        stage("resolve", staging.write(ACCOUNTS_FILE, |w, path| {
            write_accounts_csv(w, path, resolve.merge.accounts.values())
        }))?;

        let geocode = stage("geocode", geocode_stage(cfg, resolve.merge.accounts.values()))?;
        stage("geocode", staging.write(LOCATIONS_FILE, |w, path| {
            write_locations_csv(w, path, &geocode.locations)
        }))?;

        let schemes = stage("aggregate", aggregate_stage(cfg, &geocode.locations))?;
        stage("aggregate", write_aggregates(&mut staging, &schemes))?;

        let report = build_report(ingest.summary, resolve.summary, geocode.summary, &schemes);
        check_conservation(&report)?;
        staging.write_json(RUN_REPORT_FILE, &report)?;
        staging.commit()?;
        stage("resolve", write_cache(cfg, resolve.cache.as_ref()))?;
        Ok(report)
    })?
}

fn build_report(
    ingest: IngestSummary,
    identity: IdentitySummary,
    geocode: GeocodeSummary,
    schemes: &[SchemeOutput],
) -> RunReport {
    let funnel = Funnel {
        accounts_at_threshold: identity.accounts + identity.blocked_accounts + identity.unresolved_emails,
        unresolved: identity.unresolved_emails,
        blocked: identity.blocked_accounts,
        resolved_accounts: identity.accounts,
        located: geocode.located,
        unlocated: geocode.unlocated,
        located_by_source: geocode.located_by_source.clone(),
        subnational_located: geocode.subnational_located,
    };
    RunReport {
        ingest,
        identity,
        geocode,
        schemes: schemes.iter().map(|s| s.summary.clone()).collect(),
        funnel,
    }
}

/// Every funnel total has to add up; a mismatch is a bug, not bad input.
fn check_conservation(r: &RunReport) -> Result<()> {
    let f = &r.funnel;
    let mut problems = Vec::new();
    if f.located + f.unlocated + f.unresolved + f.blocked != f.accounts_at_threshold {
        problems.push("located + unlocated + unresolved + blocked != accounts at threshold".to_string());
    }
    if f.located_by_source.values().sum::<u64>() != f.located {
        problems.push("per-source totals do not sum to located".to_string());
    }
    for s in &r.schemes {
        if s.in_regions + s.country_only + s.unassigned != f.located {
            problems.push(format!("scheme {}: assignments do not sum to located", s.scheme));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::validation(format!("run report does not reconcile: {}", problems.join("; "))))
    }
}

pub fn cmd_ingest(cfg: &RunConfig) -> Result<IngestSummary> {
    let mut staging = Staging::new(&cfg.out_dir)?;
    let ingest = with_jobs(cfg.jobs, || ingest_stage(cfg))?;
    let ingest = stage("ingest", ingest)?;
    stage("ingest", staging.write(ACTIVITY_FILE, |w, path| write_activity_csv(w, path, &ingest.active)))?;
    staging.commit()?;
    Ok(ingest.summary)
}

pub fn cmd_resolve(cfg: &RunConfig) -> Result<IdentitySummary> {
    let run = || -> Result<IdentitySummary> {
        let activity = read_activity_csv(&cfg.out_dir.join(ACTIVITY_FILE))?;
        let active: Vec<EmailActivity> = filter_active(activity, cfg.threshold).into_values().collect();
        let resolve = resolve_stage(cfg, &active)?;
        let mut staging = Staging::new(&cfg.out_dir)?;
        write_resolutions(&mut staging, &resolve.resolved)?;
        staging.write(ACCOUNTS_FILE, |w, path| write_accounts_csv(w, path, resolve.merge.accounts.values()))?;
        staging.commit()?;
        write_cache(cfg, resolve.cache.as_ref())?;
        Ok(resolve.summary)
    };
    stage("resolve", run())
}

pub fn cmd_geocode(cfg: &RunConfig) -> Result<GeocodeSummary> {
    let run = || -> Result<GeocodeSummary> {
        let accounts = read_accounts_csv(&cfg.out_dir.join(ACCOUNTS_FILE))?;
        let geocode = with_jobs(cfg.jobs, || geocode_stage(cfg, accounts.values()))??;
        let mut staging = Staging::new(&cfg.out_dir)?;
        staging.write(LOCATIONS_FILE, |w, path| write_locations_csv(w, path, &geocode.locations))?;
        staging.commit()?;
        Ok(geocode.summary)
    };
    stage("geocode", run())
}

pub fn cmd_aggregate(cfg: &RunConfig) -> Result<Vec<SchemeSummary>> {
    let run = || -> Result<Vec<SchemeSummary>> {
        let locations = read_locations_csv(&cfg.out_dir.join(LOCATIONS_FILE))?;
        let schemes = aggregate_stage(cfg, &locations)?;
        let mut staging = Staging::new(&cfg.out_dir)?;
        write_aggregates(&mut staging, &schemes)?;
        staging.commit()?;
        Ok(schemes.into_iter().map(|s| s.summary).collect())
    };
    stage("aggregate", run())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn staging_discards_on_drop() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        {
            let mut s = Staging::new(&out).unwrap();
            s.write("a.txt", |w, p| w.write_all(b"x").map_err(|e| Error::io(p, e))).unwrap();
        }
        assert!(!out.exists());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);

        let mut s = Staging::new(&out).unwrap();
        s.write("a.txt", |w, p| w.write_all(b"x").map_err(|e| Error::io(p, e))).unwrap();
        s.commit().unwrap();
        assert_eq!(fs::read(out.join("a.txt")).unwrap(), b"x");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
