use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use devgeo_core::report::{self, AnalysisSpec, RunConfig, RunReport};
use devgeo_core::synthetic::{write_fixture, GroundTruth, SourceCounts, DEFAULT_SEED};
use tempfile::TempDir;

fn fixture() -> (TempDir, GroundTruth) {
    let dir = tempfile::tempdir().unwrap();
    let truth = write_fixture(dir.path(), DEFAULT_SEED).unwrap();
    (dir, truth)
}

fn config(dir: &Path, overrides: &[(&str, &str)]) -> RunConfig {
    let overrides: Vec<(String, String)> = overrides.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    RunConfig::load(Some(&dir.join("pipeline.conf")), &overrides, dir).unwrap()
}

fn rows(path: &Path) -> Vec<BTreeMap<String, String>> {
    csv::Reader::from_path(path).unwrap().deserialize().map(|r| r.unwrap()).collect()
}

fn aggregate_counts(path: &Path) -> BTreeMap<String, SourceCounts> {
    rows(path)
        .into_iter()
        .map(|r| {
            let n = |k: &str| r[k].parse::<u64>().unwrap();
            let c = SourceCounts { profile: n("n_profile"), microblog: n("n_microblog"), email_suffix: n("n_suffix") };
            assert_eq!(c.total(), n("n_total"));
            (r["region_id"].clone(), c)
        })
        .collect()
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn pipeline_matches_ground_truth() {
    let (dir, truth) = fixture();
    let cfg = config(dir.path(), &[]);
    let report = report::cmd_pipeline(&cfg).unwrap();

    let i = &report.ingest;
    assert_eq!(i.total_lines, truth.total_lines);
    assert_eq!(i.skipped_lines, truth.malformed_lines);
    assert_eq!(i.non_push_events, truth.non_push_events);
    assert_eq!(i.commits, truth.commit_entries);
    assert_eq!(i.invalid_commits, truth.invalid_commit_entries);
    assert_eq!(i.distinct_shas, truth.distinct_in_window_shas);
    assert_eq!(i.emails_in_window, truth.email_commits.len() as u64);
    assert_eq!(i.emails_at_threshold, truth.emails_at_threshold);

    let activity: BTreeMap<String, u64> = rows(&cfg.out_dir.join(report::ACTIVITY_FILE))
        .into_iter()
        .map(|r| (r["email"].clone(), r["commit_count"].parse().unwrap()))
        .collect();
    let expected: BTreeMap<String, u64> =
        truth.email_commits.iter().filter(|(_, n)| **n >= 100).map(|(e, n)| (e.clone(), *n)).collect();
    assert_eq!(activity, expected);

    assert_eq!(report.identity.unresolved_emails, truth.unresolved_emails.len() as u64);
    assert_eq!(report.identity.unresolved_commits, truth.unresolved_commits);
    assert_eq!(report.identity.accounts, truth.accounts.len() as u64);

    let accounts: BTreeMap<String, u64> = rows(&cfg.out_dir.join(report::ACCOUNTS_FILE))
        .into_iter()
        .map(|r| (r["login"].clone(), r["total_commits"].parse().unwrap()))
        .collect();
    for (login, planted) in &truth.accounts {
        assert_eq!(accounts.get(login), Some(&planted.total_commits), "{login}");
    }

    for scheme in &report.schemes {
        let want = &truth.schemes[&scheme.scheme];
        assert_eq!(aggregate_counts(&cfg.out_dir.join(&scheme.file)), want.regions, "{}", scheme.scheme);
        assert_eq!(scheme.regions, want.regions.len() as u64);
        assert_eq!(scheme.in_regions, want.regions.values().map(SourceCounts::total).sum::<u64>());
        assert_eq!((scheme.country_only, scheme.unassigned), (want.country_only, want.unassigned));
    }

    let f = &report.funnel;
    assert_eq!(f.accounts_at_threshold, truth.accounts_at_threshold);
    assert_eq!(f.located, truth.located);
    assert_eq!(f.unlocated, truth.unlocated);
    assert_eq!(f.subnational_located, truth.subnational_located);
    assert_eq!(f.located_by_source["profile"], truth.located_by_source.profile);
    assert_eq!(f.located_by_source["microblog"], truth.located_by_source.microblog);
    assert_eq!(f.located_by_source["email_suffix"], truth.located_by_source.email_suffix);

    let saved: RunReport =
        serde_json::from_str(&fs::read_to_string(cfg.out_dir.join(report::RUN_REPORT_FILE)).unwrap()).unwrap();
    assert_eq!(saved, report);
}

#[test]
fn stage_commands_reproduce_pipeline() {
    let (dir, _) = fixture();
    let whole = config(dir.path(), &[("out_dir", "whole")]);
    let staged = config(dir.path(), &[("out_dir", "staged")]);
    report::cmd_pipeline(&whole).unwrap();
    report::cmd_ingest(&staged).unwrap();
    report::cmd_resolve(&staged).unwrap();
    report::cmd_geocode(&staged).unwrap();
    report::cmd_aggregate(&staged).unwrap();

    let mut names = listing(&whole.out_dir);
    names.retain(|n| n != report::RUN_REPORT_FILE);
    assert_eq!(listing(&staged.out_dir), names);
    for name in &names {
        assert_eq!(
            fs::read(whole.out_dir.join(name)).unwrap(),
            fs::read(staged.out_dir.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn stage_without_inputs_fails_cleanly() {
    let (dir, _) = fixture();
    let cfg = config(dir.path(), &[]);
    let err = report::cmd_geocode(&cfg).unwrap_err();
    assert!(err.to_string().contains("geocode"), "{err}");
    assert!(!cfg.out_dir.exists());
}

#[test]
fn k_floor_suppresses_small_regions() {
    let (dir, truth) = fixture();
    let cfg = config(dir.path(), &[("k_floor", "5")]);
    let report = report::cmd_pipeline(&cfg).unwrap();
    for scheme in &report.schemes {
        let counts = aggregate_counts(&cfg.out_dir.join(&scheme.file));
        assert!(counts.values().all(|c| c.total() >= 5), "{}", scheme.scheme);
        for id in &scheme.suppressed_regions {
            assert!(!counts.contains_key(id));
        }
        let shown: u64 = counts.values().map(SourceCounts::total).sum();
        assert_eq!(shown + scheme.suppressed_accounts, scheme.in_regions);
        let planted = &truth.schemes[&scheme.scheme].regions;
        let small = planted.iter().filter(|(_, c)| c.total() < 5).count();
        assert_eq!(scheme.suppressed_regions.len(), small);
    }
}

#[test]
fn unreliable_suffix_results_can_be_included() {
    let (dir, truth) = fixture();
    let report = report::cmd_pipeline(&config(dir.path(), &[("include_unreliable", "true")])).unwrap();
    let unreliable = truth.accounts.values().filter(|a| a.unreliable).count() as u64;
    assert!(unreliable > 0);
    assert_eq!(report.funnel.located, truth.located + unreliable);
    assert_eq!(report.funnel.unlocated, truth.unlocated - unreliable);
    assert_eq!(report.funnel.located_by_source["email_suffix"], truth.located_by_source.email_suffix + unreliable);
}

#[test]
fn empty_archive_gives_empty_tables() {
    let (dir, truth) = fixture();
    fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    let cfg = config(dir.path(), &[("events", "empty.jsonl")]);
    let report = report::cmd_pipeline(&cfg).unwrap();
    assert_eq!(report.ingest.total_lines, 0);
    assert_eq!(report.funnel.accounts_at_threshold, 0);
    assert!(rows(&cfg.out_dir.join(report::ACTIVITY_FILE)).is_empty());
    assert!(rows(&cfg.out_dir.join(report::LOCATIONS_FILE)).is_empty());
    for scheme in &report.schemes {
        let counts = aggregate_counts(&cfg.out_dir.join(&scheme.file));
        assert_eq!(counts.len(), truth.schemes[&scheme.scheme].regions.len());
        assert!(counts.values().all(|c| c.total() == 0));
    }
}

#[test]
fn failed_run_leaves_no_outputs() {
    let (dir, _) = fixture();
    fs::write(dir.path().join("resolver.csv"), "not,a,resolver\n1,2,3\n").unwrap();
    let cfg = config(dir.path(), &[]);
    let before = listing(dir.path());
    let err = report::cmd_pipeline(&cfg).unwrap_err();
    assert!(err.to_string().contains("resolve"), "{err}");
    assert!(!cfg.out_dir.exists());
    assert_eq!(listing(dir.path()), before);
}

#[test]
fn failed_rerun_keeps_previous_outputs() {
    let (dir, _) = fixture();
    let cfg = config(dir.path(), &[]);
    report::cmd_pipeline(&cfg).unwrap();
    let first = fs::read(cfg.out_dir.join(report::RUN_REPORT_FILE)).unwrap();
    fs::write(dir.path().join("resolver.csv"), "garbage\n").unwrap();
    assert!(report::cmd_pipeline(&cfg).is_err());
    assert_eq!(fs::read(cfg.out_dir.join(report::RUN_REPORT_FILE)).unwrap(), first);
}

#[test]
fn resolution_cache_replaces_provider_on_rerun() {
    let (dir, _) = fixture();
    let cfg = config(dir.path(), &[("resolution_cache", "cache.csv")]);
    let first = report::cmd_pipeline(&cfg).unwrap();
    assert!(dir.path().join("cache.csv").exists());
    let resolutions = fs::read(cfg.out_dir.join(report::RESOLUTIONS_FILE)).unwrap();

    fs::write(dir.path().join("resolver.csv"), "sha,login\n").unwrap();
    let second = report::cmd_pipeline(&cfg).unwrap();
    assert_eq!(second.funnel, first.funnel);
    assert_eq!(fs::read(cfg.out_dir.join(report::RESOLUTIONS_FILE)).unwrap(), resolutions);
}

#[test]
fn analysis_reconciles_with_run() {
    let (dir, _) = fixture();
    let cfg = config(dir.path(), &[]);
    let run = report::cmd_pipeline(&cfg).unwrap();
    for (file, scheme) in [("analysis_country.spec", "country"), ("analysis_nuts2.spec", "nuts2")] {
        let spec = AnalysisSpec::load(&dir.path().join(file)).unwrap();
        let summary = report::cmd_analyze(&cfg, &spec).unwrap();
        let in_regions = run.schemes.iter().find(|s| s.scheme == scheme).unwrap().in_regions;
        let shares = rows(&cfg.out_dir.join(format!("shares_{scheme}.csv")));
        let total: u64 = shares.iter().map(|r| r["count"].parse::<u64>().unwrap()).sum();
        assert_eq!(total, in_regions);
        let pct: f64 = shares.iter().map(|r| r["share"].parse::<f64>().unwrap()).sum();
        assert!((pct - 100.0).abs() < 1e-9);
        assert!(summary.contributors <= in_regions);
        for f in &summary.files {
            assert!(cfg.out_dir.join(f).exists(), "{f}");
        }
        let bins = rows(&cfg.out_dir.join(format!("bins_{scheme}.csv")));
        assert_eq!(bins.len(), summary.regions_analyzed);
    }
}
