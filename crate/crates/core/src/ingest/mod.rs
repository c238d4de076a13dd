//! Commit ingestion: archive parsing, per-email activity, activity threshold.

mod activity;
mod events;

use std::collections::BTreeMap;
use std::path::PathBuf;

use chrono::{DateTime, TimeZone, Utc};
use rayon::prelude::*;

pub use activity::{
    accumulate_activity, filter_active, read_activity_csv, write_activity_csv,
    ActivityAccumulator, EmailActivity, SampleMode, ACTIVITY_HEADER, DEFAULT_THRESHOLD,
    SAMPLE_SIZE,
};
pub use events::{
    parse_event_reader, parse_event_stream, read_event_file, LineRef, ParseReport, RawEventLine,
    MAX_REPORTED_LINES,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitRecord {
    /// 40 lowercase hex characters.
    pub sha: String,
    pub author_email: String,
    pub author_name: String,
    pub repo_id: String,
    pub committed_at: DateTime<Utc>,
}

/// Lowercase and trim. No plus-tag stripping.
pub fn normalize_email(raw: &str) -> String {
    raw.trim().to_lowercase()
}

/// Half-open UTC interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    start: DateTime<Utc>,
    end: DateTime<Utc>,
}

impl Window {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Self> {
        if start >= end {
            return Err(Error::validation(format!(
                "window start {start} must precede end {end}"
            )));
        }
        Ok(Window { start, end })
    }

    /// Calendar years 2019 and 2020.
    pub fn study_period() -> Self {
        Window {
            start: Utc.with_ymd_and_hms(2019, 1, 1, 0, 0, 0).unwrap(),
            end: Utc.with_ymd_and_hms(2021, 1, 1, 0, 0, 0).unwrap(),
        }
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn end(&self) -> DateTime<Utc> {
        self.end
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.start <= t && t < self.end
    }
}

#[derive(Debug, Clone)]
pub struct IngestOutput {
    pub activity: BTreeMap<String, EmailActivity>,
    pub report: ParseReport,
    pub distinct_shas: usize,
}

/// Parses every archive in parallel (on the current rayon pool) and merges
/// per-file activity. Results do not depend on scheduling: per-file parts are
/// ordered by their position in `paths`.
pub fn ingest_files(paths: &[PathBuf], window: Window, mode: SampleMode) -> Result<IngestOutput> {
    let parts: Vec<(ParseReport, ActivityAccumulator)> = paths
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let (records, report) = read_event_file(path)?;
            let mut acc = ActivityAccumulator::for_part(window, i as u32);
            acc.extend(&records);
            Ok((report, acc))
        })
        .collect::<Result<_>>()?;

    let mut report = ParseReport::default();
    let mut merged = ActivityAccumulator::new(window);
    for (r, acc) in parts {
        report.merge(r);
        merged = merged.merge(acc);
    }
    let distinct_shas = merged.distinct_shas();
    Ok(IngestOutput {
        activity: merged.finish(mode),
        report,
        distinct_shas,
    })
}
