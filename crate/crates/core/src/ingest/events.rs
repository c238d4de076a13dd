//! Push-event archive parsing.
//!
//! Archives are line-delimited JSON objects in the GH Archive layout,
//! optionally gzip-compressed. Each `PushEvent` carries a list of commits
//! with sha and author identity. Lines that fail to parse are skipped and
//! tallied; they never abort ingestion.

use std::borrow::Cow;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use flate2::read::MultiGzDecoder;
use serde::Deserialize;
use serde_json::value::RawValue;

use super::{normalize_email, CommitRecord};
use crate::error::{Error, Result};

/// Number of offending line locations retained in a [`ParseReport`].
pub const MAX_REPORTED_LINES: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawEventLine {
    pub payload: String,
    pub source_file: PathBuf,
    /// 1-based.
    pub line_number: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LineRef {
    pub source_file: PathBuf,
    pub line_number: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseReport {
    pub total_lines: u64,
    pub parsed_lines: u64,
    pub skipped_lines: u64,
    /// Well-formed lines of an event type other than push.
    pub non_push_events: u64,
    pub commits: u64,
    /// Commit entries dropped from otherwise valid push events (bad sha or
    /// empty author email).
    pub invalid_commits: u64,
    /// The first [`MAX_REPORTED_LINES`] skipped lines.
    pub offending: Vec<LineRef>,
}

impl ParseReport {
    fn record_skip(&mut self, source_file: &Path, line_number: u64) {
        self.skipped_lines += 1;
        if self.offending.len() < MAX_REPORTED_LINES {
            self.offending.push(LineRef {
                source_file: source_file.to_path_buf(),
                line_number,
            });
        }
    }

    /// Combines reports of separately parsed files. Offending lines keep
    /// `self` first, then `other`.
    pub fn merge(&mut self, other: ParseReport) {
        self.total_lines += other.total_lines;
        self.parsed_lines += other.parsed_lines;
        self.skipped_lines += other.skipped_lines;
        self.non_push_events += other.non_push_events;
        self.commits += other.commits;
        self.invalid_commits += other.invalid_commits;
        let room = MAX_REPORTED_LINES.saturating_sub(self.offending.len());
        self.offending.extend(other.offending.into_iter().take(room));
    }
}

#[derive(Deserialize)]
struct Envelope<'a> {
    #[serde(rename = "type", borrow)]
    kind: Cow<'a, str>,
    #[serde(default)]
    repo: Option<RepoRef>,
    #[serde(borrow)]
    payload: Option<&'a RawValue>,
    created_at: DateTime<Utc>,
}

#[derive(Deserialize)]
struct RepoRef {
    #[serde(default)]
    name: String,
}

#[derive(Deserialize)]
struct PushPayload {
    commits: Vec<CommitEntry>,
}

#[derive(Deserialize)]
struct CommitEntry {
    sha: String,
    author: Author,
}

#[derive(Deserialize)]
struct Author {
    #[serde(default)]
    email: String,
    #[serde(default)]
    name: String,
}

enum LineOutcome {
    Push { commits: Vec<CommitRecord>, invalid: u64 },
    OtherEvent,
}

pub(crate) fn is_commit_sha(sha: &str) -> bool {
    sha.len() == 40 && sha.bytes().all(|b| b.is_ascii_hexdigit())
}

fn parse_line(line: &str) -> std::result::Result<LineOutcome, serde_json::Error> {
    let env: Envelope<'_> = serde_json::from_str(line)?;
    if env.kind != "PushEvent" {
        return Ok(LineOutcome::OtherEvent);
    }
    let payload = env
        .payload
        .ok_or_else(|| serde::de::Error::missing_field("payload"))?;
    let push: PushPayload = serde_json::from_str(payload.get())?;
    let repo_id = env.repo.map(|r| r.name).unwrap_or_default();

    let mut invalid = 0;
    let mut commits = Vec::with_capacity(push.commits.len());
    for entry in push.commits {
        let email = normalize_email(&entry.author.email);
        if !is_commit_sha(&entry.sha) || email.is_empty() {
            invalid += 1;
            continue;
        }
        commits.push(CommitRecord {
            sha: entry.sha.to_ascii_lowercase(),
            author_email: email,
            author_name: entry.author.name,
            repo_id: repo_id.clone(),
            committed_at: env.created_at,
        });
    }
    Ok(LineOutcome::Push { commits, invalid })
}

fn apply_line(
    line: &str,
    source_file: &Path,
    line_number: u64,
    records: &mut Vec<CommitRecord>,
    report: &mut ParseReport,
) {
    report.total_lines += 1;
    match parse_line(line) {
        Ok(LineOutcome::Push { commits, invalid }) => {
            report.parsed_lines += 1;
            report.commits += commits.len() as u64;
            report.invalid_commits += invalid;
            records.extend(commits);
        }
        Ok(LineOutcome::OtherEvent) => {
            report.parsed_lines += 1;
            report.non_push_events += 1;
        }
        Err(e) => {
            log::debug!("{}:{line_number}: skipping malformed line: {e}", source_file.display());
            report.record_skip(source_file, line_number);
        }
    }
}

/// Parses already-split event lines. One record per commit entry in every
/// well-formed push event, in input order.
pub fn parse_event_stream<I>(lines: I) -> (Vec<CommitRecord>, ParseReport)
where
    I: IntoIterator<Item = RawEventLine>,
{
    let mut records = Vec::new();
    let mut report = ParseReport::default();
    for line in lines {
        apply_line(
            &line.payload,
            &line.source_file,
            line.line_number,
            &mut records,
            &mut report,
        );
    }
    (records, report)
}

/// Parses raw archive bytes from any reader. Total over arbitrary input:
/// invalid UTF-8 and broken JSON are counted as skipped lines, and only a
/// failing reader produces an error.
pub fn parse_event_reader<R: Read>(
    reader: R,
    source_file: &Path,
) -> std::io::Result<(Vec<CommitRecord>, ParseReport)> {
    let mut reader = BufReader::new(reader);
    let mut records = Vec::new();
    let mut report = ParseReport::default();
    let mut buf = Vec::new();
    let mut line_number = 0u64;
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        line_number += 1;
        let mut bytes = buf.as_slice();
        if let Some(stripped) = bytes.strip_suffix(b"\n") {
            bytes = stripped.strip_suffix(b"\r").unwrap_or(stripped);
        }
        match std::str::from_utf8(bytes) {
            Ok(line) => apply_line(line, source_file, line_number, &mut records, &mut report),
            Err(_) => {
                report.total_lines += 1;
                report.record_skip(source_file, line_number);
            }
        }
    }
    Ok((records, report))
}

/// Reads one archive file, transparently decompressing gzip (detected by
/// magic bytes, not extension).
pub fn read_event_file(path: &Path) -> Result<(Vec<CommitRecord>, ParseReport)> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 2];
    let n = read_prefix(&mut file, &mut magic).map_err(|e| Error::io(path, e))?;
    let prefix = std::io::Cursor::new(magic[..n].to_vec());
    let chained = prefix.chain(file);
    let parsed = if n == 2 && magic == [0x1f, 0x8b] {
        parse_event_reader(MultiGzDecoder::new(chained), path)
    } else {
        parse_event_reader(chained, path)
    };
    parsed.map_err(|e| Error::io(path, e))
}

fn read_prefix(file: &mut File, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match file.read(&mut buf[filled..])? {
            0 => break,
            n => filled += n,
        }
    }
    Ok(filled)
}
