use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{normalize_email, CommitRecord, Window};
use crate::error::Result;
use crate::table::{split_list, write_csv, CsvTable};

/// One sampled commit plus up to three retries.
pub const SAMPLE_SIZE: usize = 4;

pub const DEFAULT_THRESHOLD: u64 = 100;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmailActivity {
    pub email: String,
    /// Distinct in-window shas first seen under this email.
    pub commit_count: u64,
    /// At most [`SAMPLE_SIZE`] distinct shas used for account resolution.
    pub sample_shas: Vec<String>,
    pub first_seen: Option<DateTime<Utc>>,
    pub last_seen: Option<DateTime<Utc>>,
}

/// How `sample_shas` is chosen among an email's commits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SampleMode {
    /// The first distinct shas in input order.
    #[default]
    FirstSeen,
    /// A uniform sample, reproducible for a given seed.
    Seeded(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Ordinal {
    part: u32,
    index: u64,
}

#[derive(Debug, Clone)]
struct Seen {
    ordinal: Ordinal,
    email: String,
    at: DateTime<Utc>,
}

/// Accumulates distinct-sha activity per email.
///
/// Every pushed record gets an ordinal `(part, index)`; a sha is attributed to
/// the record with the smallest ordinal. Merging keeps the minimum, so merges
/// of per-part accumulators are commutative and associative and agree with a
/// single sequential pass over the parts in order.
#[derive(Debug, Clone)]
pub struct ActivityAccumulator {
    window: Window,
    part: u32,
    next: u64,
    seen: HashMap<String, Seen>,
}

impl ActivityAccumulator {
    pub fn new(window: Window) -> Self {
        Self::for_part(window, 0)
    }

    /// Accumulator for the `part`-th input (e.g. the n-th archive file).
    pub fn for_part(window: Window, part: u32) -> Self {
        ActivityAccumulator {
            window,
            part,
            next: 0,
            seen: HashMap::new(),
        }
    }

    pub fn push(&mut self, record: &CommitRecord) {
        let ordinal = Ordinal {
            part: self.part,
            index: self.next,
        };
        self.next += 1;
        if !self.window.contains(record.committed_at) {
            return;
        }
        let candidate = Seen {
            ordinal,
            email: normalize_email(&record.author_email),
            at: record.committed_at,
        };
        if candidate.email.is_empty() {
            return;
        }
        self.seen
            .entry(record.sha.to_ascii_lowercase())
            .and_modify(|s| {
                if candidate.ordinal < s.ordinal {
                    *s = candidate.clone();
                }
            })
            .or_insert(candidate);
    }

    pub fn extend<'a>(&mut self, records: impl IntoIterator<Item = &'a CommitRecord>) {
        for r in records {
            self.push(r);
        }
    }

    pub fn merge(mut self, other: ActivityAccumulator) -> ActivityAccumulator {
        let (mut big, small) = if self.seen.len() >= other.seen.len() {
            (std::mem::take(&mut self.seen), other.seen)
        } else {
            (other.seen, std::mem::take(&mut self.seen))
        };
        for (sha, s) in small {
            match big.get_mut(&sha) {
                Some(existing) if existing.ordinal <= s.ordinal => {}
                Some(existing) => *existing = s,
                None => {
                    big.insert(sha, s);
                }
            }
        }
        self.seen = big;
        self.part = self.part.min(other.part);
        self
    }

    pub fn distinct_shas(&self) -> usize {
        self.seen.len()
    }

    pub fn finish(self, mode: SampleMode) -> BTreeMap<String, EmailActivity> {
        let mut by_email: HashMap<String, Vec<(Ordinal, String, DateTime<Utc>)>> = HashMap::new();
        for (sha, s) in self.seen {
            by_email.entry(s.email).or_default().push((s.ordinal, sha, s.at));
        }
        by_email
            .into_iter()
            .map(|(email, mut commits)| {
                commits.sort_by(|a, b| a.0.cmp(&b.0));
                let sample_shas = match mode {
                    SampleMode::FirstSeen => commits
                        .iter()
                        .take(SAMPLE_SIZE)
                        .map(|c| c.1.clone())
                        .collect(),
                    SampleMode::Seeded(seed) => {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stable_hash(&email));
                        let amount = commits.len().min(SAMPLE_SIZE);
                        rand::seq::index::sample(&mut rng, commits.len(), amount)
                            .into_iter()
                            .map(|i| commits[i].1.clone())
                            .collect()
                    }
                };
                let first_seen = commits.iter().map(|c| c.2).min();
                let last_seen = commits.iter().map(|c| c.2).max();
                let activity = EmailActivity {
                    email: email.clone(),
                    commit_count: commits.len() as u64,
                    sample_shas,
                    first_seen,
                    last_seen,
                };
                (email, activity)
            })
            .collect()
    }
}

/// FNV-1a; stable across platforms and toolchains, unlike `DefaultHasher`.
fn stable_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Counts distinct in-window shas per email. Duplicate shas are attributed to
/// their first occurrence.
pub fn accumulate_activity(
    records: &[CommitRecord],
    window: Window,
    mode: SampleMode,
) -> BTreeMap<String, EmailActivity> {
    let mut acc = ActivityAccumulator::new(window);
    acc.extend(records);
    acc.finish(mode)
}

/// Keeps exactly the emails with `commit_count >= threshold`.
pub fn filter_active(
    activity: BTreeMap<String, EmailActivity>,
    threshold: u64,
) -> BTreeMap<String, EmailActivity> {
    activity
        .into_iter()
        .filter(|(_, a)| a.commit_count >= threshold)
        .collect()
}

pub const ACTIVITY_HEADER: [&str; 3] = ["email", "commit_count", "sample_shas"];

pub fn write_activity_csv<'a, W: Write>(
    out: W,
    path: &Path,
    activity: impl IntoIterator<Item = &'a EmailActivity>,
) -> Result<()> {
    let rows = activity.into_iter().map(|a| {
        vec![
            a.email.clone(),
            a.commit_count.to_string(),
            a.sample_shas.join(";"),
        ]
    });
    write_csv(out, path, &ACTIVITY_HEADER, rows)
}

pub fn read_activity_csv(path: &Path) -> Result<BTreeMap<String, EmailActivity>> {
    let table = CsvTable::read(path)?;
    let email_col = table.column("email")?;
    let count_col = table.column("commit_count")?;
    let shas_col = table.column("sample_shas")?;
    let mut out = BTreeMap::new();
    for (i, rec) in table.records.iter().enumerate() {
        let email = normalize_email(&rec[email_col]);
        if email.is_empty() {
            return Err(table.bad(i, "empty email"));
        }
        let sample_shas: Vec<String> = split_list(&rec[shas_col]).map(str::to_string).collect();
        if sample_shas.len() > SAMPLE_SIZE {
            return Err(table.bad(i, format!("more than {SAMPLE_SIZE} sample shas")));
        }
        let activity = EmailActivity {
            email: email.clone(),
            commit_count: table.parse(i, count_col)?,
            sample_shas,
            first_seen: None,
            last_seen: None,
        };
        if out.insert(email.clone(), activity).is_some() {
            return Err(table.bad(i, format!("duplicate email {email}")));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn at(y: i32, m: u32, d: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(y, m, d, 12, 0, 0).unwrap()
    }

    fn sha(n: u64) -> String {
        format!("{n:040x}")
    }

    fn rec(n: u64, email: &str, when: DateTime<Utc>) -> CommitRecord {
        CommitRecord {
            sha: sha(n),
            author_email: email.to_string(),
            author_name: String::new(),
            repo_id: "r".into(),
            committed_at: when,
        }
    }

    fn activity(email: &str, count: u64) -> EmailActivity {
        EmailActivity {
            email: email.into(),
            commit_count: count,
            sample_shas: vec![],
            first_seen: None,
            last_seen: None,
        }
    }

    #[test]
    fn duplicate_sha_counts_once() {
        let recs = vec![rec(1, "a@x.org", at(2019, 5, 1)), rec(1, "a@x.org", at(2019, 6, 1))];
        let act = accumulate_activity(&recs, Window::study_period(), SampleMode::FirstSeen);
        assert_eq!(act["a@x.org"].commit_count, 1);
        assert_eq!(act["a@x.org"].first_seen, Some(at(2019, 5, 1)));
    }

    #[test]
    fn window_bounds() {
        let w = Window::study_period();
        let recs = vec![
            rec(1, "a@x.org", Utc.with_ymd_and_hms(2019, 1, 1, 0, 0, 0).unwrap()),
            rec(2, "a@x.org", Utc.with_ymd_and_hms(2020, 12, 31, 23, 59, 59).unwrap()),
            rec(3, "a@x.org", Utc.with_ymd_and_hms(2021, 1, 1, 0, 0, 0).unwrap()),
            rec(4, "a@x.org", Utc.with_ymd_and_hms(2018, 12, 31, 23, 59, 59).unwrap()),
        ];
        let act = accumulate_activity(&recs, w, SampleMode::FirstSeen);
        assert_eq!(act["a@x.org"].commit_count, 2);
    }

    #[test]
    fn planted_150_with_30_outside() {
        let mut recs = Vec::new();
        for i in 0..150u64 {
            let when = if i % 5 == 0 { at(2018, 3, 1) } else { at(2020, 3, 1) };
            recs.push(rec(i, "Dev@Example.ORG", when));
        }
        let act = accumulate_activity(&recs, Window::study_period(), SampleMode::FirstSeen);
        let a = &act["dev@example.org"];
        assert_eq!(a.commit_count, 120);
        assert_eq!(a.sample_shas, vec![sha(1), sha(2), sha(3), sha(4)]);
    }

    #[test]
    fn first_occurrence_wins_across_emails() {
        let recs = vec![rec(1, "a@x.org", at(2019, 5, 1)), rec(1, "b@x.org", at(2019, 5, 2))];
        let act = accumulate_activity(&recs, Window::study_period(), SampleMode::FirstSeen);
        assert_eq!(act.len(), 1);
        assert!(act.contains_key("a@x.org"));
    }

    #[test]
    fn seeded_sample_is_reproducible_and_distinct() {
        let recs: Vec<_> = (0..40).map(|i| rec(i, "a@x.org", at(2019, 5, 1))).collect();
        let a = accumulate_activity(&recs, Window::study_period(), SampleMode::Seeded(7));
        let b = accumulate_activity(&recs, Window::study_period(), SampleMode::Seeded(7));
        assert_eq!(a, b);
        let mut shas = a["a@x.org"].sample_shas.clone();
        assert_eq!(shas.len(), SAMPLE_SIZE);
        shas.sort();
        shas.dedup();
        assert_eq!(shas.len(), SAMPLE_SIZE);
    }

    #[test]
    fn threshold_boundary() {
        let m: BTreeMap<_, _> = [("a", 100), ("b", 99)]
            .into_iter()
            .map(|(e, c)| (e.to_string(), activity(e, c)))
            .collect();
        let kept = filter_active(m, DEFAULT_THRESHOLD);
        assert_eq!(kept.keys().collect::<Vec<_>>(), vec!["a"]);
        assert!(filter_active(BTreeMap::new(), 100).is_empty());
    }

    #[test]
    fn csv_round_trip() {
        let mut a = activity("a@x.org", 120);
        a.sample_shas = vec![sha(1), sha(2)];
        let mut buf = Vec::new();
        write_activity_csv(&mut buf, Path::new("mem"), [&a]).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            format!("email,commit_count,sample_shas\na@x.org,120,{};{}\n", sha(1), sha(2))
        );
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("act.csv");
        std::fs::write(&p, buf).unwrap();
        assert_eq!(read_activity_csv(&p).unwrap()["a@x.org"], a);
    }

    fn arb_records() -> impl Strategy<Value = Vec<CommitRecord>> {
        prop::collection::vec((0u64..30, 0usize..4, 0i64..4), 0..80).prop_map(|v| {
            let emails = ["a@x.org", "b@x.org", "c@x.org", "D@X.org"];
            v.into_iter()
                .map(|(s, e, y)| rec(s, emails[e], at(2018 + y as i32, 6, 1)))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn counts_conserve_distinct_in_window_shas(recs in arb_records()) {
            let w = Window::study_period();
            let act = accumulate_activity(&recs, w, SampleMode::FirstSeen);
            let mut first: BTreeMap<String, String> = BTreeMap::new();
            for r in recs.iter().filter(|r| w.contains(r.committed_at)) {
                first.entry(r.sha.clone()).or_insert_with(|| r.author_email.to_lowercase());
            }
            for (email, a) in &act {
                let expected = first.values().filter(|e| *e == email).count() as u64;
                prop_assert_eq!(a.commit_count, expected);
                prop_assert!(a.sample_shas.len() <= SAMPLE_SIZE);
                prop_assert!(a.sample_shas.iter().all(|s| first.get(s) == Some(email)));
            }
            prop_assert_eq!(act.values().map(|a| a.commit_count).sum::<u64>(), first.len() as u64);
        }

        #[test]
        fn merge_order_independent(recs in arb_records(), split in 0usize..80) {
            let w = Window::study_period();
            let split = split.min(recs.len());
            let (left, right) = recs.split_at(split);
            let mut a = ActivityAccumulator::for_part(w, 0);
            a.extend(left);
            let mut b = ActivityAccumulator::for_part(w, 1);
            b.extend(right);
            let ab = a.clone().merge(b.clone()).finish(SampleMode::FirstSeen);
            let ba = b.merge(a).finish(SampleMode::FirstSeen);
            prop_assert_eq!(&ab, &ba);
            let sequential = accumulate_activity(&recs, w, SampleMode::FirstSeen);
            prop_assert_eq!(ab, sequential);
        }

        #[test]
        fn filter_monotone(counts in prop::collection::vec(0u64..300, 0..30), t1 in 1u64..300, t2 in 1u64..300) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let m: BTreeMap<_, _> = counts.iter().enumerate()
                .map(|(i, &c)| (format!("e{i}"), activity(&format!("e{i}"), c))).collect();
            let big = filter_active(m.clone(), lo);
            let small = filter_active(m, hi);
            prop_assert!(small.keys().all(|k| big.contains_key(k)));
        }
    }
}
