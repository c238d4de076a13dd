//! Commit email to account resolution.
//!
//! For each active email a provider is asked which account authored one of
//! its sampled commits. The first sha is tried, then up to three more; the
//! first answer wins. Emails resolving to the same login are merged into one
//! account.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, ProviderError, Result};
use crate::ingest::{normalize_email, EmailActivity, SAMPLE_SIZE};
use crate::table::{split_list, write_csv, CsvTable};

pub const MAX_ATTEMPTS: u32 = SAMPLE_SIZE as u32;

/// Commit-to-account lookup. Implementations must answer the same
/// `(sha, email)` pair identically within a run and be safe to call from
/// several threads.
pub trait ResolverProvider: Sync {
    fn resolve(&self, sha: &str, email: &str) -> Result<Option<String>, ProviderError>;
}

/// Offline provider backed by a `sha,login` table.
#[derive(Debug, Clone, Default)]
pub struct FixtureResolver {
    by_sha: HashMap<String, String>,
}

impl FixtureResolver {
    pub fn from_pairs<I, S, L>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, L)>,
        S: Into<String>,
        L: Into<String>,
    {
        FixtureResolver {
            by_sha: pairs
                .into_iter()
                .map(|(s, l)| (s.into().to_ascii_lowercase(), l.into()))
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let table = CsvTable::read(path)?;
        let sha = table.column("sha")?;
        let login = table.column("login")?;
        let mut by_sha = HashMap::with_capacity(table.records.len());
        for (i, rec) in table.records.iter().enumerate() {
            if rec[login].is_empty() {
                return Err(table.bad(i, "empty login"));
            }
            by_sha.insert(rec[sha].to_ascii_lowercase(), rec[login].to_string());
        }
        Ok(FixtureResolver { by_sha })
    }

    pub fn len(&self) -> usize {
        self.by_sha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_sha.is_empty()
    }
}

impl ResolverProvider for FixtureResolver {
    fn resolve(&self, sha: &str, _email: &str) -> Result<Option<String>, ProviderError> {
        Ok(self.by_sha.get(&sha.to_ascii_lowercase()).cloned())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resolution {
    Resolved { login: String, attempts: u32 },
    Unresolved { attempts: u32 },
}

impl Resolution {
    pub fn attempts(&self) -> u32 {
        match self {
            Resolution::Resolved { attempts, .. } | Resolution::Unresolved { attempts } => *attempts,
        }
    }

    pub fn login(&self) -> Option<&str> {
        match self {
            Resolution::Resolved { login, .. } => Some(login),
            Resolution::Unresolved { .. } => None,
        }
    }
}

/// Tries `sample_shas` in order, at most `min(max_attempts, 4)` of them.
/// A provider error consumes the attempt and is logged.
pub fn resolve_email(
    activity: &EmailActivity,
    provider: &dyn ResolverProvider,
    max_attempts: u32,
) -> Resolution {
    let limit = max_attempts.min(MAX_ATTEMPTS) as usize;
    let mut attempts = 0;
    for sha in activity.sample_shas.iter().take(limit) {
        attempts += 1;
        match provider.resolve(sha, &activity.email) {
            Ok(Some(login)) if !login.is_empty() => {
                return Resolution::Resolved { login, attempts };
            }
            Ok(_) => {}
            Err(e) => log::warn!("resolving {} via {sha}: {e}", activity.email),
        }
    }
    Resolution::Unresolved { attempts }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedEmail {
    pub activity: EmailActivity,
    pub resolution: Resolution,
}

/// Previously resolved `email → (login, attempts)` pairs, persisted as
/// `email,login,attempts`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ResolutionCache {
    entries: BTreeMap<String, (String, u32)>,
}

pub const CACHE_HEADER: [&str; 3] = ["email", "login", "attempts"];

impl ResolutionCache {
    pub fn load(path: &Path) -> Result<Self> {
        let table = CsvTable::read(path)?;
        let email = table.column("email")?;
        let login = table.column("login")?;
        let attempts = table.column("attempts")?;
        let mut entries = BTreeMap::new();
        for (i, rec) in table.records.iter().enumerate() {
            let n: u32 = table.parse(i, attempts)?;
            if !(1..=MAX_ATTEMPTS).contains(&n) {
                return Err(table.bad(i, format!("attempts {n} outside 1..={MAX_ATTEMPTS}")));
            }
            if rec[login].is_empty() {
                continue;
            }
            entries.insert(normalize_email(&rec[email]), (rec[login].to_string(), n));
        }
        Ok(ResolutionCache { entries })
    }

    pub fn get(&self, email: &str) -> Option<Resolution> {
        self.entries
            .get(email)
            .map(|(login, attempts)| Resolution::Resolved {
                login: login.clone(),
                attempts: *attempts,
            })
    }

    pub fn record(&mut self, resolved: &ResolvedEmail) {
        if let Resolution::Resolved { login, attempts } = &resolved.resolution {
            self.entries
                .insert(resolved.activity.email.clone(), (login.clone(), *attempts));
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn write<W: Write>(&self, out: W, path: &Path) -> Result<()> {
        let rows = self
            .entries
            .iter()
            .map(|(e, (l, a))| vec![e.clone(), l.clone(), a.to_string()]);
        write_csv(out, path, &CACHE_HEADER, rows)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResolveOptions {
    pub max_attempts: u32,
    /// Upper bound on concurrent provider lookups.
    pub in_flight: usize,
}

impl Default for ResolveOptions {
    fn default() -> Self {
        ResolveOptions {
            max_attempts: MAX_ATTEMPTS,
            in_flight: 8,
        }
    }
}

/// Resolves every email, consulting `cache` first. Output order follows the
/// input order regardless of concurrency.
pub fn resolve_all(
    activities: &[EmailActivity],
    provider: &dyn ResolverProvider,
    cache: Option<&ResolutionCache>,
    opts: ResolveOptions,
) -> Result<Vec<ResolvedEmail>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.in_flight.max(1))
        .build()
        .map_err(|e| Error::validation(format!("cannot build resolver pool: {e}")))?;
    Ok(pool.install(|| {
        activities
            .par_iter()
            .map(|a| {
                let resolution = cache
                    .and_then(|c| c.get(&a.email))
                    .unwrap_or_else(|| resolve_email(a, provider, opts.max_attempts));
                ResolvedEmail {
                    activity: a.clone(),
                    resolution,
                }
            })
            .collect()
    }))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccountResolution {
    pub login: String,
    pub emails: BTreeSet<String>,
    pub total_commits: u64,
    pub attempts_used: BTreeMap<String, u32>,
}

/// Login patterns excluded from geolocation, e.g. bot accounts. A pattern may
/// start and/or end with `*`; otherwise it must match the whole login.
/// Matching is case-insensitive.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoginBlocklist {
    patterns: Vec<String>,
}

impl LoginBlocklist {
    pub fn new<I: IntoIterator<Item = S>, S: AsRef<str>>(patterns: I) -> Self {
        LoginBlocklist {
            patterns: patterns
                .into_iter()
                .map(|p| p.as_ref().trim().to_lowercase())
                .filter(|p| !p.is_empty())
                .collect(),
        }
    }

    pub fn is_blocked(&self, login: &str) -> bool {
        let login = login.to_lowercase();
        self.patterns.iter().any(|p| {
            let lead = p.starts_with('*');
            let trail = p.len() > 1 && p.ends_with('*');
            let core = p.trim_matches('*');
            match (lead, trail) {
                (true, true) => login.contains(core),
                (true, false) => login.ends_with(core),
                (false, true) => login.starts_with(core),
                (false, false) => login == core,
            }
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdentityMerge {
    pub accounts: BTreeMap<String, AccountResolution>,
    /// Unresolved email → its commit count.
    pub unresolved: BTreeMap<String, u64>,
    /// Accounts matched by the login blocklist; excluded from geolocation.
    pub blocked: BTreeMap<String, AccountResolution>,
}

impl IdentityMerge {
    pub fn resolved_commits(&self) -> u64 {
        self.accounts
            .values()
            .chain(self.blocked.values())
            .map(|a| a.total_commits)
            .sum()
    }

    pub fn unresolved_commits(&self) -> u64 {
        self.unresolved.values().sum()
    }
}

/// Merges resolved emails by login. An email seen more than once is counted
/// once, so merging is idempotent and independent of input order.
pub fn merge_identities<'a, I>(resolved: I, blocklist: &LoginBlocklist) -> IdentityMerge
where
    I: IntoIterator<Item = &'a ResolvedEmail>,
{
    let mut merge = IdentityMerge::default();
    for r in resolved {
        let email = &r.activity.email;
        match &r.resolution {
            Resolution::Resolved { login, attempts } => {
                let target = if blocklist.is_blocked(login) {
                    &mut merge.blocked
                } else {
                    &mut merge.accounts
                };
                let account = target
                    .entry(login.clone())
                    .or_insert_with(|| AccountResolution {
                        login: login.clone(),
                        emails: BTreeSet::new(),
                        total_commits: 0,
                        attempts_used: BTreeMap::new(),
                    });
                if account.emails.insert(email.clone()) {
                    account.total_commits += r.activity.commit_count;
                    account.attempts_used.insert(email.clone(), *attempts);
                }
            }
            Resolution::Unresolved { .. } => {
                merge
                    .unresolved
                    .entry(email.clone())
                    .or_insert(r.activity.commit_count);
            }
        }
    }
    merge
}

pub const ACCOUNTS_HEADER: [&str; 3] = ["login", "emails", "total_commits"];

pub fn write_accounts_csv<'a, W: Write>(
    out: W,
    path: &Path,
    accounts: impl IntoIterator<Item = &'a AccountResolution>,
) -> Result<()> {
    let rows = accounts.into_iter().map(|a| {
        vec![
            a.login.clone(),
            a.emails.iter().cloned().collect::<Vec<_>>().join(";"),
            a.total_commits.to_string(),
        ]
    });
    write_csv(out, path, &ACCOUNTS_HEADER, rows)
}

/// Reads an accounts table. `attempts_used` is not persisted there and
/// comes back empty.
pub fn read_accounts_csv(path: &Path) -> Result<BTreeMap<String, AccountResolution>> {
    let table = CsvTable::read(path)?;
    let login = table.column("login")?;
    let emails = table.column("emails")?;
    let total = table.column("total_commits")?;
    let mut out = BTreeMap::new();
    for (i, rec) in table.records.iter().enumerate() {
        let account = AccountResolution {
            login: rec[login].to_string(),
            emails: split_list(&rec[emails]).map(normalize_email).collect(),
            total_commits: table.parse(i, total)?,
            attempts_used: BTreeMap::new(),
        };
        if account.emails.is_empty() {
            return Err(table.bad(i, "account without emails"));
        }
        if out.insert(account.login.clone(), account).is_some() {
            return Err(table.bad(i, "duplicate login"));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn act(email: &str, count: u64, shas: &[&str]) -> EmailActivity {
        EmailActivity {
            email: email.into(),
            commit_count: count,
            sample_shas: shas.iter().map(|s| s.to_string()).collect(),
            first_seen: None,
            last_seen: None,
        }
    }

    struct Flaky {
        calls: AtomicUsize,
        answer_on: usize,
    }

    impl ResolverProvider for Flaky {
        fn resolve(&self, _sha: &str, _email: &str) -> Result<Option<String>, ProviderError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
            if n == self.answer_on {
                Ok(Some("octo".into()))
            } else if n % 2 == 0 {
                Err(ProviderError("timeout".into()))
            } else {
                Ok(None)
            }
        }
    }

    #[test]
    fn first_sha_hit() {
        let p = FixtureResolver::from_pairs([("s1", "octo")]);
        let r = resolve_email(&act("a@x", 100, &["s1", "s2"]), &p, 4);
        assert_eq!(r, Resolution::Resolved { login: "octo".into(), attempts: 1 });
    }

    #[test]
    fn fourth_sha_hit() {
        let p = FixtureResolver::from_pairs([("s4", "octo")]);
        let r = resolve_email(&act("a@x", 100, &["s1", "s2", "s3", "s4"]), &p, 4);
        assert_eq!(r, Resolution::Resolved { login: "octo".into(), attempts: 4 });
    }

    #[test]
    fn exhaustion() {
        let p = FixtureResolver::default();
        assert_eq!(
            resolve_email(&act("a@x", 100, &["s1", "s2"]), &p, 4),
            Resolution::Unresolved { attempts: 2 }
        );
        assert_eq!(
            resolve_email(&act("a@x", 100, &["s1", "s2", "s3", "s4"]), &p, 4),
            Resolution::Unresolved { attempts: 4 }
        );
        assert_eq!(
            resolve_email(&act("a@x", 100, &[]), &p, 4),
            Resolution::Unresolved { attempts: 0 }
        );
    }

    #[test]
    fn transport_errors_consume_attempts() {
        let p = Flaky { calls: AtomicUsize::new(0), answer_on: 3 };
        let r = resolve_email(&act("a@x", 100, &["s1", "s2", "s3", "s4"]), &p, 4);
        assert_eq!(r, Resolution::Resolved { login: "octo".into(), attempts: 3 });
        let p = Flaky { calls: AtomicUsize::new(0), answer_on: 99 };
        let r = resolve_email(&act("a@x", 100, &["s1", "s2", "s3", "s4"]), &p, 4);
        assert_eq!(r, Resolution::Unresolved { attempts: 4 });
        assert_eq!(p.calls.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn max_attempts_flag_caps() {
        let p = FixtureResolver::from_pairs([("s3", "octo")]);
        let r = resolve_email(&act("a@x", 100, &["s1", "s2", "s3"]), &p, 2);
        assert_eq!(r, Resolution::Unresolved { attempts: 2 });
        let r = resolve_email(&act("a@x", 100, &["s1", "s2", "s3"]), &p, 10);
        assert_eq!(r.attempts(), 3);
    }

    fn resolved(email: &str, count: u64, login: Option<&str>) -> ResolvedEmail {
        ResolvedEmail {
            activity: act(email, count, &["s"]),
            resolution: match login {
                Some(l) => Resolution::Resolved { login: l.into(), attempts: 1 },
                None => Resolution::Unresolved { attempts: 1 },
            },
        }
    }

    #[test]
    fn two_emails_one_login() {
        let input = [resolved("a@x", 100, Some("octo")), resolved("b@y", 150, Some("octo"))];
        let m = merge_identities(&input, &LoginBlocklist::default());
        assert_eq!(m.accounts.len(), 1);
        let a = &m.accounts["octo"];
        assert_eq!(a.total_commits, 250);
        assert_eq!(a.emails.len(), 2);
    }

    #[test]
    fn five_emails_three_logins() {
        let input = [
            resolved("a@x", 101, Some("alice")),
            resolved("a2@x", 140, Some("alice")),
            resolved("b@x", 230, Some("bob")),
            resolved("c@x", 100, Some("carol")),
            resolved("c2@x", 999, Some("carol")),
            resolved("u@x", 120, None),
        ];
        let m = merge_identities(&input, &LoginBlocklist::default());
        let totals: Vec<_> = m.accounts.values().map(|a| (a.login.as_str(), a.total_commits)).collect();
        assert_eq!(totals, vec![("alice", 241), ("bob", 230), ("carol", 1099)]);
        assert_eq!(m.unresolved.get("u@x"), Some(&120));
    }

    #[test]
    fn blocklist_patterns() {
        let b = LoginBlocklist::new(["*[bot]", "renovate*", "exact"]);
        assert!(b.is_blocked("dependabot[bot]"));
        assert!(b.is_blocked("Renovate-Helper"));
        assert!(b.is_blocked("exact"));
        assert!(!b.is_blocked("exactly"));
        assert!(!LoginBlocklist::default().is_blocked("anyone"));
        let input = [resolved("a@x", 100, Some("ci[bot]"))];
        let m = merge_identities(&input, &b);
        assert!(m.accounts.is_empty());
        assert_eq!(m.blocked["ci[bot]"].total_commits, 100);
    }

    #[test]
    fn cache_skips_provider() {
        let mut cache = ResolutionCache::default();
        cache.record(&resolved("a@x", 100, Some("octo")));
        cache.record(&resolved("b@x", 100, None));
        assert_eq!(cache.len(), 1);
        let p = Flaky { calls: AtomicUsize::new(0), answer_on: 99 };
        let out = resolve_all(
            &[act("a@x", 100, &["s1"]), act("b@x", 100, &["s2"])],
            &p,
            Some(&cache),
            ResolveOptions::default(),
        )
        .unwrap();
        assert_eq!(out[0].resolution.login(), Some("octo"));
        assert_eq!(p.calls.load(Ordering::SeqCst), 1);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.csv");
        cache.write(std::fs::File::create(&path).unwrap(), &path).unwrap();
        assert_eq!(ResolutionCache::load(&path).unwrap(), cache);
    }

    #[test]
    fn fixture_csv_requires_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        std::fs::write(&path, "sha,user\nabc,octo\n").unwrap();
        let err = FixtureResolver::load(&path).unwrap_err();
        assert!(err.to_string().contains("`login`"), "{err}");
        assert!(err.is_validation());
    }

    fn arb_resolved() -> impl Strategy<Value = Vec<ResolvedEmail>> {
        prop::collection::vec((0usize..12, 100u64..500, prop::option::of(0usize..4)), 0..20).prop_map(|v| {
            // Each email gets a single fixed (count, login) so duplicates agree.
            let mut seen = BTreeMap::new();
            v.into_iter()
                .map(|(e, c, l)| {
                    let (c, l) = *seen.entry(e).or_insert((c, l));
                    let login = l.map(|i| format!("user{i}"));
                    resolved(&format!("e{e}@x"), c, login.as_deref())
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn merge_conserves_and_is_order_free(input in arb_resolved(), rot in 0usize..20) {
            let none = LoginBlocklist::default();
            let m = merge_identities(&input, &none);
            let mut distinct = BTreeMap::new();
            for r in &input {
                distinct.entry(r.activity.email.clone()).or_insert(r.activity.commit_count);
            }
            prop_assert_eq!(m.resolved_commits() + m.unresolved_commits(), distinct.values().sum::<u64>());

            let mut rotated = input.clone();
            if !rotated.is_empty() {
                let k = rot % rotated.len();
                rotated.rotate_left(k);
            }
            prop_assert_eq!(&merge_identities(&rotated, &none), &m);

            let doubled: Vec<_> = input.iter().chain(input.iter()).cloned().collect();
            prop_assert_eq!(&merge_identities(&doubled, &none), &m);
            for a in m.accounts.values() {
                prop_assert!(a.attempts_used.values().all(|&n| n <= MAX_ATTEMPTS));
            }
        }
    }
}
