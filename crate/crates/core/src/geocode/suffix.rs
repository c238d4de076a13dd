use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use crate::error::Result;
use crate::table::CsvTable;

use super::{GeoResult, GeoSource, Precision};

const BUNDLED_CCTLD: &str = include_str!("../../data/cctld.csv");
const BUNDLED_UNIVERSITIES: &str = include_str!("../../data/universities.csv");

/// Top-level domains never mapped to a country, whatever the tables say.
pub const GENERIC_SUFFIXES: &[&str] = &[
    "com", "org", "net", "io", "dev", "edu", "gov", "mil", "int", "info", "biz", "app", "xyz",
    "tech", "name", "pro", "cloud", "site", "online",
];

pub const DEFAULT_BLOCKLIST: &[&str] = &["me"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct University {
    pub name: String,
    pub country: String,
}

/// Email-domain lookup tables. Keys are lowercase and carry no leading dot.
#[derive(Debug, Clone, Default)]
pub struct SuffixTables {
    cctld: HashMap<String, String>,
    universities: HashMap<String, University>,
    blocklist: HashSet<String>,
}

fn normalize_suffix(s: &str) -> String {
    s.trim().trim_start_matches('.').to_lowercase()
}

impl SuffixTables {
    pub fn new() -> Self {
        Self::default()
    }

    /// Bundled ccTLD and university tables with the default `.me` blocklist.
    pub fn bundled() -> Self {
        let cctld = CsvTable::from_reader(BUNDLED_CCTLD.as_bytes(), Path::new("<bundled cctld>"))
            .expect("bundled ccTLD table is valid CSV");
        let unis = CsvTable::from_reader(
            BUNDLED_UNIVERSITIES.as_bytes(),
            Path::new("<bundled universities>"),
        )
        .expect("bundled university table is valid CSV");
        let mut t = SuffixTables::new();
        t.add_cctld_table(&cctld).expect("bundled ccTLD table");
        t.add_university_table(&unis).expect("bundled university table");
        t.set_blocklist(DEFAULT_BLOCKLIST.iter().copied());
        t
    }

    /// Loads `suffix,country` and `domain,name,country` tables. The blocklist
    /// starts out as the default.
    pub fn load(cctld: Option<&Path>, universities: Option<&Path>) -> Result<Self> {
        let mut t = SuffixTables::new();
        if let Some(p) = cctld {
            t.add_cctld_table(&CsvTable::read(p)?)?;
        }
        if let Some(p) = universities {
            t.add_university_table(&CsvTable::read(p)?)?;
        }
        t.set_blocklist(DEFAULT_BLOCKLIST.iter().copied());
        Ok(t)
    }

    fn add_cctld_table(&mut self, table: &CsvTable) -> Result<()> {
        let suffix = table.column("suffix")?;
        let country = table.column("country")?;
        for (i, rec) in table.records.iter().enumerate() {
            let s = normalize_suffix(&rec[suffix]);
            if s.is_empty() {
                return Err(table.bad(i, "empty suffix"));
            }
            self.insert_cctld(&s, &rec[country]);
        }
        Ok(())
    }

    fn add_university_table(&mut self, table: &CsvTable) -> Result<()> {
        let domain = table.column("domain")?;
        let name = table.column("name")?;
        let country = table.column("country")?;
        for (i, rec) in table.records.iter().enumerate() {
            let d = normalize_suffix(&rec[domain]);
            if d.is_empty() {
                return Err(table.bad(i, "empty domain"));
            }
            self.insert_university(&d, &rec[name], &rec[country]);
        }
        Ok(())
    }

    pub fn insert_cctld(&mut self, suffix: &str, country: &str) {
        let s = normalize_suffix(suffix);
        if GENERIC_SUFFIXES.contains(&s.as_str()) {
            log::debug!("ignoring generic suffix .{s} in ccTLD table");
            return;
        }
        self.cctld.insert(s, country.trim().to_ascii_uppercase());
    }

    pub fn insert_university(&mut self, domain: &str, name: &str, country: &str) {
        self.universities.insert(
            normalize_suffix(domain),
            University {
                name: name.to_string(),
                country: country.trim().to_ascii_uppercase(),
            },
        );
    }

    pub fn set_blocklist<I: IntoIterator<Item = S>, S: AsRef<str>>(&mut self, suffixes: I) {
        self.blocklist = suffixes
            .into_iter()
            .map(|s| normalize_suffix(s.as_ref()))
            .filter(|s| !s.is_empty())
            .collect();
    }

    pub fn blocklist(&self) -> BTreeSet<&str> {
        self.blocklist.iter().map(String::as_str).collect()
    }

    fn university(&self, domain: &str) -> Option<&University> {
        suffixes_of(domain).find_map(|s| self.universities.get(s))
    }

    fn country_domain(&self, domain: &str) -> Option<(&str, bool)> {
        let tld = domain.rsplit('.').next()?;
        if GENERIC_SUFFIXES.contains(&tld) {
            return None;
        }
        let (suffix, country) = suffixes_of(domain).find_map(|s| self.cctld.get(s).map(|c| (s, c)))?;
        let blocked = suffixes_of(suffix).any(|s| self.blocklist.contains(s));
        Some((country.as_str(), blocked))
    }

    /// Country suggested by one email address and whether it is reliable.
    pub fn infer_email(&self, email: &str) -> Option<(String, bool)> {
        let domain = email.rsplit_once('@')?.1.trim().trim_end_matches('.').to_lowercase();
        if domain.is_empty() {
            return None;
        }
        if let Some(u) = self.university(&domain) {
            return Some((u.country.clone(), true));
        }
        self.country_domain(&domain)
            .map(|(c, blocked)| (c.to_string(), !blocked))
    }
}

/// `a.b.c` → `a.b.c`, `b.c`, `c`.
fn suffixes_of(domain: &str) -> impl Iterator<Item = &str> {
    std::iter::once(domain).chain(domain.match_indices('.').map(move |(i, _)| &domain[i + 1..]))
}

/// Country from the account's commit email domains. University domains are
/// consulted before country-code domains. Emails pointing to different
/// countries make the account ambiguous (`None`). Inferences through a
/// blocklisted suffix are only used when nothing reliable exists, and then
/// come back flagged unreliable.
pub fn infer_from_suffix<'a, I>(emails: I, tables: &SuffixTables) -> Option<GeoResult>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut reliable = BTreeSet::new();
    let mut unreliable = BTreeSet::new();
    for email in emails {
        match tables.infer_email(email) {
            Some((c, true)) => {
                reliable.insert(c);
            }
            Some((c, false)) => {
                unreliable.insert(c);
            }
            None => {}
        }
    }
    let (candidates, flagged) = if reliable.is_empty() {
        (unreliable, true)
    } else {
        (reliable, false)
    };
    if candidates.len() != 1 {
        return None;
    }
    Some(GeoResult {
        country: candidates.into_iter().next().unwrap(),
        subdivision: None,
        coords: None,
        precision: Precision::Country,
        source: GeoSource::EmailSuffix,
        unreliable: flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tables() -> SuffixTables {
        let mut t = SuffixTables::new();
        t.insert_cctld("it", "IT");
        t.insert_cctld(".jp", "JP");
        t.insert_cctld("me", "ME");
        t.insert_cctld("fi", "FI");
        t.insert_cctld("com", "US");
        t.insert_university("u-tokyo.ac.jp", "University of Tokyo", "JP");
        t.insert_university("stanford.edu", "Stanford", "US");
        t.set_blocklist([".me"]);
        t
    }

    fn infer(emails: &[&str]) -> Option<GeoResult> {
        infer_from_suffix(emails.iter().copied(), &tables())
    }

    #[test]
    fn cctld_and_university() {
        let r = infer(&["mario@example.it"]).unwrap();
        assert_eq!(r.country, "IT");
        assert_eq!(r.precision, Precision::Country);
        assert_eq!(r.source, GeoSource::EmailSuffix);
        assert!(!r.unreliable);
        assert_eq!(infer(&["taro@is.s.u-tokyo.ac.jp"]).unwrap().country, "JP");
        assert_eq!(infer(&["x@cs.stanford.edu"]).unwrap().country, "US");
    }

    #[test]
    fn university_checked_before_cctld() {
        let mut t = tables();
        t.insert_university("uni.it", "Japanese campus in Italy", "JP");
        let r = infer_from_suffix(["a@uni.it"], &t).unwrap();
        assert_eq!(r.country, "JP");
    }

    #[test]
    fn conflicting_countries_are_ambiguous() {
        assert_eq!(infer(&["a@x.it", "b@y.jp"]), None);
        assert_eq!(infer(&["a@x.it", "b@y.it"]).unwrap().country, "IT");
    }

    #[test]
    fn generic_suffixes_never_map() {
        assert_eq!(infer(&["a@gmail.com"]), None);
        assert_eq!(infer(&["a@x.org", "b@y.io", "c@z.dev"]), None);
        assert_eq!(infer(&["a@gmail.com", "b@x.fi"]).unwrap().country, "FI");
        assert_eq!(infer(&["no-at-sign", "a@"]), None);
    }

    #[test]
    fn blocklisted_suffix_is_flagged() {
        let r = infer(&["a@dev.me"]).unwrap();
        assert_eq!(r.country, "ME");
        assert!(r.unreliable);
        let r = infer(&["a@dev.me", "b@x.it"]).unwrap();
        assert_eq!(r.country, "IT");
        assert!(!r.unreliable);
    }

    #[test]
    fn bundled_tables() {
        let t = SuffixTables::bundled();
        assert_eq!(t.infer_email("a@foo.co.uk"), Some(("GB".into(), true)));
        assert_eq!(t.infer_email("a@foo.de"), Some(("DE".into(), true)));
        assert_eq!(t.infer_email("a@foo.me"), Some(("ME".into(), false)));
        assert_eq!(t.infer_email("a@mit.edu"), Some(("US".into(), true)));
        assert_eq!(t.infer_email("a@foo.io"), None);
        assert_eq!(t.blocklist(), BTreeSet::from(["me"]));
    }
}
