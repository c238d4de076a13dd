//! Seeded synthetic fixture: event archives, provider tables, region
//! schemes and run configuration for a small planted world, plus the ground
//! truth every stage should recover from it.
//!
//! The world has 60 accounts whose locations are planted at known cascade
//! stages, five active emails no provider can resolve, sub-threshold
//! distractors, fork duplicates, out-of-window commits and a few malformed
//! lines. Everything except the planted structure (shas, commit volumes,
//! timestamps, line order) is drawn from the seed.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Duration, TimeZone, Utc};
use flate2::write::GzEncoder;
use flate2::Compression;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};

pub const DEFAULT_SEED: u64 = 2021;
pub const TOTAL_LINES: usize = 10_000;
pub const MALFORMED_LINES: usize = 3;
pub const NON_PUSH_EVENTS: usize = 200;
const OUT_OF_WINDOW_EVENTS: usize = 300;
const INVALID_ENTRIES: usize = 5;
const FORK_DUPLICATES: usize = 300;

/// Expected placement of a planted account.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Planted {
    /// Located by `source` in `country`; `nuts2` is the reporting region,
    /// or `None` for country-only precision.
    At {
        source: Stage,
        country: &'static str,
        nuts2: Option<&'static str>,
    },
    Unreliable,
    Unlocated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Profile,
    Microblog,
    Suffix,
}

impl Stage {
    fn name(self) -> &'static str {
        match self {
            Stage::Profile => "profile",
            Stage::Microblog => "microblog",
            Stage::Suffix => "email_suffix",
        }
    }
}

struct Scenario {
    login: &'static str,
    /// `None`: the account has no profile row at all.
    location: Option<&'static str>,
    handle: Option<(&'static str, &'static str)>,
    /// Email domains; one active email per entry.
    domains: &'static [&'static str],
    planted: Planted,
}

const fn at(source: Stage, country: &'static str, nuts2: Option<&'static str>) -> Planted {
    Planted::At { source, country, nuts2 }
}

use Stage::{Microblog as M, Profile as P, Suffix as S};

const SCENARIOS: &[Scenario] = &[
    // Profile strings with subnational detail.
    Scenario { login: "ada-westminster", location: Some("Westminster, London"), handle: None, domains: &["gmail.com", "parliament-dev.org"], planted: at(P, "GB", Some("UKI")) },
    Scenario { login: "towerhamlets", location: Some("Tower Hamlets"), handle: None, domains: &["gmail.com"], planted: at(P, "GB", Some("UKI")) },
    Scenario { login: "bexley-coder", location: Some("Bexley"), handle: None, domains: &["outlook.com"], planted: at(P, "GB", Some("UKI")) },
    Scenario { login: "croydon-hacker", location: Some("Croydon, UK"), handle: None, domains: &["gmail.com"], planted: at(P, "GB", Some("UKI")) },
    Scenario { login: "ealing-eng", location: Some("Ealing"), handle: None, domains: &["proton.me"], planted: at(P, "GB", Some("UKI")) },
    Scenario { login: "fen-runner", location: Some("Cambridge"), handle: None, domains: &["gmail.com"], planted: at(P, "GB", Some("UKH1")) },
    Scenario { login: "ouse-dev", location: Some("Cambridge, United Kingdom"), handle: None, domains: &["example.co.uk"], planted: at(P, "GB", Some("UKH1")) },
    Scenario { login: "rive-gauche", location: Some("Paris"), handle: None, domains: &["gmail.com", "free.fr"], planted: at(P, "FR", Some("FR10")) },
    Scenario { login: "marais", location: Some("París"), handle: None, domains: &["gmail.com"], planted: at(P, "FR", Some("FR10")) },
    Scenario { login: "belleville", location: Some("Paris, France"), handle: None, domains: &["hey.com"], planted: at(P, "FR", Some("FR10")) },
    Scenario { login: "montmartre", location: Some("paris"), handle: None, domains: &["gmail.com"], planted: at(P, "FR", Some("FR10")) },
    Scenario { login: "presquile", location: Some("Lyon"), handle: None, domains: &["gmail.com"], planted: at(P, "FR", Some("FRK2")) },
    Scenario { login: "croix-rousse", location: Some("Lyon, France"), handle: None, domains: &["orange.fr"], planted: at(P, "FR", Some("FRK2")) },
    Scenario { login: "spree", location: Some("Berlin"), handle: None, domains: &["gmail.com", "posteo.de"], planted: at(P, "DE", Some("DE30")) },
    Scenario { login: "kiez", location: Some("Berlin, Germany"), handle: None, domains: &["gmail.com"], planted: at(P, "DE", Some("DE30")) },
    Scenario { login: "mitte", location: Some("BERLIN"), handle: None, domains: &["web.de"], planted: at(P, "DE", Some("DE30")) },
    Scenario { login: "neukoelln", location: Some("Berlin / Deutschland"), handle: None, domains: &["gmail.com"], planted: at(P, "DE", Some("DE30")) },
    Scenario { login: "isar", location: Some("München"), handle: None, domains: &["gmail.com"], planted: at(P, "DE", Some("DE21")) },
    Scenario { login: "schwabing", location: Some("Munich"), handle: None, domains: &["gmx.de"], planted: at(P, "DE", Some("DE21")) },
    Scenario { login: "au-haidhausen", location: Some("Munich, Bavaria"), handle: None, domains: &["gmail.com"], planted: at(P, "DE", Some("DE21")) },
    Scenario { login: "donaukanal", location: Some("Wien"), handle: None, domains: &["gmail.com", "chello.at", "univie-alumni.org"], planted: at(P, "AT", Some("AT13")) },
    Scenario { login: "prater", location: Some("Vienna, Austria"), handle: None, domains: &["gmail.com"], planted: at(P, "AT", Some("AT13")) },
    Scenario { login: "naschmarkt", location: Some("vienna"), handle: None, domains: &["outlook.com"], planted: at(P, "AT", Some("AT13")) },
    Scenario { login: "kallio", location: Some("Helsinki"), handle: None, domains: &["gmail.com"], planted: at(P, "FI", Some("FI1B")) },
    Scenario { login: "toolo", location: Some("Helsingfors"), handle: None, domains: &["gmail.com"], planted: at(P, "FI", Some("FI1B")) },
    // Coordinates only; placed through the boundary polygons.
    Scenario { login: "otaniemi", location: Some("Espoo"), handle: None, domains: &["gmail.com"], planted: at(P, "FI", Some("FI1B")) },
    // Microblog location after a missing or unusable profile string.
    Scenario { login: "soho-tw", location: None, handle: Some(("soho_dev", "Westminster")), domains: &["gmail.com"], planted: at(M, "GB", Some("UKI")) },
    Scenario { login: "moonwalker", location: Some("the moon"), handle: Some(("moonwalker", "Ealing")), domains: &["gmail.com"], planted: at(M, "GB", Some("UKI")) },
    Scenario { login: "canal-st-martin", location: Some(""), handle: Some(("@CanalDev", "Paris")), domains: &["gmail.com", "laposte.net"], planted: at(M, "FR", Some("FR10")) },
    Scenario { login: "tempelhof", location: None, handle: Some(("tempelhof", "Berlin")), domains: &["gmail.com"], planted: at(M, "DE", Some("DE30")) },
    Scenario { login: "xberg", location: Some("Earth"), handle: Some(("xberg", "Kreuzberg, Berlin")), domains: &["gmail.com"], planted: at(M, "DE", Some("DE30")) },
    Scenario { login: "ringstrasse", location: None, handle: Some(("ring_str", "Wien")), domains: &["gmail.com"], planted: at(M, "AT", Some("AT13")) },
    Scenario { login: "kamppi", location: None, handle: Some(("kamppi", "Helsinki")), domains: &["gmail.com"], planted: at(M, "FI", Some("FI1B")) },
    Scenario { login: "englischer-garten", location: Some("localhost"), handle: Some(("eg_dev", "München")), domains: &["gmail.com"], planted: at(M, "DE", Some("DE21")) },
    // Country-level profile strings.
    Scenario { login: "hexagone", location: Some("France"), handle: None, domains: &["gmail.com"], planted: at(P, "FR", None) },
    Scenario { login: "bundes", location: Some("Germany"), handle: None, domains: &["gmail.com"], planted: at(P, "DE", None) },
    Scenario { login: "schwarzwald", location: Some("Deutschland"), handle: None, domains: &["gmail.com"], planted: at(P, "DE", None) },
    Scenario { login: "alpenland", location: Some("Österreich"), handle: None, domains: &["gmail.com"], planted: at(P, "AT", None) },
    // Email suffixes.
    Scenario { login: "sauna-ops", location: None, handle: None, domains: &["firma.fi"], planted: at(S, "FI", None) },
    Scenario { login: "sisu", location: Some("the moon"), handle: None, domains: &["gmail.com", "tietotalo.fi"], planted: at(S, "FI", None) },
    Scenario { login: "rhein", location: None, handle: None, domains: &["example.de"], planted: at(S, "DE", None) },
    Scenario { login: "x-ecole", location: None, handle: None, domains: &["polytechnique.edu"], planted: at(S, "FR", None) },
    Scenario { login: "hongo", location: None, handle: None, domains: &["is.s.u-tokyo.ac.jp"], planted: at(S, "JP", None) },
    Scenario { login: "thames", location: None, handle: None, domains: &["example.co.uk"], planted: at(S, "GB", None) },
    Scenario { login: "middle-earth", location: Some("the moon"), handle: Some(("tolkienfan", "Middle-earth")), domains: &["uni-wien.at"], planted: at(S, "AT", None) },
    // Countries outside the NUTS scheme.
    Scenario { login: "soma", location: Some("San Francisco"), handle: None, domains: &["gmail.com"], planted: at(P, "US", None) },
    Scenario { login: "mission", location: Some("San Francisco, CA"), handle: None, domains: &["gmail.com"], planted: at(P, "US", None) },
    Scenario { login: "brooklyn", location: Some("New York"), handle: None, domains: &["gmail.com"], planted: at(P, "US", None) },
    Scenario { login: "shibuya", location: Some("Tokyo"), handle: None, domains: &["gmail.com"], planted: at(P, "JP", None) },
    Scenario { login: "akihabara", location: Some("東京"), handle: None, domains: &["gmail.com"], planted: at(P, "JP", None) },
    Scenario { login: "paulista", location: Some("São Paulo"), handle: None, domains: &["gmail.com"], planted: at(P, "BR", None) },
    // Blocklisted suffix only.
    Scenario { login: "dotme", location: None, handle: None, domains: &["dev.me"], planted: Planted::Unreliable },
    Scenario { login: "hello-me", location: Some("the moon"), handle: None, domains: &["hello.me", "gmail.com"], planted: Planted::Unreliable },
    // Nothing usable.
    Scenario { login: "lunar", location: Some("the moon"), handle: None, domains: &["gmail.com"], planted: Planted::Unlocated },
    Scenario { login: "ghost", location: None, handle: None, domains: &["gmail.com"], planted: Planted::Unlocated },
    Scenario { login: "two-flags", location: None, handle: None, domains: &["example.it", "example.jp"], planted: Planted::Unlocated },
    Scenario { login: "loopback", location: None, handle: Some(("loopback", "localhost")), domains: &["outlook.com"], planted: Planted::Unlocated },
    // Earlier stages win over later ones.
    Scenario { login: "ku-damm", location: Some("Berlin"), handle: Some(("kudamm", "Paris")), domains: &["gmail.com"], planted: at(P, "DE", Some("DE30")) },
    Scenario { login: "fourviere", location: Some("Lyon"), handle: Some(("fourviere", "Helsinki")), domains: &["startup.fi"], planted: at(P, "FR", Some("FRK2")) },
    Scenario { login: "belvedere", location: Some(""), handle: Some(("belvedere", "Vienna")), domains: &["gmail.com"], planted: at(M, "AT", Some("AT13")) },
];

/// Logins without a profile row.
const NO_PROFILE: &[&str] = &["ghost"];

const GAZETTEER: &[(&str, &str, &str, &str, &str)] = &[
    ("Westminster", "GB", "GB-WSM", "51.4975", "-0.1357"),
    ("Tower Hamlets", "GB", "GB-TWH", "51.5099", "-0.0059"),
    ("Bexley", "GB", "GB-BEX", "51.4549", "0.1505"),
    ("Croydon", "GB", "GB-CRY", "51.3762", "-0.0982"),
    ("Ealing", "GB", "GB-EAL", "51.5130", "-0.3089"),
    ("Cambridge", "GB", "GB-CAM", "52.2053", "0.1218"),
    ("United Kingdom", "GB", "", "", ""),
    ("UK", "GB", "", "", ""),
    ("Paris", "FR", "FR-75", "48.8566", "2.3522"),
    ("París", "FR", "FR-75", "48.8566", "2.3522"),
    ("Lyon", "FR", "FR-69", "45.7640", "4.8357"),
    ("France", "FR", "", "", ""),
    ("Berlin", "DE", "DE-BE", "52.5200", "13.4050"),
    ("München", "DE", "DE-BY", "48.1351", "11.5820"),
    ("Munich", "DE", "DE-BY", "48.1351", "11.5820"),
    ("Bavaria", "DE", "DE-BY", "", ""),
    ("Germany", "DE", "", "", ""),
    ("Deutschland", "DE", "", "", ""),
    ("Wien", "AT", "AT-9", "48.2082", "16.3738"),
    ("Vienna", "AT", "AT-9", "48.2082", "16.3738"),
    ("Austria", "AT", "", "", ""),
    ("Österreich", "AT", "", "", ""),
    ("Helsinki", "FI", "FI-18", "60.1699", "24.9384"),
    ("Helsingfors", "FI", "FI-18", "60.1699", "24.9384"),
    ("Espoo", "FI", "", "60.2055", "24.6559"),
    ("San Francisco", "US", "US-CA", "37.7749", "-122.4194"),
    ("CA", "US", "US-CA", "", ""),
    ("New York", "US", "US-NY", "40.7128", "-74.0060"),
    ("Tokyo", "JP", "JP-13", "35.6762", "139.6503"),
    ("東京", "JP", "JP-13", "35.6762", "139.6503"),
    ("São Paulo", "BR", "BR-SP", "-23.5505", "-46.6333"),
];

const CCTLD: &[(&str, &str)] = &[
    ("at", "AT"), ("de", "DE"), ("fi", "FI"), ("fr", "FR"), ("it", "IT"),
    ("jp", "JP"), ("uk", "GB"), ("me", "ME"), ("us", "US"),
];

const UNIVERSITIES: &[(&str, &str, &str)] = &[
    ("u-tokyo.ac.jp", "The University of Tokyo", "JP"),
    ("polytechnique.edu", "Ecole Polytechnique", "FR"),
    ("aalto.fi", "Aalto University", "FI"),
];

/// Raw NUTS-style rows: id, name, country, population, subdivision codes.
const NUTS2: &[(&str, &str, &str, u64, &str)] = &[
    ("UKI3", "Inner London - West", "GB", 1_200_000, "GB-WSM"),
    ("UKI4", "Inner London - East", "GB", 1_900_000, "GB-TWH"),
    ("UKI5", "Outer London - East and North East", "GB", 1_800_000, "GB-BEX"),
    ("UKI6", "Outer London - South", "GB", 1_300_000, "GB-CRY"),
    ("UKI7", "Outer London - West and North West", "GB", 2_000_000, "GB-EAL"),
    ("UKH1", "East Anglia", "GB", 2_500_000, "GB-CAM"),
    ("FR10", "Ile-de-France", "FR", 12_300_000, "FR-75"),
    ("FRK2", "Rhone-Alpes", "FR", 6_800_000, "FR-69"),
    ("DE30", "Berlin", "DE", 3_700_000, "DE-BE"),
    ("DE21", "Oberbayern", "DE", 4_700_000, "DE-BY"),
    ("AT13", "Wien", "AT", 1_900_000, "AT-9"),
    ("FI1B", "Helsinki-Uusimaa", "FI", 1_700_000, "FI-18"),
];

const LONDON: (&str, &str, &str) = ("UKI", "UKI3;UKI4;UKI5;UKI6;UKI7", "London");

/// Country rows: id, name, population, GDP per capita (kUSD), internet
/// share, HDI (empty = missing), patents per region for AGC comparison.
const COUNTRIES: &[(&str, &str, u64, &str, &str, &str)] = &[
    ("AT", "Austria", 8_900_000, "50.3", "87.5", "0.922"),
    ("DE", "Germany", 83_100_000, "46.2", "89.8", "0.947"),
    ("FI", "Finland", 5_500_000, "48.7", "92.2", "0.938"),
    ("FR", "France", 67_100_000, "40.5", "83.3", "0.901"),
    ("GB", "United Kingdom", 66_800_000, "42.3", "94.8", "0.932"),
    ("IT", "Italy", 60_300_000, "33.2", "70.5", "0.892"),
    ("JP", "Japan", 126_300_000, "40.2", "90.2", ""),
    ("US", "United States", 328_200_000, "65.1", "89.4", "0.926"),
];

const PATENTS: &[(&str, u64)] = &[
    ("UKI", 2100), ("UKH1", 1900), ("FR10", 6400), ("FRK2", 2600),
    ("DE30", 1500), ("DE21", 5200), ("AT13", 900), ("FI1B", 1300),
];

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceCounts {
    pub profile: u64,
    pub microblog: u64,
    pub email_suffix: u64,
}

impl SourceCounts {
    fn add(&mut self, stage: Stage) {
        match stage {
            Stage::Profile => self.profile += 1,
            Stage::Microblog => self.microblog += 1,
            Stage::Suffix => self.email_suffix += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.profile + self.microblog + self.email_suffix
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeTruth {
    /// Every reporting region, including empty ones.
    pub regions: BTreeMap<String, SourceCounts>,
    pub country_only: u64,
    pub unassigned: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedAccount {
    pub emails: Vec<String>,
    pub total_commits: u64,
    /// Attempt on which each email resolves.
    pub attempts: BTreeMap<String, u32>,
    /// `None` when the account should stay unlocated.
    pub country: Option<String>,
    pub source: Option<String>,
    pub unreliable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub total_lines: u64,
    pub malformed_lines: u64,
    pub non_push_events: u64,
    pub commit_entries: u64,
    pub invalid_commit_entries: u64,
    pub distinct_in_window_shas: u64,
    /// In-window distinct-sha count of every email seen in the window.
    pub email_commits: BTreeMap<String, u64>,
    pub emails_at_threshold: u64,
    pub unresolved_emails: Vec<String>,
    pub unresolved_commits: u64,
    pub accounts: BTreeMap<String, PlantedAccount>,
    pub accounts_at_threshold: u64,
    pub located: u64,
    pub unlocated: u64,
    pub located_by_source: SourceCounts,
    pub subnational_located: u64,
    pub schemes: BTreeMap<String, SchemeTruth>,
    /// Emails with exactly 100 and exactly 99 in-window commits.
    pub boundary_emails: (String, String),
}

struct Entry {
    sha: String,
    email: String,
    name: String,
}

fn random_sha(rng: &mut ChaCha8Rng, used: &mut HashSet<String>) -> String {
    loop {
        let bytes: [u8; 20] = rng.random();
        let sha: String = bytes.iter().map(|b| format!("{b:02x}")).collect();
        if used.insert(sha.clone()) {
            return sha;
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

fn write_rows<R: AsRef<[String]>>(path: &Path, header: &[&str], rows: &[R]) -> Result<()> {
    crate::table::write_csv_file(path, header, rows.iter().map(|r| r.as_ref().to_vec()))
}

fn email_for(login: &str, domain: &str, i: usize) -> String {
    let local = if i == 0 { login.to_string() } else { format!("{login}.{i}") };
    format!("{local}@{domain}")
}

/// Writes the fixture into `dir` (created if needed) and returns the
/// ground truth, which is also saved as `ground_truth.json`.
pub fn write_fixture(dir: &Path, seed: u64) -> Result<GroundTruth> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let window_start = Utc.with_ymd_and_hms(2019, 1, 1, 0, 0, 0).unwrap();
    let window_end = Utc.with_ymd_and_hms(2021, 1, 1, 0, 0, 0).unwrap();
    let mut used = HashSet::new();

    // Emails and their planted in-window commit volumes.
    let mut emails: Vec<(String, String, u64)> = Vec::new(); // email, display name, count
    let mut account_emails: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    let boundary_login = "otaniemi";
    for s in SCENARIOS {
        for (i, d) in s.domains.iter().enumerate() {
            let email = email_for(s.login, d, i);
            let count = if s.login == boundary_login { 100 } else { rng.random_range(100..=170) };
            emails.push((email.clone(), s.login.replace('-', " "), count));
            account_emails.entry(s.login).or_default().push(email);
        }
    }
    let unresolved: Vec<String> = (1..=5).map(|i| format!("ci-runner-{i}@build.invalid")).collect();
    for e in &unresolved {
        emails.push((e.clone(), "CI".into(), rng.random_range(100..=140)));
    }
    let below = "almost@threshold.dev".to_string();
    emails.push((below.clone(), "Almost".into(), 99));
    for i in 0..40 {
        emails.push((format!("drive-by-{i}@gmail.com"), format!("Drive By {i}"), rng.random_range(1..=80)));
    }

    // In-window entries: distinct shas plus fork duplicates and invalid ones.
    let mut in_window: Vec<Entry> = Vec::new();
    for (email, name, count) in &emails {
        for _ in 0..*count {
            in_window.push(Entry { sha: random_sha(&mut rng, &mut used), email: email.clone(), name: name.clone() });
        }
    }
    let distinct_in_window = in_window.len() as u64;
    for _ in 0..FORK_DUPLICATES {
        let j = rng.random_range(0..distinct_in_window as usize);
        let dup = Entry { sha: in_window[j].sha.clone(), email: in_window[j].email.clone(), name: in_window[j].name.clone() };
        in_window.push(dup);
    }
    let invalid_shas = ["not-a-sha", "", "abc123", "zz9e2c8d3f4b5a6978877665544332211000ffee", "0123456789"];
    for (i, sha) in invalid_shas.iter().enumerate().take(INVALID_ENTRIES) {
        in_window.push(Entry { sha: sha.to_string(), email: format!("broken-{i}@example.com"), name: "Broken".into() });
    }
    // An entry without an email is dropped by the parser like a bad sha.
    in_window.push(Entry { sha: random_sha(&mut rng, &mut used), email: String::new(), name: "Nobody".into() });
    let invalid_total = INVALID_ENTRIES as u64 + 1;

    // Out-of-window entries for a subset of emails, including the 99 one.
    let mut out_window: Vec<Entry> = Vec::new();
    for (k, (email, name, _)) in emails.iter().enumerate() {
        if k % 3 == 0 || *email == below {
            for _ in 0..rng.random_range(10..=40) {
                out_window.push(Entry { sha: random_sha(&mut rng, &mut used), email: email.clone(), name: name.clone() });
            }
        }
    }

    // Event slots and timestamps.
    let n_push_in = TOTAL_LINES - MALFORMED_LINES - NON_PUSH_EVENTS - OUT_OF_WINDOW_EVENTS;
    let span = (window_end - window_start).num_seconds();
    let mut in_times: Vec<DateTime<Utc>> = (0..n_push_in)
        .map(|_| window_start + Duration::seconds(rng.random_range(0..span)))
        .collect();
    // Window edges: the first instant is in, the end instant is out.
    in_times[0] = window_start;
    in_times[1] = window_end - Duration::seconds(1);
    let mut out_times: Vec<DateTime<Utc>> = (0..OUT_OF_WINDOW_EVENTS)
        .map(|i| {
            if i % 2 == 0 {
                window_start - Duration::seconds(rng.random_range(1..86_400 * 60))
            } else {
                window_end + Duration::seconds(rng.random_range(0..86_400 * 60))
            }
        })
        .collect();
    out_times[1] = window_end;

    let mut in_events: Vec<Vec<Entry>> = (0..n_push_in).map(|_| Vec::new()).collect();
    in_window.shuffle(&mut rng);
    for e in in_window {
        let slot = rng.random_range(0..n_push_in);
        in_events[slot].push(e);
    }
    let mut out_events: Vec<Vec<Entry>> = (0..OUT_OF_WINDOW_EVENTS).map(|_| Vec::new()).collect();
    for e in out_window {
        let slot = rng.random_range(0..OUT_OF_WINDOW_EVENTS);
        out_events[slot].push(e);
    }

    // Lines per file. Archives: 2019, 2020 (gzip), and the out-of-window edges.
    enum Line {
        Push(DateTime<Utc>, Vec<Entry>),
        Other(DateTime<Utc>, &'static str),
        Malformed(&'static str),
    }
    let mut files: [Vec<Line>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (t, entries) in in_times.into_iter().zip(in_events) {
        let f = if t < Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap() { 0 } else { 1 };
        files[f].push(Line::Push(t, entries));
    }
    for (t, entries) in out_times.into_iter().zip(out_events) {
        files[2].push(Line::Push(t, entries));
    }
    let kinds = ["WatchEvent", "IssuesEvent", "CreateEvent", "PullRequestEvent", "ForkEvent"];
    for i in 0..NON_PUSH_EVENTS {
        let t = window_start + Duration::seconds(rng.random_range(0..span));
        let f = if t.format("%Y").to_string() == "2019" { 0 } else { 1 };
        files[f].push(Line::Other(t, kinds[i % kinds.len()]));
    }
    for f in &mut files {
        f.sort_by_key(|l| match l {
            Line::Push(t, _) | Line::Other(t, _) => *t,
            Line::Malformed(_) => window_start,
        });
    }
    let malformed = [
        "{\"type\":\"PushEvent\",\"payload\":{\"commits\":[{\"sha\":",
        "<html>502 Bad Gateway</html>",
        "{\"type\":\"PushEvent\",\"repo\":{\"name\":\"a/b\"},\"payload\":{\"commits\":[]}}",
    ];
    for (i, m) in malformed.iter().enumerate() {
        let pos = rng.random_range(1..files[i].len());
        files[i].insert(pos, Line::Malformed(m));
    }

    // Global order decides first occurrences and therefore sample shas.
    let mut first_shas: HashMap<&str, Vec<&str>> = HashMap::new();
    let mut seen = HashSet::new();
    for f in &files {
        for l in f {
            if let Line::Push(t, entries) = l {
                if *t < window_start || *t >= window_end {
                    continue;
                }
                for e in entries {
                    if e.sha.len() != 40 || !e.sha.bytes().all(|b| b.is_ascii_hexdigit()) || e.email.is_empty() {
                        continue;
                    }
                    if seen.insert(e.sha.as_str()) {
                        let v = first_shas.entry(e.email.as_str()).or_default();
                        if v.len() < 4 {
                            v.push(e.sha.as_str());
                        }
                    }
                }
            }
        }
    }

    // Resolver table: each planted email answers on a planted attempt.
    let mut resolver_rows: Vec<Vec<String>> = Vec::new();
    let mut accounts = BTreeMap::new();
    for (n, s) in SCENARIOS.iter().enumerate() {
        let mut attempts = BTreeMap::new();
        let mut total = 0;
        for (i, email) in account_emails[s.login].iter().enumerate() {
            let attempt = match (n + i) % 7 {
                3 => 2,
                5 => 3,
                6 => 4,
                _ => 1,
            };
            let sha = first_shas[email.as_str()][attempt as usize - 1];
            resolver_rows.push(vec![sha.to_string(), s.login.to_string()]);
            attempts.insert(email.clone(), attempt);
            total += emails.iter().find(|e| &e.0 == email).unwrap().2;
        }
        let (country, source, unreliable) = match s.planted {
            Planted::At { source, country, .. } => (Some(country.to_string()), Some(source.name().to_string()), false),
            Planted::Unreliable => (None, None, true),
            Planted::Unlocated => (None, None, false),
        };
        accounts.insert(
            s.login.to_string(),
            PlantedAccount {
                emails: account_emails[s.login].clone(),
                total_commits: total,
                attempts,
                country,
                source,
                unreliable,
            },
        );
    }
    // Sub-threshold emails resolve too; they never reach the resolver.
    for (email, _, count) in &emails {
        if *count < 100 {
            if let Some(shas) = first_shas.get(email.as_str()) {
                resolver_rows.push(vec![shas[0].to_string(), format!("{}-acct", email.split('@').next().unwrap())]);
            }
        }
    }
    resolver_rows.sort();

    // Expected aggregates.
    let mut nuts = SchemeTruth::default();
    for id in ["UKI", "UKH1", "FR10", "FRK2", "DE30", "DE21", "AT13", "FI1B"] {
        nuts.regions.insert(id.to_string(), SourceCounts::default());
    }
    let mut country = SchemeTruth::default();
    for c in COUNTRIES {
        country.regions.insert(c.0.to_string(), SourceCounts::default());
    }
    let mut located_by_source = SourceCounts::default();
    let mut subnational = 0;
    let (mut located, mut unlocated) = (0, 0);
    for s in SCENARIOS {
        match s.planted {
            Planted::At { source, country: cc, nuts2 } => {
                located += 1;
                located_by_source.add(source);
                let precise = planted_precise(s, source);
                if precise {
                    subnational += 1;
                }
                match country.regions.get_mut(cc) {
                    Some(c) => c.add(source),
                    None => country.unassigned += 1,
                }
                match nuts2 {
                    Some(r) => nuts.regions.get_mut(r).unwrap().add(source),
                    None if NUTS2.iter().any(|n| n.2 == cc) => nuts.country_only += 1,
                    None => nuts.unassigned += 1,
                }
            }
            Planted::Unreliable | Planted::Unlocated => unlocated += 1,
        }
    }

    let email_commits: BTreeMap<String, u64> = emails.iter().map(|(e, _, c)| (e.clone(), *c)).collect();
    let emails_at_threshold = emails.iter().filter(|e| e.2 >= 100).count() as u64;
    let unresolved_commits = unresolved.iter().map(|e| email_commits[e]).sum();
    let commit_entries: u64 = files
        .iter()
        .flatten()
        .map(|l| match l {
            Line::Push(_, e) => e.len() as u64,
            _ => 0,
        })
        .sum::<u64>()
        - invalid_total;
    let truth = GroundTruth {
        seed,
        total_lines: TOTAL_LINES as u64,
        malformed_lines: MALFORMED_LINES as u64,
        non_push_events: NON_PUSH_EVENTS as u64,
        commit_entries,
        invalid_commit_entries: invalid_total,
        distinct_in_window_shas: distinct_in_window,
        email_commits,
        emails_at_threshold,
        unresolved_emails: unresolved.clone(),
        unresolved_commits,
        accounts_at_threshold: SCENARIOS.len() as u64 + unresolved.len() as u64,
        accounts,
        located,
        unlocated,
        located_by_source,
        subnational_located: subnational,
        schemes: BTreeMap::from([("country".to_string(), country), ("nuts2".to_string(), nuts)]),
        boundary_emails: (account_emails[boundary_login][0].clone(), below),
    };

    // Write everything.
    fs::create_dir_all(dir.join("events")).map_err(io_err(dir))?;
    fs::create_dir_all(dir.join("schemes")).map_err(io_err(dir))?;
    let mut push_id = 4_000_000_000u64;
    let mut render = |l: &Line| -> String {
        push_id += 1;
        match l {
            Line::Push(t, entries) => {
                let commits: Vec<_> = entries
                    .iter()
                    .map(|e| {
                        json!({
                            "sha": e.sha,
                            "author": {"email": e.email, "name": e.name},
                            "message": "update",
                            "distinct": true,
                        })
                    })
                    .collect();
                json!({
                    "id": push_id.to_string(),
                    "type": "PushEvent",
                    "actor": {"login": "pusher"},
                    "repo": {"name": format!("org{}/repo{}", push_id % 97, push_id % 13)},
                    "payload": {"push_id": push_id, "size": entries.len(), "ref": "refs/heads/main", "commits": commits},
                    "public": true,
                    "created_at": t.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
                })
                .to_string()
            }
            Line::Other(t, kind) => json!({
                "id": push_id.to_string(),
                "type": kind,
                "repo": {"name": "org/other"},
                "payload": {"action": "started"},
                "public": true,
                "created_at": t.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
            })
            .to_string(),
            Line::Malformed(m) => m.to_string(),
        }
    };
    let names = ["events/2019.jsonl", "events/2020.jsonl.gz", "events/edges.jsonl"];
    for (f, name) in files.iter().zip(names) {
        let path = dir.join(name);
        let file = File::create(&path).map_err(io_err(&path))?;
        let mut text = String::new();
        for l in f {
            text.push_str(&render(l));
            text.push('\n');
        }
        if name.ends_with(".gz") {
            let mut gz = GzEncoder::new(BufWriter::new(file), Compression::default());
            gz.write_all(text.as_bytes()).map_err(io_err(&path))?;
            gz.finish().and_then(|mut w| w.flush()).map_err(io_err(&path))?;
        } else {
            let mut w = BufWriter::new(file);
            w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(io_err(&path))?;
        }
    }

    write_rows(&dir.join("resolver.csv"), &["sha", "login"], &resolver_rows)?;
    let profiles: Vec<Vec<String>> = SCENARIOS
        .iter()
        .filter(|s| !NO_PROFILE.contains(&s.login))
        .map(|s| {
            vec![
                s.login.to_string(),
                s.location.unwrap_or("").to_string(),
                s.handle.map(|h| h.0).unwrap_or("").to_string(),
            ]
        })
        .collect();
    write_rows(&dir.join("profiles.csv"), &["login", "location_string", "microblog_handle"], &profiles)?;
    let mut microblog: Vec<Vec<String>> = SCENARIOS
        .iter()
        .filter_map(|s| s.handle)
        .map(|(h, l)| vec![h.to_string(), l.to_string()])
        .collect();
    microblog.push(vec!["unrelated_user".into(), "Lisbon".into()]);
    write_rows(&dir.join("microblog.csv"), &["handle", "location_string"], &microblog)?;
    let gaz: Vec<Vec<String>> = GAZETTEER
        .iter()
        .map(|g| vec![g.0.into(), g.1.into(), g.2.into(), g.3.into(), g.4.into()])
        .collect();
    write_rows(&dir.join("gazetteer.csv"), &["alias", "country", "subdivision", "lat", "lon"], &gaz)?;
    let cctld: Vec<Vec<String>> = CCTLD.iter().map(|(s, c)| vec![format!(".{s}"), c.to_string()]).collect();
    write_rows(&dir.join("cctld.csv"), &["suffix", "country"], &cctld)?;
    let unis: Vec<Vec<String>> = UNIVERSITIES.iter().map(|u| vec![u.0.into(), u.1.into(), u.2.into()]).collect();
    write_rows(&dir.join("universities.csv"), &["domain", "name", "country"], &unis)?;

    let nuts_rows: Vec<Vec<String>> = NUTS2
        .iter()
        .map(|n| vec![n.0.into(), n.1.into(), n.2.into(), n.3.to_string(), n.4.into()])
        .collect();
    write_rows(&dir.join("schemes/nuts2.csv"), &crate::regions::SCHEME_HEADER, &nuts_rows)?;
    write_rows(
        &dir.join("schemes/nuts2_merges.csv"),
        &crate::regions::MERGE_HEADER,
        &[vec![LONDON.0.to_string(), LONDON.1.to_string(), LONDON.2.to_string()]],
    )?;
    write_rows(
        &dir.join("schemes/nuts2_boundaries.csv"),
        &["region_id", "vertices"],
        &[vec!["FI1B".to_string(), "59.8 23.3;60.8 23.3;60.8 26.5;59.8 26.5".to_string()]],
    )?;
    let country_rows: Vec<Vec<String>> = COUNTRIES
        .iter()
        .map(|c| vec![c.0.into(), c.1.into(), c.0.into(), c.2.to_string(), String::new()])
        .collect();
    write_rows(&dir.join("schemes/country.csv"), &crate::regions::SCHEME_HEADER, &country_rows)?;

    let covariates: Vec<Vec<String>> = COUNTRIES
        .iter()
        .map(|c| vec![c.0.into(), c.3.into(), c.4.into(), c.5.into()])
        .collect();
    write_rows(&dir.join("covariates.csv"), &["region_id", "gdp_per_capita", "internet_share", "hdi"], &covariates)?;
    let baseline: Vec<Vec<String>> = ["US", "DE", "GB", "JP", "FR", "FI"]
        .iter()
        .enumerate()
        .map(|(i, c)| vec![c.to_string(), (i + 1).to_string()])
        .collect();
    write_rows(&dir.join("baseline.csv"), &["region_id", "rank"], &baseline)?;
    let patents: Vec<Vec<String>> = PATENTS.iter().map(|(r, v)| vec![r.to_string(), v.to_string()]).collect();
    write_rows(&dir.join("patents.csv"), &["region_id", "value"], &patents)?;

    write_text(
        &dir.join("pipeline.conf"),
        "# Synthetic fixture run. Paths are relative to this file.\n\
         events = events/2019.jsonl, events/2020.jsonl.gz, events/edges.jsonl\n\
         resolver_fixture = resolver.csv\n\
         profiles = profiles.csv\n\
         microblog = microblog.csv\n\
         gazetteer = gazetteer.csv\n\
         cctld = cctld.csv\n\
         universities = universities.csv\n\
         schemes = country:schemes/country.csv, nuts2:schemes/nuts2.csv\n\
         merge_rules = nuts2:schemes/nuts2_merges.csv\n\
         boundaries = nuts2:schemes/nuts2_boundaries.csv\n\
         window_start = 2019-01-01T00:00:00Z\n\
         window_end = 2021-01-01T00:00:00Z\n\
         threshold = 100\n\
         max_attempts = 4\n\
         suffix_blocklist = .me\n\
         out_dir = out\n",
    )?;
    write_text(
        &dir.join("analysis_country.spec"),
        "scheme = country\n\
         per_capita_scale = per_million\n\
         baseline = baseline.csv\n\
         covariates = covariates.csv\n\
         min_population = 1000000\n\
         spearman = per_capita:gdp_per_capita, per_capita:internet_share, per_capita:hdi\n\
         regression.gdp = log(per_capita) ~ log(gdp_per_capita)\n\
         regression.full = log(per_capita) ~ log(gdp_per_capita) + internet_share + hdi\n\
         bins = 3\n",
    )?;
    write_text(
        &dir.join("analysis_nuts2.spec"),
        "scheme = nuts2\n\
         per_capita_scale = per_100k\n\
         compare.patents = patents.csv\n\
         bins = 3\n",
    )?;

    let json = serde_json::to_string_pretty(&truth)?;
    write_text(&dir.join("ground_truth.json"), &(json + "\n"))?;
    Ok(truth)
}

/// Whether the text behind the planted stage carries subdivision or
/// coordinate detail in the fixture gazetteer.
fn planted_precise(s: &Scenario, source: Stage) -> bool {
    let text = match source {
        Stage::Profile => s.location,
        Stage::Microblog => s.handle.map(|h| h.1),
        Stage::Suffix => return false,
    };
    let Some(text) = text else { return false };
    let parts = std::iter::once(text).chain(text.split([',', '/']));
    for part in parts {
        let p = part.trim().to_lowercase();
        if let Some(g) = GAZETTEER.iter().find(|g| g.0.to_lowercase() == p) {
            return !g.2.is_empty() || !g.3.is_empty();
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_world_shape() {
        assert_eq!(SCENARIOS.len(), 60);
        let logins: HashSet<_> = SCENARIOS.iter().map(|s| s.login).collect();
        assert_eq!(logins.len(), 60);
        let effective: HashSet<_> = SCENARIOS
            .iter()
            .filter_map(|s| match s.planted {
                Planted::At { nuts2: Some(r), .. } => Some(r),
                _ => None,
            })
            .collect();
        assert_eq!(effective.len(), 8);
    }

    #[test]
    fn deterministic_for_seed() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ta = write_fixture(a.path(), 7).unwrap();
        let tb = write_fixture(b.path(), 7).unwrap();
        assert_eq!(ta, tb);
        for f in ["events/2019.jsonl", "events/edges.jsonl", "resolver.csv", "ground_truth.json"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
        assert_eq!(ta.accounts_at_threshold, 65);
        assert_eq!(ta.located + ta.unlocated, 60);
    }
}
