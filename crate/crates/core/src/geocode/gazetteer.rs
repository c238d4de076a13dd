use std::collections::HashMap;
use std::path::Path;

use crate::error::{ProviderError, Result};
use crate::table::CsvTable;

use super::Coords;

const BUNDLED_GAZETTEER: &str = include_str!("../../data/gazetteer.csv");

#[derive(Debug, Clone, PartialEq)]
pub struct GazetteerHit {
    pub country: String,
    pub subdivision: Option<String>,
    pub coords: Option<Coords>,
}

/// Free-text place lookup. Implementations resolve aliases across languages
/// and scales (city, state, country) and return `None` for text that names
/// no real place.
pub trait GazetteerProvider: Sync {
    fn lookup(&self, text: &str) -> Result<Option<GazetteerHit>, ProviderError>;
}

/// Lowercases, trims surrounding punctuation and collapses inner whitespace.
pub fn normalize_place(text: &str) -> String {
    let trimmed = text.trim_matches(|c: char| {
        c.is_whitespace() || matches!(c, '.' | '!' | '?' | '"' | '\'' | '*' | '~' | '#' | '@')
    });
    trimmed
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Alias table gazetteer (`alias,country,subdivision,lat,lon`).
///
/// A lookup tries the whole string first, then its comma/semicolon/slash
/// separated parts from left to right, so "Wien, Österreich" resolves to
/// Vienna and "Nowhere Town, Austria" falls back to the country.
#[derive(Debug, Clone, Default)]
pub struct OfflineGazetteer {
    aliases: HashMap<String, GazetteerHit>,
}

impl OfflineGazetteer {
    pub fn bundled() -> Self {
        let table = CsvTable::from_reader(BUNDLED_GAZETTEER.as_bytes(), Path::new("<bundled gazetteer>"))
            .expect("bundled gazetteer is valid CSV");
        Self::from_table(&table).expect("bundled gazetteer is well-formed")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_table(&CsvTable::read(path)?)
    }

    fn from_table(table: &CsvTable) -> Result<Self> {
        let alias = table.column("alias")?;
        let country = table.column("country")?;
        let subdivision = table.column("subdivision")?;
        let lat = table.column("lat")?;
        let lon = table.column("lon")?;
        let mut aliases = HashMap::with_capacity(table.records.len());
        for (i, rec) in table.records.iter().enumerate() {
            let key = normalize_place(&rec[alias]);
            if key.is_empty() {
                return Err(table.bad(i, "empty alias"));
            }
            let cc = rec[country].to_ascii_uppercase();
            if cc.len() != 2 || !cc.bytes().all(|b| b.is_ascii_alphabetic()) {
                return Err(table.bad(i, format!("`{cc}` is not an ISO alpha-2 code")));
            }
            let coords = match (rec[lat].is_empty(), rec[lon].is_empty()) {
                (true, true) => None,
                (false, false) => {
                    let c = Coords::new(table.parse(i, lat)?, table.parse(i, lon)?)
                        .map_err(|e| table.bad(i, e.to_string()))?;
                    Some(c)
                }
                _ => return Err(table.bad(i, "lat and lon must both be set or both empty")),
            };
            let hit = GazetteerHit {
                country: cc,
                subdivision: Some(rec[subdivision].to_string()).filter(|s| !s.is_empty()),
                coords,
            };
            if let Some(prev) = aliases.insert(key.clone(), hit.clone()) {
                if prev != hit {
                    return Err(table.bad(i, format!("alias `{key}` defined twice")));
                }
            }
        }
        Ok(OfflineGazetteer { aliases })
    }

    pub fn insert(&mut self, alias: &str, hit: GazetteerHit) {
        self.aliases.insert(normalize_place(alias), hit);
    }

    pub fn len(&self) -> usize {
        self.aliases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aliases.is_empty()
    }

    fn get(&self, text: &str) -> Option<&GazetteerHit> {
        let key = normalize_place(text);
        if key.is_empty() {
            return None;
        }
        self.aliases.get(&key)
    }
}

impl GazetteerProvider for OfflineGazetteer {
    fn lookup(&self, text: &str) -> Result<Option<GazetteerHit>, ProviderError> {
        if let Some(hit) = self.get(text) {
            return Ok(Some(hit.clone()));
        }
        Ok(text
            .split([',', ';', '/', '|', '(', ')'])
            .find_map(|part| self.get(part))
            .cloned())
    }
}
