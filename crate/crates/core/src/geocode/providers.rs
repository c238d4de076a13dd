use std::collections::HashMap;
use std::path::Path;

use crate::error::{ProviderError, Result};
use crate::table::CsvTable;

/// Location string attached to a microblog handle.
pub trait MicroblogProvider: Sync {
    fn location(&self, handle: &str) -> Result<Option<String>, ProviderError>;
}

/// Account profile fields: free-text location and linked microblog handle.
pub trait ProfileProvider: Sync {
    fn profile(&self, login: &str) -> Result<Option<ProfileFields>, ProviderError>;
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProfileFields {
    pub location_string: Option<String>,
    pub microblog_handle: Option<String>,
}

fn handle_key(handle: &str) -> String {
    handle.trim().trim_start_matches('@').to_lowercase()
}

fn non_empty(s: &str) -> Option<String> {
    Some(s.to_string()).filter(|s| !s.is_empty())
}

/// Offline microblog lookup from a `handle,location_string` table.
/// Handles match case-insensitively, with or without a leading `@`.
#[derive(Debug, Clone, Default)]
pub struct FixtureMicroblog {
    by_handle: HashMap<String, String>,
}

impl FixtureMicroblog {
    pub fn load(path: &Path) -> Result<Self> {
        let table = CsvTable::read(path)?;
        let handle = table.column("handle")?;
        let location = table.column("location_string")?;
        let mut by_handle = HashMap::new();
        for (i, rec) in table.records.iter().enumerate() {
            let key = handle_key(&rec[handle]);
            if key.is_empty() {
                return Err(table.bad(i, "empty handle"));
            }
            if let Some(loc) = non_empty(&rec[location]) {
                by_handle.insert(key, loc);
            }
        }
        Ok(FixtureMicroblog { by_handle })
    }

    pub fn insert(&mut self, handle: &str, location: &str) {
        self.by_handle.insert(handle_key(handle), location.to_string());
    }
}

impl MicroblogProvider for FixtureMicroblog {
    fn location(&self, handle: &str) -> Result<Option<String>, ProviderError> {
        Ok(self.by_handle.get(&handle_key(handle)).cloned())
    }
}

/// Offline profile lookup from a `login,location_string,microblog_handle` table.
#[derive(Debug, Clone, Default)]
pub struct FixtureProfiles {
    by_login: HashMap<String, ProfileFields>,
}

impl FixtureProfiles {
    pub fn load(path: &Path) -> Result<Self> {
        let table = CsvTable::read(path)?;
        let login = table.column("login")?;
        let location = table.column("location_string")?;
        let handle = table.column("microblog_handle")?;
        let mut by_login = HashMap::new();
        for (i, rec) in table.records.iter().enumerate() {
            if rec[login].is_empty() {
                return Err(table.bad(i, "empty login"));
            }
            let fields = ProfileFields {
                location_string: non_empty(&rec[location]),
                microblog_handle: non_empty(&rec[handle]),
            };
            if by_login.insert(rec[login].to_lowercase(), fields).is_some() {
                return Err(table.bad(i, format!("duplicate login `{}`", &rec[login])));
            }
        }
        Ok(FixtureProfiles { by_login })
    }

    pub fn insert(&mut self, login: &str, fields: ProfileFields) {
        self.by_login.insert(login.to_lowercase(), fields);
    }
}

impl ProfileProvider for FixtureProfiles {
    fn profile(&self, login: &str) -> Result<Option<ProfileFields>, ProviderError> {
        Ok(self.by_login.get(&login.to_lowercase()).cloned())
    }
}
