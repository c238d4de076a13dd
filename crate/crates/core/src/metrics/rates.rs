use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Per100k,
    PerMillion,
}

impl Scale {
    pub fn factor(self) -> f64 {
        match self {
            Scale::Per100k => 1e5,
            Scale::PerMillion => 1e6,
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::Per100k => "per_100k",
            Scale::PerMillion => "per_million",
        })
    }
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "per_100k" => Ok(Scale::Per100k),
            "per_million" => Ok(Scale::PerMillion),
            other => Err(Error::validation(format!(
                "unknown scale `{other}` (expected per_100k or per_million)"
            ))),
        }
    }
}

pub fn per_capita(count: u64, population: f64, scale: Scale) -> Result<f64> {
    if !(population.is_finite() && population > 0.0) {
        return Err(Error::validation(format!("population {population} is not positive")));
    }
    Ok(count as f64 / population * scale.factor())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RankChange {
    /// Moved up by this many places.
    Up(u32),
    Down(u32),
    Same,
    /// Absent from the baseline.
    New,
}

impl fmt::Display for RankChange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RankChange::Up(n) => write!(f, "+{n}"),
            RankChange::Down(n) => write!(f, "-{n}"),
            RankChange::Same => f.write_str("0"),
            RankChange::New => f.write_str("new"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShareRow {
    pub region_id: String,
    pub count: u64,
    /// Percent of the total.
    pub share: f64,
    pub rank: u32,
    pub baseline_rank: Option<u32>,
    /// `None` when no baseline was given.
    pub change: Option<RankChange>,
}

/// Shares in percent and ranks by descending count. Equal counts share a
/// rank (1, 2, 2, 4) and are listed by region id. With a baseline (region ids
/// best first) every row also gets its rank change.
pub fn shares_and_ranks(counts: &[(String, u64)], baseline: Option<&[String]>) -> Result<Vec<ShareRow>> {
    let total: u64 = counts.iter().map(|(_, n)| n).sum();
    if total == 0 {
        return Err(Error::validation("shares need a positive total count"));
    }
    let mut order: Vec<&(String, u64)> = counts.iter().collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    if order.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::validation("duplicate region in share table"));
    }
    let mut rows = Vec::with_capacity(order.len());
    let mut rank = 0;
    for (pos, (id, n)) in order.iter().enumerate() {
        if pos == 0 || order[pos - 1].1 != *n {
            rank = pos as u32 + 1;
        }
        let baseline_rank = baseline.and_then(|b| b.iter().position(|x| x == id).map(|p| p as u32 + 1));
        let change = baseline.map(|_| match baseline_rank {
            None => RankChange::New,
            Some(old) if old > rank => RankChange::Up(old - rank),
            Some(old) if old < rank => RankChange::Down(rank - old),
            Some(_) => RankChange::Same,
        });
        rows.push(ShareRow {
            region_id: id.clone(),
            count: *n,
            share: *n as f64 / total as f64 * 100.0,
            rank,
            baseline_rank,
            change,
        });
    }
    Ok(rows)
}
