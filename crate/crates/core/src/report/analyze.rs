//! Tables computed from per-region counts: shares and rank changes,
//! per-capita rates, Spearman correlations, robust regressions, AGC by
//! country and a region-to-class export for choropleth maps.
//!
//! An analysis spec is a flat `key = value` file:
//!
//! ```text
//! scheme = nuts2
//! per_capita_scale = per_100k
//! covariates = covariates.csv
//! spearman = per_capita:gdp, per_capita:hdi
//! regression.main = log(per_capita) ~ log(gdp) + hdi
//! compare.patents = patents.csv
//! bins = 5
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{scheme_tag, FlatConfig, RunConfig};
use super::pipeline::{aggregate_file, load_scheme, Staging};
use crate::error::{Error, Result};
use crate::metrics::{
    agc, jenks_breaks, ols_robust, per_capita, shares_and_ranks, spearman, Column,
    ConcentrationInput, Scale,
};
use crate::regions::{read_aggregate_csv, AggregateCount, RegionScheme, SchemeId};
use crate::table::{write_csv, CsvTable};

pub const ANALYSIS_KEYS: &[&str] = &[
    "scheme",
    "counts",
    "populations",
    "per_capita_scale",
    "baseline",
    "covariates",
    "min_population",
    "min_count",
    "exclude",
    "spearman",
    "regression.*",
    "compare.*",
    "bins",
    "out_dir",
];

/// Columns every per-region row carries before covariates are joined.
pub const BUILTIN_VARIABLES: &[&str] = &[
    "n_profile",
    "n_microblog",
    "n_suffix",
    "n_total",
    "population",
    "per_capita",
    "share",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    pub variable: String,
    pub log: bool,
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.log {
            write!(f, "log({})", self.variable)
        } else {
            f.write_str(&self.variable)
        }
    }
}

fn parse_term(raw: &str) -> Result<Term> {
    let t = raw.trim();
    let (variable, log) = match t.strip_prefix("log(").and_then(|r| r.strip_suffix(')')) {
        Some(inner) => (inner.trim(), true),
        None => (t, false),
    };
    if variable.is_empty() || !variable.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(Error::validation(format!("bad regression term {raw:?}")));
    }
    Ok(Term { variable: variable.to_string(), log })
}

/// `lhs ~ t1 + t2 + …`; a term is a variable or `log(variable)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Formula {
    pub response: Term,
    pub predictors: Vec<Term>,
}

impl std::str::FromStr for Formula {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (lhs, rhs) = s
            .split_once('~')
            .ok_or_else(|| Error::validation(format!("formula {s:?} has no `~`")))?;
        let predictors = rhs.split('+').map(parse_term).collect::<Result<Vec<_>>>()?;
        Ok(Formula { response: parse_term(lhs)?, predictors })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisSpec {
    pub scheme: SchemeId,
    pub counts: Option<PathBuf>,
    pub populations: Option<PathBuf>,
    pub scale: Scale,
    pub baseline: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
    pub min_population: f64,
    pub min_count: u64,
    pub exclude: BTreeSet<String>,
    pub spearman: Vec<(String, String)>,
    pub regressions: Vec<(String, Formula)>,
    pub compare: Vec<(String, PathBuf)>,
    pub bins: usize,
    pub out_dir: Option<PathBuf>,
}

impl AnalysisSpec {
    pub fn from_flat(flat: &FlatConfig) -> Result<Self> {
        flat.check_keys(ANALYSIS_KEYS, "analysis")?;
        let scheme = flat
            .parsed::<SchemeId>("scheme")?
            .ok_or_else(|| Error::validation("analysis key `scheme` is required"))?;
        let spearman = flat
            .list("spearman")
            .iter()
            .map(|pair| {
                pair.split_once(':')
                    .map(|(a, b)| (a.trim().to_string(), b.trim().to_string()))
                    .ok_or_else(|| Error::validation(format!("spearman pair {pair:?} is not `x:y`")))
            })
            .collect::<Result<_>>()?;
        let regressions = flat
            .section("regression")
            .into_iter()
            .map(|(label, s)| Ok((label, s.value.parse::<Formula>()?)))
            .collect::<Result<_>>()?;
        let compare = flat
            .section("compare")
            .into_iter()
            .map(|(label, s)| {
                let path = s.base.join(&s.value);
                if !path.exists() {
                    return Err(Error::validation(format!("key `compare.{label}`: {} does not exist", path.display())));
                }
                Ok((label, path))
            })
            .collect::<Result<_>>()?;
        let bins = flat.parsed("bins")?.unwrap_or(5);
        if bins < 2 {
            return Err(Error::validation("analysis key `bins` must be at least 2"));
        }
        Ok(AnalysisSpec {
            scheme,
            counts: flat.input_path("counts")?,
            populations: flat.input_path("populations")?,
            scale: flat.parsed("per_capita_scale")?.unwrap_or(Scale::Per100k),
            baseline: flat.input_path("baseline")?,
            covariates: flat.input_path("covariates")?,
            min_population: flat.parsed("min_population")?.unwrap_or(0.0),
            min_count: flat.parsed("min_count")?.unwrap_or(0),
            exclude: flat.list("exclude").into_iter().collect(),
            spearman,
            regressions,
            compare,
            bins,
            out_dir: flat.output_path("out_dir"),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_flat(&FlatConfig::load(path)?)
    }
}

/// One region's counts with its population and rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerCapitaRow {
    pub region_id: String,
    pub name: String,
    pub country: String,
    pub n_profile: u64,
    pub n_microblog: u64,
    pub n_suffix: u64,
    pub n_total: u64,
    pub population: f64,
    pub per_capita: f64,
}

/// Rates for every count row with a population, ordered by descending rate
/// then region id.
pub fn per_capita_table(
    counts: &[AggregateCount],
    scheme: &RegionScheme,
    populations: &HashMap<String, f64>,
    scale: Scale,
) -> Result<Vec<PerCapitaRow>> {
    let mut rows = Vec::with_capacity(counts.len());
    for c in counts {
        let region = scheme.region(&c.region_id).ok_or_else(|| {
            Error::validation(format!("region {} in the counts is not part of scheme {}", c.region_id, scheme.id))
        })?;
        let population = populations
            .get(&c.region_id)
            .copied()
            .unwrap_or(region.population as f64);
        rows.push(PerCapitaRow {
            region_id: c.region_id.clone(),
            name: region.name.clone(),
            country: region.country.clone(),
            n_profile: c.n_profile,
            n_microblog: c.n_microblog,
            n_suffix: c.n_suffix,
            n_total: c.n_total,
            population,
            per_capita: per_capita(c.n_total, population, scale)
                .map_err(|e| Error::validation(format!("region {}: {e}", c.region_id)))?,
        });
    }
    rows.sort_by(|a, b| b.per_capita.total_cmp(&a.per_capita).then_with(|| a.region_id.cmp(&b.region_id)));
    Ok(rows)
}

/// AGC of `values` against population within each group of rows.
/// Groups with fewer than two regions or no mass give `None`.
fn agc_of(rows: &[&PerCapitaRow], value: impl Fn(&PerCapitaRow) -> Option<f64>) -> Result<Option<f64>> {
    if rows.len() < 2 {
        return Ok(None);
    }
    let mut pops = Vec::with_capacity(rows.len());
    let mut mass = Vec::with_capacity(rows.len());
    for r in rows {
        let Some(v) = value(r) else { return Ok(None) };
        pops.push(r.population);
        mass.push(v);
    }
    if mass.iter().sum::<f64>() <= 0.0 {
        return Ok(None);
    }
    Ok(Some(agc(&ConcentrationInput::from_counts(&pops, &mass)?).agc))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgcRow {
    /// Country code, or `ALL` for the whole table.
    pub group: String,
    pub n_regions: usize,
    pub contributors: u64,
    pub agc_contributors: Option<f64>,
    /// One value per comparison population, in spec order.
    pub comparisons: Vec<Option<f64>>,
}

/// AGC by country (subnational schemes) and over all rows.
pub fn agc_table(
    rows: &[PerCapitaRow],
    subnational: bool,
    compare: &[(String, HashMap<String, f64>)],
) -> Result<Vec<AgcRow>> {
    let mut groups: BTreeMap<String, Vec<&PerCapitaRow>> = BTreeMap::new();
    if subnational {
        for r in rows {
            groups.entry(r.country.clone()).or_default().push(r);
        }
    }
    let mut ordered: Vec<(String, Vec<&PerCapitaRow>)> = groups.into_iter().collect();
    ordered.push(("ALL".to_string(), rows.iter().collect()));
    let mut out = Vec::new();
    for (group, members) in ordered {
        let mut members = members;
        members.sort_by(|a, b| a.region_id.cmp(&b.region_id));
        let comparisons = compare
            .iter()
            .map(|(_, values)| agc_of(&members, |r| values.get(&r.region_id).copied()))
            .collect::<Result<Vec<_>>>()?;
        out.push(AgcRow {
            group,
            n_regions: members.len(),
            contributors: members.iter().map(|r| r.n_total).sum(),
            agc_contributors: agc_of(&members, |r| Some(r.n_total as f64))?,
            comparisons,
        });
    }
    Ok(out)
}

/// `region_id` plus numeric columns; empty cells are missing values.
fn read_numeric_table(path: &Path) -> Result<(Vec<String>, HashMap<String, Vec<Option<f64>>>)> {
    let table = CsvTable::read(path)?;
    let id = table.column("region_id")?;
    let names: Vec<String> = table
        .headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != id)
        .map(|(_, h)| h.to_string())
        .collect();
    let cols: Vec<usize> = names.iter().map(|n| table.column(n)).collect::<Result<_>>()?;
    let mut rows = HashMap::new();
    for (i, rec) in table.records.iter().enumerate() {
        let mut values = Vec::with_capacity(cols.len());
        for &c in &cols {
            values.push(if rec[c].is_empty() { None } else { Some(table.parse::<f64>(i, c)?) });
        }
        if rows.insert(rec[id].to_string(), values).is_some() {
            return Err(table.bad(i, format!("duplicate region {}", &rec[id])));
        }
    }
    Ok((names, rows))
}

fn read_single_column(path: &Path, column: &str) -> Result<HashMap<String, f64>> {
    let table = CsvTable::read(path)?;
    let id = table.column("region_id")?;
    let col = table.column(column)?;
    let mut out = HashMap::new();
    for i in 0..table.records.len() {
        let v: f64 = table.parse(i, col)?;
        if out.insert(table.records[i][id].to_string(), v).is_some() {
            return Err(table.bad(i, "duplicate region"));
        }
    }
    Ok(out)
}

fn read_baseline(path: &Path) -> Result<Vec<String>> {
    let table = CsvTable::read(path)?;
    let id = table.column("region_id")?;
    let rank = table.column("rank")?;
    let mut rows = Vec::with_capacity(table.records.len());
    for i in 0..table.records.len() {
        rows.push((table.parse::<u32>(i, rank)?, table.records[i][id].to_string()));
    }
    rows.sort();
    Ok(rows.into_iter().map(|(_, id)| id).collect())
}

/// Per-region variables addressed by name.
struct Frame {
    columns: BTreeMap<String, Vec<Option<f64>>>,
}

impl Frame {
    fn build(rows: &[PerCapitaRow], shares: &HashMap<String, f64>, covariates: Option<&Path>) -> Result<Frame> {
        let mut columns: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
        let mut put = |name: &str, f: &dyn Fn(&PerCapitaRow) -> f64| {
            columns.insert(name.to_string(), rows.iter().map(|r| Some(f(r))).collect());
        };
        put("n_profile", &|r| r.n_profile as f64);
        put("n_microblog", &|r| r.n_microblog as f64);
        put("n_suffix", &|r| r.n_suffix as f64);
        put("n_total", &|r| r.n_total as f64);
        put("population", &|r| r.population);
        put("per_capita", &|r| r.per_capita);
        put("share", &|r| shares.get(&r.region_id).copied().unwrap_or(0.0));
        if let Some(path) = covariates {
            let (names, table) = read_numeric_table(path)?;
            for (j, name) in names.iter().enumerate() {
                if BUILTIN_VARIABLES.contains(&name.as_str()) {
                    return Err(Error::validation(format!(
                        "{}: covariate column `{name}` shadows a built-in column",
                        path.display()
                    )));
                }
                let values = rows
                    .iter()
                    .map(|r| table.get(&r.region_id).and_then(|v| v[j]))
                    .collect();
                columns.insert(name.clone(), values);
            }
        }
        Ok(Frame { columns })
    }

    fn column(&self, term: &Term) -> Result<Vec<Option<f64>>> {
        let values = self.columns.get(&term.variable).ok_or_else(|| {
            Error::validation(format!(
                "unknown column `{}` (not a built-in column or covariate)",
                term.variable
            ))
        })?;
        Ok(values
            .iter()
            .map(|v| match (v, term.log) {
                (Some(x), true) if *x > 0.0 => Some(x.ln()),
                (_, true) => None,
                (v, false) => *v,
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub scheme: String,
    pub regions_in_counts: usize,
    pub regions_analyzed: usize,
    pub excluded: Vec<String>,
    pub contributors: u64,
    pub files: Vec<String>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Computes every table for one scheme and writes them to the analysis
/// output directory (the run's output directory unless the spec names one).
pub fn cmd_analyze(cfg: &RunConfig, spec: &AnalysisSpec) -> Result<AnalysisSummary> {
    let run = || -> Result<AnalysisSummary> {
        let scheme_spec = cfg
            .schemes
            .iter()
            .find(|s| s.id == spec.scheme)
            .ok_or_else(|| Error::validation(format!("scheme {} is not configured in the run config", spec.scheme)))?;
        let scheme = load_scheme(scheme_spec)?;
        let counts_path = spec.counts.clone().unwrap_or_else(|| cfg.out_dir.join(aggregate_file(scheme_spec)));
        let counts = read_aggregate_csv(&counts_path)?;
        let populations = match &spec.populations {
            Some(p) => read_single_column(p, "population")?,
            None => HashMap::new(),
        };
        let tag = scheme_tag(&spec.scheme);
        let out_dir = spec.out_dir.clone().unwrap_or_else(|| cfg.out_dir.clone());
        let mut staging = Staging::new(&out_dir)?;
        let mut files = Vec::new();

        // Shares and ranks over every region in the counts.
        let pairs: Vec<(String, u64)> = counts.iter().map(|c| (c.region_id.clone(), c.n_total)).collect();
        let baseline = spec.baseline.as_deref().map(read_baseline).transpose()?;
        let total: u64 = pairs.iter().map(|p| p.1).sum();
        let shares = if total > 0 {
            shares_and_ranks(&pairs, baseline.as_deref())?
        } else {
            Vec::new()
        };
        let share_of: HashMap<String, f64> = shares.iter().map(|s| (s.region_id.clone(), s.share)).collect();
        let name = format!("shares_{tag}.csv");
        staging.write(&name, |w, path| {
            let rows = shares.iter().map(|s| {
                vec![
                    s.region_id.clone(),
                    scheme.region(&s.region_id).map(|r| r.name.clone()).unwrap_or_default(),
                    s.count.to_string(),
                    s.share.to_string(),
                    s.rank.to_string(),
                    s.baseline_rank.map(|r| r.to_string()).unwrap_or_default(),
                    s.change.map(|c| c.to_string()).unwrap_or_default(),
                ]
            });
            write_csv(w, path, &["region_id", "name", "count", "share", "rank", "baseline_rank", "change"], rows)
        })?;
        files.push(name);

        // Per-capita rows after filters.
        let all_rows = per_capita_table(&counts, &scheme, &populations, spec.scale)?;
        let mut excluded = Vec::new();
        let rows: Vec<PerCapitaRow> = all_rows
            .into_iter()
            .filter(|r| {
                let keep = !spec.exclude.contains(&r.region_id)
                    && r.population >= spec.min_population
                    && r.n_total >= spec.min_count;
                if !keep {
                    excluded.push(r.region_id.clone());
                }
                keep
            })
            .collect();
        excluded.sort();
        let name = format!("per_capita_{tag}.csv");
        let rate_col = spec.scale.to_string();
        staging.write(&name, |w, path| {
            let out = rows.iter().map(|r| {
                vec![
                    r.region_id.clone(),
                    r.name.clone(),
                    r.country.clone(),
                    r.n_profile.to_string(),
                    r.n_microblog.to_string(),
                    r.n_suffix.to_string(),
                    r.n_total.to_string(),
                    r.population.to_string(),
                    r.per_capita.to_string(),
                ]
            });
            let header = ["region_id", "name", "country", "n_profile", "n_microblog", "n_suffix", "n_total", "population", rate_col.as_str()];
            write_csv(w, path, &header, out)
        })?;
        files.push(name);

        let frame = Frame::build(&rows, &share_of, spec.covariates.as_deref())?;

        if !spec.spearman.is_empty() {
            let mut out = Vec::new();
            for (x, y) in &spec.spearman {
                let xs = frame.column(&Term { variable: x.clone(), log: false })?;
                let ys = frame.column(&Term { variable: y.clone(), log: false })?;
                let (a, b): (Vec<f64>, Vec<f64>) = xs
                    .iter()
                    .zip(&ys)
                    .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
                    .unzip();
                let r = spearman(&a, &b).map_err(|e| Error::validation(format!("spearman {x}:{y}: {e}")))?;
                out.push(vec![x.clone(), y.clone(), r.n.to_string(), r.rho.to_string(), r.p_value.to_string()]);
            }
            let name = format!("spearman_{tag}.csv");
            staging.write(&name, |w, path| write_csv(w, path, &["x", "y", "n", "rho", "p_value"], out))?;
            files.push(name);
        }

        if !spec.regressions.is_empty() {
            let mut out = Vec::new();
            for (label, formula) in &spec.regressions {
                let y = frame.column(&formula.response)?;
                let cols = formula
                    .predictors
                    .iter()
                    .map(|t| Ok(Column::new(t.to_string(), frame.column(t)?)))
                    .collect::<Result<Vec<_>>>()?;
                let r = ols_robust(&y, &cols).map_err(|e| match e {
                    e @ Error::RankDeficient { .. } => e,
                    e => Error::validation(format!("regression {label}: {e}")),
                })?;
                for j in 0..r.names.len() {
                    out.push(vec![
                        label.clone(),
                        formula.response.to_string(),
                        r.names[j].clone(),
                        r.coefficients[j].to_string(),
                        r.robust_se[j].to_string(),
                        r.t_values[j].to_string(),
                        r.p_values[j].to_string(),
                        r.n_obs.to_string(),
                        r.dropped_rows.to_string(),
                        r.r2.to_string(),
                        r.adj_r2.to_string(),
                        r.f_stat.to_string(),
                        r.f_p_value.to_string(),
                    ]);
                }
            }
            let name = format!("regressions_{tag}.csv");
            let header = [
                "model", "response", "term", "coefficient", "robust_se", "t_value", "p_value", "n_obs",
                "dropped_rows", "r2", "adj_r2", "f_stat", "f_p_value",
            ];
            staging.write(&name, |w, path| write_csv(w, path, &header, out))?;
            files.push(name);
        }

        let compare = spec
            .compare
            .iter()
            .map(|(label, path)| Ok((label.clone(), read_single_column(path, "value")?)))
            .collect::<Result<Vec<_>>>()?;
        let agc_rows = agc_table(&rows, spec.scheme.is_subnational(), &compare)?;
        let name = format!("agc_{tag}.csv");
        let mut header = vec!["group".to_string(), "n_regions".into(), "contributors".into(), "agc_contributors".into()];
        header.extend(compare.iter().map(|(l, _)| format!("agc_{l}")));
        staging.write(&name, |w, path| {
            let out = agc_rows.iter().map(|r| {
                let mut row = vec![
                    r.group.clone(),
                    r.n_regions.to_string(),
                    r.contributors.to_string(),
                    fmt_opt(r.agc_contributors),
                ];
                row.extend(r.comparisons.iter().map(|v| fmt_opt(*v)));
                row
            });
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            write_csv(w, path, &header, out)
        })?;
        files.push(name);

        let bins = bin_rows(&rows, spec.bins)?;
        let name = format!("bins_{tag}.csv");
        staging.write(&name, |w, path| write_csv(w, path, &["region_id", "value", "bin"], bins))?;
        files.push(name);

        staging.commit()?;
        Ok(AnalysisSummary {
            scheme: spec.scheme.to_string(),
            regions_in_counts: counts.len(),
            regions_analyzed: rows.len(),
            excluded,
            contributors: rows.iter().map(|r| r.n_total).sum(),
            files,
        })
    };
    run().map_err(|e| e.in_stage("analyze"))
}

/// Natural-breaks classes of the per-capita rates, in region id order.
/// With fewer distinct rates than requested classes, each distinct rate
/// gets its own class.
fn bin_rows(rows: &[PerCapitaRow], k: usize) -> Result<Vec<Vec<String>>> {
    let mut sorted: Vec<&PerCapitaRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.region_id.cmp(&b.region_id));
    let values: Vec<f64> = sorted.iter().map(|r| r.per_capita).collect();
    let mut distinct = values.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let classes: Vec<usize> = if distinct.len() < 2 {
        vec![0; values.len()]
    } else {
        let b = jenks_breaks(&values, k.min(distinct.len()))?;
        values.iter().map(|v| b.assign(*v)).collect()
    };
    Ok(sorted
        .iter()
        .zip(classes)
        .map(|(r, c)| vec![r.region_id.clone(), r.per_capita.to_string(), c.to_string()])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regions::RegionRecord;

    fn scheme(regions: &[(&str, &str, u64)]) -> RegionScheme {
        let records = regions
            .iter()
            .map(|(id, cc, pop)| RegionRecord {
                region_id: id.to_string(),
                name: id.to_string(),
                country: cc.to_string(),
                population: *pop,
                subdivision_codes: BTreeSet::from([format!("{cc}-{id}")]),
            })
            .collect();
        RegionScheme::new(SchemeId::Nuts2, records, vec![]).unwrap()
    }

    fn count(id: &str, n: u64) -> AggregateCount {
        AggregateCount { region_id: id.into(), n_profile: n, n_microblog: 0, n_suffix: 0, n_total: n }
    }

    #[test]
    fn formula_parsing() {
        let f: Formula = "log(per_capita) ~ log(gdp) + hdi".parse().unwrap();
        assert_eq!(f.response.to_string(), "log(per_capita)");
        assert_eq!(f.predictors.len(), 2);
        assert!(f.predictors[0].log && !f.predictors[1].log);
        assert!("y + x".parse::<Formula>().is_err());
        assert!("y ~ log(a b)".parse::<Formula>().is_err());
    }

    #[test]
    fn proportional_counts_give_zero_agc() {
        let s = scheme(&[("A", "XX", 100), ("B", "XX", 300), ("C", "YY", 50), ("D", "YY", 150)]);
        let counts = [count("A", 10), count("B", 30), count("C", 5), count("D", 15)];
        let rows = per_capita_table(&counts, &s, &HashMap::new(), Scale::Per100k).unwrap();
        let table = agc_table(&rows, true, &[]).unwrap();
        assert_eq!(table.len(), 3);
        for r in &table {
            assert_eq!(r.agc_contributors, Some(0.0), "{}", r.group);
        }
    }

    #[test]
    fn planted_two_region_extreme() {
        let s = scheme(&[("A", "XX", 800), ("B", "XX", 200)]);
        let counts = [count("A", 0), count("B", 5)];
        let rows = per_capita_table(&counts, &s, &HashMap::new(), Scale::Per100k).unwrap();
        let table = agc_table(&rows, true, &[]).unwrap();
        assert_eq!(table[0].group, "XX");
        assert_eq!(table[0].agc_contributors, Some(1.0));
    }

    #[test]
    fn comparisons_and_missing_groups() {
        let s = scheme(&[("A", "XX", 100), ("B", "XX", 100), ("C", "YY", 100)]);
        let counts = [count("A", 4), count("B", 0), count("C", 1)];
        let rows = per_capita_table(&counts, &s, &HashMap::new(), Scale::Per100k).unwrap();
        let patents = HashMap::from([("A".to_string(), 1.0), ("B".to_string(), 1.0), ("C".to_string(), 2.0)]);
        let table = agc_table(&rows, true, &[("patents".into(), patents)]).unwrap();
        let xx = table.iter().find(|r| r.group == "XX").unwrap();
        assert_eq!(xx.comparisons, vec![Some(0.0)]);
        assert_eq!(xx.agc_contributors, Some(1.0));
        let yy = table.iter().find(|r| r.group == "YY").unwrap();
        assert_eq!(yy.agc_contributors, None);
    }

    #[test]
    fn per_capita_rows_sorted_and_checked() {
        let s = scheme(&[("A", "XX", 100_000), ("B", "XX", 50_000)]);
        let rows = per_capita_table(&[count("A", 10), count("B", 10)], &s, &HashMap::new(), Scale::Per100k).unwrap();
        assert_eq!(rows[0].region_id, "B");
        assert_eq!(rows[0].per_capita, 20.0);
        assert!(per_capita_table(&[count("Z", 1)], &s, &HashMap::new(), Scale::Per100k).unwrap_err().is_validation());
    }

    #[test]
    fn bins_cover_degenerate_inputs() {
        let s = scheme(&[("A", "XX", 100), ("B", "XX", 100), ("C", "XX", 100)]);
        let same = per_capita_table(&[count("A", 1), count("B", 1), count("C", 1)], &s, &HashMap::new(), Scale::Per100k).unwrap();
        assert!(bin_rows(&same, 3).unwrap().iter().all(|r| r[2] == "0"));
        let two = per_capita_table(&[count("A", 1), count("B", 1), count("C", 9)], &s, &HashMap::new(), Scale::Per100k).unwrap();
        let b = bin_rows(&two, 5).unwrap();
        assert_eq!(b.iter().map(|r| r[2].as_str()).collect::<Vec<_>>(), vec!["0", "0", "1"]);
    }
}
