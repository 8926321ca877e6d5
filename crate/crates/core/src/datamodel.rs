//! Individual-level data: CSV ingestion, context partitioning and per-context
//! exposure summaries.

use crate::error::{Error, Result};
use crate::regress::Family;
use crate::warning::Warning;
use serde::{Deserialize, Serialize};
use std::borrow::Borrow;
use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

/// Default minimum number of records for a context to be analysed.
pub const DEFAULT_MIN_CONTEXT_N: usize = 100;

/// One participant.
#[derive(Debug, Clone, PartialEq)]
pub struct IndividualRecord {
    /// Allele count or weighted genetic score.
    pub instrument: f64,
    pub exposure: f64,
    /// Continuous outcome, or 0/1 for a binary outcome.
    pub outcome: f64,
    /// Index into [`Dataset::contexts`].
    pub context: usize,
    pub covariates: Vec<f64>,
}

/// Binds analysis roles to CSV column names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub instrument: String,
    pub exposure: String,
    pub outcome: String,
    pub context: String,
    #[serde(default)]
    pub covariates: Vec<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            instrument: "g".into(),
            exposure: "x".into(),
            outcome: "y".into(),
            context: "context".into(),
            covariates: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<IndividualRecord>,
    pub column_map: ColumnMap,
    /// Context labels in order of first appearance.
    pub contexts: Vec<String>,
    pub family: Family,
    /// Rows excluded during ingestion.
    pub dropped: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn context_label(&self, index: usize) -> &str {
        &self.contexts[index]
    }
}

fn is_missing(field: &str) -> bool {
    let f = field.trim();
    f.is_empty() || f == "NA"
}

fn parse_finite(field: &str) -> Option<f64> {
    if is_missing(field) {
        return None;
    }
    field.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads a header-first CSV. Rows with a missing (`""`/`NA`) or unparseable
/// mapped field are dropped and counted; under [`Family::Logistic`] an outcome
/// outside `{0, 1}` is an error.
pub fn load_csv(path: impl AsRef<Path>, column_map: &ColumnMap, family: Family) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file, column_map, family)
}

pub fn read_csv<R: Read>(reader: R, column_map: &ColumnMap, family: Family) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let instrument = find(&column_map.instrument)?;
    let exposure = find(&column_map.exposure)?;
    let outcome = find(&column_map.outcome)?;
    let context = find(&column_map.context)?;
    let covariates = column_map.covariates.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    let mut contexts: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut dropped = 0;

    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        // header is line 1
        let line = i + 2;
        let outcome_raw = &row[outcome];
        let parsed = (|| {
            let label = row[context].trim();
            if is_missing(label) {
                return None;
            }
            let covs = covariates.iter().map(|&c| parse_finite(&row[c])).collect::<Option<Vec<_>>>()?;
            Some((
                label.to_string(),
                parse_finite(&row[instrument])?,
                parse_finite(&row[exposure])?,
                parse_finite(outcome_raw)?,
                covs,
            ))
        })();
        let Some((label, g, x, y, covs)) = parsed else {
            dropped += 1;
            continue;
        };
        if family == Family::Logistic && y != 0.0 && y != 1.0 {
            return Err(Error::NotBinary { line, value: outcome_raw.trim().to_string() });
        }
        let ctx = *index.entry(label.clone()).or_insert_with(|| {
            contexts.push(label);
            contexts.len() - 1
        });
        records.push(IndividualRecord { instrument: g, exposure: x, outcome: y, context: ctx, covariates: covs });
    }

    if records.is_empty() {
        return Err(Error::NoUsableRows { dropped });
    }
    Ok(Dataset { records, column_map: column_map.clone(), contexts, family, dropped })
}

/// Exposure distribution within one context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSummary {
    pub context: String,
    pub n: usize,
    pub exposure_mean: f64,
    /// Absent when built from summary statistics.
    pub exposure_sd: Option<f64>,
    pub exposure_median: Option<f64>,
}

/// Mean, median and sample SD (`n - 1` denominator) of the exposure.
pub fn summarize_context<R: Borrow<IndividualRecord>>(context: &str, records: &[R]) -> Result<ContextSummary> {
    let n = records.len();
    if n < 2 {
        return Err(Error::TooFewObservations { n, p: 1 });
    }
    let mut xs: Vec<f64> = records.iter().map(|r| r.borrow().exposure).collect();
    // Order-independent sums: sort first so permutations give identical bits.
    xs.sort_by(f64::total_cmp);
    let mean = xs.iter().sum::<f64>() / n as f64;
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    let median = if n % 2 == 1 { xs[n / 2] } else { 0.5 * (xs[n / 2 - 1] + xs[n / 2]) };
    Ok(ContextSummary {
        context: context.to_string(),
        n,
        exposure_mean: mean,
        exposure_sd: Some((ss / (n - 1) as f64).sqrt()),
        exposure_median: Some(median),
    })
}

/// Records belonging to one retained context.
#[derive(Debug, Clone)]
pub struct ContextPartition<'a> {
    pub label: &'a str,
    pub records: Vec<&'a IndividualRecord>,
    pub exposure_mean: f64,
}

#[derive(Debug, Clone)]
pub struct Partitioning<'a> {
    /// Ascending by exposure mean; ties broken by label.
    pub retained: Vec<ContextPartition<'a>>,
    pub excluded: Vec<Warning>,
}

/// Splits a dataset by context label, dropping contexts smaller than `min_n`.
pub fn partition_by_context(ds: &Dataset, min_n: usize) -> Result<Partitioning<'_>> {
    if ds.is_empty() {
        return Err(Error::NoUsableRows { dropped: ds.dropped });
    }
    let mut groups: Vec<Vec<&IndividualRecord>> = vec![Vec::new(); ds.contexts.len()];
    for r in &ds.records {
        groups[r.context].push(r);
    }
    let total = groups.iter().filter(|g| !g.is_empty()).count();
    let mut retained = Vec::new();
    let mut excluded = Vec::new();
    for (idx, records) in groups.into_iter().enumerate() {
        let label = ds.context_label(idx);
        if records.is_empty() {
            continue;
        }
        if records.len() < min_n {
            excluded.push(Warning::ContextExcluded { context: label.to_string(), n: records.len(), min_n });
            continue;
        }
        let exposure_mean = records.iter().map(|r| r.exposure).sum::<f64>() / records.len() as f64;
        retained.push(ContextPartition { label, records, exposure_mean });
    }
    if retained.len() < 2 {
        return Err(Error::FewerThanTwoContexts { retained: retained.len(), total });
    }
    retained.sort_by(|a, b| a.exposure_mean.total_cmp(&b.exposure_mean).then_with(|| a.label.cmp(b.label)));
    Ok(Partitioning { retained, excluded })
}
