//! M4-style series files: parsing, length filtering, train/test splitting and
//! seeded disjoint subsampling.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Monthly,
    Quarterly,
}

impl Frequency {
    /// Seasonal period `m`.
    pub fn period(self) -> usize {
        match self {
            Frequency::Monthly => 12,
            Frequency::Quarterly => 4,
        }
    }

    /// Forecast horizon `h`.
    pub fn horizon(self) -> usize {
        match self {
            Frequency::Monthly => 18,
            Frequency::Quarterly => 8,
        }
    }

    /// Longest history kept by [`filter_by_length`].
    pub fn max_length(self) -> usize {
        match self {
            Frequency::Monthly => 240,
            Frequency::Quarterly => 80,
        }
    }

    /// Shortest history kept by [`filter_by_length`]: `2m + h`.
    pub fn min_length(self) -> usize {
        2 * self.period() + self.horizon()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Frequency::Monthly => "monthly",
            Frequency::Quarterly => "quarterly",
        }
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Frequency {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "monthly" | "m" => Ok(Frequency::Monthly),
            "quarterly" | "q" => Ok(Frequency::Quarterly),
            other => Err(Error::Config(format!("unknown frequency '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub id: String,
    pub frequency: Frequency,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(id: impl Into<String>, frequency: Frequency, values: Vec<f64>) -> Self {
        TimeSeries {
            id: id.into(),
            frequency,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A series cut into its training window and the `h`-step test window.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSeries {
    pub id: String,
    pub frequency: Frequency,
    pub train: Vec<f64>,
    pub test: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledDatasets {
    pub parameter_set: Vec<String>,
    pub forecast_set: Vec<String>,
    pub seed: u64,
}

pub fn parse_m4_csv(path: &Path, frequency: Frequency) -> Result<Vec<TimeSeries>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_m4_csv(file, frequency).map_err(|e| match e {
        Error::Empty(_) => Error::Empty(path.display().to_string()),
        other => other,
    })
}

/// Parses id-first rows. Trailing empty cells are dropped; an empty cell
/// followed by a value is an error. A first row whose first value cell is
/// not numeric is taken as a header (M4 ships `"V1","V2",...`).
pub fn read_m4_csv<R: Read>(reader: R, frequency: Frequency) -> Result<Vec<TimeSeries>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut out = Vec::new();
    for (row_idx, record) in rdr.records().enumerate() {
        let record = record?;
        let row = row_idx + 1;
        if record.iter().all(str::is_empty) {
            continue;
        }
        if row_idx == 0 && is_header(&record) {
            continue;
        }
        let id = record.get(0).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(Error::Parse {
                row,
                column: 1,
                message: "missing series id".into(),
            });
        }
        let cells: Vec<&str> = record.iter().skip(1).collect();
        let last = cells.iter().rposition(|c| !c.is_empty());
        let cells = match last {
            Some(i) => &cells[..=i],
            None => &cells[..0],
        };
        let mut values = Vec::with_capacity(cells.len());
        for (j, cell) in cells.iter().enumerate() {
            let column = j + 2;
            if cell.is_empty() {
                return Err(Error::Parse {
                    row,
                    column,
                    message: "missing value inside series".into(),
                });
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column,
                message: format!("'{cell}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column,
                    message: format!("non-finite value '{cell}'"),
                });
            }
            values.push(v);
        }
        out.push(TimeSeries::new(id, frequency, values));
    }
    if out.is_empty() {
        return Err(Error::Empty("no series rows".into()));
    }
    Ok(out)
}

fn is_header(record: &csv::StringRecord) -> bool {
    match record.iter().skip(1).find(|c| !c.is_empty()) {
        Some(cell) => cell.parse::<f64>().is_err(),
        None => false,
    }
}

pub fn write_m4_csv<W: Write>(writer: W, series: &[TimeSeries]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().flexible(true).from_writer(writer);
    for s in series {
        let mut row = Vec::with_capacity(s.values.len() + 1);
        row.push(s.id.clone());
        row.extend(s.values.iter().map(f64::to_string));
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn filter_by_length(series: Vec<TimeSeries>) -> Vec<TimeSeries> {
    series
        .into_iter()
        .filter(|s| {
            let t = s.len();
            t <= s.frequency.max_length() && t >= s.frequency.min_length()
        })
        .collect()
}

pub fn split_train_test(series: &TimeSeries) -> Result<SplitSeries> {
    let h = series.frequency.horizon();
    if series.len() <= h {
        return Err(Error::TooShort(format!(
            "{} has {} observations, need more than the horizon {h}",
            series.id,
            series.len()
        )));
    }
    let cut = series.len() - h;
    Ok(SplitSeries {
        id: series.id.clone(),
        frequency: series.frequency,
        train: series.values[..cut].to_vec(),
        test: series.values[cut..].to_vec(),
    })
}

/// Pairs an M4 training file with its separately distributed test file.
pub fn join_train_test(train: Vec<TimeSeries>, test: Vec<TimeSeries>) -> Result<Vec<SplitSeries>> {
    let mut tests: HashMap<String, TimeSeries> =
        test.into_iter().map(|s| (s.id.clone(), s)).collect();
    let mut out = Vec::with_capacity(train.len());
    for s in train {
        let t = tests
            .remove(&s.id)
            .ok_or_else(|| Error::Degenerate(format!("{} has no test row", s.id)))?;
        let h = s.frequency.horizon();
        if t.len() != h {
            return Err(Error::Degenerate(format!(
                "{} test row has {} values, expected {h}",
                s.id,
                t.len()
            )));
        }
        out.push(SplitSeries {
            id: s.id,
            frequency: s.frequency,
            train: s.values,
            test: t.values,
        });
    }
    Ok(out)
}

/// Draws two disjoint id sets of `n_each` series. Ids are sorted first, so
/// the result depends only on the set of ids and the seed.
pub fn sample_disjoint(pool: &[TimeSeries], n_each: usize, seed: u64) -> Result<SampledDatasets> {
    let ids: BTreeSet<&str> = pool.iter().map(|s| s.id.as_str()).collect();
    if ids.len() != pool.len() {
        return Err(Error::Degenerate("duplicate series ids in pool".into()));
    }
    let needed = 2 * n_each;
    if ids.len() < needed {
        return Err(Error::TooShort(format!(
            "pool has {} series, sampling {n_each} per set requires at least {needed}",
            ids.len()
        )));
    }
    let ids: Vec<&str> = ids.into_iter().collect();
    let mut rng = rng::rng_for(seed, rng::STREAM_SAMPLING);
    let picked = index::sample(&mut rng, ids.len(), needed).into_vec();
    let take = |range: &[usize]| range.iter().map(|&i| ids[i].to_string()).collect();
    Ok(SampledDatasets {
        parameter_set: take(&picked[..n_each]),
        forecast_set: take(&picked[n_each..]),
        seed,
    })
}

/// Hash over sorted ids and their values, recorded in sample manifests.
pub fn pool_hash(pool: &[TimeSeries]) -> String {
    let mut sorted: Vec<&TimeSeries> = pool.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut bytes = Vec::new();
    for s in sorted {
        bytes.extend_from_slice(s.id.as_bytes());
        bytes.push(0);
        for v in &s.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes.push(0xff);
    }
    rng::hex_digest(&bytes)
}

/// Provenance record written next to the sampled datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleManifest {
    pub frequency: Frequency,
    pub seed: u64,
    pub n_each: usize,
    pub pool_size: usize,
    pub qualifying: usize,
    pub pool_hash: String,
    pub parameter_set: Vec<String>,
    pub forecast_set: Vec<String>,
}

impl SampleManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            row: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }
}
