//! CSV loading and writing.
//!
//! The file has a header row and a timestamp column holding either ISO-8601
//! datetimes or integer epoch seconds. Every other column used by the model
//! is assigned a role in [`ColumnRoles`]; undeclared columns are ignored.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::{Channel, DataError, SplitSpec, StaticVar, TimeSeriesDataset};

fn default_timestamp() -> String {
    "timestamp".to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnRoles {
    #[serde(default = "default_timestamp")]
    pub timestamp: String,
    pub target: String,
    #[serde(default)]
    pub hist_exog: Vec<String>,
    #[serde(default)]
    pub futr_exog: Vec<String>,
    #[serde(default, rename = "static")]
    pub static_exog: Vec<String>,
    /// Append month / week_day / hour as future-known channels.
    #[serde(default)]
    pub calendar: bool,
}

impl ColumnRoles {
    pub fn new(target: impl Into<String>) -> Self {
        Self {
            timestamp: default_timestamp(),
            target: target.into(),
            hist_exog: Vec::new(),
            futr_exog: Vec::new(),
            static_exog: Vec::new(),
            calendar: false,
        }
    }

    /// Roles that reproduce `ds` exactly when its CSV is loaded back.
    pub fn for_dataset(ds: &TimeSeriesDataset) -> Self {
        Self {
            timestamp: default_timestamp(),
            target: ds.target.name.clone(),
            hist_exog: ds.hist_exog.iter().map(|c| c.name.clone()).collect(),
            futr_exog: ds.futr_exog.iter().map(|c| c.name.clone()).collect(),
            static_exog: ds.static_exog.iter().map(|s| s.name.clone()).collect(),
            calendar: false,
        }
    }
}

pub fn parse_timestamp(raw: &str) -> Option<i64> {
    let raw = raw.trim();
    if let Ok(secs) = raw.parse::<i64>() {
        return Some(secs);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.timestamp());
    }
    const FORMATS: [&str; 4] = [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ];
    for fmt in FORMATS {
        if let Ok(dt) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    NaiveDate::parse_from_str(raw, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc().timestamp())
}

pub fn format_timestamp(epoch_seconds: i64) -> String {
    DateTime::from_timestamp(epoch_seconds, 0)
        .map(|dt| dt.format("%Y-%m-%dT%H:%M:%S").to_string())
        .unwrap_or_else(|| epoch_seconds.to_string())
}

fn parse_value(raw: &str, column: &str, row: usize) -> Result<f64, DataError> {
    let raw = raw.trim();
    if raw.is_empty() || raw.eq_ignore_ascii_case("na") || raw.eq_ignore_ascii_case("nan") {
        return Err(DataError::MissingValue {
            column: column.to_string(),
            row,
        });
    }
    let v: f64 = raw.parse().map_err(|_| DataError::Parse {
        column: column.to_string(),
        row,
        value: raw.to_string(),
    })?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(DataError::MissingValue {
            column: column.to_string(),
            row,
        })
    }
}

/// Reads a dataset, validating frequency, completeness and column roles.
pub fn load_csv(
    path: impl AsRef<Path>,
    roles: &ColumnRoles,
    split: &SplitSpec,
) -> Result<TimeSeriesDataset, DataError> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| DataError::Csv(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| DataError::Csv(e.to_string()))?
        .clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let column = |name: &str| {
        index
            .get(name)
            .copied()
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };

    let ts_col = column(&roles.timestamp)?;
    let target_col = column(&roles.target)?;
    let hist_cols = roles
        .hist_exog
        .iter()
        .map(|n| column(n))
        .collect::<Result<Vec<_>, _>>()?;
    let futr_cols = roles
        .futr_exog
        .iter()
        .map(|n| column(n))
        .collect::<Result<Vec<_>, _>>()?;
    let stat_cols = roles
        .static_exog
        .iter()
        .map(|n| column(n))
        .collect::<Result<Vec<_>, _>>()?;

    let mut timestamps = Vec::new();
    let mut target = Vec::new();
    let mut hist = vec![Vec::new(); hist_cols.len()];
    let mut futr = vec![Vec::new(); futr_cols.len()];
    let mut stat: Vec<Option<f64>> = vec![None; stat_cols.len()];

    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| DataError::Csv(e.to_string()))?;
        let field = |col: usize| record.get(col).unwrap_or("");
        let raw_ts = field(ts_col);
        let ts = parse_timestamp(raw_ts).ok_or_else(|| DataError::Timestamp {
            row,
            value: raw_ts.to_string(),
        })?;
        timestamps.push(ts);
        target.push(parse_value(field(target_col), &roles.target, row)?);
        for (k, &col) in hist_cols.iter().enumerate() {
            hist[k].push(parse_value(field(col), &roles.hist_exog[k], row)?);
        }
        for (k, &col) in futr_cols.iter().enumerate() {
            futr[k].push(parse_value(field(col), &roles.futr_exog[k], row)?);
        }
        for (k, &col) in stat_cols.iter().enumerate() {
            let name = &roles.static_exog[k];
            let v = parse_value(field(col), name, row)?;
            match stat[k] {
                None => stat[k] = Some(v),
                Some(first) if first.to_bits() != v.to_bits() => {
                    return Err(DataError::NonConstantStatic(name.clone()))
                }
                Some(_) => {}
            }
        }
    }

    let split = split.resolve(timestamps.len())?;
    let zip = |names: &[String], values: Vec<Vec<f64>>| {
        names
            .iter()
            .zip(values)
            .map(|(n, v)| Channel::new(n.clone(), v))
            .collect::<Vec<_>>()
    };
    let static_exog = roles
        .static_exog
        .iter()
        .zip(stat)
        .map(|(name, v)| StaticVar {
            name: name.clone(),
            value: v.unwrap_or(0.0),
        })
        .collect();
    let ds = TimeSeriesDataset::new(
        timestamps,
        Channel::new(roles.target.clone(), target),
        zip(&roles.hist_exog, hist),
        zip(&roles.futr_exog, futr),
        static_exog,
        split,
    )?;
    Ok(if roles.calendar {
        ds.with_calendar_features()
    } else {
        ds
    })
}

/// Writes every channel of `ds` with an ISO-8601 `timestamp` column.
/// Values use the shortest representation that parses back to the same
/// bits.
pub fn write_csv(ds: &TimeSeriesDataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let file = File::create(path.as_ref()).map_err(|e| DataError::Io(e.to_string()))?;
    let mut out = BufWriter::new(file);
    write_csv_to(ds, &mut out)?;
    out.flush().map_err(|e| DataError::Io(e.to_string()))
}

pub fn write_csv_to(ds: &TimeSeriesDataset, out: impl Write) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_writer(out);
    let channels: Vec<&Channel> = std::iter::once(&ds.target)
        .chain(&ds.hist_exog)
        .chain(&ds.futr_exog)
        .collect();
    let mut header = vec!["timestamp".to_string()];
    header.extend(channels.iter().map(|c| c.name.clone()));
    header.extend(ds.static_exog.iter().map(|s| s.name.clone()));
    let csv_err = |e: csv::Error| DataError::Csv(e.to_string());
    writer.write_record(&header).map_err(csv_err)?;
    for (i, &ts) in ds.timestamps.iter().enumerate() {
        let mut row = vec![format_timestamp(ts)];
        row.extend(channels.iter().map(|c| c.values[i].to_string()));
        row.extend(ds.static_exog.iter().map(|s| s.value.to_string()));
        writer.write_record(&row).map_err(csv_err)?;
    }
    writer.flush().map_err(|e| DataError::Io(e.to_string()))
}
