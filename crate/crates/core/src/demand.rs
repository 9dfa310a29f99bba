//! Hourly per-station demand tables turned into forecasting sequences.
//!
//! The CSV layout is `station,hour,demand` with one row per station and hour.
//! Each sample forecasts one station's demand at hour `t` from the previous
//! `window` hours.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{Event, FieldValue, SequenceDataset, SequenceRecord};
use crate::error::{Error, Result};
use crate::task::Label;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandRow {
    pub station: String,
    /// Hours since the start of the record.
    pub hour: u32,
    pub demand: f64,
}

pub fn read_demand_csv(path: &Path) -> Result<Vec<DemandRow>> {
    read_demand(std::fs::File::open(path)?)
}

pub fn read_demand<R: Read>(reader: R) -> Result<Vec<DemandRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    if headers.iter().collect::<Vec<_>>() != ["station", "hour", "demand"] {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `station,hour,demand`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.deserialize::<DemandRow>() {
        let row = rec.map_err(csv_error)?;
        if !(row.demand.is_finite() && row.demand >= 0.0) {
            return Err(Error::Parse {
                line: rows.len() + 2,
                message: format!("demand {} must be finite and nonnegative", row.demand),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("demand table has no rows".into()));
    }
    Ok(rows)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

pub fn write_demand<W: Write>(rows: &[DemandRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_demand_csv(rows: &[DemandRow], path: &Path) -> Result<()> {
    write_demand(rows, std::io::BufWriter::new(std::fs::File::create(path)?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemandSplits {
    pub train: SequenceDataset,
    pub val: SequenceDataset,
    pub test: SequenceDataset,
}

pub const DEMAND_FIELD: &str = "demand";
pub const HOUR_FIELD: &str = "hour_of_day";

fn event(hour: u32, demand: f64) -> Event {
    let mut ev = Event::new();
    ev.insert(DEMAND_FIELD.into(), FieldValue::Number(demand));
    ev.insert(HOUR_FIELD.into(), FieldValue::Text(format!("h{:02}", hour % 24)));
    ev
}

/// Windows every station's series and splits 8:1:1 chronologically by the
/// target hour. Stations must cover one contiguous, shared hour range.
pub fn demand_sequences(rows: &[DemandRow], window: usize) -> Result<DemandSplits> {
    if window == 0 {
        return Err(Error::Parameter("window must be positive".into()));
    }
    let mut series: BTreeMap<&str, BTreeMap<u32, f64>> = BTreeMap::new();
    for r in rows {
        if series.entry(&r.station).or_default().insert(r.hour, r.demand).is_some() {
            return Err(Error::SchemaViolation {
                field: "hour".into(),
                detail: format!("station `{}` repeats hour {}", r.station, r.hour),
            });
        }
    }
    let hours: Vec<u32> = series.values().next().map(|s| s.keys().copied().collect()).unwrap_or_default();
    let (first, last) = (hours[0], hours[hours.len() - 1]);
    if (last - first) as usize + 1 != hours.len() {
        return Err(Error::SchemaViolation {
            field: "hour".into(),
            detail: "hours must be contiguous".into(),
        });
    }
    for (station, s) in &series {
        if s.keys().copied().ne(hours.iter().copied()) {
            return Err(Error::SchemaViolation {
                field: "hour".into(),
                detail: format!("station `{station}` does not cover the shared hour range"),
            });
        }
    }
    let targets: Vec<u32> = hours.iter().copied().skip(window).collect();
    if targets.len() < 3 {
        return Err(Error::EmptyInput(format!(
            "{} hours leave fewer than three target hours for window {window}",
            hours.len()
        )));
    }
    let n_train = targets.len() * 8 / 10;
    let n_val = (targets.len() / 10).max(1);
    let mut splits = [Vec::new(), Vec::new(), Vec::new()];
    for (ti, &t) in targets.iter().enumerate() {
        let part = if ti < n_train {
            0
        } else if ti < n_train + n_val {
            1
        } else {
            2
        };
        for (station, s) in &series {
            let events = (t - window as u32..t).map(|h| event(h, s[&h])).collect();
            splits[part].push(SequenceRecord {
                id: format!("{station}@{t}"),
                events,
                label: Label::Value(s[&t]),
            });
        }
    }
    let [train, val, test] = splits;
    Ok(DemandSplits {
        train: SequenceDataset::new(train)?,
        val: SequenceDataset::new(val)?,
        test: SequenceDataset::new(test)?,
    })
}
