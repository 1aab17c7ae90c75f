//! CSV input/output for daily series: `date,impressions,clicks[,cost]`.

use std::io::{Read, Write};

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::windowing::{SeriesPoint, TimeSeries};

/// Result of reading a series file.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub series: TimeSeries,
    /// Dates dropped because they had zero impressions.
    pub dropped: Vec<NaiveDate>,
}

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Reads a daily series. Zero-impression rows are skipped with a warning.
pub fn read_series<R: Read>(reader: R) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let names: Vec<&str> = headers.iter().collect();
    let has_cost = match names.as_slice() {
        ["date", "impressions", "clicks"] => false,
        ["date", "impressions", "clicks", "cost"] => true,
        _ => {
            return Err(parse_err(
                1,
                format!(
                    "expected header `date,impressions,clicks[,cost]`, got `{}`",
                    names.join(",")
                ),
            ))
        }
    };

    let mut points = Vec::new();
    let mut dropped = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != headers.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|e| parse_err(line, format!("bad date `{}`: {e}", &record[0])))?;
        let impressions: u64 = record[1]
            .parse()
            .map_err(|_| parse_err(line, format!("bad impressions `{}`", &record[1])))?;
        let clicks: u64 = record[2]
            .parse()
            .map_err(|_| parse_err(line, format!("bad clicks `{}`", &record[2])))?;
        let cost = if has_cost && !record[3].is_empty() {
            let c: f64 = record[3]
                .parse()
                .map_err(|_| parse_err(line, format!("bad cost `{}`", &record[3])))?;
            Some(c)
        } else {
            None
        };
        if impressions == 0 {
            log::warn!("line {line}: {date} has zero impressions; dropped");
            dropped.push(date);
            continue;
        }
        let point = SeriesPoint::new(date, impressions, clicks, cost).map_err(|e| match e {
            Error::InvalidInput(msg) => parse_err(line, msg),
            other => other,
        })?;
        if let Some(prev) = points.last().map(|p: &SeriesPoint| p.date) {
            if date <= prev {
                return Err(parse_err(
                    line,
                    format!("date {date} does not follow {prev}"),
                ));
            }
        }
        points.push(point);
    }
    if points.is_empty() {
        return Err(Error::InsufficientData {
            required: 1,
            actual: 0,
        });
    }
    Ok(Ingested {
        series: TimeSeries::new(points)?,
        dropped,
    })
}

/// Writes a series in the input format; the cost column is emitted only
/// when every point carries a cost.
pub fn write_series<W: Write>(writer: W, series: &TimeSeries) -> Result<()> {
    let with_cost = series.has_cost();
    let mut wtr = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    if with_cost {
        wtr.write_record(["date", "impressions", "clicks", "cost"])
            .map_err(csv_err)?;
    } else {
        wtr.write_record(["date", "impressions", "clicks"])
            .map_err(csv_err)?;
    }
    for p in series.points() {
        let date = p.date.format("%Y-%m-%d").to_string();
        let imps = p.impressions.to_string();
        let clicks = p.clicks.to_string();
        if with_cost {
            let cost = p.cost.unwrap_or_default().to_string();
            wtr.write_record([date, imps, clicks, cost])
                .map_err(csv_err)?;
        } else {
            wtr.write_record([date, imps, clicks]).map_err(csv_err)?;
        }
    }
    wtr.flush()?;
    Ok(())
}
