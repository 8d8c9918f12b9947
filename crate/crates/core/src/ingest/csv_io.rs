use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::FixedOffset;

use super::{time_slot, CheckIn, IngestError};

pub const CSV_HEADER: [&str; 6] = ["user_id", "poi_id", "category_id", "lat", "lon", "timestamp"];

/// Reads the check-in CSV at `path`; time slots use `tz`.
pub fn load_checkins(path: &Path, tz: FixedOffset) -> Result<Vec<CheckIn>, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_checkins(file, tz)
}

pub fn parse_checkins<R: Read>(reader: R, tz: FixedOffset) -> Result<Vec<CheckIn>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        // Line 1 is the header.
        let line = i + 2;
        let rec = rec.map_err(|e| IngestError::Malformed {
            line,
            msg: e.to_string(),
        })?;
        out.push(parse_row(&rec, line, tz)?);
    }
    if out.is_empty() {
        return Err(IngestError::EmptyData);
    }
    Ok(out)
}

fn parse_row(rec: &csv::StringRecord, line: usize, tz: FixedOffset) -> Result<CheckIn, IngestError> {
    let bad = |msg: String| IngestError::Malformed { line, msg };
    if rec.len() != CSV_HEADER.len() {
        return Err(bad(format!("expected {} fields, found {}", CSV_HEADER.len(), rec.len())));
    }
    let num = |k: usize| -> Result<f64, IngestError> {
        rec[k]
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| bad(format!("{} `{}` is not a number", CSV_HEADER[k], &rec[k])))
    };
    let latitude = num(3)?;
    let longitude = num(4)?;
    if !(-90.0..=90.0).contains(&latitude) {
        return Err(bad(format!("latitude {latitude} outside [-90, 90]")));
    }
    if !(-180.0..=180.0).contains(&longitude) {
        return Err(bad(format!("longitude {longitude} outside [-180, 180]")));
    }
    let timestamp: i64 = rec[5]
        .parse()
        .map_err(|_| bad(format!("timestamp `{}` is not an integer", &rec[5])))?;
    let time_slot = time_slot(timestamp, tz).ok_or_else(|| bad(format!("timestamp {timestamp} out of range")))?;
    for (k, name) in CSV_HEADER.iter().enumerate().take(3) {
        if rec[k].is_empty() {
            return Err(bad(format!("empty {name}")));
        }
    }
    Ok(CheckIn {
        user_id: rec[0].to_string(),
        poi_id: rec[1].to_string(),
        category_id: rec[2].to_string(),
        latitude,
        longitude,
        timestamp,
        time_slot,
    })
}

/// Writes check-ins in the CSV schema; floats use shortest round-trip form.
pub fn write_checkins<W: Write>(writer: W, checkins: &[CheckIn]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for c in checkins {
        w.write_record([
            c.user_id.as_str(),
            c.poi_id.as_str(),
            c.category_id.as_str(),
            &c.latitude.to_string(),
            &c.longitude.to_string(),
            &c.timestamp.to_string(),
        ])?;
    }
    w.flush().map_err(|source| IngestError::Io {
        path: "<output>".into(),
        source,
    })?;
    Ok(())
}
