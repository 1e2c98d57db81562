//! CSV tables (RFC 4180, UTF-8, header row required).

use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{BtScores, ComparisonRecord, EventDay, ImageRecord, ReferenceSize};

#[derive(Debug, Error)]
pub enum TableError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("missing header row")]
    MissingHeader,
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn row_error(e: csv::Error) -> TableError {
    let line = e.position().map_or(0, |p| p.line());
    TableError::Row {
        line,
        message: match e.kind() {
            csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
            _ => e.to_string(),
        },
    }
}

/// Reads every row of a headed CSV into `T`, checking that the columns in
/// `required` are present.
pub fn read_rows<T: DeserializeOwned>(input: impl Read, required: &[&str]) -> Result<Vec<T>, TableError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(TableError::MissingHeader);
    }
    for col in required {
        if !headers.iter().any(|h| h == *col) {
            return Err(TableError::MissingColumn(col.to_string()));
        }
    }
    rdr.deserialize().map(|r| r.map_err(row_error)).collect()
}

pub fn write_rows<T: Serialize>(out: impl Write, rows: &[T]) -> Result<(), TableError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn open(path: impl AsRef<Path>) -> Result<std::fs::File, TableError> {
    Ok(std::fs::File::open(path)?)
}

pub const COMPARISON_COLUMNS: [&str; 3] = ["item_a", "item_b", "winner"];
pub const ANNOTATION_COLUMNS: [&str; 6] = ["image_id", "date", "location", "faces", "female_faces", "has_child"];
pub const REFERENCE_COLUMNS: [&str; 4] = ["date", "location", "source", "estimate"];

/// Comparisons; the winner column must read `a` or `b`, so ties are rejected.
pub fn read_comparisons(input: impl Read) -> Result<Vec<ComparisonRecord>, TableError> {
    let rows: Vec<ComparisonRecord> = read_rows(input, &COMPARISON_COLUMNS)?;
    for (i, r) in rows.iter().enumerate() {
        r.validate().map_err(|e| TableError::Row {
            line: i as u64 + 2,
            message: e.to_string(),
        })?;
    }
    Ok(rows)
}

pub fn read_comparisons_file(path: impl AsRef<Path>) -> Result<Vec<ComparisonRecord>, TableError> {
    read_comparisons(open(path)?)
}

pub fn read_annotations(input: impl Read) -> Result<Vec<ImageRecord>, TableError> {
    read_rows(input, &ANNOTATION_COLUMNS)
}

pub fn read_annotations_file(path: impl AsRef<Path>) -> Result<Vec<ImageRecord>, TableError> {
    read_annotations(open(path)?)
}

pub fn read_references(input: impl Read) -> Result<Vec<ReferenceSize>, TableError> {
    read_rows(input, &REFERENCE_COLUMNS)
}

pub fn read_series(input: impl Read) -> Result<Vec<EventDay>, TableError> {
    read_rows(input, &["date", "location", "face_count"])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub item: String,
    pub merit: f64,
    pub score: f64,
}

pub fn score_rows(fit: &BtScores) -> Vec<ScoreRow> {
    fit.items
        .iter()
        .zip(fit.merits.iter().zip(&fit.scores))
        .map(|(item, (&merit, &score))| ScoreRow {
            item: item.clone(),
            merit,
            score,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use crate::analytics::Winner;

    #[test]
    fn comparisons_parse_and_reject_ties() {
        let ok = "item_a,item_b,winner\nx,y,a\ny,z,b\n";
        let rows = read_comparisons(ok.as_bytes()).unwrap();
        assert_eq!(rows[1].winner, Winner::B);
        let tie = "item_a,item_b,winner\nx,y,tie\n";
        assert!(matches!(read_comparisons(tie.as_bytes()), Err(TableError::Row { line: 2, .. })));
        let same = "item_a,item_b,winner\nx,x,a\n";
        assert!(matches!(read_comparisons(same.as_bytes()), Err(TableError::Row { line: 2, .. })));
        assert!(matches!(read_comparisons("".as_bytes()), Err(TableError::MissingHeader)));
        assert!(matches!(
            read_comparisons("item_a,winner\nx,a\n".as_bytes()),
            Err(TableError::MissingColumn(c)) if c == "item_b"
        ));
    }

    #[test]
    fn annotations_round_trip() {
        let text = "image_id,date,location,faces,female_faces,has_child\np1,2019-06-15,HK,3,2,true\np2,2019-06-16,HK,0,0,false\n";
        let rows = read_annotations(text.as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].faces, 3);
        let mut buf = Vec::new();
        write_rows(&mut buf, &rows).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), text);
    }

    #[test]
    fn series_with_missing_violence() {
        let day = EventDay {
            date: NaiveDate::from_ymd_opt(2019, 6, 15).unwrap(),
            location: "HK".into(),
            face_count: 4,
            pct_female: 0.25,
            pct_child_photos: 0.0,
            violence: None,
            n_tweets: 2,
            no_faces: false,
        };
        let mut buf = Vec::new();
        write_rows(&mut buf, std::slice::from_ref(&day)).unwrap();
        assert_eq!(read_series(buf.as_slice()).unwrap(), vec![day]);
    }
}
