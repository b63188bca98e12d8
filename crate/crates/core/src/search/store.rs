//! CSV persistence for experiment records.
//!
//! Layout: header `id,r,d,w,flops,params,ratio,accuracy`, UTF-8, LF line
//! endings, floats written with their shortest round-trip representation.
//! A blank accuracy means the record is still pending.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use super::{ExperimentRecord, SearchError};
use crate::arch::ScalingCoefficients;

pub const STORE_HEADER: [&str; 8] = ["id", "r", "d", "w", "flops", "params", "ratio", "accuracy"];

/// Ordered set of records keyed by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecordStore {
    records: Vec<ExperimentRecord>,
    index: HashMap<String, usize>,
}

/// What an ingest changed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestSummary {
    pub updated: usize,
    pub appended: usize,
}

#[derive(Debug, Default)]
struct Row {
    line: u64,
    id: String,
    r: Option<f64>,
    d: Option<f64>,
    w: Option<f64>,
    flops: Option<u64>,
    params: Option<u64>,
    ratio: Option<f64>,
    accuracy: Option<f64>,
}

impl Row {
    fn full_record(&self) -> Option<ExperimentRecord> {
        Some(ExperimentRecord {
            id: self.id.clone(),
            coeffs: ScalingCoefficients {
                r: self.r?,
                d: self.d?,
                w: self.w?,
            },
            flops: self.flops?,
            params: self.params?,
            realized_ratio: self.ratio?,
            accuracy: self.accuracy,
        })
    }

    fn conflicts_with(&self, rec: &ExperimentRecord) -> bool {
        let differs = |given: Option<f64>, stored: f64| given.is_some_and(|v| v != stored);
        differs(self.r, rec.coeffs.r) || differs(self.d, rec.coeffs.d) || differs(self.w, rec.coeffs.w)
    }
}

fn parse_rows(reader: impl Read) -> Result<Vec<Row>, SearchError> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| SearchError::Malformed {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let id_col = column("id").ok_or_else(|| SearchError::Malformed {
        line: 1,
        message: "missing `id` column".into(),
    })?;
    let cols = STORE_HEADER.map(column);

    let mut rows = Vec::new();
    for result in csv.records() {
        let record = result.map_err(|e| SearchError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| cols[i].and_then(|c| record.get(c)).filter(|s| !s.is_empty());
        let float = |i: usize| -> Result<Option<f64>, SearchError> {
            field(i)
                .map(|s| {
                    s.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| SearchError::Malformed {
                            line,
                            message: format!("`{}` is not a finite number in column `{}`", s, STORE_HEADER[i]),
                        })
                })
                .transpose()
        };
        let int = |i: usize| -> Result<Option<u64>, SearchError> {
            field(i)
                .map(|s| {
                    s.parse::<u64>().map_err(|_| SearchError::Malformed {
                        line,
                        message: format!("`{}` is not an integer in column `{}`", s, STORE_HEADER[i]),
                    })
                })
                .transpose()
        };
        let id = record.get(id_col).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(SearchError::Malformed {
                line,
                message: "empty id".into(),
            });
        }
        let row = Row {
            line,
            id,
            r: float(1)?,
            d: float(2)?,
            w: float(3)?,
            flops: int(4)?,
            params: int(5)?,
            ratio: float(6)?,
            accuracy: float(7)?,
        };
        if let Some(value) = row.accuracy {
            if !(0.0..=1.0).contains(&value) {
                return Err(SearchError::InvalidAccuracy { line, value });
            }
        }
        for v in [row.r, row.d, row.w].into_iter().flatten() {
            if v <= 0.0 {
                return Err(SearchError::Malformed {
                    line,
                    message: format!("coefficient {v} must be positive"),
                });
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

impl RecordStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a store; a repeated id is a conflict unless the records agree.
    pub fn from_records(records: impl IntoIterator<Item = ExperimentRecord>) -> Result<Self, SearchError> {
        let mut store = Self::new();
        for rec in records {
            store.insert(rec)?;
        }
        Ok(store)
    }

    pub fn insert(&mut self, rec: ExperimentRecord) -> Result<(), SearchError> {
        match self.index.get(&rec.id) {
            Some(&i) if self.records[i].coeffs != rec.coeffs => Err(SearchError::Conflict { id: rec.id }),
            Some(&i) => {
                self.records[i] = rec;
                Ok(())
            }
            None => {
                self.index.insert(rec.id.clone(), self.records.len());
                self.records.push(rec);
                Ok(())
            }
        }
    }

    pub fn get(&self, id: &str) -> Option<&ExperimentRecord> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    pub fn records(&self) -> &[ExperimentRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<ExperimentRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records whose accuracy is known.
    pub fn completed(&self) -> Vec<ExperimentRecord> {
        self.records.iter().filter(|r| r.accuracy.is_some()).cloned().collect()
    }

    pub fn is_complete(&self) -> bool {
        self.records.iter().all(|r| r.accuracy.is_some())
    }

    /// Reads a full store. Every row must define a complete record.
    pub fn read_csv(reader: impl Read) -> Result<Self, SearchError> {
        let mut store = Self::new();
        for row in parse_rows(reader)? {
            let rec = row.full_record().ok_or_else(|| SearchError::Malformed {
                line: row.line,
                message: format!("record `{}` is missing a required column", row.id),
            })?;
            store.insert(rec)?;
        }
        Ok(store)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<(), SearchError> {
        let io = |e: csv::Error| SearchError::Io {
            path: "<csv>".into(),
            source: e.into(),
        };
        let mut csv = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        csv.write_record(STORE_HEADER).map_err(io)?;
        for rec in &self.records {
            csv.write_record([
                rec.id.clone(),
                rec.coeffs.r.to_string(),
                rec.coeffs.d.to_string(),
                rec.coeffs.w.to_string(),
                rec.flops.to_string(),
                rec.params.to_string(),
                rec.realized_ratio.to_string(),
                rec.accuracy.map(|a| a.to_string()).unwrap_or_default(),
            ])
            .map_err(io)?;
        }
        csv.flush().map_err(|e| SearchError::Io {
            path: "<csv>".into(),
            source: e,
        })
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SearchError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| SearchError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::read_csv(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SearchError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string()).map_err(|source| SearchError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Merges a CSV stream. Rows naming a known id update its accuracy; rows
    /// with an unknown id must carry a full record and are appended. Nothing
    /// is applied if any row fails.
    pub fn ingest(&mut self, reader: impl Read) -> Result<IngestSummary, SearchError> {
        let rows = parse_rows(reader)?;
        let mut staged = self.clone();
        let mut summary = IngestSummary::default();
        for row in rows {
            match staged.index.get(&row.id).copied() {
                Some(i) => {
                    if row.conflicts_with(&staged.records[i]) {
                        return Err(SearchError::Conflict { id: row.id });
                    }
                    if let Some(acc) = row.accuracy {
                        staged.records[i].accuracy = Some(acc);
                        summary.updated += 1;
                    }
                }
                None => {
                    let rec = row.full_record().ok_or_else(|| SearchError::UnknownId {
                        line: row.line,
                        id: row.id.clone(),
                    })?;
                    staged.insert(rec)?;
                    summary.appended += 1;
                }
            }
        }
        *self = staged;
        Ok(summary)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, r: f64) -> ExperimentRecord {
        ExperimentRecord {
            id: id.into(),
            coeffs: ScalingCoefficients { r, d: 1.0, w: 0.75 },
            flops: 1000,
            params: 10,
            realized_ratio: 0.1 + 0.2,
            accuracy: None,
        }
    }

    #[test]
    fn writes_header_and_full_precision() {
        let store = RecordStore::from_records([record("a", 1.0 / 3.0)]).unwrap();
        let text = store.to_csv_string();
        assert_eq!(
            text,
            "id,r,d,w,flops,params,ratio,accuracy\na,0.3333333333333333,1,0.75,1000,10,0.30000000000000004,\n"
        );
        assert_eq!(RecordStore::read_csv(text.as_bytes()).unwrap(), store);
    }

    #[test]
    fn ingest_updates_accuracy() {
        let mut store = RecordStore::from_records([record("a", 1.0)]).unwrap();
        let summary = store.ingest("id,accuracy\na,0.758\n".as_bytes()).unwrap();
        assert_eq!(
            summary,
            IngestSummary {
                updated: 1,
                appended: 0
            }
        );
        assert_eq!(store.get("a").unwrap().accuracy, Some(0.758));
    }

    #[test]
    fn ingest_rejects_out_of_range_accuracy() {
        let mut store = RecordStore::from_records([record("a", 1.0)]).unwrap();
        let err = store.ingest("id,accuracy\na,1.3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, SearchError::InvalidAccuracy { line: 2, .. }), "{err}");
        assert_eq!(store.get("a").unwrap().accuracy, None);
    }

    #[test]
    fn ingest_names_malformed_line() {
        let mut store = RecordStore::from_records([record("a", 1.0), record("b", 1.0)]).unwrap();
        let err = store.ingest("id,accuracy\na,0.5\nb,high\n".as_bytes()).unwrap_err();
        assert!(matches!(err, SearchError::Malformed { line: 3, .. }), "{err}");
        assert!(err.is_input_error());
        // nothing applied
        assert_eq!(store.get("a").unwrap().accuracy, None);
    }

    #[test]
    fn ingest_conflicting_duplicate() {
        let mut store = RecordStore::from_records([record("a", 1.0)]).unwrap();
        let err = store
            .ingest("id,r,d,w,flops,params,ratio,accuracy\na,1.5,1,0.75,1000,10,0.3,0.7\n".as_bytes())
            .unwrap_err();
        assert!(matches!(&err, SearchError::Conflict { id } if id == "a"));
    }

    #[test]
    fn ingest_appends_full_rows_and_rejects_partial_unknown() {
        let mut store = RecordStore::new();
        let s = store
            .ingest("id,r,d,w,flops,params,ratio,accuracy\nz,1,1,1,5,6,1,0.5\n".as_bytes())
            .unwrap();
        assert_eq!(s.appended, 1);
        assert_eq!(store.get("z").unwrap().accuracy, Some(0.5));
        let err = store.ingest("id,accuracy\nq,0.5\n".as_bytes()).unwrap_err();
        assert!(matches!(err, SearchError::UnknownId { line: 2, .. }));
    }

    #[test]
    fn ingest_is_idempotent() {
        let csv = "id,accuracy\na,0.61\nb,0.62\n";
        let mut once = RecordStore::from_records([record("a", 1.0), record("b", 2.0)]).unwrap();
        once.ingest(csv.as_bytes()).unwrap();
        let mut twice = once.clone();
        twice.ingest(csv.as_bytes()).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn read_requires_full_rows() {
        assert!(RecordStore::read_csv("id,accuracy\na,0.5\n".as_bytes()).is_err());
    }
}
