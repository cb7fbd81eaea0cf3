//! Dataset CSV ingestion/serialization and the two synthetic-data designs.

mod sim;

pub use sim::{
    dose_grid, simulate_sim1, simulate_sim2, Sim1Config, Sim2Config, TrueCorrelations, TrueCurves,
};

use crate::model::{DamRecord, Dataset};
use crate::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

/// Parse a dataset from CSV with header `dose,m,R,y`. Rows violating the
/// record invariants (m < 1 or R + y > m) are rejected with their row
/// number; so are malformed numerics and missing columns.
pub fn parse_dataset<R: Read>(source: R) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    {
        let headers = reader.headers()?;
        let expect = ["dose", "m", "R", "y"];
        let got: Vec<&str> = headers.iter().collect();
        if got != expect {
            return Err(Error::Parse {
                row: 1,
                message: format!("expected header dose,m,R,y, found {}", got.join(",")),
            });
        }
    }
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 2; // header is row 1
        let row = row?;
        if row.len() != 4 {
            return Err(Error::Parse {
                row: row_no,
                message: format!("expected 4 columns, found {}", row.len()),
            });
        }
        let dose: f64 = parse_field(&row[0], "dose", row_no)?;
        let m: u32 = parse_field(&row[1], "m", row_no)?;
        let r: u32 = parse_field(&row[2], "R", row_no)?;
        let y: u32 = parse_field(&row[3], "y", row_no)?;
        let rec = DamRecord::new(dose, m, r, y).map_err(|e| Error::Parse {
            row: row_no,
            message: e.to_string(),
        })?;
        records.push(rec);
    }
    if records.is_empty() {
        return Err(Error::Parse {
            row: 1,
            message: "no data rows".into(),
        });
    }
    Dataset::new(records)
}

fn parse_field<T: std::str::FromStr>(s: &str, name: &str, row: usize) -> Result<T> {
    s.parse().map_err(|_| Error::Parse {
        row,
        message: format!("bad {name} value '{s}'"),
    })
}

/// Write a dataset in the same CSV format `parse_dataset` reads.
pub fn write_dataset<W: Write>(sink: W, data: &Dataset) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(["dose", "m", "R", "y"])?;
    for rec in data.records() {
        writer.write_record(&[
            format_dose(rec.dose),
            rec.implants.to_string(),
            rec.nonviable.to_string(),
            rec.malformed.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

fn format_dose(d: f64) -> String {
    // shortest representation that round-trips exactly
    let mut s = format!("{d}");
    if !s.contains('.') && !s.contains('e') {
        s.push_str(".0");
    }
    s
}

pub fn read_dataset_file(path: &Path) -> Result<Dataset> {
    parse_dataset(std::fs::File::open(path)?)
}

pub fn write_dataset_file(path: &Path, data: &Dataset) -> Result<()> {
    write_dataset(std::fs::File::create(path)?, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_minimal() {
        let ds = parse_dataset("dose,m,R,y\n0,12,1,0\n".as_bytes()).unwrap();
        assert_eq!(ds.n_dams(), 1);
        assert_eq!(ds.records()[0].dose, 0.0);
        assert_eq!(ds.records()[0].implants, 12);
    }

    #[test]
    fn reject_invariant_violation_with_row() {
        let err = parse_dataset("dose,m,R,y\n0,12,1,0\n0,5,4,3\n".as_bytes()).unwrap_err();
        match err {
            Error::Parse { row, .. } => assert_eq!(row, 3),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn reject_bad_numerics_and_header() {
        assert!(parse_dataset("dose,m,R,y\n0,twelve,1,0\n".as_bytes()).is_err());
        assert!(parse_dataset("dose,implants,R,y\n0,12,1,0\n".as_bytes()).is_err());
        assert!(parse_dataset("".as_bytes()).is_err());
    }

    #[test]
    fn roundtrip_identity() {
        let text = "dose,m,R,y\n0.0,12,1,0\n0.625,14,2,3\n5.0,9,9,0\n";
        let ds = parse_dataset(text.as_bytes()).unwrap();
        let mut out = Vec::new();
        write_dataset(&mut out, &ds).unwrap();
        let ds2 = parse_dataset(out.as_slice()).unwrap();
        assert_eq!(ds.records(), ds2.records());
    }
}
