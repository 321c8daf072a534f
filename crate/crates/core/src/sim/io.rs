use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ObservationMatrix;

/// Parses numeric CSV text. A first line with any non-numeric cell is taken
/// as a header.
pub fn parse_csv(text: &str) -> Result<ObservationMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut dim = None;
    let mut values = Vec::new();
    for (idx, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Csv {
            line: e.position().map_or(idx + 1, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(idx + 1, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let row = match parsed {
            Ok(row) => row,
            Err(_) if idx == 0 => continue,
            Err(_) => {
                let (col, cell) = rec
                    .iter()
                    .enumerate()
                    .find(|(_, c)| c.parse::<f64>().is_err())
                    .expect("some cell failed to parse");
                return Err(Error::Csv {
                    line,
                    message: format!("non-numeric cell {:?} in column {}", cell, col + 1),
                });
            }
        };
        if let Some(c) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::Csv {
                line,
                message: format!("non-finite value in column {}", c + 1),
            });
        }
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(Error::Csv {
                    line,
                    message: format!("expected {d} fields, found {}", row.len()),
                })
            }
            _ => {}
        }
        values.extend(row);
    }
    ObservationMatrix::from_flat(dim.ok_or(Error::EmptySample)?, values)
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<ObservationMatrix> {
    parse_csv(&fs::read_to_string(path)?)
}

/// Formats rows with the shortest representation that parses back to the
/// same double.
pub fn format_csv(x: &ObservationMatrix) -> String {
    let mut out = String::with_capacity(x.as_flat().len() * 20);
    for row in x.rows() {
        for (c, v) in row.iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn write_csv(x: &ObservationMatrix, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_csv(x))?;
    Ok(())
}

/// Pretty JSON of any serializable result.
pub fn write_report<T: Serialize>(result: &T, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(result)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_plain_and_headed() {
        let x = parse_csv("1.5,2.0\n3.0,4.0").unwrap();
        assert_eq!(x.nrows(), 2);
        assert_eq!(x.as_flat(), &[1.5, 2.0, 3.0, 4.0]);
        let y = parse_csv("a,b\n1,2\n").unwrap();
        assert_eq!(y.as_flat(), &[1.0, 2.0]);
    }

    #[test]
    fn ragged_rows_report_the_line() {
        match parse_csv("1,2\n3,4\n5\n") {
            Err(Error::Csv { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        match parse_csv("1,2\n3,x\n") {
            Err(Error::Csv { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("column 2"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_finite_and_empty_are_rejected() {
        assert!(parse_csv("1\nNaN\n").is_err());
        assert!(matches!(parse_csv(""), Err(Error::EmptySample)));
        assert!(matches!(parse_csv("x,y\n"), Err(Error::EmptySample)));
    }

    #[test]
    fn round_trip_is_exact() {
        let x = ObservationMatrix::from_flat(2, vec![0.1, -1e-300, 1.0 / 3.0, 6.02e23]).unwrap();
        assert_eq!(parse_csv(&format_csv(&x)).unwrap(), x);
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let x = ObservationMatrix::from_flat(3, (0..30).map(|i| (i as f64).sin()).collect()).unwrap();
        let path = dir.path().join("x.csv");
        write_csv(&x, &path).unwrap();
        assert_eq!(read_csv(&path).unwrap(), x);
        let report = dir.path().join("r.json");
        write_report(&vec![1.5, 2.5], &report).unwrap();
        let back: Vec<f64> = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
        assert_eq!(back, vec![1.5, 2.5]);
        assert!(read_csv(dir.path().join("missing.csv")).is_err());
    }
}
