//! CSV helpers for `u,v,<value>` pair files.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::pairs::Pair;

/// Writes `u,v,<column>` rows under a header.
pub fn write_pair_values<W: Write>(writer: W, column: &str, rows: &[(Pair, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["u", "v", column])?;
    for (pair, value) in rows {
        w.write_record([pair.lo().to_string(), pair.hi().to_string(), value.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `u,v,<value>[,...]` file; the value is the third column whatever its name.
pub fn read_pair_values<R: Read>(reader: R) -> Result<Vec<(Pair, f64)>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record?;
        let field = |k: usize| -> Result<&str> {
            record.get(k).ok_or_else(|| Error::Parse {
                path: "<csv>".into(),
                line: i + 2,
                message: format!("missing column {k}"),
            })
        };
        let parse_err = |what: &str| Error::Parse {
            path: "<csv>".into(),
            line: i + 2,
            message: format!("invalid {what}"),
        };
        let u: usize = field(0)?.trim().parse().map_err(|_| parse_err("u"))?;
        let v: usize = field(1)?.trim().parse().map_err(|_| parse_err("v"))?;
        let value: f64 = field(2)?.trim().parse().map_err(|_| parse_err("value"))?;
        rows.push((Pair::new(u, v)?, value));
    }
    Ok(rows)
}

pub fn save_pair_values(path: impl AsRef<Path>, column: &str, rows: &[(Pair, f64)]) -> Result<()> {
    write_pair_values(File::create(path)?, column, rows)
}

pub fn load_pair_values(path: impl AsRef<Path>) -> Result<Vec<(Pair, f64)>> {
    read_pair_values(File::open(path)?)
}

/// Smallest node count that contains every listed endpoint.
pub fn implied_node_count<'a>(rows: impl IntoIterator<Item = &'a (Pair, f64)>) -> usize {
    rows.into_iter().map(|(p, _)| p.hi() + 1).max().unwrap_or(0)
}

/// Writes `<index>,<column>` rows, numbering from 1.
pub fn save_series(path: impl AsRef<Path>, index: &str, column: &str, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([index, column])?;
    for (i, v) in values.iter().enumerate() {
        w.write_record([(i + 1).to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
