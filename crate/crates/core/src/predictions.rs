//! Per-pair predicted metrics and where each value came from.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pairs::Pair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// Direct output of the neural model.
    Model,
    /// Path-augmented estimate.
    Pat,
    /// Masked NMF completion.
    Nmf,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Model => "model",
            Provenance::Pat => "pat",
            Provenance::Nmf => "nmf",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "model" => Ok(Provenance::Model),
            "pat" => Ok(Provenance::Pat),
            "nmf" => Ok(Provenance::Nmf),
            other => Err(Error::invalid(format!("unknown prediction source {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub pair: Pair,
    pub value: f64,
    pub source: Provenance,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PredictionTable {
    pub rows: Vec<Prediction>,
}

impl PredictionTable {
    pub fn from_values(pairs: &[Pair], values: &[f64], source: Provenance) -> Self {
        Self {
            rows: pairs
                .iter()
                .zip(values)
                .map(|(&pair, &value)| Prediction { pair, value, source })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.value).collect()
    }

    pub fn pairs(&self) -> Vec<Pair> {
        self.rows.iter().map(|r| r.pair).collect()
    }

    /// Value predicted for `pair`, if listed.
    pub fn get(&self, pair: Pair) -> Option<f64> {
        self.rows.iter().find(|r| r.pair == pair).map(|r| r.value)
    }

    /// `u,v,predicted` for pure model output; other tables add a `source` column.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let tagged = self.rows.iter().any(|r| r.source != Provenance::Model);
        let mut w = csv::Writer::from_writer(writer);
        if tagged {
            w.write_record(["u", "v", "predicted", "source"])?;
        } else {
            w.write_record(["u", "v", "predicted"])?;
        }
        for r in &self.rows {
            let mut rec = vec![r.pair.lo().to_string(), r.pair.hi().to_string(), r.value.to_string()];
            if tagged {
                rec.push(r.source.as_str().to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let tagged = r.headers()?.get(3) == Some("source");
        let mut rows = Vec::new();
        for (i, record) in r.records().enumerate() {
            let record = record?;
            let bad = || Error::Parse {
                path: "<predictions>".into(),
                line: i + 2,
                message: "expected u,v,predicted[,source]".into(),
            };
            let num = |k: usize| record.get(k).ok_or_else(bad).map(str::trim);
            let u: usize = num(0)?.parse().map_err(|_| bad())?;
            let v: usize = num(1)?.parse().map_err(|_| bad())?;
            let value: f64 = num(2)?.parse().map_err(|_| bad())?;
            let source = if tagged {
                Provenance::parse(num(3)?)?
            } else {
                Provenance::Model
            };
            rows.push(Prediction {
                pair: Pair::new(u, v)?,
                value,
                source,
            });
        }
        Ok(Self { rows })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(File::create(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(File::open(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_forms() {
        let pairs = [Pair::new(0, 1).unwrap(), Pair::new(1, 2).unwrap()];
        let model = PredictionTable::from_values(&pairs, &[1.5, 2.25], Provenance::Model);
        let mut buf = Vec::new();
        model.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "u,v,predicted\n0,1,1.5\n1,2,2.25\n"
        );
        assert_eq!(PredictionTable::read_csv(buf.as_slice()).unwrap(), model);

        let mut mixed = model.clone();
        mixed.rows[1].source = Provenance::Pat;
        let mut buf = Vec::new();
        mixed.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf.clone())
            .unwrap()
            .starts_with("u,v,predicted,source\n0,1,1.5,model\n"));
        assert_eq!(PredictionTable::read_csv(buf.as_slice()).unwrap(), mixed);
    }
}
