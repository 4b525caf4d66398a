use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricsReport;

/// Column order of the report CSV.
pub const REPORT_COLUMNS: [&str; 10] = [
    "epoch",
    "train_loss",
    "val_pseudo_huber",
    "val_mae",
    "val_mse",
    "val_badpix01",
    "val_badpix03",
    "val_badpix07",
    "val_tv",
    "seconds",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based index of the completed epoch.
    pub epoch: usize,
    /// Mean training loss over the epoch's (augmented) batches.
    pub train_loss: f64,
    pub val: MetricsReport,
    pub seconds: f64,
}

impl EpochRecord {
    fn row(&self) -> [f64; 10] {
        let v = &self.val;
        [
            self.epoch as f64,
            self.train_loss,
            v.pseudo_huber,
            v.mae,
            v.mse,
            v.badpix01,
            v.badpix03,
            v.badpix07,
            v.tv,
            self.seconds,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Training-mode loss of the initial state over the unaugmented training set.
    pub initial_train_loss: f64,
    pub history: Vec<EpochRecord>,
}

impl TrainReport {
    pub fn final_train_loss(&self) -> Option<f64> {
        self.history.last().map(|r| r.train_loss)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::parse("report csv", e.to_string());
        w.write_record(REPORT_COLUMNS).map_err(err)?;
        for r in &self.history {
            let row = r.row();
            let mut fields = vec![r.epoch.to_string()];
            fields.extend(row[1..].iter().map(|v| format!("{v:?}")));
            w.write_record(&fields).map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::parse("report csv", e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("ascii csv"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    /// Parse the rows of a report CSV (validation `count` is not stored).
    pub fn parse_csv(text: &str) -> Result<Vec<EpochRecord>> {
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let err = |e: csv::Error| Error::parse("report csv", e.to_string());
        let header = rd.headers().map_err(err)?.clone();
        if header.iter().ne(REPORT_COLUMNS) {
            return Err(Error::parse("report csv", format!("unexpected header {header:?}")));
        }
        let mut out = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(err)?;
            let f = |i: usize| -> Result<f64> {
                rec[i]
                    .parse::<f64>()
                    .map_err(|_| Error::parse("report csv", format!("bad value {:?}", &rec[i])))
            };
            let epoch = rec[0]
                .parse::<usize>()
                .map_err(|_| Error::parse("report csv", format!("bad epoch {:?}", &rec[0])))?;
            out.push(EpochRecord {
                epoch,
                train_loss: f(1)?,
                val: MetricsReport {
                    pseudo_huber: f(2)?,
                    mae: f(3)?,
                    mse: f(4)?,
                    badpix01: f(5)?,
                    badpix03: f(6)?,
                    badpix07: f(7)?,
                    tv: f(8)?,
                    count: 0,
                },
                seconds: f(9)?,
            });
        }
        Ok(out)
    }

    pub(crate) fn history_matrix(history: &[EpochRecord]) -> Vec<f64> {
        history
            .iter()
            .flat_map(|r| {
                let mut row = r.row().to_vec();
                row.push(r.val.count as f64);
                row
            })
            .collect()
    }

    pub(crate) fn history_from_matrix(data: &[f64]) -> Result<Vec<EpochRecord>> {
        if !data.len().is_multiple_of(11) {
            return Err(Error::dim("history matrix must have 11 columns"));
        }
        Ok(data
            .chunks_exact(11)
            .map(|r| EpochRecord {
                epoch: r[0] as usize,
                train_loss: r[1],
                val: MetricsReport {
                    pseudo_huber: r[2],
                    mae: r[3],
                    mse: r[4],
                    badpix01: r[5],
                    badpix03: r[6],
                    badpix07: r[7],
                    tv: r[8],
                    count: r[10] as usize,
                },
                seconds: r[9],
            })
            .collect())
    }
}
