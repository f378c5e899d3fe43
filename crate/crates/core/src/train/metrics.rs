use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::{Error, Result};

pub const METRICS_HEADER: &str = "iteration,train_loss,val_acc,test_acc,seconds";

/// One evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    /// Completed iterations.
    pub iteration: usize,
    /// Mean batch loss since the previous row.
    pub train_loss: f64,
    pub val_acc: Option<f64>,
    pub test_acc: f64,
    /// Wall clock since training started; `None` in deterministic runs.
    pub seconds: Option<f64>,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>, prec: usize| match v {
            Some(v) => format!("{v:.prec$}"),
            None => "NA".to_string(),
        };
        format!(
            "{},{:.8},{},{:.6},{}",
            self.iteration,
            self.train_loss,
            opt(self.val_acc, 6),
            self.test_acc,
            opt(self.seconds, 3)
        )
    }

    pub fn from_csv(line: &str) -> Result<Self> {
        let bad = || Error::Invalid(format!("metrics row {line:?}"));
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 5 {
            return Err(bad());
        }
        let opt = |s: &str| -> Result<Option<f64>> {
            if s == "NA" {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad())
            }
        };
        Ok(MetricsRow {
            iteration: fields[0].parse().map_err(|_| bad())?,
            train_loss: fields[1].parse().map_err(|_| bad())?,
            val_acc: opt(fields[2])?,
            test_acc: fields[3].parse().map_err(|_| bad())?,
            seconds: opt(fields[4])?,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    pub rows: Vec<MetricsRow>,
}

impl MetricsLog {
    pub fn push(&mut self, row: MetricsRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.iteration <= last.iteration {
                return Err(Error::Contract(format!(
                    "metrics iteration {} after {}",
                    row.iteration, last.iteration
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn last(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }

    /// The row logged at `iteration`, if any.
    pub fn at(&self, iteration: usize) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.iteration == iteration)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{METRICS_HEADER}\n");
        for r in &self.rows {
            s.push_str(&r.to_csv());
            s.push('\n');
        }
        s
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
        let mut log = MetricsLog::default();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(format!("read {}", path.display()), e))?;
            if n == 0 || line.trim().is_empty() {
                continue;
            }
            log.push(MetricsRow::from_csv(&line)?)?;
        }
        Ok(log)
    }
}

/// Append-only metrics file, flushed after each row.
pub struct MetricsWriter {
    file: File,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut file = File::create(path).map_err(|e| Error::io(format!("create {}", path.display()), e))?;
        writeln!(file, "{METRICS_HEADER}").map_err(|e| Error::io("write metrics header", e))?;
        Ok(MetricsWriter { file })
    }

    pub fn append(&mut self, row: &MetricsRow) -> Result<()> {
        writeln!(self.file, "{}", row.to_csv()).map_err(|e| Error::io("write metrics row", e))?;
        self.file.flush().map_err(|e| Error::io("flush metrics", e))
    }
}
