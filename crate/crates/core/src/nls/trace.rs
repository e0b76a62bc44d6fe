use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One solver state. `inner = 0` marks the state entering an outer block,
/// scored under that block's `β` and `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub outer: usize,
    pub inner: usize,
    pub beta: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub cost_hat: f64,
    pub cost_raw: f64,
    /// Cumulative solver time, excluding cost and SNR bookkeeping.
    pub seconds: f64,
    pub snr_db: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverTrace {
    pub records: Vec<TraceRecord>,
}

impl SolverTrace {
    pub fn push(&mut self, record: TraceRecord) {
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// Records grouped by outer iteration, in order.
    pub fn blocks(&self) -> Vec<&[TraceRecord]> {
        self.records
            .chunk_by(|a, b| a.outer == b.outer)
            .collect()
    }

    pub fn final_cost(&self) -> Option<f64> {
        self.last().map(|r| r.cost_raw)
    }

    pub fn total_seconds(&self) -> f64 {
        self.last().map_or(0.0, |r| r.seconds)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let records = rd.deserialize().collect::<std::result::Result<Vec<TraceRecord>, _>>()?;
        Ok(SolverTrace { records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}
