//! The metrics CSV: one row per training step, fixed header.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const METRICS_HEADER: [&str; 12] = [
    "step",
    "episode",
    "return",
    "optimal_return",
    "L_TD",
    "L_Align",
    "sigma",
    "alpha",
    "epsilon",
    "grad_norm",
    "eval_return_centralized",
    "eval_return_decentralized",
];

/// Optional columns are left empty when not measured.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    /// Episodes collected so far, warm-up included.
    pub episode: u64,
    /// Mean return of the episodes collected for this step.
    #[serde(rename = "return")]
    pub ret: f64,
    pub optimal_return: Option<f64>,
    #[serde(rename = "L_TD")]
    pub l_td: f64,
    #[serde(rename = "L_Align")]
    pub l_align: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub grad_norm: f64,
    pub eval_return_centralized: Option<f64>,
    pub eval_return_decentralized: Option<f64>,
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("metrics csv: {other:?}")),
    }
}

pub struct MetricsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> MetricsWriter<W> {
    /// Writes the header immediately, so a run with zero rows still yields
    /// a parseable file.
    pub fn new(w: W) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        inner.write_record(METRICS_HEADER).map_err(csv_err)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        self.inner.serialize(row).map_err(csv_err)
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

/// Reads a metrics file, checking the header.
pub fn read_metrics<R: Read>(r: R) -> Result<Vec<MetricsRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().ne(METRICS_HEADER.iter().copied()) {
        return Err(Error::Config(format!("unexpected metrics header: {header:?}")));
    }
    rdr.deserialize().map(|r| r.map_err(csv_err)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(step: u64, x: f64, eval: Option<f64>) -> MetricsRow {
        MetricsRow {
            step,
            episode: step + 3,
            ret: x,
            optimal_return: Some(11.0),
            l_td: x * 0.5,
            l_align: x.abs(),
            sigma: 0.1,
            alpha: 1.0,
            epsilon: 0.05,
            grad_norm: 3.25,
            eval_return_centralized: eval,
            eval_return_decentralized: eval.map(|v| -v),
        }
    }

    #[test]
    fn empty_file_has_header() {
        let mut buf = Vec::new();
        MetricsWriter::new(&mut buf).unwrap().flush().unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.trim_end(), METRICS_HEADER.join(","));
        assert!(read_metrics(&buf[..]).unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn round_trip(xs in prop::collection::vec((-1e6f64..1e6, prop::option::of(-50.0f64..50.0)), 0..20)) {
            let rows: Vec<MetricsRow> = xs.iter().enumerate().map(|(i, &(x, e))| row(i as u64, x, e)).collect();
            let mut buf = Vec::new();
            {
                let mut w = MetricsWriter::new(&mut buf).unwrap();
                for r in &rows {
                    w.write(r).unwrap();
                }
                w.flush().unwrap();
            }
            prop_assert_eq!(read_metrics(&buf[..]).unwrap(), rows);
        }
    }
}
