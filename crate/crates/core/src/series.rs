//! Uniformly sampled time histories and their CSV form.
//!
//! CSV schema: header row, then `t` followed by `<dof>_x, <dof>_x_dot, <dof>_f`
//! per DOF in canonical order. Values are written with 17 significant digits
//! so that a write/read cycle is lossless.

use std::io::{Read, Write};
use std::path::Path;

use crate::dynamics::DofId;
use crate::error::{Error, Result};

/// Relative tolerance used when checking the constant-dt invariant on input.
const DT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub dt: f64,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

pub fn displacement_channel(dof: DofId) -> String {
    format!("{}_x", dof.name())
}

pub fn velocity_channel(dof: DofId) -> String {
    format!("{}_x_dot", dof.name())
}

pub fn force_channel(dof: DofId) -> String {
    format!("{}_f", dof.name())
}

impl TimeSeries {
    /// Empty series with the standard `t, x, x_dot, f` layout for `dofs`.
    pub fn for_dofs(dt: f64, dofs: &[DofId]) -> Self {
        let mut names = vec!["t".to_string()];
        for &d in dofs {
            names.push(displacement_channel(d));
            names.push(velocity_channel(d));
            names.push(force_channel(d));
        }
        Self::with_channels(dt, names)
    }

    pub fn with_channels(dt: f64, names: Vec<String>) -> Self {
        let columns = vec![Vec::new(); names.len()];
        TimeSeries { dt, names, columns }
    }

    /// Appends one record of the standard layout.
    pub fn push_state(&mut self, t: f64, x: &[f64], v: &[f64], f: &[f64]) {
        debug_assert_eq!(self.names.len(), 1 + 3 * x.len());
        self.columns[0].push(t);
        for i in 0..x.len() {
            self.columns[1 + 3 * i].push(x[i]);
            self.columns[2 + 3 * i].push(v[i]);
            self.columns[3 + 3 * i].push(f[i]);
        }
    }

    /// Appends a raw row; `row.len()` must equal the channel count.
    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.names.len(), "row width mismatch");
        for (col, &v) in self.columns.iter_mut().zip(row) {
            col.push(v);
        }
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel_names(&self) -> &[String] {
        &self.names
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    pub fn time(&self) -> &[f64] {
        &self.columns[0]
    }

    /// Drops all records from `len` onwards.
    pub fn truncate(&mut self, len: usize) {
        for c in &mut self.columns {
            c.truncate(len);
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.names)?;
        let mut record = Vec::with_capacity(self.names.len());
        for i in 0..self.len() {
            record.clear();
            record.extend(self.columns.iter().map(|c| format!("{:.16e}", c[i])));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Parses a CSV written by [`TimeSeries::write_csv`]; dt is taken from the
    /// first two samples of the `t` column and checked for uniformity.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let names: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if names.first().map(String::as_str) != Some("t") {
            return Err(Error::Usage("first CSV column must be `t`".into()));
        }
        let mut series = TimeSeries::with_channels(0.0, names);
        let mut row = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            row.clear();
            for field in rec.iter() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Usage(format!("not a number: {field:?}")))?;
                row.push(v);
            }
            if row.len() != series.names.len() {
                return Err(Error::Usage("ragged CSV row".into()));
            }
            series.push_row(&row);
        }
        let t = series.time();
        if t.len() >= 2 {
            let dt = t[1] - t[0];
            if !(dt > 0.0) {
                return Err(Error::Usage("time column must be strictly increasing".into()));
            }
            for w in t.windows(2) {
                if ((w[1] - w[0]) - dt).abs() > DT_TOLERANCE * dt.max(1.0) {
                    return Err(Error::Usage("time column is not uniformly sampled".into()));
                }
            }
            series.dt = dt;
        }
        Ok(series)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}
