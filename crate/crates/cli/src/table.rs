//! Versioned CSV trajectory files.

use std::io::{BufRead, BufReader, Read, Write};

use thermocc::TrajectoryRecord;

pub const VERSION_LINE: &str = "# thermocc-csv v1";

pub const COLUMNS: [&str; 9] = [
    "time",
    "n_imp_alpha",
    "n_imp_beta",
    "n_total",
    "polarization",
    "n_electrons",
    "trace_dev",
    "herm_dev",
    "discarded_weight",
];

/// Rows of a trajectory file; `None` marks a column the method cannot fill.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub rows: Vec<[Option<f64>; 9]>,
}

impl Table {
    pub fn from_record(record: &TrajectoryRecord) -> Self {
        let rows = record
            .samples()
            .iter()
            .map(|s| {
                [
                    Some(s.time),
                    Some(s.n_imp[0]),
                    Some(s.n_imp[1]),
                    Some(s.n_total()),
                    Some(s.polarization()),
                    Some(s.n_electrons),
                    s.trace_dev,
                    s.herm_dev,
                    s.discarded_weight,
                ]
            })
            .collect();
        Self { rows }
    }

    /// Values are written in shortest round-trip form, so a file read back
    /// reproduces the record bit for bit.
    pub fn write<W: Write>(&self, out: W) -> Result<(), String> {
        let mut out = out;
        writeln!(out, "{VERSION_LINE}").map_err(|e| e.to_string())?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(COLUMNS).map_err(|e| e.to_string())?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()))
                .map_err(|e| e.to_string())?;
        }
        w.flush().map_err(|e| e.to_string())
    }

    pub fn read<R: Read>(input: R) -> Result<Self, String> {
        let mut input = BufReader::new(input);
        let mut first = String::new();
        input.read_line(&mut first).map_err(|e| e.to_string())?;
        if first.trim_end() != VERSION_LINE {
            return Err(format!("missing `{VERSION_LINE}` header line"));
        }
        let mut r = csv::ReaderBuilder::new().from_reader(input);
        let header = r.headers().map_err(|e| e.to_string())?;
        if header.iter().ne(COLUMNS) {
            return Err(format!("unexpected columns `{}`", header.iter().collect::<Vec<_>>().join(",")));
        }
        let mut rows = Vec::new();
        for (k, record) in r.records().enumerate() {
            let record = record.map_err(|e| e.to_string())?;
            let mut row = [None; 9];
            for (cell, text) in row.iter_mut().zip(record.iter()) {
                if !text.is_empty() {
                    *cell = Some(text.parse::<f64>().map_err(|_| {
                        format!("data row {}: `{text}` is not a number", k + 1)
                    })?);
                }
            }
            if row[0].is_none() {
                return Err(format!("data row {}: empty time", k + 1));
            }
            rows.push(row);
        }
        Ok(Self { rows })
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r[0].unwrap_or(f64::NAN))
    }
}
