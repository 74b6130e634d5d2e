//! Column-wise deviation between two trajectory files on one time grid.

use std::fmt::Write as _;

use crate::table::{Table, COLUMNS};

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnDeviation {
    pub column: &'static str,
    /// Rows where both files carry a value.
    pub rows: usize,
    pub max_abs: f64,
    pub mean_abs: f64,
    /// Mean of `a − b`; its sign tells which run lies higher.
    pub mean_signed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: usize,
    pub columns: Vec<ColumnDeviation>,
}

const GRID_TOL: f64 = 1e-9;

pub fn compare(a: &Table, b: &Table) -> Result<Report, String> {
    if a.rows.len() != b.rows.len() {
        return Err(format!(
            "time grids differ: {} rows against {} rows",
            a.rows.len(),
            b.rows.len()
        ));
    }
    for (k, (ta, tb)) in a.times().zip(b.times()).enumerate() {
        if (ta - tb).abs() > GRID_TOL * ta.abs().max(1.0) {
            return Err(format!("time grids differ at row {}: {ta} against {tb}", k + 1));
        }
    }
    let columns = (1..COLUMNS.len())
        .map(|c| {
            let diffs: Vec<f64> = a
                .rows
                .iter()
                .zip(&b.rows)
                .filter_map(|(ra, rb)| Some(ra[c]? - rb[c]?))
                .collect();
            let n = diffs.len();
            let (max_abs, mean_abs, mean_signed) = if n == 0 {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                (
                    diffs.iter().fold(0.0_f64, |m, d| m.max(d.abs())),
                    diffs.iter().map(|d| d.abs()).sum::<f64>() / n as f64,
                    diffs.iter().sum::<f64>() / n as f64,
                )
            };
            ColumnDeviation {
                column: COLUMNS[c],
                rows: n,
                max_abs,
                mean_abs,
                mean_signed,
            }
        })
        .collect();
    Ok(Report {
        rows: a.rows.len(),
        columns,
    })
}

impl Report {
    pub fn column(&self, name: &str) -> Option<&ColumnDeviation> {
        self.columns.iter().find(|c| c.column == name)
    }

    /// Largest impurity-population deviation, the headline number.
    pub fn population_max(&self) -> f64 {
        ["n_imp_alpha", "n_imp_beta"]
            .iter()
            .filter_map(|c| self.column(c))
            .fold(0.0, |m, c| m.max(c.max_abs))
    }

    /// Human-readable table followed by one `summary` line of `key=value`
    /// pairs.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<18} {:>6} {:>13} {:>13} {:>13}",
            "column", "rows", "max_abs", "mean_abs", "mean_a_minus_b"
        );
        for c in &self.columns {
            if c.rows == 0 {
                let _ = writeln!(s, "{:<18} {:>6} {:>13}", c.column, 0, "n/a");
            } else {
                let _ = writeln!(
                    s,
                    "{:<18} {:>6} {:>13.6e} {:>13.6e} {:>13.6e}",
                    c.column, c.rows, c.max_abs, c.mean_abs, c.mean_signed
                );
            }
        }
        let _ = write!(s, "summary rows={} max_abs_population={:e}", self.rows, self.population_max());
        for c in self.columns.iter().filter(|c| c.rows > 0) {
            let _ = write!(s, " {}.max_abs={:e} {}.mean_signed={:e}", c.column, c.max_abs, c.column, c.mean_signed);
        }
        s.push('\n');
        s
    }
}
