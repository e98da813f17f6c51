//! Trajectory CSV output. Floats are written in shortest round-trip form.

use std::io::{self, Write};

use so3lab::sim::TrajectoryLog;

use crate::report::format_f64;

const VECTOR_COLUMNS: [&str; 5] = ["eRE", "westim_err", "eR", "eOmega", "u"];

pub fn header(with_v: bool) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for name in VECTOR_COLUMNS {
        for axis in ["x", "y", "z"] {
            cols.push(format!("{name}_{axis}"));
        }
    }
    cols.extend(["Psi", "PsiE", "U"].map(String::from));
    if with_v {
        cols.push("V".into());
    }
    cols.extend(["ortho_R", "ortho_Rbar"].map(String::from));
    cols
}

/// Writes one row per logged sample. `v`, when given, holds one value of
/// the combined Lyapunov function per sample.
pub fn write_log(out: &mut impl Write, log: &TrajectoryLog, v: Option<&[f64]>) -> io::Result<()> {
    writeln!(out, "{}", header(v.is_some()).join(","))?;
    let mut row = String::new();
    for (i, s) in log.samples.iter().enumerate() {
        row.clear();
        row.push_str(&format_f64(s.t));
        for vec in [&s.e_r_e, &s.velocity_error, &s.e_r, &s.e_omega, &s.u] {
            for x in vec.iter() {
                row.push(',');
                row.push_str(&format_f64(*x));
            }
        }
        let mut scalars = vec![s.psi, s.psi_e, s.lyapunov];
        if let Some(v) = v {
            scalars.push(v[i]);
        }
        scalars.extend([s.ortho_r, s.ortho_rbar]);
        for x in scalars {
            row.push(',');
            row.push_str(&format_f64(x));
        }
        writeln!(out, "{row}")?;
    }
    Ok(())
}

/// A parsed CSV: header names and numeric rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

pub fn read_table(text: &str) -> Result<Table, String> {
    let mut lines = text.lines();
    let columns: Vec<String> = lines.next().ok_or("empty CSV")?.split(',').map(String::from).collect();
    let rows = lines
        .enumerate()
        .map(|(i, line)| {
            let row = line
                .split(',')
                .map(|f| f.parse::<f64>().map_err(|e| format!("row {}: {e}", i + 1)))
                .collect::<Result<Vec<f64>, String>>()?;
            if row.len() == columns.len() {
                Ok(row)
            } else {
                Err(format!("row {} has {} fields, expected {}", i + 1, row.len(), columns.len()))
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(Table { columns, rows })
}
