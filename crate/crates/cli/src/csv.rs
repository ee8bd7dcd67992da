//! Trajectory CSV files: a `t` column followed by the column-major entries
//! of `Λ(t)`, one row per grid node the trajectory covers.
//!
//! Numbers are written as `{:.16e}` (17 significant digits), which parses
//! back to the identical `f64`.

use std::fmt::Write as _;

use lqconic_core::riccati::MatTrajectory;
use nalgebra::DMatrix;

pub fn header(n: usize) -> String {
    let mut h = String::from("t");
    for j in 1..=n {
        for i in 1..=n {
            write!(h, ",L{i}_{j}").unwrap();
        }
    }
    h
}

pub fn format_trajectory(traj: &MatTrajectory) -> String {
    let mut out = header(traj.dim());
    out.push('\n');
    for (_, t, s) in traj.iter() {
        write!(out, "{t:.16e}").unwrap();
        for v in s.as_matrix().iter() {
            write!(out, ",{v:.16e}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Rows of a trajectory file as `(t, Λ(t))`.
pub fn parse_trajectory(text: &str) -> Result<Vec<(f64, DMatrix<f64>)>, String> {
    let mut lines = text.lines();
    let head = lines.next().ok_or("empty file")?;
    let cols = head.split(',').count();
    let n = ((cols - 1) as f64).sqrt().round() as usize;
    if head != header(n) {
        return Err(format!("line 1: unexpected header {head:?}"));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let vals = line
                .split(',')
                .map(str::parse::<f64>)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| format!("line {}: {e}", i + 2))?;
            if vals.len() != cols {
                return Err(format!(
                    "line {}: {} fields, expected {cols}",
                    i + 2,
                    vals.len()
                ));
            }
            Ok((vals[0], DMatrix::from_column_slice(n, n, &vals[1..])))
        })
        .collect()
}
