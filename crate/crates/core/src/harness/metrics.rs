//! Per-round metrics, CSV output and threshold crossing.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm_sq;
use crate::optimizer::RunRecord;
use crate::problems::Problem;

pub const CSV_HEADER: [&str; 5] = ["t", "f", "grad_norm_sq", "coords_sent_cum", "participants"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub t: usize,
    pub f: f64,
    pub grad_norm_sq: f64,
    /// Coordinates sent per node, averaged over nodes and summed over the
    /// rounds before and including `t`.
    pub coords_sent_cum: f64,
    pub participants: usize,
}

pub fn metrics_rows(record: &RunRecord) -> Vec<MetricsRow> {
    let mut cum = 0.0;
    record
        .rows
        .iter()
        .map(|r| {
            cum += r.mean_coords_sent();
            MetricsRow { t: r.t, f: r.f, grad_norm_sq: r.grad_norm_sq, coords_sent_cum: cum, participants: r.participants }
        })
        .collect()
}

/// First round whose squared gradient norm is at most `tau`.
pub fn rounds_to_threshold(rows: &[MetricsRow], tau: f64) -> Option<usize> {
    rows.iter().find(|r| r.grad_norm_sq <= tau).map(|r| r.t)
}

pub fn write_csv<W: Write>(rows: &[MetricsRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Config(format!("csv output failed: {e}"));
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record(&[
            r.t.to_string(),
            r.f.to_string(),
            r.grad_norm_sq.to_string(),
            r.coords_sent_cum.to_string(),
            r.participants.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(rows, std::io::BufWriter::new(file))
}

/// Lowest objective value seen along `rounds` steps of full gradient
/// descent with step `1 / l` from the origin.
pub fn estimate_f_star(problem: &Problem, l: f64, rounds: usize) -> Result<f64> {
    let mut x = vec![0.0; problem.dim()];
    let mut best = problem.value(&x)?;
    for _ in 0..rounds {
        let g = problem.full_gradient(&x)?;
        if norm_sq(&g) == 0.0 {
            break;
        }
        x.iter_mut().zip(&g).for_each(|(xi, gi)| *xi -= gi / l);
        best = best.min(problem.value(&x)?);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: usize, g: f64) -> MetricsRow {
        MetricsRow { t, f: 1.0, grad_norm_sq: g, coords_sent_cum: t as f64, participants: 1 }
    }

    #[test]
    fn threshold_crossing() {
        let rows = [row(0, 3.0), row(1, 2.0), row(2, 0.5), row(3, 0.7)];
        assert_eq!(rounds_to_threshold(&rows, f64::INFINITY), Some(0));
        assert_eq!(rounds_to_threshold(&rows, 1.0), Some(2));
        assert_eq!(rounds_to_threshold(&rows, 0.0), None);
    }

    #[test]
    fn csv_header_is_exact() {
        let mut buf = Vec::new();
        write_csv(&[row(0, 1.5)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "t,f,grad_norm_sq,coords_sent_cum,participants\n0,1,1.5,0,1\n");
    }
}
