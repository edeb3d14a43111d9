//! Error/timing tables for convergence studies, written as CSV, with
//! least-squares slope fits on log-log data.

use crate::error::CliError;
use std::fmt::Write as _;

/// One (mesh, degree) measurement.
#[derive(Debug, Clone)]
pub struct ReportRow {
    /// Longest lifted edge chord over all elements.
    pub h: f64,
    pub degree: usize,
    pub elements: usize,
    /// Global unknowns (skeleton + interior).
    pub dof: usize,
    /// Relative max-norm error against the exact solution, if one is known.
    pub err_linf: Option<f64>,
    pub t_build: f64,
    pub t_merge: f64,
    pub t_solve: f64,
}

#[derive(Debug, Default)]
pub struct ErrorReport {
    pub rows: Vec<ReportRow>,
}

/// Least-squares slope of log(y) against log(x).
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

impl ErrorReport {
    pub fn push(&mut self, row: ReportRow) {
        self.rows.push(row);
    }

    /// CSV with a fixed header; error column is empty when no exact
    /// solution is configured. Deterministic apart from the timing columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("h,n,N,dof,err_linf,t_build,t_merge,t_solve\n");
        for r in &self.rows {
            let err = r.err_linf.map(|e| format!("{e:.17e}")).unwrap_or_default();
            let _ = writeln!(
                out,
                "{:.17e},{},{},{},{err},{:.6},{:.6},{:.6}",
                r.h, r.degree, r.elements, r.dof, r.t_build, r.t_merge, r.t_solve
            );
        }
        out
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_csv())
            .map_err(|e| CliError::io(format!("writing {}: {e}", path.display())))
    }

    /// Fitted error decay rate -d log(err)/d log(h) for one degree's rows.
    pub fn slope_for_degree(&self, degree: usize) -> Option<f64> {
        let rows: Vec<&ReportRow> =
            self.rows.iter().filter(|r| r.degree == degree && r.err_linf.is_some()).collect();
        if rows.len() < 2 {
            return None;
        }
        let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
        let es: Vec<f64> = rows.iter().map(|r| r.err_linf.unwrap()).collect();
        Some(loglog_slope(&hs, &es))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_recovers_exact_power_laws() {
        let hs = [0.4f64, 0.2, 0.1, 0.05];
        let es: Vec<f64> = hs.iter().map(|h| 3.0 * h.powi(4)).collect();
        assert!((loglog_slope(&hs, &es) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn csv_shape_and_degree_filter() {
        let mut report = ErrorReport::default();
        for (i, h) in [0.4, 0.2].iter().enumerate() {
            report.push(ReportRow {
                h: *h,
                degree: 5,
                elements: 20 * (i + 1),
                dof: 301 * (i + 1),
                err_linf: Some(h.powi(4)),
                t_build: 0.1,
                t_merge: 0.2,
                t_solve: 0.05,
            });
        }
        report.push(ReportRow {
            h: 0.4,
            degree: 9,
            elements: 20,
            dof: 901,
            err_linf: None,
            t_build: 0.1,
            t_merge: 0.2,
            t_solve: 0.05,
        });
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("h,n,N,dof,err_linf,"));
        let slope = report.slope_for_degree(5).unwrap();
        assert!((slope - 4.0).abs() < 1e-12);
        assert!(report.slope_for_degree(9).is_none(), "single row or missing error");
    }
}
