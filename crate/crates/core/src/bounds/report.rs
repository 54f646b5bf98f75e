use std::fmt::Write as _;

use nalgebra::DMatrix;

use super::BoundsCertificate;
use crate::error::{Error, Result};

/// One time sample of an entropy experiment. Unavailable quantities are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub t: f64,
    pub s: f64,
    pub sdot_fd: f64,
    pub sdot_thm1: f64,
    pub sdot_trdf: f64,
    pub fisher: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    /// Values for [`EntropyReport::extra_columns`], in order.
    pub extra: Vec<f64>,
}

impl ReportRow {
    pub fn new(t: f64, s: f64) -> Self {
        Self {
            t,
            s,
            sdot_fd: f64::NAN,
            sdot_thm1: f64::NAN,
            sdot_trdf: f64::NAN,
            fisher: DMatrix::zeros(0, 0),
            sigma: DMatrix::zeros(0, 0),
            extra: Vec::new(),
        }
    }
}

/// Time series of entropy, rates, matrices and bound columns, plus the
/// certificates checked along the way.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EntropyReport {
    pub extra_columns: Vec<String>,
    pub rows: Vec<ReportRow>,
    pub certificates: Vec<BoundsCertificate>,
}

/// Centered differences dv/dt at interior samples; NaN at both ends.
pub fn centered_rate(t: &[f64], v: &[f64]) -> Vec<f64> {
    let n = t.len();
    (0..n)
        .map(|i| if i == 0 || i + 1 >= n { f64::NAN } else { (v[i + 1] - v[i - 1]) / (t[i + 1] - t[i - 1]) })
        .collect()
}

impl EntropyReport {
    pub fn new<S: Into<String>>(extra_columns: impl IntoIterator<Item = S>) -> Self {
        Self { extra_columns: extra_columns.into_iter().map(Into::into).collect(), ..Self::default() }
    }

    pub fn push(&mut self, row: ReportRow) -> Result<()> {
        if row.extra.len() != self.extra_columns.len() {
            return Err(Error::ShapeMismatch(format!(
                "row has {} extra values for {} columns",
                row.extra.len(),
                self.extra_columns.len()
            )));
        }
        if let Some(first) = self.rows.first() {
            if first.fisher.shape() != row.fisher.shape() || first.sigma.shape() != row.sigma.shape() {
                return Err(Error::ShapeMismatch("matrix shapes change between rows".into()));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn certify(&mut self, c: BoundsCertificate) {
        self.certificates.push(c);
    }

    /// Fills `sdot_fd` from centered differences of S over the recorded rows.
    pub fn fill_fd_rates(&mut self) {
        let t: Vec<f64> = self.rows.iter().map(|r| r.t).collect();
        let s: Vec<f64> = self.rows.iter().map(|r| r.s).collect();
        for (row, r) in self.rows.iter_mut().zip(centered_rate(&t, &s)) {
            row.sdot_fd = r;
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.extra_columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r.extra[k]).collect())
    }

    pub fn all_pass(&self) -> bool {
        self.certificates.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &BoundsCertificate> {
        self.certificates.iter().filter(|c| !c.pass)
    }

    fn matrix_header(out: &mut String, name: &str, m: &DMatrix<f64>) {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let _ = write!(out, ",{name}_{i}{j}");
            }
        }
    }

    fn matrix_values(out: &mut String, m: &DMatrix<f64>) {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let _ = write!(out, ",{}", m[(i, j)]);
            }
        }
    }

    /// CSV with header; floats use shortest round-trip formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,S,Sdot_fd,Sdot_thm1,Sdot_trDF");
        if let Some(first) = self.rows.first() {
            Self::matrix_header(&mut out, "F", &first.fisher);
            Self::matrix_header(&mut out, "Sigma", &first.sigma);
        }
        for c in &self.extra_columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{},{},{},{}", r.t, r.s, r.sdot_fd, r.sdot_thm1, r.sdot_trdf);
            Self::matrix_values(&mut out, &r.fisher);
            Self::matrix_values(&mut out, &r.sigma);
            for v in &r.extra {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centered_rate_of_quadratic_is_exact() {
        let t: Vec<f64> = (0..6).map(|i| 0.5 * i as f64).collect();
        let v: Vec<f64> = t.iter().map(|x| 3.0 * x + 1.0).collect();
        let r = centered_rate(&t, &v);
        assert!(r[0].is_nan() && r[5].is_nan());
        assert!(r[1..5].iter().all(|x| (x - 3.0).abs() < 1e-12));
    }

    #[test]
    fn csv_layout() {
        let mut rep = EntropyReport::new(["jensen"]);
        let mut row = ReportRow::new(0.25, 1.5);
        row.fisher = DMatrix::identity(2, 2);
        row.sigma = DMatrix::identity(2, 2) * 0.1;
        row.extra = vec![1.0];
        rep.push(row).unwrap();
        let csv = rep.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,S,Sdot_fd,Sdot_thm1,Sdot_trDF,F_00,F_01,F_10,F_11,Sigma_00,Sigma_01,Sigma_10,Sigma_11,jensen"
        );
        assert_eq!(lines.next().unwrap(), "0.25,1.5,NaN,NaN,NaN,1,0,0,1,0.1,0,0,0.1,1");
        assert!(rep.push(ReportRow::new(0.5, 1.0)).is_err());
    }
}
