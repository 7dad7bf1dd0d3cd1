//! Design matrices: builders, CSV ingestion and emission, shape and rank checks.
//!
//! The CSV dialect is comma separated with `.` as the decimal point. A header
//! row is detected by trying to parse the first row as numbers; if any cell
//! fails, the row is taken as column labels.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::projection;

/// An `n x p` design matrix with `1 <= p < n` and full column rank.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    entries: DMatrix<f64>,
    labels: Option<Vec<String>>,
}

impl DesignMatrix {
    /// Validates shape, finiteness and column rank.
    pub fn new(entries: DMatrix<f64>, labels: Option<Vec<String>>) -> Result<Self> {
        let (n, p) = entries.shape();
        if p == 0 {
            return Err(Error::InvalidCount(
                "design needs at least one column".into(),
            ));
        }
        if p >= n {
            return Err(Error::InvalidCount(format!(
                "need p < n, got p = {p} and n = {n}"
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != p {
                return Err(Error::InvalidCount(format!(
                    "{} labels for {p} columns",
                    labels.len()
                )));
            }
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("design contains non-finite entries".into()));
        }
        let rank = projection::effective_rank(&entries);
        if rank < p {
            return Err(Error::RankDeficient(format!(
                "effective rank {rank} below column count {p}"
            )));
        }
        Ok(Self { entries, labels })
    }

    /// Builds a design from row-major data.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidCount("rows have differing lengths".into()));
        }
        Self::new(DMatrix::from_fn(n, p, |i, j| rows[i][j]), None)
    }

    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// The `n x 1` all-ones design.
    pub fn intercept_only(n: usize) -> Result<Self> {
        Self::new(DMatrix::from_element(n, 1, 1.0), Some(vec!["1".into()]))
    }
}

/// `n` equispaced points from `a` to `b` inclusive.
pub fn equispaced(n: usize, a: f64, b: f64) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidCount(format!(
            "need at least 2 points, got {n}"
        )));
    }
    if a.partial_cmp(&b) != Some(std::cmp::Ordering::Less) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidRange { a, b });
    }
    let span = b - a;
    let steps = (n - 1) as f64;
    let mut x: Vec<f64> = (0..n).map(|i| a + (i as f64 * span) / steps).collect();
    x[n - 1] = b;
    Ok(x)
}

/// Monomial design with columns `1, x, x^2, ..., x^degree` built from raw `x`.
pub fn polynomial_design(x: &[f64], degree: usize) -> Result<DesignMatrix> {
    let n = x.len();
    let p = degree + 1;
    if p >= n {
        return Err(Error::InvalidCount(format!(
            "polynomial of degree {degree} needs p = {p} < n = {n}"
        )));
    }
    let mut distinct = x.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < p {
        return Err(Error::RankDeficient(format!(
            "{} distinct abscissae cannot support degree {degree}",
            distinct.len()
        )));
    }
    let entries = DMatrix::from_fn(n, p, |i, j| x[i].powi(j as i32));
    let labels = (0..p)
        .map(|j| match j {
            0 => "1".to_string(),
            1 => "x".to_string(),
            _ => format!("x^{j}"),
        })
        .collect();
    DesignMatrix::new(entries, Some(labels))
}

/// Reads a rectangular numeric CSV body with an optional header row.
pub fn read_matrix<R: Read>(reader: R) -> Result<(DMatrix<f64>, Option<Vec<String>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut labels = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, record) in rdr.records().enumerate() {
        let line = idx + 1;
        let record = record.map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(e) => Error::Io(e),
            other => Error::Parse {
                line,
                msg: format!("{other:?}"),
            },
        })?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        if let Some(w) = width {
            if record.len() != w {
                return Err(Error::Parse {
                    line,
                    msg: format!("ragged row: {} cells, expected {w}", record.len()),
                });
            }
        } else {
            width = Some(record.len());
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if idx == 0 => {
                labels = Some(record.iter().map(str::to_string).collect());
            }
            Err(e) => {
                return Err(Error::Parse {
                    line,
                    msg: format!("non-numeric cell: {e}"),
                });
            }
        }
    }
    let p = width.unwrap_or(0);
    let n = rows.len();
    if n == 0 || p == 0 {
        return Err(Error::Parse {
            line: 1,
            msg: "no numeric rows".into(),
        });
    }
    Ok((DMatrix::from_fn(n, p, |i, j| rows[i][j]), labels))
}

/// Loads a design matrix from a CSV file.
pub fn load_csv<P: AsRef<Path>>(path: P) -> Result<DesignMatrix> {
    let file = File::open(path)?;
    let (entries, labels) = read_matrix(file)?;
    DesignMatrix::new(entries, labels)
}

/// Writes a matrix in the same dialect `read_matrix` accepts. Values use the
/// shortest representation that parses back to the identical double.
pub fn write_matrix<W: Write>(
    mut writer: W,
    matrix: &DMatrix<f64>,
    labels: Option<&[String]>,
) -> Result<()> {
    if let Some(labels) = labels {
        writeln!(writer, "{}", labels.join(","))?;
    }
    for row in matrix.row_iter() {
        let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        writeln!(writer, "{}", cells.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equispaced_examples() {
        assert_eq!(equispaced(3, 0.0, 1.0).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(equispaced(2, -1.0, 1.0).unwrap(), vec![-1.0, 1.0]);
        let x = equispaced(70, 0.0, 1.0).unwrap();
        assert_eq!(x.len(), 70);
        assert_eq!(x[34], 34.0 / 69.0);
        assert!(x.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn equispaced_errors() {
        assert!(matches!(
            equispaced(1, 0.0, 1.0),
            Err(Error::InvalidCount(_))
        ));
        assert!(matches!(
            equispaced(5, 1.0, 1.0),
            Err(Error::InvalidRange { .. })
        ));
        assert!(matches!(
            equispaced(5, 2.0, 1.0),
            Err(Error::InvalidRange { .. })
        ));
        assert!(matches!(
            equispaced(5, f64::NAN, 1.0),
            Err(Error::InvalidRange { .. })
        ));
    }

    #[test]
    fn equispaced_constant_step() {
        for &(n, a, b) in &[(70, 0.0, 1.0), (13, -3.5, 2.25), (200, 1e3, 1e3 + 1.0)] {
            let x = equispaced(n, a, b).unwrap();
            let h = (b - a) / (n - 1) as f64;
            let scale = a.abs().max(b.abs());
            for w in x.windows(2) {
                assert!(((w[1] - w[0]) - h).abs() <= 2.0 * f64::EPSILON * scale.max(1.0));
            }
        }
    }

    #[test]
    fn polynomial_design_linear() {
        let d = polynomial_design(&[0.0, 1.0, 2.0], 1).unwrap();
        assert_eq!(
            d.entries(),
            &DMatrix::from_row_slice(3, 2, &[1., 0., 1., 1., 1., 2.])
        );
        assert_eq!(d.labels().unwrap(), &["1".to_string(), "x".to_string()]);
    }

    #[test]
    fn polynomial_design_shape_guard() {
        assert!(matches!(
            polynomial_design(&[5.0], 0),
            Err(Error::InvalidCount(_))
        ));
        assert!(matches!(
            polynomial_design(&[0.0, 1.0, 2.0], 3),
            Err(Error::InvalidCount(_))
        ));
    }

    #[test]
    fn polynomial_design_needs_distinct_values() {
        let r = polynomial_design(&[1.0, 1.0, 2.0, 2.0], 2);
        assert!(matches!(r, Err(Error::RankDeficient(_))));
    }

    #[test]
    fn polynomial_design_quadratic_70() {
        let x = equispaced(70, 0.0, 1.0).unwrap();
        let d = polynomial_design(&x, 2).unwrap();
        assert_eq!(d.entries().shape(), (70, 3));
        for (i, &xi) in x.iter().enumerate() {
            assert_eq!(d.entries()[(i, 0)], 1.0);
            assert_eq!(d.entries()[(i, 1)], xi);
            assert_eq!(d.entries()[(i, 2)], xi.powi(2));
        }
    }

    #[test]
    fn rank_deficient_design_rejected() {
        let r = DesignMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]);
        assert!(matches!(r, Err(Error::RankDeficient(_))));
        let r = DesignMatrix::from_rows(&[vec![0.0], vec![0.0], vec![0.0]]);
        assert!(matches!(r, Err(Error::RankDeficient(_))));
    }

    #[test]
    fn column_scaling_does_not_fool_rank_check() {
        // Badly scaled but independent columns must pass.
        let r = DesignMatrix::from_rows(&[vec![1.0, 1e-8], vec![1.0, 2e-8], vec![1.0, 4e-8]]);
        assert!(r.is_ok());
    }

    #[test]
    fn csv_plain() {
        let (m, labels) = read_matrix("1,0\n1,1\n1,2\n".as_bytes()).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(3, 2, &[1., 0., 1., 1., 1., 2.]));
        assert!(labels.is_none());
    }

    #[test]
    fn csv_header() {
        let (m, labels) = read_matrix("c0,c1\n1,0\n1,1\n1,2\n".as_bytes()).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(3, 2, &[1., 0., 1., 1., 1., 2.]));
        assert_eq!(labels.unwrap(), vec!["c0".to_string(), "c1".to_string()]);
    }

    #[test]
    fn csv_ragged() {
        assert!(matches!(
            read_matrix("1,0\n1\n".as_bytes()),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            read_matrix("a,b\n1\n".as_bytes()),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn csv_non_numeric_body() {
        let r = read_matrix("1,0\n1,x\n".as_bytes());
        assert!(matches!(r, Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn csv_empty() {
        assert!(matches!(
            read_matrix("".as_bytes()),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            read_matrix("a,b\n".as_bytes()),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn load_csv_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "c0,c1\n1,0\n1,1\n1,2\n").unwrap();
        let d = load_csv(&path).unwrap();
        assert_eq!(d.nrows(), 3);
        assert_eq!(d.labels().unwrap()[1], "c1");
        assert!(matches!(
            load_csv(dir.path().join("missing.csv")),
            Err(Error::Io(_))
        ));
    }
}
