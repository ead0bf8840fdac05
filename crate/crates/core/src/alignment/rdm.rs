use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CpcError, Result};
use crate::linalg::validate_permutation;
use crate::stats;

pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    #[default]
    Euclidean,
    /// 1 − cos(x, y)
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correlation {
    Pearson,
    Spearman,
}

/// Representational dissimilarity matrix: symmetric, zero diagonal,
/// nonnegative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rdm {
    labels: Vec<String>,
    matrix: DMatrix<f64>,
}

impl Rdm {
    pub fn new(labels: Vec<String>, matrix: DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if !matrix.is_square() {
            return Err(CpcError::DimensionMismatch(format!("RDM must be square, got {:?}", matrix.shape())));
        }
        if labels.len() != n {
            return Err(CpcError::DimensionMismatch(format!("{} labels for a {n}x{n} RDM", labels.len())));
        }
        for i in 0..n {
            if matrix[(i, i)] != 0.0 {
                return Err(CpcError::InvalidInput(format!("RDM diagonal entry {i} is {}", matrix[(i, i)])));
            }
            for j in 0..n {
                let v = matrix[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return Err(CpcError::InvalidInput(format!("RDM entry ({i},{j}) = {v} is not a finite nonnegative value")));
                }
                if (v - matrix[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(CpcError::InvalidInput(format!("RDM is not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(Rdm { labels, matrix })
    }

    /// Labels "0", "1", … .
    pub fn unlabeled(matrix: DMatrix<f64>) -> Result<Self> {
        let labels = (0..matrix.nrows()).map(|i| i.to_string()).collect();
        Rdm::new(labels, matrix)
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    /// Entries strictly above the diagonal, row-major.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let n = self.len();
        let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                out.push(self.matrix[(i, j)]);
            }
        }
        out
    }

    pub fn mean_entry(&self) -> f64 {
        self.matrix.mean()
    }

    /// Reorder so that new item `i` is old item `order[i]`.
    pub fn reordered(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.len() {
            return Err(CpcError::DimensionMismatch(format!("order has {} entries for {} items", order.len(), self.len())));
        }
        validate_permutation(order)?;
        let matrix = DMatrix::from_fn(self.len(), self.len(), |i, j| self.matrix[(order[i], order[j])]);
        let labels = order.iter().map(|&o| self.labels[o].clone()).collect();
        Ok(Rdm { labels, matrix })
    }

    /// Applies `f` entrywise off the diagonal (e.g. a monotone transform).
    pub fn map_entries(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let n = self.len();
        let matrix = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { f(self.matrix[(i, j)]) });
        Rdm::new(self.labels.clone(), matrix)
    }

    /// Square CSV: a header of labels, then one row of values per item.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.labels)?;
        for i in 0..self.len() {
            w.write_record(self.matrix.row(i).iter().map(|v| v.to_string()))?;
        }
        w.flush().map_err(|e| CpcError::io("<rdm csv>", e))?;
        Ok(())
    }

    /// Reads the square layout of [`Rdm::write_csv`]. Rows may also carry a
    /// leading label column, in which case the header starts with an extra
    /// (ignored) cell.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
        let header: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
        let rows: Vec<csv::StringRecord> = r.records().collect::<std::result::Result<_, _>>()?;
        let n = rows.len();
        let (labels, offset) = if header.len() == n {
            (header, 0)
        } else if header.len() == n + 1 {
            (header[1..].to_vec(), 1)
        } else {
            return Err(CpcError::InvalidInput(format!(
                "RDM csv header has {} cells for {n} rows",
                header.len()
            )));
        };
        let mut matrix = DMatrix::zeros(n, n);
        for (i, rec) in rows.iter().enumerate() {
            if rec.len() != n + offset {
                return Err(CpcError::InvalidInput(format!("RDM csv row {i} has {} cells, expected {}", rec.len(), n + offset)));
            }
            for j in 0..n {
                matrix[(i, j)] = crate::world::parse_field(rec, j + offset)?;
            }
        }
        Rdm::new(labels, matrix)
    }
}

/// Pairwise distances between the rows of `points`.
pub fn compute_rdm(points: &DMatrix<f64>, metric: DistanceMetric) -> Result<Rdm> {
    let labels = (0..points.nrows()).map(|i| i.to_string()).collect();
    compute_rdm_labeled(points, labels, metric)
}

pub fn compute_rdm_labeled(points: &DMatrix<f64>, labels: Vec<String>, metric: DistanceMetric) -> Result<Rdm> {
    let n = points.nrows();
    if n < 2 {
        return Err(CpcError::InvalidInput(format!("an RDM needs at least 2 points, got {n}")));
    }
    if !points.iter().all(|v| v.is_finite()) {
        return Err(CpcError::InvalidInput("points must be finite".into()));
    }
    let norms: Vec<f64> = points.row_iter().map(|r| r.norm()).collect();
    if metric == DistanceMetric::Cosine {
        if let Some(i) = norms.iter().position(|&v| v == 0.0) {
            return Err(CpcError::InvalidInput(format!("row {i} has zero norm; cosine distance is undefined")));
        }
    }
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let d = match metric {
                DistanceMetric::Euclidean => (points.row(i) - points.row(j)).norm(),
                DistanceMetric::Cosine => {
                    let cos = points.row(i).dot(&points.row(j)) / (norms[i] * norms[j]);
                    (1.0 - cos).max(0.0)
                }
            };
            m[(i, j)] = d;
            m[(j, i)] = d;
        }
    }
    Rdm::new(labels, m)
}

/// Correlation of the strictly-upper triangles of two RDMs whose items are
/// already in corresponding order.
pub fn rsa(a: &Rdm, b: &Rdm, method: Correlation) -> Result<f64> {
    if a.len() != b.len() {
        return Err(CpcError::DimensionMismatch(format!("RDMs have {} and {} items", a.len(), b.len())));
    }
    let (x, y) = (a.upper_triangle(), b.upper_triangle());
    let r = match method {
        Correlation::Pearson => stats::pearson(&x, &y),
        Correlation::Spearman => stats::spearman(&x, &y),
    };
    r.ok_or_else(|| CpcError::UndefinedCorrelation("an RDM has a constant upper triangle".into()))
}

