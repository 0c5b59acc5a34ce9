use crate::linalg::{LinalgError, Matrix};

/// `n x p` sample matrix, one observation per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    n: usize,
    p: usize,
    values: Vec<f64>,
}

impl Dataset {
    pub fn from_vec(n: usize, p: usize, values: Vec<f64>) -> Result<Self, LinalgError> {
        if values.len() != n * p {
            return Err(LinalgError::Dimension(format!(
                "{} values cannot fill a {n}x{p} dataset",
                values.len()
            )));
        }
        Ok(Self { n, p, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let m = Matrix::from_rows(rows)?;
        Ok(Self {
            n: m.rows(),
            p: m.cols(),
            values: m.into_vec(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.p.max(1)).take(self.n)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.p + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.p + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.p];
        for row in self.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= self.n as f64);
        mean
    }

    /// Rows selected by `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        let mut values = Vec::with_capacity(indices.len() * self.p);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Dataset {
            n: indices.len(),
            p: self.p,
            values,
        }
    }

    /// Every row multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Dataset {
        Dataset {
            n: self.n,
            p: self.p,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

/// Samples with binary class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub data: Dataset,
    pub labels: Vec<u8>,
}

impl LabeledDataset {
    pub fn new(data: Dataset, labels: Vec<u8>) -> Result<Self, LinalgError> {
        if labels.len() != data.n() {
            return Err(LinalgError::Dimension(format!(
                "{} labels for {} rows",
                labels.len(),
                data.n()
            )));
        }
        Ok(Self { data, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_count(&self, class: u8) -> usize {
        self.labels.iter().filter(|&&l| l == class).count()
    }

    pub fn class_indices(&self, class: u8) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == class).collect()
    }

    /// Splits into (class-0 rows, class-1 rows).
    pub fn split_classes(&self) -> (Dataset, Dataset) {
        (
            self.data.select_rows(&self.class_indices(0)),
            self.data.select_rows(&self.class_indices(1)),
        )
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            data: self.data.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}
