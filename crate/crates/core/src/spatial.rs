//! Spatial median and spatial-sign covariance.

use crate::dataset::Dataset;
use crate::linalg::{norm2, SymmetricMatrix};
use crate::par::{self, Execution};

pub const DEFAULT_MEDIAN_TOL: f64 = 1e-8;
pub const DEFAULT_MEDIAN_MAX_ITER: usize = 1000;
/// Distance below which an iterate is treated as sitting on a data point.
const COINCIDENCE_EPS: f64 = 1e-12;
/// Rows per Gram block when accumulating outer products.
const GRAM_BLOCK: usize = 64;
/// Blocks per parallel partial sum.
const BLOCKS_PER_CHUNK: usize = 16;

/// `x / ||x||`, or the zero vector when `x = 0`.
pub fn sign_vector(x: &[f64]) -> Vec<f64> {
    let n = norm2(x);
    if n > 0.0 {
        x.iter().map(|v| v / n).collect()
    } else {
        vec![0.0; x.len()]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpatialMedian {
    pub point: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Sum of Euclidean distances from `mu` to every row.
pub fn median_objective(data: &Dataset, mu: &[f64]) -> f64 {
    data.rows()
        .map(|row| row.iter().zip(mu).map(|(x, m)| (x - m) * (x - m)).sum::<f64>().sqrt())
        .sum()
}

fn coordinatewise_median(data: &Dataset) -> Vec<f64> {
    let mut col = Vec::with_capacity(data.n());
    (0..data.p())
        .map(|j| {
            col.clear();
            col.extend(data.rows().map(|r| r[j]));
            col.sort_by(f64::total_cmp);
            let m = col.len();
            if m % 2 == 1 {
                col[m / 2]
            } else {
                0.5 * (col[m / 2 - 1] + col[m / 2])
            }
        })
        .collect()
}

/// Geometric median by Weiszfeld iteration with the Vardi-Zhang correction
/// for iterates that land on a data point.
///
/// Starts from the coordinatewise median and stops once a step is shorter
/// than `tol * (1 + ||iterate||)`.
pub fn spatial_median(data: &Dataset, tol: f64, max_iter: usize) -> SpatialMedian {
    assert!(data.n() >= 1, "spatial median of an empty sample");
    let p = data.p();
    let mut y = coordinatewise_median(data);
    let mut num = vec![0.0; p];
    let mut pull = vec![0.0; p];
    let mut next = vec![0.0; p];
    for it in 0..max_iter {
        num.iter_mut().for_each(|v| *v = 0.0);
        pull.iter_mut().for_each(|v| *v = 0.0);
        let mut weight = 0.0;
        let mut coincident = 0usize;
        for row in data.rows() {
            let d = row.iter().zip(&y).map(|(x, m)| (x - m) * (x - m)).sum::<f64>().sqrt();
            if d <= COINCIDENCE_EPS {
                coincident += 1;
                continue;
            }
            let w = 1.0 / d;
            weight += w;
            for k in 0..p {
                num[k] += w * row[k];
                pull[k] += w * (row[k] - y[k]);
            }
        }
        if weight == 0.0 {
            // every row sits on the iterate
            return SpatialMedian { point: y, iterations: it, converged: true };
        }
        for k in 0..p {
            next[k] = num[k] / weight;
        }
        if coincident > 0 {
            let eta = coincident as f64;
            let r = norm2(&pull);
            if r <= eta {
                // the data point itself minimizes the objective
                return SpatialMedian { point: y, iterations: it + 1, converged: true };
            }
            let keep = eta / r;
            for k in 0..p {
                next[k] = (1.0 - keep) * next[k] + keep * y[k];
            }
        }
        let step = next.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        std::mem::swap(&mut y, &mut next);
        if step < tol * (1.0 + norm2(&y)) {
            return SpatialMedian { point: y, iterations: it + 1, converged: true };
        }
    }
    SpatialMedian { point: y, iterations: max_iter, converged: false }
}

/// Adds the upper-triangle Gram matrix of the rows in `block` (stored
/// transposed: `cols[k * width + r]` is coordinate `k` of row `r`).
fn accumulate_gram(cols: &[f64], p: usize, width: usize, acc: &mut [f64]) {
    for i in 0..p {
        let ci = &cols[i * width..(i + 1) * width];
        for j in i..p {
            let cj = &cols[j * width..(j + 1) * width];
            acc[i * p + j] += crate::linalg::dot(ci, cj);
        }
    }
}

/// Upper triangle of `sum_i f(row_i) f(row_i)^T` over all rows, where
/// `transform` writes `f(row)` into its output slice.
fn outer_product_sum<F>(exec: Execution, data: &Dataset, transform: F) -> Vec<f64>
where
    F: Fn(&[f64], &mut [f64]) + Sync + Send,
{
    let n = data.n();
    let p = data.p();
    let chunk_rows = GRAM_BLOCK * BLOCKS_PER_CHUNK;
    let chunks = n.div_ceil(chunk_rows);
    par::ordered_chunk_sum(exec, chunks, p * p, 8, |c, acc| {
        let lo = c * chunk_rows;
        let hi = (lo + chunk_rows).min(n);
        let mut cols = vec![0.0; p * GRAM_BLOCK];
        let mut buf = vec![0.0; p];
        let mut start = lo;
        while start < hi {
            let width = (hi - start).min(GRAM_BLOCK);
            for r in 0..width {
                transform(data.row(start + r), &mut buf);
                for k in 0..p {
                    cols[k * width + r] = buf[k];
                }
            }
            accumulate_gram(&cols[..p * width], p, width, acc);
            start += width;
        }
    })
}

fn finish_upper(p: usize, upper: &[f64], divisor: f64) -> SymmetricMatrix {
    SymmetricMatrix::from_upper(p, |i, j| upper[i * p + j] / divisor)
}

/// Sample spatial-sign covariance `(1/n) sum U(x_i - c) U(x_i - c)^T`.
pub fn sscm(data: &Dataset, center: &[f64]) -> SymmetricMatrix {
    sscm_with(Execution::default(), data, center)
}

pub fn sscm_with(exec: Execution, data: &Dataset, center: &[f64]) -> SymmetricMatrix {
    assert!(data.n() >= 1, "SSCM of an empty sample");
    assert_eq!(center.len(), data.p());
    let upper = outer_product_sum(exec, data, |row, out| {
        let mut s = 0.0;
        for k in 0..row.len() {
            out[k] = row[k] - center[k];
            s += out[k] * out[k];
        }
        let norm = s.sqrt();
        if norm > 0.0 {
            out.iter_mut().for_each(|v| *v /= norm);
        } else {
            out.iter_mut().for_each(|v| *v = 0.0);
        }
    });
    finish_upper(data.p(), &upper, data.n() as f64)
}

/// Covariance `(1/n) sum (x_i - m)(x_i - m)^T` about the given center.
pub fn centered_covariance(exec: Execution, data: &Dataset, center: &[f64]) -> SymmetricMatrix {
    let upper = outer_product_sum(exec, data, |row, out| {
        for k in 0..row.len() {
            out[k] = row[k] - center[k];
        }
    });
    finish_upper(data.p(), &upper, data.n() as f64)
}

/// Location and sign covariance of one sample.
#[derive(Clone, Debug)]
pub struct SpatialSummary {
    pub median: Vec<f64>,
    pub sscm: SymmetricMatrix,
    pub n: usize,
    pub iterations: usize,
    pub converged: bool,
}

impl SpatialSummary {
    pub fn from_data(data: &Dataset) -> Self {
        let med = spatial_median(data, DEFAULT_MEDIAN_TOL, DEFAULT_MEDIAN_MAX_ITER);
        let s = sscm(data, &med.point);
        Self {
            median: med.point,
            sscm: s,
            n: data.n(),
            iterations: med.iterations,
            converged: med.converged,
        }
    }
}

/// Sample-size weighted average of two SSCMs, each centered at its own spatial median.
pub fn pooled_sscm(data0: &Dataset, data1: &Dataset) -> SymmetricMatrix {
    let s0 = SpatialSummary::from_data(data0);
    let s1 = SpatialSummary::from_data(data1);
    pool_summaries(&s0, &s1)
}

pub fn pool_summaries(s0: &SpatialSummary, s1: &SpatialSummary) -> SymmetricMatrix {
    let total = (s0.n + s1.n) as f64;
    let w0 = s0.n as f64 / total;
    let w1 = s1.n as f64 / total;
    s0.sscm.scaled(w0).add(&s1.sscm.scaled(w1))
}
