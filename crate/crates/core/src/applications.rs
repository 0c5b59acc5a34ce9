//! Graph recovery (thresholded sign support, ROC paths) and the Fisher
//! discriminant rule with its classification metrics.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LabeledDataset};
use crate::error::{Error, Result};
use crate::estimators::{fit, sign_support, threshold_estimate, Method, PrecisionEstimate, SolverConfig};
use crate::linalg::SymmetricMatrix;
use crate::par::Execution;
use crate::samplers::PrecisionModel;
use crate::selection::{fit_path, input_matrix, LambdaGrid};
use crate::spatial::{centered_covariance, pool_summaries, SpatialSummary};

/// Threshold applied to estimates before reading off the graph.
pub const ROC_THRESHOLD: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRates {
    /// Absent when the truth has no edges.
    pub tpr: Option<f64>,
    /// Absent when the truth is a complete graph.
    pub fpr: Option<f64>,
}

/// True and false positive rates of the thresholded estimate over strict upper-triangle pairs.
pub fn recovery_rates(estimate: &SymmetricMatrix, tau: f64, truth_edges: &BTreeSet<(usize, usize)>) -> RecoveryRates {
    let p = estimate.dim();
    let t = threshold_estimate(estimate, tau);
    let (mut tp, mut fp) = (0usize, 0usize);
    for i in 0..p {
        for j in i + 1..p {
            if t[(i, j)] != 0.0 {
                if truth_edges.contains(&(i, j)) {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
    }
    let edges = truth_edges.len();
    let non_edges = p * (p.saturating_sub(1)) / 2 - edges;
    RecoveryRates {
        tpr: (edges > 0).then(|| tp as f64 / edges as f64),
        fpr: (non_edges > 0).then(|| fp as f64 / non_edges as f64),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub lambda: f64,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
}

/// One recovery point per grid value, in grid order. Values whose solve fails are skipped.
pub fn roc_path(
    train: &Dataset,
    truth: &PrecisionModel,
    method: Method,
    grid: &LambdaGrid,
    tau: f64,
    cfg: &SolverConfig,
) -> Result<Vec<RocPoint>> {
    if train.p() != truth.dim() {
        return Err(Error::InvalidParameter(format!(
            "data has {} columns but the model has dimension {}",
            train.p(),
            truth.dim()
        )));
    }
    let m = input_matrix(method, train, cfg.exec)?;
    Ok(roc_path_from_input(&m, &truth.edges, method, grid, tau, cfg))
}

pub fn roc_path_from_input(
    m: &SymmetricMatrix,
    edges: &BTreeSet<(usize, usize)>,
    method: Method,
    grid: &LambdaGrid,
    tau: f64,
    cfg: &SolverConfig,
) -> Vec<RocPoint> {
    fit_path(method, m, grid, cfg)
        .into_iter()
        .zip(grid.values())
        .filter_map(|(fitted, &lambda)| {
            let est = fitted.ok()?;
            let r = recovery_rates(&est.matrix, tau, edges);
            Some(RocPoint {
                lambda,
                tpr: r.tpr,
                fpr: r.fpr,
            })
        })
        .collect()
}

/// Area under the piecewise-linear curve through `(0,0)`, the points sorted by
/// false positive rate, and `(1,1)`.
pub fn trapezoidal_auc(points: &[(f64, f64)]) -> f64 {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut area = 0.0;
    let mut prev = (0.0, 0.0);
    for &pt in pts.iter().chain(std::iter::once(&(1.0, 1.0))) {
        area += (pt.0 - prev.0) * (pt.1 + prev.1) / 2.0;
        prev = pt;
    }
    area
}

/// Whether thresholding `estimate` at `tau` reproduces the sign pattern of `truth`.
pub fn sign_consistency_check(estimate: &SymmetricMatrix, tau: f64, truth: &SymmetricMatrix) -> bool {
    assert_eq!(estimate.dim(), truth.dim());
    sign_support(&threshold_estimate(estimate, tau)).signs == sign_support(truth).signs
}

/// Linear rule `1{w'(x - anchor) > 0}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LdaRule {
    pub w: Vec<f64>,
    pub anchor: Vec<f64>,
    pub method: Method,
    pub lambda: f64,
}

/// Location summaries and pooled scatter input of a two-class training sample.
#[derive(Clone, Debug)]
pub struct LdaInputs {
    pub method: Method,
    /// `p * pooled SSCM` (spatial) or pooled sample covariance (classical).
    pub m: SymmetricMatrix,
    /// Half the difference of the class centers.
    pub mu_d: Vec<f64>,
    /// Midpoint of the class centers.
    pub mu_a: Vec<f64>,
}

impl LdaInputs {
    pub fn new(method: Method, data0: &Dataset, data1: &Dataset, exec: Execution) -> Result<Self> {
        if data0.n() == 0 || data1.n() == 0 {
            return Err(Error::InvalidParameter("both classes need at least one sample".into()));
        }
        if data0.p() != data1.p() {
            return Err(Error::InvalidParameter(format!(
                "class samples have {} and {} columns",
                data0.p(),
                data1.p()
            )));
        }
        let p = data0.p();
        let (c0, c1, m) = if method.is_spatial() {
            let s0 = SpatialSummary::from_data(data0);
            let s1 = SpatialSummary::from_data(data1);
            let m = pool_summaries(&s0, &s1).scaled(p as f64);
            (s0.median, s1.median, m)
        } else {
            let c0 = data0.column_means();
            let c1 = data1.column_means();
            let (n0, n1) = (data0.n() as f64, data1.n() as f64);
            let s0 = centered_covariance(exec, data0, &c0);
            let s1 = centered_covariance(exec, data1, &c1);
            let m = s0.scaled(n0 / (n0 + n1)).add(&s1.scaled(n1 / (n0 + n1)));
            (c0, c1, m)
        };
        Ok(Self {
            method,
            m,
            mu_d: c1.iter().zip(&c0).map(|(a, b)| (a - b) / 2.0).collect(),
            mu_a: c1.iter().zip(&c0).map(|(a, b)| (a + b) / 2.0).collect(),
        })
    }

    /// Rule with `w = V mu_d` for the precision estimate `V`.
    pub fn rule(&self, estimate: &PrecisionEstimate) -> LdaRule {
        LdaRule {
            w: estimate.matrix.matvec(&self.mu_d),
            anchor: self.mu_a.clone(),
            method: estimate.method,
            lambda: estimate.lambda,
        }
    }
}

pub fn lda_fit(data0: &Dataset, data1: &Dataset, method: Method, lambda: f64, cfg: &SolverConfig) -> Result<LdaRule> {
    let inputs = LdaInputs::new(method, data0, data1, cfg.exec)?;
    let est = fit(method, &inputs.m, lambda, cfg)?;
    Ok(inputs.rule(&est))
}

pub fn lda_score(rule: &LdaRule, x: &[f64]) -> f64 {
    rule.w.iter().zip(x.iter().zip(&rule.anchor)).map(|(w, (x, a))| w * (x - a)).sum()
}

/// `1` iff `w'(x - anchor) > 0`.
pub fn lda_predict(rule: &LdaRule, x: &[f64]) -> u8 {
    u8::from(lda_score(rule, x) > 0.0)
}

pub fn lda_predict_all(rule: &LdaRule, data: &Dataset) -> Vec<u8> {
    data.rows().map(|x| lda_predict(rule, x)).collect()
}

/// Fraction of `data` misclassified by `rule`.
pub fn lda_misclassification(rule: &LdaRule, data: &LabeledDataset) -> f64 {
    let wrong = data
        .data
        .rows()
        .zip(&data.labels)
        .filter(|(x, &y)| lda_predict(rule, x) != y)
        .count();
    wrong as f64 / data.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub specificity: f64,
    pub sensitivity: f64,
    pub mcc: f64,
    pub misclassification: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Confusion counts and rates with class `1` as positive. An MCC with a zero
/// denominator is reported as 0, as are specificity or sensitivity of an absent class.
pub fn classification_metrics(truth: &[u8], predicted: &[u8]) -> Result<ClassificationReport> {
    if truth.len() != predicted.len() || truth.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "need equal non-empty label sequences, got {} and {}",
            truth.len(),
            predicted.len()
        )));
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for (&y, &yhat) in truth.iter().zip(predicted) {
        match (y, yhat) {
            (1, 1) => tp += 1,
            (0, 0) => tn += 1,
            (0, 1) => fp += 1,
            (1, 0) => fn_ += 1,
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "labels must be 0 or 1, got ({y}, {yhat})"
                )))
            }
        }
    }
    let f = |v: usize| v as f64;
    let den = (f(tp + fp) * f(tp + fn_) * f(tn + fp) * f(tn + fn_)).sqrt();
    let mcc = if den == 0.0 {
        0.0
    } else {
        (f(tp) * f(tn) - f(fp) * f(fn_)) / den
    };
    Ok(ClassificationReport {
        tp,
        tn,
        fp,
        fn_,
        specificity: ratio(tn, tn + fp),
        sensitivity: ratio(tp, tp + fn_),
        mcc,
        misclassification: f(fp + fn_) / f(truth.len()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn recovery_examples() {
        let truth = SymmetricMatrix::from_rows(&[
            vec![1.0, 0.5, 0.0],
            vec![0.5, 1.0, -0.2],
            vec![0.0, -0.2, 1.0],
        ])
        .unwrap();
        let edges = crate::samplers::support_edges(&truth);
        let r = recovery_rates(&truth, 0.1, &edges);
        assert_eq!((r.tpr, r.fpr), (Some(1.0), Some(0.0)));
        let r = recovery_rates(&SymmetricMatrix::zeros(3), 0.1, &edges);
        assert_eq!((r.tpr, r.fpr), (Some(0.0), Some(0.0)));
        let dense = SymmetricMatrix::from_upper(3, |_, _| 1.0);
        let r = recovery_rates(&dense, 0.1, &edges);
        assert_eq!((r.tpr, r.fpr), (Some(1.0), Some(1.0)));
        let r = recovery_rates(&dense, 0.1, &BTreeSet::new());
        assert_eq!((r.tpr, r.fpr), (None, Some(1.0)));
    }

    #[test]
    fn auc_of_reference_curves() {
        assert_abs_diff_eq!(trapezoidal_auc(&[]), 0.5);
        assert_abs_diff_eq!(trapezoidal_auc(&[(0.0, 1.0)]), 1.0);
        assert_abs_diff_eq!(trapezoidal_auc(&[(0.5, 0.5), (0.0, 0.0)]), 0.5);
        assert_abs_diff_eq!(trapezoidal_auc(&[(0.2, 0.6)]), 0.2 * 0.3 + 0.8 * 0.8);
    }

    #[test]
    fn sign_consistency_examples() {
        let truth = SymmetricMatrix::from_rows(&[vec![1.0, -0.4], vec![-0.4, 1.0]]).unwrap();
        assert!(sign_consistency_check(&truth, 0.3, &truth));
        let flipped = SymmetricMatrix::from_rows(&[vec![1.0, 0.4], vec![0.4, 1.0]]).unwrap();
        assert!(!sign_consistency_check(&flipped, 0.3, &truth));
        let t3 = SymmetricMatrix::from_rows(&[
            vec![1.0, -0.4, 0.0],
            vec![-0.4, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let mut noisy = t3.clone().into_matrix();
        noisy.set(0, 2, 0.16);
        noisy.set(2, 0, 0.16);
        let noisy = SymmetricMatrix::try_from_matrix(noisy).unwrap();
        assert!(sign_consistency_check(&noisy, 0.2, &t3));
    }

    #[test]
    fn predict_examples() {
        let rule = LdaRule {
            w: vec![1.0, 0.0],
            anchor: vec![0.0, 0.0],
            method: Method::Sclime,
            lambda: 0.1,
        };
        assert_eq!(lda_predict(&rule, &[1.0, 0.0]), 1);
        assert_eq!(lda_predict(&rule, &[0.0, 0.0]), 0);
        let zero = LdaRule {
            w: vec![0.0, 0.0],
            ..rule
        };
        assert_eq!(lda_predict(&zero, &[5.0, -3.0]), 0);
    }

    #[test]
    fn metric_examples() {
        let truth: Vec<u8> = (0..100).map(|i| u8::from(i % 2 == 0)).collect();
        let perfect = classification_metrics(&truth, &truth).unwrap();
        assert_eq!(
            (perfect.specificity, perfect.sensitivity, perfect.mcc, perfect.misclassification),
            (1.0, 1.0, 1.0, 0.0)
        );
        let ones = classification_metrics(&truth, &[1; 100]).unwrap();
        assert_eq!((ones.sensitivity, ones.specificity, ones.mcc), (1.0, 0.0, 0.0));
        let mut t = vec![1u8; 50];
        t.extend(vec![0u8; 50]);
        let mut pr = vec![1u8; 40];
        pr.extend(vec![0u8; 10]);
        pr.extend(vec![0u8; 45]);
        pr.extend(vec![1u8; 5]);
        let r = classification_metrics(&t, &pr).unwrap();
        assert_eq!((r.tp, r.tn, r.fp, r.fn_), (40, 45, 5, 10));
        assert_abs_diff_eq!(r.specificity, 0.9);
        assert_abs_diff_eq!(r.sensitivity, 0.8);
        let oracle = (40.0 * 45.0 - 5.0 * 10.0) / (45.0f64 * 50.0 * 50.0 * 55.0).sqrt();
        assert_abs_diff_eq!(r.mcc, oracle, epsilon = 1e-15);
        assert_abs_diff_eq!(r.mcc, 0.7035, epsilon = 5e-5);
        assert!(classification_metrics(&[0], &[]).is_err());
    }
}
