//! Tuning-parameter grids, validation-likelihood selection and stratified
//! cross-validation for the discriminant rule.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::applications::{lda_misclassification, LdaInputs};
use crate::dataset::{Dataset, LabeledDataset};
use crate::error::{Error, Result};
use crate::estimators::{fit_warm, Method, PrecisionEstimate, SolverConfig, WarmStart};
use crate::linalg::{log_det_spd, SymmetricMatrix};
use crate::par::Execution;
use crate::spatial::{centered_covariance, spatial_median, sscm_with, DEFAULT_MEDIAN_MAX_ITER, DEFAULT_MEDIAN_TOL};

/// `(1/n) sum (x_i - xbar)(x_i - xbar)^T`.
pub fn sample_covariance(data: &Dataset) -> Result<SymmetricMatrix> {
    sample_covariance_with(Execution::default(), data)
}

pub fn sample_covariance_with(exec: Execution, data: &Dataset) -> Result<SymmetricMatrix> {
    if data.n() < 2 {
        return Err(Error::InvalidParameter(format!(
            "sample covariance needs at least 2 rows, got {}",
            data.n()
        )));
    }
    Ok(centered_covariance(exec, data, &data.column_means()))
}

/// `p * SSCM` about the spatial median.
pub fn scaled_sscm(exec: Execution, data: &Dataset) -> Result<SymmetricMatrix> {
    if data.n() < 2 {
        return Err(Error::InvalidParameter(format!(
            "spatial sign covariance needs at least 2 rows, got {}",
            data.n()
        )));
    }
    let med = spatial_median(data, DEFAULT_MEDIAN_TOL, DEFAULT_MEDIAN_MAX_ITER);
    Ok(sscm_with(exec, data, &med.point).scaled(data.p() as f64))
}

/// Input matrix consumed by `method`: `p * SSCM` for spatial methods, the
/// sample covariance otherwise.
pub fn input_matrix(method: Method, data: &Dataset, exec: Execution) -> Result<SymmetricMatrix> {
    if method.is_spatial() {
        scaled_sscm(exec, data)
    } else {
        sample_covariance_with(exec, data)
    }
}

/// `<omega, m> - log det omega`; `+inf` when `omega` is not positive definite.
pub fn likelihood_loss(omega: &SymmetricMatrix, m: &SymmetricMatrix) -> f64 {
    match log_det_spd(omega) {
        Ok(ld) => omega.trace_inner(m) - ld,
        Err(_) => f64::INFINITY,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    #[default]
    Log,
    Linear,
}

/// Strictly increasing positive tuning parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    values: Vec<f64>,
    spacing: Spacing,
}

pub const DEFAULT_GRID_MIN: f64 = 0.005;
pub const DEFAULT_GRID_MAX: f64 = 1.0;
pub const DEFAULT_GRID_SIZE: usize = 50;

impl Default for LambdaGrid {
    fn default() -> Self {
        lambda_grid(DEFAULT_GRID_MIN, DEFAULT_GRID_MAX, DEFAULT_GRID_SIZE, Spacing::Log).expect("valid default grid")
    }
}

impl LambdaGrid {
    /// Grid from explicit values, which must be positive and strictly increasing.
    pub fn from_values(values: Vec<f64>, spacing: Spacing) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("lambda grid is empty".into()));
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(format!("grid values must be positive and finite, got {v}")));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("grid values must be strictly increasing".into()));
        }
        Ok(Self { values, spacing })
    }

    pub fn single(lambda: f64) -> Result<Self> {
        Self::from_values(vec![lambda], Spacing::Linear)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `k` values from `min` to `max` inclusive.
pub fn lambda_grid(min: f64, max: f64, k: usize, spacing: Spacing) -> Result<LambdaGrid> {
    if !(min > 0.0 && min < max && max.is_finite()) {
        return Err(Error::InvalidParameter(format!("grid needs 0 < min < max, got [{min}, {max}]")));
    }
    if k < 2 {
        return Err(Error::InvalidParameter(format!("grid needs at least 2 values, got {k}")));
    }
    let last = (k - 1) as f64;
    let mut values: Vec<f64> = (0..k)
        .map(|i| {
            let t = i as f64 / last;
            match spacing {
                Spacing::Log => (min.ln() + t * (max.ln() - min.ln())).exp(),
                Spacing::Linear => min + t * (max - min),
            }
        })
        .collect();
    values[0] = min;
    values[k - 1] = max;
    LambdaGrid::from_values(values, spacing)
}

/// Fits `method` at every grid value, largest first, each solve warm-started
/// from the previous one. Results come back in grid (ascending) order.
pub fn fit_path(
    method: Method,
    m: &SymmetricMatrix,
    grid: &LambdaGrid,
    cfg: &SolverConfig,
) -> Vec<Result<PrecisionEstimate>> {
    let mut out: Vec<Option<Result<PrecisionEstimate>>> = (0..grid.len()).map(|_| None).collect();
    let mut warm: Option<WarmStart> = None;
    for (i, &lambda) in grid.values().iter().enumerate().rev() {
        match fit_warm(method, m, lambda, cfg, warm.as_ref()) {
            Ok((est, state)) => {
                warm = Some(state);
                out[i] = Some(Ok(est));
            }
            Err(e) => out[i] = Some(Err(e)),
        }
    }
    out.into_iter().map(|r| r.expect("every grid value visited")).collect()
}

/// [`fit_path`] for model selection, where only converged fits count.
///
/// Once a CLIME-type fit has an infeasible column, that column stays infeasible
/// for every smaller value, so those grid values are reported as errors without
/// being solved.
pub fn fit_path_for_selection(
    method: Method,
    m: &SymmetricMatrix,
    grid: &LambdaGrid,
    cfg: &SolverConfig,
) -> Vec<Result<PrecisionEstimate>> {
    let cfg = SolverConfig {
        abandon_infeasible: true,
        ..*cfg
    };
    let mut out: Vec<Option<Result<PrecisionEstimate>>> = (0..grid.len()).map(|_| None).collect();
    let mut warm: Option<WarmStart> = None;
    let mut infeasible_at: Option<f64> = None;
    for (i, &lambda) in grid.values().iter().enumerate().rev() {
        if let Some(at) = infeasible_at {
            out[i] = Some(Err(Error::Selection(format!(
                "{method} constraint is infeasible at lambda = {at} and therefore at {lambda}"
            ))));
            continue;
        }
        match fit_warm(method, m, lambda, &cfg, warm.as_ref()) {
            Ok((est, state)) => {
                if matches!(&state, WarmStart::Clime(c) if c.infeasible_columns() > 0) {
                    infeasible_at = Some(lambda);
                }
                warm = Some(state);
                out[i] = Some(Ok(est));
            }
            Err(e) => out[i] = Some(Err(e)),
        }
    }
    out.into_iter().map(|r| r.expect("every grid value visited")).collect()
}

/// Index of the smallest finite score, ties resolved toward the later (larger) grid value.
pub fn argmin_prefer_larger(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if !s.is_finite() {
            continue;
        }
        if best.is_none_or(|b| s <= scores[b]) {
            best = Some(i);
        }
    }
    best
}

#[derive(Clone, Debug)]
pub struct Selection {
    pub lambda: f64,
    pub estimate: PrecisionEstimate,
    /// Validation loss per grid value; `+inf` for failed, unconverged or non-PD fits.
    pub losses: Vec<f64>,
}

/// Picks the grid value whose training fit has the smallest validation likelihood loss.
pub fn select_lambda_validation(
    train: &Dataset,
    valid: &Dataset,
    method: Method,
    grid: &LambdaGrid,
    cfg: &SolverConfig,
) -> Result<Selection> {
    if train.p() != valid.p() {
        return Err(Error::InvalidParameter(format!(
            "training data has {} columns, validation data {}",
            train.p(),
            valid.p()
        )));
    }
    let m_train = input_matrix(method, train, cfg.exec)?;
    let m_valid = input_matrix(method, valid, cfg.exec)?;
    select_lambda_with_inputs(&m_train, &m_valid, method, grid, cfg)
}

/// As [`select_lambda_validation`] with the training and validation statistics precomputed.
pub fn select_lambda_with_inputs(
    m_train: &SymmetricMatrix,
    m_valid: &SymmetricMatrix,
    method: Method,
    grid: &LambdaGrid,
    cfg: &SolverConfig,
) -> Result<Selection> {
    let mut fits = fit_path_for_selection(method, m_train, grid, cfg);
    let losses: Vec<f64> = fits
        .iter()
        .map(|f| match f {
            Ok(est) if est.converged && est.is_pd => likelihood_loss(&est.matrix, m_valid),
            _ => f64::INFINITY,
        })
        .collect();
    let best = argmin_prefer_larger(&losses).ok_or_else(|| {
        Error::Selection(format!(
            "every {method} fit on the {}-point grid [{}, {}] has infinite validation loss",
            grid.len(),
            grid.values()[0],
            grid.values()[grid.len() - 1]
        ))
    })?;
    let estimate = fits.swap_remove(best)?;
    Ok(Selection {
        lambda: grid.values()[best],
        estimate,
        losses,
    })
}

/// Stratified fold labels: each class is shuffled and dealt round-robin,
/// continuing the rotation from one class to the next.
pub fn stratified_folds<R: Rng + ?Sized>(labels: &[u8], k: usize, rng: &mut R) -> Vec<usize> {
    let mut fold = vec![0; labels.len()];
    let mut next = 0;
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(rng);
        for i in idx {
            fold[i] = next % k;
            next += 1;
        }
    }
    fold
}

fn folds_usable(labels: &[u8], fold: &[usize], k: usize) -> bool {
    (0..k).all(|f| {
        let train = || labels.iter().zip(fold).filter(|(_, &g)| g != f).map(|(l, _)| *l);
        let held = fold.contains(&f);
        held && train().any(|l| l == 0) && train().any(|l| l == 1)
    })
}

/// Mean held-out misclassification rate per grid value under `k`-fold cross-validation.
pub fn cv_lda_rates<R: Rng + ?Sized>(
    data: &LabeledDataset,
    k: usize,
    method: Method,
    grid: &LambdaGrid,
    cfg: &SolverConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if k < 2 || k > data.len() {
        return Err(Error::InvalidParameter(format!(
            "fold count must lie in [2, {}], got {k}",
            data.len()
        )));
    }
    let mut fold = stratified_folds(&data.labels, k, rng);
    if !folds_usable(&data.labels, &fold, k) {
        fold = stratified_folds(&data.labels, k, rng);
        if !folds_usable(&data.labels, &fold, k) {
            return Err(Error::Degenerate(format!(
                "{k}-fold split leaves a training set with a single class"
            )));
        }
    }
    let mut totals = vec![0.0; grid.len()];
    for f in 0..k {
        let train_idx: Vec<usize> = (0..data.len()).filter(|&i| fold[i] != f).collect();
        let test_idx: Vec<usize> = (0..data.len()).filter(|&i| fold[i] == f).collect();
        let train = data.subset(&train_idx);
        let test = data.subset(&test_idx);
        let (d0, d1) = train.split_classes();
        let inputs = LdaInputs::new(method, &d0, &d1, cfg.exec)?;
        for (i, fitted) in fit_path_for_selection(method, &inputs.m, grid, cfg).into_iter().enumerate() {
            totals[i] += match fitted {
                Ok(est) if est.converged => lda_misclassification(&inputs.rule(&est), &test),
                _ => f64::INFINITY,
            };
        }
    }
    Ok(totals.into_iter().map(|t| t / k as f64).collect())
}

/// Grid value with the smallest cross-validated misclassification rate (ties toward larger values).
pub fn kfold_cv_lda<R: Rng + ?Sized>(
    data: &LabeledDataset,
    k: usize,
    method: Method,
    grid: &LambdaGrid,
    cfg: &SolverConfig,
    rng: &mut R,
) -> Result<f64> {
    let rates = cv_lda_rates(data, k, method, grid, cfg, rng)?;
    let best = argmin_prefer_larger(&rates)
        .ok_or_else(|| Error::Selection(format!("every {method} fit failed during cross-validation")))?;
    Ok(grid.values()[best])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sample_covariance_examples() {
        let d = Dataset::from_rows(&[vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap();
        let s = sample_covariance(&d).unwrap();
        assert_eq!(s, SymmetricMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap());
        let c = Dataset::from_rows(&vec![vec![3.0, -1.0]; 4]).unwrap();
        assert_eq!(sample_covariance(&c).unwrap(), SymmetricMatrix::zeros(2));
        assert!(sample_covariance(&Dataset::from_rows(&[vec![1.0]]).unwrap()).is_err());
    }

    #[test]
    fn likelihood_examples() {
        assert_abs_diff_eq!(likelihood_loss(&SymmetricMatrix::identity(3), &SymmetricMatrix::identity(3)), 3.0);
        let indefinite = SymmetricMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert_eq!(likelihood_loss(&indefinite, &SymmetricMatrix::identity(2)), f64::INFINITY);
    }

    #[test]
    fn grid_examples() {
        let g = lambda_grid(0.005, 1.0, 3, Spacing::Log).unwrap();
        assert_eq!(g.values()[0], 0.005);
        assert_abs_diff_eq!(g.values()[1], 0.005f64.sqrt(), epsilon = 1e-15);
        assert_eq!(g.values()[2], 1.0);
        assert_eq!(lambda_grid(1.0, 2.0, 2, Spacing::Linear).unwrap().values(), &[1.0, 2.0]);
        let d = LambdaGrid::default();
        assert_eq!(d.len(), 50);
        assert!(d.values().windows(2).all(|w| w[0] < w[1]));
        assert!(lambda_grid(0.0, 1.0, 5, Spacing::Log).is_err());
        assert!(lambda_grid(0.1, 1.0, 1, Spacing::Log).is_err());
        assert!(LambdaGrid::from_values(vec![0.2, 0.1], Spacing::Linear).is_err());
    }

    #[test]
    fn argmin_ties_go_to_larger_lambda() {
        assert_eq!(argmin_prefer_larger(&[2.0, 1.0, 1.0, 3.0]), Some(2));
        assert_eq!(argmin_prefer_larger(&[f64::INFINITY, f64::INFINITY]), None);
        assert_eq!(argmin_prefer_larger(&[f64::INFINITY, 5.0]), Some(1));
    }

    #[test]
    fn stratified_folds_balance_classes() {
        let labels = [0, 0, 0, 0, 1, 1, 1, 1, 1];
        let mut rng = crate::samplers::replication_rng(1, 0);
        let fold = stratified_folds(&labels, 3, &mut rng);
        for f in 0..3 {
            let zeros = (0..9).filter(|&i| fold[i] == f && labels[i] == 0).count();
            let ones = (0..9).filter(|&i| fold[i] == f && labels[i] == 1).count();
            assert!((1..=2).contains(&zeros) && (1..=2).contains(&ones));
        }
        assert!(folds_usable(&labels, &fold, 3));
    }
}
