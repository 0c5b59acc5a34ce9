//! Sparse precision estimators: the constrained l1 (CLIME-type) solver, the
//! penalized log-determinant (graphical lasso) solver, symmetrization and
//! thresholding.
//!
//! Both solvers take the input matrix `M` directly. Spatial variants pass
//! `p * SSCM`, classical variants pass the sample covariance; only the
//! [`Method`] tag differs.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, cholesky, norm_operator, soft_threshold, Matrix, SymmetricMatrix};
use crate::lp::{ColumnLp, LpOutcome};
use crate::par::{self, Execution};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sclime,
    Sglasso,
    Clime,
    Glasso,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Sclime, Method::Sglasso, Method::Clime, Method::Glasso];

    /// Spatial methods consume `p * SSCM`; classical ones the sample covariance.
    pub fn is_spatial(self) -> bool {
        matches!(self, Method::Sclime | Method::Sglasso)
    }

    pub fn is_clime_type(self) -> bool {
        matches!(self, Method::Sclime | Method::Clime)
    }

    /// The classical method solving the same program, or the spatial one for a classical input.
    pub fn counterpart(self) -> Method {
        match self {
            Method::Sclime => Method::Clime,
            Method::Clime => Method::Sclime,
            Method::Sglasso => Method::Glasso,
            Method::Glasso => Method::Sglasso,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Sclime => "SCLIME",
            Method::Sglasso => "SGLASSO",
            Method::Clime => "CLIME",
            Method::Glasso => "GLASSO",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sclime" => Ok(Method::Sclime),
            "sglasso" => Ok(Method::Sglasso),
            "clime" => Ok(Method::Clime),
            "glasso" => Ok(Method::Glasso),
            other => Err(Error::InvalidParameter(format!(
                "unknown method {other:?} (expected sclime, sglasso, clime or glasso)"
            ))),
        }
    }
}

/// Algorithm used for the column problems of the constrained estimator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClimeSolver {
    /// Exact bounded-variable dual simplex, warm-started along a lambda path.
    #[default]
    Simplex,
    /// Linearized ADMM with `mu = 1.01 * ||M||_op^2`.
    Admm,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub clime_solver: ClimeSolver,
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub max_iter: usize,
    /// ADMM penalty parameter.
    pub rho: f64,
    /// Coordinate-descent threshold of the inner lasso problems.
    pub inner_tol: f64,
    /// Stop solving the remaining columns of a CLIME-type fit once one is infeasible.
    #[serde(skip)]
    pub abandon_infeasible: bool,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            clime_solver: ClimeSolver::default(),
            tol_primal: 1e-5,
            tol_dual: 1e-5,
            max_iter: 5000,
            rho: 1.0,
            inner_tol: 1e-8,
            abandon_infeasible: false,
            exec: Execution::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        positive("tol_primal", self.tol_primal)?;
        positive("tol_dual", self.tol_dual)?;
        positive("rho", self.rho)?;
        positive("inner_tol", self.inner_tol)?;
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PrecisionEstimate {
    pub matrix: SymmetricMatrix,
    pub method: Method,
    pub lambda: f64,
    pub converged: bool,
    pub is_pd: bool,
}

impl PrecisionEstimate {
    fn new(matrix: SymmetricMatrix, method: Method, lambda: f64, converged: bool) -> Self {
        let is_pd = cholesky(&matrix).is_ok();
        Self {
            matrix,
            method,
            lambda,
            converged,
            is_pd,
        }
    }
}

fn check_input(m: &SymmetricMatrix, lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    if !m.is_finite() {
        return Err(Error::InvalidParameter("input matrix has non-finite entries".into()));
    }
    if m.dim() == 0 {
        return Err(Error::InvalidParameter("input matrix is empty".into()));
    }
    Ok(())
}

/// Solution of one column problem together with the solver state needed to warm-start it.
#[derive(Clone, Debug)]
pub struct ColumnState {
    pub beta: Vec<f64>,
    /// ADMM iterations or simplex pivots spent on the last solve.
    pub iterations: usize,
    pub converged: bool,
    /// The constraint set was proven empty (simplex only).
    pub infeasible: bool,
    admm: Option<(Vec<f64>, Vec<f64>)>,
    lp: Option<Box<ColumnLp>>,
}

impl ColumnState {
    fn cold(p: usize) -> Self {
        Self {
            beta: vec![0.0; p],
            iterations: 0,
            converged: false,
            infeasible: false,
            admm: None,
            lp: None,
        }
    }
}

/// Unsymmetrized column solutions of the constrained problem.
#[derive(Clone, Debug)]
pub struct ClimeColumns {
    pub lambda: f64,
    pub columns: Vec<ColumnState>,
}

impl ClimeColumns {
    /// `V1` with column `j` equal to the solution of column problem `j`.
    pub fn matrix(&self) -> Matrix {
        let p = self.columns.len();
        Matrix::from_fn(p, p, |i, j| self.columns[j].beta[i])
    }

    pub fn converged(&self) -> bool {
        self.columns.iter().all(|c| c.converged)
    }

    pub fn infeasible_columns(&self) -> usize {
        self.columns.iter().filter(|c| c.infeasible).count()
    }

    pub fn symmetrized(&self) -> SymmetricMatrix {
        symmetrize_min(&self.matrix())
    }
}

/// `out = M beta`, skipping zero coefficients.
fn sparse_matvec(m: &SymmetricMatrix, beta: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for (k, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            for (o, mk) in out.iter_mut().zip(m.row(k)) {
                *o += b * mk;
            }
        }
    }
}

fn admm_column(m: &SymmetricMatrix, j: usize, lambda: f64, mu: f64, cfg: &SolverConfig, state: &mut ColumnState) {
    let p = m.dim();
    let step = 1.0 / (mu * cfg.rho);
    let (mut z, mut u) = state.admm.take().unwrap_or_else(|| (vec![0.0; p], vec![0.0; p]));
    let mut mb = vec![0.0; p];
    let mut resid = vec![0.0; p];
    let mut grad = vec![0.0; p];
    let mut dz = vec![0.0; p];
    let mut mdz = vec![0.0; p];
    state.converged = false;
    state.iterations = 0;
    sparse_matvec(m, &state.beta, &mut mb);
    for it in 1..=cfg.max_iter {
        for k in 0..p {
            resid[k] = mb[k] - z[k] + u[k];
        }
        m.matvec_into(&resid, &mut grad);
        for k in 0..p {
            state.beta[k] = soft_threshold(state.beta[k] - step * grad[k], step);
        }
        sparse_matvec(m, &state.beta, &mut mb);
        let mut primal = 0.0;
        for k in 0..p {
            let target = if k == j { 1.0 } else { 0.0 };
            let znew = (mb[k] + u[k]).clamp(target - lambda, target + lambda);
            dz[k] = znew - z[k];
            z[k] = znew;
            let r = mb[k] - znew;
            u[k] += r;
            primal += r * r;
        }
        state.iterations = it;
        if primal.sqrt() <= cfg.tol_primal {
            sparse_matvec(m, &dz, &mut mdz);
            if cfg.rho * linalg::norm2(&mdz) <= cfg.tol_dual {
                state.converged = true;
                break;
            }
        }
    }
    state.admm = Some((z, u));
}

fn simplex_column(m: &SymmetricMatrix, j: usize, lambda: f64, cfg: &SolverConfig, state: &mut ColumnState) {
    let p = m.dim();
    let mut lp = state.lp.take().unwrap_or_else(|| Box::new(ColumnLp::new(p, j)));
    let before = lp.pivots;
    let outcome = lp.solve(m, lambda, cfg.max_iter);
    state.iterations = lp.pivots - before;
    state.converged = outcome == LpOutcome::Optimal;
    state.infeasible = outcome == LpOutcome::Infeasible;
    state.beta = lp.beta(lambda);
    if outcome != LpOutcome::IterationLimit {
        state.lp = Some(lp);
    }
}

/// Step parameter `mu = 1.01 * ||M||_op^2` of the linearized ADMM.
pub fn admm_mu(m: &SymmetricMatrix) -> Result<f64> {
    let op = match norm_operator(m, linalg::POWER_ITERATION_TOL) {
        Ok(v) => v,
        Err(linalg::LinalgError::NoConvergence { last, .. }) => last * 1.01,
        Err(e) => return Err(e.into()),
    };
    Ok(1.01 * op * op)
}

/// Column solutions of `min ||b||_1  s.t.  ||M b - e_j||_inf <= lambda`.
///
/// `warm` seeds every column with a previous state (typically from the
/// neighbouring grid value).
pub fn clime_columns(
    m: &SymmetricMatrix,
    lambda: f64,
    cfg: &SolverConfig,
    warm: Option<&ClimeColumns>,
) -> Result<ClimeColumns> {
    check_input(m, lambda)?;
    cfg.validate()?;
    let p = m.dim();
    if let Some(w) = warm {
        if w.columns.len() != p {
            return Err(Error::InvalidParameter(format!(
                "warm start has {} columns, matrix has {p}",
                w.columns.len()
            )));
        }
    }
    let mu = match cfg.clime_solver {
        ClimeSolver::Admm => admm_mu(m)?,
        ClimeSolver::Simplex => 1.0,
    };
    if mu == 0.0 {
        // M = 0: beta = 0 is the only candidate, feasible iff lambda >= 1
        let columns = (0..p)
            .map(|_| ColumnState {
                converged: lambda >= 1.0,
                infeasible: lambda < 1.0,
                ..ColumnState::cold(p)
            })
            .collect();
        return Ok(ClimeColumns { lambda, columns });
    }
    let abandoned = AtomicBool::new(false);
    let columns = par::map_indices(cfg.exec, p, |j| {
        if cfg.abandon_infeasible && abandoned.load(Ordering::Relaxed) {
            return ColumnState::cold(p);
        }
        let prev = warm.map(|w| (&w.columns[j], w.lambda));
        if let Some((c, prev_lambda)) = prev {
            // the feasible set only shrinks as lambda decreases
            if c.infeasible && lambda <= prev_lambda {
                abandoned.store(true, Ordering::Relaxed);
                return c.clone();
            }
        }
        let mut state = prev.map_or_else(|| ColumnState::cold(p), |(c, _)| c.clone());
        state.infeasible = false;
        match cfg.clime_solver {
            ClimeSolver::Admm => {
                state.lp = None;
                admm_column(m, j, lambda, mu, cfg, &mut state);
            }
            ClimeSolver::Simplex => {
                state.admm = None;
                simplex_column(m, j, lambda, cfg, &mut state);
            }
        }
        if state.infeasible {
            abandoned.store(true, Ordering::Relaxed);
        }
        state
    });
    Ok(ClimeColumns { lambda, columns })
}

/// Constrained l1 estimator tagged [`Method::Sclime`].
pub fn sclime(m: &SymmetricMatrix, lambda: f64, cfg: &SolverConfig) -> Result<PrecisionEstimate> {
    let cols = clime_columns(m, lambda, cfg, None)?;
    Ok(PrecisionEstimate::new(cols.symmetrized(), Method::Sclime, lambda, cols.converged()))
}

/// Entry `(i, j)` is whichever of `v_ij`, `v_ji` is smaller in magnitude; ties keep `v_ij`.
pub fn symmetrize_min(v1: &Matrix) -> SymmetricMatrix {
    assert!(v1.is_square(), "symmetrize_min needs a square matrix");
    SymmetricMatrix::from_upper(v1.rows(), |i, j| {
        let a = v1.get(i, j);
        let b = v1.get(j, i);
        if a.abs() <= b.abs() {
            a
        } else {
            b
        }
    })
}

/// Covariance-side state of the block coordinate descent; reusable as a warm start.
#[derive(Clone, Debug)]
pub struct GlassoState {
    pub lambda: f64,
    /// Current estimate of `V^{-1}`.
    pub w: SymmetricMatrix,
    /// Column `j` holds the lasso coefficients of block `j` (zero on the diagonal).
    pub beta: Matrix,
    pub sweeps: usize,
    pub converged: bool,
}

impl GlassoState {
    /// Precision matrix recovered from the final blocks.
    pub fn precision(&self) -> SymmetricMatrix {
        recover_precision(&self.w, &self.beta)
    }
}

fn recover_precision(w: &Matrix, beta: &Matrix) -> SymmetricMatrix {
    let p = w.rows();
    let mut v = Matrix::zeros(p, p);
    for j in 0..p {
        let mut wb = 0.0;
        for k in 0..p {
            if k != j {
                wb += w.get(j, k) * beta.get(k, j);
            }
        }
        let vjj = 1.0 / (w.get(j, j) - wb);
        for k in 0..p {
            v.set(k, j, if k == j { vjj } else { -beta.get(k, j) * vjj });
        }
    }
    symmetrize_min(&v)
}

/// Coordinate descent for `min 1/2 b'Wb - c'b + lambda ||b||_1` over every
/// coordinate except `skip`, which stays zero. `wb` carries `W b` on entry and exit.
fn lasso_cd(
    w: &Matrix,
    skip: usize,
    c: &[f64],
    lambda: f64,
    tol: f64,
    max_sweeps: usize,
    beta: &mut [f64],
    wb: &mut [f64],
) -> bool {
    // passes over the nonzero coordinates only, with a full pass to confirm convergence
    let mut full = true;
    for _ in 0..max_sweeps {
        let mut max_change = 0.0f64;
        for k in 0..beta.len() {
            let old = beta[k];
            if k == skip || (!full && old == 0.0) {
                continue;
            }
            let wkk = w.get(k, k);
            let partial = c[k] - (wb[k] - wkk * old);
            let new = soft_threshold(partial, lambda) / wkk;
            if new != old {
                let delta = new - old;
                beta[k] = new;
                for (x, wr) in wb.iter_mut().zip(w.row(k)) {
                    *x += delta * wr;
                }
                max_change = max_change.max(delta.abs() * wkk.sqrt());
            }
        }
        if max_change <= tol {
            if full {
                return true;
            }
            full = true;
        } else {
            full = false;
        }
    }
    false
}

const KKT_STOP_TOL: f64 = 1e-6;
/// Sweeps without a 10% improvement of the KKT residual before it is taken as the attainable floor.
const STALL_SWEEPS: usize = 25;

/// Block coordinate descent for `min tr(M V) - log det V + lambda ||V||_1`.
pub fn glasso_state(
    m: &SymmetricMatrix,
    lambda: f64,
    cfg: &SolverConfig,
    warm: Option<&GlassoState>,
) -> Result<GlassoState> {
    check_input(m, lambda)?;
    cfg.validate()?;
    let p = m.dim();
    if let Some(i) = (0..p).find(|&i| !(m[(i, i)] > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "diagonal entry {i} is {}, must be positive",
            m[(i, i)]
        )));
    }
    let mut w = m.add_to_diagonal(lambda).into_matrix();
    let mut beta = Matrix::zeros(p, p);
    if let Some(prev) = warm.filter(|prev| prev.w.dim() == p) {
        for i in 0..p {
            for j in 0..p {
                if i != j {
                    w.set(i, j, prev.w[(i, j)]);
                }
            }
        }
        beta = prev.beta.clone();
    }
    let mut offdiag_scale = 0.0;
    for i in 0..p {
        for j in 0..p {
            if i != j {
                offdiag_scale += m[(i, j)].abs();
            }
        }
    }
    let pairs = (p * (p - 1)).max(1) as f64;
    offdiag_scale /= pairs;
    let threshold = cfg.tol_primal * offdiag_scale;

    let mut converged = p == 1;
    let mut sweeps = 0;
    let mut b = vec![0.0; p];
    let mut c = vec![0.0; p];
    let mut wb = vec![0.0; p];
    let mut best_kkt = f64::INFINITY;
    let mut stalled = 0;
    let mut last_change = f64::INFINITY;
    while !converged && sweeps < cfg.max_iter {
        sweeps += 1;
        // loose block solves while W is still moving, inner_tol once it settles
        let tight = last_change <= threshold;
        let inner_tol = if tight { cfg.inner_tol } else { cfg.inner_tol.max(1e-2 * last_change.min(1.0)) };
        let mut change = 0.0;
        for j in 0..p {
            for k in 0..p {
                b[k] = if k == j { 0.0 } else { beta.get(k, j) };
                c[k] = m[(k, j)];
            }
            wb.iter_mut().for_each(|x| *x = 0.0);
            for (k, &bk) in b.iter().enumerate() {
                if bk != 0.0 {
                    for (x, wr) in wb.iter_mut().zip(w.row(k)) {
                        *x += bk * wr;
                    }
                }
            }
            lasso_cd(&w, j, &c, lambda, inner_tol, cfg.max_iter.max(1000), &mut b, &mut wb);
            for k in (0..p).filter(|&k| k != j) {
                beta.set(k, j, b[k]);
                change += (wb[k] - w.get(k, j)).abs();
                w.set(k, j, wb[k]);
                w.set(j, k, wb[k]);
            }
        }
        last_change = change / pairs;
        // the averaged change can be tiny long before the fixed point when p > n
        if tight && change / pairs <= threshold {
            let kkt = glasso_kkt_residual(m, &recover_precision(&w, &beta), lambda).unwrap_or(f64::INFINITY);
            if kkt < 0.9 * best_kkt {
                best_kkt = kkt;
                stalled = 0;
            } else {
                stalled += 1;
            }
            converged = kkt <= KKT_STOP_TOL || (kkt.is_finite() && stalled >= STALL_SWEEPS);
        }
    }
    let w = SymmetricMatrix::from_matrix_averaged(&w);
    Ok(GlassoState {
        lambda,
        w,
        beta,
        sweeps,
        converged,
    })
}

/// Penalized log-determinant estimator tagged [`Method::Sglasso`].
pub fn sglasso(m: &SymmetricMatrix, lambda: f64, cfg: &SolverConfig) -> Result<PrecisionEstimate> {
    let state = glasso_state(m, lambda, cfg, None)?;
    let est = PrecisionEstimate::new(state.precision(), Method::Sglasso, lambda, state.converged);
    assert!(est.is_pd || !state.converged, "block coordinate descent produced a non-PD estimate");
    Ok(est)
}

/// Runs the solver family of `method` on `m`; the tag is carried over.
pub fn fit(method: Method, m: &SymmetricMatrix, lambda: f64, cfg: &SolverConfig) -> Result<PrecisionEstimate> {
    let mut est = if method.is_clime_type() {
        sclime(m, lambda, cfg)?
    } else {
        sglasso(m, lambda, cfg)?
    };
    est.method = method;
    Ok(est)
}

/// Warm state of either solver along a lambda path.
#[derive(Clone, Debug)]
pub enum WarmStart {
    Clime(ClimeColumns),
    Glasso(GlassoState),
}

/// Like [`fit`], seeding the solver with `warm` and returning the new state.
pub fn fit_warm(
    method: Method,
    m: &SymmetricMatrix,
    lambda: f64,
    cfg: &SolverConfig,
    warm: Option<&WarmStart>,
) -> Result<(PrecisionEstimate, WarmStart)> {
    if method.is_clime_type() {
        let prev = match warm {
            Some(WarmStart::Clime(c)) => Some(c),
            _ => None,
        };
        let cols = clime_columns(m, lambda, cfg, prev)?;
        let est = PrecisionEstimate::new(cols.symmetrized(), method, lambda, cols.converged());
        Ok((est, WarmStart::Clime(cols)))
    } else {
        let prev = match warm {
            Some(WarmStart::Glasso(g)) => Some(g),
            _ => None,
        };
        let mut state = glasso_state(m, lambda, cfg, prev)?;
        let mut v = state.precision();
        if prev.is_some() && cholesky(&v).is_err() {
            state = glasso_state(m, lambda, cfg, None)?;
            v = state.precision();
        }
        let est = PrecisionEstimate::new(v, method, lambda, state.converged);
        Ok((est, WarmStart::Glasso(state)))
    }
}

/// Objective `tr(M V) - log det V + lambda ||V||_1`, infinite off the PD cone.
pub fn glasso_objective(m: &SymmetricMatrix, v: &SymmetricMatrix, lambda: f64) -> f64 {
    match linalg::log_det_spd(v) {
        Ok(ld) => m.trace_inner(v) - ld + lambda * linalg::norm_elementwise_l1(v),
        Err(_) => f64::INFINITY,
    }
}

/// Largest violation of the stationarity conditions of the penalized problem at `v`.
pub fn glasso_kkt_residual(m: &SymmetricMatrix, v: &SymmetricMatrix, lambda: f64) -> Result<f64> {
    let w = linalg::invert_spd(v)?;
    let p = m.dim();
    let mut worst = 0.0f64;
    for i in 0..p {
        for j in 0..p {
            let g = m[(i, j)] - w[(i, j)];
            let r = if v[(i, j)] != 0.0 {
                (g + lambda * v[(i, j)].signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            };
            worst = worst.max(r);
        }
    }
    Ok(worst)
}

/// Zeroes every entry with `|v| < tau`.
pub fn threshold_estimate(v: &SymmetricMatrix, tau: f64) -> SymmetricMatrix {
    assert!(tau >= 0.0, "threshold must be non-negative");
    SymmetricMatrix::from_upper(v.dim(), |i, j| {
        let x = v[(i, j)];
        if x.abs() >= tau {
            x
        } else {
            0.0
        }
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SignSupport {
    pub signs: BTreeMap<(usize, usize), i8>,
    pub theta_min: Option<f64>,
}

impl SignSupport {
    pub fn sign(&self, i: usize, j: usize) -> i8 {
        self.signs.get(&(i, j)).copied().unwrap_or(0)
    }

    /// `{(i, j) : v_ij != 0}` over all ordered pairs.
    pub fn support(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.signs.keys().copied()
    }
}

/// Sign map of `v` (only nonzero entries are stored) and the smallest nonzero magnitude.
pub fn sign_support(v: &SymmetricMatrix) -> SignSupport {
    let p = v.dim();
    let mut signs = BTreeMap::new();
    let mut theta_min: Option<f64> = None;
    for i in 0..p {
        for j in 0..p {
            let x = v[(i, j)];
            if x != 0.0 {
                signs.insert((i, j), if x > 0.0 { 1 } else { -1 });
                theta_min = Some(theta_min.map_or(x.abs(), |t| t.min(x.abs())));
            }
        }
    }
    SignSupport { signs, theta_min }
}
