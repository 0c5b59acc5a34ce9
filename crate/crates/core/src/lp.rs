//! Bounded-variable dual simplex for one column of the constrained l1 problem
//!
//! ```text
//! min 1'(b+ + b-)   s.t.   M b+ - M b- - s = e_j,   b+, b- >= 0,   -lambda <= s <= lambda
//! ```
//!
//! The all-slack basis is dual feasible for every `lambda`, and changing
//! `lambda` only moves bounds, so a finished basis is a valid warm start for
//! the next grid value.

use crate::linalg::{Matrix, SymmetricMatrix};

const FEAS_TOL: f64 = 1e-10;
const PIVOT_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-12;
const REFACTOR_EVERY: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Status {
    Basic,
    Lower,
    Upper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpOutcome {
    Optimal,
    Infeasible,
    IterationLimit,
}

#[derive(Clone, Debug)]
pub struct ColumnLp {
    j: usize,
    p: usize,
    basis: Vec<usize>,
    status: Vec<Status>,
    binv: Matrix,
    since_refactor: usize,
    pub pivots: usize,
}

impl ColumnLp {
    pub fn new(p: usize, j: usize) -> Self {
        let mut status = vec![Status::Lower; 3 * p];
        status[2 * p..].iter_mut().for_each(|s| *s = Status::Basic);
        Self {
            j,
            p,
            basis: (2 * p..3 * p).collect(),
            status,
            binv: Matrix::identity(p).scaled(-1.0),
            since_refactor: 0,
            pivots: 0,
        }
    }

    pub fn column(&self) -> usize {
        self.j
    }

    fn cost(&self, v: usize) -> f64 {
        if v < 2 * self.p {
            1.0
        } else {
            0.0
        }
    }

    fn bounds(&self, v: usize, lambda: f64) -> (f64, f64) {
        if v < 2 * self.p {
            (0.0, f64::INFINITY)
        } else {
            (-lambda, lambda)
        }
    }

    fn nonbasic_value(&self, v: usize, lambda: f64) -> f64 {
        match self.status[v] {
            Status::Basic => unreachable!(),
            Status::Lower => self.bounds(v, lambda).0,
            Status::Upper => self.bounds(v, lambda).1,
        }
    }

    /// Writes column `v` of the constraint matrix into `out`.
    fn constraint_column(&self, m: &SymmetricMatrix, v: usize, out: &mut [f64]) {
        let p = self.p;
        if v < p {
            out.copy_from_slice(m.row(v));
        } else if v < 2 * p {
            out.iter_mut().zip(m.row(v - p)).for_each(|(o, x)| *o = -x);
        } else {
            out.iter_mut().for_each(|o| *o = 0.0);
            out[v - 2 * p] = -1.0;
        }
    }

    fn refactor(&mut self, m: &SymmetricMatrix) -> bool {
        let p = self.p;
        let mut b = Matrix::zeros(p, p);
        let mut col = vec![0.0; p];
        for (r, &v) in self.basis.iter().enumerate() {
            self.constraint_column(m, v, &mut col);
            for i in 0..p {
                b.set(i, r, col[i]);
            }
        }
        match invert_general(&b) {
            Some(inv) => {
                self.binv = inv;
                self.since_refactor = 0;
                true
            }
            None => false,
        }
    }

    fn basic_values(&self, lambda: f64) -> Vec<f64> {
        let p = self.p;
        let mut rhs = vec![0.0; p];
        rhs[self.j] = 1.0;
        for k in 0..p {
            let v = 2 * p + k;
            if self.status[v] != Status::Basic {
                rhs[k] += self.nonbasic_value(v, lambda);
            }
        }
        self.binv.matvec(&rhs)
    }

    fn reduced_costs(&self, m: &SymmetricMatrix) -> Vec<f64> {
        let p = self.p;
        let mut y = vec![0.0; p];
        for (row, &v) in self.basis.iter().enumerate() {
            let c = self.cost(v);
            if c != 0.0 {
                for (yi, b) in y.iter_mut().zip(self.binv.row(row)) {
                    *yi += c * b;
                }
            }
        }
        let y_m = m.matvec(&y);
        let mut d = vec![0.0; 3 * p];
        for k in 0..p {
            d[k] = 1.0 - y_m[k];
            d[p + k] = 1.0 + y_m[k];
            d[2 * p + k] = y[k];
        }
        for &v in &self.basis {
            d[v] = 0.0;
        }
        d
    }

    /// Runs dual simplex iterations until optimality, infeasibility or `max_pivots`.
    pub fn solve(&mut self, m: &SymmetricMatrix, lambda: f64, max_pivots: usize) -> LpOutcome {
        let p = self.p;
        let mut rho_m = vec![0.0; p];
        let mut alpha = vec![0.0; 3 * p];
        let mut col = vec![0.0; p];
        let mut w = vec![0.0; p];
        let mut budget = max_pivots;
        let mut xb = self.basic_values(lambda);
        let mut d = self.reduced_costs(m);
        loop {
            let mut leave: Option<(usize, f64, bool)> = None;
            for (r, &x) in xb.iter().enumerate() {
                let (lo, hi) = self.bounds(self.basis[r], lambda);
                let scale = FEAS_TOL * (1.0 + x.abs());
                let (viol, below) = if x < lo - scale {
                    (lo - x, true)
                } else if x > hi + scale {
                    (x - hi, false)
                } else {
                    continue;
                };
                if leave.is_none_or(|(_, best, _)| viol > best) {
                    leave = Some((r, viol, below));
                }
            }
            let Some((r, _, below)) = leave else {
                return LpOutcome::Optimal;
            };
            if budget == 0 {
                return LpOutcome::IterationLimit;
            }
            budget -= 1;

            let rho = self.binv.row(r);
            m.matvec_into(rho, &mut rho_m);
            for k in 0..p {
                alpha[k] = rho_m[k];
                alpha[p + k] = -rho_m[k];
                alpha[2 * p + k] = -rho[k];
            }

            // x_r moves by -alpha_q * dx_q; pick candidates that push it toward the violated bound
            let eligible = |v: usize| -> Option<f64> {
                let a = alpha[v];
                if a.abs() <= PIVOT_TOL {
                    return None;
                }
                let ok = match (self.status[v], below) {
                    (Status::Basic, _) => false,
                    (Status::Lower, true) => a < 0.0,
                    (Status::Upper, true) => a > 0.0,
                    (Status::Lower, false) => a > 0.0,
                    (Status::Upper, false) => a < 0.0,
                };
                ok.then_some(a)
            };
            let mut bound = f64::INFINITY;
            for v in 0..3 * p {
                if let Some(a) = eligible(v) {
                    bound = bound.min((d[v].abs() + DUAL_TOL) / a.abs());
                }
            }
            if bound.is_infinite() {
                return LpOutcome::Infeasible;
            }
            let mut enter: Option<(usize, f64)> = None;
            for v in 0..3 * p {
                if let Some(a) = eligible(v) {
                    if d[v].abs() / a.abs() <= bound && enter.is_none_or(|(_, best)| a.abs() > best) {
                        enter = Some((v, a.abs()));
                    }
                }
            }
            let (q, _) = enter.expect("ratio test found a bound but no candidate");

            self.constraint_column(m, q, &mut col);
            self.binv.matvec_into(&col, &mut w);
            let pivot = w[r];
            let leaving = self.basis[r];
            let (lo, hi) = self.bounds(leaving, lambda);
            let theta_p = (xb[r] - if below { lo } else { hi }) / pivot;
            let entering_value = self.nonbasic_value(q, lambda);
            for (x, wi) in xb.iter_mut().zip(&w) {
                *x -= theta_p * wi;
            }
            xb[r] = entering_value + theta_p;
            let theta_d = d[q] / alpha[q];
            for v in 0..3 * p {
                if self.status[v] != Status::Basic {
                    d[v] -= theta_d * alpha[v];
                }
            }
            d[q] = 0.0;
            d[leaving] = -theta_d;
            {
                let row_r: Vec<f64> = self.binv.row(r).iter().map(|v| v / pivot).collect();
                for i in 0..p {
                    if i == r {
                        self.binv.row_mut(i).copy_from_slice(&row_r);
                    } else if w[i] != 0.0 {
                        let wi = w[i];
                        for (b, rr) in self.binv.row_mut(i).iter_mut().zip(&row_r) {
                            *b -= wi * rr;
                        }
                    }
                }
            }
            self.basis[r] = q;
            self.status[q] = Status::Basic;
            self.status[leaving] = if below { Status::Lower } else { Status::Upper };
            self.pivots += 1;
            self.since_refactor += 1;
            if self.since_refactor >= REFACTOR_EVERY {
                if !self.refactor(m) {
                    return LpOutcome::IterationLimit;
                }
                xb = self.basic_values(lambda);
                d = self.reduced_costs(m);
            }
        }
    }

    /// Current primal coefficients `b = b+ - b-`.
    pub fn beta(&self, lambda: f64) -> Vec<f64> {
        let p = self.p;
        let xb = self.basic_values(lambda);
        let mut beta = vec![0.0; p];
        for (r, &v) in self.basis.iter().enumerate() {
            if v < p {
                beta[v] += xb[r];
            } else if v < 2 * p {
                beta[v - p] -= xb[r];
            }
        }
        beta
    }
}

/// Gauss-Jordan inverse with partial pivoting; `None` when singular.
fn invert_general(a: &Matrix) -> Option<Matrix> {
    let n = a.rows();
    let mut work = a.clone();
    let mut inv = Matrix::identity(n);
    let scale = a.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    for c in 0..n {
        let (piv, best) = (c..n)
            .map(|r| (r, work.get(r, c).abs()))
            .fold((c, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best <= 1e-14 * scale {
            return None;
        }
        if piv != c {
            for k in 0..n {
                let (x, y) = (work.get(c, k), work.get(piv, k));
                work.set(c, k, y);
                work.set(piv, k, x);
                let (x, y) = (inv.get(c, k), inv.get(piv, k));
                inv.set(c, k, y);
                inv.set(piv, k, x);
            }
        }
        let d = work.get(c, c);
        for k in 0..n {
            work.set(c, k, work.get(c, k) / d);
            inv.set(c, k, inv.get(c, k) / d);
        }
        let wc = work.row(c).to_vec();
        let ic = inv.row(c).to_vec();
        for r in 0..n {
            if r == c {
                continue;
            }
            let f = work.get(r, c);
            if f != 0.0 {
                for k in 0..n {
                    work.set(r, k, work.get(r, k) - f * wc[k]);
                    inv.set(r, k, inv.get(r, k) - f * ic[k]);
                }
            }
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm_elementwise_inf;

    #[test]
    fn identity_column() {
        let m = SymmetricMatrix::identity(3);
        let mut lp = ColumnLp::new(3, 1);
        assert_eq!(lp.solve(&m, 0.1, 100), LpOutcome::Optimal);
        let b = lp.beta(0.1);
        assert!((b[1] - 0.9).abs() < 1e-14 && b[0] == 0.0 && b[2] == 0.0);
    }

    #[test]
    fn singular_input_is_infeasible_at_small_lambda() {
        let m = SymmetricMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let mut lp = ColumnLp::new(2, 0);
        assert_eq!(lp.solve(&m, 0.1, 100), LpOutcome::Infeasible);
        let mut lp = ColumnLp::new(2, 0);
        assert_eq!(lp.solve(&m, 0.6, 100), LpOutcome::Optimal);
    }

    #[test]
    fn general_inverse() {
        let a = Matrix::from_rows(&[vec![0.0, 2.0, 1.0], vec![1.0, 0.0, 0.0], vec![3.0, 1.0, 4.0]]).unwrap();
        let inv = invert_general(&a).unwrap();
        assert!(norm_elementwise_inf(&a.matmul(&inv).sub(&Matrix::identity(3))) < 1e-14);
        assert!(invert_general(&Matrix::zeros(2, 2)).is_none());
    }
}
