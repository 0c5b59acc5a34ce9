//! Reference computations written independently of the library code.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use spatial_precision::linalg::SymmetricMatrix;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[piv][c].abs() < 1e-12 {
            return None;
        }
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

pub fn inverse(m: &SymmetricMatrix) -> Vec<Vec<f64>> {
    let p = m.dim();
    let a: Vec<Vec<f64>> = (0..p).map(|i| (0..p).map(|j| m[(i, j)]).collect()).collect();
    let cols: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            let e: Vec<f64> = (0..p).map(|i| f64::from(u8::from(i == j))).collect();
            solve(a.clone(), e).expect("invertible")
        })
        .collect();
    (0..p).map(|i| (0..p).map(|j| cols[j][i]).collect()).collect()
}

/// `log det` through an unpivoted Cholesky factorization; `None` when not positive definite.
pub fn log_det(m: &SymmetricMatrix) -> Option<f64> {
    let p = m.dim();
    let mut l = vec![vec![0.0; p]; p];
    let mut acc = 0.0;
    for j in 0..p {
        let d = m[(j, j)] - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
        if d <= 0.0 {
            return None;
        }
        l[j][j] = d.sqrt();
        acc += 2.0 * l[j][j].ln();
        for i in j + 1..p {
            l[i][j] = (m[(i, j)] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>()) / l[j][j];
        }
    }
    Some(acc)
}

/// `A'A / p + 0.5 I` with `A` standard normal.
pub fn random_spd(p: usize, rng: &mut ChaCha8Rng) -> SymmetricMatrix {
    let a: Vec<f64> = (0..p * p).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
    SymmetricMatrix::from_upper(p, |i, j| {
        (0..p).map(|k| a[k * p + i] * a[k * p + j]).sum::<f64>() / p as f64 + if i == j { 0.5 } else { 0.0 }
    })
}

/// Largest violation of the stationarity conditions `M - V^{-1} + lambda * sign(V) = 0`.
pub fn kkt_residual(m: &SymmetricMatrix, v: &SymmetricMatrix, lambda: f64) -> f64 {
    let w = inverse(v);
    let p = m.dim();
    let mut worst = 0.0f64;
    for i in 0..p {
        for j in 0..p {
            let g = m[(i, j)] - w[i][j];
            let r = if v[(i, j)] != 0.0 {
                (g + lambda * v[(i, j)].signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            };
            worst = worst.max(r);
        }
    }
    worst
}

/// Optimal value of `min ||b||_1  s.t.  ||M b - e_j||_inf <= lambda` by vertex enumeration.
///
/// Written over `(b, t)` with `t >= b`, `t >= -b`, the feasible region is a pointed
/// polyhedron in `R^{2p}`, so the minimum of `sum t` sits at a vertex: a point where
/// `2p` of the `4p` inequalities are tight. `None` when no vertex is feasible.
pub fn clime_column_oracle(m: &SymmetricMatrix, j: usize, lambda: f64) -> Option<f64> {
    let p = m.dim();
    let dim = 2 * p;
    // rows of G z <= h with z = (b, t)
    let mut g: Vec<Vec<f64>> = Vec::new();
    let mut h: Vec<f64> = Vec::new();
    for i in 0..p {
        let e = f64::from(u8::from(i == j));
        let mut row: Vec<f64> = (0..p).map(|k| m[(i, k)]).collect();
        row.extend(vec![0.0; p]);
        g.push(row.clone());
        h.push(lambda + e);
        g.push(row.iter().map(|v| -v).collect());
        h.push(lambda - e);
    }
    for k in 0..p {
        let mut up = vec![0.0; dim];
        up[k] = 1.0;
        up[p + k] = -1.0;
        g.push(up);
        h.push(0.0);
        let mut down = vec![0.0; dim];
        down[k] = -1.0;
        down[p + k] = -1.0;
        g.push(down);
        h.push(0.0);
    }
    let rows = g.len();
    let mut best: Option<f64> = None;
    let mut pick = (0..dim).collect::<Vec<usize>>();
    loop {
        let a: Vec<Vec<f64>> = pick.iter().map(|&r| g[r].clone()).collect();
        let b: Vec<f64> = pick.iter().map(|&r| h[r]).collect();
        if let Some(z) = solve(a, b) {
            let feasible = (0..rows).all(|r| g[r].iter().zip(&z).map(|(a, x)| a * x).sum::<f64>() <= h[r] + 1e-9);
            if feasible {
                let obj: f64 = z[p..].iter().sum();
                best = Some(best.map_or(obj, |v: f64| v.min(obj)));
            }
        }
        // next combination in lexicographic order
        let mut i = dim;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if pick[i] < rows - dim + i {
                break;
            }
        }
        pick[i] += 1;
        for k in i + 1..dim {
            pick[k] = pick[k - 1] + 1;
        }
    }
}
