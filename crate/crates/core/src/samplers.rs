//! Generative models: the banded/random/AR(1) precision structures, the
//! geometric random graph, elliptical sampling, LDA data, contamination and
//! the moment formula of the uniform distribution on the sphere.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LabeledDataset};
use crate::error::{Error, Result};
use crate::linalg::{self, cholesky, invert_spd, CholeskyFactor, SymmetricMatrix};

/// Generator used for every simulation stream.
pub type SimRng = ChaCha8Rng;

/// Independent stream for replication `replication` of a run seeded with `base_seed`.
pub fn replication_rng(base_seed: u64, replication: u64) -> SimRng {
    SimRng::seed_from_u64(base_seed.wrapping_add(replication))
}

/// Redraw budget for rejection steps (degenerate Model II patterns, empty LDA classes).
const MAX_REDRAWS: usize = 1000;

/// Kernel bandwidth of the geometric random graph.
pub const GEOMETRIC_GRAPH_SCALE: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ModelKind {
    /// `Omega_ij = rho^|i-j|`.
    ModelI { rho: f64 },
    /// Sparse random pattern shifted to condition number `p`, unit diagonal.
    ModelII { edge_prob: f64, edge_val: f64 },
    /// `Sigma_ij = rho^|i-j|`, tridiagonal precision.
    ModelIII { rho: f64 },
    GeometricGraph {
        max_degree: usize,
        edge_val: f64,
        scale: f64,
    },
}

/// True precision/covariance pair together with the edge set of the precision.
#[derive(Clone, Debug)]
pub struct PrecisionModel {
    pub kind: ModelKind,
    pub omega: SymmetricMatrix,
    pub sigma: SymmetricMatrix,
    pub edges: BTreeSet<(usize, usize)>,
}

impl PrecisionModel {
    fn from_pair(kind: ModelKind, omega: SymmetricMatrix, sigma: SymmetricMatrix) -> Self {
        let edges = support_edges(&omega);
        Self {
            kind,
            omega,
            sigma,
            edges,
        }
    }

    pub fn dim(&self) -> usize {
        self.omega.dim()
    }

    /// Shape-normalized precision `V0 = (tr(Sigma)/p) * Omega`.
    pub fn v0(&self) -> SymmetricMatrix {
        let p = self.dim() as f64;
        self.omega.scaled(self.sigma.trace() / p)
    }

    /// Shape matrix `Lambda0 = (p/tr(Sigma)) * Sigma`.
    pub fn shape(&self) -> SymmetricMatrix {
        let p = self.dim() as f64;
        self.sigma.scaled(p / self.sigma.trace())
    }
}

/// Strict upper-triangle support `{(i, j) : i < j, m_ij != 0}`.
pub fn support_edges(m: &SymmetricMatrix) -> BTreeSet<(usize, usize)> {
    let p = m.dim();
    let mut edges = BTreeSet::new();
    for i in 0..p {
        for j in i + 1..p {
            if m[(i, j)] != 0.0 {
                edges.insert((i, j));
            }
        }
    }
    edges
}

fn check_dim(p: usize) -> Result<()> {
    if p < 2 {
        return Err(Error::InvalidParameter(format!("dimension must be at least 2, got {p}")));
    }
    Ok(())
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!("|rho| must be below 1, got {rho}")));
    }
    Ok(())
}

pub fn gen_model1(p: usize, rho: f64) -> Result<PrecisionModel> {
    check_dim(p)?;
    check_rho(rho)?;
    let omega = SymmetricMatrix::from_upper(p, |i, j| rho.powi((j - i) as i32));
    let sigma = invert_spd(&omega)?;
    Ok(PrecisionModel::from_pair(ModelKind::ModelI { rho }, omega, sigma))
}

pub fn gen_model3(p: usize, rho: f64) -> Result<PrecisionModel> {
    check_dim(p)?;
    check_rho(rho)?;
    let sigma = SymmetricMatrix::from_upper(p, |i, j| rho.powi((j - i) as i32));
    let denom = 1.0 - rho * rho;
    let omega = SymmetricMatrix::from_upper(p, |i, j| {
        if i == j {
            if i == 0 || i == p - 1 {
                1.0 / denom
            } else {
                (1.0 + rho * rho) / denom
            }
        } else if j == i + 1 {
            -rho / denom
        } else {
            0.0
        }
    });
    // guards against a non-PD inverse, impossible for |rho| < 1
    cholesky(&omega)?;
    Ok(PrecisionModel::from_pair(ModelKind::ModelIII { rho }, omega, sigma))
}

/// Draws the random symmetric pattern of Model II: zero diagonal, each upper
/// entry equal to `edge_val` with probability `edge_prob`.
pub fn model2_pattern<R: Rng + ?Sized>(p: usize, edge_prob: f64, edge_val: f64, rng: &mut R) -> SymmetricMatrix {
    let mut draws = vec![0.0; p * p];
    for i in 0..p {
        for j in i + 1..p {
            if rng.random_bool(edge_prob) {
                draws[i * p + j] = edge_val;
            }
        }
    }
    SymmetricMatrix::from_upper(p, |i, j| if i == j { 0.0 } else { draws[i * p + j] })
}

/// Shift `delta` with `cond(B + delta I) = target`, found by bisection on
/// `delta` above `-lambda_min(B)`. Returns `None` when the spectrum of `B` is
/// flat (every shift gives condition number 1).
pub fn condition_shift(b: &SymmetricMatrix, target: f64) -> Result<Option<f64>> {
    let eig = linalg::sym_eigenvalues(b, 1e-15)?;
    let hi_eig = eig[0];
    let lo_eig = eig[eig.len() - 1];
    let spread = hi_eig - lo_eig;
    if spread <= 1e-12 * hi_eig.abs().max(lo_eig.abs()).max(1.0) {
        return Ok(None);
    }
    let cond = |delta: f64| (hi_eig + delta) / (lo_eig + delta);
    // cond -> inf as delta -> -lo_eig and -> 1 as delta -> inf.
    let mut lo = -lo_eig + spread * 1e-12;
    let mut hi = -lo_eig + spread;
    while cond(hi) > target {
        hi = -lo_eig + 2.0 * (hi + lo_eig);
    }
    if cond(lo) < target {
        return Ok(None);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cond(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= f64::EPSILON * hi.abs() {
            break;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// Model II built from an already drawn pattern `b`.
pub fn model2_from_pattern(b: &SymmetricMatrix, edge_prob: f64, edge_val: f64) -> Result<PrecisionModel> {
    let p = b.dim();
    check_dim(p)?;
    let delta = condition_shift(b, p as f64)?
        .ok_or_else(|| Error::Degenerate("pattern spectrum is flat; condition number cannot reach p".into()))?;
    let shifted = b.add_to_diagonal(delta);
    let d: Vec<f64> = shifted.diagonal().iter().map(|v| 1.0 / v.sqrt()).collect();
    let omega = SymmetricMatrix::from_upper(p, |i, j| shifted[(i, j)] * d[i] * d[j]);
    let sigma = invert_spd(&omega)?;
    Ok(PrecisionModel::from_pair(
        ModelKind::ModelII { edge_prob, edge_val },
        omega,
        sigma,
    ))
}

pub fn gen_model2<R: Rng + ?Sized>(p: usize, edge_prob: f64, edge_val: f64, rng: &mut R) -> Result<PrecisionModel> {
    check_dim(p)?;
    for _ in 0..MAX_REDRAWS {
        let b = model2_pattern(p, edge_prob, edge_val, rng);
        match model2_from_pattern(&b, edge_prob, edge_val) {
            Err(Error::Degenerate(_)) => continue,
            other => return other,
        }
    }
    Err(Error::Degenerate(format!(
        "no usable Model II pattern in {MAX_REDRAWS} draws (p={p}, edge_prob={edge_prob})"
    )))
}

/// Probability that two graph vertices at squared distance `dist2` are joined.
pub fn geometric_edge_probability(dist2: f64, scale: f64) -> f64 {
    (-dist2 / scale).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn gen_geometric_graph_model<R: Rng + ?Sized>(
    p: usize,
    max_degree: usize,
    edge_val: f64,
    rng: &mut R,
) -> Result<PrecisionModel> {
    check_dim(p)?;
    let scale = GEOMETRIC_GRAPH_SCALE;
    for _ in 0..MAX_REDRAWS {
        let points: Vec<[f64; 2]> = (0..p).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        let mut pairs: Vec<(usize, usize)> = (0..p).flat_map(|i| (i + 1..p).map(move |j| (i, j))).collect();
        pairs.shuffle(rng);
        let mut degree = vec![0usize; p];
        let mut edges = BTreeSet::new();
        for (i, j) in pairs {
            let dx = points[i][0] - points[j][0];
            let dy = points[i][1] - points[j][1];
            let accept = rng.random::<f64>() < geometric_edge_probability(dx * dx + dy * dy, scale);
            if accept && degree[i] < max_degree && degree[j] < max_degree {
                degree[i] += 1;
                degree[j] += 1;
                edges.insert((i, j));
            }
        }
        let omega = SymmetricMatrix::from_upper(p, |i, j| {
            if i == j {
                1.0
            } else if edges.contains(&(i, j)) {
                edge_val
            } else {
                0.0
            }
        });
        match invert_spd(&omega) {
            Ok(sigma) => {
                let kind = ModelKind::GeometricGraph {
                    max_degree,
                    edge_val,
                    scale,
                };
                return Ok(PrecisionModel {
                    kind,
                    omega,
                    sigma,
                    edges,
                });
            }
            // unreachable when max_degree * |edge_val| < 1 (diagonal dominance)
            Err(_) => continue,
        }
    }
    Err(Error::Degenerate(format!(
        "no positive definite geometric graph in {MAX_REDRAWS} draws"
    )))
}

/// Radial law of an elliptical distribution, with the normalizer that makes
/// the covariance equal the scatter matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum EllipticalLaw {
    Normal,
    StudentT { df: f64, scale: f64 },
    MixtureNormal { weight_heavy: f64, sigma_mult: f64, scale: f64 },
}

impl EllipticalLaw {
    /// Multivariate t with `df > 2`, scaled to unit covariance factor.
    pub fn student_t(df: f64) -> Result<Self> {
        if !(df > 2.0) {
            return Err(Error::InvalidParameter(format!(
                "t degrees of freedom must exceed 2 for a finite covariance, got {df}"
            )));
        }
        Ok(Self::StudentT {
            df,
            scale: 1.0 / (df / (df - 2.0)).sqrt(),
        })
    }

    /// Scale mixture `(1-w) N(0, S) + w N(0, c^2 S)` rescaled to covariance `S`.
    pub fn mixture_normal(weight_heavy: f64, sigma_mult: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&weight_heavy) || !(sigma_mult > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mixture needs weight in [0,1] and positive multiplier, got ({weight_heavy}, {sigma_mult})"
            )));
        }
        let var = (1.0 - weight_heavy) + weight_heavy * sigma_mult * sigma_mult;
        Ok(Self::MixtureNormal {
            weight_heavy,
            sigma_mult,
            scale: 1.0 / var.sqrt(),
        })
    }

    pub fn t3() -> Self {
        Self::StudentT {
            df: 3.0,
            scale: 1.0 / 3f64.sqrt(),
        }
    }

    /// Mixture with 20% weight on the 3x inflated component, normalized by sqrt(2.6).
    pub fn contaminated_normal() -> Self {
        Self::MixtureNormal {
            weight_heavy: 0.2,
            sigma_mult: 3.0,
            scale: 1.0 / 2.6f64.sqrt(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Normal => "normal",
            Self::StudentT { .. } => "t",
            Self::MixtureNormal { .. } => "mixture",
        }
    }
}

/// Draws rows `mu + r * L z` for a fixed scatter matrix.
#[derive(Clone, Debug)]
pub struct EllipticalSampler {
    law: EllipticalLaw,
    factor: CholeskyFactor,
    chi2: Option<ChiSquared<f64>>,
}

impl EllipticalSampler {
    pub fn new(law: EllipticalLaw, sigma: &SymmetricMatrix) -> Result<Self> {
        let factor = cholesky(sigma)?;
        let chi2 = match law {
            EllipticalLaw::StudentT { df, .. } => Some(
                ChiSquared::new(df).map_err(|e| Error::InvalidParameter(format!("chi-square({df}): {e}")))?,
            ),
            _ => None,
        };
        Ok(Self { law, factor, chi2 })
    }

    pub fn dim(&self) -> usize {
        self.factor.dim()
    }

    fn radial<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.law {
            EllipticalLaw::Normal => 1.0,
            EllipticalLaw::StudentT { df, scale } => {
                let g = self.chi2.as_ref().expect("chi-square set for t law").sample(rng);
                scale / (g / df).sqrt()
            }
            EllipticalLaw::MixtureNormal {
                weight_heavy,
                sigma_mult,
                scale,
            } => {
                if rng.random_bool(weight_heavy) {
                    scale * sigma_mult
                } else {
                    scale
                }
            }
        }
    }

    /// Writes one observation centered at `mu` into `out`; `z` is scratch of length p.
    pub fn sample_into<R: Rng + ?Sized>(&self, mu: &[f64], rng: &mut R, z: &mut [f64], out: &mut [f64]) {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let r = self.radial(rng);
        self.factor.lower_mul(z, out);
        for (o, m) in out.iter_mut().zip(mu) {
            *o = m + r * *o;
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, mu: &[f64], n: usize, rng: &mut R) -> Dataset {
        let p = self.dim();
        let mut values = vec![0.0; n * p];
        let mut z = vec![0.0; p];
        for row in values.chunks_exact_mut(p) {
            self.sample_into(mu, rng, &mut z, row);
        }
        Dataset::from_vec(n, p, values).expect("buffer sized n*p")
    }
}

/// `n` draws from the elliptical law with location `mu` and covariance `sigma`.
pub fn sample_elliptical<R: Rng + ?Sized>(
    law: EllipticalLaw,
    mu: &[f64],
    sigma: &SymmetricMatrix,
    n: usize,
    rng: &mut R,
) -> Result<Dataset> {
    if mu.len() != sigma.dim() {
        return Err(Error::InvalidParameter(format!(
            "location has length {} but covariance is {}x{}",
            mu.len(),
            sigma.dim(),
            sigma.dim()
        )));
    }
    Ok(EllipticalSampler::new(law, sigma)?.sample(mu, n, rng))
}

/// Two-class data: labels ~ Bernoulli(p1), class 1 shifted by `a` in its
/// first `s` coordinates.
pub fn gen_lda_data<R: Rng + ?Sized>(
    model: &PrecisionModel,
    law: EllipticalLaw,
    n: usize,
    p1: f64,
    s: usize,
    a: f64,
    rng: &mut R,
) -> Result<LabeledDataset> {
    let p = model.dim();
    if !(p1 > 0.0 && p1 < 1.0) {
        return Err(Error::InvalidParameter(format!("class probability must lie in (0,1), got {p1}")));
    }
    if s == 0 || s > p {
        return Err(Error::InvalidParameter(format!("sparsity level must lie in [1, {p}], got {s}")));
    }
    let sampler = EllipticalSampler::new(law, &model.sigma)?;
    let mu0 = vec![0.0; p];
    let mu1: Vec<f64> = (0..p).map(|j| if j < s { a } else { 0.0 }).collect();
    let mut labels = Vec::new();
    for attempt in 0..=MAX_REDRAWS {
        if attempt == MAX_REDRAWS {
            return Err(Error::Degenerate(format!("a class stayed empty over {MAX_REDRAWS} label draws")));
        }
        labels = (0..n).map(|_| u8::from(rng.random_bool(p1))).collect();
        let ones = labels.iter().filter(|&&l| l == 1).count();
        if ones > 0 && ones < n {
            break;
        }
    }
    let mut values = vec![0.0; n * p];
    let mut z = vec![0.0; p];
    for (row, &label) in values.chunks_exact_mut(p).zip(&labels) {
        let mu = if label == 1 { &mu1 } else { &mu0 };
        sampler.sample_into(mu, rng, &mut z, row);
    }
    Ok(LabeledDataset::new(Dataset::from_vec(n, p, values)?, labels)?)
}

/// Number of entries replaced per column: `ceil(n * r)`.
pub fn contamination_count(n: usize, r: f64) -> usize {
    // the small offset keeps exact products like 100 * 0.07 from rounding up
    let k = ((n as f64) * r - 1e-9).ceil();
    (k.max(0.0) as usize).min(n)
}

/// Replaces `ceil(n r)` distinct, uniformly chosen entries of every column by `+a` or `-a`.
pub fn contaminate<R: Rng + ?Sized>(data: &Dataset, r: f64, a: f64, rng: &mut R) -> Result<Dataset> {
    if !(0.0..1.0).contains(&r) {
        return Err(Error::InvalidParameter(format!("contamination rate must lie in [0,1), got {r}")));
    }
    let mut out = data.clone();
    let k = contamination_count(data.n(), r);
    if k == 0 {
        return Ok(out);
    }
    for j in 0..data.p() {
        for i in rand::seq::index::sample(rng, data.n(), k) {
            let v = if rng.random_bool(0.5) { a } else { -a };
            out.set(i, j, v);
        }
    }
    Ok(out)
}

/// Rising factorial `x (x+1) ... (x+l-1)`.
fn rising_factorial(x: f64, l: u32) -> f64 {
    (0..l).map(|k| x + f64::from(k)).product()
}

/// Mixed moment `E[prod u_i^{m_i}]` for `u` uniform on the unit sphere in
/// `R^p`, `p = exponents.len()`.
///
/// Zero when any exponent is odd; otherwise with `m_i = 2 l_i`, `l = sum l_i`:
/// `prod_i [(2 l_i)! / (4^{l_i} l_i!)] / (p/2)^{[l]}`.
pub fn sphere_moment(exponents: &[u32]) -> f64 {
    if exponents.iter().any(|m| m % 2 == 1) {
        return 0.0;
    }
    let p = exponents.len() as f64;
    let l: u32 = exponents.iter().map(|m| m / 2).sum();
    // (2k)! / (4^k k!) == (1/2)^{[k]}
    let numerator: f64 = exponents.iter().map(|m| rising_factorial(0.5, m / 2)).product();
    numerator / rising_factorial(p / 2.0, l)
}
