//! Simulation drivers: precision-matrix loss tables, graph-recovery ROC curves
//! and discriminant-analysis tables, each averaged over seeded replications.

use serde::{Deserialize, Serialize};

use crate::applications::{
    classification_metrics, lda_predict_all, roc_path_from_input, trapezoidal_auc, LdaInputs, ROC_THRESHOLD,
};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{Method, SolverConfig};
use crate::linalg::{norm_frobenius, norm_matrix_l1, norm_operator, SymmetricMatrix, POWER_ITERATION_TOL};
use crate::par::{self, Execution};
use crate::samplers::{
    contaminate, gen_geometric_graph_model, gen_lda_data, gen_model1, gen_model2, gen_model3, replication_rng,
    EllipticalLaw, EllipticalSampler, PrecisionModel, SimRng,
};
use crate::selection::{argmin_prefer_larger, fit_path_for_selection, input_matrix, lambda_grid, select_lambda_with_inputs, LambdaGrid, Spacing};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Precision,
    GraphRoc,
    Lda,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Model1 {
        #[serde(default = "default_rho")]
        rho: f64,
    },
    Model2 {
        #[serde(default = "default_edge_prob")]
        edge_prob: f64,
        #[serde(default = "default_model2_edge")]
        edge_val: f64,
    },
    Model3 {
        #[serde(default = "default_rho")]
        rho: f64,
    },
    GeometricGraph {
        #[serde(default = "default_max_degree")]
        max_degree: usize,
        #[serde(default = "default_graph_edge")]
        edge_val: f64,
    },
}

fn default_rho() -> f64 {
    0.6
}
fn default_edge_prob() -> f64 {
    0.1
}
fn default_model2_edge() -> f64 {
    0.5
}
fn default_max_degree() -> usize {
    4
}
fn default_graph_edge() -> f64 {
    0.145
}

impl ModelSpec {
    pub fn generate(&self, p: usize, rng: &mut SimRng) -> Result<PrecisionModel> {
        match *self {
            ModelSpec::Model1 { rho } => gen_model1(p, rho),
            ModelSpec::Model2 { edge_prob, edge_val } => gen_model2(p, edge_prob, edge_val, rng),
            ModelSpec::Model3 { rho } => gen_model3(p, rho),
            ModelSpec::GeometricGraph { max_degree, edge_val } => {
                gen_geometric_graph_model(p, max_degree, edge_val, rng)
            }
        }
    }

    /// Whether the model is drawn at random (and must be regenerated per replication).
    pub fn is_random(&self) -> bool {
        matches!(self, ModelSpec::Model2 { .. } | ModelSpec::GeometricGraph { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawSpec {
    Normal,
    StudentT {
        #[serde(default = "default_df")]
        df: f64,
    },
    Mixture {
        #[serde(default = "default_weight")]
        weight_heavy: f64,
        #[serde(default = "default_sigma_mult")]
        sigma_mult: f64,
    },
}

fn default_df() -> f64 {
    3.0
}
fn default_weight() -> f64 {
    0.2
}
fn default_sigma_mult() -> f64 {
    3.0
}

impl LawSpec {
    pub fn law(&self) -> Result<EllipticalLaw> {
        match *self {
            LawSpec::Normal => Ok(EllipticalLaw::Normal),
            LawSpec::StudentT { df } => EllipticalLaw::student_t(df),
            LawSpec::Mixture {
                weight_heavy,
                sigma_mult,
            } => EllipticalLaw::mixture_normal(weight_heavy, sigma_mult),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub size: usize,
    pub spacing: Spacing,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            min: crate::selection::DEFAULT_GRID_MIN,
            max: crate::selection::DEFAULT_GRID_MAX,
            size: crate::selection::DEFAULT_GRID_SIZE,
            spacing: Spacing::Log,
        }
    }
}

impl GridSpec {
    pub fn grid(&self) -> Result<LambdaGrid> {
        if self.size == 1 {
            return LambdaGrid::single(self.max);
        }
        lambda_grid(self.min, self.max, self.size, self.spacing)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContaminationSpec {
    pub rate: f64,
    pub magnitude: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdaSpec {
    pub p1: f64,
    pub s: usize,
    pub a: f64,
}

impl Default for LdaSpec {
    fn default() -> Self {
        Self { p1: 0.5, s: 10, a: 0.05 }
    }
}

/// Matrix the precision losses are measured against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossTarget {
    #[default]
    Omega,
    V0,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub model: ModelSpec,
    pub law: LawSpec,
    pub n: usize,
    pub dims: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub grid: GridSpec,
    pub solver: SolverConfig,
    pub loss_target: LossTarget,
    pub roc_threshold: f64,
    pub contamination: Option<ContaminationSpec>,
    pub lda: LdaSpec,
    pub execution: Execution,
}

impl ExperimentConfig {
    /// Defaults of each experiment: the simulation settings of the corresponding study.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let base = Self {
            experiment: kind,
            model: ModelSpec::Model1 { rho: 0.6 },
            law: LawSpec::Normal,
            n: 100,
            dims: vec![30],
            replications: 100,
            seed: 1,
            methods: Method::ALL.to_vec(),
            grid: GridSpec::default(),
            solver: SolverConfig::default(),
            loss_target: LossTarget::Omega,
            roc_threshold: ROC_THRESHOLD,
            contamination: None,
            lda: LdaSpec::default(),
            execution: Execution::default(),
        };
        match kind {
            ExperimentKind::Precision => base,
            ExperimentKind::GraphRoc => Self {
                model: ModelSpec::GeometricGraph {
                    max_degree: 4,
                    edge_val: 0.145,
                },
                n: 400,
                dims: vec![100],
                replications: 20,
                ..base
            },
            ExperimentKind::Lda => Self { n: 200, ..base },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if self.dims.is_empty() || self.dims.iter().any(|&p| p < 2) {
            return bad(format!("dims must be non-empty with every p >= 2, got {:?}", self.dims));
        }
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        if self.experiment == ExperimentKind::GraphRoc && self.dims.len() != 1 {
            return bad("graph_roc runs a single dimension".into());
        }
        if !(self.roc_threshold >= 0.0) {
            return bad(format!("roc_threshold must be >= 0, got {}", self.roc_threshold));
        }
        if let Some(c) = self.contamination {
            if !(0.0..1.0).contains(&c.rate) {
                return bad(format!("contamination rate must lie in [0,1), got {}", c.rate));
            }
        }
        if self.experiment == ExperimentKind::Lda {
            let max_p = *self.dims.iter().max().expect("non-empty");
            if self.lda.s == 0 || self.lda.s > self.dims.iter().copied().min().unwrap_or(max_p) {
                return bad(format!("lda.s must lie in [1, p], got {}", self.lda.s));
            }
        }
        self.solver.validate()?;
        self.grid.grid()?;
        self.law.law()?;
        Ok(())
    }

    /// Solver settings for work nested inside parallel replications.
    fn inner_solver(&self) -> SolverConfig {
        let exec = if self.replications > 1 { Execution::Sequential } else { self.execution };
        SolverConfig { exec, ..self.solver }
    }
}

pub const PRECISION_METRICS: [&str; 3] = ["frobenius", "matrix_l1", "operator"];
pub const LDA_METRICS: [&str; 3] = ["specificity", "sensitivity", "mcc"];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub method: Method,
    pub metric: &'static str,
    pub p: usize,
    pub mean: f64,
    pub sd: f64,
    pub excluded: usize,
}

/// One value of one metric for one method in one replication.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Record {
    pub replication: usize,
    pub method: Method,
    pub metric: &'static str,
    pub p: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub records: Vec<Record>,
    /// Messages of the replication-level failures behind the excluded counts.
    pub failures: Vec<String>,
}

impl ResultTable {
    pub fn get(&self, method: Method, metric: &str, p: usize) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.metric == metric && r.p == p)
    }
}

/// Mean and sample standard deviation (divisor `n - 1`, zero for a single value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

type Outcome = std::result::Result<Vec<f64>, String>;

fn build_table(
    methods: &[Method],
    metrics: &'static [&'static str],
    dims: &[usize],
    per_rep: Vec<Vec<Vec<Outcome>>>,
) -> ResultTable {
    // per_rep[replication][dim index][method index]
    let mut rows = Vec::new();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (di, &p) in dims.iter().enumerate() {
        for (mi, &method) in methods.iter().enumerate() {
            let mut values: Vec<Vec<f64>> = vec![Vec::new(); metrics.len()];
            let mut excluded = 0;
            for (r, rep) in per_rep.iter().enumerate() {
                match &rep[di][mi] {
                    Ok(v) => {
                        for (k, &x) in v.iter().enumerate() {
                            values[k].push(x);
                            records.push(Record {
                                replication: r,
                                method,
                                metric: metrics[k],
                                p,
                                value: x,
                            });
                        }
                    }
                    Err(e) => {
                        excluded += 1;
                        failures.push(format!("replication {r}, p={p}, {method}: {e}"));
                    }
                }
            }
            for (k, metric) in metrics.iter().enumerate() {
                let (mean, sd) = mean_sd(&values[k]);
                rows.push(ResultRow {
                    method,
                    metric,
                    p,
                    mean,
                    sd,
                    excluded,
                });
            }
        }
    }
    ResultTable {
        rows,
        records,
        failures,
    }
}

fn draw(sampler: &EllipticalSampler, n: usize, cfg: &ExperimentConfig, rng: &mut SimRng) -> Result<Dataset> {
    let data = sampler.sample(&vec![0.0; sampler.dim()], n, rng);
    match cfg.contamination {
        Some(c) => contaminate(&data, c.rate, c.magnitude, rng),
        None => Ok(data),
    }
}

fn model_for(cfg: &ExperimentConfig, p: usize, cached: &[Option<PrecisionModel>], di: usize, rng: &mut SimRng) -> Result<PrecisionModel> {
    match &cached[di] {
        Some(m) => Ok(m.clone()),
        None => cfg.model.generate(p, rng),
    }
}

fn fixed_models(cfg: &ExperimentConfig) -> Result<Vec<Option<PrecisionModel>>> {
    cfg.dims
        .iter()
        .map(|&p| {
            if cfg.model.is_random() {
                Ok(None)
            } else {
                let mut rng = replication_rng(cfg.seed, 0);
                cfg.model.generate(p, &mut rng).map(Some)
            }
        })
        .collect()
}

/// Losses `||V - target||` in Frobenius, matrix l1 and operator norm.
pub fn precision_losses(estimate: &SymmetricMatrix, target: &SymmetricMatrix) -> Result<[f64; 3]> {
    let d = estimate.sub(target);
    Ok([
        norm_frobenius(&d),
        norm_matrix_l1(&d),
        norm_operator(&d, POWER_ITERATION_TOL)?,
    ])
}

/// Validation-tuned precision estimates scored against the true precision matrix.
pub fn run_precision_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let grid = cfg.grid.grid()?;
    let law = cfg.law.law()?;
    let models = fixed_models(cfg)?;
    let solver = cfg.inner_solver();
    let per_rep = par::map_indices(cfg.execution, cfg.replications, |r| {
        let mut rng = replication_rng(cfg.seed, r as u64);
        cfg.dims
            .iter()
            .enumerate()
            .map(|(di, &p)| {
                let prepared = (|| -> Result<_> {
                    let model = model_for(cfg, p, &models, di, &mut rng)?;
                    let sampler = EllipticalSampler::new(law, &model.sigma)?;
                    let train = draw(&sampler, cfg.n, cfg, &mut rng)?;
                    let valid = draw(&sampler, cfg.n, cfg, &mut rng)?;
                    let target = match cfg.loss_target {
                        LossTarget::Omega => model.omega.clone(),
                        LossTarget::V0 => model.v0(),
                    };
                    Ok((train, valid, target))
                })();
                match prepared {
                    Err(e) => cfg.methods.iter().map(|_| Err(e.to_string())).collect(),
                    Ok((train, valid, target)) => cfg
                        .methods
                        .iter()
                        .map(|&method| {
                            let run = || -> Result<Vec<f64>> {
                                let mt = input_matrix(method, &train, solver.exec)?;
                                let mv = input_matrix(method, &valid, solver.exec)?;
                                let sel = select_lambda_with_inputs(&mt, &mv, method, &grid, &solver)?;
                                Ok(precision_losses(&sel.estimate.matrix, &target)?.to_vec())
                            };
                            run().map_err(|e| e.to_string())
                        })
                        .collect(),
                }
            })
            .collect::<Vec<Vec<Outcome>>>()
    });
    Ok(build_table(&cfg.methods, &PRECISION_METRICS, &cfg.dims, per_rep))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AveragedRocPoint {
    pub lambda: f64,
    pub fpr: f64,
    pub tpr: f64,
    /// Replications contributing to the average.
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RocCurve {
    pub method: Method,
    pub points: Vec<AveragedRocPoint>,
    pub auc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RocResult {
    pub curves: Vec<RocCurve>,
    pub excluded: usize,
    pub failures: Vec<String>,
}

impl RocResult {
    pub fn curve(&self, method: Method) -> Option<&RocCurve> {
        self.curves.iter().find(|c| c.method == method)
    }
}

/// Pointwise (per grid value) averages of recovery rates over replications.
pub fn run_graph_roc_experiment(cfg: &ExperimentConfig) -> Result<RocResult> {
    cfg.validate()?;
    let grid = cfg.grid.grid()?;
    let law = cfg.law.law()?;
    let p = cfg.dims[0];
    let models = fixed_models(cfg)?;
    let solver = cfg.inner_solver();
    let per_rep = par::map_indices(cfg.execution, cfg.replications, |r| -> std::result::Result<Vec<Vec<_>>, String> {
        let mut rng = replication_rng(cfg.seed, r as u64);
        let model = model_for(cfg, p, &models, 0, &mut rng).map_err(|e| e.to_string())?;
        let sampler = EllipticalSampler::new(law, &model.sigma).map_err(|e| e.to_string())?;
        let train = draw(&sampler, cfg.n, cfg, &mut rng).map_err(|e| e.to_string())?;
        cfg.methods
            .iter()
            .map(|&method| {
                let m = input_matrix(method, &train, solver.exec).map_err(|e| e.to_string())?;
                Ok(roc_path_from_input(&m, &model.edges, method, &grid, cfg.roc_threshold, &solver))
            })
            .collect()
    });
    let mut failures = Vec::new();
    let mut ok = Vec::new();
    for (r, rep) in per_rep.into_iter().enumerate() {
        match rep {
            Ok(v) => ok.push(v),
            Err(e) => failures.push(format!("replication {r}: {e}")),
        }
    }
    let curves = cfg
        .methods
        .iter()
        .enumerate()
        .map(|(mi, &method)| {
            let points: Vec<AveragedRocPoint> = grid
                .values()
                .iter()
                .filter_map(|&lambda| {
                    let (mut fs, mut ts, mut count) = (0.0, 0.0, 0);
                    for rep in &ok {
                        if let Some(pt) = rep[mi].iter().find(|pt| pt.lambda == lambda) {
                            if let (Some(f), Some(t)) = (pt.fpr, pt.tpr) {
                                fs += f;
                                ts += t;
                                count += 1;
                            }
                        }
                    }
                    (count > 0).then(|| AveragedRocPoint {
                        lambda,
                        fpr: fs / count as f64,
                        tpr: ts / count as f64,
                        count,
                    })
                })
                .collect();
            let auc = trapezoidal_auc(&points.iter().map(|pt| (pt.fpr, pt.tpr)).collect::<Vec<_>>());
            RocCurve { method, points, auc }
        })
        .collect();
    Ok(RocResult {
        curves,
        excluded: failures.len(),
        failures,
    })
}

/// Discriminant rules tuned by validation misclassification and scored on a test sample.
pub fn run_lda_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let grid = cfg.grid.grid()?;
    let law = cfg.law.law()?;
    let models = fixed_models(cfg)?;
    let solver = cfg.inner_solver();
    let per_rep = par::map_indices(cfg.execution, cfg.replications, |r| {
        let mut rng = replication_rng(cfg.seed, r as u64);
        cfg.dims
            .iter()
            .enumerate()
            .map(|(di, &p)| {
                let prepared = (|| -> Result<_> {
                    let model = model_for(cfg, p, &models, di, &mut rng)?;
                    let mut gen = || -> Result<_> {
                        let mut d = gen_lda_data(&model, law, cfg.n, cfg.lda.p1, cfg.lda.s, cfg.lda.a, &mut rng)?;
                        if let Some(c) = cfg.contamination {
                            d.data = contaminate(&d.data, c.rate, c.magnitude, &mut rng)?;
                        }
                        Ok(d)
                    };
                    Ok((gen()?, gen()?, gen()?))
                })();
                match prepared {
                    Err(e) => cfg.methods.iter().map(|_| Err(e.to_string())).collect(),
                    Ok((train, valid, test)) => cfg
                        .methods
                        .iter()
                        .map(|&method| {
                            let run = || -> Result<Vec<f64>> {
                                let (d0, d1) = train.split_classes();
                                let inputs = LdaInputs::new(method, &d0, &d1, solver.exec)?;
                                let fits = fit_path_for_selection(method, &inputs.m, &grid, &solver);
                                let rates: Vec<f64> = fits
                                    .iter()
                                    .map(|f| match f {
                                        Ok(est) if est.converged => {
                                            crate::applications::lda_misclassification(&inputs.rule(est), &valid)
                                        }
                                        _ => f64::INFINITY,
                                    })
                                    .collect();
                                let best = argmin_prefer_larger(&rates).ok_or_else(|| {
                                    Error::Selection(format!("every {method} fit failed on the grid"))
                                })?;
                                let est = fits.into_iter().nth(best).expect("index in range")?;
                                let rule = inputs.rule(&est);
                                let report = classification_metrics(&test.labels, &lda_predict_all(&rule, &test.data))?;
                                Ok(vec![report.specificity, report.sensitivity, report.mcc])
                            };
                            run().map_err(|e| e.to_string())
                        })
                        .collect(),
                }
            })
            .collect::<Vec<Vec<Outcome>>>()
    });
    Ok(build_table(&cfg.methods, &LDA_METRICS, &cfg.dims, per_rep))
}
