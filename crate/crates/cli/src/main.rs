mod config;
mod io;
mod svg;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use spatial_precision::dataset::Dataset;
use spatial_precision::estimators::{fit, ClimeSolver, Method, PrecisionEstimate, SolverConfig};
use spatial_precision::experiment::{
    run_graph_roc_experiment, run_lda_experiment, run_precision_experiment, ExperimentConfig, ExperimentKind,
    ResultTable, RocResult,
};
use spatial_precision::linalg::{
    norm_elementwise_inf, norm_elementwise_l1, norm_frobenius, norm_matrix_l1, norm_operator, POWER_ITERATION_TOL,
};
use spatial_precision::samplers::{contaminate, replication_rng};
use spatial_precision::selection::{input_matrix, lambda_grid, select_lambda_with_inputs, Spacing};
use toml::Value;

#[derive(Parser, Debug)]
#[command(name = "sprec", version, about = "Robust sparse precision matrix estimation from spatial signs")]
struct Cli {
    /// Base seed; replication r uses seed + r.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory receiving every output file.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a simulation study.
    #[command(subcommand)]
    Simulate(Simulation),
    /// Estimate a precision matrix from a CSV data file.
    Estimate(EstimateArgs),
    /// Replace a fraction of every column of a CSV data file by +/- outliers.
    Contaminate(ContaminateArgs),
}

#[derive(Subcommand, Debug)]
enum Simulation {
    /// Matrix losses of the selected estimates.
    Precision(SimArgs),
    /// Averaged ROC curves of graph recovery along the lambda path.
    GraphRoc {
        #[command(flatten)]
        args: SimArgs,
        /// Also write an SVG chart of the curves.
        #[arg(long)]
        svg: bool,
    },
    /// Classification metrics of the discriminant rules.
    Lda(SimArgs),
}

#[derive(Args, Debug, Default)]
struct SimArgs {
    /// TOML file with experiment settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file stem (defaults to the experiment name).
    #[arg(long)]
    output: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    /// Dimensions, comma separated.
    #[arg(long, value_delimiter = ',')]
    p: Vec<usize>,
    #[arg(long)]
    replications: Option<usize>,
    /// Methods, comma separated (sclime, sglasso, clime, glasso).
    #[arg(long, value_delimiter = ',')]
    methods: Vec<Method>,
    /// model1, model2, model3 or geometric_graph.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    rho: Option<f64>,
    /// normal, t or mixture.
    #[arg(long)]
    law: Option<String>,
    /// Degrees of freedom of the t law.
    #[arg(long)]
    df: Option<f64>,
    #[arg(long)]
    grid_min: Option<f64>,
    #[arg(long)]
    grid_max: Option<f64>,
    #[arg(long)]
    grid_size: Option<usize>,
    /// log or linear.
    #[arg(long)]
    grid_spacing: Option<String>,
    /// omega or v0.
    #[arg(long)]
    loss_target: Option<String>,
    #[arg(long)]
    contamination_rate: Option<f64>,
    #[arg(long)]
    contamination_magnitude: Option<f64>,
    #[arg(long)]
    lda_a: Option<f64>,
    #[arg(long)]
    lda_s: Option<usize>,
    #[arg(long)]
    lda_p1: Option<f64>,
    /// simplex or admm.
    #[arg(long)]
    clime_solver: Option<String>,
    /// parallel or sequential.
    #[arg(long)]
    execution: Option<String>,
    /// Any configuration key, e.g. `--set solver.max_iter=2000`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl SimArgs {
    fn overrides(&self, seed: Option<u64>) -> Result<Vec<(String, Value)>> {
        let mut out: Vec<(String, Value)> = Vec::new();
        let mut put = |key: &str, v: Value| out.push((key.to_string(), v));
        let int = |v: usize| Value::Integer(v as i64);
        let text = |v: &str| Value::String(v.to_string());
        if let Some(s) = seed {
            put("seed", Value::Integer(i64::try_from(s).context("seed must fit in a signed 64-bit integer")?));
        }
        if let Some(v) = self.n {
            put("n", int(v));
        }
        if !self.p.is_empty() {
            put("dims", Value::Array(self.p.iter().map(|&v| int(v)).collect()));
        }
        if let Some(v) = self.replications {
            put("replications", int(v));
        }
        if !self.methods.is_empty() {
            put("methods", Value::Array(self.methods.iter().map(|m| Value::try_from(m).expect("method serializes")).collect()));
        }
        if let Some(v) = &self.model {
            put("model.kind", text(v));
        }
        if let Some(v) = self.rho {
            put("model.rho", Value::Float(v));
        }
        if let Some(v) = &self.law {
            put("law.kind", text(if v == "t" { "student_t" } else { v }));
        }
        if let Some(v) = self.df {
            put("law.df", Value::Float(v));
        }
        if let Some(v) = self.grid_min {
            put("grid.min", Value::Float(v));
        }
        if let Some(v) = self.grid_max {
            put("grid.max", Value::Float(v));
        }
        if let Some(v) = self.grid_size {
            put("grid.size", int(v));
        }
        if let Some(v) = &self.grid_spacing {
            put("grid.spacing", text(v));
        }
        if let Some(v) = &self.loss_target {
            put("loss_target", text(v));
        }
        if let Some(v) = self.contamination_rate {
            put("contamination.rate", Value::Float(v));
        }
        if let Some(v) = self.contamination_magnitude {
            put("contamination.magnitude", Value::Float(v));
        }
        if let Some(v) = self.lda_a {
            put("lda.a", Value::Float(v));
        }
        if let Some(v) = self.lda_s {
            put("lda.s", int(v));
        }
        if let Some(v) = self.lda_p1 {
            put("lda.p1", Value::Float(v));
        }
        if let Some(v) = &self.clime_solver {
            put("solver.clime_solver", text(v));
        }
        if let Some(v) = &self.execution {
            put("execution", text(v));
        }
        for kv in &self.set {
            let Some((k, v)) = kv.split_once('=') else {
                bail!("--set expects KEY=VALUE, got {kv:?}");
            };
            put(k.trim(), config::parse_value(v.trim()));
        }
        Ok(out)
    }

    fn resolve(&self, kind: ExperimentKind, seed: Option<u64>) -> Result<ExperimentConfig> {
        let file = self.config.as_deref().map(config::load_file).transpose()?;
        config::resolve(kind, file, &self.overrides(seed)?)
    }
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Training data: one observation per row, optional header line.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    method: Method,
    /// Fit at this tuning parameter.
    #[arg(long, conflicts_with = "validation")]
    lambda: Option<f64>,
    /// Validation data; lambda is then selected over the grid.
    #[arg(long)]
    validation: Option<PathBuf>,
    #[arg(long, requires = "validation")]
    grid_min: Option<f64>,
    #[arg(long, requires = "validation")]
    grid_max: Option<f64>,
    #[arg(long, requires = "validation")]
    grid_size: Option<usize>,
    #[arg(long, requires = "validation", value_enum)]
    grid_spacing: Option<SpacingArg>,
    #[arg(long, value_enum, default_value = "simplex")]
    clime_solver: SolverArg,
    /// Output file stem.
    #[arg(long, default_value = "estimate")]
    output: String,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum SpacingArg {
    Log,
    Linear,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum SolverArg {
    Simplex,
    Admm,
}

#[derive(Args, Debug)]
struct ContaminateArgs {
    #[arg(long)]
    input: PathBuf,
    /// Fraction r of each column replaced (ceil(n r) entries).
    #[arg(long)]
    rate: f64,
    /// Outlier magnitude a; each replaced entry is +a or -a.
    #[arg(long)]
    magnitude: f64,
    #[arg(long, default_value = "contaminated")]
    output: String,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the thread pool")?;
    }
    std::fs::create_dir_all(&cli.out_dir).with_context(|| format!("creating {}", cli.out_dir.display()))?;
    match &cli.command {
        Command::Simulate(sim) => simulate(sim, &cli),
        Command::Estimate(args) => estimate(args, &cli.out_dir),
        Command::Contaminate(args) => contaminate_file(args, cli.seed.unwrap_or(1), &cli.out_dir),
    }
}

fn simulate(sim: &Simulation, cli: &Cli) -> Result<()> {
    let (args, kind, svg) = match sim {
        Simulation::Precision(a) => (a, ExperimentKind::Precision, false),
        Simulation::GraphRoc { args, svg } => (args, ExperimentKind::GraphRoc, *svg),
        Simulation::Lda(a) => (a, ExperimentKind::Lda, false),
    };
    let cfg = args.resolve(kind, cli.seed)?;
    let stem = args.output.clone().unwrap_or_else(|| {
        match kind {
            ExperimentKind::Precision => "precision",
            ExperimentKind::GraphRoc => "graph_roc",
            ExperimentKind::Lda => "lda",
        }
        .to_string()
    });
    let out = |suffix: &str| cli.out_dir.join(format!("{stem}{suffix}"));
    io::write_text(&out(".config.toml"), &config::to_toml(&cfg))?;
    let failures = match kind {
        ExperimentKind::GraphRoc => {
            let roc = run_graph_roc_experiment(&cfg)?;
            io::write_text(&out(".csv"), &roc_csv(&roc))?;
            io::write_text(&out(".auc.csv"), &auc_csv(&roc))?;
            if svg {
                let title = format!("{} law, p = {}, n = {}", cfg.law.law()?.name(), cfg.dims[0], cfg.n);
                io::write_text(&out(".svg"), &svg::roc_chart(&title, &roc.curves))?;
            }
            for c in &roc.curves {
                println!("{:<8} auc {:.4}", c.method.name(), c.auc);
            }
            println!("excluded replications: {}", roc.excluded);
            roc.failures
        }
        _ => {
            let table = if kind == ExperimentKind::Precision {
                run_precision_experiment(&cfg)?
            } else {
                run_lda_experiment(&cfg)?
            };
            io::write_text(&out(".csv"), &table_csv(&table))?;
            for r in &table.rows {
                println!(
                    "{:<8} {:<12} p={:<4} {:.4} ({:.4})  excluded {}",
                    r.method.name(),
                    r.metric,
                    r.p,
                    r.mean,
                    r.sd,
                    r.excluded
                );
            }
            table.failures
        }
    };
    for f in &failures {
        eprintln!("excluded: {f}");
    }
    println!("wrote {}", out(".csv").display());
    Ok(())
}

fn table_csv(table: &ResultTable) -> String {
    let mut s = String::from("method,metric,p,mean,sd,excluded\n");
    for r in &table.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.method.name(),
            r.metric,
            r.p,
            io::fmt_float(r.mean),
            io::fmt_float(r.sd),
            r.excluded
        );
    }
    s
}

fn roc_csv(roc: &RocResult) -> String {
    let mut s = String::from("method,lambda,fpr,tpr\n");
    for c in &roc.curves {
        for pt in &c.points {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                c.method.name(),
                io::fmt_float(pt.lambda),
                io::fmt_float(pt.fpr),
                io::fmt_float(pt.tpr)
            );
        }
    }
    s
}

fn auc_csv(roc: &RocResult) -> String {
    let mut s = String::from("method,auc,excluded\n");
    for c in &roc.curves {
        let _ = writeln!(s, "{},{},{}", c.method.name(), io::fmt_float(c.auc), roc.excluded);
    }
    s
}

fn read_dataset(path: &Path) -> Result<(Dataset, Option<Vec<String>>)> {
    let m = io::read_matrix(path)?;
    let data = Dataset::from_vec(m.rows, m.cols, m.values)?;
    Ok((data, m.header))
}

#[derive(Serialize)]
struct Norms {
    frobenius: f64,
    matrix_l1: f64,
    operator: Option<f64>,
    elementwise_l1: f64,
    max_abs: f64,
}

#[derive(Serialize)]
struct SelectionRecord {
    grid: Vec<f64>,
    /// Validation loss per grid value; null where the fit was unusable.
    validation_loss: Vec<Option<f64>>,
}

#[derive(Serialize)]
struct EstimateMetadata {
    method: Method,
    lambda: f64,
    converged: bool,
    is_pd: bool,
    n: usize,
    p: usize,
    input: String,
    validation: Option<String>,
    solver: SolverConfig,
    norms: Norms,
    nonzero_offdiagonal: usize,
    selection: Option<SelectionRecord>,
}

fn estimate(args: &EstimateArgs, out_dir: &Path) -> Result<()> {
    let (train, header) = read_dataset(&args.input)?;
    if train.n() < 2 {
        bail!("{} has {} rows; at least 2 are needed", args.input.display(), train.n());
    }
    let solver = SolverConfig {
        clime_solver: match args.clime_solver {
            SolverArg::Simplex => ClimeSolver::Simplex,
            SolverArg::Admm => ClimeSolver::Admm,
        },
        ..SolverConfig::default()
    };
    let m_train = input_matrix(args.method, &train, solver.exec)?;
    let (est, selection): (PrecisionEstimate, Option<SelectionRecord>) = match (&args.validation, args.lambda) {
        (Some(valid_path), _) => {
            let (valid, _) = read_dataset(valid_path)?;
            if valid.p() != train.p() {
                bail!(
                    "validation data has {} columns but training data has {}",
                    valid.p(),
                    train.p()
                );
            }
            let defaults = spatial_precision::experiment::GridSpec::default();
            let spacing = match args.grid_spacing {
                Some(SpacingArg::Linear) => Spacing::Linear,
                _ => Spacing::Log,
            };
            let grid = lambda_grid(
                args.grid_min.unwrap_or(defaults.min),
                args.grid_max.unwrap_or(defaults.max),
                args.grid_size.unwrap_or(defaults.size),
                spacing,
            )?;
            let m_valid = input_matrix(args.method, &valid, solver.exec)?;
            let sel = select_lambda_with_inputs(&m_train, &m_valid, args.method, &grid, &solver)?;
            let record = SelectionRecord {
                grid: grid.values().to_vec(),
                validation_loss: sel.losses.iter().map(|&l| l.is_finite().then_some(l)).collect(),
            };
            (sel.estimate, Some(record))
        }
        (None, Some(lambda)) => (fit(args.method, &m_train, lambda, &solver)?, None),
        (None, None) => bail!("give --lambda, or --validation to select lambda over a grid"),
    };
    let p = train.p();
    let v = &est.matrix;
    let mut nonzero = 0;
    for i in 0..p {
        for j in 0..p {
            if i != j && v[(i, j)] != 0.0 {
                nonzero += 1;
            }
        }
    }
    let meta = EstimateMetadata {
        method: est.method,
        lambda: est.lambda,
        converged: est.converged,
        is_pd: est.is_pd,
        n: train.n(),
        p,
        input: args.input.display().to_string(),
        validation: args.validation.as_ref().map(|v| v.display().to_string()),
        solver,
        norms: Norms {
            frobenius: norm_frobenius(v),
            matrix_l1: norm_matrix_l1(v),
            operator: norm_operator(v, POWER_ITERATION_TOL).ok(),
            elementwise_l1: norm_elementwise_l1(v),
            max_abs: norm_elementwise_inf(v),
        },
        nonzero_offdiagonal: nonzero,
        selection,
    };
    let header = header.unwrap_or_else(|| io::default_header("x", p));
    let csv_path = out_dir.join(format!("{}.csv", args.output));
    io::write_matrix(&csv_path, &header, p, v.as_slice())?;
    let json_path = out_dir.join(format!("{}.json", args.output));
    io::write_text(&json_path, &(serde_json::to_string_pretty(&meta)? + "\n"))?;
    println!(
        "{} lambda {} converged {} positive definite {}",
        est.method.name(),
        est.lambda,
        est.converged,
        est.is_pd
    );
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

fn contaminate_file(args: &ContaminateArgs, seed: u64, out_dir: &Path) -> Result<()> {
    let (data, header) = read_dataset(&args.input)?;
    let mut rng = replication_rng(seed, 0);
    let out = contaminate(&data, args.rate, args.magnitude, &mut rng)?;
    let header = header.unwrap_or_else(|| io::default_header("x", data.p()));
    let path = out_dir.join(format!("{}.csv", args.output));
    io::write_matrix(&path, &header, data.p(), out.as_slice())?;
    println!("wrote {}", path.display());
    Ok(())
}
