//! Command-line driver: closed-form toy problems, clustering runs, and
//! benchmark sweeps over instance × config grids.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use lipal::adaptive::{run_adaptive, StageRecord};
use lipal::config::{SolverConfig, Variant};
use lipal::diagnostics::write_trace;
use lipal::error::Error;
use lipal::mssc::{
    adjusted_rand_index, build_mssc_instance, extract_labels, feasible_init, load_csv,
    synth_balls, MsscInstance,
};
use lipal::problem::kkt_residual;
use lipal::prox::ProxKind;
use lipal::solver::{run_lipal, RunReport};
use lipal::toy::ToyQp;
use lipal::vecops::norm_diff;
use lipal::ProblemOracle;

/// Exit statuses shared by every subcommand.
pub mod exit_code {
    pub const CONVERGED: i32 = 0;
    pub const NOT_CONVERGED: i32 = 2;
    pub const USAGE: i32 = 64;
    pub const DATA: i32 = 65;
    pub const NUMERICAL: i32 = 70;
}

/// Map a solver error to the process exit status.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::InvalidInput(_) => exit_code::USAGE,
        Error::Data(_) => exit_code::DATA,
        Error::Io(_) => exit_code::DATA,
        Error::NumericalFailure(_) => exit_code::NUMERICAL,
    }
}

#[derive(Parser, Debug)]
#[command(name = "lipal", version, about = "Linearized perturbed augmented Lagrangian solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run a registered closed-form toy problem and report KKT errors.
    Toy {
        /// Toy name: qp-line, qp-line-feasible, qp-nonneg.
        name: String,
        #[command(flatten)]
        solver: SolverFlags,
        #[command(flatten)]
        output: OutputFlags,
    },
    /// Cluster a CSV file or a synthetic ball mixture.
    Cluster {
        #[command(flatten)]
        instance: InstanceFlags,
        #[command(flatten)]
        solver: SolverFlags,
        #[command(flatten)]
        output: OutputFlags,
    },
    /// Run a JSON sweep specification and emit a flat CSV of results.
    Bench {
        /// JSON file listing runs (array of row objects).
        spec: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CliVariant {
    /// Prox-linear steps (the default solver).
    Lipal,
    /// Single prox-gradient primal steps.
    Alms,
    /// Staged penalty/perturbation schedule around prox-linear steps.
    Adaptive,
}

#[derive(Args, Debug, Clone)]
pub struct SolverFlags {
    #[arg(long, default_value_t = 1e-3)]
    pub tau: f64,
    #[arg(long, default_value_t = 10.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta0: f64,
    #[arg(long, default_value_t = 1e-1)]
    pub eps_stat: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub eps_feas: f64,
    /// Inner gradient-mapping tolerance; defaults to min(1e-3, eps_stat/10)
    /// so the inner error never dominates the outer target.
    #[arg(long)]
    pub eps_sub: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    pub max_outer: usize,
    #[arg(long, default_value_t = 20_000)]
    pub max_inner: usize,
    #[arg(long, default_value_t = 10.0)]
    pub delta1: f64,
    #[arg(long, default_value_t = 0.5)]
    pub delta2: f64,
    #[arg(long, default_value_t = 20)]
    pub max_stages: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = CliVariant::Lipal)]
    pub variant: CliVariant,
}

impl SolverFlags {
    pub fn to_config(&self) -> SolverConfig {
        SolverConfig {
            tau: self.tau,
            rho: self.rho,
            beta0: self.beta0,
            eps_stat: self.eps_stat,
            eps_feas: self.eps_feas,
            eps_sub: self
                .eps_sub
                .unwrap_or_else(|| 1e-3f64.min(self.eps_stat / 10.0)),
            max_outer: self.max_outer,
            max_inner: self.max_inner,
            delta1: self.delta1,
            delta2: self.delta2,
            max_stages: self.max_stages,
            seed: self.seed,
            variant: match self.variant {
                CliVariant::Alms => Variant::ProxGradient,
                _ => Variant::GaussNewton,
            },
            ..SolverConfig::default()
        }
    }

    pub fn is_adaptive(&self) -> bool {
        self.variant == CliVariant::Adaptive
    }
}

#[derive(Args, Debug, Clone)]
pub struct OutputFlags {
    /// Write the JSON report here (also printed to stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the per-iteration trace CSV here.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct InstanceFlags {
    /// CSV file of points (one row per point); synthetic data when absent.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// 0-based column of `--input` holding ground-truth integer labels.
    #[arg(long)]
    pub labels: Option<usize>,
    /// Standardize CSV columns to zero mean / unit variance.
    #[arg(long, default_value_t = false)]
    pub standardize: bool,
    /// Points (synthetic).
    #[arg(long, default_value_t = 50)]
    pub m: usize,
    /// Ambient dimension (synthetic).
    #[arg(long, default_value_t = 30)]
    pub d: usize,
    /// Number of clusters.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Minimum center separation (synthetic).
    #[arg(long, default_value_t = 3.0)]
    pub sep: f64,
    /// Factorization rank (defaults to k + 2).
    #[arg(long)]
    pub r: Option<usize>,
    /// Use the alternative row-shifted constraint formula x_iᵀ(s - 1).
    #[arg(long = "paper-F", default_value_t = false)]
    pub paper_f: bool,
}

/// Residuals recomputed from the final iterate, to pin report consistency.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualCheck {
    pub stationarity: f64,
    pub feasibility: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyReport {
    pub name: String,
    pub config: SolverConfig,
    pub run: RunReport,
    pub x_error: f64,
    pub y_error: f64,
    pub residual_check: ResidualCheck,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stages: Option<Vec<StageSummary>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterReport {
    pub instance: String,
    pub m: usize,
    pub d: usize,
    pub k: usize,
    pub r: usize,
    pub config: SolverConfig,
    pub run: RunReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ari: Option<f64>,
    pub residual_check: ResidualCheck,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stages: Option<Vec<StageSummary>>,
    #[serde(skip)]
    pub labels: Vec<usize>,
}

/// Flattened per-stage row for JSON reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: usize,
    pub rho: f64,
    pub tau: f64,
    pub outer_iterations: usize,
    pub feasibility: f64,
    pub stationarity: f64,
    pub converged: bool,
}

fn summarize_stages(stages: &[StageRecord]) -> Vec<StageSummary> {
    stages
        .iter()
        .map(|s| StageSummary {
            stage: s.stage,
            rho: s.rho,
            tau: s.tau,
            outer_iterations: s.report.outer_iterations,
            feasibility: s.report.feasibility,
            stationarity: s.report.stationarity,
            converged: s.report.converged,
        })
        .collect()
}

fn recheck_residuals(oracle: &dyn ProblemOracle, report: &RunReport) -> lipal::Result<ResidualCheck> {
    let kkt = kkt_residual(oracle, &report.x, &report.y, &report.certificate)?;
    Ok(ResidualCheck {
        stationarity: kkt.stationarity,
        feasibility: kkt.feasibility,
    })
}

fn dispatch_solver(
    oracle: &dyn ProblemOracle,
    x0: &[f64],
    y0: &[f64],
    flags: &SolverFlags,
    with_trace: bool,
) -> lipal::Result<(RunReport, Option<Vec<StageSummary>>)> {
    let config = flags.to_config();
    if flags.is_adaptive() {
        let (report, stages) = run_adaptive(oracle, x0, y0, &config, with_trace)?;
        Ok((report, Some(summarize_stages(&stages))))
    } else {
        Ok((run_lipal(oracle, x0, y0, &config, with_trace)?, None))
    }
}

/// Registered toy problems: name → (oracle with closed-form target).
pub fn toy_registry(name: &str) -> lipal::Result<(ToyQp, Vec<f64>, Vec<f64>)> {
    match name {
        // generic off-constraint start: x* = (0, 1), y* = 1
        "qp-line" => {
            let toy = ToyQp::new(vec![1.0, 1.0], vec![1.0, 0.0], 0.0);
            let (xs, ys) = toy.kkt_pair();
            Ok((toy, xs, vec![ys]))
        }
        // c already satisfies the constraint: x* = c, y* = 0
        "qp-line-feasible" => {
            let toy = ToyQp::new(vec![1.0, 0.5], vec![1.0, 0.0], 1.0);
            let (xs, ys) = toy.kkt_pair();
            Ok((toy, xs, vec![ys]))
        }
        // nonnegativity indicator; the constrained optimum is (0, 1)
        "qp-nonneg" => {
            let toy = ToyQp::new(vec![-1.0, 1.0], vec![0.0, 1.0], 1.0).with_g(
                ProxKind::IndicatorBox {
                    lo: vec![0.0, 0.0],
                    hi: vec![f64::INFINITY, f64::INFINITY],
                },
            );
            Ok((toy, vec![0.0, 1.0], vec![0.0]))
        }
        other => Err(Error::invalid(format!(
            "unknown toy '{other}' (expected qp-line, qp-line-feasible, qp-nonneg)"
        ))),
    }
}

pub fn cmd_toy(
    name: &str,
    flags: &SolverFlags,
    output: &OutputFlags,
) -> lipal::Result<(ToyReport, i32)> {
    let (toy, x_star, y_star) = toy_registry(name)?;
    let n = x_star.len();
    let x0 = vec![0.0; n];
    let y0 = vec![0.0; y_star.len()];
    let with_trace = output.trace.is_some();
    let (run, stages) = dispatch_solver(&toy, &x0, &y0, flags, with_trace)?;
    if let Some(path) = &output.trace {
        write_trace(run.trace.as_deref().unwrap_or(&[]), path)?;
    }
    let report = ToyReport {
        name: name.to_string(),
        config: flags.to_config(),
        x_error: norm_diff(&run.x, &x_star),
        y_error: norm_diff(&run.y, &y_star),
        residual_check: recheck_residuals(&toy, &run)?,
        run,
        stages,
    };
    let code = if report.run.converged {
        exit_code::CONVERGED
    } else {
        exit_code::NOT_CONVERGED
    };
    emit_report(&report, output)?;
    Ok((report, code))
}

/// Balanced labeling (sizes differ by at most one), shuffled by the seed.
pub fn random_balanced_labels(m: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..m).map(|i| i % k).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    labels.shuffle(&mut rng);
    labels
}

pub fn cmd_cluster(
    instance: &InstanceFlags,
    flags: &SolverFlags,
    output: &OutputFlags,
) -> lipal::Result<(ClusterReport, i32)> {
    let r = instance.r.unwrap_or(instance.k + 2);
    let (inst, name) = match &instance.input {
        Some(path) => {
            let inst = load_csv(path, instance.labels, instance.standardize, instance.k, r)?;
            (inst, path.display().to_string())
        }
        None => {
            let (points, labels) =
                synth_balls(instance.m, instance.d, instance.k, instance.sep, flags.seed)?;
            let inst = MsscInstance {
                points,
                k: instance.k,
                r,
                labels: Some(labels),
            };
            (
                inst,
                format!(
                    "synth(m={},d={},k={},sep={},seed={})",
                    instance.m, instance.d, instance.k, instance.sep, flags.seed
                ),
            )
        }
    };
    let m = inst.points.len();
    let d = inst.points[0].len();
    let oracle = build_mssc_instance(&inst, instance.paper_f)?;
    let init_labels = random_balanced_labels(m, inst.k, flags.seed);
    let x0 = feasible_init(m, r, &init_labels)?;
    let y0 = vec![0.0; m];
    let with_trace = output.trace.is_some();
    let (run, stages) = dispatch_solver(&oracle, &x0, &y0, flags, with_trace)?;
    if let Some(path) = &output.trace {
        write_trace(run.trace.as_deref().unwrap_or(&[]), path)?;
    }
    let found = extract_labels(&run.x, m, r)?;
    let ari = match &inst.labels {
        Some(truth) => Some(adjusted_rand_index(&found, truth)?),
        None => None,
    };
    let report = ClusterReport {
        instance: name,
        m,
        d,
        k: inst.k,
        r,
        config: flags.to_config(),
        ari,
        residual_check: recheck_residuals(&oracle, &run)?,
        run,
        stages,
        labels: found,
    };
    let code = if report.run.converged {
        exit_code::CONVERGED
    } else {
        exit_code::NOT_CONVERGED
    };
    emit_report(&report, output)?;
    Ok((report, code))
}

fn emit_report<T: Serialize>(report: &T, output: &OutputFlags) -> lipal::Result<()> {
    if let Some(path) = &output.out {
        let json = serde_json::to_string_pretty(report)
            .map_err(|e| Error::data(format!("report serialization: {e}")))?;
        std::fs::write(path, json)?;
    }
    Ok(())
}

/// One cell of a benchmark sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    /// "toy:<name>" or "synth" (uses m/d/k/sep/r below).
    pub instance: String,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub d: Option<usize>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub sep: Option<f64>,
    #[serde(default)]
    pub r: Option<usize>,
    pub tau: f64,
    pub rho: f64,
    #[serde(default = "default_variant")]
    pub variant: CliVariant,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub eps_stat: Option<f64>,
    #[serde(default)]
    pub eps_feas: Option<f64>,
    #[serde(default)]
    pub max_outer: Option<usize>,
}

fn default_variant() -> CliVariant {
    CliVariant::Lipal
}

pub const BENCH_HEADER: &str = "instance,tau,rho,variant,iters,ms,f,feas,stat,ari";

fn bench_flags(row: &BenchRow) -> SolverFlags {
    SolverFlags {
        tau: row.tau,
        rho: row.rho,
        beta0: 1.0,
        eps_stat: row.eps_stat.unwrap_or(1e-1),
        eps_feas: row.eps_feas.unwrap_or(1e-3),
        eps_sub: None,
        max_outer: row.max_outer.unwrap_or(1000),
        max_inner: 20_000,
        delta1: 10.0,
        delta2: 0.5,
        max_stages: 20,
        seed: row.seed,
        variant: row.variant,
    }
}

fn variant_name(v: CliVariant) -> &'static str {
    match v {
        CliVariant::Lipal => "lipal",
        CliVariant::Alms => "alms",
        CliVariant::Adaptive => "adaptive",
    }
}

fn run_bench_row(row: &BenchRow) -> lipal::Result<(usize, f64, f64, f64, f64, Option<f64>)> {
    let flags = bench_flags(row);
    let quiet = OutputFlags {
        out: None,
        trace: None,
    };
    if let Some(name) = row.instance.strip_prefix("toy:") {
        let (report, _) = cmd_toy(name, &flags, &quiet)?;
        let r = &report.run;
        Ok((r.outer_iterations, r.wall_ms, r.f + r.g, r.feasibility, r.stationarity, None))
    } else if row.instance == "synth" {
        let instance = InstanceFlags {
            input: None,
            labels: None,
            standardize: false,
            m: row.m.unwrap_or(50),
            d: row.d.unwrap_or(30),
            k: row.k.unwrap_or(10),
            sep: row.sep.unwrap_or(3.0),
            r: row.r,
            paper_f: false,
        };
        let (report, _) = cmd_cluster(&instance, &flags, &quiet)?;
        let r = &report.run;
        Ok((r.outer_iterations, r.wall_ms, r.f + r.g, r.feasibility, r.stationarity, report.ari))
    } else {
        Err(Error::invalid(format!(
            "bench instance '{}' is neither 'toy:<name>' nor 'synth'",
            row.instance
        )))
    }
}

/// Run every row of the sweep; per-row failures become rows with NaN metrics,
/// only harness errors (bad spec, unwritable output) are fatal.
pub fn cmd_bench(spec: &std::path::Path, out: &std::path::Path) -> lipal::Result<i32> {
    let text = std::fs::read_to_string(spec)?;
    let rows: Vec<BenchRow> = serde_json::from_str(&text)
        .map_err(|e| Error::data(format!("bench spec {}: {e}", spec.display())))?;
    let mut csv = String::new();
    csv.push_str(BENCH_HEADER);
    csv.push('\n');
    for row in &rows {
        let line = match run_bench_row(row) {
            Ok((iters, ms, f, feas, stat, ari)) => format!(
                "{},{},{},{},{},{:.3},{:.16e},{:.16e},{:.16e},{}\n",
                row.instance,
                row.tau,
                row.rho,
                variant_name(row.variant),
                iters,
                ms,
                f,
                feas,
                stat,
                ari.map_or("nan".to_string(), |a| format!("{a:.6}")),
            ),
            Err(e) => {
                log::warn!("bench row '{}' failed: {e}", row.instance);
                format!(
                    "{},{},{},{},nan,nan,nan,nan,nan,nan\n",
                    row.instance,
                    row.tau,
                    row.rho,
                    variant_name(row.variant),
                )
            }
        };
        csv.push_str(&line);
    }
    std::fs::write(out, csv)?;
    Ok(exit_code::CONVERGED)
}
