//! Seeded benchmark experiments: the condition-number table over sample
//! sizes and Hessian kinds, and the BFGS iteration-count comparison across
//! estimators. Both emit CSV and JSON reports embedding their full resolved
//! configuration.
//!
//! Runs use substreams derived from (seed, n, run-index), so tables are
//! reproducible bit for bit on one platform and independent of the number
//! of worker threads.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::condlab::{
    hessian_build, psi_true_ratio_diag, sample_diagonal, true_ratio_gaussian, HessianKind,
};
use crate::error::{Error, Result};
use crate::estimators::{
    kl_feasible_start, kulsif_fit_direct, KmmInductiveObjective, KulsifObjective, MestObjective,
    Objective, RkulsifObjective,
};
use crate::kernel::{gram_blocks, gram_matrix, median_heuristic, KernelSpec};
use crate::linalg::spectral_summary;
use crate::optimizer::{bfgs_minimize, OptimizerConfig};
use crate::psi::PsiSpec;
use crate::synth::{gaussian_points, substream, BENCH_DIM};

/// JSON value for an f64 that may be infinite (serialized as the string
/// "inf", mirroring the CSV rendering).
fn json_f64(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.6e}")
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// Settings for the condition-number table. Sample dimension is fixed at 10
/// (unit-covariance normals, Q shifted by `mu`); the regularization follows
/// the schedule lambda = 1/n^0.9.
#[derive(Debug, Clone)]
pub struct CondExperimentConfig {
    pub n_grid: Vec<usize>,
    pub sigma: f64,
    /// Mean shift of Q; enters only the true-ratio (KL) Hessian column.
    pub mu: f64,
    pub runs: usize,
    pub seed: u64,
}

impl CondExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() {
            return Err(Error::EmptyInput {
                context: "n_grid must be non-empty",
            });
        }
        if self.n_grid.iter().any(|&n| n < 2) {
            return Err(Error::invalid("each n must be at least 2"));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::invalid("sigma must be positive"));
        }
        if self.runs == 0 {
            return Err(Error::invalid("runs must be positive"));
        }
        Ok(())
    }

    pub fn lambda_for(&self, n: usize) -> f64 {
        (n as f64).powf(-0.9)
    }
}

/// Aggregated condition numbers for one (n, kind) cell.
#[derive(Debug, Clone)]
pub struct CondCell {
    pub n: usize,
    pub kind: String,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub runs: usize,
    /// Runs whose condition number was infinite; excluded from the moments.
    pub excluded: usize,
}

/// The full condition-number table with its resolved configuration.
#[derive(Debug, Clone)]
pub struct CondReport {
    pub sigma: f64,
    pub mu: f64,
    pub runs: usize,
    pub seed: u64,
    pub dim: usize,
    pub cells: Vec<CondCell>,
}

impl CondReport {
    /// CSV with `# key=value` configuration comments followed by the cell
    /// rows (columns: n, kind, mean, std, min, max, runs, excluded).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# sigma={} mu={} runs={} seed={} dim={} lambda=1/n^0.9\n",
            self.sigma, self.mu, self.runs, self.seed, self.dim
        ));
        out.push_str("n,kind,mean,std,min,max,runs,excluded\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                c.n,
                c.kind,
                fmt_f64(c.mean),
                fmt_f64(c.std),
                fmt_f64(c.min),
                fmt_f64(c.max),
                c.runs,
                c.excluded
            ));
        }
        out
    }

    pub fn to_json(&self) -> Value {
        json!({
            "config": {
                "sigma": self.sigma,
                "mu": self.mu,
                "runs": self.runs,
                "seed": self.seed,
                "dim": self.dim,
                "lambda": "1/n^0.9",
            },
            "cells": self.cells.iter().map(|c| json!({
                "n": c.n,
                "kind": c.kind,
                "mean": json_f64(c.mean),
                "std": json_f64(c.std),
                "min": json_f64(c.min),
                "max": json_f64(c.max),
                "runs": c.runs,
                "excluded": c.excluded,
            })).collect::<Vec<_>>(),
        })
    }

    pub fn cell(&self, n: usize, kind: &str) -> Option<&CondCell> {
        self.cells.iter().find(|c| c.n == n && c.kind == kind)
    }
}

fn aggregate(n: usize, kind: &HessianKind, kappas: &[f64]) -> CondCell {
    let finite: Vec<f64> = kappas.iter().cloned().filter(|k| k.is_finite()).collect();
    let excluded = kappas.len() - finite.len();
    let (mean, std, min, max) = if finite.is_empty() {
        (f64::INFINITY, f64::INFINITY, f64::INFINITY, f64::INFINITY)
    } else {
        let mean = finite.iter().sum::<f64>() / finite.len() as f64;
        let var = if finite.len() > 1 {
            finite.iter().map(|k| (k - mean) * (k - mean)).sum::<f64>()
                / (finite.len() as f64 - 1.0)
        } else {
            0.0
        };
        let min = finite.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (mean, var.sqrt(), min, max)
    };
    CondCell {
        n,
        kind: kind.label(),
        mean,
        std,
        min,
        max,
        runs: kappas.len(),
        excluded,
    }
}

/// Builds the condition-number table: per (n, run) draw X ~ N(0, I_10),
/// form K11 and record kappa of every requested Hessian kind. Only X and
/// the curvature diagonals are random; the mean shift mu enters through the
/// true-ratio diagonal alone.
///
/// Runs execute in parallel when a rayon pool with more than one thread is
/// installed; per-run substreams make the result independent of the thread
/// count.
pub fn cond_table(cfg: &CondExperimentConfig, kinds: &[HessianKind]) -> Result<CondReport> {
    cfg.validate()?;
    if kinds.is_empty() {
        return Err(Error::EmptyInput {
            context: "kinds must be non-empty",
        });
    }
    let spec = KernelSpec::gaussian(cfg.sigma)?;
    let w0 = true_ratio_gaussian(cfg.mu, BENCH_DIM);

    let mut cells = Vec::new();
    for &n in &cfg.n_grid {
        let lambda = cfg.lambda_for(n);
        let per_run: Vec<Result<Vec<f64>>> = (0..cfg.runs)
            .into_par_iter()
            .map(|run| {
                let mut rng_x = substream(cfg.seed, &[n as u64, run as u64, 0]);
                let x = gaussian_points(&mut rng_x, n, BENCH_DIM, 0.0);
                let k11 = gram_matrix(&spec, &x);
                let mut kappas = Vec::with_capacity(kinds.len());
                for (k_idx, kind) in kinds.iter().enumerate() {
                    let aux = match kind {
                        HessianKind::PsiTrueRatio { psi } => {
                            let w0_values = DVector::from_iterator(n, x.iter_points().map(&w0));
                            Some(psi_true_ratio_diag(*psi, &w0_values)?)
                        }
                        HessianKind::Rnd { law } => {
                            let mut rng_d =
                                substream(cfg.seed, &[n as u64, run as u64, 1 + k_idx as u64]);
                            Some(sample_diagonal(law, n, &mut rng_d)?.0)
                        }
                        _ => None,
                    };
                    let h = hessian_build(kind, &k11, lambda, aux.as_ref())?;
                    kappas.push(spectral_summary(&h)?.cond);
                }
                Ok(kappas)
            })
            .collect();

        let mut by_kind: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.runs); kinds.len()];
        for run_result in per_run {
            let kappas = run_result?;
            for (k_idx, kappa) in kappas.into_iter().enumerate() {
                by_kind[k_idx].push(kappa);
            }
        }
        for (k_idx, kind) in kinds.iter().enumerate() {
            cells.push(aggregate(n, kind, &by_kind[k_idx]));
        }
    }
    Ok(CondReport {
        sigma: cfg.sigma,
        mu: cfg.mu,
        runs: cfg.runs,
        seed: cfg.seed,
        dim: BENCH_DIM,
        cells,
    })
}

/// Estimation routes compared by the iteration benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchMethod {
    RKulsif,
    Kulsif,
    KmmInductive,
    MestKl,
    DirectSolve,
}

impl BenchMethod {
    pub fn label(&self) -> &'static str {
        match self {
            BenchMethod::RKulsif => "rkulsif",
            BenchMethod::Kulsif => "kulsif",
            BenchMethod::KmmInductive => "kmm",
            BenchMethod::MestKl => "kl",
            BenchMethod::DirectSolve => "direct",
        }
    }

    pub const ALL: [BenchMethod; 5] = [
        BenchMethod::RKulsif,
        BenchMethod::Kulsif,
        BenchMethod::KmmInductive,
        BenchMethod::MestKl,
        BenchMethod::DirectSolve,
    ];
}

/// Settings for the iteration benchmark: paired samples of equal size n,
/// bandwidth from the median heuristic on X, lambda = 1/n^0.9.
///
/// The default optimizer tolerance is far below what any of these
/// objectives can reach, so every run terminates at its numerical floor and
/// the iteration counts measure the cost of optimizing to completion. A
/// loose absolute tolerance would instead stop the worst-conditioned
/// objectives early, because their gradients are scaled down by extra
/// powers of K11 exactly in the directions that are hard to resolve.
#[derive(Debug, Clone)]
pub struct IterationBenchConfig {
    pub n: usize,
    pub runs: usize,
    pub seed: u64,
    pub mu: f64,
    pub optimizer: OptimizerConfig,
}

impl Default for IterationBenchConfig {
    fn default() -> Self {
        IterationBenchConfig {
            n: 500,
            runs: 20,
            seed: 0,
            mu: 0.5,
            optimizer: OptimizerConfig {
                grad_tol: 1e-10,
                max_iter: 50_000,
                ..OptimizerConfig::default()
            },
        }
    }
}

/// One (run, method) measurement.
#[derive(Debug, Clone)]
pub struct BenchRun {
    pub run: usize,
    pub method: &'static str,
    /// None for the direct solve.
    pub iterations: Option<usize>,
    pub function_evals: Option<usize>,
    pub converged: Option<bool>,
    pub wall_time: f64,
    pub final_grad_norm: Option<f64>,
    /// Infinity-norm distance of the fitted alpha from the closed-form
    /// solution; None for the KL estimator (different optimum) and the
    /// direct solve itself.
    pub diff_vs_direct: Option<f64>,
}

/// Per-method aggregates over all runs.
#[derive(Debug, Clone)]
pub struct BenchSummary {
    pub method: &'static str,
    pub runs: usize,
    pub converged_runs: usize,
    pub median_iterations: f64,
    pub mean_iterations: f64,
    pub median_time: f64,
    pub mean_time: f64,
    pub max_diff_vs_direct: f64,
}

#[derive(Debug, Clone)]
pub struct BenchTable {
    pub n: usize,
    pub runs: usize,
    pub seed: u64,
    pub mu: f64,
    pub grad_tol: f64,
    pub max_iter: usize,
    pub rows: Vec<BenchRun>,
    pub summaries: Vec<BenchSummary>,
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

impl BenchTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# n={} runs={} seed={} mu={} grad_tol={} max_iter={} sigma=median lambda=1/n^0.9\n",
            self.n, self.runs, self.seed, self.mu, self.grad_tol, self.max_iter
        ));
        out.push_str(
            "method,runs,converged_runs,median_iterations,mean_iterations,median_time_s,mean_time_s,max_diff_vs_direct\n",
        );
        for s in &self.summaries {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                s.method,
                s.runs,
                s.converged_runs,
                fmt_f64(s.median_iterations),
                fmt_f64(s.mean_iterations),
                fmt_f64(s.median_time),
                fmt_f64(s.mean_time),
                fmt_f64(s.max_diff_vs_direct),
            ));
        }
        out
    }

    pub fn to_json(&self) -> Value {
        json!({
            "config": {
                "n": self.n,
                "runs": self.runs,
                "seed": self.seed,
                "mu": self.mu,
                "grad_tol": self.grad_tol,
                "max_iter": self.max_iter,
                "sigma": "median",
                "lambda": "1/n^0.9",
            },
            "summaries": self.summaries.iter().map(|s| json!({
                "method": s.method,
                "runs": s.runs,
                "converged_runs": s.converged_runs,
                "median_iterations": json_f64(s.median_iterations),
                "mean_iterations": json_f64(s.mean_iterations),
                "median_time_s": json_f64(s.median_time),
                "mean_time_s": json_f64(s.mean_time),
                "max_diff_vs_direct": json_f64(s.max_diff_vs_direct),
            })).collect::<Vec<_>>(),
            "rows": self.rows.iter().map(|r| json!({
                "run": r.run,
                "method": r.method,
                "iterations": r.iterations,
                "function_evals": r.function_evals,
                "converged": r.converged,
                "wall_time_s": r.wall_time,
                "final_grad_norm": r.final_grad_norm.map(json_f64),
                "diff_vs_direct": r.diff_vs_direct.map(json_f64),
            })).collect::<Vec<_>>(),
        })
    }

    pub fn summary(&self, method: BenchMethod) -> Option<&BenchSummary> {
        self.summaries.iter().find(|s| s.method == method.label())
    }
}

/// Fits every requested method on `runs` fresh paired samples, recording
/// BFGS iteration counts, objective evaluations, wall times, and the
/// distance of each quadratic method's solution from the closed form.
/// Non-converged runs keep their trace and are flagged rather than dropped.
pub fn iteration_bench(cfg: &IterationBenchConfig, methods: &[BenchMethod]) -> Result<BenchTable> {
    if methods.is_empty() {
        return Err(Error::EmptyInput {
            context: "methods must be non-empty",
        });
    }
    if cfg.n < 2 || cfg.runs == 0 {
        return Err(Error::invalid("need n >= 2 and runs >= 1"));
    }

    let per_run: Vec<Result<Vec<BenchRun>>> = (0..cfg.runs)
        .into_par_iter()
        .map(|run| {
            let mut rng_x = substream(cfg.seed, &[0xE0, run as u64, 0]);
            let mut rng_y = substream(cfg.seed, &[0xE0, run as u64, 1]);
            let x = gaussian_points(&mut rng_x, cfg.n, BENCH_DIM, 0.0);
            let y = gaussian_points(&mut rng_y, cfg.n, BENCH_DIM, cfg.mu);
            let sigma = median_heuristic(&x)?;
            let spec = KernelSpec::gaussian(sigma)?;
            let lambda = (cfg.n as f64).powf(-0.9);
            let blocks = Arc::new(gram_blocks(&spec, &x, &y)?);

            let direct_start = Instant::now();
            let (alpha_direct, _) = kulsif_fit_direct(&blocks, lambda)?;
            let direct_time = direct_start.elapsed().as_secs_f64();

            let mut rows = Vec::with_capacity(methods.len());
            for method in methods {
                match method {
                    BenchMethod::DirectSolve => rows.push(BenchRun {
                        run,
                        method: method.label(),
                        iterations: None,
                        function_evals: None,
                        converged: None,
                        wall_time: direct_time,
                        final_grad_norm: None,
                        diff_vs_direct: None,
                    }),
                    BenchMethod::MestKl => {
                        let alpha0 = kl_feasible_start(&blocks, lambda)?;
                        let obj = MestObjective::new(
                            blocks.clone(),
                            lambda,
                            PsiSpec::kullback_leibler(),
                        )?;
                        let trace = bfgs_minimize(&obj, &alpha0, &cfg.optimizer)?;
                        rows.push(BenchRun {
                            run,
                            method: method.label(),
                            iterations: Some(trace.iterations),
                            function_evals: Some(trace.function_evals),
                            converged: Some(trace.converged),
                            wall_time: trace.wall_time,
                            final_grad_norm: Some(trace.final_grad_norm),
                            diff_vs_direct: None,
                        });
                    }
                    quadratic => {
                        let obj: Box<dyn Objective> = match quadratic {
                            BenchMethod::RKulsif => {
                                Box::new(RkulsifObjective::new(blocks.clone(), lambda)?)
                            }
                            BenchMethod::Kulsif => {
                                Box::new(KulsifObjective::new(blocks.clone(), lambda)?)
                            }
                            BenchMethod::KmmInductive => {
                                Box::new(KmmInductiveObjective::new(blocks.clone(), lambda)?)
                            }
                            _ => unreachable!(),
                        };
                        let x0 = DVector::zeros(cfg.n);
                        let trace = bfgs_minimize(obj.as_ref(), &x0, &cfg.optimizer)?;
                        let diff = (&trace.final_point - &alpha_direct).amax();
                        rows.push(BenchRun {
                            run,
                            method: method.label(),
                            iterations: Some(trace.iterations),
                            function_evals: Some(trace.function_evals),
                            converged: Some(trace.converged),
                            wall_time: trace.wall_time,
                            final_grad_norm: Some(trace.final_grad_norm),
                            diff_vs_direct: Some(diff),
                        });
                    }
                }
            }
            Ok(rows)
        })
        .collect();

    let mut rows = Vec::with_capacity(cfg.runs * methods.len());
    for r in per_run {
        rows.extend(r?);
    }

    let mut summaries = Vec::with_capacity(methods.len());
    for method in methods {
        let mine: Vec<&BenchRun> = rows.iter().filter(|r| r.method == method.label()).collect();
        let mut iters: Vec<f64> = mine
            .iter()
            .filter_map(|r| r.iterations.map(|i| i as f64))
            .collect();
        let mut times: Vec<f64> = mine.iter().map(|r| r.wall_time).collect();
        let mean_iterations = if iters.is_empty() {
            f64::NAN
        } else {
            iters.iter().sum::<f64>() / iters.len() as f64
        };
        let mean_time = times.iter().sum::<f64>() / times.len().max(1) as f64;
        summaries.push(BenchSummary {
            method: method.label(),
            runs: mine.len(),
            converged_runs: mine.iter().filter(|r| r.converged == Some(true)).count(),
            median_iterations: median(&mut iters),
            mean_iterations,
            median_time: median(&mut times),
            mean_time,
            max_diff_vs_direct: mine
                .iter()
                .filter_map(|r| r.diff_vs_direct)
                .fold(f64::NAN, f64::max),
        });
    }

    Ok(BenchTable {
        n: cfg.n,
        runs: cfg.runs,
        seed: cfg.seed,
        mu: cfg.mu,
        grad_tol: cfg.optimizer.grad_tol,
        max_iter: cfg.optimizer.max_iter,
        rows,
        summaries,
    })
}
