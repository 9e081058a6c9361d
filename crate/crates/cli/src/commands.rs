//! The five CLI commands: fit, loocv, bench-cond, bench-iter, check.
//!
//! Every report embeds its fully resolved configuration (including a
//! median-heuristic sigma or rule-based lambda once computed), so a run can
//! be reproduced from its own output. Identical (command, seed, platform)
//! inputs produce byte-identical reports; the iteration benchmark's wall
//! times are the one deliberate exception.

use std::path::PathBuf;
use std::sync::Arc;

use kulsif::condlab::{
    cond_table, iteration_bench, ordering_check, BenchMethod, CondExperimentConfig, DiagonalLaw,
    HessianKind, IterationBenchConfig,
};
use kulsif::estimators::{
    fit_kulsif, kl_feasible_start, KmmInductiveObjective, KulsifObjective, MestObjective,
    Objective, RkulsifObjective,
};
use kulsif::kernel::{gram_blocks, median_heuristic};
use kulsif::modelsel::{grid_select, loocv_analytic, loocv_naive};
use kulsif::optimizer::grad_check;
use kulsif::synth::{gaussian_points, substream};
use kulsif::{lambda_rule, KernelSpec, PointSet, PsiKind, PsiSpec};
use nalgebra::DVector;
use serde_json::{json, Value};

use crate::io::ingest_csv;
use crate::CliError;

#[derive(Debug, Clone, Copy)]
pub struct GenSpec {
    pub d: usize,
    pub n: usize,
    pub m: usize,
    pub mu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// Resolved data source: either two ingested files or the synthetic
/// Gaussian-shift generator.
pub enum DataSource {
    Files { p: PathBuf, q: PathBuf },
    Generated(GenSpec),
}

impl DataSource {
    pub fn resolve(
        p_file: Option<PathBuf>,
        q_file: Option<PathBuf>,
        gen: Option<GenSpec>,
    ) -> Result<Self, CliError> {
        match (p_file, q_file, gen) {
            (Some(p), Some(q), None) => Ok(DataSource::Files { p, q }),
            (None, None, Some(g)) => Ok(DataSource::Generated(g)),
            (Some(_), None, None) | (None, Some(_), None) => Err(CliError::Usage(
                "both --p-file and --q-file are required when reading files".into(),
            )),
            _ => Err(CliError::Usage(
                "provide exactly one input: --p-file/--q-file or --gen d,n,m,mu".into(),
            )),
        }
    }

    pub fn load(&self, seed: u64) -> Result<(PointSet, PointSet), CliError> {
        match self {
            DataSource::Files { p, q } => Ok((ingest_csv(p)?, ingest_csv(q)?)),
            DataSource::Generated(g) => {
                let mut rng_x = substream(seed, &[1]);
                let mut rng_y = substream(seed, &[2]);
                Ok((
                    gaussian_points(&mut rng_x, g.n, g.d, 0.0),
                    gaussian_points(&mut rng_y, g.m, g.d, g.mu),
                ))
            }
        }
    }

    fn describe(&self) -> (String, Value) {
        match self {
            DataSource::Files { p, q } => (
                format!("p-file={} q-file={}", p.display(), q.display()),
                json!({"p_file": p.display().to_string(), "q_file": q.display().to_string()}),
            ),
            DataSource::Generated(g) => (
                format!("gen=d:{},n:{},m:{},mu:{}", g.d, g.n, g.m, g.mu),
                json!({"gen": {"d": g.d, "n": g.n, "m": g.m, "mu": g.mu}}),
            ),
        }
    }
}

/// "median" or a positive real.
pub fn resolve_sigma(request: &str, x: &PointSet) -> Result<f64, CliError> {
    if request == "median" {
        Ok(median_heuristic(x)?)
    } else {
        request.parse::<f64>().map_err(|_| {
            CliError::Usage(format!(
                "--sigma must be 'median' or a number, got '{request}'"
            ))
        })
    }
}

/// "rule" (1/(n /\ m)^0.9) or a positive real.
pub fn resolve_lambda(request: &str, n: usize, m: usize) -> Result<f64, CliError> {
    if request == "rule" {
        Ok(lambda_rule(n, m))
    } else {
        request.parse::<f64>().map_err(|_| {
            CliError::Usage(format!(
                "--lambda must be 'rule' or a number, got '{request}'"
            ))
        })
    }
}

pub fn parse_list<T: std::str::FromStr>(raw: &str, what: &str) -> Result<Vec<T>, CliError> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|_| CliError::Usage(format!("invalid {what} entry '{s}'")))
        })
        .collect()
}

fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.17e}")
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

fn json_f64(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

pub struct FitOptions {
    pub source: DataSource,
    pub sigma: String,
    pub lambda: String,
    pub seed: u64,
    pub eval_file: Option<PathBuf>,
    pub format: Format,
}

/// Fits the closed-form kernel least-squares estimator and reports the
/// coefficients plus truncated predictions on the evaluation points (the
/// --eval-file if given, otherwise the training X sample).
pub fn run_fit(opts: FitOptions) -> Result<String, CliError> {
    let (x, y) = opts.source.load(opts.seed)?;
    let sigma = resolve_sigma(&opts.sigma, &x)?;
    let lambda = resolve_lambda(&opts.lambda, x.len(), y.len())?;
    let kernel = KernelSpec::gaussian(sigma)?;
    let (n, m) = (x.len(), y.len());
    let model = fit_kulsif(Arc::new(x), Arc::new(y), kernel, lambda)?;

    let (eval_points, eval_source) = match &opts.eval_file {
        Some(path) => (ingest_csv(path)?, path.display().to_string()),
        None => ((**model.x_train()).clone(), "train_x".to_string()),
    };
    let mut w_plus = Vec::with_capacity(eval_points.len());
    for z in eval_points.iter_points() {
        w_plus.push(model.predict_truncated(z)?);
    }

    let (source_str, source_json) = opts.source.describe();
    Ok(match opts.format {
        Format::Csv => {
            let mut out = String::new();
            out.push_str(&format!(
                "# command=fit {source_str} seed={} sigma_request={} sigma={} lambda_request={} lambda={} n={n} m={m} eval={eval_source}\n",
                opts.seed,
                opts.sigma,
                fmt_f64(sigma),
                opts.lambda,
                fmt_f64(lambda),
            ));
            out.push_str("field,index,value\n");
            for (i, a) in model.alpha().iter().enumerate() {
                out.push_str(&format!("alpha,{i},{}\n", fmt_f64(*a)));
            }
            for (j, b) in model.beta().iter().enumerate() {
                out.push_str(&format!("beta,{j},{}\n", fmt_f64(*b)));
            }
            for (k, w) in w_plus.iter().enumerate() {
                out.push_str(&format!("w_plus,{k},{}\n", fmt_f64(*w)));
            }
            out
        }
        Format::Json => {
            let value = json!({
                "config": {
                    "command": "fit",
                    "source": source_json,
                    "seed": opts.seed,
                    "sigma_request": opts.sigma,
                    "sigma": sigma,
                    "lambda_request": opts.lambda,
                    "lambda": lambda,
                    "n": n,
                    "m": m,
                    "eval": eval_source,
                },
                "alpha": model.alpha().iter().cloned().collect::<Vec<f64>>(),
                "beta": model.beta().iter().cloned().collect::<Vec<f64>>(),
                "w_plus": w_plus,
            });
            format!("{}\n", serde_json::to_string_pretty(&value)?)
        }
    })
}

pub struct LoocvOptions {
    pub source: DataSource,
    pub sigma_grid: String,
    pub lambda_grid: String,
    pub seed: u64,
    pub format: Format,
}

/// Scores every (sigma, lambda) grid cell by analytic leave-one-out
/// cross-validation and reports the score matrix plus the selected cell.
pub fn run_loocv(opts: LoocvOptions) -> Result<String, CliError> {
    let (x, y) = opts.source.load(opts.seed)?;
    let sigma_grid: Vec<f64> = parse_list(&opts.sigma_grid, "--sigma-grid")?;
    let lambda_grid: Vec<f64> = parse_list(&opts.lambda_grid, "--lambda-grid")?;
    let sel = grid_select(&x, &y, &sigma_grid, &lambda_grid)?;

    let (source_str, source_json) = opts.source.describe();
    Ok(match opts.format {
        Format::Csv => {
            let mut out = String::new();
            out.push_str(&format!(
                "# command=loocv {source_str} seed={} sigma_grid={} lambda_grid={} best_sigma={} best_lambda={} best_score={}\n",
                opts.seed,
                opts.sigma_grid,
                opts.lambda_grid,
                fmt_f64(sel.best_sigma),
                fmt_f64(sel.best_lambda),
                fmt_f64(sel.best_score),
            ));
            out.push_str("sigma,lambda,score,best\n");
            for (i, &s) in sel.sigma_grid.iter().enumerate() {
                for (j, &l) in sel.lambda_grid.iter().enumerate() {
                    let best = s == sel.best_sigma && l == sel.best_lambda;
                    out.push_str(&format!(
                        "{},{},{},{}\n",
                        fmt_f64(s),
                        fmt_f64(l),
                        fmt_f64(sel.scores[(i, j)]),
                        u8::from(best)
                    ));
                }
            }
            out
        }
        Format::Json => {
            let scores: Vec<Vec<Value>> = (0..sel.sigma_grid.len())
                .map(|i| {
                    (0..sel.lambda_grid.len())
                        .map(|j| json_f64(sel.scores[(i, j)]))
                        .collect()
                })
                .collect();
            let value = json!({
                "config": {
                    "command": "loocv",
                    "source": source_json,
                    "seed": opts.seed,
                    "sigma_grid": sel.sigma_grid,
                    "lambda_grid": sel.lambda_grid,
                },
                "scores": scores,
                "best": {
                    "sigma": sel.best_sigma,
                    "lambda": sel.best_lambda,
                    "score": json_f64(sel.best_score),
                },
            });
            format!("{}\n", serde_json::to_string_pretty(&value)?)
        }
    })
}

/// The standard column set of the condition-number table.
pub fn standard_kinds() -> Vec<HessianKind> {
    vec![
        HessianKind::GramK11,
        HessianKind::RKulsif,
        HessianKind::Kulsif,
        HessianKind::KmmInductive,
        HessianKind::PsiTrueRatio {
            psi: PsiKind::KullbackLeibler,
        },
        HessianKind::Rnd {
            law: DiagonalLaw::Power { gamma: 2.0 },
        },
        HessianKind::Rnd {
            law: DiagonalLaw::Power { gamma: 5.0 },
        },
        HessianKind::Rnd {
            law: DiagonalLaw::Power { gamma: 10.0 },
        },
    ]
}

pub struct BenchCondOptions {
    pub sigma: f64,
    pub n_grid: String,
    pub runs: usize,
    pub mu: f64,
    pub seed: u64,
    pub threads: usize,
    pub format: Format,
}

pub fn run_bench_cond(opts: BenchCondOptions) -> Result<String, CliError> {
    let n_grid: Vec<usize> = parse_list(&opts.n_grid, "--n-grid")?;
    let cfg = CondExperimentConfig {
        n_grid,
        sigma: opts.sigma,
        mu: opts.mu,
        runs: opts.runs,
        seed: opts.seed,
    };
    let report = in_pool(opts.threads, || cond_table(&cfg, &standard_kinds()))??;
    Ok(match opts.format {
        Format::Csv => report.to_csv(),
        Format::Json => format!("{}\n", serde_json::to_string_pretty(&report.to_json())?),
    })
}

pub struct BenchIterOptions {
    pub n: usize,
    pub runs: usize,
    pub mu: f64,
    pub seed: u64,
    pub threads: usize,
    pub format: Format,
}

pub fn run_bench_iter(opts: BenchIterOptions) -> Result<String, CliError> {
    let cfg = IterationBenchConfig {
        n: opts.n,
        runs: opts.runs,
        seed: opts.seed,
        mu: opts.mu,
        ..IterationBenchConfig::default()
    };
    let table = in_pool(opts.threads, || iteration_bench(&cfg, &BenchMethod::ALL))??;
    Ok(match opts.format {
        Format::Csv => table.to_csv(),
        Format::Json => format!("{}\n", serde_json::to_string_pretty(&table.to_json())?),
    })
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// One sub-suite outcome of `check`.
struct CheckLine {
    name: &'static str,
    passed: usize,
    total: usize,
}

/// Runs the seeded invariant battery — gradient checks for all four
/// objectives, the analytic-vs-naive LOOCV oracle, the per-instance
/// condition-number ordering chain, the spectral product identities, and
/// the frozen-beta contract — and reports pass/fail counts. Returns the
/// report and whether everything passed.
pub fn run_check(seed: u64) -> Result<(String, bool), CliError> {
    let mut lines: Vec<CheckLine> = Vec::new();

    // gradient checks on one moderate instance
    {
        let mut rng_x = substream(seed, &[10]);
        let mut rng_y = substream(seed, &[11]);
        let x = gaussian_points(&mut rng_x, 15, 4, 0.0);
        let y = gaussian_points(&mut rng_y, 15, 4, 0.5);
        let sigma = median_heuristic(&x)?;
        let blocks = Arc::new(gram_blocks(&KernelSpec::gaussian(sigma)?, &x, &y)?);
        let lambda = 0.2;
        let mut rng = substream(seed, &[12]);
        use rand::Rng;
        let free_points: Vec<DVector<f64>> = (0..5)
            .map(|_| DVector::from_fn(15, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        // feasible KL points: random rays from the strictly feasible start,
        // shrunk until both sample sides stay inside the domain (the
        // feasible set is convex, so shrinking always succeeds)
        let kl_obj = MestObjective::new(blocks.clone(), lambda, PsiSpec::kullback_leibler())?;
        let alpha0 = kl_feasible_start(&blocks, lambda)?;
        let kl_points: Vec<DVector<f64>> = (0..5)
            .map(|_| {
                let dir = DVector::from_fn(15, |_, _| rng.random_range(-1.0..1.0));
                let mut t = 1.0;
                loop {
                    let candidate = &alpha0 + t * &dir;
                    if kl_obj.value(&candidate).is_ok() {
                        return candidate;
                    }
                    t *= 0.5;
                }
            })
            .collect();
        type GradCase<'a> = (Box<dyn Objective>, &'a [DVector<f64>]);
        let objectives: Vec<GradCase> = vec![
            (
                Box::new(RkulsifObjective::new(blocks.clone(), lambda)?),
                &free_points,
            ),
            (
                Box::new(KulsifObjective::new(blocks.clone(), lambda)?),
                &free_points,
            ),
            (
                Box::new(KmmInductiveObjective::new(blocks.clone(), lambda)?),
                &free_points,
            ),
            (
                Box::new(MestObjective::new(
                    blocks.clone(),
                    lambda,
                    PsiSpec::kullback_leibler(),
                )?),
                &kl_points,
            ),
        ];
        let mut passed = 0;
        for (obj, points) in &objectives {
            if grad_check(obj.as_ref(), points, 1e-5)? <= 1e-5 {
                passed += 1;
            }
        }
        lines.push(CheckLine {
            name: "gradient_checks",
            passed,
            total: objectives.len(),
        });
    }

    // analytic LOOCV against the brute-force oracle
    {
        let mut rng_x = substream(seed, &[20]);
        let mut rng_y = substream(seed, &[21]);
        let x = gaussian_points(&mut rng_x, 20, 4, 0.0);
        let y = gaussian_points(&mut rng_y, 15, 4, 0.5);
        let kernel = KernelSpec::gaussian(median_heuristic(&x)?)?;
        let blocks = gram_blocks(&kernel, &x, &y)?;
        let lambdas = [1e-2, 1e-1, 1.0];
        let mut passed = 0;
        for &lambda in &lambdas {
            let analytic = loocv_analytic(&blocks, lambda)?.score;
            let naive = loocv_naive(&x, &y, &kernel, lambda)?;
            if (analytic - naive).abs() <= 1e-8 * naive.abs().max(1e-12) {
                passed += 1;
            }
        }
        lines.push(CheckLine {
            name: "loocv_oracle",
            passed,
            total: lambdas.len(),
        });
    }

    // ordering chain and spectral product identities
    {
        let total = 20;
        let mut chain = 0;
        let mut identities = 0;
        for inst in 0..total {
            let mut rng = substream(seed, &[30, inst as u64]);
            let x = gaussian_points(&mut rng, 20, 10, 0.0);
            let k11 = kulsif::gram_matrix(&KernelSpec::gaussian(2.0)?, &x);
            let lambda = (20f64).powf(-0.9);
            let rep = ordering_check(&k11, lambda)?;
            if rep.all_hold() {
                chain += 1;
            }
            let prod = rep.kappa_k11 * rep.kappa_rkulsif;
            let prod2 = rep.kappa_k11 * rep.kappa_rkulsif * rep.kappa_rkulsif;
            if (rep.kappa_kulsif - prod).abs() <= 1e-8 * prod
                && (rep.kappa_kmm - prod2).abs() <= 1e-8 * prod2
            {
                identities += 1;
            }
        }
        lines.push(CheckLine {
            name: "ordering_chain",
            passed: chain,
            total,
        });
        lines.push(CheckLine {
            name: "kappa_identities",
            passed: identities,
            total,
        });
    }

    // frozen-beta contract of the closed-form fit
    {
        let mut rng_x = substream(seed, &[40]);
        let mut rng_y = substream(seed, &[41]);
        let x = gaussian_points(&mut rng_x, 12, 3, 0.0);
        let y = gaussian_points(&mut rng_y, 9, 3, 0.5);
        let lambda = 0.3;
        let kernel = KernelSpec::gaussian(1.5)?;
        let model = fit_kulsif(Arc::new(x), Arc::new(y), kernel, lambda)?;
        let expect = 1.0 / (9.0 * lambda);
        let ok = model.beta().iter().all(|&b| b == expect);
        lines.push(CheckLine {
            name: "beta_frozen",
            passed: usize::from(ok),
            total: 1,
        });
    }

    let mut out = String::new();
    let mut all_ok = true;
    out.push_str(&format!("# command=check seed={seed}\n"));
    out.push_str("check,passed,total\n");
    for l in &lines {
        all_ok &= l.passed == l.total;
        out.push_str(&format!("{},{},{}\n", l.name, l.passed, l.total));
    }
    out.push_str(&format!(
        "result,{},{}\n",
        if all_ok { "pass" } else { "fail" },
        lines.len()
    ));
    Ok((out, all_ok))
}
