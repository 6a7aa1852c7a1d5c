use std::fs;
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use randla::detkernels::{eigh, numerical_rank, pcg, pinv_solve, svd, IdentityOperator, SvdFactors};
use randla::errorest::{bootstrap_ls, bootstrap_svd};
use randla::fullrank::{default_sketch_rows, rand_chol_qr, sap_chol_qrcp};
use randla::io::{load_matrix, load_vector};
use randla::leastsq::{
    limiting_solution, nystrom_pcg, sketch_and_solve_ols, spo1, sps2, NystromConfig, SaddleProblem, SapConfig,
};
use randla::leverage::{approx_leverage, default_d2, exact_leverage, subspace_leverage, LeverageScores};
use randla::lowrank::{curd1, evd1, evd2, osid1, qb2, qb3, svd1, PowerConfig};
use randla::sketching::{SketchFamily, SketchOperator};
use randla::synth::{gaussian_vector, gen_matrix, psd_with_eigenvalues};
use randla::trace::{girard_hutchinson, hutch_pp, slq, SpectralFunction};
use randla::{detkernels::Reorth, RngKey};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{DriverConfig, ExperimentConfig, MatrixConfig, Structure};
use crate::BenchError;

/// A generated (or loaded) problem plus lazily computed dense oracles.
pub struct Problem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    svd: OnceLock<SvdFactors>,
    x_star: OnceLock<DVector<f64>>,
}

impl Problem {
    pub fn build(cfg: &MatrixConfig, seed: RngKey) -> Result<Self, BenchError> {
        let a = match &cfg.path {
            Some(path) => load_matrix(path).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?,
            None => {
                let mut spec = cfg.spec.clone();
                spec.seed = seed;
                match cfg.structure {
                    Structure::General => gen_matrix(&spec).map_err(|e| BenchError::Config(e.to_string()))?,
                    Structure::Psd => psd_with_eigenvalues(spec.singular_values().as_slice(), seed.derive(1)),
                }
            }
        };
        let b = match &cfg.rhs_path {
            Some(path) => load_vector(path).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?,
            None => {
                let x0 = gaussian_vector(a.ncols(), seed.derive(10));
                let w = gaussian_vector(a.nrows(), seed.derive(11));
                &a * x0 + w * cfg.rhs_noise
            }
        };
        if b.len() != a.nrows() {
            return Err(BenchError::Config(format!("rhs has length {}, matrix has {} rows", b.len(), a.nrows())));
        }
        Ok(Self { a, b, svd: OnceLock::new(), x_star: OnceLock::new() })
    }

    fn svd(&self) -> &SvdFactors {
        self.svd.get_or_init(|| svd(&self.a))
    }

    /// Minimum-norm least-squares solution.
    fn x_star(&self) -> &DVector<f64> {
        self.x_star.get_or_init(|| pinv_solve(&self.a, &self.b))
    }

    /// Best Frobenius error of a rank-`r` approximation.
    fn optimal_error(&self, r: usize) -> f64 {
        self.svd().sigma.iter().skip(r).map(|s| s * s).sum::<f64>().sqrt()
    }
}

/// Numbers reported for one trial; unused columns stay empty.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Outcome {
    pub iters: Option<usize>,
    pub rel_nres: Option<f64>,
    pub rel_error: Option<f64>,
    pub value: Option<f64>,
    pub covered: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: String,
    pub status: String,
    pub iters: Option<usize>,
    pub rel_nres: Option<f64>,
    pub rel_error: Option<f64>,
    pub value: Option<f64>,
    pub covered: Option<bool>,
    pub wall_ms: f64,
    pub message: String,
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn rel(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// ‖Aᵀr‖ / (‖A‖_F‖r‖), zero for a zero residual.
fn normalized_normal_residual(a: &DMatrix<f64>, b: &DVector<f64>, x: &DVector<f64>) -> f64 {
    let r = b - a * x;
    let rn = r.norm();
    if rn == 0.0 {
        0.0
    } else {
        a.tr_mul(&r).norm() / (a.norm() * rn)
    }
}

fn power(passes: usize) -> PowerConfig {
    PowerConfig::with_passes(passes)
}

fn sketch_matrix(
    family: &SketchFamily,
    d: usize,
    m: usize,
    seed: RngKey,
) -> Result<randla::sketching::SketchOp, String> {
    family.sample_isotropic(d, m, seed).map_err(err)
}

/// Runs one driver on one problem.
pub fn execute(driver: &DriverConfig, p: &Problem, seed: RngKey) -> Result<Outcome, String> {
    let a = &p.a;
    let (m, n) = a.shape();
    let a_norm = a.norm();
    let mut out = Outcome::default();
    match driver {
        DriverConfig::SketchSolve { d, family } => {
            let x = sketch_and_solve_ols(a, &p.b, *d, seed, *family).map_err(err)?;
            let x_star = p.x_star();
            out.rel_nres = Some(normalized_normal_residual(a, &p.b, &x));
            out.rel_error = Some(rel((&x - x_star).norm(), x_star.norm()));
            out.value = Some(rel((a * &x - &p.b).norm(), (a * x_star - &p.b).norm()));
        }
        DriverConfig::Spo1 { sampling_factor, family, tol, maxit } => {
            let cfg = SapConfig { tol: *tol, maxit: *maxit, sampling_factor: *sampling_factor, family: *family, seed };
            let sol = spo1(a, &p.b, &cfg).map_err(err)?;
            let x_star = p.x_star();
            out.iters = Some(sol.report.iterations);
            out.rel_nres = Some(normalized_normal_residual(a, &p.b, &sol.x));
            out.rel_error = Some(rel((&sol.x - x_star).norm(), x_star.norm()));
        }
        DriverConfig::Sps2 { mu, c_scale, sampling_factor, family, tol, maxit } => {
            let c = gaussian_vector(n, seed.derive(99)) * *c_scale;
            let problem = SaddleProblem::new(a.clone(), p.b.clone(), Some(c.clone()), *mu).map_err(err)?;
            let cfg = SapConfig { tol: *tol, maxit: *maxit, sampling_factor: *sampling_factor, family: *family, seed };
            let sol = sps2(&problem, &cfg).map_err(err)?;
            let (x_ref, y_ref) = if *mu == 0.0 {
                limiting_solution(a, &p.b, &c)
            } else {
                let gram = a.tr_mul(a) + DMatrix::identity(n, n) * *mu;
                let x = gram.lu().solve(&(a.tr_mul(&p.b) - &c)).ok_or("singular regularized system")?;
                let y = &p.b - a * &x;
                (x, y)
            };
            out.iters = Some(sol.report.iterations);
            let scale = a_norm * a_norm * sol.x.norm() + (a.tr_mul(&p.b) - &c).norm();
            out.rel_nres = Some(rel(problem.normal_equation_residual(&sol.x), scale));
            out.rel_error = Some(rel((&sol.x - &x_ref).norm(), x_ref.norm()));
            out.value = Some(rel((&sol.y - &y_ref).norm(), y_ref.norm()));
        }
        DriverConfig::NystromPcg { mu, rank, oversample, power_passes, tol, maxit, compare_cg } => {
            let h = gaussian_vector(n, seed.derive(98));
            let cfg = NystromConfig {
                rank: *rank,
                oversample: *oversample,
                power_passes: *power_passes,
                tol: *tol,
                maxit: *maxit,
                seed,
            };
            let (x, report) = nystrom_pcg(a, *mu, &h, &cfg).map_err(err)?;
            out.iters = Some(report.iterations);
            out.rel_nres = report.residual_history.last().copied().or(Some(0.0));
            out.rel_error = Some(rel((a * &x + &x * *mu - &h).norm(), h.norm()));
            if *compare_cg {
                let (_, cg) = pcg(a, *mu, &h, &IdentityOperator(n), *tol, 10 * n, None).map_err(err)?;
                out.value = Some(cg.iterations as f64);
            }
        }
        DriverConfig::Qb2 { k, tol, block_size, power_passes } => {
            let f = qb2(a, *k, *tol, *block_size, &power(*power_passes), seed).map_err(err)?;
            out.iters = Some(f.rank());
            out.rel_error = Some(rel((a - f.reconstruct()).norm(), a_norm));
            out.value = f.squared_error.map(|e| rel(e.sqrt(), a_norm));
        }
        DriverConfig::Qb3 { k, tol, block_size, power_passes } => {
            let f = qb3(a, *k, *tol, *block_size, &power(*power_passes), seed).map_err(err)?;
            out.iters = Some(f.rank());
            out.rel_error = Some(rel((a - f.reconstruct()).norm(), a_norm));
            out.value = f.squared_error.map(|e| rel(e.sqrt(), a_norm));
        }
        DriverConfig::Svd1 { k, oversample, tol, power_passes } => {
            let f = svd1(a, *k, *tol, *oversample, &power(*power_passes), seed).map_err(err)?;
            let e = (a - f.reconstruct()).norm();
            out.iters = Some(f.rank());
            out.rel_error = Some(rel(e, a_norm));
            out.value = Some(rel(e, p.optimal_error(f.rank())));
        }
        DriverConfig::Evd1 { k, oversample, tol, power_passes } => {
            let f = evd1(a, *k, *tol, *oversample, &power(*power_passes), seed).map_err(err)?;
            let e = (a - f.reconstruct()).norm();
            out.iters = Some(f.rank());
            out.rel_error = Some(rel(e, a_norm));
            out.value = Some(rel(e, p.optimal_error(f.rank())));
        }
        DriverConfig::Evd2 { k, oversample, power_passes } => {
            let f = evd2(a, *k, *oversample, seed, *power_passes).map_err(err)?;
            let e = (a - f.reconstruct()).norm();
            out.iters = Some(f.rank());
            out.rel_error = Some(rel(e, a_norm));
            out.value = Some(rel(e, p.optimal_error(f.rank())));
        }
        DriverConfig::Osid1 { k, oversample, axis, power_passes } => {
            let id = osid1(a, *k, *oversample, *axis, &power(*power_passes), seed).map_err(err)?;
            out.iters = Some(id.rank());
            out.rel_error = Some(rel((a - id.reconstruct(a)).norm(), a_norm));
            out.value = Some(id.interp_norm());
        }
        DriverConfig::Curd1 { k, oversample, power_passes } => {
            let f = curd1(a, *k, *oversample, &power(*power_passes), seed).map_err(err)?;
            let e = (a - f.reconstruct(a)).norm();
            out.iters = Some(f.j.len());
            out.rel_error = Some(rel(e, a_norm));
            out.value = Some(rel(e, p.optimal_error(f.j.len())));
        }
        DriverConfig::RandCholQr { d } => {
            let d = d.unwrap_or_else(|| default_sketch_rows(n).min(m));
            let (q, r) = rand_chol_qr(a, d, seed).map_err(err)?;
            out.rel_error = Some(rel((a - &q * &r).norm(), a_norm));
            out.value = Some((q.tr_mul(&q) - DMatrix::<f64>::identity(q.ncols(), q.ncols())).amax());
        }
        DriverConfig::SapCholQrcp { d } => {
            let d = d.unwrap_or_else(|| default_sketch_rows(n).min(m));
            let f = sap_chol_qrcp(a, d, seed).map_err(err)?;
            out.iters = Some(f.rank);
            out.rel_error = Some(rel((f.permuted(a) - &f.q * &f.r).norm(), a_norm));
            out.value = Some((f.q.tr_mul(&f.q) - DMatrix::<f64>::identity(f.rank, f.rank)).amax());
        }
        DriverConfig::ExactLeverage => {
            let l = exact_leverage(a).map_err(err)?;
            out.value = Some(l.sum());
            out.rel_error = Some((l.sum() - numerical_rank(&p.svd().sigma, m, n) as f64).abs());
        }
        DriverConfig::ApproxLeverage { d1, d2 } => {
            let d1 = d1.unwrap_or((4 * n).min(m));
            let d2 = d2.unwrap_or_else(|| default_d2(m));
            let approx = approx_leverage(a, d1, d2, seed).map_err(err)?;
            let exact = exact_leverage(a).map_err(err)?;
            out.value = Some(approx.sum());
            out.rel_error = Some(max_relative(&approx.scores, &exact.scores));
        }
        DriverConfig::SubspaceLeverage { k, oversample, power_passes } => {
            let approx = subspace_leverage(a, *k, *oversample, &power(*power_passes), seed).map_err(err)?;
            let u = p.svd().u.columns(0, *k);
            let exact: Vec<f64> = u.row_iter().map(|r| r.norm_squared()).collect();
            out.value = Some(approx.sum());
            out.rel_error = Some(approx.scores.iter().zip(&exact).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
        }
        DriverConfig::GirardHutchinson { probes, dist } => {
            let est = girard_hutchinson(a, *probes, *dist, seed).map_err(err)?;
            trace_outcome(&mut out, est.value, est.sample_variance, a.trace());
        }
        DriverConfig::HutchPp { budget } => {
            let est = hutch_pp(a, *budget, seed).map_err(err)?;
            trace_outcome(&mut out, est.value, est.sample_variance, a.trace());
        }
        DriverConfig::Slq { function, probes, steps, dist } => {
            let f = SpectralFunction::parse(function).map_err(err)?;
            if (a - a.transpose()).amax() > 1e-10 * a.amax() {
                return Err("slq needs a symmetric matrix".into());
            }
            let est = slq(a, &f, *probes, *steps, *dist, seed, Reorth::Full).map_err(err)?;
            let (vals, _) = eigh(&((a + a.transpose()) * 0.5));
            let exact = vals.iter().map(|&l| f.eval(l)).sum::<Result<f64, _>>().map_err(err)?;
            trace_outcome(&mut out, est.value, est.sample_variance, exact);
        }
        DriverConfig::BootstrapLs { d, replicates, alpha, norm, family } => {
            let s = sketch_matrix(family, *d, m, seed.derive(1))?;
            let a_hat = s.apply_left(a);
            let b_hat = s.apply_left(&DMatrix::from_column_slice(m, 1, p.b.as_slice())).column(0).into_owned();
            let x_hat = pinv_solve(&a_hat, &b_hat);
            let res = bootstrap_ls(&a_hat, &b_hat, &x_hat, *replicates, *alpha, *norm, seed.derive(2)).map_err(err)?;
            let truth = norm.of(&(&x_hat - p.x_star()));
            out.value = Some(res.quantile_estimate);
            out.rel_error = Some(truth);
            out.covered = Some(truth <= res.quantile_estimate);
        }
        DriverConfig::BootstrapSvd { d, k, replicates, alpha, family } => {
            let s = sketch_matrix(family, *d, m, seed.derive(1))?;
            let a_hat = s.apply_left(a);
            let (q_sigma, _) = bootstrap_svd(&a_hat, *k, *replicates, *alpha, seed.derive(2)).map_err(err)?;
            let sketched = svd(&a_hat);
            let sigma = &p.svd().sigma;
            let truth = (0..*k).map(|j| (sketched.sigma[j] - sigma[j]).abs()).fold(0.0, f64::max);
            out.value = Some(q_sigma.quantile_estimate);
            out.rel_error = Some(truth);
            out.covered = Some(truth <= q_sigma.quantile_estimate);
        }
    }
    Ok(out)
}

fn trace_outcome(out: &mut Outcome, estimate: f64, variance: f64, exact: f64) {
    out.value = Some(estimate);
    out.rel_error = Some(rel((estimate - exact).abs(), exact.abs()));
    out.rel_nres = Some(variance);
}

fn max_relative(approx: &[f64], exact: &[f64]) -> f64 {
    approx.iter().zip(exact).filter(|(_, e)| **e > 0.0).map(|(a, e)| (a - e).abs() / e).fold(0.0, f64::max)
}

/// Runs every trial. With `threads > 1` trials run concurrently; records
/// come back in trial order either way.
pub fn run_trials(cfg: &ExperimentConfig, threads: usize) -> Result<Vec<TrialRecord>, BenchError> {
    let shared = if cfg.resample_matrix || cfg.trials == 0 {
        None
    } else {
        Some(Problem::build(&cfg.matrix, cfg.matrix.spec.seed)?)
    };
    let one = |t: usize| -> TrialRecord {
        let seed = cfg.seed.derive(t as u64);
        let start = Instant::now();
        let result = match &shared {
            Some(p) => execute(&cfg.driver, p, seed),
            None => Problem::build(&cfg.matrix, cfg.matrix.spec.seed.derive(t as u64))
                .map_err(|e| e.to_string())
                .and_then(|p| execute(&cfg.driver, &p, seed)),
        };
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        let (status, outcome, message) = match result {
            Ok(o) => ("ok", o, String::new()),
            Err(e) => ("failed", Outcome::default(), e),
        };
        TrialRecord {
            trial: t,
            seed: seed.to_string(),
            status: status.into(),
            iters: outcome.iters,
            rel_nres: outcome.rel_nres,
            rel_error: outcome.rel_error,
            value: outcome.value,
            covered: outcome.covered,
            wall_ms,
            message,
        }
    };
    if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| BenchError::Runtime(e.to_string()))?;
        Ok(pool.install(|| (0..cfg.trials).into_par_iter().map(one).collect()))
    } else {
        Ok((0..cfg.trials).map(one).collect())
    }
}

/// Leverage scores from a leverage driver, for export.
pub fn leverage_scores(driver: &DriverConfig, p: &Problem, seed: RngKey) -> Result<LeverageScores, String> {
    let a = &p.a;
    let (m, n) = a.shape();
    match driver {
        DriverConfig::ExactLeverage => exact_leverage(a).map_err(err),
        DriverConfig::ApproxLeverage { d1, d2 } => {
            approx_leverage(a, d1.unwrap_or((4 * n).min(m)), d2.unwrap_or_else(|| default_d2(m)), seed).map_err(err)
        }
        DriverConfig::SubspaceLeverage { k, oversample, power_passes } => {
            subspace_leverage(a, *k, *oversample, &power(*power_passes), seed).map_err(err)
        }
        _ => Err("not a leverage driver".into()),
    }
}

/// Writes `row,score` lines.
pub fn write_scores(path: &Path, scores: &LeverageScores) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| BenchError::Runtime(e.to_string()))?;
    w.write_record(["row", "score"]).map_err(|e| BenchError::Runtime(e.to_string()))?;
    for (i, s) in scores.scores.iter().enumerate() {
        w.write_record([i.to_string(), s.to_string()]).map_err(|e| BenchError::Runtime(e.to_string()))?;
    }
    w.flush().map_err(|e| BenchError::Runtime(e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Stats {
    pub median: f64,
    pub p10: f64,
    pub p90: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    fn of(values: &mut [f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        values.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (values.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            values[lo] + (values[hi] - values[lo]) * (pos - lo as f64)
        };
        Some(Stats { median: q(0.5), p10: q(0.1), p90: q(0.9), min: values[0], max: values[values.len() - 1] })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub trials: usize,
    pub completed: usize,
    pub failed: usize,
    pub iters: Option<Stats>,
    pub rel_nres: Option<Stats>,
    pub rel_error: Option<Stats>,
    pub value: Option<Stats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
    pub wall_ms: Option<Stats>,
}

pub fn summarize(cfg: &ExperimentConfig, records: &[TrialRecord]) -> Summary {
    let ok: Vec<&TrialRecord> = records.iter().filter(|r| r.status == "ok").collect();
    let collect = |f: &dyn Fn(&TrialRecord) -> Option<f64>| -> Option<Stats> {
        let mut v: Vec<f64> = ok.iter().filter_map(|r| f(r)).collect();
        Stats::of(&mut v)
    };
    let covered: Vec<bool> = ok.iter().filter_map(|r| r.covered).collect();
    Summary {
        config: cfg.clone(),
        trials: records.len(),
        completed: ok.len(),
        failed: records.len() - ok.len(),
        iters: collect(&|r| r.iters.map(|i| i as f64)),
        rel_nres: collect(&|r| r.rel_nres),
        rel_error: collect(&|r| r.rel_error),
        value: collect(&|r| r.value),
        coverage: if covered.is_empty() {
            None
        } else {
            Some(covered.iter().filter(|c| **c).count() as f64 / covered.len() as f64)
        },
        wall_ms: collect(&|r| Some(r.wall_ms)),
    }
}

/// Writes `results.csv` and `summary.json` into `dir`.
pub fn write_reports(dir: &Path, records: &[TrialRecord], summary: &Summary) -> Result<(), BenchError> {
    fs::create_dir_all(dir).map_err(|e| BenchError::Runtime(format!("{}: {e}", dir.display())))?;
    let csv_path = dir.join("results.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| BenchError::Runtime(e.to_string()))?;
    if records.is_empty() {
        w.write_record(CSV_HEADER).map_err(|e| BenchError::Runtime(e.to_string()))?;
    }
    for r in records {
        w.serialize(r).map_err(|e| BenchError::Runtime(e.to_string()))?;
    }
    w.flush().map_err(|e| BenchError::Runtime(e.to_string()))?;
    let json = serde_json::to_string_pretty(summary).map_err(|e| BenchError::Runtime(e.to_string()))?;
    fs::write(dir.join("summary.json"), json + "\n").map_err(|e| BenchError::Runtime(e.to_string()))?;
    Ok(())
}

pub const CSV_HEADER: [&str; 10] =
    ["trial", "seed", "status", "iters", "rel_nres", "rel_error", "value", "covered", "wall_ms", "message"];
