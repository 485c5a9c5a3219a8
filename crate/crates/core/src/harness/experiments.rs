//! Monte Carlo experiments, one function per kind. Trial `i` always draws
//! from stream `i`, and results are collected in trial order before any
//! reduction, so reports do not depend on the number of worker threads.

use std::f64::consts::PI;
use std::time::Instant;

use rayon::prelude::*;

use super::config::{load_grid, ExperimentConfig, ExperimentKind, TestFunctionSpec};
use super::report::{Metric, Report, Table};
use crate::bandlimits::{decompose, GridFunction};
use crate::dbm::{
    char_gaussian_moments, characteristic, homogenization_runs, simulate_dbm, DbmOptions, DbmState, Scheme,
};
use crate::ensembles::{gaussian_tridiagonal, linear_statistic, sample_spectrum, EnsembleSpec};
use crate::error::{Error, Result};
use crate::functionals::{cf_from_parts, expectation_e, f_envelope, im_covariance, skewness_b, variance_v};
use crate::gausskernels::{hermite_integrals, ClusterKernel, Symmetry};
use crate::linalg::sturm_count;
use crate::quad::integrate;
use crate::spectra::{msc, rho_sc, ComplexEnergy};
use crate::stats::{
    batch_estimate, characteristic_function, covariance_estimate, default_batches, linear_fit, mean_estimate, median,
    third_cumulant, variance_estimate,
};
use crate::testfn::{ClosedForm, TestFunction};

pub const DEFAULT_XI: [f64; 7] = [0.0, 0.5, -0.5, 1.0, -1.0, 2.0, -2.0];
const CF_XI_EXTRA: [f64; 2] = [3.0, -3.0];

/// Runs one experiment. Configuration errors abort; failures inside a metric
/// are recorded on that metric and the remaining metrics still run.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let start = Instant::now();
    let mut report = Report::new(cfg.kind.as_str(), Some(cfg.clone()));
    let mut out = Outputs::default();
    match cfg.kind {
        ExperimentKind::Clt => clt(cfg, &mut out)?,
        ExperimentKind::BandVariance => band_variance(cfg, &mut out)?,
        ExperimentKind::CovarianceGrid => covariance_grid(cfg, &mut out)?,
        ExperimentKind::CountingVariance => counting_variance(cfg, &mut out)?,
        ExperimentKind::Wegner => wegner(cfg, &mut out)?,
        ExperimentKind::DbmMoments => dbm_moments(cfg, &mut out)?,
        ExperimentKind::Homogenization => homogenization(cfg, &mut out)?,
        ExperimentKind::KernelValidate => kernel_validate(cfg, &mut out)?,
    }
    report.metrics = out.metrics;
    report.tables = out.tables;
    report.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

#[derive(Default)]
pub(crate) struct Outputs {
    metrics: Vec<Metric>,
    tables: Vec<Table>,
}

impl Outputs {
    pub(crate) fn push(&mut self, m: Metric) {
        self.metrics.push(m);
    }

    /// Runs `f`, recording its metrics or a single failed metric.
    pub(crate) fn into_report(self, report: &mut Report) {
        report.metrics.extend(self.metrics);
        report.tables.extend(self.tables);
    }

    pub(crate) fn guard(&mut self, name: &str, provenance: &str, f: impl FnOnce(&mut Outputs) -> Result<()>) {
        let mut local = Outputs::default();
        match f(&mut local) {
            Ok(()) => {
                self.metrics.extend(local.metrics);
                self.tables.extend(local.tables);
            }
            Err(e) => self.metrics.push(Metric::failed(name, provenance, &e)),
        }
    }
}

/// SplitMix64 finalizer: decorrelated seeds for sub-experiments.
pub fn sub_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn par_trials<T: Send>(trials: usize, f: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..trials as u64).into_par_iter().map(f).collect()
}

fn columns(rows: &[Vec<f64>], width: usize) -> Vec<Vec<f64>> {
    (0..width).map(|j| rows.iter().map(|r| r[j]).collect()).collect()
}

/// `int phi rho_sc`, after `x = 2 cos theta`.
pub fn semicircle_mean<F: TestFunction<f64> + ?Sized>(phi: &F) -> Result<f64> {
    let r = integrate(
        |t: f64| {
            let s = t.sin();
            phi.value(2.0 * t.cos()) * 2.0 / PI * s * s
        },
        0.0,
        PI,
        16,
        1e-13,
        1e-12,
    )?;
    Ok(r.value)
}

/// Eigenvalue counting for one sample: Sturm sequences on the tridiagonal
/// model for Gaussian ensembles, sorted eigenvalues otherwise.
enum Counter {
    Tridiagonal(Vec<f64>, Vec<f64>),
    Sorted(Vec<f64>),
}

impl Counter {
    fn sample(spec: &EnsembleSpec, seed: u64, stream: u64) -> Result<Self> {
        if spec.offdiag.is_gaussian() {
            let (d, e) = gaussian_tridiagonal(spec, seed, stream)?;
            Ok(Counter::Tridiagonal(d, e))
        } else {
            Ok(Counter::Sorted(sample_spectrum(spec, seed, stream)?.eigenvalues))
        }
    }

    /// `#{lambda_i < x}`
    fn below(&self, x: f64) -> usize {
        match self {
            Counter::Tridiagonal(d, e) => sturm_count(d, e, x),
            Counter::Sorted(v) => v.partition_point(|l| *l < x),
        }
    }
}

fn clt(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let n = cfg.n;
    let spec = cfg.ensemble_spec(n)?;
    let cum = cfg.cumulant_pair(&spec);
    let phi = cfg.test_fn()?;
    let centre = n as f64 * semicircle_mean(&*phi)?;
    let stats = par_trials(cfg.trials, |i| {
        let s = sample_spectrum(&spec, cfg.seed, i)?;
        Ok(linear_statistic(&s, &*phi) - centre)
    })?;

    let e = expectation_e(&*phi, cum, n);
    let m = mean_estimate(&stats);
    out.push(Metric::within("mean", "functionals::expectation_e", m.value, e.value, m.se, 0.0));

    let v = match variance_v(&*phi, cum, n) {
        Ok(v) => v.value,
        Err(err) => {
            out.push(Metric::failed("variance", "functionals::variance_v", &err));
            return Ok(());
        }
    };
    let var = variance_estimate(&stats);
    out.push(Metric::within("variance", "functionals::variance_v", var.value, v, var.se, 0.0));

    let b = skewness_b(&*phi);
    let k3 = batch_estimate(&stats, default_batches(stats.len()), third_cumulant);
    let k3_pred = -6.0 * cum.s3 * b / (n as f64).sqrt();
    out.push(Metric::informational("third cumulant", "functionals::skewness_b", k3.value, Some(k3_pred), k3.se));

    let centred: Vec<f64> = stats.iter().map(|x| x - e.value).collect();
    let xis = cfg.xi.clone().unwrap_or_else(|| DEFAULT_XI.iter().chain(&CF_XI_EXTRA).copied().collect());
    let mut table =
        Table::new("characteristic_function", &["xi", "re", "im", "se_re", "se_im", "predicted_re", "predicted_im"]);
    let tol = 10.0 / n as f64;
    for xi in xis {
        let c = characteristic_function(&centred, xi);
        let p = cf_from_parts(v, b, cum, n, xi);
        out.push(Metric::within(
            &format!("cf re xi={xi}"),
            "functionals::predicted_cf",
            c.value.re,
            p.re,
            c.se_re,
            tol,
        ));
        out.push(Metric::within(
            &format!("cf im xi={xi}"),
            "functionals::predicted_cf",
            c.value.im,
            p.im,
            c.se_im,
            tol,
        ));
        table.push(vec![xi, c.value.re, c.value.im, c.se_re, c.se_im, p.re, p.im]);
    }
    out.tables.push(table);
    Ok(())
}

fn band_variance(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let n = cfg.n;
    let spec = cfg.ensemble_spec(n)?;
    let grid = match cfg.test_function.as_ref() {
        Some(TestFunctionSpec::Closed(f)) => {
            GridFunction::from_fn(f, cfg.grid_half_width.unwrap_or(6.0), cfg.grid_log2_len.unwrap_or(13))?
        }
        Some(TestFunctionSpec::Grid { grid }) => load_grid(grid)?,
        None => return Err(Error::Config("band-variance needs a test_function".into())),
    };
    let [k_lo, k_hi] = cfg.bands.expect("validated");
    let bands = decompose(&grid, k_hi.max(0) as usize)?;
    let chosen: Vec<_> = bands.into_iter().filter(|b| (k_lo..=k_hi).contains(&b.k)).collect();
    let rows = par_trials(cfg.trials, |i| {
        let s = sample_spectrum(&spec, cfg.seed, i)?;
        Ok(chosen.iter().map(|b| linear_statistic(&s, &b.phi_k)).collect::<Vec<f64>>())
    })?;
    let cols = columns(&rows, chosen.len());
    let mut table = Table::new("bands", &["k", "l2_norm_sq", "variance", "variance_se", "ratio", "ratio_se"]);
    let mut ratios = Vec::new();
    for (b, col) in chosen.iter().zip(&cols) {
        let norm2 = b.phi_k.l2_norm().powi(2);
        let scale = 2f64.powi(b.k) * norm2;
        let v = variance_estimate(col);
        let (r, r_se) = (v.value / scale, v.se / scale);
        out.push(Metric::informational(&format!("variance ratio k={}", b.k), "bandlimits::decompose", r, None, r_se));
        table.push(vec![b.k as f64, norm2, v.value, v.se, r, r_se]);
        ratios.push(r);
    }
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, c), r| (a.min(*r), c.max(*r)));
    out.push(Metric::at_most(
        "variance ratio spread (max/min)",
        "bandlimits::decompose",
        hi / lo,
        30.0,
        f64::NAN,
        None,
    ));
    out.tables.push(table);
    Ok(())
}

fn covariance_grid(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let n = cfg.n;
    let spec = cfg.ensemble_spec(n)?;
    let cum = cfg.cumulant_pair(&spec);
    let energies = cfg.energies.clone().unwrap_or_else(|| vec![-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5]);
    let etas = cfg.etas.clone().unwrap_or_else(|| vec![0.5]);
    let points: Vec<ComplexEnergy<f64>> = etas
        .iter()
        .flat_map(|eta| energies.iter().map(move |e| ComplexEnergy::new(*e, *eta)))
        .collect::<Result<_>>()?;
    let rows = par_trials(cfg.trials, |i| {
        let s = sample_spectrum(&spec, cfg.seed, i)?;
        Ok(points
            .iter()
            .map(|z| s.eigenvalues.iter().map(|l| z.im / ((l - z.re).powi(2) + z.im * z.im)).sum())
            .collect::<Vec<f64>>())
    })?;
    let cols = columns(&rows, points.len());
    let mut table = Table::new("covariance_grid", &["z_re", "z_im", "w_re", "w_im", "empirical", "se", "predicted"]);
    for a in 0..points.len() {
        for b in a..points.len() {
            let (z, w) = (points[a], points[b]);
            let name = format!("cov im tr G z={}+{}i w={}+{}i", z.re, z.im, w.re, w.im);
            out.guard(&name, "functionals::im_covariance", |o| {
                let est = covariance_estimate(&cols[a], &cols[b]);
                let pred = im_covariance(z, w, cum, n)?;
                let tol = 10.0 / (n as f64 * f_envelope(z, w));
                o.push(Metric::within(&name, "functionals::im_covariance", est.value, pred, est.se, tol));
                table.push(vec![z.re, z.im, w.re, w.im, est.value, est.se, pred]);
                Ok(())
            });
        }
    }
    out.tables.push(table);
    Ok(())
}

fn counting_variance(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let sizes = cfg.sizes.clone().unwrap_or_else(|| vec![100, 200, 400, 800]);
    let energies = cfg.energies.clone().unwrap_or_else(|| vec![0.0]);
    let mut table = Table::new("counting_variance", &["n", "log_n", "variance", "se"]);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let mut beta = 1;
    for &n in &sizes {
        let spec = cfg.ensemble_spec(n)?;
        beta = spec.beta;
        let seed = sub_seed(cfg.seed, n as u64);
        let rows = par_trials(cfg.trials, |i| {
            let c = Counter::sample(&spec, seed, i)?;
            Ok(energies.iter().map(|e| c.below(*e) as f64).collect::<Vec<f64>>())
        })?;
        let ests: Vec<_> = columns(&rows, energies.len()).iter().map(|c| variance_estimate(c)).collect();
        let k = ests.len() as f64;
        let v = ests.iter().map(|e| e.value).sum::<f64>() / k;
        let se = ests.iter().map(|e| e.se * e.se).sum::<f64>().sqrt() / k;
        out.push(Metric::informational(&format!("counting variance n={n}"), "stats::variance_estimate", v, None, se));
        table.push(vec![n as f64, (n as f64).ln(), v, se]);
        xs.push((n as f64).ln());
        ys.push(v);
    }
    let fit = linear_fit(&xs, &ys);
    // Reference only: the bulk counting variance grows like log(n) / (beta pi^2).
    let reference = 1.0 / (beta as f64 * PI * PI);
    out.push(Metric::at_least(
        "log-n slope a",
        "stats::linear_fit",
        fit.slope,
        f64::MIN_POSITIVE,
        fit.slope_se,
        Some(reference),
    ));
    out.push(Metric::at_least("log-n fit r squared", "stats::linear_fit", fit.r_squared, 0.9, f64::NAN, None));
    out.push(Metric::informational("log-n intercept b", "stats::linear_fit", fit.intercept, None, f64::NAN));
    out.tables.push(table);
    Ok(())
}

fn default_etas(n: usize) -> Vec<f64> {
    (0..=8).map(|j| 10f64.powf(-4.0 + 0.5 * j as f64) / n as f64).collect()
}

fn wegner(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let n = cfg.n;
    let spec = cfg.ensemble_spec(n)?;
    let e = cfg.energies.as_ref().map_or(0.0, |v| v[0]);
    let etas = cfg.etas.clone().unwrap_or_else(|| default_etas(n));
    let rows = par_trials(cfg.trials, |i| {
        let c = Counter::sample(&spec, cfg.seed, i)?;
        Ok(etas.iter().map(|eta| if c.below(e + eta) > c.below(e - eta) { 1.0 } else { 0.0 }).collect::<Vec<f64>>())
    })?;
    let cols = columns(&rows, etas.len());
    let mut ratios = Vec::with_capacity(etas.len());
    for (eta, col) in etas.iter().zip(&cols) {
        let p = mean_estimate(col);
        let scale = n as f64 * eta;
        // With no hits the batch error is zero; use the binomial bound 1/trials instead.
        let se = if p.value > 0.0 { p.se } else { 1.0 / cfg.trials as f64 };
        ratios.push((p.value, p.value / scale, se / scale));
    }
    let (num, den) = ratios
        .iter()
        .filter(|(_, _, s)| *s > 0.0 && s.is_finite())
        .fold((0.0, 0.0), |(a, b), (_, r, s)| (a + r / (s * s), b + 1.0 / (s * s)));
    let fitted = num / den;
    let reference = 2.0 * rho_sc(e);
    out.push(Metric::informational(
        "fitted wegner constant",
        "stats::mean_estimate",
        fitted,
        Some(reference),
        f64::NAN,
    ));
    let mut table = Table::new("wegner", &["eta", "probability", "ratio", "ratio_se"]);
    for (eta, (p, r, s)) in etas.iter().zip(&ratios) {
        let bound = 1.5 * fitted + 3.0 * s;
        out.push(Metric::at_most(
            &format!("wegner ratio eta={eta:e}"),
            "stats::mean_estimate",
            *r,
            bound,
            *s,
            Some(reference),
        ));
        table.push(vec![*eta, *p, *r, *s]);
    }
    out.tables.push(table);
    Ok(())
}

/// Largest `|d z_t/dt - m_sc(z_t) - z_t/2|` by central differences on a bulk grid.
pub fn characteristic_ode_residual() -> Result<f64> {
    let mut worst: f64 = 0.0;
    for re in [-1.5, -0.4, 0.0, 0.9, 1.7] {
        for im in [1e-3, 0.05, 0.5] {
            let z = ComplexEnergy::new(re, im)?;
            for t in [0.05, 0.3, 1.0] {
                let h = 1e-5;
                let a = characteristic(z, t + h)?.to_complex();
                let b = characteristic(z, t - h)?.to_complex();
                let zt = characteristic(z, t)?.to_complex();
                worst = worst.max(((a - b) / (2.0 * h) - msc(zt) - zt / 2.0).norm());
            }
        }
    }
    Ok(worst)
}

fn dbm_moments(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let n = cfg.n;
    let horizon = cfg.time.unwrap_or(0.2);
    out.guard("characteristic ODE residual", "dbm::characteristic", |o| {
        let r = characteristic_ode_residual()?;
        o.push(Metric::at_most("characteristic ODE residual", "dbm::characteristic", r, 1e-7, f64::NAN, None));
        Ok(())
    });
    let energies = cfg.energies.clone().unwrap_or_else(|| vec![0.4]);
    let etas = cfg.etas.clone().unwrap_or_else(|| vec![1e-2]);
    char_variance_checks(out, n, &energies, &etas, horizon);
    out.guard("OU stationary variance", "dbm::simulate_dbm", |o| {
        let init = DbmState::new(0.0, vec![0.0], 1)?;
        let opts = DbmOptions { record_every: usize::MAX, ..DbmOptions::new(12.0, cfg.dt.unwrap_or(0.01)) };
        let finals = par_trials(cfg.trials, |i| Ok(simulate_dbm(&init, &opts, cfg.seed, i, None)?.final_state()[0]))?;
        let v = variance_estimate(&finals);
        o.push(Metric::within("OU stationary variance (N=1)", "dbm::simulate_dbm", v.value, 2.0, v.se, 0.0));
        Ok(())
    });
    Ok(())
}

/// Closed-form against quantile-sum variance along characteristics.
pub(crate) fn char_variance_checks(out: &mut Outputs, n: usize, energies: &[f64], etas: &[f64], horizon: f64) {
    let mut table = Table::new("char_variance", &["re", "im", "closed", "sum_form", "tolerance"]);
    for &e in energies {
        for &eta in etas {
            let name = format!("char variance sum vs closed n={n} z={e}+{eta}i");
            out.guard(&name, "dbm::char_gaussian_moments", |o| {
                let m = char_gaussian_moments(ComplexEnergy::new(e, eta)?, None, horizon, n)?;
                let tol = 5.0 / (n as f64 * eta);
                o.push(Metric::within(&name, "dbm::char_gaussian_moments", m.var_z_sumform, m.var_z, f64::NAN, tol));
                table.push(vec![e, eta, m.var_z, m.var_z_sumform, tol]);
                Ok(())
            });
        }
    }
    out.tables.push(table);
}

fn homogenization(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let n = cfg.n;
    let spec = cfg.ensemble_spec(n)?;
    let t = cfg.time.unwrap_or(0.5);
    let dt = cfg.dt.unwrap_or(2e-3);
    let scheme = cfg.scheme.unwrap_or(Scheme::SemiImplicit);
    let indices = cfg.indices.clone().unwrap_or_else(|| vec![(n / 4).max(1), (n / 2).max(1), (3 * n / 4).max(1)]);
    let runs = homogenization_runs(&spec, t, &indices, cfg.seed, cfg.trials, dt, scheme)?;
    let bound = 10.0 / (n as f64 * n as f64 * t);
    let mut table = Table::new("homogenization", &["run", "k", "as_printed", "corrected"]);
    for (r, res) in runs.iter().enumerate() {
        for h in res {
            table.push(vec![r as f64, h.k as f64, h.as_printed, h.corrected]);
        }
    }
    let mut all = Vec::new();
    for (j, k) in indices.iter().enumerate() {
        let corrected: Vec<f64> = runs.iter().map(|r| r[j].corrected.abs()).collect();
        let printed: Vec<f64> = runs.iter().map(|r| r[j].as_printed.abs()).collect();
        out.push(Metric::at_most(
            &format!("median |residual| k={k}"),
            "dbm::homogenization_residual",
            median(&corrected),
            bound,
            f64::NAN,
            None,
        ));
        out.push(Metric::informational(
            &format!("median |residual| k={k}, correction without e^(-t/2)"),
            "dbm::homogenization_residual",
            median(&printed),
            Some(bound),
            f64::NAN,
        ));
        all.extend(corrected);
    }
    out.push(Metric::at_most(
        "median |residual| all indices",
        "dbm::homogenization_residual",
        median(&all),
        bound,
        f64::NAN,
        None,
    ));
    out.tables.push(table);
    Ok(())
}

/// Size at which the `1/N` density corrections are checked.
pub const DENSITY_N: usize = 60;

fn kernel_validate(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let n = cfg.n;
    let energies = cfg.energies.clone().unwrap_or_else(|| vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    let etas = cfg.etas.clone().unwrap_or_else(|| vec![1e-3, 1e-2, 1e-1]);
    out.guard("GUE covariance bound", "gausskernels::kernel_covariance", |o| {
        let kernel = ClusterKernel::new(n, Symmetry::Gue)?;
        let mut cases = Vec::new();
        for (i, &e1) in energies.iter().enumerate() {
            for &e2 in &energies[i..] {
                for &eta in &etas {
                    cases.push((e1, e2, eta));
                }
            }
        }
        let values = cases
            .par_iter()
            .map(|&(e1, e2, eta)| {
                let f = ClosedForm::windowed_poisson(e1, eta, 1.8, 0.1);
                let g = ClosedForm::windowed_poisson(e2, eta, 1.8, 0.1);
                Ok(kernel.kernel_covariance(&f, &g)?.value)
            })
            .collect::<Result<Vec<f64>>>()?;
        let mut table = Table::new("gue_covariance_bound", &["e1", "e2", "eta", "covariance", "scaled"]);
        let mut worst: f64 = 0.0;
        for (&(e1, e2, eta), cov) in cases.iter().zip(&values) {
            let scaled = cov.abs() * ((e1 - e2).powi(2) + eta * eta);
            worst = worst.max(scaled);
            table.push(vec![e1, e2, eta, *cov, scaled]);
        }
        o.push(Metric::at_most(
            "GUE max |Cov| ((E1-E2)^2 + eta^2)",
            "gausskernels::kernel_covariance",
            worst,
            20.0,
            f64::NAN,
            None,
        ));
        o.tables.push(table);
        Ok(())
    });

    density_checks(out);

    for m in [n, n + 1] {
        let name = format!("GOE kernel covariance vs Monte Carlo n={m}");
        out.guard(&name, "gausskernels::kernel_covariance", |o| {
            let kernel = ClusterKernel::new(m, Symmetry::Goe)?;
            let f = ClosedForm::windowed_poisson(-0.3, 0.2, 1.8, 0.1);
            let g = ClosedForm::windowed_poisson(0.4, 0.2, 1.8, 0.1);
            let cov = kernel.kernel_covariance(&f, &g)?;
            let var = kernel.kernel_covariance(&f, &f)?;
            let spec = EnsembleSpec::goe(m);
            let seed = sub_seed(cfg.seed, m as u64);
            let rows = par_trials(cfg.trials, |i| {
                let s = sample_spectrum(&spec, seed, i)?;
                Ok(vec![linear_statistic(&s, &f), linear_statistic(&s, &g)])
            })?;
            let cols = columns(&rows, 2);
            let c = covariance_estimate(&cols[0], &cols[1]);
            let v = variance_estimate(&cols[0]);
            o.push(Metric::within(
                &format!("{name}: Cov(f, g)"),
                "gausskernels::kernel_covariance",
                c.value,
                cov.value,
                c.se,
                cov.error_estimate,
            ));
            o.push(Metric::within(
                &format!("{name}: Var(f)"),
                "gausskernels::kernel_covariance",
                v.value,
                var.value,
                v.se,
                var.error_estimate,
            ));
            Ok(())
        });
    }

    hermite_checks(out);
    Ok(())
}

/// `1/N` corrections to the density of states at `N = DENSITY_N`.
pub(crate) fn density_checks(out: &mut Outputs) {
    out.guard("density corrections", "gausskernels::density_of_states", |o| {
        let nd = DENSITY_N as f64;
        let gue = ClusterKernel::new(DENSITY_N, Symmetry::Gue)?;
        for e in [0.0, 0.5] {
            let d = gue.density_of_states(e)?;
            let unit = 1.0 / (4.0 * PI.powi(3) * rho_sc(e).powi(2));
            o.push(Metric::within(
                &format!("GUE N(rho - rho_sc) n={DENSITY_N} E={e}"),
                "gausskernels::density_correction",
                nd * (d.rho - rho_sc(e)),
                nd * d.correction_predicted,
                f64::NAN,
                0.3 * unit,
            ));
        }
        let goe = ClusterKernel::new(DENSITY_N, Symmetry::Goe)?;
        let d = goe.density_of_states(0.5)?;
        let pred = nd * d.correction_predicted;
        o.push(Metric::within(
            &format!("GOE N(rho - rho_sc) n={DENSITY_N} E=0.5"),
            "gausskernels::density_correction",
            nd * (d.rho - rho_sc(0.5)),
            pred,
            f64::NAN,
            0.3 * pred.abs(),
        ));
        Ok(())
    });
}

/// Closed forms and asymptotics of the Hermite integrals.
pub(crate) fn hermite_checks(out: &mut Outputs) {
    out.guard("Hermite integrals", "gausskernels::hermite_integrals", |o| {
        let worst = (0..=50usize)
            .into_par_iter()
            .map(|m| {
                let r = hermite_integrals(m)?;
                let (q, c) = (r.even_full_line.quadrature, r.even_full_line.closed_form);
                Ok(((q - c) / c).abs())
            })
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        o.push(Metric::at_most(
            "even Hermite integral closed form vs quadrature, m <= 50",
            "gausskernels::hermite_integrals",
            worst,
            1e-8,
            f64::NAN,
            None,
        ));
        let m = 100usize;
        let mm = m as f64;
        let r = hermite_integrals(m)?;
        let even = r.even_full_line.closed_form / (2f64.sqrt() / mm.powf(0.25));
        o.push(Metric::at_most(
            "even integral vs asymptote, m=100",
            "gausskernels::hermite_integrals",
            band_excess(even),
            2.0 / mm,
            f64::NAN,
            None,
        ));
        let odd = r.odd_half_line_scaled.quadrature / r.odd_half_line_scaled.asymptote;
        o.push(Metric::at_most(
            "odd scaled integral vs asymptote, m=100",
            "gausskernels::hermite_integrals",
            band_excess(odd),
            2.0 / mm.sqrt(),
            f64::NAN,
            None,
        ));
        Ok(())
    });
}

/// `max(r, 1/r) - 1`: the smallest `b` with `r` in `[1/(1+b), 1+b]`.
fn band_excess(r: f64) -> f64 {
    r.max(1.0 / r) - 1.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::EnsembleChoice;

    fn clt_config(n: usize, trials: usize, phi: ClosedForm) -> ExperimentConfig {
        ExperimentConfig {
            test_function: Some(TestFunctionSpec::Closed(phi)),
            ..ExperimentConfig::new(ExperimentKind::Clt, n, trials, 5)
        }
    }

    #[test]
    fn semicircle_mean_of_moments() {
        // Catalan numbers: int x^2 rho = 1, int x^4 rho = 2.
        assert!((semicircle_mean(&ClosedForm::square()).unwrap() - 1.0).abs() < 1e-13);
        assert!((semicircle_mean(&ClosedForm::poly(&[0.0, 0.0, 0.0, 0.0, 1.0])).unwrap() - 2.0).abs() < 1e-13);
        assert!(semicircle_mean(&ClosedForm::identity()).unwrap().abs() < 1e-14);
    }

    #[test]
    fn counter_agrees_with_eigenvalues() {
        let spec = EnsembleSpec::goe(40);
        let c = Counter::sample(&spec, 3, 7).unwrap();
        let ev = sample_spectrum(&spec, 3, 7).unwrap().eigenvalues;
        for x in [-1.5, -0.2, 0.0, 0.9, 2.5] {
            assert_eq!(c.below(x), ev.iter().filter(|l| **l < x).count());
        }
    }

    #[test]
    fn small_clt_run_is_deterministic() {
        let cfg = clt_config(40, 400, ClosedForm::square());
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.tables, b.tables);
        let names: Vec<&str> = a.metrics.iter().map(|m| m.name.as_str()).collect();
        assert!(names.contains(&"mean") && names.contains(&"variance"));
        assert_eq!(a.table("characteristic_function").unwrap().rows.len(), 9);
    }

    #[test]
    fn configuration_errors_abort() {
        let cfg = ExperimentConfig { ensemble: EnsembleChoice::Gue, ..clt_config(10, 10, ClosedForm::identity()) };
        assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn metric_failures_are_recorded() {
        // A base point at the edge fails inside its metric only.
        let cfg = ExperimentConfig {
            energies: Some(vec![1.99, 0.4]),
            etas: Some(vec![0.05]),
            ..ExperimentConfig::new(ExperimentKind::DbmMoments, 200, 20, 1)
        };
        let r = run_experiment(&cfg).unwrap();
        let failed: Vec<_> = r.failures().collect();
        assert_eq!(failed.len(), 1, "{}", r.summary());
        assert!(failed[0].error.as_deref().unwrap().contains("edge"));
        assert!(r.metrics.iter().any(|m| m.name.contains("OU")));
    }

    #[test]
    fn sub_seeds_differ() {
        assert_ne!(sub_seed(1, 100), sub_seed(1, 200));
        assert_ne!(sub_seed(1, 100), sub_seed(2, 100));
        assert_eq!(sub_seed(9, 9), sub_seed(9, 9));
    }
}
