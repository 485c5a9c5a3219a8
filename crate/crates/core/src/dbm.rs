//! Dyson Brownian motion, its characteristics, mesoscopic statistics along
//! them and the Gaussian moments of the characteristic martingale.
//!
//! SDE: `dx_i = sqrt(2/(N beta)) dB_i + (1/N) sum_{j != i} dt/(x_i - x_j) - x_i/2 dt`,
//! whose stationary law is the Gaussian ensemble in the crate's normalization.

use std::path::Path;

use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensembles::{sample_spectrum, trial_rng, EnsembleSpec};
use crate::error::{Error, Result};
use crate::quad::{arcsine_integral, integrate};
use crate::spectra::{msc, msc_prime, quantiles, sqrt_z2_minus_4, ComplexEnergy};

/// Minimum distance of a base point from the spectral edges.
pub const MIN_EDGE_DISTANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbmState {
    pub t: f64,
    pub x: Vec<f64>,
    pub beta: u8,
}

impl DbmState {
    pub fn new(t: f64, mut x: Vec<f64>, beta: u8) -> Result<Self> {
        if beta != 1 && beta != 2 {
            return Err(Error::InvalidInput(format!("beta must be 1 or 2, got {beta}")));
        }
        if x.is_empty() || x.iter().any(|v| !v.is_finite()) || !t.is_finite() {
            return Err(Error::InvalidInput("DBM state needs finite particles".into()));
        }
        x.sort_by(f64::total_cmp);
        if x.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("DBM particles must be distinct".into()));
        }
        Ok(Self { t, x, beta })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }
}

/// `cosh(t/2) z + sinh(t/2) sqrt(z^2 - 4)`; on the real axis the limit from
/// the upper half plane is taken.
pub fn characteristic(z: ComplexEnergy<f64>, t: f64) -> Result<ComplexEnergy<f64>> {
    if z.im < 0.0 {
        return Err(Error::InvalidInput("characteristics need Im z >= 0".into()));
    }
    let root = if z.im == 0.0 {
        let e = z.re;
        if e.abs() < 2.0 {
            Complex::new(0.0, (4.0 - e * e).sqrt())
        } else {
            Complex::new(e.signum() * (e * e - 4.0).sqrt(), 0.0)
        }
    } else {
        sqrt_z2_minus_4(z.to_complex())
    };
    let zt = z.to_complex() * (0.5 * t).cosh() + root * (0.5 * t).sinh();
    ComplexEnergy::new(zt.re, zt.im)
}

/// Forward characteristic with final condition `z` at time `horizon`:
/// `z~_s = z_{horizon - s}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicPath {
    pub z: ComplexEnergy<f64>,
    pub horizon: f64,
}

impl CharacteristicPath {
    pub fn new(z: ComplexEnergy<f64>, horizon: f64) -> Result<Self> {
        if !(horizon >= 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidInput("horizon must be finite and >= 0".into()));
        }
        if z.im < 0.0 {
            return Err(Error::InvalidInput("characteristics need Im z >= 0".into()));
        }
        Ok(Self { z, horizon })
    }

    pub fn forward(&self, s: f64) -> Result<ComplexEnergy<f64>> {
        characteristic(self.z, self.horizon - s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// Evaluate at `z_t`, the point whose forward flow reaches `z` after time `t`.
    Value,
    /// Evaluate at `z_{-t}`, the point reached from `z` after flowing forward for `t`.
    Forward,
}

/// `int Im log(x - z) rho_sc(x) dx` by Chebyshev-Gauss quadrature, refined
/// until stable.
pub fn log_potential_im(z: Complex<f64>) -> Result<f64> {
    let f = |x: f64| (-z.im).atan2(x - z.re) * (4.0 - x * x) / (2.0 * std::f64::consts::PI);
    let mut m = ((8.0 / z.im.abs().max(1e-300)).ceil() as usize).next_power_of_two().clamp(64, 1 << 22);
    let mut prev = arcsine_integral(m, f);
    loop {
        m *= 2;
        let next = arcsine_integral(m, f);
        if (next - prev).abs() <= 1e-12 * (1.0 + next.abs()) {
            return Ok(next);
        }
        if m >= 1 << 24 {
            return Err(Error::NonConvergence { what: "log-potential quadrature", achieved: (next - prev).abs() });
        }
        prev = next;
    }
}

/// `X(z, t) = [Im sum log(x_k - z_t) - N int Im log(x - z_t) rho_sc] / Im m_sc(z_t)`.
pub fn meso_statistic(points: &[f64], z: ComplexEnergy<f64>, t: f64, direction: Direction) -> Result<f64> {
    let zt = match direction {
        Direction::Value => characteristic(z, t)?,
        Direction::Forward => characteristic(z, -t)?,
    };
    if !(zt.im > 0.0) {
        return Err(Error::InvalidInput(format!("characteristic left the upper half plane: {zt:?}")));
    }
    let zc = zt.to_complex();
    let empirical: f64 = points.iter().map(|x| (-zc.im).atan2(x - zc.re)).sum();
    let reference = points.len() as f64 * log_potential_im(zc)?;
    Ok((empirical - reference) / msc(zc).im)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharMoments {
    pub var_z: f64,
    pub var_w: f64,
    pub cov: f64,
    pub var_z_sumform: f64,
    pub cov_sumform: f64,
}

fn check_bulk(z: ComplexEnergy<f64>) -> Result<()> {
    let kappa = 2.0 - z.re.abs();
    if kappa < MIN_EDGE_DISTANCE {
        return Err(Error::NearEdge { kappa, min: MIN_EDGE_DISTANCE });
    }
    if !(z.im > 0.0) {
        return Err(Error::InvalidInput("base points need Im z > 0".into()));
    }
    Ok(())
}

/// `log(Im z~_0 / Im z~_T) - T/2 + Re[log(1 - m(z~_T)^2) - log(1 - m(z~_0)^2)]`.
pub fn char_variance_closed(z: ComplexEnergy<f64>, horizon: f64) -> Result<f64> {
    let path = CharacteristicPath::new(z, horizon)?;
    let z0 = path.forward(0.0)?.to_complex();
    let zt = z.to_complex();
    let one = Complex::new(1.0, 0.0);
    let lm = |u: Complex<f64>| (one - msc(u) * msc(u)).ln().re;
    Ok((z0.im / zt.im).ln() - 0.5 * horizon + lm(zt) - lm(z0))
}

/// Semicircle average of `Im(1/(x-a)) Im(1/(x-b))`, from partial fractions.
pub fn poisson_product_average(a: Complex<f64>, b: Complex<f64>) -> Complex<f64> {
    let dd = |u: Complex<f64>, v: Complex<f64>| {
        if (u - v).norm() < 1e-9 * (1.0 + u.norm()) {
            msc_prime(u)
        } else {
            (msc(u) - msc(v)) / (u - v)
        }
    };
    0.5 * (dd(a, b.conj()) - dd(a, b))
}

pub fn char_gaussian_moments(
    z: ComplexEnergy<f64>,
    w: Option<ComplexEnergy<f64>>,
    horizon: f64,
    n: usize,
) -> Result<CharMoments> {
    check_bulk(z)?;
    if let Some(w) = w {
        check_bulk(w)?;
    }
    if horizon == 0.0 {
        return Ok(CharMoments { var_z: 0.0, var_w: 0.0, cov: 0.0, var_z_sumform: 0.0, cov_sumform: 0.0 });
    }
    let gamma = quantiles::<f64>(n)?.gamma;
    let pz = CharacteristicPath::new(z, horizon)?;
    let w = w.unwrap_or(z);
    let pw = CharacteristicPath::new(w, horizon)?;
    let at = |p: &CharacteristicPath, s: f64| {
        p.forward(s).map(|v| v.to_complex()).unwrap_or(Complex::new(f64::NAN, f64::NAN))
    };
    let var_sum = |s: f64| {
        let zs = at(&pz, s);
        let y2 = zs.im * zs.im;
        2.0 / n as f64 * gamma.iter().map(|g| y2 / (g - zs).norm_sqr().powi(2)).sum::<f64>()
    };
    let cov_sum = |s: f64| {
        let (zs, ws) = (at(&pz, s), at(&pw, s));
        gamma.iter().map(|g| zs.im * ws.im / ((g - zs).norm_sqr() * (g - ws).norm_sqr())).sum::<f64>() / n as f64
    };
    let cov_closed = |s: f64| poisson_product_average(at(&pz, s), at(&pw, s)).re;
    let quad = |f: &dyn Fn(f64) -> f64| integrate(f, 0.0, horizon, 16, 1e-13, 1e-10).map(|r| r.value);
    Ok(CharMoments {
        var_z: char_variance_closed(z, horizon)?,
        var_w: char_variance_closed(w, horizon)?,
        cov: quad(&cov_closed)?,
        var_z_sumform: quad(&var_sum)?,
        cov_sumform: quad(&cov_sum)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Euler-Maruyama with gap-driven substeps and re-sorting.
    Explicit,
    /// Far field explicit; nearest-neighbour repulsion and confinement
    /// implicit through a convex minimization, so ordering is never lost.
    SemiImplicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbmOptions {
    pub scheme: Scheme,
    pub horizon: f64,
    pub dt: f64,
    /// Snapshot every this many `dt` steps (the final time is always kept).
    pub record_every: usize,
    /// Upper limit on the gap-driven substeps per `dt`.
    pub max_substeps: usize,
    /// Refinements of a step before a collision is reported.
    pub max_refinements: usize,
}

impl DbmOptions {
    pub fn new(horizon: f64, dt: f64) -> Self {
        Self { scheme: Scheme::Explicit, horizon, dt, record_every: 1, max_substeps: 64, max_refinements: 12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub coupled: Option<Vec<Vec<f64>>>,
    pub substeps: usize,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has a snapshot")
    }

    pub fn final_coupled(&self) -> Option<&[f64]> {
        self.coupled.as_ref().and_then(|c| c.last()).map(|v| v.as_slice())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_snapshots(path, &self.times, &self.states)
    }
}

pub fn write_snapshots(path: &Path, times: &[f64], states: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let n = states.first().map_or(0, |s| s.len());
    let mut header = vec!["time".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for (t, s) in times.iter().zip(states) {
        let mut row = vec![t.to_string()];
        row.extend(s.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn drift(x: &[f64], out: &mut [f64]) {
    let n = x.len();
    let inv_n = 1.0 / n as f64;
    out.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let r = inv_n / (x[i] - x[j]);
            out[i] += r;
            out[j] -= r;
        }
    }
    for i in 0..n {
        out[i] -= 0.5 * x[i];
    }
}

/// Euler-Maruyama over one interval with the given Brownian increments,
/// re-sorting after every substep. `None` when two particles coincide or a
/// value stops being finite.
fn euler_interval(x: &[f64], increments: &[Vec<f64>], h: f64, noise: f64, scratch: &mut Vec<f64>) -> Option<Vec<f64>> {
    let mut y = x.to_vec();
    scratch.resize(x.len(), 0.0);
    for db in increments {
        drift(&y, scratch);
        for i in 0..y.len() {
            y[i] += scratch[i] * h + noise * db[i];
        }
        if y.iter().any(|v| !v.is_finite()) {
            return None;
        }
        y.sort_unstable_by(f64::total_cmp);
        if y.windows(2).any(|w| w[0] == w[1]) {
            return None;
        }
    }
    Some(y)
}

/// One semi-implicit step: `y` minimizes
/// `|y - b|^2/(2h) + |y|^2/4 - (1/N) sum log(y_{i+1} - y_i)` with
/// `b = x + h F_far(x) + noise dB`, by damped tridiagonal Newton.
fn semi_implicit_step(x: &[f64], db: &[f64], h: f64, noise: f64) -> Option<Vec<f64>> {
    let n = x.len();
    let inv_n = 1.0 / n as f64;
    let mut b = vec![0.0; n];
    for i in 0..n {
        let mut far = 0.0;
        for j in 0..n {
            if j + 1 < i || j > i + 1 {
                far += 1.0 / (x[i] - x[j]);
            }
        }
        b[i] = x[i] + h * inv_n * far + noise * db[i];
    }
    let energy = |y: &[f64]| -> f64 {
        let mut e = 0.0;
        for i in 0..n {
            e += (y[i] - b[i]).powi(2) / (2.0 * h) + 0.25 * y[i] * y[i];
        }
        for w in y.windows(2) {
            e -= inv_n * (w[1] - w[0]).ln();
        }
        e
    };
    let mut y = x.to_vec();
    let mut e = energy(&y);
    let (mut diag, mut off, mut grad) = (vec![0.0; n], vec![0.0; n.saturating_sub(1)], vec![0.0; n]);
    for _ in 0..100 {
        for i in 0..n {
            grad[i] = (y[i] - b[i]) / h + 0.5 * y[i];
            diag[i] = 1.0 / h + 0.5;
        }
        for i in 0..n.saturating_sub(1) {
            let d = y[i + 1] - y[i];
            grad[i] += inv_n / d;
            grad[i + 1] -= inv_n / d;
            let c = inv_n / (d * d);
            diag[i] += c;
            diag[i + 1] += c;
            off[i] = -c;
        }
        let step = solve_tridiagonal(&diag, &off, &grad);
        let size = step.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if size <= 1e-13 * (1.0 + y.iter().fold(0.0f64, |a, v| a.max(v.abs()))) {
            return Some(y);
        }
        let min_gap = y.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = y.iter().zip(&step).map(|(v, s)| v - alpha * s).collect();
            if trial.windows(2).all(|w| w[0] < w[1]) {
                let et = energy(&trial);
                // Close to the minimizer the energy decrease drowns in rounding;
                // full Newton steps are then safe.
                if et <= e || (alpha == 1.0 && size < 1e-6 * min_gap) {
                    y = trial;
                    e = et;
                    break;
                }
            }
            alpha *= 0.5;
            if alpha < 1e-12 {
                // No further decrease at working precision.
                return Some(y);
            }
        }
    }
    None
}

/// Thomas algorithm for a symmetric tridiagonal system.
fn solve_tridiagonal(diag: &[f64], off: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = if n > 1 { off[0] / diag[0] } else { 0.0 };
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - off[i - 1] * c[i - 1];
        if i + 1 < n {
            c[i] = off[i] / m;
        }
        d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / m;
    }
    for i in (0..n.saturating_sub(1)).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    d
}

/// Splits every increment in two by Brownian bridge sampling.
fn refine<R: Rng + ?Sized>(increments: &[Vec<f64>], h: f64, rng: &mut R) -> Vec<Vec<f64>> {
    let sd = (h / 4.0).sqrt();
    let mut out = Vec::with_capacity(2 * increments.len());
    for db in increments {
        let first: Vec<f64> = db
            .iter()
            .map(|d| {
                let z: f64 = StandardNormal.sample(rng);
                0.5 * d + sd * z
            })
            .collect();
        let second = db.iter().zip(&first).map(|(d, a)| d - a).collect();
        out.push(first);
        out.push(second);
    }
    out
}

/// Integrates DBM from `initial` for `opts.horizon`. With `coupled_with`, a
/// second system is driven by exactly the same Brownian path.
pub fn simulate_dbm(
    initial: &DbmState,
    opts: &DbmOptions,
    seed: u64,
    stream: u64,
    coupled_with: Option<&DbmState>,
) -> Result<Trajectory> {
    if !(opts.horizon > 0.0) || !(opts.dt > 0.0) || !opts.horizon.is_finite() {
        return Err(Error::InvalidInput("DBM needs horizon > 0 and dt > 0".into()));
    }
    let n = initial.n();
    if let Some(c) = coupled_with {
        if c.n() != n || c.beta != initial.beta {
            return Err(Error::InvalidInput("coupled systems must share N and beta".into()));
        }
    }
    let noise = (2.0 / (n as f64 * initial.beta as f64)).sqrt();
    let mut rng = trial_rng(seed, stream);
    let steps = (opts.horizon / opts.dt).ceil().max(1.0) as usize;
    let dt = opts.horizon / steps as f64;
    let record_every = opts.record_every.max(1);

    let mut x = initial.x.clone();
    let mut y = coupled_with.map(|c| c.x.clone());
    let mut times = vec![initial.t];
    let mut states = vec![x.clone()];
    let mut coupled = y.as_ref().map(|v| vec![v.clone()]);
    let mut scratch = Vec::new();
    let mut total_substeps = 0usize;

    for step in 0..steps {
        let t = initial.t + step as f64 * dt;
        // Drift step capped by (local gap)^2 N / 8 in both systems.
        let mut gap = x.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        if let Some(y) = &y {
            gap = gap.min(y.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min));
        }
        let cap = if gap.is_finite() { gap * gap * n as f64 / 8.0 } else { dt };
        let mut m = match opts.scheme {
            Scheme::Explicit => (dt / cap).ceil().clamp(1.0, opts.max_substeps as f64) as usize,
            Scheme::SemiImplicit => 1,
        };
        let mut h = dt / m as f64;
        let sd = h.sqrt();
        let mut increments: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                (0..n)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        sd * z
                    })
                    .collect()
            })
            .collect();
        let mut refinements = 0;
        loop {
            let advance = |v: &[f64], scratch: &mut Vec<f64>| match opts.scheme {
                Scheme::Explicit => euler_interval(v, &increments, h, noise, scratch),
                Scheme::SemiImplicit => {
                    increments.iter().try_fold(v.to_vec(), |acc, db| semi_implicit_step(&acc, db, h, noise))
                }
            };
            let nx = advance(&x, &mut scratch);
            let ny = match &y {
                Some(y) => advance(y, &mut scratch).map(Some),
                None => Some(None),
            };
            if let (Some(nx), Some(ny)) = (nx, ny) {
                x = nx;
                y = ny;
                break;
            }
            if refinements == opts.max_refinements {
                let (index, next, gap) = x
                    .windows(2)
                    .enumerate()
                    .map(|(i, w)| (i, i + 1, w[1] - w[0]))
                    .fold((0, 1, f64::INFINITY), |a, b| if b.2 < a.2 { b } else { a });
                return Err(Error::Collision { time: t, index, next, gap, substeps: m });
            }
            increments = refine(&increments, h, &mut rng);
            m *= 2;
            h *= 0.5;
            refinements += 1;
        }
        total_substeps += m;
        if (step + 1) % record_every == 0 || step + 1 == steps {
            times.push(t + dt);
            states.push(x.clone());
            if let (Some(c), Some(y)) = (coupled.as_mut(), &y) {
                c.push(y.clone());
            }
        }
    }
    Ok(Trajectory { times, states, coupled, substeps: total_substeps })
}

/// Homogenization residual at index `k` for one coupled run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomogenizationResidual {
    pub k: usize,
    /// `lambda_k(t) - mu_k(t) - (X^W(gamma_k, t) - X^G(gamma_k, t)) / n`
    pub as_printed: f64,
    /// Same with the correction scaled by `e^{-t/2}`, the contraction the
    /// `-x/2` drift applies to coupled differences.
    pub corrected: f64,
}

/// Runs DBM from a sample of `wigner` coupled to a Gaussian sample and
/// compares `lambda_k(t) - mu_k(t)` with the mesoscopic statistics of the
/// initial data.
pub fn homogenization_residual(
    wigner: &EnsembleSpec,
    t: f64,
    k_indices: &[usize],
    seed: u64,
    stream: u64,
    dt: f64,
    scheme: Scheme,
) -> Result<Vec<HomogenizationResidual>> {
    if !(0.05..=1.0).contains(&t) {
        return Err(Error::InvalidInput(format!("homogenization time {t} outside [0.05, 1]")));
    }
    let n = wigner.n;
    let gamma = quantiles::<f64>(n)?;
    for &k in k_indices {
        if k == 0 || k > n {
            return Err(Error::InvalidInput(format!("index {k} outside 1..={n}")));
        }
    }
    // Streams 3r and 3r+1 give the two initial samples, 3r+2 the Brownian path.
    // A Gaussian `wigner` shares its sample so the coupling degenerates exactly.
    let gauss = EnsembleSpec { n, beta: wigner.beta, ..EnsembleSpec::goe(n) };
    let lam0 = sample_spectrum(wigner, seed, 3 * stream)?.eigenvalues;
    let mu0 = if wigner.offdiag.is_gaussian() && wigner.divisible_t == 0.0 {
        lam0.clone()
    } else {
        sample_spectrum(&gauss, seed, 3 * stream + 1)?.eigenvalues
    };
    let lam = DbmState::new(0.0, lam0.clone(), wigner.beta)?;
    let mu = DbmState::new(0.0, mu0.clone(), wigner.beta)?;
    let opts = DbmOptions { scheme, record_every: usize::MAX, ..DbmOptions::new(t, dt) };
    let traj = simulate_dbm(&lam, &opts, seed, 3 * stream + 2, Some(&mu))?;
    let lt = traj.final_state();
    let mt = traj.final_coupled().expect("coupled run");
    let contraction = (-0.5 * t).exp();
    k_indices
        .iter()
        .map(|&k| {
            let e = ComplexEnergy::new(gamma.get(k), 0.0)?;
            let xw = meso_statistic(&lam0, e, t, Direction::Value)?;
            let xg = meso_statistic(&mu0, e, t, Direction::Value)?;
            let diff = lt[k - 1] - mt[k - 1];
            let pred = (xw - xg) / n as f64;
            Ok(HomogenizationResidual { k, as_printed: diff - pred, corrected: diff - contraction * pred })
        })
        .collect()
}

/// Residuals of many independent coupled runs, in parallel over streams.
pub fn homogenization_runs(
    wigner: &EnsembleSpec,
    t: f64,
    k_indices: &[usize],
    seed: u64,
    runs: usize,
    dt: f64,
    scheme: Scheme,
) -> Result<Vec<Vec<HomogenizationResidual>>> {
    (0..runs as u64)
        .into_par_iter()
        .map(|r| homogenization_residual(wigner, t, k_indices, seed, r, dt, scheme))
        .collect()
}
