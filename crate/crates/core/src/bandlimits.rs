//! Littlewood-Paley dyadic decomposition of grid functions, Poisson
//! deconvolution of the bands, and Sobolev-type norms.
//!
//! Fourier convention: `phi_hat(xi) = int phi(x) e^{-i x xi} dx`, so the
//! Poisson kernel `P_eta(x) = eta / (pi (x^2 + eta^2))` has multiplier
//! `e^{-eta |xi|}`. Grids are periodic on `[-L, L)`; multipliers are applied
//! to the DFT.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::{Arc, OnceLock};

use num_complex::Complex;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::testfn::TestFunction;

/// Inner edge of the low-pass cutoff and of the first annulus.
pub const INNER: f64 = 0.75;
/// Outer edge of the low-pass cutoff.
pub const OUTER: f64 = 4.0 / 3.0;

const SUPPORT_TOL: f64 = 1e-10;

/// Samples of a real function on the periodic grid `x_j = -L + j h`,
/// `j < 2^p`, with a declared support.
#[derive(Debug, Clone)]
pub struct GridFunction {
    half_width: f64,
    log2_len: u32,
    samples: Vec<f64>,
    support: (f64, f64),
    spectrum: OnceLock<Arc<Vec<Complex<f64>>>>,
}

impl PartialEq for GridFunction {
    fn eq(&self, other: &Self) -> bool {
        self.half_width == other.half_width
            && self.log2_len == other.log2_len
            && self.samples == other.samples
            && self.support == other.support
    }
}

impl GridFunction {
    pub fn new(half_width: f64, log2_len: u32, samples: Vec<f64>, support: (f64, f64)) -> Result<Self> {
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidInput("grid half-width must be positive".into()));
        }
        if !(1..=28).contains(&log2_len) || samples.len() != 1usize << log2_len {
            return Err(Error::InvalidInput(format!("expected 2^{log2_len} samples, got {}", samples.len())));
        }
        if !(support.0 <= support.1) {
            return Err(Error::InvalidInput("support interval is reversed".into()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("grid samples must be finite".into()));
        }
        let g = Self { half_width, log2_len, samples, support, spectrum: OnceLock::new() };
        for (j, v) in g.samples.iter().enumerate() {
            let x = g.x(j);
            if (x < support.0 || x > support.1) && v.abs() >= SUPPORT_TOL {
                return Err(Error::InvalidInput(format!(
                    "value {v:e} at x = {x} lies outside the declared support [{}, {}]",
                    support.0, support.1
                )));
            }
        }
        Ok(g)
    }

    /// Samples `phi`; the declared support is `phi.support()` clipped to the grid.
    pub fn from_fn<F: TestFunction<f64> + ?Sized>(phi: &F, half_width: f64, log2_len: u32) -> Result<Self> {
        let len = 1usize << log2_len;
        let h = 2.0 * half_width / len as f64;
        let samples = (0..len).map(|j| phi.value(-half_width + j as f64 * h)).collect();
        let support =
            phi.support().map(|(a, b)| (a.max(-half_width), b.min(half_width))).unwrap_or((-half_width, half_width));
        Self::new(half_width, log2_len, samples, support)
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn log2_len(&self) -> u32 {
        self.log2_len
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn step(&self) -> f64 {
        2.0 * self.half_width / self.len() as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.step()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn declared_support(&self) -> (f64, f64) {
        self.support
    }

    /// Largest resolved angular frequency, `pi / h`.
    pub fn nyquist(&self) -> f64 {
        std::f64::consts::PI / self.step()
    }

    /// Angular frequency of DFT bin `m`.
    pub fn frequency(&self, m: usize) -> f64 {
        let len = self.len() as i64;
        let m = m as i64;
        let signed = if m <= len / 2 { m } else { m - len };
        std::f64::consts::PI * signed as f64 / self.half_width
    }

    /// Unnormalized forward DFT of the samples, computed once.
    pub fn spectrum(&self) -> &[Complex<f64>] {
        self.spectrum.get_or_init(|| {
            let mut buf: Vec<Complex<f64>> = self.samples.iter().map(|v| Complex::new(*v, 0.0)).collect();
            FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
            Arc::new(buf)
        })
    }

    /// Applies an even real multiplier `mult(|xi|)` and returns the result with
    /// full-grid support.
    pub fn apply_multiplier<M: Fn(f64) -> f64>(&self, mult: M) -> GridFunction {
        let mut buf: Vec<Complex<f64>> =
            self.spectrum().iter().enumerate().map(|(m, c)| c * mult(self.frequency(m).abs())).collect();
        let len = buf.len();
        FftPlanner::new().plan_fft_inverse(len).process(&mut buf);
        let samples = buf.iter().map(|c| c.re / len as f64).collect();
        GridFunction {
            half_width: self.half_width,
            log2_len: self.log2_len,
            samples,
            support: (-self.half_width, self.half_width),
            spectrum: OnceLock::new(),
        }
    }

    /// `(h * sum |phi_j|^2)^{1/2}`
    pub fn l2_norm(&self) -> f64 {
        (self.step() * self.samples.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    /// `((1/2pi) int w(|xi|) |phi_hat|^2)` from the DFT.
    pub fn weighted_energy<W: Fn(f64) -> f64>(&self, weight: W) -> f64 {
        let scale = self.step() / self.len() as f64;
        scale
            * self
                .spectrum()
                .iter()
                .enumerate()
                .map(|(m, c)| weight(self.frequency(m).abs()) * c.norm_sqr())
                .sum::<f64>()
    }

    pub fn is_compatible(&self, other: &GridFunction) -> bool {
        self.half_width == other.half_width && self.log2_len == other.log2_len
    }

    pub fn linear_combination(&self, a: f64, other: &GridFunction, b: f64) -> Result<GridFunction> {
        if !self.is_compatible(other) {
            return Err(Error::InvalidInput("grid functions live on different grids".into()));
        }
        let samples = self.samples.iter().zip(&other.samples).map(|(x, y)| a * x + b * y).collect();
        let support = (self.support.0.min(other.support.0), self.support.1.max(other.support.1));
        GridFunction::new(self.half_width, self.log2_len, samples, support)
    }

    fn sample_or_zero(&self, j: i64) -> f64 {
        if j < 0 || j >= self.len() as i64 {
            0.0
        } else {
            self.samples[j as usize]
        }
    }

    /// Four-point cubic Lagrange interpolation; zero off the grid.
    pub fn interpolate(&self, x: f64) -> f64 {
        let (j, t) = match self.locate(x) {
            Some(v) => v,
            None => return 0.0,
        };
        let w = [
            -t * (t - 1.0) * (t - 2.0) / 6.0,
            (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
            -(t + 1.0) * t * (t - 2.0) / 2.0,
            (t + 1.0) * t * (t - 1.0) / 6.0,
        ];
        (0..4).map(|i| w[i] * self.sample_or_zero(j - 1 + i as i64)).sum()
    }

    pub fn interpolate_derivative(&self, x: f64) -> f64 {
        let (j, t) = match self.locate(x) {
            Some(v) => v,
            None => return 0.0,
        };
        let w = [
            -(3.0 * t * t - 6.0 * t + 2.0) / 6.0,
            (3.0 * t * t - 4.0 * t - 1.0) / 2.0,
            -(3.0 * t * t - 2.0 * t - 2.0) / 2.0,
            (3.0 * t * t - 1.0) / 6.0,
        ];
        (0..4).map(|i| w[i] * self.sample_or_zero(j - 1 + i as i64)).sum::<f64>() / self.step()
    }

    fn locate(&self, x: f64) -> Option<(i64, f64)> {
        let s = (x + self.half_width) / self.step();
        if !(s >= -1.0) || s > self.len() as f64 {
            return None;
        }
        let j = s.floor();
        Some((j as i64, s - j))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["x", "value"])?;
        for (j, v) in self.samples.iter().enumerate() {
            w.serialize((self.x(j), v))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads `(x, value)` rows written by [`GridFunction::write_csv`]; the
    /// support is taken as the hull of the nonnegligible samples.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut xs = Vec::new();
        let mut vs = Vec::new();
        for row in r.deserialize() {
            let (x, v): (f64, f64) = row?;
            xs.push(x);
            vs.push(v);
        }
        let len = xs.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::InvalidInput(format!("grid CSV has {len} rows, need a power of two")));
        }
        let h = xs[1] - xs[0];
        let half_width = -xs[0];
        if !((half_width - 0.5 * h * len as f64).abs() <= 1e-9 * half_width.max(1.0)) {
            return Err(Error::InvalidInput("grid CSV is not a symmetric periodic grid".into()));
        }
        let support = support_hull(&xs, &vs, half_width);
        Self::new(half_width, len.trailing_zeros(), vs, support)
    }

    /// Header `L, support.0, support.1` (f64) and `p` (u32), then samples, all little-endian.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for v in [self.half_width, self.support.0, self.support.1] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.log2_len.to_le_bytes())?;
        for v in &self.samples {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        if bytes.len() < 28 {
            return Err(Error::InvalidInput("grid binary file is truncated".into()));
        }
        let f = |i: usize| f64::from_le_bytes(bytes[8 * i..8 * i + 8].try_into().expect("8 bytes"));
        let p = u32::from_le_bytes(bytes[24..28].try_into().expect("4 bytes"));
        let body = &bytes[28..];
        if p > 28 || body.len() != 8usize << p {
            return Err(Error::InvalidInput("grid binary file has the wrong length".into()));
        }
        let samples = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Self::new(f(0), p, samples, (f(1), f(2)))
    }
}

fn support_hull(xs: &[f64], vs: &[f64], half_width: f64) -> (f64, f64) {
    let big: Vec<usize> = (0..vs.len()).filter(|j| vs[*j].abs() >= SUPPORT_TOL).collect();
    match (big.first(), big.last()) {
        (Some(a), Some(b)) => (xs[*a], xs[*b]),
        _ => (-half_width, -half_width),
    }
}

impl TestFunction<f64> for GridFunction {
    fn value(&self, x: f64) -> f64 {
        self.interpolate(x)
    }
    fn derivative(&self, x: f64) -> f64 {
        self.interpolate_derivative(x)
    }
    fn support(&self) -> Option<(f64, f64)> {
        Some(self.support)
    }
    fn scale(&self) -> f64 {
        self.step()
    }
}

/// `C^infinity` step: 0 for `t <= 0`, 1 for `t >= 1`, built from `e^{-1/t}`.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / t).exp();
    let b = (-1.0 / (1.0 - t)).exp();
    a / (a + b)
}

/// Low-pass bump: 1 on `|xi| <= 3/4`, 0 on `|xi| >= 4/3`.
pub fn h_hat(xi: f64) -> f64 {
    1.0 - smooth_step((xi.abs() - INNER) / (OUTER - INNER))
}

/// Annular bump `h_hat(xi/2) - h_hat(xi)`, supported in `3/4 <= |xi| <= 8/3`.
pub fn omega_hat(xi: f64) -> f64 {
    h_hat(0.5 * xi) - h_hat(xi)
}

/// Multiplier of band `k`: `h_hat` for `k = -1`, `omega_hat(2^{-k} xi)` otherwise.
pub fn band_multiplier(k: i32, xi: f64) -> f64 {
    if k < 0 {
        h_hat(xi)
    } else {
        omega_hat(xi * 0.5f64.powi(k))
    }
}

/// Poisson scale of band `k`; the low band uses `eta = 2`.
pub fn band_eta(k: i32) -> f64 {
    2.0f64.powi(-k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DyadicBand {
    pub k: i32,
    pub phi_k: GridFunction,
    pub g_k: GridFunction,
    pub eta_k: f64,
}

impl DyadicBand {
    /// `P_{eta_k} * g_k`.
    pub fn smoothed(&self) -> GridFunction {
        poisson_smooth(&self.g_k, self.eta_k)
    }
}

/// Largest `k` whose annulus is resolved by the grid.
pub fn max_resolved_band(phi: &GridFunction) -> Option<usize> {
    let ratio = phi.nyquist() / (8.0 / 3.0);
    (ratio >= 1.0).then(|| ratio.log2().floor() as usize)
}

/// Bands `k = -1..=k_max`.
pub fn decompose(phi: &GridFunction, k_max: usize) -> Result<Vec<DyadicBand>> {
    let required = (8.0 / 3.0) * 2.0f64.powi(k_max as i32);
    if phi.nyquist() <= required {
        return Err(Error::GridTooCoarse { nyquist: phi.nyquist(), required });
    }
    phi.spectrum();
    Ok((-1..=k_max as i32)
        .into_par_iter()
        .map(|k| {
            let phi_k = phi.apply_multiplier(|xi| band_multiplier(k, xi));
            let mut band = DyadicBand { k, g_k: phi_k.clone(), phi_k, eta_k: band_eta(k) };
            band.g_k = poisson_deconvolve(&band);
            band
        })
        .collect())
}

/// `g_k` with `g_hat = e^{eta_k |xi|} phi_hat_k`. The multiplier is cut to the
/// band's frequency range, where it is at most `e^{8/3}`.
pub fn poisson_deconvolve(band: &DyadicBand) -> GridFunction {
    let (k, eta) = (band.k, band.eta_k);
    band.phi_k.apply_multiplier(|xi| if band_multiplier(k, xi) == 0.0 { 0.0 } else { (eta * xi).exp() })
}

pub fn poisson_smooth(g: &GridFunction, eta: f64) -> GridFunction {
    g.apply_multiplier(|xi| (-eta * xi).exp())
}

/// `sum_k P_{eta_k} * g_k`.
pub fn reconstruct(bands: &[DyadicBand]) -> Result<GridFunction> {
    let first = bands.first().ok_or_else(|| Error::InvalidInput("no bands to reconstruct".into()))?;
    let mut acc = vec![0.0; first.phi_k.len()];
    for b in bands {
        if !b.phi_k.is_compatible(&first.phi_k) {
            return Err(Error::InvalidInput("bands live on different grids".into()));
        }
        for (a, v) in acc.iter_mut().zip(b.smoothed().samples()) {
            *a += v;
        }
    }
    let hw = first.phi_k.half_width();
    GridFunction::new(hw, first.phi_k.log2_len(), acc, (-hw, hw))
}

/// `((1/2pi) int_{|xi| > cutoff} |phi_hat|^2)^{1/2}`.
pub fn fourier_tail(phi: &GridFunction, cutoff: f64) -> f64 {
    phi.weighted_energy(|xi| if xi > cutoff { 1.0 } else { 0.0 }).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub l2: f64,
    /// `((1/2pi) int (1 + xi^2)^s |phi_hat|^2)^{1/2}`
    pub sobolev_hs: f64,
    /// `int int (phi(x) - phi(y))^2 / (x - y)^2 dx dy`
    pub homogeneous_h_half_integral: f64,
    /// `sum_k 2^{2ks} ||phi_k||_2^2` over all resolved bands.
    pub band_sums: f64,
}

const MAX_DOUBLE_INTEGRAL_NODES: usize = 4096;

pub fn norms(phi: &GridFunction, s: f64) -> Result<Norms> {
    if !(s >= 0.0) {
        return Err(Error::InvalidInput("regularity exponent must be >= 0".into()));
    }
    let k_max = max_resolved_band(phi).ok_or(Error::GridTooCoarse { nyquist: phi.nyquist(), required: 8.0 / 3.0 })?;
    let band_sums = (-1..=k_max as i32)
        .map(|k| 2.0f64.powf(2.0 * k as f64 * s) * phi.weighted_energy(|xi| band_multiplier(k, xi).powi(2)))
        .sum();
    Ok(Norms {
        l2: phi.l2_norm(),
        sobolev_hs: phi.weighted_energy(|xi| (1.0 + xi * xi).powf(s)).sqrt(),
        homogeneous_h_half_integral: h_half_double_integral(phi),
        band_sums,
    })
}

/// Trapezoid rule for the `H^{1/2}` double integral over the declared support
/// `[a, b]`, with the diagonal replaced by `phi'(x)^2`; the part with `y`
/// outside the node box `[x_0, x_m]` is `2 int phi^2 (1/(x-x_0) + 1/(x_m-x))`.
pub fn h_half_double_integral(phi: &GridFunction) -> f64 {
    let (a, b) = phi.declared_support();
    let h = phi.step();
    let lo = ((a + phi.half_width()) / h).ceil().max(0.0) as usize;
    let hi = (((b + phi.half_width()) / h).floor() as usize).min(phi.len() - 1);
    if hi <= lo {
        return 0.0;
    }
    let stride = ((hi - lo) / MAX_DOUBLE_INTEGRAL_NODES).max(1);
    let idx: Vec<usize> = (lo..=hi).step_by(stride).collect();
    let xs: Vec<f64> = idx.iter().map(|j| phi.x(*j)).collect();
    let vs: Vec<f64> = idx.iter().map(|j| phi.samples()[*j]).collect();
    let ds: Vec<f64> = xs.iter().map(|x| phi.interpolate_derivative(*x)).collect();
    let hs = stride as f64 * h;
    let m = xs.len();
    let w = |i: usize| if i == 0 || i + 1 == m { 0.5 } else { 1.0 };
    let inner: f64 = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut row = w(i) * ds[i] * ds[i];
            for j in 0..m {
                if j != i {
                    let q = (vs[i] - vs[j]) / (xs[i] - xs[j]);
                    row += w(j) * q * q;
                }
            }
            w(i) * row
        })
        .sum::<f64>()
        * hs
        * hs;
    let (left, right) = (xs[0], xs[m - 1]);
    let outer: f64 = (0..m)
        .map(|i| {
            if i == 0 || i + 1 == m {
                // phi vanishes to all orders at the ends of its support.
                return 0.0;
            }
            w(i) * vs[i] * vs[i] * (1.0 / (xs[i] - left) + 1.0 / (right - xs[i]))
        })
        .sum::<f64>()
        * hs;
    inner + 2.0 * outer
}
