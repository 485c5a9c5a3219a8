//! Wigner and Gaussian ensembles: entry laws, sampling, spectra and
//! empirical statistics.
//!
//! Normalization: off-diagonal entries `h_ij = x_ij / sqrt(N)` with `x_ij`
//! standardized (mean 0, variance 1, third and fourth cumulants `s3`, `s4`);
//! diagonal entries have variance `2/N` and `kappa_k(sqrt(N) h_ii) = 2^{k-1} s_k`
//! for `k = 2, 3`, and for `k = 4` whenever a companion law with those
//! cumulants exists in the family below. The semicircle is supported on [-2, 2].

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::CumulantPair;
use crate::linalg::{symmetric_eigenvalues, tridiagonal_eigenvalues};
use crate::quad::integrate;
use crate::spectra::ComplexEnergy;
use crate::testfn::TestFunction;

/// Counter-based stream: the same `(seed, stream)` always yields the same draws.
pub fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Entry law as requested by a config, before standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EntryKind {
    Gaussian,
    Laplace,
    GaussianMixture { weights: Vec<f64>, means: Vec<f64>, scales: Vec<f64> },
}

/// Law of a standardized random variable used for the diagonal, chosen so
/// that `sqrt(2) Y` has cumulants `2, 4 s3, 8 s4` (the last when feasible).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DiagonalLaw {
    Gaussian,
    /// `p N(0, a^2) + (1 - p) N(0, b^2)`
    ScaleMixture {
        p: f64,
        a: f64,
        b: f64,
    },
    /// `(N(mu, sd^2) + N(-mu, sd^2)) / 2`
    ShiftMixture {
        mu: f64,
        sd: f64,
    },
    /// `p N(a, sd^2) + (1 - p) N(b, sd^2)`
    SkewMixture {
        p: f64,
        a: f64,
        b: f64,
        sd: f64,
    },
}

impl DiagonalLaw {
    /// Companion law with standardized skewness `skew` and excess kurtosis `kurt`.
    pub fn with_cumulants(skew: f64, kurt: f64) -> Self {
        if skew == 0.0 {
            if kurt == 0.0 {
                DiagonalLaw::Gaussian
            } else if kurt > 0.0 {
                // Symmetric scale mixture with b^2 = 1/2 solves to p = 1 / (1 + 4K/3).
                let p = 1.0 / (1.0 + 4.0 * kurt / 3.0);
                let a = ((1.0 + p) / (2.0 * p)).sqrt();
                DiagonalLaw::ScaleMixture { p, a, b: 0.5f64.sqrt() }
            } else {
                // kurtosis of +-mu with common variance 1 - mu^2 is -2 mu^4.
                let mu = (-kurt / 2.0).powf(0.25).min(1.0 - 1e-12);
                DiagonalLaw::ShiftMixture { mu, sd: (1.0 - mu * mu).sqrt() }
            }
        } else {
            // sqrt(v) X + sqrt(1 - v) Z with X a standardized two-point law of
            // skewness S2: skew = v^{3/2} S2, kurt = v^2 (S2^2 - 2) = S^2/v - 2 v^2.
            let s2 = skew * skew;
            let v = if kurt <= s2 - 2.0 {
                1.0
            } else {
                let (mut lo, mut hi) = (1e-12, 1.0);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if s2 / mid - 2.0 * mid * mid > kurt {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                hi
            };
            let sk = skew / v.powf(1.5);
            let p = 0.5 * (1.0 - sk / (sk * sk + 4.0).sqrt());
            let (a, b) = (((1.0 - p) / p).sqrt(), -(p / (1.0 - p)).sqrt());
            DiagonalLaw::SkewMixture { p, a: v.sqrt() * a, b: v.sqrt() * b, sd: (1.0 - v).max(0.0).sqrt() }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        match *self {
            DiagonalLaw::Gaussian => z,
            DiagonalLaw::ScaleMixture { p, a, b } => {
                if rng.random::<f64>() < p {
                    a * z
                } else {
                    b * z
                }
            }
            DiagonalLaw::ShiftMixture { mu, sd } => {
                if rng.random::<bool>() {
                    mu + sd * z
                } else {
                    -mu + sd * z
                }
            }
            DiagonalLaw::SkewMixture { p, a, b, sd } => {
                if rng.random::<f64>() < p {
                    a + sd * z
                } else {
                    b + sd * z
                }
            }
        }
    }

    /// `(mean, variance, third cumulant, fourth cumulant)` in closed form.
    pub fn cumulants(&self) -> (f64, f64, f64, f64) {
        match *self {
            DiagonalLaw::Gaussian => (0.0, 1.0, 0.0, 0.0),
            DiagonalLaw::ScaleMixture { p, a, b } => {
                let m2 = p * a * a + (1.0 - p) * b * b;
                let m4 = 3.0 * (p * a.powi(4) + (1.0 - p) * b.powi(4));
                (0.0, m2, 0.0, m4 - 3.0 * m2 * m2)
            }
            DiagonalLaw::ShiftMixture { mu, sd } => mixture_cumulants(&[0.5, 0.5], &[mu, -mu], &[sd, sd]),
            DiagonalLaw::SkewMixture { p, a, b, sd } => mixture_cumulants(&[p, 1.0 - p], &[a, b], &[sd, sd]),
        }
    }
}

/// Cumulants `(mean, var, k3, k4)` of a Gaussian mixture from raw moments.
pub fn mixture_cumulants(weights: &[f64], means: &[f64], scales: &[f64]) -> (f64, f64, f64, f64) {
    let mut m = [0.0; 5];
    for ((w, mu), s) in weights.iter().zip(means).zip(scales) {
        let v = s * s;
        m[1] += w * mu;
        m[2] += w * (mu * mu + v);
        m[3] += w * (mu.powi(3) + 3.0 * mu * v);
        m[4] += w * (mu.powi(4) + 6.0 * mu * mu * v + 3.0 * v * v);
    }
    let mean = m[1];
    let c2 = m[2] - mean * mean;
    let c3 = m[3] - 3.0 * mean * m[2] + 2.0 * mean.powi(3);
    let c4c = m[4] - 4.0 * mean * m[3] + 6.0 * mean * mean * m[2] - 3.0 * mean.powi(4);
    (mean, c2, c3, c4c - 3.0 * c2 * c2)
}

/// A standardized off-diagonal law with its cumulants and diagonal companion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryDistribution {
    /// Standardized parameters (for mixtures: already centred and rescaled).
    pub kind: EntryKind,
    pub s3: f64,
    pub s4: f64,
    pub diagonal: DiagonalLaw,
}

impl EntryDistribution {
    pub fn gaussian() -> Self {
        build_entry_distribution(EntryKind::Gaussian).expect("gaussian law is valid")
    }

    pub fn cumulants(&self) -> CumulantPair<f64> {
        CumulantPair { s3: self.s3, s4: self.s4 }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self.kind, EntryKind::Gaussian)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match &self.kind {
            EntryKind::Gaussian => (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            EntryKind::Laplace => {
                let r2 = std::f64::consts::SQRT_2;
                0.5 * r2 * (-r2 * x.abs()).exp()
            }
            EntryKind::GaussianMixture { weights, means, scales } => weights
                .iter()
                .zip(means)
                .zip(scales)
                .map(|((w, m), s)| {
                    let t = (x - m) / s;
                    w * (-0.5 * t * t).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
                })
                .sum(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            EntryKind::Gaussian => StandardNormal.sample(rng),
            EntryKind::Laplace => {
                let e: f64 = Exp1.sample(rng);
                let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
                s * e * std::f64::consts::FRAC_1_SQRT_2
            }
            EntryKind::GaussianMixture { weights, means, scales } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut idx = weights.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        idx = i;
                        break;
                    }
                }
                let z: f64 = StandardNormal.sample(rng);
                means[idx] + scales[idx] * z
            }
        }
    }

    /// Raw moments `E X^k`, `k = 0..=4`, by adaptive quadrature of the density.
    pub fn quadrature_moments(&self) -> Result<[f64; 5]> {
        let mut out = [0.0; 5];
        let reach = match &self.kind {
            EntryKind::GaussianMixture { means, scales, .. } => {
                means.iter().zip(scales).map(|(m, s)| m.abs() + 40.0 * s).fold(0.0, f64::max)
            }
            EntryKind::Laplace => 40.0,
            EntryKind::Gaussian => 40.0,
        };
        for (k, slot) in out.iter_mut().enumerate() {
            // Split at 0 to keep the Laplace kink on a node boundary.
            let f = |x: f64| x.powi(k as i32) * self.pdf(x);
            let left = integrate(f, -reach, 0.0, 64, 1e-14, 1e-13)?;
            let right = integrate(f, 0.0, reach, 64, 1e-14, 1e-13)?;
            *slot = left.value + right.value;
        }
        Ok(out)
    }
}

/// Standardizes the requested law. The closed-form cumulants are kept after
/// they agree with adaptive quadrature of the density.
pub fn build_entry_distribution(kind: EntryKind) -> Result<EntryDistribution> {
    let (kind, closed) = match kind {
        EntryKind::Gaussian => (EntryKind::Gaussian, (0.0, 0.0)),
        EntryKind::Laplace => (EntryKind::Laplace, (0.0, 3.0)),
        EntryKind::GaussianMixture { weights, means, scales } => {
            if weights.is_empty() || weights.len() != means.len() || weights.len() != scales.len() {
                return Err(Error::Distribution("mixture needs equally many weights, means and scales".into()));
            }
            if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite())
                || scales.iter().any(|s| !(*s > 0.0) || !s.is_finite())
            {
                return Err(Error::Distribution("mixture weights must be nonnegative and scales positive".into()));
            }
            let total: f64 = weights.iter().sum();
            if !(total > 0.0) || !total.is_finite() {
                return Err(Error::Distribution("mixture weights are not normalizable".into()));
            }
            let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
            let (mean, var, _, _) = mixture_cumulants(&weights, &means, &scales);
            if !(var > 1e-300) {
                return Err(Error::Distribution("mixture has zero variance".into()));
            }
            let sd = var.sqrt();
            let means: Vec<f64> = means.iter().map(|m| (m - mean) / sd).collect();
            let scales: Vec<f64> = scales.iter().map(|s| s / sd).collect();
            let (_, _, k3, k4) = mixture_cumulants(&weights, &means, &scales);
            (EntryKind::GaussianMixture { weights, means, scales }, (k3, k4))
        }
    };
    let mut dist = EntryDistribution { kind, s3: closed.0, s4: closed.1, diagonal: DiagonalLaw::Gaussian };
    let m = dist.quadrature_moments()?;
    if (m[0] - 1.0).abs() > 1e-10 {
        return Err(Error::Distribution(format!("density integrates to {}", m[0])));
    }
    if m[1].abs() > 1e-10 || (m[2] - 1.0).abs() > 1e-10 {
        return Err(Error::Distribution(format!("standardization failed: mean {}, variance {}", m[1], m[2])));
    }
    let s3 = m[3];
    let s4 = m[4] - 3.0;
    if (s3 - closed.0).abs() > 1e-8 || (s4 - closed.1).abs() > 1e-8 {
        return Err(Error::Distribution(format!(
            "quadrature cumulants ({s3}, {s4}) disagree with closed form ({}, {})",
            closed.0, closed.1
        )));
    }
    dist.diagonal = DiagonalLaw::with_cumulants(std::f64::consts::SQRT_2 * s3, 2.0 * s4);
    Ok(dist)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub n: usize,
    /// 1: real symmetric, 2: complex Hermitian (Gaussian entries only).
    pub beta: u8,
    pub offdiag: EntryDistribution,
    /// Gaussian-divisible mixing time: `e^{-t/2} W + sqrt(1 - e^{-t}) GOE`.
    #[serde(default)]
    pub divisible_t: f64,
}

impl EnsembleSpec {
    pub fn goe(n: usize) -> Self {
        Self { n, beta: 1, offdiag: EntryDistribution::gaussian(), divisible_t: 0.0 }
    }

    pub fn gue(n: usize) -> Self {
        Self { n, beta: 2, offdiag: EntryDistribution::gaussian(), divisible_t: 0.0 }
    }

    pub fn wigner(n: usize, offdiag: EntryDistribution) -> Self {
        Self { n, beta: 1, offdiag, divisible_t: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidInput("ensemble dimension must be positive".into()));
        }
        match self.beta {
            1 => {}
            2 if self.offdiag.is_gaussian() => {}
            2 => {
                return Err(Error::InvalidInput(
                    "complex Hermitian sampling is only supported for Gaussian entries".into(),
                ))
            }
            b => return Err(Error::InvalidInput(format!("beta must be 1 or 2, got {b}"))),
        }
        if !(self.divisible_t >= 0.0) || !self.divisible_t.is_finite() {
            return Err(Error::InvalidInput("divisible_t must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Stable FNV-1a hash of the JSON form.
    pub fn spec_id(&self) -> u64 {
        let bytes = serde_json::to_vec(self).expect("spec serializes");
        bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ *b as u64).wrapping_mul(0x0000_0100_0000_01b3))
    }

    fn is_gaussian_ensemble(&self) -> bool {
        self.offdiag.is_gaussian()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSample {
    pub eigenvalues: Vec<f64>,
    pub seed: u64,
    pub stream: u64,
    pub spec_id: u64,
}

impl SpectrumSample {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// Samples and diagonalizes one matrix; deterministic in `(spec, seed, stream)`.
/// Gaussian ensembles use the tridiagonal beta-Hermite model.
pub fn sample_spectrum(spec: &EnsembleSpec, seed: u64, stream: u64) -> Result<SpectrumSample> {
    spec.validate()?;
    let mut rng = trial_rng(seed, stream);
    let eigenvalues = if spec.is_gaussian_ensemble() {
        tridiagonal_gaussian(spec.n, spec.beta, &mut rng)?
    } else {
        symmetric_eigenvalues(dense_matrix(spec, &mut rng))?
    };
    Ok(SpectrumSample { eigenvalues, seed, stream, spec_id: spec.spec_id() })
}

/// Always uses the dense construction (real symmetric only).
pub fn sample_spectrum_dense(spec: &EnsembleSpec, seed: u64, stream: u64) -> Result<SpectrumSample> {
    spec.validate()?;
    if spec.beta != 1 {
        return Err(Error::InvalidInput("dense sampling is real symmetric only".into()));
    }
    let mut rng = trial_rng(seed, stream);
    let eigenvalues = symmetric_eigenvalues(dense_matrix(spec, &mut rng))?;
    Ok(SpectrumSample { eigenvalues, seed, stream, spec_id: spec.spec_id() })
}

/// Dense matrix of the spec (lower triangle filled and mirrored).
pub fn dense_matrix<R: Rng + ?Sized>(spec: &EnsembleSpec, rng: &mut R) -> DMatrix<f64> {
    let n = spec.n;
    let scale = 1.0 / (n as f64).sqrt();
    let diag_scale = std::f64::consts::SQRT_2 * scale;
    let mut m = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        m[(j, j)] = diag_scale * spec.offdiag.diagonal.sample(rng);
        for i in (j + 1)..n {
            let v = scale * spec.offdiag.sample(rng);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    if spec.divisible_t > 0.0 {
        let a = (-0.5 * spec.divisible_t).exp();
        let b = (1.0 - (-spec.divisible_t).exp()).sqrt();
        for j in 0..n {
            let g: f64 = StandardNormal.sample(rng);
            m[(j, j)] = a * m[(j, j)] + b * diag_scale * g;
            for i in (j + 1)..n {
                let g: f64 = StandardNormal.sample(rng);
                let v = a * m[(i, j)] + b * scale * g;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
    }
    m
}

/// The tridiagonal `(diagonal, off-diagonal)` pair whose spectrum is the one
/// `sample_spectrum` returns for the Gaussian `spec` and the same `(seed, stream)`.
pub fn gaussian_tridiagonal(spec: &EnsembleSpec, seed: u64, stream: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    spec.validate()?;
    if !spec.is_gaussian_ensemble() {
        return Err(Error::InvalidInput("the tridiagonal model needs Gaussian entries".into()));
    }
    tridiagonal_model(spec.n, spec.beta, &mut trial_rng(seed, stream))
}

fn tridiagonal_gaussian<R: Rng + ?Sized>(n: usize, beta: u8, rng: &mut R) -> Result<Vec<f64>> {
    let (d, e) = tridiagonal_model(n, beta, rng)?;
    tridiagonal_eigenvalues(&d, &e)
}

/// Dumitriu-Edelman tridiagonal model scaled so the spectrum fills [-2, 2]:
/// GOE (diagonal variance 2/N) for beta = 1, GUE (diagonal variance 1/N) for beta = 2.
fn tridiagonal_model<R: Rng + ?Sized>(n: usize, beta: u8, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
    let c = match beta {
        1 => (2.0 / n as f64).sqrt(),
        _ => (1.0 / n as f64).sqrt(),
    };
    let d: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            c * z
        })
        .collect();
    let mut e = Vec::with_capacity(n.saturating_sub(1));
    for k in 1..n {
        let dof = beta as f64 * (n - k) as f64;
        let chi2 = ChiSquared::new(dof).map_err(|err| Error::Distribution(err.to_string()))?;
        let x: f64 = chi2.sample(rng);
        e.push(c * (0.5 * x).sqrt());
    }
    Ok((d, e))
}

/// `(1/n) sum 1/(lambda_i - z)`
pub fn empirical_stieltjes(sample: &SpectrumSample, z: ComplexEnergy<f64>) -> Result<Complex<f64>> {
    if z.im == 0.0 {
        return Err(Error::BranchAmbiguity);
    }
    Ok(stieltjes_of(&sample.eigenvalues, z.to_complex()))
}

pub fn stieltjes_of(eigenvalues: &[f64], z: Complex<f64>) -> Complex<f64> {
    let s: Complex<f64> = eigenvalues.iter().map(|l| 1.0 / (Complex::new(*l, 0.0) - z)).sum();
    s / eigenvalues.len() as f64
}

/// `sum phi(lambda_i)`.
pub fn linear_statistic<F: TestFunction<f64> + ?Sized>(sample: &SpectrumSample, phi: &F) -> f64 {
    sample.eigenvalues.iter().map(|l| phi.value(*l)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SpectraSidecar {
    spec: EnsembleSpec,
    n: usize,
    count: usize,
    seeds: Vec<(u64, u64)>,
    format: String,
}

/// Writes eigenvalues as little-endian f64 rows to `path` and a JSON sidecar
/// describing the spec and `(seed, stream)` of every row to `path.json`.
pub fn save_spectra(path: &Path, spec: &EnsembleSpec, samples: &[SpectrumSample]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for s in samples {
        if s.n() != spec.n {
            return Err(Error::InvalidInput("sample dimension differs from spec".into()));
        }
        for v in &s.eigenvalues {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    let sidecar = SpectraSidecar {
        spec: spec.clone(),
        n: spec.n,
        count: samples.len(),
        seeds: samples.iter().map(|s| (s.seed, s.stream)).collect(),
        format: "f64-le-rows".into(),
    };
    let mut side = path.as_os_str().to_owned();
    side.push(".json");
    serde_json::to_writer_pretty(BufWriter::new(File::create(side)?), &sidecar)?;
    Ok(())
}

pub fn load_spectra(path: &Path) -> Result<(EnsembleSpec, Vec<SpectrumSample>)> {
    let mut side = path.as_os_str().to_owned();
    side.push(".json");
    let sidecar: SpectraSidecar = serde_json::from_reader(BufReader::new(File::open(side)?))?;
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.len() != 8 * sidecar.n * sidecar.count {
        return Err(Error::InvalidInput(format!(
            "spectra file has {} bytes, sidecar promises {} rows of {}",
            bytes.len(),
            sidecar.count,
            sidecar.n
        )));
    }
    let id = sidecar.spec.spec_id();
    let samples = bytes
        .chunks_exact(8 * sidecar.n)
        .zip(&sidecar.seeds)
        .map(|(row, (seed, stream))| SpectrumSample {
            eigenvalues: row.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk"))).collect(),
            seed: *seed,
            stream: *stream,
            spec_id: id,
        })
        .collect();
    Ok((sidecar.spec, samples))
}
