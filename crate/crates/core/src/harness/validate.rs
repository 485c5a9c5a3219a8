//! The fast invariant suite behind `wigner-lss validate`: functional identities,
//! semicircle and Stieltjes identities, the Littlewood-Paley decomposition,
//! deterministic DBM checks and the Hermite integrals. No Monte Carlo.

use std::time::Instant;

use num_complex::Complex;
use rand::Rng;
use rayon::prelude::*;

use super::experiments::{char_variance_checks, characteristic_ode_residual, density_checks, hermite_checks, Outputs};
use super::report::{Metric, Report};
use crate::bandlimits::{
    band_multiplier, decompose, h_hat, poisson_deconvolve, poisson_smooth, reconstruct, GridFunction,
};
use crate::ensembles::trial_rng;
use crate::error::Result;
use crate::functionals::{expectation_e, skewness_b, variance_v, CumulantPair};
use crate::spectra::{m_sc, msc, quantiles, semicircle_cdf, stieltjes_ratio, ComplexEnergy};
use crate::testfn::{smooth_corpus, ClosedForm, FnTest, TestFunction};

pub fn run_validate() -> Report {
    let start = Instant::now();
    let mut out = Outputs::default();
    functional_checks(&mut out);
    semicircle_checks(&mut out);
    littlewood_paley_checks(&mut out);
    out.guard("characteristic ODE residual", "dbm::characteristic", |o| {
        let r = characteristic_ode_residual()?;
        o.push(Metric::at_most("characteristic ODE residual", "dbm::characteristic", r, 1e-7, f64::NAN, None));
        Ok(())
    });
    char_variance_checks(&mut out, 2000, &[-0.8, 0.4], &[1e-2, 0.1], 0.2);
    density_checks(&mut out);
    hermite_checks(&mut out);
    let mut report = Report::new("validate", None);
    out.into_report(&mut report);
    report.wall_clock_seconds = start.elapsed().as_secs_f64();
    report
}

/// A random smooth function: cubic plus a Gaussian bump plus a cosine.
struct RandomSmooth {
    poly: [f64; 4],
    amp: f64,
    center: f64,
    width: f64,
    freq: f64,
    phase: f64,
}

impl RandomSmooth {
    fn draw(rng: &mut impl Rng) -> Self {
        let mut poly = [0.0; 4];
        for c in &mut poly {
            *c = rng.random_range(-1.0..1.0);
        }
        Self {
            poly,
            amp: rng.random_range(-2.0..2.0),
            center: rng.random_range(-1.5..1.5),
            width: rng.random_range(0.3..1.5),
            freq: rng.random_range(0.0..4.0),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
        }
    }

    fn value(&self, x: f64) -> f64 {
        let p = self.poly.iter().rev().fold(0.0, |acc, c| acc * x + c);
        let g = self.amp * (-(x - self.center).powi(2) / (2.0 * self.width * self.width)).exp();
        p + g + (self.freq * x + self.phase).cos()
    }
}

fn functional_checks(out: &mut Outputs) {
    out.guard("variance routes on the smooth corpus", "functionals::variance_v", |o| {
        let cum = CumulantPair { s3: 0.8, s4: 1.7 };
        let corpus = smooth_corpus();
        let gaps = corpus
            .par_iter()
            .map(|phi| {
                let v = variance_v(phi, cum, 64)?;
                Ok((v.via_chebyshev - v.via_quadrature).abs())
            })
            .collect::<Result<Vec<f64>>>()?;
        let worst = gaps.into_iter().fold(0.0, f64::max);
        o.push(Metric::at_most(
            &format!("variance Chebyshev vs quadrature, {} functions", corpus.len()),
            "functionals::variance_v",
            worst,
            1e-6,
            f64::NAN,
            None,
        ));
        Ok(())
    });

    out.guard("variance positivity", "functionals::variance_v", |o| {
        let draws = 500u64;
        let values = (0..draws)
            .into_par_iter()
            .map(|i| {
                let mut rng = trial_rng(0x5eed, i);
                let f = RandomSmooth::draw(&mut rng);
                let s3: f64 = rng.random_range(-3.0..3.0);
                let s4 = s3 * s3 - 2.0 + rng.random_range(0.0..4.0);
                let n = rng.random_range(4..2000usize);
                let phi = FnTest::new(move |x: f64| f.value(x));
                Ok(variance_v(&phi, CumulantPair { s3, s4 }, n)?.value)
            })
            .collect::<Result<Vec<f64>>>()?;
        let least = values.into_iter().fold(f64::INFINITY, f64::min);
        o.push(Metric::at_least(
            &format!("min V over {draws} random admissible (phi, s3, s4)"),
            "functionals::variance_v",
            least,
            -1e-12,
            f64::NAN,
            None,
        ));
        Ok(())
    });

    out.guard("parity identities", "functionals::skewness_b", |o| {
        let (s3, s4, n) = (0.9, 1.4, 50);
        let mut b_odd: f64 = 0.0;
        let mut e_flip: f64 = 0.0;
        let mut b_even: f64 = 0.0;
        for phi in smooth_corpus() {
            let reflected = FnTest::new(|x: f64| phi.value(-x));
            b_odd = b_odd.max((skewness_b(&reflected) + skewness_b(&phi)).abs());
            let e1 = expectation_e(&reflected, CumulantPair { s3, s4 }, n).value;
            let e2 = expectation_e(&phi, CumulantPair { s3: -s3, s4 }, n).value;
            e_flip = e_flip.max((e1 - e2).abs());
            let even = FnTest::new(|x: f64| phi.value(x) + phi.value(-x));
            b_even = b_even.max(skewness_b(&even).abs());
        }
        let prov = "functionals::skewness_b";
        o.push(Metric::at_most("B(phi(-x)) + B(phi)", prov, b_odd, 1e-10, f64::NAN, None));
        o.push(Metric::at_most(
            "e(phi(-x); s3) - e(phi; -s3)",
            "functionals::expectation_e",
            e_flip,
            1e-10,
            f64::NAN,
            None,
        ));
        o.push(Metric::at_most("B(even phi)", prov, b_even, 1e-10, f64::NAN, None));
        Ok(())
    });
}

fn semicircle_checks(out: &mut Outputs) {
    out.guard("m_sc identities", "spectra::m_sc", |o| {
        let mut residual: f64 = 0.0;
        let mut herglotz = true;
        for i in 0..40 {
            let re = -4.0 + 8.0 * i as f64 / 39.0;
            for j in 0..25 {
                let im = 10f64.powf(-6.0 + 7.0 * j as f64 / 24.0);
                let z = Complex::new(re, im);
                let m = m_sc(ComplexEnergy::new(re, im)?, 0)?;
                residual = residual.max((m * m + z * m + 1.0).norm() / (1.0 + z.norm() * m.norm()));
                herglotz &= m.im > 0.0 && m.norm() <= 1.0 + 1e-15;
            }
        }
        o.push(Metric::at_most(
            "m_sc quadratic residual, 1000 points",
            "spectra::m_sc",
            residual,
            1e-12,
            f64::NAN,
            None,
        ));
        let flag = if herglotz { 1.0 } else { 0.0 };
        o.push(Metric::at_least("m_sc in upper half of unit disc", "spectra::m_sc", flag, 1.0, f64::NAN, None));

        let mut worst: f64 = 0.0;
        for (a, b) in [((-1.0, 0.3), (0.5, 0.2)), ((0.2, 1e-3), (1.1, 2.0)), ((3.0, 0.5), (-2.5, 0.05))] {
            let (z, w) = (ComplexEnergy::new(a.0, a.1)?, ComplexEnergy::new(b.0, b.1)?);
            let direct = (msc(z.to_complex()) - msc(w.to_complex())) / (z.to_complex() - w.to_complex());
            let r = stieltjes_ratio(z, w)?;
            worst = worst.max((r - direct).norm() / direct.norm());
            let wc = w.conj();
            let direct = (msc(z.to_complex()) - msc(wc.to_complex())) / (z.to_complex() - wc.to_complex());
            worst = worst.max((stieltjes_ratio(z, wc)? - direct).norm() / direct.norm());
        }
        o.push(Metric::at_most(
            "stieltjes_ratio vs divided difference",
            "spectra::stieltjes_ratio",
            worst,
            1e-10,
            f64::NAN,
            None,
        ));

        let mut cdf: f64 = 0.0;
        for n in [1usize, 10, 101, 1000, 4096] {
            let q = quantiles::<f64>(n)?;
            for (i, g) in q.gamma.iter().enumerate() {
                cdf = cdf.max((semicircle_cdf(*g) - (i + 1) as f64 / n as f64).abs());
            }
        }
        o.push(Metric::at_most("quantile CDF residual", "spectra::quantiles", cdf, 1e-12, f64::NAN, None));
        Ok(())
    });
}

fn littlewood_paley_checks(out: &mut Outputs) {
    let prov = "bandlimits::decompose";
    out.guard("partition of unity", prov, |o| {
        let mut worst: f64 = 0.0;
        for k_max in [0, 3, 10] {
            let top = 1.5 * 2.0f64.powi(k_max);
            for i in 0..=4000 {
                let xi = top * i as f64 / 4000.0;
                let sum: f64 = (-1..=k_max).map(|k| band_multiplier(k, xi)).sum();
                worst = worst.max((sum - 1.0).abs());
            }
        }
        o.push(Metric::at_most("partition of unity", "bandlimits::band_multiplier", worst, 1e-12, f64::NAN, None));
        Ok(())
    });

    out.guard("Poisson round trip", prov, |o| {
        let phi = GridFunction::from_fn(&ClosedForm::Bump { center: -0.4, radius: 1.0 }, 8.0, 14)?;
        let mut worst: f64 = 0.0;
        for band in decompose(&phi, 9)? {
            let back = poisson_smooth(&poisson_deconvolve(&band), band.eta_k);
            let err = back.linear_combination(1.0, &band.phi_k, -1.0)?.l2_norm();
            worst = worst.max(err / band.phi_k.l2_norm().max(1.0));
        }
        o.push(Metric::at_most("Poisson round trip", "bandlimits::poisson_deconvolve", worst, 1e-8, f64::NAN, None));
        Ok(())
    });

    out.guard("reconstruction error", prov, |o| {
        let f = ClosedForm::Gaussian { center: 0.1, width: 0.05 };
        let phi = GridFunction::from_fn(&f, 8.0, 14)?;
        let mut worst: f64 = 0.0;
        for k_max in 0..=8usize {
            let rec = reconstruct(&decompose(&phi, k_max)?)?;
            let err = rec.linear_combination(1.0, &phi, -1.0)?.l2_norm();
            let cut = 2.0f64.powi(-(k_max as i32) - 1);
            let tail = phi.weighted_energy(|xi| (1.0 - h_hat(cut * xi)).powi(2)).sqrt();
            worst = worst.max((err - tail).abs());
        }
        o.push(Metric::at_most(
            "reconstruction error minus Fourier tail",
            "bandlimits::reconstruct",
            worst,
            1e-8,
            f64::NAN,
            None,
        ));
        Ok(())
    });

    out.guard("band sum plateau", prov, |o| {
        let ramp = 1.0 / 64.0;
        let phi = GridFunction::from_fn(&ClosedForm::SmoothIndicator { left: -0.5, right: 0.7, ramp }, 8.0, 16)?;
        let bands = decompose(&phi, 12)?;
        let terms: Vec<f64> = bands.iter().map(|b| 2.0f64.powi(b.k) * b.phi_k.l2_norm().powi(2)).collect();
        let growth = &terms[1..6];
        let (mn, mx) = growth.iter().fold((f64::MAX, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
        o.push(Metric::at_most("band terms k=0..4, max/min", prov, mx / mn, 4.0, f64::NAN, None));
        let partial: Vec<f64> = terms
            .iter()
            .scan(0.0, |acc, t| {
                *acc += t;
                Some(*acc)
            })
            .collect();
        let slope = |k: usize| partial[k] / (k + 1) as f64;
        let r = slope(5) / slope(3);
        o.push(Metric::at_least("partial-sum slope ratio k=4 vs k=2", prov, r, 0.6, f64::NAN, None));
        o.push(Metric::at_most("partial-sum slope ratio k=4 vs k=2 (upper)", prov, r, 1.6, f64::NAN, None));
        o.push(Metric::at_most("band term k=11 relative to plateau", prov, terms[12] / mn, 1e-3, f64::NAN, None));
        Ok(())
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_suite_passes() {
        let r = run_validate();
        assert!(r.passed(), "{}", r.summary());
        assert!(r.metrics.len() >= 20);
        assert_eq!(r.suite, "validate");
    }
}
