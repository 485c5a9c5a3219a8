//! Fluctuation functionals of linear statistics: the limiting variance `V`,
//! the expectation correction `e`, the skewness `B`, the predicted
//! characteristic function and the leading resolvent covariance kernel `F`.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{arcsine_integral, chebyshev_angles};
use crate::scalar::{from_usize, lit, to_f64, Real};
use crate::spectra::{msc, msc_prime, ComplexEnergy};
use crate::testfn::TestFunction;

/// Third and fourth cumulants of the standardized off-diagonal entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulantPair<T = f64> {
    pub s3: T,
    pub s4: T,
}

impl<T: Real> CumulantPair<T> {
    pub fn gaussian() -> Self {
        Self { s3: T::zero(), s4: T::zero() }
    }

    /// `s4 >= s3^2 - 2`, satisfied by every centered law with unit variance.
    pub fn is_admissible(&self) -> bool {
        self.s4 >= self.s3 * self.s3 - lit(2.0)
    }

    fn skew_weight(&self, n: usize) -> T {
        self.s3 / from_usize::<T>(n).sqrt()
    }
}

/// Coefficients of `phi(2 cos theta) = c_0/2 + sum_{k>=1} c_k cos(k theta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevSeries<T = f64> {
    pub coeffs: Vec<T>,
}

impl<T: Real> ChebyshevSeries<T> {
    pub fn get(&self, k: usize) -> T {
        self.coeffs.get(k).copied().unwrap_or_else(T::zero)
    }

    /// Evaluates the truncated series at angle `theta`.
    pub fn eval(&self, theta: T) -> T {
        let mut s = self.get(0) * lit(0.5);
        for (k, c) in self.coeffs.iter().enumerate().skip(1) {
            s = s + *c * (from_usize::<T>(k) * theta).cos();
        }
        s
    }

    /// `1/2 sum k c_k^2`, the Gaussian part of the variance.
    pub fn h_half_energy(&self) -> T {
        self.coeffs.iter().enumerate().skip(1).fold(T::zero(), |acc, (k, c)| acc + from_usize::<T>(k) * *c * *c)
            * lit(0.5)
    }
}

/// `c_k = (1/pi) int_{-pi}^{pi} phi(2 cos theta) cos(k theta) d theta` for
/// `k = 0..=K`, by a cosine transform on `max(8K, 64)` midpoint nodes.
pub fn chebyshev_coeffs<T: Real, F: TestFunction<T> + ?Sized>(phi: &F, k_max: usize) -> Result<ChebyshevSeries<T>> {
    if k_max < 1 {
        return Err(Error::InvalidInput("Chebyshev series needs K >= 1".into()));
    }
    let m = (8 * k_max).max(64);
    let angles = chebyshev_angles::<T>(m);
    let values: Vec<T> = angles.iter().map(|t| phi.value(lit::<T>(2.0) * t.cos())).collect();
    let scale = lit::<T>(2.0) / from_usize::<T>(m);
    let coeffs = (0..=k_max)
        .map(|k| {
            let kk = from_usize::<T>(k);
            angles.iter().zip(&values).fold(T::zero(), |acc, (t, v)| acc + *v * (kk * *t).cos()) * scale
        })
        .collect();
    Ok(ChebyshevSeries { coeffs })
}

/// Chebyshev series with enough terms that the tail is negligible.
fn converged_series<T: Real, F: TestFunction<T> + ?Sized>(phi: &F) -> Result<ChebyshevSeries<T>> {
    let mut k = 32;
    loop {
        let s = chebyshev_coeffs(phi, k)?;
        let head = s.coeffs.iter().fold(T::zero(), |a, c| a.max(c.abs()));
        let tail = s.coeffs[k / 2..].iter().fold(T::zero(), |a, c| a.max(c.abs()));
        if tail <= T::epsilon() * lit(64.0) * head.max(T::one()) {
            return Ok(s);
        }
        if k >= 8192 {
            return Err(Error::NonConvergence { what: "Chebyshev coefficients", achieved: to_f64(tail) });
        }
        k *= 2;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceV<T = f64> {
    pub value: T,
    pub via_chebyshev: T,
    pub via_quadrature: T,
}

/// Variance from the Chebyshev coefficients:
/// `1/2 sum k c_k^2 + (s4/2) c_2^2 + 2 s3 N^{-1/2} c_1 c_2`.
pub fn variance_from_series<T: Real>(c: &ChebyshevSeries<T>, cum: CumulantPair<T>, n: usize) -> T {
    let (c1, c2) = (c.get(1), c.get(2));
    c.h_half_energy() + cum.s4 * lit(0.5) * c2 * c2 + lit::<T>(2.0) * cum.skew_weight(n) * c1 * c2
}

pub fn variance_chebyshev<T: Real, F: TestFunction<T> + ?Sized>(phi: &F, cum: CumulantPair<T>, n: usize) -> Result<T> {
    Ok(variance_from_series(&converged_series(phi)?, cum, n))
}

/// The double-integral definition of `V`, evaluated after `x = 2 cos theta`,
/// `u = 2 cos omega` on a tensor midpoint grid, with the diagonal sampled at
/// the divided-difference limit `phi'(x)^2`. The grid doubles until the value
/// moves by less than `1e-6 (1 + |V|)`.
pub fn variance_quadrature<T: Real, F: TestFunction<T> + ?Sized>(phi: &F, cum: CumulantPair<T>, n: usize) -> Result<T> {
    let tol = lit::<T>(1e-6).max(T::epsilon() * lit(1e3));
    let mut m = 64;
    let mut prev = variance_quadrature_fixed(phi, cum, n, m);
    loop {
        m *= 2;
        let next = variance_quadrature_fixed(phi, cum, n, m);
        let change = (next - prev).abs();
        if change < tol * (T::one() + next.abs()) {
            return Ok(next);
        }
        if m >= 4096 {
            return Err(Error::NonConvergence { what: "double-integral variance", achieved: to_f64(change) });
        }
        prev = next;
    }
}

fn variance_quadrature_fixed<T: Real, F: TestFunction<T> + ?Sized>(
    phi: &F,
    cum: CumulantPair<T>,
    n: usize,
    m: usize,
) -> T {
    let two = lit::<T>(2.0);
    let angles = chebyshev_angles::<T>(m);
    let cosines: Vec<T> = angles.iter().map(|t| t.cos()).collect();
    let xs: Vec<T> = cosines.iter().map(|c| two * *c).collect();
    let values: Vec<T> = xs.iter().map(|x| phi.value(*x)).collect();
    let derivs: Vec<T> = xs.iter().map(|x| phi.derivative(*x)).collect();
    // Integrand in (theta, omega): D^2 (4 - x u), with dx/sqrt(4-x^2) = d theta.
    let mut off = T::zero();
    let mut diag = T::zero();
    for i in 0..m {
        diag = diag + derivs[i] * derivs[i] * (lit::<T>(4.0) - xs[i] * xs[i]);
        for j in 0..i {
            let d = (values[i] - values[j]) / (xs[i] - xs[j]);
            off = off + d * d * (lit::<T>(4.0) - xs[i] * xs[j]);
        }
    }
    let h = T::PI() / from_usize::<T>(m);
    let pi2 = T::PI() * T::PI();
    let gaussian_part = (diag + off * two) * h * h / (two * pi2);

    let w2 = arcsine_integral(m, |x: T| phi.value(x) * (two - x * x));
    let w1 = arcsine_integral(m, |x: T| phi.value(x) * x);
    gaussian_part + cum.s4 / (two * pi2) * w2 * w2 - two * cum.skew_weight(n) / pi2 * w2 * w1
}

pub fn variance_v<T: Real, F: TestFunction<T> + ?Sized>(
    phi: &F,
    cum: CumulantPair<T>,
    n: usize,
) -> Result<VarianceV<T>> {
    let via_chebyshev = variance_chebyshev(phi, cum, n)?;
    let via_quadrature = variance_quadrature(phi, cum, n)?;
    Ok(VarianceV { value: via_chebyshev, via_chebyshev, via_quadrature })
}

/// Arcsine-weighted integral with doubling until the change is at round-off.
fn weighted_integral<T: Real>(mut f: impl FnMut(T) -> T) -> T {
    let mut m = 64;
    let mut prev = arcsine_integral(m, &mut f);
    while m < 1 << 16 {
        m *= 2;
        let next = arcsine_integral(m, &mut f);
        if (next - prev).abs() <= T::epsilon() * lit(16.0) * (T::one() + next.abs()) {
            return next;
        }
        prev = next;
    }
    prev
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectationE<T = f64> {
    pub value: T,
    pub e1: T,
    pub e2: T,
}

/// `e = e1 + e2` with
/// `e1 = -(1/2pi) int phi/sqrt(4-x^2) + (phi(2) + phi(-2))/4` and
/// `e2 = (s4/2pi) int phi (x^4 - 4x^2 + 2)/sqrt(4-x^2) + (2 s3/(pi sqrt N)) int phi (x^3 - 3x)/sqrt(4-x^2)`.
pub fn expectation_e<T: Real, F: TestFunction<T> + ?Sized>(phi: &F, cum: CumulantPair<T>, n: usize) -> ExpectationE<T> {
    let (two, four) = (lit::<T>(2.0), lit::<T>(4.0));
    let pi = T::PI();
    let e1 = -weighted_integral(|x: T| phi.value(x)) / (two * pi) + (phi.value(two) + phi.value(-two)) / four;
    let quartic = weighted_integral(|x: T| {
        let x2 = x * x;
        phi.value(x) * (x2 * x2 - four * x2 + two)
    });
    let cubic = weighted_integral(|x: T| phi.value(x) * (x * x * x - lit::<T>(3.0) * x));
    let e2 = cum.s4 / (two * pi) * quartic + two * cum.skew_weight(n) / pi * cubic;
    ExpectationE { value: e1 + e2, e1, e2 }
}

/// `B = -(1/(12 pi^3)) (int phi(x) x / sqrt(4-x^2) dx)^3`.
pub fn skewness_b<T: Real, F: TestFunction<T> + ?Sized>(phi: &F) -> T {
    let w = weighted_integral(|x: T| phi.value(x) * x);
    let pi = T::PI();
    -(w * w * w) / (lit::<T>(12.0) * pi * pi * pi)
}

/// `exp(-xi^2 V / 2 + i xi^3 s3 N^{-1/2} B)` given precomputed `V` and `B`.
pub fn cf_from_parts<T: Real>(v: T, b: T, cum: CumulantPair<T>, n: usize, xi: T) -> Complex<T> {
    let re = -xi * xi * v * lit(0.5);
    let im = xi * xi * xi * cum.skew_weight(n) * b;
    Complex::new(re, im).exp()
}

pub fn predicted_cf<T: Real, F: TestFunction<T> + ?Sized>(
    phi: &F,
    cum: CumulantPair<T>,
    n: usize,
    xi: T,
) -> Result<Complex<T>> {
    let v = variance_chebyshev(phi, cum, n)?;
    Ok(cf_from_parts(v, skewness_b(phi), cum, n, xi))
}

fn f_kernel<T: Real>(z: Complex<T>, w: Complex<T>, cum: CumulantPair<T>, n: usize) -> Complex<T> {
    let two = lit::<T>(2.0);
    let (mz, mw) = (msc(z), msc(w));
    let (dz, dw) = (msc_prime(z), msc_prime(w));
    let one = Complex::new(T::one(), T::zero());
    let q = one - mz * mw;
    dz * dw * two / (q * q) - dz * dw * (mz + mw) * (lit::<T>(4.0) * cum.skew_weight(n))
        + dw * mw * dz * mz * (two * cum.s4)
}

/// Leading term of `Cov(tr G(z), tr G(w))`:
/// `2 m'(z) m'(w) / (1 - m(z) m(w))^2 - 4 s3 N^{-1/2} m'(z) m'(w) (m(z) + m(w)) + 2 s4 m'(z) m(z) m'(w) m(w)`.
pub fn cov_kernel_f<T: Real>(
    z: ComplexEnergy<T>,
    w: ComplexEnergy<T>,
    cum: CumulantPair<T>,
    n: usize,
) -> Result<Complex<T>> {
    if z.im == T::zero() || w.im == T::zero() {
        return Err(Error::BranchAmbiguity);
    }
    Ok(f_kernel(z.to_complex(), w.to_complex(), cum, n))
}

/// Leading prediction for `Cov(Im tr G(z), Im tr G(w)) = N^2 Cov(Im m_N(z), Im m_N(w))`,
/// from `Im a Im b = Re(a conj(b) - a b) / 2`.
pub fn im_covariance<T: Real>(z: ComplexEnergy<T>, w: ComplexEnergy<T>, cum: CumulantPair<T>, n: usize) -> Result<T> {
    let f_conj = cov_kernel_f(z, w.conj(), cum, n)?;
    let f = cov_kernel_f(z, w, cum, n)?;
    Ok((f_conj - f).re * lit(0.5))
}

/// `sqrt(kappa(x) + y) sqrt(kappa(u) + v) (y^2 + v^2)` for `z = x + iy`,
/// `w = u + iv`; `|F(z, w)|` is bounded by a constant over this.
pub fn f_envelope<T: Real>(z: ComplexEnergy<T>, w: ComplexEnergy<T>) -> T {
    let kappa = |e: T| (e.abs() - lit(2.0)).abs();
    let (y, v) = (z.im.abs(), w.im.abs());
    (kappa(z.re) + y).sqrt() * (kappa(w.re) + v).sqrt() * (y * y + v * v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testfn::{smooth_corpus, ClosedForm, FnTest};
    use proptest::prelude::*;

    fn cum(s3: f64, s4: f64) -> CumulantPair<f64> {
        CumulantPair { s3, s4 }
    }

    #[test]
    fn chebyshev_of_monomials() {
        let c = chebyshev_coeffs(&ClosedForm::<f64>::identity(), 6).unwrap();
        assert!((c.get(1) - 2.0).abs() < 1e-14);
        for k in [0, 2, 3, 4, 5, 6] {
            assert!(c.get(k).abs() < 1e-14);
        }
        let c = chebyshev_coeffs(&ClosedForm::<f64>::square(), 6).unwrap();
        assert!((c.get(0) - 4.0).abs() < 1e-14);
        assert!((c.get(2) - 2.0).abs() < 1e-14);
        for k in [1, 3, 4, 5, 6] {
            assert!(c.get(k).abs() < 1e-14);
        }
    }

    #[test]
    fn chebyshev_round_trip() {
        let phi = ClosedForm::<f64>::Gaussian { center: 0.3, width: 0.7 };
        let c = chebyshev_coeffs(&phi, 64).unwrap();
        for j in 0..50 {
            let t = 0.0631 * j as f64;
            assert!((c.eval(t) - phi.value(2.0 * t.cos())).abs() < 1e-8);
        }
    }

    #[test]
    fn variance_of_monomials() {
        let v = variance_v(&ClosedForm::<f64>::identity(), cum(0.0, 0.0), 100).unwrap();
        assert!((v.value - 2.0).abs() < 1e-12);
        assert!((v.via_quadrature - 2.0).abs() < 1e-9);
        for (s3, s4) in [(0.0, 0.0), (0.0, 3.0), (1.2, 0.5), (-0.7, -1.0)] {
            let v = variance_v(&ClosedForm::<f64>::square(), cum(s3, s4), 50).unwrap();
            assert!((v.value - (4.0 + 2.0 * s4)).abs() < 1e-12);
            assert!((v.via_quadrature - (4.0 + 2.0 * s4)).abs() < 1e-8);
        }
    }

    // Var tr(aH + bH^2) from entry moments: Var tr H = 2, Var tr H^2 = 4 + 2 s4
    // to leading order, Cov(tr H, tr H^2) = 2 sum_i E H_ii^3 = 4 s3 / sqrt N.
    #[test]
    fn variance_cross_term_sign() {
        let (a, b, s3, s4, n) = (0.7, -1.3, 0.9, 1.1, 40);
        let phi = ClosedForm::<f64>::poly(&[0.0, a, b]);
        let moments = a * a * 2.0 + b * b * (4.0 + 2.0 * s4) + 2.0 * a * b * 4.0 * s3 / (n as f64).sqrt();
        let v = variance_v(&phi, cum(s3, s4), n).unwrap();
        assert!((v.via_chebyshev - moments).abs() < 1e-12);
        assert!((v.via_quadrature - moments).abs() < 1e-8);
    }

    #[test]
    fn corpus_routes_agree() {
        let c = cum(0.8, 1.7);
        for phi in smooth_corpus() {
            let v = variance_v(&phi, c, 64).unwrap();
            let gap = (v.via_chebyshev - v.via_quadrature).abs();
            assert!(gap <= 1e-6 * (1.0 + v.value.abs()), "{phi:?}: {gap}");
        }
    }

    #[test]
    fn s4_integral_equals_c2_term() {
        for phi in smooth_corpus() {
            let c = chebyshev_coeffs(&phi, 64).unwrap();
            let w = weighted_integral(|x: f64| phi.value(x) * (2.0 - x * x));
            let lhs = w * w / (2.0 * std::f64::consts::PI.powi(2));
            assert!((lhs - 0.5 * c.get(2).powi(2)).abs() < 1e-8);
        }
    }

    #[test]
    fn expectation_examples() {
        for (s3, s4) in [(0.0, 0.0), (0.5, 2.0), (-1.0, 0.3)] {
            let c = cum(s3, s4);
            let e = expectation_e(&ClosedForm::<f64>::poly(&[3.5]), c, 100);
            assert!(e.value.abs() < 1e-12);
            let e = expectation_e(&ClosedForm::<f64>::identity(), c, 100);
            assert!(e.value.abs() < 1e-12);
            let e = expectation_e(&ClosedForm::<f64>::square(), c, 100);
            assert!((e.value - 1.0).abs() < 1e-12);
        }
    }

    // E tr H^3 = sum_i E H_ii^3 = 4 s3 / sqrt N, and N int x^3 rho_sc = 0.
    #[test]
    fn expectation_of_cube_matches_moment() {
        let (s3, n) = (1.3, 49);
        let e = expectation_e(&ClosedForm::<f64>::poly(&[0.0, 0.0, 0.0, 1.0]), cum(s3, 0.4), n);
        assert!((e.value - 4.0 * s3 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn skewness_values() {
        let b = skewness_b(&ClosedForm::<f64>::identity());
        assert!((b + 2.0 / 3.0).abs() < 1e-12);
        let b2 = skewness_b(&ClosedForm::<f64>::poly(&[0.0, 2.0]));
        assert!((b2 - 8.0 * b).abs() < 1e-12);
        assert!(skewness_b(&ClosedForm::<f64>::square()).abs() < 1e-14);
    }

    #[test]
    fn cf_properties() {
        let phi = ClosedForm::<f64>::Gaussian { center: 0.1, width: 0.8 };
        let c = cum(0.9, 0.4);
        assert!((predicted_cf(&phi, c, 100, 0.0).unwrap() - 1.0).norm() < 1e-15);
        let v = variance_chebyshev(&phi, c, 100).unwrap();
        for xi in [-3.0, -0.5, 1.0, 2.0] {
            let p = predicted_cf(&phi, c, 100, xi).unwrap();
            assert!((p.norm() - (-xi * xi * v / 2.0).exp()).abs() < 1e-14);
            let g = predicted_cf(&phi, cum(0.0, 0.4), 100, xi).unwrap();
            assert_eq!(g.im, 0.0);
        }
    }

    #[test]
    fn f_reduces_to_gaussian_term() {
        let z = ComplexEnergy::new(0.3, 0.05).unwrap();
        let w = ComplexEnergy::new(-0.2, 0.07).unwrap();
        let f = cov_kernel_f(z, w, cum(0.0, 0.0), 10).unwrap();
        let (mz, mw) = (msc(z.to_complex()), msc(w.to_complex()));
        let want = 2.0 * msc_prime(z.to_complex()) * msc_prime(w.to_complex()) / (1.0 - mz * mw).powi(2);
        assert!((f - want).norm() < 1e-12 * want.norm());
        assert!(cov_kernel_f(ComplexEnergy::new(0.3, 0.0).unwrap(), w, cum(0.0, 0.0), 10).is_err());
    }

    #[test]
    fn f_envelope_bound_on_bulk_grid() {
        let c = cum(1.0, 2.0);
        let mut worst: f64 = 0.0;
        for &x in &[-1.8, -1.0, 0.0, 0.7, 1.5] {
            for &u in &[-1.5, -0.2, 0.4, 1.9] {
                for &y in &[1e-3, 1e-2, 0.1, 1.0] {
                    for &v in &[1e-3, 3e-2, 0.5] {
                        let (z, w) = (ComplexEnergy::new(x, y).unwrap(), ComplexEnergy::new(u, v).unwrap());
                        let f = cov_kernel_f(z, w, c, 100).unwrap();
                        worst = worst.max(f.norm() * f_envelope(z, w));
                    }
                }
            }
        }
        assert!(worst <= 10.0, "{worst}");
    }

    #[test]
    fn single_precision_functionals() {
        let phi = ClosedForm::<f32>::square();
        let v = variance_chebyshev(&phi, CumulantPair { s3: 0.0f32, s4: 3.0 }, 300).unwrap();
        assert!((v - 10.0).abs() < 1e-4);
        assert!((skewness_b(&ClosedForm::<f32>::identity()) + 2.0 / 3.0).abs() < 1e-5);
    }

    #[test]
    fn closure_test_functions() {
        let phi = FnTest::with_derivative(|x: f64| x.sin(), |x: f64| x.cos());
        let v = variance_v(&phi, cum(0.0, 0.0), 10).unwrap();
        assert!((v.via_chebyshev - v.via_quadrature).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn variance_is_positive(
            a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0,
            freq in 0.2f64..4.0, s3 in -3.0f64..3.0, slack in 0.0f64..5.0, n in 4usize..1000
        ) {
            let s4 = s3 * s3 - 2.0 + slack;
            let phi = ClosedForm::poly(&[0.0, a, b, c]).times(ClosedForm::Cosine { frequency: freq, phase: 0.2 });
            let v = variance_chebyshev(&phi, cum(s3, s4), n).unwrap();
            prop_assert!(v >= -1e-12);
        }

        #[test]
        fn f_symmetric(x in -1.9f64..1.9, y in 1e-3f64..1.0, u in -1.9f64..1.9, v in -1.0f64..1.0) {
            prop_assume!(v.abs() > 1e-3);
            let z = ComplexEnergy::new(x, y).unwrap();
            let w = ComplexEnergy::new(u, v).unwrap();
            let c = cum(0.7, -0.4);
            let a = cov_kernel_f(z, w, c, 30).unwrap();
            let b = cov_kernel_f(w, z, c, 30).unwrap();
            prop_assert!((a - b).norm() <= 1e-12 * (1.0 + a.norm()));
        }

        #[test]
        fn parity_identities(shift in 0.1f64..1.5, width in 0.3f64..2.0, s3 in -2.0f64..2.0, s4 in -1.0f64..4.0) {
            // Even function: B and the s3 pieces of V and e vanish.
            let even = ClosedForm::Gaussian { center: 0.0, width }
                .times(ClosedForm::Cosine { frequency: shift, phase: 0.0 });
            prop_assert!(skewness_b(&even).abs() < 1e-10);
            let with = variance_chebyshev(&even, cum(s3, s4), 16).unwrap();
            let without = variance_chebyshev(&even, cum(0.0, s4), 16).unwrap();
            prop_assert!((with - without).abs() < 1e-10);
            // Odd function: e vanishes except for the s3 term.
            let odd = ClosedForm::Gaussian { center: 0.0, width }
                .times(ClosedForm::Cosine { frequency: shift, phase: -std::f64::consts::FRAC_PI_2 });
            let e = expectation_e(&odd, cum(0.0, s4), 16);
            prop_assert!(e.value.abs() < 1e-10);
        }
    }
}
