//! Semicircle law, its Stieltjes transform and related complex utilities.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, Real};

/// Spectral parameter `z = E + i eta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexEnergy<T> {
    pub re: T,
    pub im: T,
}

impl<T: Real> ComplexEnergy<T> {
    pub fn new(re: T, im: T) -> Result<Self> {
        if !re.is_finite() || !im.is_finite() {
            return Err(Error::InvalidInput(format!("complex energy must be finite, got {re} + {im}i")));
        }
        Ok(Self { re, im })
    }

    pub fn to_complex(self) -> Complex<T> {
        Complex::new(self.re, self.im)
    }

    pub fn conj(self) -> Self {
        Self { re: self.re, im: -self.im }
    }
}

impl<T: Real> From<Complex<T>> for ComplexEnergy<T> {
    fn from(z: Complex<T>) -> Self {
        Self { re: z.re, im: z.im }
    }
}

impl<T: Real> From<ComplexEnergy<T>> for Complex<T> {
    fn from(z: ComplexEnergy<T>) -> Self {
        z.to_complex()
    }
}

pub fn rho_sc<T: Real>(x: T) -> T {
    let four = lit::<T>(4.0);
    let r = four - x * x;
    if r <= T::zero() {
        T::zero()
    } else {
        r.sqrt() / (lit::<T>(2.0) * T::PI())
    }
}

pub fn semicircle_cdf<T: Real>(x: T) -> T {
    let two = lit::<T>(2.0);
    if x <= -two {
        return T::zero();
    }
    if x >= two {
        return T::one();
    }
    let half = lit::<T>(0.5);
    let v = half + x * (lit::<T>(4.0) - x * x).sqrt() / (lit::<T>(4.0) * T::PI()) + (x / two).asin() / T::PI();
    v.max(T::zero()).min(T::one())
}

/// Classical eigenvalue locations `gamma_1 < ... < gamma_n = 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemicircleQuantiles<T> {
    pub n: usize,
    pub gamma: Vec<T>,
}

impl<T: Real> SemicircleQuantiles<T> {
    /// `gamma_i` with the paper's one-based index.
    pub fn get(&self, i: usize) -> T {
        self.gamma[i - 1]
    }
}

pub fn quantiles<T: Real>(n: usize) -> Result<SemicircleQuantiles<T>> {
    if n == 0 {
        return Err(Error::InvalidInput("quantiles need n >= 1".into()));
    }
    let nn = from_usize::<T>(n);
    let mut gamma = Vec::with_capacity(n);
    for i in 1..n {
        gamma.push(semicircle_inverse_cdf(from_usize::<T>(i) / nn));
    }
    gamma.push(lit(2.0));
    Ok(SemicircleQuantiles { n, gamma })
}

/// Solves `semicircle_cdf(x) = p` by bisection down to adjacent floats.
///
/// Near either edge the CDF behaves like `(2/(3 pi)) d^{3/2}` in the distance
/// `d` to the edge, which gives a tight starting bracket.
pub fn semicircle_inverse_cdf<T: Real>(p: T) -> T {
    let two = lit::<T>(2.0);
    if p <= T::zero() {
        return -two;
    }
    if p >= T::one() {
        return two;
    }
    let (mut lo, mut hi) = (-two, two);
    let tail = p.min(T::one() - p);
    if tail < lit(0.05) {
        let d = (lit::<T>(1.5) * T::PI() * tail).powf(lit(2.0 / 3.0));
        let (a, b) = if p < lit(0.5) {
            (-two, (-two + lit::<T>(2.0) * d).min(T::zero()))
        } else {
            ((two - lit::<T>(2.0) * d).max(T::zero()), two)
        };
        if semicircle_cdf(a) <= p && semicircle_cdf(b) >= p {
            lo = a;
            hi = b;
        }
    }
    for _ in 0..256 {
        let mid = (lo + hi) * lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        if semicircle_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (flo, fhi) = (semicircle_cdf(lo), semicircle_cdf(hi));
    if (p - flo).abs() <= (fhi - p).abs() {
        lo
    } else {
        hi
    }
}

/// `sqrt(z - 2) * sqrt(z + 2)` with principal roots. This is the branch of
/// `sqrt(z^2 - 4)` that behaves like `z` at infinity on both half planes.
pub fn sqrt_z2_minus_4<T: Real>(z: Complex<T>) -> Complex<T> {
    let two = lit::<T>(2.0);
    (z - two).sqrt() * (z + two).sqrt()
}

/// Unchecked `m_sc` for internal use; `z` must be off the real axis.
#[inline]
pub fn msc<T: Real>(z: Complex<T>) -> Complex<T> {
    (-z + sqrt_z2_minus_4(z)) * lit::<T>(0.5)
}

/// Unchecked `m_sc'` from differentiating `m^2 + z m + 1 = 0`.
#[inline]
pub fn msc_prime<T: Real>(z: Complex<T>) -> Complex<T> {
    let m = msc(z);
    -m / (z + m * lit::<T>(2.0))
}

pub fn m_sc<T: Real>(z: ComplexEnergy<T>, order: u8) -> Result<Complex<T>> {
    if z.im == T::zero() {
        return Err(Error::BranchAmbiguity);
    }
    match order {
        0 => Ok(msc(z.to_complex())),
        1 => Ok(msc_prime(z.to_complex())),
        _ => Err(Error::InvalidInput(format!("m_sc supports order 0 or 1, got {order}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlParams<T> {
    pub kappa: T,
    pub psi: T,
}

pub fn control_params<T: Real>(z: ComplexEnergy<T>, n: usize) -> Result<ControlParams<T>> {
    if z.im <= T::zero() {
        return Err(Error::InvalidInput("control parameters need Im z > 0".into()));
    }
    if n == 0 {
        return Err(Error::InvalidInput("dimension must be positive".into()));
    }
    let nn = from_usize::<T>(n);
    let kappa = (z.re.abs() - lit(2.0)).abs();
    let m = msc(z.to_complex());
    let psi = (m.im / (nn * z.im)).sqrt() + T::one() / (nn * z.im);
    Ok(ControlParams { kappa, psi })
}

/// Divided difference `(m(z) - m(w)) / (z - w)` in product form.
pub fn stieltjes_ratio<T: Real>(z: ComplexEnergy<T>, w: ComplexEnergy<T>) -> Result<Complex<T>> {
    if z.im == T::zero() || w.im == T::zero() {
        return Err(Error::BranchAmbiguity);
    }
    Ok(ratio(z.to_complex(), w.to_complex()))
}

#[inline]
pub fn ratio<T: Real>(z: Complex<T>, w: Complex<T>) -> Complex<T> {
    let p = msc(z) * msc(w);
    p / (Complex::new(T::one(), T::zero()) - p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ce(re: f64, im: f64) -> ComplexEnergy<f64> {
        ComplexEnergy::new(re, im).unwrap()
    }

    // Composite Simpson on the density, independent of the closed form.
    fn cdf_by_quadrature(x: f64) -> f64 {
        let steps = 200_000;
        // u = asin(t/2) removes the edge square root.
        let (a, b) = (-std::f64::consts::FRAC_PI_2, (x / 2.0).asin());
        let h = (b - a) / steps as f64;
        let f = |u: f64| {
            let t = 2.0 * u.sin();
            rho_sc(t) * 2.0 * u.cos()
        };
        let mut s = f(a) + f(b);
        for k in 1..steps {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + h * k as f64);
        }
        s * h / 3.0
    }

    #[test]
    fn density_values() {
        assert_relative_eq!(rho_sc(0.0), 1.0 / std::f64::consts::PI, epsilon = 1e-15);
        assert_eq!(rho_sc(2.0), 0.0);
        assert_eq!(rho_sc(-2.0), 0.0);
        assert_eq!(rho_sc(3.5), 0.0);
        assert_relative_eq!(rho_sc(1.0), 0.275_664_447_710_896_8, epsilon = 1e-12);
    }

    #[test]
    fn cdf_matches_quadrature() {
        assert_eq!(semicircle_cdf(0.0), 0.5);
        assert_eq!(semicircle_cdf(2.0), 1.0);
        assert_eq!(semicircle_cdf(-7.0), 0.0);
        for &x in &[-1.7, -0.3, 1.0, 1.95] {
            assert_relative_eq!(semicircle_cdf(x), cdf_by_quadrature(x), epsilon = 1e-10);
        }
        assert!((semicircle_cdf(1.0f64) - 0.80450).abs() < 5e-6);
    }

    #[test]
    fn cdf_derivative_is_density() {
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let mut x: f64 = -1.9;
        while x <= 1.9 {
            let fd: f64 = (semicircle_cdf(x + h) - semicircle_cdf(x - h)) / (2.0 * h);
            worst = worst.max((fd - rho_sc(x)).abs());
            x += 0.01;
        }
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn quantiles_small_cases() {
        let q = quantiles::<f64>(2).unwrap();
        assert_eq!(q.gamma.len(), 2);
        assert!(q.get(1).abs() < 1e-14);
        assert_eq!(q.get(2), 2.0);

        // Independent oracle: bisection on the quadrature CDF.
        let (mut lo, mut hi) = (-2.0, 0.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if cdf_by_quadrature(mid) < 0.25 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let q4 = quantiles::<f64>(4).unwrap();
        assert_relative_eq!(q4.get(1), lo, epsilon = 1e-8);
        assert!((q4.get(1) + 0.807_945_506_6).abs() < 1e-9);
        assert!(q4.get(2).abs() < 1e-14);
    }

    #[test]
    fn quantiles_residual_and_order() {
        for &n in &[1usize, 3, 10, 101, 1000] {
            let q = quantiles::<f64>(n).unwrap();
            assert_eq!(q.gamma[n - 1], 2.0);
            for (i, g) in q.gamma.iter().enumerate() {
                let r = (semicircle_cdf(*g) - (i + 1) as f64 / n as f64).abs();
                assert!(r < 1e-12, "n={n} i={i} residual {r}");
            }
            assert!(q.gamma.windows(2).all(|w| w[0] < w[1]));
            if n % 2 == 0 {
                assert!(q.get(n / 2).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn quantile_counting_approaches_cdf() {
        let x = 0.7;
        let err = |n: usize| {
            let q = quantiles::<f64>(n).unwrap();
            let count = q.gamma.iter().filter(|g| **g <= x).count();
            (count as f64 / n as f64 - semicircle_cdf(x)).abs()
        };
        assert!(err(1000) <= 1.0 / 1000.0);
        assert!(err(10) <= 0.1);
    }

    #[test]
    fn msc_at_i() {
        let m = m_sc(ce(0.0, 1.0), 0).unwrap();
        assert!(m.re.abs() < 1e-15);
        assert_relative_eq!(m.im, (5f64.sqrt() - 1.0) / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn msc_rejects_real_axis() {
        assert!(matches!(m_sc(ce(0.3, 0.0), 0), Err(Error::BranchAmbiguity)));
        assert!(m_sc(ce(0.3, 0.1), 2).is_err());
        assert!(ComplexEnergy::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn msc_derivative_matches_finite_difference() {
        let z = Complex::new(1.0, 0.5);
        let h = 1e-5;
        let fd = (msc(z + h) - msc(z - h)) / (2.0 * h);
        let d = m_sc(ce(1.0, 0.5), 1).unwrap();
        assert!((fd - d).norm() < 1e-6);
    }

    #[test]
    fn msc_single_precision() {
        let m: Complex<f32> = m_sc(ComplexEnergy::new(0.0f32, 1.0).unwrap(), 0).unwrap();
        assert!((m.im - 0.618_034).abs() < 1e-6);
    }

    #[test]
    fn control_params_values() {
        let c = control_params(ce(1.5, 0.1), 100).unwrap();
        assert_relative_eq!(c.kappa, 0.5, epsilon = 1e-15);
        let c = control_params(ce(0.0, 1.0), 100).unwrap();
        let m = (5f64.sqrt() - 1.0) / 2.0;
        assert_relative_eq!(c.psi, (m / 100.0).sqrt() + 0.01, epsilon = 1e-14);
        assert!(control_params(ce(0.0, -1.0), 100).is_err());
    }

    #[test]
    fn ratio_matches_quotient() {
        let (z, w) = (ce(0.0, 1.0), ce(0.0, 2.0));
        let r = stieltjes_ratio(z, w).unwrap();
        let q = (msc(z.to_complex()) - msc(w.to_complex())) / (z.to_complex() - w.to_complex());
        assert!((r - q).norm() < 1e-10);
        let same = stieltjes_ratio(z, z).unwrap();
        assert!((same - msc_prime(z.to_complex())).norm() < 1e-14);
    }

    proptest! {
        #[test]
        fn msc_herglotz_and_residual(re in -5.0f64..5.0, im in 1e-4f64..5.0) {
            let z = Complex::new(re, im);
            let m = msc(z);
            prop_assert!(m.im > 0.0);
            prop_assert!(m.norm() <= 1.0 + 1e-12);
            prop_assert!((m * m + z * m + 1.0).norm() < 1e-12);
            let mc = msc(z.conj());
            prop_assert!((mc - m.conj()).norm() < 1e-14);
        }

        #[test]
        fn ratio_forms_agree(a in -3.0f64..3.0, b in 0.05f64..3.0, c in -3.0f64..3.0, d in -3.0f64..3.0) {
            prop_assume!(d.abs() > 0.05);
            let z = Complex::new(a, b);
            let w = Complex::new(c, d);
            prop_assume!((z - w).norm() > 1e-4);
            let r = ratio(z, w);
            let q = (msc(z) - msc(w)) / (z - w);
            prop_assert!((r - q).norm() < 1e-10 * (1.0 + q.norm()));
            prop_assert!((r - ratio(w, z)).norm() < 1e-14 * (1.0 + r.norm()));
        }

        #[test]
        fn psi_dominates_inverse_scale(re in -4.0f64..4.0, im in 1e-3f64..3.0, n in 1usize..5000) {
            let c = control_params(ce(re, im), n).unwrap();
            prop_assert!(c.psi >= 1.0 / (n as f64 * im));
            prop_assert!(c.kappa >= 0.0);
        }

        #[test]
        fn cdf_monotone(x in -2.5f64..2.5, dx in 0.0f64..1.0) {
            prop_assert!(semicircle_cdf(x + dx) >= semicircle_cdf(x));
        }
    }
}
