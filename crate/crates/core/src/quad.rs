//! Quadrature rules: Chebyshev-Gauss for the arcsine weight on [-2, 2],
//! adaptive Gauss-Kronrod, and composite Simpson weights.

use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, Real};

/// Approximates `int_{-2}^{2} f(x) / sqrt(4 - x^2) dx` with `m` Chebyshev-Gauss
/// nodes `x_j = 2 cos((j - 1/2) pi / m)`, exact for polynomials of degree < 2m.
pub fn arcsine_integral<T: Real>(m: usize, mut f: impl FnMut(T) -> T) -> T {
    let mm = from_usize::<T>(m);
    let mut s = T::zero();
    for j in 0..m {
        let theta = (from_usize::<T>(j) + lit(0.5)) * T::PI() / mm;
        s = s + f(lit::<T>(2.0) * theta.cos());
    }
    s * T::PI() / mm
}

/// Midpoint angles `theta_j = (j - 1/2) pi / m`, `j = 1..m`.
pub fn chebyshev_angles<T: Real>(m: usize) -> Vec<T> {
    let mm = from_usize::<T>(m);
    (0..m).map(|j| (from_usize::<T>(j) + lit(0.5)) * T::PI() / mm).collect()
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive 7/15-point Gauss-Kronrod on `[a, b]`, starting from
/// `pieces` equal subintervals (useful for oscillatory integrands).
pub fn integrate(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    pieces: usize,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Integral> {
    let pieces = pieces.max(1);
    let mut heap = BinaryHeap::new();
    let (mut total, mut err) = (0.0, 0.0);
    for i in 0..pieces {
        let lo = a + (b - a) * i as f64 / pieces as f64;
        let hi = a + (b - a) * (i + 1) as f64 / pieces as f64;
        let (v, e) = gk15(&mut f, lo, hi);
        total += v;
        err += e;
        heap.push(Piece { a: lo, b: hi, value: v, error: e });
    }
    let limit = pieces + 20_000;
    while err > abs_tol.max(rel_tol * total.abs()) {
        if heap.len() >= limit || !err.is_finite() {
            return Err(Error::NonConvergence { what: "adaptive Gauss-Kronrod", achieved: err });
        }
        let p = heap.pop().expect("heap non-empty");
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a || mid >= p.b {
            return Err(Error::NonConvergence { what: "adaptive Gauss-Kronrod", achieved: err });
        }
        let (v1, e1) = gk15(&mut f, p.a, mid);
        let (v2, e2) = gk15(&mut f, mid, p.b);
        total += v1 + v2 - p.value;
        err += e1 + e2 - p.error;
        heap.push(Piece { a: p.a, b: mid, value: v1, error: e1 });
        heap.push(Piece { a: mid, b: p.b, value: v2, error: e2 });
    }
    // Re-sum to shed the drift of the running updates.
    let value = heap.iter().map(|p| p.value).sum();
    let error = heap.iter().map(|p| p.error).sum();
    Ok(Integral { value, error })
}

/// Composite Simpson weights on `len` equally spaced points with step `h`.
/// An even `len` gets a 3/8 rule on the last four points.
pub fn simpson_weights(len: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; len];
    match len {
        0 => {}
        1 => w[0] = 0.0,
        2 => {
            w[0] = 0.5 * h;
            w[1] = 0.5 * h;
        }
        3 => {
            w[0] = h / 3.0;
            w[1] = 4.0 * h / 3.0;
            w[2] = h / 3.0;
        }
        _ => {
            // Simpson on the first `simpson_len` points (odd count), 3/8 on the rest.
            let simpson_len = if len % 2 == 1 { len } else { len - 3 };
            if simpson_len >= 3 {
                for (i, wi) in w.iter_mut().enumerate().take(simpson_len) {
                    *wi = if i == 0 || i == simpson_len - 1 {
                        h / 3.0
                    } else if i % 2 == 1 {
                        4.0 * h / 3.0
                    } else {
                        2.0 * h / 3.0
                    };
                }
            }
            if simpson_len < len {
                let s = simpson_len - 1;
                let c = 3.0 * h / 8.0;
                w[s] += c;
                w[s + 1] += 3.0 * c;
                w[s + 2] += 3.0 * c;
                w[s + 3] += c;
            }
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arcsine_moments() {
        let pi = std::f64::consts::PI;
        assert!((arcsine_integral(16, |_x: f64| 1.0) - pi).abs() < 1e-14);
        assert!((arcsine_integral(16, |x: f64| x * x) - 2.0 * pi).abs() < 1e-13);
        assert!((arcsine_integral(16, |x: f64| x.powi(4)) - 6.0 * pi).abs() < 1e-12);
        assert!(arcsine_integral(16, |x: f64| x.powi(3)).abs() < 1e-13);
        let single: f32 = arcsine_integral(16, |x: f32| x * x);
        assert!((single - 2.0 * std::f32::consts::PI).abs() < 1e-5);
    }

    #[test]
    fn gauss_kronrod_oracles() {
        let r = integrate(|x| x.sin(), 0.0, std::f64::consts::PI, 1, 1e-13, 0.0).unwrap();
        assert!((r.value - 2.0).abs() < 1e-13);
        let r = integrate(|x| (-x * x).exp(), -10.0, 10.0, 4, 1e-13, 0.0).unwrap();
        assert!((r.value - std::f64::consts::PI.sqrt()).abs() < 1e-12);
        let r = integrate(|x| x.sqrt(), 0.0, 1.0, 1, 1e-10, 0.0).unwrap();
        assert!((r.value - 2.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn gauss_kronrod_reports_failure() {
        let r = integrate(|x| 1.0 / x, 0.0, 1.0, 1, 1e-12, 0.0);
        assert!(matches!(r, Err(Error::NonConvergence { .. })));
    }

    #[test]
    fn simpson_exact_for_cubics() {
        for len in [3usize, 4, 5, 8, 11, 64] {
            let h = 2.0 / (len - 1) as f64;
            let w = simpson_weights(len, h);
            let s: f64 = (0..len)
                .map(|i| {
                    let x = -1.0 + h * i as f64;
                    w[i] * (x * x * x + 3.0 * x * x + 1.0)
                })
                .sum();
            assert!((s - 4.0).abs() < 1e-12, "len {len}: {s}");
        }
    }
}
