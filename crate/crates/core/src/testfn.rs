//! Test functions for linear statistics.

use serde::{Deserialize, Serialize};

use crate::scalar::{lit, Real};

/// A real test function `phi`, optionally with an exact derivative and a
/// declared compact support.
pub trait TestFunction<T: Real = f64>: Send + Sync {
    fn value(&self, x: T) -> T;

    fn derivative(&self, x: T) -> T {
        let h = T::epsilon().cbrt() * x.abs().max(T::one()) * self.scale().min(T::one());
        (self.value(x + h) - self.value(x - h)) / (h + h)
    }

    /// Interval outside which the function vanishes identically.
    fn support(&self) -> Option<(T, T)> {
        None
    }

    /// Smallest length scale on which the function varies.
    fn scale(&self) -> T {
        T::one()
    }
}

impl<T: Real, F: TestFunction<T> + ?Sized> TestFunction<T> for &F {
    fn value(&self, x: T) -> T {
        (**self).value(x)
    }
    fn derivative(&self, x: T) -> T {
        (**self).derivative(x)
    }
    fn support(&self) -> Option<(T, T)> {
        (**self).support()
    }
    fn scale(&self) -> T {
        (**self).scale()
    }
}

/// Wraps a closure, with an optional exact derivative.
pub struct FnTest<F, D = fn(f64) -> f64> {
    pub f: F,
    pub df: Option<D>,
}

impl<F> FnTest<F> {
    pub fn new(f: F) -> Self {
        Self { f, df: None }
    }
}

impl<F, D> FnTest<F, D> {
    pub fn with_derivative(f: F, df: D) -> Self {
        Self { f, df: Some(df) }
    }
}

impl<T, F, D> TestFunction<T> for FnTest<F, D>
where
    T: Real,
    F: Fn(T) -> T + Send + Sync,
    D: Fn(T) -> T + Send + Sync,
{
    fn value(&self, x: T) -> T {
        (self.f)(x)
    }
    fn derivative(&self, x: T) -> T {
        match &self.df {
            Some(df) => df(x),
            None => {
                let h = T::epsilon().cbrt() * x.abs().max(T::one());
                ((self.f)(x + h) - (self.f)(x - h)) / (h + h)
            }
        }
    }
}

/// Closed-form test functions addressable from experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ClosedForm<T = f64> {
    /// `sum_k coeffs[k] x^k`
    Polynomial {
        coeffs: Vec<T>,
    },
    /// `exp(-(x - center)^2 / (2 width^2))`
    Gaussian {
        center: T,
        width: T,
    },
    /// `exp(-1 / (1 - t^2))` for `|t| < 1`, `t = (x - center) / radius`.
    Bump {
        center: T,
        radius: T,
    },
    /// `Im 1/(x - E - i eta) = eta / ((x - E)^2 + eta^2)`
    Poisson {
        energy: T,
        eta: T,
    },
    /// `cos(frequency x + phase)`
    Cosine {
        frequency: T,
        phase: T,
    },
    /// Smooth plateau equal to 1 on `[left + ramp, right - ramp]`, 0 outside `[left, right]`.
    SmoothIndicator {
        left: T,
        right: T,
        ramp: T,
    },
    /// `1{x <= energy}`
    Step {
        energy: T,
    },
    Product {
        left: Box<ClosedForm<T>>,
        right: Box<ClosedForm<T>>,
    },
    Scaled {
        factor: T,
        inner: Box<ClosedForm<T>>,
    },
}

/// C-infinity step: 0 for t <= 0, 1 for t >= 1.
fn smooth_step<T: Real>(t: T) -> T {
    if t <= T::zero() {
        return T::zero();
    }
    if t >= T::one() {
        return T::one();
    }
    let a = (-T::one() / t).exp();
    let b = (-T::one() / (T::one() - t)).exp();
    a / (a + b)
}

fn smooth_step_deriv<T: Real>(t: T) -> T {
    if t <= T::zero() || t >= T::one() {
        return T::zero();
    }
    let s = T::one() - t;
    let a = (-T::one() / t).exp();
    let b = (-T::one() / s).exp();
    let da = a / (t * t);
    let db = -b / (s * s);
    (da * b - a * db) / ((a + b) * (a + b))
}

impl<T: Real> ClosedForm<T> {
    pub fn poly(coeffs: &[f64]) -> Self {
        ClosedForm::Polynomial { coeffs: coeffs.iter().map(|c| lit(*c)).collect() }
    }

    pub fn identity() -> Self {
        Self::poly(&[0.0, 1.0])
    }

    pub fn square() -> Self {
        Self::poly(&[0.0, 0.0, 1.0])
    }

    pub fn times(self, other: ClosedForm<T>) -> Self {
        ClosedForm::Product { left: Box::new(self), right: Box::new(other) }
    }

    pub fn scaled(self, factor: T) -> Self {
        ClosedForm::Scaled { factor, inner: Box::new(self) }
    }

    /// Poisson kernel restricted to `[-window, window]` by a smooth ramp of width `ramp`.
    pub fn windowed_poisson(energy: T, eta: T, window: T, ramp: T) -> Self {
        ClosedForm::Poisson { energy, eta }.times(ClosedForm::SmoothIndicator { left: -window, right: window, ramp })
    }
}

impl<T: Real> TestFunction<T> for ClosedForm<T> {
    fn value(&self, x: T) -> T {
        match self {
            ClosedForm::Polynomial { coeffs } => coeffs.iter().rev().fold(T::zero(), |acc, c| acc * x + *c),
            ClosedForm::Gaussian { center, width } => {
                let t = (x - *center) / *width;
                (-t * t * lit(0.5)).exp()
            }
            ClosedForm::Bump { center, radius } => {
                let t = (x - *center) / *radius;
                if t.abs() >= T::one() {
                    T::zero()
                } else {
                    (-T::one() / (T::one() - t * t)).exp()
                }
            }
            ClosedForm::Poisson { energy, eta } => {
                let d = x - *energy;
                *eta / (d * d + *eta * *eta)
            }
            ClosedForm::Cosine { frequency, phase } => (*frequency * x + *phase).cos(),
            ClosedForm::SmoothIndicator { left, right, ramp } => {
                smooth_step((x - *left) / *ramp) * smooth_step((*right - x) / *ramp)
            }
            ClosedForm::Step { energy } => {
                if x <= *energy {
                    T::one()
                } else {
                    T::zero()
                }
            }
            ClosedForm::Product { left, right } => left.value(x) * right.value(x),
            ClosedForm::Scaled { factor, inner } => *factor * inner.value(x),
        }
    }

    fn derivative(&self, x: T) -> T {
        match self {
            ClosedForm::Polynomial { coeffs } => {
                let mut acc = T::zero();
                for (k, c) in coeffs.iter().enumerate().skip(1).rev() {
                    acc = acc * x + *c * lit(k as f64);
                }
                acc
            }
            ClosedForm::Gaussian { center, width } => {
                let t = (x - *center) / *width;
                -t / *width * (-t * t * lit(0.5)).exp()
            }
            ClosedForm::Bump { center, radius } => {
                let t = (x - *center) / *radius;
                if t.abs() >= T::one() {
                    T::zero()
                } else {
                    let s = T::one() - t * t;
                    let v = (-T::one() / s).exp();
                    -lit::<T>(2.0) * t / (s * s) * v / *radius
                }
            }
            ClosedForm::Poisson { energy, eta } => {
                let d = x - *energy;
                let q = d * d + *eta * *eta;
                -lit::<T>(2.0) * *eta * d / (q * q)
            }
            ClosedForm::Cosine { frequency, phase } => -*frequency * (*frequency * x + *phase).sin(),
            ClosedForm::SmoothIndicator { left, right, ramp } => {
                let (a, b) = ((x - *left) / *ramp, (*right - x) / *ramp);
                (smooth_step_deriv(a) * smooth_step(b) - smooth_step(a) * smooth_step_deriv(b)) / *ramp
            }
            ClosedForm::Step { .. } => T::zero(),
            ClosedForm::Product { left, right } => {
                left.derivative(x) * right.value(x) + left.value(x) * right.derivative(x)
            }
            ClosedForm::Scaled { factor, inner } => *factor * inner.derivative(x),
        }
    }

    fn support(&self) -> Option<(T, T)> {
        match self {
            ClosedForm::Bump { center, radius } => Some((*center - *radius, *center + *radius)),
            ClosedForm::SmoothIndicator { left, right, .. } => Some((*left, *right)),
            ClosedForm::Product { left, right } => match (left.support(), right.support()) {
                (Some((a, b)), Some((c, d))) => Some((a.max(c), b.min(d))),
                (Some(s), None) | (None, Some(s)) => Some(s),
                (None, None) => None,
            },
            ClosedForm::Scaled { inner, .. } => inner.support(),
            _ => None,
        }
    }

    fn scale(&self) -> T {
        match self {
            ClosedForm::Gaussian { width, .. } => *width,
            ClosedForm::Bump { radius, .. } => *radius * lit(0.25),
            ClosedForm::Poisson { eta, .. } => *eta,
            ClosedForm::Cosine { frequency, .. } => T::one() / frequency.abs().max(T::one()),
            ClosedForm::SmoothIndicator { ramp, .. } => *ramp * lit(0.25),
            ClosedForm::Product { left, right } => left.scale().min(right.scale()),
            ClosedForm::Scaled { inner, .. } => inner.scale(),
            _ => T::one(),
        }
    }
}

/// A fixed family of smooth test functions on `[-2, 2]`: polynomials,
/// Gaussians, cosines and bumps of varying width and location.
pub fn smooth_corpus() -> Vec<ClosedForm<f64>> {
    vec![
        ClosedForm::identity(),
        ClosedForm::square(),
        ClosedForm::poly(&[0.0, 0.0, 0.0, 1.0]),
        ClosedForm::poly(&[1.0, -0.5, 0.25, 0.3, -0.1]),
        ClosedForm::poly(&[0.0, 1.0, 0.0, -0.2, 0.0, 0.05]),
        ClosedForm::Gaussian { center: 0.0, width: 1.0 },
        ClosedForm::Gaussian { center: 0.5, width: 0.6 },
        ClosedForm::Gaussian { center: -1.2, width: 0.4 },
        ClosedForm::Gaussian { center: 1.7, width: 0.8 },
        ClosedForm::Cosine { frequency: 1.0, phase: 0.0 },
        ClosedForm::Cosine { frequency: 2.5, phase: 0.3 },
        ClosedForm::Cosine { frequency: 4.0, phase: 1.1 },
        ClosedForm::Bump { center: 0.0, radius: 1.5 },
        ClosedForm::Bump { center: 0.8, radius: 0.9 },
        ClosedForm::Bump { center: -0.5, radius: 1.2 },
        ClosedForm::Poisson { energy: 0.3, eta: 0.7 },
        ClosedForm::Poisson { energy: -1.0, eta: 1.5 },
        ClosedForm::Gaussian { center: 0.0, width: 1.0 }.times(ClosedForm::Cosine { frequency: 3.0, phase: 0.0 }),
        ClosedForm::poly(&[0.5, 0.0, -1.0]).times(ClosedForm::Gaussian { center: 0.2, width: 1.3 }),
        ClosedForm::SmoothIndicator { left: -1.5, right: 1.0, ramp: 0.8 },
    ]
}
