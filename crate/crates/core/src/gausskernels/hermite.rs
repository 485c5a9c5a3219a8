//! Weighted Hermite functions by three-term recurrence.
//!
//! `phi_n(x) = e^{-x^2/2} H_n(x) / sqrt(2^n n! sqrt(pi))` (physicists'
//! convention, orthonormal in `L^2(dx)`). The recurrence runs on the weighted
//! functions with a separately tracked exponent, so `phi_2000(60)` is finite
//! even though `phi_0(60) = e^{-1800}` underflows.

use std::marker::PhantomData;

use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, Real};

#[derive(Debug, Clone, Copy)]
pub struct HermiteEvaluator<T> {
    n_max: usize,
    _scalar: PhantomData<T>,
}

impl<T: Real> HermiteEvaluator<T> {
    pub fn new(n_max: usize) -> Self {
        Self { n_max, _scalar: PhantomData }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    fn check(&self, n: usize) -> Result<()> {
        if n > self.n_max {
            Err(Error::DegreeTooLarge { n, max: self.n_max })
        } else {
            Ok(())
        }
    }

    /// `phi_n(x)` for `deriv_order = 0`, `phi_n'(x)` for `deriv_order = 1`.
    pub fn weighted_hermite(&self, n: usize, x: T, deriv_order: u8) -> Result<T> {
        self.check(n)?;
        match deriv_order {
            0 => Ok(self.pair(n, x).1),
            1 => {
                // phi_n' = sqrt(2n) phi_{n-1} - x phi_n
                let (prev, cur) = self.pair(n, x);
                Ok((lit::<T>(2.0) * from_usize::<T>(n)).sqrt() * prev - x * cur)
            }
            _ => Err(Error::InvalidInput(format!("derivative order {deriv_order} not supported"))),
        }
    }

    /// `(phi_{n-1}(x), phi_n(x))`, with `phi_{-1} = 0`.
    pub fn pair(&self, n: usize, x: T) -> (T, T) {
        let mut out = (T::zero(), T::zero());
        self.run(n, x, |k, prev, cur| {
            if k == n {
                out = (prev, cur);
            }
        });
        out
    }

    /// `phi_0(x), ..., phi_n(x)`.
    pub fn values_upto(&self, n: usize, x: T) -> Result<Vec<T>> {
        self.check(n)?;
        let mut out = Vec::with_capacity(n + 1);
        self.run(n, x, |_, _, cur| out.push(cur));
        Ok(out)
    }

    /// Drives the recurrence, reporting `(k, phi_{k-1}, phi_k)` for k = 0..=n.
    fn run(&self, n: usize, x: T, mut visit: impl FnMut(usize, T, T)) {
        let big = T::max_value().sqrt().sqrt();
        let log_big = big.ln();
        // phi_k = p_k * exp(log_scale)
        let mut log_scale = -T::PI().ln() * lit(0.25) - x * x * lit(0.5);
        let mut prev = T::zero();
        let mut cur = T::one();
        let unscale = |p: T, s: T| -> T {
            if p == T::zero() {
                T::zero()
            } else {
                p.signum() * (p.abs().ln() + s).exp()
            }
        };
        visit(0, T::zero(), unscale(cur, log_scale));
        let two = lit::<T>(2.0);
        for k in 0..n {
            let kk = from_usize::<T>(k);
            let next = x * (two / (kk + T::one())).sqrt() * cur - (kk / (kk + T::one())).sqrt() * prev;
            prev = cur;
            cur = next;
            if cur.abs() > big {
                prev = prev / big;
                cur = cur / big;
                log_scale = log_scale + log_big;
            }
            visit(k + 1, unscale(prev, log_scale), unscale(cur, log_scale));
        }
    }

    /// Orthonormal probabilists' functions `psi_n(u) = 2^{-1/4} phi_n(u / sqrt 2)`,
    /// `int psi_m psi_n du = delta_mn`, with `psi_n^2` carrying `e^{-u^2/2}`.
    pub fn psi_upto(&self, n: usize, u: T) -> Result<Vec<T>> {
        let c = lit::<T>(2.0).powf(lit(-0.25));
        let mut v = self.values_upto(n, u / lit::<T>(2.0).sqrt())?;
        for p in v.iter_mut() {
            *p = *p * c;
        }
        Ok(v)
    }
}
