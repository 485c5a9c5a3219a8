//! Hermite integrals: full-line and half-line integrals of the weighted
//! functions, and Gauss-Hermite quadrature.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::hermite::HermiteEvaluator;
use crate::error::Result;
use crate::linalg::tridiagonal_eigenvalues;
use crate::quad::integrate;

/// `int phi_{2m} = 2^{1/2} pi^{1/4} sqrt((2m)!) / (2^m m!)`, in log-gamma arithmetic.
pub fn phi_integral_closed_form(m: usize) -> f64 {
    let mm = m as f64;
    let ln2 = std::f64::consts::LN_2;
    (0.5 * ln2 + 0.25 * std::f64::consts::PI.ln() + 0.5 * ln_gamma(2.0 * mm + 1.0) - mm * ln2 - ln_gamma(mm + 1.0))
        .exp()
}

/// `int psi_{2m}(u) du = 2^{1/4} int phi_{2m}`.
pub fn psi_integral_closed_form(m: usize) -> f64 {
    2f64.powf(0.25) * phi_integral_closed_form(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvenFullLine {
    pub quadrature: f64,
    pub closed_form: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OddHalfLine {
    /// `((2m+1)/2)^{1/2} int_0^inf phi_{2m+1}` by quadrature.
    pub quadrature: f64,
    /// `m^{1/4} / 2^{1/2}`
    pub asymptote: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HermiteIntegrals {
    pub even_full_line: EvenFullLine,
    pub odd_half_line_scaled: OddHalfLine,
}

pub fn hermite_integrals(m: usize) -> Result<HermiteIntegrals> {
    let h = HermiteEvaluator::<f64>::new(2 * m + 1);
    // Beyond sqrt(2n+1) + 12 the functions are below e^{-40}.
    let reach = |n: usize| ((2 * n + 1) as f64).sqrt() + 12.0;
    let even_n = 2 * m;
    let l = reach(even_n);
    let pieces = 4 * even_n + 16;
    let even = integrate(|x| h.pair(even_n, x).1, -l, l, pieces, 1e-14, 1e-12)?;
    let odd_n = 2 * m + 1;
    let odd = integrate(|x| h.pair(odd_n, x).1, 0.0, reach(odd_n), 2 * odd_n + 16, 1e-14, 1e-12)?;
    Ok(HermiteIntegrals {
        even_full_line: EvenFullLine { quadrature: even.value, closed_form: phi_integral_closed_form(m) },
        odd_half_line_scaled: OddHalfLine {
            quadrature: ((odd_n as f64) / 2.0).sqrt() * odd.value,
            asymptote: (m as f64).powf(0.25) / 2f64.sqrt(),
        },
    })
}

/// Gauss-Hermite rule with `n` nodes for integrals of products of weighted
/// functions: `int p(x) e^{-x^2} dx = sum_i w_i p(x_i)` becomes
/// `int phi_j phi_k dx = sum_i W_i phi_j(x_i) phi_k(x_i)` with the
/// Christoffel weights `W_i = 1 / sum_{k<n} phi_k(x_i)^2`.
pub fn gauss_hermite_weighted(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let off: Vec<f64> = (1..n).map(|k| (k as f64 / 2.0).sqrt()).collect();
    let nodes = tridiagonal_eigenvalues(&vec![0.0; n], &off)?;
    let h = HermiteEvaluator::<f64>::new(n);
    let mut weights = Vec::with_capacity(n);
    for &x in &nodes {
        let v = h.values_upto(n - 1, x)?;
        weights.push(1.0 / v.iter().map(|p| p * p).sum::<f64>());
    }
    Ok((nodes, weights))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_integral_base_case() {
        let want = (2.0 * std::f64::consts::PI).sqrt() / std::f64::consts::PI.powf(0.25);
        assert!((phi_integral_closed_form(0) - want).abs() < 1e-14);
        assert!((want - 1.88279).abs() < 1e-5);
        let r = hermite_integrals(0).unwrap();
        assert!((r.even_full_line.quadrature - want).abs() < 1e-12);
    }

    #[test]
    fn quadrature_matches_closed_form() {
        for m in [1usize, 5, 17, 50] {
            let r = hermite_integrals(m).unwrap();
            let (q, c) = (r.even_full_line.quadrature, r.even_full_line.closed_form);
            assert!(((q - c) / c).abs() < 1e-8, "m={m}: {q} vs {c}");
        }
    }

    #[test]
    fn asymptotic_envelopes_at_m_100() {
        let m = 100usize;
        let r = hermite_integrals(m).unwrap();
        let mm = m as f64;
        let even_asym = 2f64.sqrt() / mm.powf(0.25);
        let ratio = r.even_full_line.closed_form / even_asym;
        assert!(ratio <= 1.0 + 2.0 / mm && ratio >= 1.0 / (1.0 + 2.0 / mm), "{ratio}");
        let ratio = r.odd_half_line_scaled.quadrature / r.odd_half_line_scaled.asymptote;
        let band = 1.0 + 2.0 / mm.sqrt();
        assert!(ratio <= band && ratio >= 1.0 / band, "{ratio}");
    }

    #[test]
    fn orthonormality_by_gauss_hermite() {
        let n = 201;
        let (nodes, weights) = gauss_hermite_weighted(n).unwrap();
        let h = HermiteEvaluator::<f64>::new(200);
        let table: Vec<Vec<f64>> = nodes.iter().map(|&x| h.values_upto(200, x).unwrap()).collect();
        let mut worst: f64 = 0.0;
        for a in 0..=200 {
            for b in a..=200 {
                let s: f64 = table.iter().zip(&weights).map(|(v, w)| w * v[a] * v[b]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((s - want).abs());
            }
        }
        assert!(worst < 1e-8, "{worst}");
    }
}
